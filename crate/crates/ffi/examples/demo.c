/* Build: cc -Icrates/ffi/include crates/ffi/examples/demo.c -Ltarget/debug -lslowlab_ffi -o demo */
#include <stdio.h>
#include <stdlib.h>
#include "slowlab.h"

static int check(SlStatus s, const char *what) {
    if (s != SL_STATUS_OK) {
        char msg[256];
        sl_last_error_message(msg, sizeof msg);
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg);
        return 1;
    }
    return 0;
}

int main(void) {
    const size_t n = 4000, d = 3;
    SlPairs *z = NULL, *x = NULL;
    SlModel *model = NULL;
    if (check(sl_pairs_generate(d, 1.0, 6.0, n, 1, &z), "generate")) return 1;
    if (check(sl_pairs_mix_orthogonal(z, 2, &x), "mix")) return 1;
    if (check(sl_train_slowflow(x, 6.0, 800, 1e-2, 3, &model), "train")) return 1;

    double *zp = malloc(n * d * sizeof *zp), *zn = malloc(n * d * sizeof *zn);
    double *xp = malloc(n * d * sizeof *xp), *xn = malloc(n * d * sizeof *xn);
    double *codes = malloc(n * d * sizeof *codes);
    double score = 0.0;
    if (check(sl_pairs_copy(z, zp, zn, n * d), "copy z")) return 1;
    if (check(sl_pairs_copy(x, xp, xn, n * d), "copy x")) return 1;
    if (check(sl_model_encode(model, xp, n, d, codes, n * d), "encode")) return 1;
    if (check(sl_mcc(codes, zp, n, d, d, false, &score), "mcc")) return 1;
    printf("slowlab %s: MCC %.3f\n", sl_version(), score);

    SlPairs *bad = NULL;
    SlStatus s = sl_pairs_generate(0, 1.0, 6.0, 10, 0, &bad);
    char msg[256];
    sl_last_error_message(msg, sizeof msg);
    printf("expected error %d: %s\n", (int)s, msg);

    free(zp); free(zn); free(xp); free(xn); free(codes);
    sl_model_free(model);
    sl_pairs_free(x);
    sl_pairs_free(z);
    return score > 95.0 ? 0 : 1;
}
