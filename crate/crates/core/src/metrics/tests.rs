use rand::seq::SliceRandom;
use rand::Rng;

use super::*;
use crate::gradcore::{randn, Tensor};
use crate::rng::seeded;
use crate::synthgen::{random_orthogonal, FactorGrid};

fn uniform(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
}

#[test]
fn spearman_basics() {
    let mut rng = seeded(1);
    let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() - 0.5).collect();
    let cube: Vec<f64> = x.iter().map(|v| v * v * v).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert_eq!(spearman(&x, &cube), 1.0);
    assert_eq!(spearman(&x, &neg), -1.0);
    let a: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let b: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    assert!(spearman(&a, &b).abs() <= 0.05);
    assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
}

#[test]
fn mcc_is_perfect_on_permuted_flipped_monotone_factors() {
    let f = randn(2000, 4, 1.0, &mut seeded(2));
    let perm = [2, 0, 3, 1];
    let mut z = f.select_columns(&perm);
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        row[0] = -row[0];
        row[1] = row[1].powi(3);
        row[2] = (-row[2]).exp();
    }
    let input = MetricInput::continuous(z.clone(), f.clone()).unwrap();
    let rep = mcc(&input, &MccOptions::default()).unwrap();
    assert_eq!(rep.score, 100.0);
    assert_eq!(rep.assignment, vec![1, 3, 0, 2]);
    let lin = MetricInput::continuous(f.select_columns(&perm).map(|v| -2.0 * v), f).unwrap();
    let opts = MccOptions {
        correlation: Correlation::Pearson,
        ..Default::default()
    };
    assert_eq!(mcc(&lin, &opts).unwrap().score, 100.0);
}

#[test]
fn mcc_null_is_small() {
    let input = MetricInput::continuous(
        randn(10_000, 10, 1.0, &mut seeded(3)),
        randn(10_000, 4, 1.0, &mut seeded(4)),
    )
    .unwrap();
    let rep = mcc(&input, &MccOptions::default()).unwrap();
    assert!(rep.score <= 10.0, "{}", rep.score);
    assert_eq!(rep.correlations.len(), 10);
    assert_eq!(rep.correlations[0].len(), 4);
}

#[test]
fn mcc_constant_latent_warns() {
    let f = randn(500, 2, 1.0, &mut seeded(5));
    let mut z = f.clone();
    for r in 0..500 {
        z.set(r, 1, 7.0);
    }
    let rep = mcc(
        &MetricInput::continuous(z, f).unwrap(),
        &MccOptions::default(),
    )
    .unwrap();
    assert!(rep.warnings.iter().any(|w| w.contains("constant")));
    assert_eq!(rep.correlations[1], vec![0.0, 0.0]);
    let narrow = MetricInput::continuous(
        randn(10, 1, 1.0, &mut seeded(1)),
        randn(10, 2, 1.0, &mut seeded(2)),
    )
    .unwrap();
    assert!(mcc(&narrow, &MccOptions::default()).is_err());
}

#[test]
fn categorical_relabel_recovers_scrambled_codes() {
    let mut rng = seeded(6);
    let n = 3000;
    let codes: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
    let scramble = [3.0, 0.0, 4.0, 1.0, 2.0];
    let z: Vec<f64> = codes.iter().map(|&c| scramble[c as usize]).collect();
    let input = MetricInput::new(
        Tensor::matrix(n, 1, z).unwrap(),
        Tensor::matrix(n, 1, codes).unwrap(),
        vec![FactorKind::Categorical],
    )
    .unwrap();
    let plain = mcc(&input, &MccOptions::default()).unwrap();
    let best = mcc(
        &input,
        &MccOptions {
            categorical_relabel: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(plain.score < 99.0);
    assert!((best.score - 100.0).abs() < 1e-9, "{}", best.score);
    assert!(best.warnings.iter().any(|w| w.contains("categorical")));
}

#[test]
fn assignment_beats_random_injections() {
    let mut rng = seeded(7);
    for _ in 0..5 {
        let w: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..8).map(|_| rng.random()).collect())
            .collect();
        let a = hungarian_max(&w);
        let best: f64 = a.iter().enumerate().map(|(i, &j)| w[i][j]).sum();
        let mut cols: Vec<usize> = (0..8).collect();
        for _ in 0..10_000 {
            cols.shuffle(&mut rng);
            let tot: f64 = (0..6).map(|i| w[i][cols[i]]).sum();
            assert!(best >= tot - 1e-12);
        }
    }
}

#[test]
fn mi_of_self_is_entropy() {
    let mut rng = seeded(8);
    let a: Vec<f64> = (0..100_000)
        .map(|_| rng.random_range(0..20) as f64)
        .collect();
    let codes = discretize(&a, 20);
    let h = entropy_codes(&codes);
    assert_eq!(mutual_info_codes(&codes, &codes), h);
    assert!((discrete_mi(&a, &a, 20) - 20f64.ln()).abs() < 0.01);
    let b: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let bias = (19.0 * 19.0) / (2.0 * 100_000.0);
    assert!(discrete_mi(&a, &b, 20) <= bias + 0.01);
    assert_eq!(discrete_mi(&a, &b, 20), discrete_mi(&b, &a, 20));
}

fn discrete_factors(n: usize, d: usize, k: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    Tensor::matrix(
        n,
        d,
        (0..n * d).map(|_| rng.random_range(0..k) as f64).collect(),
    )
    .unwrap()
}

#[test]
fn mig_oracles() {
    let n = 20_000;
    let f = discrete_factors(n, 3, 10, 9);
    let noise = randn(n, 2, 1.0, &mut seeded(10));
    let z = Tensor::from_columns(&[
        f.column(0),
        f.column(1),
        f.column(2),
        noise.column(0),
        noise.column(1),
    ])
    .unwrap();
    let kinds = vec![FactorKind::Categorical; 3];
    let good = mig(&MetricInput::new(z, f.clone(), kinds.clone()).unwrap()).unwrap();
    assert!(good.score >= 0.9, "{}", good.score);
    let rand = mig(
        &MetricInput::new(randn(n, 5, 1.0, &mut seeded(11)), f.clone(), kinds.clone()).unwrap(),
    )
    .unwrap();
    assert!(rand.score <= 0.05, "{}", rand.score);
    let dup = Tensor::from_columns(&[f.column(0), f.column(0), f.column(1), f.column(2)]).unwrap();
    let r = mig(&MetricInput::new(dup, f, kinds).unwrap()).unwrap();
    assert!(r.per_factor[0] < 1e-12);
    assert!(r.per_factor[1] > 0.9);
}

#[test]
fn modularity_oracles() {
    let one_hot = vec![
        vec![0.0, 0.7, 0.0],
        vec![1.2, 0.0, 0.0],
        vec![0.0, 0.0, 0.3],
    ];
    assert_eq!(modularity_from_mi(&one_hot), 1.0);
    assert_eq!(modularity_from_mi(&[vec![0.4, 0.4, 0.4]]), 0.0);
    assert_eq!(modularity_from_mi(&[vec![0.0, 0.0]]), 0.0);
    let n = 5000;
    let input =
        MetricInput::continuous(randn(n, 4, 1.0, &mut seeded(12)), uniform(n, 3, 13)).unwrap();
    let rep = modularity(&input).unwrap();
    // direct transcription of the formula
    let mut acc = 0.0;
    for row in &rep.mi {
        let m2: Vec<f64> = row.iter().map(|m| m * m).collect();
        let mx = m2.iter().cloned().fold(0.0, f64::max);
        let theta = if mx == 0.0 {
            0.0
        } else {
            1.0 - (m2.iter().sum::<f64>() - mx) / (mx * 2.0)
        };
        acc += theta;
    }
    assert!((rep.score - acc / 4.0).abs() <= 1e-12);
    assert!((0.0..=1.0).contains(&rep.score));
    let perfect = MetricInput::new(
        discrete_factors(n, 3, 6, 14),
        discrete_factors(n, 3, 6, 14),
        vec![FactorKind::Categorical; 3],
    )
    .unwrap();
    assert!(modularity(&perfect).unwrap().score > 0.99);
}

#[test]
fn sap_oracles() {
    let n = 4000;
    let f = discrete_factors(n, 2, 10, 15);
    let kinds = vec![FactorKind::Categorical; 2];
    let z = Tensor::from_columns(&[f.column(0), f.column(1)]).unwrap();
    let good = sap(
        &MetricInput::new(z.clone(), f.clone(), kinds.clone()).unwrap(),
        &SapOptions::default(),
    )
    .unwrap();
    assert!(
        good.per_factor.iter().all(|&g| g > 0.3),
        "{:?}",
        good.per_factor
    );
    let swapped = z.select_columns(&[1, 0]);
    let again = sap(
        &MetricInput::new(swapped, f.clone(), kinds.clone()).unwrap(),
        &SapOptions::default(),
    )
    .unwrap();
    assert!((again.score - good.score).abs() < 1e-12);
    let rand = sap(
        &MetricInput::new(randn(n, 3, 1.0, &mut seeded(16)), f, kinds).unwrap(),
        &SapOptions::default(),
    )
    .unwrap();
    assert!(rand.score <= 0.05, "{}", rand.score);
    let fc = uniform(n, 2, 17);
    let cont = sap(
        &MetricInput::continuous(fc.clone(), fc.clone()).unwrap(),
        &SapOptions::default(),
    )
    .unwrap();
    assert!(cont.score > 0.5);
    let cnull = sap(
        &MetricInput::continuous(randn(n, 3, 1.0, &mut seeded(18)), fc).unwrap(),
        &SapOptions::default(),
    )
    .unwrap();
    assert!(cnull.score <= 0.05);
}

fn grid_identity(grid: &FactorGrid) -> impl FnMut(&[usize]) -> crate::Result<Tensor> + '_ {
    move |idx: &[usize]| {
        let v = grid.to_values(idx);
        // spread factors to unit-ish variance so none is pruned
        Ok(v.map(|x| 3.0 * x))
    }
}

#[test]
fn factorvae_oracles() {
    let grid = FactorGrid::new(vec![5, 8, 10]).unwrap();
    let cfg = FactorVaeConfig {
        big_batch: 5000,
        votes: 400,
        ..Default::default()
    };
    let mut enc = grid_identity(&grid);
    let r = factorvae_score(&grid, &mut enc, &cfg, &mut seeded(19)).unwrap();
    assert!(r.score >= 0.95, "{}", r.score);
    let mut constant = |idx: &[usize]| Ok(Tensor::filled(&[idx.len() / 3, 3], 1.0));
    assert!(factorvae_score(&grid, &mut constant, &cfg, &mut seeded(19)).is_err());
}

#[test]
fn betavae_oracles() {
    let grid = FactorGrid::new(vec![5, 8, 10]).unwrap();
    let cfg = BetaVaeConfig {
        num_train: 300,
        num_eval: 300,
        classifier_steps: 500,
        ..Default::default()
    };
    let mut enc = grid_identity(&grid);
    let r = betavae_score(&grid, &mut enc, &cfg, &mut seeded(20)).unwrap();
    assert!(r.score >= 0.95, "{}", r.score);
    let again = betavae_score(&grid, &mut grid_identity(&grid), &cfg, &mut seeded(20)).unwrap();
    assert_eq!(r, again);
    let shuffled = BetaVaeConfig {
        shuffle_labels: true,
        ..cfg
    };
    let s = betavae_score(&grid, &mut grid_identity(&grid), &shuffled, &mut seeded(21)).unwrap();
    assert!((s.score - 1.0 / 3.0).abs() <= 0.1, "{}", s.score);
}

#[test]
fn factorvae_random_rotation_stays_above_chance() {
    let grid = FactorGrid::new(vec![10, 10, 10]).unwrap();
    let w = random_orthogonal(3, &mut seeded(22));
    let mut enc = |idx: &[usize]| Ok(grid.to_values(idx).map(|x| 3.0 * x).matmul(&w));
    let cfg = FactorVaeConfig {
        big_batch: 5000,
        votes: 400,
        ..Default::default()
    };
    let r = factorvae_score(&grid, &mut enc, &cfg, &mut seeded(23)).unwrap();
    // each fixed factor still has one latent it loads on most, so the
    // majority vote stays well above chance
    assert!(r.score > 1.0 / 3.0 + 0.1, "{}", r.score);
}

#[test]
fn metric_report_serializes() {
    let f = randn(1000, 2, 1.0, &mut seeded(24));
    let input = MetricInput::continuous(f.clone(), f).unwrap();
    let r = evaluate(&input, MetricName::Mcc, 3, true).unwrap();
    let js = serde_json::to_string(&r).unwrap();
    let back: MetricReport = serde_json::from_str(&js).unwrap();
    assert_eq!(back.score, 100.0);
    assert_eq!(back.metric_name, "mcc");
    assert!(MetricName::parse("nope").is_err());
    assert_eq!(MetricName::parse("mig").unwrap(), MetricName::Mig);
}
