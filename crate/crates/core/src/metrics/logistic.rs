use crate::error::Result;
use crate::gradcore::{adam_step, AdamConfig, Graph, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxConfig {
    pub steps: usize,
    pub lr: f64,
    /// L2 penalty on the weights (not the bias), per sample.
    pub l2: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 0.05,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression on standardized features, fit by
/// full-batch Adam in an isolated parameter store.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    mean: Vec<f64>,
    scale: Vec<f64>,
    store: ParamStore,
}

fn standardize(x: &Tensor, mean: &[f64], scale: &[f64]) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = (*v - mean[c]) / scale[c];
        }
    }
    out
}

impl SoftmaxClassifier {
    pub fn fit(x: &Tensor, labels: &[usize], classes: usize, cfg: &SoftmaxConfig) -> Result<Self> {
        let (n, p) = (x.rows(), x.cols());
        let mut mean = vec![0.0; p];
        let mut scale = vec![0.0; p];
        for c in 0..p {
            let col = x.column(c);
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            mean[c] = m;
            scale[c] = if v > 0.0 { v.sqrt() } else { 1.0 };
        }
        let xs = standardize(x, &mean, &scale);
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[p, classes]));
        store.insert("b", Tensor::zeros(&[1, classes]));
        let adam = AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        };
        for _ in 0..cfg.steps {
            let mut g = Graph::new();
            let xv = g.constant(xs.clone());
            let w = g.param(&store, "w");
            let b = g.param(&store, "b");
            let logits = g.affine(xv, w, b);
            let lse = g.log_sum_exp_rows(logits);
            let picked = g.pick_per_row(logits, labels.to_vec());
            let nll = g.sub(lse, picked);
            let data = g.mean(nll);
            let w2 = g.square(w);
            let reg = g.sum(w2);
            let reg = g.scale(reg, 0.5 * cfg.l2);
            let loss = g.add(data, reg);
            let grads = g.backward(loss)?;
            store.set_grads(&grads);
            adam_step(&mut store, &adam)?;
        }
        Ok(Self { mean, scale, store })
    }

    pub fn predict(&self, x: &Tensor) -> Vec<usize> {
        let xs = standardize(x, &self.mean, &self.scale);
        let w = self.store.get("w").unwrap();
        let b = self.store.get("b").unwrap();
        let logits = xs.matmul(w);
        (0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] + b.get(0, c) > row[best] + b.get(0, best) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> f64 {
        let pred = self.predict(x);
        pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
    }
}
