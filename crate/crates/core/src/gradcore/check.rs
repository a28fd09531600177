use super::graph::{Graph, Var};
use super::store::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Five-point central differences (fourth order) against the reverse sweep,
/// for every coordinate of every parameter in `store`.
///
/// `build` records the loss on a fresh graph. Relative error uses the
/// denominator `max(|g|, 1e-8)`. The check refuses to run when an abs/relu
/// input sits within `20·eps` of its kink, since probes reach `±2·eps`.
pub fn grad_check<F>(store: &ParamStore, eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(Graph, Var)>,
{
    let (graph, loss) = build(store)?;
    let band = 20.0 * eps;
    if graph.kink_margin() < band {
        return Err(Error::KinkTooClose {
            margin: graph.kink_margin(),
            band,
        });
    }
    let grads = graph.backward(loss)?;
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let analytic = grads
            .param(&name)
            .cloned()
            .unwrap_or_else(|| super::Tensor::zeros(store.get(&name).unwrap().shape()));
        for k in 0..analytic.len() {
            let orig = store.get(&name).unwrap().data()[k];
            let mut at = |h: f64| -> Result<f64> {
                work.get_mut(&name).unwrap().data_mut()[k] = orig + h;
                let (g, l) = build(&work)?;
                Ok(g.scalar(l))
            };
            let (f2, f1, m1, m2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
            work.get_mut(&name).unwrap().data_mut()[k] = orig;

            let fd = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * eps);
            let g = analytic.data()[k];
            let rel = (fd - g).abs() / g.abs().max(1e-8);
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), k));
            }
        }
    }
    Ok(report)
}
