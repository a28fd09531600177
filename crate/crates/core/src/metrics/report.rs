use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corr::Correlation;
use super::info::{mig, modularity};
use super::mcc::{mcc, MccOptions, MetricInput};
use super::sap::{sap, SapOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    Mcc,
    MccPearson,
    Mig,
    Modularity,
    Sap,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Mcc => "mcc",
            MetricName::MccPearson => "mcc-pearson",
            MetricName::Mig => "mig",
            MetricName::Modularity => "modularity",
            MetricName::Sap => "sap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<BTreeMap<String, Vec<Vec<f64>>>>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Evaluates one metric on stored latents/factors.
pub fn evaluate(
    input: &MetricInput,
    name: MetricName,
    seed: u64,
    with_matrices: bool,
) -> Result<MetricReport> {
    let mut matrices = BTreeMap::new();
    let mut notes = Vec::new();
    let (score, config) = match name {
        MetricName::Mcc | MetricName::MccPearson => {
            let opts = MccOptions {
                correlation: if name == MetricName::Mcc {
                    Correlation::Spearman
                } else {
                    Correlation::Pearson
                },
                noise_seed: seed,
                categorical_relabel: false,
            };
            let r = mcc(input, &opts)?;
            matrices.insert("correlations".into(), r.correlations);
            notes = r.warnings;
            (r.score, serde_json::to_value(opts)?)
        }
        MetricName::Mig => {
            let r = mig(input)?;
            matrices.insert("mutual_information".into(), r.mi);
            (
                r.score,
                serde_json::json!({ "bins": super::info::DEFAULT_BINS }),
            )
        }
        MetricName::Modularity => {
            let r = modularity(input)?;
            matrices.insert("mutual_information".into(), r.mi);
            (
                r.score,
                serde_json::json!({ "bins": super::info::DEFAULT_BINS }),
            )
        }
        MetricName::Sap => {
            let opts = SapOptions::default();
            let r = sap(input, &opts)?;
            matrices.insert("scores".into(), r.scores);
            notes.push(r.note.to_string());
            (r.score, serde_json::to_value(opts)?)
        }
    };
    if input
        .factor_kinds
        .iter()
        .any(|k| *k != super::FactorKind::Categorical)
        && matches!(name, MetricName::Mig | MetricName::Modularity)
    {
        notes.push("continuous factors quantile-binned into 20 bins".into());
    }
    Ok(MetricReport {
        metric_name: name.as_str().to_string(),
        score,
        matrices: with_matrices.then_some(matrices),
        config,
        seed,
        n_samples: input.n(),
        notes,
    })
}
