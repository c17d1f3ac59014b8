use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use ser_probe_core::probe::FeatureTable;
use ser_probe_core::stats::{pcc, Coefficient};
use ser_probe_core::{Dimension, EmotionTriple, Error, PredictionRecord, Utterance};

use crate::error::Result;

pub const NEGATION_COLUMN: &str = "n_negations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionPcc {
    pub dimension: Dimension,
    /// PCC of negation count with `y_true − y_pred`.
    pub vs_error: Coefficient,
    /// PCC of negation count with `y_true`.
    pub vs_truth: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegationAnalysis {
    pub n: usize,
    pub dimensions: Vec<DimensionPcc>,
}

impl NegationAnalysis {
    pub fn get(&self, d: Dimension) -> &DimensionPcc {
        self.dimensions.iter().find(|x| x.dimension == d).expect("all dimensions present")
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("dimension\tn\tpcc_error\tdegenerate_error\tpcc_truth\tdegenerate_truth\n");
        for d in &self.dimensions {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                d.dimension, self.n, d.vs_error.value, d.vs_error.degenerate, d.vs_truth.value, d.vs_truth.degenerate
            ));
        }
        s
    }
}

/// Correlates the negation count with prediction error and with the labels,
/// over utterances that have a prediction, a label and a feature row.
pub fn negation_error_analysis(
    predictions: &[PredictionRecord],
    utterances: &[Utterance],
    features: &FeatureTable,
) -> Result<NegationAnalysis> {
    let labels: BTreeMap<&str, EmotionTriple> = utterances
        .iter()
        .filter_map(|u| u.labels.map(|l| (u.id.as_str(), l)))
        .collect();
    let mut rows: Vec<(f64, EmotionTriple, EmotionTriple)> = Vec::new();
    for p in predictions {
        let id = p.utterance_id.as_str();
        if let (Some(t), Some(neg)) = (labels.get(id), features.get(id, NEGATION_COLUMN)) {
            rows.push((neg, *t, p.prediction));
        }
    }
    if rows.is_empty() {
        return Err(Error::Domain("no utterance has a prediction, a label and a negation count".into()).into());
    }
    let neg: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let dimensions = Dimension::ALL
        .into_iter()
        .map(|d| {
            let err: Vec<f64> = rows.iter().map(|(_, t, p)| t.get(d) - p.get(d)).collect();
            let truth: Vec<f64> = rows.iter().map(|(_, t, _)| t.get(d)).collect();
            Ok(DimensionPcc {
                dimension: d,
                vs_error: pcc(&neg, &err)?,
                vs_truth: pcc(&neg, &truth)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(NegationAnalysis {
        n: rows.len(),
        dimensions,
    })
}
