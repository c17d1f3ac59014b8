use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use ser_probe_core::probe::{
    rmse_ratio_matrix, train_grid, FeatureTable, LayerEmbeddingArchive, ProbeConfig, ProbeResult, ProbeSplits, RatioMatrix,
};
use ser_probe_core::Error;

use crate::error::Result;
use crate::run::{Counts, ProbeRunRecord, RunDir, RunStatus, STAGE_PROBING3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioArtifact {
    pub matrix: RatioMatrix,
    /// Features constant on the train split, probed for neither variant.
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Probing3Report {
    pub ft: Vec<ProbeResult>,
    pub frz: Vec<ProbeResult>,
    pub ratio: RatioMatrix,
    pub excluded: Vec<String>,
    pub record: ProbeRunRecord,
}

fn preview(ids: &[&String]) -> String {
    let shown: Vec<&str> = ids.iter().take(20).map(|s| s.as_str()).collect();
    let more = ids.len().saturating_sub(shown.len());
    if more > 0 {
        format!("{} (+{more} more)", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

/// Checks both archives list the same ids in the same order and the table
/// has a row for each, naming whatever is missing.
pub fn align_features(ft: &LayerEmbeddingArchive, frz: &LayerEmbeddingArchive, table: &FeatureTable) -> Result<()> {
    if ft.ids() != frz.ids() {
        let a: BTreeSet<&String> = ft.ids().iter().collect();
        let b: BTreeSet<&String> = frz.ids().iter().collect();
        let only_ft: Vec<&String> = a.difference(&b).copied().collect();
        let only_frz: Vec<&String> = b.difference(&a).copied().collect();
        let msg = if only_ft.is_empty() && only_frz.is_empty() {
            "archives list the same utterances in different orders".to_string()
        } else {
            format!(
                "archives are misaligned; only in ft: [{}]; only in frz: [{}]",
                preview(&only_ft),
                preview(&only_frz)
            )
        };
        return Err(Error::Validation(msg).into());
    }
    let have: BTreeSet<&String> = table.ids().iter().collect();
    let missing: Vec<&String> = ft.ids().iter().filter(|i| !have.contains(i)).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "feature table lacks {} archive utterance(s): {}",
            missing.len(),
            preview(&missing)
        ))
        .into());
    }
    Ok(())
}

/// Layer-wise feature probing on both variants and the RMSE ratio matrix.
/// `features` defaults to every table column when empty.
pub fn run_probing3(
    mut run: RunDir,
    ft: &LayerEmbeddingArchive,
    frz: &LayerEmbeddingArchive,
    table: &FeatureTable,
    features: &[String],
    config: &ProbeConfig,
    parallelism: usize,
) -> Result<Probing3Report> {
    run.set_stage(STAGE_PROBING3);
    config.validate()?;
    align_features(ft, frz, table)?;
    if ft.n_layers() != frz.n_layers() {
        return Err(Error::Validation(format!(
            "ft archive has {} layers, frz has {}",
            ft.n_layers(),
            frz.n_layers()
        ))
        .into());
    }
    let features: Vec<String> = if features.is_empty() {
        table.columns.clone()
    } else {
        features.to_vec()
    };
    let splits = ProbeSplits::by_id_hash(ft.ids(), config.seed)?;
    let g_ft = run.timed("probe_ft", |_| Ok(train_grid(ft, table, &features, &splits, config, parallelism)?))?;
    let g_frz = run.timed("probe_frz", |_| Ok(train_grid(frz, table, &features, &splits, config, parallelism)?))?;
    let ratio = rmse_ratio_matrix(&g_ft.results, &g_frz.results)?;

    let mut rows = g_ft.results.clone();
    rows.extend(g_frz.results.iter().cloned());
    run.write_jsonl("results.jsonl", &rows)?;
    run.write("ratio.tsv", ratio.to_tsv())?;
    run.write_json(
        "ratio.json",
        &RatioArtifact {
            matrix: ratio.clone(),
            excluded: g_ft.excluded.clone(),
        },
    )?;
    let n = ft.ids().len();
    run.set_counts(Counts {
        input: n,
        scored: n,
        flagged: 0,
    });
    let record = run.finish(RunStatus::Complete)?;
    Ok(Probing3Report {
        ft: g_ft.results,
        frz: g_frz.results,
        ratio,
        excluded: g_ft.excluded,
        record,
    })
}
