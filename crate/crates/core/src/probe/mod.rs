//! Layer-wise regression probes: one small MLP per (variant, layer, feature)
//! trained on pooled embeddings, compared across variants via RMSE ratios.

mod archive;
mod mlp;
mod table;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream_rng, stream_seed, unit_hash};
use crate::types::ModelVariant;

pub use archive::{layer_file_name, ArchiveMeta, LayerEmbeddingArchive, Pooling};
pub use mlp::{
    gradient_check, gradient_check_with, init_probe, AdamState, Dense, Gradients, ProbeModel, GRADCHECK_MIN_PARAMS,
    GRADCHECK_STEP,
};
pub use table::FeatureTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decay_factor: f64,
    pub lr_patience_epochs: usize,
    /// Relative val-loss decrease that counts as an improvement.
    pub plateau_threshold: f64,
    pub seed: u64,
    pub target_standardization: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden_sizes: vec![768, 128],
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 100,
            lr_decay_factor: 0.9,
            lr_patience_epochs: 5,
            plateau_threshold: 1e-4,
            seed: 0,
            target_standardization: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::validation("hidden sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.lr_patience_epochs == 0 {
            return Err(Error::validation("batch size, epochs and patience must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::validation("lr decay factor must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.plateau_threshold) {
            return Err(Error::validation("plateau threshold must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Row indices into an archive, disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSplits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl ProbeSplits {
    /// 70/15/15 by a seeded hash of each id, so membership doesn't depend on
    /// row order or on which other ids are present.
    pub fn by_id_hash(ids: &[String], seed: u64) -> Result<Self> {
        let mut s = ProbeSplits {
            train: vec![],
            val: vec![],
            test: vec![],
        };
        for (i, id) in ids.iter().enumerate() {
            let u = unit_hash(seed, id);
            if u < 0.70 {
                s.train.push(i);
            } else if u < 0.85 {
                s.val.push(i);
            } else {
                s.test.push(i);
            }
        }
        s.validate(ids.len())?;
        Ok(s)
    }

    pub fn validate(&self, n_rows: usize) -> Result<()> {
        if self.train.is_empty() || self.val.is_empty() || self.test.is_empty() {
            return Err(Error::validation(format!(
                "degenerate probe split: {} train / {} val / {} test",
                self.train.len(),
                self.val.len(),
                self.test.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n_rows || !seen.insert(i) {
                return Err(Error::validation(format!("split index {i} out of range or repeated")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

/// Outcome of one training run, independent of where the inputs came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Test RMSE in the target's original units.
    pub rmse_test: f64,
    /// Test RMSE divided by the train-split target std.
    pub rmse_test_standardized: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub model_variant: ModelVariant,
    pub layer: usize,
    pub feature: String,
    #[serde(flatten)]
    pub outcome: TrainOutcome,
}

impl ProbeResult {
    pub fn rmse_test(&self) -> f64 {
        self.outcome.rmse_test
    }
}

fn gather(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

/// Trains on `x` rows (f32 embeddings) against `targets` (one per row).
///
/// Adam on minibatch MSE; after each epoch the full train and val losses are
/// recorded, and once `lr_patience_epochs` consecutive epochs fail to improve
/// val loss by `plateau_threshold` (relative), lr is multiplied by
/// `lr_decay_factor` and the count restarts. The returned model is the
/// snapshot with the lowest val loss.
pub fn train_probe(
    x: ArrayView2<f32>,
    targets: &[f64],
    splits: &ProbeSplits,
    config: &ProbeConfig,
) -> Result<(ProbeModel, TrainOutcome)> {
    config.validate()?;
    if targets.len() != x.nrows() {
        return Err(Error::Shape {
            expected: x.nrows(),
            actual: targets.len(),
        });
    }
    splits.validate(x.nrows())?;
    let x = x.mapv(f64::from);
    let pick = |idx: &[usize]| idx.iter().map(|&i| targets[i]).collect::<Vec<f64>>();
    let (t_train_raw, t_val_raw, t_test_raw) = (pick(&splits.train), pick(&splits.val), pick(&splits.test));
    let (target_mean, target_std) = mean_std(&t_train_raw);
    if is_constant(&t_train_raw) {
        return Err(Error::validation("target has zero variance on the train split"));
    }
    let (shift, scale) = if config.target_standardization {
        (target_mean, target_std)
    } else {
        (0.0, 1.0)
    };
    let norm = |ts: &[f64]| ts.iter().map(|t| (t - shift) / scale).collect::<Vec<f64>>();
    let (t_train, t_val) = (norm(&t_train_raw), norm(&t_val_raw));
    let (x_train, x_val, x_test) = (gather(&x, &splits.train), gather(&x, &splits.val), gather(&x, &splits.test));

    let mut model = init_probe(x.ncols(), config)?;
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut plateau_ref = f64::INFINITY;
    let mut bad_epochs = 0;
    let mut lr = config.learning_rate;
    let mut history = Vec::with_capacity(config.epochs);
    let mut rng = stream_rng(config.seed, "probe-shuffle", 0);
    let mut order: Vec<usize> = (0..splits.train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let xb = gather(&x_train, batch);
            let tb: Vec<f64> = batch.iter().map(|&i| t_train[i]).collect();
            let (loss, grads) = model.gradients(xb.view(), &tb)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("minibatch loss became {loss}"),
                });
            }
            model.adam_step(&grads, lr);
        }
        let train_loss = model.loss(x_train.view(), &t_train)?;
        let val_loss = model.loss(x_val.view(), &t_val)?;
        if !train_loss.is_finite() || !val_loss.is_finite() || !model.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite loss (train {train_loss}, val {val_loss})"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = model.clone();
            best_epoch = epoch;
        }
        if val_loss < plateau_ref * (1.0 - config.plateau_threshold) {
            plateau_ref = val_loss;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.lr_patience_epochs {
                lr *= config.lr_decay_factor;
                log::debug!("epoch {epoch}: val loss plateaued, lr -> {lr:e}");
                bad_epochs = 0;
            }
        }
    }

    let preds = best.forward(x_test.view())?;
    let sse: f64 = preds
        .iter()
        .zip(&t_test_raw)
        .map(|(p, t)| {
            let d = p * scale + shift - t;
            d * d
        })
        .sum();
    let rmse_test = (sse / t_test_raw.len() as f64).sqrt();
    Ok((
        best,
        TrainOutcome {
            rmse_test,
            rmse_test_standardized: rmse_test / target_std,
            target_mean,
            target_std,
            best_epoch,
            history,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub results: Vec<ProbeResult>,
    /// Features skipped because they are constant on the train split.
    pub excluded: Vec<String>,
}

/// Seed for one (layer, feature) probe. Deliberately independent of the
/// model variant so both variants start from the same initialization.
pub fn probe_seed(base: u64, layer: usize, feature: &str) -> u64 {
    stream_seed(base, &format!("probe/{feature}"), layer as u64)
}

/// Trains every (layer, feature) probe, `parallelism` at a time. Each
/// training is single-threaded and seeded by [`probe_seed`].
pub fn train_grid(
    archive: &LayerEmbeddingArchive,
    table: &FeatureTable,
    features: &[String],
    splits: &ProbeSplits,
    config: &ProbeConfig,
    parallelism: usize,
) -> Result<ProbeGrid> {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut targets = BTreeMap::new();
    for f in features {
        let col = table.column_for(f, archive.ids())?;
        let train: Vec<f64> = splits.train.iter().map(|&i| col[i]).collect();
        if is_constant(&train) {
            log::warn!("feature {f} is constant on the train split; not probed");
            excluded.push(f.clone());
        } else {
            kept.push(f.clone());
            targets.insert(f.clone(), col);
        }
    }
    let jobs: Vec<(usize, String)> = (0..archive.n_layers())
        .flat_map(|l| kept.iter().map(move |f| (l, f.clone())))
        .collect();
    let outcomes = crate::par::map_ordered(&jobs, parallelism, |(layer, feature)| {
        let cfg = ProbeConfig {
            seed: probe_seed(config.seed, *layer, feature),
            ..config.clone()
        };
        let x = archive.layer(*layer)?;
        let (_, outcome) = train_probe(x, &targets[feature], splits, &cfg)?;
        Ok(ProbeResult {
            model_variant: archive.meta.variant,
            layer: *layer,
            feature: feature.clone(),
            outcome,
        })
    });
    Ok(ProbeGrid {
        results: outcomes.into_iter().collect::<Result<Vec<_>>>()?,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCell {
    pub layer: usize,
    pub feature: String,
    pub rmse_ft: f64,
    pub rmse_frz: f64,
    /// `100 · rmse_ft / rmse_frz`; `None` when `rmse_frz` is 0.
    pub ratio_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioMatrix {
    pub layers: Vec<usize>,
    pub features: Vec<String>,
    pub cells: Vec<RatioCell>,
}

impl RatioMatrix {
    pub fn get(&self, layer: usize, feature: &str) -> Option<&RatioCell> {
        self.cells.iter().find(|c| c.layer == layer && c.feature == feature)
    }

    /// Rows are features, columns layers; undefined cells are `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("feature");
        for l in &self.layers {
            out.push_str(&format!("\tlayer_{l}"));
        }
        out.push('\n');
        for f in &self.features {
            out.push_str(f);
            for &l in &self.layers {
                match self.get(l, f).and_then(|c| c.ratio_pct) {
                    Some(r) => out.push_str(&format!("\t{r:.4}")),
                    None => out.push_str("\tNA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn index_results(rs: &[ProbeResult]) -> Result<BTreeMap<(usize, &str), f64>> {
    let mut m = BTreeMap::new();
    for r in rs {
        if m.insert((r.layer, r.feature.as_str()), r.rmse_test()).is_some() {
            return Err(Error::validation(format!(
                "duplicate probe result for layer {} / {}",
                r.layer, r.feature
            )));
        }
    }
    Ok(m)
}

pub fn rmse_ratio_matrix(ft: &[ProbeResult], frz: &[ProbeResult]) -> Result<RatioMatrix> {
    let a = index_results(ft)?;
    let b = index_results(frz)?;
    if let Some(k) = a.keys().find(|k| !b.contains_key(*k)).or_else(|| b.keys().find(|k| !a.contains_key(*k))) {
        return Err(Error::validation(format!(
            "probe grids differ: layer {} / {} present in only one variant",
            k.0, k.1
        )));
    }
    let mut layers: Vec<usize> = a.keys().map(|k| k.0).collect();
    layers.dedup();
    let mut features: Vec<String> = Vec::new();
    for r in ft {
        if !features.contains(&r.feature) {
            features.push(r.feature.clone());
        }
    }
    let cells = a
        .iter()
        .map(|(&(layer, feature), &rmse_ft)| {
            let rmse_frz = b[&(layer, feature)];
            RatioCell {
                layer,
                feature: feature.to_string(),
                rmse_ft,
                rmse_frz,
                ratio_pct: (rmse_frz > 0.0).then(|| 100.0 * (rmse_ft / rmse_frz)),
            }
        })
        .collect();
    Ok(RatioMatrix {
        layers,
        features,
        cells,
    })
}
