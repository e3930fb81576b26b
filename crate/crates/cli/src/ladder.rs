//! Run orchestration: data and split from a [`RunConfig`], single runs, and
//! the ladder comparison over variants and seeds.

use serde::{Deserialize, Serialize};
use twostream_core::data::{generate_synthetic, make_splits, Dataset, Split};
use twostream_core::{Result, Rng};

use crate::config::RunConfig;
use crate::model::{build_model, InputNormKind, Model, Net, Variant};
use crate::train::{train, TrainOutput};

/// Synthetic dataset and split, both derived from `cfg.data_seed`.
pub fn prepare_data(cfg: &RunConfig) -> Result<(Dataset, Split)> {
    let data = generate_synthetic(&cfg.synth, &mut Rng::new(cfg.data_seed))?;
    let split = split_for(cfg, &data)?;
    Ok((data, split))
}

/// The split for `data` under `cfg`; independent of the training seed so
/// that every model trained from one data seed sees the same partition.
pub fn split_for(cfg: &RunConfig, data: &Dataset) -> Result<Split> {
    make_splits(data, &cfg.split, &mut Rng::new(cfg.data_seed).fork(1))
}

/// Freshly initialized model for `cfg`, seeded by the training seed.
pub fn init_model(cfg: &RunConfig, data: &Dataset) -> Result<Model> {
    let mut model = build_model(&cfg.model_spec(data), &mut Rng::new(cfg.train.seed).fork(1))?;
    if let Net::Sequence(m) = &mut model.net {
        m.norm.center = cfg.train.input_norm == InputNormKind::Center;
    }
    Ok(model)
}

pub fn run(cfg: &RunConfig, data: &Dataset, split: &Split) -> Result<(Model, TrainOutput)> {
    let mut model = init_model(cfg, data)?;
    let out = train(&mut model, data, split, &cfg.train)?;
    Ok((model, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub model: String,
    pub param_count: usize,
    pub seeds: Vec<u64>,
    pub test_accuracies: Vec<f64>,
    pub mean_test_accuracy: f64,
    pub steps_to_threshold: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub data_seed: u64,
    pub rows: Vec<LadderRow>,
}

impl LadderReport {
    pub fn row(&self, variant: Variant) -> Option<&LadderRow> {
        self.rows.iter().find(|r| r.model == variant.name())
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<16} {:>8} {:>10}  per-seed\n", "model", "params", "mean acc");
        for r in &self.rows {
            let per: Vec<String> = r.test_accuracies.iter().map(|a| format!("{:.3}", a)).collect();
            out.push_str(&format!(
                "{:<16} {:>8} {:>10.4}  {}\n",
                r.model,
                r.param_count,
                r.mean_test_accuracy,
                per.join(" ")
            ));
        }
        out
    }
}

/// Trains every variant once per seed on one dataset. `on_run` sees each
/// finished run, in order, before the next one starts.
pub fn run_ladder(
    base: &RunConfig,
    variants: &[Variant],
    seeds: &[u64],
    mut on_run: impl FnMut(&TrainOutput) -> Result<()>,
) -> Result<LadderReport> {
    let (data, split) = prepare_data(base)?;
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut row = LadderRow {
            model: variant.name().to_string(),
            param_count: 0,
            seeds: seeds.to_vec(),
            test_accuracies: Vec::new(),
            mean_test_accuracy: 0.0,
            steps_to_threshold: Vec::new(),
        };
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.variant = variant;
            cfg.train.seed = seed;
            let (_, out) = run(&cfg, &data, &split)?;
            on_run(&out)?;
            row.param_count = out.result.param_count;
            row.test_accuracies.push(out.result.test_accuracy);
            row.steps_to_threshold.push(out.result.steps_to_threshold);
        }
        row.mean_test_accuracy = row.test_accuracies.iter().sum::<f64>() / seeds.len().max(1) as f64;
        rows.push(row);
    }
    Ok(LadderReport {
        data_seed: base.data_seed,
        rows,
    })
}
