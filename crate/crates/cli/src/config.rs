//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; every key may appear at most
//! once and unknown keys are rejected. Keys left out keep their defaults.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `classes` | 6 | synthetic classes |
//! | `per_class` | 60 | samples per class |
//! | `t_min`, `t_max` | 24, 48 | skeleton length range |
//! | `joints`, `persons` | 6, 1 | skeleton layout |
//! | `subjects`, `views` | 10, 3 | performers and cameras |
//! | `video` | `3x16x16x16` | `C×T×H×W` of each video |
//! | `skeleton_noise`, `video_noise` | 0.02, 0.1 | additive noise std-devs |
//! | `distractors` | 2 | off-signature skeleton twitches per sample |
//! | `skeleton_shared`, `video_shared` | `0-1`, `2-3` | class pairs sharing a signature (`none` for no pairs) |
//! | `data_seed` | 1 | generator and split seed |
//! | `split` | `cross_subject` | or `cross_view` |
//! | `val_fraction` | 0.1 | training-side subjects held out for validation |
//! | `model` | `BI-GRU2-BN-DP-H` | ladder variant |
//! | `hidden` | 32 | units per recurrent direction |
//! | `fc_hidden` | `auto` | extra fully-connected width (`auto`: recurrent output width) |
//! | `clip` | `3x8x16x16` | C3D-DESK clip shape |
//! | `c3d_layers` | `auto` | C3D-DESK layers, e.g. `conv8 pool1x2x2 conv16 pool2x2x2 fc64 fc64` |
//! | `epochs`, `batch_size` | 50, 16 | |
//! | `optimizer` | `rmsprop` | or `sgd` (halves the rate on stalled validation) |
//! | `learning_rate`, `decay`, `momentum` | 0.001, 0.9, 0 | |
//! | `patience` | 3 | SGD halving patience, in epochs |
//! | `eval_every` | 1 | steps between validation-curve points |
//! | `threshold` | 0.6 | validation accuracy for `steps_to_threshold` |
//! | `seed` | 42 | weight initialization, shuffling and dropout |
//! | `input_norm` | `center` | `center` (first-frame centroid, then standardize), `standardize` or `raw` |
//! | `bn_stats` | `population` | or `running`: batch-norm statistics used at evaluation |

use std::collections::BTreeSet;

use twostream_core::conv3d::C3dSpec;
use twostream_core::data::{Dataset, SplitMode, SplitSpec, SynthConfig};
use twostream_core::optim::OptimizerKind;
use twostream_core::{Error, Result};

use crate::model::{InputNormKind, ModelSpec, Variant};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub data_seed: u64,
    pub split: SplitSpec,
    pub variant: Variant,
    pub hidden: usize,
    pub fc_hidden: Option<usize>,
    pub clip: [usize; 4],
    pub c3d_layers: Option<String>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            data_seed: 1,
            split: SplitSpec::new(SplitMode::CrossSubject),
            variant: Variant::BiGru2BnDpH,
            hidden: 32,
            fc_hidden: None,
            clip: [3, 8, 16, 16],
            c3d_layers: None,
            train: TrainConfig::default(),
        }
    }
}

fn dims4(v: &str) -> Option<[usize; 4]> {
    let parts: Vec<usize> = v.split('x').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    parts.try_into().ok()
}

fn fmt_dims(d: [usize; 4]) -> String {
    d.map(|x| x.to_string()).join("x")
}

fn pairs(v: &str) -> Option<Vec<(usize, usize)>> {
    if v == "none" {
        return Some(Vec::new());
    }
    v.split(',')
        .map(|p| {
            let (a, b) = p.trim().split_once('-')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })
        .collect()
}

fn fmt_pairs(p: &[(usize, usize)]) -> String {
    if p.is_empty() {
        "none".into()
    } else {
        p.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(",")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    /// Assigns one key. Errors name the key and the offending value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        let bad = || format!("bad value `{value}` for `{key}`");
        let s = &mut self.synth;
        let t = &mut self.train;
        match key {
            "classes" => s.classes = num(key, value)?,
            "per_class" => s.per_class = num(key, value)?,
            "t_min" => s.t_min = num(key, value)?,
            "t_max" => s.t_max = num(key, value)?,
            "joints" => s.joints = num(key, value)?,
            "persons" => s.persons = num(key, value)?,
            "subjects" => s.subjects = num(key, value)?,
            "views" => s.views = num(key, value)?,
            "video" => s.video = dims4(value).ok_or_else(bad)?,
            "skeleton_noise" => s.skeleton_noise = num(key, value)?,
            "video_noise" => s.video_noise = num(key, value)?,
            "distractors" => s.distractors = num(key, value)?,
            "skeleton_shared" => s.skeleton_shared = pairs(value).ok_or_else(bad)?,
            "video_shared" => s.video_shared = pairs(value).ok_or_else(bad)?,
            "data_seed" => self.data_seed = num(key, value)?,
            "split" => self.split.mode = SplitMode::parse(value).map_err(|e| e.to_string())?,
            "val_fraction" => self.split.val_fraction = num(key, value)?,
            "model" => self.variant = Variant::parse(value).map_err(|e| e.to_string())?,
            "hidden" => self.hidden = num(key, value)?,
            "fc_hidden" => self.fc_hidden = if value == "auto" { None } else { Some(num(key, value)?) },
            "clip" => self.clip = dims4(value).ok_or_else(bad)?,
            "c3d_layers" => {
                self.c3d_layers = if value == "auto" {
                    None
                } else {
                    let layers = C3dSpec::parse_layers(value).map_err(|e| e.to_string())?;
                    Some(layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "))
                }
            }
            "epochs" => t.epochs = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "optimizer" => {
                t.optimizer = match value {
                    "rmsprop" => OptimizerKind::Rmsprop,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(bad()),
                }
            }
            "learning_rate" => t.learning_rate = num(key, value)?,
            "decay" => t.decay = num(key, value)?,
            "momentum" => t.momentum = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "eval_every" => t.eval_every = num(key, value)?,
            "threshold" => t.threshold = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "bn_stats" => {
                t.bn_population_stats = match value {
                    "population" => true,
                    "running" => false,
                    _ => return Err(bad()),
                }
            }
            "input_norm" => t.input_norm = InputNormKind::parse(value).ok_or_else(bad)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Every key with its current value; [`RunConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let t = &self.train;
        let optimizer = match t.optimizer {
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Sgd => "sgd",
        };
        let split = match self.split.mode {
            SplitMode::CrossSubject => "cross_subject",
            SplitMode::CrossView => "cross_view",
        };
        let fc_hidden = self.fc_hidden.map_or("auto".to_string(), |w| w.to_string());
        let rows: Vec<(&str, String)> = vec![
            ("classes", s.classes.to_string()),
            ("per_class", s.per_class.to_string()),
            ("t_min", s.t_min.to_string()),
            ("t_max", s.t_max.to_string()),
            ("joints", s.joints.to_string()),
            ("persons", s.persons.to_string()),
            ("subjects", s.subjects.to_string()),
            ("views", s.views.to_string()),
            ("video", fmt_dims(s.video)),
            ("skeleton_noise", format!("{:?}", s.skeleton_noise)),
            ("video_noise", format!("{:?}", s.video_noise)),
            ("distractors", s.distractors.to_string()),
            ("skeleton_shared", fmt_pairs(&s.skeleton_shared)),
            ("video_shared", fmt_pairs(&s.video_shared)),
            ("data_seed", self.data_seed.to_string()),
            ("split", split.to_string()),
            ("val_fraction", format!("{:?}", self.split.val_fraction)),
            ("model", self.variant.name().to_string()),
            ("hidden", self.hidden.to_string()),
            ("fc_hidden", fc_hidden),
            ("clip", fmt_dims(self.clip)),
            ("c3d_layers", self.c3d_layers.clone().unwrap_or_else(|| "auto".into())),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("optimizer", optimizer.to_string()),
            ("learning_rate", format!("{:?}", t.learning_rate)),
            ("decay", format!("{:?}", t.decay)),
            ("momentum", format!("{:?}", t.momentum)),
            ("patience", t.patience.to_string()),
            ("eval_every", t.eval_every.to_string()),
            ("threshold", format!("{:?}", t.threshold)),
            ("seed", t.seed.to_string()),
            ("bn_stats", if t.bn_population_stats { "population" } else { "running" }.to_string()),
            ("input_norm", t.input_norm.name().to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn model_spec(&self, data: &Dataset) -> ModelSpec {
        ModelSpec {
            variant: self.variant,
            classes: data.classes,
            input_width: data.skeleton_width(),
            hidden: self.hidden,
            fc_hidden: self.fc_hidden,
            clip: self.clip,
            c3d_layers: self.c3d_layers.clone(),
        }
    }
}
