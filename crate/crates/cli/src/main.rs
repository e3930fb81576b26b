use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use twostream_core::data::{load_dataset, save_dataset, Dataset, Split};
use twostream_core::io::{write_tsr1, Dtype};
use twostream_core::{Error, Result, Rng};
use twostream_cli::artifacts::{load_config, load_run, save_run, write_json, CONFUSION_FILE, RESULT_FILE};
use twostream_cli::config::RunConfig;
use twostream_cli::gradcheck::gradcheck_all;
use twostream_cli::ladder::{prepare_data, run, run_ladder, split_for};
use twostream_cli::model::Variant;
use twostream_cli::pipeline::{decision_fusion, extract_features, feature_fusion, FusionResult, Tap};
use twostream_cli::train::{confusion_csv, evaluate, predict_probs};

#[derive(Parser)]
#[command(name = "twostream", version, about = "Two-stream skeleton/video action recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitPart {
    Train,
    Val,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired skeleton/video dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// `key=value` overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one feature row per sample as a TSR1 tensor.
    Extract {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_tap)]
        tap: Tap,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitPart,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decision-level fusion of a recurrent and a video run.
    FuseDecision {
        #[arg(long)]
        rnn: PathBuf,
        #[arg(long)]
        cnn: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature-level fusion of a recurrent and a video run with a linear SVM.
    FuseFeature {
        #[arg(long)]
        rnn: PathBuf,
        #[arg(long)]
        cnn: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained run on one split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitPart,
        /// Directory for `result.json` and `confusion.csv`; printed only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the model ladder over several seeds on one synthetic dataset.
    Ladder {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Comma-separated variant names; the recurrent ladder when absent.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_tap(s: &str) -> std::result::Result<Tap, String> {
    Tap::parse(s).map_err(|e| e.to_string())
}

fn config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim()).map_err(Error::Config)?;
    }
    Ok(cfg)
}

fn dataset(cfg: &RunConfig, data: Option<&Path>) -> Result<(Dataset, Split)> {
    match data {
        Some(dir) => {
            let d = load_dataset(dir)?;
            let split = split_for(cfg, &d)?;
            Ok((d, split))
        }
        None => prepare_data(cfg),
    }
}

fn indices(split: &Split, part: SplitPart, n: usize) -> Vec<usize> {
    match part {
        SplitPart::Train => split.train.clone(),
        SplitPart::Val => split.val.clone(),
        SplitPart::Test => split.test.clone(),
        SplitPart::All => (0..n).collect(),
    }
}

fn fuse(rnn: &Path, cnn: &Path, data: Option<&Path>, out: &Path, feature: bool) -> Result<()> {
    let rcfg = load_config(rnn)?;
    let ccfg = load_config(cnn)?;
    if data.is_none() && (rcfg.synth != ccfg.synth || rcfg.data_seed != ccfg.data_seed) {
        return Err(Error::Config("the two runs were trained on different synthetic data".into()));
    }
    if rcfg.split != ccfg.split {
        return Err(Error::Config("the two runs use different splits".into()));
    }
    let (d, split) = dataset(&rcfg, data)?;
    let (_, rm) = load_run(rnn, &d)?;
    let (_, cm) = load_run(cnn, &d)?;
    let result: FusionResult = if feature {
        feature_fusion(&rm, &cm, &d, &split)?
    } else {
        decision_fusion(&rm, &cm, &d, &split)?
    };
    fs::create_dir_all(out)?;
    write_json(out.join("fusion.json"), &result)?;
    fs::write(out.join(CONFUSION_FILE), confusion_csv(&result.confusion, &result.class_names))?;
    fs::write(out.join("rnn_confusion.csv"), confusion_csv(&result.rnn_confusion, &result.class_names))?;
    fs::write(out.join("cnn_confusion.csv"), confusion_csv(&result.cnn_confusion, &result.class_names))?;
    write_tsr1(out.join("rnn_test_probs.tsr"), &predict_probs(&rm, &d, &split.test)?, Dtype::F64)?;
    write_tsr1(out.join("cnn_test_probs.tsr"), &predict_probs(&cm, &d, &split.test)?, Dtype::F64)?;
    println!(
        "{} fusion: test {:.4} (rnn {:.4}, cnn {:.4}), val {:.4}",
        result.method, result.test_accuracy, result.rnn_test_accuracy, result.cnn_test_accuracy, result.val_accuracy
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config: c, out } => {
            let cfg = config(c.as_deref(), &[])?;
            let (d, _) = prepare_data(&cfg)?;
            save_dataset(&out, &d)?;
            println!("wrote {} samples, {} classes to {}", d.len(), d.classes, out.display());
        }
        Command::Train {
            config: c,
            data,
            overrides,
            out,
        } => {
            let cfg = config(c.as_deref(), &overrides)?;
            let (d, split) = dataset(&cfg, data.as_deref())?;
            let (model, output) = run(&cfg, &d, &split)?;
            save_run(&out, &cfg, &model, &output)?;
            let r = &output.result;
            println!(
                "{}: {} params, {} steps, test accuracy {:.4}, {:.2} ms/step",
                r.model,
                r.param_count,
                r.steps,
                r.test_accuracy,
                1e3 * output.timings.mean_step_seconds
            );
        }
        Command::Extract {
            run: dir,
            data,
            tap,
            split: part,
            out,
        } => {
            let cfg = load_config(&dir)?;
            let (d, split) = dataset(&cfg, data.as_deref())?;
            let (_, model) = load_run(&dir, &d)?;
            let idx = indices(&split, part, d.len());
            let f = extract_features(&model, &d, &idx, tap)?;
            write_tsr1(&out, &f, Dtype::F64)?;
            println!("wrote {}x{} {} features to {}", f.rows(), f.cols(), tap.name(), out.display());
        }
        Command::FuseDecision { rnn, cnn, data, out } => fuse(&rnn, &cnn, data.as_deref(), &out, false)?,
        Command::FuseFeature { rnn, cnn, data, out } => fuse(&rnn, &cnn, data.as_deref(), &out, true)?,
        Command::Eval {
            run: dir,
            data,
            split: part,
            out,
        } => {
            let cfg = load_config(&dir)?;
            let (d, split) = dataset(&cfg, data.as_deref())?;
            let (_, model) = load_run(&dir, &d)?;
            let e = evaluate(&model, &d, &indices(&split, part, d.len()))?;
            let csv = confusion_csv(&e.confusion, &d.class_names());
            match out {
                Some(o) => {
                    fs::create_dir_all(&o)?;
                    let report = serde_json::json!({
                        "model": model.spec.variant.name(),
                        "accuracy": e.accuracy,
                        "class_names": d.class_names(),
                        "confusion": e.confusion,
                    });
                    write_json(o.join(RESULT_FILE), &report)?;
                    fs::write(o.join(CONFUSION_FILE), csv)?;
                }
                None => print!("{csv}"),
            }
            println!("accuracy {:.4}", e.accuracy);
        }
        Command::Gradcheck { seed, out } => {
            let report = gradcheck_all(&mut Rng::new(seed))?;
            print!("{}", report.table());
            if let Some(o) = out {
                write_json(o, &report)?;
            }
            if !report.passed() {
                return Err(Error::Contract(format!(
                    "{} of {} gradient checks failed",
                    report.failures().len(),
                    report.checks.len()
                )));
            }
            println!(
                "all {} checks over {} layer types passed (max relative error {:.2e})",
                report.checks.len(),
                report.layer_types().len(),
                report.max_relative_error()
            );
        }
        Command::Ladder {
            config: c,
            overrides,
            variants,
            seeds,
            out,
        } => {
            let cfg = config(c.as_deref(), &overrides)?;
            let variants = if variants.is_empty() {
                Variant::LADDER.to_vec()
            } else {
                variants.iter().map(|v| Variant::parse(v)).collect::<Result<_>>()?
            };
            let runs = out.join("runs");
            fs::create_dir_all(&runs)?;
            let report = run_ladder(&cfg, &variants, &seeds, |o| {
                let r = &o.result;
                eprintln!("{} seed {}: test accuracy {:.4}", r.model, r.seed, r.test_accuracy);
                write_json(runs.join(format!("{}-seed{}.json", r.model, r.seed)), r)?;
                write_json(runs.join(format!("{}-seed{}.timings.json", r.model, r.seed)), &o.timings)
            })?;
            write_json(out.join("ladder.json"), &report)?;
            fs::write(out.join("config.conf"), cfg.to_text())?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
