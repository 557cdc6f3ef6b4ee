use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use chanforge::evalreport::{evaluate, render_figures, EvalConfig};
use chanforge::preprocess::{preprocess_dataset, recover_dataset, DEFAULT_THRESHOLD_DB};
use chanforge::simkit::store::{read_dataset, write_dataset};
use chanforge::simkit::{ChannelDataset, DatasetPlan, Domain};
use chanforge::stats::{stats_summary, summary_table_csv, StatsConfig};
use chanforge::train::{generate, train_to_dir, Checkpoint, TrainConfig};
use chanforge::Category;

#[derive(Parser)]
#[command(name = "chanforge", version, about = "Synthetic V2V channel datasets and a conditional recurrent GAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labeled dataset.
    Simulate {
        /// Dataset plan (JSON); the desk preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mask and normalize a simulated dataset.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB, allow_hyphen_values = true)]
        threshold: f64,
    },
    /// Per-category channel statistics.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a preprocessed dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Training config (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample channels of one category from a checkpoint.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        label: Category,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare generated datasets with a reference.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        /// `method=dir`, repeatable.
        #[arg(long = "gen", value_parser = parse_method, required = true)]
        generated: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_figures: bool,
    },
}

fn parse_method(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected method=dir, got '{s}'")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads a dataset in dB, undoing normalization when needed.
fn load_db(dir: &Path) -> Result<ChannelDataset> {
    let ds = read_dataset(dir)?;
    Ok(match ds.manifest.domain {
        Domain::PowerDb => ds,
        Domain::Normalized => recover_dataset(&ds)?,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let plan: DatasetPlan = match config {
                Some(p) => read_json(&p)?,
                None => DatasetPlan::default(),
            };
            let ds = plan.build(seed)?;
            write_dataset(&out, &ds)?;
            log::info!("wrote {} channels {:?} to {}", ds.len(), ds.shape(), out.display());
        }
        Command::Preprocess { input, out, threshold } => {
            let ds = read_dataset(&input)?;
            let pre = preprocess_dataset(&ds, threshold)?;
            write_dataset(&out, &pre)?;
            if let Some(n) = pre.manifest.normalization {
                log::info!("bounds [{:.3}, {:.3}] dB, threshold {threshold} dB", n.p_min_db, n.p_max_db);
            }
        }
        Command::Stats { input, out } => {
            let summary = stats_summary(&load_db(&input)?, &StatsConfig::default())?;
            std::fs::write(&out, serde_json::to_string_pretty(&summary)?)
                .with_context(|| format!("writing {}", out.display()))?;
            print!("{}", summary_table_csv(&[("data", &summary)]));
        }
        Command::Train {
            data,
            config,
            out,
            epochs,
            seed,
        } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::from_json_file(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ds = read_dataset(&data)?;
            let (ckpt, history) = train_to_dir(&ds, cfg, &out)?;
            log::info!(
                "trained {} steps ({} epochs) in {:.1}s; checkpoint {}",
                ckpt.step,
                ckpt.epoch,
                history.wall_clock_s,
                out.join("model.ckpt").display()
            );
        }
        Command::Generate {
            ckpt,
            label,
            n,
            seed,
            out,
        } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let ds = generate(&ckpt, label, n, seed)?;
            write_dataset(&out, &ds)?;
            log::info!("wrote {n} {label} channels to {}", out.display());
        }
        Command::Evaluate {
            reference,
            generated,
            out,
            no_figures,
        } => {
            let reference = load_db(&reference)?;
            let mut sets = BTreeMap::new();
            for (name, dir) in generated {
                if sets.insert(name.clone(), load_db(&dir)?).is_some() {
                    bail!("method '{name}' given twice");
                }
            }
            let mut report = evaluate(&reference, &sets, &EvalConfig::default())?;
            if !no_figures {
                report.figures = render_figures(&report, &reference, &sets, &out.join("figs"))?;
            }
            report.write(&out)?;
            print!("{}", report.fid_csv());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
