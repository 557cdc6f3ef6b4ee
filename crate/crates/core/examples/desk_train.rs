//! Trains on a desk-scale dataset and compares generated statistics with
//! the training set.
//!
//! Usage: `desk_train [key=value]...` with keys `epochs`, `seed`,
//! `constrained` (0|1), `n`, `lambda2`, `batch`, `snap`, `pairing`
//! (index|nearest), `ckpt`.

use std::time::Instant;

use chanforge::preprocess::{preprocess_dataset, recover_dataset};
use chanforge::simkit::{build_dataset, standard_scenarios, Category};
use chanforge::stats::{fid_scalar, stats_summary, summary_table_csv, Feature, StatsConfig};
use chanforge::train::{generate, train_with, Pairing, TrainConfig};

fn arg<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(default)
}

fn main() -> chanforge::Result<()> {
    let epochs: usize = arg("epochs", 20);
    let seed: u64 = arg("seed", 1);
    let constrained = arg::<u8>("constrained", 1) == 1;
    let n: usize = arg("n", 128);
    let defaults = TrainConfig::default();
    let raw = build_dataset(&standard_scenarios(1, true, seed), n, seed)?;
    let ds = preprocess_dataset(&raw, -150.0)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        stationarity_constraint: constrained,
        checkpoint_every: 10,
        batch_size: arg("batch", defaults.batch_size),
        pairing: match arg("pairing", String::new()).as_str() {
            "index" => Pairing::Index,
            "nearest" => Pairing::Nearest,
            _ => defaults.pairing,
        },
        floor_snap_db: arg("snap", defaults.floor_snap_db),
        weights: chanforge::losses::LossWeights {
            lambda2: arg("lambda2", defaults.weights.lambda2),
            ..defaults.weights
        },
        ..defaults.clone()
    };
    let start = Instant::now();
    let (ckpt, hist) = train_with(&ds, cfg, |c, h| {
        let l = h.last().expect("steps");
        let thr = c.threshold_db().unwrap_or(-150.0);
        let mut floor = Vec::new();
        for cat in Category::ALL {
            let g = generate(c, cat, 32, 77)?;
            let cells = g.channels.iter().flat_map(|ch| ch.power_db.iter().copied());
            let (n_floor, n) = cells.fold((0usize, 0usize), |(f, n), v| (f + usize::from(v <= thr), n + 1));
            floor.push(format!("{cat} {:.3}", n_floor as f64 / n as f64));
        }
        eprintln!(
            "epoch {:4} {:7.1}s  L_D {:.4} L_G {:.4} L_lin {:.5} L_tpcc {:.5}  probe {:?} floor {}",
            c.epoch,
            start.elapsed().as_secs_f64(),
            l.l_d,
            l.l_g,
            l.l_linear,
            l.l_tpcc,
            h.probes.last().map(|p| &p.fid_rmsds),
            floor.join(" ")
        );
        Ok(())
    })?;
    eprintln!("trained {} steps in {:.1}s", hist.steps.len(), hist.wall_clock_s);

    let path: String = arg("ckpt", String::new());
    if !path.is_empty() {
        ckpt.save(std::path::Path::new(&path))?;
    }
    let recovered = recover_dataset(&ds)?;
    let reference = stats_summary(&recovered, &StatsConfig::default())?;
    let mut channels = Vec::new();
    for (k, c) in Category::ALL.into_iter().enumerate() {
        channels.extend(generate(&ckpt, c, n, 1000 + k as u64)?.channels);
    }
    let mut manifest = generate(&ckpt, Category::Weak, 0, 0)?.manifest;
    manifest.seeds.clear();
    let gen = chanforge::ChannelDataset::new(channels, manifest)?;
    let generated = stats_summary(&gen, &StatsConfig::default())?;
    let threshold = ckpt.threshold_db().unwrap_or(-150.0);
    for (name, d) in [("train", &recovered), ("generated", &gen)] {
        let mut hist = [0usize; 20];
        for ch in &d.channels {
            for &v in ch.power_db.iter() {
                hist[(((v - threshold) / 5.0).floor().max(0.0) as usize).min(19)] += 1;
            }
        }
        println!("hist5db,{name},{}", hist.map(|h| h.to_string()).join(","));
    }
    print!("{}", summary_table_csv(&[("train", &reference), ("generated", &generated)]));
    for c in Category::ALL {
        for f in Feature::ALL {
            let a = reference.category(c)?.feature_column(f);
            let b = generated.category(c)?.feature_column(f);
            println!("fid,{c},{},{:.6}", f.key(), fid_scalar(&a, &b).unwrap_or(f64::NAN));
        }
    }
    Ok(())
}
