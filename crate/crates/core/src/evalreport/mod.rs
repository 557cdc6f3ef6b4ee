//! Comparison of generated datasets against a reference: summary table,
//! per-feature FID, method rankings and figures.

mod figures;

pub use figures::render_figures;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkit::{Category, ChannelDataset};
use crate::stats::{fid, fid_scalar, stats_summary, summary_table_csv, CategoryStats, Feature, StatsConfig, StatsSummary};

/// Name of the reference column in tables and figures.
pub const REFERENCE: &str = "reference";
/// Name of the self-split baseline in the FID table.
pub const SELF_SPLIT: &str = "self_split";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub stats: StatsConfig,
    /// Relative tolerance on category means for the pass flags.
    pub mean_tolerance: f64,
    pub split_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            stats: StatsConfig::default(),
            mean_tolerance: 0.25,
            split_seed: 0,
        }
    }
}

/// FID of one method against the reference, per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidTable {
    pub per_feature: BTreeMap<Category, BTreeMap<Feature, f64>>,
    /// FID over the joint five-feature vector.
    pub joint: BTreeMap<Category, f64>,
}

impl FidTable {
    pub fn get(&self, category: Category, feature: Feature) -> Option<f64> {
        self.per_feature.get(&category)?.get(&feature).copied()
    }

    /// Mean over categories.
    pub fn mean(&self, feature: Feature) -> f64 {
        let v: Vec<f64> = self.per_feature.values().filter_map(|m| m.get(&feature).copied()).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodChecks {
    /// `|generated - reference| / |reference|` of category means for RMSDS
    /// and multipath count.
    pub relative_error: BTreeMap<Category, BTreeMap<Feature, f64>>,
    pub means_within_tolerance: bool,
    /// Mean WSS interval of weak channels exceeds that of strong ones.
    pub wss_ordering: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub reference: StatsSummary,
    pub methods: BTreeMap<String, StatsSummary>,
    pub fid: BTreeMap<String, FidTable>,
    /// FID between two random halves of the reference.
    pub self_split: FidTable,
    /// Methods ordered by ascending mean FID, per feature.
    pub rankings: BTreeMap<Feature, Vec<String>>,
    pub checks: BTreeMap<String, MethodChecks>,
    pub figures: Vec<PathBuf>,
}

const CHECKED: [Feature; 2] = [Feature::Rmsds, Feature::MultipathCount];

fn fid_between(a: &CategoryStats, b: &CategoryStats) -> Result<(BTreeMap<Feature, f64>, f64)> {
    let mut per = BTreeMap::new();
    for f in Feature::ALL {
        per.insert(f, fid_scalar(&a.feature_column(f), &b.feature_column(f))?);
    }
    Ok((per, fid(&a.feature_matrix(), &b.feature_matrix())?))
}

fn fid_table(reference: &StatsSummary, other: &StatsSummary) -> Result<FidTable> {
    let mut table = FidTable {
        per_feature: BTreeMap::new(),
        joint: BTreeMap::new(),
    };
    for (&c, r) in &reference.categories {
        let (per, joint) = fid_between(r, other.category(c)?)?;
        table.per_feature.insert(c, per);
        table.joint.insert(c, joint);
    }
    Ok(table)
}

fn split_stats(stats: &CategoryStats, rows: &[usize]) -> CategoryStats {
    CategoryStats {
        n_channels: rows.len(),
        means: stats.means,
        channels: rows.iter().map(|&i| stats.channels[i]).collect(),
        snapshot_rmsds_ns: Vec::new(),
        snapshot_multipath_count: Vec::new(),
    }
}

fn self_split(reference: &StatsSummary, seed: u64) -> Result<FidTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = FidTable {
        per_feature: BTreeMap::new(),
        joint: BTreeMap::new(),
    };
    for (&c, stats) in &reference.categories {
        let mut idx: Vec<usize> = (0..stats.channels.len()).collect();
        idx.shuffle(&mut rng);
        let (a, b) = idx.split_at(idx.len() / 2);
        let (per, joint) = fid_between(&split_stats(stats, a), &split_stats(stats, b))?;
        table.per_feature.insert(c, per);
        table.joint.insert(c, joint);
    }
    Ok(table)
}

fn checks(reference: &StatsSummary, summary: &StatsSummary, tolerance: f64) -> Result<MethodChecks> {
    let mut relative_error = BTreeMap::new();
    let mut ok = true;
    for (&c, r) in &reference.categories {
        let g = summary.category(c)?;
        let mut errs = BTreeMap::new();
        for f in CHECKED {
            let want = r.means.get(f);
            let err = (g.means.get(f) - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            ok &= err <= tolerance;
            errs.insert(f, err);
        }
        relative_error.insert(c, errs);
    }
    let wss = |c| summary.category(c).map(|s| s.means.wss_interval_s);
    Ok(MethodChecks {
        relative_error,
        means_within_tolerance: ok,
        wss_ordering: wss(Category::Weak)? > wss(Category::Strong)?,
    })
}

/// Compares every generated dataset with `reference`.
pub fn evaluate(reference: &ChannelDataset, generated: &BTreeMap<String, ChannelDataset>, config: &EvalConfig) -> Result<EvalReport> {
    if reference.is_empty() {
        return Err(Error::Degenerate("empty reference dataset".into()));
    }
    let ref_summary = stats_summary(reference, &config.stats)?;
    let mut methods = BTreeMap::new();
    let mut fids = BTreeMap::new();
    let mut all_checks = BTreeMap::new();
    for (name, ds) in generated {
        if name == REFERENCE || name == SELF_SPLIT {
            return Err(Error::InvalidConfig(format!("method name '{name}' is reserved")));
        }
        if ds.grid() != reference.grid() {
            return Err(Error::GridMismatch(REFERENCE.into(), name.clone()));
        }
        let summary = stats_summary(ds, &config.stats)?;
        fids.insert(name.clone(), fid_table(&ref_summary, &summary)?);
        all_checks.insert(name.clone(), checks(&ref_summary, &summary, config.mean_tolerance)?);
        methods.insert(name.clone(), summary);
    }
    let mut rankings = BTreeMap::new();
    for f in Feature::ALL {
        let mut names: Vec<&String> = fids.keys().collect();
        names.sort_by(|a, b| fids[*a].mean(f).total_cmp(&fids[*b].mean(f)));
        rankings.insert(f, names.into_iter().cloned().collect());
    }
    Ok(EvalReport {
        config: *config,
        self_split: self_split(&ref_summary, config.split_seed)?,
        reference: ref_summary,
        methods,
        fid: fids,
        rankings,
        checks: all_checks,
        figures: Vec::new(),
    })
}

impl EvalReport {
    /// Category means, one column per (category, method) with the
    /// reference first.
    pub fn table2_csv(&self) -> String {
        let mut cols: Vec<(&str, &StatsSummary)> = vec![(REFERENCE, &self.reference)];
        cols.extend(self.methods.iter().map(|(n, s)| (n.as_str(), s)));
        summary_table_csv(&cols)
    }

    /// Long-format FID table: `method,category,feature,fid`, including the
    /// self-split baseline and the joint five-feature FID.
    pub fn fid_csv(&self) -> String {
        let mut out = String::from("method,category,feature,fid\n");
        let rows = std::iter::once((SELF_SPLIT, &self.self_split)).chain(self.fid.iter().map(|(n, t)| (n.as_str(), t)));
        for (name, table) in rows {
            for (c, per) in &table.per_feature {
                for (f, v) in per {
                    let _ = writeln!(out, "{name},{c},{},{v:.6}", f.key());
                }
                let _ = writeln!(out, "{name},{c},joint,{:.6}", table.joint[c]);
            }
        }
        out
    }

    /// Writes `table2.csv`, `fid.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("table2.csv", self.table2_csv()),
            ("fid.csv", self.fid_csv()),
            ("report.json", serde_json::to_string_pretty(self)?),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
