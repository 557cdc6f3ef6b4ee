use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::simkit::{db_to_linear, Pdp};

/// Correlation between two linear-power delay profiles: the inner product
/// divided by the larger of the two energies. Lies in `[0, 1]` for
/// non-negative inputs.
pub fn tpcc(p_i: &[f64], p_j: &[f64]) -> Result<f64> {
    if p_i.len() != p_j.len() {
        return Err(Error::shape(&[p_i.len()], &[p_j.len()]));
    }
    let cross: f64 = p_i.iter().zip(p_j).map(|(a, b)| a * b).sum();
    let e_i: f64 = p_i.iter().map(|a| a * a).sum();
    let e_j: f64 = p_j.iter().map(|b| b * b).sum();
    if e_i <= 0.0 || e_j <= 0.0 {
        return Err(Error::UndefinedCorrelation("all-zero power profile".into()));
    }
    Ok(cross / e_i.max(e_j))
}

/// Bins zeroed by LOS exclusion: the LOS bin and one guard bin either side.
pub fn los_guard(los_bin: usize, n_bins: usize) -> std::ops::RangeInclusive<usize> {
    los_bin.saturating_sub(1)..=(los_bin + 1).min(n_bins - 1)
}

/// Linear power of a channel with the LOS region optionally zeroed.
pub fn linear_for_correlation(channel: &Pdp, exclude_los: bool) -> Array2<f64> {
    let mut lin = channel.power_db.mapv(db_to_linear);
    if exclude_los {
        for b in los_guard(channel.los_bin_index(), channel.n_delay_bins()) {
            lin.column_mut(b).fill(0.0);
        }
    }
    lin
}

/// TPCC between every pair of rows of a linear-power matrix.
pub fn tpcc_matrix_linear(lin: &Array2<f64>) -> Result<Array2<f64>> {
    let gram = lin.dot(&lin.t());
    let energy: Vec<f64> = gram.diag().to_vec();
    if let Some(t) = energy.iter().position(|&e| e <= 0.0) {
        return Err(Error::UndefinedCorrelation(format!("snapshot {t} has no power")));
    }
    let n = energy.len();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            1.0
        } else {
            gram[[i, j]] / energy[i].max(energy[j])
        }
    }))
}

pub fn tpcc_matrix(channel: &Pdp, exclude_los: bool) -> Result<Array2<f64>> {
    tpcc_matrix_linear(&linear_for_correlation(channel, exclude_los))
}

/// How the stationarity interval of a channel is read off its TPCC matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WssConvention {
    /// For each reference snapshot, the time until correlation first drops
    /// below the threshold (or the end of the record); averaged over references.
    #[default]
    FirstCrossingMean,
    /// Greedy partition into consecutive regions whose snapshots all stay
    /// above the threshold relative to the region start; mean region length.
    DisjointRegions,
}

/// Per-reference first-crossing intervals, in seconds.
pub fn wss_intervals_from_matrix(tpcc: &Array2<f64>, threshold: f64, snapshot_dt_s: f64) -> Vec<f64> {
    let n = tpcc.nrows();
    tpcc.axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| first_crossing(row, i, threshold).map_or(n - i, |j| j - i) as f64 * snapshot_dt_s)
        .collect()
}

fn first_crossing(row: ArrayView1<'_, f64>, start: usize, threshold: f64) -> Option<usize> {
    (start + 1..row.len()).find(|&j| row[j] < threshold)
}

/// Lengths of the greedy disjoint stationarity regions, in seconds.
pub fn wss_regions_from_matrix(tpcc: &Array2<f64>, threshold: f64, snapshot_dt_s: f64) -> Vec<f64> {
    let n = tpcc.nrows();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = first_crossing(tpcc.row(start), start, threshold).unwrap_or(n);
        out.push((end - start) as f64 * snapshot_dt_s);
        start = end;
    }
    out
}

pub fn wss_intervals(channel: &Pdp, threshold: f64, snapshot_dt_s: f64) -> Result<Vec<f64>> {
    Ok(wss_intervals_from_matrix(&tpcc_matrix(channel, true)?, threshold, snapshot_dt_s))
}

/// Channel-level WSS interval under the chosen convention (LOS excluded).
pub fn wss_interval(channel: &Pdp, threshold: f64, convention: WssConvention) -> Result<f64> {
    let m = tpcc_matrix(channel, true)?;
    let dt = channel.grid.snapshot_dt_s();
    let values = match convention {
        WssConvention::FirstCrossingMean => wss_intervals_from_matrix(&m, threshold, dt),
        WssConvention::DisjointRegions => wss_regions_from_matrix(&m, threshold, dt),
    };
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
