//! Prints category means of the channel statistics for a desk-scale dataset.

use chanforge::simkit::{build_dataset, standard_scenarios};
use chanforge::stats::{stats_summary, summary_table_csv, StatsConfig};

fn main() -> chanforge::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let ds = build_dataset(&standard_scenarios(1, true, seed), n, seed)?;
    let summary = stats_summary(&ds, &StatsConfig::default())?;
    print!("{}", summary_table_csv(&[("sim", &summary)]));
    Ok(())
}
