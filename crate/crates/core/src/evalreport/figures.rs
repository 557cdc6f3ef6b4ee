use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use plotters::prelude::*;
use plotters::style::colors::colormaps::ViridisRGB;
use plotters::style::FontStyle;

use super::{EvalReport, REFERENCE, SELF_SPLIT};
use crate::error::{Error, Result};
use crate::simkit::{Category, ChannelDataset};
use crate::stats::{CategoryStats, Feature, StatsSummary};

const FONT_CANDIDATES: [&str; 3] = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
];

/// Registers a TrueType font for labels once per process. `CHANFORGE_FONT`
/// overrides the search path. Without a font, figures are drawn unlabeled.
fn fonts_available() -> bool {
    static READY: OnceLock<bool> = OnceLock::new();
    *READY.get_or_init(|| {
        let env = std::env::var("CHANFORGE_FONT").ok();
        let candidates = env.iter().map(String::as_str).chain(FONT_CANDIDATES);
        for path in candidates {
            if let Ok(bytes) = std::fs::read(path) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        log::warn!("no usable font found; figures will have no text");
        false
    })
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

const PALETTE: [RGBColor; 8] = [
    RGBColor(0, 0, 0),
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
];

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn heatmap(ds: &ChannelDataset, index: usize, title: &str, path: &Path, text: bool) -> Result<()> {
    let ch = &ds.channels[index];
    let (t, d) = ch.power_db.dim();
    let delays = &ch.grid.delay_ns;
    let step = if d > 1 { delays[1] - delays[0] } else { 1.0 };
    let lo = ds.manifest.noise_floor_db;
    let hi = ch.power_db.iter().copied().fold(lo + 1.0, f64::max);

    let root = BitMapBackend::new(path, (720, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut builder = ChartBuilder::on(&root);
    builder.margin(12);
    if text {
        builder
            .caption(title, ("sans-serif", 20))
            .x_label_area_size(40)
            .y_label_area_size(56);
    }
    let x_end = delays[0] + step * d as f64;
    let mut chart = builder.build_cartesian_2d(delays[0]..x_end, 0.0..t as f64).map_err(plot_err)?;
    if text {
        chart
            .configure_mesh()
            .disable_mesh()
            .x_desc("delay (ns)")
            .y_desc("snapshot")
            .draw()
            .map_err(plot_err)?;
    }
    chart
        .draw_series(ch.power_db.indexed_iter().map(|((i, j), &v)| {
            let x0 = delays[0] + j as f64 * step;
            let h = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            Rectangle::new([(x0, i as f64), (x0 + step, i as f64 + 1.0)], ViridisRGB::get_color(h).filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn values(stats: &CategoryStats, f: Feature) -> Vec<f64> {
    match f {
        Feature::Rmsds => stats.snapshot_rmsds_ns.clone(),
        Feature::MultipathCount => stats.snapshot_multipath_count.clone(),
        _ => stats.feature_column(f),
    }
}

fn cdf(sources: &[(&str, &StatsSummary)], f: Feature, path: &Path, text: bool) -> Result<()> {
    let mut curves = Vec::new();
    for (k, (name, summary)) in sources.iter().enumerate() {
        for (&c, stats) in &summary.categories {
            let mut v: Vec<f64> = values(stats, f).into_iter().filter(|x| x.is_finite()).collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(f64::total_cmp);
            curves.push((format!("{name} {c}"), PALETTE[k % PALETTE.len()], c, v));
        }
    }
    let (mut lo, mut hi) = curves
        .iter()
        .flat_map(|c| [c.3[0], c.3[c.3.len() - 1]])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }

    let root = BitMapBackend::new(path, (720, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut builder = ChartBuilder::on(&root);
    builder.margin(12);
    if text {
        builder
            .caption(format!("CDF of {}", f.key()), ("sans-serif", 20))
            .x_label_area_size(40)
            .y_label_area_size(48);
    }
    let mut chart = builder.build_cartesian_2d(lo..hi, 0.0..1.0).map_err(plot_err)?;
    if text {
        chart.configure_mesh().x_desc(f.key()).y_desc("CDF").draw().map_err(plot_err)?;
    }
    for (label, color, category, v) in curves {
        let n = v.len() as f64;
        let pts = v.iter().enumerate().flat_map(|(i, &x)| [(x, i as f64 / n), (x, (i + 1) as f64 / n)]);
        let style = match category {
            Category::Weak => color.stroke_width(2),
            Category::Strong => color.stroke_width(1),
        };
        let series = chart.draw_series(LineSeries::new(pts, style)).map_err(plot_err)?;
        if text {
            series
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
    }
    if text {
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::LowerRight)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

/// One panel per feature; bars are methods, side by side per category.
fn fid_bars(report: &EvalReport, path: &Path, text: bool) -> Result<()> {
    let mut methods: Vec<(&str, &super::FidTable)> = vec![(SELF_SPLIT, &report.self_split)];
    methods.extend(report.fid.iter().map(|(n, t)| (n.as_str(), t)));
    let root = BitMapBackend::new(path, (1500, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let panels = root.split_evenly((1, Feature::ALL.len()));
    let n_bars = methods.len() * Category::ALL.len();
    for (panel, f) in panels.iter().zip(Feature::ALL) {
        let heights: Vec<f64> = Category::ALL
            .iter()
            .flat_map(|&c| methods.iter().map(move |(_, t)| t.get(c, f).unwrap_or(0.0)))
            .collect();
        let top = heights.iter().copied().filter(|h| h.is_finite()).fold(0.0, f64::max).max(1e-12) * 1.1;
        let mut builder = ChartBuilder::on(panel);
        builder.margin(10);
        if text {
            builder
                .caption(f.key(), ("sans-serif", 16))
                .x_label_area_size(24)
                .y_label_area_size(56);
        }
        let mut chart = builder.build_cartesian_2d(0.0..n_bars as f64 + 1.0, 0.0..top).map_err(plot_err)?;
        if text {
            chart.configure_mesh().disable_x_mesh().x_labels(0).y_desc("FID").draw().map_err(plot_err)?;
        }
        chart
            .draw_series(heights.iter().enumerate().map(|(i, &h)| {
                let gap = if i >= methods.len() { 1.0 } else { 0.0 };
                let x = i as f64 + gap;
                let color = PALETTE[(i % methods.len()) % PALETTE.len()];
                Rectangle::new([(x + 0.1, 0.0), (x + 0.9, h.min(top))], color.filled())
            }))
            .map_err(plot_err)?;
    }
    if text {
        let legend: Vec<String> = methods.iter().map(|(n, _)| n.to_string()).collect();
        let style = ("sans-serif", 14).into_font();
        for (k, name) in legend.iter().enumerate() {
            let y = 4 + 16 * k as i32;
            root.draw(&Rectangle::new([(1380, y + 2), (1392, y + 12)], PALETTE[k % PALETTE.len()].filled()))
                .map_err(plot_err)?;
            root.draw(&Text::new(name.clone(), (1396, y), style.clone())).map_err(plot_err)?;
        }
    }
    root.present().map_err(plot_err)
}

/// Writes PDP heatmaps (first channel of each category per source),
/// one CDF figure per statistic and the FID bar chart into `dir`.
/// Returns the written paths in a fixed order.
pub fn render_figures(
    report: &EvalReport,
    reference: &ChannelDataset,
    generated: &BTreeMap<String, ChannelDataset>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = fonts_available();
    let mut written = Vec::new();
    let sources = std::iter::once((REFERENCE, reference)).chain(generated.iter().map(|(n, d)| (n.as_str(), d)));
    for (name, ds) in sources {
        let by_cat = ds.indices_by_category();
        for c in Category::ALL {
            if let Some(&i) = by_cat.get(&c).and_then(|v| v.first()) {
                let path = dir.join(format!("pdp_{}_{c}.png", file_stem(name)));
                heatmap(ds, i, &format!("{name}, {c}"), &path, text)?;
                written.push(path);
            }
        }
    }
    let mut summaries: Vec<(&str, &StatsSummary)> = vec![(REFERENCE, &report.reference)];
    summaries.extend(report.methods.iter().map(|(n, s)| (n.as_str(), s)));
    for f in Feature::ALL {
        let path = dir.join(format!("cdf_{}.png", f.key()));
        cdf(&summaries, f, &path, text)?;
        written.push(path);
    }
    let path = dir.join("fid_bars.png");
    fid_bars(report, &path, text)?;
    written.push(path);
    Ok(written)
}
