use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use tss_core::TssError;

use crate::commands::train::EPOCHS_FILE;
use crate::error::{CliError, CliResult};
use crate::manifest::write_file;

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Directory searched recursively for `epochs.csv` files.
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Plotted columns: pseudo-label accuracy first, then the losses.
pub const PANELS: [(&str, &str); 6] = [
    ("pseudo_acc", "pseudo-label accuracy (%)"),
    ("l_cls", "classification loss"),
    ("l_sm", "smoothing loss"),
    ("l_aff", "affinity loss"),
    ("l_cont", "continuity loss"),
    ("l_pse", "pseudo-label loss"),
];

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 180.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const LEGEND_HEIGHT: f64 = 30.0;
const PANEL_GAP: f64 = 40.0;

/// Seed-averaged values per epoch for one mode: column → epoch → mean.
pub type Series = BTreeMap<&'static str, BTreeMap<usize, f64>>;

fn find_logs(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| TssError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| TssError::io(dir, err)))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_logs(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == EPOCHS_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// The series a log file belongs to: the first directory below the log root.
fn mode_of(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file);
    let mut parts = rel.components();
    match (parts.next(), parts.next()) {
        (Some(first), Some(_)) => first.as_os_str().to_string_lossy().into_owned(),
        _ => root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into()),
    }
}

/// One log row: the epoch and the non-empty plotted columns.
type LogRow = (usize, Vec<(&'static str, f64)>);

/// Per mode and column: epoch to (sum over seeds, seed count).
type SeedSums = BTreeMap<String, BTreeMap<&'static str, BTreeMap<usize, (f64, usize)>>>;

fn read_log(path: &Path) -> CliResult<Vec<LogRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let epoch_col = column("epoch");
    let required = [("epoch", epoch_col), ("pseudo_acc", column("pseudo_acc"))];
    let missing: Vec<&str> = required
        .iter()
        .filter(|(_, c)| c.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Schema(format!(
            "{} lacks column(s) {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let epoch_col = epoch_col.unwrap();
    let cols: Vec<(&'static str, usize)> = PANELS
        .iter()
        .filter_map(|&(n, _)| column(n).map(|c| (n, c)))
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let bad =
            |field: &str| CliError::Schema(format!("{}: bad value `{field}`", path.display()));
        let epoch_field = record.get(epoch_col).unwrap_or("");
        let epoch: usize = epoch_field.parse().map_err(|_| bad(epoch_field))?;
        let mut values = Vec::new();
        for &(name, c) in &cols {
            let field = record.get(c).unwrap_or("").trim();
            if !field.is_empty() {
                values.push((name, field.parse::<f64>().map_err(|_| bad(field))?));
            }
        }
        rows.push((epoch, values));
    }
    Ok(rows)
}

/// Reads every log under `dir` and averages the seeds of each mode.
pub fn load_series(dir: &Path) -> CliResult<BTreeMap<String, Series>> {
    if !dir.is_dir() {
        return Err(CliError::Schema(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut files = Vec::new();
    find_logs(dir, &mut files)?;
    if files.is_empty() {
        return Err(CliError::Schema(format!(
            "no {EPOCHS_FILE} under {}",
            dir.display()
        )));
    }
    let mut sums: SeedSums = BTreeMap::new();
    for file in &files {
        let mode = mode_of(dir, file);
        for (epoch, values) in read_log(file)? {
            for (col, v) in values {
                let slot = sums
                    .entry(mode.clone())
                    .or_default()
                    .entry(col)
                    .or_default()
                    .entry(epoch)
                    .or_insert((0.0, 0));
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(mode, cols)| {
            let series = cols
                .into_iter()
                .map(|(col, points)| {
                    (
                        col,
                        points
                            .into_iter()
                            .map(|(e, (s, n))| (e, s / n as f64))
                            .collect(),
                    )
                })
                .collect();
            (mode, series)
        })
        .collect())
}

/// One panel per column with data, one polyline per mode and panel.
pub fn render_svg(series: &BTreeMap<String, Series>) -> String {
    let panels: Vec<(&str, &str)> = PANELS
        .iter()
        .copied()
        .filter(|(col, _)| {
            series
                .values()
                .any(|s| s.get(col).is_some_and(|p| !p.is_empty()))
        })
        .collect();
    let epochs: Vec<usize> = series
        .values()
        .flat_map(|s| s.values().flat_map(|p| p.keys().copied()))
        .collect();
    let (e_lo, e_hi) = (
        epochs.iter().copied().min().unwrap_or(0) as f64,
        epochs.iter().copied().max().unwrap_or(1) as f64,
    );
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let x_of = |e: usize| {
        let span = if e_hi > e_lo { e_hi - e_lo } else { 1.0 };
        MARGIN_LEFT + (e as f64 - e_lo) / span * plot_w
    };
    let height = LEGEND_HEIGHT + panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP) + 10.0;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<g class="legend">"#).unwrap();
    for (i, mode) in series.keys().enumerate() {
        let x = MARGIN_LEFT + i as f64 * 100.0;
        let color = PALETTE[i % PALETTE.len()];
        writeln!(
            s,
            r#"<g class="legend-entry"><line x1="{x:.2}" y1="15" x2="{:.2}" y2="15" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="19">{mode}</text></g>"#,
            x + 20.0,
            x + 24.0
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();

    for (p, (col, title)) in panels.iter().enumerate() {
        let top = LEGEND_HEIGHT + p as f64 * (PANEL_HEIGHT + PANEL_GAP) + 20.0;
        let bottom = top + PANEL_HEIGHT;
        let values: Vec<f64> = series
            .values()
            .filter_map(|s| s.get(col))
            .flat_map(|pts| pts.values().copied())
            .collect();
        let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let y_of = |v: f64| bottom - (v - lo) / (hi - lo) * PANEL_HEIGHT;
        writeln!(s, r#"<g class="panel" data-column="{col}">"#).unwrap();
        writeln!(
            s,
            r#"<text x="{MARGIN_LEFT}" y="{:.2}">{title}</text>"#,
            top - 6.0
        )
        .unwrap();
        writeln!(
            s,
            r##"<rect x="{MARGIN_LEFT}" y="{top:.2}" width="{plot_w:.2}" height="{PANEL_HEIGHT}" fill="none" stroke="#999"/>"##
        )
        .unwrap();
        writeln!(s, r#"<text x="4" y="{:.2}">{hi:.3}</text>"#, top + 10.0).unwrap();
        writeln!(s, r#"<text x="4" y="{bottom:.2}">{lo:.3}</text>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{MARGIN_LEFT}" y="{:.2}">epoch {e_lo}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{e_hi}</text>"#,
            bottom + 14.0,
            WIDTH - MARGIN_RIGHT,
            bottom + 14.0
        )
        .unwrap();
        for (i, (mode, ser)) in series.iter().enumerate() {
            let Some(points) = ser.get(col) else { continue };
            if points.is_empty() {
                continue;
            }
            let coords: Vec<String> = points
                .iter()
                .map(|(&e, &v)| format!("{:.2},{:.2}", x_of(e), y_of(v)))
                .collect();
            writeln!(
                s,
                r#"<polyline class="series" data-mode="{mode}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                PALETTE[i % PALETTE.len()],
                coords.join(" ")
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}

pub fn run(args: &PlotArgs) -> CliResult<()> {
    let series = load_series(&args.logs)?;
    write_file(&args.out, render_svg(&series).as_bytes())?;
    println!("wrote {} series to {}", series.len(), args.out.display());
    Ok(())
}
