//! Reward and selection-share curves as CSV plus static SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::experiment::{moving_average, share_windows, MetricsLog};
use crate::HarnessError;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#7f7f7f"];

/// Renders `series` (name, values) against their index as one SVG chart.
pub fn line_chart(title: &str, series: &[(&str, &[f64])]) -> String {
    let n = series.iter().map(|(_, ys)| ys.len()).max().unwrap_or(0);
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|(_, ys)| ys.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let x_of = |i: usize| MARGIN + (W - 2.0 * MARGIN) * i as f64 / (n.max(2) - 1) as f64;
    let y_of = |y: f64| H - MARGIN - (H - 2.0 * MARGIN) * (y - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for (y, label) in [(y0, lo), (y1, hi)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{label:.3}</text>"#,
            x0 - 4.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x1}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        y0 + 14.0,
        n.saturating_sub(1)
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| format!("{:.2},{:.2}", x_of(i), y_of(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            x1 - 90.0,
            y1 + 14.0 * (k as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Writes `<stem>_reward.{csv,svg}` and, when the log carries selection
/// telemetry, `<stem>_shares.{csv,svg}`. Returns the written paths.
pub fn emit_plots(log: &MetricsLog, dir: &Path, stem: &str, window: usize) -> Result<Vec<PathBuf>, HarnessError> {
    if log.is_empty() {
        return Err(HarnessError::Invalid("cannot plot an empty log".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let rewards = log.rewards();
    let avg = moving_average(&rewards, window);
    let mut csv = String::from("episode,reward,moving_average\n");
    for (r, (x, m)) in log.records.iter().zip(rewards.iter().zip(&avg)) {
        let _ = writeln!(csv, "{},{x},{m}", r.episode);
    }
    let mut out = vec![
        write(dir.join(format!("{stem}_reward.csv")), &csv)?,
        write(
            dir.join(format!("{stem}_reward.svg")),
            &line_chart(&format!("{stem}: reward, moving average over {window}"), &[("reward", &avg)]),
        )?,
    ];

    let shares = share_windows(&log.records, window);
    if !shares.is_empty() {
        let mut csv = String::from("window,share_a1,share_a2,share_other\n");
        for (i, s) in shares.iter().enumerate() {
            let _ = writeln!(csv, "{i},{},{},{}", s.share_a1, s.share_a2, s.share_other);
        }
        let a1: Vec<f64> = shares.iter().map(|s| s.share_a1).collect();
        let a2: Vec<f64> = shares.iter().map(|s| s.share_a2).collect();
        let other: Vec<f64> = shares.iter().map(|s| s.share_other).collect();
        out.push(write(dir.join(format!("{stem}_shares.csv")), &csv)?);
        out.push(write(
            dir.join(format!("{stem}_shares.svg")),
            &line_chart(
                &format!("{stem}: selection shares per {window} episodes"),
                &[("knowledge", &a1), ("rl", &a2), ("other", &other)],
            ),
        )?);
    }
    Ok(out)
}
