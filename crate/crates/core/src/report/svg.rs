use std::fmt::Write;

use crate::consensus::ConsensusCurve;
use crate::profile::PeriodMode;

use super::ColoringRow;

const PALETTE: [&str; 8] = [
    "#ff7f0e", "#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const DAY_NAMES: [&str; 7] = ["Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"];

pub fn cluster_fill(cluster: usize) -> &'static str {
    PALETTE[cluster % PALETTE.len()]
}

fn period_name(mode: PeriodMode, index: u8) -> String {
    match mode {
        PeriodMode::DayOfWeek => DAY_NAMES[index as usize % 7].to_string(),
        PeriodMode::TimeOfDay => format!("{index:02}"),
    }
}

/// One band per period, filled by cluster.
pub fn coloring_strip(rows: &[ColoringRow], mode: PeriodMode) -> String {
    let band = 40.0;
    let width = band * rows.len().max(1) as f64 + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="130" viewBox="0 0 {width} 130">"#
    );
    let _ = writeln!(
        svg,
        r#"  <text x="20" y="20" font-family="sans-serif" font-size="14">Clusters by {}</text>"#,
        mode.as_str().replace('_', " ")
    );
    for (i, row) in rows.iter().enumerate() {
        let x = 20.0 + band * i as f64;
        let _ = writeln!(
            svg,
            r#"  <rect x="{x}" y="30" width="{band}" height="50" fill="{}" stroke="white"><title>{} cluster {} mean {:.2} m/s</title></rect>"#,
            cluster_fill(row.cluster_id),
            period_name(mode, row.period_index),
            row.cluster_id,
            row.mean_speed
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="98" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            x + band / 2.0,
            period_name(mode, row.period_index)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Polyline of A(k) against k, with the chosen k circled.
pub fn consensus_plot(curve: &ConsensusCurve) -> String {
    let (w, h, margin) = (400.0, 260.0, 40.0);
    let ks: Vec<f64> = curve.points.iter().map(|p| p.k as f64).collect();
    let k_lo = ks.first().copied().unwrap_or(0.0);
    let k_hi = ks.last().copied().unwrap_or(1.0);
    let span = if k_hi > k_lo { k_hi - k_lo } else { 1.0 };
    let x = |k: f64| margin + (k - k_lo) / span * (w - 2.0 * margin);
    let y = |a: f64| h - margin - a.clamp(0.0, 1.0) * (h - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{margin}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - margin,
        w - margin,
        h - margin
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{margin}" y1="{margin}" x2="{margin}" y2="{}" stroke="black"/>"#,
        h - margin
    );
    let points: Vec<String> = curve
        .points
        .iter()
        .map(|p| format!("{:.2},{:.2}", x(p.k as f64), y(p.area)))
        .collect();
    let _ = writeln!(
        svg,
        r##"  <polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        points.join(" ")
    );
    for p in &curve.points {
        let _ = writeln!(
            svg,
            r#"  <text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            x(p.k as f64),
            h - margin + 16.0,
            p.k
        );
    }
    if let Some(p) = curve.points.iter().find(|p| p.k == curve.chosen_k) {
        let _ = writeln!(
            svg,
            r##"  <circle cx="{:.2}" cy="{:.2}" r="6" fill="none" stroke="#d62728" stroke-width="2"><title>chosen k = {}</title></circle>"##,
            x(p.k as f64),
            y(p.area),
            p.k
        );
    }
    let _ = writeln!(
        svg,
        r#"  <text x="{margin}" y="20" font-family="sans-serif" font-size="14">Consensus CDF area by k (chosen k = {})</text>"#,
        curve.chosen_k
    );
    svg.push_str("</svg>\n");
    svg
}
