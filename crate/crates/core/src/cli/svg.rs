//! Two-panel line chart of a trace: estimate and relative error against
//! `log10 n`.

use std::fmt::Write;

use crate::estimators::RunResult;

const WIDTH: f64 = 640.0;
const PANEL: f64 = 220.0;
const MARGIN: f64 = 60.0;

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    Some(if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) })
}

fn panel(out: &mut String, top: f64, label: &str, pts: &[(f64, f64)], xr: (f64, f64)) {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{top}" width="{plot_w}" height="{PANEL}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{:.1}" font-size="12">{label}</text>"#, top - 6.0);
    let Some(yr) = bounds(pts.iter().map(|p| p.1)) else {
        return;
    };
    let _ = writeln!(
        out,
        r#"<text x="4" y="{:.1}" font-size="10">{:.3e}</text><text x="4" y="{:.1}" font-size="10">{:.3e}</text>"#,
        top + 10.0,
        yr.1,
        top + PANEL,
        yr.0
    );
    let path: Vec<String> = pts
        .iter()
        .map(|(x, y)| {
            let px = MARGIN + (x - xr.0) / (xr.1 - xr.0) * plot_w;
            let py = top + PANEL - (y - yr.0) / (yr.1 - yr.0) * PANEL;
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        path.join(" ")
    );
}

pub fn trace_chart(run: &RunResult) -> String {
    let est: Vec<(f64, f64)> = run
        .trace
        .points
        .iter()
        .map(|p| ((p.n as f64).log10(), p.estimate))
        .collect();
    let re: Vec<(f64, f64)> = run
        .trace
        .points
        .iter()
        .filter_map(|p| p.re.map(|r| ((p.n as f64).log10(), r)))
        .collect();
    let xr = bounds(est.iter().map(|p| p.0)).unwrap_or((0.0, 1.0));
    let height = 2.0 * PANEL + 3.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif">"#
    );
    panel(&mut out, MARGIN, &format!("{} estimate", run.method), &est, xr);
    panel(&mut out, 2.0 * MARGIN + PANEL, "relative error", &re, xr);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12">log10 n ({:.2} to {:.2})</text>"#,
        WIDTH / 2.0 - 60.0,
        height - 20.0,
        xr.0,
        xr.1
    );
    out.push_str("</svg>\n");
    out
}
