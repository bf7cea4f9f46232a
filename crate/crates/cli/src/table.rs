//! Text tables and the summary CSV built from stored risk reports.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rhoreg::simlab::{RiskReport, SCENARIO_IDS};

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "scenario",
    "estimator",
    "R_n",
    "std_err",
    "excess_vs_rho",
    "iterQ1",
    "iterMed",
    "iterQ3",
    "iterMax",
    "mean_seconds",
    "failures",
];

fn opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map_or(String::new(), |x| format!("{x}"))
}

/// Writes one row per report. `mean_seconds` is left empty when timing is
/// not recorded.
pub fn write_summary<W: Write>(reports: &[RiskReport], record_timing: bool, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(SUMMARY_COLUMNS)?;
    for r in reports {
        let q = r.iter_quartiles;
        wtr.write_record([
            r.scenario.clone(),
            r.estimator.clone(),
            opt(r.r_n),
            opt(r.std_error),
            opt(r.excess_vs_rho),
            opt(q.map(|q| q[0])),
            opt(q.map(|q| q[1])),
            opt(q.map(|q| q[2])),
            opt(q.map(|q| q[3])),
            if record_timing {
                opt(Some(r.mean_seconds))
            } else {
                String::new()
            },
            r.failures.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Risk with four decimals.
pub fn format_risk(r: f64) -> String {
    format!("{r:.4}")
}

/// Relative excess as a signed percentage with two significant digits;
/// magnitudes below 0.1% print as `<+0.1%` (or `>-0.1%`).
pub fn format_excess(e: f64) -> String {
    if !e.is_finite() {
        return "n/a".into();
    }
    let p = 100.0 * e;
    if p.abs() < 0.1 {
        return if p >= 0.0 { "<+0.1%".into() } else { ">-0.1%".into() };
    }
    let sign = if p > 0.0 { '+' } else { '-' };
    let a = p.abs();
    let mag = a.log10().floor() as i32;
    let unit = 10f64.powi(mag - 1);
    let rounded = (a / unit).round() * unit;
    // rounding may carry into the next decade
    let mag = rounded.log10().floor() as i32;
    if mag >= 1 {
        format!("{sign}{rounded:.0}%")
    } else {
        let decimals = (1 - mag) as usize;
        format!("{sign}{rounded:.decimals$}%")
    }
}

/// Loads every `*.json` risk report in `dir`.
pub fn load_reports(dir: &Path) -> Result<Vec<RiskReport>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        // other JSON files may live next to the reports
        if let Ok(r) = serde_json::from_str::<RiskReport>(&text) {
            out.push(r);
        }
    }
    if out.is_empty() {
        bail!("no risk reports in {}", dir.display());
    }
    Ok(out)
}

fn scenario_order(reports: &[RiskReport]) -> Vec<String> {
    let mut ids: Vec<String> = SCENARIO_IDS
        .iter()
        .filter(|id| reports.iter().any(|r| r.scenario == **id))
        .map(|s| s.to_string())
        .collect();
    for r in reports {
        if !ids.contains(&r.scenario) {
            ids.push(r.scenario.clone());
        }
    }
    ids
}

fn pad(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut s = String::new();
    for (k, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let fill = widths[c] - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(fill))
                } else {
                    format!("{}{cell}", " ".repeat(fill))
                }
            })
            .collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
        if k == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            let _ = writeln!(s, "{}", "-".repeat(total));
        }
    }
    s
}

fn excess_cell(r: Option<&RiskReport>) -> String {
    match r {
        None => "-".into(),
        Some(r) => match r.excess_vs_rho {
            Some(e) => format_excess(e),
            None if r.failures > 0 => format!("fails {}/{}", r.failures, r.replications),
            None => "n/a".into(),
        },
    }
}

/// Risk table (R_n of the ρ-estimator and excesses of the competitors)
/// followed by the iteration quartiles of the ρ-estimator.
pub fn render(reports: &[RiskReport]) -> String {
    let find = |sc: &str, e: &str| reports.iter().find(|r| r.scenario == sc && r.estimator == e);
    let order = scenario_order(reports);
    let mut risk = vec![vec![
        "scenario".to_string(),
        "R_n(rho)".into(),
        "E(MLE)".into(),
        "E(median)".into(),
        "reps".into(),
    ]];
    let mut iters = vec![vec![
        "scenario".to_string(),
        "Q1".into(),
        "median".into(),
        "Q3".into(),
        "max".into(),
    ]];
    for sc in &order {
        let rho = find(sc, "rho");
        risk.push(vec![
            sc.clone(),
            rho.and_then(|r| r.r_n).map_or("-".into(), format_risk),
            excess_cell(find(sc, "mle")),
            excess_cell(find(sc, "median")),
            reports
                .iter()
                .find(|r| &r.scenario == sc)
                .map_or(String::new(), |r| r.replications.to_string()),
        ]);
        if let Some(q) = rho.and_then(|r| r.iter_quartiles) {
            let mut row = vec![sc.clone()];
            row.extend(q.iter().map(|v| format!("{v}")));
            iters.push(row);
        }
    }
    let mut s = String::from("Risk of the rho-estimator and excess of the competitors\n\n");
    s.push_str(&pad(&risk));
    if iters.len() > 1 {
        s.push_str("\nIterations of the rho-estimator\n\n");
        s.push_str(&pad(&iters));
    }
    s
}
