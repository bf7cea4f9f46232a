//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The default fast mode uses 100 replications for the well-specified and
//! separable scenarios and fewer for the slow ones (see `Plan`). Set
//! `RHOREG_ACCEPTANCE=full` for 500 replications everywhere.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rhoreg::simlab::{
    approximation_error, excess, holder_scenario_fit, risk_mc_compare, Estimator, McConfig,
    RiskReport, Scenario,
};
use rhoreg::{RhoConfig, KAPPA};

const SEED: u64 = 20_240_601;

struct Plan {
    full: bool,
    well_specified: usize,
    outlier: usize,
    separable: usize,
    contamination: usize,
    holder: usize,
}

impl Plan {
    fn from_env() -> Plan {
        let full = std::env::var("RHOREG_ACCEPTANCE").is_ok_and(|v| v == "full");
        if full {
            Plan {
                full,
                well_specified: 500,
                outlier: 500,
                separable: 100,
                contamination: 500,
                holder: 100,
            }
        } else {
            Plan {
                full,
                well_specified: 100,
                outlier: 30,
                separable: 100,
                contamination: 10,
                holder: 20,
            }
        }
    }
}

struct Outcome {
    lines: Vec<(bool, String)>,
}

impl Outcome {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {detail}");
        self.lines.push((pass, id.to_string()));
    }
}

fn run(id: &str, reps: usize, estimators: &[Estimator]) -> Vec<RiskReport> {
    let s = Scenario::builtin(id).expect("builtin scenario");
    let mut cfg = McConfig::for_scenario(&s, SEED);
    cfg.replications = reps;
    let t = Instant::now();
    let out = risk_mc_compare(&s, estimators, &cfg).expect("monte carlo run");
    eprintln!("  {id}: {reps} replications in {:.0}s", t.elapsed().as_secs_f64());
    out
}

fn get<'a>(reports: &'a [RiskReport], e: Estimator) -> &'a RiskReport {
    reports.iter().find(|r| r.estimator == e.id()).expect("estimator report")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.4e}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{:+.1}%", 100.0 * x))
}

/// Fraction of ρ-fits with at most `k` iterations.
fn share_within(r: &RiskReport, k: usize) -> f64 {
    let its: Vec<usize> = r.per_replication.iter().filter_map(|o| o.iterations).collect();
    its.iter().filter(|&&i| i <= k).count() as f64 / its.len().max(1) as f64
}

fn main() -> ExitCode {
    let plan = Plan::from_env();
    println!(
        "acceptance ({} mode, seed {SEED})",
        if plan.full { "full" } else { "fast" }
    );
    let mut out = Outcome { lines: Vec::new() };
    let mut all_rho: Vec<RiskReport> = Vec::new();

    // Criterion 8 runs first: it is quick and guards everything else.
    let props: [(&str, common::Check); 7] = [
        ("psi identities", common::check_psi_identities()),
        ("T antisymmetry and |T| <= n", common::check_t_properties(200, 1)),
        ("upsilon >= 0", common::check_upsilon_nonnegative(20, 2)),
        ("Hellinger closed form", common::check_hellinger_closed_form(20, 3)),
        ("MLE gradient", common::check_mle_gradient(30, 4)),
        ("mixture bound", common::check_mixture_bound(50, 5)),
        ("risk_mc replay", common::check_replay()),
    ];
    let failed: Vec<String> = props
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    out.record(
        "8 property suites",
        failed.is_empty(),
        if failed.is_empty() {
            "all 7 suites hold".into()
        } else {
            failed.join("; ")
        },
    );

    // Criteria 1, 2, 3 and the first part of 7.
    let ws = [
        ("bernoulli_ws", vec![Estimator::Rho, Estimator::Mle]),
        ("poisson_ws", vec![Estimator::Rho, Estimator::Mle, Estimator::Median]),
        ("exponential_ws", vec![Estimator::Rho, Estimator::Mle, Estimator::Median]),
    ];
    let ws_reports: Vec<Vec<RiskReport>> = ws
        .iter()
        .map(|(id, es)| run(id, plan.well_specified, es))
        .collect();

    let mut ok1 = true;
    let mut d1 = Vec::new();
    for ((id, _), reps) in ws.iter().zip(&ws_reports) {
        let r = get(reps, Estimator::Rho);
        let (m, se) = (r.r_n.unwrap_or(f64::NAN), r.std_error.unwrap_or(f64::NAN));
        let pass = if plan.full {
            (0.0010..=0.0022).contains(&m)
        } else {
            m + 3.0 * se >= 0.0010 && m - 3.0 * se <= 0.0022
        };
        ok1 &= pass;
        d1.push(format!("{id} R_n={m:.5} (se {se:.1e})"));
    }
    out.record("1 well-specified risk in [0.0010, 0.0022]", ok1, d1.join(", "));

    let mut ok2 = true;
    let mut d2 = Vec::new();
    for ((id, _), reps) in ws.iter().zip(&ws_reports) {
        let e = get(reps, Estimator::Mle).excess_vs_rho;
        ok2 &= e.is_some_and(|v| v <= 0.02);
        d2.push(format!("{id} E(MLE)={}", pct(e)));
    }
    out.record("2 MLE excess <= +2% when exact", ok2, d2.join(", "));

    let e_pois = get(&ws_reports[1], Estimator::Median).excess_vs_rho;
    let e_exp = get(&ws_reports[2], Estimator::Median).excess_vs_rho;
    out.record(
        "3 median excess (Poisson >= +200%, exponential >= +100%)",
        e_pois.is_some_and(|v| v >= 2.0) && e_exp.is_some_and(|v| v >= 1.0),
        format!("Poisson {}, exponential {}", pct(e_pois), pct(e_exp)),
    );

    // Criterion 4.
    let outl = [
        ("bernoulli_outlier", vec![Estimator::Rho, Estimator::Mle]),
        ("poisson_outlier", vec![Estimator::Rho, Estimator::Mle, Estimator::Median]),
        ("exponential_outlier", vec![Estimator::Rho, Estimator::Mle, Estimator::Median]),
    ];
    let outl_reports: Vec<Vec<RiskReport>> = outl
        .iter()
        .map(|(id, es)| run(id, plan.outlier, es))
        .collect();
    let mut ok4 = true;
    let mut d4 = Vec::new();
    for ((id, _), reps) in outl.iter().zip(&outl_reports) {
        let rho = get(reps, Estimator::Rho).r_n;
        // a diverged MLE is scored at its last Newton iterate
        let mle = get(reps, Estimator::Mle).r_n_with_divergent;
        let e = match (mle, rho) {
            (Some(a), Some(b)) => excess(a, b).ok(),
            _ => None,
        };
        ok4 &= rho.is_some_and(|v| (0.0010..=0.0028).contains(&v)) && e.is_some_and(|v| v >= 3.0);
        d4.push(format!("{id} R_n={} E(MLE)={}", fmt_opt(rho), pct(e)));
    }
    out.record(
        "4 outlier rho-risk in [0.0010, 0.0028], MLE excess >= +300%",
        ok4,
        d4.join(", "),
    );

    // Criterion 5.
    let sep = run("bernoulli_separable", plan.separable, &[Estimator::Rho, Estimator::Mle]);
    let nonexist = get(&sep, Estimator::Mle)
        .per_replication
        .iter()
        .filter(|o| o.failure.as_deref() == Some("nonexistence"))
        .count();
    let share = nonexist as f64 / plan.separable as f64;
    let rho_sep = get(&sep, Estimator::Rho).r_n;
    out.record(
        "5 separable logit: MLE nonexistence >= 95%, rho-risk <= 5e-4",
        share >= 0.95 && rho_sep.is_some_and(|v| v <= 5e-4),
        format!("nonexistence {nonexist}/{}, R_n={}", plan.separable, fmt_opt(rho_sep)),
    );

    // Criterion 6.
    let contam = [
        ("poisson_contam", 0.018, 0.042),
        ("exponential_contam", 0.025, 0.060),
    ];
    let mut ok6 = true;
    let mut d6 = Vec::new();
    let mut contam_reports = Vec::new();
    for (id, lo, hi) in contam {
        let reps = run(
            id,
            plan.contamination,
            &[Estimator::Rho, Estimator::Mle, Estimator::Median],
        );
        let rho = get(&reps, Estimator::Rho).r_n;
        let e = get(&reps, Estimator::Mle).excess_vs_rho;
        let s = Scenario::builtin(id).unwrap();
        let approx = approximation_error(&s, SEED).unwrap_or(f64::NAN);
        ok6 &= rho.is_some_and(|v| (lo..=hi).contains(&v))
            && e.is_some_and(|v| v >= 1.5)
            && (approx - 0.025).abs() <= 0.01;
        d6.push(format!(
            "{id} R_n={} (target [{lo}, {hi}]) E(MLE)={} E(median)={} h2(P*,P_theta*)={approx:.4}",
            fmt_opt(rho),
            pct(e),
            pct(get(&reps, Estimator::Median).excess_vs_rho)
        ));
        contam_reports.push(reps);
    }
    out.record("6 contamination risks and approximation error", ok6, d6.join(", "));

    // Criterion 7.
    let ws_share: Vec<f64> = ws_reports
        .iter()
        .map(|r| share_within(get(r, Estimator::Rho), 3))
        .collect();
    let outl_median: Vec<f64> = outl_reports
        .iter()
        .map(|r| get(r, Estimator::Rho).iter_quartiles.map_or(f64::NAN, |q| q[1]))
        .collect();
    for group in [&ws_reports, &outl_reports, &contam_reports] {
        for r in group.iter() {
            all_rho.push(get(r, Estimator::Rho).clone());
        }
    }
    all_rho.push(get(&sep, Estimator::Rho).clone());
    let (fits, certified, worst) = all_rho.iter().fold((0, 0, 0.0f64), |(f, c, w), r| {
        (
            f + r.per_replication.iter().filter(|o| o.upsilon.is_some()).count(),
            c + r.certified.unwrap_or(0),
            w.max(r.max_upsilon.unwrap_or(0.0)),
        )
    });
    let uncertified: Vec<String> = all_rho
        .iter()
        .filter_map(|r| {
            let k = r.per_replication.iter().filter(|o| o.upsilon.is_some()).count()
                - r.certified.unwrap_or(0);
            (k > 0).then(|| format!("{} x{k}", r.scenario))
        })
        .collect();
    out.record(
        "7 iteration counts and certificate",
        ws_share.iter().all(|s| *s >= 0.9)
            && outl_median.iter().all(|m| *m <= 4.0)
            && certified == fits,
        format!(
            "share <= 3 iterations {ws_share:?}, outlier medians {outl_median:?}, \
             certified {certified}/{fits} (max upsilon {worst:.2}, bound {:.2}){}",
            KAPPA / 25.0,
            if uncertified.is_empty() {
                String::new()
            } else {
                format!(", uncertified: {}", uncertified.join(", "))
            }
        ),
    );

    // Criterion 9.
    let ns = [250usize, 500, 1000, 2000];
    let mut ok9 = true;
    let mut d9 = Vec::new();
    let t = Instant::now();
    for alpha in [0.5, 1.0] {
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let risk = (0..plan.holder)
                    .map(|r| {
                        let seed = rhoreg::simlab::replication_seed(SEED, "holder", r * 10_000 + n);
                        holder_scenario_fit(alpha, 1.0, n, seed, 10_000, &RhoConfig::default())
                            .expect("holder fit")
                            .risk
                    })
                    .sum::<f64>()
                    / plan.holder as f64;
                ((n as f64).ln(), risk.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let bound = -alpha / (1.0 + alpha) + 0.15;
        ok9 &= slope <= bound;
        d9.push(format!("alpha={alpha} slope {slope:.3} (<= {bound:.3})"));
    }
    eprintln!("  holder sweep in {:.0}s", t.elapsed().as_secs_f64());
    out.record("9 Holder rate sweep", ok9, d9.join(", "));

    let failed: Vec<&str> = out
        .lines
        .iter()
        .filter(|(p, _)| !p)
        .map(|(_, id)| id.as_str())
        .collect();
    println!(
        "{} of {} criteria passed",
        out.lines.len() - failed.len(),
        out.lines.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(" | "));
        ExitCode::FAILURE
    }
}
