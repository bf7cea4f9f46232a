//! The `fit`, `simulate` and `table` subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rhoreg::baselines::{median_estimate, mle};
use rhoreg::models::SearchBox;
use rhoreg::numeric::derive_seed;
use rhoreg::simlab::{
    generate, replication_seed, rho_start, risk_mc_compare, Estimator, McConfig, RiskReport,
    Scenario,
};
use rhoreg::{rho_estimate, Dataset, ModelKind, NaturalExpFamily, RegressionModel};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dataset_io::{load_dataset, save_dataset};
use crate::exit;
use crate::table::{load_reports, render, write_summary};

/// Where `fit` takes its data from.
pub enum DataSource {
    File(PathBuf),
    Scenario(String),
}

pub struct FitRequest {
    pub config: ExperimentConfig,
    pub source: DataSource,
    pub estimator: Estimator,
    pub out: Option<PathBuf>,
    pub write_data: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitMeta<'a> {
    estimator: &'a str,
    family: &'a str,
    model: &'a str,
    source: String,
    n: usize,
    covariate_dim: usize,
    seed: u64,
}

#[derive(Serialize)]
struct FitReport<'a, T: Serialize> {
    #[serde(flatten)]
    meta: &'a FitMeta<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<Vec<f64>>,
    result: T,
}

fn with_box(model: RegressionModel, half_width: Option<f64>) -> Result<RegressionModel> {
    match half_width {
        Some(w) if model.kind != ModelKind::PiecewiseConstant => {
            let p = model.dim_p;
            Ok(model.with_search_box(SearchBox::uniform(p, -w, w))?)
        }
        _ => Ok(model),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")
            .with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn model_for_file(cfg: &ExperimentConfig, data: &Dataset) -> Result<(NaturalExpFamily, RegressionModel)> {
    let fam_id = cfg
        .family
        .as_deref()
        .context("fitting a data file needs a family (--family or `family` in the config)")?;
    let fam = NaturalExpFamily::from_id(fam_id)?;
    let kind = match cfg.model.as_deref() {
        Some(m) => ModelKind::from_id(m)?,
        None => ModelKind::default_for(&fam),
    };
    if kind == ModelKind::PiecewiseConstant {
        bail!("piecewise-constant models are fitted through the holder_poisson scenario");
    }
    let model = with_box(RegressionModel::link(kind, data.dim())?, cfg.box_half_width)?;
    Ok((fam, model))
}

/// Runs one estimator on one dataset and prints (or writes) the JSON
/// result. Returns the exit code.
pub fn fit(req: &FitRequest) -> Result<u8> {
    let cfg = &req.config;
    let (data, fam, model, source) = match &req.source {
        DataSource::File(p) => {
            let data = load_dataset(p)?;
            let (fam, model) = model_for_file(cfg, &data)?;
            (data, fam, model, p.display().to_string())
        }
        DataSource::Scenario(id) => {
            let mut s = Scenario::builtin(id)?;
            if let Some(n) = cfg.n {
                s.n = n;
            }
            s.model = with_box(s.model, cfg.box_half_width)?;
            let data = generate(&s, replication_seed(cfg.seed, id, 0))?;
            (data, s.family, s.model, format!("scenario {id}"))
        }
    };
    if let Some(p) = &req.write_data {
        save_dataset(&data, p)?;
    }
    if !req.estimator.supports(&fam) {
        bail!(
            "estimator {} is not available for the {} family",
            req.estimator.id(),
            fam.id()
        );
    }
    let meta = FitMeta {
        estimator: req.estimator.id(),
        family: fam.id(),
        model: model.kind.id(),
        source,
        n: data.len(),
        covariate_dim: data.dim(),
        seed: cfg.seed,
    };
    let out = req.out.as_deref();
    let median = || {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "median", 0));
        median_estimate(&data, &fam, &model, &cfg.median_settings(), &mut rng)
    };
    match req.estimator {
        Estimator::Mle => {
            let r = mle(&data, &fam, &model)?;
            let code = if r.eta_hat.is_none() {
                eprintln!(
                    "{}",
                    if r.nonexistence {
                        "the maximum likelihood estimator does not exist on this dataset"
                    } else {
                        "Newton iterations did not converge"
                    }
                );
                exit::NONEXISTENCE
            } else {
                exit::OK
            };
            emit(&FitReport { meta: &meta, start: None, result: r }, out)?;
            Ok(code)
        }
        Estimator::Median => {
            let r = median()?;
            emit(&FitReport { meta: &meta, start: None, result: r }, out)?;
            Ok(exit::OK)
        }
        Estimator::Rho => {
            let med = if fam == NaturalExpFamily::Bernoulli || model.kind == ModelKind::PiecewiseConstant {
                None
            } else {
                Some(median()?)
            };
            let eta0 = rho_start(&data, &fam, &model, med.as_ref().map(|m| m.eta.as_slice()))?;
            let rc = rhoreg::RhoConfig {
                seed: derive_seed(cfg.seed, "rho", 0),
                ..cfg.rho_config()
            };
            let r = rho_estimate(&data, &fam, &model, &eta0, &rc)?;
            emit(&FitReport { meta: &meta, start: Some(eta0), result: r }, out)?;
            Ok(exit::OK)
        }
    }
}

pub fn install_thread_pool(cfg: &ExperimentConfig) -> Result<()> {
    if let Some(k) = cfg.thread_count()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn scrub_timing(r: &mut RiskReport) {
    r.mean_seconds = 0.0;
    for o in r.per_replication.iter_mut() {
        o.seconds = 0.0;
    }
}

/// Runs every configured (scenario, estimator) pair, writing one JSON
/// report per pair and `summary.csv` into the output directory.
pub fn simulate(cfg: &ExperimentConfig, default_out: &Path) -> Result<u8> {
    if cfg.scenarios.is_empty() {
        bail!("the config lists no scenarios");
    }
    let dir = cfg.prepare_output(default_out)?;
    let estimators = cfg.estimator_list()?;
    let mut all = Vec::new();
    let mut failed = 0;
    for id in &cfg.scenarios {
        let mut s = Scenario::builtin(id)?;
        if let Some(n) = cfg.n {
            s.n = n;
        }
        s.model = with_box(s.model, cfg.box_half_width)?;
        let chosen: Vec<Estimator> = estimators
            .iter()
            .copied()
            .filter(|e| {
                let ok = e.supports(&s.family)
                    && !(*e != Estimator::Rho && s.model.kind == ModelKind::PiecewiseConstant);
                if !ok {
                    eprintln!("{id}: skipping {} (not defined for this model)", e.id());
                }
                ok
            })
            .collect();
        let mc = McConfig {
            replications: cfg.replications_for(&s),
            quadrature_n: cfg.quadrature_n.unwrap_or(s.quadrature_n),
            seed: cfg.seed,
            rho: cfg.rho_config(),
            median: cfg.median_settings(),
        };
        eprintln!("{id}: {} replications", mc.replications);
        match risk_mc_compare(&s, &chosen, &mc) {
            Ok(reports) => {
                for mut r in reports {
                    if !cfg.record_timing {
                        scrub_timing(&mut r);
                    }
                    let path = dir.join(format!("{}.{}.json", r.scenario, r.estimator));
                    std::fs::write(&path, serde_json::to_string_pretty(&r)? + "\n")
                        .with_context(|| format!("writing {}", path.display()))?;
                    all.push(r);
                }
            }
            Err(e) => {
                eprintln!("{id}: {e}");
                failed += 1;
            }
        }
    }
    let summary = dir.join("summary.csv");
    let f = std::fs::File::create(&summary)
        .with_context(|| format!("creating {}", summary.display()))?;
    write_summary(&all, cfg.record_timing, std::io::BufWriter::new(f))?;
    eprintln!("wrote {} reports and {}", all.len(), summary.display());
    Ok(if failed == 0 { exit::OK } else { exit::ERROR })
}

pub fn table(dir: &Path) -> Result<u8> {
    let reports = load_reports(dir)?;
    print!("{}", render(&reports));
    Ok(exit::OK)
}
