//! Experiment configuration read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rhoreg::baselines::OptimizerSettings;
use rhoreg::simlab::{Estimator, Scenario, FAST_REPLICATIONS};
use rhoreg::RhoConfig;
use serde::{Deserialize, Serialize};

/// Environment variable that sets the worker count, overriding `threads`.
pub const THREADS_ENV: &str = "RHOREG_THREADS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOverrides {
    pub population: Option<usize>,
    pub sigma0_fraction: Option<f64>,
    pub max_evals: Option<usize>,
    pub restarts: Option<usize>,
    pub tol_fun: Option<f64>,
    pub tol_x: Option<f64>,
}

impl OptimizerOverrides {
    pub fn apply(&self, base: &OptimizerSettings) -> OptimizerSettings {
        OptimizerSettings {
            population: self.population.or(base.population),
            sigma0_fraction: self.sigma0_fraction.unwrap_or(base.sigma0_fraction),
            max_evals: self.max_evals.unwrap_or(base.max_evals),
            restarts: self.restarts.unwrap_or(base.restarts),
            tol_fun: self.tol_fun.unwrap_or(base.tol_fun),
            tol_x: self.tol_x.unwrap_or(base.tol_x),
            stream: base.stream,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoOverrides {
    pub early_stop: Option<f64>,
    pub max_iters: Option<usize>,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub scenarios: Vec<String>,
    pub estimators: Vec<String>,
    pub n: Option<usize>,
    pub replications: Option<usize>,
    /// Shorthand for 100 replications when `replications` is unset.
    pub fast: bool,
    pub quadrature_n: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Write wall-clock times into reports. Turning this off makes the
    /// summary CSV byte-identical across runs.
    pub record_timing: bool,
    /// Family and model used by `fit` on a data file.
    pub family: Option<String>,
    pub model: Option<String>,
    /// Half-width of the search box of the link models.
    pub box_half_width: Option<f64>,
    pub rho: RhoOverrides,
    pub sup_search: OptimizerOverrides,
    pub median: OptimizerOverrides,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            scenarios: Vec::new(),
            estimators: vec!["rho".into(), "mle".into(), "median".into()],
            n: None,
            replications: None,
            fast: false,
            quadrature_n: None,
            output_dir: None,
            threads: None,
            record_timing: true,
            family: None,
            model: None,
            box_half_width: None,
            rho: RhoOverrides::default(),
            sup_search: OptimizerOverrides::default(),
            median: OptimizerOverrides::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for id in &self.scenarios {
            Scenario::builtin(id)?;
        }
        for id in &self.estimators {
            Estimator::from_id(id)?;
        }
        if let Some(w) = self.box_half_width {
            if !(w.is_finite() && w > 0.0) {
                bail!("box_half_width must be positive, got {w}");
            }
        }
        if self.replications == Some(0) || self.n == Some(0) || self.quadrature_n == Some(0) {
            bail!("n, replications and quadrature_n must be positive");
        }
        if self.threads == Some(0) {
            bail!("threads must be positive");
        }
        self.rho_config().validate()?;
        Ok(())
    }

    pub fn estimator_list(&self) -> Result<Vec<Estimator>> {
        self.estimators
            .iter()
            .map(|e| Estimator::from_id(e).map_err(Into::into))
            .collect()
    }

    pub fn rho_config(&self) -> RhoConfig {
        let base = RhoConfig::default();
        RhoConfig {
            kappa: self.rho.kappa.unwrap_or(base.kappa),
            early_stop: self.rho.early_stop.unwrap_or(base.early_stop),
            max_iters: self.rho.max_iters.unwrap_or(base.max_iters),
            sup_search: self.sup_search.apply(&base.sup_search),
            seed: self.seed,
        }
    }

    pub fn median_settings(&self) -> OptimizerSettings {
        self.median.apply(&OptimizerSettings::default())
    }

    /// Replications after applying `fast`.
    pub fn replications_for(&self, s: &Scenario) -> usize {
        match (self.replications, self.fast) {
            (Some(r), _) => r,
            (None, true) => FAST_REPLICATIONS,
            (None, false) => s.replications,
        }
    }

    /// Thread count from the environment, then the config.
    pub fn thread_count(&self) -> Result<Option<usize>> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let k: usize = v
                    .trim()
                    .parse()
                    .with_context(|| format!("{THREADS_ENV}={v:?} is not a count"))?;
                if k == 0 {
                    bail!("{THREADS_ENV} must be positive");
                }
                Ok(Some(k))
            }
            Err(_) => Ok(self.threads),
        }
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_output(&self, fallback: &Path) -> Result<PathBuf> {
        let dir = self.output_dir.clone().unwrap_or_else(|| fallback.to_path_buf());
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let probe = dir.join(".rhoreg-write-test");
        std::fs::write(&probe, b"")
            .with_context(|| format!("output directory {} is not writable", dir.display()))?;
        let _ = std::fs::remove_file(probe);
        Ok(dir)
    }
}
