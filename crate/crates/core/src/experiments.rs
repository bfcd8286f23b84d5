//! Replicated experiments: brute-force variance references, lag sweeps,
//! long-run stability tracks and confidence-interval failure rates.
//!
//! All replicates of one experiment run on the same observation record.
//! Replicate `r` of stream `s` is seeded with `derive_seed(master, s, r)`, and
//! results are reduced in replicate order, so outputs do not depend on thread
//! scheduling.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::DiscreteModel;
use crate::fk_model::{FeynmanKacModel, SmcRng, TestFunction};
use crate::models::{
    kalman_predict, make_linear_gaussian, make_stochastic_volatility, simulate, LinearGaussian,
    LinearGaussianParams, StateSpaceParams, StochasticVolatility, StochasticVolatilityParams,
};
use crate::seed::{derive_seed, stream};
use crate::smc::{AncestorLevel, Lag, ParticleFilter};
use crate::variance::{
    confidence_interval, filter_variance_at_lag, predictor_variance_at_lag, Flow, QuantileFamily,
};

/// Model section of an experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    #[serde(rename = "linear_gaussian")]
    LinearGaussian(LinearGaussianParams),
    #[serde(rename = "stochastic_volatility")]
    StochasticVolatility(StochasticVolatilityParams),
    /// Finite-state model given inline (`chi`, `M`, `potentials`).
    Discrete(DiscreteModel),
    /// Finite-state model stored in a separate JSON document; resolved to
    /// [`ModelConfig::Discrete`] when the configuration is loaded.
    DiscreteFile { path: PathBuf },
}

impl ModelConfig {
    pub fn build(&self) -> Result<AnyModel> {
        match self {
            ModelConfig::LinearGaussian(p) => Ok(AnyModel::LinearGaussian(make_linear_gaussian(*p)?)),
            ModelConfig::StochasticVolatility(p) => {
                Ok(AnyModel::StochasticVolatility(make_stochastic_volatility(*p)?))
            }
            ModelConfig::Discrete(dm) => Ok(AnyModel::Discrete(dm.clone())),
            ModelConfig::DiscreteFile { path } => Ok(AnyModel::Discrete(DiscreteModel::from_json_file(path)?)),
        }
    }

    fn state_space(&self) -> Option<StateSpaceParams> {
        match self {
            ModelConfig::LinearGaussian(p) => Some((*p).into()),
            ModelConfig::StochasticVolatility(p) => Some((*p).into()),
            _ => None,
        }
    }

    /// Loads a `discrete_file` model, resolving relative paths against `base`.
    pub(crate) fn resolve(&mut self, base: Option<&Path>) -> Result<()> {
        if let ModelConfig::DiscreteFile { path } = self {
            let full = match base {
                Some(dir) if path.is_relative() => dir.join(&*path),
                _ => path.clone(),
            };
            *self = ModelConfig::Discrete(DiscreteModel::from_json_file(full)?);
        }
        Ok(())
    }
}

/// Any model an experiment can run.
#[derive(Clone, Debug)]
pub enum AnyModel {
    LinearGaussian(LinearGaussian),
    StochasticVolatility(StochasticVolatility),
    Discrete(DiscreteModel),
}

impl FeynmanKacModel for AnyModel {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        match self {
            AnyModel::LinearGaussian(m) => m.sample_initial(rng),
            AnyModel::StochasticVolatility(m) => m.sample_initial(rng),
            AnyModel::Discrete(m) => m.sample_initial(rng),
        }
    }

    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        match self {
            AnyModel::LinearGaussian(m) => m.sample_transition(x, rng),
            AnyModel::StochasticVolatility(m) => m.sample_transition(x, rng),
            AnyModel::Discrete(m) => m.sample_transition(x, rng),
        }
    }

    fn log_potential(&self, z: f64, x: f64) -> f64 {
        match self {
            AnyModel::LinearGaussian(m) => m.log_potential(z, x),
            AnyModel::StochasticVolatility(m) => m.log_potential(z, x),
            AnyModel::Discrete(m) => m.log_potential(z, x),
        }
    }
}

/// Serializable description of the test function `h`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    #[default]
    Identity,
    Indicator {
        lo: f64,
        hi: f64,
    },
    /// Indicator of one state of a finite-state model.
    StateIndicator {
        state: usize,
    },
}

impl TestFunctionSpec {
    pub fn to_function(&self) -> TestFunction {
        match *self {
            TestFunctionSpec::Identity => TestFunction::Identity,
            TestFunctionSpec::Indicator { lo, hi } => TestFunction::Indicator { lo, hi },
            TestFunctionSpec::StateIndicator { state } => TestFunction::state_indicator(state),
        }
    }
}

fn default_thin() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

/// Complete description of one experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Particle count.
    #[serde(rename = "N")]
    pub particles: usize,
    /// Terminal time.
    pub n: usize,
    pub lags: Vec<Lag>,
    pub replicates: usize,
    /// Replicates for the brute-force reference computed alongside a lag
    /// sweep; 0 skips it.
    #[serde(default)]
    pub reference_replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub test_function: TestFunctionSpec,
    #[serde(default = "default_flow")]
    pub flow: Flow,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub quantile: QuantileFamily,
    /// Fixed observation record; simulated from the model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<Vec<f64>>,
    /// Single-column CSV (header `y`) holding the observation record;
    /// loaded into `observations` when the configuration is read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

fn default_flow() -> Flow {
    Flow::Predictor
}

impl ExperimentConfig {
    /// Minimal configuration with defaults for every optional field.
    pub fn new(model: ModelConfig, particles: usize, n: usize, lags: Vec<Lag>, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            model,
            particles,
            n,
            lags,
            replicates,
            reference_replicates: 0,
            seed,
            test_function: TestFunctionSpec::Identity,
            flow: Flow::Predictor,
            thin: 1,
            level: 0.95,
            quantile: QuantileFamily::Gaussian,
            observations: None,
            observations_path: None,
            output_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.particles == 0 {
            return bad("N must be at least 1");
        }
        if self.lags.is_empty() {
            return bad("lags must not be empty");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)");
        }
        if let QuantileFamily::StudentT { dof } = self.quantile {
            if !(dof > 0.0) {
                return bad("Student-t degrees of freedom must be positive");
            }
        }
        if let Some(obs) = &self.observations {
            if obs.len() < self.required_observations() {
                return Err(Error::InvalidConfig(format!(
                    "observation record has {} values but n = {} with the {:?} flow needs {}",
                    obs.len(),
                    self.n,
                    self.flow,
                    self.required_observations()
                )));
            }
        }
        if let (ModelConfig::Discrete(dm), TestFunctionSpec::StateIndicator { state }) =
            (&self.model, &self.test_function)
        {
            if *state >= dm.num_states() {
                return bad("state indicator refers to a state outside the model");
            }
        }
        match &self.model {
            ModelConfig::LinearGaussian(p) => p.validate(),
            ModelConfig::StochasticVolatility(p) => p.validate(),
            _ => Ok(()),
        }
    }

    /// Observations consumed by one run: `z_0..z_{n-1}`, plus `z_n` for the filter flow.
    pub fn required_observations(&self) -> usize {
        match self.flow {
            Flow::Predictor => self.n,
            Flow::Filter => self.n + 1,
        }
    }

    /// Largest finite lag, which sets the window width of a sweep.
    pub fn window_lag(&self) -> Lag {
        let finite = self.lags.iter().filter_map(|l| match l {
            Lag::Finite(v) => Some(*v),
            Lag::Full => None,
        });
        Lag::Finite(finite.max().unwrap_or(0))
    }

    /// The observation record shared by every replicate.
    pub fn observation_record(&self) -> Result<Vec<f64>> {
        let need = self.required_observations();
        if let Some(obs) = &self.observations {
            if obs.len() < need {
                return Err(Error::InvalidConfig(format!(
                    "observation record too short: {} < {need}",
                    obs.len()
                )));
            }
            return Ok(obs[..need].to_vec());
        }
        if need == 0 {
            return Ok(Vec::new());
        }
        match self.model.state_space() {
            Some(p) => Ok(simulate(p, need, derive_seed(self.seed, stream::OBSERVATIONS, 0))?.observations),
            None => Err(Error::InvalidConfig(
                "finite-state models need an explicit observation record".into(),
            )),
        }
    }
}

fn run_replicates<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Runs one filter over `obs`, calling `visit` at every time `t = 0..=n` with
/// weights for `z_t` attached when the flow is the filter flow.
pub fn drive<'m, M, F>(
    model: &'m M,
    cfg: &ExperimentConfig,
    obs: &[f64],
    window: Lag,
    seed: u64,
    mut visit: F,
) -> Result<ParticleFilter<'m, M>>
where
    M: FeynmanKacModel + ?Sized,
    F: FnMut(usize, &ParticleFilter<'m, M>) -> Result<()>,
{
    let mut pf = ParticleFilter::new(model, cfg.particles, window, seed)?;
    for t in 0..=cfg.n {
        if cfg.flow == Flow::Filter {
            pf.reweight(obs[t])?;
        }
        visit(t, &pf)?;
        if t < cfg.n {
            match cfg.flow {
                Flow::Filter => pf.propagate()?,
                Flow::Predictor => pf.step(obs[t])?,
            }
        }
    }
    Ok(pf)
}

fn terminal_estimate<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    flow: Flow,
    h: &TestFunction,
) -> Result<f64> {
    match flow {
        Flow::Predictor => Ok(pf.predictor_estimate(h)),
        Flow::Filter => pf.filter_estimate(h),
    }
}

fn variance_at<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    flow: Flow,
    h: &TestFunction,
    lag: Lag,
) -> Result<f64> {
    Ok(match flow {
        Flow::Predictor => predictor_variance_at_lag(pf, h, lag)?.value,
        Flow::Filter => filter_variance_at_lag(pf, h, lag)?.value,
    })
}

fn root_level(lag: Lag, n: usize) -> AncestorLevel {
    match lag {
        Lag::Full => AncestorLevel::Eve,
        Lag::Finite(_) => AncestorLevel::Time(lag.root(n)),
    }
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Brute-force reference: `N` times the sample variance of terminal
/// estimates from independent replicates on one observation record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceVariance {
    pub value: f64,
    pub mean_estimate: f64,
    pub estimates: Vec<f64>,
}

pub fn replicate_variance_reference(cfg: &ExperimentConfig) -> Result<ReferenceVariance> {
    cfg.validate()?;
    if cfg.replicates < 2 {
        return Err(Error::InvalidConfig("the brute-force reference needs at least 2 replicates".into()));
    }
    let model = cfg.model.build()?;
    let obs = cfg.observation_record()?;
    let h = cfg.test_function.to_function();
    let estimates = run_replicates(cfg.replicates, |r| {
        let seed = derive_seed(cfg.seed, stream::REFERENCE, r as u64);
        let pf = drive(&model, cfg, &obs, Lag::Finite(0), seed, |_, _| Ok(()))?;
        terminal_estimate(&pf, cfg.flow, &h)
    })?;
    let (mean, sd) = mean_and_sd(&estimates);
    Ok(ReferenceVariance {
        value: cfg.particles as f64 * sd * sd,
        mean_estimate: mean,
        estimates,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LagSummary {
    pub lag: Lag,
    pub mean: f64,
    pub std_dev: f64,
    /// One estimate per replicate, in replicate order.
    pub estimates: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub per_lag: Vec<LagSummary>,
    /// Terminal particle estimate of every replicate.
    pub point_estimates: Vec<f64>,
    pub reference: Option<ReferenceVariance>,
}

impl SweepResult {
    pub fn for_lag(&self, lag: Lag) -> Option<&LagSummary> {
        self.per_lag.iter().find(|s| s.lag == lag)
    }
}

/// For every replicate, one filter pass whose window spans the largest finite
/// lag; every requested lag is read off the same genealogy at time `n`, with
/// `inf` served by the Eve indices.
pub fn lag_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let obs = cfg.observation_record()?;
    let h = cfg.test_function.to_function();
    let window = cfg.window_lag();

    let rows = run_replicates(cfg.replicates, |r| {
        let seed = derive_seed(cfg.seed, stream::SWEEP, r as u64);
        let pf = drive(&model, cfg, &obs, window, seed, |_, _| Ok(()))?;
        let per_lag = cfg
            .lags
            .iter()
            .map(|&lag| variance_at(&pf, cfg.flow, &h, lag))
            .collect::<Result<Vec<f64>>>()?;
        Ok((terminal_estimate(&pf, cfg.flow, &h)?, per_lag))
    })?;

    let per_lag = cfg
        .lags
        .iter()
        .enumerate()
        .map(|(k, &lag)| {
            let estimates: Vec<f64> = rows.iter().map(|(_, v)| v[k]).collect();
            let (mean, std_dev) = mean_and_sd(&estimates);
            LagSummary {
                lag,
                mean,
                std_dev,
                estimates,
            }
        })
        .collect();

    let reference = if cfg.reference_replicates >= 2 {
        let mut rc = cfg.clone();
        rc.replicates = cfg.reference_replicates;
        Some(replicate_variance_reference(&rc)?)
    } else {
        None
    };

    Ok(SweepResult {
        per_lag,
        point_estimates: rows.into_iter().map(|(p, _)| p).collect(),
        reference,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRunRow {
    pub n: usize,
    pub fixed_lag: f64,
    pub cle: f64,
    pub eve_count: usize,
    pub enoch_count: usize,
}

/// One long filter pass with a single lag, reporting every `thin`-th step
/// (and always the final one).
pub fn long_run(cfg: &ExperimentConfig) -> Result<Vec<LongRunRow>> {
    cfg.validate()?;
    if cfg.lags.len() != 1 {
        return Err(Error::InvalidConfig("long-run expects exactly one lag".into()));
    }
    let lag = cfg.lags[0];
    let model = cfg.model.build()?;
    let obs = cfg.observation_record()?;
    let h = cfg.test_function.to_function();
    let seed = derive_seed(cfg.seed, stream::LONG_RUN, 0);
    let mut rows = Vec::new();
    drive(&model, cfg, &obs, lag, seed, |t, pf| {
        if t % cfg.thin == 0 || t == cfg.n {
            let root = root_level(lag, t);
            rows.push(LongRunRow {
                n: t,
                fixed_lag: variance_at(pf, cfg.flow, &h, lag)?,
                cle: variance_at(pf, cfg.flow, &h, Lag::Full)?,
                eve_count: pf.unique_ancestor_count(AncestorLevel::Eve)?,
                enoch_count: pf.unique_ancestor_count(root)?,
            });
        }
        Ok(())
    })?;
    Ok(rows)
}

/// Per-step output of a single filter run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub n: usize,
    pub estimate: f64,
    pub fixed_lag: f64,
    pub cle: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub eve_count: usize,
    pub enoch_count: usize,
}

/// One filter pass at the first configured lag, with an interval at every
/// reported step.
pub fn single_run(cfg: &ExperimentConfig) -> Result<Vec<RunRow>> {
    cfg.validate()?;
    let lag = cfg.lags[0];
    let model = cfg.model.build()?;
    let obs = cfg.observation_record()?;
    let h = cfg.test_function.to_function();
    let seed = derive_seed(cfg.seed, stream::SINGLE_RUN, 0);
    let mut rows = Vec::new();
    drive(&model, cfg, &obs, lag, seed, |t, pf| {
        if t % cfg.thin == 0 || t == cfg.n {
            let estimate = terminal_estimate(pf, cfg.flow, &h)?;
            let fixed_lag = variance_at(pf, cfg.flow, &h, lag)?;
            let (ci_lo, ci_hi) = confidence_interval(estimate, fixed_lag, cfg.particles, cfg.level, cfg.quantile)?;
            rows.push(RunRow {
                n: t,
                estimate,
                fixed_lag,
                cle: variance_at(pf, cfg.flow, &h, Lag::Full)?,
                ci_lo,
                ci_hi,
                eve_count: pf.unique_ancestor_count(AncestorLevel::Eve)?,
                enoch_count: pf.unique_ancestor_count(root_level(lag, t))?,
            });
        }
        Ok(())
    })?;
    Ok(rows)
}

/// Particle predictor means and variance estimates of one replicate, `m = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorTrack {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Fraction of runs whose interval misses the truth, per time point.
pub fn failure_rates(
    truth: &[f64],
    runs: &[PredictorTrack],
    particles: usize,
    level: f64,
    family: QuantileFamily,
) -> Result<Vec<f64>> {
    let mut misses = vec![0usize; truth.len()];
    for run in runs {
        for (m, &target) in truth.iter().enumerate() {
            let (lo, hi) = confidence_interval(run.means[m], run.variances[m], particles, level, family)?;
            if !(lo <= target && target <= hi) {
                misses[m] += 1;
            }
        }
    }
    Ok(misses.into_iter().map(|k| k as f64 / runs.len() as f64).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CiResult {
    /// Failure rate at `m = 0..=n`.
    pub rates: Vec<f64>,
    /// Mean failure rate over `m = 1..=n`.
    pub average: f64,
    pub kalman_means: Vec<f64>,
}

/// Interval failure rates against Kalman predictor means (linear Gaussian
/// model, identity test function, first configured lag).
pub fn ci_failure_rates(cfg: &ExperimentConfig) -> Result<CiResult> {
    cfg.validate()?;
    let params = match &cfg.model {
        ModelConfig::LinearGaussian(p) => *p,
        _ => {
            return Err(Error::ModelNotTractable(
                "confidence-interval failure rates need the linear Gaussian model (Kalman truth)".into(),
            ))
        }
    };
    if cfg.test_function != TestFunctionSpec::Identity || cfg.flow != Flow::Predictor {
        return Err(Error::InvalidConfig(
            "ci-failure compares predictor means: use the identity test function and the predictor flow".into(),
        ));
    }
    let lag = cfg.lags[0];
    let model = cfg.model.build()?;
    let obs = cfg.observation_record()?;
    let kalman = kalman_predict(params, &obs)?;
    let h = TestFunction::Identity;

    let runs = run_replicates(cfg.replicates, |r| {
        let seed = derive_seed(cfg.seed, stream::CI, r as u64);
        let mut track = PredictorTrack {
            means: Vec::with_capacity(cfg.n + 1),
            variances: Vec::with_capacity(cfg.n + 1),
        };
        drive(&model, cfg, &obs, lag, seed, |_, pf| {
            track.means.push(pf.predictor_estimate(&h));
            track.variances.push(predictor_variance_at_lag(pf, &h, lag)?.value);
            Ok(())
        })?;
        Ok(track)
    })?;

    let rates = failure_rates(&kalman.means, &runs, cfg.particles, cfg.level, cfg.quantile)?;
    let average = if rates.len() > 1 {
        rates[1..].iter().sum::<f64>() / (rates.len() - 1) as f64
    } else {
        rates[0]
    };
    Ok(CiResult {
        rates,
        average,
        kalman_means: kalman.means,
    })
}
