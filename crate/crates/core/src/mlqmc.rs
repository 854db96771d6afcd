//! Randomized QMC and multilevel estimators: single-level RQMC, MLMC with
//! optimal allocation, the adaptive MLQMC doubling loop and the screening and
//! sample-count diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowdisc::{inverse_normal_cdf, shifted_sobol_point, DigitalShift, Purpose, RandomStream, SobolGenerator};

/// How the QMC block of a sample is generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Shifted Sobol' points on the QMC block, pseudo-random elsewhere.
    #[default]
    Hybrid,
    /// Everything pseudo-random.
    PureMc,
}

/// Everything a sampler needs to produce sample `n` of randomization `m`.
pub struct SampleContext<'a> {
    pub level: usize,
    pub m: usize,
    pub n: u32,
    pub seed: u64,
    pub shift: &'a DigitalShift,
    pub sobol: &'a SobolGenerator,
    pub mode: SamplingMode,
}

impl SampleContext<'_> {
    /// Stream for auxiliary randomness of this sample.
    pub fn stream(&self, purpose: Purpose) -> RandomStream {
        RandomStream::new(self.seed, self.level as u64, self.m as u64, self.n as u64, purpose)
    }

    /// First `dims` coordinates of this sample's QMC point (or of an iid
    /// uniform point in Monte Carlo mode).
    pub fn uniforms(&self, dims: usize) -> Result<Vec<f64>> {
        match self.mode {
            SamplingMode::Hybrid => {
                let mut x = shifted_sobol_point(self.sobol, self.n, self.shift)?;
                x.truncate(dims);
                Ok(x)
            }
            SamplingMode::PureMc => {
                let mut rng = self.stream(Purpose::WaveletHead).rng();
                Ok((0..dims).map(|_| rng.random::<f64>().max(2f64.powi(-53))).collect())
            }
        }
    }
}

/// One realization of `P_ℓ` and its coupled `P_{ℓ-1}` (zero on the base level).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSample {
    pub fine: f64,
    pub coarse: f64,
}

impl LevelSample {
    pub fn difference(&self) -> f64 {
        self.fine - self.coarse
    }
}

/// Source of `Y_ℓ = P_ℓ - P_{ℓ-1}` samples. Must be deterministic in
/// `(seed, level, m, n)` and the shift.
pub trait LevelSampler: Sync {
    /// Number of QMC coordinates per sample.
    fn qmc_dim(&self) -> usize;
    /// Deterministic cost of one sample.
    fn cost_per_sample(&self) -> f64;
    /// Position of the level on the refinement axis used for rate fits.
    fn level_index(&self) -> usize;
    /// Whether the sampler returns a coupled difference.
    fn is_coupled(&self) -> bool;
    fn sample(&self, ctx: &SampleContext) -> Result<LevelSample>;
}

/// Per-randomization running sums for one level.
#[derive(Clone, Debug)]
pub struct LevelAccumulator {
    pub level: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    pub n: u32,
    shifts: Vec<DigitalShift>,
    sum_y: Vec<f64>,
    sum_y2: Vec<f64>,
    sum_fine: Vec<f64>,
}

impl LevelAccumulator {
    /// `m` randomizations; shift `m` is drawn from stream `(seed, level, m, 0, Shift)`.
    pub fn new(level: usize, qmc_dim: usize, m: usize, seed: u64, mode: SamplingMode) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("at least one randomization is required".into()));
        }
        let shifts = (0..m)
            .map(|r| {
                DigitalShift::random(qmc_dim, &RandomStream::new(seed, level as u64, r as u64, 0, Purpose::Shift))
            })
            .collect();
        Ok(Self {
            level,
            seed,
            mode,
            n: 0,
            shifts,
            sum_y: vec![0.0; m],
            sum_y2: vec![0.0; m],
            sum_fine: vec![0.0; m],
        })
    }

    pub fn randomizations(&self) -> usize {
        self.shifts.len()
    }

    /// Draws samples `self.n..new_n` of every randomization. Samples run in
    /// parallel; sums are merged in `(m, n)` order.
    pub fn extend_to(&mut self, sampler: &dyn LevelSampler, sobol: &SobolGenerator, new_n: u32) -> Result<()> {
        if new_n <= self.n {
            return Ok(());
        }
        let old = self.n;
        let per = (new_n - old) as usize;
        let total = per * self.shifts.len();
        let results: Vec<Result<LevelSample>> = (0..total)
            .into_par_iter()
            .map(|k| {
                let m = k / per;
                let n = old + (k % per) as u32;
                let ctx = SampleContext {
                    level: self.level,
                    m,
                    n,
                    seed: self.seed,
                    shift: &self.shifts[m],
                    sobol,
                    mode: self.mode,
                };
                sampler
                    .sample(&ctx)
                    .map_err(|e| Error::Sampler { m, n: n as usize, source: Box::new(e) })
            })
            .collect();
        for (k, r) in results.into_iter().enumerate() {
            let s = r?;
            let y = s.difference();
            if !y.is_finite() {
                return Err(Error::Sampler {
                    m: k / per,
                    n: old as usize + k % per,
                    source: Box::new(Error::NonFinite(format!("sample value {y}"))),
                });
            }
            let m = k / per;
            self.sum_y[m] += y;
            self.sum_y2[m] += y * y;
            self.sum_fine[m] += s.fine;
        }
        self.n = new_n;
        Ok(())
    }

    /// Per-randomization means.
    pub fn means(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.sum_y.iter().map(|s| s / n).collect()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.means())
    }

    pub fn mean_fine(&self) -> f64 {
        let total = self.n as f64 * self.shifts.len() as f64;
        self.sum_fine.iter().sum::<f64>() / total.max(1.0)
    }

    /// Sample variance of the `M` means divided by `M`. With a single
    /// randomization, the Monte Carlo variance of the mean instead.
    pub fn variance_of_mean(&self) -> f64 {
        let m = self.shifts.len();
        if m >= 2 {
            sample_variance(&self.means()) / m as f64
        } else {
            self.sample_variance() / self.n.max(1) as f64
        }
    }

    /// Unbiased variance of all `M·N` individual samples around their mean.
    pub fn sample_variance(&self) -> f64 {
        let count = self.n as f64 * self.shifts.len() as f64;
        if count < 2.0 {
            return 0.0;
        }
        let s: f64 = self.sum_y.iter().sum();
        let s2: f64 = self.sum_y2.iter().sum();
        ((s2 - s * s / count) / (count - 1.0)).max(0.0)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mu = mean(x);
    x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (x.len() - 1) as f64
}

/// Generator large enough for every sampler in `samplers`.
pub fn sobol_for(samplers: &[&dyn LevelSampler]) -> Result<SobolGenerator> {
    SobolGenerator::new(samplers.iter().map(|s| s.qmc_dim()).max().unwrap_or(1).max(1))
}

/// Randomized QMC estimate of `E[Y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QmcEstimate {
    pub mean: f64,
    pub variance_of_mean: f64,
    pub means: Vec<f64>,
}

pub fn qmc_estimate(sampler: &dyn LevelSampler, n: u32, m: usize, seed: u64, mode: SamplingMode) -> Result<QmcEstimate> {
    if n == 0 || m < 2 {
        return Err(Error::InvalidArgument(format!("need N >= 1 and M >= 2, got N={n}, M={m}")));
    }
    let sobol = sobol_for(&[sampler])?;
    let mut acc = LevelAccumulator::new(1, sampler.qmc_dim(), m, seed, mode)?;
    acc.extend_to(sampler, &sobol, n)?;
    Ok(QmcEstimate { mean: acc.mean(), variance_of_mean: acc.variance_of_mean(), means: acc.means() })
}

/// `N_ℓ = ceil((1-θ)^{-1} ε^{-2} (Σ √(V C)) √(V_ℓ / C_ℓ))`.
pub fn mlmc_optimal_allocation(v: &[f64], c: &[f64], epsilon: f64, theta: f64) -> Result<Vec<u64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("no levels to allocate".into()));
    }
    if v.len() != c.len() {
        return Err(Error::LengthMismatch { expected: v.len(), actual: c.len() });
    }
    if !(epsilon > 0.0) || !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("need epsilon > 0 and 0 < theta < 1, got {epsilon}, {theta}")));
    }
    if v.iter().chain(c).any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("variances and costs must be positive".into()));
    }
    let budget = (1.0 - theta) * epsilon * epsilon;
    let s: f64 = v.iter().zip(c).map(|(v, c)| (v * c).sqrt()).sum();
    let n: Vec<u64> = v
        .iter()
        .zip(c)
        .map(|(v, c)| ((s / budget) * (v / c).sqrt()).ceil().max(1.0) as u64)
        .collect();
    let achieved: f64 = v.iter().zip(&n).map(|(v, n)| v / *n as f64).sum();
    debug_assert!(achieved <= budget * (1.0 + 1e-12));
    Ok(n)
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Decay rate `r` with `|values| ∝ 2^{-r·index}`, fitted on log₂ values.
pub fn fit_decay_rate(index: &[f64], values: &[f64]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = index
        .iter()
        .zip(values)
        .filter(|(_, v)| v.abs() > 0.0 && v.is_finite())
        .map(|(i, v)| (*i, v.abs().log2()))
        .unzip();
    fit_slope(&x, &y).map(|s| -s)
}

/// Tolerance and level limits for the adaptive drivers. Levels are counted
/// from 1; `l_min` and `l_max` bound the number of levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlqmcOptions {
    pub epsilon: f64,
    pub theta: f64,
    pub l_min: usize,
    pub l_max: usize,
    pub randomizations: usize,
}

impl MlqmcOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.l_min < 1 || self.l_min > self.l_max {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= l_min <= l_max, got {} and {}",
                self.l_min, self.l_max
            )));
        }
        Ok(())
    }
}

/// Current estimates on one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    /// 1-based position in the multilevel hierarchy.
    pub level: usize,
    /// Refinement index used for rate fits.
    pub index: usize,
    pub coupled: bool,
    pub n: u64,
    pub randomizations: usize,
    pub means: Vec<f64>,
    pub mean: f64,
    pub mean_fine: f64,
    /// Estimator variance `V_ℓ`.
    pub variance: f64,
    /// Per-sample variance of `Y_ℓ`.
    pub sample_variance: f64,
    /// Cost of one sample.
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    AddLevel { level: usize },
    Double { level: usize, n: u64 },
    Allocate { level: usize, n: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlqmcState {
    pub epsilon: f64,
    pub theta: f64,
    pub l_min: usize,
    pub l_max: usize,
    pub levels: Vec<LevelState>,
    pub trace: Vec<TraceEvent>,
    pub alpha: Option<f64>,
    pub bias_estimate: f64,
    pub estimate: f64,
    pub total_cost: f64,
    pub converged: bool,
}

impl MlqmcState {
    fn new(o: &MlqmcOptions) -> Self {
        Self {
            epsilon: o.epsilon,
            theta: o.theta,
            l_min: o.l_min,
            l_max: o.l_max,
            levels: Vec::new(),
            trace: Vec::new(),
            alpha: None,
            bias_estimate: f64::INFINITY,
            estimate: 0.0,
            total_cost: 0.0,
            converged: false,
        }
    }

    pub fn total_variance(&self) -> f64 {
        self.levels.iter().map(|l| l.variance).sum()
    }

    pub fn sample_counts(&self) -> Vec<u64> {
        self.levels.iter().map(|l| l.n).collect()
    }

    fn refresh(&mut self) {
        self.estimate = self.levels.iter().map(|l| l.mean).sum();
        self.total_cost = self.levels.iter().map(|l| l.randomizations as f64 * l.n as f64 * l.cost).sum();
        let (x, y): (Vec<f64>, Vec<f64>) =
            self.levels.iter().filter(|l| l.coupled).map(|l| (l.index as f64, l.mean)).unzip();
        self.alpha = fit_decay_rate(&x, &y).map(|a| a.max(0.5));
        self.bias_estimate = self.levels.last().map_or(f64::INFINITY, |last| bias_estimate(last.mean, self.alpha));
    }
}

/// `max(|Y_L| / (2^α - 1), |Y_L| / 2)`; without a fitted rate, `|Y_L|`.
pub fn bias_estimate(last_mean: f64, alpha: Option<f64>) -> f64 {
    let y = last_mean.abs();
    match alpha {
        Some(a) => (y / (2f64.powf(a) - 1.0)).max(y / 2.0),
        None => y,
    }
}

/// The adaptive doubling loop, with level statistics supplied by `eval(level, N)`.
pub fn greedy_mlqmc<F>(options: &MlqmcOptions, mut eval: F) -> Result<MlqmcState>
where
    F: FnMut(usize, u64) -> Result<LevelState>,
{
    options.validate()?;
    let mut state = MlqmcState::new(options);
    let budget = (1.0 - options.theta) * options.epsilon * options.epsilon;
    loop {
        let level = state.levels.len() + 1;
        state.levels.push(eval(level, 1)?);
        state.trace.push(TraceEvent::AddLevel { level });
        while state.total_variance() > budget {
            let mut best = 0;
            let mut best_ratio = f64::NEG_INFINITY;
            for (i, l) in state.levels.iter().enumerate() {
                let r = l.variance / (l.cost * l.n as f64);
                if r > best_ratio {
                    best = i;
                    best_ratio = r;
                }
            }
            let n = state.levels[best].n * 2;
            state.levels[best] = eval(best + 1, n)?;
            state.trace.push(TraceEvent::Double { level: best + 1, n });
        }
        state.refresh();
        let l = state.levels.len();
        if l < options.l_min || state.bias_estimate > options.theta.sqrt() * options.epsilon {
            if l + 1 > options.l_max {
                return Err(Error::ConvergenceFailure(Box::new(state)));
            }
        } else {
            state.converged = true;
            return Ok(state);
        }
    }
}

fn level_state(level: usize, sampler: &dyn LevelSampler, acc: &LevelAccumulator) -> LevelState {
    LevelState {
        level,
        index: sampler.level_index(),
        coupled: sampler.is_coupled(),
        n: acc.n as u64,
        randomizations: acc.randomizations(),
        means: acc.means(),
        mean: acc.mean(),
        mean_fine: acc.mean_fine(),
        variance: acc.variance_of_mean(),
        sample_variance: acc.sample_variance(),
        cost: sampler.cost_per_sample(),
    }
}

fn check_n(n: u64) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("sample count {n} exceeds 2^32")))
}

/// Adaptive MLQMC with `M` randomizations per level; `samplers[ℓ-1]` is level ℓ.
pub fn mlqmc_run(
    samplers: &[&dyn LevelSampler],
    options: &MlqmcOptions,
    seed: u64,
    mode: SamplingMode,
) -> Result<MlqmcState> {
    if options.randomizations < 2 {
        return Err(Error::InvalidArgument("MLQMC needs at least two randomizations".into()));
    }
    let options = MlqmcOptions { l_max: options.l_max.min(samplers.len()), ..*options };
    options.validate()?;
    let sobol = sobol_for(samplers)?;
    let mut accs: Vec<LevelAccumulator> = Vec::new();
    greedy_mlqmc(&options, |level, n| {
        let s = samplers[level - 1];
        if accs.len() < level {
            accs.push(LevelAccumulator::new(level, s.qmc_dim(), options.randomizations, seed, mode)?);
        }
        let acc = &mut accs[level - 1];
        acc.extend_to(s, &sobol, check_n(n)?)?;
        Ok(level_state(level, s, acc))
    })
}

/// Adaptive MLMC with optimal allocation; `n0` initial samples per new level,
/// one randomization, all inputs pseudo-random.
pub fn mlmc_run(samplers: &[&dyn LevelSampler], options: &MlqmcOptions, n0: u64, seed: u64) -> Result<MlqmcState> {
    let options = MlqmcOptions { l_max: options.l_max.min(samplers.len()), randomizations: 1, ..*options };
    options.validate()?;
    if n0 < 2 {
        return Err(Error::InvalidArgument("MLMC needs at least two initial samples".into()));
    }
    let sobol = sobol_for(samplers)?;
    let mut state = MlqmcState::new(&options);
    let mut accs: Vec<LevelAccumulator> = Vec::new();
    let mut target: Vec<u64> = Vec::new();
    let add = |accs: &mut Vec<LevelAccumulator>, target: &mut Vec<u64>, state: &mut MlqmcState| -> Result<()> {
        let level = accs.len() + 1;
        let s = samplers[level - 1];
        accs.push(LevelAccumulator::new(level, s.qmc_dim(), 1, seed, SamplingMode::PureMc)?);
        target.push(n0);
        state.trace.push(TraceEvent::AddLevel { level });
        Ok(())
    };
    add(&mut accs, &mut target, &mut state)?;
    loop {
        loop {
            let mut grew = false;
            for (i, acc) in accs.iter_mut().enumerate() {
                if target[i] > acc.n as u64 {
                    acc.extend_to(samplers[i], &sobol, check_n(target[i])?)?;
                    state.trace.push(TraceEvent::Allocate { level: i + 1, n: target[i] });
                    grew = true;
                }
            }
            state.levels = accs.iter().enumerate().map(|(i, a)| level_state(i + 1, samplers[i], a)).collect();
            if !grew {
                break;
            }
            let v: Vec<f64> = state.levels.iter().map(|l| l.sample_variance.max(f64::MIN_POSITIVE)).collect();
            let c: Vec<f64> = state.levels.iter().map(|l| l.cost).collect();
            let alloc = mlmc_optimal_allocation(&v, &c, options.epsilon, options.theta)?;
            for (t, a) in target.iter_mut().zip(alloc) {
                *t = (*t).max(a);
            }
        }
        state.refresh();
        let l = accs.len();
        if l < options.l_min || state.bias_estimate > options.theta.sqrt() * options.epsilon {
            if l + 1 > options.l_max {
                return Err(Error::ConvergenceFailure(Box::new(state)));
            }
            add(&mut accs, &mut target, &mut state)?;
        } else {
            state.converged = true;
            return Ok(state);
        }
    }
}

/// One row of a screening table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRow {
    pub level: usize,
    pub index: usize,
    pub coupled: bool,
    pub n: u64,
    pub m: usize,
    /// Estimate of `E[P_ℓ - P_{ℓ-1}]`.
    pub mean: f64,
    /// Per-sample variance of `P_ℓ - P_{ℓ-1}`.
    pub var: f64,
    pub cost: f64,
    /// Estimate of `E[P_ℓ]`.
    pub mean_fine: f64,
    pub estimator_var: f64,
}

/// Screening tables and rates fitted over the coupled levels with refinement
/// index at least 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub rows: Vec<ScreeningRow>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

impl DiagnosticsReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "level,N,M,mean,var,cost,mean_fine,estimator_var")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:e},{:e},{:e},{:e},{:e}",
                r.index, r.n, r.m, r.mean, r.var, r.cost, r.mean_fine, r.estimator_var
            )?;
        }
        Ok(())
    }
}

pub fn screening_run(
    samplers: &[&dyn LevelSampler],
    n_screen: u32,
    m: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<DiagnosticsReport> {
    if n_screen < 16 {
        return Err(Error::InvalidArgument(format!("screening needs N >= 16, got {n_screen}")));
    }
    let sobol = sobol_for(samplers)?;
    let mut rows = Vec::with_capacity(samplers.len());
    for (i, s) in samplers.iter().enumerate() {
        let mut acc = LevelAccumulator::new(i + 1, s.qmc_dim(), m, seed, mode)?;
        acc.extend_to(*s, &sobol, n_screen)?;
        rows.push(ScreeningRow {
            level: i + 1,
            index: s.level_index(),
            coupled: s.is_coupled(),
            n: n_screen as u64,
            m,
            mean: acc.mean(),
            var: acc.sample_variance(),
            cost: s.cost_per_sample(),
            mean_fine: acc.mean_fine(),
            estimator_var: acc.variance_of_mean(),
        });
    }
    let coupled: Vec<&ScreeningRow> = rows.iter().filter(|r| r.coupled && r.index >= 2).collect();
    let x: Vec<f64> = coupled.iter().map(|r| r.index as f64).collect();
    let col = |f: fn(&ScreeningRow) -> f64| coupled.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let alpha = fit_decay_rate(&x, &col(|r| r.mean));
    let beta = fit_decay_rate(&x, &col(|r| r.var));
    let gamma = fit_decay_rate(&x, &col(|r| r.cost)).map(|g| -g);
    Ok(DiagnosticsReport { rows, alpha, beta, gamma })
}

/// `log₂(N · V_ℓ)` for one level and sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NvarRow {
    pub level: usize,
    pub index: usize,
    pub n: u32,
    pub variance: f64,
    pub log2_nv: f64,
}

/// Estimator variance for every `N` in `n_list`, reusing the samples of the
/// smaller counts.
pub fn nvar_diagnostic(
    samplers: &[&dyn LevelSampler],
    n_list: &[u32],
    m: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<Vec<NvarRow>> {
    if m < 2 {
        return Err(Error::InvalidArgument("need at least two randomizations".into()));
    }
    if n_list.iter().any(|n| !n.is_power_of_two()) {
        return Err(Error::InvalidArgument(format!("sample counts must be powers of two: {n_list:?}")));
    }
    let mut sorted = n_list.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let sobol = sobol_for(samplers)?;
    let mut rows = Vec::new();
    for (i, s) in samplers.iter().enumerate() {
        let mut acc = LevelAccumulator::new(i + 1, s.qmc_dim(), m, seed, mode)?;
        for &n in &sorted {
            acc.extend_to(*s, &sobol, n)?;
            let v = acc.variance_of_mean();
            rows.push(NvarRow { level: i + 1, index: s.level_index(), n, variance: v, log2_nv: (n as f64 * v).log2() });
        }
    }
    Ok(rows)
}

pub fn write_nvar_csv<W: std::io::Write>(rows: &[NvarRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "level,N,log2_NV")?;
    for r in rows {
        writeln!(w, "{},{},{:e}", r.index, r.n, r.log2_nv)?;
    }
    Ok(())
}

/// Closed-form sampler: `Y = mean + sd · g(u)` on the first QMC coordinate,
/// with `g = Φ⁻¹` or the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSampler {
    pub index: usize,
    pub coupled: bool,
    pub mean: f64,
    pub sd: f64,
    pub cost: f64,
    /// Value of `P_{ℓ-1}` reported as the coarse sample.
    pub coarse_offset: f64,
    pub transform: SyntheticTransform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticTransform {
    Gaussian,
    Identity,
}

impl SyntheticSampler {
    /// Returns `u`, the first coordinate.
    pub fn identity() -> Self {
        Self {
            index: 0,
            coupled: false,
            mean: 0.0,
            sd: 1.0,
            cost: 1.0,
            coarse_offset: 0.0,
            transform: SyntheticTransform::Identity,
        }
    }

    /// Levels `1..=levels` with `E[Y_ℓ] = 2^{-αℓ}`, `V[Y_ℓ] = sd0² 2^{-βℓ}` and
    /// cost `2^{γℓ}`; level 1 is the uncoupled base.
    pub fn geometric_family(levels: usize, alpha: f64, beta: f64, gamma: f64, sd0: f64) -> Vec<Self> {
        let mut offset = 0.0;
        (1..=levels)
            .map(|l| {
                let lf = l as f64;
                let s = Self {
                    index: l,
                    coupled: l > 1,
                    mean: 2f64.powf(-alpha * lf),
                    sd: sd0 * 2f64.powf(-beta * lf / 2.0),
                    cost: 2f64.powf(gamma * lf),
                    coarse_offset: offset,
                    transform: SyntheticTransform::Gaussian,
                };
                offset += s.mean;
                s
            })
            .collect()
    }
}

impl LevelSampler for SyntheticSampler {
    fn qmc_dim(&self) -> usize {
        1
    }

    fn cost_per_sample(&self) -> f64 {
        self.cost
    }

    fn level_index(&self) -> usize {
        self.index
    }

    fn is_coupled(&self) -> bool {
        self.coupled
    }

    fn sample(&self, ctx: &SampleContext) -> Result<LevelSample> {
        let u = ctx.uniforms(1)?[0];
        let g = match self.transform {
            SyntheticTransform::Gaussian => inverse_normal_cdf(u)?,
            SyntheticTransform::Identity => u,
        };
        let y = self.mean + self.sd * g;
        Ok(LevelSample { fine: self.coarse_offset + y, coarse: self.coarse_offset })
    }
}

/// Borrows a slice of samplers as trait objects.
pub fn as_dyn<S: LevelSampler>(samplers: &[S]) -> Vec<&dyn LevelSampler> {
    samplers.iter().map(|s| s as &dyn LevelSampler).collect()
}
