//! Identification algorithms: HT&S and its homoscedastic (T&S) and
//! round-robin (EBA) siblings, plus the two-phase drivers built on them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::bandit::{sample_reward, TrackingState};
use crate::channel::{mean_reward, partition, ArmSet, Channel, ChannelError, Codebook};
use crate::glr::{
    glr_statistic, solve_weights, threshold, Divergence, GlrConfig, GlrError, Heteroscedastic,
    Homoscedastic,
};
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("step cap {cap} reached with {arms} arms before the stopping rule fired")]
    StepCap { cap: u64, arms: usize },
    #[error("need at least two arms, got {0}")]
    TooFewArms(usize),
    #[error("phase risks {delta1} + {delta2} do not sum to delta = {delta}")]
    RiskSplit {
        delta1: f64,
        delta2: f64,
        delta: f64,
    },
    #[error("invalid grouping: K = {k}, J = {j}")]
    Grouping { k: usize, j: usize },
    #[error(transparent)]
    Glr(#[from] GlrError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Source of rewards for arbitrary consecutive beam groups.
pub trait RewardOracle<T: Scalar> {
    /// Expected reward of the grouped beam over `arms`.
    fn mean(&mut self, arms: ArmSet) -> Result<T, AlgoError>;

    fn noise_var(&self) -> T;

    /// One independent reward draw for `arms`.
    fn sample<R: Rng + ?Sized>(&mut self, arms: ArmSet, rng: &mut R) -> Result<T, AlgoError> {
        let mu = self.mean(arms)?;
        Ok(sample_reward(mu, self.noise_var(), rng))
    }
}

/// Shared, immutable description of a beam-alignment instance.
#[derive(Debug, Clone)]
pub struct BeamModel<T> {
    pub codebook: Codebook<T>,
    pub channel: Channel<T>,
    pub tx_power_mw: T,
    pub noise_var: T,
}

/// Oracle over a [`BeamModel`], caching grouped-beam means.
#[derive(Debug, Clone)]
pub struct BeamOracle<T> {
    model: Arc<BeamModel<T>>,
    cache: HashMap<ArmSet, T>,
}

impl<T: Scalar> BeamOracle<T> {
    pub fn new(model: Arc<BeamModel<T>>) -> Self {
        Self {
            model,
            cache: HashMap::new(),
        }
    }

    pub fn model(&self) -> &BeamModel<T> {
        &self.model
    }
}

impl<T: Scalar> RewardOracle<T> for BeamOracle<T> {
    fn mean(&mut self, arms: ArmSet) -> Result<T, AlgoError> {
        if let Some(&mu) = self.cache.get(&arms) {
            return Ok(mu);
        }
        let m = &self.model;
        let beam = m.codebook.group_beam(arms)?;
        let mu = mean_reward(&m.channel, &beam, m.tx_power_mw);
        self.cache.insert(arms, mu);
        Ok(mu)
    }

    fn noise_var(&self) -> T {
        self.model.noise_var
    }
}

/// Oracle with explicitly listed means; unlisted sets are an error.
#[derive(Debug, Clone)]
pub struct TableOracle<T> {
    means: HashMap<ArmSet, T>,
    noise_var: T,
}

impl<T: Scalar> TableOracle<T> {
    /// Singleton arms `1..=n` with the given means.
    pub fn singletons(means: &[T], noise_var: T) -> Self {
        let means = means
            .iter()
            .enumerate()
            .map(|(i, &m)| (ArmSet::single(i + 1).unwrap(), m))
            .collect();
        Self { means, noise_var }
    }

    pub fn insert(&mut self, arms: ArmSet, mean: T) {
        self.means.insert(arms, mean);
    }
}

impl<T: Scalar> RewardOracle<T> for TableOracle<T> {
    fn mean(&mut self, arms: ArmSet) -> Result<T, AlgoError> {
        self.means.get(&arms).copied().ok_or(AlgoError::Grouping {
            k: arms.last(),
            j: arms.len(),
        })
    }

    fn noise_var(&self) -> T {
        self.noise_var
    }
}

/// Runtime knobs shared by every engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    /// Hard cap on loop steps per phase.
    pub step_cap: u64,
    /// Recompute tracked weights every `weight_refresh` steps.
    pub weight_refresh: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            step_cap: 10_000_000,
            weight_refresh: 1,
        }
    }
}

/// Per-phase sampling engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    /// Heteroscedastic track-and-stop.
    Hts,
    /// Track-and-stop with a plug-in common variance.
    Ts,
    /// Round-robin sampling with heteroscedastic GLR stopping.
    Eba,
}

/// Outcome of one single-phase identification run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome<T> {
    /// Total pulls, initialization included.
    pub tau: u64,
    /// Pulls made after initialization.
    pub tau_delta: u64,
    /// 0-based index of the recommended arm.
    pub chosen: usize,
    pub means: Vec<T>,
    pub counts: Vec<u64>,
    /// Largest `|Σ ŵ − 1|` or negative weight seen while tracking.
    pub max_simplex_error: f64,
}

/// Heteroscedastic track-and-stop on `arms`.
pub fn htands<T, O, R>(
    oracle: &mut O,
    arms: &[ArmSet],
    cfg: &GlrConfig,
    run: &RunConfig,
    rng: &mut R,
) -> Result<PhaseOutcome<T>, AlgoError>
where
    T: Scalar,
    O: RewardOracle<T>,
    R: Rng + ?Sized,
{
    run_phase(Engine::Hts, oracle, arms, cfg, run, rng)
}

/// Track-and-stop with quadratic divergences at variance `2σ²·max μ̂`.
pub fn ts_baseline<T, O, R>(
    oracle: &mut O,
    arms: &[ArmSet],
    cfg: &GlrConfig,
    run: &RunConfig,
    rng: &mut R,
) -> Result<PhaseOutcome<T>, AlgoError>
where
    T: Scalar,
    O: RewardOracle<T>,
    R: Rng + ?Sized,
{
    run_phase(Engine::Ts, oracle, arms, cfg, run, rng)
}

/// Round-robin sampling, stopped by the heteroscedastic GLR.
pub fn eba<T, O, R>(
    oracle: &mut O,
    arms: &[ArmSet],
    cfg: &GlrConfig,
    run: &RunConfig,
    rng: &mut R,
) -> Result<PhaseOutcome<T>, AlgoError>
where
    T: Scalar,
    O: RewardOracle<T>,
    R: Rng + ?Sized,
{
    run_phase(Engine::Eba, oracle, arms, cfg, run, rng)
}

/// Stopping statistic for `engine` on the current state.
fn statistic<T: Scalar>(engine: Engine, state: &TrackingState<T>, sigma2: T) -> T {
    match engine {
        Engine::Hts | Engine::Eba => {
            glr_statistic(state.means(), state.counts(), &Heteroscedastic { sigma2 }).z
        }
        Engine::Ts => match plug_in_variance(state.means(), sigma2) {
            Some(variance) => {
                glr_statistic(state.means(), state.counts(), &Homoscedastic { variance }).z
            }
            None => T::zero(),
        },
    }
}

fn plug_in_variance<T: Scalar>(means: &[T], sigma2: T) -> Option<T> {
    let top = means.iter().copied().fold(T::neg_infinity(), T::max);
    let v = T::two() * sigma2 * top;
    (v > T::zero() && v.is_finite()).then_some(v)
}

/// Optimal weights at the empirical means, or `None` when the solver cannot
/// produce them (tied or non-positive leader).
fn tracked_weights<T: Scalar>(engine: Engine, means: &[T], sigma2: T) -> Option<Vec<T>> {
    match engine {
        Engine::Hts => {
            let div = Heteroscedastic { sigma2 };
            let leader = means[argmax(means)?];
            if leader <= T::zero() {
                return None;
            }
            let clamped: Vec<T> = means.iter().map(|&m| div.admissible(m, leader)).collect();
            solve_weights(&clamped, &div).ok().map(|s| s.weights)
        }
        Engine::Ts => {
            let variance = plug_in_variance(means, sigma2)?;
            solve_weights(means, &Homoscedastic { variance })
                .ok()
                .map(|s| s.weights)
        }
        Engine::Eba => None,
    }
}

fn simplex_error<T: Scalar>(w: &[T]) -> f64 {
    let sum: f64 = w.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).sum();
    let neg = w
        .iter()
        .map(|x| -x.to_f64().unwrap_or(f64::NAN))
        .fold(0.0, f64::max);
    (sum - 1.0).abs().max(neg)
}

/// Shared loop: one initialization pull per arm, then sample by the engine's
/// rule until `Z > β(t)`.
pub fn run_phase<T, O, R>(
    engine: Engine,
    oracle: &mut O,
    arms: &[ArmSet],
    cfg: &GlrConfig,
    run: &RunConfig,
    rng: &mut R,
) -> Result<PhaseOutcome<T>, AlgoError>
where
    T: Scalar,
    O: RewardOracle<T>,
    R: Rng + ?Sized,
{
    let n = arms.len();
    if n < 2 {
        return Err(AlgoError::TooFewArms(n));
    }
    cfg.validate()?;
    let sigma2 = oracle.noise_var();
    let mut state = TrackingState::new(n);
    for (i, &a) in arms.iter().enumerate() {
        state.record(i, oracle.sample(a, rng)?);
    }

    let uniform = T::one() / T::from_count(n as u64);
    let mut weights = vec![uniform; n];
    let mut max_simplex_error = 0.0f64;
    let refresh = run.weight_refresh.max(1);
    let half_arms = n as f64 / 2.0;
    let mut z = statistic(engine, &state, sigma2);
    if engine != Engine::Eba {
        if let Some(w) = tracked_weights(engine, state.means(), sigma2) {
            weights = w;
        }
        max_simplex_error = max_simplex_error.max(simplex_error(&weights));
    }

    let mut t: u64 = 1;
    loop {
        if z.to_f64().unwrap_or(0.0) > threshold(t, cfg) {
            break;
        }
        if t > run.step_cap {
            return Err(AlgoError::StepCap {
                cap: run.step_cap,
                arms: n,
            });
        }
        let arm = match engine {
            Engine::Eba => ((t - 1) % n as u64) as usize,
            _ => {
                let floor = ((t as f64).sqrt() - half_arms).max(0.0);
                if state.min_count() as f64 <= floor {
                    state.least_pulled()
                } else {
                    direct_tracking(t, &weights, state.counts())
                }
            }
        };
        state.record(arm, oracle.sample(arms[arm], rng)?);
        z = statistic(engine, &state, sigma2);
        if engine != Engine::Eba && t.is_multiple_of(refresh) {
            if let Some(w) = tracked_weights(engine, state.means(), sigma2) {
                weights = w;
            }
            max_simplex_error = max_simplex_error.max(simplex_error(&weights));
        }
        t += 1;
    }

    let tau_delta = t - 1;
    Ok(PhaseOutcome {
        tau: n as u64 + tau_delta,
        tau_delta,
        chosen: state.leader(),
        means: state.means().to_vec(),
        counts: state.counts().to_vec(),
        max_simplex_error,
    })
}

/// `argmax_i (t·ŵ_i − T_i)`, lowest index on ties.
fn direct_tracking<T: Scalar>(t: u64, weights: &[T], counts: &[u64]) -> usize {
    let tt = T::from_count(t);
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for (i, (&w, &c)) in weights.iter().zip(counts).enumerate() {
        let v = tt * w - T::from_count(c);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Risk budget of a two-phase run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRisks {
    pub alpha: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl PhaseRisks {
    /// Even split of `delta` between the phases.
    pub fn even(delta: f64) -> Self {
        Self {
            alpha: 1.0,
            delta1: delta / 2.0,
            delta2: delta / 2.0,
        }
    }

    pub fn checked(alpha: f64, delta1: f64, delta2: f64, delta: f64) -> Result<Self, AlgoError> {
        if (delta1 + delta2 - delta).abs() > 1e-12 * delta.max(1.0) {
            return Err(AlgoError::RiskSplit {
                delta1,
                delta2,
                delta,
            });
        }
        Ok(Self {
            alpha,
            delta1,
            delta2,
        })
    }

    pub fn phase1(&self) -> Result<GlrConfig, AlgoError> {
        Ok(GlrConfig::new(self.alpha, self.delta1)?)
    }

    pub fn phase2(&self) -> Result<GlrConfig, AlgoError> {
        Ok(GlrConfig::new(self.alpha, self.delta2)?)
    }
}

/// Result of a complete identification run over base arms.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoResult {
    /// 1-based recommended base arm.
    pub chosen_arm: usize,
    pub tau: u64,
    pub phase_taus: Vec<u64>,
    pub phase_tau_deltas: Vec<u64>,
    /// Pull counts per arm at each phase's stop.
    pub phase_counts: Vec<Vec<u64>>,
    /// Arm sets of each phase.
    pub phase_arms: Vec<Vec<ArmSet>>,
    pub max_simplex_error: f64,
}

/// Base arms of Phase II given the selected super arm `g_star` (0-based
/// index into `groups`) and the Phase I means.
pub fn phase_two_arms<T: Scalar>(
    groups: &[ArmSet],
    super_means: &[T],
    g_star: usize,
    k: usize,
    j: usize,
    overlapping: bool,
) -> Vec<ArmSet> {
    let g = groups.len();
    let window = if overlapping {
        // S_{g*}-centred window of 2J arms, clipped to the codebook
        let own = groups[g_star];
        let lo = own.first() as i64 - (j / 2) as i64;
        let hi = own.last() as i64 + j.div_ceil(2) as i64;
        let (mut lo, mut hi) = (lo.max(1) as usize, (hi as usize).min(k));
        let want = (2 * j).min(k);
        while hi - lo + 1 < want {
            if lo > 1 {
                lo -= 1;
            } else if hi < k {
                hi += 1;
            } else {
                break;
            }
        }
        while hi - lo + 1 > want {
            // trim the side further from the selected group's centre
            let centre2 = own.first() + own.last();
            if lo + hi > centre2 {
                hi -= 1;
            } else {
                lo += 1;
            }
        }
        ArmSet::new(lo, hi).unwrap()
    } else {
        let neighbour = match (
            g_star.checked_sub(1),
            (g_star + 1 < g).then_some(g_star + 1),
        ) {
            (Some(left), Some(right)) => {
                if super_means[right] >= super_means[left] {
                    right
                } else {
                    left
                }
            }
            (Some(left), None) => left,
            (None, Some(right)) => right,
            (None, None) => g_star,
        };
        let (a, b) = (groups[g_star.min(neighbour)], groups[g_star.max(neighbour)]);
        ArmSet::new(a.first(), b.last()).unwrap()
    };
    window
        .labels()
        .map(|l| ArmSet::single(l).unwrap())
        .collect()
}

/// Two-phase identification: `engine` on the `ceil(K/J)` super arms with
/// `δ₁`, then on the base arms of the winner and a neighbour with `δ₂`.
#[allow(clippy::too_many_arguments)]
pub fn two_phase<T, O, R>(
    engine: Engine,
    oracle: &mut O,
    k: usize,
    j: usize,
    risks: &PhaseRisks,
    run: &RunConfig,
    rng: &mut R,
    overlapping: bool,
) -> Result<AlgoResult, AlgoError>
where
    T: Scalar,
    O: RewardOracle<T>,
    R: Rng + ?Sized,
{
    if j == 0 || k < 2 || j > k {
        return Err(AlgoError::Grouping { k, j });
    }
    let groups = partition(k, j);
    if groups.len() < 2 {
        return Err(AlgoError::Grouping { k, j });
    }
    let p1 = run_phase(engine, oracle, &groups, &risks.phase1()?, run, rng)?;
    let arms2 = phase_two_arms(&groups, &p1.means, p1.chosen, k, j, overlapping);
    let p2 = run_phase(engine, oracle, &arms2, &risks.phase2()?, run, rng)?;
    Ok(AlgoResult {
        chosen_arm: arms2[p2.chosen].first(),
        tau: p1.tau + p2.tau,
        phase_taus: vec![p1.tau, p2.tau],
        phase_tau_deltas: vec![p1.tau_delta, p2.tau_delta],
        phase_counts: vec![p1.counts, p2.counts],
        phase_arms: vec![groups, arms2],
        max_simplex_error: p1.max_simplex_error.max(p2.max_simplex_error),
    })
}

/// `engine` directly on all `k` base arms.
pub fn single_phase<T, O, R>(
    engine: Engine,
    oracle: &mut O,
    k: usize,
    cfg: &GlrConfig,
    run: &RunConfig,
    rng: &mut R,
) -> Result<AlgoResult, AlgoError>
where
    T: Scalar,
    O: RewardOracle<T>,
    R: Rng + ?Sized,
{
    let arms: Vec<ArmSet> = (1..=k).map(|l| ArmSet::single(l).unwrap()).collect();
    let p = run_phase(engine, oracle, &arms, cfg, run, rng)?;
    Ok(AlgoResult {
        chosen_arm: arms[p.chosen].first(),
        tau: p.tau,
        phase_taus: vec![p.tau],
        phase_tau_deltas: vec![p.tau_delta],
        phase_counts: vec![p.counts],
        phase_arms: vec![arms],
        max_simplex_error: p.max_simplex_error,
    })
}

/// The benchmarked algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Eba,
    Ts,
    Hts,
    Heba,
    TwoPhaseTs,
    TwoPhaseHtsOverlapping,
    TwoPhaseHts,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Eba,
        Algorithm::Ts,
        Algorithm::Hts,
        Algorithm::Heba,
        Algorithm::TwoPhaseTs,
        Algorithm::TwoPhaseHtsOverlapping,
        Algorithm::TwoPhaseHts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Eba => "EBA",
            Algorithm::Ts => "T&S",
            Algorithm::Hts => "HT&S",
            Algorithm::Heba => "HEBA",
            Algorithm::TwoPhaseTs => "2PT&S",
            Algorithm::TwoPhaseHtsOverlapping => "2PHT&S-overlapping",
            Algorithm::TwoPhaseHts => "2PHT&S",
        }
    }

    /// Stable identifier used to derive per-trial seeds.
    pub fn stable_id(self) -> u64 {
        match self {
            Algorithm::Eba => 1,
            Algorithm::Ts => 2,
            Algorithm::Hts => 3,
            Algorithm::Heba => 4,
            Algorithm::TwoPhaseTs => 5,
            Algorithm::TwoPhaseHtsOverlapping => 6,
            Algorithm::TwoPhaseHts => 7,
        }
    }

    pub fn is_two_phase(self) -> bool {
        matches!(
            self,
            Algorithm::Heba
                | Algorithm::TwoPhaseTs
                | Algorithm::TwoPhaseHts
                | Algorithm::TwoPhaseHtsOverlapping
        )
    }

    pub fn engine(self) -> Engine {
        match self {
            Algorithm::Eba | Algorithm::Heba => Engine::Eba,
            Algorithm::Ts | Algorithm::TwoPhaseTs => Engine::Ts,
            _ => Engine::Hts,
        }
    }

    /// Runs the algorithm on base arms `1..=k`.
    #[allow(clippy::too_many_arguments)]
    pub fn run<T, O, R>(
        self,
        oracle: &mut O,
        k: usize,
        j: usize,
        delta: f64,
        risks: &PhaseRisks,
        run: &RunConfig,
        rng: &mut R,
    ) -> Result<AlgoResult, AlgoError>
    where
        T: Scalar,
        O: RewardOracle<T>,
        R: Rng + ?Sized,
    {
        if self.is_two_phase() {
            let overlapping = self == Algorithm::TwoPhaseHtsOverlapping;
            two_phase(self.engine(), oracle, k, j, risks, run, rng, overlapping)
        } else {
            let cfg = GlrConfig::new(risks.alpha, delta)?;
            single_phase(self.engine(), oracle, k, &cfg, run, rng)
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown algorithm {0:?}")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "eba" => Algorithm::Eba,
            "ts" => Algorithm::Ts,
            "hts" => Algorithm::Hts,
            "heba" => Algorithm::Heba,
            "2pts" => Algorithm::TwoPhaseTs,
            "2phts" => Algorithm::TwoPhaseHts,
            "2phtsoverlapping" | "2phtsoverlap" => Algorithm::TwoPhaseHtsOverlapping,
            _ => return Err(UnknownAlgorithm(s.to_string())),
        })
    }
}
