//! Scenario configuration, Monte Carlo execution and report files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{AlgoError, Algorithm, BeamModel, BeamOracle, PhaseRisks, RunConfig};
use crate::bandit::{check_noise_condition, BanditInstance, InstanceError, NoiseReport};
use crate::channel::{
    build_codebook, import_channel, partition, synth_channel, ArmMeans, ArmSet, Channel,
    ChannelError, Codebook, PathSpec, SteeringConfig,
};
use crate::glr::{c_star_u, lower_bound, t_star_u, GlrError, UpperConstant};
use crate::scalar::argmax;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot parse {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("cannot write {path}: {msg}")]
    Write { path: PathBuf, msg: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Glr(#[from] GlrError),
    #[error(transparent)]
    Algo(#[from] AlgoError),
}

fn default_noise_dbm() -> f64 {
    -80.0
}
fn default_alpha() -> f64 {
    1.0
}
fn default_coherence_slots() -> u64 {
    14_000
}
fn default_step_cap() -> u64 {
    RunConfig::default().step_cap
}
fn default_weight_refresh() -> u64 {
    1
}

/// One experiment: geometry, SNR grid, risk budget and algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub steering: SteeringConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<PathSpec>,
    /// `re,im` channel file used instead of `paths`. Relative paths resolve
    /// against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_file: Option<PathBuf>,
    /// Explicit base-arm means (mW) for toy instances; supported by the
    /// condition and bound calculators only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub means: Vec<f64>,
    /// Large-scale gain applied to the channel power, in dB (negative for loss).
    #[serde(default)]
    pub path_loss_db: f64,
    /// Correlation length J; defaults to `2⌈K/N⌉ − 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_length: Option<usize>,
    pub snr_db_grid: Vec<f64>,
    #[serde(default = "default_noise_dbm")]
    pub noise_dbm: f64,
    pub delta: f64,
    /// `(δ₁, δ₂)`; defaults to an even split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_split: Option<[f64; 2]>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub trials: u64,
    pub seed: u64,
    pub algorithms: Vec<String>,
    #[serde(default = "default_coherence_slots")]
    pub coherence_slots: u64,
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
    #[serde(default = "default_weight_refresh")]
    pub weight_refresh: u64,
    /// Run 2PHT&S with the overlapping Phase II window.
    #[serde(default)]
    pub overlapping: bool,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config file, applies `KEY=VALUE` overrides and resolves the
    /// channel file relative to the config's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut table: toml::Table =
            text.parse()
                .map_err(|e: toml::de::Error| HarnessError::Parse {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Parse {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
        if let Some(file) = &cfg.channel_file {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.channel_file = Some(dir.join(file));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn j(&self) -> usize {
        self.correlation_length
            .unwrap_or_else(|| self.steering.correlation_length())
    }

    pub fn risks(&self) -> Result<PhaseRisks, HarnessError> {
        let [d1, d2] = self
            .delta_split
            .unwrap_or([self.delta / 2.0, self.delta / 2.0]);
        Ok(PhaseRisks::checked(self.alpha, d1, d2, self.delta)?)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            step_cap: self.step_cap,
            weight_refresh: self.weight_refresh,
        }
    }

    pub fn noise_mw(&self) -> f64 {
        10f64.powf(self.noise_dbm / 10.0)
    }

    /// Transmit power giving transmit SNR `snr_db` over the configured noise.
    pub fn tx_power_mw(&self, snr_db: f64) -> f64 {
        self.noise_mw() * 10f64.powf(snr_db / 10.0)
    }

    /// Parsed algorithm list; `overlapping` swaps 2PHT&S for its variant.
    pub fn algorithm_list(&self) -> Result<Vec<Algorithm>, HarnessError> {
        self.algorithms
            .iter()
            .map(|s| {
                let a: Algorithm = s
                    .parse()
                    .map_err(|e| HarnessError::Config(format!("{e}")))?;
                Ok(if self.overlapping && a == Algorithm::TwoPhaseHts {
                    Algorithm::TwoPhaseHtsOverlapping
                } else {
                    a
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.steering.validate()?;
        let sources = [
            !self.paths.is_empty(),
            self.channel_file.is_some(),
            !self.means.is_empty(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return bad("exactly one of `paths`, `channel_file` and `means` must be given".into());
        }
        if self.snr_db_grid.is_empty() {
            return bad("snr_db_grid is empty".into());
        }
        if self.snr_db_grid.iter().any(|s| !s.is_finite()) {
            return bad("snr_db_grid has a non-finite entry".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        self.risks()?.phase1()?;
        self.risks()?.phase2()?;
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.coherence_slots == 0 {
            return bad("coherence_slots must be positive".into());
        }
        let j = self.j();
        if j == 0 || j > self.steering.codebook_size {
            return bad(format!("correlation_length {j} out of range"));
        }
        if self.algorithm_list()?.is_empty() {
            return bad("no algorithms listed".into());
        }
        if !self.path_loss_db.is_finite() || !self.noise_dbm.is_finite() {
            return bad("path_loss_db and noise_dbm must be finite".into());
        }
        Ok(())
    }

    /// Channel with the large-scale gain applied.
    pub fn channel(&self) -> Result<Channel<f64>, HarnessError> {
        let raw = match &self.channel_file {
            Some(file) => import_channel(file, Some(self.steering.num_antennas))?,
            None => synth_channel(&self.paths, &self.steering)?,
        };
        Ok(raw.scaled_power(10f64.powf(self.path_loss_db / 10.0)))
    }
}

/// Applies one `KEY=VALUE` override. Dotted keys address nested tables. The
/// value is read as a TOML literal, falling back to a bare string; a scalar
/// assigned to an array-valued key becomes a one-element array, and a
/// comma-separated list becomes an array.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), HarnessError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(HarnessError::Config(format!(
            "override {spec:?} has an empty key"
        )));
    }
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().unwrap();
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{p} in {key} is not a table")))?;
    }
    let existing_is_array = matches!(cur.get(*last), Some(toml::Value::Array(_)));
    let mut value = parse_literal(raw);
    if existing_is_array && !matches!(value, toml::Value::Array(_)) {
        value = if raw.contains(',') {
            toml::Value::Array(raw.split(',').map(|s| parse_literal(s.trim())).collect())
        } else {
            toml::Value::Array(vec![value])
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Per-trial seed from the root seed and stable identifiers, independent of
/// execution order and of which other algorithms run.
pub fn trial_seed(root: u64, algorithm: Algorithm, snr_index: usize, trial: u64) -> u64 {
    let mut h = splitmix64(root ^ 0x5eed_0000_0000_0000);
    h = splitmix64(h ^ algorithm.stable_id());
    h = splitmix64(h ^ snr_index as u64);
    splitmix64(h ^ trial)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `(1 − τ/(T−τ))·log₂(1 + μ/σ²)`, or 0 once the overhead factor is non-positive.
pub fn effective_rate(tau: u64, coherence_slots: u64, mu: f64, sigma2: f64) -> f64 {
    assert!(coherence_slots > 0, "coherence time must be positive");
    if tau >= coherence_slots {
        return 0.0;
    }
    let factor = 1.0 - tau as f64 / (coherence_slots - tau) as f64;
    if factor <= 0.0 {
        return 0.0;
    }
    factor * (1.0 + mu / sigma2).log2()
}

/// True arm means of one SNR point.
#[derive(Debug, Clone)]
pub struct InstanceView {
    pub snr_db: f64,
    pub base: Vec<f64>,
    pub groups: Vec<ArmSet>,
    pub super_means: Vec<f64>,
    /// 1-based.
    pub best_base: usize,
    /// 1-based.
    pub best_super: usize,
    pub model: Arc<BeamModel<f64>>,
}

/// Means for every SNR of a scenario.
pub struct Prepared {
    pub cfg: ScenarioConfig,
    pub codebook: Codebook<f64>,
    pub points: Vec<InstanceView>,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    if !cfg.means.is_empty() {
        return Err(HarnessError::Config(
            "explicit `means` instances have no beam geometry; use paths or channel_file".into(),
        ));
    }
    let codebook = build_codebook::<f64>(&cfg.steering)?;
    let channel = cfg.channel()?;
    let groups = partition(cfg.steering.codebook_size, cfg.j());
    let sigma2 = cfg.noise_mw();
    let mut points = Vec::with_capacity(cfg.snr_db_grid.len());
    for &snr_db in &cfg.snr_db_grid {
        let p = cfg.tx_power_mw(snr_db);
        let base = ArmMeans::for_codebook(&channel, &codebook, p).mu;
        let super_means = ArmMeans::for_groups(&channel, &codebook, &groups, p)?.mu;
        let best_base = argmax(&base).unwrap() + 1;
        let best_super = argmax(&super_means).unwrap() + 1;
        points.push(InstanceView {
            snr_db,
            base,
            groups: groups.clone(),
            super_means,
            best_base,
            best_super,
            model: Arc::new(BeamModel {
                codebook: codebook.clone(),
                channel: channel.clone(),
                tx_power_mw: p,
                noise_var: sigma2,
            }),
        });
    }
    Ok(Prepared {
        cfg: cfg.clone(),
        codebook,
        points,
    })
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: String,
    pub snr_db: f64,
    pub trial: u64,
    pub seed: u64,
    pub tau: Option<u64>,
    pub tau_phase1: Option<u64>,
    pub tau_phase2: Option<u64>,
    pub chosen_arm: Option<usize>,
    pub correct: bool,
    /// Set when the run hit the step cap or otherwise failed.
    #[serde(skip)]
    pub failure: Option<String>,
    /// Post-initialization steps and smallest pull count per phase.
    #[serde(skip)]
    pub phase_floor: Vec<(u64, u64)>,
    #[serde(skip)]
    pub max_simplex_error: f64,
    /// Every phase's pull counts sum to its τ.
    #[serde(skip)]
    pub budget_ok: bool,
    #[serde(skip)]
    pub ear: f64,
}

/// Aggregate over the trials of one `(algorithm, SNR)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub snr_db: f64,
    pub trials: u64,
    pub mean_tau: f64,
    pub std_tau: f64,
    pub error_rate: f64,
    pub mean_ear: f64,
    #[serde(skip)]
    pub failures: u64,
}

/// Characteristic-time calculators at one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub scenario: String,
    pub snr_db: f64,
    pub lower_bound: Result<f64, String>,
    pub c_star_u_total: Result<f64, String>,
    pub t_star_u: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub summary: Vec<SummaryRow>,
    pub trials: Vec<TrialRecord>,
    pub bounds: Vec<BoundsRow>,
    pub noise: Vec<(f64, NoiseReport<f64>)>,
}

impl ScenarioReport {
    pub fn failures(&self) -> u64 {
        self.summary.iter().map(|r| r.failures).sum()
    }
}

/// Runs every `(algorithm, SNR, trial)` cell on the global rayon pool.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport, HarnessError> {
    let prepared = prepare(cfg)?;
    let algorithms = cfg.algorithm_list()?;
    let risks = cfg.risks()?;
    let run = cfg.run_config();
    let k = cfg.steering.codebook_size;
    let j = cfg.j();

    let noise = noise_reports(&prepared)?;
    for (snr, rep) in &noise {
        if !rep.holds {
            log::warn!("{}: large-noise condition violated at {snr} dB", cfg.name);
        }
    }

    let cells: Vec<(usize, usize, u64)> = algorithms
        .iter()
        .enumerate()
        .flat_map(|(a, _)| {
            (0..prepared.points.len()).flat_map(move |s| (0..cfg.trials).map(move |t| (a, s, t)))
        })
        .collect();

    let trials: Vec<TrialRecord> = cells
        .par_iter()
        .map(|&(a, s, t)| {
            let algorithm = algorithms[a];
            let point = &prepared.points[s];
            let seed = trial_seed(cfg.seed, algorithm, s, t);
            run_trial(algorithm, point, seed, t, k, j, cfg, &risks, &run)
        })
        .collect();

    let mut summary = Vec::new();
    for (a, alg) in algorithms.iter().enumerate() {
        for (s, point) in prepared.points.iter().enumerate() {
            let start = (a * prepared.points.len() + s) * cfg.trials as usize;
            let cell = &trials[start..start + cfg.trials as usize];
            summary.push(summarize(alg.name(), point.snr_db, cell));
        }
    }
    let bounds = bounds_rows(&prepared)?;
    Ok(ScenarioReport {
        summary,
        trials,
        bounds,
        noise,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    algorithm: Algorithm,
    point: &InstanceView,
    seed: u64,
    trial: u64,
    k: usize,
    j: usize,
    cfg: &ScenarioConfig,
    risks: &PhaseRisks,
    run: &RunConfig,
) -> TrialRecord {
    let mut oracle = BeamOracle::new(point.model.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = TrialRecord {
        algorithm: algorithm.name().to_string(),
        snr_db: point.snr_db,
        trial,
        seed,
        tau: None,
        tau_phase1: None,
        tau_phase2: None,
        chosen_arm: None,
        correct: false,
        failure: None,
        phase_floor: Vec::new(),
        max_simplex_error: 0.0,
        budget_ok: false,
        ear: 0.0,
    };
    match algorithm.run(&mut oracle, k, j, cfg.delta, risks, run, &mut rng) {
        Ok(res) => {
            rec.tau = Some(res.tau);
            rec.tau_phase1 = res.phase_taus.first().copied();
            rec.tau_phase2 = res.phase_taus.get(1).copied();
            rec.chosen_arm = Some(res.chosen_arm);
            rec.correct = res.chosen_arm == point.best_base;
            rec.phase_floor = res
                .phase_tau_deltas
                .iter()
                .zip(&res.phase_counts)
                .map(|(&d, c)| (d, c.iter().copied().min().unwrap_or(0)))
                .collect();
            rec.max_simplex_error = res.max_simplex_error;
            rec.budget_ok = res
                .phase_counts
                .iter()
                .zip(&res.phase_taus)
                .all(|(c, &t)| c.iter().sum::<u64>() == t);
            rec.ear = effective_rate(
                res.tau,
                cfg.coherence_slots,
                point.base[res.chosen_arm - 1],
                cfg.noise_mw(),
            );
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec
}

/// Mean and sample standard deviation of τ over completed trials; failed
/// trials count as errors.
pub fn summarize(algorithm: &str, snr_db: f64, cell: &[TrialRecord]) -> SummaryRow {
    let done: Vec<&TrialRecord> = cell.iter().filter(|r| r.tau.is_some()).collect();
    let taus: Vec<f64> = done.iter().map(|r| r.tau.unwrap() as f64).collect();
    let n = taus.len() as f64;
    let mean = if taus.is_empty() {
        f64::NAN
    } else {
        taus.iter().sum::<f64>() / n
    };
    let std = if taus.len() < 2 {
        0.0
    } else {
        (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let wrong = cell.iter().filter(|r| !r.correct).count() as f64;
    let ear = if done.is_empty() {
        0.0
    } else {
        done.iter().map(|r| r.ear).sum::<f64>() / n
    };
    SummaryRow {
        algorithm: algorithm.to_string(),
        snr_db,
        trials: cell.len() as u64,
        mean_tau: mean,
        std_tau: std,
        error_rate: if cell.is_empty() {
            0.0
        } else {
            wrong / cell.len() as f64
        },
        mean_ear: ear,
        failures: (cell.len() - done.len()) as u64,
    }
}

/// Base means of an explicit-means config at `snr_db`: the listed values
/// are taken at 0 dB and scale linearly with transmit power.
pub fn toy_means(cfg: &ScenarioConfig, snr_db: f64) -> Vec<f64> {
    let g = 10f64.powf(snr_db / 10.0);
    cfg.means.iter().map(|m| m * g).collect()
}

/// Large-noise condition per SNR for any config kind.
pub fn noise_for_config(
    cfg: &ScenarioConfig,
) -> Result<Vec<(f64, NoiseReport<f64>)>, HarnessError> {
    if cfg.means.is_empty() {
        return noise_reports(&prepare(cfg)?);
    }
    cfg.snr_db_grid
        .iter()
        .map(|&snr| {
            let inst = BanditInstance::new(toy_means(cfg, snr), cfg.noise_mw())?;
            Ok((snr, check_noise_condition(&inst)))
        })
        .collect()
}

/// Bound rows for any config kind. Explicit-means configs are a single phase,
/// so their upper constant is `c*_u` of the listed arms alone.
pub fn bounds_for_config(cfg: &ScenarioConfig) -> Result<Vec<BoundsRow>, HarnessError> {
    if cfg.means.is_empty() {
        return bounds_rows(&prepare(cfg)?);
    }
    let sigma2 = cfg.noise_mw();
    let show = |e: &dyn std::fmt::Display| e.to_string();
    Ok(cfg
        .snr_db_grid
        .iter()
        .map(|&snr| {
            let m = toy_means(cfg, snr);
            BoundsRow {
                scenario: cfg.name.clone(),
                snr_db: snr,
                lower_bound: BanditInstance::new(m.clone(), sigma2)
                    .map_err(|e| show(&e))
                    .and_then(|inst| lower_bound(&inst, cfg.delta).map_err(|e| show(&e))),
                c_star_u_total: match c_star_u(&m, sigma2) {
                    Ok(UpperConstant::Finite(v)) => Ok(v),
                    Ok(UpperConstant::Vacuous { .. }) => Err("vacuous".into()),
                    Err(e) => Err(show(&e)),
                },
                t_star_u: t_star_u(&m, sigma2).map_err(|e| show(&e)),
            }
        })
        .collect())
}

pub fn noise_reports(prepared: &Prepared) -> Result<Vec<(f64, NoiseReport<f64>)>, HarnessError> {
    let sigma2 = prepared.cfg.noise_mw();
    prepared
        .points
        .iter()
        .map(|p| {
            let inst = BanditInstance::new(positive(&p.base), sigma2)?;
            Ok((p.snr_db, check_noise_condition(&inst)))
        })
        .collect()
}

/// Exact-zero means (perfect nulls) are lifted to the smallest positive value
/// so the instance stays inside the heteroscedastic model.
fn positive(means: &[f64]) -> Vec<f64> {
    means.iter().map(|&m| m.max(f64::MIN_POSITIVE)).collect()
}

/// Base arms of Phase II when Phase I picks the true best super arm.
pub fn true_phase_two(point: &InstanceView, k: usize, j: usize) -> Vec<usize> {
    crate::algorithms::phase_two_arms(
        &point.groups,
        &point.super_means,
        point.best_super - 1,
        k,
        j,
        false,
    )
    .iter()
    .map(|a| a.first())
    .collect()
}

pub fn bounds_rows(prepared: &Prepared) -> Result<Vec<BoundsRow>, HarnessError> {
    let cfg = &prepared.cfg;
    let sigma2 = cfg.noise_mw();
    let k = cfg.steering.codebook_size;
    let j = cfg.j();
    let show = |e: &dyn std::fmt::Display| e.to_string();
    prepared
        .points
        .iter()
        .map(|p| {
            let base = positive(&p.base);
            let lb = BanditInstance::new(base.clone(), sigma2)
                .map_err(|e| show(&e))
                .and_then(|inst| lower_bound(&inst, cfg.delta).map_err(|e| show(&e)));
            let phase2: Vec<f64> = true_phase_two(p, k, j)
                .iter()
                .map(|&l| base[l - 1])
                .collect();
            let cu = match (
                c_star_u(&positive(&p.super_means), sigma2),
                c_star_u(&phase2, sigma2),
            ) {
                (Ok(UpperConstant::Finite(s)), Ok(UpperConstant::Finite(b))) => Ok(s + b),
                (Ok(_), Ok(_)) => Err("vacuous".to_string()),
                (Err(e), _) | (_, Err(e)) => Err(show(&e)),
            };
            Ok(BoundsRow {
                scenario: cfg.name.clone(),
                snr_db: p.snr_db,
                lower_bound: lb,
                c_star_u_total: cu,
                t_star_u: t_star_u(&base, sigma2).map_err(|e| show(&e)),
            })
        })
        .collect()
}

pub const SUMMARY_HEADER: &str = "algorithm,snr_db,trials,mean_tau,std_tau,error_rate,mean_ear";
pub const TRIALS_HEADER: &str =
    "algorithm,snr_db,trial,seed,tau,tau_phase1,tau_phase2,chosen_arm,correct";
pub const BOUNDS_HEADER: &str = "scenario,snr_db,lower_bound,c_star_u_total,t_star_u";

fn write_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Write {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn write_csv<I, F>(path: &Path, header: &str, rows: I, mut emit: F) -> Result<(), HarnessError>
where
    I: IntoIterator,
    F: FnMut(&mut csv::Writer<fs::File>, I::Item) -> Result<(), csv::Error>,
{
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| write_err(path, e))?;
    w.write_record(header.split(','))
        .map_err(|e| write_err(path, e))?;
    for r in rows {
        emit(&mut w, r).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

fn cell<T: ToString>(v: &Result<T, String>) -> String {
    match v {
        Ok(x) => x.to_string(),
        Err(m) => m.clone(),
    }
}

pub fn write_bounds(rows: &[BoundsRow], path: &Path) -> Result<(), HarnessError> {
    write_csv(path, BOUNDS_HEADER, rows, |w, r| {
        w.write_record([
            r.scenario.clone(),
            format!("{:?}", r.snr_db),
            cell(&r.lower_bound),
            cell(&r.c_star_u_total),
            cell(&r.t_star_u),
        ])
    })
}

/// Writes `summary.csv`, `trials.csv`, `bounds.csv` and `meta` into `out_dir`.
pub fn write_reports(
    cfg: &ScenarioConfig,
    report: &ScenarioReport,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    write_csv(
        &out_dir.join("summary.csv"),
        SUMMARY_HEADER,
        &report.summary,
        |w, r| w.serialize(r),
    )?;
    write_csv(
        &out_dir.join("trials.csv"),
        TRIALS_HEADER,
        &report.trials,
        |w, r| w.serialize(r),
    )?;
    write_bounds(&report.bounds, &out_dir.join("bounds.csv"))?;
    let meta_path = out_dir.join("meta");
    fs::write(&meta_path, meta_text(cfg)).map_err(|e| write_err(&meta_path, e))
}

/// Library version followed by the full effective configuration.
pub fn meta_text(cfg: &ScenarioConfig) -> String {
    let mut t = toml::Table::new();
    t.insert("version".into(), toml::Value::String(VERSION.into()));
    t.insert(
        "config".into(),
        toml::Value::try_from(cfg).expect("config serializes"),
    );
    format!(
        "# beam-bai {VERSION}\n{}",
        toml::to_string(&t).expect("config serializes")
    )
}

/// Reads back a `meta` file's configuration.
pub fn parse_meta(text: &str) -> Result<(String, ScenarioConfig), String> {
    let mut t: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    let version = t
        .remove("version")
        .and_then(|v| v.as_str().map(str::to_string))
        .ok_or("missing version")?;
    let cfg = t.remove("config").ok_or("missing config")?;
    Ok((
        version,
        cfg.try_into().map_err(|e: toml::de::Error| e.to_string())?,
    ))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    read_csv(path)
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    read_csv(path)
}

fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

/// `means.csv` content: base arms then super arms, one `kind,index,mean` row each.
pub fn means_csv(point: &InstanceView) -> String {
    let mut out = String::from("kind,index,mean\n");
    for (i, m) in point.base.iter().enumerate() {
        out.push_str(&format!("base,{},{m}\n", i + 1));
    }
    for (i, m) in point.super_means.iter().enumerate() {
        out.push_str(&format!("super,{},{m}\n", i + 1));
    }
    out
}
