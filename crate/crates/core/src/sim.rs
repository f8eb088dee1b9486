//! Episode simulation with ±1 rewards, regret accounting, and Monte-Carlo probes.
//!
//! Randomness is keyed by `(master_seed, trial_index)`. Each trial owns one
//! generator that emits a single uniform per round; the reward of whichever arm
//! is played is derived from that uniform, so two policies run with the same
//! key see common random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::{Be1, BeConfig, EpochLayout, Policy, PolicySpec};
use crate::reward::BanditInstance;

/// Largest horizon the quadratic clean-event scan accepts.
pub const MAX_SCAN_HORIZON: usize = 4096;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial_index`: `splitmix64(master ^ splitmix64(trial_index))`.
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(trial_index))
}

/// Combines several keys into one seed, e.g. `(master, horizon, instance)`.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter().fold(0x6A09_E667_F3BC_C908, |acc, &k| {
        splitmix64(acc ^ splitmix64(k))
    })
}

pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(master_seed, trial_index))
}

/// ±1 reward with `P[+1] = (1 + r) / 2` given a uniform `u` in `[0, 1)`.
#[inline]
pub fn reward_from_uniform(u: f64, mean: f64) -> f64 {
    if u < 0.5 * (1.0 + mean) {
        1.0
    } else {
        -1.0
    }
}

pub fn draw_reward<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<f64> {
    if !(mean.abs() <= 1.0) {
        return Err(Error::Domain(format!("reward mean {mean} outside [-1, 1]")));
    }
    Ok(reward_from_uniform(rng.gen::<f64>(), mean))
}

/// Arm means for rounds `1..=len`, evaluated once and shared across trials.
#[derive(Debug, Clone)]
pub struct MeanTable {
    means: Vec<Vec<f64>>,
    best: Vec<f64>,
}

impl MeanTable {
    pub fn new(instance: &BanditInstance, len: u64) -> Result<Self> {
        let horizon = instance.horizon();
        if len > horizon {
            return Err(Error::Domain(format!(
                "table length {len} exceeds horizon {horizon}"
            )));
        }
        let means: Vec<Vec<f64>> = instance
            .arms()
            .iter()
            .map(|curve| {
                (1..=len)
                    .map(|t| curve.value(t as f64 / horizon as f64))
                    .collect()
            })
            .collect();
        let best = (0..len as usize)
            .map(|i| means.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self { means, best })
    }

    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    /// Mean of `arm` at round `t` (1-based).
    #[inline]
    pub fn mean(&self, arm: usize, t: u64) -> f64 {
        self.means[arm][t as usize - 1]
    }

    #[inline]
    pub fn best(&self, t: u64) -> f64 {
        self.best[t as usize - 1]
    }
}

/// Runs rounds `1..=table.len()`, calling `on_round(t, arm, reward)` after each draw.
pub fn simulate<R, F>(
    table: &MeanTable,
    policy: &mut dyn Policy,
    rng: &mut R,
    mut on_round: F,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(u64, usize, f64),
{
    let mut last = None;
    for t in 1..=table.len() as u64 {
        let arm = policy.step(t, last)?;
        if arm >= table.arms() {
            return Err(Error::State(format!(
                "policy chose arm {arm} of {}",
                table.arms()
            )));
        }
        let reward = reward_from_uniform(rng.gen::<f64>(), table.mean(arm, t));
        on_round(t, arm, reward);
        last = Some(reward);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub master_seed: u64,
    pub trial_index: u64,
    pub instance: BanditInstance,
    pub policy: PolicySpec,
    pub record_trajectory: bool,
    /// Scan every arm's reward stream for clean-event violations (`T <= 4096`).
    pub scan_clean_event: bool,
}

impl RunConfig {
    pub fn new(
        instance: BanditInstance,
        policy: PolicySpec,
        master_seed: u64,
        trial_index: u64,
    ) -> Self {
        Self {
            master_seed,
            trial_index,
            instance,
            policy,
            record_trajectory: false,
            scan_clean_event: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub t: u64,
    pub arm: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub policy: PolicySpec,
    pub horizon: u64,
    pub realized_regret: f64,
    pub mean_regret: f64,
    /// Mean regret per policy epoch (a single entry for epoch-free policies).
    pub per_epoch: Vec<f64>,
    pub pulls: Vec<u64>,
    pub clean_violations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryStep>>,
}

/// Simulates one trial of `config.policy` on `config.instance`.
pub fn run_episode(config: &RunConfig) -> Result<RegretReport> {
    let table = MeanTable::new(&config.instance, config.instance.horizon())?;
    run_with_table(config, &table)
}

/// As [`run_episode`] with precomputed means (the table must span the horizon).
pub fn run_with_table(config: &RunConfig, table: &MeanTable) -> Result<RegretReport> {
    let instance = &config.instance;
    let horizon = instance.horizon();
    if table.len() as u64 != horizon || table.arms() != instance.arm_count() {
        return Err(Error::Config(
            "mean table does not match the instance".into(),
        ));
    }
    let mut policy = config.policy.build(instance)?;
    let layout = match config.policy.parameters() {
        Some((_, delta)) => EpochLayout::new(horizon, delta)?,
        None => EpochLayout::with_epochs(horizon, 1)?,
    };
    let boundaries = layout.boundaries();

    let mut rng = trial_rng(config.master_seed, config.trial_index);
    let mut per_epoch = vec![0.0; layout.epochs()];
    let mut pulls = vec![0u64; instance.arm_count()];
    let mut realized = 0.0;
    let mut epoch = 0;
    let mut trajectory = config.record_trajectory.then(Vec::new);
    let mut uniforms = config.scan_clean_event.then(Vec::new);

    // the scan needs every arm's counterfactual reward, so keep the uniforms
    let mut recording_rng = RecordingRng {
        inner: &mut rng,
        record: uniforms.as_mut(),
    };
    simulate(
        table,
        policy.as_mut(),
        &mut recording_rng,
        |t, arm, reward| {
            while t > boundaries[epoch + 1] {
                epoch += 1;
            }
            let best = table.best(t);
            per_epoch[epoch] += best - table.mean(arm, t);
            realized += best - reward;
            pulls[arm] += 1;
            if let Some(tr) = trajectory.as_mut() {
                tr.push(TrajectoryStep { t, arm, reward });
            }
        },
    )?;

    let clean_violations = match uniforms {
        Some(us) => {
            if us.len() > MAX_SCAN_HORIZON {
                return Err(Error::Config(format!(
                    "clean-event scan limited to T <= {MAX_SCAN_HORIZON}, got {}",
                    us.len()
                )));
            }
            let log_t = (horizon as f64).ln();
            let mut total = 0;
            for arm in 0..table.arms() {
                let means: Vec<f64> = (1..=horizon).map(|t| table.mean(arm, t)).collect();
                let draws: Vec<f64> = us
                    .iter()
                    .zip(&means)
                    .map(|(&u, &m)| reward_from_uniform(u, m))
                    .collect();
                total += clean_event_scan(&means, &draws, log_t, None)?.two_sided;
            }
            Some(total)
        }
        None => None,
    };

    Ok(RegretReport {
        policy: config.policy,
        horizon,
        realized_regret: realized,
        mean_regret: per_epoch.iter().sum(),
        per_epoch,
        pulls,
        clean_violations,
        trajectory,
    })
}

/// Passes draws through while optionally keeping a copy of each uniform.
struct RecordingRng<'a, R: Rng + ?Sized> {
    inner: &'a mut R,
    record: Option<&'a mut Vec<f64>>,
}

impl<R: Rng + ?Sized> rand::RngCore for RecordingRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.inner.next_u64();
        if let Some(rec) = self.record.as_mut() {
            // mirrors rand's Standard f64: 53 high bits scaled into [0, 1)
            rec.push((v >> 11) as f64 * (1.0 / (1u64 << 53) as f64));
        }
        v
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; absent for fewer than 2 trials.
    pub stderr: Option<f64>,
    pub values: Vec<f64>,
}

impl MonteCarloSummary {
    /// Aggregates in index order so the result does not depend on scheduling.
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n as f64
        };
        let stderr = (n >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        });
        Self {
            mean,
            stderr,
            values,
        }
    }
}

/// Evaluates `trial(i)` for `i in 0..n_trials` on the rayon pool.
pub fn monte_carlo_values<F>(n_trials: u64, trial: F) -> Result<MonteCarloSummary>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let values = (0..n_trials)
        .into_par_iter()
        .map(&trial)
        .collect::<Result<Vec<f64>>>()?;
    Ok(MonteCarloSummary::from_values(values))
}

/// Mean regret of `config` over trials `0..n_trials`.
pub fn monte_carlo(config: &RunConfig, n_trials: u64) -> Result<MonteCarloSummary> {
    let table = MeanTable::new(&config.instance, config.instance.horizon())?;
    monte_carlo_values(n_trials, |i| {
        let mut c = config.clone();
        c.trial_index = i;
        c.record_trajectory = false;
        c.scan_clean_event = false;
        Ok(run_with_table(&c, &table)?.mean_regret)
    })
}

/// Mean regret of one trial over the rounds covered by `table` (no per-round bookkeeping).
pub fn trial_mean_regret(
    policy: &PolicySpec,
    instance: &BanditInstance,
    table: &MeanTable,
    master_seed: u64,
    trial_index: u64,
) -> Result<f64> {
    let mut p = policy.build(instance)?;
    let mut rng = trial_rng(master_seed, trial_index);
    let mut regret = 0.0;
    simulate(table, p.as_mut(), &mut rng, |t, arm, _| {
        regret += table.best(t) - table.mean(arm, t)
    })?;
    Ok(regret)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CleanScan {
    /// Intervals whose deviation sum exceeds the envelope.
    pub one_sided: u64,
    /// Intervals whose absolute deviation sum exceeds the envelope.
    pub two_sided: u64,
}

/// Envelope `sqrt(c log_T (t' - t))` with `c = 6`, or `6 ln k / k` for `k` arms.
pub fn clean_bound(log_t: f64, gap: u64, k_arms: Option<usize>) -> f64 {
    let factor = match k_arms {
        Some(k) => 6.0 * (k as f64).ln() / k as f64,
        None => 6.0,
    };
    (factor * log_t * gap as f64).sqrt()
}

/// Counts pairs `t < t'` with `t' - t >= 2 log_T` whose deviation sum
/// `Σ_{s=t}^{t'} (Z_s - r_s)` leaves the clean-event envelope.
pub fn clean_event_scan(
    means: &[f64],
    draws: &[f64],
    log_t: f64,
    k_arms: Option<usize>,
) -> Result<CleanScan> {
    if means.len() != draws.len() {
        return Err(Error::Domain(format!(
            "{} means but {} draws",
            means.len(),
            draws.len()
        )));
    }
    let n = means.len();
    if n > MAX_SCAN_HORIZON {
        return Err(Error::Domain(format!(
            "scan limited to {MAX_SCAN_HORIZON} rounds, got {n}"
        )));
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for (z, r) in draws.iter().zip(means) {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + (z - r));
    }
    let min_gap = (2.0 * log_t).ceil().max(1.0) as usize;
    let bounds: Vec<f64> = (0..n)
        .map(|g| clean_bound(log_t, g as u64, k_arms))
        .collect();
    let mut scan = CleanScan {
        one_sided: 0,
        two_sided: 0,
    };
    for start in 0..n {
        for end in (start + min_gap)..n {
            let dev = prefix[end + 1] - prefix[start];
            let bound = bounds[end - start];
            if dev > bound {
                scan.one_sided += 1;
            }
            if dev.abs() > bound {
                scan.two_sided += 1;
            }
        }
    }
    Ok(scan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CleanFrequency {
    pub mean: f64,
    pub horizon: usize,
    pub trials: u64,
    /// Trials with at least one two-sided violation.
    pub violating_trials: u64,
    /// Trials with at least one one-sided violation.
    pub violating_trials_one_sided: u64,
    pub fraction: f64,
    pub fraction_one_sided: f64,
}

/// Fraction of trials whose constant-mean reward stream breaks the clean event,
/// scanning all intervals with the natural-log envelope for horizon `horizon`.
pub fn clean_event_frequency(
    mean: f64,
    horizon: usize,
    trials: u64,
    master_seed: u64,
) -> Result<CleanFrequency> {
    if !(mean.abs() <= 1.0) {
        return Err(Error::Domain(format!("reward mean {mean} outside [-1, 1]")));
    }
    if !(2..=MAX_SCAN_HORIZON).contains(&horizon) {
        return Err(Error::Config(format!(
            "clean-event scan needs 2 <= T <= {MAX_SCAN_HORIZON}, got {horizon}"
        )));
    }
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let log_t = (horizon as f64).ln();
    let means = vec![mean; horizon];
    let flags: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i);
            let draws: Vec<f64> = (0..horizon)
                .map(|_| reward_from_uniform(rng.gen::<f64>(), mean))
                .collect();
            let scan = clean_event_scan(&means, &draws, log_t, None)?;
            Ok((scan.two_sided > 0, scan.one_sided > 0))
        })
        .collect::<Result<_>>()?;
    let two = flags.iter().filter(|f| f.0).count() as u64;
    let one = flags.iter().filter(|f| f.1).count() as u64;
    Ok(CleanFrequency {
        mean,
        horizon,
        trials,
        violating_trials: two,
        violating_trials_one_sided: one,
        fraction: two as f64 / trials as f64,
        fraction_one_sided: one as f64 / trials as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldEstimate {
    /// Mean of `Σ Z` over the exploration rounds of the first epoch.
    pub reward_sum: f64,
    /// Mean of `Σ r` over the same rounds.
    pub mean_sum: f64,
    pub reward_stderr: f64,
    pub mean_stderr: f64,
    /// `sqrt(se_Z² + se_r²)`.
    pub combined_stderr: f64,
    pub trials: u64,
}

/// Monte-Carlo estimate of both sides of Wald's identity for the first BE epoch
/// of a one-armed instance.
pub fn wald_probe(
    instance: &BanditInstance,
    config: &BeConfig,
    n_trials: u64,
    master_seed: u64,
) -> Result<WaldEstimate> {
    if instance.arm_count() != 2 {
        return Err(Error::Config(
            "the Wald probe needs a 2-armed instance".into(),
        ));
    }
    let baseline = instance
        .static_level()
        .ok_or_else(|| Error::Config("the Wald probe needs a constant arm 0".into()))?;
    let layout = EpochLayout::new(instance.horizon(), config.delta)?;
    let table = MeanTable::new(instance, layout.rounds(0).1)?;

    let pairs: Vec<(f64, f64)> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut policy = Be1::with_baseline(config, instance.horizon(), baseline)?;
            let mut rng = trial_rng(master_seed, i);
            let (mut z_sum, mut r_sum) = (0.0, 0.0);
            simulate(&table, &mut policy, &mut rng, |t, arm, reward| {
                if arm == 1 {
                    z_sum += reward;
                    r_sum += table.mean(1, t);
                }
            })?;
            Ok((z_sum, r_sum))
        })
        .collect::<Result<_>>()?;

    let z = MonteCarloSummary::from_values(pairs.iter().map(|p| p.0).collect());
    let r = MonteCarloSummary::from_values(pairs.iter().map(|p| p.1).collect());
    let (se_z, se_r) = (z.stderr.unwrap_or(0.0), r.stderr.unwrap_or(0.0));
    Ok(WaldEstimate {
        reward_sum: z.mean,
        mean_sum: r.mean,
        reward_stderr: se_z,
        mean_stderr: se_r,
        combined_stderr: (se_z * se_z + se_r * se_r).sqrt(),
        trials: n_trials,
    })
}
