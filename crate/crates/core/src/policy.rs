//! Budgeted Exploration policies and simple baselines.
//!
//! Every policy is driven one round at a time through [`Policy::step`], which
//! receives the reward observed for the arm chosen on the previous call. The
//! horizon is split into epochs; inside an epoch the explorers spend a reward
//! budget `B` before committing to one arm until the epoch ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::BanditInstance;

/// Budget and epoch length of a Budgeted Exploration policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeConfig {
    #[serde(rename = "B")]
    pub budget: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    /// Arm count, including the static arm.
    pub k: usize,
}

impl BeConfig {
    pub fn new(budget: f64, delta: f64, k: usize) -> Result<Self> {
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::Config(format!(
                "budget must be positive, got {budget}"
            )));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Config(format!(
                "epoch length must lie in (0, 1], got {delta}"
            )));
        }
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 arms, got {k}")));
        }
        Ok(Self { budget, delta, k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningStyle {
    Theoretical,
    Experiment,
}

/// Parameter schedules for horizon `T` (natural logarithms throughout).
///
/// * theoretical, β=1: `Δ = L^{-2/3} T^{-1/3} ln^{1/3} T`, `B = L^{-1/3} T^{1/3} ln^{2/3} T`
/// * theoretical, β=2: `Δ = L^{-2/5} T^{-1/5} ln^{1/5} T`, `B = L^{-1/5} T^{2/5} ln^{3/5} T`
/// * experiment: `(T^{1/3}, T^{-1/3})` for β=1 and `(T^{2/5}, T^{-1/5})` for β=2
/// * `k > 2` arms: `Δ = k^{-3/5} T^{-2/5} (ln T ln k)^{1/5}`, `B = (ΔT ln T ln k / k)^{1/2}`
pub fn default_params(
    beta: u32,
    horizon: u64,
    lipschitz: f64,
    k: usize,
    style: TuningStyle,
) -> Result<BeConfig> {
    if horizon < 16 {
        return Err(Error::Config(format!("horizon {horizon} is below 16")));
    }
    if !(beta == 1 || beta == 2) {
        return Err(Error::Config(format!(
            "schedules exist for beta in {{1, 2}}, got {beta}"
        )));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::Config(format!(
            "Lipschitz constant must be positive, got {lipschitz}"
        )));
    }
    let t = horizon as f64;
    let ln_t = t.ln();
    let (budget, delta) = if k > 2 {
        let kf = k as f64;
        let ln_k = kf.ln();
        let delta = kf.powf(-0.6) * t.powf(-0.4) * ln_t.powf(0.2) * ln_k.powf(0.2);
        let budget = (delta * t * ln_t * ln_k / kf).sqrt();
        (budget, delta)
    } else {
        match (style, beta) {
            (TuningStyle::Experiment, 1) => (t.powf(1.0 / 3.0), t.powf(-1.0 / 3.0)),
            (TuningStyle::Experiment, _) => (t.powf(0.4), t.powf(-0.2)),
            (TuningStyle::Theoretical, 1) => (
                lipschitz.powf(-1.0 / 3.0) * t.powf(1.0 / 3.0) * ln_t.powf(2.0 / 3.0),
                lipschitz.powf(-2.0 / 3.0) * t.powf(-1.0 / 3.0) * ln_t.powf(1.0 / 3.0),
            ),
            (TuningStyle::Theoretical, _) => (
                lipschitz.powf(-0.2) * t.powf(0.4) * ln_t.powf(0.6),
                lipschitz.powf(-0.4) * t.powf(-0.2) * ln_t.powf(0.2),
            ),
        }
    };
    if delta >= 1.0 {
        return Err(Error::Config(format!(
            "epoch length {delta:.4} >= 1 leaves a single epoch"
        )));
    }
    if budget >= delta * t {
        return Err(Error::Config(format!(
            "budget {budget:.2} is not below the epoch length {:.2} rounds",
            delta * t
        )));
    }
    BeConfig::new(budget, delta, k.max(2))
}

/// Epoch boundaries `t_i = floor(i T / m)` with `m = ceil(1 / Δ)`.
///
/// Epoch `i` covers rounds `t_i + 1 ..= t_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochLayout {
    horizon: u64,
    boundaries: Vec<u64>,
}

impl EpochLayout {
    pub fn new(horizon: u64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Config(format!(
                "epoch length must lie in (0, 1], got {delta}"
            )));
        }
        let inverse = 1.0 / delta;
        // absorb rounding when 1/Δ is meant to be an integer
        let m = if (inverse - inverse.round()).abs() < 1e-9 {
            inverse.round()
        } else {
            inverse.ceil()
        } as u64;
        Self::with_epochs(horizon, m)
    }

    pub fn with_epochs(horizon: u64, epochs: u64) -> Result<Self> {
        if epochs == 0 || epochs > horizon {
            return Err(Error::Config(format!(
                "{epochs} epochs cannot partition a horizon of {horizon} rounds"
            )));
        }
        let boundaries = (0..=epochs)
            .map(|i| ((u128::from(i) * u128::from(horizon)) / u128::from(epochs)) as u64)
            .collect();
        Ok(Self {
            horizon,
            boundaries,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn epochs(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    /// Rounds `(first, last)` of epoch `i`, inclusive.
    pub fn rounds(&self, i: usize) -> (u64, u64) {
        (self.boundaries[i] + 1, self.boundaries[i + 1])
    }

    pub fn len_of(&self, i: usize) -> u64 {
        self.boundaries[i + 1] - self.boundaries[i]
    }

    /// Normalized-time interval `[t_i / T, t_{i+1} / T]`.
    pub fn normalized(&self, i: usize) -> (f64, f64) {
        let t = self.horizon as f64;
        (
            self.boundaries[i] as f64 / t,
            self.boundaries[i + 1] as f64 / t,
        )
    }

    pub fn epoch_of(&self, t: u64) -> Option<usize> {
        if t == 0 || t > self.horizon {
            return None;
        }
        Some(self.boundaries.partition_point(|&b| b < t) - 1)
    }
}

/// A sequential decision rule over arms `0..k`.
pub trait Policy: Send {
    /// Chooses the arm for round `t`. `last_reward` is the reward of the arm
    /// chosen on the previous call and must be absent only on the first call.
    fn step(&mut self, t: u64, last_reward: Option<f64>) -> Result<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Commit(usize),
}

/// Round bookkeeping shared by every policy: ordering checks and epoch tracking.
#[derive(Debug, Clone)]
struct Clock {
    layout: Option<EpochLayout>,
    last_t: u64,
    last_arm: usize,
    epoch: usize,
    epoch_end: u64,
}

impl Clock {
    fn new(layout: Option<EpochLayout>) -> Self {
        let epoch_end = layout.as_ref().map_or(u64::MAX, |l| l.boundaries[1]);
        Self {
            layout,
            last_t: 0,
            last_arm: 0,
            epoch: 0,
            epoch_end,
        }
    }

    /// Validates the call and returns the reward owed to the previous arm.
    fn advance(&mut self, t: u64, last_reward: Option<f64>) -> Result<Option<(usize, f64)>> {
        if t != self.last_t + 1 {
            return Err(Error::State(format!(
                "expected round {}, got {t}",
                self.last_t + 1
            )));
        }
        if let Some(layout) = &self.layout {
            if t > layout.horizon {
                return Err(Error::State(format!(
                    "round {t} beyond horizon {}",
                    layout.horizon
                )));
            }
        }
        let owed = match (self.last_t, last_reward) {
            (0, None) => None,
            (0, Some(_)) => {
                return Err(Error::State(
                    "reward supplied before any arm was played".into(),
                ))
            }
            (_, None) => {
                return Err(Error::State(format!(
                    "missing reward for round {}",
                    self.last_t
                )))
            }
            (_, Some(r)) => Some((self.last_arm, r)),
        };
        self.last_t = t;
        Ok(owed)
    }

    /// True when `t` (already validated) opens a new epoch.
    fn roll_epoch(&mut self, t: u64) -> bool {
        let Some(layout) = &self.layout else {
            return false;
        };
        if t <= self.epoch_end {
            return false;
        }
        while t > self.epoch_end {
            self.epoch += 1;
            self.epoch_end = layout.boundaries[self.epoch + 1];
        }
        true
    }

    fn played(&mut self, arm: usize) -> usize {
        self.last_arm = arm;
        arm
    }
}

/// One-armed explorer: pull arm 1 until the epoch's cumulative reward
/// (measured against the static arm's level) falls to `-B`, then arm 0.
#[derive(Debug, Clone)]
pub struct Be1 {
    budget: f64,
    baseline: f64,
    clock: Clock,
    phase: Phase,
    cumulative: f64,
    pulls: u64,
}

impl Be1 {
    pub fn new(config: &BeConfig, horizon: u64) -> Result<Self> {
        Self::with_baseline(config, horizon, 0.0)
    }

    /// `baseline` is the known mean of the static arm 0; rewards of arm 1 are
    /// accumulated relative to it.
    pub fn with_baseline(config: &BeConfig, horizon: u64, baseline: f64) -> Result<Self> {
        let layout = EpochLayout::new(horizon, config.delta)?;
        Ok(Self {
            budget: config.budget,
            baseline,
            clock: Clock::new(Some(layout)),
            phase: Phase::Explore,
            cumulative: 0.0,
            pulls: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn epoch(&self) -> usize {
        self.clock.epoch
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }
}

impl Policy for Be1 {
    fn step(&mut self, t: u64, last_reward: Option<f64>) -> Result<usize> {
        if let Some((arm, reward)) = self.clock.advance(t, last_reward)? {
            if arm == 1 && self.phase == Phase::Explore {
                self.cumulative += reward - self.baseline;
                self.pulls += 1;
                if self.cumulative <= -self.budget {
                    self.phase = Phase::Commit(0);
                }
            }
        }
        if self.clock.roll_epoch(t) {
            self.phase = Phase::Explore;
            self.cumulative = 0.0;
            self.pulls = 0;
        }
        let arm = match self.phase {
            Phase::Explore => 1,
            Phase::Commit(a) => a,
        };
        Ok(self.clock.played(arm))
    }
}

/// Two-armed explorer: alternate 0, 1 and commit to the leader once the
/// paired difference `|Σ (Z_0 - Z_1)|` exceeds `B`.
#[derive(Debug, Clone)]
pub struct Be2 {
    budget: f64,
    clock: Clock,
    phase: Phase,
    cumulative: [f64; 2],
    pulls: [u64; 2],
}

impl Be2 {
    pub fn new(config: &BeConfig, horizon: u64) -> Result<Self> {
        Ok(Self {
            budget: config.budget,
            clock: Clock::new(Some(EpochLayout::new(horizon, config.delta)?)),
            phase: Phase::Explore,
            cumulative: [0.0; 2],
            pulls: [0; 2],
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn pulls(&self) -> [u64; 2] {
        self.pulls
    }
}

impl Policy for Be2 {
    fn step(&mut self, t: u64, last_reward: Option<f64>) -> Result<usize> {
        if let Some((arm, reward)) = self.clock.advance(t, last_reward)? {
            if self.phase == Phase::Explore {
                self.cumulative[arm] += reward;
                self.pulls[arm] += 1;
                if arm == 1 {
                    let diff = self.cumulative[0] - self.cumulative[1];
                    if diff.abs() > self.budget {
                        let leader = if self.cumulative[0] >= self.cumulative[1] {
                            0
                        } else {
                            1
                        };
                        self.phase = Phase::Commit(leader);
                    }
                }
            }
        }
        if self.clock.roll_epoch(t) {
            self.phase = Phase::Explore;
            self.cumulative = [0.0; 2];
            self.pulls = [0; 2];
        }
        let arm = match self.phase {
            Phase::Explore => usize::from(self.pulls[0] > self.pulls[1]),
            Phase::Commit(a) => a,
        };
        Ok(self.clock.played(arm))
    }
}

/// k-armed explorer: round-robin over surviving arms; after each full cycle
/// drop every arm trailing the leader by more than `B`.
#[derive(Debug, Clone)]
pub struct BeK {
    budget: f64,
    k: usize,
    clock: Clock,
    phase: Phase,
    active: Vec<usize>,
    cursor: usize,
    cumulative: Vec<f64>,
}

impl BeK {
    pub fn new(config: &BeConfig, horizon: u64) -> Result<Self> {
        let k = config.k;
        Ok(Self {
            budget: config.budget,
            k,
            clock: Clock::new(Some(EpochLayout::new(horizon, config.delta)?)),
            phase: Phase::Explore,
            active: (0..k).collect(),
            cursor: 0,
            cumulative: vec![0.0; k],
        })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    fn eliminate(&mut self) {
        let best = self
            .active
            .iter()
            .map(|&a| self.cumulative[a])
            .fold(f64::NEG_INFINITY, f64::max);
        let budget = self.budget;
        let cumulative = &self.cumulative;
        self.active.retain(|&a| best - cumulative[a] <= budget);
        if let [only] = self.active[..] {
            self.phase = Phase::Commit(only);
        }
    }
}

impl Policy for BeK {
    fn step(&mut self, t: u64, last_reward: Option<f64>) -> Result<usize> {
        if let Some((arm, reward)) = self.clock.advance(t, last_reward)? {
            if self.phase == Phase::Explore {
                self.cumulative[arm] += reward;
                self.cursor += 1;
                if self.cursor == self.active.len() {
                    self.cursor = 0;
                    self.eliminate();
                }
            }
        }
        if self.clock.roll_epoch(t) {
            self.phase = Phase::Explore;
            self.active = (0..self.k).collect();
            self.cursor = 0;
            self.cumulative.iter_mut().for_each(|c| *c = 0.0);
        }
        let arm = match self.phase {
            Phase::Explore => self.active[self.cursor],
            Phase::Commit(a) => a,
        };
        Ok(self.clock.played(arm))
    }
}

/// Plays `argmax_a μ_a(t / T)`, ties to the lowest index.
#[derive(Debug, Clone)]
pub struct Oracle {
    instance: BanditInstance,
    clock: Clock,
}

impl Oracle {
    pub fn new(instance: BanditInstance) -> Self {
        Self {
            instance,
            clock: Clock::new(None),
        }
    }
}

impl Policy for Oracle {
    fn step(&mut self, t: u64, last_reward: Option<f64>) -> Result<usize> {
        self.clock.advance(t, last_reward)?;
        let mut best = (0, f64::NEG_INFINITY);
        for a in 0..self.instance.arm_count() {
            let m = self.instance.mean(a, t)?;
            if m > best.1 {
                best = (a, m);
            }
        }
        Ok(self.clock.played(best.0))
    }
}

#[derive(Debug, Clone)]
pub struct FixedArm {
    arm: usize,
    clock: Clock,
}

impl FixedArm {
    pub fn new(arm: usize) -> Self {
        Self {
            arm,
            clock: Clock::new(None),
        }
    }
}

impl Policy for FixedArm {
    fn step(&mut self, t: u64, last_reward: Option<f64>) -> Result<usize> {
        self.clock.advance(t, last_reward)?;
        Ok(self.clock.played(self.arm))
    }
}

/// Serializable policy description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum PolicySpec {
    Be1 {
        #[serde(rename = "B")]
        budget: f64,
        #[serde(rename = "Delta")]
        delta: f64,
    },
    Be2 {
        #[serde(rename = "B")]
        budget: f64,
        #[serde(rename = "Delta")]
        delta: f64,
    },
    Bek {
        #[serde(rename = "B")]
        budget: f64,
        #[serde(rename = "Delta")]
        delta: f64,
        k: usize,
    },
    Oracle,
    Fixed {
        arm: usize,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Be1 { .. } => "be1",
            PolicySpec::Be2 { .. } => "be2",
            PolicySpec::Bek { .. } => "bek",
            PolicySpec::Oracle => "oracle",
            PolicySpec::Fixed { .. } => "fixed",
        }
    }

    /// `(B, Δ)` for the explorers.
    pub fn parameters(&self) -> Option<(f64, f64)> {
        match *self {
            PolicySpec::Be1 { budget, delta }
            | PolicySpec::Be2 { budget, delta }
            | PolicySpec::Bek { budget, delta, .. } => Some((budget, delta)),
            _ => None,
        }
    }

    /// Instantiates the policy for `instance`, checking arm counts.
    pub fn build(&self, instance: &BanditInstance) -> Result<Box<dyn Policy>> {
        let arms = instance.arm_count();
        let horizon = instance.horizon();
        let two_armed = |name: &str| {
            if arms != 2 {
                Err(Error::Config(format!(
                    "{name} needs a 2-armed instance, got {arms} arms"
                )))
            } else {
                Ok(())
            }
        };
        Ok(match *self {
            PolicySpec::Be1 { budget, delta } => {
                two_armed("be1")?;
                let baseline = instance
                    .static_level()
                    .ok_or_else(|| Error::Config("be1 needs a constant arm 0".into()))?;
                Box::new(Be1::with_baseline(
                    &BeConfig::new(budget, delta, 2)?,
                    horizon,
                    baseline,
                )?)
            }
            PolicySpec::Be2 { budget, delta } => {
                two_armed("be2")?;
                Box::new(Be2::new(&BeConfig::new(budget, delta, 2)?, horizon)?)
            }
            PolicySpec::Bek { budget, delta, k } => {
                if k != arms {
                    return Err(Error::Config(format!(
                        "bek configured for {k} arms, instance has {arms}"
                    )));
                }
                Box::new(BeK::new(&BeConfig::new(budget, delta, k)?, horizon)?)
            }
            PolicySpec::Oracle => Box::new(Oracle::new(instance.clone())),
            PolicySpec::Fixed { arm } => {
                if arm >= arms {
                    return Err(Error::Config(format!(
                        "fixed arm {arm} out of range for {arms} arms"
                    )));
                }
                Box::new(FixedArm::new(arm))
            }
        })
    }
}
