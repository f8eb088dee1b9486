//! Divergence utilities and the greedy adaptive adversary over the bowl/red family.

use rayon::prelude::*;
use serde::Serialize;

use crate::construction::{delta_for, growth_constant, Color, ColorSeq, FamilySpec};
use crate::error::{Error, Result};
use crate::policy::PolicySpec;
use crate::reward::{BanditInstance, RewardCurve};
use crate::sim::{
    derive_seed, monte_carlo_values, simulate, trial_mean_regret, trial_rng, MeanTable,
    MonteCarloSummary,
};

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// KL divergence between ±1 variables with means `r1` and `r2`.
///
/// Returns `+∞` when `r2` is degenerate and differs from `r1`.
pub fn kl_pm1(r1: f64, r2: f64) -> Result<f64> {
    if !(r1.abs() <= 1.0) || !(r2.abs() <= 1.0) {
        return Err(Error::Domain(format!("means ({r1}, {r2}) outside [-1, 1]")));
    }
    if r1 == r2 {
        return Ok(0.0);
    }
    if r2.abs() == 1.0 {
        return Ok(f64::INFINITY);
    }
    let (p, q) = ((1.0 + r1) / 2.0, (1.0 + r2) / 2.0);
    let kl = xlogy(p, p / q) + xlogy(1.0 - p, (1.0 - p) / (1.0 - q));
    Ok(kl.max(0.0))
}

/// Largest event-probability gap compatible with a KL budget: `sqrt(kl / 2)`.
pub fn pinsker_gap(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(Error::Domain(format!(
            "KL divergence must be nonnegative, got {kl}"
        )));
    }
    Ok((kl / 2.0).sqrt())
}

/// KL of a product of independent coordinates is the sum of coordinate KLs.
pub fn kl_product(pairs: &[(f64, f64)]) -> Result<f64> {
    pairs.iter().map(|&(a, b)| kl_pm1(a, b)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distinguishability {
    pub delta: f64,
    /// `(2^{2β} C_β² / 3) δ^{2β} · 6δT`.
    pub kl_budget: f64,
    pub gap: f64,
}

/// Per-epoch KL budget between a red and a bowl epoch and its Pinsker gap.
pub fn epoch_distinguishability(beta: u32, horizon: u64) -> Result<Distinguishability> {
    let delta = delta_for(beta, horizon)?;
    distinguishability_at(beta, horizon, delta)
}

/// As [`epoch_distinguishability`] with an explicit `δ`.
pub fn distinguishability_at(beta: u32, horizon: u64, delta: f64) -> Result<Distinguishability> {
    let c = growth_constant(beta, 1.0)?;
    let b = beta as i32;
    let kl_budget =
        2f64.powi(2 * b) * c * c / 3.0 * delta.powi(2 * b) * 6.0 * delta * horizon as f64;
    Ok(Distinguishability {
        delta,
        kl_budget,
        gap: pinsker_gap(kl_budget)?,
    })
}

/// `(1/24) 2^{-β} C_β^{-2β/(2β+1)} T^{(β+1)/(2β+1)}`.
pub fn lb_value(beta: u32, horizon: u64) -> Result<f64> {
    let c = growth_constant(beta, 1.0)?;
    let b = f64::from(beta);
    Ok(2f64.powf(-b) / 24.0
        * c.powf(-2.0 * b / (2.0 * b + 1.0))
        * (horizon as f64).powf((b + 1.0) / (2.0 * b + 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversaryConfig {
    pub beta: u32,
    pub horizon: u64,
    /// Paired rollouts per color decision.
    pub rollouts: u64,
    /// Fresh-seed trials for the final regret estimate.
    pub final_trials: u64,
    pub master_seed: u64,
}

impl AdversaryConfig {
    pub fn new(beta: u32, horizon: u64, rollouts: u64, master_seed: u64) -> Result<Self> {
        let cfg = Self {
            beta,
            horizon,
            rollouts,
            final_trials: rollouts,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollouts < 10 {
            return Err(Error::Config(format!(
                "need at least 10 rollouts per decision, got {}",
                self.rollouts
            )));
        }
        if self.final_trials < 2 {
            return Err(Error::Config("need at least 2 final trials".into()));
        }
        delta_for(self.beta, self.horizon).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryReport {
    pub colors: ColorSeq,
    pub estimated_regret: f64,
    pub stderr: f64,
    pub lb_value: f64,
    pub ratio: f64,
    /// Estimated `Reg_j(bowl) - Reg_j(red)` behind each decision.
    pub decision_margins: Vec<f64>,
}

/// One-armed instance whose arm 1 follows the family member.
pub fn family_instance(spec: FamilySpec) -> Result<BanditInstance> {
    let horizon = spec.horizon();
    BanditInstance::one_armed(RewardCurve::family(spec)?, horizon)
}

/// Rounds `(first, last)` whose normalized time falls in family epoch `j`.
fn epoch_rounds(spec: &FamilySpec, j: usize) -> (u64, u64) {
    let (a, b) = spec.epoch_bounds(j);
    let t = spec.horizon() as f64;
    ((a * t).floor() as u64 + 1, (b * t).floor() as u64)
}

/// Mean regret accrued in family epoch `j` for one rollout.
fn epoch_regret(
    policy: &PolicySpec,
    instance: &BanditInstance,
    table: &MeanTable,
    first: u64,
    seed: u64,
    trial: u64,
) -> Result<f64> {
    let mut p = policy.build(instance)?;
    let mut rng = trial_rng(seed, trial);
    let mut regret = 0.0;
    simulate(table, p.as_mut(), &mut rng, |t, arm, _| {
        if t >= first {
            regret += table.best(t) - table.mean(arm, t);
        }
    })?;
    Ok(regret)
}

/// Total mean regret of `policy` on the family member `colors`.
pub fn evaluate_colors(
    policy: &PolicySpec,
    adv: &AdversaryConfig,
    colors: &ColorSeq,
    seed: u64,
    trials: u64,
) -> Result<MonteCarloSummary> {
    let spec = FamilySpec::new(adv.beta, adv.horizon, colors.clone())?;
    let instance = family_instance(spec)?;
    let table = MeanTable::new(&instance, adv.horizon)?;
    monte_carlo_values(trials, |i| {
        trial_mean_regret(policy, &instance, &table, seed, i)
    })
}

/// Builds a color sequence epoch by epoch, each time keeping the color whose
/// estimated epoch regret is larger given the colors fixed so far.
///
/// Both candidates of a decision are rolled out with the same trial seeds.
/// Ties go to red. The returned estimate uses seeds disjoint from the decisions.
pub fn greedy_adversary(policy: &PolicySpec, adv: &AdversaryConfig) -> Result<AdversaryReport> {
    adv.validate()?;
    let epochs = FamilySpec::epoch_count(adv.beta, adv.horizon)?;
    let mut colors: Vec<Color> = Vec::with_capacity(epochs);
    let mut margins = Vec::with_capacity(epochs);

    for j in 0..epochs {
        let seed = derive_seed(&[adv.master_seed, 0xD1CE, j as u64]);
        let mut candidates = Vec::with_capacity(2);
        for color in [Color::Red, Color::Bowl] {
            let mut prefix = colors.clone();
            prefix.push(color);
            let spec = FamilySpec::with_prefix(adv.beta, adv.horizon, &prefix)?;
            let (first, last) = epoch_rounds(&spec, j);
            let instance = family_instance(spec)?;
            let table = MeanTable::new(&instance, last)?;
            candidates.push((instance, table, first));
        }
        let diffs: Vec<f64> = (0..adv.rollouts)
            .into_par_iter()
            .map(|r| {
                let mut out = [0.0; 2];
                for (slot, (instance, table, first)) in out.iter_mut().zip(&candidates) {
                    *slot = epoch_regret(policy, instance, table, *first, seed, r)?;
                }
                Ok(out[1] - out[0])
            })
            .collect::<Result<_>>()?;
        let margin = MonteCarloSummary::from_values(diffs).mean;
        colors.push(if margin > 0.0 {
            Color::Bowl
        } else {
            Color::Red
        });
        margins.push(margin);
    }

    let colors = ColorSeq::new(colors)?;
    let final_seed = derive_seed(&[adv.master_seed, 0xF1A1]);
    let summary = evaluate_colors(policy, adv, &colors, final_seed, adv.final_trials)?;
    let lb = lb_value(adv.beta, adv.horizon)?;
    Ok(AdversaryReport {
        colors,
        estimated_regret: summary.mean,
        stderr: summary.stderr.unwrap_or(0.0),
        lb_value: lb,
        ratio: summary.mean / lb,
        decision_margins: margins,
    })
}
