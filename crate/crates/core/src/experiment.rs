//! Horizon sweeps over random sinusoidal instances, log-log slope fits, and file outputs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{default_params, BeConfig, PolicySpec, TuningStyle};
use crate::reward::{sample_sinusoidal_instance, BanditInstance};
use crate::sim::{derive_seed, trial_mean_regret, MeanTable, MonteCarloSummary};

/// Parses a JSON config, reporting every unknown key at once.
pub fn parse_config<T: DeserializeOwned>(json: &str) -> Result<T> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(json);
    let value: T = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    de.end()
        .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown config keys: {}",
            unknown.join(", ")
        )));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPolicyKind {
    Be1,
    Be2,
    Oracle,
    Fixed,
}

fn default_beta() -> u32 {
    1
}

fn default_style() -> TuningStyle {
    TuningStyle::Experiment
}

fn default_lipschitz() -> f64 {
    1.0
}

/// A policy whose `(B, Δ)` is resolved per horizon from a tuning schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPolicy {
    /// Name used in the `policy` CSV column; defaults to e.g. `be1-experiment-b1`.
    #[serde(default)]
    pub label: Option<String>,
    pub policy: SweepPolicyKind,
    #[serde(default = "default_beta")]
    pub beta: u32,
    #[serde(default = "default_style")]
    pub style: TuningStyle,
    #[serde(rename = "L", default = "default_lipschitz")]
    pub lipschitz: f64,
    /// Arm played by `fixed`.
    #[serde(default)]
    pub arm: usize,
    /// Explicit budget; overrides the schedule when set together with `Delta`.
    #[serde(rename = "B", default)]
    pub budget: Option<f64>,
    #[serde(rename = "Delta", default)]
    pub delta: Option<f64>,
}

impl SweepPolicy {
    pub fn new(kind: SweepPolicyKind, beta: u32, style: TuningStyle) -> Self {
        Self {
            label: None,
            policy: kind,
            beta,
            style,
            lipschitz: 1.0,
            arm: 0,
            budget: None,
            delta: None,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.policy {
            SweepPolicyKind::Be1 | SweepPolicyKind::Be2 => {
                let style = match self.style {
                    TuningStyle::Theoretical => "theoretical",
                    TuningStyle::Experiment => "experiment",
                };
                if let (Some(b), Some(d)) = (self.budget, self.delta) {
                    return format!("{}-B{b}-D{d}", self.kind_name());
                }
                format!("{}-{style}-b{}", self.kind_name(), self.beta)
            }
            SweepPolicyKind::Oracle => "oracle".into(),
            SweepPolicyKind::Fixed => format!("fixed{}", self.arm),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self.policy {
            SweepPolicyKind::Be1 => "be1",
            SweepPolicyKind::Be2 => "be2",
            SweepPolicyKind::Oracle => "oracle",
            SweepPolicyKind::Fixed => "fixed",
        }
    }

    /// Concrete policy for horizon `T`.
    pub fn resolve(&self, horizon: u64) -> Result<PolicySpec> {
        Ok(match self.policy {
            SweepPolicyKind::Be1 | SweepPolicyKind::Be2 => {
                let (budget, delta) = match (self.budget, self.delta) {
                    (Some(b), Some(d)) => {
                        BeConfig::new(b, d, 2)?;
                        (b, d)
                    }
                    (None, None) => {
                        let cfg =
                            default_params(self.beta, horizon, self.lipschitz, 2, self.style)?;
                        (cfg.budget, cfg.delta)
                    }
                    _ => return Err(Error::Config("B and Delta must be given together".into())),
                };
                if self.policy == SweepPolicyKind::Be1 {
                    PolicySpec::Be1 { budget, delta }
                } else {
                    PolicySpec::Be2 { budget, delta }
                }
            }
            SweepPolicyKind::Oracle => PolicySpec::Oracle,
            SweepPolicyKind::Fixed => PolicySpec::Fixed { arm: self.arm },
        })
    }
}

fn default_instances() -> usize {
    100
}

fn default_trials() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub horizons: Vec<u64>,
    pub policies: Vec<SweepPolicy>,
    #[serde(rename = "instances_per_T", default = "default_instances")]
    pub instances_per_t: usize,
    /// Independent trials per instance (all policies share them).
    #[serde(default = "default_trials")]
    pub trials_per_instance: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Default CSV destination; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub out: Option<String>,
    /// Optional SVG scatter written next to the CSV.
    #[serde(default)]
    pub svg: Option<String>,
}

impl SweepConfig {
    pub fn new(
        horizons: Vec<u64>,
        policies: Vec<SweepPolicy>,
        instances_per_t: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            horizons,
            policies,
            instances_per_t,
            trials_per_instance: 1,
            master_seed,
            out: None,
            svg: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("no horizons given".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "horizons must be strictly increasing: {:?}",
                self.horizons
            )));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("no policies given".into()));
        }
        if self.instances_per_t < 2 {
            return Err(Error::Config(format!(
                "instances_per_T must be at least 2, got {}",
                self.instances_per_t
            )));
        }
        if self.trials_per_instance == 0 {
            return Err(Error::Config("trials_per_instance must be positive".into()));
        }
        let mut labels: Vec<String> = self.policies.iter().map(SweepPolicy::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("policy labels must be distinct".into()));
        }
        for &t in &self.horizons {
            for p in &self.policies {
                p.resolve(t)?;
            }
        }
        Ok(())
    }
}

/// One CSV row: `policy,T,B,Delta,n_trials,mean_regret,stderr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: String,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "B")]
    pub budget: Option<f64>,
    #[serde(rename = "Delta")]
    pub delta: Option<f64>,
    pub n_trials: u64,
    pub mean_regret: f64,
    pub stderr: f64,
}

/// The random instance `index` used at horizon `T`.
pub fn sweep_instance(master_seed: u64, horizon: u64, index: usize) -> Result<BanditInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[master_seed, horizon, index as u64]));
    sample_sinusoidal_instance(&mut rng, horizon)
}

/// Runs every policy on `instances_per_T` fresh instances per horizon.
///
/// Rows come out in `(T, policy)` order. All policies on an instance share trial
/// seeds. The standard error is taken over per-instance averages.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.horizons.len() * config.policies.len());
    for &horizon in &config.horizons {
        let specs: Vec<PolicySpec> = config
            .policies
            .iter()
            .map(|p| p.resolve(horizon))
            .collect::<Result<_>>()?;
        let trial_seed = derive_seed(&[config.master_seed, horizon, u64::MAX]);
        let trials = config.trials_per_instance;
        // per instance: one average per policy
        let per_instance: Vec<Vec<f64>> = (0..config.instances_per_t)
            .into_par_iter()
            .map(|i| {
                let instance = sweep_instance(config.master_seed, horizon, i)?;
                let table = MeanTable::new(&instance, horizon)?;
                specs
                    .iter()
                    .map(|spec| {
                        let total = (0..trials)
                            .map(|j| {
                                trial_mean_regret(
                                    spec,
                                    &instance,
                                    &table,
                                    trial_seed,
                                    i as u64 * trials + j,
                                )
                            })
                            .sum::<Result<f64>>()?;
                        Ok(total / trials as f64)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;

        for (k, (policy, spec)) in config.policies.iter().zip(&specs).enumerate() {
            let summary =
                MonteCarloSummary::from_values(per_instance.iter().map(|v| v[k]).collect());
            let params = spec.parameters();
            rows.push(SweepRow {
                policy: policy.label(),
                horizon,
                budget: params.map(|p| p.0),
                delta: params.map(|p| p.1),
                n_trials: config.instances_per_t as u64 * trials,
                mean_regret: summary.mean,
                stderr: summary.stderr.unwrap_or(0.0),
            });
        }
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub policy: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// OLS of `log2 mean_regret` on `log2 T`.
pub fn fit_slope(rows: &[SweepRow]) -> Result<SlopeFit> {
    if rows.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 rows to fit a slope, got {}",
            rows.len()
        )));
    }
    if let Some(bad) = rows.iter().find(|r| !(r.mean_regret > 0.0)) {
        return Err(Error::Numeric(format!(
            "nonpositive mean_regret {} in row policy={} T={}",
            bad.mean_regret, bad.policy, bad.horizon
        )));
    }
    // fixed summation order regardless of input order
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.horizon as f64).log2(), r.mean_regret.log2()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numeric("all rows share one horizon".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let mut names: Vec<&str> = rows.iter().map(|r| r.policy.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    Ok(SlopeFit {
        policy: names.join("+"),
        slope,
        intercept,
        r_squared,
    })
}

/// One fit per policy label, in label order.
pub fn fit_slopes(rows: &[SweepRow]) -> Result<Vec<SlopeFit>> {
    let mut groups: BTreeMap<&str, Vec<SweepRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry(row.policy.as_str())
            .or_default()
            .push(row.clone());
    }
    groups.values().map(|g| fit_slope(g)).collect()
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Log-log scatter of the rows with fitted lines, as a standalone SVG document.
pub fn render_svg(rows: &[SweepRow], fits: &[SlopeFit]) -> String {
    let (w, h, pad) = (640.0, 420.0, 56.0);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mean_regret > 0.0)
        .map(|r| ((r.horizon as f64).log2(), r.mean_regret.log2()))
        .collect();
    let bounds = |sel: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\" font-size=\"13\">log2 T</text>\n\
         <text x=\"14\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 {cy})\">log2 mean regret</text>\n",
        b = h - pad,
        r = w - pad,
        cx = w / 2.0,
        ly = h - 12.0,
        cy = h / 2.0,
    );
    let mut labels: Vec<&str> = rows.iter().map(|r| r.policy.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    for (i, label) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for r in rows
            .iter()
            .filter(|r| r.policy == *label && r.mean_regret > 0.0)
        {
            let (x, y) = ((r.horizon as f64).log2(), r.mean_regret.log2());
            s += &format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            );
        }
        if let Some(f) = fits.iter().find(|f| f.policy == *label) {
            s += &format!(
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-dasharray=\"5,3\"/>\n",
                sx(x0),
                sy(f.intercept + f.slope * x0),
                sx(x1),
                sy(f.intercept + f.slope * x1)
            );
        }
        let slope = fits
            .iter()
            .find(|f| f.policy == *label)
            .map(|f| format!(" (slope {:.3})", f.slope))
            .unwrap_or_default();
        s += &format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\" fill=\"{color}\">{label}{slope}</text>\n",
            pad + 10.0,
            pad + 16.0 * i as f64
        );
    }
    s += "</svg>\n";
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(policy: &str, horizon: u64, regret: f64) -> SweepRow {
        SweepRow {
            policy: policy.into(),
            horizon,
            budget: None,
            delta: None,
            n_trials: 1,
            mean_regret: regret,
            stderr: 0.0,
        }
    }

    #[test]
    fn exact_power_law() {
        let rows: Vec<_> = [14, 16, 18]
            .iter()
            .map(|&j| row("p", 1 << j, 2f64.powf(0.6 * j as f64 + 1.0)))
            .collect();
        let f = fit_slope(&rows).unwrap();
        assert_relative_eq!(f.slope, 0.6, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-10);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);

        let rows: Vec<_> = (10..15)
            .map(|j| row("q", 1 << j, 3.7 * ((1u64 << j) as f64).powf(2.0 / 3.0)))
            .collect();
        assert_relative_eq!(fit_slope(&rows).unwrap().slope, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn slope_preconditions() {
        assert!(fit_slope(&[row("p", 16, 1.0), row("p", 32, 2.0)]).is_err());
        let err =
            fit_slope(&[row("p", 16, 1.0), row("p", 32, 0.0), row("p", 64, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("T=32"), "{err}");
    }

    #[test]
    fn grouped_fits() {
        let mut rows = Vec::new();
        for j in 10..14 {
            rows.push(row("b", 1 << j, 2f64.powf(0.5 * j as f64)));
            rows.push(row("a", 1 << j, 2f64.powf(0.7 * j as f64)));
        }
        let fits = fit_slopes(&rows).unwrap();
        assert_eq!(fits.len(), 2);
        assert_eq!(fits[0].policy, "a");
        assert_relative_eq!(fits[0].slope, 0.7, epsilon = 1e-12);
        assert_relative_eq!(fits[1].slope, 0.5, epsilon = 1e-12);
        let svg = render_svg(&rows, &fits);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 8);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            SweepRow {
                policy: "be1".into(),
                horizon: 65536,
                budget: Some(40.317_473_596_635_935),
                delta: Some(0.024_803_141_437_003_12),
                n_trials: 100,
                mean_regret: 123.456_789_012_345_67,
                stderr: 0.1 + 0.2,
            },
            row("oracle", 65536, 0.0),
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("policy,T,B,Delta,n_trials,mean_regret,stderr\n"));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn config_parsing_lists_unknown_keys() {
        let json =
            r#"{"horizons":[1024,2048],"policies":[{"policy":"be1","bogus":1}],"extra":true}"#;
        let err = parse_config::<SweepConfig>(json).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("extra") && msg.contains("bogus"), "{msg}");
        assert!(matches!(err, Error::Config(_)));

        let json = r#"{"horizons":[1024,2048],"policies":[{"policy":"be2","beta":2,"style":"theoretical","L":2.0}]}"#;
        let cfg: SweepConfig = parse_config(json).unwrap();
        assert_eq!(cfg.instances_per_t, 100);
        assert_eq!(cfg.policies[0].label(), "be2-theoretical-b2");
    }

    #[test]
    fn config_validation() {
        let p = vec![SweepPolicy::new(
            SweepPolicyKind::Oracle,
            1,
            TuningStyle::Experiment,
        )];
        assert!(SweepConfig::new(vec![2048, 1024], p.clone(), 2, 0)
            .validate()
            .is_err());
        assert!(SweepConfig::new(vec![1024, 1024], p.clone(), 2, 0)
            .validate()
            .is_err());
        assert!(SweepConfig::new(vec![1024], p.clone(), 1, 0)
            .validate()
            .is_err());
        assert!(
            SweepConfig::new(vec![1024], vec![p[0].clone(), p[0].clone()], 2, 0)
                .validate()
                .is_err()
        );
        assert!(SweepConfig::new(vec![1024], p, 2, 0).validate().is_ok());
    }

    #[test]
    fn small_sweep() {
        let policies = vec![
            SweepPolicy::new(SweepPolicyKind::Be1, 1, TuningStyle::Experiment),
            SweepPolicy::new(SweepPolicyKind::Oracle, 1, TuningStyle::Experiment),
        ];
        let cfg = SweepConfig::new(vec![1 << 10, 1 << 12], policies, 4, 11);
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(
            rows.iter().map(|r| r.horizon).collect::<Vec<_>>(),
            vec![1024, 1024, 4096, 4096]
        );
        assert_eq!(rows[1].policy, "oracle");
        assert_eq!(rows[1].mean_regret, 0.0);
        assert_eq!(rows[1].budget, None);
        assert!(rows[0].mean_regret > 0.0);
        assert_relative_eq!(
            rows[0].budget.unwrap(),
            1024f64.powf(1.0 / 3.0),
            max_relative = 1e-12
        );
        assert_eq!(rows, run_sweep(&cfg).unwrap());
    }
}
