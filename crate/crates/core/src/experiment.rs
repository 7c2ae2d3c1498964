//! Declarative experiment front end: parse a config document, dispatch to
//! the analysis modules, and emit a machine-readable report plus optional
//! plot-ready CSV series.
//!
//! One config describes one experiment. All randomness flows from the
//! single config seed through the documented substream derivation, so every
//! reported number can be reproduced in isolation, and rerunning a config
//! yields byte-identical outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{self, PriceCalibration};
use crate::estimate::Estimate;
use crate::mechanism::Ordering;
use crate::revenue::{
    derivative_distributions, exante_upper_bound, feasibility_check, linear_revenue,
    lower_bound_instance, min_lemma_oracle, revenue_gap, PriceGridSpec,
};
use crate::rng::{substream, STREAM_INSTANCES};
use crate::valuation::{ConcaveValuation, ValuationDistribution};
use crate::welfare::{self, check_aux_lemma, check_random_order_lemma, solve_constants};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] crate::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// The tasks the front end can dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Calibrate,
    WelfareRatio,
    RevenueGap,
    LowerBound,
    VerifyLemmas,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Calibrate => "calibrate",
            TaskKind::WelfareRatio => "welfare-ratio",
            TaskKind::RevenueGap => "revenue-gap",
            TaskKind::LowerBound => "lower-bound",
            TaskKind::VerifyLemmas => "verify-lemmas",
        }
    }
}

/// A valuation record in the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValuationConfig {
    Linear { a: f64 },
    Power { a: f64, c: f64 },
    PiecewiseLinear { points: Vec<(f64, f64)> },
    LogCap { kappa: f64 },
}

impl ValuationConfig {
    pub fn build(&self) -> crate::Result<ConcaveValuation> {
        match self {
            ValuationConfig::Linear { a } => ConcaveValuation::linear(*a),
            ValuationConfig::Power { a, c } => ConcaveValuation::power(*a, *c),
            ValuationConfig::PiecewiseLinear { points } => {
                ConcaveValuation::piecewise_linear(points.clone())
            }
            ValuationConfig::LogCap { kappa } => ConcaveValuation::log_cap(*kappa),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub valuation: ValuationConfig,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierConfig {
    pub t: f64,
    pub prob: f64,
}

/// A per-agent distribution record. A bare valuation kind denotes a point
/// mass on that valuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistConfig {
    Linear {
        a: f64,
    },
    Power {
        a: f64,
        c: f64,
    },
    PiecewiseLinear {
        points: Vec<(f64, f64)>,
    },
    LogCap {
        kappa: f64,
    },
    FiniteSupport {
        atoms: Vec<AtomConfig>,
    },
    ScaledFamily {
        base: ValuationConfig,
        multipliers: Vec<MultiplierConfig>,
    },
}

impl DistConfig {
    pub fn build(&self) -> crate::Result<ValuationDistribution> {
        match self {
            DistConfig::Linear { a } => Ok(ValuationDistribution::point_mass(
                ConcaveValuation::linear(*a)?,
            )),
            DistConfig::Power { a, c } => Ok(ValuationDistribution::point_mass(
                ConcaveValuation::power(*a, *c)?,
            )),
            DistConfig::PiecewiseLinear { points } => Ok(ValuationDistribution::point_mass(
                ConcaveValuation::piecewise_linear(points.clone())?,
            )),
            DistConfig::LogCap { kappa } => Ok(ValuationDistribution::point_mass(
                ConcaveValuation::log_cap(*kappa)?,
            )),
            DistConfig::FiniteSupport { atoms } => ValuationDistribution::finite_support(
                atoms
                    .iter()
                    .map(|a| Ok((a.valuation.build()?, a.prob)))
                    .collect::<crate::Result<_>>()?,
            ),
            DistConfig::ScaledFamily { base, multipliers } => ValuationDistribution::scaled_family(
                base.build()?,
                multipliers.iter().map(|m| (m.t, m.prob)).collect(),
            ),
        }
    }
}

/// Sold-fraction target: one of the two named constants or a custom value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetConfig {
    Named(NamedTarget),
    Value(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedTarget {
    Rho1,
    Rho2,
}

impl TargetConfig {
    pub fn resolve(&self) -> f64 {
        match self {
            TargetConfig::Named(NamedTarget::Rho1) => solve_constants().rho1,
            TargetConfig::Named(NamedTarget::Rho2) => solve_constants().rho2,
            TargetConfig::Value(v) => *v,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderingConfig {
    Named(NamedOrdering),
    Fixed { fixed: Vec<usize> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedOrdering {
    Identity,
    Reverse,
    Random,
}

impl OrderingConfig {
    pub fn build(&self, n: usize) -> crate::Result<Ordering> {
        match self {
            OrderingConfig::Named(NamedOrdering::Identity) => Ok(Ordering::identity(n)),
            OrderingConfig::Named(NamedOrdering::Reverse) => Ok(Ordering::reversed(n)),
            OrderingConfig::Named(NamedOrdering::Random) => Ok(Ordering::UniformRandom),
            OrderingConfig::Fixed { fixed } => Ordering::fixed(fixed.clone()),
        }
    }
}

fn default_samples() -> u64 {
    100_000
}

/// One experiment: instance, task, task parameters, output switches.
/// Unknown fields are rejected at parse time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub agents: Vec<DistConfig>,

    // calibrate / welfare-ratio
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<OrderingConfig>,

    // revenue-gap
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<bool>,

    // lower-bound
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,

    // verify-lemmas
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_instance: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_lemma_instances: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_tuples: Option<u64>,

    // output
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit_curves: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_points: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.samples == 0 {
            return Err(ExperimentError::Invalid(
                "samples must be at least 1".into(),
            ));
        }
        let needs_agents = matches!(
            self.task,
            TaskKind::Calibrate | TaskKind::WelfareRatio | TaskKind::RevenueGap
        );
        if needs_agents && self.agents.is_empty() {
            return Err(ExperimentError::Invalid(format!(
                "task {} requires a nonempty agents list",
                self.task.name()
            )));
        }
        match self.task {
            TaskKind::Calibrate => {
                if self.target.is_none() {
                    return Err(ExperimentError::Invalid("calibrate requires target".into()));
                }
            }
            TaskKind::WelfareRatio => {
                if self.target.is_none() && self.price.is_none() {
                    return Err(ExperimentError::Invalid(
                        "welfare-ratio requires either price or target".into(),
                    ));
                }
            }
            TaskKind::LowerBound => {
                if self.kappa.is_none() {
                    return Err(ExperimentError::Invalid(
                        "lower-bound requires kappa".into(),
                    ));
                }
            }
            TaskKind::RevenueGap | TaskKind::VerifyLemmas => {}
        }
        if let Some(TargetConfig::Value(v)) = self.target {
            if !(v > 0.0 && v < 1.0) {
                return Err(ExperimentError::Invalid(format!(
                    "target must lie in (0, 1), got {v}"
                )));
            }
        }
        if let Some(p) = self.price {
            if !(p.is_finite() && p >= 0.0) {
                return Err(ExperimentError::Invalid(format!(
                    "price must be finite and nonnegative, got {p}"
                )));
            }
        }
        for (name, value) in [("tolerance", self.tolerance), ("price_cap", self.price_cap)] {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ExperimentError::Invalid(format!(
                        "{name} must be finite and positive, got {v}"
                    )));
                }
            }
        }
        if self.grid_m == Some(0) {
            return Err(ExperimentError::Invalid("grid_m must be at least 1".into()));
        }
        if matches!(self.curve_points, Some(p) if p < 2) {
            return Err(ExperimentError::Invalid(
                "curve_points must be at least 2".into(),
            ));
        }
        for (name, value) in [
            ("instances", self.instances),
            ("samples_per_instance", self.samples_per_instance),
            ("min_lemma_instances", self.min_lemma_instances),
            ("product_tuples", self.product_tuples),
        ] {
            if value == Some(0) {
                return Err(ExperimentError::Invalid(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        Ok(())
    }

    fn build_agents(&self) -> crate::Result<Vec<ValuationDistribution>> {
        self.agents.iter().map(DistConfig::build).collect()
    }
}

/// One asserted inequality with its margin and tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs - rhs under the check's orientation; nonnegative means pass.
    pub margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// lhs >= rhs - tolerance.
    fn at_least(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Check {
        let margin = lhs - rhs;
        Check {
            name: name.into(),
            lhs,
            rhs,
            margin,
            tolerance,
            passed: margin >= -tolerance,
        }
    }

    /// lhs <= rhs + tolerance.
    fn at_most(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Check {
        let margin = rhs - lhs;
        Check {
            name: name.into(),
            lhs,
            rhs,
            margin,
            tolerance,
            passed: margin >= -tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

/// Structured experiment result. Serialization is deterministic: scalar
/// values and estimates are keyed maps, checks keep dispatch order, and the
/// wall clock stays out of the persisted bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub tool: ToolInfo,
    pub task: String,
    pub seed: u64,
    pub samples: u64,
    pub config: serde_json::Value,
    pub values: BTreeMap<String, f64>,
    pub estimates: BTreeMap<String, Estimate>,
    pub checks: Vec<Check>,
    pub flags: Vec<String>,
    #[serde(skip, default)]
    pub wall_clock: Duration,
}

impl Report {
    fn new(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
        Ok(Report {
            tool: ToolInfo {
                name: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
            task: config.task.name().into(),
            seed: config.seed,
            samples: config.samples,
            config: serde_json::to_value(config)
                .map_err(|e| ExperimentError::Parse(e.to_string()))?,
            values: BTreeMap::new(),
            estimates: BTreeMap::new(),
            checks: Vec::new(),
            flags: Vec::new(),
            wall_clock: Duration::ZERO,
        })
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail") + "\n"
    }
}

/// A curve point: x, y, standard error.
pub type CurvePoint = (f64, f64, f64);

/// Render `v` with at most 12 significant digits, trailing zeros trimmed.
fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor();
    let factor = 10f64.powf(11.0 - exp);
    if !factor.is_finite() || factor == 0.0 {
        return v.to_string();
    }
    let rounded = (v * factor).round() / factor;
    format!("{rounded}")
}

/// Write a `x,y,stderr` CSV with 12-significant-digit values; byte output
/// is deterministic for fixed inputs.
pub fn emit_curve(series: &[CurvePoint], path: &Path) -> Result<(), ExperimentError> {
    if series.is_empty() {
        return Err(ExperimentError::Invalid(format!(
            "refusing to write empty curve to {}",
            path.display()
        )));
    }
    let mut text = String::from("x,y,stderr\n");
    for &(x, y, stderr) in series {
        let _ = writeln!(
            text,
            "{},{},{}",
            format_sig(x),
            format_sig(y),
            format_sig(stderr)
        );
    }
    std::fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Run one experiment. When `out_dir` is given, `report.json` and any
/// curve CSVs are written there (the directory is created if missing);
/// nothing is written on error.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<Report, ExperimentError> {
    config.validate()?;
    let started = Instant::now();
    let mut report = Report::new(config)?;
    let mut curves: Vec<(String, Vec<CurvePoint>)> = Vec::new();

    match config.task {
        TaskKind::Calibrate => run_calibrate(config, &mut report, &mut curves)?,
        TaskKind::WelfareRatio => run_welfare_ratio(config, &mut report)?,
        TaskKind::RevenueGap => run_revenue_gap(config, &mut report, &mut curves)?,
        TaskKind::LowerBound => run_lower_bound(config, &mut report, &mut curves)?,
        TaskKind::VerifyLemmas => run_verify_lemmas(config, &mut report)?,
    }

    report.wall_clock = started.elapsed();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let report_path = dir.join("report.json");
        std::fs::write(&report_path, report.to_json()).map_err(|source| ExperimentError::Io {
            path: report_path,
            source,
        })?;
        for (name, series) in &curves {
            emit_curve(series, &dir.join(format!("curve_{name}.csv")))?;
        }
    }
    Ok(report)
}

/// Log-spaced price grid over (p_hi * 10^-4, p_hi].
fn price_grid(p_hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|j| p_hi * 10f64.powf(-4.0 * (1.0 - j as f64 / (points - 1) as f64)))
        .collect()
}

fn run_calibrate(
    config: &ExperimentConfig,
    report: &mut Report,
    curves: &mut Vec<(String, Vec<CurvePoint>)>,
) -> Result<(), ExperimentError> {
    let dists = config.build_agents()?;
    let target = config.target.expect("validated").resolve();
    let tolerance = config.tolerance.unwrap_or(calibration::DEFAULT_TOLERANCE);
    let price_cap = config.price_cap.unwrap_or(calibration::DEFAULT_PRICE_CAP);
    let cal = calibration::calibrate(
        &dists,
        target,
        config.samples,
        config.seed,
        tolerance,
        price_cap,
    );
    record_calibration(report, &cal, tolerance);

    if config.emit_curves.unwrap_or(false) {
        let points = config.curve_points.unwrap_or(65);
        let p_hi = dists
            .iter()
            .map(|d| d.max_initial_deriv())
            .collect::<crate::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let p_hi = if p_hi.is_finite() { p_hi } else { price_cap };
        let prices = price_grid(p_hi, points);
        let series = calibration::sold_fraction_curve(&dists, &prices, config.samples, config.seed)
            .into_iter()
            .zip(&prices)
            .map(|(est, &p)| (p, est.mean, est.stderr))
            .collect();
        curves.push(("sold_fraction".into(), series));
    }
    Ok(())
}

fn record_calibration(report: &mut Report, cal: &PriceCalibration, tolerance: f64) {
    report.values.insert("price".into(), cal.price);
    report
        .values
        .insert("achieved_sold_fraction".into(), cal.achieved);
    report
        .values
        .insert("target_sold_fraction".into(), cal.target);
    report
        .values
        .insert("calibration_residual".into(), cal.residual);
    report.values.insert("bracket_lo".into(), cal.bracket.0);
    report.values.insert("bracket_hi".into(), cal.bracket.1);
    if let Some(sold) = cal.sold_at_price_cap {
        report
            .values
            .insert("sold_fraction_at_price_cap".into(), sold);
        if sold >= cal.target {
            report.flags.push("price_cap_too_low_for_target".into());
        }
    }
    if cal.target_unreachable {
        report.flags.push("target_unreachable".into());
    } else {
        report.checks.push(Check::at_most(
            "calibration_residual_within_tolerance",
            cal.residual,
            tolerance,
            0.0,
        ));
    }
}

fn run_welfare_ratio(
    config: &ExperimentConfig,
    report: &mut Report,
) -> Result<(), ExperimentError> {
    let dists = config.build_agents()?;
    let ordering = config
        .ordering
        .clone()
        .unwrap_or(OrderingConfig::Named(NamedOrdering::Random))
        .build(dists.len())?;

    let (price, floor) = match (config.price, config.target) {
        (Some(p), _) => (p, config.target.map(|t| t.resolve())),
        (None, Some(target)) => {
            let rho = target.resolve();
            let tolerance = config.tolerance.unwrap_or(calibration::DEFAULT_TOLERANCE);
            let cal = calibration::calibrate(
                &dists,
                rho,
                config.samples,
                config.seed,
                tolerance,
                config.price_cap.unwrap_or(calibration::DEFAULT_PRICE_CAP),
            );
            record_calibration(report, &cal, tolerance);
            (cal.price, Some(rho))
        }
        (None, None) => unreachable!("validated"),
    };

    let est = welfare::welfare_ratio(&dists, price, &ordering, config.samples, config.seed);
    report.values.insert("price".into(), price);
    report.values.insert("welfare_ratio".into(), est.ratio);
    report
        .values
        .insert("welfare_ratio_stderr".into(), est.stderr);
    report.estimates.insert("welfare".into(), est.numerator);
    report
        .estimates
        .insert("optimal_welfare".into(), est.denominator);
    if let Some(rho) = floor {
        report.checks.push(Check::at_least(
            "welfare_ratio_at_least_target",
            est.ratio,
            rho,
            3.0 * est.stderr,
        ));
    }
    Ok(())
}

fn run_revenue_gap(
    config: &ExperimentConfig,
    report: &mut Report,
    curves: &mut Vec<(String, Vec<CurvePoint>)>,
) -> Result<(), ExperimentError> {
    let dists = config.build_agents()?;
    let grid_m = config.grid_m.unwrap_or(256);
    let price_points = config.price_points.unwrap_or(128);
    let grid = PriceGridSpec {
        points: price_points.max(64),
        ..PriceGridSpec::default()
    };
    let gap = revenue_gap(&dists, grid_m, &grid, config.samples, config.seed)?;

    report.values.insert("upper_bound".into(), gap.upper_bound);
    report
        .values
        .insert("best_linear_revenue".into(), gap.best_linear.revenue);
    report
        .values
        .insert("best_linear_price".into(), gap.best_linear.price);
    report.values.insert("gap".into(), gap.gap);
    report.values.insert("kappa".into(), gap.kappa);
    report.values.insert("certificate".into(), gap.certificate);
    if !gap.regular {
        report
            .flags
            .push("irregular_derivative_distribution".into());
        if let Some((agent, w)) = &gap.regularity_witness {
            report.flags.push(format!(
                "regularity_witness: agent {agent} at q = {:.6}",
                w.q[1]
            ));
        }
    }
    report.checks.push(Check::at_least(
        "upper_bound_dominates_best_linear",
        gap.upper_bound,
        gap.best_linear.revenue,
        3.0 * gap.best_linear.stderr + 1e-9,
    ));
    if gap.regular {
        report.checks.push(Check::at_most(
            "gap_within_curvature_certificate",
            gap.gap,
            gap.certificate,
            1e-9,
        ));
    }

    if config.feasibility.unwrap_or(true) {
        // Normalize so the best linear revenue is 1, then check that the
        // transformed pair satisfies the anonymous-pricing program.
        let scale = 1.0 / gap.best_linear.revenue;
        let scaled: Vec<ValuationDistribution> = dists
            .iter()
            .map(|d| d.scaled(scale))
            .collect::<crate::Result<_>>()?;
        let derivs = derivative_distributions(&scaled, grid_m)?;
        let solution = exante_upper_bound(&derivs);
        let feas = feasibility_check(
            &solution,
            &derivs,
            &scaled,
            gap.kappa,
            price_points.max(64),
            config.product_tuples.unwrap_or(10_000),
            config.seed,
        )?;
        report
            .values
            .insert("feasibility_budget".into(), feas.revenue_budget);
        let ok = |b: bool| if b { 1.0 } else { 0.0 };
        report.checks.push(Check::at_least(
            "transformed_capacity_feasible",
            ok(feas.capacity_ok),
            1.0,
            0.0,
        ));
        report.checks.push(Check::at_least(
            "transformed_pricing_feasible",
            ok(feas.pricing_ok),
            1.0,
            0.0,
        ));
        report.checks.push(Check::at_least(
            "tail_response_bound_holds",
            ok(feas.tail_response_ok),
            1.0,
            0.0,
        ));
        report.checks.push(Check::at_least(
            "product_scaling_inequality_holds",
            ok(feas.product_scaling_ok),
            1.0,
            0.0,
        ));
        for w in feas.witnesses.iter().take(8) {
            report.flags.push(format!(
                "feasibility_witness: {} (lhs {}, rhs {})",
                w.description, w.lhs, w.rhs
            ));
        }
    }

    if config.emit_curves.unwrap_or(false) {
        push_revenue_curve(config, &dists, curves)?;
    }
    Ok(())
}

fn push_revenue_curve(
    config: &ExperimentConfig,
    dists: &[ValuationDistribution],
    curves: &mut Vec<(String, Vec<CurvePoint>)>,
) -> Result<(), ExperimentError> {
    let points = config.curve_points.unwrap_or(65);
    let p_hi = dists
        .iter()
        .map(|d| d.max_initial_deriv())
        .collect::<crate::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let prices = price_grid(p_hi, points);
    let series = prices
        .iter()
        .map(|&p| {
            let lr = linear_revenue(dists, p, config.samples, config.seed)?;
            Ok((p, lr.revenue.mean, lr.revenue.stderr))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    curves.push(("revenue".into(), series));
    Ok(())
}

fn run_lower_bound(
    config: &ExperimentConfig,
    report: &mut Report,
    curves: &mut Vec<(String, Vec<CurvePoint>)>,
) -> Result<(), ExperimentError> {
    let kappa = config.kappa.expect("validated");
    let inst = lower_bound_instance(kappa)?;
    report.values.insert("kappa".into(), inst.kappa);
    report.values.insert("rho".into(), inst.rho);
    report
        .values
        .insert("analytic_plateau".into(), inst.plateau);
    report
        .values
        .insert("best_linear_revenue".into(), inst.best_linear.revenue);
    report
        .values
        .insert("best_linear_price".into(), inst.best_linear.price);
    report
        .values
        .insert("nonlinear_revenue".into(), inst.nonlinear_revenue);
    report.values.insert("gap".into(), inst.gap);
    report.values.insert("gap_floor".into(), inst.floor);

    report.checks.push(Check::at_most(
        "best_linear_matches_analytic_plateau",
        (inst.best_linear.revenue - inst.plateau).abs(),
        1e-6,
        0.0,
    ));
    report.checks.push(Check::at_least(
        "nonlinear_tariff_recovers_full_value",
        inst.nonlinear_revenue,
        1.0,
        1e-12,
    ));
    report.checks.push(Check::at_least(
        "gap_at_least_floor",
        inst.gap,
        inst.floor,
        1e-6,
    ));

    if config.emit_curves.unwrap_or(false) {
        let dists = [ValuationDistribution::point_mass(inst.valuation.clone())];
        push_revenue_curve(config, &dists, curves)?;
    }
    Ok(())
}

/// A randomized small instance for the lemma suites: two to five agents,
/// mixed valuation families, and a price drawn near the relevant scale.
pub fn random_lemma_instance<R: Rng>(rng: &mut R) -> (Vec<ValuationDistribution>, f64) {
    let n = rng.random_range(2..=5);
    let dists: Vec<ValuationDistribution> = (0..n)
        .map(|_| {
            let atoms = rng.random_range(1..=3);
            let mut probs: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            let support = probs
                .into_iter()
                .map(|p| {
                    let v = match rng.random_range(0..4) {
                        0 => ConcaveValuation::linear(rng.random_range(0.1..3.0)),
                        1 => ConcaveValuation::power(
                            rng.random_range(0.2..3.0),
                            rng.random_range(0.3..1.0),
                        ),
                        2 => {
                            let z = rng.random_range(0.2..0.8);
                            let s1 = rng.random_range(0.5..3.0);
                            let s2 = s1 * rng.random_range(0.1..0.9);
                            ConcaveValuation::piecewise_linear(vec![
                                (0.0, 0.0),
                                (z, s1 * z),
                                (1.0, s1 * z + s2 * (1.0 - z)),
                            ])
                        }
                        _ => ConcaveValuation::log_cap(rng.random_range(1.2..12.0)),
                    };
                    (v.expect("parameters in range"), p)
                })
                .collect();
            ValuationDistribution::finite_support(support).expect("normalized probabilities")
        })
        .collect();
    // Price near the interior marginal-value scale of the instance.
    let scale = dists
        .iter()
        .map(|d| {
            d.support()
                .expect("finite support")
                .iter()
                .map(|(v, _)| v.deriv(0.25))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let p = scale * rng.random_range(0.05..1.2);
    (dists, p)
}

fn run_verify_lemmas(
    config: &ExperimentConfig,
    report: &mut Report,
) -> Result<(), ExperimentError> {
    let instances = config.instances.unwrap_or(200);
    let per_instance = config.samples_per_instance.unwrap_or(10_000);
    let mut gen = substream(config.seed, STREAM_INSTANCES, 0);

    // Per-agent utility bound, fixed orders.
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let (dists, p) = random_lemma_instance(&mut gen);
        let n = dists.len();
        let beta = gen.random_range(0.3..3.0);
        let agent = gen.random_range(0..n);
        let order = Ordering::UniformRandom.realize(n, &mut gen);
        let inner_seed: u64 = gen.random();
        let rep = check_aux_lemma(&dists, p, &order, agent, beta, per_instance, inner_seed);
        worst = worst.min(rep.margin + 3.0 * rep.stderr);
    }
    report
        .values
        .insert("aux_lemma_worst_margin_3se".into(), worst);
    report.checks.push(Check::at_least(
        "aux_lemma_margins_nonnegative",
        worst,
        0.0,
        1e-12,
    ));

    // Random-order bound.
    let mut worst = f64::INFINITY;
    for k in 0..instances {
        let (dists, p) = random_lemma_instance(&mut gen);
        let n = dists.len();
        let alpha = [0.25, 0.5, 1.0][(k % 3) as usize];
        let agent = gen.random_range(0..n);
        let inner_seed: u64 = gen.random();
        let rep = check_random_order_lemma(&dists, p, alpha, agent, per_instance, inner_seed);
        worst = worst.min(rep.margin + 3.0 * rep.stderr);
    }
    report
        .values
        .insert("random_order_lemma_worst_margin_3se".into(), worst);
    report.checks.push(Check::at_least(
        "random_order_lemma_margins_nonnegative",
        worst,
        0.0,
        1e-12,
    ));

    // Product-form minimum bound against the enumeration oracle.
    let oracle_instances = config.min_lemma_instances.unwrap_or(1000);
    let mut worst = f64::INFINITY;
    let mut worst_tightness = 0.0f64;
    for _ in 0..oracle_instances {
        let k = gen.random_range(1..=4);
        let bernoulli_only = gen.random_range(0..4) == 0;
        let vars: Vec<Vec<(f64, f64)>> = (0..k)
            .map(|_| {
                if bernoulli_only {
                    let p = gen.random_range(0.0..1.0);
                    vec![(0.0, 1.0 - p), (1.0, p)]
                } else {
                    let support = gen.random_range(1..=4);
                    let mut probs: Vec<f64> =
                        (0..support).map(|_| gen.random_range(0.01..1.0)).collect();
                    let total: f64 = probs.iter().sum();
                    probs.iter_mut().for_each(|q| *q /= total);
                    probs
                        .into_iter()
                        .map(|q| (gen.random_range(0.0..=1.0), q))
                        .collect()
                }
            })
            .collect();
        let rep = min_lemma_oracle(&vars)?;
        worst = worst.min(rep.exact - rep.bound);
        if bernoulli_only {
            worst_tightness = worst_tightness.max((rep.exact - rep.bound).abs());
        }
    }
    report.values.insert("min_lemma_worst_slack".into(), worst);
    report
        .values
        .insert("min_lemma_bernoulli_tightness".into(), worst_tightness);
    report.checks.push(Check::at_least(
        "min_lemma_oracle_dominates_bound",
        worst,
        0.0,
        1e-12,
    ));
    report.checks.push(Check::at_most(
        "min_lemma_tight_on_bernoulli",
        worst_tightness,
        0.0,
        1e-12,
    ));

    // Product scaling inequality on random tuples.
    let tuples = config.product_tuples.unwrap_or(10_000);
    let mut worst = f64::INFINITY;
    for _ in 0..tuples {
        let t: f64 = gen.random_range(0.0..1.0);
        let k = gen.random_range(1..=6);
        let z: Vec<f64> = (0..k).map(|_| gen.random_range(0.0..=1.0)).collect();
        let lhs = 1.0 - z.iter().map(|zi| 1.0 - t * zi).product::<f64>();
        let rhs = t * (1.0 - z.iter().map(|zi| 1.0 - zi).product::<f64>());
        worst = worst.min(lhs - rhs);
    }
    report
        .values
        .insert("product_scaling_worst_margin".into(), worst);
    report.checks.push(Check::at_least(
        "product_scaling_inequality_holds",
        worst,
        0.0,
        1e-12,
    ));
    Ok(())
}
