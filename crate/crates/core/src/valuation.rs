//! Concave valuation functions on [0, 1] and distributions over them.
//!
//! A valuation v is monotone nondecreasing and concave with v(0) = 0. The
//! module answers four queries:
//!
//! * `value(z)`   — v(z),
//! * `deriv(z)`   — the marginal value v'(z) (right-derivative at kinks,
//!   left-derivative at z = 1),
//! * `inv_deriv(p)` — the largest z in [0, 1] with v'(z) >= p, which is the
//!   single-agent best response to a per-unit price p, and
//! * `curvature()` — v'(0) / v(1), equal to 1 exactly for linear valuations.
//!
//! `inv_deriv` breaks derivative plateaus toward the largest maximizer of
//! v(z) - p z; utilities are unaffected and the sold-fraction curve stays
//! monotone in p, which price calibration relies on.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_PROFILE};

/// Tolerance for probability normalization and construction identities.
pub const CONSTRUCTION_TOL: f64 = 1e-12;

/// Monotone nondecreasing concave function on [0, 1] with v(0) = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum ConcaveValuation {
    /// Linear interpolation of breakpoints (z_k, v_k); z_0 = 0, v_0 = 0,
    /// z_last = 1, slopes nonincreasing.
    PiecewiseLinear(PiecewiseLinear),
    /// v(z) = a z^c with a > 0 and 0 < c <= 1.
    Power { scale: f64, exponent: f64 },
    /// v(z) = a z with a >= 0.
    Linear { slope: f64 },
    /// kappa z up to the kink 1/(kappa rho), then 1 + ln(z)/rho; the two
    /// pieces agree in value and slope at the kink because rho solves
    /// rho - ln(rho) = 1 + ln(kappa).
    LogCap(LogCap),
    /// t * base for a nonnegative factor t; used for scaled-family draws
    /// whose base shape has no closed form under scaling.
    Scaled {
        factor: f64,
        base: Box<ConcaveValuation>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
    slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogCap {
    kappa: f64,
    rho: f64,
    kink: f64,
}

impl LogCap {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// The root of rho - ln(rho) = 1 + ln(kappa) on (1, inf).
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Kink position 1/(kappa rho).
    pub fn kink(&self) -> f64 {
        self.kink
    }
}

impl PiecewiseLinear {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Solve rho - ln(rho) = 1 + ln(kappa) by bisection; the left side is
/// increasing on rho > 1 and the root lies in (1, 10 + 2(1 + ln kappa)).
fn solve_log_cap_rho(kappa: f64) -> f64 {
    let target = 1.0 + kappa.ln();
    let mut lo = 1.0;
    let mut hi = 10.0 + 2.0 * target;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid - mid.ln() < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < CONSTRUCTION_TOL {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl ConcaveValuation {
    pub fn linear(slope: f64) -> Result<Self> {
        if !slope.is_finite() || slope < 0.0 {
            return Err(Error::InvalidValuation(format!(
                "linear slope must be finite and nonnegative, got {slope}"
            )));
        }
        Ok(ConcaveValuation::Linear { slope })
    }

    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidValuation(format!(
                "power scale must be finite and positive, got {scale}"
            )));
        }
        if !exponent.is_finite() || exponent <= 0.0 || exponent > 1.0 {
            return Err(Error::InvalidValuation(format!(
                "power exponent must lie in (0, 1], got {exponent}"
            )));
        }
        Ok(ConcaveValuation::Power { scale, exponent })
    }

    pub fn piecewise_linear(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidValuation(
                "piecewise-linear valuation needs at least two breakpoints".into(),
            ));
        }
        let first = points[0];
        let last = points[points.len() - 1];
        if first != (0.0, 0.0) {
            return Err(Error::InvalidValuation(format!(
                "first breakpoint must be (0, 0), got {first:?}"
            )));
        }
        if (last.0 - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::InvalidValuation(format!(
                "last breakpoint must sit at z = 1, got z = {}",
                last.0
            )));
        }
        let mut slopes = Vec::with_capacity(points.len() - 1);
        for pair in points.windows(2) {
            let (z0, v0) = pair[0];
            let (z1, v1) = pair[1];
            if !z1.is_finite() || !v1.is_finite() || z1 <= z0 {
                return Err(Error::InvalidValuation(format!(
                    "breakpoints must be finite with strictly increasing z, got {pair:?}"
                )));
            }
            if v1 < v0 - CONSTRUCTION_TOL {
                return Err(Error::InvalidValuation(format!(
                    "values must be nondecreasing, got {pair:?}"
                )));
            }
            let slope = ((v1 - v0) / (z1 - z0)).max(0.0);
            if let Some(&prev) = slopes.last() {
                if slope > prev + 1e-9 {
                    return Err(Error::InvalidValuation(format!(
                        "slopes must be nonincreasing (concavity), got {prev} then {slope}"
                    )));
                }
            }
            slopes.push(slope);
        }
        Ok(ConcaveValuation::PiecewiseLinear(PiecewiseLinear {
            points,
            slopes,
        }))
    }

    pub fn log_cap(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa <= 1.0 {
            return Err(Error::CurvatureOutOfRange(kappa));
        }
        let rho = solve_log_cap_rho(kappa);
        Ok(ConcaveValuation::LogCap(LogCap {
            kappa,
            rho,
            kink: 1.0 / (kappa * rho),
        }))
    }

    /// The valuation z -> factor * v(z). Folds the factor into the
    /// representation where the family is closed under scaling.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(Error::InvalidValuation(format!(
                "scale factor must be finite and nonnegative, got {factor}"
            )));
        }
        if factor == 0.0 {
            return ConcaveValuation::linear(0.0);
        }
        Ok(match self {
            ConcaveValuation::Linear { slope } => ConcaveValuation::Linear {
                slope: factor * slope,
            },
            ConcaveValuation::Power { scale, exponent } => ConcaveValuation::Power {
                scale: factor * scale,
                exponent: *exponent,
            },
            ConcaveValuation::PiecewiseLinear(pl) => {
                ConcaveValuation::PiecewiseLinear(PiecewiseLinear {
                    points: pl.points.iter().map(|&(z, v)| (z, factor * v)).collect(),
                    slopes: pl.slopes.iter().map(|s| factor * s).collect(),
                })
            }
            ConcaveValuation::Scaled { factor: f0, base } => ConcaveValuation::Scaled {
                factor: factor * f0,
                base: base.clone(),
            },
            ConcaveValuation::LogCap(_) => ConcaveValuation::Scaled {
                factor,
                base: Box::new(self.clone()),
            },
        })
    }

    /// v(z). Panics if z lies outside [0, 1].
    pub fn value(&self, z: f64) -> f64 {
        assert!((0.0..=1.0).contains(&z), "fraction out of domain: {z}");
        match self {
            ConcaveValuation::Linear { slope } => slope * z,
            ConcaveValuation::Power { scale, exponent } => scale * z.powf(*exponent),
            ConcaveValuation::PiecewiseLinear(pl) => {
                // Last segment whose left endpoint is <= z.
                let k = pl.points.partition_point(|&(zk, _)| zk <= z).max(1) - 1;
                let k = k.min(pl.slopes.len() - 1);
                let (z0, v0) = pl.points[k];
                v0 + pl.slopes[k] * (z - z0)
            }
            ConcaveValuation::LogCap(lc) => {
                if z <= lc.kink {
                    lc.kappa * z
                } else {
                    1.0 + z.ln() / lc.rho
                }
            }
            ConcaveValuation::Scaled { factor, base } => factor * base.value(z),
        }
    }

    /// v'(z): the right-derivative at kinks, the left-derivative at z = 1.
    /// Panics if z lies outside [0, 1].
    pub fn deriv(&self, z: f64) -> f64 {
        assert!((0.0..=1.0).contains(&z), "fraction out of domain: {z}");
        match self {
            ConcaveValuation::Linear { slope } => *slope,
            ConcaveValuation::Power { scale, exponent } => {
                if *exponent == 1.0 {
                    *scale
                } else if z == 0.0 {
                    f64::INFINITY
                } else {
                    scale * exponent * z.powf(exponent - 1.0)
                }
            }
            ConcaveValuation::PiecewiseLinear(pl) => {
                if z >= 1.0 {
                    *pl.slopes.last().expect("validated: at least one segment")
                } else {
                    let k = pl.points.partition_point(|&(zk, _)| zk <= z).max(1) - 1;
                    pl.slopes[k.min(pl.slopes.len() - 1)]
                }
            }
            ConcaveValuation::LogCap(lc) => {
                if z <= lc.kink {
                    lc.kappa
                } else {
                    1.0 / (lc.rho * z)
                }
            }
            ConcaveValuation::Scaled { factor, base } => factor * base.deriv(z),
        }
    }

    /// The largest z in [0, 1] with v'(z) >= p: the single-agent best
    /// response y*(v, p). Returns 0 when v'(0) < p and 1 when v'(1) >= p.
    /// Panics if p is negative.
    pub fn inv_deriv(&self, p: f64) -> f64 {
        assert!(p >= 0.0, "price must be nonnegative: {p}");
        match self {
            ConcaveValuation::Linear { slope } => {
                if *slope >= p {
                    1.0
                } else {
                    0.0
                }
            }
            ConcaveValuation::Power { scale, exponent } => {
                let edge = scale * exponent; // v'(1)
                if p <= edge {
                    1.0
                } else if *exponent == 1.0 {
                    0.0
                } else {
                    // a c z^(c-1) = p
                    (p / edge).powf(1.0 / (exponent - 1.0))
                }
            }
            ConcaveValuation::PiecewiseLinear(pl) => {
                // Right endpoint of the last segment with slope >= p.
                let k = pl.slopes.partition_point(|&s| s >= p);
                if k == 0 {
                    0.0
                } else {
                    pl.points[k].0
                }
            }
            ConcaveValuation::LogCap(lc) => {
                if p <= 1.0 / lc.rho {
                    1.0
                } else if p > lc.kappa {
                    0.0
                } else {
                    // 1/(rho z) = p on the logarithmic piece; equals the
                    // kink 1/(kappa rho) at p = kappa.
                    1.0 / (lc.rho * p)
                }
            }
            ConcaveValuation::Scaled { factor, base } => base.inv_deriv(p / factor),
        }
    }

    /// Curvature v'(0) / v(1); at least 1 for every member of the family,
    /// infinite for Power with exponent below 1.
    pub fn curvature(&self) -> Result<f64> {
        let total = self.value(1.0);
        if total <= 0.0 {
            return Err(Error::DegenerateValuation);
        }
        Ok(self.deriv(0.0) / total)
    }
}

/// Per-agent distribution over valuations.
#[derive(Debug, Clone)]
pub enum ValuationDistribution {
    /// Atoms with probabilities summing to 1.
    FiniteSupport(Vec<(ConcaveValuation, f64)>),
    /// Draws t * base with t from a discrete multiplier distribution.
    ScaledFamily {
        base: ConcaveValuation,
        multipliers: Vec<(f64, f64)>,
    },
}

fn check_probabilities(probs: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities must be finite and nonnegative, got {p}"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > CONSTRUCTION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "probabilities must sum to 1, got {total}"
        )));
    }
    Ok(())
}

impl ValuationDistribution {
    pub fn finite_support(atoms: Vec<(ConcaveValuation, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        check_probabilities(atoms.iter().map(|(_, p)| *p))?;
        Ok(ValuationDistribution::FiniteSupport(atoms))
    }

    pub fn point_mass(valuation: ConcaveValuation) -> Self {
        ValuationDistribution::FiniteSupport(vec![(valuation, 1.0)])
    }

    pub fn scaled_family(base: ConcaveValuation, multipliers: Vec<(f64, f64)>) -> Result<Self> {
        if multipliers.is_empty() {
            return Err(Error::InvalidDistribution(
                "empty multiplier support".into(),
            ));
        }
        for &(t, _) in &multipliers {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "multipliers must be finite and nonnegative, got {t}"
                )));
            }
        }
        check_probabilities(multipliers.iter().map(|(_, p)| *p))?;
        Ok(ValuationDistribution::ScaledFamily { base, multipliers })
    }

    /// The support as explicit (valuation, probability) atoms; scaled
    /// families are expanded by folding each multiplier into the base.
    pub fn support(&self) -> Result<Vec<(ConcaveValuation, f64)>> {
        match self {
            ValuationDistribution::FiniteSupport(atoms) => Ok(atoms.clone()),
            ValuationDistribution::ScaledFamily { base, multipliers } => multipliers
                .iter()
                .map(|&(t, p)| Ok((base.scaled(t)?, p)))
                .collect(),
        }
    }

    /// One draw using the supplied generator.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> ConcaveValuation {
        let u: f64 = rng.random();
        match self {
            ValuationDistribution::FiniteSupport(atoms) => {
                let mut acc = 0.0;
                for (v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return v.clone();
                    }
                }
                atoms.last().expect("validated: nonempty").0.clone()
            }
            ValuationDistribution::ScaledFamily { base, multipliers } => {
                let mut acc = 0.0;
                let mut t = multipliers.last().expect("validated: nonempty").0;
                for &(tk, p) in multipliers {
                    acc += p;
                    if u < acc {
                        t = tk;
                        break;
                    }
                }
                base.scaled(t).expect("validated multiplier")
            }
        }
    }

    /// Largest initial derivative over the support (may be infinite).
    pub fn max_initial_deriv(&self) -> Result<f64> {
        let sup = self.support()?;
        Ok(sup.iter().map(|(v, _)| v.deriv(0.0)).fold(0.0, f64::max))
    }

    /// The distribution of t * V: every support valuation scaled by t.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        match self {
            ValuationDistribution::FiniteSupport(atoms) => {
                Ok(ValuationDistribution::FiniteSupport(
                    atoms
                        .iter()
                        .map(|(v, p)| Ok((v.scaled(t)?, *p)))
                        .collect::<Result<_>>()?,
                ))
            }
            ValuationDistribution::ScaledFamily { base, multipliers } => {
                Ok(ValuationDistribution::ScaledFamily {
                    base: base.scaled(t)?,
                    multipliers: multipliers.clone(),
                })
            }
        }
    }
}

/// One drawn valuation per agent.
#[derive(Debug, Clone)]
pub struct ValuationProfile {
    valuations: Vec<ConcaveValuation>,
}

impl ValuationProfile {
    pub fn new(valuations: Vec<ConcaveValuation>) -> Result<Self> {
        if valuations.is_empty() {
            return Err(Error::InvalidArgument(
                "profile needs at least one agent".into(),
            ));
        }
        Ok(ValuationProfile { valuations })
    }

    pub fn len(&self) -> usize {
        self.valuations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valuations.is_empty()
    }

    pub fn agent(&self, i: usize) -> &ConcaveValuation {
        &self.valuations[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConcaveValuation> {
        self.valuations.iter()
    }
}

/// Draw one profile with the supplied generator, one independent draw per
/// agent, in agent order.
pub fn sample_profile_with<R: Rng>(
    dists: &[ValuationDistribution],
    rng: &mut R,
) -> ValuationProfile {
    assert!(
        !dists.is_empty(),
        "at least one agent distribution required"
    );
    ValuationProfile {
        valuations: dists.iter().map(|d| d.sample(rng)).collect(),
    }
}

/// Draw one profile deterministically from a seed.
pub fn sample_profile(dists: &[ValuationDistribution], seed: u64) -> ValuationProfile {
    sample_profile_with(dists, &mut substream(seed, STREAM_PROFILE, 0))
}
