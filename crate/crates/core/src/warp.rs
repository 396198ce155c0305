//! Warping functions `f: I -> (0, inf)` with closed-form derivatives.
//!
//! Every family carries exact expressions for `f`, `f'`, `f''`, `(log f)''`
//! and a fixed primitive `F` (`F' = f`). The integration constants are:
//!
//! | family        | primitive `F(t)`                   | normalisation |
//! |---------------|------------------------------------|---------------|
//! | `Constant(c)` | `c t`                              | `F(0) = 0`    |
//! | `Exponential` | `e^t - 1`                          | `F(0) = 0`    |
//! | `Cosh`        | `sinh t`                           | `F(0) = 0`    |
//! | `PowerLaw(k)` | `(t^(k+1) - 1)/(k+1)`, `ln t` at k=-1 | `F(1) = 0` |
//! | `Affine(m,q)` | `(m t + q)^2 / (2m)`, `q t` at m=0 | zero at the root of `f` |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling window used in place of infinite interval endpoints.
pub const DEFAULT_TRUNCATION: (f64, f64) = (-5.0, 5.0);

/// Default tolerance for sign tests on sampled closed-form quantities.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Endpoint; 2]", into = "[Endpoint; 2]")]
pub struct IntervalSpec {
    lower: f64,
    upper: f64,
}

impl IntervalSpec {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "interval requires lower < upper, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lower < t && t < self.upper
    }

    pub fn is_subset_of(&self, other: &IntervalSpec) -> bool {
        self.lower >= other.lower && self.upper <= other.upper
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }
}

/// Interval endpoint as it appears in config files: a number, or one of the
/// strings `"inf"`, `"+inf"`, `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Finite(f64),
    Named(InfName),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InfName {
    #[serde(rename = "inf", alias = "+inf")]
    PosInf,
    #[serde(rename = "-inf")]
    NegInf,
}

impl From<f64> for Endpoint {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            Endpoint::Named(InfName::PosInf)
        } else if x == f64::NEG_INFINITY {
            Endpoint::Named(InfName::NegInf)
        } else {
            Endpoint::Finite(x)
        }
    }
}

impl From<Endpoint> for f64 {
    fn from(e: Endpoint) -> f64 {
        match e {
            Endpoint::Finite(x) => x,
            Endpoint::Named(InfName::PosInf) => f64::INFINITY,
            Endpoint::Named(InfName::NegInf) => f64::NEG_INFINITY,
        }
    }
}

impl TryFrom<[Endpoint; 2]> for IntervalSpec {
    type Error = Error;

    fn try_from(ends: [Endpoint; 2]) -> Result<Self> {
        IntervalSpec::new(ends[0].into(), ends[1].into())
    }
}

impl From<IntervalSpec> for [Endpoint; 2] {
    fn from(i: IntervalSpec) -> Self {
        [i.lower.into(), i.upper.into()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WarpFamily {
    Constant { c: f64 },
    Exponential,
    Cosh,
    PowerLaw { k: f64 },
    Affine { m: f64, q: f64 },
}

impl WarpFamily {
    /// Largest open interval on which the family is defined and positive.
    pub fn positivity_domain(&self) -> Result<IntervalSpec> {
        match *self {
            WarpFamily::Constant { c } if c > 0.0 && c.is_finite() => Ok(IntervalSpec::real_line()),
            WarpFamily::Constant { c } => Err(Error::InvalidParameter(format!(
                "constant warping function needs c > 0, got {c}"
            ))),
            WarpFamily::Exponential | WarpFamily::Cosh => Ok(IntervalSpec::real_line()),
            WarpFamily::PowerLaw { k } if k.is_finite() => IntervalSpec::new(0.0, f64::INFINITY),
            WarpFamily::PowerLaw { k } => Err(Error::InvalidParameter(format!(
                "power-law exponent must be finite, got {k}"
            ))),
            WarpFamily::Affine { m, q } => {
                if !(m.is_finite() && q.is_finite()) {
                    return Err(Error::InvalidParameter("affine parameters must be finite".into()));
                }
                if m > 0.0 {
                    IntervalSpec::new(-q / m, f64::INFINITY)
                } else if m < 0.0 {
                    IntervalSpec::new(f64::NEG_INFINITY, -q / m)
                } else if q > 0.0 {
                    Ok(IntervalSpec::real_line())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "affine function with m = 0 needs q > 0, got {q}"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WarpFamily::Constant { .. } => "constant",
            WarpFamily::Exponential => "exp",
            WarpFamily::Cosh => "cosh",
            WarpFamily::PowerLaw { .. } => "powerlaw",
            WarpFamily::Affine { .. } => "affine",
        }
    }
}

/// Closed-form values of a warping function at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WarpValues {
    pub f: f64,
    pub f_prime: f64,
    pub f_second: f64,
    pub logf_second: f64,
    pub primitive: f64,
}

impl WarpValues {
    /// `f'/f`, the slice mean curvature up to sign.
    pub fn hubble(&self) -> f64 {
        self.f_prime / self.f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WarpSpec", into = "WarpSpec")]
pub struct WarpingFunction {
    family: WarpFamily,
    domain: IntervalSpec,
}

impl WarpingFunction {
    /// Builds `f` on its full positivity domain.
    pub fn new(family: WarpFamily) -> Result<Self> {
        let domain = family.positivity_domain()?;
        Ok(Self { family, domain })
    }

    /// Builds `f` on a sub-interval of its positivity domain.
    pub fn with_domain(family: WarpFamily, domain: IntervalSpec) -> Result<Self> {
        let natural = family.positivity_domain()?;
        if !domain.is_subset_of(&natural) {
            return Err(Error::InvalidParameter(format!(
                "domain ({}, {}) is not inside the positivity domain ({}, {}) of the {} family",
                domain.lower,
                domain.upper,
                natural.lower,
                natural.upper,
                family.name()
            )));
        }
        Ok(Self { family, domain })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(WarpFamily::Constant { c })
    }

    pub fn exponential() -> Self {
        Self {
            family: WarpFamily::Exponential,
            domain: IntervalSpec::real_line(),
        }
    }

    pub fn cosh() -> Self {
        Self {
            family: WarpFamily::Cosh,
            domain: IntervalSpec::real_line(),
        }
    }

    pub fn power_law(k: f64) -> Result<Self> {
        Self::new(WarpFamily::PowerLaw { k })
    }

    pub fn affine(m: f64, q: f64) -> Result<Self> {
        Self::new(WarpFamily::Affine { m, q })
    }

    pub fn family(&self) -> WarpFamily {
        self.family
    }

    pub fn domain(&self) -> IntervalSpec {
        self.domain
    }

    /// True when `f' == 0` identically (a Lorentzian product).
    pub fn is_constant(&self) -> bool {
        matches!(self.family, WarpFamily::Constant { .. })
            || matches!(self.family, WarpFamily::Affine { m, .. } if m == 0.0)
            || matches!(self.family, WarpFamily::PowerLaw { k } if k == 0.0)
    }

    pub fn eval(&self, t: f64) -> Result<WarpValues> {
        self.domain.check(t)?;
        Ok(self.eval_unchecked(t))
    }

    /// Evaluation without the domain check, for hot loops over fields that
    /// were already validated.
    pub(crate) fn eval_unchecked(&self, t: f64) -> WarpValues {
        match self.family {
            WarpFamily::Constant { c } => WarpValues {
                f: c,
                f_prime: 0.0,
                f_second: 0.0,
                logf_second: 0.0,
                primitive: c * t,
            },
            WarpFamily::Exponential => {
                let e = t.exp();
                WarpValues {
                    f: e,
                    f_prime: e,
                    f_second: e,
                    logf_second: 0.0,
                    primitive: t.exp_m1(),
                }
            }
            WarpFamily::Cosh => {
                let (c, s) = (t.cosh(), t.sinh());
                WarpValues {
                    f: c,
                    f_prime: s,
                    f_second: c,
                    logf_second: 1.0 / (c * c),
                    primitive: s,
                }
            }
            WarpFamily::PowerLaw { k } => {
                let primitive = if k == -1.0 {
                    t.ln()
                } else {
                    (t.powf(k + 1.0) - 1.0) / (k + 1.0)
                };
                WarpValues {
                    f: t.powf(k),
                    f_prime: k * t.powf(k - 1.0),
                    f_second: k * (k - 1.0) * t.powf(k - 2.0),
                    logf_second: -k / (t * t),
                    primitive,
                }
            }
            WarpFamily::Affine { m, q } => {
                let f = m * t + q;
                WarpValues {
                    f,
                    f_prime: m,
                    f_second: 0.0,
                    logf_second: -(m * m) / (f * f),
                    primitive: if m == 0.0 { q * t } else { f * f / (2.0 * m) },
                }
            }
        }
    }

    /// Sample points of a closed window inside the domain.
    ///
    /// Infinite endpoints of `interval` are replaced by `truncation`. Grid
    /// points that fall on an open endpoint of the domain are dropped.
    pub fn sample_grid_with(
        &self,
        interval: &IntervalSpec,
        samples: usize,
        truncation: (f64, f64),
    ) -> Result<Vec<f64>> {
        if samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 samples, got {samples}"
            )));
        }
        if !interval.is_subset_of(&self.domain) {
            return Err(Error::InvalidParameter(format!(
                "window ({}, {}) is not inside the domain ({}, {})",
                interval.lower, interval.upper, self.domain.lower, self.domain.upper
            )));
        }
        let lo = if interval.lower.is_finite() {
            interval.lower
        } else {
            truncation.0
        };
        let hi = if interval.upper.is_finite() {
            interval.upper
        } else {
            truncation.1
        };
        let lo = lo.max(self.domain.lower);
        let hi = hi.min(self.domain.upper);
        if !(lo < hi) {
            return Err(Error::EmptyWindow { lower: lo, upper: hi });
        }
        let step = (hi - lo) / (samples - 1) as f64;
        let grid: Vec<f64> = (0..samples)
            .map(|k| if k + 1 == samples { hi } else { lo + k as f64 * step })
            .filter(|&t| self.domain.contains(t))
            .collect();
        if grid.len() < 2 {
            return Err(Error::EmptyWindow { lower: lo, upper: hi });
        }
        Ok(grid)
    }

    pub fn sample_grid(&self, interval: &IntervalSpec, samples: usize) -> Result<Vec<f64>> {
        self.sample_grid_with(interval, samples, DEFAULT_TRUNCATION)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogConcavity {
    pub min_of_minus_logf_second: f64,
    /// Sample point where the minimum is attained.
    pub argmin: f64,
    pub holds: bool,
}

/// Minimum of `-(log f)''` over a sample grid; `holds` when it is `>= -tol`.
pub fn log_concavity_margin(wf: &WarpingFunction, interval: &IntervalSpec, samples: usize) -> Result<LogConcavity> {
    log_concavity_margin_tol(wf, interval, samples, DEFAULT_TOLERANCE)
}

pub fn log_concavity_margin_tol(
    wf: &WarpingFunction,
    interval: &IntervalSpec,
    samples: usize,
    tol: f64,
) -> Result<LogConcavity> {
    let grid = wf.sample_grid(interval, samples)?;
    let (argmin, min) = grid
        .iter()
        .map(|&t| (t, -wf.eval_unchecked(t).logf_second))
        .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    Ok(LogConcavity {
        min_of_minus_logf_second: min,
        argmin,
        holds: min >= -tol,
    })
}

/// Minimum of `f'^2 / f^2` over a sample grid.
///
/// This is the minimum over the sampled window only; on unbounded domains it
/// approximates the infimum from above.
pub fn inf_ratio_alpha(wf: &WarpingFunction, interval: &IntervalSpec, samples: usize) -> Result<f64> {
    let grid = wf.sample_grid(interval, samples)?;
    Ok(grid
        .iter()
        .map(|&t| {
            let v = wf.eval_unchecked(t);
            let r = v.f_prime / v.f;
            r * r
        })
        .fold(f64::INFINITY, f64::min))
}

/// Config-file form: `{"family": ..., "params": {...}, "domain": [a, b]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpSpec {
    pub family: FamilyName,
    #[serde(default)]
    pub params: WarpParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<IntervalSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Constant,
    Exp,
    Cosh,
    Powerlaw,
    Affine,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

fn required(value: Option<f64>, family: &str, name: &str) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidParameter(format!("{family} family requires params.{name}")))
}

impl TryFrom<WarpSpec> for WarpingFunction {
    type Error = Error;

    fn try_from(spec: WarpSpec) -> Result<Self> {
        let p = &spec.params;
        let family = match spec.family {
            FamilyName::Constant => WarpFamily::Constant { c: p.c.unwrap_or(1.0) },
            FamilyName::Exp => WarpFamily::Exponential,
            FamilyName::Cosh => WarpFamily::Cosh,
            FamilyName::Powerlaw => WarpFamily::PowerLaw {
                k: required(p.k, "powerlaw", "k")?,
            },
            FamilyName::Affine => WarpFamily::Affine {
                m: required(p.m, "affine", "m")?,
                q: required(p.q, "affine", "q")?,
            },
        };
        match spec.domain {
            Some(d) => WarpingFunction::with_domain(family, d),
            None => WarpingFunction::new(family),
        }
    }
}

impl From<WarpingFunction> for WarpSpec {
    fn from(wf: WarpingFunction) -> Self {
        let mut params = WarpParams::default();
        let family = match wf.family {
            WarpFamily::Constant { c } => {
                params.c = Some(c);
                FamilyName::Constant
            }
            WarpFamily::Exponential => FamilyName::Exp,
            WarpFamily::Cosh => FamilyName::Cosh,
            WarpFamily::PowerLaw { k } => {
                params.k = Some(k);
                FamilyName::Powerlaw
            }
            WarpFamily::Affine { m, q } => {
                params.m = Some(m);
                params.q = Some(q);
                FamilyName::Affine
            }
        };
        WarpSpec {
            family,
            params,
            domain: Some(wf.domain),
        }
    }
}
