//! Built-in (warping function, fiber) models and the hypotheses each one meets.

use serde::Serialize;

use crate::conditions::{log_concavity_check, ncc_margin, tcc_check, ubiquitous_check, ConditionVerdict};
use crate::mesh::{FiberKindName, FiberSpec};
use crate::warp::{inf_ratio_alpha, IntervalSpec, WarpFamily, WarpingFunction, DEFAULT_TOLERANCE};
use crate::Result;

/// Samples used when evaluating a preset's hypotheses.
pub const PRESET_SAMPLES: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub warping: WarpingFunction,
    pub fiber: FiberSpec,
    /// Height window the conditions are sampled on.
    pub window: IntervalSpec,
    pub summary: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetHypotheses {
    pub ncc: ConditionVerdict,
    pub tcc: ConditionVerdict,
    pub ubiquitous: ConditionVerdict,
    pub log_concave: ConditionVerdict,
    /// Sampled `inf f'^2/f^2`.
    pub alpha: f64,
    pub slice_uniqueness: bool,
    pub annotation: String,
}

fn torus(n: usize) -> FiberSpec {
    FiberSpec {
        kind: FiberKindName::Torus,
        resolution: [n, n],
        size: None,
    }
}

fn sphere(n: usize) -> FiberSpec {
    FiberSpec {
        kind: FiberKindName::Sphere,
        resolution: [n, 2 * n],
        size: Some(vec![1.0]),
    }
}

fn window(a: f64, b: f64) -> IntervalSpec {
    IntervalSpec::new(a, b).expect("preset windows are ordered")
}

/// The four built-in models.
pub fn catalog() -> Vec<Preset> {
    vec![
        Preset {
            name: "lorentz-product",
            warping: WarpingFunction::constant(1.0).expect("c = 1 is positive"),
            fiber: torus(64),
            window: window(-1.0, 1.0),
            summary: "f = 1 over the flat torus; maximal surfaces",
        },
        Preset {
            name: "steady-state",
            warping: WarpingFunction::exponential(),
            fiber: torus(64),
            window: window(-2.0, 2.0),
            summary: "f = exp(t) over the flat torus",
        },
        Preset {
            name: "de-sitter",
            warping: WarpingFunction::cosh(),
            fiber: sphere(32),
            window: window(-2.0, 2.0),
            summary: "f = cosh(t) over the unit sphere",
        },
        Preset {
            name: "powerlaw-proper",
            warping: WarpingFunction::power_law(1.0).expect("finite exponent"),
            fiber: sphere(32),
            window: window(1.0, 4.0),
            summary: "f = t over the unit sphere, t in [1, 4]",
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    catalog().into_iter().find(|p| p.name == name)
}

impl Preset {
    /// Gauss curvature of the fiber.
    pub fn kf(&self) -> f64 {
        match self.fiber.kind {
            FiberKindName::Torus => 0.0,
            FiberKindName::Sphere => {
                let r = self
                    .fiber
                    .size
                    .as_deref()
                    .and_then(|s| s.first().copied())
                    .unwrap_or(1.0);
                1.0 / (r * r)
            }
        }
    }

    pub fn hypotheses(&self) -> Result<PresetHypotheses> {
        let (wf, kf, w) = (&self.warping, self.kf(), &self.window);
        let ncc = ncc_margin(wf, kf, w, PRESET_SAMPLES)?;
        let tcc = tcc_check(wf, kf, w, PRESET_SAMPLES)?;
        let ubiquitous = ubiquitous_check(wf, kf, w, PRESET_SAMPLES, 16)?;
        let log_concave = log_concavity_check(wf, w, PRESET_SAMPLES)?;
        let alpha = inf_ratio_alpha(wf, w, PRESET_SAMPLES)?;
        let flat_log =
            log_concave.margin.abs() <= DEFAULT_TOLERANCE && max_logf_second(wf, w)?.abs() <= DEFAULT_TOLERANCE;
        let annotation = if wf.is_constant() {
            "f constant; (I) equivalent to H = 0".to_string()
        } else if !log_concave.holds {
            "fails (log f)'' <= 0; slice-uniqueness hypotheses NOT met".to_string()
        } else if flat_log {
            format!("(log f)'' = 0; alpha = {}", fmt_alpha(alpha))
        } else {
            format!(
                "(log f)'' < 0; alpha = {}; slice-uniqueness hypotheses met",
                fmt_alpha(alpha)
            )
        };
        Ok(PresetHypotheses {
            slice_uniqueness: log_concave.holds,
            ncc,
            tcc,
            ubiquitous,
            log_concave,
            alpha,
            annotation,
        })
    }
}

fn max_logf_second(wf: &WarpingFunction, w: &IntervalSpec) -> Result<f64> {
    Ok(wf
        .sample_grid(w, PRESET_SAMPLES)?
        .iter()
        .map(|&t| wf.eval_unchecked(t).logf_second)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn fmt_alpha(a: f64) -> String {
    if (a - a.round()).abs() < 1e-12 {
        format!("{}", a.round())
    } else {
        format!("{a:.4}")
    }
}

impl WarpFamily {
    /// Whether `f` is non-constant on every open interval.
    pub fn is_proper(&self) -> bool {
        match *self {
            WarpFamily::Constant { .. } => false,
            WarpFamily::Affine { m, .. } => m != 0.0,
            WarpFamily::PowerLaw { k } => k != 0.0,
            WarpFamily::Exponential | WarpFamily::Cosh => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotations() {
        let a = |n: &str| preset(n).unwrap().hypotheses().unwrap();
        assert_eq!(
            a("de-sitter").annotation,
            "fails (log f)'' <= 0; slice-uniqueness hypotheses NOT met"
        );
        assert!(!a("de-sitter").log_concave.holds);
        assert_eq!(a("steady-state").annotation, "(log f)'' = 0; alpha = 1");
        assert_eq!(a("lorentz-product").annotation, "f constant; (I) equivalent to H = 0");
        let p = a("powerlaw-proper");
        assert!(p.slice_uniqueness && p.ncc.holds);
        assert!((p.alpha - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn catalog_builds() {
        for p in catalog() {
            let mesh = p.fiber.build().unwrap();
            assert_eq!(mesh.gauss_curvature(), p.kf());
            assert!(p.window.is_subset_of(&p.warping.domain()));
        }
        assert!(preset("none").is_none());
        assert!(!WarpFamily::Constant { c: 2.0 }.is_proper());
        assert!(WarpFamily::PowerLaw { k: 1.0 }.is_proper());
    }
}
