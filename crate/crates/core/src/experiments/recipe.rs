//! Smooth test fields on the fiber.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{AnalyticField, FiberKind, FiberMesh, ScalarField};
use crate::warp::WarpingFunction;

/// Nodes per axis of the reference grid used to normalize random fields.
const REFERENCE_NODES: usize = 96;

/// Rescaling attempts before giving up on the safeguard.
const MAX_RESCALES: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldRecipe {
    Constant {
        t0: f64,
    },
    /// Torus: `t0 + a sin(kx 2pi x/Lx) cos(ky 2pi y/Ly)`.
    /// Sphere: `t0 + a sin(kx X) cos(ky Y)` in the unit embedding.
    SingleMode {
        t0: f64,
        amplitude: f64,
        wavevector: [i32; 2],
    },
    /// Seeded trigonometric sum over modes with `|k|_inf <= max_mode`,
    /// normalized so that `max |u - t0| = amplitude`.
    RandomBandLimited {
        t0: f64,
        amplitude: f64,
        max_mode: u32,
        seed: u64,
    },
}

impl FieldRecipe {
    pub fn t0(&self) -> f64 {
        match *self {
            FieldRecipe::Constant { t0 }
            | FieldRecipe::SingleMode { t0, .. }
            | FieldRecipe::RandomBandLimited { t0, .. } => t0,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            FieldRecipe::Constant { .. } => 0.0,
            FieldRecipe::SingleMode { amplitude, .. } | FieldRecipe::RandomBandLimited { amplitude, .. } => amplitude,
        }
    }

    pub fn with_amplitude(&self, a: f64) -> FieldRecipe {
        let mut r = self.clone();
        match &mut r {
            FieldRecipe::Constant { .. } => {}
            FieldRecipe::SingleMode { amplitude, .. } | FieldRecipe::RandomBandLimited { amplitude, .. } => {
                *amplitude = a
            }
        }
        r
    }

    /// A recipe whose field on `mesh` has zero deviation from `t0`.
    pub fn is_constant(&self) -> bool {
        match *self {
            FieldRecipe::Constant { .. } => true,
            FieldRecipe::SingleMode {
                amplitude, wavevector, ..
            } => amplitude == 0.0 || wavevector[0] == 0,
            FieldRecipe::RandomBandLimited {
                amplitude, max_mode, ..
            } => amplitude == 0.0 || max_mode == 0,
        }
    }

    fn shape(&self, kind: FiberKind) -> Shape {
        match *self {
            FieldRecipe::Constant { .. } => Shape::Zero,
            FieldRecipe::SingleMode { wavevector, .. } => Shape::Single(wavevector),
            FieldRecipe::RandomBandLimited { max_mode, seed, .. } => Shape::random(kind, max_mode, seed),
        }
    }

    /// The largest amplitude not above the requested one for which the graph
    /// stays inside the domain of `wf` with relative speed at most `safeguard`.
    pub fn fit(&self, wf: &WarpingFunction, mesh: &FiberMesh, safeguard: f64) -> Result<FieldRecipe> {
        if !(safeguard > 0.0 && safeguard < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "safeguard must lie in (0, 1), got {safeguard}"
            )));
        }
        wf.domain().check(self.t0())?;
        let shape = self.shape(mesh.kind());
        let dev = shape.eval(mesh);
        let mut amp = self.amplitude();
        for _ in 0..MAX_RESCALES {
            match max_speed(wf, mesh, self.t0(), amp, &dev) {
                Some(v) if v <= safeguard => return Ok(self.with_amplitude(amp)),
                Some(v) => amp *= 0.97 * safeguard / v,
                None => amp *= 0.5,
            }
        }
        Err(Error::Precondition(format!(
            "recipe could not be rescaled below speed {safeguard} on this mesh"
        )))
    }

    /// Fits the amplitude with [`FieldRecipe::fit`] and samples the result.
    pub fn generate(
        &self,
        wf: &WarpingFunction,
        mesh: &FiberMesh,
        safeguard: f64,
    ) -> Result<(FieldRecipe, ScalarField)> {
        let fitted = self.fit(wf, mesh, safeguard)?;
        let u = fitted.sample(mesh)?;
        Ok((fitted, u))
    }
}

impl AnalyticField for FieldRecipe {
    fn sample(&self, mesh: &FiberMesh) -> Result<ScalarField> {
        let dev = self.shape(mesh.kind()).eval(mesh);
        let (t0, a) = (self.t0(), self.amplitude());
        ScalarField::new(dev.into_iter().map(|d| t0 + a * d).collect())
    }
}

/// Relative speed `max |Du| / f(u)` of `t0 + amp * dev`, or `None` when the
/// field leaves the domain.
fn max_speed(wf: &WarpingFunction, mesh: &FiberMesh, t0: f64, amp: f64, dev: &[f64]) -> Option<f64> {
    let u: Vec<f64> = dev.iter().map(|d| t0 + amp * d).collect();
    let d0 = mesh.d1(&u, 0);
    let d1 = mesh.d1(&u, 1);
    let geo = mesh.fiber_geometry();
    let mut worst: f64 = 0.0;
    for k in 0..u.len() {
        let f = wf.eval(u[k]).ok()?.f;
        let (a, b) = geo.raise(k, d0[k], d1[k]);
        let q = d0[k] * a + d1[k] * b;
        worst = worst.max(q.max(0.0).sqrt() / f);
    }
    Some(worst)
}

/// Unit-amplitude deviation from `t0`.
enum Shape {
    Zero,
    Single([i32; 2]),
    /// `(wavevector, cos coefficient, sin coefficient)` over the fiber
    /// coordinates (torus, scaled to `2 pi`) or the unit embedding (sphere).
    Random {
        modes: Vec<(Vec<f64>, f64, f64)>,
        scale: f64,
    },
}

impl Shape {
    fn random(kind: FiberKind, max_mode: u32, seed: u64) -> Shape {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = max_mode as i32;
        let dims = if matches!(kind, FiberKind::FlatTorus { .. }) {
            2
        } else {
            3
        };
        let mut modes = Vec::new();
        for k in half_lattice(dims, m) {
            let a = rng.random_range(-1.0..=1.0);
            let b = rng.random_range(-1.0..=1.0);
            modes.push((k.into_iter().map(f64::from).collect(), a, b));
        }
        let mut s = Shape::Random { modes, scale: 1.0 };
        let peak = s.reference_peak(kind);
        if let Shape::Random { scale, .. } = &mut s {
            *scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        }
        s
    }

    /// Max of `|sum|` over a fixed grid independent of the mesh.
    fn reference_peak(&self, kind: FiberKind) -> f64 {
        let n = REFERENCE_NODES;
        let mut peak: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = match kind {
                    FiberKind::FlatTorus { .. } => vec![2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / n as f64],
                    FiberKind::RoundSphere { .. } => {
                        let th = PI * (i as f64 + 0.5) / n as f64;
                        let ph = 2.0 * PI * j as f64 / n as f64;
                        vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
                    }
                };
                peak = peak.max(self.at(&p).abs());
            }
        }
        peak
    }

    fn at(&self, p: &[f64]) -> f64 {
        match self {
            Shape::Zero => 0.0,
            Shape::Single([kx, ky]) => (f64::from(*kx) * p[0]).sin() * (f64::from(*ky) * p[1]).cos(),
            Shape::Random { modes, scale } => {
                scale
                    * modes
                        .iter()
                        .map(|(k, a, b)| {
                            let ph: f64 = k.iter().zip(p).map(|(k, x)| k * x).sum();
                            a * ph.cos() + b * ph.sin()
                        })
                        .sum::<f64>()
            }
        }
    }

    fn eval(&self, mesh: &FiberMesh) -> Vec<f64> {
        let point = |k: usize| -> Vec<f64> {
            match mesh.kind() {
                FiberKind::FlatTorus { lx, ly } => {
                    let (x, y) = mesh.coords(k);
                    vec![2.0 * PI * x / lx, 2.0 * PI * y / ly]
                }
                FiberKind::RoundSphere { radius } => mesh.embedding(k).iter().map(|c| c / radius).collect(),
            }
        };
        (0..mesh.len()).map(|k| self.at(&point(k))).collect()
    }
}

/// Integer vectors with `|k|_inf <= m`, one from each `{k, -k}` pair, zero excluded.
fn half_lattice(dims: usize, m: i32) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let mut k = vec![-m; dims];
    loop {
        if let Some(first) = k.iter().find(|&&c| c != 0) {
            if *first > 0 {
                out.push(k.clone());
            }
        }
        let mut axis = 0;
        loop {
            if axis == dims {
                return out;
            }
            if k[axis] < m {
                k[axis] += 1;
                break;
            }
            k[axis] = -m;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(n: usize) -> FiberMesh {
        FiberMesh::build_torus(n, n, 2.0 * PI, 2.0 * PI).unwrap()
    }

    #[test]
    fn half_lattice_counts() {
        assert_eq!(half_lattice(2, 1).len(), 4);
        assert_eq!(half_lattice(2, 4).len(), 40);
        assert_eq!(half_lattice(3, 2).len(), 62);
    }

    #[test]
    fn single_mode_on_torus() {
        let m = torus(16);
        let r = FieldRecipe::SingleMode {
            t0: 1.0,
            amplitude: 0.5,
            wavevector: [1, 1],
        };
        let u = r.sample(&m).unwrap();
        for k in 0..m.len() {
            let (x, y) = m.coords(k);
            assert!((u.values()[k] - (1.0 + 0.5 * x.sin() * y.cos())).abs() < 1e-15);
        }
    }

    #[test]
    fn random_field_is_deterministic_and_normalized() {
        let m = torus(64);
        let r = FieldRecipe::RandomBandLimited {
            t0: 2.0,
            amplitude: 0.1,
            max_mode: 4,
            seed: 7,
        };
        let a = r.sample(&m).unwrap();
        let b = r.sample(&m).unwrap();
        assert_eq!(a, b);
        let dev = a.map(|v| (v - 2.0).abs()).max();
        assert!(dev <= 0.1 * (1.0 + 1e-12) && dev > 0.08, "{dev}");
        let c = FieldRecipe::RandomBandLimited {
            t0: 2.0,
            amplitude: 0.1,
            max_mode: 4,
            seed: 8,
        }
        .sample(&m)
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fitting_meets_the_safeguard() {
        let m = torus(32);
        let wf = WarpingFunction::exponential();
        let r = FieldRecipe::SingleMode {
            t0: 0.0,
            amplitude: 3.0,
            wavevector: [2, 1],
        };
        let (fitted, u) = r.generate(&wf, &m, 0.9).unwrap();
        assert!(fitted.amplitude() < 3.0);
        let g = crate::graph::SpacelikeGraph::new(wf, std::sync::Arc::new(m), u).unwrap();
        assert!(g.lambda() <= 0.9);

        let small = FieldRecipe::SingleMode {
            t0: 0.0,
            amplitude: 0.01,
            wavevector: [1, 0],
        };
        assert_eq!(small.fit(&wf, &torus(16), 0.9).unwrap(), small);
    }

    #[test]
    fn sphere_fields_are_smooth_at_the_poles() {
        let m = FiberMesh::build_sphere(16, 32, 1.0).unwrap();
        let r = FieldRecipe::RandomBandLimited {
            t0: 0.0,
            amplitude: 0.2,
            max_mode: 2,
            seed: 1,
        };
        let u = r.sample(&m).unwrap();
        // The first latitude row circles the pole closely: small spread.
        let row: Vec<f64> = (0..32).map(|j| u.values()[m.index(0, j)]).collect();
        let spread =
            row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - row.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 0.2);
    }

    #[test]
    fn recipes_round_trip_through_json() {
        let r = FieldRecipe::RandomBandLimited {
            t0: 2.0,
            amplitude: 0.1,
            max_mode: 4,
            seed: 3,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"random_band_limited","t0":2.0,"amplitude":0.1,"max_mode":4,"seed":3}"#
        );
        assert_eq!(serde_json::from_str::<FieldRecipe>(&s).unwrap(), r);
    }
}
