//! Structured discretisations of compact fibers `(F, g)`.
//!
//! Two fiber families are supported:
//!
//! * `FlatTorus`: periodic uniform grid on `[0, Lx) x [0, Ly)`, `g = dx^2 + dy^2`.
//! * `RoundSphere`: latitude-longitude grid with latitude nodes staggered off
//!   the poles, `theta_j = (j + 1/2) pi / Ntheta`, and `g = r^2 (dtheta^2 +
//!   sin^2 theta dphi^2)`.
//!
//! Fields are stored node-major with axis 0 outermost: node `i0 * n1 + i1`.
//! On the torus axis 0 is `x`; on the sphere axis 0 is `theta` and axis 1 is
//! `phi`.
//!
//! Derivatives are second-order centered differences, wrapped on periodic
//! axes. The sphere's latitude axis is continued across each pole through the
//! antipodal meridian, `(theta, phi) -> (-theta, phi + pi)`, so its stencils
//! are centered on every row. Scalars and the flux `sqrt(det g) V^theta` are
//! even under that map; `d_theta`-components of one-forms and mixed metric
//! components are odd. Quadrature is the midpoint rule on coordinate cells.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FiberKind {
    FlatTorus { lx: f64, ly: f64 },
    RoundSphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberMesh {
    kind: FiberKind,
    n: [usize; 2],
    h: [f64; 2],
    periodic: [bool; 2],
    axis_coords: [Vec<f64>; 2],
    metric: MetricField,
    geometry: MetricGeometry,
    gauss: f64,
}

/// Node-indexed real values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(Vec<f64>);

/// Contravariant components `(V^1, V^2)` per node in fiber coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

/// Symmetric 2x2 tensor per node, stored as `(m11, m12, m22)`.
///
/// Positive definiteness is checked by the operators that need it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub m11: Vec<f64>,
    pub m12: Vec<f64>,
    pub m22: Vec<f64>,
}

/// Which metric an operator should use.
#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    Fiber,
    Field(&'a MetricField),
}

/// Per-node `sqrt(det m)` and inverse components of a positive definite metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGeometry {
    pub sqrt_det: Vec<f64>,
    pub inv11: Vec<f64>,
    pub inv12: Vec<f64>,
    pub inv22: Vec<f64>,
}

/// How a refined field was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Prolongation {
    /// Resampled from the generating analytic expression.
    Analytic,
    /// Bilinear interpolation of the coarse values.
    Bilinear,
}

/// Behaviour of a field under continuation across a pole of the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// A field that can be evaluated exactly at the nodes of any mesh.
pub trait AnalyticField {
    fn sample(&self, mesh: &FiberMesh) -> Result<ScalarField>;
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(Self(values))
    }

    pub fn constant(mesh: &FiberMesh, value: f64) -> Self {
        Self(vec![value; mesh.len()])
    }

    /// Values of `f(x0, x1)` at the nodes, in fiber coordinates.
    pub fn from_coords(mesh: &FiberMesh, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let v = (0..mesh.len())
            .map(|k| {
                let (a, b) = mesh.coords(k);
                f(a, b)
            })
            .collect();
        Self::new(v)
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn argmin(&self) -> usize {
        arg_by(&self.0, |a, b| a < b)
    }

    pub fn argmax(&self) -> usize {
        arg_by(&self.0, |a, b| a > b)
    }

    /// `max - min`.
    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }
}

fn arg_by(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if better(x, v[best]) {
            best = k;
        }
    }
    best
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        Self {
            c1: vec![0.0; n],
            c2: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.c1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c1.is_empty()
    }

    pub fn scaled(&self, s: &[f64]) -> VectorField {
        VectorField {
            c1: self.c1.iter().zip(s).map(|(a, b)| a * b).collect(),
            c2: self.c2.iter().zip(s).map(|(a, b)| a * b).collect(),
        }
    }
}

impl MetricField {
    pub fn len(&self) -> usize {
        self.m11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m11.is_empty()
    }

    pub fn scaled(&self, s: f64) -> MetricField {
        MetricField {
            m11: self.m11.iter().map(|v| v * s).collect(),
            m12: self.m12.iter().map(|v| v * s).collect(),
            m22: self.m22.iter().map(|v| v * s).collect(),
        }
    }

    /// Closed-form determinant and inverse at every node.
    ///
    /// Fails at the first node where `m11 <= 0` or `det <= 0`.
    pub fn geometry(&self) -> Result<MetricGeometry> {
        let n = self.len();
        let mut g = MetricGeometry {
            sqrt_det: Vec::with_capacity(n),
            inv11: Vec::with_capacity(n),
            inv12: Vec::with_capacity(n),
            inv22: Vec::with_capacity(n),
        };
        for k in 0..n {
            let (a, b, c) = (self.m11[k], self.m12[k], self.m22[k]);
            let det = a * c - b * b;
            if !(a > 0.0 && det > 0.0) {
                return Err(Error::NotPositiveDefinite { node: k, m11: a, det });
            }
            g.sqrt_det.push(det.sqrt());
            g.inv11.push(c / det);
            g.inv12.push(-b / det);
            g.inv22.push(a / det);
        }
        Ok(g)
    }
}

impl MetricGeometry {
    /// `m^{ij} w_j` for a covector `w`.
    #[inline]
    pub fn raise(&self, k: usize, w1: f64, w2: f64) -> (f64, f64) {
        (
            self.inv11[k] * w1 + self.inv12[k] * w2,
            self.inv12[k] * w1 + self.inv22[k] * w2,
        )
    }
}

impl FiberMesh {
    pub fn build_torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        check_resolution(nx, ny)?;
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "torus periods must be positive, got ({lx}, {ly})"
            )));
        }
        let (hx, hy) = (lx / nx as f64, ly / ny as f64);
        let len = nx * ny;
        let metric = MetricField {
            m11: vec![1.0; len],
            m12: vec![0.0; len],
            m22: vec![1.0; len],
        };
        let geometry = metric.geometry()?;
        Ok(Self {
            kind: FiberKind::FlatTorus { lx, ly },
            n: [nx, ny],
            h: [hx, hy],
            periodic: [true, true],
            axis_coords: [
                (0..nx).map(|i| i as f64 * hx).collect(),
                (0..ny).map(|j| j as f64 * hy).collect(),
            ],
            metric,
            geometry,
            gauss: 0.0,
        })
    }

    pub fn build_sphere(ntheta: usize, nphi: usize, radius: f64) -> Result<Self> {
        check_resolution(ntheta, nphi)?;
        if !nphi.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "sphere needs an even number of longitudes to continue across the poles, got {nphi}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        let (ht, hp) = (PI / ntheta as f64, 2.0 * PI / nphi as f64);
        let theta: Vec<f64> = (0..ntheta).map(|j| (j as f64 + 0.5) * ht).collect();
        let phi: Vec<f64> = (0..nphi).map(|k| k as f64 * hp).collect();
        let r2 = radius * radius;
        let len = ntheta * nphi;
        let mut metric = MetricField {
            m11: vec![r2; len],
            m12: vec![0.0; len],
            m22: Vec::with_capacity(len),
        };
        for &t in &theta {
            let s = t.sin();
            metric.m22.extend(std::iter::repeat_n(r2 * s * s, nphi));
        }
        let geometry = metric.geometry()?;
        Ok(Self {
            kind: FiberKind::RoundSphere { radius },
            n: [ntheta, nphi],
            h: [ht, hp],
            periodic: [false, true],
            axis_coords: [theta, phi],
            metric,
            geometry,
            gauss: 1.0 / r2,
        })
    }

    pub fn kind(&self) -> FiberKind {
        self.kind
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, FiberKind::RoundSphere { .. })
    }

    pub fn resolution(&self) -> [usize; 2] {
        self.n
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.h
    }

    /// Largest coordinate spacing measured in the fiber metric scale
    /// (the sphere's angular spacing is multiplied by its radius).
    pub fn h_max(&self) -> f64 {
        match self.kind {
            FiberKind::FlatTorus { .. } => self.h[0].max(self.h[1]),
            FiberKind::RoundSphere { radius } => radius * self.h[0].max(self.h[1]),
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.axis_coords[axis]
    }

    #[inline]
    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.n[1] + i1
    }

    /// Coordinates `(x0, x1)` of node `k`.
    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        (self.axis_coords[0][k / self.n[1]], self.axis_coords[1][k % self.n[1]])
    }

    /// Unit-sphere embedding `(sin th cos ph, sin th sin ph, cos th)` of node `k`.
    /// On the torus, returns `(x, y, 0)`.
    pub fn embedding(&self, k: usize) -> [f64; 3] {
        let (a, b) = self.coords(k);
        match self.kind {
            FiberKind::FlatTorus { .. } => [a, b, 0.0],
            FiberKind::RoundSphere { .. } => [a.sin() * b.cos(), a.sin() * b.sin(), a.cos()],
        }
    }

    pub fn fiber_metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn fiber_geometry(&self) -> &MetricGeometry {
        &self.geometry
    }

    /// Gauss curvature `K^F` of the fiber (constant for both families).
    pub fn gauss_curvature(&self) -> f64 {
        self.gauss
    }

    pub fn gauss_curvature_field(&self) -> ScalarField {
        ScalarField::constant(self, self.gauss)
    }

    pub fn euler_characteristic(&self) -> i32 {
        match self.kind {
            FiberKind::FlatTorus { .. } => 0,
            FiberKind::RoundSphere { .. } => 2,
        }
    }

    /// Closed-form area of `(F, g)`.
    pub fn exact_area(&self) -> f64 {
        match self.kind {
            FiberKind::FlatTorus { lx, ly } => lx * ly,
            FiberKind::RoundSphere { radius } => 4.0 * PI * radius * radius,
        }
    }

    /// Christoffel symbols `Gamma^k_ij` of the fiber metric at node `k`,
    /// indexed `[k][i][j]`.
    pub fn christoffel(&self, node: usize) -> [[[f64; 2]; 2]; 2] {
        let mut g = [[[0.0; 2]; 2]; 2];
        if let FiberKind::RoundSphere { .. } = self.kind {
            let theta = self.axis_coords[0][node / self.n[1]];
            let (s, c) = theta.sin_cos();
            g[0][1][1] = -s * c;
            g[1][0][1] = c / s;
            g[1][1][0] = c / s;
        }
        g
    }

    /// Nodes of the first and last latitude rows on the sphere; empty on the torus.
    pub fn is_boundary_row(&self, node: usize) -> bool {
        if self.periodic[0] {
            return false;
        }
        let i0 = node / self.n[1];
        i0 == 0 || i0 + 1 == self.n[0]
    }

    /// Latitude (axis 0) index of node `k`.
    pub fn row(&self, node: usize) -> usize {
        node / self.n[1]
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got == self.len() {
            Ok(())
        } else {
            Err(Error::FieldLength {
                expected: self.len(),
                got,
            })
        }
    }

    fn resolve<'m>(&'m self, metric: Metric<'_>) -> Result<std::borrow::Cow<'m, MetricGeometry>> {
        match metric {
            Metric::Fiber => Ok(std::borrow::Cow::Borrowed(&self.geometry)),
            Metric::Field(m) => {
                self.check_len(m.len())?;
                Ok(std::borrow::Cow::Owned(m.geometry()?))
            }
        }
    }

    // ---- raw difference stencils --------------------------------------------

    /// Node and sign of the axis-0 neighbour `offset` rows away from `(i0, i1)`.
    ///
    /// On the sphere a row index past a pole maps to the antipodal row,
    /// `(theta, phi) -> (-theta, phi + pi)`, and picks up the parity of the
    /// field.
    #[inline]
    fn across(&self, i0: usize, i1: usize, offset: isize, parity: Parity) -> (usize, f64) {
        let [n0, n1] = self.n;
        let j = i0 as isize + offset;
        if self.periodic[0] {
            return (j.rem_euclid(n0 as isize) as usize * n1 + i1, 1.0);
        }
        let sign = match parity {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        };
        let col = (i1 + n1 / 2) % n1;
        if j < 0 {
            ((-1 - j) as usize * n1 + col, sign)
        } else if j >= n0 as isize {
            ((2 * n0 as isize - 1 - j) as usize * n1 + col, sign)
        } else {
            (j as usize * n1 + i1, 1.0)
        }
    }

    /// First derivative along `axis` of a field that is even across the poles.
    pub fn d1(&self, f: &[f64], axis: usize) -> Vec<f64> {
        self.d1_parity(f, axis, Parity::Even)
    }

    /// First derivative along `axis`; `parity` says how `f` continues across
    /// the poles (ignored on the torus and along axis 1).
    pub fn d1_parity(&self, f: &[f64], axis: usize, parity: Parity) -> Vec<f64> {
        let [n0, n1] = self.n;
        let inv2h = 0.5 / self.h[axis];
        let mut out = vec![0.0; f.len()];
        if axis == 1 {
            for i0 in 0..n0 {
                let row = &f[i0 * n1..(i0 + 1) * n1];
                let o = &mut out[i0 * n1..(i0 + 1) * n1];
                for i1 in 0..n1 {
                    let p = if i1 + 1 == n1 { 0 } else { i1 + 1 };
                    let m = if i1 == 0 { n1 - 1 } else { i1 - 1 };
                    o[i1] = (row[p] - row[m]) * inv2h;
                }
            }
            return out;
        }
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let (p, sp) = self.across(i0, i1, 1, parity);
                let (m, sm) = self.across(i0, i1, -1, parity);
                out[i0 * n1 + i1] = (sp * f[p] - sm * f[m]) * inv2h;
            }
        }
        out
    }

    /// Compact second derivative along `axis` of a field that is even across
    /// the poles.
    pub fn d2(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let [n0, n1] = self.n;
        let inv_h2 = 1.0 / (self.h[axis] * self.h[axis]);
        let mut out = vec![0.0; f.len()];
        if axis == 1 {
            for i0 in 0..n0 {
                let row = &f[i0 * n1..(i0 + 1) * n1];
                let o = &mut out[i0 * n1..(i0 + 1) * n1];
                for i1 in 0..n1 {
                    let p = if i1 + 1 == n1 { 0 } else { i1 + 1 };
                    let m = if i1 == 0 { n1 - 1 } else { i1 - 1 };
                    o[i1] = ((row[p] - row[i1]) + (row[m] - row[i1])) * inv_h2;
                }
            }
            return out;
        }
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let k = i0 * n1 + i1;
                let (p, _) = self.across(i0, i1, 1, Parity::Even);
                let (m, _) = self.across(i0, i1, -1, Parity::Even);
                out[k] = ((f[p] - f[k]) + (f[m] - f[k])) * inv_h2;
            }
        }
        out
    }

    /// Mixed derivative `d^2 f / dx0 dx1` of a field that is even across the poles.
    pub fn d12(&self, f: &[f64]) -> Vec<f64> {
        self.d1(&self.d1(f, 1), 0)
    }

    /// Mixed derivative of a field with the given pole parity.
    pub fn d12_parity(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        self.d1_parity(&self.d1(f, 1), 0, parity)
    }

    // ---- operators -----------------------------------------------------------

    /// Contravariant gradient `m^{ij} d_j phi`.
    pub fn gradient(&self, phi: &ScalarField, metric: Metric<'_>) -> Result<VectorField> {
        self.check_len(phi.len())?;
        let geo = self.resolve(metric)?;
        Ok(self.gradient_with(&geo, phi.values()))
    }

    pub(crate) fn gradient_with(&self, geo: &MetricGeometry, phi: &[f64]) -> VectorField {
        let d0 = self.d1(phi, 0);
        let d1 = self.d1(phi, 1);
        let mut v = VectorField::zeros(phi.len());
        for k in 0..phi.len() {
            let (a, b) = geo.raise(k, d0[k], d1[k]);
            v.c1[k] = a;
            v.c2[k] = b;
        }
        v
    }

    /// `(1/sqrt(det m)) d_i (sqrt(det m) V^i)`.
    pub fn divergence(&self, v: &VectorField, metric: Metric<'_>) -> Result<ScalarField> {
        self.check_len(v.len())?;
        let geo = self.resolve(metric)?;
        Ok(ScalarField(self.divergence_with(&geo, v)))
    }

    pub(crate) fn divergence_with(&self, geo: &MetricGeometry, v: &VectorField) -> Vec<f64> {
        let f1: Vec<f64> = v.c1.iter().zip(&geo.sqrt_det).map(|(a, s)| a * s).collect();
        let f2: Vec<f64> = v.c2.iter().zip(&geo.sqrt_det).map(|(a, s)| a * s).collect();
        let a = self.d1(&f1, 0);
        let b = self.d1(&f2, 1);
        a.iter()
            .zip(&b)
            .zip(&geo.sqrt_det)
            .map(|((x, y), s)| (x + y) / s)
            .collect()
    }

    /// Fiber `(sqrt det g, g^{00}, g^{11})` at axis-0 coordinate `x0`.
    fn diagonal_metric_at(&self, x0: f64) -> (f64, f64, f64) {
        match self.kind {
            FiberKind::FlatTorus { .. } => (1.0, 1.0, 1.0),
            FiberKind::RoundSphere { radius } => {
                let r2 = radius * radius;
                let s = x0.sin();
                (r2 * s, 1.0 / r2, 1.0 / (r2 * s * s))
            }
        }
    }

    /// Compact flux form `(1/sqrt g) d_i(sqrt g g^{ii} c d_i u)` in the fiber
    /// metric, where `c = coeff(u, |du|^2_g)` is evaluated on cell faces.
    ///
    /// Face values are two-point differences across the face and averages of
    /// centered differences along it. The flux through a pole vanishes.
    pub fn flux_divergence(&self, u: &[f64], coeff: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let [n0, n1] = self.n;
        let [h0, h1] = self.h;
        let du0 = self.d1(u, 0);
        let du1 = self.d1(u, 1);
        // flux0[j n1 + k] crosses the face between rows j and j + 1,
        // flux1[j n1 + k] the face between columns k and k + 1.
        let mut flux0 = vec![0.0; u.len()];
        let mut flux1 = vec![0.0; u.len()];
        for j in 0..n0 {
            let jp = if j + 1 < n0 {
                Some(j + 1)
            } else if self.periodic[0] {
                Some(0)
            } else {
                None
            };
            if let Some(jp) = jp {
                let (sd, g00, g11) = self.diagonal_metric_at(self.axis_coords[0][j] + 0.5 * h0);
                for k in 0..n1 {
                    let (a, b) = (j * n1 + k, jp * n1 + k);
                    let ux = (u[b] - u[a]) / h0;
                    let uy = 0.5 * (du1[a] + du1[b]);
                    let q = g00 * ux * ux + g11 * uy * uy;
                    flux0[a] = sd * g00 * ux * coeff(0.5 * (u[a] + u[b]), q);
                }
            }
            let (sd, g00, g11) = self.diagonal_metric_at(self.axis_coords[0][j]);
            for k in 0..n1 {
                let a = j * n1 + k;
                let b = j * n1 + if k + 1 == n1 { 0 } else { k + 1 };
                let uy = (u[b] - u[a]) / h1;
                let ux = 0.5 * (du0[a] + du0[b]);
                let q = g00 * ux * ux + g11 * uy * uy;
                flux1[a] = sd * g11 * uy * coeff(0.5 * (u[a] + u[b]), q);
            }
        }
        let mut out = vec![0.0; u.len()];
        for j in 0..n0 {
            let below = if j > 0 {
                Some(j - 1)
            } else if self.periodic[0] {
                Some(n0 - 1)
            } else {
                None
            };
            let sd = self.diagonal_metric_at(self.axis_coords[0][j]).0;
            for k in 0..n1 {
                let a = j * n1 + k;
                let left = j * n1 + if k == 0 { n1 - 1 } else { k - 1 };
                let lower = below.map_or(0.0, |jb| flux0[jb * n1 + k]);
                out[a] = ((flux0[a] - lower) / h0 + (flux1[a] - flux1[left]) / h1) / sd;
            }
        }
        out
    }

    /// Compact five-point Laplace-Beltrami operator of the fiber metric.
    pub fn compact_laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.flux_divergence(u, |_, _| 1.0)
    }

    /// Laplace-Beltrami operator, the divergence of the gradient.
    pub fn laplace_beltrami(&self, phi: &ScalarField, metric: Metric<'_>) -> Result<ScalarField> {
        self.check_len(phi.len())?;
        let geo = self.resolve(metric)?;
        Ok(ScalarField(self.laplace_beltrami_with(&geo, phi.values())))
    }

    pub(crate) fn laplace_beltrami_with(&self, geo: &MetricGeometry, phi: &[f64]) -> Vec<f64> {
        let g = self.gradient_with(geo, phi);
        self.divergence_with(geo, &g)
    }

    /// Midpoint-rule integral `sum phi sqrt(det m) h0 h1`.
    pub fn integrate(&self, phi: &ScalarField, metric: Metric<'_>) -> Result<f64> {
        self.check_len(phi.len())?;
        let geo = self.resolve(metric)?;
        Ok(self.integrate_with(&geo, phi.values()))
    }

    pub(crate) fn integrate_with(&self, geo: &MetricGeometry, phi: &[f64]) -> f64 {
        let cell = self.h[0] * self.h[1];
        phi.iter().zip(&geo.sqrt_det).map(|(p, s)| p * s).sum::<f64>() * cell
    }

    /// `m(V, W) = m_ij V^i W^j` per node.
    pub fn inner(&self, v: &VectorField, w: &VectorField, metric: Metric<'_>) -> Result<ScalarField> {
        self.check_len(v.len())?;
        self.check_len(w.len())?;
        let m = match metric {
            Metric::Fiber => &self.metric,
            Metric::Field(m) => {
                self.check_len(m.len())?;
                m
            }
        };
        Ok(ScalarField(
            (0..v.len())
                .map(|k| {
                    m.m11[k] * v.c1[k] * w.c1[k]
                        + m.m12[k] * (v.c1[k] * w.c2[k] + v.c2[k] * w.c1[k])
                        + m.m22[k] * v.c2[k] * w.c2[k]
                })
                .collect(),
        ))
    }

    /// Same fiber with twice the resolution along each axis.
    pub fn doubled(&self) -> FiberMesh {
        let [n0, n1] = self.n;
        match self.kind {
            FiberKind::FlatTorus { lx, ly } => FiberMesh::build_torus(2 * n0, 2 * n1, lx, ly),
            FiberKind::RoundSphere { radius } => FiberMesh::build_sphere(2 * n0, 2 * n1, radius),
        }
        .expect("doubling a valid mesh stays valid")
    }

    /// Doubles the resolution and prolongs `phi` to the new nodes.
    ///
    /// With an analytic source the field is resampled exactly; otherwise it is
    /// bilinearly interpolated and the result is flagged as such.
    pub fn refine(
        &self,
        phi: &ScalarField,
        analytic: Option<&dyn AnalyticField>,
    ) -> Result<(FiberMesh, ScalarField, Prolongation)> {
        self.check_len(phi.len())?;
        let fine = self.doubled();
        if let Some(src) = analytic {
            let field = src.sample(&fine)?;
            return Ok((fine, field, Prolongation::Analytic));
        }
        let pos0 = self.fractional_positions(&fine, 0);
        let pos1 = self.fractional_positions(&fine, 1);
        let n1 = self.n[1];
        let v = phi.values();
        let mut out = Vec::with_capacity(fine.len());
        for &(a0, b0, w0) in &pos0 {
            for &(a1, b1, w1) in &pos1 {
                let val = (1.0 - w0) * ((1.0 - w1) * v[a0 * n1 + a1] + w1 * v[a0 * n1 + b1])
                    + w0 * ((1.0 - w1) * v[b0 * n1 + a1] + w1 * v[b0 * n1 + b1]);
                out.push(val);
            }
        }
        Ok((fine, ScalarField(out), Prolongation::Bilinear))
    }

    /// For each node coordinate of `fine` along `axis`: the two coarse indices
    /// bracketing it and the weight of the second. Extrapolates linearly past
    /// the ends of a non-periodic axis.
    fn fractional_positions(&self, fine: &FiberMesh, axis: usize) -> Vec<(usize, usize, f64)> {
        let n = self.n[axis];
        let h = self.h[axis];
        let x0 = self.axis_coords[axis][0];
        fine.axis_coords[axis]
            .iter()
            .map(|&x| {
                let p = (x - x0) / h;
                if self.periodic[axis] {
                    let fl = p.floor();
                    let a = (fl as isize).rem_euclid(n as isize) as usize;
                    (a, (a + 1) % n, p - fl)
                } else {
                    let a = (p.floor().max(0.0) as usize).min(n - 2);
                    (a, a + 1, p - a as f64)
                }
            })
            .collect()
    }
}

fn check_resolution(n0: usize, n1: usize) -> Result<()> {
    for (axis, given) in [n0, n1].into_iter().enumerate() {
        if given < MIN_RESOLUTION {
            return Err(Error::Resolution {
                axis,
                given,
                min: MIN_RESOLUTION,
            });
        }
    }
    Ok(())
}

/// Config-file form of a fiber: `{"kind": "torus"|"sphere", "resolution": [n0, n1], "size": [...]}`.
///
/// `size` is `[Lx, Ly]` for the torus (default `[2 pi, 2 pi]`) and `[r]` for
/// the sphere (default `[1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub kind: FiberKindName,
    pub resolution: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiberKindName {
    Torus,
    Sphere,
}

impl FiberSpec {
    pub fn build(&self) -> Result<FiberMesh> {
        let [n0, n1] = self.resolution;
        match self.kind {
            FiberKindName::Torus => {
                let (lx, ly) = match self.size.as_deref() {
                    None => (2.0 * PI, 2.0 * PI),
                    Some([l]) => (*l, *l),
                    Some([lx, ly]) => (*lx, *ly),
                    Some(other) => {
                        return Err(Error::InvalidParameter(format!(
                            "torus size takes one or two periods, got {}",
                            other.len()
                        )))
                    }
                };
                FiberMesh::build_torus(n0, n1, lx, ly)
            }
            FiberKindName::Sphere => {
                let r = match self.size.as_deref() {
                    None => 1.0,
                    Some([r]) => *r,
                    Some(other) => {
                        return Err(Error::InvalidParameter(format!(
                            "sphere size takes one radius, got {} values",
                            other.len()
                        )))
                    }
                };
                FiberMesh::build_sphere(n0, n1, r)
            }
        }
    }
}

/// Summary statistics of a field: node extrema and area-weighted mean and L2
/// norm in the fiber metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub l2: f64,
}

pub fn summarize(mesh: &FiberMesh, phi: &ScalarField) -> Result<FieldSummary> {
    let area = mesh.integrate(&ScalarField::constant(mesh, 1.0), Metric::Fiber)?;
    let integral = mesh.integrate(phi, Metric::Fiber)?;
    let sq = mesh.integrate(&phi.map(|v| v * v), Metric::Fiber)?;
    Ok(FieldSummary {
        min: phi.min(),
        max: phi.max(),
        mean: integral / area,
        l2: sq.sqrt(),
    })
}

/// Writes `node,x0,x1,<name>` rows for one or more fields sharing a mesh.
pub fn write_fields_csv<W: Write>(mesh: &FiberMesh, columns: &[(&str, &ScalarField)], out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    write!(w, "node,x0,x1")?;
    for (name, field) in columns {
        if field.len() != mesh.len() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("column {name} has {} values, mesh has {}", field.len(), mesh.len()),
            ));
        }
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for k in 0..mesh.len() {
        let (a, b) = mesh.coords(k);
        write!(w, "{k},{a:.17e},{b:.17e}")?;
        for (_, field) in columns {
            write!(w, ",{:.17e}", field.values()[k])?;
        }
        writeln!(w)?;
    }
    w.flush()
}
