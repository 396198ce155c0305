//! Spacelike graphs `t = u(p)` in the warped product `I x_f F` with metric
//! `-dt^2 + f(t)^2 g`.
//!
//! # Conventions
//!
//! The unit normal is the future-pointing field aligned with `-d_t`,
//!
//! ```text
//! N = -(f^2 d_t + Du) / (f sqrt(f^2 - |Du|^2)),      <N, d_t> = f / sqrt(f^2 - |Du|^2) = cosh(theta),
//! ```
//!
//! the shape operator is `A X = -nabla_X N`, so `<A X, Y> = <nabla_X Y, N>`,
//! and the mean curvature is `H = -trace(A) / 2`. A slice `u = t0` then has
//! `A = (f'/f) I` and `H = -f'/f`.
//!
//! # Ambient connection
//!
//! The Christoffel symbols of the ambient metric are hard-coded. They follow
//! from the closed conformal field `xi = f d_t`, which satisfies
//! `nabla_X xi = f' X`:
//!
//! * `X = d_t`: `f' d_t + f nabla_{d_t} d_t = f' d_t`, so `Gamma^*_{tt} = 0`.
//! * `X = d_i`: `f nabla_{d_i} d_t = f' d_i`, so `Gamma^k_{it} = (f'/f) delta^k_i`.
//! * metric compatibility, `<nabla_{d_i} d_j, d_t> = -<d_j, nabla_{d_i} d_t> = -f f' g_ij`,
//!   gives `Gamma^t_{ij} = f f' g_ij`; the fiber part `Gamma^k_{ij}` is that of `g`.
//!
//! With `X_i = d_i + u_i d_t` the graph's coordinate frame,
//! `nabla_{X_i} X_j = (u_ij + f f' g_ij) d_t + (Gamma^k_ij + (f'/f)(delta^k_j u_i + delta^k_i u_j)) d_k`.

use std::sync::Arc;

use serde::Serialize;

use crate::conditions::{self, ConditionVerdict};
use crate::error::{Error, Result};
use crate::mesh::{
    AnalyticField, FiberMesh, MetricField, MetricGeometry, Parity, Prolongation, ScalarField, VectorField,
};
use crate::warp::{IntervalSpec, WarpValues, WarpingFunction};

/// Errors at or below this level are treated as exact when fitting orders.
pub const NOISE_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct SpacelikeGraph {
    wf: WarpingFunction,
    mesh: Arc<FiberMesh>,
    u: ScalarField,
    warp: Vec<WarpValues>,
    du: [Vec<f64>; 2],
    grad: VectorField,
    gradnorm2: ScalarField,
    slack: ScalarField,
    induced: MetricField,
    induced_geo: MetricGeometry,
    grad_t: VectorField,
    grad_t_norm2: ScalarField,
    cosh_theta: ScalarField,
    speed: ScalarField,
    h: ScalarField,
}

impl SpacelikeGraph {
    /// Validates `u` and caches the first-order geometry of its graph.
    pub fn new(wf: WarpingFunction, mesh: Arc<FiberMesh>, u: ScalarField) -> Result<Self> {
        mesh.check_len(u.len())?;
        let n = u.len();
        let mut warp = Vec::with_capacity(n);
        for &t in u.values() {
            warp.push(wf.eval(t)?);
        }
        let du = [mesh.d1(u.values(), 0), mesh.d1(u.values(), 1)];
        let fiber = mesh.fiber_geometry();
        let gm = mesh.fiber_metric();

        let mut grad = VectorField::zeros(n);
        let mut gradnorm2 = Vec::with_capacity(n);
        let mut slack = Vec::with_capacity(n);
        let mut worst = (usize::MAX, f64::INFINITY);
        for k in 0..n {
            let (a, b) = fiber.raise(k, du[0][k], du[1][k]);
            grad.c1[k] = a;
            grad.c2[k] = b;
            let q = du[0][k] * a + du[1][k] * b;
            let f = warp[k].f;
            let s = f * f - q;
            if s < worst.1 {
                worst = (k, s);
            }
            gradnorm2.push(q);
            slack.push(s);
        }
        if !(worst.1 > 0.0) {
            return Err(Error::NotSpacelike {
                node: worst.0,
                slack: worst.1,
            });
        }

        let mut induced = MetricField {
            m11: Vec::with_capacity(n),
            m12: Vec::with_capacity(n),
            m22: Vec::with_capacity(n),
        };
        for k in 0..n {
            let f2 = warp[k].f * warp[k].f;
            induced.m11.push(f2 * gm.m11[k] - du[0][k] * du[0][k]);
            induced.m12.push(f2 * gm.m12[k] - du[0][k] * du[1][k]);
            induced.m22.push(f2 * gm.m22[k] - du[1][k] * du[1][k]);
        }
        let induced_geo = induced.geometry()?;

        let mut grad_t = VectorField::zeros(n);
        let mut grad_t_norm2 = Vec::with_capacity(n);
        let mut cosh_theta = Vec::with_capacity(n);
        let mut speed = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = induced_geo.raise(k, du[0][k], du[1][k]);
            grad_t.c1[k] = a;
            grad_t.c2[k] = b;
            grad_t_norm2.push(du[0][k] * a + du[1][k] * b);
            let f = warp[k].f;
            cosh_theta.push(f / slack[k].sqrt());
            speed.push(gradnorm2[k].sqrt() / f);
        }

        let face_slack = std::cell::Cell::new(f64::INFINITY);
        let div = mesh.flux_divergence(u.values(), |uf, q| {
            let f = wf.eval_unchecked(uf).f;
            let s = f * f - q;
            face_slack.set(face_slack.get().min(s));
            1.0 / (2.0 * f * s.sqrt())
        });
        let mut h = Vec::with_capacity(n);
        for k in 0..n {
            let f = warp[k].f;
            let q = gradnorm2[k];
            let tail = warp[k].f_prime / (2.0 * slack[k].sqrt()) * (2.0 + q / (f * f));
            let v = -div[k] - tail;
            if !v.is_finite() {
                return Err(Error::NotSpacelike {
                    node: k,
                    slack: face_slack.get(),
                });
            }
            h.push(v);
        }

        Ok(Self {
            wf,
            mesh,
            u,
            warp,
            du,
            grad,
            gradnorm2: ScalarField::from_vec_unchecked(gradnorm2),
            slack: ScalarField::from_vec_unchecked(slack),
            induced,
            induced_geo,
            grad_t,
            grad_t_norm2: ScalarField::from_vec_unchecked(grad_t_norm2),
            cosh_theta: ScalarField::from_vec_unchecked(cosh_theta),
            speed: ScalarField::from_vec_unchecked(speed),
            h: ScalarField::from_vec_unchecked(h),
        })
    }

    pub fn warping(&self) -> &WarpingFunction {
        &self.wf
    }

    pub fn mesh(&self) -> &FiberMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<FiberMesh> {
        &self.mesh
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    /// `f, f', f'', (log f)'', F` evaluated at `u`, per node.
    pub fn warp_values(&self) -> &[WarpValues] {
        &self.warp
    }

    /// `Du = g^{-1} du`, the fiber gradient.
    pub fn grad(&self) -> &VectorField {
        &self.grad
    }

    /// `|Du|^2` in the fiber metric.
    pub fn gradnorm2(&self) -> &ScalarField {
        &self.gradnorm2
    }

    /// `f(u)^2 - |Du|^2`.
    pub fn slack(&self) -> &ScalarField {
        &self.slack
    }

    /// `g_u = -du^2 + f(u)^2 g`.
    pub fn induced_metric(&self) -> &MetricField {
        &self.induced
    }

    pub fn induced_geometry(&self) -> &MetricGeometry {
        &self.induced_geo
    }

    /// `nabla t = g_u^{-1} du`, the gradient of the height function on the graph.
    pub fn grad_t(&self) -> &VectorField {
        &self.grad_t
    }

    /// `|nabla t|^2` in the induced metric.
    pub fn grad_t_norm2(&self) -> &ScalarField {
        &self.grad_t_norm2
    }

    /// `<N, d_t> = f / sqrt(slack)`.
    pub fn cosh_theta(&self) -> &ScalarField {
        &self.cosh_theta
    }

    /// `|v| = |Du| / f = tanh(theta)`.
    pub fn speed(&self) -> &ScalarField {
        &self.speed
    }

    /// Largest relative speed over the graph.
    pub fn lambda(&self) -> f64 {
        self.speed.max()
    }

    /// `sinh^2(theta) = |Du|^2 / slack`.
    pub fn sinh2_theta(&self) -> ScalarField {
        self.gradnorm2.zip_map(&self.slack, |q, s| q / s)
    }

    /// Per-node `f'(u)^2 / f(u)^2`, the squared slice mean curvature at height `u`.
    pub fn slice_h2(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(
            self.warp
                .iter()
                .map(|w| {
                    let r = w.hubble();
                    r * r
                })
                .collect(),
        )
    }

    /// Range of `u` as an interval, widened slightly so it is never empty.
    pub fn height_window(&self) -> IntervalSpec {
        let (lo, hi) = (self.u.min(), self.u.max());
        let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        let d = self.wf.domain();
        let lo = (lo - pad).max(d.lower());
        let hi = (hi + pad).min(d.upper());
        IntervalSpec::new(lo, hi).expect("u values lie strictly inside the domain")
    }

    /// Mean curvature from the divergence-form operator
    /// `H(u) = -div(Du / (2 f sqrt(s))) - f' (2 + |Du|^2/f^2) / (2 sqrt(s))`,
    /// with `s = f^2 - |Du|^2` and the divergence taken in `g`.
    ///
    /// The divergence is the compact flux form of
    /// [`FiberMesh::flux_divergence`], whose only discrete null fields are the
    /// constants.
    pub fn mean_curvature(&self) -> ScalarField {
        self.h.clone()
    }

    /// Second fundamental form and shape operator from the ambient connection.
    pub fn shape_operator(&self) -> ShapeOperator {
        let m = &*self.mesh;
        let u = self.u.values();
        let u00 = m.d2(u, 0);
        let u11 = m.d2(u, 1);
        let u01 = m.d12(u);
        let gm = m.fiber_metric();
        let n = u.len();
        let mut a = Vec::with_capacity(n);
        let mut trace_a2 = Vec::with_capacity(n);
        let mut h_from_a = Vec::with_capacity(n);
        for k in 0..n {
            let wv = self.warp[k];
            let (f, fp) = (wv.f, wv.f_prime);
            let hub = fp / f;
            let rs = self.slack.values()[k].sqrt();
            let gamma = m.christoffel(k);
            let d = [self.du[0][k], self.du[1][k]];
            let g = [[gm.m11[k], gm.m12[k]], [gm.m12[k], gm.m22[k]]];
            let hess = [[u00[k], u01[k]], [u01[k], u11[k]]];
            let n_t = -f / rs;
            let n_f = [-self.grad.c1[k] / (f * rs), -self.grad.c2[k] / (f * rs)];

            let mut ii = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let time = hess[i][j] + f * fp * g[i][j];
                    let mut v = [0.0; 2];
                    for (c, vc) in v.iter_mut().enumerate() {
                        let dij = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
                        *vc = gamma[c][i][j] + hub * (dij(c, j) * d[i] + dij(c, i) * d[j]);
                    }
                    // <time d_t + v^c d_c, N>
                    let mut fiber = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            fiber += g[p][q] * v[p] * n_f[q];
                        }
                    }
                    ii[i][j] = -time * n_t + f * f * fiber;
                }
            }
            let geo = &self.induced_geo;
            let inv = [[geo.inv11[k], geo.inv12[k]], [geo.inv12[k], geo.inv22[k]]];
            let mut ak = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    ak[i][j] = inv[i][0] * ii[0][j] + inv[i][1] * ii[1][j];
                }
            }
            let tr = ak[0][0] + ak[1][1];
            let tr2 = ak[0][0] * ak[0][0] + 2.0 * ak[0][1] * ak[1][0] + ak[1][1] * ak[1][1];
            a.push(ak);
            trace_a2.push(tr2);
            h_from_a.push(-0.5 * tr);
        }
        ShapeOperator {
            a,
            trace_a2: ScalarField::from_vec_unchecked(trace_a2),
            h_from_a: ScalarField::from_vec_unchecked(h_from_a),
        }
    }

    /// Gauss curvature of `g_u` by the Brioschi formula.
    pub fn intrinsic_curvature(&self) -> ScalarField {
        brioschi(&self.mesh, &self.induced)
    }

    /// Laplace-Beltrami operator of the induced metric.
    pub fn laplacian(&self, phi: &[f64]) -> Vec<f64> {
        self.mesh.laplace_beltrami_with(&self.induced_geo, phi)
    }

    /// Integral over the graph with its induced area element.
    pub fn integrate(&self, phi: &ScalarField) -> f64 {
        self.mesh.integrate_with(&self.induced_geo, phi.values())
    }

    pub fn area(&self) -> f64 {
        self.mesh.integrate_with(&self.induced_geo, &vec![1.0; self.u.len()])
    }

    /// Perfect-fluid energy density, total energy and the Gauss-Bonnet bound.
    pub fn energy_report(&self) -> Result<EnergyReport> {
        let kf = self.mesh.gauss_curvature();
        let eight_pi = 8.0 * std::f64::consts::PI;
        let rho = ScalarField::from_vec_unchecked(
            self.warp
                .iter()
                .map(|w| (kf / (w.f * w.f) + w.hubble() * w.hubble()) / eight_pi)
                .collect(),
        );
        let e_s = self.integrate(&rho);
        let bound_rhs = 0.5 * f64::from(self.mesh.euler_characteristic()) + self.integrate(&self.slice_h2()) / eight_pi;
        let tol = 1e-9 * bound_rhs.abs().max(1.0);
        let h = self.mean_curvature();
        let k = self.intrinsic_curvature();
        let margin = (0..rho.len())
            .map(|i| {
                let hv = h.values()[i];
                k.values()[i] - (eight_pi * rho.values()[i] - hv * hv)
            })
            .fold(f64::INFINITY, f64::min);
        let ncc = conditions::ncc_margin(&self.wf, kf, &self.height_window(), 64)?;
        Ok(EnergyReport {
            rho,
            e_s,
            bound_rhs,
            bound_holds: e_s <= bound_rhs + tol,
            curvature_energy_margin: margin,
            ncc,
        })
    }

    /// Residuals of the four identities at this resolution.
    pub fn identity_fields(&self) -> IdentityFields {
        let h = self.mean_curvature();
        let shape = self.shape_operator();
        let k = self.intrinsic_curvature();
        let kf = self.mesh.gauss_curvature();
        let n = self.u.len();

        let f_of_u: Vec<f64> = self.warp.iter().map(|w| w.f).collect();
        let log_f: Vec<f64> = f_of_u.iter().map(|f| f.ln()).collect();
        let lap_t = self.laplacian(self.u.values());
        let lap_f = self.laplacian(&f_of_u);
        let lap_log_f = self.laplacian(&log_f);

        let mut out = IdentityFields {
            laplacian_t: Vec::with_capacity(n),
            laplacian_f: Vec::with_capacity(n),
            laplacian_log_f: Vec::with_capacity(n),
            gauss_curvature: Vec::with_capacity(n),
            laplacian_log_f_rhs: Vec::with_capacity(n),
            h_cross_check: Vec::with_capacity(n),
        };
        for i in 0..n {
            let w = self.warp[i];
            let hub = w.hubble();
            let hv = h.values()[i];
            let c = self.cosh_theta.values()[i];
            let gt2 = self.grad_t_norm2.values()[i];
            let rhs_t = -hub * (2.0 + gt2) - 2.0 * hv * c;
            let rhs_f = -2.0 * w.f_prime * w.f_prime / w.f + w.f * w.logf_second * gt2 - 2.0 * w.f_prime * hv * c;
            let rhs_log = log_f_rhs(hub, hv, c, w.logf_second, gt2);
            let rhs_k = hub * hub + (kf / (w.f * w.f) - w.logf_second) * gt2 + kf / (w.f * w.f) - 2.0 * hv * hv
                + 0.5 * shape.trace_a2.values()[i];
            out.laplacian_t.push(lap_t[i] - rhs_t);
            out.laplacian_f.push(lap_f[i] - rhs_f);
            out.laplacian_log_f.push(lap_log_f[i] - rhs_log);
            out.gauss_curvature.push(k.values()[i] - rhs_k);
            out.laplacian_log_f_rhs.push(rhs_log);
            out.h_cross_check.push(shape.h_from_a.values()[i] - hv);
        }
        out
    }
}

/// The `Delta log f(t)` identity's right-hand side at every node of `graph`.
pub fn graph_log_f_rhs(graph: &SpacelikeGraph) -> Vec<f64> {
    let h = graph.mean_curvature();
    (0..h.len())
        .map(|i| {
            let w = graph.warp[i];
            log_f_rhs(
                w.hubble(),
                h.values()[i],
                graph.cosh_theta.values()[i],
                w.logf_second,
                graph.grad_t_norm2.values()[i],
            )
        })
        .collect()
}

/// Right-hand side of the `Delta log f(t)` identity:
/// `-(f'/f + H c)^2 + (H^2 - f'^2/f^2) c^2 + (log f)'' |nabla t|^2`, with `c = <N, d_t>`.
pub(crate) fn log_f_rhs(hub: f64, h: f64, c: f64, logf_second: f64, grad_t2: f64) -> f64 {
    let first = hub + h * c;
    -first * first + (h * h - hub * hub) * c * c + logf_second * grad_t2
}

/// Gauss curvature of a metric field by the Brioschi formula, with centered
/// differences of the components.
pub fn brioschi(mesh: &FiberMesh, m: &MetricField) -> ScalarField {
    let (e, f, g) = (&m.m11, &m.m12, &m.m22);
    let e_u = mesh.d1(e, 0);
    let e_v = mesh.d1(e, 1);
    let f_u = mesh.d1_parity(f, 0, Parity::Odd);
    let f_v = mesh.d1(f, 1);
    let g_u = mesh.d1(g, 0);
    let g_v = mesh.d1(g, 1);
    let e_vv = mesh.d2(e, 1);
    let g_uu = mesh.d2(g, 0);
    let f_uv = mesh.d12_parity(f, Parity::Odd);
    let det3 = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    ScalarField::from_vec_unchecked(
        (0..e.len())
            .map(|k| {
                let (ek, fk, gk) = (e[k], f[k], g[k]);
                let m1 = [
                    [
                        -0.5 * e_vv[k] + f_uv[k] - 0.5 * g_uu[k],
                        0.5 * e_u[k],
                        f_u[k] - 0.5 * e_v[k],
                    ],
                    [f_v[k] - 0.5 * g_u[k], ek, fk],
                    [0.5 * g_v[k], fk, gk],
                ];
                let m2 = [
                    [0.0, 0.5 * e_v[k], 0.5 * g_u[k]],
                    [0.5 * e_v[k], ek, fk],
                    [0.5 * g_u[k], fk, gk],
                ];
                let det = ek * gk - fk * fk;
                (det3(m1) - det3(m2)) / (det * det)
            })
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct ShapeOperator {
    /// Mixed tensor `A^i_j` per node.
    pub a: Vec<[[f64; 2]; 2]>,
    pub trace_a2: ScalarField,
    /// `-trace(A) / 2`.
    pub h_from_a: ScalarField,
}

/// Node-wise residuals `LHS - RHS` of the four identities, plus the
/// shape-operator cross-check `H_from_A - H`.
#[derive(Debug, Clone)]
pub struct IdentityFields {
    pub laplacian_t: Vec<f64>,
    pub laplacian_f: Vec<f64>,
    pub laplacian_log_f: Vec<f64>,
    pub gauss_curvature: Vec<f64>,
    /// The assembled right-hand side of the `Delta log f` identity.
    pub laplacian_log_f_rhs: Vec<f64>,
    pub h_cross_check: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityName {
    /// `Delta t = -(f'/f)(2 + |nabla t|^2) - 2 H <N, d_t>`
    LaplacianT,
    /// `Delta f(t) = -2 f'^2/f + f (log f)'' |nabla t|^2 - 2 f' H <N, d_t>`
    LaplacianF,
    /// `Delta log f(t) = -(f'/f + H <N,d_t>)^2 + (H^2 - f'^2/f^2) <N,d_t>^2 + (log f)'' |nabla t|^2`
    LaplacianLogF,
    /// `K = f'^2/f^2 + (K^F/f^2 - (log f)'') |nabla t|^2 + K^F/f^2 - 2 H^2 + trace(A^2)/2`
    GaussCurvature,
    /// `-trace(A)/2 - H(u)`, the two mean-curvature code paths.
    MeanCurvatureCrossCheck,
}

impl IdentityFields {
    pub fn get(&self, name: IdentityName) -> &[f64] {
        match name {
            IdentityName::LaplacianT => &self.laplacian_t,
            IdentityName::LaplacianF => &self.laplacian_f,
            IdentityName::LaplacianLogF => &self.laplacian_log_f,
            IdentityName::GaussCurvature => &self.gauss_curvature,
            IdentityName::MeanCurvatureCrossCheck => &self.h_cross_check,
        }
    }
}

pub const IDENTITIES: [IdentityName; 4] = [
    IdentityName::LaplacianT,
    IdentityName::LaplacianF,
    IdentityName::LaplacianLogF,
    IdentityName::GaussCurvature,
];

/// Fitted convergence order, or `Exact` when every level sits at the noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Order {
    Fitted(f64),
    #[serde(serialize_with = "exact_str")]
    Exact,
}

fn exact_str<S: serde::Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str("exact")
}

impl Order {
    /// True when the order is `Exact` or at least `min`.
    pub fn at_least(&self, min: f64) -> bool {
        match self {
            Order::Exact => true,
            Order::Fitted(p) => *p >= min,
        }
    }
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fit_order(h: &[f64], err: &[f64]) -> Option<Order> {
    if h.len() < 3 || h.len() != err.len() {
        return None;
    }
    if err.iter().all(|&e| e <= NOISE_FLOOR) {
        return Some(Order::Exact);
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(Order::Fitted(sxy / sxx))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRecord {
    pub resolution: [usize; 2],
    pub h: f64,
    pub max_abs_residual: f64,
    pub l2_residual: f64,
    /// Max over nodes outside the polar caps (sphere only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior_max_abs_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentitySeries {
    pub name: IdentityName,
    pub levels: Vec<LevelRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<Order>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior_order: Option<Order>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub prolongation: Prolongation,
    pub identities: Vec<IdentitySeries>,
}

impl ResidualReport {
    pub fn series(&self, name: IdentityName) -> Option<&IdentitySeries> {
        self.identities.iter().find(|s| s.name == name)
    }
}

/// Polar cap half-angle excluded from the sphere's interior norms.
///
/// The latitude stencils are second order everywhere, but the `1/sin(theta)`
/// factors of the round metric amplify their error constants near the poles.
pub const POLAR_CAP: f64 = std::f64::consts::PI / 8.0;

fn level_record(mesh: &FiberMesh, residual: &[f64]) -> LevelRecord {
    let max_abs = residual.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let sq: Vec<f64> = residual.iter().map(|v| v * v).collect();
    let l2 = mesh.integrate_with(mesh.fiber_geometry(), &sq).sqrt();
    let interior = mesh.is_sphere().then(|| {
        residual
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let t = mesh.coords(*k).0;
                t > POLAR_CAP && t < std::f64::consts::PI - POLAR_CAP
            })
            .fold(0.0, |m: f64, (_, v)| m.max(v.abs()))
    });
    LevelRecord {
        resolution: mesh.resolution(),
        h: mesh.h_max(),
        max_abs_residual: max_abs,
        l2_residual: l2,
        interior_max_abs_residual: interior,
    }
}

/// Residuals of `names` on `graph` and on `levels - 1` successive
/// refinements of it.
///
/// With an analytic `source` the height function is resampled exactly on each
/// refined mesh; otherwise it is interpolated bilinearly.
pub fn residual_study(
    graph: &SpacelikeGraph,
    levels: usize,
    source: Option<&dyn AnalyticField>,
    names: &[IdentityName],
) -> Result<ResidualReport> {
    if levels < 1 {
        return Err(Error::Levels { given: levels, min: 1 });
    }
    let mut per_level: Vec<Vec<LevelRecord>> = vec![Vec::new(); names.len()];
    let mut current = graph.clone();
    let mut prolongation = Prolongation::Analytic;
    for level in 0..levels {
        if level > 0 {
            let (fine, u, how) = current.mesh().refine(current.u(), source)?;
            if how == Prolongation::Bilinear {
                prolongation = Prolongation::Bilinear;
            }
            current = SpacelikeGraph::new(*graph.warping(), Arc::new(fine), u)?;
        }
        let fields = current.identity_fields();
        for (slot, name) in per_level.iter_mut().zip(names) {
            slot.push(level_record(current.mesh(), fields.get(*name)));
        }
    }
    if source.is_none() && levels > 1 {
        prolongation = Prolongation::Bilinear;
    }
    let identities = names
        .iter()
        .zip(per_level)
        .map(|(&name, levels)| {
            let h: Vec<f64> = levels.iter().map(|l| l.h).collect();
            let e: Vec<f64> = levels.iter().map(|l| l.max_abs_residual).collect();
            let interior: Option<Vec<f64>> = levels.iter().map(|l| l.interior_max_abs_residual).collect();
            IdentitySeries {
                name,
                order: fit_order(&h, &e),
                interior_order: interior.and_then(|ie| fit_order(&h, &ie)),
                levels,
            }
        })
        .collect();
    Ok(ResidualReport {
        prolongation,
        identities,
    })
}

/// The four identity residuals over `levels` refinement levels.
pub fn identity_residuals(
    graph: &SpacelikeGraph,
    levels: usize,
    source: Option<&dyn AnalyticField>,
) -> Result<ResidualReport> {
    residual_study(graph, levels, source, &IDENTITIES)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// `rho = (K^F/f^2 + f'^2/f^2) / (8 pi)` at `t = u`.
    #[serde(skip)]
    pub rho: ScalarField,
    /// `int_S rho dS`.
    pub e_s: f64,
    /// `chi/2 + (1/8pi) int_S f'^2/f^2 dS`.
    pub bound_rhs: f64,
    pub bound_holds: bool,
    /// `min (K - (8 pi rho - H^2))` over the nodes.
    pub curvature_energy_margin: f64,
    /// NCC over the range of `u`; the bound presumes it.
    pub ncc: ConditionVerdict,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn torus(n: usize) -> Arc<FiberMesh> {
        Arc::new(FiberMesh::build_torus(n, n, TAU, TAU).unwrap())
    }

    fn sphere(n: usize, r: f64) -> Arc<FiberMesh> {
        Arc::new(FiberMesh::build_sphere(n, 2 * n, r).unwrap())
    }

    fn graph(wf: WarpingFunction, mesh: Arc<FiberMesh>, f: impl Fn(f64, f64) -> f64) -> SpacelikeGraph {
        let u = ScalarField::from_coords(&mesh, f).unwrap();
        SpacelikeGraph::new(wf, mesh, u).unwrap()
    }

    #[test]
    fn constant_graph_caches() {
        let g = graph(WarpingFunction::cosh(), torus(16), |_, _| 0.4);
        assert!(g.cosh_theta().values().iter().all(|&c| c == 1.0));
        assert!(g.speed().values().iter().all(|&s| s == 0.0));
        assert_eq!(g.lambda(), 0.0);
    }

    #[test]
    fn exponential_sine_graph_is_spacelike() {
        let g = graph(WarpingFunction::exponential(), torus(64), |x, _| 0.2 * x.sin());
        assert!(g.gradnorm2().max().sqrt() <= 0.2 + 1e-12);
        assert!(g.slack().min() > 0.0);
        assert!(g.lambda() < 1.0);
    }

    #[test]
    fn steep_graph_is_not_spacelike() {
        let mesh = torus(16);
        let u = ScalarField::from_coords(&mesh, |x, _| 1.5 * x.sin()).unwrap();
        let err = SpacelikeGraph::new(WarpingFunction::constant(1.0).unwrap(), mesh, u).unwrap_err();
        assert!(matches!(err, Error::NotSpacelike { slack, .. } if slack < 0.0));
    }

    #[test]
    fn domain_violation_is_reported() {
        let mesh = torus(8);
        let u = ScalarField::constant(&mesh, -1.0);
        let err = SpacelikeGraph::new(WarpingFunction::power_law(1.0).unwrap(), mesh, u).unwrap_err();
        assert!(matches!(err, Error::Domain { t, .. } if t == -1.0));
    }

    #[test]
    fn slice_mean_curvature_is_exact() {
        let g = graph(WarpingFunction::exponential(), torus(32), |_, _| 0.3);
        assert!(g.mean_curvature().values().iter().all(|&h| (h + 1.0).abs() <= 1e-15));
        let g = graph(WarpingFunction::constant(1.0).unwrap(), sphere(16, 1.0), |_, _| 2.0);
        assert!(g.mean_curvature().values().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn slice_shape_operator_is_umbilic() {
        let wf = WarpingFunction::power_law(1.0).unwrap();
        let g = graph(wf, sphere(16, 1.5), |_, _| 2.0);
        let s = g.shape_operator();
        for (k, a) in s.a.iter().enumerate() {
            assert!((a[0][0] - 0.5).abs() < 1e-14 && (a[1][1] - 0.5).abs() < 1e-14);
            assert!(a[0][1].abs() < 1e-14 && a[1][0].abs() < 1e-14);
            assert!((s.trace_a2.values()[k] - 0.5).abs() < 1e-14);
        }
    }

    /// Hand expansion of the divergence-form operator for `u = A sin x` on the
    /// flat torus with `f = e^t`: with `s = e^{2u} - A^2 cos^2 x`,
    /// `H = -d/dx[A cos x / (2 e^u sqrt(s))] - e^u (2 + A^2 cos^2 x e^{-2u}) / (2 sqrt(s))`.
    fn exp_sine_oracle(a: f64, x: f64) -> f64 {
        let u = a * x.sin();
        let up = a * x.cos();
        let upp = -a * x.sin();
        let e = u.exp();
        let s = e * e - up * up;
        // d/dx of w = u' / (2 e^u s^{1/2})
        let ds = 2.0 * e * e * up - 2.0 * up * upp;
        let dw = upp / (2.0 * e * s.sqrt()) - up * up / (2.0 * e * s.sqrt()) - up * ds / (4.0 * e * s.powf(1.5));
        -dw - e * (2.0 + up * up / (e * e)) / (2.0 * s.sqrt())
    }

    #[test]
    fn mean_curvature_matches_hand_expansion() {
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let mesh = torus(n);
                let g = graph(WarpingFunction::exponential(), mesh.clone(), |x, _| 0.1 * x.sin());
                let h = g.mean_curvature();
                (0..16)
                    .map(|s| s * mesh.len() / 16 + s)
                    .map(|k| (h.values()[k] - exp_sine_oracle(0.1, mesh.coords(k).0)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(
            (errs[0] / errs[1]).log2() > 1.9 && (errs[1] / errs[2]).log2() > 1.9,
            "{errs:?}"
        );
    }

    /// Face-flux form of `div(Du / sqrt(1 - |Du|^2))` on the flat torus.
    fn classical_divergence(u: &[f64], n: usize, h: f64) -> Vec<f64> {
        let at = |i: usize, j: usize| u[(i % n) * n + (j % n)];
        let dx = |i: usize, j: usize| (at(i + 1, j) - at(i + n - 1, j)) / (2.0 * h);
        let dy = |i: usize, j: usize| (at(i, j + 1) - at(i, j + n - 1)) / (2.0 * h);
        // Flux through the face between (i, j) and (i + 1, j), and between (i, j) and (i, j + 1).
        let fx = |i: usize, j: usize| {
            let p = (at(i + 1, j) - at(i, j)) / h;
            let q = 0.5 * (dy(i, j) + dy(i + 1, j));
            p / (1.0 - p * p - q * q).sqrt()
        };
        let fy = |i: usize, j: usize| {
            let q = (at(i, j + 1) - at(i, j)) / h;
            let p = 0.5 * (dx(i, j) + dx(i, j + 1));
            q / (1.0 - p * p - q * q).sqrt()
        };
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push((fx(i, j) - fx(i + n - 1, j)) / h + (fy(i, j) - fy(i, j + n - 1)) / h);
            }
        }
        out
    }

    #[test]
    fn product_case_is_half_the_classical_divergence() {
        // With f = 1 the operator is -div(Du / (2 sqrt(1 - |Du|^2))).
        let n = 32;
        let mesh = torus(n);
        let g = graph(WarpingFunction::constant(1.0).unwrap(), mesh.clone(), |x, y| {
            0.3 * x.sin() * y.cos()
        });
        let h = g.mean_curvature();
        let classical = classical_divergence(g.u().values(), n, mesh.spacing()[0]);
        for k in 0..mesh.len() {
            assert!((h.values()[k] + 0.5 * classical[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_path_mean_curvature_converges() {
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let g = graph(WarpingFunction::cosh(), torus(n), |x, y| 0.5 + 0.2 * x.sin() * y.cos());
                let fields = g.identity_fields();
                fields.h_cross_check.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
            })
            .collect();
        assert!(errs[0] > 1e-8);
        assert!(
            (errs[0] / errs[1]).log2() >= 1.8 && (errs[1] / errs[2]).log2() >= 1.8,
            "{errs:?}"
        );
    }

    #[test]
    fn intrinsic_curvature_of_slices() {
        // On the round sphere the Brioschi error grows like h^2 / sin^2(theta).
        let band_err = |n: usize| {
            let g = graph(WarpingFunction::constant(1.0).unwrap(), sphere(n, 1.0), |_, _| 0.0);
            let k = g.intrinsic_curvature();
            (0..k.len())
                .filter(|&i| {
                    let t = g.mesh().coords(i).0;
                    t > POLAR_CAP && t < PI - POLAR_CAP
                })
                .map(|i| (k.values()[i] - 1.0).abs())
                .fold(0.0, f64::max)
        };
        let (e32, e64) = (band_err(32), band_err(64));
        assert!(e64 < 2e-2 && (e32 / e64).log2() > 1.7, "{e32} {e64}");

        let g = graph(WarpingFunction::exponential(), torus(16), |_, _| 0.7);
        assert!(g.intrinsic_curvature().values().iter().all(|&k| k == 0.0));

        let g = graph(WarpingFunction::cosh(), sphere(64, 1.0), |_, _| 0.0);
        let k = g.intrinsic_curvature();
        let mid = g.mesh().index(32, 0);
        assert!((k.values()[mid] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn normal_is_unit_and_speed_is_tanh() {
        let g = graph(WarpingFunction::cosh(), torus(32), |x, y| 0.3 + 0.25 * (x + y).sin());
        let s2 = g.sinh2_theta();
        for k in 0..g.u().len() {
            let c = g.cosh_theta().values()[k];
            assert!((c * c - s2.values()[k] - 1.0).abs() <= 1e-12);
            assert!(c >= 1.0);
            if g.gradnorm2().values()[k] == 0.0 {
                assert_eq!(c, 1.0);
            }
            let v = g.speed().values()[k];
            assert!((v - c.acosh().tanh()).abs() <= 1e-10);
            assert_relative_eq!(
                g.grad_t_norm2().values()[k],
                c * c - 1.0,
                max_relative = 1e-10,
                epsilon = 1e-14
            );
        }
        let lam = g.lambda();
        assert!(g.cosh_theta().max() <= 1.0 / (1.0 - lam * lam).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn slice_identities_vanish_on_torus() {
        for wf in [
            WarpingFunction::exponential(),
            WarpingFunction::cosh(),
            WarpingFunction::power_law(2.0).unwrap(),
            WarpingFunction::constant(3.0).unwrap(),
        ] {
            let g = graph(wf, torus(16), |_, _| 1.3);
            let r = identity_residuals(&g, 2, None).unwrap();
            for s in &r.identities {
                for l in &s.levels {
                    assert!(l.max_abs_residual <= 1e-10, "{:?} {:?}", wf.family(), s.name);
                }
            }
        }
    }

    #[test]
    fn levels_must_be_positive() {
        let g = graph(WarpingFunction::exponential(), torus(8), |_, _| 0.0);
        assert_eq!(
            identity_residuals(&g, 0, None).unwrap_err(),
            Error::Levels { given: 0, min: 1 }
        );
    }

    #[test]
    fn orders_need_three_levels() {
        assert_eq!(fit_order(&[0.1, 0.05], &[1.0, 0.25]), None);
        match fit_order(&[0.1, 0.05, 0.025], &[1.0, 0.25, 0.0625]) {
            Some(Order::Fitted(p)) => assert_relative_eq!(p, 2.0, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(fit_order(&[0.1, 0.05, 0.025], &[0.0, 1e-13, 0.0]), Some(Order::Exact));
    }

    #[test]
    fn log_f_rhs_is_non_positive_under_hypotheses() {
        // H^2 <= (f'/f)^2, (log f)'' <= 0, c >= 1 gives a sum of non-positive terms.
        for hub in [-1.0, 0.0, 0.5] {
            for frac in [-1.0, -0.3, 0.0, 0.7, 1.0] {
                for c in [1.0, 1.2, 3.0] {
                    let h = frac * f64::abs(hub);
                    assert!(log_f_rhs(hub, h, c, -0.2, c * c - 1.0) <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn energy_of_round_product_slice() {
        let g = graph(WarpingFunction::constant(1.0).unwrap(), sphere(64, 1.0), |_, _| 0.0);
        let e = g.energy_report().unwrap();
        assert!(e.rho.values().iter().all(|&r| (r - 1.0 / (8.0 * PI)).abs() < 1e-15));
        assert!((e.e_s - 0.5).abs() < 5e-3);
        assert_eq!(e.bound_rhs, 1.0);
        assert!(e.bound_holds);
        assert!(e.ncc.holds);
    }

    #[test]
    fn energy_of_flat_product_slice() {
        let g = graph(WarpingFunction::constant(1.0).unwrap(), torus(16), |_, _| 0.0);
        let e = g.energy_report().unwrap();
        assert_eq!(e.e_s, 0.0);
        assert_eq!(e.bound_rhs, 0.0);
        assert!(e.bound_holds);
        assert_eq!(e.curvature_energy_margin, 0.0);
    }
}
