//! Closed-form builtin data: nonlinearities F(x, u), coefficient matrices
//! A(x) and weights q(x).
//!
//! Every builtin carries exact derivatives so that f = F' and f' = F'' are
//! analytic, never numeric, and the spatial gradients needed by the domain
//! variation are closed forms as well.

use crate::geom::{ball_radius_for_volume, Mat3, Vec3};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Quintic smoothstep, C^2 on [0, 1].
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

fn smoothstep_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (1.0 - t) * (1.0 - t)
    }
}

// ---------------------------------------------------------------------------
// nonlinearity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum NonlinearityKind {
    /// f(x, u) = c, F = c u.
    ConstantF { c: f64 },
    /// f(x, u) = c0 + c1 u, F = c0 u + c1 u^2 / 2.
    LinearF { c0: f64, c1: f64 },
    /// F(x, u) = b u^2, f = 2 b u.
    QuadraticF { b: f64 },
    /// F(x, u) = phi(x) u with phi a radial plateau bump around each center:
    /// phi = 1 inside radius `inner`, 0 outside `outer`, smoothstep between.
    BumpTimesU {
        centers: Vec<Vec3>,
        inner: f64,
        outer: f64,
    },
    /// Monotone cubic interpolant of tabulated (u, F) pairs.
    CustomTable(MonotoneCubic),
}

#[derive(Debug, Clone)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
}

impl NonlinearitySpec {
    pub fn constant_f(c: f64) -> Self {
        Self {
            kind: NonlinearityKind::ConstantF { c },
        }
    }

    pub fn linear_f(c0: f64, c1: f64) -> Self {
        Self {
            kind: NonlinearityKind::LinearF { c0, c1 },
        }
    }

    pub fn quadratic_f(b: f64) -> Self {
        Self {
            kind: NonlinearityKind::QuadraticF { b },
        }
    }

    /// Bump sites sized so that phi = 1 on the ball of q-volume `volume`/2 and
    /// phi = 0 outside the ball of q-volume `volume` around each center.
    pub fn bump_times_u(dim: usize, volume: f64, centers: Vec<Vec3>) -> Self {
        let inner = ball_radius_for_volume(dim, volume / 2.0);
        let outer = ball_radius_for_volume(dim, volume);
        Self {
            kind: NonlinearityKind::BumpTimesU {
                centers,
                inner,
                outer,
            },
        }
    }

    pub fn custom_table(us: Vec<f64>, f_values: Vec<f64>) -> Self {
        Self {
            kind: NonlinearityKind::CustomTable(MonotoneCubic::new(us, f_values)),
        }
    }

    fn phi(&self, x: Vec3) -> f64 {
        match &self.kind {
            NonlinearityKind::BumpTimesU {
                centers,
                inner,
                outer,
            } => {
                let mut total = 0.0;
                for c in centers {
                    let d = dist(x, *c);
                    total += smoothstep((outer - d) / (outer - inner));
                }
                total.min(1.0)
            }
            _ => 0.0,
        }
    }

    /// F(x, u); extends the builtin formula smoothly to small negative u so
    /// that finite-difference probes of the smoothed energy stay defined.
    pub fn big_f(&self, x: Vec3, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::ConstantF { c } => c * u,
            NonlinearityKind::LinearF { c0, c1 } => c0 * u + 0.5 * c1 * u * u,
            NonlinearityKind::QuadraticF { b } => b * u * u,
            NonlinearityKind::BumpTimesU { .. } => self.phi(x) * u,
            NonlinearityKind::CustomTable(t) => t.value(u),
        }
    }

    /// f(x, u) = F'(x, u), exact derivative of `big_f` in u.
    pub fn f(&self, x: Vec3, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::ConstantF { c } => *c,
            NonlinearityKind::LinearF { c0, c1 } => c0 + c1 * u,
            NonlinearityKind::QuadraticF { b } => 2.0 * b * u,
            NonlinearityKind::BumpTimesU { .. } => self.phi(x),
            NonlinearityKind::CustomTable(t) => t.deriv(u),
        }
    }

    /// f'(x, u) = F''(x, u).
    pub fn fprime(&self, x: Vec3, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::ConstantF { .. } => 0.0,
            NonlinearityKind::LinearF { c1, .. } => *c1,
            NonlinearityKind::QuadraticF { b } => 2.0 * b,
            NonlinearityKind::BumpTimesU { .. } => 0.0,
            NonlinearityKind::CustomTable(t) => t.second_deriv(u),
        }
    }

    /// Spatial gradient of F at fixed u.
    pub fn grad_x_big_f(&self, x: Vec3, u: f64, dim: usize) -> Vec3 {
        match &self.kind {
            NonlinearityKind::BumpTimesU {
                centers,
                inner,
                outer,
            } => {
                let mut g = [0.0; 3];
                for c in centers {
                    let d = dist(x, *c);
                    if d <= 1e-14 || d >= *outer {
                        continue;
                    }
                    let t = (outer - d) / (outer - inner);
                    let dphi_dd = -smoothstep_deriv(t) / (outer - inner);
                    for i in 0..dim {
                        g[i] += dphi_dd * (x[i] - c[i]) / d * u;
                    }
                }
                g
            }
            _ => [0.0; 3],
        }
    }

    /// A site where f(., 0) is maximal, used to seed witnesses and initial
    /// bumps, together with all such sites for multi-bump data.
    pub fn seed_sites(&self) -> Vec<Vec3> {
        match &self.kind {
            NonlinearityKind::BumpTimesU { centers, .. } => centers.clone(),
            _ => vec![[0.0; 3]],
        }
    }

    /// Radius around a seed site on which f(., 0) keeps its seed value
    /// (used to size witness balls). None when f(., 0) vanishes.
    pub fn witness_radius(&self) -> Option<f64> {
        match &self.kind {
            NonlinearityKind::ConstantF { c } => (*c > 0.0).then_some(f64::INFINITY),
            NonlinearityKind::LinearF { c0, .. } => (*c0 > 0.0).then_some(f64::INFINITY),
            NonlinearityKind::QuadraticF { .. } => None,
            NonlinearityKind::BumpTimesU { inner, .. } => Some(*inner),
            NonlinearityKind::CustomTable(t) => (t.deriv(0.0) > 0.0).then_some(f64::INFINITY),
        }
    }
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

// ---------------------------------------------------------------------------
// monotone cubic interpolation (Fritsch-Carlson slopes)
// ---------------------------------------------------------------------------

/// Piecewise-cubic Hermite interpolant with monotonicity-limited slopes.
/// The derivative is the exact derivative of the interpolant.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        let n = xs.len();
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            d[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        }
        let mut slopes = vec![0.0; n];
        slopes[0] = d[0];
        slopes[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if d[i - 1] * d[i] <= 0.0 {
                0.0
            } else {
                // harmonic mean keeps the interpolant monotone
                2.0 / (1.0 / d[i - 1] + 1.0 / d[i])
            };
        }
        Self { xs, ys, slopes }
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 1] {
            return n - 2;
        }
        match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        // linear extension outside the table
        if x < x0 {
            return self.ys[i] + self.slopes[i] * (x - x0);
        }
        if x > x1 && i == self.xs.len() - 2 {
            return self.ys[i + 1] + self.slopes[i + 1] * (x - x1);
        }
        let t = (x - x0) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        if x < x0 {
            return self.slopes[i];
        }
        if x > x1 && i == self.xs.len() - 2 {
            return self.slopes[i + 1];
        }
        let t = (x - x0) / h;
        let d00 = 6.0 * t * (t - 1.0) / h;
        let d10 = (1.0 - t) * (1.0 - 3.0 * t);
        let d01 = -d00;
        let d11 = t * (3.0 * t - 2.0);
        d00 * self.ys[i] + d10 * self.slopes[i] + d01 * self.ys[i + 1] + d11 * self.slopes[i + 1]
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        if x < x0 || (x > x1 && i == self.xs.len() - 2) {
            return 0.0;
        }
        let t = (x - x0) / h;
        let d00 = (12.0 * t - 6.0) / (h * h);
        let d10 = (6.0 * t - 4.0) / h;
        let d01 = -d00;
        let d11 = (6.0 * t - 2.0) / h;
        d00 * self.ys[i] + d10 * self.slopes[i] + d01 * self.ys[i + 1] + d11 * self.slopes[i + 1]
    }
}

// ---------------------------------------------------------------------------
// coefficient matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum MatrixKind {
    Identity,
    /// Constant matrix; entries are taken verbatim (an asymmetric input is
    /// allowed to exist and is caught by the hypothesis audit).
    Constant { m: Mat3 },
    /// diag(d_i (1 + amp prod_k cos(2 pi x_k / period))).
    PeriodicDiag {
        diag: Vec3,
        amp: f64,
        period: f64,
    },
}

#[derive(Debug, Clone)]
pub struct CoefficientMatrixField {
    pub kind: MatrixKind,
    /// Declared ellipticity constant lambda in (0, 1].
    pub lambda: f64,
    pub period: Option<f64>,
}

impl CoefficientMatrixField {
    pub fn identity() -> Self {
        Self {
            kind: MatrixKind::Identity,
            lambda: 1.0,
            period: None,
        }
    }

    pub fn constant_spd(m: Mat3, dim: usize) -> Self {
        let (lo, hi) = crate::geom::sym_eig_bounds(&sym_part(&m, dim), dim);
        let lambda = if lo > 0.0 { (lo.min(1.0 / hi)).min(1.0) } else { 1e-6 };
        Self {
            kind: MatrixKind::Constant { m },
            lambda,
            period: None,
        }
    }

    pub fn periodic_diag(diag: Vec3, amp: f64, period: f64, dim: usize) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..dim {
            lo = lo.min(diag[i] * (1.0 - amp.abs()));
            hi = hi.max(diag[i] * (1.0 + amp.abs()));
        }
        Self {
            kind: MatrixKind::PeriodicDiag { diag, amp, period },
            lambda: (lo.min(1.0 / hi)).min(1.0),
            period: Some(period),
        }
    }

    fn modulation(&self, x: Vec3, dim: usize) -> f64 {
        match &self.kind {
            MatrixKind::PeriodicDiag { amp, period, .. } => {
                let mut c = 1.0;
                for i in 0..dim {
                    c *= (TWO_PI * x[i] / period).cos();
                }
                1.0 + amp * c
            }
            _ => 1.0,
        }
    }

    pub fn at(&self, x: Vec3, dim: usize) -> Mat3 {
        match &self.kind {
            MatrixKind::Identity => crate::geom::identity(),
            MatrixKind::Constant { m } => *m,
            MatrixKind::PeriodicDiag { diag, .. } => {
                let s = self.modulation(x, dim);
                let mut m = [[0.0; 3]; 3];
                for i in 0..dim {
                    m[i][i] = diag[i] * s;
                }
                for i in dim..3 {
                    m[i][i] = 1.0;
                }
                m
            }
        }
    }

    /// grad of entry (i, j); zero except for the periodic diagonal builtin.
    pub fn grad_entry(&self, x: Vec3, i: usize, j: usize, dim: usize) -> Vec3 {
        match &self.kind {
            MatrixKind::PeriodicDiag { diag, amp, period } if i == j && i < dim => {
                let mut g = [0.0; 3];
                for k in 0..dim {
                    let mut prod = 1.0;
                    for l in 0..dim {
                        let arg = TWO_PI * x[l] / period;
                        prod *= if l == k {
                            -arg.sin() * TWO_PI / period
                        } else {
                            arg.cos()
                        };
                    }
                    g[k] = diag[i] * amp * prod;
                }
                g
            }
            _ => [0.0; 3],
        }
    }
}

fn sym_part(m: &Mat3, dim: usize) -> Mat3 {
    let mut s = *m;
    for i in 0..dim {
        for j in 0..dim {
            s[i][j] = 0.5 * (m[i][j] + m[j][i]);
        }
    }
    s
}

// ---------------------------------------------------------------------------
// weight
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum WeightKind {
    Constant { c: f64 },
    /// base + amp prod_k cos(2 pi x_k / period)
    Periodic { base: f64, amp: f64, period: f64 },
}

#[derive(Debug, Clone)]
pub struct WeightField {
    pub kind: WeightKind,
    pub q_lo: f64,
    pub q_hi: f64,
    pub period: Option<f64>,
}

impl WeightField {
    pub fn constant_q(c: f64) -> Self {
        Self {
            kind: WeightKind::Constant { c },
            q_lo: c,
            q_hi: c,
            period: None,
        }
    }

    pub fn periodic_q(base: f64, amp: f64, period: f64) -> Self {
        Self {
            kind: WeightKind::Periodic { base, amp, period },
            q_lo: base - amp.abs(),
            q_hi: base + amp.abs(),
            period: Some(period),
        }
    }

    pub fn at(&self, x: Vec3, dim: usize) -> f64 {
        match &self.kind {
            WeightKind::Constant { c } => *c,
            WeightKind::Periodic { base, amp, period } => {
                let mut c = 1.0;
                for i in 0..dim {
                    c *= (TWO_PI * x[i] / period).cos();
                }
                base + amp * c
            }
        }
    }

    pub fn grad(&self, x: Vec3, dim: usize) -> Vec3 {
        match &self.kind {
            WeightKind::Constant { .. } => [0.0; 3],
            WeightKind::Periodic { amp, period, .. } => {
                let mut g = [0.0; 3];
                for k in 0..dim {
                    let mut prod = 1.0;
                    for l in 0..dim {
                        let arg = TWO_PI * x[l] / period;
                        prod *= if l == k {
                            -arg.sin() * TWO_PI / period
                        } else {
                            arg.cos()
                        };
                    }
                    g[k] = amp * prod;
                }
                g
            }
        }
    }
}
