//! Problem data: the nonlinearity, coefficient matrix, weight and volume
//! target, plus numeric audits of the structural hypotheses they must satisfy
//! (growth, sign, ellipticity, positivity, periodicity).

pub mod builtins;

use crate::error::Error;
use crate::geom::{self, ball_radius_for_volume, Mat3, Vec3};
use crate::oracle;
use crate::Result;

pub use builtins::{CoefficientMatrixField, NonlinearitySpec, WeightField};

/// The full problem data; immutable after construction, all evaluation pure.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub nonlinearity: NonlinearitySpec,
    pub matrix: CoefficientMatrixField,
    pub weight: WeightField,
    /// Target q-volume m of the positivity set.
    pub volume_target: f64,
    /// Common period of all data, when in periodic mode.
    pub period: Option<f64>,
}

impl ProblemSpec {
    pub fn f(&self, x: Vec3, u: f64) -> f64 {
        self.nonlinearity.f(x, u)
    }

    pub fn big_f(&self, x: Vec3, u: f64) -> f64 {
        self.nonlinearity.big_f(x, u)
    }

    pub fn fprime(&self, x: Vec3, u: f64) -> f64 {
        self.nonlinearity.fprime(x, u)
    }

    pub fn grad_x_big_f(&self, x: Vec3, u: f64) -> Vec3 {
        self.nonlinearity.grad_x_big_f(x, u, self.dim)
    }

    pub fn a(&self, x: Vec3) -> Mat3 {
        self.matrix.at(x, self.dim)
    }

    pub fn grad_a_entry(&self, x: Vec3, i: usize, j: usize) -> Vec3 {
        self.matrix.grad_entry(x, i, j, self.dim)
    }

    pub fn q(&self, x: Vec3) -> f64 {
        self.weight.at(x, self.dim)
    }

    pub fn grad_q(&self, x: Vec3) -> Vec3 {
        self.weight.grad(x, self.dim)
    }

    pub fn q_lo(&self) -> f64 {
        self.weight.q_lo
    }

    pub fn q_hi(&self) -> f64 {
        self.weight.q_hi
    }

    pub fn ellipticity(&self) -> f64 {
        self.matrix.lambda
    }

    /// Upper sampling bound for hypothesis audits: the solver's fields stay
    /// well below this for admissible data.
    pub fn u_max(&self) -> f64 {
        10.0 * (1.0 + self.volume_target.powf(2.0 / self.dim as f64))
    }

    /// Radius of a ball whose q-volume is the full target (worst-case weight).
    pub fn support_ball_radius(&self) -> f64 {
        ball_radius_for_volume(self.dim, self.volume_target / self.q_lo())
    }
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

/// Raw builtin selections, as produced by config parsing.
#[derive(Debug, Clone)]
pub struct ProblemInputs {
    pub dim: usize,
    pub nonlinearity: (String, Vec<f64>),
    pub matrix: (String, Vec<f64>),
    pub weight: (String, Vec<f64>),
    pub volume_target: f64,
}

/// Builds an evaluable problem from builtin names and parameters.
///
/// Registered builtins: nonlinearity `constant_f(c)`, `linear_f(c0, c1)`,
/// `quadratic_F(b)`, `bump_times_u(volume, cx1.., cx2..)`,
/// `custom_table(u1, F1, u2, F2, ..)`; matrix `identity`,
/// `constant_spd(entries row-major)`, `periodic_spd(T, amp, d1..dn)`;
/// weight `constant_q(c)`, `periodic_q(T, base, amp)`.
pub fn build_problem(inputs: &ProblemInputs) -> Result<ProblemSpec> {
    let dim = inputs.dim;
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidValue {
            key: "n".into(),
            msg: format!("dimension must be 1, 2 or 3, got {dim}"),
        });
    }
    if inputs.volume_target <= 0.0 {
        return Err(Error::NonPositiveVolumeTarget(inputs.volume_target));
    }

    let (fname, fp) = (&inputs.nonlinearity.0, &inputs.nonlinearity.1);
    let nonlinearity = match fname.as_str() {
        "constant_f" => NonlinearitySpec::constant_f(*fp.first().unwrap_or(&1.0)),
        "linear_f" => NonlinearitySpec::linear_f(
            *fp.first().unwrap_or(&1.0),
            *fp.get(1).unwrap_or(&0.0),
        ),
        "quadratic_F" => NonlinearitySpec::quadratic_f(*fp.first().unwrap_or(&1.0)),
        "bump_times_u" => {
            let volume = *fp.first().ok_or_else(|| Error::InvalidValue {
                key: "f_params".into(),
                msg: "bump_times_u needs a volume followed by center coordinates".into(),
            })?;
            let rest = &fp[1..];
            if rest.is_empty() || rest.len() % dim != 0 {
                return Err(Error::InvalidValue {
                    key: "f_params".into(),
                    msg: format!("expected k*{dim} center coordinates"),
                });
            }
            let centers = rest
                .chunks(dim)
                .map(|c| {
                    let mut p = [0.0; 3];
                    p[..dim].copy_from_slice(c);
                    p
                })
                .collect();
            NonlinearitySpec::bump_times_u(dim, volume, centers)
        }
        "custom_table" => {
            if fp.len() < 4 || fp.len() % 2 != 0 {
                return Err(Error::InvalidValue {
                    key: "f_params".into(),
                    msg: "custom_table needs (u, F) pairs, at least two".into(),
                });
            }
            let us: Vec<f64> = fp.iter().step_by(2).copied().collect();
            let fs: Vec<f64> = fp.iter().skip(1).step_by(2).copied().collect();
            NonlinearitySpec::custom_table(us, fs)
        }
        other => return Err(Error::UnknownBuiltin(other.into())),
    };

    let (aname, ap) = (&inputs.matrix.0, &inputs.matrix.1);
    let matrix = match aname.as_str() {
        "identity" => CoefficientMatrixField::identity(),
        "constant_spd" => {
            if ap.len() != dim * dim {
                return Err(Error::InvalidValue {
                    key: "a_params".into(),
                    msg: format!("expected {} row-major entries", dim * dim),
                });
            }
            let mut m = geom::identity();
            for i in 0..dim {
                for j in 0..dim {
                    m[i][j] = ap[i * dim + j];
                }
            }
            CoefficientMatrixField::constant_spd(m, dim)
        }
        "periodic_spd" => {
            let period = *ap.first().ok_or_else(|| Error::InvalidValue {
                key: "a_params".into(),
                msg: "periodic_spd needs (T, amp, d1..dn)".into(),
            })?;
            let amp = *ap.get(1).unwrap_or(&0.0);
            let mut diag = [1.0; 3];
            for i in 0..dim {
                diag[i] = *ap.get(2 + i).unwrap_or(&1.0);
            }
            CoefficientMatrixField::periodic_diag(diag, amp, period, dim)
        }
        other => return Err(Error::UnknownBuiltin(other.into())),
    };

    let (qname, qp) = (&inputs.weight.0, &inputs.weight.1);
    let weight = match qname.as_str() {
        "constant_q" => WeightField::constant_q(*qp.first().unwrap_or(&1.0)),
        "periodic_q" => {
            let period = *qp.first().ok_or_else(|| Error::InvalidValue {
                key: "q_params".into(),
                msg: "periodic_q needs (T, base, amp)".into(),
            })?;
            WeightField::periodic_q(
                *qp.get(1).unwrap_or(&1.0),
                *qp.get(2).unwrap_or(&0.0),
                period,
            )
        }
        other => return Err(Error::UnknownBuiltin(other.into())),
    };

    // periodic components must agree on the period
    let mut period = None;
    for t in [matrix.period, weight.period].into_iter().flatten() {
        match period {
            None => period = Some(t),
            Some(t0) if (t0 - t).abs() > 1e-12 => {
                return Err(Error::PeriodMismatch(t0, t));
            }
            _ => {}
        }
    }

    Ok(ProblemSpec {
        dim,
        nonlinearity,
        matrix,
        weight,
        volume_target: inputs.volume_target,
        period,
    })
}

/// Evaluates F(x, u), rejecting negative u (the public contract; internal
/// energy code uses the smooth extension directly).
pub fn eval_big_f(spec: &ProblemSpec, x: Vec3, u: f64) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::NegativeU(u));
    }
    Ok(spec.big_f(x, u))
}

pub fn eval_f(spec: &ProblemSpec, x: Vec3, u: f64) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::NegativeU(u));
    }
    Ok(spec.f(x, u))
}

pub fn eval_fprime(spec: &ProblemSpec, x: Vec3, u: f64) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::NegativeU(u));
    }
    Ok(spec.fprime(x, u))
}

// ---------------------------------------------------------------------------
// hypothesis audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail => write!(f, "FAIL"),
            Verdict::NotApplicable => write!(f, "n/a"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub verdict: Verdict,
    pub measured: f64,
    pub threshold: Option<f64>,
    pub note: String,
}

/// Measured constants and per-hypothesis verdicts; failures are verdicts,
/// never errors. All constants are tightest fits over the sample set and are
/// reported as "sampled" quantities.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub checks: Vec<HypothesisCheck>,
    /// Quadratic growth coefficient measured from F'' (the HF4 constant).
    pub growth_b: f64,
    /// Constant part of the quadratic bound after removing the linear slope.
    pub growth_n: f64,
    /// f(x, 0) bound and linear slope of f in u (the HF5 constants).
    pub slope_n_prime: f64,
    pub slope_m_prime: f64,
    pub curvature_m2: f64,
    /// First Dirichlet eigenvalue of the ball of volume m, from the oracle.
    pub lambda1_ball: f64,
    pub u_max: f64,
    pub samples: usize,
    /// Witness energy when a negative-energy configuration was found.
    pub witness_energy: Option<f64>,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn push(
    checks: &mut Vec<HypothesisCheck>,
    name: &'static str,
    verdict: Verdict,
    measured: f64,
    threshold: Option<f64>,
    note: impl Into<String>,
) {
    checks.push(HypothesisCheck {
        name,
        verdict,
        measured,
        threshold,
        note: note.into(),
    });
}

/// Audits every hypothesis on a deterministic sample lattice of at least
/// `sample_budget` (x, u) pairs over the box of interest times [0, u_max].
pub fn check_admissibility(spec: &ProblemSpec, sample_budget: usize) -> AdmissibilityReport {
    let dim = spec.dim;
    let budget = sample_budget.max(1000);
    let u_max = spec.u_max();
    let half_box = 2.0 * spec.support_ball_radius() + 1.0;

    let nu = 33usize;
    let nx_total = budget.div_ceil(nu);
    let nx_axis = (nx_total as f64).powf(1.0 / dim as f64).ceil() as usize;
    let nx_axis = nx_axis.max(5);

    let mut xs: Vec<Vec3> = Vec::new();
    let mut idx = [0usize; 3];
    loop {
        let mut p = [0.0; 3];
        for d in 0..dim {
            p[d] = -half_box + 2.0 * half_box * (idx[d] as f64 + 0.5) / nx_axis as f64;
        }
        xs.push(p);
        // odometer over dim axes
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < nx_axis {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dim {
                break;
            }
        }
        if d == dim {
            break;
        }
    }
    let us: Vec<f64> = (0..nu).map(|k| u_max * k as f64 / (nu - 1) as f64).collect();

    // --- nonlinearity scans
    let mut max_f_at_zero = f64::NEG_INFINITY;
    let mut min_f = f64::INFINITY;
    let mut max_fpp = f64::NEG_INFINITY;
    let mut max_abs_f0 = 0.0f64;
    let mut all_finite = true;
    for &x in &xs {
        max_abs_f0 = max_abs_f0.max(spec.big_f(x, 0.0).abs());
        max_f_at_zero = max_f_at_zero.max(spec.f(x, 0.0));
        for &u in &us {
            let (bf, f, fp) = (spec.big_f(x, u), spec.f(x, u), spec.fprime(x, u));
            if !(bf.is_finite() && f.is_finite() && fp.is_finite()) {
                all_finite = false;
            }
            min_f = min_f.min(f);
            max_fpp = max_fpp.max(fp);
        }
    }
    let n_prime = max_f_at_zero.max(0.0);
    let mut m_prime = 0.0f64;
    let mut growth_n = 0.0f64;
    let b = (0.5 * max_fpp).max(0.0);
    for &x in &xs {
        for &u in &us {
            if u > 0.0 {
                m_prime = m_prime.max((spec.f(x, u) - n_prime) / u);
            }
            growth_n = growth_n.max(spec.big_f(x, u) - n_prime * u - b * u * u);
        }
    }
    m_prime = m_prime.max(0.0);
    growth_n = growth_n.max(0.0);

    let lambda1 = oracle::lambda1_ball(dim, spec.volume_target);
    let lambda = spec.ellipticity();
    let b_threshold = lambda * lambda1 / 2.0;

    // --- matrix scans
    let mut max_asym = 0.0f64;
    let mut eig_lo = f64::INFINITY;
    let mut eig_hi = f64::NEG_INFINITY;
    for &x in &xs {
        let a = spec.a(x);
        max_asym = max_asym.max(geom::max_asymmetry(&a, dim));
        let mut sym = a;
        for i in 0..dim {
            for j in 0..dim {
                sym[i][j] = 0.5 * (a[i][j] + a[j][i]);
            }
        }
        let (lo, hi) = geom::sym_eig_bounds(&sym, dim);
        eig_lo = eig_lo.min(lo);
        eig_hi = eig_hi.max(hi);
    }

    // --- weight scans
    let mut q_min = f64::INFINITY;
    let mut q_max = f64::NEG_INFINITY;
    for &x in &xs {
        let q = spec.q(x);
        q_min = q_min.min(q);
        q_max = q_max.max(q);
    }

    // --- periodicity residuals
    let per_residual = spec.period.map(|t| {
        let mut worst = 0.0f64;
        for &x in &xs {
            for d in 0..dim {
                let mut xt = x;
                xt[d] += t;
                let (a0, a1) = (spec.a(x), spec.a(xt));
                for i in 0..dim {
                    for j in 0..dim {
                        worst = worst.max((a0[i][j] - a1[i][j]).abs());
                    }
                }
                worst = worst.max((spec.q(x) - spec.q(xt)).abs());
                worst = worst.max((spec.big_f(x, 1.0) - spec.big_f(xt, 1.0)).abs());
            }
        }
        worst
    });

    let mut checks = Vec::new();
    push(
        &mut checks,
        "f_regularity",
        if all_finite { Verdict::Pass } else { Verdict::Fail },
        0.0,
        None,
        "builtin closed forms; finiteness sampled",
    );
    push(
        &mut checks,
        "f_zero_at_zero",
        if max_abs_f0 == 0.0 { Verdict::Pass } else { Verdict::Fail },
        max_abs_f0,
        Some(0.0),
        "max |F(x, 0)| over samples",
    );
    push(
        &mut checks,
        "f_nonnegative",
        if min_f >= 0.0 { Verdict::Pass } else { Verdict::Fail },
        min_f,
        Some(0.0),
        "min f(x, u) over samples",
    );
    push(
        &mut checks,
        "f_quadratic_growth",
        if b < b_threshold { Verdict::Pass } else { Verdict::Fail },
        b,
        Some(b_threshold),
        "b from max F''/2 vs lambda * lambda1(ball of volume m)/2",
    );
    push(
        &mut checks,
        "f_linear_growth",
        if n_prime.is_finite() && m_prime.is_finite() && max_fpp.is_finite() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        m_prime,
        None,
        format!("N' = {n_prime:.6}, M' = {m_prime:.6}, M2 = {:.6}", max_fpp.max(0.0)),
    );

    let witness = witness_negative_energy(spec);
    let witness_energy = witness.as_ref().ok().map(|w| w.energy);
    push(
        &mut checks,
        "negative_energy_witness",
        if witness.is_ok() { Verdict::Pass } else { Verdict::Fail },
        witness_energy.unwrap_or(f64::NAN),
        Some(0.0),
        "scaled eigenfunction bump with negative energy",
    );

    push(
        &mut checks,
        "a_regularity",
        Verdict::Pass,
        0.0,
        None,
        "builtin closed forms",
    );
    push(
        &mut checks,
        "a_symmetric",
        if max_asym <= 1e-12 { Verdict::Pass } else { Verdict::Fail },
        max_asym,
        Some(1e-12),
        "max |A_ij - A_ji| over samples",
    );
    let elliptic_ok = eig_lo >= lambda - 1e-9 && eig_hi <= 1.0 / lambda + 1e-9 && eig_lo > 0.0;
    push(
        &mut checks,
        "a_elliptic",
        if elliptic_ok { Verdict::Pass } else { Verdict::Fail },
        eig_lo,
        Some(lambda),
        format!("eigenvalues in [{eig_lo:.6}, {eig_hi:.6}], declared lambda {lambda:.6}"),
    );
    push(
        &mut checks,
        "q_regularity",
        Verdict::Pass,
        0.0,
        None,
        "builtin closed forms",
    );
    let q_ok = q_min > 0.0 && q_min >= spec.q_lo() - 1e-12 && q_max <= spec.q_hi() + 1e-12;
    push(
        &mut checks,
        "q_bounds",
        if q_ok { Verdict::Pass } else { Verdict::Fail },
        q_min,
        Some(0.0),
        format!("q in [{q_min:.6}, {q_max:.6}], declared [{}, {}]", spec.q_lo(), spec.q_hi()),
    );
    match per_residual {
        Some(res) => push(
            &mut checks,
            "periodicity",
            if res <= 1e-12 { Verdict::Pass } else { Verdict::Fail },
            res,
            Some(1e-12),
            "max data shift residual over one period",
        ),
        None => push(
            &mut checks,
            "periodicity",
            Verdict::NotApplicable,
            0.0,
            None,
            "no period declared",
        ),
    }

    AdmissibilityReport {
        checks,
        growth_b: b,
        growth_n,
        slope_n_prime: n_prime,
        slope_m_prime: m_prime,
        curvature_m2: max_fpp.max(0.0),
        lambda1_ball: lambda1,
        u_max,
        samples: xs.len() * nu,
        witness_energy,
    }
}

// ---------------------------------------------------------------------------
// negative-energy witness
// ---------------------------------------------------------------------------

/// A scaled first-eigenfunction bump tau * phi1 on a ball, with its energy.
#[derive(Debug, Clone)]
pub struct Witness {
    pub center: Vec3,
    pub radius: f64,
    pub tau: f64,
    pub energy: f64,
}

impl Witness {
    /// Radial profile value at distance s from the center (amplitude tau).
    pub fn value(&self, dim: usize, s: f64) -> f64 {
        self.tau * eigen_profile(dim, s / self.radius)
    }
}

/// First Dirichlet eigenfunction profile on the unit ball, normalized to 1 at
/// the center.
fn eigen_profile(dim: usize, t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    match dim {
        1 => (std::f64::consts::FRAC_PI_2 * t).cos(),
        2 => oracle::bessel_j0(oracle::bessel_j0_first_zero() * t),
        3 => {
            let a = std::f64::consts::PI * t;
            if a.abs() < 1e-12 {
                1.0
            } else {
                a.sin() / a
            }
        }
        _ => unreachable!(),
    }
}

fn eigen_profile_deriv(dim: usize, t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    match dim {
        1 => -std::f64::consts::FRAC_PI_2 * (std::f64::consts::FRAC_PI_2 * t).sin(),
        2 => {
            let j01 = oracle::bessel_j0_first_zero();
            -j01 * oracle::bessel_j1(j01 * t)
        }
        3 => {
            let a = std::f64::consts::PI * t;
            if a.abs() < 1e-6 {
                -a * std::f64::consts::PI / 3.0
            } else {
                std::f64::consts::PI * (a.cos() / a - a.sin() / (a * a))
            }
        }
        _ => unreachable!(),
    }
}

/// Energy of tau * phi1 on the ball, by midpoint quadrature on a local
/// lattice (independent of any solver grid).
fn bump_energy(spec: &ProblemSpec, center: Vec3, radius: f64, tau: f64) -> f64 {
    let dim = spec.dim;
    let cells = 48usize;
    let h = 2.0 * radius / cells as f64;
    let mut dirichlet = 0.0;
    let mut potential = 0.0;
    let mut idx = [0usize; 3];
    let counts = [cells, if dim >= 2 { cells } else { 1 }, if dim >= 3 { cells } else { 1 }];
    loop {
        let mut x = center;
        for d in 0..dim {
            x[d] = center[d] - radius + (idx[d] as f64 + 0.5) * h;
        }
        let mut s2 = 0.0;
        for d in 0..dim {
            let dx = x[d] - center[d];
            s2 += dx * dx;
        }
        let s = s2.sqrt();
        if s < radius {
            let t = s / radius;
            let val = tau * eigen_profile(dim, t);
            let dr = tau * eigen_profile_deriv(dim, t) / radius;
            let grad: Vec3 = if s > 1e-14 {
                let mut g = [0.0; 3];
                for d in 0..dim {
                    g[d] = dr * (x[d] - center[d]) / s;
                }
                g
            } else {
                [0.0; 3]
            };
            let a = spec.a(x);
            dirichlet += geom::quad_form(&a, grad, dim);
            potential += spec.big_f(x, val.max(0.0));
        }
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == 3 {
                break;
            }
        }
        if d == 3 {
            break;
        }
    }
    let w = h.powi(dim as i32);
    dirichlet * w - 2.0 * potential * w
}

/// Searches for a configuration with negative energy: a scaled eigenfunction
/// bump at a site where f(., 0) > 0, with amplitude halved down from 1, or
/// (when f(., 0) vanishes identically) on the full ball of volume m where a
/// quadratic nonlinearity can beat the Dirichlet term.
pub fn witness_negative_energy(spec: &ProblemSpec) -> Result<Witness> {
    let sites = spec.nonlinearity.seed_sites();
    let center = sites[0];
    let mut candidates: Vec<f64> = Vec::new();
    if let Some(r) = spec.nonlinearity.witness_radius() {
        let small = 0.5 * spec.support_ball_radius();
        candidates.push(r.min(small).min(1.0).max(1e-3));
    }
    candidates.push(ball_radius_for_volume(spec.dim, spec.volume_target));

    for radius in candidates {
        let mut tau = 1.0;
        for _ in 0..21 {
            let e = bump_energy(spec, center, radius, tau);
            if e < 0.0 {
                return Ok(Witness {
                    center,
                    radius,
                    tau,
                    energy: e,
                });
            }
            tau *= 0.5;
        }
    }
    Err(Error::NoWitnessFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torsion_inputs() -> ProblemInputs {
        ProblemInputs {
            dim: 2,
            nonlinearity: ("constant_f".into(), vec![1.0]),
            matrix: ("identity".into(), vec![]),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: std::f64::consts::PI,
        }
    }

    #[test]
    fn builds_torsion_problem() {
        let spec = build_problem(&torsion_inputs()).unwrap();
        assert_eq!(spec.dim, 2);
        assert!(spec.period.is_none());
        assert_eq!(spec.f([0.3, 0.1, 0.0], 2.0), 1.0);
    }

    #[test]
    fn rejects_unknown_builtin_and_bad_volume() {
        let mut bad = torsion_inputs();
        bad.nonlinearity.0 = "cubic_f".into();
        assert!(matches!(build_problem(&bad), Err(Error::UnknownBuiltin(_))));

        let mut bad = torsion_inputs();
        bad.volume_target = -1.0;
        assert!(matches!(
            build_problem(&bad),
            Err(Error::NonPositiveVolumeTarget(_))
        ));
    }

    #[test]
    fn rejects_period_mismatch() {
        let inputs = ProblemInputs {
            dim: 2,
            nonlinearity: ("constant_f".into(), vec![1.0]),
            matrix: ("periodic_spd".into(), vec![2.0, 0.1, 1.0, 1.0]),
            weight: ("periodic_q".into(), vec![1.0, 1.0, 0.1]),
            volume_target: 1.0,
        };
        assert!(matches!(
            build_problem(&inputs),
            Err(Error::PeriodMismatch(_, _))
        ));
    }

    #[test]
    fn eval_rejects_negative_u() {
        let spec = build_problem(&torsion_inputs()).unwrap();
        assert!(matches!(
            eval_big_f(&spec, [0.0; 3], -0.1),
            Err(Error::NegativeU(_))
        ));
        // F(x, 0) = 0 exactly and f is the exact derivative
        assert_eq!(eval_big_f(&spec, [0.2, 0.0, 0.0], 0.0).unwrap(), 0.0);
        assert_eq!(eval_big_f(&spec, [0.2, 0.0, 0.0], 0.5).unwrap(), 0.5);
        assert_eq!(eval_f(&spec, [0.2, 0.0, 0.0], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_eval_examples() {
        let inputs = ProblemInputs {
            dim: 2,
            nonlinearity: ("quadratic_F".into(), vec![7.0]),
            matrix: ("identity".into(), vec![]),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: 1.0,
        };
        let spec = build_problem(&inputs).unwrap();
        let x = [0.1, 0.1, 0.0];
        assert_eq!(eval_big_f(&spec, x, 2.0).unwrap(), 28.0); // 4b
        assert_eq!(eval_f(&spec, x, 2.0).unwrap(), 28.0); // 4b
        assert_eq!(eval_fprime(&spec, x, 2.0).unwrap(), 14.0); // 2b
    }

    #[test]
    fn torsion_admissibility_all_pass_with_zero_constants() {
        let spec = build_problem(&torsion_inputs()).unwrap();
        let report = check_admissibility(&spec, 1000);
        assert!(report.all_pass(), "{:#?}", report.checks);
        assert_eq!(report.growth_b, 0.0);
        assert_eq!(report.growth_n, 0.0);
        assert_eq!(report.slope_m_prime, 0.0);
        assert_eq!(report.curvature_m2, 0.0);
        assert!((report.slope_n_prime - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_b10_fails_growth_and_b25_lacks_witness() {
        let mk = |b: f64| {
            build_problem(&ProblemInputs {
                dim: 2,
                nonlinearity: ("quadratic_F".into(), vec![b]),
                matrix: ("identity".into(), vec![]),
                weight: ("constant_q".into(), vec![1.0]),
                volume_target: std::f64::consts::PI,
            })
            .unwrap()
        };
        let report = check_admissibility(&mk(10.0), 1000);
        let growth = report.check("f_quadratic_growth").unwrap();
        assert_eq!(growth.verdict, Verdict::Fail);
        let threshold = growth.threshold.unwrap();
        assert!((threshold - 2.8916).abs() < 1e-3, "threshold {threshold}");

        // below threshold: growth passes, but no negative-energy witness exists
        let report = check_admissibility(&mk(2.5), 1000);
        assert_eq!(report.check("f_quadratic_growth").unwrap().verdict, Verdict::Pass);
        assert_eq!(
            report.check("negative_energy_witness").unwrap().verdict,
            Verdict::Fail
        );

        // above threshold the scaling path is a witness
        let report = check_admissibility(&mk(3.0), 1000);
        assert_eq!(
            report.check("negative_energy_witness").unwrap().verdict,
            Verdict::Pass
        );
    }

    #[test]
    fn asymmetric_matrix_fails_symmetry() {
        let inputs = ProblemInputs {
            dim: 2,
            nonlinearity: ("constant_f".into(), vec![1.0]),
            matrix: ("constant_spd".into(), vec![1.0, 0.1, 0.0, 1.0]),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: 1.0,
        };
        let spec = build_problem(&inputs).unwrap();
        let report = check_admissibility(&spec, 1000);
        assert_eq!(report.check("a_symmetric").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn periodic_residual_tiny_for_shipped_builtins() {
        let inputs = ProblemInputs {
            dim: 2,
            nonlinearity: ("constant_f".into(), vec![1.0]),
            matrix: ("periodic_spd".into(), vec![1.0, 0.25, 1.0, 1.0]),
            weight: ("periodic_q".into(), vec![1.0, 1.0, 0.2]),
            volume_target: 1.0,
        };
        let spec = build_problem(&inputs).unwrap();
        let report = check_admissibility(&spec, 1000);
        let per = report.check("periodicity").unwrap();
        assert_eq!(per.verdict, Verdict::Pass);
        assert!(per.measured <= 1e-12);
    }

    #[test]
    fn witness_exists_for_torsion_and_fails_for_zero_f() {
        let spec = build_problem(&torsion_inputs()).unwrap();
        let w = witness_negative_energy(&spec).unwrap();
        assert!(w.energy < 0.0);

        let zero = build_problem(&ProblemInputs {
            dim: 2,
            nonlinearity: ("constant_f".into(), vec![0.0]),
            matrix: ("identity".into(), vec![]),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: 1.0,
        })
        .unwrap();
        assert!(matches!(
            witness_negative_energy(&zero),
            Err(Error::NoWitnessFound)
        ));
    }

    #[test]
    fn bump_witness_centered_at_first_site() {
        let spec = build_problem(&ProblemInputs {
            dim: 2,
            nonlinearity: (
                "bump_times_u".into(),
                vec![std::f64::consts::PI, -3.0, 0.0, 3.0, 0.0],
            ),
            matrix: ("identity".into(), vec![]),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: std::f64::consts::PI,
        })
        .unwrap();
        let w = witness_negative_energy(&spec).unwrap();
        assert_eq!(w.center, [-3.0, 0.0, 0.0]);
        assert!(w.energy < 0.0);
    }

    #[test]
    fn numeric_derivative_of_big_f_matches_f_for_all_builtins() {
        let specs: Vec<NonlinearitySpec> = vec![
            NonlinearitySpec::constant_f(1.0),
            NonlinearitySpec::linear_f(0.5, 0.1),
            NonlinearitySpec::quadratic_f(3.0),
            NonlinearitySpec::bump_times_u(2, 1.0, vec![[0.0; 3]]),
            NonlinearitySpec::custom_table(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.4, 0.7, 1.0]),
        ];
        let mut rng = 1234567u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for nl in &specs {
            for _ in 0..100 {
                let x = [next() * 2.0 - 1.0, next() * 2.0 - 1.0, 0.0];
                let u = 0.01 + next() * 1.8;
                let s = 1e-6;
                let fd = (nl.big_f(x, u + s) - nl.big_f(x, u - s)) / (2.0 * s);
                let f = nl.f(x, u);
                let denom = f.abs().max(1e-3);
                assert!(
                    ((fd - f) / denom).abs() <= 1e-6,
                    "builtin {:?} at u={u}: fd={fd}, f={f}",
                    std::mem::discriminant(&nl.kind)
                );
            }
        }
    }
}
