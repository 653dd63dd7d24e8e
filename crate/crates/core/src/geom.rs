//! Small dense vector/matrix helpers for dimensions 1..=3.
//!
//! Points and vectors are `[f64; 3]` with unused trailing components fixed at
//! zero; `dim` is carried separately by the caller. Symmetric matrices are
//! stored as full 3x3 row-major arrays.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn vec_add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn vec_sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn vec_scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// y = M x (first `dim` components; the rest stay zero).
pub fn mat_vec(m: &Mat3, x: Vec3, dim: usize) -> Vec3 {
    let mut y = [0.0; 3];
    for i in 0..dim {
        for j in 0..dim {
            y[i] += m[i][j] * x[j];
        }
    }
    y
}

/// xᵀ M x over the first `dim` components.
pub fn quad_form(m: &Mat3, x: Vec3, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += x[i] * m[i][j] * x[j];
        }
    }
    s
}

pub fn mat_mul(a: &Mat3, b: &Mat3, dim: usize) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn max_asymmetry(m: &Mat3, dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            worst = worst.max((m[i][j] - m[j][i]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns (eigenvalues ascending, column eigenvectors as rows of Q transposed
/// back, i.e. `vectors[k]` is the unit eigenvector for `values[k]`).
pub fn sym_eigen(m: &Mat3, dim: usize) -> ([f64; 3], Mat3) {
    let mut a = *m;
    let mut q = identity();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for r in (p + 1)..dim {
                if a[p][r].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[r][r] - a[p][p]) / (2.0 * a[p][r]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J with J the rotation in the (p, r) plane
                for k in 0..dim {
                    let akp = a[k][p];
                    let akr = a[k][r];
                    a[k][p] = c * akp - s * akr;
                    a[k][r] = s * akp + c * akr;
                }
                for k in 0..dim {
                    let apk = a[p][k];
                    let ark = a[r][k];
                    a[p][k] = c * apk - s * ark;
                    a[r][k] = s * apk + c * ark;
                }
                for k in 0..dim {
                    let qkp = q[k][p];
                    let qkr = q[k][r];
                    q[k][p] = c * qkp - s * qkr;
                    q[k][r] = s * qkp + c * qkr;
                }
            }
        }
    }
    let mut vals = [0.0; 3];
    for i in 0..dim {
        vals[i] = a[i][i];
    }
    // sort ascending, permuting eigenvector columns along
    let mut order = [0usize, 1, 2];
    order[..dim].sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let mut sorted_vals = [0.0; 3];
    let mut sorted_vecs = identity();
    for (k, &i) in order[..dim].iter().enumerate() {
        sorted_vals[k] = vals[i];
        for row in 0..dim {
            sorted_vecs[k][row] = q[row][i];
        }
    }
    (sorted_vals, sorted_vecs)
}

/// Extremal eigenvalues (min, max) of a symmetric matrix.
pub fn sym_eig_bounds(m: &Mat3, dim: usize) -> (f64, f64) {
    let (vals, _) = sym_eigen(m, dim);
    (vals[0], vals[dim - 1])
}

/// Invert a small matrix (used for mapping blow-up normals back).
pub fn invert(m: &Mat3, dim: usize) -> Mat3 {
    match dim {
        1 => {
            let mut inv = identity();
            inv[0][0] = 1.0 / m[0][0];
            inv
        }
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let mut inv = identity();
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
            inv
        }
        3 => {
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            let mut inv = [[0.0; 3]; 3];
            inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
            inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
            inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
            inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
            inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
            inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
            inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
            inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
            inv
        }
        _ => unreachable!("dim must be 1..=3"),
    }
}

/// Surface measure of the unit sphere, H^{n-1}(∂B_1).
pub fn unit_sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => unreachable!("dim must be 1..=3"),
    }
}

/// Volume of the unit ball, |B_1| = H^{n-1}(∂B_1) / n.
pub fn unit_ball_volume(dim: usize) -> f64 {
    unit_sphere_area(dim) / dim as f64
}

/// Radius of the ball of a given volume.
pub fn ball_radius_for_volume(dim: usize, volume: f64) -> f64 {
    (volume / unit_ball_volume(dim)).powf(1.0 / dim as f64)
}

/// Equal-angle sample directions on the unit sphere.
///
/// n=1: the two endpoints; n=2: `count` equally spaced angles; n=3: a
/// latitude/longitude lattice of roughly `count` points with trapezoidal
/// weights folded into equal weighting by construction (uniform in the
/// azimuth, Gauss-free cosine-latitude spacing).
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec3> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect(),
        3 => {
            // spiral points: near-uniform, deterministic
            let mut dirs = Vec::with_capacity(count);
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            for k in 0..count {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let th = golden * k as f64;
                dirs.push([r * th.cos(), r * th.sin(), z]);
            }
            dirs
        }
        _ => unreachable!("dim must be 1..=3"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let m = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let (vals, vecs) = sym_eigen(&m, 2);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // eigenvector for 3 is (1,1)/sqrt(2) up to sign
        let v = vecs[1];
        assert!((v[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((v[0] - v[1]).abs() < 1e-12 || (v[0] + v[1]).abs() < 1e-12);
    }

    #[test]
    fn eig_bounds_of_identity() {
        let (lo, hi) = sym_eig_bounds(&identity(), 3);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn invert_times_original_is_identity() {
        let m = [[2.0, 0.3, 0.1], [0.3, 1.5, 0.2], [0.1, 0.2, 3.0]];
        let inv = invert(&m, 3);
        let p = mat_mul(&m, &inv, 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[i][j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_constants() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ball_radius_for_volume(2, std::f64::consts::PI) - 1.0).abs() < 1e-15);
        assert!((ball_radius_for_volume(3, 4.0 * std::f64::consts::PI / 3.0) - 1.0).abs() < 1e-12);
    }
}
