//! Discrete operators: gradients, the divergence-form operator, volumes,
//! the energy and its exact nodal gradient, and the domain-variation pairing.
//!
//! All reductions run in fixed index order; nothing here reassociates sums.

use super::{EnergyBreakdown, ScalarFieldGrid, VectorFieldGrid, VolumeMode};
use crate::error::Error;
use crate::geom::{self, Vec3};
use crate::problem::ProblemSpec;
use crate::Result;

/// Forward-difference gradient per cell: component d at cell c is
/// (u[c + e_d] - u[c]) / h.
pub fn gradient_field(u: &ScalarFieldGrid) -> VectorFieldGrid {
    let g = &u.grid;
    let mut out = VectorFieldGrid::zeros(g.clone());
    let h = g.h;
    for c in g.cells() {
        let l = g.cell_lin(c);
        let base = u.at(c);
        let mut v = [0.0; 3];
        for d in 0..g.dim {
            let mut up = c;
            up[d] += 1;
            v[d] = (u.at(up) - base) / h;
        }
        out.comps[l] = v;
    }
    out
}

/// The divergence-form operator: the exact derivative of the discrete
/// Dirichlet energy, scaled so that for A = I it is the standard
/// (2n+1)-point nonpositive-definite... i.e. w = -div_h(A grad_h u).
///
/// Writing E_dir(u) = sum_cells (Du)^T A(x_c) (Du) h^n with the per-cell
/// forward differences Du, this returns w with
/// w[p] = dE_dir/du[p] / (2 h^n), which keeps the induced bilinear form
/// symmetric and elliptic by construction.
pub fn apply_l(u: &ScalarFieldGrid, spec: &ProblemSpec) -> ScalarFieldGrid {
    let g = &u.grid;
    let mut out = ScalarFieldGrid::zeros(g.clone());
    let h = g.h;
    for c in g.cells() {
        let a = spec.a(g.cell_center(c));
        let base = u.at(c);
        let mut du = [0.0; 3];
        for d in 0..g.dim {
            let mut up = c;
            up[d] += 1;
            du[d] = (u.at(up) - base) / h;
        }
        let flux = geom::mat_vec(&a, du, g.dim); // A Du
        let base_lin = g.node_lin(c);
        for d in 0..g.dim {
            let mut up = c;
            up[d] += 1;
            let up_lin = g.node_lin(up);
            out.values[up_lin] += flux[d] / h;
            out.values[base_lin] -= flux[d] / h;
        }
    }
    out
}

/// Sharp weighted volume: q at the cell center times h^n over cells whose
/// center value (corner average) is positive. For a clamped nonnegative
/// field that is exactly the cells with a positive corner; this midpoint
/// flavor also offsets the outward bias of the staircase Dirichlet boundary,
/// which the nodal count does not.
pub fn vol_q(u: &ScalarFieldGrid, spec: &ProblemSpec) -> f64 {
    let g = &u.grid;
    let dim = g.dim;
    let w = g.h.powi(dim as i32);
    let mut total = 0.0;
    for c in g.cells() {
        let mut any = false;
        for corner in 0..(1usize << dim) {
            let mut idx = c;
            for d in 0..dim {
                if corner >> d & 1 == 1 {
                    idx[d] += 1;
                }
            }
            if u.at(idx) > 0.0 {
                any = true;
                break;
            }
        }
        if any {
            total += spec.q(g.cell_center(c));
        }
    }
    total * w
}

/// Smoothed indicator min(u/delta, 1); it is deliberately not clamped below
/// zero so the smoothed functional stays differentiable at u = 0.
#[inline]
pub fn smooth_indicator(v: f64, delta: f64) -> f64 {
    (v / delta).min(1.0)
}

#[inline]
pub fn smooth_indicator_deriv(v: f64, delta: f64) -> f64 {
    if v < delta {
        1.0 / delta
    } else {
        0.0
    }
}

pub fn smoothed_vol_q(u: &ScalarFieldGrid, spec: &ProblemSpec, delta: f64) -> f64 {
    assert!(delta > 0.0);
    let g = &u.grid;
    let w = g.h.powi(g.dim as i32);
    let mut total = 0.0;
    for l in 0..u.values.len() {
        let v = u.values[l];
        if v != 0.0 {
            total += spec.q(g.node_pos(g.node_unlin(l))) * smooth_indicator(v, delta);
        }
    }
    total * w
}

/// Full energy breakdown at multiplier lambda.
pub fn energy(
    u: &ScalarFieldGrid,
    spec: &ProblemSpec,
    lambda: f64,
    mode: VolumeMode,
) -> EnergyBreakdown {
    let g = &u.grid;
    let h = g.h;
    let w = h.powi(g.dim as i32);

    let mut dirichlet = 0.0;
    for c in g.cells() {
        let a = spec.a(g.cell_center(c));
        let base = u.at(c);
        let mut du = [0.0; 3];
        for d in 0..g.dim {
            let mut up = c;
            up[d] += 1;
            du[d] = (u.at(up) - base) / h;
        }
        dirichlet += geom::quad_form(&a, du, g.dim);
    }
    dirichlet *= w;

    let mut potential = 0.0;
    for l in 0..u.values.len() {
        let v = u.values[l];
        if v != 0.0 {
            potential += spec.big_f(g.node_pos(g.node_unlin(l)), v);
        }
    }
    let potential = -2.0 * potential * w;

    let vol_sharp = vol_q(u, spec);
    let (volume_term, smoothed_delta) = match mode {
        VolumeMode::Sharp => (lambda * vol_sharp, None),
        VolumeMode::Smoothed(delta) => (lambda * smoothed_vol_q(u, spec, delta), Some(delta)),
    };

    let total = dirichlet + potential + volume_term;
    EnergyBreakdown {
        dirichlet,
        potential,
        volume_term,
        total,
        vol_q_raw: vol_sharp,
        smoothed_delta,
    }
}

/// Exact nodal gradient of the smoothed discrete energy:
/// dE/du[p] = 2 h^n (Lu)[p] - 2 f(x_p, u_p) h^n + lambda q(x_p) S'(u_p) h^n.
pub fn energy_gradient(
    u: &ScalarFieldGrid,
    spec: &ProblemSpec,
    lambda: f64,
    delta: f64,
) -> ScalarFieldGrid {
    assert!(delta > 0.0);
    let g = &u.grid;
    let w = g.h.powi(g.dim as i32);
    let mut out = apply_l(u, spec);
    for l in 0..out.values.len() {
        let x = g.node_pos(g.node_unlin(l));
        let v = u.values[l];
        out.values[l] = 2.0 * w * out.values[l] - 2.0 * spec.f(x, v) * w
            + lambda * spec.q(x) * smooth_indicator_deriv(v, delta) * w;
    }
    out
}

/// Domain-variation pairing: the five Dirichlet/potential terms plus the
/// weighted-volume term over the support,
///
///   dE[xi] = ∫ ( -2 Du Dxi A Du + Du A Du div xi + Du (grad A . xi) Du
///               - 2 grad_x F . xi - 2 F div xi ) + lambda ∫_{u>0} div(q xi).
///
/// xi must vanish on a two-cell margin inside the box.
pub fn first_variation(
    u: &ScalarFieldGrid,
    xi: &VectorFieldGrid,
    spec: &ProblemSpec,
    lambda: f64,
) -> Result<f64> {
    let g = &u.grid;
    assert_eq!(g, &xi.grid, "field and variation must share a grid");
    let dim = g.dim;
    let h = g.h;
    let w = h.powi(dim as i32);

    // margin check: xi must be zero on cells within 2 of the box boundary
    for c in g.cells() {
        let mut near = false;
        for d in 0..dim {
            if c[d] < 2 || c[d] + 2 >= g.dims[d] {
                near = true;
            }
        }
        if near {
            let v = xi.at(c);
            if v[0] != 0.0 || v[1] != 0.0 || v[2] != 0.0 {
                return Err(Error::MarginViolation);
            }
        }
    }

    let mut acc = 0.0;
    for c in g.cells() {
        let mut interior = true;
        for d in 0..dim {
            if c[d] < 1 || c[d] + 1 >= g.dims[d] {
                interior = false;
            }
        }
        if !interior {
            continue;
        }
        let xc = g.cell_center(c);
        let xiv = xi.at(c);

        // grad xi via centered differences of cell values: (d_i xi_j)
        let mut dxi = [[0.0f64; 3]; 3];
        for i in 0..dim {
            let mut cp = c;
            let mut cm = c;
            cp[i] += 1;
            cm[i] -= 1;
            let vp = xi.at(cp);
            let vm = xi.at(cm);
            for j in 0..dim {
                dxi[i][j] = (vp[j] - vm[j]) / (2.0 * h);
            }
        }
        let div_xi: f64 = (0..dim).map(|i| dxi[i][i]).sum();

        let base = u.at(c);
        let mut du = [0.0; 3];
        for d in 0..dim {
            let mut up = c;
            up[d] += 1;
            du[d] = (u.at(up) - base) / h;
        }
        let a = spec.a(xc);
        let a_du = geom::mat_vec(&a, du, dim);

        // -2 Du Dxi A Du
        let mut t1 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                t1 += du[i] * dxi[i][j] * a_du[j];
            }
        }
        t1 *= -2.0;

        // Du A Du div xi
        let t2 = geom::dot(du, a_du) * div_xi;

        // Du (grad A . xi) Du
        let mut t3 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let ga = spec.grad_a_entry(xc, i, j);
                t3 += du[i] * geom::dot(ga, xiv) * du[j];
            }
        }

        // cell-center value of u: corner average
        let mut ucc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut idx = c;
            for d in 0..dim {
                if corner >> d & 1 == 1 {
                    idx[d] += 1;
                }
            }
            ucc += u.at(idx);
        }
        ucc /= (1usize << dim) as f64;

        // -2 grad_x F . xi  - 2 F div xi
        let gf = spec.grad_x_big_f(xc, ucc.max(0.0));
        let t4 = -2.0 * geom::dot(gf, xiv);
        let t5 = -2.0 * spec.big_f(xc, ucc.max(0.0)) * div_xi;

        // lambda * div(q xi) over the support
        let t6 = if ucc > 0.0 {
            lambda * (spec.q(xc) * div_xi + geom::dot(spec.grad_q(xc), xiv))
        } else {
            0.0
        };

        acc += t1 + t2 + t3 + t4 + t5 + t6;
    }
    Ok(acc * w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::problem::{build_problem, ProblemInputs};

    fn torsion_spec(dim: usize) -> ProblemSpec {
        build_problem(&ProblemInputs {
            dim,
            nonlinearity: ("constant_f".into(), vec![1.0]),
            matrix: ("identity".into(), vec![]),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: std::f64::consts::PI,
        })
        .unwrap()
    }

    fn spec_with_matrix(entries: Vec<f64>) -> ProblemSpec {
        build_problem(&ProblemInputs {
            dim: 2,
            nonlinearity: ("constant_f".into(), vec![1.0]),
            matrix: ("constant_spd".into(), entries),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn gradient_of_constant_and_linear_fields() {
        let grid = Grid::centered(2, 0.25, 1.0);
        let constant = ScalarFieldGrid::from_fn(grid.clone(), |_| 3.5);
        let g = gradient_field(&constant);
        for c in grid.cells() {
            let v = g.at(c);
            assert_eq!(v[0], 0.0);
            assert_eq!(v[1], 0.0);
        }
        let linear = ScalarFieldGrid::from_fn(grid.clone(), |x| x[0]);
        let g = gradient_field(&linear);
        for c in grid.cells() {
            let v = g.at(c);
            assert!((v[0] - 1.0).abs() < 1e-13);
            assert!(v[1].abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_torsion_profile_close_to_exact() {
        let h = 1.0 / 64.0;
        let grid = Grid::centered(2, h, 1.25);
        let u = ScalarFieldGrid::from_fn(grid.clone(), |x| {
            ((1.0 - x[0] * x[0] - x[1] * x[1]) / 4.0).max(0.0)
        });
        let g = gradient_field(&u);
        let mut worst = 0.0f64;
        for c in grid.cells() {
            let xc = grid.cell_center(c);
            let r2 = xc[0] * xc[0] + xc[1] * xc[1];
            if r2 > 0.9 * 0.9 {
                continue; // stay away from the kink
            }
            let exact = [-xc[0] / 2.0, -xc[1] / 2.0, 0.0];
            let got = g.at(c);
            worst = worst.max((got[0] - exact[0]).abs().max((got[1] - exact[1]).abs()));
        }
        assert!(worst <= 2.0 * h, "max deviation {worst} vs bound {}", 2.0 * h);
    }

    #[test]
    fn operator_on_linear_function_is_zero() {
        let grid = Grid::centered(2, 0.125, 1.0);
        let u = ScalarFieldGrid::from_fn(grid.clone(), |x| x[0]);
        let spec = torsion_spec(2);
        let lu = apply_l(&u, &spec);
        for i in 2..grid.nodes_per_axis(0) - 2 {
            for j in 2..grid.nodes_per_axis(1) - 2 {
                assert!(lu.at([i, j, 0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn operator_on_quadratic_is_exactly_minus_one() {
        let grid = Grid::centered(2, 0.125, 1.0);
        let u = ScalarFieldGrid::from_fn(grid.clone(), |x| (x[0] * x[0] + x[1] * x[1]) / 4.0);
        let spec = torsion_spec(2);
        let lu = apply_l(&u, &spec);
        for i in 1..grid.nodes_per_axis(0) - 1 {
            for j in 1..grid.nodes_per_axis(1) - 1 {
                assert!(
                    (lu.at([i, j, 0]) + 1.0).abs() < 1e-10,
                    "node ({i},{j}): {}",
                    lu.at([i, j, 0])
                );
            }
        }
    }

    #[test]
    fn operator_with_anisotropic_matrix() {
        // A = diag(2, 1), u = x1^2  =>  Lu = -4 at interior nodes
        let grid = Grid::centered(2, 0.125, 1.0);
        let u = ScalarFieldGrid::from_fn(grid.clone(), |x| x[0] * x[0]);
        let spec = spec_with_matrix(vec![2.0, 0.0, 0.0, 1.0]);
        let lu = apply_l(&u, &spec);
        for i in 1..grid.nodes_per_axis(0) - 1 {
            for j in 1..grid.nodes_per_axis(1) - 1 {
                assert!((lu.at([i, j, 0]) + 4.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn operator_is_symmetric_and_elliptic() {
        let grid = Grid::centered(2, 0.2, 1.0);
        let spec = spec_with_matrix(vec![2.0, 0.5, 0.5, 1.0]);
        let mut seed = 7u64;
        let mut rand = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..5 {
            let mut u = ScalarFieldGrid::zeros(grid.clone());
            let mut v = ScalarFieldGrid::zeros(grid.clone());
            for i in 2..grid.nodes_per_axis(0) - 2 {
                for j in 2..grid.nodes_per_axis(1) - 2 {
                    u.values[grid.node_lin([i, j, 0])] = rand() - 0.5;
                    v.values[grid.node_lin([i, j, 0])] = rand() - 0.5;
                }
            }
            let lu = apply_l(&u, &spec);
            let lv = apply_l(&v, &spec);
            let dot = |a: &ScalarFieldGrid, b: &ScalarFieldGrid| {
                a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>()
            };
            let (uv, vu) = (dot(&lu, &v), dot(&u, &lv));
            let nu = dot(&u, &u).sqrt();
            let nv = dot(&v, &v).sqrt();
            assert!((uv - vu).abs() <= 1e-10 * nu * nv);

            // ellipticity: <Lu, u> h^n = E_dir >= lambda ||grad u||^2
            let h2 = grid.h * grid.h;
            let grad = gradient_field(&u);
            let grad_norm2: f64 = grad.comps.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<f64>() * h2;
            assert!(dot(&lu, &u) * h2 >= spec.ellipticity() * grad_norm2 - 1e-10);
        }
    }

    #[test]
    fn volumes_sharp_and_smoothed() {
        let h = 1.0 / 64.0;
        let grid = Grid::centered(2, h, 1.5);
        let spec = torsion_spec(2);
        let disk = ScalarFieldGrid::from_fn(grid.clone(), |x| {
            if x[0] * x[0] + x[1] * x[1] < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let v = vol_q(&disk, &spec);
        assert!(
            (v - std::f64::consts::PI).abs() < 0.2,
            "digital disk volume {v}"
        );
        let zero = ScalarFieldGrid::zeros(grid.clone());
        assert_eq!(vol_q(&zero, &spec), 0.0);

        // smoothed volume is nonincreasing in delta and tends to the sharp value
        let u = ScalarFieldGrid::from_fn(grid, |x| {
            ((1.0 - x[0] * x[0] - x[1] * x[1]) / 4.0).max(0.0)
        });
        let sharp = vol_q(&u, &spec);
        let mut last = f64::NEG_INFINITY;
        for &delta in &[0.2, 0.1, 0.05, 0.025, 0.0125] {
            let s = smoothed_vol_q(&u, &spec, delta);
            assert!(s >= last - 1e-12, "not monotone at delta {delta}");
            assert!(s <= sharp + 1e-12);
            last = s;
        }
        assert!((last - sharp).abs() < 0.06 * sharp);
    }

    #[test]
    fn torsion_energy_matches_closed_form() {
        let h = 1.0 / 128.0;
        let grid = Grid::centered(2, h, 1.25);
        let spec = torsion_spec(2);
        let u = ScalarFieldGrid::from_fn(grid, |x| {
            ((1.0 - x[0] * x[0] - x[1] * x[1]) / 4.0).max(0.0)
        });
        let e = energy(&u, &spec, 0.0, VolumeMode::Sharp);
        let exact = -std::f64::consts::PI / 8.0;
        assert!(
            (e.total - exact).abs() <= 0.01 * exact.abs(),
            "energy {} vs {exact}",
            e.total
        );
        // with a multiplier the volume term is lambda * area
        let e = energy(&u, &spec, 0.25, VolumeMode::Sharp);
        assert!((e.volume_term - 0.25 * std::f64::consts::PI).abs() < 0.02);
        assert_eq!(e.total, e.dirichlet + e.potential + e.volume_term);

        let zero = ScalarFieldGrid::zeros(Grid::centered(2, 0.25, 1.0));
        let e0 = energy(&zero, &spec, 0.25, VolumeMode::Sharp);
        assert_eq!(e0.total, 0.0);
        assert_eq!(e0.dirichlet, 0.0);
        assert_eq!(e0.potential, 0.0);
    }

    #[test]
    fn energy_nonnegative_without_potential() {
        let grid = Grid::centered(2, 0.2, 1.0);
        let zero_f = build_problem(&ProblemInputs {
            dim: 2,
            nonlinearity: ("constant_f".into(), vec![0.0]),
            matrix: ("identity".into(), vec![]),
            weight: ("constant_q".into(), vec![1.0]),
            volume_target: 1.0,
        })
        .unwrap();
        let u = ScalarFieldGrid::from_fn(grid, |x| (1.0 - x[0].abs()).max(0.0));
        let e = energy(&u, &zero_f, 0.0, VolumeMode::Sharp);
        assert!(e.total > 0.0);
    }

    #[test]
    fn gradient_at_zero_field_pushes_up() {
        // u = 0, f(x, 0) = 1: each node sees -2 h^n plus the layer force
        let grid = Grid::centered(2, 0.25, 1.0);
        let spec = torsion_spec(2);
        let u = ScalarFieldGrid::zeros(grid.clone());
        let delta = 0.1;
        let g = energy_gradient(&u, &spec, 0.0, delta);
        let w = grid.h * grid.h;
        for i in 1..grid.nodes_per_axis(0) - 1 {
            for j in 1..grid.nodes_per_axis(1) - 1 {
                assert!((g.at([i, j, 0]) + 2.0 * w).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn first_variation_zero_cases() {
        let grid = Grid::centered(2, 0.125, 1.0);
        let spec = torsion_spec(2);
        let zero_u = ScalarFieldGrid::zeros(grid.clone());
        let xi = VectorFieldGrid::from_fn(grid.clone(), |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let b = (1.0 - r2 / 0.25).max(0.0).powi(3);
            [b, -b, 0.0]
        });
        assert_eq!(first_variation(&zero_u, &xi, &spec, 0.25).unwrap(), 0.0);
        let zero_xi = VectorFieldGrid::zeros(grid.clone());
        let u = ScalarFieldGrid::from_fn(grid, |x| (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0));
        assert_eq!(first_variation(&u, &zero_xi, &spec, 0.25).unwrap(), 0.0);
    }

    #[test]
    fn first_variation_rejects_margin_violation() {
        let grid = Grid::centered(2, 0.25, 1.0);
        let spec = torsion_spec(2);
        let u = ScalarFieldGrid::zeros(grid.clone());
        let xi = VectorFieldGrid::from_fn(grid, |_| [1.0, 0.0, 0.0]);
        assert!(matches!(
            first_variation(&u, &xi, &spec, 0.0),
            Err(Error::MarginViolation)
        ));
    }

    #[test]
    fn first_variation_matches_flow_difference() {
        // transport u along the flow of xi and compare energies: the pairing
        // must match (E(u o Phi_t) - E(u)) / t to first order. Both fields
        // are sampled from closed forms so no interpolation bias divides by t.
        let h = 1.0 / 64.0;
        let grid = Grid::centered(2, h, 1.0);
        let spec = torsion_spec(2);
        let profile = |x: Vec3| -> f64 {
            let r2 = x[0] * x[0] + x[1] * x[1];
            (0.36 - r2).max(0.0)
        };
        let u = ScalarFieldGrid::from_fn(grid.clone(), profile);
        let bump = |x: Vec3| -> f64 {
            let r2 = (x[0] - 0.1) * (x[0] - 0.1) + x[1] * x[1];
            (1.0 - r2 / 0.16).max(0.0).powi(3)
        };
        let xi = VectorFieldGrid::from_fn(grid.clone(), |x| [bump(x), 0.5 * bump(x), 0.0]);
        let lambda = 0.3;

        let dv = first_variation(&u, &xi, &spec, lambda).unwrap();

        let fd_at = |t: f64| {
            let u_t = ScalarFieldGrid::from_fn(grid.clone(), |x| {
                // inverse flow to first order: Phi_t(x) = x - t xi(x) + O(t^2)
                profile([x[0] - t * bump(x), x[1] - t * 0.5 * bump(x), 0.0])
            });
            let e0 = energy(&u, &spec, lambda, VolumeMode::Sharp).total;
            let e1 = energy(&u_t, &spec, lambda, VolumeMode::Sharp).total;
            (e1 - e0) / t
        };
        let fd = fd_at(0.02);
        assert!(
            (dv - fd).abs() < 0.1 * dv.abs().max(0.5),
            "variation {dv} vs flow difference {fd}"
        );
    }

    #[test]
    fn embed_preserves_values_at_shared_nodes() {
        let small = Grid::centered(2, 0.25, 1.0);
        let big = Grid::centered(2, 0.25, 2.0);
        let u = ScalarFieldGrid::from_fn(small, |x| (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0));
        let v = u.embed_in(big);
        assert!((v.value_at([0.25, 0.5, 0.0]) - u.value_at([0.25, 0.5, 0.0])).abs() < 1e-14);
        assert_eq!(v.value_at([1.9, 1.9, 0.0]), 0.0);
    }
}
