// Scratch driver: full constrained solve with stderr progress.
use fb_core::problem::{build_problem, ProblemInputs};
use fb_core::solve::{solve_constrained, SolverConfig};

fn main() {
    let h: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0 / 32.0);
    let spec = build_problem(&ProblemInputs {
        dim: 2,
        nonlinearity: ("constant_f".into(), vec![1.0]),
        matrix: ("identity".into(), vec![]),
        weight: ("constant_q".into(), vec![1.0]),
        volume_target: std::f64::consts::PI,
    })
    .unwrap();
    let cfg = SolverConfig::for_spec(&spec, h);
    let t0 = std::time::Instant::now();
    let run = solve_constrained(&spec, &cfg).unwrap();
    for row in run.trace.iter().take(4) {
        println!(
            "row outer {} seg {} step {} E {:.5} vol {:.5}",
            row.outer, row.segment, row.step, row.energy, row.vol
        );
    }
    println!("...");
    let locked_rows: Vec<_> = run.trace.iter().filter(|r| r.outer == 1).collect();
    for row in locked_rows.iter().rev().take(4).rev() {
        println!(
            "locked row seg {} step {} E {:.5} vol {:.5}",
            row.segment, row.step, row.energy, row.vol
        );
    }
    let e = fb_core::grid::ops::energy(
        &run.field,
        &spec,
        0.0,
        fb_core::grid::VolumeMode::Sharp,
    );
    println!(
        "recomputed on final field: dir {:.5} pot {:.5} total {:.5}",
        e.dirichlet, e.potential, e.total
    );
    // support geometry: radius histogram of positive vs zero nodes
    let g = &run.field.grid;
    let mut r_pos_max: f64 = 0.0;
    let mut r_zero_min = f64::INFINITY;
    let mut pos = 0usize;
    let mut interior_zeros = 0usize;
    for l in 0..run.field.values.len() {
        let idx = g.node_unlin(l);
        let p = g.node_pos(idx);
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if run.field.values[l] > 0.0 {
            pos += 1;
            r_pos_max = r_pos_max.max(r);
        } else {
            r_zero_min = r_zero_min.min(r);
            if r < 0.95 {
                interior_zeros += 1;
            }
        }
    }
    println!(
        "support: {} positive nodes ({}*h^2={:.5}), r_pos_max {:.4}, r_zero_min {:.4}, zeros inside r<0.95: {}",
        pos,
        pos,
        pos as f64 * g.h * g.h,
        r_pos_max,
        r_zero_min,
        interior_zeros
    );
    println!(
        "h={h}: lambda {:.5} vol {:.5} (target {:.5}) energy {:.5} sup {:.4} converged {} diverged {} outer evals {} trace rows {} wall {:.1}s",
        run.lambda,
        run.vol_q,
        std::f64::consts::PI,
        run.energy.base_energy(),
        run.field.max_value(),
        run.converged,
        run.diverged,
        run.trace.last().map(|r| r.outer).unwrap_or(0),
        run.trace.len(),
        t0.elapsed().as_secs_f64()
    );
}
