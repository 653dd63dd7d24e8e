// Scratch driver for watching inner descent trajectories while tuning.
use fb_core::grid::{ops, Grid, VolumeMode};
use fb_core::problem::{build_problem, ProblemInputs};
use fb_core::solve::{initial_field, minimize_penalized, SolverConfig};

fn main() {
    let spec = build_problem(&ProblemInputs {
        dim: 2,
        nonlinearity: ("constant_f".into(), vec![1.0]),
        matrix: ("identity".into(), vec![]),
        weight: ("constant_q".into(), vec![1.0]),
        volume_target: std::f64::consts::PI,
    })
    .unwrap();
    let h = 1.0 / 32.0;
    let mut cfg = SolverConfig::for_spec(&spec, h);
    cfg.max_inner_steps = 2000;
    println!("lambda_hint = {}", cfg.lambda_hint);
    let grid = Grid::centered(2, h, cfg.box_half_width);
    let init = initial_field(&spec, &grid, 0, 42);
    let e0 = ops::energy(&init, &spec, 0.25, VolumeMode::Smoothed(4.0 * h));
    println!(
        "init: vol {:.4} energy {:.4} sup {:.4}",
        e0.vol_q_raw,
        e0.total,
        init.max_value()
    );
    for lambda in [0.1, 0.2, 0.25, 0.3, 0.5] {
        match minimize_penalized(&spec, lambda, &init, &cfg) {
            Ok(u) => {
                let e = ops::energy(&u, &spec, lambda, VolumeMode::Sharp);
                println!(
                    "lambda {lambda:.3}: vol {:.4} (pi = {:.4}) base energy {:.4} sup {:.4}",
                    e.vol_q_raw,
                    std::f64::consts::PI,
                    e.base_energy(),
                    u.max_value()
                );
            }
            Err(e) => println!("lambda {lambda:.3}: {e}"),
        }
    }
}
