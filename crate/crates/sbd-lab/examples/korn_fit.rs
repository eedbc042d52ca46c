//! Rigid fits on shrinking cubes around a crack, with the measured Korn-Poincare constants.
//!
//! `cargo run --release --example korn_fit -- curved-crack-strained 3`

use sbd_lab::corpus;
use sbd_lab::geometry::{v2, Aabb};
use sbd_lab::rigid_fit::{check_korn_poincare_field, fit_rigid_field};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("curved-crack-strained", |s| s.as_str());
    let p: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let f = corpus::field(name).expect("corpus field");
    let c = v2(0.5, 0.5);
    for r in [0.4, 0.2, 0.1, 0.05] {
        let cube = Aabb::around(c, r);
        let h = r / 32.0;
        let fit = fit_rigid_field(&f, &cube, h, p);
        let k = check_korn_poincare_field(&f, &cube, h, p);
        println!(
            "r={r:5.3} b=({:+.4}, {:+.4}) w={:+.4} l1_res={:.3e} lp_res={:.3e} exc_area={:.3e} C1={:.3} Cp={:.3}",
            fit.motion.b.x, fit.motion.b.y, fit.motion.omega, fit.l1_residual, fit.lp_residual, fit.exceptional_area, k.l1, k.lp
        );
    }
}
