//! Epsilon sweep of the single-jump bar against its limit energy.

use sbd_lab::phase_field::{constants, gamma_check, GammaConfig, MinimizeOptions, Psi};
use std::time::Instant;

fn main() {
    let c = constants(Psi::Linear, 2.0).expect("constants");
    println!("a = {:.12}, b = {}", c.a, c.b);
    let cfg = GammaConfig::benchmark();
    let t = Instant::now();
    let rows = gamma_check(&cfg, &MinimizeOptions::default()).expect("sweep");
    println!("{:>10} {:>14} {:>10} {:>10} {:>6}", "eps", "energy", "F", "rel", "iters");
    for r in &rows {
        println!("{:>10.6} {:>14.10} {:>10.6} {:>10.6} {:>6}", r.eps, r.energy, r.f_limit, r.rel_error, r.iterations);
    }
    println!("{:.2?}", t.elapsed());
}
