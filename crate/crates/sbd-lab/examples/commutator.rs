//! Commutator estimate for the mollifier at a few scales and exponents.
//!
//! `cargo run --release --example commutator -- pure-jump`

use sbd_lab::corpus;
use sbd_lab::geometry::v2;
use sbd_lab::mollify::{commutator_bounds, Mollifier};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "pure-jump".into());
    let f = corpus::field(&name).expect("corpus field");
    let ps = [1.5, 2.0, 3.0];
    println!("mass of phi = {:.12}", Mollifier::mass_check());
    for k in [8.0, 16.0, 32.0] {
        let m = Mollifier::new(k).expect("k > 0");
        let reps = commutator_bounds(&f, &m, v2(0.25, 0.45), &ps, 1.0 / (8.0 * k));
        for (p, c) in ps.iter().zip(reps) {
            println!("k={k:3} p={p:3.1} lhs={:.4e} rhs={:.4e} ratio={:.3} |Eju|={:.4e}", c.lhs, c.rhs, c.lhs / c.rhs, c.jump_measure);
        }
    }
}
