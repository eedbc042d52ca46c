//! Reflection across a rectangle face: trace gap and extension ratios.
//!
//! `cargo run --release --example reflection -- 0.25 0.5`

use sbd_lab::corpus;
use sbd_lab::extension::{measure_extension_constants, trace_gap, ReflectionParams, Side};
use sbd_lab::geometry::{v2, Rect};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mu = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let nu = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let params = ReflectionParams::new(mu, nu).expect("need 0 < mu < nu < 1");
    println!("mu={mu} nu={nu} q={:.4} q*mu+(1-q)*nu={:.3e}", params.q, params.identity_value());

    let r = Rect::axis_aligned(v2(0.0, 0.25), v2(1.0, 0.75));
    for name in ["smooth-poly", "pure-jump", "curved-crack-strained", "piecewise-rigid-flat"] {
        let f = corpus::field(name).expect("corpus field");
        for side in [Side::Top, Side::Bottom] {
            match (trace_gap(&f, &r, side, params, 64), measure_extension_constants(&f, &r, side, params, 1.0 / 128.0, 2.0)) {
                (Ok(gap), Ok(m)) => println!(
                    "{name:22} {side:?}: gap={gap:.2e} l1={:.3} len={:.3} energy={:.3} strain={:.3}",
                    m.l1, m.jump_length, m.jump_energy, m.strain
                ),
                (Err(e), _) | (_, Err(e)) => println!("{name:22} {side:?}: {e}"),
            }
        }
    }
}
