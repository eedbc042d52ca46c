//! k-sweep of the glued approximation on a corpus field.
//!
//! `cargo run --release --example density_sweep -- curved-crack-strained 11 16,32,64`

use sbd_lab::corpus;
use sbd_lab::density_pipeline::{Approximation, PipelineOptions, Theorem};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("curved-crack-strained", |s| s.as_str());
    let thm = args.get(2).and_then(|s| s.parse().ok()).and_then(Theorem::from_code).unwrap_or(Theorem::Thm11);
    let ks: Vec<u32> = args.get(3).map_or("16,32".into(), |s| s.clone()).split(',').map(|s| s.parse().expect("k")).collect();
    let f = corpus::field(name).expect("corpus field");
    for k in ks {
        let t0 = Instant::now();
        let a = Approximation::build(&f, thm, k, 0.1, PipelineOptions::default()).expect("construction");
        let t1 = t0.elapsed();
        let r = a.report(2.0).expect("report");
        println!(
            "k={k:4} cubes={} strips={} build={:.2?} total={:.2?}\n  bd={:.3e} l1={:.3e} strain={:.3e} symm={:.3e} created={:.3e} amp={:.3e} excl={:.3e} excl_lp={:.3e} silent={:.3e} unc={:.3e}",
            r.cubes,
            r.strips,
            t1,
            t0.elapsed(),
            r.bd_error,
            r.l1_error,
            r.strain_lp_error,
            r.jump_symmdiff,
            r.jump_created,
            r.jump_amp_error,
            r.excluded_area,
            r.excluded_lp_error,
            r.silent_gamma_hat,
            r.uncovered_length
        );
    }
}
