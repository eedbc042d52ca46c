//! |Eu| split and bd distances between corpus fields.
//!
//! `cargo run --release --example field_measures`

use sbd_lab::corpus;
use sbd_lab::sbd_field::{bd_distance, eu_measure};

fn main() {
    let names = ["smooth-poly", "pure-jump", "piecewise-rigid-flat", "curved-crack-strained"];
    let fields: Vec<_> = names.iter().map(|n| corpus::field(n).expect("corpus field")).collect();
    for (n, f) in names.iter().zip(&fields) {
        let m = eu_measure(f, &f.domain).expect("measure");
        println!("{n:24} H1(J)={:.4} |Eu|: abs={:.4e} jump={:.4e} total={:.4e}", f.jump_length() + 0.0, m.abs_cont, m.jump + 0.0, m.total);
    }
    println!();
    for (i, a) in fields.iter().enumerate() {
        let row: Vec<String> = fields.iter().map(|b| format!("{:9.4}", bd_distance(a, b).expect("bd"))).collect();
        println!("{:24}{}", names[i], row.join(""));
    }
}
