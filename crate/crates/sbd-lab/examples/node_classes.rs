//! Good/bad lattice nodes for a jump field as k grows.
//!
//! `cargo run --release --example node_classes -- pure-jump 0.1`

use sbd_lab::corpus;
use sbd_lab::rough_approx::classify_nodes;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("pure-jump", |s| s.as_str());
    let theta: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let f = corpus::field(name).expect("corpus field");
    println!("H1(J) = {:.4}", f.jump_length());
    for k in [8, 16, 32, 64, 128] {
        let c = classify_nodes(&f, &f.bbox(), k, theta).expect("classify");
        let area = c.bad_region_area(Some(&f.bbox()));
        println!("k={k:4} nodes={:6} bad={:5} bad*k={:8.2} bad_area={:.4e}", c.nodes.len(), c.bad.len(), c.bad.len() as f64 / k as f64, area);
    }
}
