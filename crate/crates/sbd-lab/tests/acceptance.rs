//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbd_lab::corpus;
use sbd_lab::density_pipeline::{adjacent_strip_agreement, approximate_thm11, Approximation, PipelineOptions, ReportRow, Theorem};
use sbd_lab::expr::PolyVec;
use sbd_lab::extension::{measure_extension_constants, trace_gap, ExtensionRatios, ReflectionParams, Side};
use sbd_lab::geometry::{v2, Aabb, Rect, Segment, M2, V2};
use sbd_lab::mollify::{commutator_bounds, Mollifier};
use sbd_lab::phase_field::{constants, gamma_check, minimize_f_eps, GammaConfig, MinimizeOptions, Psi};
use sbd_lab::rigid_fit::{fit_rigid, RigidMotion};
use sbd_lab::rough_approx::classify_nodes;
use sbd_lab::sbd_field::{frob, sym_tensor_product, Field, JumpPiece, PolyField, SbdField};
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let dt = t.elapsed();
    if let Some(l) = limit {
        if dt > l {
            o.pass = false;
            o.detail.push_str(&format!("; runtime {dt:.2?} over {l:?}"));
            return o;
        }
    }
    o.detail.push_str(&format!("; {dt:.2?}"));
    o
}

fn c1_constants() -> Outcome {
    let c = constants(Psi::Linear, 2.0).expect("constants");
    let pass = c.b == 2.0 && (c.a - 8.0 / 3.0).abs() <= 1e-9;
    Outcome { pass, detail: format!("a = {:.15}, b = {}", c.a, c.b) }
}

fn c2_gamma() -> Outcome {
    let cfg = GammaConfig::benchmark();
    let rows = gamma_check(&cfg, &MinimizeOptions::default()).expect("sweep");
    let errs: Vec<f64> = rows.iter().map(|r| r.rel_error).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = *errs.last().expect("rows");
    let h_ok = rows.iter().all(|r| (cfg.h_rule.spacing(r.eps).expect("h") - r.eps / 8.0).abs() < 1e-15);
    let f_ok = rows.iter().all(|r| (r.f_limit - 14.0 / 3.0).abs() < 1e-9);
    let errs_s: Vec<String> = errs.iter().map(|e| format!("{e:.4}")).collect();
    Outcome {
        pass: decreasing && last <= 0.05 && h_ok && f_ok,
        detail: format!("rel_error over eps 2^-3..2^-6 = [{}], final {last:.4} (limit 0.05), decreasing {decreasing}", errs_s.join(", ")),
    }
}

fn fixed_point_metrics(r: &ReportRow) -> [f64; 9] {
    [
        r.bd_error,
        r.l1_error,
        r.strain_lp_error,
        r.jump_symmdiff,
        r.jump_created,
        r.jump_amp_error,
        r.excluded_area,
        r.excluded_lp_error,
        r.silent_gamma_hat,
    ]
}

fn c3_fixed_point() -> Outcome {
    let f = corpus::field("piecewise-rigid-flat").expect("corpus");
    let mut worst: f64 = 0.0;
    for k in [16, 32] {
        let (_, r) = approximate_thm11(&f, k, 0.1, 0.1, 2.0).expect("thm11");
        worst = fixed_point_metrics(&r).iter().fold(worst, |m, x| m.max(*x));
    }
    Outcome { pass: worst <= 1e-6, detail: format!("largest metric {worst:.3e} (limit 1e-6)") }
}

fn c4_sweep() -> Outcome {
    let f = corpus::field("curved-crack-strained").expect("corpus");
    let rows: Vec<ReportRow> = [16, 32, 64, 128].iter().map(|&k| approximate_thm11(&f, k, 0.1, 0.1, 2.0).expect("thm11").1).collect();
    let (a, b) = (&rows[0], &rows[3]);
    let ratios = [
        ("bd", a.bd_error / b.bd_error),
        ("strain", a.strain_lp_error / b.strain_lp_error),
        ("symmdiff", a.jump_symmdiff / b.jump_symmdiff),
        ("amp", a.jump_amp_error / b.jump_amp_error),
        ("area(E_k)", a.excluded_area / b.excluded_area),
    ];
    let pass = ratios.iter().all(|(_, r)| *r >= 4.0);
    let s: Vec<String> = ratios.iter().map(|(n, r)| format!("{n} {r:.2}x")).collect();
    Outcome { pass, detail: format!("k 16 -> 128: {}", s.join(", ")) }
}

fn full_corpus() -> Vec<(String, SbdField)> {
    let mut v: Vec<(String, SbdField)> = corpus::NAMES.iter().map(|n| (n.to_string(), corpus::field(n).expect("corpus"))).collect();
    for (i, s) in corpus::random_jump_corpus(10, 7).into_iter().enumerate() {
        v.push((format!("random-jump-{i}"), s.build().expect("random field")));
    }
    v
}

fn c5_classification() -> Outcome {
    let theta = 0.1;
    let mut checked = 0;
    let mut failures = Vec::new();
    for (name, f) in full_corpus() {
        for k in [8u32, 16, 32, 64] {
            let c = classify_nodes(&f, &f.bbox(), k, theta).expect("classify");
            let kf = k as f64;
            let count_ok = c.bad.len() as f64 <= c.jump_length * kf / theta;
            let area_ok = c.bad_region_area(None) <= 256.0 * c.jump_length / (kf * theta);
            if !(count_ok && area_ok) {
                failures.push(format!("{name} k={k}"));
            }
            checked += 1;
        }
    }
    Outcome { pass: failures.is_empty(), detail: format!("{checked} (field, k) pairs, violations: {failures:?}") }
}

fn c6_commutator() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut fails = 0;
    for spec in corpus::random_jump_corpus(10, 11) {
        let f = spec.build().expect("random field");
        let pieces = f.jump_pieces();
        for k in [8.0, 16.0, 32.0] {
            let m = Mollifier::new(k).expect("mollifier");
            for q in [&pieces[0], &pieces[pieces.len() / 2], &pieces[pieces.len() - 1]] {
                for c in commutator_bounds(&f, &m, q.seg.midpoint(), &[1.5, 2.0, 3.0], 1.0 / (8.0 * k)) {
                    checked += 1;
                    if !c.holds {
                        fails += 1;
                    }
                    if c.rhs > 0.0 {
                        worst = worst.max(c.lhs / c.rhs);
                    }
                }
            }
        }
    }
    Outcome { pass: fails == 0, detail: format!("{checked} checks, {fails} violations, largest lhs/rhs {worst:.3}") }
}

fn ratio_vec(r: &ExtensionRatios) -> [f64; 4] {
    [r.l1, r.jump_length, r.jump_energy, r.strain]
}

/// `x -> inner(origin + (x - origin) / scale)`: the same configuration shrunk about `origin`.
struct Zoom<'a> {
    inner: &'a SbdField,
    origin: V2,
    scale: f64,
}

impl Zoom<'_> {
    fn pull(&self, x: V2) -> V2 {
        self.origin + (x - self.origin) / self.scale
    }

    fn push(&self, y: V2) -> V2 {
        self.origin + (y - self.origin) * self.scale
    }

    fn pull_box(&self, b: &Aabb) -> Aabb {
        Aabb::new(self.pull(b.min), self.pull(b.max))
    }
}

impl Field for Zoom<'_> {
    fn value(&self, x: V2) -> V2 {
        self.inner.value(self.pull(x))
    }
    fn gradient(&self, x: V2) -> M2 {
        self.inner.gradient(self.pull(x)) / self.scale
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        let mut v = Vec::new();
        self.inner.jumps(&self.pull_box(region), &mut v);
        out.extend(v.into_iter().map(|p| JumpPiece::new(Segment::new(self.push(p.seg.a), self.push(p.seg.b)), p.normal)));
    }
    fn kinks(&self, region: &Aabb, out: &mut Vec<Segment>) {
        let mut v = Vec::new();
        self.inner.kinks(&self.pull_box(region), &mut v);
        out.extend(v.into_iter().map(|s| Segment::new(self.push(s.a), self.push(s.b))));
    }
}

fn c7_extension() -> Outcome {
    let params = ReflectionParams::default();
    // trace continuity on smooth fields
    let mut gap: f64 = 0.0;
    let smooth: Vec<SbdField> = corpus::random_smooth_corpus(10, 3).into_iter().map(|s| s.build().expect("smooth")).collect();
    for f in &smooth {
        for side in [Side::Top, Side::Bottom, Side::Left, Side::Right] {
            gap = gap.max(trace_gap(f, &Rect::unit_square(), side, params, 400).expect("trace"));
        }
    }
    // q mu + (1 - q) nu = -1 in floating point, for the default and a few dyadic pairs
    let q_exact = [(0.25, 0.5), (0.125, 0.5), (0.25, 0.75), (0.5, 0.75)]
        .iter()
        .all(|&(mu, nu)| ReflectionParams::new(mu, nu).expect("params").identity_value() == -1.0);
    // ratios on the unit square and on the same configurations shrunk by 4
    let mut corpus_fields = smooth;
    corpus_fields.extend(corpus::random_jump_corpus(10, 5).into_iter().map(|s| s.build().expect("jump")));
    corpus_fields.extend(corpus::NAMES.iter().map(|n| corpus::field(n).expect("corpus")));
    let origin = v2(0.5, 0.5);
    let mut max_at = [[0.0f64; 4]; 2];
    for (si, scale) in [1.0, 0.25].into_iter().enumerate() {
        let z0 = origin + (v2(0.0, 0.0) - origin) * scale;
        let z1 = origin + (v2(1.0, 1.0) - origin) * scale;
        let r = Rect::axis_aligned(z0, z1);
        for f in &corpus_fields {
            let z = Zoom { inner: f, origin, scale };
            for side in [Side::Top, Side::Bottom] {
                let m = measure_extension_constants(&z, &r, side, params, scale / 64.0, 2.0).expect("ratios");
                for (slot, v) in max_at[si].iter_mut().zip(ratio_vec(&m)) {
                    *slot = slot.max(v);
                }
            }
        }
    }
    let drift: Vec<f64> = (0..4).map(|i| (max_at[1][i] - max_at[0][i]).abs() / max_at[0][i].max(f64::MIN_POSITIVE)).collect();
    let bounded = max_at.iter().flatten().all(|v| v.is_finite());
    let drift_ok = drift.iter().all(|d| *d <= 0.2);
    Outcome {
        pass: gap <= 1e-8 && q_exact && bounded && drift_ok,
        detail: format!(
            "trace gap {gap:.2e}, q-identity {q_exact}, constants (l1, len, energy, strain) {:.3?} / {:.3?}, drift {:.3?}",
            max_at[0], max_at[1], drift
        ),
    }
}

fn c8_thm12() -> Outcome {
    let smooth = corpus::field("smooth-poly").expect("corpus");
    let mut created: f64 = 0.0;
    for k in [16, 32, 64] {
        let a = Approximation::build(&smooth, Theorem::Thm12, k, 0.1, PipelineOptions::default()).expect("thm12");
        created = created.max(a.report(2.0).expect("report").jump_created);
    }
    let jump = corpus::field("pure-jump").expect("corpus");
    let bd: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&k| Approximation::build(&jump, Theorem::Thm12, k, 0.1, PipelineOptions::default()).expect("thm12").report(2.0).expect("report").bd_error)
        .collect();
    let halving: Vec<f64> = bd.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = halving.iter().all(|r| (1.5..=2.5).contains(r));
    Outcome { pass: created == 0.0 && ok, detail: format!("smooth-poly created {created}, pure-jump bd ratios per doubling {halving:.3?}") }
}

fn c9_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut notes = Vec::new();
    let mut pass = true;

    // sym-product bounds |a||b|/sqrt2 <= |a (.) b| <= |a||b|
    let mut bad = 0;
    for _ in 0..10_000 {
        let a = v2(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let b = v2(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let n = frob(&sym_tensor_product(a, b));
        let ab = a.norm() * b.norm();
        if n > ab * (1.0 + 1e-12) || n < ab / 2f64.sqrt() * (1.0 - 1e-12) {
            bad += 1;
        }
    }
    pass &= bad == 0;
    notes.push(format!("sym-product {bad}/10000"));

    // rigid fit: idempotent and equivariant under added rigid motions
    let dom = Rect::unit_square();
    let cube = Rect::axis_aligned(v2(0.2, 0.3), v2(0.7, 0.8));
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = PolyVec::parse(&format!("({}*x^2 + {}*y, {}*x*y + {}*y^2 + {}*x + {})", c[0], c[1], c[2], c[3], c[4], c[5])).expect("poly");
        let r = fit_rigid(&SbdField::smooth(dom, 0.05, u.clone()), &cube, 2.0).expect("fit").motion;
        let again = fit_rigid(&SbdField::smooth(dom, 0.05, r.to_poly()), &cube, 2.0).expect("fit").motion;
        let (b, w) = (v2(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)), rng.gen_range(-2.0..2.0));
        let moved = u.add(&RigidMotion::new(b, w).to_poly());
        let t = fit_rigid(&SbdField::smooth(dom, 0.05, moved), &cube, 2.0).expect("fit").motion;
        worst = worst
            .max((again.b - r.b).norm())
            .max((again.omega - r.omega).abs())
            .max((t.b - r.b - b).norm())
            .max((t.omega - r.omega - w).abs());
    }
    pass &= worst <= 1e-10;
    notes.push(format!("rigid-fit {worst:.1e}"));

    // mollifier reproduces affine fields
    let m = Mollifier::new(8.0).expect("mollifier");
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let b = v2(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let a = M2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let f = PolyField(PolyVec::affine(b, &a));
        let x = v2(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0));
        worst = worst.max((m.convolve(&f, x) - f.value(x)).norm());
    }
    pass &= worst <= 1e-8;
    notes.push(format!("mollifier-affine {worst:.1e}"));

    // neighbouring strips agree below both faces
    let bent = corpus::crack_spec(&[(0.0, 0.5), (0.5, 0.53), (1.0, 0.5)], "(0.2*x^2, 0.1*x*y)", "(0.2*x^2 + 1, 0.1*x*y + 0.3*x)", "(1, 0.3*x)", 1.0 / 64.0)
        .build()
        .expect("bent");
    let mut pairs = 0;
    let mut gap: f64 = 0.0;
    for (f, eps) in [(&bent, 0.4), (&corpus::field("piecewise-rigid-flat").expect("corpus"), 0.1)] {
        for thm in [Theorem::Thm11, Theorem::Thm12, Theorem::Thm13] {
            let a = Approximation::build(f, thm, 32, eps, PipelineOptions::default()).expect("build");
            let r = adjacent_strip_agreement(&a);
            pairs += r.pairs;
            gap = gap.max(r.max_gap);
        }
    }
    pass &= pairs > 0 && gap <= 1e-10;
    notes.push(format!("adjacent-strips {pairs} pairs gap {gap:.1e}"));

    // alternating minimization never raises the energy
    let mut rises = 0;
    let mut runs = 0;
    let mut cfgs = vec![GammaConfig::benchmark()];
    let mut general = GammaConfig::benchmark();
    general.p = 3.0;
    general.psi = Psi::Power { scale: 1.0, exponent: 2.0 };
    cfgs.push(general);
    for cfg in &cfgs {
        for &eps in &cfg.eps_list {
            for start in [cfg.initial_state(eps), cfg.cracked_state(eps)] {
                let out = minimize_f_eps(start.expect("state"), &MinimizeOptions { max_outer: 100, ..Default::default() }).expect("minimize");
                rises += out.history.windows(2).filter(|w| w[1] > w[0] + 1e-12 * w[0].abs()).count();
                runs += 1;
            }
        }
    }
    pass &= rises == 0;
    notes.push(format!("energy-monotone {runs} runs, {rises} rises"));

    Outcome { pass, detail: notes.join(", ") }
}

fn main() {
    let criteria: Vec<(u32, &str, Option<Duration>, fn() -> Outcome)> = vec![
        (1, "cohesive constants", Some(Duration::from_secs(1)), c1_constants),
        (2, "1D gamma benchmark", Some(Duration::from_secs(60)), c2_gamma),
        (3, "fixed-point corpus", Some(Duration::from_secs(30)), c3_fixed_point),
        (4, "convergence sweep", Some(Duration::from_secs(300)), c4_sweep),
        (5, "rough classification bounds", None, c5_classification),
        (6, "commutator inequality", None, c6_commutator),
        (7, "extension lemma", None, c7_extension),
        (8, "one-sided jump creation", None, c8_thm12),
        (9, "invariant suite", None, c9_invariants),
    ];
    // optional criterion numbers on the command line restrict the run
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, limit, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        ran += 1;
        let o = timed(limit, run);
        println!("criterion {n} ({name}): {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
