//! Named test fields and seeded random families.

use crate::geometry::v2;
use crate::sbd_field::{DomainSpec, FieldError, FieldSpec, JumpSegSpec, SbdField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NAMES: [&str; 5] = ["piecewise-rigid-flat", "curved-crack-strained", "pure-jump", "smooth-poly", "boundary-trace"];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown corpus id {0:?} (known: piecewise-rigid-flat, curved-crack-strained, pure-jump, smooth-poly, boundary-trace)")]
    Unknown(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

const H: f64 = 1.0 / 256.0;

fn unit() -> DomainSpec {
    DomainSpec { min: [0.0, 0.0], max: [1.0, 1.0] }
}

/// Polyline crack from the left edge to the right edge with `[u] = amp`
/// (upper minus lower) on every segment.
pub fn crack_spec(pts: &[(f64, f64)], below: &str, above: &str, amp: &str, h: f64) -> FieldSpec {
    let jump_segments = pts
        .windows(2)
        .map(|w| {
            let d = v2(w[1].0 - w[0].0, w[1].1 - w[0].1).normalize();
            JumpSegSpec { p0: [w[0].0, w[0].1], p1: [w[1].0, w[1].1], normal: [-d.y, d.x], amplitude_expr: amp.into() }
        })
        .collect();
    FieldSpec { domain: unit(), components: vec![below.into(), above.into()], jump_segments, h }
}

pub fn smooth_spec(u: &str, h: f64) -> FieldSpec {
    FieldSpec { domain: unit(), components: vec![u.into()], jump_segments: Vec::new(), h }
}

/// Field spec of a named corpus entry.
pub fn spec(name: &str) -> Result<FieldSpec, CorpusError> {
    Ok(match name {
        "piecewise-rigid-flat" => crack_spec(
            &[(0.0, 0.5), (1.0, 0.5)],
            "(0.1 - 0.2*y, 0.05 + 0.2*x)",
            "(1.1 - 0.2*y, 0.05 + 0.2*x)",
            "(1, 0)",
            H,
        ),
        "curved-crack-strained" => crack_spec(
            &[(0.0, 0.42), (0.3, 0.52), (0.6, 0.45), (1.0, 0.55)],
            "(0.3*x^2 + 0.1*x*y, 0.2*y^2 - 0.15*x*y + 0.05*x)",
            "(0.3*x^2 + 0.1*x*y + 0.5 + 0.3*x, 0.2*y^2 - 0.15*x*y + 0.05*x + 0.2 + 0.2*y)",
            "(0.5 + 0.3*x, 0.2 + 0.2*y)",
            H,
        ),
        "pure-jump" => crack_spec(&[(0.0, 0.3), (0.5, 0.6), (1.0, 0.35)], "(0, 0)", "(1, 0.5)", "(1, 0.5)", H),
        "smooth-poly" => smooth_spec("(0.1*x^4 - 0.2*x^2*y^2 + 0.05*y^3 + 0.1*x, 0.3*x*y^3 - 0.1*y^4 + 0.2*x^2)", H),
        "boundary-trace" => smooth_spec("(1 + 0.2*x - 0.1*y^2, 0.5 + 0.3*x*y)", H),
        _ => return Err(CorpusError::Unknown(name.into())),
    })
}

pub fn field(name: &str) -> Result<SbdField, CorpusError> {
    Ok(spec(name)?.build()?)
}

/// The named fields that carry a jump.
pub fn jump_fields() -> Vec<(&'static str, SbdField)> {
    ["piecewise-rigid-flat", "curved-crack-strained", "pure-jump"].iter().map(|n| (*n, field(n).expect("corpus builds"))).collect()
}

fn coef<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    (rng.gen::<f64>() * 2.0 - 1.0) * scale
}

fn fmt(c: f64) -> String {
    format!("{c:.6}")
}

fn random_quadratic<R: Rng>(rng: &mut R, scale: f64) -> String {
    let mut comp = || {
        format!(
            "{} + {}*x + {}*y + {}*x^2 + {}*x*y + {}*y^2",
            fmt(coef(rng, scale)),
            fmt(coef(rng, scale)),
            fmt(coef(rng, scale)),
            fmt(coef(rng, scale)),
            fmt(coef(rng, scale)),
            fmt(coef(rng, scale))
        )
    };
    let a = comp();
    let b = comp();
    format!("({a}, {b})")
}

/// Seeded fields with one polyline crack from left to right: quadratic
/// states and an affine amplitude.
pub fn random_jump_corpus(n: usize, seed: u64) -> Vec<FieldSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let inner = rng.gen_range(1..=3);
            let mut pts = vec![(0.0, rng.gen_range(0.3..0.7))];
            for i in 1..=inner {
                let x = i as f64 / (inner + 1) as f64 + coef(&mut rng, 0.05);
                pts.push((x, rng.gen_range(0.3..0.7)));
            }
            pts.push((1.0, rng.gen_range(0.3..0.7)));
            let below = random_quadratic(&mut rng, 0.3);
            let (a0, a1, a2) = (coef(&mut rng, 1.0), coef(&mut rng, 0.3), coef(&mut rng, 0.3));
            let (b0, b1, b2) = (coef(&mut rng, 1.0), coef(&mut rng, 0.3), coef(&mut rng, 0.3));
            let amp_x = format!("{} + {}*x + {}*y", fmt(a0), fmt(a1), fmt(a2));
            let amp_y = format!("{} + {}*x + {}*y", fmt(b0), fmt(b1), fmt(b2));
            let (bx, by) = below.trim_start_matches('(').trim_end_matches(')').split_once(", ").expect("two components");
            let above = format!("({bx} + {amp_x}, {by} + {amp_y})");
            crack_spec(&pts, &below, &above, &format!("({amp_x}, {amp_y})"), H)
        })
        .collect()
}

/// Seeded jump-free quadratic fields for the extension checks.
pub fn random_smooth_corpus(n: usize, seed: u64) -> Vec<FieldSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| smooth_spec(&random_quadratic(&mut rng, 0.5), H)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_fields_build() {
        for n in NAMES {
            let f = field(n).unwrap();
            assert!(f.h > 0.0, "{n}");
        }
        assert!(field("nope").is_err());
    }

    #[test]
    fn random_corpus_is_deterministic_and_valid() {
        let a = random_jump_corpus(10, 7);
        let b = random_jump_corpus(10, 7);
        assert_eq!(a, b);
        for s in &a {
            let f = s.build().unwrap();
            assert!(f.jump_length() > 1.0 - 1e-9);
        }
        for s in random_smooth_corpus(4, 3) {
            s.build().unwrap();
        }
    }
}
