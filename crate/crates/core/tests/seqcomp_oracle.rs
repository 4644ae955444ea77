mod common;

use nalgebra::{Complex as NComplex, Matrix3, Vector3};
use phasebal::seqcomp::{decompose, neg_seq_rows, reconstruct, zero_seq_rows, PhaseTriple};
use phasebal::Complex;
use rand::Rng;

/// Phase quantities from sequence quantities, `[a b c]ᵀ = A [0 + −]ᵀ`, inverted
/// numerically.
fn fortescue_inverse() -> Matrix3<NComplex<f64>> {
    let one = NComplex::new(1.0, 0.0);
    let a = NComplex::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let a2 = a * a;
    let m = Matrix3::new(one, one, one, one, a2, a, one, a, a2);
    m.try_inverse().expect("Fortescue matrix is invertible")
}

fn random_triple(r: &mut rand_chacha::ChaCha8Rng) -> PhaseTriple {
    let mut c = || Complex::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
    PhaseTriple::new(c(), c(), c())
}

#[test]
fn decomposition_matches_inverted_fortescue_matrix() {
    let inv = fortescue_inverse();
    let mut r = common::rng(31);
    for _ in 0..1000 {
        let x = random_triple(&mut r);
        let v = Vector3::new(x.a, x.b, x.c);
        let s = inv * v;
        let d = decompose(&x);
        assert!((d.zero - s[0]).norm() <= 1e-12);
        assert!((d.pos - s[1]).norm() <= 1e-12);
        assert!((d.neg - s[2]).norm() <= 1e-12);
        let back = reconstruct(&d);
        assert!((back.a - x.a).norm() + (back.b - x.b).norm() + (back.c - x.c).norm() <= 1e-12);
    }
}

#[test]
fn real_rows_match_complex_components() {
    let mut r = common::rng(32);
    let (nr, zr) = (neg_seq_rows(), zero_seq_rows());
    for _ in 0..200 {
        let x = random_triple(&mut r);
        let flat = [x.a.re, x.a.im, x.b.re, x.b.im, x.c.re, x.c.im];
        let dot = |row: &[f64; 6]| row.iter().zip(&flat).map(|(a, b)| a * b).sum::<f64>();
        let d = decompose(&x);
        assert!((dot(&nr[0]) - d.neg.re).abs() <= 1e-12 && (dot(&nr[1]) - d.neg.im).abs() <= 1e-12);
        assert!((dot(&zr[0]) - d.zero.re).abs() <= 1e-12 && (dot(&zr[1]) - d.zero.im).abs() <= 1e-12);
    }
}

#[test]
fn swapping_two_phases_swaps_positive_and_negative_magnitudes() {
    let x = PhaseTriple::balanced(1.0, 0.3);
    let swapped = PhaseTriple::new(x.a, x.c, x.b);
    let d = decompose(&swapped);
    assert!((d.neg.norm() - 1.0).abs() <= 1e-12);
    assert!(d.pos.norm() <= 1e-12 && d.zero.norm() <= 1e-12);
}
