//! Symmetrical components of three-phase phasors, referenced to phase a.
//!
//! `neg_seq` and `zero_seq` keep the 1/6 and 1/3 scalings of the unbalance
//! definitions used by the optimizer, so `neg_seq` is the usual Fortescue
//! negative-sequence component `(a + α²b + αc)/3` with `α = e^{j2π/3}`.

use serde::{Deserialize, Serialize};

use crate::netmodel::Complex;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTriple {
    pub a: Complex,
    pub b: Complex,
    pub c: Complex,
}

impl PhaseTriple {
    pub fn new(a: Complex, b: Complex, c: Complex) -> Self {
        PhaseTriple { a, b, c }
    }

    pub fn from_array(v: [Complex; 3]) -> Self {
        PhaseTriple { a: v[0], b: v[1], c: v[2] }
    }

    pub fn to_array(self) -> [Complex; 3] {
        [self.a, self.b, self.c]
    }

    /// Balanced positive-sequence set with phase a at `mag∠angle`.
    pub fn balanced(mag: f64, angle: f64) -> Self {
        let r = 2.0 * std::f64::consts::FRAC_PI_3;
        PhaseTriple {
            a: Complex::from_polar(mag, angle),
            b: Complex::from_polar(mag, angle - r),
            c: Complex::from_polar(mag, angle + r),
        }
    }

    pub fn scale(self, k: Complex) -> Self {
        PhaseTriple { a: self.a * k, b: self.b * k, c: self.c * k }
    }
}

impl std::ops::Add for PhaseTriple {
    type Output = PhaseTriple;
    fn add(self, o: PhaseTriple) -> PhaseTriple {
        PhaseTriple { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceTriple {
    pub zero: Complex,
    pub pos: Complex,
    pub neg: Complex,
}

/// `(2a − (1+j√3)b − (1−j√3)c) / 6`.
pub fn neg_seq(x: &PhaseTriple) -> Complex {
    let kb = Complex::new(1.0, SQRT3);
    let kc = Complex::new(1.0, -SQRT3);
    (2.0 * x.a - kb * x.b - kc * x.c) / 6.0
}

/// `(a + b + c) / 3`.
pub fn zero_seq(x: &PhaseTriple) -> Complex {
    (x.a + x.b + x.c) / 3.0
}

pub fn decompose(x: &PhaseTriple) -> SequenceTriple {
    let zero = zero_seq(x);
    let neg = neg_seq(x);
    SequenceTriple { zero, pos: x.a - zero - neg, neg }
}

/// Inverse of [`decompose`].
pub fn reconstruct(s: &SequenceTriple) -> PhaseTriple {
    let r = 2.0 * std::f64::consts::FRAC_PI_3;
    let alpha = Complex::from_polar(1.0, r);
    let alpha2 = Complex::from_polar(1.0, -r);
    PhaseTriple {
        a: s.zero + s.pos + s.neg,
        b: s.zero + alpha2 * s.pos + alpha * s.neg,
        c: s.zero + alpha * s.pos + alpha2 * s.neg,
    }
}

/// Real-linear form of [`neg_seq`]: rows give (re, im) as coefficients on
/// `(Re a, Im a, Re b, Im b, Re c, Im c)`.
pub fn neg_seq_rows() -> [[f64; 6]; 2] {
    let s = SQRT3 / 6.0;
    [
        [2.0 / 6.0, 0.0, -1.0 / 6.0, s, -1.0 / 6.0, -s],
        [0.0, 2.0 / 6.0, -s, -1.0 / 6.0, s, -1.0 / 6.0],
    ]
}

/// Real-linear form of [`zero_seq`], same layout as [`neg_seq_rows`].
pub fn zero_seq_rows() -> [[f64; 6]; 2] {
    let k = 1.0 / 3.0;
    [[k, 0.0, k, 0.0, k, 0.0], [0.0, k, 0.0, k, 0.0, k]]
}
