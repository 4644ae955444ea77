//! Convexification building blocks: sampling of the per-phase voltage region,
//! an affine least-squares fit of `1/V*`, the lower voltage-magnitude cut and
//! the exact linear reformulation of a binary-continuous product.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{Complex, Phase};

#[derive(Debug, Error, PartialEq)]
pub enum LinearizeError {
    #[error("degenerate voltage region: {0}")]
    DegenerateRegion(String),
    #[error("sampling grid needs at least 2 points per axis, got {n_mag}x{n_ang}")]
    Grid { n_mag: usize, n_ang: usize },
    #[error("least-squares fit needs at least 6 samples, got {0}")]
    TooFewSamples(usize),
    #[error("rank-deficient normal equations (condition estimate {0:.3e})")]
    RankDeficient(f64),
}

/// Polar box `[vm_min, vm_max] × [center − half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageRegion {
    pub vm_min: f64,
    pub vm_max: f64,
    pub center_angle: f64,
    pub half_width: f64,
}

impl VoltageRegion {
    pub fn new(vm_min: f64, vm_max: f64, center_angle: f64, half_width: f64) -> Result<Self, LinearizeError> {
        let r = VoltageRegion { vm_min, vm_max, center_angle, half_width };
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<(), LinearizeError> {
        if !(self.vm_min > 0.0 && self.vm_min < self.vm_max) {
            return Err(LinearizeError::DegenerateRegion(format!(
                "magnitudes [{}, {}]",
                self.vm_min, self.vm_max
            )));
        }
        if !(self.half_width > 0.0 && self.half_width < std::f64::consts::FRAC_PI_6) {
            return Err(LinearizeError::DegenerateRegion(format!(
                "half width {} rad outside (0, pi/6)",
                self.half_width
            )));
        }
        Ok(())
    }

    pub fn angle_min(&self) -> f64 {
        self.center_angle - self.half_width
    }

    pub fn angle_max(&self) -> f64 {
        self.center_angle + self.half_width
    }
}

/// Regular polar grid over the region, returned in rectangular form.
pub fn sample_region(r: &VoltageRegion, n_mag: usize, n_ang: usize) -> Result<Vec<Complex>, LinearizeError> {
    if n_mag < 2 || n_ang < 2 {
        return Err(LinearizeError::Grid { n_mag, n_ang });
    }
    r.check()?;
    let mut out = Vec::with_capacity(n_mag * n_ang);
    for i in 0..n_mag {
        let m = r.vm_min + (r.vm_max - r.vm_min) * i as f64 / (n_mag - 1) as f64;
        for k in 0..n_ang {
            let a = r.angle_min() + 2.0 * r.half_width * k as f64 / (n_ang - 1) as f64;
            out.push(Complex::from_polar(m, a));
        }
    }
    Ok(out)
}

/// `1/V* ≈ (kx·X + ky·Y + bx) + j(hx·X + hy·Y + by)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvConjFit {
    pub kx: f64,
    pub ky: f64,
    pub bx: f64,
    pub hx: f64,
    pub hy: f64,
    pub by: f64,
    pub max_err: f64,
}

impl InvConjFit {
    pub fn eval(&self, v: Complex) -> Complex {
        Complex::new(
            self.kx * v.re + self.ky * v.im + self.bx,
            self.hx * v.re + self.hy * v.im + self.by,
        )
    }
}

fn inv_conj(v: Complex) -> Complex {
    v / v.norm_sqr()
}

/// Least-squares affine fit of `1/V*` over `samples`; real and imaginary parts
/// are two independent 3-coefficient problems sharing one normal matrix.
pub fn fit_inverse_conjugate(samples: &[Complex]) -> Result<InvConjFit, LinearizeError> {
    if samples.len() < 6 {
        return Err(LinearizeError::TooFewSamples(samples.len()));
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs_re = Vector3::<f64>::zeros();
    let mut rhs_im = Vector3::<f64>::zeros();
    for &v in samples {
        let row = Vector3::new(v.re, v.im, 1.0);
        let target = inv_conj(v);
        normal += row * row.transpose();
        rhs_re += row * target.re;
        rhs_im += row * target.im;
    }
    let eig = normal.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= 1e12) {
        return Err(LinearizeError::RankDeficient(cond));
    }
    let chol = normal.cholesky().ok_or(LinearizeError::RankDeficient(cond))?;
    let re = chol.solve(&rhs_re);
    let im = chol.solve(&rhs_im);
    let mut fit = InvConjFit {
        kx: re[0],
        ky: re[1],
        bx: re[2],
        hx: im[0],
        hy: im[1],
        by: im[2],
        max_err: 0.0,
    };
    fit.max_err = samples
        .iter()
        .map(|&v| (fit.eval(v) - inv_conj(v)).norm())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Half-space `cx·X + cy·Y ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerVmCut {
    pub cx: f64,
    pub cy: f64,
    pub rhs: f64,
}

impl LowerVmCut {
    pub fn value(&self, v: Complex) -> f64 {
        self.cx * v.re + self.cy * v.im
    }

    pub fn holds(&self, v: Complex) -> bool {
        self.value(v) >= self.rhs
    }
}

/// Projection of `V` on the region's center direction bounded below by
/// `vm_min`; any phasor satisfying it has `|V| ≥ vm_min`.
pub fn lower_vm_cut(region: &VoltageRegion, vm_min: f64) -> LowerVmCut {
    LowerVmCut {
        cx: region.center_angle.cos(),
        cy: region.center_angle.sin(),
        rhs: vm_min,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductBounds {
    pub y_min: f64,
    pub y_max: f64,
}

impl ProductBounds {
    pub fn new(y_min: f64, y_max: f64) -> Self {
        debug_assert!(y_min <= y_max && y_min.is_finite() && y_max.is_finite());
        ProductBounds { y_min, y_max }
    }

    pub fn symmetric(m: f64) -> Self {
        ProductBounds::new(-m, m)
    }
}

/// `cx·x + cy·y + cz·z ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductCut {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub rhs: f64,
}

impl ProductCut {
    pub fn holds(&self, x: f64, y: f64, z: f64, tol: f64) -> bool {
        self.cx * x + self.cy * y + self.cz * z <= self.rhs + tol
    }
}

/// Linear rows making `z = x·y` exact for binary `x` and `y ∈ [y_min, y_max]`:
/// `x·y_min ≤ z ≤ x·y_max` and `(x−1)·y_max ≤ z − y ≤ (x−1)·y_min`.
pub fn bind_product(b: &ProductBounds) -> [ProductCut; 4] {
    [
        ProductCut { cx: b.y_min, cy: 0.0, cz: -1.0, rhs: 0.0 },
        ProductCut { cx: -b.y_max, cy: 0.0, cz: 1.0, rhs: 0.0 },
        ProductCut { cx: b.y_max, cy: 1.0, cz: -1.0, rhs: b.y_max },
        ProductCut { cx: -b.y_min, cy: -1.0, cz: 1.0, rhs: -b.y_min },
    ]
}

/// Parameters of the per-phase linearization regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub vm_min: f64,
    pub vm_max: f64,
    /// Angle centers for phases a, b, c (radians).
    pub centers: [f64; 3],
    pub half_width: f64,
    pub n_mag: usize,
    pub n_ang: usize,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            vm_min: 0.9,
            vm_max: 1.1,
            centers: Phase::ALL.map(Phase::nominal_angle),
            half_width: 3f64.to_radians(),
            n_mag: 15,
            n_ang: 15,
        }
    }
}

impl RegionParams {
    pub fn region(&self, phase: Phase) -> VoltageRegion {
        VoltageRegion {
            vm_min: self.vm_min,
            vm_max: self.vm_max,
            center_angle: self.centers[phase.index()],
            half_width: self.half_width,
        }
    }
}

/// One fit and one region per phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFits {
    pub regions: [VoltageRegion; 3],
    pub fits: [InvConjFit; 3],
}

impl PhaseFits {
    pub fn fit(params: &RegionParams) -> Result<PhaseFits, LinearizeError> {
        let regions = Phase::ALL.map(|p| params.region(p));
        let mut fits = Vec::with_capacity(3);
        for r in &regions {
            let samples = sample_region(r, params.n_mag, params.n_ang)?;
            fits.push(fit_inverse_conjugate(&samples)?);
        }
        Ok(PhaseFits {
            regions,
            fits: [fits[0], fits[1], fits[2]],
        })
    }

    pub fn get(&self, phase: Phase) -> &InvConjFit {
        &self.fits[phase.index()]
    }

    pub fn region(&self, phase: Phase) -> &VoltageRegion {
        &self.regions[phase.index()]
    }

    pub fn max_err(&self) -> f64 {
        self.fits.iter().map(|f| f.max_err).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn two_by_two_grid_is_corners() {
        let r = VoltageRegion::new(0.9, 1.1, 0.0, deg(3.0)).unwrap();
        let pts = sample_region(&r, 2, 2).unwrap();
        let expected = [
            Complex::from_polar(0.9, deg(-3.0)),
            Complex::from_polar(0.9, deg(3.0)),
            Complex::from_polar(1.1, deg(-3.0)),
            Complex::from_polar(1.1, deg(3.0)),
        ];
        assert_eq!(pts.len(), 4);
        for (p, e) in pts.iter().zip(expected) {
            assert!((p - e).norm() < 1e-15);
        }
    }

    #[test]
    fn grid_needs_two_points() {
        let r = VoltageRegion::new(0.9, 1.1, 0.0, deg(3.0)).unwrap();
        assert_eq!(sample_region(&r, 1, 5), Err(LinearizeError::Grid { n_mag: 1, n_ang: 5 }));
    }

    #[test]
    fn degenerate_region_rejected() {
        let r = VoltageRegion { vm_min: 1.0, vm_max: 1.0, center_angle: 0.0, half_width: deg(3.0) };
        assert!(matches!(sample_region(&r, 3, 3), Err(LinearizeError::DegenerateRegion(_))));
    }

    #[test]
    fn phase_b_samples_stay_in_sector() {
        let r = VoltageRegion::new(0.9, 1.1, deg(-120.0), deg(3.0)).unwrap();
        let pts = sample_region(&r, 5, 5).unwrap();
        assert_eq!(pts.len(), 25);
        for p in pts {
            let a = p.arg().to_degrees();
            assert!((-123.0 - 1e-9..=-117.0 + 1e-9).contains(&a), "{a}");
        }
    }

    #[test]
    fn identical_samples_rank_deficient() {
        let s = vec![Complex::new(1.0, 0.0); 10];
        assert!(matches!(fit_inverse_conjugate(&s), Err(LinearizeError::RankDeficient(_))));
    }

    #[test]
    fn collinear_samples_rank_deficient() {
        let s: Vec<Complex> = (0..10).map(|i| Complex::new(0.9 + 0.02 * i as f64, 0.0)).collect();
        assert!(matches!(fit_inverse_conjugate(&s), Err(LinearizeError::RankDeficient(_))));
    }

    #[test]
    fn fit_near_unity_reproduces_unity() {
        let r = VoltageRegion::new(0.9, 1.1, 0.0, deg(3.0)).unwrap();
        let fit = fit_inverse_conjugate(&sample_region(&r, 10, 10).unwrap()).unwrap();
        let one = Complex::new(1.0, 0.0);
        assert!((fit.eval(one) - one).norm() <= fit.max_err);
    }

    #[test]
    fn reported_max_err_bounds_every_sample() {
        let r = VoltageRegion::new(0.92, 1.08, deg(120.0), deg(4.0)).unwrap();
        let s = sample_region(&r, 12, 9).unwrap();
        let fit = fit_inverse_conjugate(&s).unwrap();
        for v in s {
            assert!((fit.eval(v) - v / v.norm_sqr()).norm() <= fit.max_err + 1e-15);
        }
    }

    #[test]
    fn lower_cut_coefficients() {
        let r = VoltageRegion::new(0.9, 1.1, 0.0, deg(3.0)).unwrap();
        assert_eq!(lower_vm_cut(&r, 0.9), LowerVmCut { cx: 1.0, cy: 0.0, rhs: 0.9 });
        let rb = VoltageRegion::new(0.9, 1.1, deg(-120.0), deg(3.0)).unwrap();
        let cut = lower_vm_cut(&rb, 0.9);
        assert!((cut.cx + 0.5).abs() < 1e-12);
        assert!((cut.cy + 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(cut.rhs, 0.9);
    }

    #[test]
    fn lower_cut_gap_at_sector_edge() {
        let hw = deg(3.0);
        for center in [0.0, deg(-120.0), deg(120.0)] {
            let r = VoltageRegion::new(0.9, 1.1, center, hw).unwrap();
            let cut = lower_vm_cut(&r, 0.9);
            for edge in [center - hw, center + hw] {
                let v = Complex::from_polar(0.9, edge);
                let gap = cut.rhs - cut.value(v);
                assert!((gap - 0.9 * (1.0 - hw.cos())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_binary_points_pin_z() {
        let cuts = bind_product(&ProductBounds::symmetric(1.0));
        let y = 0.7;
        let admissible = |x: f64, z: f64| cuts.iter().all(|c| c.holds(x, y, z, 0.0));
        assert!(admissible(0.0, 0.0));
        assert!(!admissible(0.0, 1e-9) && !admissible(0.0, -1e-9));
        assert!(admissible(1.0, 0.7));
        assert!(!admissible(1.0, 0.7 + 1e-9) && !admissible(1.0, 0.7 - 1e-9));
    }
}
