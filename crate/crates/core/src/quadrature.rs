//! Adaptive Gauss–Kronrod quadrature on intervals and on R^n, the latter by
//! splitting into an adaptive radial integral and a product Gauss rule on the
//! unit sphere.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::beta::beta;

use crate::error::{Error, Result};
use crate::profiles::Dimension;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Integral estimate with its error bound and evaluation count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

/// One 15-point Kronrod panel, returning `(value, error)`.
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_k = kron.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kron += WGK[j] * (f1 + f2);
        abs_k += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kron * h;
    let mut err = ((kron - gauss) * h).abs();
    // QUADPACK-style sharpening of the raw Gauss/Kronrod difference
    if err != 0.0 {
        let mean = kron * 0.5;
        let mut asc = WGK[7] * (fc - mean).abs();
        for j in 0..7 {
            let dx = h * XGK[j];
            asc += WGK[j] * ((f(c - dx) - mean).abs() + (f(c + dx) - mean).abs());
        }
        asc *= h.abs();
        if asc != 0.0 {
            err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
        }
    }
    let round = 50.0 * f64::EPSILON * abs_k * h.abs();
    (value, err.max(round))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7K15 over `[breaks[0], breaks[last]]`, bisecting the
/// panel with the largest error until `error <= max(abs_tol, rel_tol |value|)`.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<QuadResult> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("quadrature breakpoints must be strictly increasing"));
    }
    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in breaks.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Panel { a: w[0], b: w[1], value: v, error: e });
    }
    let mut evals = 30 * heap.len();
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_panels {
            return Err(Error::Accuracy {
                requested: abs_tol.max(rel_tol * total.abs()),
                achieved: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // panel cannot be split further in floating point
            return Err(Error::Accuracy {
                requested: abs_tol.max(rel_tol * total.abs()),
                achieved: total_err,
            });
        }
        let (v1, e1) = gk15(&f, worst.a, m);
        let (v2, e2) = gk15(&f, m, worst.b);
        evals += 60;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: worst.b, value: v2, error: e2 });
    }
    // resum to shed accumulated update roundoff
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult { value, error, evals })
}

/// Decay data `|f(y)| <= c |y|^{-(n + delta)}` for `|y| >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub c: f64,
    pub delta: f64,
}

/// Radius beyond which the tail of an integrand with decay `tail` is below
/// `abs_tol / 10`.
pub fn tail_radius(dim: Dimension, tail: TailBound, abs_tol: f64) -> f64 {
    let r = (10.0 * dim.sphere_area() * tail.c / (tail.delta * abs_tol)).powf(1.0 / tail.delta);
    r.max(1.0)
}

/// Quadrature settings for integrals over R^n or a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadSpec {
    /// geometric radial panels between `inner_radius` and the truncation radius
    pub radial_panels: usize,
    /// Gauss points per polar angle; `2 * spherical_order` points in azimuth
    pub spherical_order: usize,
    pub truncation_radius: f64,
    /// first radial breakpoint; the scale on which the integrand varies
    pub inner_radius: f64,
    pub tol: f64,
    /// absolute error floor, for integrals that may vanish
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            radial_panels: 24,
            spherical_order: 8,
            truncation_radius: 1e4,
            inner_radius: 1.0,
            tol: 1e-10,
            abs_tol: 0.0,
            max_panels: 4000,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-3) {
            return Err(Error::param(format!("quadrature tolerance {} outside (0, 1e-3]", self.tol)));
        }
        if !(self.truncation_radius > self.inner_radius && self.inner_radius > 0.0) {
            return Err(Error::param("truncation radius must exceed the inner radius"));
        }
        if self.radial_panels == 0 || self.spherical_order == 0 {
            return Err(Error::param("panel counts must be positive"));
        }
        Ok(())
    }

    /// Sets the truncation radius from the tail bound, measured against
    /// `scale`, the expected magnitude of the integral.
    pub fn with_tail(mut self, dim: Dimension, tail: TailBound, scale: f64) -> Self {
        self.truncation_radius = tail_radius(dim, tail, self.tol * scale.abs().max(f64::MIN_POSITIVE));
        self
    }

    /// `0, inner, ..., truncation_radius` with geometric spacing after `inner`.
    pub fn radial_breaks(&self) -> Vec<f64> {
        let mut b = vec![0.0, self.inner_radius];
        let ratio = (self.truncation_radius / self.inner_radius).powf(1.0 / self.radial_panels as f64);
        for j in 1..=self.radial_panels {
            b.push(self.inner_radius * ratio.powi(j as i32));
        }
        *b.last_mut().expect("nonempty") = self.truncation_radius;
        b
    }
}

/// `∫_0^R g(r) dr` over the radial breakpoints of `spec`, tolerance relative.
pub fn integrate_radial(g: impl Fn(f64) -> f64, spec: &QuadSpec) -> Result<QuadResult> {
    spec.validate()?;
    integrate_adaptive(g, &spec.radial_breaks(), spec.abs_tol, spec.tol, spec.max_panels)
}

/// `∫_{R^n} g(|y|) dy = |S^{n-1}| ∫ g(r) r^{n-1} dr` for a radial integrand.
pub fn integrate_radial_rn(dim: Dimension, g: impl Fn(f64) -> f64, spec: &QuadSpec) -> Result<QuadResult> {
    let m = dim.n() as i32 - 1;
    let mut res = integrate_radial(|r| g(r) * r.powi(m), spec)?;
    res.value *= dim.sphere_area();
    res.error *= dim.sphere_area();
    Ok(res)
}

/// `|S^{n-1}| ∫_0^radius g(r) r^{n-1} dr` for a radial integrand on a ball,
/// with breakpoints clustered around each of the length `scales`.
pub fn integrate_ball_radial(
    dim: Dimension,
    g: impl Fn(f64) -> f64,
    radius: f64,
    scales: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult> {
    if !(radius > 0.0) {
        return Err(Error::param("ball radius must be positive"));
    }
    let mut pts: Vec<f64> = scales
        .iter()
        .flat_map(|&s| [s / 8.0, s / 2.0, s, 2.0 * s, 8.0 * s])
        .filter(|&v| v > 0.0 && v < radius)
        .collect();
    let smallest = pts.iter().cloned().fold(radius, f64::min);
    let mut v = smallest;
    while v < radius {
        pts.push(v);
        v *= 8.0;
    }
    pts.push(0.0);
    pts.push(radius);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let m = dim.n() as i32 - 1;
    let mut res = integrate_adaptive(|r| g(r) * r.powi(m), &pts, abs_tol / dim.sphere_area(), rel_tol, 4000)?;
    res.value *= dim.sphere_area();
    res.error *= dim.sphere_area();
    Ok(res)
}

/// Gauss rule for `∫_{-1}^{1} (1 - t^2)^a h(t) dt` (Gegenbauer weight) by
/// Golub–Welsch.
pub fn gauss_gegenbauer(m: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let mut jm = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let s = 2.0 * kf + 2.0 * a;
        let b2 = 4.0 * kf * (kf + a) * (kf + a) * (kf + 2.0 * a) / (s * s * (s + 1.0) * (s - 1.0));
        let b = b2.sqrt();
        jm[(k, k - 1)] = b;
        jm[(k - 1, k)] = b;
    }
    let mu0 = beta(0.5, a + 1.0);
    let eig = SymmetricEigen::new(jm);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // the weight is even: restore exact node/weight symmetry lost to the eigensolver
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let t = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-t, w);
        pairs[j] = (t, w);
    }
    if m % 2 == 1 {
        pairs[m / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Product quadrature on the unit sphere `S^{n-1}`: points and weights with
/// `Σ w = |S^{n-1}|`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Polar angles `θ_1..θ_{n-2}` use Gauss rules for the weights
    /// `sin^{n-1-j} θ_j`, the azimuth uses `2 * order` equispaced points.
    pub fn new(dim: Dimension, order: usize) -> Self {
        let n = dim.n();
        let naz = 2 * order;
        // grow from S^1 upward: x = (cos θ, sin θ · previous)
        let mut points = Vec::with_capacity(naz);
        let mut weights = Vec::with_capacity(naz);
        for j in 0..naz {
            let phi = 2.0 * PI * (j as f64 + 0.5) / naz as f64;
            points.push(vec![phi.cos(), phi.sin()]);
            weights.push(2.0 * PI / naz as f64);
        }
        for m in 1..=(n - 2) {
            // lifting S^m from S^{m-1}: weight sin^m θ dθ = (1 - t^2)^{(m-1)/2} dt
            let (t, w) = gauss_gegenbauer(order, (m as f64 - 1.0) / 2.0);
            let mut np = Vec::with_capacity(points.len() * order);
            let mut nw = Vec::with_capacity(points.len() * order);
            for (ti, wi) in t.iter().zip(&w) {
                let st = (1.0 - ti * ti).sqrt();
                for (p, pw) in points.iter().zip(&weights) {
                    let mut q = Vec::with_capacity(p.len() + 1);
                    q.push(*ti);
                    q.extend(p.iter().map(|v| st * v));
                    np.push(q);
                    nw.push(wi * pw);
                }
            }
            points = np;
            weights = nw;
        }
        Self { points, weights }
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

/// `∫_{R^n} f(y) dy` by an adaptive radial integral of spherical means.
///
/// The angular rule is fixed, so the reported error covers the radial and
/// truncation parts only.
pub fn integrate_rn(dim: Dimension, f: impl Fn(&[f64]) -> f64, spec: &QuadSpec) -> Result<QuadResult> {
    spec.validate()?;
    let rule = SphereRule::new(dim, spec.spherical_order);
    let m = dim.n() as i32 - 1;
    let buf = std::cell::RefCell::new(vec![0.0; dim.n()]);
    integrate_radial(
        |r| {
            let s = rule.integrate(|theta| {
                let mut y = buf.borrow_mut();
                for (yk, tk) in y.iter_mut().zip(theta) {
                    *yk = r * tk;
                }
                f(&y)
            });
            s * r.powi(m)
        },
        spec,
    )
}

/// `∫_{S^{n-1}} |θ_h|^q dθ = 2 π^{(n-1)/2} Γ((q+1)/2) / Γ((n+q)/2)`.
pub fn sphere_abs_moment(dim: Dimension, q: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let nf = dim.nf();
    2.0 * PI.powf((nf - 1.0) / 2.0) * gamma((q + 1.0) / 2.0) / gamma((nf + q) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn gk15_exact_for_polynomials() {
        let (v, _) = gk15(&|x: f64| x.powi(20) - 3.0 * x.powi(7), -1.0, 2.0);
        assert_relative_eq!(v, (2f64.powi(21) + 1.0) / 21.0 - 3.0 * (256.0 - 1.0) / 8.0, max_relative = 1e-13);
        let (_, e) = gk15(&|x: f64| x.powi(11), 0.0, 1.0);
        assert!(e < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = integrate_adaptive(|x: f64| x.powf(-0.5), &[0.0, 1.0], 0.0, 1e-10, 2000).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-9);
        assert!(r.error <= 1e-9);
    }

    #[test]
    fn budget_exhaustion_reports_accuracy() {
        let err = integrate_adaptive(|x: f64| (1.0 / x).sin(), &[1e-8, 1.0], 0.0, 1e-14, 8).unwrap_err();
        assert!(matches!(err, Error::Accuracy { .. }));
    }

    #[test]
    fn gegenbauer_rules() {
        let (t, w) = gauss_gegenbauer(5, 0.0);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(t[4], 0.906_179_845_938_664, max_relative = 1e-12);
        // ∫ (1-t^2)^{1/2} t^2 dt = π/8
        let (t, w) = gauss_gegenbauer(4, 0.5);
        let s: f64 = t.iter().zip(&w).map(|(x, v)| v * x * x).sum();
        assert_relative_eq!(s, PI / 8.0, max_relative = 1e-13);
    }

    #[test]
    fn sphere_rule_moments() {
        for n in 3..=5 {
            let d = dim(n);
            let rule = SphereRule::new(d, 6);
            assert_relative_eq!(rule.weights.iter().sum::<f64>(), d.sphere_area(), max_relative = 1e-13);
            for p in &rule.points {
                assert_relative_eq!(p.iter().map(|v| v * v).sum::<f64>(), 1.0, max_relative = 1e-14);
            }
            for h in 0..n {
                let m2 = rule.integrate(|x| x[h] * x[h]);
                assert_relative_eq!(m2, d.sphere_area() / n as f64, max_relative = 1e-12);
                assert_relative_eq!(rule.integrate(|x| x[h].powi(4)), sphere_abs_moment(d, 4.0), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_in_r3() {
        let spec = QuadSpec { truncation_radius: 12.0, ..QuadSpec::default() };
        let r = integrate_rn(dim(3), |y| (-y.iter().map(|v| v * v).sum::<f64>()).exp(), &spec).unwrap();
        assert_relative_eq!(r.value, PI.powf(1.5), max_relative = 1e-10);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let d = dim(3);
        let spec = QuadSpec { truncation_radius: 1e2, tol: 1e-8, abs_tol: 1e-10, ..QuadSpec::default() };
        let r = integrate_rn(d, |y| y[0] * crate::profiles::standard_bubble(d, y).powi(2), &spec).unwrap();
        assert!(r.value.abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn tail_radius_meets_bound() {
        let d = dim(3);
        let t = TailBound { c: 2.0, delta: 2.0 };
        let r = tail_radius(d, t, 1e-8);
        let tail = d.sphere_area() * t.c * r.powf(-t.delta) / t.delta;
        assert_relative_eq!(tail, 1e-9, max_relative = 1e-12);
    }
}
