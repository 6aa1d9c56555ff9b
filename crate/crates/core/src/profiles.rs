//! Closed-form profiles: the standard bubble, its scaled copies, the kernel
//! functions of the linearized operator, and the non-power nonlinearity
//! `f_eps(u) = |u|^{p-1} u / ln(e + |u|)^eps`.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Space dimension `n >= 3` with the constants that appear in every integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    n: usize,
    critical: f64,
    p: f64,
    alpha: f64,
    sphere_area: f64,
}

impl Dimension {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::param(format!(
                "dimension n = {n} is not supported; the construction requires n >= 3"
            )));
        }
        let nf = n as f64;
        let critical = 2.0 * nf / (nf - 2.0);
        Ok(Self {
            n,
            critical,
            p: critical - 1.0,
            alpha: (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0),
            sphere_area: 2.0 * PI.powf(nf / 2.0) / gamma(nf / 2.0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Critical Sobolev exponent `2n/(n-2)`.
    pub fn critical_exponent(&self) -> f64 {
        self.critical
    }

    /// `p = 2* - 1`.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// `alpha_n = (n(n-2))^{(n-2)/4}`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Surface area `|S^{n-1}|` of the unit sphere in R^n.
    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    /// `(n-2)/2`, the scaling exponent of the bubble.
    pub fn half_nm2(&self) -> f64 {
        (self.nf() - 2.0) / 2.0
    }
}

/// One bubble of a tower: scale, center, sign, dilation and drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleParam {
    pub mu: f64,
    pub xi: Vec<f64>,
    pub sign: f64,
    pub d: f64,
    pub sigma: Vec<f64>,
}

impl BubbleParam {
    /// Plain positive bubble of scale `mu` centered at `xi`.
    pub fn new(mu: f64, xi: Vec<f64>) -> Self {
        let n = xi.len();
        Self {
            mu,
            xi,
            sign: 1.0,
            d: 1.0,
            sigma: vec![0.0; n],
        }
    }

    /// Check the admissibility bounds `eta < d < 1/eta`, `|sigma| <= 1/eta`.
    pub fn check_bounds(&self, eta: f64) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::param(format!("bubble scale mu = {} must be positive", self.mu)));
        }
        if !(self.d > eta && self.d < 1.0 / eta) {
            return Err(Error::param(format!(
                "dilation d = {} outside ({eta}, {})",
                self.d,
                1.0 / eta
            )));
        }
        if norm(&self.sigma) > 1.0 / eta {
            return Err(Error::param(format!("drift |sigma| exceeds {}", 1.0 / eta)));
        }
        Ok(())
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub(crate) fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `U(y) = alpha_n (1 + |y|^2)^{-(n-2)/2}`.
pub fn standard_bubble(dim: Dimension, y: &[f64]) -> f64 {
    standard_bubble_radial(dim, norm(y))
}

pub fn standard_bubble_radial(dim: Dimension, r: f64) -> f64 {
    dim.alpha() * (1.0 + r * r).powf(-dim.half_nm2())
}

/// `U_{mu,xi}(x) = alpha_n mu^{(n-2)/2} / (mu^2 + |x - xi|^2)^{(n-2)/2}`.
pub fn bubble_at(dim: Dimension, b: &BubbleParam, x: &[f64]) -> Result<f64> {
    if !(b.mu > 0.0) {
        return Err(Error::param(format!("bubble scale mu = {} must be positive", b.mu)));
    }
    Ok(bubble_radial(dim, b.mu, dist_sq(x, &b.xi).sqrt()))
}

/// Centered bubble of scale `mu` evaluated at distance `r` from its center.
pub fn bubble_radial(dim: Dimension, mu: f64, r: f64) -> f64 {
    let a = dim.half_nm2();
    dim.alpha() * mu.powf(a) * (mu * mu + r * r).powf(-a)
}

/// Dilation mode `psi^0_{mu}` as a function of the distance `r` to the center.
pub fn psi0_radial(dim: Dimension, mu: f64, r: f64) -> f64 {
    let a = dim.half_nm2();
    let s = mu * mu + r * r;
    a * dim.alpha() * mu.powf(a) * (r * r - mu * mu) * s.powf(-dim.nf() / 2.0)
}

/// `mu d/dmu psi^0_{mu}` at distance `r`; the scale derivative of the dilation mode.
pub fn psi0_scale_derivative(dim: Dimension, mu: f64, r: f64) -> f64 {
    let a = dim.half_nm2();
    let nf = dim.nf();
    let m2 = mu * mu;
    let r2 = r * r;
    let s = m2 + r2;
    let bracket = a * (r2 - m2) * s - 2.0 * m2 * s - nf * m2 * (r2 - m2);
    a * dim.alpha() * mu.powf(a) * s.powf(-nf / 2.0 - 1.0) * bracket
}

/// Kernel functions `psi^h_{mu,xi}`: `h = 0` is the dilation mode, `h = 1..n`
/// the translation modes, with `psi^0 = mu dU/dmu` and `psi^h = mu dU/dxi_h`.
pub fn psi_at(dim: Dimension, h: usize, mu: f64, xi: &[f64], x: &[f64]) -> Result<f64> {
    if h > dim.n() {
        return Err(Error::param(format!("kernel index h = {h} outside 0..={}", dim.n())));
    }
    if !(mu > 0.0) {
        return Err(Error::param(format!("bubble scale mu = {mu} must be positive")));
    }
    let r2 = dist_sq(x, xi);
    if h == 0 {
        return Ok(psi0_radial(dim, mu, r2.sqrt()));
    }
    let nf = dim.nf();
    let s = mu * mu + r2;
    Ok((nf - 2.0) * dim.alpha() * mu.powf(nf / 2.0) * (x[h - 1] - xi[h - 1]) * s.powf(-nf / 2.0))
}

/// `ln(e + |u|)` without cancellation for tiny `|u|`.
pub(crate) fn log_e_plus(a: f64) -> f64 {
    1.0 + (a / E).ln_1p()
}

/// `f_eps(u) = |u|^{2*-2} u / [ln(e + |u|)]^eps`.
pub fn f_eps(dim: Dimension, u: f64, eps: f64) -> f64 {
    let a = u.abs();
    if a == 0.0 {
        return 0.0;
    }
    let base = a.powf(dim.p() - 1.0) * u;
    if eps == 0.0 {
        base
    } else {
        base * log_e_plus(a).powf(-eps)
    }
}

/// Derivative of [`f_eps`] in `u`:
/// `|u|^{p-1} L^{-eps} [p - eps |u| / ((e + |u|) L)]`, `L = ln(e + |u|)`.
pub fn f_eps_prime(dim: Dimension, u: f64, eps: f64) -> f64 {
    let a = u.abs();
    if a == 0.0 {
        return 0.0;
    }
    let p = dim.p();
    let pow = a.powf(p - 1.0);
    if eps == 0.0 {
        return p * pow;
    }
    let l = log_e_plus(a);
    pow * l.powf(-eps) * (p - eps * a / ((E + a) * l))
}

/// `ln(1 + ln(e^{1 - θ|ln μ|} + u) / (θ|ln μ|))`, the remainder in
/// `ln ln(e + μ^{-θ} u) = ln ln(μ^{-θ}) + remainder` for `0 < μ < 1`.
pub fn log_log_remainder(mu: f64, theta: f64, u: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) || !(theta > 0.0) || !(u > 0.0) {
        return Err(Error::param("need 0 < mu < 1, theta > 0, u > 0"));
    }
    let l = theta * mu.ln().abs();
    Ok((((1.0 - l).exp() + u).ln() / l).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn rejects_low_dimension() {
        assert!(matches!(Dimension::new(2), Err(Error::Parameter(_))));
    }

    #[test]
    fn cached_constants() {
        let d = dim(3);
        assert_relative_eq!(d.critical_exponent(), 6.0);
        assert_relative_eq!(d.p(), 5.0);
        assert_relative_eq!(d.sphere_area(), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(dim(4).sphere_area(), 2.0 * PI * PI, max_relative = 1e-14);
    }

    #[test]
    fn bubble_values() {
        assert_relative_eq!(standard_bubble(dim(3), &[0.0; 3]), 3f64.powf(0.25), max_relative = 1e-15);
        assert_relative_eq!(standard_bubble(dim(4), &[1.0, 0.0, 0.0, 0.0]), 2f64.sqrt(), max_relative = 1e-15);
        let b = BubbleParam::new(0.01, vec![0.0; 3]);
        assert_relative_eq!(bubble_at(dim(3), &b, &[0.0; 3]).unwrap(), 13.16074, max_relative = 1e-6);
        let b1 = BubbleParam::new(1.0, vec![0.0; 3]);
        let y = [0.3, -0.2, 0.7];
        assert_relative_eq!(bubble_at(dim(3), &b1, &y).unwrap(), standard_bubble(dim(3), &y), max_relative = 1e-15);
    }

    #[test]
    fn bubble_rejects_bad_scale() {
        let b = BubbleParam::new(0.0, vec![0.0; 3]);
        assert!(bubble_at(dim(3), &b, &[0.0; 3]).is_err());
    }

    #[test]
    fn bubble_scaling_identity() {
        for n in 3..=6 {
            let d = dim(n);
            let mut x = vec![0.0; n];
            let mut xi = vec![0.0; n];
            for k in 0..n {
                x[k] = 0.1 * (k as f64 + 1.0).sin();
                xi[k] = -0.05 * (k as f64).cos();
            }
            for &mu in &[1e-3, 0.07, 0.5, 2.0] {
                let b = BubbleParam::new(mu, xi.clone());
                let y: Vec<f64> = x.iter().zip(&xi).map(|(a, c)| (a - c) / mu).collect();
                let expect = mu.powf(-d.half_nm2()) * standard_bubble(d, &y);
                assert_relative_eq!(bubble_at(d, &b, &x).unwrap(), expect, max_relative = 1e-13);
            }
        }
    }

    fn fd_laplacian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> f64 {
        let mut lap = 0.0;
        let f0 = f(x);
        let mut y = x.to_vec();
        for k in 0..x.len() {
            y[k] = x[k] + h;
            let fp = f(&y);
            y[k] = x[k] - h;
            let fm = f(&y);
            y[k] = x[k];
            lap += (fp - 2.0 * f0 + fm) / (h * h);
        }
        lap
    }

    #[test]
    fn bubble_solves_critical_equation_at_second_order() {
        let d = dim(3);
        let pts: [[f64; 3]; 3] = [[0.0; 3], [0.4, -0.3, 0.1], [1.2, 0.5, -0.7]];
        for x in pts {
            let target = standard_bubble(d, &x).powf(d.p());
            let e1 = (-fd_laplacian(|y| standard_bubble(d, y), &x, 1e-2) - target).abs();
            let e2 = (-fd_laplacian(|y| standard_bubble(d, y), &x, 5e-3) - target).abs();
            assert!(e1 < 1e-3, "residual {e1}");
            let order = (e1 / e2).log2();
            assert!((order - 2.0).abs() < 0.1, "observed order {order}");
        }
    }

    #[test]
    fn kernel_functions() {
        let d = dim(3);
        let o = [0.0; 3];
        assert_relative_eq!(psi_at(d, 0, 1.0, &o, &o).unwrap(), -0.658037, max_relative = 1e-5);
        assert!(psi_at(d, 0, 1.0, &o, &[1.0, 0.0, 0.0]).unwrap().abs() < 1e-15);
        assert!(psi_at(d, 4, 1.0, &o, &o).is_err());
    }

    #[test]
    fn kernel_functions_are_parameter_derivatives() {
        for n in 3..=5 {
            let d = dim(n);
            let xi = vec![0.1; n];
            let mut x = vec![0.0; n];
            x[0] = 1.0;
            x[n - 1] = 0.3;
            let mu = 0.8;
            let u = |mu: f64, xi: &[f64]| bubble_at(d, &BubbleParam::new(mu, xi.to_vec()), &x).unwrap();
            let hs = 1e-5;
            let dmu = mu * (u(mu + hs, &xi) - u(mu - hs, &xi)) / (2.0 * hs);
            assert_relative_eq!(psi_at(d, 0, mu, &xi, &x).unwrap(), dmu, max_relative = 1e-8);
            for h in 1..=n {
                let mut xp = xi.clone();
                let mut xm = xi.clone();
                xp[h - 1] += hs;
                xm[h - 1] -= hs;
                let dxi = mu * (u(mu, &xp) - u(mu, &xm)) / (2.0 * hs);
                let got = psi_at(d, h, mu, &xi, &x).unwrap();
                assert!((got - dxi).abs() < 1e-8 * (1.0 + dxi.abs()), "h={h}: {got} vs {dxi}");
            }
            let dm = 1e-6 * mu;
            for &r in &[0.01, 0.5, 0.8, 3.0] {
                let fd = mu * (psi0_radial(d, mu + dm, r) - psi0_radial(d, mu - dm, r)) / (2.0 * dm);
                assert_relative_eq!(psi0_scale_derivative(d, mu, r), fd, max_relative = 1e-6, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn kernel_equation_at_second_order() {
        // -Δψ = p U^{p-1} ψ for every kernel direction.
        let d = dim(3);
        let o = [0.0; 3];
        let x = [0.5, 0.2, -0.3];
        for h in 0..=3 {
            let res = |step: f64| {
                let lap = fd_laplacian(|y| psi_at(d, h, 1.0, &o, y).unwrap(), &x, step);
                let u = standard_bubble(d, &x);
                (-lap - d.p() * u.powf(d.p() - 1.0) * psi_at(d, h, 1.0, &o, &x).unwrap()).abs()
            };
            let (e1, e2) = (res(2e-2), res(1e-2));
            assert!(e1 < 1e-2);
            assert!(((e1 / e2).log2() - 2.0).abs() < 0.15, "h={h}: {e1} {e2}");
        }
    }

    #[test]
    fn nonlinearity_values() {
        let d = dim(3);
        let u = E * E - E;
        assert_relative_eq!(f_eps(d, u, 1.0), u.powi(5) / 2.0, max_relative = 1e-13);
        assert_eq!(f_eps(d, 0.0, 0.3), 0.0);
        for &u in &[-2.5, -0.1, 0.3, 7.0] {
            assert_relative_eq!(f_eps(d, u, 0.0), u.abs().powi(4) * u, max_relative = 1e-14);
            assert_relative_eq!(f_eps_prime(d, u, 0.0), 5.0 * u.powi(4), max_relative = 1e-14);
            assert_relative_eq!(f_eps(d, -u, 0.2), -f_eps(d, u, 0.2));
        }
        assert_eq!(f_eps_prime(d, 0.0, 0.1), 0.0);
    }

    #[test]
    fn nonlinearity_derivative_matches_central_difference() {
        let d = dim(3);
        let h = 1e-5;
        let fd = (f_eps(d, 1.0 + h, 0.1) - f_eps(d, 1.0 - h, 0.1)) / (2.0 * h);
        assert_relative_eq!(f_eps_prime(d, 1.0, 0.1), fd, max_relative = 1e-8);
    }

    #[test]
    fn log_is_stable_for_tiny_arguments() {
        assert_relative_eq!(log_e_plus(1e-300), 1.0);
        assert_relative_eq!(log_e_plus(E * E - E), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn bubble_bounds() {
        let mut b = BubbleParam::new(0.1, vec![0.0; 3]);
        assert!(b.check_bounds(0.1).is_ok());
        b.d = 20.0;
        assert!(b.check_bounds(0.1).is_err());
    }
}
