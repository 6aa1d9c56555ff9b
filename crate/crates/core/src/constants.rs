//! The constants `a_1..a_4`, the drift function `g(σ)` and the Gram limits
//! `c_h` of the reduced system, by quadrature and in closed form.

use std::cell::RefCell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::profiles::{norm, psi0_radial, standard_bubble_radial, Dimension};
use crate::quadrature::{integrate_adaptive, integrate_radial_rn, QuadResult, QuadSpec, TailBound};

/// `∫_{R^n} g(|y|) dy` with the truncation radius taken from `tail` and the
/// scale of the integral estimated from the unit ball.
fn radial_integral(dim: Dimension, g: impl Fn(f64) -> f64, tail: TailBound, tol: f64) -> Result<QuadResult> {
    let m = dim.n() as i32 - 1;
    let core = integrate_adaptive(|r| g(r).abs() * r.powi(m), &[0.0, 0.5, 1.0], 0.0, 1e-6, 200)?;
    let scale = dim.sphere_area() * core.value;
    let spec = QuadSpec { tol, ..QuadSpec::default() }.with_tail(dim, tail, scale);
    integrate_radial_rn(dim, g, &spec)
}

fn check_index(idx: usize) -> Result<()> {
    if (1..=4).contains(&idx) {
        Ok(())
    } else {
        Err(Error::param(format!("constant index {idx} outside 1..=4")))
    }
}

/// Closed forms: `a_2 = (n-2) α_n |S^{n-1}|`, `a_1 = (n-2)/2 a_2`,
/// `a_3 = (n-2)/2 α_n^{p+1}` and
/// `a_4 = Γ(n/2) π^{n/2} / (4 Γ(n+1)) n^{n/2} (n-2)^{(n+4)/2}`.
pub fn const_a_closed(dim: Dimension, idx: usize) -> Result<f64> {
    check_index(idx)?;
    let nf = dim.nf();
    let a = dim.half_nm2();
    let a2 = (nf - 2.0) * dim.alpha() * dim.sphere_area();
    Ok(match idx {
        1 => a * a2,
        2 => a2,
        3 => a * dim.alpha().powf(dim.p() + 1.0),
        _ => {
            gamma(nf / 2.0) * PI.powf(nf / 2.0) / (4.0 * gamma(nf + 1.0))
                * nf.powf(nf / 2.0)
                * (nf - 2.0).powf((nf + 4.0) / 2.0)
        }
    })
}

/// Quadrature value of `a_idx` at relative tolerance `tol`:
/// `a_1 = p ∫ U^{p-1} ψ^0`, `a_2 = ∫ U^p`, `a_4 = -∫ U^p ln(U/α_n) ψ^0`.
/// `a_3` has no integral and is returned exactly.
pub fn const_a(dim: Dimension, idx: usize, tol: f64) -> Result<QuadResult> {
    check_index(idx)?;
    let p = dim.p();
    let alpha = dim.alpha();
    let a = dim.half_nm2();
    let u = |r: f64| standard_bubble_radial(dim, r);
    let psi = |r: f64| psi0_radial(dim, 1.0, r);
    match idx {
        1 => radial_integral(
            dim,
            |r| p * u(r).powf(p - 1.0) * psi(r),
            TailBound { c: p * a * alpha.powf(p), delta: 2.0 },
            tol,
        ),
        2 => radial_integral(dim, |r| u(r).powf(p), TailBound { c: alpha.powf(p), delta: 2.0 }, tol),
        3 => Ok(QuadResult { value: const_a_closed(dim, 3)?, error: 0.0, evals: 0 }),
        _ => radial_integral(
            // -ln(U/α) = a ln(1 + r^2), and ln(1 + r^2) <= 4 sqrt(r) for r >= 1
            dim,
            |r| a * u(r).powf(p) * (r * r).ln_1p() * psi(r),
            TailBound { c: 4.0 * a * a * alpha.powf(p + 1.0), delta: dim.nf() - 0.5 },
            tol,
        ),
    }
}

/// `∫ |(1+|y|^2)^{-(n+2)/2} ln((1+|y|^2)^{-(n+2)/2}) ψ^0(y)| dy`, the integral
/// with the absolute value taken inside. Kept for comparison with [`const_a`].
pub fn a4_literal(dim: Dimension, tol: f64) -> Result<QuadResult> {
    let e = (dim.nf() + 2.0) / 2.0;
    radial_integral(
        dim,
        |r| {
            let w = (r * r).ln_1p();
            ((-e * w).exp() * e * w * psi0_radial(dim, 1.0, r)).abs()
        },
        TailBound { c: 4.0 * e * dim.half_nm2() * dim.alpha(), delta: dim.nf() - 0.5 },
        tol,
    )
}

/// Closed form `g(σ) = (n-2) |S^{n-1}| α_n^{1-p} (1 + |σ|^2)^{-(n-2)/2}`,
/// from `|y|^{2-n} = (n-2)|S^{n-1}| Φ(y)` and `-ΔU = U^p`.
pub fn g_closed(dim: Dimension, s: f64) -> f64 {
    (dim.nf() - 2.0) * dim.sphere_area() * dim.alpha().powf(1.0 - dim.p()) * (1.0 + s * s).powf(-dim.half_nm2())
}

/// `g(σ) = ∫ |y|^{2-n} (1 + |y - σ|^2)^{-(n+2)/2} dy` by quadrature, reduced to
/// polar coordinates about `y = 0` with the polar axis along `σ`; the
/// `|y|^{2-n}` singularity cancels against the volume element.
pub fn g_sigma(dim: Dimension, sigma: &[f64], tol: f64) -> Result<QuadResult> {
    if sigma.len() != dim.n() || sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("sigma must be a finite vector of length n"));
    }
    g_radial(dim, norm(sigma), tol)
}

fn g_radial(dim: Dimension, s: f64, tol: f64) -> Result<QuadResult> {
    let nf = dim.nf();
    let m = dim.n() as i32 - 2;
    let e = -(nf + 2.0) / 2.0;
    // |S^{n-2}|
    let omega2 = 2.0 * PI.powf((nf - 1.0) / 2.0) / gamma((nf - 1.0) / 2.0);
    let g0 = dim.sphere_area() / nf;
    let abs_tol = tol * g0 * (1.0 + s * s).powf(-dim.half_nm2());
    // beyond r = 2s + 1, 1 + |y - σ|^2 >= r^2 / 4
    let r_max = (2.0 * s + 1.0).max((10.0 * dim.sphere_area() * 2f64.powf(nf + 2.0) / (nf * abs_tol)).powf(1.0 / nf));
    let failure = RefCell::new(None);
    let angular = |r: f64| -> f64 {
        let width = (1.0 / (1.0 + r * s)).sqrt().min(PI / 2.0);
        let breaks = [0.0, width, PI];
        let res = integrate_adaptive(
            |th: f64| (1.0 + r * r - 2.0 * r * s * th.cos() + s * s).powf(e) * th.sin().powi(m),
            &breaks,
            abs_tol * 1e-3,
            tol * 1e-2,
            400,
        );
        match res {
            Ok(q) => q.value * r,
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                f64::NAN
            }
        }
    };
    let mut breaks = vec![0.0];
    if s > 0.5 {
        breaks.extend([s - 0.5, s, s + 0.5]);
    } else {
        breaks.push(1.0);
    }
    let mut r = *breaks.last().expect("nonempty");
    while r < r_max {
        r = (4.0 * r).min(r_max);
        breaks.push(r);
    }
    let res = integrate_adaptive(angular, &breaks, abs_tol / omega2 * 0.5, tol * 0.5, 4000);
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    let q = res?;
    Ok(QuadResult { value: omega2 * q.value, error: omega2 * q.error, evals: q.evals })
}

/// Type of the extremum of `g` at `σ = 0` observed on a radial sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extremum {
    Minimum,
    Maximum,
    Neither,
}

/// Tabulated `g(|σ|)` on `[0, s_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub extremum_at_zero: Extremum,
}

pub fn g_profile(dim: Dimension, s_max: f64, points: usize, tol: f64) -> Result<GProfile> {
    if points < 3 || !(s_max > 0.0) {
        return Err(Error::param("g sweep needs at least 3 points on a positive range"));
    }
    let radii: Vec<f64> = (0..points).map(|j| s_max * j as f64 / (points - 1) as f64).collect();
    let values = radii.iter().map(|&s| g_radial(dim, s, tol).map(|q| q.value)).collect::<Result<Vec<_>>>()?;
    let g0 = values[0];
    let extremum_at_zero = if values[1..].iter().all(|&v| v < g0) {
        Extremum::Maximum
    } else if values[1..].iter().all(|&v| v > g0) {
        Extremum::Minimum
    } else {
        Extremum::Neither
    };
    Ok(GProfile { radii, values, extremum_at_zero })
}

/// Gram limits `c_h = ∫ p U^{p-1} (ψ^h)^2` of the unit bubble.
pub fn c_h(dim: Dimension, h: usize, tol: f64) -> Result<QuadResult> {
    if h > dim.n() {
        return Err(Error::param(format!("kernel index h = {h} outside 0..={}", dim.n())));
    }
    let p = dim.p();
    let nf = dim.nf();
    let alpha = dim.alpha();
    let w = move |r: f64| p * standard_bubble_radial(dim, r).powf(p - 1.0);
    if h == 0 {
        let c = p * alpha.powf(p + 1.0) * dim.half_nm2().powi(2);
        radial_integral(dim, move |r| w(r) * psi0_radial(dim, 1.0, r).powi(2), TailBound { c, delta: nf }, tol)
    } else {
        // the angular average of θ_h^2 is 1/n
        let k = (nf - 2.0) * alpha;
        let c = p * alpha.powf(p + 1.0) * (nf - 2.0).powi(2) / nf;
        radial_integral(
            dim,
            move |r| w(r) * (k * r).powi(2) * (1.0 + r * r).powf(-nf) / nf,
            TailBound { c, delta: nf + 2.0 },
            tol,
        )
    }
}

/// Closed-form and quadrature values of all constants of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRow {
    pub n: usize,
    pub a: [f64; 4],
    pub a_closed: [f64; 4],
    pub a_error: [f64; 4],
    pub a4_literal: f64,
    pub g0: f64,
    pub c: Vec<f64>,
}

pub fn constants_row(dim: Dimension, tol: f64) -> Result<ConstantsRow> {
    let mut a = [0.0; 4];
    let mut a_closed = [0.0; 4];
    let mut a_error = [0.0; 4];
    for idx in 1..=4 {
        let q = const_a(dim, idx, tol)?;
        a[idx - 1] = q.value;
        a_error[idx - 1] = q.error;
        a_closed[idx - 1] = const_a_closed(dim, idx)?;
    }
    // c_h is the same for every translation direction
    let c0 = c_h(dim, 0, tol)?.value;
    let c1 = c_h(dim, 1, tol)?.value;
    Ok(ConstantsRow {
        n: dim.n(),
        a,
        a_closed,
        a_error,
        a4_literal: a4_literal(dim, tol)?.value,
        g0: g_radial(dim, 0.0, tol)?.value,
        c: vec![c0, c1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn a2_closed_form_value() {
        assert_relative_eq!(const_a_closed(dim(3), 2).unwrap(), 3f64.powf(0.25) * 4.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn a4_closed_form_values() {
        let expect = [1.068_416_017_080_76, 26.318_945_069_571_6, 379.962_119_143_232, 4762.564_098_094_05];
        for (n, e) in (3..=6).zip(expect) {
            assert_relative_eq!(const_a_closed(dim(n), 4).unwrap(), e, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for n in 3..=6 {
            let d = dim(n);
            for idx in [1, 2, 4] {
                let q = const_a(d, idx, 1e-10).unwrap();
                let c = const_a_closed(d, idx).unwrap();
                assert_relative_eq!(q.value, c, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn literal_a4_variant() {
        let q = a4_literal(dim(3), 1e-9).unwrap();
        assert_relative_eq!(q.value, 1.768_36, max_relative = 1e-5);
    }

    #[test]
    fn bad_index() {
        assert!(const_a(dim(3), 0, 1e-8).is_err());
        assert!(const_a_closed(dim(3), 5).is_err());
    }

    #[test]
    fn g_at_zero() {
        let q = g_sigma(dim(3), &[0.0; 3], 1e-10).unwrap();
        assert_relative_eq!(q.value, 4.0 * PI / 3.0, max_relative = 1e-9);
        for n in 4..=6 {
            let d = dim(n);
            assert_relative_eq!(g_radial(d, 0.0, 1e-10).unwrap().value, d.sphere_area() / n as f64, max_relative = 1e-9);
        }
    }

    #[test]
    fn g_matches_newtonian_potential_form() {
        for n in 3..=5 {
            let d = dim(n);
            for &s in &[0.3, 1.0, 2.5, 7.0] {
                assert_relative_eq!(g_radial(d, s, 1e-10).unwrap().value, g_closed(d, s), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn g_is_rotation_invariant() {
        let d = dim(3);
        let a = g_sigma(d, &[0.6, 0.0, 0.8], 1e-10).unwrap().value;
        let b = g_sigma(d, &[0.0, -1.0, 0.0], 1e-10).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-14);
    }

    #[test]
    fn g_has_maximum_at_origin() {
        let prof = g_profile(dim(3), 3.0, 13, 1e-9).unwrap();
        assert_eq!(prof.extremum_at_zero, Extremum::Maximum);
        assert!(prof.values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn gram_limits_positive() {
        for n in 3..=5 {
            let d = dim(n);
            assert!(c_h(d, 0, 1e-9).unwrap().value > 0.0);
            assert!(c_h(d, 1, 1e-9).unwrap().value > 0.0);
        }
        assert!(c_h(dim(3), 4, 1e-9).is_err());
    }
}
