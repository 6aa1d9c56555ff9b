//! Projections `PU`, `Pψ^h` of bubbles and kernel functions onto `H^1_0` of
//! a ball, and the Gram matrix of the projected kernel functions.
//!
//! A bubble centered at the ball's center has a constant trace on the
//! boundary sphere, so its projection is the bubble minus that constant.
//! The same holds for `ψ^0`; for `ψ^h` the trace is a multiple of `x_h`,
//! which is its own harmonic extension.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{BallDomain, GreenProvider};
use crate::profiles::{bubble_radial, dist_sq, psi0_radial, psi0_scale_derivative, psi_at, BubbleParam, Dimension};
use crate::quadrature::integrate_ball_radial;
use crate::tower::TowerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionMethod {
    /// `U - α_n μ^{(n-2)/2} H(·, ξ)` with the regular part scaled by `(n-2)|S^{n-1}|`
    Asymptotic,
    /// exact for bubbles centered at the ball's center
    ExactCentered,
}

/// `(n-2)|S^{n-1}|`: the factor between the regular part normalized by
/// `-ΔG = δ` and the one normalized to `|x - y|^{2-n} - (n-2)|S^{n-1}| G`.
fn h_scale(dim: Dimension) -> f64 {
    (dim.nf() - 2.0) * dim.sphere_area()
}

fn check_centered(dom: &BallDomain, xi: &[f64]) -> Result<()> {
    if dist_sq(xi, dom.center()).sqrt() > 1e-14 * dom.radius() {
        return Err(Error::Unsupported(
            "exact projection is available only for bubbles centered at the ball's center".into(),
        ));
    }
    Ok(())
}

fn check_point(dom: &BallDomain, x: &[f64]) -> Result<()> {
    if dom.dist_to_boundary(x) < -1e-12 * dom.radius() {
        return Err(Error::Domain(format!("x lies outside the ball (distance {})", -dom.dist_to_boundary(x))));
    }
    Ok(())
}

/// Exact `PU_{μ,center}` at distance `r` from the center of a ball of radius `radius`.
pub fn pu_centered(dim: Dimension, mu: f64, r: f64, radius: f64) -> f64 {
    bubble_radial(dim, mu, r) - bubble_radial(dim, mu, radius)
}

/// Exact `Pψ^0_{μ,center}` at distance `r`.
pub fn ppsi0_centered(dim: Dimension, mu: f64, r: f64, radius: f64) -> f64 {
    psi0_radial(dim, mu, r) - psi0_radial(dim, mu, radius)
}

/// Exact projection of `μ ∂_μ ψ^0_{μ,center}` at distance `r`.
pub fn pchi_centered(dim: Dimension, mu: f64, r: f64, radius: f64) -> f64 {
    psi0_scale_derivative(dim, mu, r) - psi0_scale_derivative(dim, mu, radius)
}

/// `PU_{μ,ξ}(x)`; the sign of `b` is not applied.
pub fn project_bubble(dom: &BallDomain, b: &BubbleParam, x: &[f64], method: ProjectionMethod) -> Result<f64> {
    let dim = dom.dim();
    if !(b.mu > 0.0) {
        return Err(Error::param(format!("bubble scale mu = {} must be positive", b.mu)));
    }
    check_point(dom, x)?;
    let r = dist_sq(x, &b.xi).sqrt();
    match method {
        ProjectionMethod::ExactCentered => {
            check_centered(dom, &b.xi)?;
            Ok(pu_centered(dim, b.mu, r, dom.radius()))
        }
        ProjectionMethod::Asymptotic => {
            let h = h_scale(dim) * dom.regular_part(x, &b.xi)?;
            Ok(bubble_radial(dim, b.mu, r) - dim.alpha() * b.mu.powf(dim.half_nm2()) * h)
        }
    }
}

/// `Pψ^h_{μ,ξ}(x)` for `h = 0..n`.
pub fn project_psi(
    dom: &BallDomain,
    h: usize,
    mu: f64,
    xi: &[f64],
    x: &[f64],
    method: ProjectionMethod,
) -> Result<f64> {
    let dim = dom.dim();
    let psi = psi_at(dim, h, mu, xi, x)?;
    check_point(dom, x)?;
    let nf = dim.nf();
    match method {
        ProjectionMethod::ExactCentered => {
            check_centered(dom, xi)?;
            let radius = dom.radius();
            if h == 0 {
                Ok(psi - psi0_radial(dim, mu, radius))
            } else {
                let c = (nf - 2.0) * dim.alpha() * mu.powf(nf / 2.0) * (mu * mu + radius * radius).powf(-nf / 2.0);
                Ok(psi - c * (x[h - 1] - xi[h - 1]))
            }
        }
        ProjectionMethod::Asymptotic => {
            if h == 0 {
                let hv = h_scale(dim) * dom.regular_part(x, xi)?;
                Ok(psi - dim.half_nm2() * dim.alpha() * mu.powf(dim.half_nm2()) * hv)
            } else {
                let grad = dom.regular_part_grad(x, xi)?;
                Ok(psi - dim.alpha() * mu.powf(nf / 2.0) * h_scale(dim) * grad[h - 1])
            }
        }
    }
}

/// `sup_r |PU_exact - PU_asymptotic|` for a centered bubble on the unit ball,
/// sampled at `samples` radii in `[0, 1]`.
pub fn projection_expansion_error(dim: Dimension, mu: f64, samples: usize) -> Result<f64> {
    let dom = BallDomain::unit(dim);
    let b = BubbleParam::new(mu, vec![0.0; dim.n()]);
    let mut x = vec![0.0; dim.n()];
    let mut worst: f64 = 0.0;
    for j in 0..samples.max(2) {
        x[0] = j as f64 / (samples.max(2) - 1) as f64;
        let e = project_bubble(&dom, &b, &x, ProjectionMethod::ExactCentered)?;
        let a = project_bubble(&dom, &b, &x, ProjectionMethod::Asymptotic)?;
        worst = worst.max((e - a).abs());
    }
    Ok(worst)
}

/// `|Pψ^h_μ - ψ^h_μ|_{L^q(B_1)}` for a centered kernel function.
pub fn projection_difference_norm(dim: Dimension, h: usize, mu: f64, q: f64) -> Result<f64> {
    if h > dim.n() {
        return Err(Error::param(format!("kernel index h = {h} outside 0..={}", dim.n())));
    }
    let nf = dim.nf();
    let ball = dim.sphere_area() / nf;
    if h == 0 {
        // the difference is the constant ψ^0(1)
        return Ok(psi0_radial(dim, mu, 1.0).abs() * ball.powf(1.0 / q));
    }
    let c = (nf - 2.0) * dim.alpha() * mu.powf(nf / 2.0) * (mu * mu + 1.0).powf(-nf / 2.0);
    // ∫_{B_1} |x_h|^q = A_q / (n + q)
    let moment = crate::quadrature::sphere_abs_moment(dim, q) / (nf + q);
    Ok(c * moment.powf(1.0 / q))
}

/// `Pψ^0_μ(x) / ((n-2)/2 a_2 μ^{(n-2)/2} G(x, ξ))` for the Green's function
/// normalized by `-ΔG = δ`; tends to 1 away from `ξ` as `μ → 0`.
pub fn far_field_ratio(dom: &BallDomain, mu: f64, x: &[f64]) -> Result<f64> {
    let dim = dom.dim();
    let xi = dom.center().to_vec();
    let p = project_psi(dom, 0, mu, &xi, x, ProjectionMethod::ExactCentered)?;
    let a2 = crate::constants::const_a_closed(dim, 2)?;
    let g = dom.green(x, &xi)?;
    Ok(p / (dim.half_nm2() * a2 * mu.powf(dim.half_nm2()) * g))
}

/// Gram matrix `⟨Pψ^l_i, Pψ^h_j⟩ = ∫ p U_i^{p-1} ψ^l_i Pψ^h_j` of a centered
/// tower, indexed by `i (n+1) + h`.
pub fn gram_matrix(dom: &BallDomain, cfg: &TowerConfig, tol: f64) -> Result<DMatrix<f64>> {
    let dim = dom.dim();
    for b in &cfg.params {
        check_centered(dom, &b.xi)?;
    }
    let n = dim.n();
    let k = cfg.params.len();
    let nf = dim.nf();
    let p = dim.p();
    let alpha = dim.alpha();
    let radius = dom.radius();
    let m = n + 1;
    let mut g = DMatrix::zeros(k * m, k * m);
    for i in 0..k {
        for j in 0..k {
            let mi = cfg.params[i].mu;
            let mj = cfg.params[j].mu;
            let w = move |r: f64| p * bubble_radial(dim, mi, r).powf(p - 1.0);
            let scales = [mi, mj];
            let e00 = integrate_ball_radial(
                dim,
                |r| w(r) * psi0_radial(dim, mi, r) * ppsi0_centered(dim, mj, r, radius),
                radius,
                &scales,
                tol,
                0.0,
            )?;
            g[(i * m, j * m)] = e00.value;
            let c = (nf - 2.0).powi(2) * alpha * alpha * (mi * mj).powf(nf / 2.0);
            let edge = (mj * mj + radius * radius).powf(-nf / 2.0);
            let ehh = integrate_ball_radial(
                dim,
                |r| {
                    w(r) * c * (mi * mi + r * r).powf(-nf / 2.0) * ((mj * mj + r * r).powf(-nf / 2.0) - edge) * r * r
                        / nf
                },
                radius,
                &scales,
                tol,
                0.0,
            )?;
            for h in 1..=n {
                g[(i * m + h, j * m + h)] = ehh.value;
            }
        }
    }
    Ok(g)
}
