//! Tower ansatz `V = Σ (-1)^i P U_{μ_i, ξ_i}` with
//! `μ_i = (ε/|ln ε|^2)^{(2i-1)/(n-2)} d_i`, its annular decomposition and
//! residual measurement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{BallDomain, GreenProvider};
use crate::profiles::{f_eps, norm, BubbleParam, Dimension};
use crate::projection::{project_bubble, ProjectionMethod};
use crate::reduced::ReducedState;
use crate::radial::{apply_radial_laplacian, solve_dirichlet, tower_nodal, RadialGrid};

pub const DEFAULT_ETA: f64 = 0.1;

/// `t = ε / |ln ε|^2`.
pub fn schedule_t(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(eps / eps.ln().powi(2))
}

pub fn mu_schedule(dim: Dimension, k: usize, eps: f64, dbar: &[f64]) -> Result<Vec<f64>> {
    let t = schedule_t(eps)?;
    if k == 0 || dbar.len() != k {
        return Err(Error::param(format!("need k >= 1 dilations, got {} for k = {k}", dbar.len())));
    }
    if let Some(d) = dbar.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
        return Err(Error::param(format!("dilation {d} must be positive")));
    }
    let e = 1.0 / (dim.nf() - 2.0);
    let mus: Vec<f64> = dbar
        .iter()
        .enumerate()
        .map(|(i, d)| t.powf((2 * i + 1) as f64 * e) * d)
        .collect();
    if mus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("bubble scales are not strictly decreasing"));
    }
    Ok(mus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub dim: Dimension,
    pub k: usize,
    pub eps: f64,
    /// bubble `i` (from 1) is `params[i-1]`, signed `(-1)^i`
    pub params: Vec<BubbleParam>,
    pub xi: Vec<f64>,
    pub rho: f64,
    pub eta: f64,
}

impl TowerConfig {
    /// Bubble centers `ξ + μ_i σ_i`; `rho` defaults to half the distance from
    /// `ξ` to the boundary.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dom: &BallDomain,
        k: usize,
        eps: f64,
        d: &[f64],
        sigma: &[Vec<f64>],
        xi: Vec<f64>,
        rho: Option<f64>,
        eta: f64,
    ) -> Result<Self> {
        let dim = dom.dim();
        if xi.len() != dim.n() {
            return Err(Error::param("center has the wrong dimension"));
        }
        if !(eta > 0.0) {
            return Err(Error::param(format!("eta = {eta} must be positive")));
        }
        if k == 0 || sigma.len() != k || sigma.iter().any(|s| s.len() != dim.n()) {
            return Err(Error::param("need one drift vector per bubble"));
        }
        if sigma[k - 1].iter().any(|v| *v != 0.0) {
            return Err(Error::param("the innermost bubble carries no drift"));
        }
        if !dom.contains(&xi) {
            return Err(Error::Domain(format!("center {xi:?} lies outside the domain")));
        }
        let dist = dom.dist_to_boundary(&xi);
        if !(dist > eta) {
            return Err(Error::param(format!("center is within eta = {eta} of the boundary")));
        }
        let rho = rho.unwrap_or(0.5 * dist);
        if !(rho > 0.0 && rho < dist) {
            return Err(Error::param(format!("matching radius {rho} must lie in (0, {dist})")));
        }
        let mus = mu_schedule(dim, k, eps, d)?;
        let mut params = Vec::with_capacity(k);
        for i in 0..k {
            let center: Vec<f64> = xi.iter().zip(&sigma[i]).map(|(x, s)| x + mus[i] * s).collect();
            let b = BubbleParam {
                mu: mus[i],
                xi: center,
                sign: if i % 2 == 0 { -1.0 } else { 1.0 },
                d: d[i],
                sigma: sigma[i].clone(),
            };
            b.check_bounds(eta)?;
            params.push(b);
        }
        if mus[0] >= rho {
            return Err(Error::param(format!("outer scale {} is not below rho = {rho}", mus[0])));
        }
        Ok(Self { dim, k, eps, params, xi, rho, eta })
    }

    /// Tower concentrating at the domain center with zero drifts. The
    /// admissibility margin is the default one, shrunk when a dilation lies
    /// outside it.
    pub fn centered(dom: &BallDomain, k: usize, eps: f64, d: &[f64]) -> Result<Self> {
        let n = dom.dim().n();
        Self::new(
            dom,
            k,
            eps,
            d,
            &vec![vec![0.0; n]; k],
            dom.center().to_vec(),
            None,
            admissible_eta(d, DEFAULT_ETA),
        )
    }

    /// Tower at a solution of the reduced system: `d_1 = s_1`,
    /// `d_i = s_i d_{i-1}`, drifts from the state. A center within `1e-12 R`
    /// of the domain center is snapped to it.
    pub fn from_reduced(dom: &BallDomain, state: &ReducedState, eps: f64, eta: f64) -> Result<Self> {
        let d = state.dilations();
        let close = crate::profiles::dist_sq(&state.xi, dom.center()).sqrt() <= 1e-12 * dom.radius();
        let xi = if close { dom.center().to_vec() } else { state.xi.clone() };
        Self::new(dom, state.k, eps, &d, &state.all_sigma(), xi, None, admissible_eta(&d, eta))
    }

    pub fn mus(&self) -> Vec<f64> {
        self.params.iter().map(|b| b.mu).collect()
    }

    pub fn ds(&self) -> Vec<f64> {
        self.params.iter().map(|b| b.d).collect()
    }

    /// All bubbles centered at the domain center.
    pub fn is_centered(&self, dom: &BallDomain) -> bool {
        self.params.iter().all(|b| b.xi.iter().zip(dom.center()).all(|(a, c)| a == c))
    }
}

/// `eta` itself when every dilation fits in `(eta, 1/eta)`, otherwise half
/// the margin the dilations leave.
pub fn admissible_eta(d: &[f64], eta: f64) -> f64 {
    let fit = d.iter().fold(f64::INFINITY, |m, &v| m.min(v).min(1.0 / v));
    if fit > eta {
        eta
    } else {
        0.5 * fit
    }
}

/// Radii `r_0 = ρ > r_1 > ... > r_k = 0`; annulus `i` is
/// `r_i <= |x - ξ| < r_{i-1}` with `r_i = sqrt(μ_i μ_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnuliDecomposition {
    pub radii: Vec<f64>,
}

impl AnnuliDecomposition {
    pub fn new(mus: &[f64], rho: f64) -> Result<Self> {
        if mus.is_empty() || mus.windows(2).any(|w| !(w[1] < w[0])) || !(mus[0] < rho) {
            return Err(Error::param("annuli need decreasing scales below rho"));
        }
        let k = mus.len();
        let mut radii = vec![rho];
        for i in 0..k - 1 {
            radii.push((mus[i] * mus[i + 1]).sqrt());
        }
        radii.push(0.0);
        Ok(Self { radii })
    }

    pub fn from_config(cfg: &TowerConfig) -> Result<Self> {
        Self::new(&cfg.mus(), cfg.rho)
    }

    pub fn k(&self) -> usize {
        self.radii.len() - 1
    }

    /// `(inner, outer)` radii of annulus `i` (from 1).
    pub fn annulus(&self, i: usize) -> (f64, f64) {
        (self.radii[i], self.radii[i - 1])
    }

    /// Annulus containing radius `r`, or `None` outside `B(ξ, ρ)`.
    pub fn index_of(&self, r: f64) -> Option<usize> {
        if !(r >= 0.0) || r >= self.radii[0] {
            return None;
        }
        (1..=self.k()).find(|&i| r >= self.radii[i])
    }

    pub fn cutoffs(&self, profile: RampProfile) -> Vec<Cutoff> {
        (1..=self.k())
            .map(|i| {
                let (a, b) = self.annulus(i);
                Cutoff { inner: a, outer: b, profile }
            })
            .collect()
    }
}

/// Transition shape `S: [0,1] -> [0,1]` of a cut-off ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RampProfile {
    /// `10s^3 - 15s^4 + 6s^5`, C^2 with `S' <= 15/8`, `|S''| <= 10/sqrt(3)`
    Quintic,
    /// piecewise quadratic, C^{1,1} with `S' <= 2`, `|S''| = 4`
    Quadratic,
}

impl RampProfile {
    /// `(S, S', S'')` at `s`, clamped to `[0, 1]`.
    pub fn eval(self, s: f64) -> (f64, f64, f64) {
        if s <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if s >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        match self {
            RampProfile::Quintic => (
                s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
                30.0 * s * s * (1.0 - s) * (1.0 - s),
                60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
            ),
            RampProfile::Quadratic => {
                if s <= 0.5 {
                    (2.0 * s * s, 4.0 * s, 4.0)
                } else {
                    let q = 1.0 - s;
                    (1.0 - 2.0 * q * q, 4.0 * q, -4.0)
                }
            }
        }
    }
}

/// Radial cut-off equal to 1 on `[inner, outer]`, 0 below `inner/2` and
/// above `2 outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
    pub profile: RampProfile,
}

impl Cutoff {
    /// `(χ, χ', χ'')` in the radial variable.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let b = self.outer;
        let (so, so1, so2) = self.profile.eval((2.0 * b - r) / b);
        let (o, o1, o2) = (so, -so1 / b, so2 / (b * b));
        if self.inner <= 0.0 {
            return (o, o1, o2);
        }
        let a = self.inner;
        let h = 0.5 * a;
        let (si, si1, si2) = self.profile.eval((r - h) / h);
        let (i0, i1, i2) = (si, si1 / h, si2 / (h * h));
        (o * i0, o1 * i0 + o * i1, o2 * i0 + 2.0 * o1 * i1 + o * i2)
    }

    /// `(|∇χ|, |∇^2χ|)` at radius `r`: the Hessian of a radial function has
    /// eigenvalues `χ''` and `χ'/r`.
    pub fn derivative_norms(&self, r: f64) -> (f64, f64) {
        let (_, d1, d2) = self.eval(r);
        let tangential = if r > 0.0 { (d1 / r).abs() } else { d2.abs() };
        (d1.abs(), d2.abs().max(tangential))
    }
}

/// `V(x) = Σ (-1)^i P U_i(x)`, with the exact projection for a tower centered
/// in the ball and the boundary expansion otherwise.
pub fn assemble_tower(dom: &BallDomain, cfg: &TowerConfig, x: &[f64]) -> Result<f64> {
    let method = if cfg.is_centered(dom) {
        ProjectionMethod::ExactCentered
    } else {
        ProjectionMethod::Asymptotic
    };
    let mut v = 0.0;
    for b in &cfg.params {
        v += b.sign * project_bubble(dom, b, x, method)?;
    }
    Ok(v)
}

/// Peak heights of the tower along a ray, outermost bubble first.
pub fn peak_heights(cfg: &TowerConfig, grid: &RadialGrid) -> Result<Vec<f64>> {
    let v = tower_nodal(grid, &cfg.mus());
    let (scales, _) = crate::radial::extract_scales_raw(grid, &v, cfg.k, cfg.eps)?;
    Ok(scales.iter().map(|s| s.height).collect())
}

/// Dual energy norm `sqrt(bᵀ S⁻¹ b)` of `b = vol ∘ (-Δ_h V - f_ε(V))`, i.e.
/// `‖V - (-Δ)⁻¹ f_ε(V)‖` in the Dirichlet norm of the unit ball.
pub fn residual_norm(dom: &BallDomain, cfg: &TowerConfig, grid: &RadialGrid) -> Result<f64> {
    if !dom.is_unit_centered() || !cfg.is_centered(dom) || norm(dom.center()) != 0.0 {
        return Err(Error::Unsupported("residual norm is radial: centered tower on the unit ball".into()));
    }
    if grid.dim() != cfg.dim {
        return Err(Error::param("grid and tower dimensions differ"));
    }
    let mu_k = cfg.params[cfg.k - 1].mu;
    let below = grid.nodes_below(mu_k);
    if below < 10 {
        return Err(Error::Resolution(format!(
            "{below} nodes below the smallest scale {mu_k:e}; need at least 10"
        )));
    }
    let v = tower_nodal(grid, &cfg.mus());
    let mut r = apply_radial_laplacian(grid, &v)?;
    let last = r.len() - 1;
    for (ri, vi) in r[..last].iter_mut().zip(&v) {
        *ri -= f_eps(cfg.dim, *vi, cfg.eps);
    }
    r[last] = 0.0;
    // S⁻¹ b = A⁻¹ r
    let z = solve_dirichlet(grid, &r)?;
    let vol = grid.cell_volumes();
    let q: f64 = (0..last).map(|i| vol[i] * r[i] * z[i]).sum();
    Ok((cfg.dim.sphere_area() * q.max(0.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::GridSpec;
    use approx::assert_relative_eq;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn schedule_values() {
        let mu = mu_schedule(dim(3), 1, 0.01, &[1.0]).unwrap();
        assert_relative_eq!(mu[0], 0.01 / 0.01f64.ln().powi(2), max_relative = 1e-15);
        assert_relative_eq!(mu[0], 4.7153e-4, max_relative = 1e-4);
        let t = schedule_t(0.02).unwrap();
        let m = mu_schedule(dim(4), 2, 0.02, &[0.9, 0.3]).unwrap();
        assert_relative_eq!(m[1] / m[0], t * 0.3 / 0.9, max_relative = 1e-14);
        assert!(mu_schedule(dim(3), 1, 1.0, &[1.0]).is_err());
        assert!(mu_schedule(dim(3), 1, 0.1, &[0.0]).is_err());
    }

    #[test]
    fn schedule_exponent() {
        let d = dim(5);
        for eps in [0.1, 0.01, 0.001] {
            let t = schedule_t(eps).unwrap();
            let m = mu_schedule(d, 1, eps, &[1.0]).unwrap();
            assert_relative_eq!(m[0].ln() / t.ln(), 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let dom = BallDomain::unit(dim(3));
        let cfg = TowerConfig::centered(&dom, 2, 0.05, &[0.74, 0.03]).unwrap();
        assert_eq!(cfg.rho, 0.5);
        assert_eq!(cfg.params[0].sign, -1.0);
        assert_eq!(cfg.params[1].sign, 1.0);
        assert!(cfg.eta < 0.03);
        let bad = TowerConfig::new(&dom, 1, 0.05, &[0.05], &[vec![0.0; 3]], vec![0.0; 3], None, 0.1);
        assert!(matches!(bad, Err(Error::Parameter(_))));
        let near = TowerConfig::new(&dom, 1, 0.05, &[1.0], &[vec![0.0; 3]], vec![0.95, 0.0, 0.0], None, 0.1);
        assert!(near.is_err());
    }

    #[test]
    fn annuli_partition() {
        let mus = [1e-2, 1e-4, 1e-7];
        let an = AnnuliDecomposition::new(&mus, 0.5).unwrap();
        assert!(an.radii.windows(2).all(|w| w[1] < w[0]));
        for i in 1..=3 {
            let (a, b) = an.annulus(i);
            assert!(a < mus[i - 1] && mus[i - 1] < b);
            assert_eq!(an.index_of(mus[i - 1]), Some(i));
        }
        assert_eq!(an.index_of(0.0), Some(3));
        assert_eq!(an.index_of(0.5), None);
    }

    #[test]
    fn quadratic_ramp_meets_outer_bounds() {
        let mus = [1e-2, 1e-4, 1e-7];
        let an = AnnuliDecomposition::new(&mus, 0.5).unwrap();
        for c in an.cutoffs(RampProfile::Quadratic) {
            let b = c.outer;
            for j in 0..=2000 {
                let r = b * (1.0 + j as f64 / 2000.0);
                let (g, h) = c.derivative_norms(r);
                assert!(g <= 2.0 / b * (1.0 + 1e-12));
                assert!(h <= 4.0 / (b * b) * (1.0 + 1e-12));
            }
            if c.inner > 0.0 {
                let a = c.inner;
                for j in 0..=2000 {
                    let r = a * (0.5 + 0.5 * j as f64 / 2000.0);
                    let (g, h) = c.derivative_norms(r);
                    assert!(g <= 4.0 / a * (1.0 + 1e-12));
                    assert!(h <= 16.0 / (a * a) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn quintic_ramp_shape() {
        let c = Cutoff { inner: 0.1, outer: 1.0, profile: RampProfile::Quintic };
        assert_eq!(c.eval(0.04).0, 0.0);
        assert_eq!(c.eval(0.5).0, 1.0);
        assert_eq!(c.eval(2.5).0, 0.0);
        let (_, d1, _) = c.eval(1.5);
        assert_relative_eq!(d1, -1.875, max_relative = 1e-12);
        let (g, _) = c.derivative_norms(1.5);
        assert!(g > 2.0 / 1.0 * 0.9);
    }

    #[test]
    fn single_bubble_is_negative_projection() {
        let dom = BallDomain::unit(dim(3));
        let cfg = TowerConfig::centered(&dom, 1, 0.05, &[0.8]).unwrap();
        let mu = cfg.params[0].mu;
        let x = [0.1, 0.0, 0.0];
        let pu = crate::projection::pu_centered(dim(3), mu, 0.1, 1.0);
        assert_relative_eq!(assemble_tower(&dom, &cfg, &x).unwrap(), -pu, max_relative = 1e-14);
        assert!(assemble_tower(&dom, &cfg, &[0.0, 1.0, 0.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_bubble_tower_changes_sign() {
        let d = dim(3);
        let dom = BallDomain::unit(d);
        let cfg = TowerConfig::centered(&dom, 2, 0.02, &[0.74, 0.03]).unwrap();
        let m = cfg.mus();
        let v2 = assemble_tower(&dom, &cfg, &[m[1], 0.0, 0.0]).unwrap();
        let v1 = assemble_tower(&dom, &cfg, &[m[0], 0.0, 0.0]).unwrap();
        assert!(v2 > 0.0 && v1 < 0.0);
        let grid = RadialGrid::for_scale(d, m[1], &GridSpec::default()).unwrap();
        let h = peak_heights(&cfg, &grid).unwrap();
        assert!(h[0] < 0.0 && h[1] > 0.0);
        assert!((h[1] / (d.alpha() * m[1].powf(-0.5)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn residual_norm_needs_resolution() {
        let d = dim(3);
        let dom = BallDomain::unit(d);
        let cfg = TowerConfig::centered(&dom, 1, 0.01, &[1.0]).unwrap();
        let coarse = RadialGrid::geometric(d, 1e-2, 10, 0.05).unwrap();
        assert!(matches!(residual_norm(&dom, &cfg, &coarse), Err(Error::Resolution(_))));
        let fine = RadialGrid::for_scale(d, cfg.params[0].mu, &GridSpec::default()).unwrap();
        let r0 = residual_norm(&dom, &cfg, &fine).unwrap();
        let cfg2 = TowerConfig::centered(&dom, 1, 0.01, &[2.0]).unwrap();
        let grid2 = RadialGrid::for_scale(d, cfg2.params[0].mu, &GridSpec::default()).unwrap();
        assert!(r0.is_finite() && r0 > 0.0);
        assert!(residual_norm(&dom, &cfg2, &grid2).unwrap() > 0.0);
    }
}
