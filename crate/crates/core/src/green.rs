//! Dirichlet Green's function of `-Δ`, its regular part and the Robin
//! function. The ball is handled exactly by the method of images; other
//! domains plug in through [`GreenProvider`].
//!
//! Normalization: `-Δ_x G(·, y) = δ_y`, `H = Φ - G` with
//! `Φ(z) = 1 / ((n-2) |S^{n-1}| |z|^{n-2})`, and `φ(x) = H(x, x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{dist_sq, norm_sq, Dimension};

/// Green's function data of a bounded domain.
pub trait GreenProvider: Sync {
    fn dim(&self) -> Dimension;

    fn contains(&self, x: &[f64]) -> bool;

    fn green(&self, x: &[f64], y: &[f64]) -> Result<f64>;

    /// Regular part `H(x, y) = Φ(x - y) - G(x, y)`.
    fn regular_part(&self, x: &[f64], y: &[f64]) -> Result<f64>;

    /// Gradient of `H(x, ·)` with respect to its second argument.
    fn regular_part_grad(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>>;

    fn robin(&self, x: &[f64]) -> Result<f64> {
        self.regular_part(x, x)
    }

    fn robin_grad(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Fundamental solution `Φ(ρ) = ρ^{2-n} / ((n-2)|S^{n-1}|)`, given `ρ^2`.
pub fn fundamental_solution_sq(dim: Dimension, rho_sq: f64) -> f64 {
    rho_sq.powf(-dim.half_nm2()) / ((dim.nf() - 2.0) * dim.sphere_area())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallDomain {
    dim: Dimension,
    center: Vec<f64>,
    radius: f64,
}

impl BallDomain {
    pub fn new(dim: Dimension, center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() != dim.n() {
            return Err(Error::param(format!(
                "center has {} coordinates, expected {}",
                center.len(),
                dim.n()
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param(format!("ball radius {radius} must be positive")));
        }
        Ok(Self { dim, center, radius })
    }

    pub fn unit(dim: Dimension) -> Self {
        Self {
            dim,
            center: vec![0.0; dim.n()],
            radius: 1.0,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_unit_centered(&self) -> bool {
        self.radius == 1.0 && self.center.iter().all(|&c| c == 0.0)
    }

    /// Distance from `x` to the boundary sphere (negative outside).
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        self.radius - dist_sq(x, &self.center).sqrt()
    }

    /// Maps `x` to unit-ball coordinates.
    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| (a - c) / self.radius).collect()
    }

    fn unit_point(&self, x: &[f64], what: &str, allow_boundary: bool) -> Result<Vec<f64>> {
        if x.len() != self.dim.n() {
            return Err(Error::param(format!("{what} has {} coordinates", x.len())));
        }
        let u = self.to_unit(x);
        let r2 = norm_sq(&u);
        let inside = if allow_boundary { r2 <= 1.0 + 1e-12 } else { r2 < 1.0 };
        if !inside {
            return Err(Error::Domain(format!("{what} at distance {} from the center", r2.sqrt() * self.radius)));
        }
        Ok(u)
    }

    /// `|y|^2 |x - y*|^2 = |x|^2 |y|^2 - 2 x·y + 1`, y* the Kelvin image of y.
    fn image_distance_sq(x: &[f64], y: &[f64]) -> f64 {
        let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        norm_sq(x) * norm_sq(y) - 2.0 * xy + 1.0
    }

    /// `R^{2-n}`, the scaling of `G` and `H` under dilation of the unit ball.
    fn scale(&self) -> f64 {
        self.radius.powf(2.0 - self.dim.nf())
    }
}

impl GreenProvider for BallDomain {
    fn dim(&self) -> Dimension {
        self.dim
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.dist_to_boundary(x) > 0.0
    }

    fn green(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let xu = self.unit_point(x, "x", true)?;
        let yu = self.unit_point(y, "y", true)?;
        let d2 = dist_sq(&xu, &yu);
        if d2 == 0.0 {
            return Err(Error::Singularity("Green's function evaluated at x = y".into()));
        }
        let direct = fundamental_solution_sq(self.dim, d2);
        let image = fundamental_solution_sq(self.dim, Self::image_distance_sq(&xu, &yu));
        Ok(self.scale() * (direct - image))
    }

    fn regular_part(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let xu = self.unit_point(x, "x", true)?;
        let yu = self.unit_point(y, "y", false)?;
        Ok(self.scale() * fundamental_solution_sq(self.dim, Self::image_distance_sq(&xu, &yu)))
    }

    fn regular_part_grad(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let xu = self.unit_point(x, "x", true)?;
        let yu = self.unit_point(y, "y", false)?;
        let rho2 = Self::image_distance_sq(&xu, &yu);
        let x2 = norm_sq(&xu);
        // dΦ/d(ρ²) = -(n-2)/2 Φ/ρ²; d(ρ²)/dy_h = 2 y_h |x|² - 2 x_h
        let dphi = -self.dim.half_nm2() * fundamental_solution_sq(self.dim, rho2) / rho2;
        let s = self.scale() / self.radius;
        Ok(xu
            .iter()
            .zip(&yu)
            .map(|(xh, yh)| s * dphi * (2.0 * yh * x2 - 2.0 * xh))
            .collect())
    }

    fn robin(&self, x: &[f64]) -> Result<f64> {
        let xu = self.unit_point(x, "x", false)?;
        let t = 1.0 - norm_sq(&xu);
        Ok(self.scale() * t.powf(2.0 - self.dim.nf()) / ((self.dim.nf() - 2.0) * self.dim.sphere_area()))
    }

    fn robin_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xu = self.unit_point(x, "x", false)?;
        let t = 1.0 - norm_sq(&xu);
        let c = self.scale() / self.radius * 2.0 * t.powf(1.0 - self.dim.nf()) / self.dim.sphere_area();
        Ok(xu.iter().map(|v| c * v).collect())
    }
}

/// Axis-aligned search box for [`find_robin_min`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchBox {
    /// The cube inscribed in the ball, shrunk by `margin` (relative).
    pub fn inside_ball(ball: &BallDomain, margin: f64) -> Self {
        let half = ball.radius() * (1.0 - margin) / (ball.dim().nf()).sqrt();
        Self {
            lo: ball.center().iter().map(|c| c - half).collect(),
            hi: ball.center().iter().map(|c| c + half).collect(),
        }
    }
}

const SCAN_POINTS_PER_AXIS: usize = 32;
const MAX_SCAN_POINTS: usize = 32 * 32 * 32 * 32;

/// Minimizer of the Robin function: coarse grid scan over `bx` followed by a
/// Nelder–Mead refinement from the best grid point.
pub fn find_robin_min(provider: &dyn GreenProvider, bx: &SearchBox) -> Result<Vec<f64>> {
    let n = provider.dim().n();
    if bx.lo.len() != n || bx.hi.len() != n {
        return Err(Error::param("search box dimension mismatch"));
    }
    let mut per_axis = SCAN_POINTS_PER_AXIS;
    while per_axis > 2 && per_axis.pow(n as u32) > MAX_SCAN_POINTS {
        per_axis -= 1;
    }
    let f = |x: &[f64]| -> f64 {
        if provider.contains(x) {
            provider.robin(x).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        }
    };

    let total = per_axis.pow(n as u32);
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut x = vec![0.0; n];
    for idx in 0..total {
        let mut rem = idx;
        for k in 0..n {
            let j = rem % per_axis;
            rem /= per_axis;
            x[k] = bx.lo[k] + (bx.hi[k] - bx.lo[k]) * (j as f64 + 0.5) / per_axis as f64;
        }
        let v = f(&x);
        if v < best.0 {
            best = (v, x.clone());
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Search("no grid point of the search box lies in the domain".into()));
    }
    let cell: Vec<f64> = (0..n).map(|k| (bx.hi[k] - bx.lo[k]) / per_axis as f64).collect();
    nelder_mead(f, &best.1, &cell, 1e-13, 20_000)
}

/// Nelder–Mead simplex minimization with standard coefficients.
pub(crate) fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    step: &[f64],
    xtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = start.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push((f(start), start.to_vec()));
    for k in 0..n {
        let mut v = start.to_vec();
        v[k] += step[k];
        simplex.push((f(&v), v));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let diam = simplex[1..]
            .iter()
            .map(|(_, v)| dist_sq(v, &simplex[0].1).sqrt())
            .fold(0.0, f64::max);
        if diam < xtol {
            return Ok(simplex.swap_remove(0).1);
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(_, v)| v[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.1).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].0 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
        } else if fr < simplex[n - 1].0 {
            simplex[n] = (fr, xr);
        } else {
            let (xc, fc) = if fr < worst.0 {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < worst.0.min(fr) {
                simplex[n] = (fc, xc);
            } else {
                let best = simplex[0].1.clone();
                for (fv, v) in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        v[k] = best[k] + 0.5 * (v[k] - best[k]);
                    }
                    *fv = f(v);
                }
            }
        }
    }
    Err(Error::Search(format!("Nelder-Mead did not converge in {max_iter} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit(n: usize) -> BallDomain {
        BallDomain::unit(Dimension::new(n).unwrap())
    }

    #[test]
    fn green_from_center() {
        let b = unit(3);
        for &r in &[0.1, 0.5, 0.9] {
            let g = b.green(&[0.0; 3], &[0.0, r, 0.0]).unwrap();
            assert_relative_eq!(g, (1.0 / r - 1.0) / (4.0 * PI), max_relative = 1e-14);
        }
    }

    #[test]
    fn green_vanishes_on_boundary_and_is_symmetric() {
        let b = unit(4);
        let x = [0.1, -0.3, 0.2, 0.05];
        let y = [0.6, 0.0, -0.8, 0.0];
        assert!(b.green(&x, &y).unwrap().abs() < 1e-12);
        let z = [-0.2, 0.4, 0.1, -0.3];
        assert_relative_eq!(b.green(&x, &z).unwrap(), b.green(&z, &x).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn green_errors() {
        let b = unit(3);
        assert!(matches!(b.green(&[0.1; 3], &[0.1; 3]), Err(Error::Singularity(_))));
        assert!(matches!(b.green(&[0.0; 3], &[2.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(b.robin(&[1.0, 0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn robin_values() {
        assert_relative_eq!(unit(3).robin(&[0.0; 3]).unwrap(), 0.0795775, max_relative = 1e-6);
        assert_relative_eq!(unit(3).robin(&[0.5, 0.0, 0.0]).unwrap(), 0.1061033, max_relative = 1e-6);
        assert_relative_eq!(unit(4).robin(&[0.0; 4]).unwrap(), 0.0253303, max_relative = 1e-5);
        let b = unit(5);
        let x = [0.1, 0.2, -0.3, 0.0, 0.4];
        assert_relative_eq!(b.robin(&x).unwrap(), b.regular_part(&x, &x).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn robin_gradient() {
        let b = unit(3);
        assert_eq!(b.robin_grad(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        let g = b.robin_grad(&[0.5, 0.0, 0.0]).unwrap();
        assert_relative_eq!(g[0], 0.1414711, max_relative = 1e-6);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let dim = Dimension::new(4).unwrap();
        let b = BallDomain::new(dim, vec![0.2, 0.0, -0.1, 0.3], 1.7).unwrap();
        let x = [0.5, -0.4, 0.2, 0.9];
        let y = [0.1, 0.3, -0.5, 0.2];
        let h = 1e-6;
        let rg = b.robin_grad(&x).unwrap();
        let hg = b.regular_part_grad(&x, &y).unwrap();
        for k in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (b.robin(&xp).unwrap() - b.robin(&xm).unwrap()) / (2.0 * h);
            assert_relative_eq!(rg[k], fd, max_relative = 1e-8);
            let mut yp = y;
            let mut ym = y;
            yp[k] += h;
            ym[k] -= h;
            let fd = (b.regular_part(&x, &yp).unwrap() - b.regular_part(&x, &ym).unwrap()) / (2.0 * h);
            assert_relative_eq!(hg[k], fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn translated_scaled_ball() {
        let dim = Dimension::new(3).unwrap();
        let b = BallDomain::new(dim, vec![1.0, 2.0, 3.0], 2.0).unwrap();
        // G_R(x, y) = R^{2-n} G_1((x-c)/R, (y-c)/R)
        let g = b.green(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_relative_eq!(g, 0.5 * (1.0 / 0.5 - 1.0) / (4.0 * PI), max_relative = 1e-14);
        assert!(b.green(&[1.5, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn robin_minimum_is_center() {
        let b = unit(3);
        let m = find_robin_min(&b, &SearchBox::inside_ball(&b, 0.05)).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-6), "{m:?}");
        let dim = Dimension::new(3).unwrap();
        let c = vec![0.3, -0.2, 1.0];
        let bc = BallDomain::new(dim, c.clone(), 0.5).unwrap();
        let m = find_robin_min(&bc, &SearchBox::inside_ball(&bc, 0.05)).unwrap();
        assert!(dist_sq(&m, &c).sqrt() < 1e-6);
        let b4 = unit(4);
        let m = find_robin_min(&b4, &SearchBox::inside_ball(&b4, 0.05)).unwrap();
        assert_relative_eq!(b4.robin(&m).unwrap(), 1.0 / (4.0 * PI * PI), max_relative = 1e-10);
    }
}
