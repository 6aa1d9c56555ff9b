//! Limit reduced system in the variables `s_1 = d_1`, `s_i = d_i / d_{i-1}`:
//!
//! `G_0 = α a_1 s_1^{n-2} φ(ξ) + a_3 Σ_{i>=2} s_i^{(n-2)/2} g(σ_i) - a_4 Σ (2/(2i-1)) |ln s_i|`,
//! `G_h = (α/2) a_2 ∂_h φ(ξ) s_1^{n-2}`.
//!
//! `G_0` is one equation in `k` unknowns; the solver splits it by level,
//! `T_1 = α a_1 s_1^{n-2} φ - 2 a_4 |ln s_1|` and
//! `T_i = a_3 s_i^{(n-2)/2} g(σ_i) - (2/(2i-1)) a_4 |ln s_i|`, so that
//! `G_0 = Σ T_i` and each level has an isolated root.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants::{const_a, const_a_closed, g_closed, g_profile, Extremum};
use crate::error::{Error, Result};
use crate::green::{find_robin_min, BallDomain, GreenProvider, SearchBox};
use crate::profiles::{norm, Dimension};

/// Normalization of the Green's function fed to the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreenConvention {
    /// `-ΔG = δ`
    Standard,
    /// `-ΔG = (n-2)|S^{n-1}| δ`
    Scaled,
}

impl GreenConvention {
    pub fn factor(self, dim: Dimension) -> f64 {
        match self {
            GreenConvention::Standard => 1.0,
            GreenConvention::Scaled => (dim.nf() - 2.0) * dim.sphere_area(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedConstants {
    pub dim: Dimension,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub convention: GreenConvention,
}

impl ReducedConstants {
    pub fn closed(dim: Dimension) -> Self {
        let a = |i| const_a_closed(dim, i).expect("indices 1..=4 are valid");
        Self { dim, a1: a(1), a2: a(2), a3: a(3), a4: a(4), convention: GreenConvention::Standard }
    }

    /// Constants by quadrature at relative tolerance `tol`.
    pub fn computed(dim: Dimension, tol: f64) -> Result<Self> {
        let a = |i| const_a(dim, i, tol).map(|q| q.value);
        Ok(Self { dim, a1: a(1)?, a2: a(2)?, a3: a(3)?, a4: a(4)?, convention: GreenConvention::Standard })
    }

    pub fn with_convention(mut self, convention: GreenConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Multiply `(a_1, a_3, a_4)` by a common factor.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.a1 *= factor;
        self.a3 *= factor;
        self.a4 *= factor;
        self
    }

    pub fn g(&self, sigma: &[f64]) -> f64 {
        g_closed(self.dim, norm(sigma))
    }

    fn check(&self) -> Result<()> {
        if [self.a1, self.a2, self.a3, self.a4].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::param("reduced constants must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub dim: Dimension,
    pub k: usize,
    pub s: Vec<f64>,
    /// drifts of bubbles `1..k-1`; the innermost one has none
    pub sigma: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    /// `[G_0, G_1, ..., G_n]`
    pub g_value: Vec<f64>,
    /// level residuals `T_1..T_k`
    pub levels: Vec<f64>,
    /// central-difference Jacobian of `G` in `(s, σ, ξ)`
    pub jac: DMatrix<f64>,
}

impl ReducedState {
    pub fn new(dim: Dimension, s: Vec<f64>, sigma: Vec<Vec<f64>>, xi: Vec<f64>) -> Result<Self> {
        let k = s.len();
        if k == 0 || sigma.len() + 1 != k || xi.len() != dim.n() || sigma.iter().any(|v| v.len() != dim.n()) {
            return Err(Error::param("state needs k >= 1 values of s, k-1 drifts and an n-point"));
        }
        Ok(Self { dim, k, s, sigma, xi, g_value: vec![], levels: vec![], jac: DMatrix::zeros(0, 0) })
    }

    /// `d_1 = s_1`, `d_i = s_i d_{i-1}`.
    pub fn dilations(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.k);
        let mut acc = 1.0;
        for s in &self.s {
            acc *= s;
            d.push(acc);
        }
        d
    }

    /// Drift of every bubble, zero for the innermost.
    pub fn all_sigma(&self) -> Vec<Vec<f64>> {
        let mut v = self.sigma.clone();
        v.push(vec![0.0; self.dim.n()]);
        v
    }
}

fn check_s(s: &[f64]) -> Result<()> {
    if let Some(v) = s.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::param(format!("s = {v} must be positive")));
    }
    Ok(())
}

fn level(c: &ReducedConstants, i: usize, s: f64, phi: f64, g: f64) -> f64 {
    let n = c.dim.nf();
    if i == 1 {
        c.dim.alpha() * c.a1 * s.powf(n - 2.0) * phi - 2.0 * c.a4 * s.ln().abs()
    } else {
        c.a3 * s.powf(c.dim.half_nm2()) * g - 2.0 / (2 * i - 1) as f64 * c.a4 * s.ln().abs()
    }
}

fn level_slope(c: &ReducedConstants, i: usize, s: f64, phi: f64, g: f64) -> f64 {
    let n = c.dim.nf();
    let log_part = s.ln().signum() / s;
    if i == 1 {
        c.dim.alpha() * c.a1 * (n - 2.0) * s.powf(n - 3.0) * phi - 2.0 * c.a4 * log_part
    } else {
        let a = c.dim.half_nm2();
        c.a3 * a * s.powf(a - 1.0) * g - 2.0 / (2 * i - 1) as f64 * c.a4 * log_part
    }
}

/// Level residuals `T_1..T_k`.
pub fn eval_levels(state: &ReducedState, consts: &ReducedConstants, dom: &dyn GreenProvider) -> Result<Vec<f64>> {
    check_s(&state.s)?;
    consts.check()?;
    let phi = consts.convention.factor(consts.dim) * dom.robin(&state.xi)?;
    Ok((1..=state.k)
        .map(|i| {
            let g = if i == 1 { 0.0 } else { consts.g(&state.sigma[i - 2]) };
            level(consts, i, state.s[i - 1], phi, g)
        })
        .collect())
}

/// `[G_0, G_1, ..., G_n]`.
pub fn eval_g(state: &ReducedState, consts: &ReducedConstants, dom: &dyn GreenProvider) -> Result<Vec<f64>> {
    let t = eval_levels(state, consts, dom)?;
    let f = consts.convention.factor(consts.dim);
    let grad = dom.robin_grad(&state.xi)?;
    let s1 = state.s[0].powf(consts.dim.nf() - 2.0);
    let mut out = vec![t.iter().sum()];
    out.extend(grad.iter().map(|g| 0.5 * consts.dim.alpha() * consts.a2 * f * g * s1));
    Ok(out)
}

/// `G_0` with the parameter-independent `ε`-correction
/// `-(2k^2/(n-2)^2) a_4 ε |ln(ε/|ln ε|^2)|`.
pub fn eval_g_eps(state: &ReducedState, consts: &ReducedConstants, dom: &dyn GreenProvider, eps: f64) -> Result<Vec<f64>> {
    let t = crate::tower::schedule_t(eps)?;
    let mut g = eval_g(state, consts, dom)?;
    let k = state.k as f64;
    g[0] -= 2.0 * k * k / (consts.dim.nf() - 2.0).powi(2) * consts.a4 * eps * t.ln().abs();
    Ok(g)
}

/// Central-difference Jacobian of `G` in `(s_1..s_k, σ_1..σ_{k-1}, ξ)`.
pub fn jacobian_fd(state: &ReducedState, consts: &ReducedConstants, dom: &dyn GreenProvider) -> Result<DMatrix<f64>> {
    let n = state.dim.n();
    let k = state.k;
    let cols = k + n * (k - 1) + n;
    let mut jac = DMatrix::zeros(1 + n, cols);
    let h_rel = 1e-6;
    for c in 0..cols {
        let mut plus = state.clone();
        let mut minus = state.clone();
        let (h, set): (f64, Box<dyn Fn(&mut ReducedState, f64)>) = if c < k {
            let h = h_rel * state.s[c];
            (h, Box::new(move |st: &mut ReducedState, d| st.s[c] += d))
        } else if c < k + n * (k - 1) {
            let (j, q) = ((c - k) / n, (c - k) % n);
            (1e-5, Box::new(move |st: &mut ReducedState, d| st.sigma[j][q] += d))
        } else {
            let q = c - k - n * (k - 1);
            (1e-5, Box::new(move |st: &mut ReducedState, d| st.xi[q] += d))
        };
        if !(h > 1e-300) {
            return Err(Error::param("finite-difference step underflow"));
        }
        set(&mut plus, h);
        set(&mut minus, -h);
        let gp = eval_g(&plus, consts, dom)?;
        let gm = eval_g(&minus, consts, dom)?;
        for r in 0..=n {
            jac[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Jacobian of the square system `(T_1..T_k, G_1..G_n)` in `(s, ξ)`.
pub fn split_jacobian(state: &ReducedState, consts: &ReducedConstants, dom: &dyn GreenProvider) -> Result<DMatrix<f64>> {
    let n = state.dim.n();
    let k = state.k;
    let eval = |st: &ReducedState| -> Result<Vec<f64>> {
        let mut v = eval_levels(st, consts, dom)?;
        v.extend_from_slice(&eval_g(st, consts, dom)?[1..]);
        Ok(v)
    };
    let mut jac = DMatrix::zeros(k + n, k + n);
    for c in 0..k + n {
        let mut plus = state.clone();
        let mut minus = state.clone();
        let h = if c < k { 1e-6 * state.s[c] } else { 1e-5 };
        if c < k {
            plus.s[c] += h;
            minus.s[c] -= h;
        } else {
            plus.xi[c - k] += h;
            minus.xi[c - k] -= h;
        }
        let (gp, gm) = (eval(&plus)?, eval(&minus)?);
        for r in 0..k + n {
            jac[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| a.total_cmp(b));
    sv
}

/// One bracketed root of a level equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRoot {
    pub level: usize,
    pub s: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSolution {
    pub state: ReducedState,
    /// every bracketed root, by level
    pub roots: Vec<LevelRoot>,
    /// sign changes seen by the scan, by level
    pub sign_changes: Vec<usize>,
    pub residual: f64,
    /// singular values of the square level system, increasing
    pub singular_values: Vec<f64>,
    pub g_extremum: Extremum,
}

const SCAN_LO: f64 = 1e-6;
const SCAN_HI: f64 = 1e6;
const SCAN_POINTS: usize = 241;

/// Sign changes of `f` on a log-spaced grid over `[1e-6, 1e6]`, including
/// the kink at `s = 1` as a grid point.
pub fn bracket_scan(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let (a, b) = (SCAN_LO.ln(), SCAN_HI.ln());
    let mut grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|j| (a + (b - a) * j as f64 / (SCAN_POINTS - 1) as f64).exp())
        .chain(std::iter::once(1.0))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|x, y| (*x / *y - 1.0).abs() < 1e-12);
    let vals: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
    let mut out = Vec::new();
    for j in 0..grid.len() - 1 {
        if vals[j] == 0.0 {
            out.push((grid[j], grid[j]));
        } else if vals[j] * vals[j + 1] < 0.0 {
            out.push((grid[j], grid[j + 1]));
        }
    }
    out
}

/// Bisection in `ln s` followed by Newton steps that stay inside the
/// bracket, which never straddles `s = 1`.
fn refine(f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    for _ in 0..200 {
        let m = (a * b).sqrt();
        if f(m) * fa > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b / a - 1.0 < 1e-6 {
            break;
        }
    }
    let mut s = (a * b).sqrt();
    for _ in 0..50 {
        let step = f(s) / df(s);
        let next = s - step;
        if !(next >= a && next <= b) {
            break;
        }
        if (next - s).abs() <= 1e-16 * s {
            s = next;
            break;
        }
        s = next;
    }
    s
}

/// Solve the reduced system on a ball: `ξ` at the Robin minimum, `σ_i = 0`
/// (the extremum of `g`), each level bracketed and refined. Among the roots
/// of a level, the one in `(0, 1)` with positive slope is kept.
pub fn solve_reduced(k: usize, consts: &ReducedConstants, dom: &BallDomain) -> Result<ReducedSolution> {
    let dim = consts.dim;
    if k == 0 {
        return Err(Error::param("tower depth k must be at least 1"));
    }
    if dom.dim() != dim {
        return Err(Error::param("domain and constants dimensions differ"));
    }
    consts.check()?;
    let xi0 = find_robin_min(dom, &SearchBox::inside_ball(dom, 0.1))?;
    let xi = polish_critical_point(dom, xi0)?;
    let profile = g_profile(dim, 2.0, 9, 1e-8)?;
    let sigma = vec![vec![0.0; dim.n()]; k - 1];
    let phi = consts.convention.factor(dim) * dom.robin(&xi)?;
    let g0 = consts.g(&vec![0.0; dim.n()]);
    let mut roots = Vec::new();
    let mut sign_changes = Vec::new();
    let mut s = Vec::with_capacity(k);
    for i in 1..=k {
        let g = if i == 1 { 0.0 } else { g0 };
        let f = |x: f64| level(consts, i, x, phi, g);
        let df = |x: f64| level_slope(consts, i, x, phi, g);
        let brackets = bracket_scan(f);
        sign_changes.push(brackets.len());
        if brackets.is_empty() {
            return Err(Error::Solvability(format!("level {i} has no sign change on [1e-6, 1e6]")));
        }
        let found: Vec<LevelRoot> = brackets
            .iter()
            .map(|&(a, b)| {
                let r = refine(&f, &df, a, b);
                LevelRoot { level: i, s: r, slope: df(r) }
            })
            .collect();
        let pick = found
            .iter()
            .find(|r| r.s < 1.0 && r.slope > 0.0)
            .or_else(|| found.iter().find(|r| r.slope > 0.0))
            .unwrap_or(&found[0])
            .s;
        s.push(pick);
        roots.extend(found);
    }
    let mut state = ReducedState::new(dim, s, sigma, xi)?;
    state.levels = eval_levels(&state, consts, dom)?;
    state.g_value = eval_g(&state, consts, dom)?;
    state.jac = jacobian_fd(&state, consts, dom)?;
    let residual = state
        .g_value
        .iter()
        .chain(&state.levels)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let trace = state.levels.clone();
    if !(residual < 1e-10) {
        return Err(Error::solver(format!("reduced residual {residual:e} above 1e-10"), trace));
    }
    let singular_values = singular_values(&split_jacobian(&state, consts, dom)?);
    Ok(ReducedSolution {
        state,
        roots,
        sign_changes,
        residual,
        singular_values,
        g_extremum: profile.extremum_at_zero,
    })
}

/// Newton on `∇φ = 0` with a difference Hessian.
fn polish_critical_point(dom: &dyn GreenProvider, mut x: Vec<f64>) -> Result<Vec<f64>> {
    let n = x.len();
    for _ in 0..20 {
        let g = dom.robin_grad(&x)?;
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        let h = 1e-5;
        let mut hess = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut p = x.clone();
            let mut m = x.clone();
            p[c] += h;
            m[c] -= h;
            let (gp, gm) = (dom.robin_grad(&p)?, dom.robin_grad(&m)?);
            for r in 0..n {
                hess[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
            }
        }
        let Some(step) = hess.lu().solve(&DVector::from_vec(g)) else {
            return Err(Error::Search("degenerate Robin Hessian".into()));
        };
        let before = norm(&x);
        for (a, b) in x.iter_mut().zip(step.iter()) {
            *a -= b;
        }
        if step.norm() <= 1e-15 * before.max(1.0) {
            break;
        }
    }
    Ok(x)
}
