//! Radial finite-volume solver for `-u'' - (n-1)/r u' = f_ε(u)` on `(0, 1)`
//! with `u'(0) = 0`, `u(1) = 0`.
//!
//! Cells are centered at the nodes with faces at the midpoints, so the
//! stiffness matrix `S = diag(vol) A` is symmetric and `⟨u, v⟩ = uᵀ S v` is
//! the discrete Dirichlet inner product (per unit sphere area).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{f_eps, f_eps_prime, Dimension};
use crate::projection::{ppsi0_centered, pchi_centered, pu_centered};
use crate::tower::schedule_t;

/// Nodes `0 = r_0 < r_1 < ... < r_N = 1`: geometric from `r_1` with a fixed
/// number of nodes per decade, then uniform once the spacing reaches `hmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    dim: Dimension,
    nodes: Vec<f64>,
    // cell volumes over |S^{n-1}|; the Dirichlet row carries 1
    vol: Vec<f64>,
    // face weights r_{i+1/2}^{n-1} / (r_{i+1} - r_i)
    wf: Vec<f64>,
}

/// Grid resolution settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub per_decade: usize,
    pub hmax: f64,
    /// first node at about `smallest scale / scale_fraction`
    pub scale_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { per_decade: 40, hmax: 0.01, scale_fraction: 40.0 }
    }
}

impl RadialGrid {
    pub fn geometric(dim: Dimension, rmin: f64, per_decade: usize, hmax: f64) -> Result<Self> {
        if !(rmin > 0.0 && rmin < 0.5) {
            return Err(Error::param(format!("first grid node {rmin} must lie in (0, 0.5)")));
        }
        if per_decade == 0 || !(hmax > 0.0 && hmax <= 0.5) {
            return Err(Error::param("grid needs per_decade >= 1 and hmax in (0, 0.5]"));
        }
        let q = 10f64.powf(1.0 / per_decade as f64);
        let mut nodes = vec![0.0];
        let mut x = rmin;
        while x < 1.0 - 1e-12 {
            nodes.push(x);
            x = (x * q).min(x + hmax);
        }
        let len = nodes.len();
        if len > 2 && 1.0 - nodes[len - 1] < 0.5 * (nodes[len - 1] - nodes[len - 2]) {
            nodes.pop();
        }
        nodes.push(1.0);
        Ok(Self::from_nodes(dim, nodes))
    }

    /// Grid resolving the length scale `mu_min`; the first node is `mu_min /
    /// scale_fraction` rounded down to a quarter decade, so nearby scales
    /// share one grid.
    pub fn for_scale(dim: Dimension, mu_min: f64, spec: &GridSpec) -> Result<Self> {
        if !(mu_min > 0.0) || !mu_min.is_finite() {
            return Err(Error::param(format!("grid scale {mu_min} must be positive")));
        }
        Self::geometric(dim, quantized_rmin(mu_min, spec), spec.per_decade, spec.hmax)
    }

    fn from_nodes(dim: Dimension, nodes: Vec<f64>) -> Self {
        let n = dim.n() as i32;
        let len = nodes.len();
        let mut faces = Vec::with_capacity(len + 1);
        faces.push(0.0);
        for w in nodes.windows(2) {
            faces.push(0.5 * (w[0] + w[1]));
        }
        let mut vol: Vec<f64> = (0..len - 1)
            .map(|i| (faces[i + 1].powi(n) - faces[i].powi(n)) / n as f64)
            .collect();
        vol.push(1.0);
        let wf = (0..len - 1)
            .map(|i| faces[i + 1].powi(n - 1) / (nodes[i + 1] - nodes[i]))
            .collect();
        Self { dim, nodes, vol, wf }
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn rmin(&self) -> f64 {
        self.nodes[1]
    }

    /// Number of nodes with `0 < r < mu`.
    pub fn nodes_below(&self, mu: f64) -> usize {
        self.nodes[1..].iter().take_while(|&&r| r < mu).count()
    }

    /// `(lower, diag, upper)` of `A = -Δ_h` with the Dirichlet row at `r = 1`.
    fn laplacian_bands(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let len = self.len();
        let mut lo = vec![0.0; len];
        let mut di = vec![0.0; len];
        let mut up = vec![0.0; len];
        for i in 0..len - 1 {
            let v = self.vol[i];
            up[i] = -self.wf[i] / v;
            di[i] = self.wf[i] / v;
            if i > 0 {
                lo[i] = -self.wf[i - 1] / v;
                di[i] += self.wf[i - 1] / v;
            }
        }
        di[len - 1] = 1.0;
        (lo, di, up)
    }

    /// `(S v)_i = vol_i (A v)_i` at the interior nodes.
    fn stiffness_apply(&self, v: &[f64], i: usize) -> f64 {
        let mut s = self.wf[i] * (v[i] - v[i + 1]);
        if i > 0 {
            s += self.wf[i - 1] * (v[i] - v[i - 1]);
        }
        s
    }

    /// Discrete Dirichlet inner product `Σ_{i<N} u_i (S v)_i`.
    pub fn energy_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.len() - 1).map(|i| u[i] * self.stiffness_apply(v, i)).sum()
    }

    pub fn energy_norm(&self, u: &[f64]) -> f64 {
        self.energy_inner(u, u).max(0.0).sqrt()
    }

    /// `Σ_{i<N} vol_i g_i`, the discrete `∫_0^1 g r^{n-1} dr`.
    pub fn volume_sum(&self, g: &[f64]) -> f64 {
        (0..self.len() - 1).map(|i| self.vol[i] * g[i]).sum()
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.vol[..self.len() - 1]
    }
}

fn quantized_rmin(mu_min: f64, spec: &GridSpec) -> f64 {
    let target = (mu_min / spec.scale_fraction).min(1e-2);
    10f64.powf((4.0 * target.log10()).floor() / 4.0)
}

/// `-Δ_h u` at interior nodes; the last entry is the Dirichlet row `u_N`.
pub fn apply_radial_laplacian(grid: &RadialGrid, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != grid.len() {
        return Err(Error::param(format!("{} values on a grid of {} nodes", u.len(), grid.len())));
    }
    let len = grid.len();
    let mut out: Vec<f64> = (0..len - 1).map(|i| grid.stiffness_apply(u, i) / grid.vol[i]).collect();
    out.push(u[len - 1]);
    Ok(out)
}

/// LU factors of a tridiagonal matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lo: Vec<f64>,
    up_mod: Vec<f64>,
    piv: Vec<f64>,
}

impl Tridiagonal {
    /// Factor the matrix with sub-diagonal `lo[1..]`, diagonal `di` and
    /// super-diagonal `up[..n-1]` without pivoting.
    pub fn factor(lo: &[f64], di: &[f64], up: &[f64]) -> Result<Self> {
        let n = di.len();
        let mut up_mod = vec![0.0; n];
        let mut piv = vec![0.0; n];
        for i in 0..n {
            let m = if i == 0 { di[0] } else { di[i] - lo[i] * up_mod[i - 1] };
            let scale = di[i].abs() + lo[i].abs() + up[i].abs();
            if !(m.abs() > 1e-15 * scale) || !m.is_finite() {
                return Err(Error::solver(
                    format!("singular tridiagonal matrix at row {i}; continue from a nearby parameter"),
                    vec![],
                ));
            }
            piv[i] = m;
            up_mod[i] = if i + 1 < n { up[i] / m } else { 0.0 };
        }
        Ok(Self { lo: lo.to_vec(), up_mod, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        x[0] = b[0] / self.piv[0];
        for i in 1..n {
            x[i] = (b[i] - self.lo[i] * x[i - 1]) / self.piv[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.up_mod[i] * x[i + 1];
        }
        x
    }
}

/// Solve `-Δ_h w = rhs` with `w(1) = 0`.
pub fn solve_dirichlet(grid: &RadialGrid, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != grid.len() {
        return Err(Error::param("right-hand side length differs from the grid"));
    }
    let (lo, di, up) = grid.laplacian_bands();
    let mut b = rhs.to_vec();
    *b.last_mut().expect("nonempty") = 0.0;
    Ok(Tridiagonal::factor(&lo, &di, &up)?.solve(&b))
}

/// `F(u) = -Δ_h u - f_ε(u)` with the Dirichlet row, and `max |f_ε(u)|`.
fn pde_residual(grid: &RadialGrid, lap: &(Vec<f64>, Vec<f64>, Vec<f64>), eps: f64, u: &[f64]) -> (Vec<f64>, f64) {
    let (lo, di, up) = lap;
    let len = grid.len();
    let mut fmax: f64 = 0.0;
    let mut out = vec![0.0; len];
    for i in 0..len - 1 {
        let mut a = di[i] * u[i] + up[i] * u[i + 1];
        if i > 0 {
            a += lo[i] * u[i - 1];
        }
        let f = f_eps(grid.dim, u[i], eps);
        fmax = fmax.max(f.abs());
        out[i] = a - f;
    }
    out[len - 1] = u[len - 1];
    (out, fmax)
}

fn jacobian(grid: &RadialGrid, lap: &(Vec<f64>, Vec<f64>, Vec<f64>), eps: f64, u: &[f64]) -> Result<Tridiagonal> {
    let (lo, di, up) = lap;
    let len = grid.len();
    let mut d = di.clone();
    for i in 0..len - 1 {
        d[i] -= f_eps_prime(grid.dim, u[i], eps);
    }
    Tridiagonal::factor(lo, &d, up)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Per-bubble data read off a discrete solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedScale {
    /// radius of the extremum of `|u|` on the bubble's nodal interval
    pub radius: f64,
    /// signed value at that extremum
    pub height: f64,
    /// scale with `|height| = α_n μ^{-(n-2)/2}`
    pub mu: f64,
    /// `μ / (ε/|ln ε|^2)^{(2i-1)/(n-2)}`
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub eps: f64,
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
    /// `max |F| / max |f_ε(u)|`
    pub residual: f64,
    /// outermost bubble first
    pub scales: Vec<ExtractedScale>,
    /// zeros of `u` in `(0, 1)`, increasing
    pub nodal_radii: Vec<f64>,
    /// dilations of the tower whose correction is orthogonal to the kernel
    pub ls_d: Vec<f64>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 60 }
    }
}

/// Damped Newton on `F(u) = -Δ_h u - f_ε(u)`, converged when
/// `max|F| < tol max|f_ε(u)| + 1e-12`. The step length is accepted when the
/// simplified Newton correction contracts in the energy norm.
pub fn newton_solve(grid: &RadialGrid, eps: f64, initial: &[f64], opts: &NewtonOptions) -> Result<RadialSolution> {
    check_eps(eps)?;
    if initial.len() != grid.len() {
        return Err(Error::param("initial guess length differs from the grid"));
    }
    let lap = grid.laplacian_bands();
    let mut u = initial.to_vec();
    *u.last_mut().expect("nonempty") = 0.0;
    let mut trace = Vec::new();
    let mut lam: f64 = 1.0;
    let (mut f, mut fmax) = pde_residual(grid, &lap, eps, &u);
    for it in 0..=opts.max_iter {
        let res = max_abs(&f);
        trace.push(res / fmax.max(f64::MIN_POSITIVE));
        if res < opts.tol * fmax + 1e-12 {
            return Ok(RadialSolution {
                grid: grid.clone(),
                values: u,
                eps,
                k: 0,
                converged: true,
                iterations: it,
                residual: res / fmax.max(f64::MIN_POSITIVE),
                scales: vec![],
                nodal_radii: vec![],
                ls_d: vec![],
                trace,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let jac = jacobian(grid, &lap, eps, &u)?;
        let du: Vec<f64> = jac.solve(&f).iter().map(|v| -v).collect();
        let s0 = grid.energy_norm(&du).max(f64::MIN_POSITIVE);
        lam = (4.0 * lam).min(1.0);
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + lam * b).collect();
            let (ft, fmt) = pde_residual(grid, &lap, eps, &trial);
            let s1 = grid.energy_norm(&jac.solve(&ft));
            if s1 <= (1.0 - lam / 4.0) * s0 || (max_abs(&ft) < opts.tol * fmt + 1e-12) {
                u = trial;
                f = ft;
                fmax = fmt;
                break;
            }
            lam *= 0.5;
            if lam < 1e-8 {
                return Err(Error::solver("Newton step length underflow", trace));
            }
        }
    }
    Err(Error::solver(format!("Newton did not converge in {} iterations", opts.max_iter), trace))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

/// Settings of the continuation solve from the tower ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub grid: GridSpec,
    pub tol: f64,
    /// tolerance of the intermediate homotopy stages
    pub stage_tol: f64,
    pub max_newton: usize,
    pub max_total: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { grid: GridSpec::default(), tol: 1e-9, stage_tol: 1e-6, max_newton: 50, max_total: 4000 }
    }
}

/// Nodal tower `Σ (-1)^i PU_{μ_i}` on the unit ball.
pub fn tower_nodal(grid: &RadialGrid, mus: &[f64]) -> Vec<f64> {
    let dim = grid.dim;
    grid.nodes
        .iter()
        .map(|&r| {
            mus.iter()
                .enumerate()
                .map(|(i, &mu)| sign(i + 1) * pu_centered(dim, mu, r, 1.0))
                .sum()
        })
        .collect()
}

fn sign(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Unknowns and fixed data of the bordered system.
struct Bordered<'a> {
    grid: &'a RadialGrid,
    lap: (Vec<f64>, Vec<f64>, Vec<f64>),
    eps: f64,
    tv: &'a [f64],
}

struct BorderedState {
    mus: Vec<f64>,
    u: Vec<f64>,
    f: Vec<f64>,
    rel: f64,
}

impl Bordered<'_> {
    fn mus(&self, logd: &[f64]) -> Vec<f64> {
        self.tv.iter().zip(logd).map(|(t, l)| t * l.exp()).collect()
    }

    fn state(&self, phi: &[f64], logd: &[f64], shift: &[f64], weight: f64) -> BorderedState {
        let mus = self.mus(logd);
        let v = tower_nodal(self.grid, &mus);
        let u: Vec<f64> = v.iter().zip(phi).map(|(a, b)| a + b).collect();
        let (mut f, fmax) = pde_residual(self.grid, &self.lap, self.eps, &u);
        if weight != 0.0 {
            for (a, s) in f.iter_mut().zip(shift) {
                *a -= weight * s;
            }
        }
        let rel = max_abs(&f) / fmax.max(f64::MIN_POSITIVE);
        BorderedState { mus, u, f, rel }
    }

    fn kernel(&self, mus: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let dim = self.grid.dim;
        let z = mus
            .iter()
            .map(|&m| self.grid.nodes.iter().map(|&r| ppsi0_centered(dim, m, r, 1.0)).collect())
            .collect();
        let c = mus
            .iter()
            .map(|&m| self.grid.nodes.iter().map(|&r| pchi_centered(dim, m, r, 1.0)).collect())
            .collect();
        (z, c)
    }

    /// Newton on `F(V_d + φ) - weight · shift = 0`, `⟨φ, Pψ^0_i⟩ = 0` in the
    /// unknowns `(φ, ln d)`.
    fn newton(
        &self,
        phi: &mut Vec<f64>,
        logd: &mut Vec<f64>,
        shift: &[f64],
        weight: f64,
        tol: f64,
        max_iter: usize,
    ) -> (bool, usize, f64) {
        let k = logd.len();
        let grid = self.grid;
        let mut st = self.state(phi, logd, shift, weight);
        let mut lam: f64 = 1.0;
        for it in 0..max_iter {
            if st.rel < tol {
                return (true, it, st.rel);
            }
            let (z, chi) = self.kernel(&st.mus);
            let jac = match jacobian(grid, &self.lap, self.eps, &st.u) {
                Ok(j) => j,
                Err(_) => return (false, it, st.rel),
            };
            // ∂u/∂(ln d_i) = (-1)^i Pψ^0_i; eliminating φ leaves a k×k system
            let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    m[(i, j)] = -sign(j + 1) * grid.energy_inner(&z[j], &z[i]);
                }
                m[(i, i)] += grid.energy_inner(phi, &chi[i]);
            }
            let lu = m.lu();
            let solve = |f: &[f64], phi_now: &[f64]| -> Option<(Vec<f64>, Vec<f64>)> {
                let x0: Vec<f64> = jac.solve(f).iter().map(|v| -v).collect();
                let rhs = nalgebra::DVector::from_iterator(
                    k,
                    (0..k).map(|i| -grid.energy_inner(phi_now, &z[i]) - grid.energy_inner(&x0, &z[i])),
                );
                let dl = lu.solve(&rhs)?;
                let mut dphi = x0;
                for j in 0..k {
                    for (a, zj) in dphi.iter_mut().zip(&z[j]) {
                        *a -= sign(j + 1) * zj * dl[j];
                    }
                }
                Some((dphi, dl.iter().cloned().collect()))
            };
            let unorm = grid.energy_inner(&st.u, &st.u).max(f64::MIN_POSITIVE);
            let norm = |dp: &[f64], dl: &[f64]| -> f64 {
                (grid.energy_inner(dp, dp) / unorm + dl.iter().map(|v| v * v).sum::<f64>()).sqrt()
            };
            let Some((dphi, dl)) = solve(&st.f, phi) else {
                return (false, it, st.rel);
            };
            let s0 = norm(&dphi, &dl);
            let dlmax = dl.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            lam = (4.0 * lam).min(1.0).min(0.5 / dlmax);
            loop {
                let phi_t: Vec<f64> = phi.iter().zip(&dphi).map(|(a, b)| a + lam * b).collect();
                let logd_t: Vec<f64> = logd.iter().zip(&dl).map(|(a, b)| a + lam * b).collect();
                let st_t = self.state(&phi_t, &logd_t, shift, weight);
                let accept = st_t.rel < tol
                    || match solve(&st_t.f, &phi_t) {
                        Some((dp2, dl2)) => norm(&dp2, &dl2) <= (1.0 - lam / 4.0) * s0,
                        None => false,
                    };
                if accept {
                    *phi = phi_t;
                    *logd = logd_t;
                    st = st_t;
                    break;
                }
                lam *= 0.5;
                if lam < 1e-6 {
                    return (false, it, st.rel);
                }
            }
        }
        (st.rel < tol, max_iter, st.rel)
    }
}

/// Linear interpolation in `ln r`, constant beyond the old first node.
fn transfer(old: &RadialGrid, vals: &[f64], new: &RadialGrid) -> Vec<f64> {
    let on = &old.nodes;
    let mut out = Vec::with_capacity(new.len());
    let mut j = 1;
    for &r in &new.nodes {
        if r == 0.0 {
            out.push(vals[0]);
            continue;
        }
        if r <= on[1] {
            out.push(vals[1]);
            continue;
        }
        while j + 1 < on.len() && on[j + 1] < r {
            j += 1;
        }
        if j + 1 >= on.len() {
            out.push(vals[on.len() - 1]);
            continue;
        }
        let (a, b) = (on[j].ln(), on[j + 1].ln());
        let w = (r.ln() - a) / (b - a);
        out.push((1.0 - w) * vals[j] + w * vals[j + 1]);
    }
    out
}

/// Continuation solve from the tower ansatz `V = Σ (-1)^i PU_{μ_i}` with
/// `μ_i = (ε/|ln ε|^2)^{(2i-1)/(n-2)} d_i`.
///
/// The unknowns are the correction `φ ⊥ Pψ^0_i` and `ln d_i`. The residual is
/// deformed from the ansatz, `F(u) - (1-λ) F(V_{d0})`, with `λ` stepped from 0
/// to 1; the grid follows the smallest scale.
pub fn solve_tower(dim: Dimension, k: usize, eps: f64, d0: &[f64], opts: &SolveOptions) -> Result<RadialSolution> {
    check_eps(eps)?;
    if k == 0 || d0.len() != k || d0.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::param("need k >= 1 positive initial dilations"));
    }
    let t = schedule_t(eps)?;
    let tv: Vec<f64> = (1..=k).map(|i| t.powf((2 * i - 1) as f64 / (dim.nf() - 2.0))).collect();
    let mut logd: Vec<f64> = d0.iter().map(|d| d.ln()).collect();
    let mu_min = |logd: &[f64]| tv[k - 1] * logd[k - 1].exp();

    let mut grid = RadialGrid::for_scale(dim, mu_min(&logd), &opts.grid)?;
    let mut pb = Bordered { grid: &grid, lap: grid.laplacian_bands(), eps, tv: &tv };
    let v0 = tower_nodal(&grid, &pb.mus(&logd));
    let mut shift = pde_residual(&grid, &pb.lap, eps, &v0).0;
    let mut phi = vec![0.0; grid.len()];
    let mut lam_h: f64 = 0.0;
    let mut dh: f64 = 0.1;
    let mut total = 0;
    let mut trace = Vec::new();
    let mut canonical_passes = 0;
    loop {
        let target = if lam_h >= 1.0 { 1.0 } else { (lam_h + dh).min(1.0) };
        let tol = if target >= 1.0 { opts.tol } else { opts.stage_tol };
        let mut phi_t = phi.clone();
        let mut logd_t = logd.clone();
        let (ok, its, rel) = pb.newton(&mut phi_t, &mut logd_t, &shift, 1.0 - target, tol, opts.max_newton);
        total += its;
        trace.push(rel);
        if total > opts.max_total {
            return Err(Error::solver("continuation exceeded its iteration budget", trace));
        }
        if !ok {
            dh *= 0.5;
            if dh < 1e-4 || lam_h >= 1.0 {
                return Err(Error::solver(
                    format!("continuation from the tower ansatz stalled at homotopy parameter {lam_h:.4}"),
                    trace,
                ));
            }
            continue;
        }
        lam_h = target;
        phi = phi_t;
        logd = logd_t;
        dh = (2.0 * dh).min(0.5);
        let mu = mu_min(&logd);
        let rmin = grid.rmin();
        let wanted = quantized_rmin(mu, &opts.grid);
        let drifted = rmin > mu / 20.0 || rmin < mu / 80.0;
        let off_canonical = lam_h >= 1.0 && (rmin / wanted - 1.0).abs() > 1e-9;
        if drifted || off_canonical {
            if lam_h >= 1.0 {
                canonical_passes += 1;
                if canonical_passes > 4 {
                    return Err(Error::solver("grid selection does not settle", trace));
                }
            }
            let new_grid = RadialGrid::for_scale(dim, mu, &opts.grid)?;
            let new_phi = transfer(&grid, &phi, &new_grid);
            grid = new_grid;
            pb = Bordered { grid: &grid, lap: grid.laplacian_bands(), eps, tv: &tv };
            phi = new_phi;
            let st = pb.state(&phi, &logd, &[], 0.0);
            // keep the current state an exact solution of the deformed problem
            shift = if lam_h < 1.0 {
                st.f.iter().map(|v| v / (1.0 - lam_h)).collect()
            } else {
                vec![0.0; grid.len()]
            };
            continue;
        }
        if lam_h >= 1.0 {
            break;
        }
    }
    let mus = pb.mus(&logd);
    let v = tower_nodal(&grid, &mus);
    let u: Vec<f64> = v.iter().zip(&phi).map(|(a, b)| a + b).collect();
    let mut sol = polish(&grid, eps, u, opts.tol)?;
    sol.iterations += total;
    trace.append(&mut sol.trace);
    sol.trace = trace;
    sol.k = k;
    sol.ls_d = logd.iter().map(|l| l.exp()).collect();
    let (scales, radii) = extract_scales_raw(&grid, &sol.values, k, eps)?;
    sol.scales = scales;
    sol.nodal_radii = radii;
    Ok(sol)
}

/// A few extra Newton steps past the tolerance, kept only while they reduce
/// the residual.
fn polish(grid: &RadialGrid, eps: f64, u: Vec<f64>, tol: f64) -> Result<RadialSolution> {
    let lap = grid.laplacian_bands();
    let (f, fmax) = pde_residual(grid, &lap, eps, &u);
    let mut best = (max_abs(&f) / fmax.max(f64::MIN_POSITIVE), u, f);
    let mut extra = 0;
    for _ in 0..3 {
        let jac = jacobian(grid, &lap, eps, &best.1)?;
        let du = jac.solve(&best.2);
        let trial: Vec<f64> = best.1.iter().zip(&du).map(|(a, b)| a - b).collect();
        let (ft, fm) = pde_residual(grid, &lap, eps, &trial);
        let rel = max_abs(&ft) / fm.max(f64::MIN_POSITIVE);
        if rel < best.0 {
            best = (rel, trial, ft);
            extra += 1;
        } else {
            break;
        }
    }
    if !(best.0 < tol) {
        return Err(Error::solver("solution lost accuracy on the final grid", vec![best.0]));
    }
    Ok(RadialSolution {
        grid: grid.clone(),
        values: best.1,
        eps,
        k: 0,
        converged: true,
        iterations: extra,
        residual: best.0,
        scales: vec![],
        nodal_radii: vec![],
        ls_d: vec![],
        trace: vec![best.0],
    })
}

/// Nodal intervals, extremal heights and the scales they imply, outermost
/// bubble first.
pub fn extract_scales(sol: &RadialSolution, k: usize) -> Result<(Vec<ExtractedScale>, Vec<f64>)> {
    extract_scales_raw(&sol.grid, &sol.values, k, sol.eps)
}

pub fn extract_scales_raw(grid: &RadialGrid, u: &[f64], k: usize, eps: f64) -> Result<(Vec<ExtractedScale>, Vec<f64>)> {
    let dim = grid.dim;
    let r = &grid.nodes;
    let interior = &u[..u.len() - 1];
    // sign-constant runs from the center outward
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut radii = Vec::new();
    let mut start = 0;
    let mut last_sign = 0.0;
    for (i, &v) in interior.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            runs.push((start, i));
            start = i;
            let j = (0..i).rev().find(|&j| interior[j] != 0.0).unwrap_or(i - 1);
            let w = interior[j] / (interior[j] - v);
            radii.push(r[j] + w * (r[i] - r[j]));
        }
        last_sign = s;
    }
    runs.push((start, interior.len()));
    if runs.len() != k {
        return Err(Error::Structure(format!(
            "found {} sign-definite intervals, expected {k}",
            runs.len()
        )));
    }
    let t = schedule_t(eps)?;
    let a = dim.half_nm2();
    let mut scales = Vec::with_capacity(k);
    for (j, &(s, e)) in runs.iter().enumerate().rev() {
        let i = k - j;
        let (imax, _) = interior[s..e]
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (q, v)| if v.abs() > acc.1 { (q, v.abs()) } else { acc });
        let idx = s + imax;
        let height = interior[idx];
        let mu = (dim.alpha() / height.abs()).powf(1.0 / a);
        scales.push(ExtractedScale {
            radius: r[idx],
            height,
            mu,
            d: mu / t.powf((2 * i - 1) as f64 / (dim.nf() - 2.0)),
        });
    }
    Ok((scales, radii))
}

/// `(∫|∇u|^2, ∫ u f_ε(u))` over the unit ball.
pub fn energy_identity(sol: &RadialSolution) -> (f64, f64) {
    let g = &sol.grid;
    let dim = g.dim;
    let w = dim.sphere_area();
    let uf: Vec<f64> = sol.values.iter().map(|&v| v * f_eps(dim, v, sol.eps)).collect();
    (w * g.energy_inner(&sol.values, &sol.values), w * g.volume_sum(&uf))
}

/// Result of the fixed-dilation correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsCorrection {
    pub phi: Vec<f64>,
    /// multipliers of `-Δ Pψ^0_i`
    pub c: Vec<f64>,
    pub iterations: usize,
    /// ratios of successive update norms
    pub ratios: Vec<f64>,
    /// `⟨φ, Pψ^0_i⟩ / (‖φ‖ ‖Pψ^0_i‖)`
    pub orthogonality: Vec<f64>,
    /// `‖φ‖` in the Dirichlet norm of the unit ball
    pub phi_norm: f64,
}

/// Discrete correction at fixed dilations: `φ ⊥ Pψ^0_i` with
/// `-Δ_h(V + φ) - f_ε(V + φ) = Σ c_i (-Δ_h) Pψ^0_i`, iterated by Newton until
/// the update norm falls below `1e-10 max(1, ‖V‖)`.
pub fn ls_correction(grid: &RadialGrid, eps: f64, mus: &[f64]) -> Result<LsCorrection> {
    check_eps(eps)?;
    let k = mus.len();
    if k == 0 {
        return Err(Error::param("ls_correction needs at least one bubble"));
    }
    let dim = grid.dim;
    let lap = grid.laplacian_bands();
    let v = tower_nodal(grid, mus);
    let z: Vec<Vec<f64>> = mus
        .iter()
        .map(|&m| grid.nodes.iter().map(|&r| ppsi0_centered(dim, m, r, 1.0)).collect())
        .collect();
    let az: Vec<Vec<f64>> = z
        .iter()
        .map(|zi| {
            let mut a = apply_radial_laplacian(grid, zi).expect("lengths match");
            *a.last_mut().expect("nonempty") = 0.0;
            a
        })
        .collect();
    let vnorm = grid.energy_norm(&v);
    let mut phi = vec![0.0; grid.len()];
    let mut c = vec![0.0; k];
    let mut ratios = Vec::new();
    let mut prev: Option<f64> = None;
    let mut stall = 0;
    for it in 1..=100 {
        let u: Vec<f64> = v.iter().zip(&phi).map(|(a, b)| a + b).collect();
        let (mut f, _) = pde_residual(grid, &lap, eps, &u);
        for i in 0..k {
            for (a, b) in f.iter_mut().zip(&az[i]) {
                *a -= c[i] * b;
            }
        }
        let jac = jacobian(grid, &lap, eps, &u)?;
        let x0: Vec<f64> = jac.solve(&f).iter().map(|v| -v).collect();
        let xs: Vec<Vec<f64>> = az.iter().map(|a| jac.solve(a)).collect();
        let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = grid.energy_inner(&xs[j], &z[i]);
            }
        }
        let rhs = nalgebra::DVector::from_iterator(
            k,
            (0..k).map(|i| -grid.energy_inner(&phi, &z[i]) - grid.energy_inner(&x0, &z[i])),
        );
        let dc = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::solver("kernel Gram matrix is singular", vec![]))?;
        let mut dphi = x0;
        for j in 0..k {
            for (a, b) in dphi.iter_mut().zip(&xs[j]) {
                *a += dc[j] * b;
            }
        }
        let un = grid.energy_norm(&dphi);
        for (a, b) in phi.iter_mut().zip(&dphi) {
            *a += b;
        }
        for (a, b) in c.iter_mut().zip(dc.iter()) {
            *a += b;
        }
        let ratio = prev.map(|p| un / p.max(f64::MIN_POSITIVE));
        prev = Some(un);
        if un < 1e-10 * vnorm.max(1.0) {
            let pn = grid.energy_norm(&phi);
            let orthogonality = z
                .iter()
                .map(|zi| {
                    let d = pn * grid.energy_norm(zi);
                    if d > 0.0 {
                        grid.energy_inner(&phi, zi) / d
                    } else {
                        0.0
                    }
                })
                .collect();
            return Ok(LsCorrection {
                phi,
                c,
                iterations: it,
                ratios,
                orthogonality,
                phi_norm: dim.sphere_area().sqrt() * pn,
            });
        }
        if let Some(q) = ratio {
            ratios.push(q);
            stall = if q >= 0.95 { stall + 1 } else { 0 };
            if stall >= 5 {
                return Err(Error::NonContraction { ratio: q });
            }
        }
    }
    Err(Error::NonContraction { ratio: ratios.last().copied().unwrap_or(1.0) })
}

/// How consecutive points of a sweep are started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartMode {
    /// each point starts from the previous point's dilations
    Warm,
    /// every point starts from the same dilations; points run in parallel
    Cold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub eps: f64,
    pub outcome: std::result::Result<RadialSolution, Error>,
}

/// Solve along a decreasing `eps` grid.
pub fn sweep_epsilon(
    dim: Dimension,
    k: usize,
    eps_grid: &[f64],
    d0: &[f64],
    mode: StartMode,
    opts: &SolveOptions,
) -> Result<Vec<SweepPoint>> {
    if eps_grid.is_empty() || eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("eps grid must be nonempty and strictly decreasing"));
    }
    match mode {
        StartMode::Cold => Ok(eps_grid
            .par_iter()
            .map(|&eps| SweepPoint { eps, outcome: solve_tower(dim, k, eps, d0, opts) })
            .collect()),
        StartMode::Warm => {
            let mut out = Vec::with_capacity(eps_grid.len());
            let mut d = d0.to_vec();
            for (j, &eps) in eps_grid.iter().enumerate() {
                let outcome = solve_tower(dim, k, eps, &d, opts);
                match &outcome {
                    Ok(sol) => d = sol.ls_d.clone(),
                    Err(e) if j == 0 => {
                        return Err(Error::solver(
                            format!("first sweep point eps = {eps} failed ({e}); start the sweep at a larger eps"),
                            vec![],
                        ))
                    }
                    Err(_) => {}
                }
                out.push(SweepPoint { eps, outcome });
            }
            Ok(out)
        }
    }
}
