use bubbletower::asymptotics::{default_eps_sweep, verify_norm_scaling, NormKind};
use bubbletower::profiles::{f_eps, f_eps_prime, log_log_remainder, Dimension};
use bubbletower::radial::{energy_identity, ls_correction, solve_tower, GridSpec, RadialGrid, SolveOptions};
use bubbletower::reduced::{bracket_scan, solve_reduced, ReducedConstants};
use bubbletower::tower::{mu_schedule, peak_heights, residual_norm, AnnuliDecomposition, TowerConfig};
use bubbletower::{BallDomain, GreenProvider};
use proptest::prelude::*;

fn dim(n: usize) -> Dimension {
    Dimension::new(n).unwrap()
}

fn lnln(u: f64) -> f64 {
    (std::f64::consts::E + u.abs()).ln().ln()
}

proptest! {
    #[test]
    fn nonlinearity_close_to_power(n in 3usize..7, u in -1e6f64..1e6, eps in 1e-4f64..0.5) {
        let d = dim(n);
        let p = d.p();
        let diff = (f_eps(d, u, eps) - f_eps(d, u, 0.0)).abs();
        prop_assert!(diff <= eps * u.abs().powf(p) * lnln(u) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn derivative_bounded_by_power(n in 3usize..7, u in -1e6f64..1e6, eps in 1e-4f64..0.5) {
        let d = dim(n);
        let c = d.p();
        prop_assert!(f_eps_prime(d, u, eps) <= c * u.abs().powf(d.p() - 1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn derivative_close_to_power(n in 3usize..7, u in -1e4f64..1e4, eps in 1e-4f64..0.5) {
        let d = dim(n);
        let a = u.abs();
        let l = (std::f64::consts::E + a).ln();
        let bound = eps * a.powf(d.p() - 1.0) * (d.p() * l.ln() + 1.0 / l);
        prop_assert!((f_eps_prime(d, u, eps) - f_eps_prime(d, u, 0.0)).abs() <= bound * (1.0 + 1e-10) + 1e-300);
    }

    #[test]
    fn log_log_split(lmu in -30.0f64..-0.1, theta in 0.1f64..3.0, u in 1e-2f64..1e2) {
        let mu = lmu.exp();
        let lhs = (std::f64::consts::E + mu.powf(-theta) * u).ln().ln();
        let rhs = (theta * mu.ln().abs()).ln() + log_log_remainder(mu, theta, u).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
    }

    #[test]
    fn green_is_nonnegative(x in prop::array::uniform3(-0.57f64..0.57), y in prop::array::uniform3(-0.57f64..0.57)) {
        let dom = BallDomain::unit(dim(3));
        prop_assume!(x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() > 1e-8);
        prop_assert!(dom.green(&x, &y).unwrap() >= 0.0);
    }

    #[test]
    fn robin_grows_along_rays(theta in 0.0..std::f64::consts::TAU, r1 in 0.0f64..0.95, dr in 0.001f64..0.04) {
        let dom = BallDomain::unit(dim(3));
        let at = |r: f64| dom.robin(&[r * theta.cos(), r * theta.sin(), 0.0]).unwrap();
        prop_assert!(at((r1 + dr).min(0.99)) >= at(r1));
    }

    #[test]
    fn annuli_radii_ordered(l1 in -3.0f64..-1.0, gaps in prop::collection::vec(0.5f64..3.0, 0..4)) {
        let mut mus = vec![10f64.powf(l1)];
        for g in gaps {
            let last = *mus.last().unwrap();
            mus.push(last * 10f64.powf(-g));
        }
        let an = AnnuliDecomposition::new(&mus, 0.5).unwrap();
        prop_assert!(an.radii.windows(2).all(|w| w[1] < w[0]));
        for (i, m) in mus.iter().enumerate() {
            let (a, b) = an.annulus(i + 1);
            prop_assert!(a < *m && *m < b);
        }
    }

    #[test]
    fn tower_heights_alternate(d1 in 0.3f64..2.0, d2 in 0.01f64..0.3, leps in -6.0f64..-3.0) {
        let d = dim(3);
        let eps = leps.exp();
        let dom = BallDomain::unit(d);
        let cfg = TowerConfig::centered(&dom, 2, eps, &[d1, d2]).unwrap();
        let grid = RadialGrid::for_scale(d, cfg.params[1].mu, &GridSpec::default()).unwrap();
        let h = peak_heights(&cfg, &grid).unwrap();
        prop_assert!(h[0] < 0.0 && h[1] > 0.0);
        for (hi, m) in h.iter().zip(cfg.mus()) {
            let r = hi.abs() / (d.alpha() * m.powf(-0.5));
            prop_assert!((r - 1.0).abs() < 0.2, "ratio {r}");
        }
    }

    #[test]
    fn reduced_roots_scale_free(factor in 0.01f64..100.0) {
        let d = dim(3);
        let dom = BallDomain::unit(d);
        let c = ReducedConstants::closed(d);
        let a = solve_reduced(2, &c, &dom).unwrap();
        let b = solve_reduced(2, &c.clone().scaled(factor), &dom).unwrap();
        for (x, y) in a.state.s.iter().zip(&b.state.s) {
            prop_assert!((x / y - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bracket_parity(c in 0.01f64..100.0, b in 0.1f64..10.0, e in 0.2f64..3.0) {
        let f = |s: f64| c * s.powf(e) - b * s.ln().abs();
        let ends = f(1e-6) * f(1e6);
        let count = bracket_scan(f).len();
        if ends < 0.0 {
            prop_assert_eq!(count % 2, 1);
        }
    }
}

#[test]
fn robin_blows_up_at_boundary() {
    let dom = BallDomain::unit(dim(3));
    let mut prev = 0.0;
    for j in 1..8 {
        let delta = 10f64.powi(-j);
        let phi = dom.robin(&[1.0 - delta, 0.0, 0.0]).unwrap();
        assert!(phi > prev);
        assert!(phi * delta > 0.5 / (8.0 * std::f64::consts::PI));
        prev = phi;
    }
}

#[test]
fn log_log_remainder_limit() {
    let (theta, u): (f64, f64) = (0.7, 3.5);
    let limit = u.ln() / theta;
    let g = |l: f64| l * log_log_remainder((-l).exp(), theta, u).unwrap();
    // error ~ c/|ln μ|: extrapolate in 1/|ln μ|
    let (l1, l2) = (200.0, 400.0);
    let extrap = 2.0 * g(l2) - g(l1);
    assert!((g(l2) - limit).abs() < (g(l1) - limit).abs());
    assert!((extrap - limit).abs() < 1e-3 * limit.abs());
}

#[test]
fn energy_identity_holds() {
    let sol = solve_tower(dim(3), 1, 0.07, &[0.74], &SolveOptions::default()).unwrap();
    let (grad, rhs) = energy_identity(&sol);
    assert!((grad / rhs - 1.0).abs() < 1e-8);
}

#[test]
fn scale_converges_at_second_order() {
    let mu = |pd: usize, h: f64| {
        let o = SolveOptions { grid: GridSpec { per_decade: pd, hmax: h, scale_fraction: 40.0 }, ..Default::default() };
        solve_tower(dim(3), 1, 0.05, &[0.74], &o).unwrap().scales[0].mu
    };
    let (a, b, c) = (mu(20, 0.02), mu(40, 0.01), mu(80, 0.005));
    let ratio = (a - b) / (b - c);
    assert!(ratio > 3.0 && ratio < 5.5, "ratio {ratio}");
}

#[test]
fn ansatz_residual_decreases_along_sweep() {
    let d = dim(3);
    let dom = BallDomain::unit(d);
    let sol = solve_reduced(1, &ReducedConstants::closed(d), &dom).unwrap();
    let res: Vec<f64> = [0.05, 0.035, 0.025, 0.0175, 0.0125]
        .iter()
        .map(|&e| {
            let cfg = TowerConfig::from_reduced(&dom, &sol.state, e, 0.1).unwrap();
            let g = RadialGrid::for_scale(d, cfg.params[0].mu, &GridSpec::default()).unwrap();
            residual_norm(&dom, &cfg, &g).unwrap()
        })
        .collect();
    assert!(res[1..].windows(2).all(|w| w[1] < w[0]), "{res:?}");
}

#[test]
fn perturbed_dilation_is_worse() {
    let d = dim(3);
    let dom = BallDomain::unit(d);
    let eps = 0.01;
    let s = solve_reduced(1, &ReducedConstants::closed(d), &dom).unwrap().state.s[0];
    let measure = |d1: f64| {
        let cfg = TowerConfig::centered(&dom, 1, eps, &[d1]).unwrap();
        let g = RadialGrid::for_scale(d, cfg.params[0].mu, &GridSpec::default()).unwrap();
        let r = residual_norm(&dom, &cfg, &g).unwrap();
        let c = ls_correction(&g, eps, &mu_schedule(d, 1, eps, &[d1]).unwrap()).unwrap().c[0].abs();
        (r, c)
    };
    let (r0, c0) = measure(s);
    let (r1, c1) = measure(2.0 * s);
    assert!(r1 > r0, "{r1} vs {r0}");
    assert!(c1 > c0, "{c1} vs {c0}");
}

#[test]
fn norm_fit_is_stable() {
    let r = verify_norm_scaling(dim(3), NormKind::PsiH, 2.0, &default_eps_sweep()).unwrap();
    assert!(r.stability.unwrap() < 0.05);
}
