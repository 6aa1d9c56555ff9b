use bubbletower::asymptotics::{
    verify_nonlinear_interactions, verify_norm_scaling, verify_projection_and_gram, Interaction, NormKind,
    VerifyReport,
};
use bubbletower::constants::{constants_row, g_closed, g_profile};
use bubbletower::radial::{solve_tower, sweep_epsilon, RadialGrid, RadialSolution};
use bubbletower::reduced::{eval_g, jacobian_fd, singular_values, solve_reduced, ReducedConstants};
use bubbletower::tower::{admissible_eta, peak_heights, residual_norm, TowerConfig};
use bubbletower::{BallDomain, Dimension, GreenProvider};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};
use crate::report::{fmt_f64, manifest, write_all, Artifact, Cell, Table};

/// What a command produced. Failed points of a sweep are listed in
/// `failures`; the artifacts still hold the rows of the others.
#[derive(Debug, Default)]
pub struct Output {
    pub artifacts: Vec<Artifact>,
    pub stdout: String,
    pub failures: Vec<(String, CliError)>,
    pub points: usize,
}

fn dim(cfg: &RunConfig) -> Result<Dimension> {
    Ok(Dimension::new(cfg.n)?)
}

fn domain(cfg: &RunConfig) -> Result<BallDomain> {
    Ok(BallDomain::new(dim(cfg)?, cfg.center_or_origin(), cfg.radius)?)
}

fn require_unit_ball(dom: &BallDomain) -> Result<()> {
    if dom.is_unit_centered() {
        Ok(())
    } else {
        Err(bubbletower::Error::Unsupported("radial commands need the unit ball centered at the origin".into()).into())
    }
}

/// Dilations, drifts and center of the tower: the configured dilations at
/// the domain center, or the reduced root.
fn seed(cfg: &RunConfig, dom: &BallDomain) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let n = cfg.n;
    if let Some(d) = &cfg.d {
        return Ok((d.clone(), vec![vec![0.0; n]; cfg.k], dom.center().to_vec()));
    }
    let sol = solve_reduced(cfg.k, &ReducedConstants::closed(dom.dim()).with_convention(cfg.convention), dom)?;
    let st = sol.state;
    let close = st.xi.iter().zip(dom.center()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= 1e-12 * dom.radius();
    let xi = if close { dom.center().to_vec() } else { st.xi.clone() };
    Ok((st.dilations(), st.all_sigma(), xi))
}

fn numbered(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("{prefix}_{i}")).collect()
}

fn constants(cfg: &RunConfig) -> Result<Output> {
    let d = dim(cfg)?;
    let row = constants_row(d, cfg.quad_tol)?;
    let mut t = Table::new(["quantity", "value", "closed_form", "error_estimate"]);
    for i in 0..4 {
        t.push(vec![
            Cell::S(format!("a{}", i + 1)),
            row.a[i].into(),
            row.a_closed[i].into(),
            row.a_error[i].into(),
        ]);
    }
    t.push(vec!["a4_literal".into(), row.a4_literal.into(), Cell::Empty, Cell::Empty]);
    t.push(vec!["g0".into(), row.g0.into(), g_closed(d, 0.0).into(), Cell::Empty]);
    t.push(vec!["c_0".into(), row.c[0].into(), Cell::Empty, Cell::Empty]);
    t.push(vec!["c_h".into(), row.c[1].into(), Cell::Empty, Cell::Empty]);
    let prof = g_profile(d, 3.0, 31, cfg.quad_tol)?;
    let mut g = Table::new(["sigma", "g", "g_closed"]);
    for (r, v) in prof.radii.iter().zip(&prof.values) {
        g.push(vec![(*r).into(), (*v).into(), g_closed(d, *r).into()]);
    }
    let table = Artifact::csv("constants.csv", &t);
    Ok(Output {
        stdout: String::from_utf8_lossy(&table.bytes).into_owned(),
        artifacts: vec![
            table,
            Artifact::csv("g_profile.csv", &g),
            Artifact::json("g_extremum.json", &json!({ "n": cfg.n, "extremum_at_zero": format!("{:?}", prof.extremum_at_zero).to_lowercase() })),
        ],
        ..Default::default()
    })
}

fn reduce(cfg: &RunConfig) -> Result<Output> {
    let dom = domain(cfg)?;
    let consts = ReducedConstants::computed(dom.dim(), cfg.quad_tol)?.with_convention(cfg.convention);
    let sol = solve_reduced(cfg.k, &consts, &dom)?;
    let g = eval_g(&sol.state, &consts, &dom)?;
    let jac = jacobian_fd(&sol.state, &consts, &dom)?;
    let fd_sv = singular_values(&jac);
    let d = sol.state.dilations();
    let mut t = Table::new(["level", "s", "d", "level_residual", "sign_changes"]);
    for i in 0..cfg.k {
        t.push(vec![
            (i + 1).into(),
            sol.state.s[i].into(),
            d[i].into(),
            sol.state.levels[i].into(),
            sol.sign_changes[i].into(),
        ]);
    }
    let mut roots = Table::new(["level", "s", "slope"]);
    for r in &sol.roots {
        roots.push(vec![r.level.into(), r.s.into(), r.slope.into()]);
    }
    let mut v = serde_json::to_value(&sol).map_err(|e| CliError::Usage(e.to_string()))?;
    v["g_residual"] = json!(g);
    v["fd_jacobian_singular_values"] = json!(fd_sv);
    v["dilations"] = json!(d);
    v["constants"] = serde_json::to_value(&consts).map_err(|e| CliError::Usage(e.to_string()))?;
    let stdout = format!(
        "s = [{}]\nresidual = {}\nsmallest singular value = {}\n",
        sol.state.s.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", "),
        fmt_f64(sol.residual),
        fmt_f64(sol.singular_values.first().copied().unwrap_or(f64::NAN)),
    );
    Ok(Output {
        artifacts: vec![Artifact::json("reduce.json", &v), Artifact::csv("reduce.csv", &t), Artifact::csv("roots.csv", &roots)],
        stdout,
        ..Default::default()
    })
}

fn ansatz(cfg: &RunConfig) -> Result<Output> {
    let dom = domain(cfg)?;
    require_unit_ball(&dom)?;
    let (d, sigma, xi) = seed(cfg, &dom)?;
    let k = cfg.k;
    let mut header = vec!["eps".to_string(), "residual".into()];
    header.extend(numbered("mu", k));
    header.extend(numbered("height", k));
    let mut t = Table::new(header);
    let eps = cfg.eps_values();
    let rows: Vec<std::result::Result<Vec<Cell>, CliError>> = eps
        .par_iter()
        .map(|&e| {
            let tc = TowerConfig::new(&dom, k, e, &d, &sigma, xi.clone(), cfg.rho, admissible_eta(&d, cfg.eta))?;
            let mus = tc.mus();
            let grid = RadialGrid::for_scale(dom.dim(), mus[k - 1], &cfg.grid)?;
            let res = residual_norm(&dom, &tc, &grid)?;
            let h = peak_heights(&tc, &grid)?;
            let mut row = vec![Cell::F(e), Cell::F(res)];
            row.extend(mus.into_iter().map(Cell::F));
            row.extend(h.into_iter().map(Cell::F));
            Ok(row)
        })
        .collect();
    let mut out = Output { points: eps.len(), ..Default::default() };
    for (e, r) in eps.iter().zip(rows) {
        match r {
            Ok(row) => t.push(row),
            Err(err) => out.failures.push((format!("eps={}", fmt_f64(*e)), err)),
        }
    }
    out.artifacts.push(Artifact::csv("ansatz.csv", &t));
    Ok(out)
}

fn solution_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["eps", "converged", "newton_iters", "residual"].iter().map(|s| s.to_string()).collect();
    h.extend(numbered("mu", k));
    h.extend(numbered("d", k));
    h.extend(numbered("nodal_radius", k - 1));
    h
}

fn solution_row(k: usize, eps: f64, sol: Option<&RadialSolution>) -> Vec<Cell> {
    let mut row = vec![Cell::F(eps)];
    match sol {
        Some(s) => {
            row.extend([Cell::B(s.converged), Cell::I(s.iterations), Cell::F(s.residual)]);
            row.extend((0..k).map(|i| s.scales.get(i).map(|x| x.mu).into()));
            row.extend((0..k).map(|i| s.scales.get(i).map(|x| x.d).into()));
            row.extend((0..k - 1).map(|i| s.nodal_radii.get(i).copied().into()));
        }
        None => {
            row.push(Cell::B(false));
            row.extend(std::iter::repeat_n(Cell::Empty, 2 + 3 * k - 1));
        }
    }
    row
}

fn profile(sol: &RadialSolution) -> Table {
    let mut t = Table::new(["r", "u"]);
    for (r, u) in sol.grid.nodes().iter().zip(&sol.values) {
        t.push(vec![(*r).into(), (*u).into()]);
    }
    t
}

fn solve(cfg: &RunConfig) -> Result<Output> {
    let dom = domain(cfg)?;
    require_unit_ball(&dom)?;
    let (d, _, _) = seed(cfg, &dom)?;
    let opts = cfg.solve_options();
    let eps = cfg.eps_values();
    let sols: Vec<_> = eps.par_iter().map(|&e| solve_tower(dom.dim(), cfg.k, e, &d, &opts)).collect();
    let mut t = Table::new(solution_header(cfg.k));
    let mut out = Output { points: eps.len(), ..Default::default() };
    let mut profiles = Vec::new();
    for (j, (e, s)) in eps.iter().zip(sols).enumerate() {
        match s {
            Ok(sol) => {
                t.push(solution_row(cfg.k, *e, Some(&sol)));
                profiles.push(Artifact::csv(&format!("profile_{}.csv", j + 1), &profile(&sol)));
            }
            Err(err) => {
                t.push(solution_row(cfg.k, *e, None));
                out.failures.push((format!("eps={}", fmt_f64(*e)), err.into()));
            }
        }
    }
    out.artifacts.push(Artifact::csv("solve.csv", &t));
    out.artifacts.extend(profiles);
    Ok(out)
}

fn sweep(cfg: &RunConfig) -> Result<Output> {
    let dom = domain(cfg)?;
    require_unit_ball(&dom)?;
    let (d, _, _) = seed(cfg, &dom)?;
    let eps = cfg.eps_values();
    let points = sweep_epsilon(dom.dim(), cfg.k, &eps, &d, cfg.start, &cfg.solve_options())?;
    let mut t = Table::new(solution_header(cfg.k));
    let mut out = Output { points: eps.len(), ..Default::default() };
    for p in points {
        match p.outcome {
            Ok(sol) => t.push(solution_row(cfg.k, p.eps, Some(&sol))),
            Err(err) => {
                t.push(solution_row(cfg.k, p.eps, None));
                out.failures.push((format!("eps={}", fmt_f64(p.eps)), err.into()));
            }
        }
    }
    out.stdout = format!("{} of {} points converged\n", out.points - out.failures.len(), out.points);
    out.artifacts.push(Artifact::csv("sweep.csv", &t));
    Ok(out)
}

const VERIFY_HEADER: [&str; 6] = ["case", "sweep_var", "measured", "predicted_exponent", "fitted_exponent", "verdict"];

fn push_report(t: &mut Table, summary: &mut Table, r: &VerifyReport) {
    for (x, y) in &r.rows {
        t.push(vec![
            r.name.as_str().into(),
            (*x).into(),
            (*y).into(),
            r.predicted.into(),
            r.fitted().into(),
            r.verdict.as_str().into(),
        ]);
    }
    summary.push(vec![
        r.name.as_str().into(),
        r.sweep_var.as_str().into(),
        r.predicted.into(),
        r.fitted().into(),
        r.fit.map(|f| f.width).into(),
        r.stability.into(),
        r.tolerance.into(),
        Cell::S(format!("{:?}", r.comparison).to_lowercase()),
        r.verdict.as_str().into(),
    ]);
}

/// Norm cases checked by `verify` in dimension `n`.
pub fn norm_cases(n: usize) -> Vec<(NormKind, f64)> {
    let nf = n as f64;
    let (sub, crit, top) = (2.0, nf / (nf - 2.0), 2.0 * nf / (nf - 2.0));
    let mut c = Vec::new();
    for kind in [NormKind::U, NormKind::Psi0] {
        let mut qs = vec![sub, crit, top];
        qs.sort_by(f64::total_cmp);
        qs.dedup();
        c.extend(qs.into_iter().map(|q| (kind, q)));
    }
    c.extend([(NormKind::PsiH, 1.0), (NormKind::PsiH, 2.0)]);
    c
}

fn verify(cfg: &RunConfig) -> Result<Output> {
    let d = dim(cfg)?;
    let eps = cfg.eps_values();
    let mut out = Output::default();
    let mut summary = Table::new([
        "case",
        "sweep_var",
        "predicted_exponent",
        "fitted_exponent",
        "ci_halfwidth",
        "stability",
        "tolerance",
        "comparison",
        "verdict",
    ]);

    let mut norms = Table::new(VERIFY_HEADER);
    let cases = norm_cases(cfg.n);
    let res: Vec<_> = cases.par_iter().map(|&(w, q)| verify_norm_scaling(d, w, q, &eps)).collect();
    for ((w, q), r) in cases.iter().zip(res) {
        out.points += 1;
        match r {
            Ok(r) => push_report(&mut norms, &mut summary, &r),
            Err(e) => out.failures.push((format!("norm_{}_q{q}", w.as_str()), e.into())),
        }
    }

    let mut inter = Table::new(VERIFY_HEADER);
    for case in [Interaction::SumBu2, Interaction::FepLi1, Interaction::FepLi2] {
        out.points += 1;
        match verify_nonlinear_interactions(d, cfg.k, case, &eps) {
            Ok(r) => push_report(&mut inter, &mut summary, &r),
            Err(e) => out.failures.push((case.as_str().to_string(), e.into())),
        }
    }

    let mut proj = Table::new(VERIFY_HEADER);
    out.points += 1;
    match verify_projection_and_gram(d, cfg.k, &eps) {
        Ok(pg) => {
            for r in &pg.reports {
                push_report(&mut proj, &mut summary, r);
            }
            let row = vec![
                "gram_diagonal_change".into(),
                Cell::Empty,
                pg.diagonal_change.into(),
                Cell::Empty,
                Cell::Empty,
                pg.diagonal_verdict.as_str().into(),
            ];
            proj.push(row);
            summary.push(vec![
                "gram_diagonal_change".into(),
                "mu".into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                0.02.into(),
                "below".into(),
                pg.diagonal_verdict.as_str().into(),
            ]);
        }
        Err(e) => out.failures.push(("projection_gram".into(), e.into())),
    }

    let summary_csv = Artifact::csv("verify_summary.csv", &summary);
    out.stdout = String::from_utf8_lossy(&summary_csv.bytes).into_owned();
    out.artifacts = vec![
        Artifact::csv("verify_norms.csv", &norms),
        Artifact::csv("verify_interactions.csv", &inter),
        Artifact::csv("verify_projection_gram.csv", &proj),
        summary_csv,
    ];
    Ok(out)
}

pub fn dispatch(cfg: &RunConfig) -> Result<Output> {
    cfg.validate()?;
    match cfg.cmd {
        Command::Constants => constants(cfg),
        Command::Reduce => reduce(cfg),
        Command::Ansatz => ansatz(cfg),
        Command::Solve => solve(cfg),
        Command::Sweep => sweep(cfg),
        Command::Verify => verify(cfg),
    }
}

fn error_record(cfg: &RunConfig, err: &CliError, failures: &[(String, CliError)]) -> Artifact {
    let points: Vec<Value> = failures
        .iter()
        .map(|(p, e)| json!({ "point": p, "kind": e.kind(), "message": e.to_string() }))
        .collect();
    Artifact::json(
        "error.json",
        &json!({
            "command": cfg.cmd.as_str(),
            "exit_code": err.exit_code(),
            "kind": err.kind(),
            "message": err.to_string(),
            "failures": points,
        }),
    )
}

/// Run the configured command, write its artifacts, a manifest and, on
/// failure, `error.json`. Returns the process exit code.
pub fn execute(cfg: &RunConfig) -> i32 {
    let (mut artifacts, stdout, err, failures) = match dispatch(cfg) {
        Ok(o) => {
            let err = (!o.failures.is_empty()).then_some(CliError::Partial { failed: o.failures.len(), total: o.points });
            (o.artifacts, o.stdout, err, o.failures)
        }
        Err(e) => (Vec::new(), String::new(), Some(e), Vec::new()),
    };
    if let Some(e) = &err {
        artifacts.push(error_record(cfg, e, &failures));
    }
    let m = manifest(cfg, &artifacts);
    artifacts.push(m);
    let stale = cfg.out.join("error.json");
    if err.is_none() && stale.exists() {
        let _ = std::fs::remove_file(&stale);
    }
    if let Err(e) = write_all(&cfg.out, &artifacts) {
        eprintln!("error: {e}");
        return 1;
    }
    print!("{stdout}");
    match err {
        None => 0,
        Some(e) => {
            eprintln!("error: {e}");
            for (p, f) in &failures {
                eprintln!("  {p}: {f}");
            }
            e.exit_code()
        }
    }
}
