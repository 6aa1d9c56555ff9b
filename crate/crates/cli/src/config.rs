//! Flat `key = value` run configuration. Keys are dotted
//! (`grid.per_decade`); the same names serve as command-line flags.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bubbletower::asymptotics::default_eps_sweep;
use bubbletower::radial::{GridSpec, SolveOptions, StartMode};
use bubbletower::reduced::GreenConvention;
use bubbletower::tower::DEFAULT_ETA;

use crate::error::{CliError, Result};

pub const OUT_ENV: &str = "BUBBLETOWER_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Constants,
    Reduce,
    Ansatz,
    Solve,
    Sweep,
    Verify,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Constants, Command::Reduce, Command::Ansatz, Command::Solve, Command::Sweep, Command::Verify];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Reduce => "reduce",
            Command::Ansatz => "ansatz",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Constants => "quadrature and closed-form constants of the reduced system",
            Command::Reduce => "roots of the reduced system",
            Command::Ansatz => "tower ansatz at the reduced root: scales, heights, residual",
            Command::Solve => "radial solution at each eps",
            Command::Sweep => "radial solutions along an eps sweep",
            Command::Verify => "fitted orders of the asymptotic estimates",
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// An explicit list, or `start:stop:geometric[:points]`. Without a point
/// count the ratio is 1/2 and the sweep stops at the last value `>= stop`.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsSpec {
    List(Vec<f64>),
    Geometric { start: f64, stop: f64, points: Option<usize> },
}

impl EpsSpec {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            EpsSpec::List(ref v) => v.clone(),
            EpsSpec::Geometric { start, stop, points: Some(m) } => {
                if m == 1 {
                    return vec![start];
                }
                (0..m)
                    .map(|j| {
                        if j == m - 1 {
                            stop
                        } else {
                            start * (stop / start).powf(j as f64 / (m - 1) as f64)
                        }
                    })
                    .collect()
            }
            EpsSpec::Geometric { start, stop, points: None } => {
                let mut v = vec![start];
                let mut e = start;
                while e / 2.0 >= stop * (1.0 - 1e-12) && v.len() < 64 {
                    e /= 2.0;
                    v.push(e);
                }
                v
            }
        }
    }
}

impl fmt::Display for EpsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsSpec::List(v) => {
                let s: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                f.write_str(&s.join(","))
            }
            EpsSpec::Geometric { start, stop, points } => {
                write!(f, "{start:?}:{stop:?}:geometric")?;
                if let Some(m) = points {
                    write!(f, ":{m}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for EpsSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if !(3..=4).contains(&parts.len()) || parts[2].trim() != "geometric" {
                return Err(format!("`{s}`: expected start:stop:geometric[:points]"));
            }
            let points = match parts.get(3) {
                Some(p) => Some(p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}"))?),
                None => None,
            };
            if points == Some(0) {
                return Err("a sweep needs at least one point".into());
            }
            Ok(EpsSpec::Geometric { start: num(parts[0])?, stop: num(parts[1])?, points })
        } else {
            let v = s.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(EpsSpec::List(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cmd: Command,
    pub n: usize,
    pub k: usize,
    /// `None` is the origin
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    /// `None` picks the command's default sweep
    pub eps: Option<EpsSpec>,
    pub eta: f64,
    /// `None` is half the distance from the tower center to the boundary
    pub rho: Option<f64>,
    /// initial dilations; `None` takes the reduced root
    pub d: Option<Vec<f64>>,
    pub grid: GridSpec,
    pub quad_tol: f64,
    pub solve_tol: f64,
    pub stage_tol: f64,
    pub max_newton: usize,
    pub max_total: usize,
    pub start: StartMode,
    pub convention: GreenConvention,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(cmd: Command) -> Self {
        let s = SolveOptions::default();
        Self {
            cmd,
            n: 3,
            k: 1,
            center: None,
            radius: 1.0,
            eps: None,
            eta: DEFAULT_ETA,
            rho: None,
            d: None,
            grid: s.grid,
            quad_tol: 1e-10,
            solve_tol: s.tol,
            stage_tol: s.stage_tol,
            max_newton: s.max_newton,
            max_total: s.max_total,
            start: StartMode::Cold,
            convention: GreenConvention::Standard,
            out: PathBuf::from("out"),
        }
    }

    pub fn eps_values(&self) -> Vec<f64> {
        match &self.eps {
            Some(e) => e.values(),
            None if self.cmd == Command::Verify => default_eps_sweep(),
            None => EpsSpec::Geometric { start: 0.2, stop: 0.0125, points: None }.values(),
        }
    }

    pub fn center_or_origin(&self) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| vec![0.0; self.n])
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            grid: self.grid,
            tol: self.solve_tol,
            stage_tol: self.stage_tol,
            max_newton: self.max_newton,
            max_total: self.max_total,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |m: String| CliError::config(key, m);
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
        }
        fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
            v.split(',').map(|t| num::<f64>(t.trim())).collect()
        }
        match key {
            "cmd" => self.cmd = v.parse().map_err(bad)?,
            "n" => self.n = num(v).map_err(bad)?,
            "k" => self.k = num(v).map_err(bad)?,
            "domain.center" => self.center = Some(list(v).map_err(bad)?),
            "domain.radius" => self.radius = num(v).map_err(bad)?,
            "eps" => self.eps = Some(v.parse().map_err(bad)?),
            "eta" => self.eta = num(v).map_err(bad)?,
            "rho" => self.rho = Some(num(v).map_err(bad)?),
            "d" => self.d = Some(list(v).map_err(bad)?),
            "grid.per_decade" => self.grid.per_decade = num(v).map_err(bad)?,
            "grid.hmax" => self.grid.hmax = num(v).map_err(bad)?,
            "grid.scale_fraction" => self.grid.scale_fraction = num(v).map_err(bad)?,
            "quad.tolerance" => self.quad_tol = num(v).map_err(bad)?,
            "solve.tol" => self.solve_tol = num(v).map_err(bad)?,
            "solve.stage_tol" => self.stage_tol = num(v).map_err(bad)?,
            "solve.max_newton" => self.max_newton = num(v).map_err(bad)?,
            "solve.max_total" => self.max_total = num(v).map_err(bad)?,
            "sweep.start" => {
                self.start = match v {
                    "warm" => StartMode::Warm,
                    "cold" => StartMode::Cold,
                    _ => return Err(bad(format!("`{v}`: expected warm or cold"))),
                }
            }
            "reduce.convention" => {
                self.convention = match v {
                    "standard" => GreenConvention::Standard,
                    "scaled" => GreenConvention::Scaled,
                    _ => return Err(bad(format!("`{v}`: expected standard or scaled"))),
                }
            }
            "out" => self.out = PathBuf::from(v),
            _ => return Err(CliError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Every key with its current value; unset optional keys are skipped.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut e = vec![
            ("cmd", self.cmd.as_str().to_string()),
            ("n", self.n.to_string()),
            ("k", self.k.to_string()),
        ];
        if let Some(c) = &self.center {
            e.push(("domain.center", list(c)));
        }
        e.push(("domain.radius", format!("{:?}", self.radius)));
        if let Some(eps) = &self.eps {
            e.push(("eps", eps.to_string()));
        }
        e.push(("eta", format!("{:?}", self.eta)));
        if let Some(r) = self.rho {
            e.push(("rho", format!("{r:?}")));
        }
        if let Some(d) = &self.d {
            e.push(("d", list(d)));
        }
        e.extend([
            ("grid.per_decade", self.grid.per_decade.to_string()),
            ("grid.hmax", format!("{:?}", self.grid.hmax)),
            ("grid.scale_fraction", format!("{:?}", self.grid.scale_fraction)),
            ("quad.tolerance", format!("{:?}", self.quad_tol)),
            ("solve.tol", format!("{:?}", self.solve_tol)),
            ("solve.stage_tol", format!("{:?}", self.stage_tol)),
            ("solve.max_newton", self.max_newton.to_string()),
            ("solve.max_total", self.max_total.to_string()),
            ("sweep.start", if self.start == StartMode::Warm { "warm" } else { "cold" }.to_string()),
            (
                "reduce.convention",
                if self.convention == GreenConvention::Standard { "standard" } else { "scaled" }.to_string(),
            ),
            ("out", self.out.display().to_string()),
        ]);
        e
    }

    pub fn print(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Validation(m));
        if self.n < 3 {
            return fail(format!("n = {} violates n >= 3", self.n));
        }
        if self.k < 1 {
            return fail("k = 0 violates k >= 1".into());
        }
        if let Some(c) = &self.center {
            if c.len() != self.n {
                return fail(format!("domain.center has {} coordinates, n = {}", c.len(), self.n));
            }
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("domain.radius = {} must be positive", self.radius));
        }
        let eps = self.eps_values();
        if eps.is_empty() {
            return fail("eps is empty".into());
        }
        if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return fail(format!("eps = {e} must lie in (0, 1)"));
        }
        if self.cmd == Command::Sweep && eps.windows(2).any(|w| !(w[1] < w[0])) {
            return fail("sweep eps values must be strictly decreasing".into());
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return fail(format!("eta = {} must lie in (0, 1)", self.eta));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0) {
                return fail(format!("rho = {r} must be positive"));
            }
        }
        if let Some(d) = &self.d {
            if d.len() != self.k || d.iter().any(|x| !(*x > 0.0)) {
                return fail(format!("d needs {} positive values", self.k));
            }
        }
        if self.grid.per_decade < 4 || !(self.grid.hmax > 0.0 && self.grid.hmax < 1.0) || !(self.grid.scale_fraction > 1.0) {
            return fail("grid needs per_decade >= 4, 0 < hmax < 1, scale_fraction > 1".into());
        }
        for (key, v) in [("quad.tolerance", self.quad_tol), ("solve.tol", self.solve_tol), ("solve.stage_tol", self.stage_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return fail(format!("{key} = {v} must lie in (0, 1)"));
            }
        }
        if self.max_newton == 0 || self.max_total == 0 {
            return fail("iteration limits must be positive".into());
        }
        Ok(())
    }
}

/// Apply `key = value` lines on top of `cfg`. Blank lines and `#` comments
/// are skipped.
pub fn apply_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", lineno + 1)))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(())
}

/// Parse a complete config from text. `cmd` must be present.
pub fn parse_text(text: &str) -> Result<RunConfig> {
    let cmd = text
        .lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .find(|(k, _)| k.trim() == "cmd")
        .ok_or_else(|| CliError::config("cmd", "missing"))?
        .1
        .trim()
        .parse::<Command>()
        .map_err(|m| CliError::config("cmd", m))?;
    let mut cfg = RunConfig::new(cmd);
    apply_text(&mut cfg, text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub const KEYS: [(&str, &str); 20] = [
    ("cmd", "subcommand (config files only)"),
    ("n", "space dimension, at least 3"),
    ("k", "number of bubbles"),
    ("domain.center", "ball center, comma separated"),
    ("domain.radius", "ball radius"),
    ("eps", "list a,b,c or start:stop:geometric[:points]"),
    ("eta", "admissibility margin of the dilations"),
    ("rho", "matching radius; default half the distance to the boundary"),
    ("d", "initial dilations, comma separated; default the reduced root"),
    ("grid.per_decade", "radial nodes per decade"),
    ("grid.hmax", "largest radial spacing"),
    ("grid.scale_fraction", "first node is the smallest scale over this"),
    ("quad.tolerance", "relative quadrature tolerance"),
    ("solve.tol", "final Newton tolerance"),
    ("solve.stage_tol", "continuation stage tolerance"),
    ("solve.max_newton", "Newton steps per stage"),
    ("solve.max_total", "Newton steps per solve"),
    ("sweep.start", "warm or cold"),
    ("reduce.convention", "standard or scaled Green normalization"),
    ("out", "output directory; overridden by BUBBLETOWER_OUT"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_text("n = 3\nk = 1\ncmd = constants\n").unwrap();
        assert_eq!(c.eta, 0.1);
        assert_eq!(c.rho, None);
        assert_eq!(c.radius, 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        let e = parse_text("cmd = constants\nn = 2\n").unwrap_err();
        assert!(e.to_string().contains("n >= 3"), "{e}");
        assert!(matches!(parse_text("cmd = sweep\neps = 1.5\n"), Err(CliError::Validation(_))));
        match parse_text("cmd = sweep\ngrid.nodes = 3\n") {
            Err(CliError::UnknownKey(k)) => assert_eq!(k, "grid.nodes"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::new(Command::Sweep);
        c.k = 2;
        c.eps = Some("0.2:0.0125:geometric".parse().unwrap());
        c.d = Some(vec![0.1 + 0.2, 1.0 / 3.0]);
        c.rho = Some(0.45);
        c.center = Some(vec![0.0, 1e-17, -0.0]);
        c.start = StartMode::Warm;
        assert_eq!(parse_text(&c.print()).unwrap(), c);
        let plain = RunConfig::new(Command::Verify);
        assert_eq!(parse_text(&plain.print()).unwrap(), plain);
    }

    #[test]
    fn geometric_sweeps() {
        let e: EpsSpec = "0.2:0.0125:geometric".parse().unwrap();
        assert_eq!(e.values(), vec![0.2, 0.1, 0.05, 0.025, 0.0125]);
        let e: EpsSpec = "0.2:0.002:geometric:3".parse().unwrap();
        let v = e.values();
        assert_eq!(v.len(), 3);
        assert!((v[1] - 0.02).abs() < 1e-15);
        assert!("0.2:0.1:linear".parse::<EpsSpec>().is_err());
    }
}
