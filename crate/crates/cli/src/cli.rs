//! Command-line front end. Every config key is also a long flag.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches};

use crate::config::{apply_text, read_file, Command, RunConfig, KEYS, OUT_ENV};
use crate::error::Result;
use crate::run::execute;

fn app() -> clap::Command {
    let mut sub = Vec::new();
    for c in Command::ALL {
        let mut s = clap::Command::new(c.as_str())
            .about(c.about())
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value file, applied before flags"))
            .arg(
                Arg::new("print-config")
                    .long("print-config")
                    .action(ArgAction::SetTrue)
                    .help("print the resolved config and exit"),
            );
        for (key, help) in KEYS.iter().filter(|(k, _)| *k != "cmd") {
            s = s.arg(Arg::new(*key).long(*key).value_name("VALUE").help(*help).allow_hyphen_values(true));
        }
        sub.push(s);
    }
    clap::Command::new("bubbletower")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Sign-changing bubble towers for a log-perturbed critical equation on a ball")
        .subcommand_required(true)
        .subcommands(sub)
}

fn resolve(name: &str, m: &ArgMatches, out_env: Option<OsString>) -> Result<RunConfig> {
    let cmd: Command = name.parse().expect("subcommands come from Command::ALL");
    let mut cfg = RunConfig::new(cmd);
    if let Some(path) = m.get_one::<String>("config") {
        apply_text(&mut cfg, &read_file(path.as_ref())?)?;
        cfg.cmd = cmd;
    }
    for (key, _) in KEYS.iter().filter(|(k, _)| *k != "cmd") {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    if let Some(dir) = out_env.filter(|d| !d.is_empty()) {
        cfg.out = PathBuf::from(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match app().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let cfg = match resolve(name, sub, std::env::var_os(OUT_ENV)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if sub.get_flag("print-config") {
        print!("{}", cfg.print());
        return 0;
    }
    execute(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        let m = app().try_get_matches_from(args).unwrap();
        let (name, sub) = m.subcommand().unwrap();
        resolve(name, sub, None)
    }

    #[test]
    fn flags_mirror_keys() {
        let c = parse(&["bubbletower", "sweep", "--n", "4", "--k", "2", "--eps", "0.2:0.0125:geometric", "--grid.per_decade", "30"]).unwrap();
        assert_eq!((c.n, c.k, c.grid.per_decade), (4, 2, 30));
        assert_eq!(c.eps_values().len(), 5);
        assert_eq!(c.cmd, Command::Sweep);
    }

    #[test]
    fn env_overrides_out() {
        let m = app().try_get_matches_from(["bubbletower", "constants", "--out", "a"]).unwrap();
        let (name, sub) = m.subcommand().unwrap();
        assert_eq!(resolve(name, sub, None).unwrap().out, PathBuf::from("a"));
        assert_eq!(resolve(name, sub, Some("b".into())).unwrap().out, PathBuf::from("b"));
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(main_with_args(["bubbletower", "constants", "--n", "2"]), 1);
        assert_eq!(main_with_args(["bubbletower", "constants", "--bogus", "1"]), 1);
        assert_eq!(main_with_args(["bubbletower"]), 1);
    }
}
