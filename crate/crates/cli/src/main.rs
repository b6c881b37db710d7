mod args;
mod commands;
mod failure;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use commands::Context;
use failure::Failure;
use output::{RunManifest, Sink};

const SUBCOMMANDS: [&str; 6] = ["solve", "fit", "tune", "simulate", "track", "gen"];
/// Flags that do not change results and stay out of the manifest.
const UNHASHED: [&str; 3] = ["jobs", "out", "config"];

/// Finds `--config PATH` (or `--config=PATH`) before clap sees the args.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(rest));
        }
    }
    None
}

/// Turns a JSON object of flag values into argv tokens: `{"n_calls": 5}` is
/// `--n-calls 5`, `true` is a bare switch, arrays are comma-joined.
fn config_tokens(path: &PathBuf) -> Result<Vec<OsString>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    let map = value.as_object().ok_or_else(|| Failure::Usage("config file must hold a JSON object".into()))?;
    let scalar = |v: &serde_json::Value| match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(Failure::Usage(format!("unsupported config value {other}"))),
    };
    let mut out = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if key == "config" {
            continue;
        }
        match v {
            serde_json::Value::Bool(true) => out.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other)?.into());
            }
        }
    }
    Ok(out)
}

/// Config tokens go right after the (innermost) subcommand name so that
/// explicit flags, which come later, override them.
fn merge_config(argv: Vec<OsString>, tokens: Vec<OsString>) -> Vec<OsString> {
    let Some(mut pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return argv;
    };
    if argv[pos] == "gen" && pos + 1 < argv.len() && !argv[pos + 1].to_string_lossy().starts_with('-') {
        pos += 1;
    }
    let mut merged = argv[..=pos].to_vec();
    merged.extend(tokens);
    merged.extend_from_slice(&argv[pos + 1..]);
    merged
}

fn allow_overrides(cmd: clap::Command) -> clap::Command {
    cmd.args_override_self(true).mut_subcommands(allow_overrides)
}

fn manifest_config(command: &Command) -> serde_json::Value {
    let mut v = serde_json::to_value(command).unwrap_or(serde_json::Value::Null);
    // `{"fit": {...}}` -> `{...}`
    if let serde_json::Value::Object(map) = &mut v {
        if map.len() == 1 {
            v = map.values().next().cloned().unwrap_or_default();
        }
    }
    if let serde_json::Value::Object(map) = &mut v {
        for k in UNHASHED {
            map.remove(k);
        }
    }
    v
}

fn run(argv: Vec<OsString>) -> Result<(), Failure> {
    let argv = match config_path(&argv) {
        Some(path) => {
            let tokens = config_tokens(&path)?;
            merge_config(argv, tokens)
        }
        None => argv,
    };
    let matches = match allow_overrides(Cli::command()).try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(Failure::Usage(e.render().to_string().trim_end().trim_start_matches("error: ").to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(e.to_string()))?;
    if cli.global.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let manifest = RunManifest::new(cli.command.name(), cli.global.seed, manifest_config(&cli.command));
    let mut ctx = Context { seed: cli.global.seed, jobs: cli.global.jobs, sink: Sink::resolve(cli.global.out)?, manifest };
    match &cli.command {
        Command::Solve(a) => commands::solve(&mut ctx, a),
        Command::Fit(a) => commands::fit(&mut ctx, a),
        Command::Tune(a) => commands::tune(&mut ctx, a),
        Command::Simulate(a) => commands::simulate(&mut ctx, a),
        Command::Track(a) => commands::track(&mut ctx, a),
        Command::Gen(a) => commands::gen(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_tokens_go_after_the_subcommand() {
        let merged = merge_config(os(&["argen", "--seed", "3", "fit", "--preset", "ARL"]), os(&["--preset", "ARLS"]));
        assert_eq!(merged, os(&["argen", "--seed", "3", "fit", "--preset", "ARLS", "--preset", "ARL"]));
        let merged = merge_config(os(&["argen", "gen", "qp", "--dim", "3"]), os(&["--finite-l"]));
        assert_eq!(merged, os(&["argen", "gen", "qp", "--finite-l", "--dim", "3"]));
    }

    #[test]
    fn later_flags_win() {
        let cmd = allow_overrides(Cli::command());
        let m = cmd.try_get_matches_from(os(&["argen", "gen", "qp", "--dim", "2", "--dim", "5"])).unwrap();
        let cli = Cli::from_arg_matches(&m).unwrap();
        match cli.command {
            Command::Gen(g) => match g.kind {
                args::GenKind::Qp { dim, .. } => assert_eq!(dim, 5),
                _ => panic!("wrong kind"),
            },
            _ => panic!("wrong command"),
        }
    }
}
