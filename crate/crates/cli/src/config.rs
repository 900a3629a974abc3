//! `--config` support: TOML keys are turned into long flags and appended to
//! argv before parsing, skipping any flag already given on the command line.
//!
//! Top-level keys apply to whichever subcommand runs, if it has that flag.
//! Tables named after a subcommand path (`[plan.cost]`, `[simulate]`) apply
//! only there, override top-level keys and must name real flags.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::CommandFactory;

use crate::args::Cli;
use crate::CliError;

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut iter = argv.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(rest));
        }
    }
    None
}

/// Leading subcommand names, e.g. `["plan", "cost"]`.
fn subcommand_path(argv: &[OsString]) -> Vec<String> {
    let mut path = Vec::new();
    let mut cmd = Cli::command();
    let mut iter = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
    while let Some(tok) = iter.next() {
        if tok == "--config" {
            iter.next();
            continue;
        }
        if tok.starts_with('-') {
            continue;
        }
        match cmd.find_subcommand(&tok) {
            Some(sub) => {
                path.push(tok);
                cmd = sub.clone();
            }
            None => break,
        }
    }
    path
}

fn long_flags(path: &[String]) -> Option<Vec<String>> {
    let mut cmd = Cli::command();
    for name in path {
        cmd = cmd.find_subcommand(name)?.clone();
    }
    Some(cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_owned)).collect())
}

fn render(key: &str, value: &toml::Value) -> Result<Option<Vec<String>>, CliError> {
    let flag = format!("--{key}");
    let scalar = |v: &toml::Value| -> Result<String, CliError> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(CliError::Usage(format!("config key {key}: unsupported value {other}"))),
        }
    };
    Ok(match value {
        toml::Value::Boolean(true) => Some(vec![flag]),
        toml::Value::Boolean(false) => None,
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            Some(vec![flag, parts.join(",")])
        }
        v => Some(vec![flag, scalar(v)?]),
    })
}

fn already_given(argv: &[OsString], flag: &str) -> bool {
    let eq = format!("--{flag}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == format!("--{flag}") || s.starts_with(&eq)
    })
}

/// Returns argv extended with flags from the config file, if one is named.
pub fn expand_argv(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("--config: cannot read {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("--config: {} is not valid TOML: {e}", path.display())))?;

    let path_names = subcommand_path(&argv);
    let Some(flags) = long_flags(&path_names) else {
        return Ok(argv);
    };

    let mut merged: Vec<(String, toml::Value)> = table
        .iter()
        .filter(|(k, v)| !v.is_table() && flags.contains(&k.replace('_', "-")))
        .map(|(k, v)| (k.replace('_', "-"), v.clone()))
        .collect();

    let mut section = Some(&table);
    for name in &path_names {
        section = section.and_then(|t| t.get(name)).and_then(toml::Value::as_table);
    }
    if let Some(section) = section.filter(|_| !path_names.is_empty()) {
        for (k, v) in section.iter().filter(|(_, v)| !v.is_table()) {
            let key = k.replace('_', "-");
            if !flags.contains(&key) {
                return Err(CliError::Usage(format!(
                    "--config: key {k:?} in [{}] is not a flag of `{}`",
                    path_names.join("."),
                    path_names.join(" ")
                )));
            }
            merged.retain(|(existing, _)| existing != &key);
            merged.push((key, v.clone()));
        }
    }

    let mut out = argv.clone();
    for (key, value) in merged {
        if key == "config" || already_given(&argv, &key) {
            continue;
        }
        if let Some(tokens) = render(&key, &value)? {
            out.extend(tokens.into_iter().map(OsString::from));
        }
    }
    Ok(out)
}
