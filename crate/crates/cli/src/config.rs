//! `key=value` run configuration files.
//!
//! Keys are long flag names without the leading dashes. Blank lines and
//! lines starting with `#` are ignored. Flags given on the command line win
//! over file values.

use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};

use crate::CliError;

pub const CONFIG_FLAG: &str = "config";

pub fn parse(text: &str, origin: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage("config", format!("{}:{}: expected key=value, got '{line}'", origin.display(), lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::usage("config", format!("{}:{}: empty key", origin.display(), lineno + 1)));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Appends `--key value` for every file entry the command line did not set.
/// Unknown keys, and `config` itself, are rejected.
pub fn merge(
    sub: &Command,
    matches: &ArgMatches,
    entries: &[(String, String)],
    args: &mut Vec<OsString>,
) -> Result<(), CliError> {
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != CONFIG_FLAG)
            .ok_or_else(|| {
                let known: Vec<_> = sub
                    .get_arguments()
                    .filter_map(|a| a.get_long())
                    .filter(|&l| l != CONFIG_FLAG && l != "help")
                    .collect();
                CliError::usage(
                    "config",
                    format!("unknown key '{key}' for '{}'; valid keys: {}", sub.get_name(), known.join(", ")),
                )
            })?;
        if matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        args.push(format!("--{key}").into());
        args.push(value.into());
    }
    Ok(())
}

/// Every argument with a value, as `key=value` lines in declaration order.
pub fn resolved(sub: &Command, matches: &ArgMatches, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if long == CONFIG_FLAG || long == "help" {
            continue;
        }
        if let Ok(Some(mut raw)) = matches.try_get_raw(arg.get_id().as_str()) {
            if let Some(v) = raw.next() {
                out.push_str(&format!("{long}={}\n", v.to_string_lossy()));
            }
        }
    }
    for (k, v) in extra {
        out.push_str(&format!("{k}={v}\n"));
    }
    out
}
