//! Flat `key = value` config files merged under command-line flags.
//!
//! Keys are long flag names without the leading dashes (`band-days = 10`).
//! A key is applied only when the same flag was not given on the command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, CommandFactory, FromArgMatches};

use crate::Cli;

pub enum ParseError {
    Clap(clap::Error),
    Config(String),
}

impl From<clap::Error> for ParseError {
    fn from(e: clap::Error) -> Self {
        ParseError::Clap(e)
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", n + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(format!("config line {}: empty key", n + 1));
        }
        out.push((key, value));
    }
    Ok(out)
}

pub fn parse_with_config(args: Vec<OsString>) -> Result<Cli, ParseError> {
    let cmd = Cli::command();
    let Some(path) = config_path(&args) else {
        let matches = cmd.try_get_matches_from(&args)?;
        return Ok(Cli::from_arg_matches(&matches)?);
    };
    // Flags supplied only by the config file may be required, so the first pass is lenient.
    let loose = cmd.clone().ignore_errors(true).try_get_matches_from(&args)?;
    let extra = overlay_args(&cmd, &loose, &path)?;
    let mut args = args;
    args.extend(extra);
    let matches = cmd.try_get_matches_from(&args)?;
    Ok(Cli::from_arg_matches(&matches)?)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn overlay_args(cmd: &clap::Command, matches: &ArgMatches, path: &Path) -> Result<Vec<OsString>, ParseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ParseError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text).map_err(ParseError::Config)?;
    let (name, sub_matches) = matches
        .subcommand()
        .ok_or_else(|| ParseError::Config("no subcommand".into()))?;
    let sub = cmd
        .find_subcommand(name)
        .ok_or_else(|| ParseError::Config(format!("unknown subcommand {name}")))?;

    let mut extra = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(ParseError::Config("config files cannot include other config files".into()));
        }
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| ParseError::Config(format!("unknown config key `{key}` for `{name}`")))?;
        let id = arg.get_id().as_str();
        if sub_matches.value_source(id) == Some(ValueSource::CommandLine) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue | ArgAction::SetFalse => match value.as_str() {
                "true" => extra.push(format!("--{key}").into()),
                "false" => {}
                _ => return Err(ParseError::Config(format!("`{key}` expects true or false, got `{value}`"))),
            },
            ArgAction::Append => {
                for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    extra.push(format!("--{key}={part}").into());
                }
            }
            _ => extra.push(format!("--{key}={value}").into()),
        }
    }
    Ok(extra)
}
