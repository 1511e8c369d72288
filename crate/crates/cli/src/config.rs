//! Eval config files: one `key = value` per line, `#` comments, keys named
//! after the long flags. Values already set by flags win.

use crate::{CliError, EvalArgs};
use std::path::Path;

pub fn apply_file(path: &Path, args: &mut EvalArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::domain(format!(
                "{}:{}: expected key = value",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        apply(args, key, value).map_err(|message| {
            CliError::domain(format!("{}:{}: {message}", path.display(), lineno + 1))
        })?;
    }
    Ok(())
}

fn apply(args: &mut EvalArgs, key: &str, value: &str) -> Result<(), String> {
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
        value
            .parse()
            .map_err(|_| format!("invalid value {value:?} for {key}"))
    }
    match key {
        "dataset" => {
            if args.dataset.is_empty() {
                args.dataset = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
        }
        "out" => {
            if args.out.is_none() {
                args.out = Some(value.into());
            }
        }
        "tracker" => {
            if args.tracker.is_none() {
                args.tracker = Some(value.to_string());
            }
        }
        "grounder" => {
            if args.grounder.is_none() {
                args.grounder = Some(value.to_string());
            }
        }
        "mode" => {
            if args.mode.is_none() {
                args.mode = Some(value.to_string());
            }
        }
        "prompt-effect" => {
            if args.prompt_effect.is_none() {
                args.prompt_effect = Some(value.to_string());
            }
        }
        "tau-init" => {
            if args.tau_init.is_none() {
                args.tau_init = Some(parse(key, value)?);
            }
        }
        "tau-reinit" => {
            if args.tau_reinit.is_none() {
                args.tau_reinit = Some(parse(key, value)?);
            }
        }
        "delta-c" => {
            if args.delta_c.is_none() {
                args.delta_c = Some(parse(key, value)?);
            }
        }
        "ablation" => {
            if args.ablation.is_empty() {
                args.ablation = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
        }
        "parallelism" => {
            if args.parallelism.is_none() {
                args.parallelism = Some(parse(key, value)?);
            }
        }
        "seed" => {
            if args.seed.is_none() {
                args.seed = Some(parse(key, value)?);
            }
        }
        "memory-epsilon" => {
            if args.memory_epsilon.is_none() {
                args.memory_epsilon = Some(parse(key, value)?);
            }
        }
        "inclusive-success" => {
            args.inclusive_success = args.inclusive_success || parse::<bool>(key, value)?;
        }
        "require-switch-overlap" => {
            args.require_switch_overlap = args.require_switch_overlap || parse::<bool>(key, value)?;
        }
        "lenient" => {
            args.lenient = args.lenient || parse::<bool>(key, value)?;
        }
        other => return Err(format!("unknown config key {other:?}")),
    }
    Ok(())
}
