//! `key = value` run manifests merged underneath command-line flags.
//!
//! Each entry becomes a `--key value` argument placed before the user's own
//! flags, so a flag given on the command line wins. `true` turns a switch
//! on, `false` leaves it off. Blank lines and `#` comments are ignored.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            path: path.to_path_buf(),
            line: i + 1,
            reason: format!("expected key = value, got {line:?}"),
        })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Config {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("invalid key {:?}", k.trim()),
            });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn to_args(entries: &[(String, String)]) -> Vec<String> {
    let mut args = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => args.push(format!("--{k}")),
            "false" => {}
            _ => {
                args.push(format!("--{k}"));
                args.push(v.clone());
            }
        }
    }
    args
}

/// Rewrites `argv` so that entries of any `--config FILE` sit directly after
/// the subcommand name, ahead of explicit flags.
pub fn expand_config_args(argv: Vec<String>) -> Result<Vec<String>> {
    let mut config_path = None;
    let mut rest = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it
                .next()
                .ok_or_else(|| Error::Usage("--config needs a file path".into()))?;
            config_path = Some(p);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config_path else {
        return Ok(rest);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let extra = to_args(&parse_config(&text, path)?);
    // program name, then the subcommand, then the manifest
    let split = rest.len().min(2);
    let mut out: Vec<String> = rest[..split].to_vec();
    out.extend(extra);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let text = "# run\nseed = 7\nem_iters=3 # fewer\n\nforce = true\nquiet = false\n";
        let e = parse_config(text, Path::new("x")).unwrap();
        assert_eq!(e[0], ("seed".into(), "7".into()));
        assert_eq!(e[1], ("em-iters".into(), "3".into()));
        assert_eq!(to_args(&e), vec!["--seed", "7", "--em-iters", "3", "--force"]);
        assert!(parse_config("novalue\n", Path::new("x")).is_err());
        assert!(parse_config("config = other\n", Path::new("x")).is_err());
    }

    #[test]
    fn manifest_goes_before_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        fs::write(&p, "seed = 7\n").unwrap();
        let argv: Vec<String> = ["udiffse", "enhance", "--config", p.to_str().unwrap(), "--seed", "9"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_config_args(argv).unwrap();
        assert_eq!(out, vec!["udiffse", "enhance", "--seed", "7", "--seed", "9"]);
    }
}
