//! Output files and their comment headers.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::Path;

use anyhow::Context as _;

use crate::Cli;

/// Run-wide facts echoed into every output header.
pub struct Context {
    pub seed: u64,
    command_line: String,
    config: String,
}

impl Context {
    pub fn new(cli: &Cli) -> anyhow::Result<Self> {
        let args: Vec<String> = std::env::args().skip(1).map(|a| quote(&a)).collect();
        let mut command_line = String::new();
        // a seed taken from the environment is spelled out so the line reruns as is
        let explicit = args
            .iter()
            .any(|a| a == "--seed" || a.starts_with("--seed="));
        if !explicit && std::env::var_os("ELASTIC_MINE_SEED").is_some() {
            command_line.push_str(&format!("ELASTIC_MINE_SEED={} ", cli.seed));
        }
        command_line.push_str("elastic-mine");
        for a in &args {
            command_line.push(' ');
            command_line.push_str(a);
        }
        Ok(Self {
            seed: cli.seed,
            command_line,
            config: serde_json::to_string(cli)?,
        })
    }

    /// Comment lines: version, command line, effective config, seed, then
    /// any command-specific facts.
    pub fn header(&self, extra: &[String]) -> String {
        let mut h = format!(
            "# elastic-mine {}\n# command: {}\n# config: {}\n# seed: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command_line,
            self.config,
            self.seed
        );
        for line in extra {
            h.push_str("# ");
            h.push_str(line);
            h.push('\n');
        }
        h
    }

    /// Writes header plus body to `path`, or to stdout when absent.
    pub fn emit(&self, path: Option<&Path>, extra: &[String], body: &[u8]) -> anyhow::Result<()> {
        let mut bytes = self.header(extra).into_bytes();
        bytes.extend_from_slice(body);
        match path {
            Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
            None => {
                let mut out = io::stdout().lock();
                out.write_all(&bytes)?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

fn quote(arg: &str) -> String {
    if !arg.is_empty()
        && arg
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_./=:,+".contains(c))
    {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

pub fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Renders a body produced by one of the core CSV writers.
pub fn render(
    write: impl FnOnce(&mut Vec<u8>) -> elastic_core::Result<()>,
) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}
