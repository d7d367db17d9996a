//! Layered run configuration: built-in defaults, then a `key = value` config
//! file, then `SHIELDMT_*` environment variables, then command-line flags.
//! Later layers win.

use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use shieldmt_core::boolabs::AbstractionOptions;
use shieldmt_core::theory::{
    DEFAULT_BOUND, DEFAULT_TIMEOUT_MS, ENV_SMT_ARGS, ENV_SMT_BIN, ENV_SMT_TIMEOUT_MS,
};
use shieldmt_core::SolverConfig;

/// Environment variable for the bounded-backend box scale.
pub const ENV_BOUND: &str = "SHIELDMT_BOUND";
/// Environment variable for the reaction-check worker count.
pub const ENV_JOBS: &str = "SHIELDMT_JOBS";
/// Environment variable for the default RNG seed.
pub const ENV_SEED: &str = "SHIELDMT_SEED";

/// Fully resolved settings shared by every subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    /// External SMT solver binary; `None` selects the bounded backend.
    pub smt_bin: Option<String>,
    /// Arguments for the SMT binary (whitespace-split); `None` uses the
    /// backend's defaults for the chosen binary.
    pub smt_args: Option<Vec<String>>,
    /// Per-query SMT timeout.
    pub timeout_ms: u64,
    /// Base box scale `B` of the bounded backend.
    pub bound: i64,
    /// Worker threads for reaction validity checks.
    pub jobs: usize,
    /// Seed used when a policy string omits one.
    pub seed: u64,
    /// Emit a machine-readable JSON report on stdout.
    pub json: bool,
}

impl Default for Settings {
    fn default() -> Settings {
        Settings {
            smt_bin: None,
            smt_args: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            bound: DEFAULT_BOUND,
            jobs: 1,
            seed: 0,
            json: false,
        }
    }
}

impl Settings {
    /// Apply one `key = value` pair (config-file syntax).
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "smt_bin" => self.smt_bin = Some(value.to_string()),
            "smt_args" => {
                self.smt_args = Some(value.split_whitespace().map(str::to_string).collect())
            }
            "timeout_ms" => self.timeout_ms = parse_num(key, value)?,
            "bound" => self.bound = parse_num(key, value)?,
            "jobs" => self.jobs = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Layer a config file over the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected `key = value`", path.display(), ln + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), ln + 1))?;
        }
        Ok(())
    }

    /// Layer `SHIELDMT_*` environment variables over the current values.
    pub fn apply_env(&mut self) -> Result<()> {
        for (var, key) in [
            (ENV_SMT_BIN, "smt_bin"),
            (ENV_SMT_ARGS, "smt_args"),
            (ENV_SMT_TIMEOUT_MS, "timeout_ms"),
            (ENV_BOUND, "bound"),
            (ENV_JOBS, "jobs"),
            (ENV_SEED, "seed"),
        ] {
            if let Ok(value) = std::env::var(var) {
                if !value.is_empty() {
                    self.set(key, &value).with_context(|| format!("environment variable {var}"))?;
                }
            }
        }
        Ok(())
    }

    /// Solver backend implied by these settings.
    pub fn solver_config(&self) -> SolverConfig {
        match &self.smt_bin {
            Some(bin) => SolverConfig::Smt {
                bin: bin.clone(),
                args: self
                    .smt_args
                    .clone()
                    .unwrap_or_else(|| shieldmt_core::theory::smt::default_args(bin)),
                timeout: Duration::from_millis(self.timeout_ms),
            },
            None => SolverConfig::Bounded { bound: self.bound },
        }
    }

    /// Abstraction options implied by these settings.
    pub fn abstraction_opts(&self) -> AbstractionOptions {
        AbstractionOptions { solver: self.solver_config(), jobs: self.jobs, ..Default::default() }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow::anyhow!("config key `{key}`: invalid value `{value}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_layer_overrides_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nbound = 32\n\njobs=4\nsmt_args = -q --foo").unwrap();
        let mut s = Settings::default();
        s.apply_file(f.path()).unwrap();
        assert_eq!(s.bound, 32);
        assert_eq!(s.jobs, 4);
        assert_eq!(s.smt_args.as_deref(), Some(&["-q".to_string(), "--foo".to_string()][..]));
        assert_eq!(s.timeout_ms, DEFAULT_TIMEOUT_MS);
    }

    #[test]
    fn unknown_key_and_bad_value_are_rejected() {
        let mut s = Settings::default();
        assert!(s.set("nope", "1").is_err());
        assert!(s.set("bound", "abc").is_err());
    }

    #[test]
    fn solver_config_selects_backend() {
        let mut s = Settings::default();
        assert_eq!(s.solver_config(), SolverConfig::Bounded { bound: DEFAULT_BOUND });
        s.smt_bin = Some("z3".into());
        s.timeout_ms = 1234;
        match s.solver_config() {
            SolverConfig::Smt { bin, timeout, .. } => {
                assert_eq!(bin, "z3");
                assert_eq!(timeout, Duration::from_millis(1234));
            }
            other => panic!("expected SMT backend, got {other:?}"),
        }
    }
}
