//! Flat `section.key = value` experiment configuration.
//!
//! Lines are `key = value` pairs; `#` starts a comment and blank lines are
//! ignored. Every key not given takes its default. Unknown and repeated keys
//! are errors. [`echo`] writes the complete effective configuration in the
//! same format; loading an echo file reproduces the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::bandit::ExperimentConfig;
use crate::environments::{EnvKind, EnvSpec};
use crate::error::{BanditError, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::policies::{PolicyKind, PolicySpec};

/// Every accepted key, in echo order.
pub const KEYS: [&str; 22] = [
    "env.kind",
    "env.n",
    "env.K",
    "env.noise_scale",
    "env.data_path",
    "env.exact_balance",
    "env.dim",
    "model.kind",
    "model.hidden",
    "model.dropout",
    "model.batch_size",
    "model.ridge_lambda",
    "model.learning_rate",
    "model.warm_start",
    "policy.kind",
    "policy.epsilon0",
    "policy.decay_scale",
    "policy.posterior_samples",
    "run.horizon",
    "run.seed",
    "run.retrain_every",
    "run.epochs_per_fit",
];

/// Dropout used by the Thompson policy when `model.dropout` is not given.
pub const THOMPSON_DEFAULT_DROPOUT: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 1000;

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| BanditError::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

struct Entries<'a> {
    source: &'a str,
    values: BTreeMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn invalid(&self, key: &str, expected: &str) -> BanditError {
        let (line, value) = self.values[key];
        BanditError::InvalidConfig(format!(
            "{}:{line}: {key} = {value:?}: expected {expected}",
            self.source
        ))
    }

    fn get<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((_, v)) => v.parse().map(Some).map_err(|_| self.invalid(key, expected)),
        }
    }

    fn kind<T: std::str::FromStr<Err = BanditError>>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| match e {
                BanditError::InvalidConfig(m) => {
                    BanditError::InvalidConfig(format!("{}:{line}: {m}", self.source))
                }
                other => other,
            }),
        }
    }
}

/// Parses configuration text; `source` names it in error messages.
pub fn parse_config(text: &str, source: &str) -> Result<ExperimentConfig> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            BanditError::InvalidConfig(format!("{source}:{line_no}: expected `key = value`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(BanditError::InvalidConfig(format!(
                "{source}:{line_no}: unknown key {key:?}"
            )));
        }
        if values.insert(key, (line_no, value)).is_some() {
            return Err(BanditError::InvalidConfig(format!(
                "{source}:{line_no}: key {key:?} given twice"
            )));
        }
    }
    let e = Entries { source, values };
    const UINT: &str = "a non-negative integer";
    const REAL: &str = "a real number";

    let env_kind = e.kind::<EnvKind>("env.kind")?.unwrap_or(EnvKind::Synthetic);
    let mut env = EnvSpec::new(env_kind);
    if let Some(v) = e.get("env.n", UINT)? {
        env.n = v;
    }
    if let Some(v) = e.get("env.K", UINT)? {
        env.k = v;
    }
    if let Some(v) = e.get("env.noise_scale", REAL)? {
        env.noise_scale = v;
    }
    if let Some(v) = e.get::<String>("env.data_path", "a path")? {
        env.data_path = (!v.is_empty()).then(|| PathBuf::from(v));
    }
    if let Some(v) = e.get("env.exact_balance", "true or false")? {
        env.exact_balance = v;
    }
    if let Some(v) = e.get("env.dim", UINT)? {
        env.dim = v;
    }

    let policy_kind = e
        .kind::<PolicyKind>("policy.kind")?
        .unwrap_or(PolicyKind::Greedy);
    let mut policy = PolicySpec::of_kind(policy_kind);
    if let Some(v) = e.get("policy.epsilon0", "a real number in [0, 1]")? {
        policy.epsilon0 = v;
    }
    if let Some(v) = e.get("policy.decay_scale", "a real number > 0")? {
        policy.decay_scale = v;
    }
    if let Some(v) = e.get("policy.posterior_samples", "an integer >= 1")? {
        policy.posterior_samples = v;
    }

    let mut model = ModelSpec {
        kind: e.kind::<ModelKind>("model.kind")?.unwrap_or(ModelKind::Mlp),
        ..ModelSpec::default()
    };
    if policy_kind == PolicyKind::ThompsonDropout {
        model.dropout = THOMPSON_DEFAULT_DROPOUT;
    }
    if let Some(v) = e.get("model.hidden", UINT)? {
        model.hidden = v;
    }
    if let Some(v) = e.get("model.dropout", "a real number in [0, 1)")? {
        model.dropout = v;
    }
    if let Some(v) = e.get("model.batch_size", UINT)? {
        model.batch_size = v;
    }
    if let Some(v) = e.get("model.ridge_lambda", "a real number >= 0")? {
        model.ridge_lambda = v;
    }
    if let Some(v) = e.get("model.learning_rate", "a real number > 0")? {
        model.learning_rate = v;
    }
    if let Some(v) = e.get("model.warm_start", "true or false")? {
        model.warm_start = v;
    }

    let mut config = ExperimentConfig::new(env, model, policy);
    config.horizon = DEFAULT_HORIZON;
    if let Some(v) = e.get("run.horizon", UINT)? {
        config.horizon = v;
    }
    if let Some(v) = e.get("run.seed", "an unsigned 64-bit integer")? {
        config.seed = v;
    }
    if let Some(v) = e.get("run.retrain_every", UINT)? {
        config.retrain_every = v;
    }
    if let Some(v) = e.get("run.epochs_per_fit", UINT)? {
        config.epochs_per_fit = v;
    }
    config.validate()?;
    Ok(config)
}

fn env_lines(config: &ExperimentConfig, out: &mut String) {
    let env = &config.env;
    let path = env
        .resolved_data_path()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    let _ = writeln!(out, "env.kind = {}", env.kind);
    let _ = writeln!(out, "env.n = {}", env.n);
    let _ = writeln!(out, "env.K = {}", env.k);
    let _ = writeln!(out, "env.noise_scale = {}", env.noise_scale);
    let _ = writeln!(out, "env.data_path = {path}");
    let _ = writeln!(out, "env.exact_balance = {}", env.exact_balance);
    let _ = writeln!(out, "env.dim = {}", env.dim);
}

/// The full effective configuration, one `key = value` line per key.
pub fn echo(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    env_lines(config, &mut out);
    let m = &config.model;
    let _ = writeln!(out, "model.kind = {}", m.kind);
    let _ = writeln!(out, "model.hidden = {}", m.hidden);
    let _ = writeln!(out, "model.dropout = {}", m.dropout);
    let _ = writeln!(out, "model.batch_size = {}", m.batch_size);
    let _ = writeln!(out, "model.ridge_lambda = {}", m.ridge_lambda);
    let _ = writeln!(out, "model.learning_rate = {}", m.learning_rate);
    let _ = writeln!(out, "model.warm_start = {}", m.warm_start);
    let p = &config.policy;
    let _ = writeln!(out, "policy.kind = {}", p.kind);
    let _ = writeln!(out, "policy.epsilon0 = {}", p.epsilon0);
    let _ = writeln!(out, "policy.decay_scale = {}", p.decay_scale);
    let _ = writeln!(out, "policy.posterior_samples = {}", p.posterior_samples);
    let _ = writeln!(out, "run.horizon = {}", config.horizon);
    let _ = writeln!(out, "run.seed = {}", config.seed);
    let _ = writeln!(out, "run.retrain_every = {}", config.retrain_every);
    let _ = writeln!(out, "run.epochs_per_fit = {}", config.epochs_per_fit);
    out
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// SHA-256 of the canonical echo.
pub fn config_fingerprint(config: &ExperimentConfig) -> String {
    sha256_hex(&echo(config))
}

/// SHA-256 of the `env.*` lines of the echo.
pub fn env_fingerprint(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    env_lines(config, &mut out);
    sha256_hex(&out)
}
