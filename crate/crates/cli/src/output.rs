//! Output directory layout: trace CSVs with `.meta` sidecars, config echoes,
//! the comparison table and charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use topk_bandit::chart::{line_chart_svg, mean_series, ChartSeries};
use topk_bandit::metrics::format_sig9;
use topk_bandit::{BanditError, ExperimentTrace};

use crate::{CliError, Metric};

pub const TABLE_FILE: &str = "comparison.csv";
pub const ECHO_FILE: &str = "config.echo";

pub fn trace_file_name(policy: &str, model: &str, seed: u64) -> String {
    format!("trace__{policy}__{model}__seed{seed}.csv")
}

pub fn chart_file_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Regret => "chart_regret.svg",
        Metric::Reward => "chart_reward.svg",
    }
}

/// Creates `dir` if needed; failure is a configuration error.
pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Usage(format!(
            "output directory {} is not writable: {e}",
            dir.display()
        ))
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn meta_path(trace_path: &Path) -> PathBuf {
    trace_path.with_extension("meta")
}

/// Writes the trace CSV and its sidecar. Only the sidecar carries wall time,
/// so the CSV of a rerun is byte-identical.
pub fn write_trace(dir: &Path, trace: &ExperimentTrace, seed: u64) -> Result<PathBuf, CliError> {
    let path = dir.join(trace_file_name(&trace.policy, &trace.model, seed));
    write_file(&path, &trace.to_csv())?;
    let mut meta = String::new();
    let _ = writeln!(meta, "policy = {}", trace.policy);
    let _ = writeln!(meta, "model = {}", trace.model);
    let _ = writeln!(meta, "seed = {seed}");
    let _ = writeln!(meta, "config_fingerprint = {}", trace.config_fingerprint);
    let _ = writeln!(meta, "env_fingerprint = {}", trace.env_fingerprint);
    let _ = writeln!(
        meta,
        "wall_time_secs = {}",
        format_sig9(trace.wall_time_secs)
    );
    write_file(&meta_path(&path), &meta)?;
    Ok(path)
}

/// Policy and model encoded in a `trace__{policy}__{model}__seed{N}.csv` name.
fn labels_from_name(path: &Path) -> Option<(String, String)> {
    let stem = path.file_stem()?.to_str()?;
    let mut parts = stem.strip_prefix("trace__")?.split("__");
    let policy = parts.next()?;
    let model = parts.next()?;
    Some((policy.to_string(), model.to_string()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| {
        CliError::Bandit(BanditError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

/// Loads one trace, taking labels and fingerprints from its sidecar when
/// present and from the file name otherwise.
pub fn read_trace(path: &Path) -> Result<ExperimentTrace, CliError> {
    let text = read_text(path)?;
    let mut trace = ExperimentTrace::from_csv(&text, &path.display().to_string())?;
    if let Some((policy, model)) = labels_from_name(path) {
        trace.policy = policy;
        trace.model = model;
    }
    let meta = meta_path(path);
    if meta.is_file() {
        for line in read_text(&meta)?.lines() {
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let value = value.trim().to_string();
            match key.trim() {
                "policy" => trace.policy = value,
                "model" => trace.model = value,
                "config_fingerprint" => trace.config_fingerprint = value,
                "env_fingerprint" => trace.env_fingerprint = value,
                "wall_time_secs" => trace.wall_time_secs = value.parse().unwrap_or(0.0),
                _ => {}
            }
        }
    }
    if trace.policy.is_empty() || trace.model.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: cannot tell policy and model (expected trace__{{policy}}__{{model}}__seed{{N}}.csv or a .meta sidecar)",
            path.display()
        )));
    }
    Ok(trace)
}

/// Expands directories to their `trace__*.csv` files. The result is sorted so
/// that downstream output does not depend on directory order.
pub fn collect_trace_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = std::fs::read_dir(input).map_err(|source| {
                CliError::Bandit(BanditError::Io {
                    path: input.clone(),
                    source,
                })
            })?;
            for entry in entries.flatten() {
                let p = entry.path();
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with("trace__") && name.ends_with(".csv") {
                    paths.push(p);
                }
            }
        } else {
            paths.push(input.clone());
        }
    }
    paths.sort();
    paths.dedup();
    if paths.is_empty() {
        return Err(CliError::Usage("no trace files found".into()));
    }
    Ok(paths)
}

/// Seed-averaged line per policy/model.
pub fn render_chart(traces: &[ExperimentTrace], metric: Metric) -> String {
    let mut groups: BTreeMap<(String, String), Vec<&[f64]>> = BTreeMap::new();
    for t in traces {
        let values = match metric {
            Metric::Regret => &t.cum_regret,
            Metric::Reward => &t.cum_reward,
        };
        groups
            .entry((t.policy.clone(), t.model.clone()))
            .or_default()
            .push(values);
    }
    let series: Vec<ChartSeries> = groups
        .into_iter()
        .map(|((policy, model), runs)| ChartSeries {
            label: format!("{policy}/{model}"),
            values: mean_series(&runs),
        })
        .collect();
    let (title, y_label) = match metric {
        Metric::Regret => ("Cumulative regret", "cumulative regret"),
        Metric::Reward => ("Cumulative reward", "cumulative reward"),
    };
    line_chart_svg(title, y_label, &series)
}
