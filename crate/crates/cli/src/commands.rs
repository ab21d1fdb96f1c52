use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use topk_bandit::config::{echo, load_config, parse_config};
use topk_bandit::environments::DataPools;
use topk_bandit::models::checkpoint::write_checkpoint;
use topk_bandit::models::ModelKind;
use topk_bandit::policies::PolicyKind;
use topk_bandit::verify::run_checks;
use topk_bandit::{compare, BanditError, Experiment, ExperimentConfig, ExperimentTrace};

use crate::output::{self, write_file};
use crate::{ChartArgs, CheckArgs, CliError, GridArgs, Metric, RunArgs};

/// Plays `config` to the end, timing the run.
fn play(config: &ExperimentConfig, pools: &DataPools) -> Result<Experiment, BanditError> {
    let mut experiment = Experiment::new(config.clone(), pools)?;
    while !experiment.is_finished() {
        experiment.step()?;
    }
    Ok(experiment)
}

fn timed_trace(
    config: &ExperimentConfig,
    pools: &DataPools,
) -> Result<(Experiment, ExperimentTrace), BanditError> {
    let started = Instant::now();
    let experiment = play(config, pools)?;
    let mut trace = experiment.trace()?;
    trace.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((experiment, trace))
}

fn save_checkpoint(path: &Path, experiment: &Experiment) -> Result<(), CliError> {
    let output_error = |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(output_error)?;
    let mut w = BufWriter::new(file);
    let model = experiment.model();
    write_checkpoint(&mut w, model.kind().as_str(), &model.parameters())?;
    w.flush().map_err(output_error)
}

fn summary(trace: &ExperimentTrace, seed: u64) -> String {
    format!(
        "{}/{} seed {seed}: {} rounds, cumulative regret {:.3}, cumulative reward {:.3} ({:.1}s)",
        trace.policy,
        trace.model,
        trace.len(),
        trace.final_regret(),
        trace.final_reward(),
        trace.wall_time_secs
    )
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(every) = args.retrain_every {
        config.retrain_every = every;
    }
    config.validate()?;
    output::prepare_dir(&args.out)?;
    let pools = DataPools::new();
    let (experiment, trace) = timed_trace(&config, &pools)?;
    write_file(&args.out.join(output::ECHO_FILE), &echo(&config))?;
    let path = output::write_trace(&args.out, &trace, config.seed)?;
    if let Some(checkpoint) = &args.checkpoint {
        save_checkpoint(checkpoint, &experiment)?;
    }
    println!("{}", summary(&trace, config.seed));
    println!("wrote {}", path.display());
    Ok(())
}

/// Key of a config line, ignoring comments.
fn line_key(line: &str) -> Option<&str> {
    let content = line.split('#').next()?;
    Some(content.split_once('=')?.0.trim())
}

/// `base` with its policy and model kinds replaced. Going through the parser
/// keeps kind-dependent defaults (the Thompson dropout rate) in effect.
fn cell_text(base: &str, policy: PolicyKind, model: ModelKind) -> String {
    let mut text: String = base
        .lines()
        .filter(|l| !matches!(line_key(l), Some("policy.kind" | "model.kind")))
        .flat_map(|l| [l, "\n"])
        .collect();
    text.push_str(&format!("policy.kind = {policy}\nmodel.kind = {model}\n"));
    text
}

fn parse_list<T: std::str::FromStr<Err = BanditError>>(
    values: &[String],
    default: T,
) -> Result<Vec<T>, CliError> {
    if values.is_empty() {
        return Ok(vec![default]);
    }
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        out.push(v.trim().parse()?);
    }
    Ok(out)
}

pub fn grid(args: &GridArgs) -> Result<(), CliError> {
    let source = args.config.display().to_string();
    let base_text = std::fs::read_to_string(&args.config).map_err(|source| {
        CliError::Bandit(BanditError::Io {
            path: args.config.clone(),
            source,
        })
    })?;
    let mut base = parse_config(&base_text, &source)?;
    let policies = parse_list(&args.policies, base.policy.kind)?;
    let models = parse_list(&args.models, base.model.kind)?;
    let seeds = if args.seeds.is_empty() {
        vec![base.seed]
    } else {
        args.seeds.clone()
    };
    let distinct: BTreeSet<u64> = seeds.iter().copied().collect();
    if distinct.len() != seeds.len() {
        return Err(CliError::Usage(format!(
            "--seeds must not repeat a seed: {seeds:?}"
        )));
    }
    if let Some(every) = args.retrain_every {
        base.retrain_every = every;
    }
    base.validate()?;

    let mut cells = Vec::new();
    for &policy in &policies {
        for &model in &models {
            let mut cell = parse_config(&cell_text(&base_text, policy, model), &source)?;
            cell.retrain_every = base.retrain_every;
            cell.seed = seeds[0];
            cell.validate()?;
            cells.push(cell);
        }
    }
    output::prepare_dir(&args.out)?;

    let pools = DataPools::new();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<Result<ExperimentTrace, BanditError>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let mut config = cells[c].clone();
            config.seed = seed;
            let (_, trace) = timed_trace(&config, &pools)?;
            eprintln!("{}", summary(&trace, seed));
            Ok(trace)
        })
        .collect();
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        traces.push(r?);
    }

    write_file(&args.out.join(output::ECHO_FILE), &echo(&base))?;
    for cell in &cells {
        let name = format!("config__{}__{}.echo", cell.policy.kind, cell.model.kind);
        write_file(&args.out.join(name), &echo(cell))?;
    }
    for (trace, &(_, seed)) in traces.iter().zip(&jobs) {
        output::write_trace(&args.out, trace, seed)?;
    }
    let table = compare(&traces)?;
    write_file(&args.out.join(output::TABLE_FILE), &table.to_csv())?;
    if !args.no_chart {
        for metric in [Metric::Regret, Metric::Reward] {
            let path = args.out.join(output::chart_file_name(metric));
            write_file(&path, &output::render_chart(&traces, metric))?;
        }
    }
    println!("ranking by final mean regret:");
    for (i, (policy, model, regret)) in table.ranking.iter().enumerate() {
        println!("  {}. {policy}/{model}: {regret:.3}", i + 1);
    }
    println!(
        "wrote {} traces and {} to {}",
        traces.len(),
        output::TABLE_FILE,
        args.out.display()
    );
    Ok(())
}

pub fn chart(args: &ChartArgs) -> Result<(), CliError> {
    let paths = output::collect_trace_paths(&args.traces)?;
    let traces = paths
        .iter()
        .map(|p| output::read_trace(p))
        .collect::<Result<Vec<_>, _>>()?;
    output::prepare_dir(&args.out)?;
    let path = args.out.join(output::chart_file_name(args.metric));
    write_file(&path, &output::render_chart(&traces, args.metric))?;
    println!("wrote {} ({} traces)", path.display(), traces.len());
    Ok(())
}

pub fn check(args: &CheckArgs) -> Result<(), CliError> {
    let outcomes = run_checks(args.seed);
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::CheckFailed(format!(
            "{failed} of {} checks failed",
            outcomes.len()
        )));
    }
    Ok(())
}
