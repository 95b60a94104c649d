//! Command-line interface.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use bbrl_core::agents::{offline_learn, OfflineSettings};
use bbrl_core::prior::{preset, uniform_like, FdmDistribution};
use bbrl_core::protocol::{
    run_trained, CiRule, ExperimentSpec, DEFAULT_TRUNCATION_EPSILON, Z_ALPHA_95,
};
use bbrl_core::rng::{derive, Purpose};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::batch;
use crate::files::{
    config_from_lookup, parse_algorithm, read_distribution, reference, write_distribution,
    AgentFile, ExperimentFile, ResultFile, REWARD_TYPE,
};
use crate::report::{self, ReportOptions};

#[derive(Debug, Parser)]
#[command(
    name = "bbrl",
    version,
    about = "Benchmarking Bayesian reinforcement learning agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a prior or test distribution file.
    DistribGenerate(DistribArgs),
    /// Write an experiment file.
    ExperimentNew(ExperimentArgs),
    /// Run the offline phase of an agent and save it.
    OfflineLearn(OfflineArgs),
    /// Evaluate a trained agent on an experiment.
    Run(RunArgs),
    /// Build summary tables and plot data from result files.
    Export(ExportArgs),
    /// Run every experiment and agent listed in a TOML file.
    Batch(BatchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    Gc,
    Gdl,
    Grid,
    Uniform,
}

#[derive(Debug, Args)]
pub struct DistribArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub preset: Option<PresetName>,
    /// Preset name or distribution file whose shape and rewards `uniform` copies.
    #[arg(long, requires = "preset")]
    pub like: Option<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub short_name: Option<String>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub initial_state: usize,
    /// Dirichlet weights, row-major over (x, u, y), space separated.
    #[arg(long)]
    pub transition_weights: Option<String>,
    #[arg(long, default_value = REWARD_TYPE)]
    pub reward_type: String,
    /// Rewards, row-major over (x, u, y), space separated.
    #[arg(long)]
    pub reward_means: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
    /// Test distribution file.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long = "n-mdps", default_value_t = 500)]
    pub n_mdps: usize,
    #[arg(long, default_value_t = 0.95)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_EPSILON)]
    pub epsilon: f64,
    /// Overrides the horizon computed from epsilon.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compress result files of this experiment.
    #[arg(long)]
    pub compress: bool,
}

#[derive(Debug, Args)]
pub struct OfflineArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub algorithm: String,
    /// Agent parameter as name=value; repeatable.
    #[arg(long = "param", short = 'p')]
    pub params: Vec<String>,
    /// Prior distribution file.
    #[arg(long)]
    pub prior: PathBuf,
    /// Take gamma, horizon and seed from this experiment.
    #[arg(long)]
    pub experiment: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub agent: PathBuf,
    #[arg(long)]
    pub experiment: PathBuf,
    #[arg(long, env = "BBRL_WORKERS")]
    pub workers: Option<usize>,
    /// Gzip the result file (also enabled by the experiment).
    #[arg(long)]
    pub compress: bool,
    /// No progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Result files or directories holding them.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// One row per configuration instead of the best per algorithm.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub latex: bool,
    /// Half-width 2 sd / N instead of 2 sd / sqrt(N).
    #[arg(long)]
    pub literal_ci: bool,
    #[arg(long, default_value_t = Z_ALPHA_95)]
    pub z_alpha: f64,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    pub config: PathBuf,
    /// Overrides the output directory of the config.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "BBRL_WORKERS")]
    pub workers: Option<usize>,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Builds a distribution from a preset name, a `uniform:<source>` string or a file path.
pub fn load_distribution(source: &str, base: &Path) -> Result<FdmDistribution> {
    if let Some(rest) = source.strip_prefix("uniform:") {
        return Ok(uniform_like(&load_distribution(rest, base)?));
    }
    if let Some(name) = source.strip_prefix("preset:") {
        return preset(name)
            .ok_or_else(|| anyhow!("unknown preset {name:?} (known: gc, gdl, grid)"));
    }
    let path = base.join(source);
    if !path.exists() {
        if let Some(d) = preset(source) {
            return Ok(d);
        }
    }
    read_distribution(&path)
}

fn parse_numbers(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| anyhow!("{what}: cannot parse {s:?}")))
        .collect()
}

fn distrib_generate(a: DistribArgs) -> Result<()> {
    let dist = match a.preset {
        Some(PresetName::Uniform) => {
            let like = a
                .like
                .as_deref()
                .ok_or_else(|| anyhow!("--preset uniform needs --like <preset or file>"))?;
            uniform_like(&load_distribution(like, Path::new("."))?)
        }
        Some(p) => {
            if a.like.is_some() {
                bail!("--like only applies to --preset uniform");
            }
            let name = format!("{p:?}").to_ascii_lowercase();
            preset(&name).expect("every preset name is known")
        }
        None => {
            if a.reward_type != REWARD_TYPE {
                bail!(
                    "unknown reward type {:?} (supported: {REWARD_TYPE})",
                    a.reward_type
                );
            }
            let need = |v: Option<usize>, flag: &str| {
                v.ok_or_else(|| anyhow!("without --preset, {flag} is required"))
            };
            let n = need(a.states, "--states")?;
            let m = need(a.actions, "--actions")?;
            let theta = parse_numbers(
                a.transition_weights
                    .as_deref()
                    .ok_or_else(|| anyhow!("without --preset, --transition-weights is required"))?,
                "--transition-weights",
            )?;
            let rewards = parse_numbers(
                a.reward_means
                    .as_deref()
                    .ok_or_else(|| anyhow!("without --preset, --reward-means is required"))?,
                "--reward-means",
            )?;
            let name = a.name.clone().unwrap_or_else(|| "custom".to_string());
            let short = a.short_name.clone().unwrap_or_else(|| name.clone());
            FdmDistribution::new(name, short, n, m, theta, rewards, a.initial_state)?
        }
    };
    write_distribution(&a.out, &dist)?;
    log::info!("wrote {} to {}", dist.name(), a.out.display());
    Ok(())
}

fn experiment_new(a: ExperimentArgs) -> Result<()> {
    let test = Arc::new(read_distribution(&a.test)?);
    let mut spec = ExperimentSpec::accurate(test.clone(), a.n_mdps, a.gamma, a.seed);
    spec.epsilon = a.epsilon;
    spec.horizon = a.horizon;
    spec.validate()?;
    let exp = ExperimentFile {
        name: a.name.unwrap_or_else(|| test.short_name().to_string()),
        test: a.test.clone(),
        n_mdps: a.n_mdps,
        gamma: a.gamma,
        epsilon: a.epsilon,
        horizon: spec.horizon()?,
        seed: a.seed,
        compress: a.compress,
    };
    exp.write(&a.out)?;
    log::info!("experiment {} with horizon {}", exp.name, exp.horizon);
    Ok(())
}

fn offline(a: OfflineArgs) -> Result<()> {
    let algorithm = parse_algorithm(&a.algorithm)?;
    let mut pairs = Vec::new();
    for p in &a.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| anyhow!("--param expects name=value, got {p:?}"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let config = config_from_lookup(algorithm, &|key| {
        pairs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.clone())
    })?;
    let exp = a
        .experiment
        .as_deref()
        .map(ExperimentFile::read)
        .transpose()?;
    let gamma = a
        .gamma
        .or(exp.as_ref().map(|e| e.gamma))
        .ok_or_else(|| anyhow!("give --gamma or --experiment"))?;
    let horizon = a
        .horizon
        .or(exp.as_ref().map(|e| e.horizon))
        .ok_or_else(|| anyhow!("give --horizon or --experiment"))?;
    let seed = a.seed.or(exp.as_ref().map(|e| e.seed)).unwrap_or(0);
    let prior = Arc::new(read_distribution(&a.prior)?);
    let mut rng = derive(seed, Purpose::Offline, 0);
    let agent = offline_learn(
        &config,
        prior,
        OfflineSettings::new(gamma, horizon),
        &mut rng,
    )?;
    AgentFile::from_trained(&agent, &a.prior).write(&a.out)?;
    log::info!("trained {} in {:?}", agent.label(), agent.offline_time());
    Ok(())
}

/// Evaluates the agent stored at `agent_path` and writes the result file.
pub fn run_agent(
    agent_path: &Path,
    experiment_path: &Path,
    out: &Path,
    workers: usize,
    compress: bool,
    quiet: bool,
) -> Result<ResultFile> {
    let agent_file = AgentFile::read(agent_path)?;
    let agent = agent_file.trained()?;
    let exp = ExperimentFile::read(experiment_path)?;
    let spec = exp.spec(agent.prior().clone())?;
    let n = spec.n_mdps;
    let every = (n / 20).max(1);
    let label = agent.label();
    let progress = |done: usize| {
        if !quiet && (done.is_multiple_of(every) || done == n) {
            eprintln!("{label}: {done}/{n} trajectories");
        }
    };
    let results = run_trained(&spec, &agent, workers.max(1), progress)
        .with_context(|| format!("running {}", agent_path.display()))?;
    let file = ResultFile {
        agent: reference(out, agent_path),
        experiment: reference(out, experiment_path),
        experiment_name: exp.name.clone(),
        results,
    };
    file.write(out, compress || exp.compress)?;
    Ok(file)
}

fn run(a: RunArgs) -> Result<()> {
    let file = run_agent(
        &a.agent,
        &a.experiment,
        &a.out,
        a.workers.unwrap_or_else(default_workers),
        a.compress,
        a.quiet,
    )?;
    let s = file.results.score(CiRule::Standard)?;
    println!(
        "{}: {:.4} ± {:.4}",
        file.results.label, s.mean, s.half_width
    );
    Ok(())
}

/// Result files named on the command line; directories contribute their
/// `*.result` and `*.result.gz` files in name order.
pub fn collect_result_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("cannot list {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    let name = p.file_name().map(|n| n.to_string_lossy().into_owned());
                    name.is_some_and(|n| n.ends_with(".result") || n.ends_with(".result.gz"))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

pub fn export_results(inputs: &[PathBuf], out: &Path, options: &ReportOptions) -> Result<()> {
    let paths = collect_result_files(inputs)?;
    if paths.is_empty() {
        bail!("no result files found");
    }
    let results = paths
        .iter()
        .map(|p| ResultFile::read(p).map(|f| f.results))
        .collect::<Result<Vec<_>>>()?;
    let written = report::export(&results, options, out)?;
    log::info!("wrote {} into {}", written.join(", "), out.display());
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let options = ReportOptions {
        all_configs: a.all,
        latex: a.latex,
        rule: if a.literal_ci {
            CiRule::Literal
        } else {
            CiRule::Standard
        },
        z_alpha: a.z_alpha,
    };
    export_results(&a.results, &a.out, &options)?;
    print!("{}", std::fs::read_to_string(a.out.join("summary.txt"))?);
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DistribGenerate(a) => distrib_generate(a),
        Command::ExperimentNew(a) => experiment_new(a),
        Command::OfflineLearn(a) => offline(a),
        Command::Run(a) => run(a),
        Command::Export(a) => export(a),
        Command::Batch(a) => batch::run(
            &a.config,
            a.out.as_deref(),
            a.workers.unwrap_or_else(default_workers),
        ),
    }
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on usage errors, 2 when the command fails.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
