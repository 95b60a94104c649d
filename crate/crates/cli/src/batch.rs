//! Batch runs described by a TOML file:
//!
//! ```toml
//! out = "out"
//!
//! [[experiment]]
//! name = "gc"
//! prior = "preset:gc"
//! test = "preset:gc"
//! n_mdps = 500
//! gamma = 0.95
//! seed = 1
//!
//! [[agent]]
//! algorithm = "egreedy"
//! epsilon = [0.0, 0.1]
//! ```
//!
//! Distributions are `preset:<name>`, `uniform:<source>` or a file path
//! relative to the config. An agent entry without parameters expands to the
//! standard grid of its algorithm. Finished agent and result files are kept,
//! so an interrupted batch resumes where it stopped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use bbrl_core::agents::{offline_learn, AgentConfig, Algorithm, OfflineSettings};
use bbrl_core::protocol::{ExperimentSpec, DEFAULT_TRUNCATION_EPSILON};
use bbrl_core::rng::{derive, Purpose};
use serde::Deserialize;

use crate::commands::{export_results, load_distribution, run_agent};
use crate::files::{config_from_lookup, parse_algorithm, slug, AgentFile, ExperimentFile};
use crate::format::read_text;
use crate::report::ReportOptions;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub compress: bool,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<ExperimentEntry>,
    #[serde(default, rename = "agent")]
    pub agents: Vec<AgentEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEntry {
    pub name: String,
    pub prior: String,
    pub test: String,
    pub n_mdps: usize,
    pub gamma: f64,
    pub epsilon: Option<f64>,
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
pub struct AgentEntry {
    pub algorithm: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, toml::Value>,
}

fn scalar(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::String(s) => s.clone(),
        other => bail!("unsupported parameter value {other}"),
    })
}

fn values(v: &toml::Value) -> Result<Vec<String>> {
    match v {
        toml::Value::Array(items) => items.iter().map(scalar).collect(),
        other => Ok(vec![scalar(other)?]),
    }
}

impl AgentEntry {
    /// Every configuration of the entry: the cartesian product of its
    /// parameter lists, or the standard grid when it names none.
    pub fn configs(&self) -> Result<Vec<AgentConfig>> {
        let algorithm = parse_algorithm(&self.algorithm)?;
        if self.params.is_empty() {
            return Ok(AgentConfig::grid(algorithm));
        }
        let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (name, value) in &self.params {
            let options = values(value).with_context(|| format!("parameter '{name}'"))?;
            if options.is_empty() {
                bail!("parameter '{name}' has an empty list");
            }
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    options.iter().map(move |o| {
                        let mut c = c.clone();
                        c.push((name.clone(), o.clone()));
                        c
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .map(|pairs| {
                let config = config_from_lookup(algorithm, &|key| {
                    pairs
                        .iter()
                        .find(|(k, _)| k.eq_ignore_ascii_case(key))
                        .map(|(_, v)| v.clone())
                })?;
                check_known(algorithm, &config, &pairs)?;
                Ok(config)
            })
            .collect()
    }
}

fn check_known(
    algorithm: Algorithm,
    config: &AgentConfig,
    pairs: &[(String, String)],
) -> Result<()> {
    let known: Vec<&str> = config.parameters().into_iter().map(|(n, _)| n).collect();
    for (k, _) in pairs {
        if !known.iter().any(|n| n.eq_ignore_ascii_case(k)) {
            bail!(
                "{} has no parameter '{k}' (known: {})",
                algorithm.display_name(),
                known.join(", ")
            );
        }
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<BatchConfig> {
    let config: BatchConfig = toml::from_str(text)?;
    if config.experiments.is_empty() {
        bail!("the batch lists no [[experiment]]");
    }
    if config.agents.is_empty() {
        bail!("the batch lists no [[agent]]");
    }
    let mut names: Vec<&str> = config.experiments.iter().map(|e| e.name.as_str()).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("experiment name {:?} is used twice", w[0]);
    }
    Ok(config)
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn experiment_dir(&self) -> PathBuf {
        self.root.join("experiment")
    }
    fn prior(&self) -> PathBuf {
        self.experiment_dir().join("prior.dist")
    }
    fn test(&self) -> PathBuf {
        self.experiment_dir().join("test.dist")
    }
    fn experiment(&self) -> PathBuf {
        self.experiment_dir().join("experiment.exp")
    }
    fn agent(&self, slug: &str) -> PathBuf {
        self.root.join("agents").join(format!("{slug}.agent"))
    }
    fn result(&self, slug: &str, compress: bool) -> PathBuf {
        let ext = if compress { "result.gz" } else { "result" };
        self.root.join("results").join(format!("{slug}.{ext}"))
    }
    fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Writes `text` unless an identical file is present; refuses to replace
/// a different one so stale agents are never mixed with new settings.
fn write_or_check(path: &Path, text: &str) -> Result<()> {
    if path.exists() {
        let old = read_text(path)?;
        if old != text {
            bail!(
                "{} exists with different contents; remove the output directory to start over",
                path.display()
            );
        }
        return Ok(());
    }
    crate::format::write_text(path, text, false)
}

fn prepare_experiment(
    entry: &ExperimentEntry,
    base: &Path,
    layout: &Layout,
    compress: bool,
) -> Result<ExperimentFile> {
    let prior = load_distribution(&entry.prior, base)?;
    let test = load_distribution(&entry.test, base)?;
    let mut spec = ExperimentSpec::new(
        Arc::new(prior.clone()),
        Arc::new(test.clone()),
        entry.n_mdps,
        entry.gamma,
        entry.seed,
    );
    spec.epsilon = entry.epsilon.unwrap_or(DEFAULT_TRUNCATION_EPSILON);
    spec.horizon = entry.horizon;
    spec.validate()?;
    write_or_check(
        &layout.prior(),
        &crate::files::distribution_document(&prior).render(),
    )?;
    write_or_check(
        &layout.test(),
        &crate::files::distribution_document(&test).render(),
    )?;
    let exp = ExperimentFile {
        name: entry.name.clone(),
        test: layout.test(),
        n_mdps: entry.n_mdps,
        gamma: entry.gamma,
        epsilon: spec.epsilon,
        horizon: spec.horizon()?,
        seed: entry.seed,
        compress,
    };
    let path = layout.experiment();
    if path.exists() {
        let old = ExperimentFile::read(&path)?;
        let canonical = |e: &ExperimentFile| ExperimentFile {
            test: e.test.canonicalize().unwrap_or_else(|_| e.test.clone()),
            ..e.clone()
        };
        if canonical(&old) != canonical(&exp) {
            bail!(
                "{} exists with different settings; remove the output directory to start over",
                path.display()
            );
        }
    } else {
        exp.write(&path)?;
    }
    Ok(exp)
}

fn run_one(
    config: &AgentConfig,
    exp: &ExperimentFile,
    layout: &Layout,
    workers: usize,
) -> Result<PathBuf> {
    let slug = slug(config);
    let agent_path = layout.agent(&slug);
    let result_path = layout.result(&slug, exp.compress);
    if !agent_path.exists() {
        let prior = Arc::new(crate::files::read_distribution(&layout.prior())?);
        let mut rng = derive(exp.seed, Purpose::Offline, 0);
        let agent = offline_learn(
            config,
            prior,
            OfflineSettings::new(exp.gamma, exp.horizon),
            &mut rng,
        )?;
        AgentFile::from_trained(&agent, &layout.prior()).write(&agent_path)?;
    } else {
        log::info!("keeping {}", agent_path.display());
    }
    if !result_path.exists() {
        run_agent(
            &agent_path,
            &layout.experiment(),
            &result_path,
            workers,
            exp.compress,
            false,
        )?;
    } else {
        log::info!("keeping {}", result_path.display());
    }
    Ok(result_path)
}

/// Runs the batch described in `config_path`. Every job is attempted; the
/// call fails afterwards if any of them did.
pub fn run(config_path: &Path, out: Option<&Path>, workers: usize) -> Result<()> {
    let text = read_text(config_path)?;
    let config = parse_config(&text).with_context(|| format!("in {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let root = match (out, &config.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("out"),
    };
    let mut configs = Vec::new();
    for entry in &config.agents {
        configs.extend(entry.configs()?);
    }
    let mut seen = std::collections::HashSet::new();
    configs.retain(|c| seen.insert(slug(c)));

    let mut failures = Vec::new();
    for entry in &config.experiments {
        let layout = Layout {
            root: root.join(&entry.name),
        };
        let exp = match prepare_experiment(entry, base, &layout, config.compress) {
            Ok(exp) => exp,
            Err(e) => {
                eprintln!("experiment {}: {e:#}", entry.name);
                failures.push(entry.name.clone());
                continue;
            }
        };
        let mut results = Vec::new();
        for c in &configs {
            match run_one(c, &exp, &layout, workers) {
                Ok(p) => results.push(p),
                Err(e) => {
                    eprintln!("{} / {}: {e:#}", entry.name, c.label());
                    failures.push(format!("{} / {}", entry.name, c.label()));
                }
            }
        }
        if !results.is_empty() {
            if let Err(e) = export_results(&results, &layout.report(), &ReportOptions::default()) {
                eprintln!("{} report: {e:#}", entry.name);
                failures.push(format!("{} report", entry.name));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!(
            "{} job(s) failed: {}",
            failures.len(),
            failures.join(", ")
        ))
    }
}
