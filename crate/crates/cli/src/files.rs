//! The four on-disk file kinds: distributions, experiments, trained agents
//! and results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use bbrl_core::agents::{AgentConfig, Algorithm, OfflineSettings, TrainedAgent};
use bbrl_core::formulas::Formula;
use bbrl_core::mdp::Transition;
use bbrl_core::prior::FdmDistribution;
use bbrl_core::protocol::{CiRule, ExperimentSpec, ResultSet, TrajectoryRecord};

use crate::format::{join, read_text, write_text, Document, Section};

/// The only reward model: deterministic rewards given `(x, u, y)`.
pub const REWARD_TYPE: &str = "RT_CONSTANT";

/// How `target` is written inside a file stored at `from`: the bare file
/// name when both live in the same directory, an absolute path otherwise.
pub fn reference(from: &Path, target: &Path) -> String {
    let abs = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    let target_abs = abs(target);
    let from_dir = from.parent().map(abs);
    match (from_dir, target_abs.parent(), target_abs.file_name()) {
        (Some(fd), Some(td), Some(name)) if fd == td => name.to_string_lossy().into_owned(),
        _ => target_abs.to_string_lossy().into_owned(),
    }
}

/// Resolves a reference stored in the file at `from`.
pub fn resolve(from: &Path, reference: &str) -> PathBuf {
    let p = Path::new(reference);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        from.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn load(path: &Path, kind: &str) -> Result<Document> {
    let text = read_text(path)?;
    Document::parse(&text, kind).with_context(|| format!("in {}", path.display()))
}

// Distributions

pub fn distribution_document(d: &FdmDistribution) -> Document {
    let mut doc = Document::new("distribution");
    doc.set("name", d.name());
    doc.set("short_name", d.short_name());
    doc.set("n_states", d.n_states());
    doc.set("n_actions", d.n_actions());
    doc.set("initial_state", d.initial_state());
    doc.set("reward_type", REWARD_TYPE);
    doc.set("theta", join(d.theta()));
    doc.set("reward_means", join(d.rewards()));
    doc
}

pub fn distribution_from_document(doc: &Document) -> Result<FdmDistribution> {
    let h = &doc.header;
    let reward_type = h.require("reward_type")?;
    if reward_type != REWARD_TYPE {
        bail!("unknown reward type {reward_type:?} (supported: {REWARD_TYPE})");
    }
    Ok(FdmDistribution::new(
        h.require("name")?,
        h.require("short_name")?,
        h.parse("n_states")?,
        h.parse("n_actions")?,
        h.parse_list("theta")?,
        h.parse_list("reward_means")?,
        h.parse("initial_state")?,
    )?)
}

pub fn write_distribution(path: &Path, d: &FdmDistribution) -> Result<()> {
    write_text(path, &distribution_document(d).render(), false)
}

pub fn read_distribution(path: &Path) -> Result<FdmDistribution> {
    distribution_from_document(&load(path, "distribution")?)
        .with_context(|| format!("in {}", path.display()))
}

// Experiments

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentFile {
    pub name: String,
    /// Test distribution, resolved.
    pub test: PathBuf,
    pub n_mdps: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub horizon: usize,
    pub seed: u64,
    pub compress: bool,
}

impl ExperimentFile {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut doc = Document::new("experiment");
        doc.set("name", &self.name);
        doc.set("test", reference(path, &self.test));
        doc.set("n_mdps", self.n_mdps);
        doc.set("gamma", self.gamma);
        doc.set("epsilon", self.epsilon);
        doc.set("horizon", self.horizon);
        doc.set("seed", self.seed);
        doc.set("compress", self.compress);
        write_text(path, &doc.render(), false)
    }

    pub fn read(path: &Path) -> Result<ExperimentFile> {
        let doc = load(path, "experiment")?;
        let h = &doc.header;
        let parse = || -> Result<ExperimentFile> {
            Ok(ExperimentFile {
                name: h.require("name")?.to_string(),
                test: resolve(path, h.require("test")?),
                n_mdps: h.parse("n_mdps")?,
                gamma: h.parse("gamma")?,
                epsilon: h.parse("epsilon")?,
                horizon: h.parse("horizon")?,
                seed: h.parse("seed")?,
                compress: h.get("compress").map(|v| v == "true").unwrap_or(false),
            })
        };
        parse().with_context(|| format!("in {}", path.display()))
    }

    pub fn spec(&self, prior: Arc<FdmDistribution>) -> Result<ExperimentSpec> {
        let test = Arc::new(read_distribution(&self.test)?);
        let mut spec = ExperimentSpec::new(prior, test, self.n_mdps, self.gamma, self.seed);
        spec.epsilon = self.epsilon;
        spec.horizon = Some(self.horizon);
        Ok(spec)
    }
}

// Agent configurations

/// Parameter value lookup used when rebuilding a configuration.
pub fn config_from_lookup(
    algorithm: Algorithm,
    lookup: &dyn Fn(&str) -> Option<String>,
) -> Result<AgentConfig> {
    let get = |key: &str| -> Result<String> {
        lookup(key).ok_or_else(|| anyhow!("{} needs parameter '{key}'", algorithm.display_name()))
    };
    fn num<T: std::str::FromStr>(key: &str, raw: String) -> Result<T> {
        raw.parse()
            .map_err(|_| anyhow!("parameter '{key}': cannot parse {raw:?}"))
    }
    let config = match algorithm {
        Algorithm::Random => AgentConfig::Random,
        Algorithm::EGreedy => AgentConfig::EGreedy {
            epsilon: num("epsilon", get("epsilon")?)?,
        },
        Algorithm::SoftMax => AgentConfig::SoftMax {
            tau: num("tau", get("tau")?)?,
        },
        Algorithm::OppsDs => {
            let raw = get("space")?;
            let space = num("space", raw.trim_start_matches(['F', 'f']).to_string())?;
            AgentConfig::OppsDs {
                space,
                budget: num("beta", get("beta")?)?,
            }
        }
        Algorithm::Bamcp => AgentConfig::Bamcp {
            k: num("K", get("K")?)?,
            depth: num("depth", get("depth")?)?,
            exploration: match lookup("exploration") {
                Some(v) => num("exploration", v)?,
                None => 1.0,
            },
        },
        Algorithm::Bfs3 => AgentConfig::Bfs3 {
            k: num("K", get("K")?)?,
            c: num("C", get("C")?)?,
            depth: num("depth", get("depth")?)?,
        },
        Algorithm::Sboss => AgentConfig::Sboss {
            epsilon: num("epsilon", get("epsilon")?)?,
            delta: num("delta", get("delta")?)?,
        },
        Algorithm::Beb => AgentConfig::Beb {
            beta: num("beta", get("beta")?)?,
        },
    };
    config.validate()?;
    Ok(config)
}

pub fn parse_algorithm(tag: &str) -> Result<Algorithm> {
    Algorithm::from_tag(tag).ok_or_else(|| {
        let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.tag()).collect();
        anyhow!("unknown algorithm {tag:?} (known: {})", known.join(", "))
    })
}

fn write_config(section: &mut Section, config: &AgentConfig) {
    section.set("algorithm", config.algorithm().tag());
    for (name, value) in config.parameters() {
        section.set(&format!("param.{name}"), value);
    }
}

fn read_config(section: &Section) -> Result<AgentConfig> {
    let algorithm = parse_algorithm(section.require("algorithm")?)?;
    config_from_lookup(algorithm, &|key| {
        section.get(&format!("param.{key}")).map(str::to_string)
    })
}

// Agents

#[derive(Debug, Clone)]
pub struct AgentFile {
    pub config: AgentConfig,
    /// Prior distribution, resolved.
    pub prior: PathBuf,
    pub gamma: f64,
    pub horizon: usize,
    pub formula: Option<Formula>,
    pub offline_time: Duration,
}

/// Header fields holding wall-clock measurements.
pub const TIMING_FIELDS: [&str; 4] = ["offline_time_ns", "offline_ns", "total_ns", "max_step_ns"];

impl AgentFile {
    pub fn from_trained(agent: &TrainedAgent, prior: &Path) -> Self {
        AgentFile {
            config: agent.config().clone(),
            prior: prior.to_path_buf(),
            gamma: agent.settings().gamma,
            horizon: agent.settings().horizon,
            formula: agent.formula().cloned(),
            offline_time: agent.offline_time(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut doc = Document::new("agent");
        write_config(&mut doc.header, &self.config);
        doc.set("label", self.config.label());
        doc.set("prior", reference(path, &self.prior));
        doc.set("gamma", self.gamma);
        doc.set("horizon", self.horizon);
        if let Some(f) = &self.formula {
            doc.set("formula", f);
        }
        doc.set("offline_time_ns", self.offline_time.as_nanos());
        write_text(path, &doc.render(), false)
    }

    pub fn read(path: &Path) -> Result<AgentFile> {
        let doc = load(path, "agent")?;
        let h = &doc.header;
        let parse = || -> Result<AgentFile> {
            Ok(AgentFile {
                config: read_config(h)?,
                prior: resolve(path, h.require("prior")?),
                gamma: h.parse("gamma")?,
                horizon: h.parse("horizon")?,
                formula: h.get("formula").map(str::parse).transpose()?,
                offline_time: Duration::from_nanos(h.parse("offline_time_ns")?),
            })
        };
        parse().with_context(|| format!("in {}", path.display()))
    }

    /// Rebuilds the trained agent, loading its prior.
    pub fn trained(&self) -> Result<TrainedAgent> {
        let prior = Arc::new(read_distribution(&self.prior)?);
        Ok(TrainedAgent::from_parts(
            self.config.clone(),
            prior,
            OfflineSettings::new(self.gamma, self.horizon),
            self.formula.clone(),
            self.offline_time,
        )?)
    }
}

// Results

#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    /// Reference to the agent file, as stored.
    pub agent: String,
    /// Reference to the experiment file, as stored.
    pub experiment: String,
    pub experiment_name: String,
    pub results: ResultSet,
}

fn transitions_to_string(ts: &[Transition]) -> String {
    join(
        ts.iter()
            .map(|t| format!("{},{},{},{}", t.x, t.u, t.y, t.r)),
    )
}

fn transitions_from_str(s: &str) -> Result<Vec<Transition>> {
    s.split_whitespace()
        .map(|item| {
            let parts: Vec<&str> = item.split(',').collect();
            if parts.len() != 4 {
                bail!("malformed transition {item:?}");
            }
            Ok(Transition {
                x: parts[0].parse()?,
                u: parts[1].parse()?,
                y: parts[2].parse()?,
                r: parts[3].parse()?,
            })
        })
        .collect()
}

impl ResultFile {
    pub fn render(&self) -> Result<String> {
        let r = &self.results;
        let mut doc = Document::new("result");
        doc.set("agent", &self.agent);
        doc.set("experiment", &self.experiment);
        doc.set("experiment_name", &self.experiment_name);
        doc.set("label", &r.label);
        write_config(&mut doc.header, &r.config);
        doc.set("offline_ns", r.offline_time.as_nanos());
        doc.set("n_trajectories", r.records.len());
        if !r.records.is_empty() {
            let s = r.score(CiRule::Standard)?;
            doc.set("mean", s.mean);
            doc.set("std", s.std);
            doc.set("ci_standard", s.half_width);
            doc.set("ci_literal", r.score(CiRule::Literal)?.half_width);
        }
        for (i, rec) in r.records.iter().enumerate() {
            let mut s = Section::new(format!("trajectory {i}"));
            s.set("return", rec.discounted_return);
            s.set("steps", rec.steps);
            s.set("total_ns", rec.total_time.as_nanos());
            s.set("max_step_ns", rec.max_step_time.as_nanos());
            s.set("transitions", transitions_to_string(&rec.transitions));
            doc.sections.push(s);
        }
        Ok(doc.render())
    }

    pub fn write(&self, path: &Path, compress: bool) -> Result<()> {
        write_text(path, &self.render()?, compress)
    }

    pub fn parse(text: &str) -> Result<ResultFile> {
        let doc = Document::parse(text, "result")?;
        let h = &doc.header;
        let mut records = Vec::with_capacity(doc.sections.len());
        for s in &doc.sections {
            records.push(TrajectoryRecord {
                discounted_return: s.parse("return")?,
                steps: s.parse("steps")?,
                total_time: Duration::from_nanos(s.parse("total_ns")?),
                max_step_time: Duration::from_nanos(s.parse("max_step_ns")?),
                transitions: transitions_from_str(s.require("transitions")?)
                    .with_context(|| format!("in [{}]", s.name))?,
            });
        }
        let declared: usize = h.parse("n_trajectories")?;
        if declared != records.len() {
            bail!(
                "declares {declared} trajectories but holds {}",
                records.len()
            );
        }
        Ok(ResultFile {
            agent: h.require("agent")?.to_string(),
            experiment: h.require("experiment")?.to_string(),
            experiment_name: h.require("experiment_name")?.to_string(),
            results: ResultSet {
                label: h.require("label")?.to_string(),
                config: read_config(h)?,
                offline_time: Duration::from_nanos(h.parse("offline_ns")?),
                records,
            },
        })
    }

    pub fn read(path: &Path) -> Result<ResultFile> {
        ResultFile::parse(&read_text(path)?).with_context(|| format!("in {}", path.display()))
    }
}

/// Drops wall-clock lines so two renders can be compared for determinism.
pub fn without_timings(text: &str) -> String {
    text.lines()
        .filter(|l| {
            !TIMING_FIELDS
                .iter()
                .any(|f| l.starts_with(&format!("{f}=")))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parameters of a configuration as a map (for slugs and tables).
pub fn parameter_map(config: &AgentConfig) -> BTreeMap<&'static str, String> {
    config.parameters().into_iter().collect()
}

/// File-name friendly identifier of a configuration, e.g. `egreedy-epsilon-0.1`.
pub fn slug(config: &AgentConfig) -> String {
    let mut out = config.algorithm().tag().to_string();
    for (name, value) in config.parameters() {
        if name == "exploration" && value == "1" {
            continue;
        }
        out.push('-');
        out.push_str(&name.to_ascii_lowercase());
        out.push('-');
        out.push_str(&value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use bbrl_core::prior::{make_gc, make_gdl, make_grid, uniform_like};

    #[test]
    fn distributions_round_trip() {
        for d in [make_gc(), make_gdl(), make_grid(), uniform_like(&make_gc())] {
            let text = distribution_document(&d).render();
            let doc = Document::parse(&text, "distribution").unwrap();
            assert_eq!(distribution_from_document(&doc).unwrap(), d);
        }
    }

    #[test]
    fn unknown_reward_type() {
        let text = distribution_document(&make_gc())
            .render()
            .replace(REWARD_TYPE, "RT_GAUSSIAN");
        let doc = Document::parse(&text, "distribution").unwrap();
        let err = distribution_from_document(&doc).unwrap_err();
        assert!(err.to_string().contains("RT_GAUSSIAN"));
    }

    #[test]
    fn configs_round_trip() {
        for alg in Algorithm::ALL {
            for config in AgentConfig::grid(alg) {
                let mut s = Section::default();
                write_config(&mut s, &config);
                assert_eq!(read_config(&s).unwrap(), config);
            }
        }
    }

    #[test]
    fn slugs() {
        assert_eq!(
            slug(&AgentConfig::EGreedy { epsilon: 0.1 }),
            "egreedy-epsilon-0.1"
        );
        assert_eq!(slug(&AgentConfig::bamcp(500, 15)), "bamcp-k-500-depth-15");
        assert_eq!(
            slug(&AgentConfig::OppsDs {
                space: 3,
                budget: 50
            }),
            "opps-ds-space-F3-beta-50"
        );
    }

    #[test]
    fn transitions_round_trip() {
        let ts = vec![
            Transition {
                x: 0,
                u: 1,
                y: 2,
                r: 0.1,
            },
            Transition {
                x: 2,
                u: 0,
                y: 0,
                r: -3.5,
            },
        ];
        assert_eq!(
            transitions_from_str(&transitions_to_string(&ts)).unwrap(),
            ts
        );
        assert!(transitions_from_str("1,2,3").is_err());
    }

    #[test]
    fn references() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.exp");
        let b = dir.path().join("b.dist");
        std::fs::write(&b, "").unwrap();
        assert_eq!(reference(&a, &b), "b.dist");
        assert_eq!(resolve(&a, "b.dist"), dir.path().join("b.dist"));
        let nested = dir.path().join("sub").join("c.agent");
        let r = reference(&nested, &b);
        assert!(Path::new(&r).is_absolute());
        assert_eq!(resolve(&nested, &r), b.canonicalize().unwrap());
    }
}
