//! Experiment configuration files.
//!
//! The format is flat INI: `[section]` headers, one `key = value` pair per
//! line, `#` or `;` comment lines, and comma-separated lists. Unset keys
//! fall back to the reference defaults (step size 1e-4, 15,000 rounds,
//! burn-in 14,900, 10 value bits, 10 calibration bins, 5 agents, unit
//! transmit power).
//!
//! ```text
//! [task]
//! kind = softmax-mlp          # conjugate-gaussian | logistic | softmax-mlp
//! input_dim = 4
//! classes = 6
//! hidden = 10
//! per_class_per_agent = 40
//! validation_examples = 2400
//! data_seed = 7
//!
//! [grid]
//! algorithms = cd-dsgld, q-dsgd
//! topologies = full, ring, star
//! snr_db = 0, 5, 10, 20
//! seeds = 1, 2, 3, 4, 5
//!
//! [sampler]
//! step_size = 1e-4
//! rounds = 15000
//! burn_in = 14900
//! ```

use std::collections::HashMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::compression;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, SyntheticTaskConfig, TaskKind};
use crate::samplers::{Algorithm, SamplerConfig};
use crate::topology::TopologyKind;

/// Transmit power budget; the SNR axis is swept through the noise power.
pub const TRANSMIT_POWER: f64 = 1.0;

/// A fully resolved experiment description: the synthetic task, the grid
/// axes, and every knob the cells share.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: SyntheticTaskConfig,
    pub data_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub topologies: Vec<TopologyKind>,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub step_size: f64,
    pub total_rounds: usize,
    pub burn_in: usize,
    pub batch_fraction: f64,
    pub value_bits: u32,
    pub calibration_bins: usize,
    pub out_dir: Option<PathBuf>,
    pub dump_chains: bool,
}

impl ExperimentConfig {
    pub fn sampler_config(&self, algorithm: Algorithm) -> SamplerConfig {
        SamplerConfig {
            algorithm,
            step_size: self.step_size,
            total_rounds: self.total_rounds,
            burn_in: self.burn_in,
            batch_fraction: self.batch_fraction,
        }
    }

    /// SNR grid coordinates; a config without an SNR list still has one
    /// (empty) coordinate so the cell product is never zero.
    pub fn snr_axis(&self) -> Vec<Option<f64>> {
        if self.snr_db.is_empty() {
            vec![None]
        } else {
            self.snr_db.iter().copied().map(Some).collect()
        }
    }

    /// Number of grid cells actually run. Axes an algorithm ignores are
    /// collapsed: the centralized baseline has no topology coordinate and
    /// algorithms that never touch the channel have no SNR coordinate.
    pub fn cell_count(&self) -> usize {
        let snr_cells = self.snr_axis().len();
        self.algorithms
            .iter()
            .map(|a| {
                let topo = if *a == Algorithm::Sgld { 1 } else { self.topologies.len() };
                let snr = if a.uses_channel() { snr_cells } else { 1 };
                topo * snr
            })
            .sum::<usize>()
            * self.seeds.len()
    }

    /// Canonical one-key-per-line rendering of the scientific content
    /// (everything except output location), used for the config hash.
    pub fn canonical_text(&self) -> String {
        let mut lines = vec![
            format!("agents={}", self.task.n_agents),
            format!(
                "algorithms={}",
                self.algorithms.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(",")
            ),
            format!("batch_fraction={}", self.batch_fraction),
            format!("bins={}", self.calibration_bins),
            format!("burn_in={}", self.burn_in),
            format!("class_skew={}", self.task.class_skew),
            format!("classes={}", self.task.n_classes),
            format!("cluster_spread={}", self.task.cluster_spread),
            format!("data_seed={}", self.data_seed),
            format!("input_dim={}", self.task.input_dim),
            format!("per_class_per_agent={}", self.task.per_class_per_agent),
            format!("rounds={}", self.total_rounds),
            format!(
                "seeds={}",
                self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!(
                "snr_db={}",
                self.snr_db.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("step_size={}", self.step_size),
            format!(
                "topologies={}",
                self.topologies.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(",")
            ),
            format!("validation_examples={}", self.task.validation_examples),
            format!("value_bits={}", self.value_bits),
            format!("within_class_std={}", self.task.within_class_std),
        ];
        match self.task.kind {
            TaskKind::ConjugateGaussian { noise_var } => {
                lines.push("kind=conjugate-gaussian".into());
                lines.push(format!("noise_var={noise_var}"));
            }
            TaskKind::LogisticRegression => lines.push("kind=logistic".into()),
            TaskKind::SoftmaxMlp { hidden } => {
                lines.push("kind=softmax-mlp".into());
                lines.push(format!("hidden={hidden}"));
            }
        }
        lines.sort();
        lines.join("\n")
    }

    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

struct RawItem {
    line: usize,
    value: String,
}

struct RawConfig {
    items: HashMap<(String, String), RawItem>,
}

impl RawConfig {
    fn take(&mut self, section: &str, key: &str) -> Option<RawItem> {
        self.items.remove(&(section.to_string(), key.to_string()))
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::ConfigParse { line, msg: msg.into() }
}

fn lex(text: &str) -> Result<RawConfig> {
    const SECTIONS: [&str; 7] = ["task", "grid", "network", "sampler", "compression", "metrics", "output"];
    let mut items = HashMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(parse_err(line, format!("malformed section header '{trimmed}'")));
            };
            if !SECTIONS.contains(&name) {
                return Err(parse_err(line, format!("unknown section '[{name}]'")));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(parse_err(line, format!("expected 'key = value', got '{trimmed}'")));
        };
        let Some(section) = section.clone() else {
            return Err(parse_err(line, "key outside any [section]"));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if value.is_empty() {
            return Err(parse_err(line, format!("empty value for '{key}'")));
        }
        if let Some(previous) = items.insert((section, key.clone()), RawItem { line, value }) {
            return Err(parse_err(
                line,
                format!("duplicate key '{key}' (first set on line {})", previous.line),
            ));
        }
    }
    Ok(RawConfig { items })
}

fn parse_value<T: std::str::FromStr>(item: &RawItem, what: &str) -> Result<T> {
    item.value
        .parse()
        .map_err(|_| parse_err(item.line, format!("invalid {what} '{}'", item.value)))
}

fn parse_list<T, F>(item: &RawItem, what: &str, convert: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    let mut out = Vec::new();
    for part in item.value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(parse_err(item.line, format!("empty entry in {what} list")));
        }
        out.push(convert(part).map_err(|_| parse_err(item.line, format!("invalid {what} '{part}'")))?);
    }
    Ok(out)
}

fn parse_bool(item: &RawItem) -> Result<bool> {
    match item.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(parse_err(item.line, format!("expected true or false, got '{other}'"))),
    }
}

/// Parses and fully validates a config file, filling reference defaults
/// for anything unset. Errors carry the offending line number.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut raw = lex(text)?;

    let kind_item = raw
        .take("task", "kind")
        .ok_or_else(|| Error::InvalidConfig("missing required key 'kind' in [task]".into()))?;
    let noise_var = raw.take("task", "noise_var");
    let hidden = raw.take("task", "hidden");
    let classes = raw.take("task", "classes");

    let (kind, n_classes) = match kind_item.value.as_str() {
        "conjugate-gaussian" => {
            if let Some(item) = &hidden {
                return Err(parse_err(item.line, "'hidden' only applies to softmax-mlp"));
            }
            let noise_var = noise_var.map_or(Ok(1.0), |i| parse_value::<f64>(&i, "noise_var"))?;
            if let Some(item) = &classes {
                let c: usize = parse_value(item, "classes")?;
                if c != 1 {
                    return Err(parse_err(item.line, "conjugate-gaussian has no class structure"));
                }
            }
            (TaskKind::ConjugateGaussian { noise_var }, 1)
        }
        "logistic" => {
            if let Some(item) = &noise_var {
                return Err(parse_err(item.line, "'noise_var' only applies to conjugate-gaussian"));
            }
            if let Some(item) = &hidden {
                return Err(parse_err(item.line, "'hidden' only applies to softmax-mlp"));
            }
            let c = classes.map_or(Ok(2), |i| parse_value::<usize>(&i, "classes"))?;
            (TaskKind::LogisticRegression, c)
        }
        "softmax-mlp" => {
            if let Some(item) = &noise_var {
                return Err(parse_err(item.line, "'noise_var' only applies to conjugate-gaussian"));
            }
            let hidden_item = hidden.ok_or_else(|| {
                parse_err(kind_item.line, "softmax-mlp needs 'hidden' in [task]")
            })?;
            let classes_item = classes.ok_or_else(|| {
                parse_err(kind_item.line, "softmax-mlp needs 'classes' in [task]")
            })?;
            (
                TaskKind::SoftmaxMlp { hidden: parse_value(&hidden_item, "hidden")? },
                parse_value(&classes_item, "classes")?,
            )
        }
        other => {
            return Err(parse_err(
                kind_item.line,
                format!("unknown task kind '{other}' (expected conjugate-gaussian, logistic or softmax-mlp)"),
            ))
        }
    };

    let input_dim_item = raw
        .take("task", "input_dim")
        .ok_or_else(|| Error::InvalidConfig("missing required key 'input_dim' in [task]".into()))?;
    let input_dim: usize = parse_value(&input_dim_item, "input_dim")?;

    let n_agents = match raw.take("network", "agents") {
        Some(item) => {
            let n: usize = parse_value(&item, "agents")?;
            if n < 2 {
                return Err(parse_err(item.line, "need at least two agents"));
            }
            n
        }
        None => 5,
    };

    let task = SyntheticTaskConfig {
        kind,
        input_dim,
        n_classes,
        n_agents,
        per_class_per_agent: raw
            .take("task", "per_class_per_agent")
            .map_or(Ok(40), |i| parse_value(&i, "per_class_per_agent"))?,
        validation_examples: raw
            .take("task", "validation_examples")
            .map_or(Ok(2400), |i| parse_value(&i, "validation_examples"))?,
        class_skew: match raw.take("task", "class_skew") {
            Some(item) => {
                let v: f64 = parse_value(&item, "class_skew")?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(parse_err(item.line, "class_skew must lie in [0, 1]"));
                }
                v
            }
            None => 0.0,
        },
        cluster_spread: raw
            .take("task", "cluster_spread")
            .map_or(Ok(2.0), |i| parse_value(&i, "cluster_spread"))?,
        within_class_std: raw
            .take("task", "within_class_std")
            .map_or(Ok(1.0), |i| parse_value(&i, "within_class_std"))?,
    };
    // Surface bad kind/dimension/class combinations now, at parse time.
    ModelSpec::new(task.kind, task.input_dim, task.n_classes)
        .map_err(|e| parse_err(kind_item.line, e.to_string()))?;

    let data_seed = raw.take("task", "data_seed").map_or(Ok(0), |i| parse_value(&i, "data_seed"))?;

    let algorithms_item = raw
        .take("grid", "algorithms")
        .ok_or_else(|| Error::InvalidConfig("missing required key 'algorithms' in [grid]".into()))?;
    let algorithms: Vec<Algorithm> =
        parse_list(&algorithms_item, "algorithm", |s| s.parse::<Algorithm>())?;

    let topologies = match raw.take("grid", "topologies") {
        Some(item) => parse_list(&item, "topology", |s| s.parse::<TopologyKind>())?,
        None => vec![TopologyKind::Full],
    };

    let snr_db = match raw.take("grid", "snr_db") {
        Some(item) => {
            let values: Vec<f64> = parse_list(&item, "snr_db", |s| {
                s.parse::<f64>().map_err(|_| Error::InvalidConfig(String::new()))
            })?;
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(parse_err(item.line, format!("snr_db must be finite, got {bad}")));
            }
            values
        }
        None => Vec::new(),
    };
    if snr_db.is_empty() {
        if let Some(needs) = algorithms.iter().find(|a| a.uses_channel()) {
            return Err(parse_err(
                algorithms_item.line,
                format!("{} needs an snr_db list in [grid]", needs.as_str()),
            ));
        }
    }

    let seeds_item = raw
        .take("grid", "seeds")
        .ok_or_else(|| Error::InvalidConfig("missing required key 'seeds' in [grid]".into()))?;
    let seeds: Vec<u64> = parse_list(&seeds_item, "seed", |s| {
        s.parse::<u64>().map_err(|_| Error::InvalidConfig(String::new()))
    })?;

    let step_size = match raw.take("sampler", "step_size") {
        Some(item) => {
            let v: f64 = parse_value(&item, "step_size")?;
            if !(v.is_finite() && v > 0.0) {
                return Err(parse_err(item.line, "step_size must be positive"));
            }
            v
        }
        None => 1e-4,
    };
    let rounds_item = raw.take("sampler", "rounds");
    let burn_item = raw.take("sampler", "burn_in");
    let total_rounds =
        rounds_item.as_ref().map_or(Ok(15_000), |i| parse_value(i, "rounds"))?;
    let burn_in = burn_item.as_ref().map_or(Ok(14_900), |i| parse_value(i, "burn_in"))?;
    if burn_in >= total_rounds {
        let line = burn_item.or(rounds_item).map_or(0, |i| i.line);
        return Err(parse_err(
            line,
            format!("burn_in {burn_in} must be smaller than rounds {total_rounds}"),
        ));
    }
    let batch_fraction = match raw.take("sampler", "batch_fraction") {
        Some(item) => {
            let v: f64 = parse_value(&item, "batch_fraction")?;
            if !(v > 0.0 && v <= 1.0) {
                return Err(parse_err(item.line, "batch_fraction must lie in (0, 1]"));
            }
            v
        }
        None => 1.0,
    };

    let value_bits = match raw.take("compression", "value_bits") {
        Some(item) => {
            let v: u32 = parse_value(&item, "value_bits")?;
            if !(compression::MIN_VALUE_BITS..=compression::MAX_VALUE_BITS).contains(&v) {
                return Err(parse_err(
                    item.line,
                    format!(
                        "value_bits must lie in [{}, {}]",
                        compression::MIN_VALUE_BITS,
                        compression::MAX_VALUE_BITS
                    ),
                ));
            }
            v
        }
        None => 10,
    };

    let calibration_bins = match raw.take("metrics", "bins") {
        Some(item) => {
            let v: usize = parse_value(&item, "bins")?;
            if v == 0 {
                return Err(parse_err(item.line, "need at least one calibration bin"));
            }
            v
        }
        None => 10,
    };

    let out_dir = raw.take("output", "dir").map(|i| PathBuf::from(i.value));
    let dump_chains = raw.take("output", "dump_chains").map_or(Ok(false), |i| parse_bool(&i))?;

    if let Some(((section, key), item)) = raw.items.drain().next() {
        return Err(parse_err(item.line, format!("unknown key '{key}' in [{section}]")));
    }

    Ok(ExperimentConfig {
        task,
        data_seed,
        algorithms,
        topologies,
        snr_db,
        seeds,
        step_size,
        total_rounds,
        burn_in,
        batch_fraction,
        value_bits,
        calibration_bins,
        out_dir,
        dump_chains,
    })
}
