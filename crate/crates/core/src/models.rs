//! Learning tasks: priors, likelihoods and local potential gradients.
//!
//! Each agent holds a shard of the data and evaluates the gradient of its
//! local potential
//!
//! ```text
//! f_k(theta) = -log p(D_k | theta) - (1/N) log p(theta)
//! ```
//!
//! so that the sum over agents recovers the full negative log posterior.
//! The prior is always the standard Gaussian. Three task kinds are
//! supported: a conjugate Gaussian mean task (whose exact posterior acts as
//! a verification oracle), plain binary logistic regression, and a small
//! one-hidden-layer softmax network with hand-coded backpropagation.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRole};

/// Which likelihood the task uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskKind {
    /// Observations `x_h ~ N(theta, noise_var * I)`. Posterior is Gaussian
    /// in closed form, see [`exact_posterior`].
    ConjugateGaussian { noise_var: f64 },
    /// Binary logistic regression without bias term; `theta` has the input
    /// dimension. Labels are 0 or 1.
    LogisticRegression,
    /// One hidden tanh layer followed by a softmax readout.
    SoftmaxMlp { hidden: usize },
}

/// Task description shared by all agents. `input_dim` is the length of one
/// example; the parameter dimension `m` follows from it and the kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: TaskKind,
    pub input_dim: usize,
    /// Number of classes for classifier kinds. Fixed to 2 for logistic
    /// regression and ignored by the conjugate task.
    pub n_classes: usize,
}

impl ModelSpec {
    pub fn new(kind: TaskKind, input_dim: usize, n_classes: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be positive".into()));
        }
        match kind {
            TaskKind::ConjugateGaussian { noise_var } => {
                if !(noise_var.is_finite() && noise_var > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "noise variance must be positive, got {noise_var}"
                    )));
                }
            }
            TaskKind::LogisticRegression => {
                if n_classes != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "logistic regression is binary, got {n_classes} classes"
                    )));
                }
            }
            TaskKind::SoftmaxMlp { hidden } => {
                if hidden == 0 {
                    return Err(Error::InvalidConfig("hidden width must be positive".into()));
                }
                if n_classes < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "softmax needs at least 2 classes, got {n_classes}"
                    )));
                }
            }
        }
        Ok(ModelSpec {
            kind,
            input_dim,
            n_classes,
        })
    }

    /// Length of the parameter vector `theta`.
    pub fn dimension(&self) -> usize {
        match self.kind {
            TaskKind::ConjugateGaussian { .. } | TaskKind::LogisticRegression => self.input_dim,
            TaskKind::SoftmaxMlp { hidden } => {
                hidden * (self.input_dim + 1) + self.n_classes * (hidden + 1)
            }
        }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self.kind, TaskKind::ConjugateGaussian { .. })
    }
}

/// One agent's data shard: inputs as rows, labels 0-based. The conjugate
/// task carries a zero label per row so the container stays uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::ShapeMismatch {
                what: "dataset labels",
                expected: inputs.nrows(),
                actual: labels.len(),
            });
        }
        Ok(Dataset { inputs, labels })
    }

    /// An empty dataset of the given input width (prior-only agents).
    pub fn empty(input_dim: usize) -> Self {
        Dataset {
            inputs: Array2::zeros((0, input_dim)),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copies the selected rows into a new dataset (minibatch views).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Array2::zeros((indices.len(), self.input_dim()));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &h) in indices.iter().enumerate() {
            inputs.row_mut(row).assign(&self.inputs.row(h));
            labels.push(self.labels[h]);
        }
        Dataset { inputs, labels }
    }

    /// Concatenates shards into the pooled dataset.
    pub fn pooled(shards: &[Dataset]) -> Result<Dataset> {
        let input_dim = shards.first().map_or(0, |d| d.input_dim());
        let total: usize = shards.iter().map(|d| d.len()).sum();
        let mut inputs = Array2::zeros((total, input_dim));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for shard in shards {
            if shard.input_dim() != input_dim {
                return Err(Error::ShapeMismatch {
                    what: "pooled dataset input width",
                    expected: input_dim,
                    actual: shard.input_dim(),
                });
            }
            for h in 0..shard.len() {
                inputs.row_mut(row).assign(&shard.inputs.row(h));
                labels.push(shard.labels[h]);
                row += 1;
            }
        }
        Ok(Dataset { inputs, labels })
    }

    /// Writes `input..., label` rows without a header.
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for h in 0..self.len() {
            let mut record: Vec<String> =
                self.inputs.row(h).iter().map(|v| format!("{v}")).collect();
            record.push(self.labels[h].to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads rows written by [`Dataset::to_csv`]; the last column is the
    /// label, everything before it the input vector.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for record in r.records() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::InvalidConfig(
                    "dataset rows need at least one feature and a label".into(),
                ));
            }
            let mut vals = Vec::with_capacity(record.len() - 1);
            for field in record.iter().take(record.len() - 1) {
                vals.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidConfig(format!("bad feature value '{field}': {e}"))
                })?);
            }
            let label_field = &record[record.len() - 1];
            labels.push(label_field.trim().parse::<usize>().map_err(|e| {
                Error::InvalidConfig(format!("bad label '{label_field}': {e}"))
            })?);
            rows.push(vals);
        }
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidConfig("ragged dataset rows".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let inputs = Array2::from_shape_vec((labels.len(), width), flat)
            .map_err(|e| Error::InvalidConfig(format!("dataset shape: {e}")))?;
        Dataset::new(inputs, labels)
    }
}

/// Exact Gaussian posterior, available for the conjugate task only.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
}

fn check_theta(spec: &ModelSpec, theta: &Array1<f64>) -> Result<()> {
    if theta.len() != spec.dimension() {
        return Err(Error::ShapeMismatch {
            what: "theta",
            expected: spec.dimension(),
            actual: theta.len(),
        });
    }
    Ok(())
}

fn check_data(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    if !data.is_empty() && data.input_dim() != spec.input_dim {
        return Err(Error::ShapeMismatch {
            what: "dataset input width",
            expected: spec.input_dim,
            actual: data.input_dim(),
        });
    }
    if spec.is_classifier() {
        if let Some(&bad) = data.labels().iter().find(|&&l| l >= spec.n_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {} classes",
                spec.n_classes
            )));
        }
    }
    Ok(())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Splits a flat MLP parameter vector into `(w1, b1, w2, b2)` views.
fn mlp_views<'a>(
    theta: &'a Array1<f64>,
    d: usize,
    h: usize,
    c: usize,
) -> (
    ArrayView2<'a, f64>,
    ArrayView1<'a, f64>,
    ArrayView2<'a, f64>,
    ArrayView1<'a, f64>,
) {
    let mut at = 0;
    let w1 = theta
        .slice(s![at..at + h * d])
        .into_shape_with_order((h, d))
        .expect("w1 slice is contiguous");
    at += h * d;
    let b1 = theta.slice(s![at..at + h]);
    at += h;
    let w2 = theta
        .slice(s![at..at + c * h])
        .into_shape_with_order((c, h))
        .expect("w2 slice is contiguous");
    at += c * h;
    let b2 = theta.slice(s![at..at + c]);
    (w1, b1, w2, b2)
}

/// Row-wise softmax with the usual max-shift for stability.
fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    p
}

/// MLP hidden activations and class probabilities for a batch of inputs.
fn mlp_forward(
    spec: &ModelSpec,
    theta: &Array1<f64>,
    inputs: &ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let TaskKind::SoftmaxMlp { hidden } = spec.kind else {
        unreachable!("mlp_forward called on non-mlp task");
    };
    let (w1, b1, w2, b2) = mlp_views(theta, spec.input_dim, hidden, spec.n_classes);
    let mut act = inputs.dot(&w1.t());
    act += &b1;
    act.mapv_inplace(f64::tanh);
    let mut logits = act.dot(&w2.t());
    logits += &b2;
    (act, softmax_rows(&logits))
}

/// Negative log likelihood of the shard, `-log p(D_k | theta)`.
pub fn negative_log_likelihood(
    spec: &ModelSpec,
    data: &Dataset,
    theta: &Array1<f64>,
) -> Result<f64> {
    check_theta(spec, theta)?;
    check_data(spec, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    match spec.kind {
        TaskKind::ConjugateGaussian { noise_var } => {
            let mut total = 0.0;
            for row in data.inputs().rows() {
                let diff = &row.to_owned() - theta;
                total += diff.dot(&diff) / (2.0 * noise_var);
            }
            Ok(total)
        }
        TaskKind::LogisticRegression => {
            let logits = data.inputs().dot(theta);
            let mut total = 0.0;
            for (z, &y) in logits.iter().zip(data.labels()) {
                total += softplus(*z) - (y as f64) * z;
            }
            Ok(total)
        }
        TaskKind::SoftmaxMlp { hidden } => {
            let (w1, b1, w2, b2) = mlp_views(theta, spec.input_dim, hidden, spec.n_classes);
            let mut act = data.inputs().dot(&w1.t());
            act += &b1;
            act.mapv_inplace(f64::tanh);
            let mut logits = act.dot(&w2.t());
            logits += &b2;
            let mut total = 0.0;
            for (row, &y) in logits.rows().into_iter().zip(data.labels()) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                total += lse - row[y];
            }
            Ok(total)
        }
    }
}

/// Gradient of the shard negative log likelihood with respect to `theta`.
pub fn negative_log_likelihood_gradient(
    spec: &ModelSpec,
    data: &Dataset,
    theta: &Array1<f64>,
) -> Result<Array1<f64>> {
    check_theta(spec, theta)?;
    check_data(spec, data)?;
    if data.is_empty() {
        return Ok(Array1::zeros(spec.dimension()));
    }
    match spec.kind {
        TaskKind::ConjugateGaussian { noise_var } => {
            let e = data.len() as f64;
            let col_sums = data.inputs().sum_axis(Axis(0));
            Ok((theta * e - col_sums) / noise_var)
        }
        TaskKind::LogisticRegression => {
            let logits = data.inputs().dot(theta);
            let residual = Array1::from_iter(
                logits
                    .iter()
                    .zip(data.labels())
                    .map(|(&z, &y)| 1.0 / (1.0 + (-z).exp()) - y as f64),
            );
            Ok(data.inputs().t().dot(&residual))
        }
        TaskKind::SoftmaxMlp { hidden } => {
            let (_, _, w2, _) = mlp_views(theta, spec.input_dim, hidden, spec.n_classes);
            let (act, mut dz) = mlp_forward(spec, theta, &data.inputs());
            for (mut row, &y) in dz.rows_mut().into_iter().zip(data.labels()) {
                row[y] -= 1.0;
            }
            let dw2 = dz.t().dot(&act);
            let db2 = dz.sum_axis(Axis(0));
            let mut da = dz.dot(&w2);
            da.zip_mut_with(&act, |g, &a| *g *= 1.0 - a * a);
            let dw1 = da.t().dot(&data.inputs());
            let db1 = da.sum_axis(Axis(0));

            let mut grad = Array1::zeros(spec.dimension());
            let mut at = 0;
            for part in [
                dw1.into_shape_with_order(hidden * spec.input_dim).unwrap(),
                db1,
                dw2.into_shape_with_order(spec.n_classes * hidden).unwrap(),
                db2,
            ] {
                grad.slice_mut(s![at..at + part.len()]).assign(&part);
                at += part.len();
            }
            Ok(grad)
        }
    }
}

/// Local potential `f_k(theta)` with the prior split evenly over `n_agents`.
pub fn local_potential(
    spec: &ModelSpec,
    data: &Dataset,
    theta: &Array1<f64>,
    n_agents: usize,
) -> Result<f64> {
    let nll = negative_log_likelihood(spec, data, theta)?;
    Ok(nll + theta.dot(theta) / (2.0 * n_agents as f64))
}

/// Gradient of the local potential,
/// `grad f_k = -grad log p(D_k|theta) + theta / N`.
pub fn local_potential_gradient(
    spec: &ModelSpec,
    data: &Dataset,
    theta: &Array1<f64>,
    n_agents: usize,
) -> Result<Array1<f64>> {
    let mut grad = negative_log_likelihood_gradient(spec, data, theta)?;
    grad.scaled_add(1.0 / n_agents as f64, theta);
    Ok(grad)
}

/// Closed-form posterior for the conjugate Gaussian task on pooled data:
/// precision `(1 + E/noise_var)` per coordinate.
pub fn exact_posterior(spec: &ModelSpec, pooled: &Dataset) -> Result<GaussianPosterior> {
    let TaskKind::ConjugateGaussian { noise_var } = spec.kind else {
        return Err(Error::InvalidConfig(
            "exact posterior is only available for the conjugate Gaussian task".into(),
        ));
    };
    check_data(spec, pooled)?;
    let m = spec.dimension();
    let e = pooled.len() as f64;
    let precision = 1.0 + e / noise_var;
    let mean = if pooled.is_empty() {
        Array1::zeros(m)
    } else {
        pooled.inputs().sum_axis(Axis(0)) / (noise_var * precision)
    };
    Ok(GaussianPosterior {
        mean,
        covariance: Array2::eye(m) / precision,
    })
}

/// Class probabilities for one input under parameters `theta`.
pub fn predictive_distribution(
    spec: &ModelSpec,
    theta: &Array1<f64>,
    input: &ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_theta(spec, theta)?;
    if input.len() != spec.input_dim {
        return Err(Error::ShapeMismatch {
            what: "predictive input",
            expected: spec.input_dim,
            actual: input.len(),
        });
    }
    match spec.kind {
        TaskKind::ConjugateGaussian { .. } => Err(Error::InvalidConfig(
            "predictive distribution is only defined for classifier tasks".into(),
        )),
        TaskKind::LogisticRegression => {
            let p1 = 1.0 / (1.0 + (-theta.dot(input)).exp());
            Ok(Array1::from_vec(vec![1.0 - p1, p1]))
        }
        TaskKind::SoftmaxMlp { .. } => {
            let batch = input.insert_axis(Axis(0));
            let (_, probs) = mlp_forward(spec, theta, &batch);
            Ok(probs.row(0).to_owned())
        }
    }
}

/// Everything needed to run one synthetic experiment: the shared spec, one
/// shard per agent, and a held-out validation set (empty for the conjugate
/// task, which is evaluated against its exact posterior instead).
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub spec: ModelSpec,
    pub agent_data: Vec<Dataset>,
    pub validation: Dataset,
}

/// Knobs for [`generate_synthetic_task`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskConfig {
    pub kind: TaskKind,
    pub input_dim: usize,
    pub n_classes: usize,
    pub n_agents: usize,
    /// Classifiers: examples per class per agent. Conjugate task: examples
    /// per agent (it has no classes).
    pub per_class_per_agent: usize,
    pub validation_examples: usize,
    /// 0 keeps shards IID over classes; approaching 1 concentrates each
    /// agent's shard on the classes congruent to its index.
    pub class_skew: f64,
    /// Standard deviation of the class center positions.
    pub cluster_spread: f64,
    /// Within-class standard deviation around the center.
    pub within_class_std: f64,
}

impl SyntheticTaskConfig {
    fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::InvalidConfig("need at least one agent".into()));
        }
        if !(0.0..=1.0).contains(&self.class_skew) {
            return Err(Error::InvalidConfig(format!(
                "class_skew must lie in [0, 1], got {}",
                self.class_skew
            )));
        }
        if self.cluster_spread < 0.0 || self.within_class_std < 0.0 {
            return Err(Error::InvalidConfig("spreads must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-class example counts for one agent under the skew knob: every class
/// keeps `floor(base * (1 - skew))` examples and the remainder of the fixed
/// per-agent total goes to the agent's favored classes first.
fn skewed_class_counts(cfg: &SyntheticTaskConfig, agent: usize) -> Vec<usize> {
    let c = cfg.n_classes;
    let total = cfg.per_class_per_agent * c;
    let base = ((cfg.per_class_per_agent as f64) * (1.0 - cfg.class_skew)).floor() as usize;
    let mut counts = vec![base; c];
    let mut remaining = total - base * c;
    // The mass removed evenly from all classes lands on the agent's favored
    // ones; agents without a favored class (more agents than classes) fall
    // back to an even spread.
    let mut favored: Vec<usize> = (0..c).filter(|cls| cls % cfg.n_agents == agent).collect();
    if favored.is_empty() {
        favored = (0..c).collect();
    }
    'outer: loop {
        for &cls in &favored {
            if remaining == 0 {
                break 'outer;
            }
            counts[cls] += 1;
            remaining -= 1;
        }
    }
    counts
}

/// Draws a reproducible synthetic task. Identical seeds give identical
/// shards, independent of how many threads later evaluate them.
pub fn generate_synthetic_task(seed: u64, cfg: &SyntheticTaskConfig) -> Result<SyntheticTask> {
    cfg.validate()?;
    let spec = ModelSpec::new(cfg.kind, cfg.input_dim, cfg.n_classes)?;

    if let TaskKind::ConjugateGaussian { noise_var } = cfg.kind {
        let mut global = rng::substream(seed, StreamRole::DataGen, 0, 0);
        let truth = rng::standard_normal_vec(&mut global, cfg.input_dim);
        let std = noise_var.sqrt();
        let mut agent_data = Vec::with_capacity(cfg.n_agents);
        for k in 0..cfg.n_agents {
            let mut local = rng::substream(seed, StreamRole::DataGen, k, 1);
            let mut inputs = Array2::zeros((cfg.per_class_per_agent, cfg.input_dim));
            for mut row in inputs.rows_mut() {
                let noise = rng::standard_normal_vec(&mut local, cfg.input_dim);
                row.assign(&(&truth + &(noise * std)));
            }
            agent_data.push(Dataset::new(inputs, vec![0; cfg.per_class_per_agent])?);
        }
        return Ok(SyntheticTask {
            spec,
            agent_data,
            validation: Dataset::empty(cfg.input_dim),
        });
    }

    // Class-conditional Gaussian clusters shared by every shard.
    let mut global = rng::substream(seed, StreamRole::DataGen, 0, 0);
    let mut centers = Array2::zeros((cfg.n_classes, cfg.input_dim));
    for mut row in centers.rows_mut() {
        row.assign(&(rng::standard_normal_vec(&mut global, cfg.input_dim) * cfg.cluster_spread));
    }

    let draw_example = |rng: &mut rand_chacha::ChaCha8Rng, class: usize| -> Array1<f64> {
        let noise = rng::standard_normal_vec(rng, cfg.input_dim);
        &centers.row(class) + &(noise * cfg.within_class_std)
    };

    let mut agent_data = Vec::with_capacity(cfg.n_agents);
    for k in 0..cfg.n_agents {
        let counts = skewed_class_counts(cfg, k);
        let total: usize = counts.iter().sum();
        let mut local = rng::substream(seed, StreamRole::DataGen, k, 1);
        let mut inputs = Array2::zeros((total, cfg.input_dim));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                inputs.row_mut(row).assign(&draw_example(&mut local, class));
                labels.push(class);
                row += 1;
            }
        }
        agent_data.push(Dataset::new(inputs, labels)?);
    }

    let mut val_rng = rng::substream(seed, StreamRole::DataGen, 0, 2);
    let per_class = cfg.validation_examples / cfg.n_classes;
    let leftover = cfg.validation_examples % cfg.n_classes;
    let mut inputs = Array2::zeros((cfg.validation_examples, cfg.input_dim));
    let mut labels = Vec::with_capacity(cfg.validation_examples);
    let mut row = 0;
    for class in 0..cfg.n_classes {
        let count = per_class + usize::from(class < leftover);
        for _ in 0..count {
            inputs.row_mut(row).assign(&draw_example(&mut val_rng, class));
            labels.push(class);
            row += 1;
        }
    }
    let validation = Dataset::new(inputs, labels)?;

    Ok(SyntheticTask {
        spec,
        agent_data,
        validation,
    })
}

/// Samples a chain starting point from the standard Gaussian prior.
pub fn sample_from_prior(seed: u64, agent: usize, m: usize) -> Array1<f64> {
    let mut rng = rng::substream(seed, StreamRole::Init, agent, 0);
    rng::standard_normal_vec(&mut rng, m)
}

/// Draws a minibatch of row indices without replacement.
pub fn minibatch_indices(
    seed: u64,
    agent: usize,
    round: usize,
    len: usize,
    fraction: f64,
) -> Vec<usize> {
    if fraction >= 1.0 || len == 0 {
        return (0..len).collect();
    }
    let take = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
    let mut rng = rng::substream(seed, StreamRole::Batch, agent, round);
    // Partial Fisher-Yates: the first `take` slots are a uniform sample.
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..take {
        let j = i + sample_below(&mut rng, len - i);
        idx.swap(i, j);
    }
    idx.truncate(take);
    idx.sort_unstable();
    idx
}

fn sample_below(rng: &mut rand_chacha::ChaCha8Rng, bound: usize) -> usize {
    use rand::Rng;
    rng.random_range(0..bound)
}
