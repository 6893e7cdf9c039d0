//! Round-based samplers and their frequentist baselines.
//!
//! Five training procedures share one synchronous round structure:
//!
//! * `sgld`: centralized stochastic gradient Langevin dynamics,
//!   `theta' = theta - eta grad f(theta) + sqrt(2 eta) xi`.
//! * `dsgld`: the decentralized variant with ideal links; each agent mixes
//!   neighbor iterates with doubly stochastic weights before its step.
//! * `cd-dsgld`: the channel-driven variant. Agents broadcast scaled
//!   iterates over the analog multiple-access channel and the receiver
//!   scaling `beta = sqrt(N0 / (2 eta))` turns channel noise into exactly
//!   the Langevin injection, so when no transmitter is power-limited the
//!   round is algebraically a DSGLD round.
//! * `dsgd`: DSGLD with the injection noise removed (point estimation).
//! * `q-dsgd`: the digital benchmark; agents exchange sparsified quantized
//!   iterate deltas within the per-round SINR bit budget and mix against
//!   decoded replicas instead of true neighbor iterates.
//!
//! All randomness is drawn from substreams keyed by `(seed, role, agent,
//! round)`, so rounds can be recomputed in any order and results do not
//! depend on scheduling.

use ndarray::Array1;

use crate::channel::{self, ChannelParams, TransmitBlock};
use crate::compression::{self, RateBudget};
use crate::error::{Error, Result};
use crate::models::{self, Dataset, ModelSpec};
use crate::rng::{self, StreamRole};
use crate::topology::{MixingMatrix, Topology};

/// Iterate norm beyond which a run is aborted as diverged.
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Sgld,
    Dsgld,
    CdDsgld,
    Dsgd,
    QDsgd,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Sgld => "sgld",
            Algorithm::Dsgld => "dsgld",
            Algorithm::CdDsgld => "cd-dsgld",
            Algorithm::Dsgd => "dsgd",
            Algorithm::QDsgd => "q-dsgd",
        }
    }

    /// Whether the procedure produces posterior samples (true) or a point
    /// estimate (false).
    pub fn is_sampler(&self) -> bool {
        matches!(self, Algorithm::Sgld | Algorithm::Dsgld | Algorithm::CdDsgld)
    }

    /// Whether the procedure models the physical channel.
    pub fn uses_channel(&self) -> bool {
        matches!(self, Algorithm::CdDsgld | Algorithm::QDsgd)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgld" => Ok(Algorithm::Sgld),
            "dsgld" => Ok(Algorithm::Dsgld),
            "cd-dsgld" => Ok(Algorithm::CdDsgld),
            "dsgd" => Ok(Algorithm::Dsgd),
            "q-dsgd" => Ok(Algorithm::QDsgd),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm '{other}' (expected sgld, dsgld, cd-dsgld, dsgd or q-dsgd)"
            ))),
        }
    }
}

/// Chain schedule and step size. Defaults follow the reference setup:
/// `eta = 1e-4`, 15,000 rounds with the first 14,900 discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    pub step_size: f64,
    pub total_rounds: usize,
    pub burn_in: usize,
    /// Fraction of the shard used per gradient evaluation; 1.0 is full
    /// batch. Smaller values subsample without replacement and rescale.
    pub batch_fraction: f64,
}

impl SamplerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        SamplerConfig {
            algorithm,
            step_size: 1e-4,
            total_rounds: 15_000,
            burn_in: 14_900,
            batch_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.total_rounds == 0 {
            return Err(Error::InvalidConfig("need at least one round".into()));
        }
        if self.burn_in >= self.total_rounds {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be smaller than total rounds {}",
                self.burn_in, self.total_rounds
            )));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "batch fraction must lie in (0, 1], got {}",
                self.batch_fraction
            )));
        }
        Ok(())
    }
}

/// Synchronized per-agent iterates plus the post-burn-in sample store.
#[derive(Debug, Clone)]
pub struct ChainState {
    iterates: Vec<Array1<f64>>,
    round: usize,
    retained: Vec<Vec<Array1<f64>>>,
}

impl ChainState {
    pub fn new(initial: Vec<Array1<f64>>) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::InvalidConfig("chain needs at least one agent".into()));
        }
        let m = initial[0].len();
        if initial.iter().any(|t| t.len() != m) {
            return Err(Error::ShapeMismatch {
                what: "chain iterates",
                expected: m,
                actual: initial.iter().map(|t| t.len()).find(|&l| l != m).unwrap_or(m),
            });
        }
        let n = initial.len();
        Ok(ChainState {
            iterates: initial,
            round: 0,
            retained: vec![Vec::new(); n],
        })
    }

    pub fn n_agents(&self) -> usize {
        self.iterates.len()
    }

    pub fn dimension(&self) -> usize {
        self.iterates[0].len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn iterate(&self, agent: usize) -> &Array1<f64> {
        &self.iterates[agent]
    }

    pub fn iterates(&self) -> &[Array1<f64>] {
        &self.iterates
    }

    pub fn retained(&self, agent: usize) -> &[Array1<f64>] {
        &self.retained[agent]
    }

    /// Installs the synchronously computed next iterates and advances the
    /// round counter.
    fn apply_update(&mut self, next: Vec<Array1<f64>>) {
        debug_assert_eq!(next.len(), self.iterates.len());
        self.iterates = next;
        self.round += 1;
    }

    fn record_retained(&mut self) {
        for (store, theta) in self.retained.iter_mut().zip(&self.iterates) {
            store.push(theta.clone());
        }
    }

    fn check_divergence(&self) -> Result<()> {
        for (k, theta) in self.iterates.iter().enumerate() {
            let norm = theta.dot(theta).sqrt();
            if !norm.is_finite() || norm > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    agent: k,
                    round: self.round,
                    norm,
                });
            }
        }
        Ok(())
    }
}

/// One centralized Langevin step,
/// `theta - eta * grad + sqrt(2 eta) * xi`.
pub fn sgld_step(
    theta: &Array1<f64>,
    grad_total: &Array1<f64>,
    eta: f64,
    xi: &Array1<f64>,
) -> Array1<f64> {
    let mut next = theta.clone();
    next.scaled_add(-eta, grad_total);
    next.scaled_add((2.0 * eta).sqrt(), xi);
    next
}

/// Mixes `own` (weight `w_kk`) with neighbor values in ascending agent
/// order, skipping exact-zero weights. Every mixing-based round goes
/// through here so that replica-based and iterate-based variants add terms
/// in the same order and agree bit for bit in the lossless limit.
fn mix_row<'v, F>(k: usize, own: &Array1<f64>, mixing: &MixingMatrix, value: F) -> Array1<f64>
where
    F: Fn(usize) -> &'v Array1<f64>,
{
    let n = mixing.weights.nrows();
    let mut out = own * mixing.weights[[k, k]];
    for j in 0..n {
        if j == k {
            continue;
        }
        let w = mixing.weights[[k, j]];
        if w != 0.0 {
            out.scaled_add(w, value(j));
        }
    }
    out
}

fn ensure_finite_gradient(grad: &Array1<f64>, agent: usize, round: usize) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient { agent, round })
    }
}

/// One synchronous DSGLD round:
/// `theta_k' = sum_j w_kj theta_j - eta grad f_k(theta_k) + sqrt(2 eta) xi_k`.
///
/// `gradient(k)` and `xi(k)` are evaluated against the round-entry iterates;
/// no agent sees another's round-`s+1` value.
pub fn dsgld_round<G, X>(
    state: &mut ChainState,
    mixing: &MixingMatrix,
    eta: f64,
    mut gradient: G,
    mut xi: X,
) -> Result<()>
where
    G: FnMut(usize, &Array1<f64>) -> Result<Array1<f64>>,
    X: FnMut(usize) -> Array1<f64>,
{
    let n = state.n_agents();
    let noise_scale = (2.0 * eta).sqrt();
    let mut next = Vec::with_capacity(n);
    for k in 0..n {
        let grad = gradient(k, state.iterate(k))?;
        ensure_finite_gradient(&grad, k, state.round)?;
        let mut theta = mix_row(k, state.iterate(k), mixing, |j| state.iterate(j));
        theta.scaled_add(-eta, &grad);
        theta.scaled_add(noise_scale, &xi(k));
        next.push(theta);
    }
    state.apply_update(next);
    Ok(())
}

/// DSGLD with the injection noise removed: plain decentralized gradient
/// descent on the potential.
pub fn dsgd_round<G>(
    state: &mut ChainState,
    mixing: &MixingMatrix,
    eta: f64,
    gradient: G,
) -> Result<()>
where
    G: FnMut(usize, &Array1<f64>) -> Result<Array1<f64>>,
{
    let m = state.dimension();
    dsgld_round(state, mixing, eta, gradient, |_| Array1::zeros(m))
}

/// Transmit and receiver scaling for one channel-driven round. The receiver
/// gain is pinned to `beta = sqrt(N0 / (2 eta))` so that `z_k / beta` has
/// per-coordinate variance exactly `2 eta`.
#[derive(Debug, Clone)]
pub struct PowerControl {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

/// `beta = sqrt(N0 / (2 eta))`.
pub fn receiver_scaling(noise_power: f64, eta: f64) -> f64 {
    (noise_power / (2.0 * eta)).sqrt()
}

/// Margin keeping `|w alpha theta|^2` under the exact power bound despite
/// the norm being recomputed coordinatewise at transmit time.
const POWER_MARGIN: f64 = 1.0 - 1e-12;

/// Per-transmitter scaling minimizing the discrepancy to the ideal mixing
/// update under the power constraint:
/// `alpha_j = min(beta, sqrt(m P) / (w |theta_j|))`.
///
/// The objective separates per transmitter (each term of the receive-side
/// discrepancy involves one `alpha_j`), so pushing every `alpha_j` as close
/// to `beta` as the constraint allows is optimal.
pub fn optimize_power_control(
    iterates: &[Array1<f64>],
    w: f64,
    beta: f64,
    params: &ChannelParams,
) -> PowerControl {
    let cap = (params.block_length as f64 * params.power_budget).sqrt();
    let alpha = iterates
        .iter()
        .map(|theta| {
            let scaled_norm = w * theta.dot(theta).sqrt();
            if scaled_norm * beta <= cap {
                beta
            } else {
                POWER_MARGIN * cap / scaled_norm
            }
        })
        .collect();
    PowerControl { alpha, beta }
}

/// Builds agent `j`'s analog block `x_j = w * alpha_j * theta_j`. A power
/// violation here means the power control produced an infeasible scaling,
/// which is a bug, not an input error.
pub fn encode_transmit(
    theta: &Array1<f64>,
    w: f64,
    alpha: f64,
    agent: usize,
    params: &ChannelParams,
) -> Result<TransmitBlock> {
    TransmitBlock::new(agent, theta * (w * alpha), params).map_err(|e| match e {
        Error::PowerViolation { agent, power, budget } => Error::Internal(format!(
            "power control emitted an infeasible block for agent {agent}: {power} > {budget}"
        )),
        other => other,
    })
}

/// One channel-driven round: every agent broadcasts its scaled iterate, the
/// superposition plus channel noise is scaled down by `beta`, and
///
/// `theta_k' = w_kk theta_k + y_k / beta - eta grad f_k(theta_k)`.
///
/// With every `alpha_j = beta` this equals a DSGLD round whose injection
/// noise is `z_k / (beta sqrt(2 eta))`.
pub fn cd_dsgld_round<G, F>(
    state: &mut ChainState,
    topology: &Topology,
    mixing: &MixingMatrix,
    params: &ChannelParams,
    power: &PowerControl,
    eta: f64,
    mut gradient: G,
    noise: F,
) -> Result<()>
where
    G: FnMut(usize, &Array1<f64>) -> Result<Array1<f64>>,
    F: FnMut(usize) -> Array1<f64>,
{
    let n = state.n_agents();
    if power.alpha.len() != n {
        return Err(Error::ShapeMismatch {
            what: "power control",
            expected: n,
            actual: power.alpha.len(),
        });
    }
    let w = mixing.scalar_weight;
    let blocks: Vec<TransmitBlock> = (0..n)
        .map(|j| encode_transmit(state.iterate(j), w, power.alpha[j], j, params))
        .collect::<Result<_>>()?;
    let received = channel::transmit_round(&blocks, topology, params, noise)?;

    let mut next = Vec::with_capacity(n);
    for k in 0..n {
        let grad = gradient(k, state.iterate(k))?;
        ensure_finite_gradient(&grad, k, state.round)?;
        let mut theta = state.iterate(k) * mixing.weights[[k, k]];
        theta.scaled_add(1.0 / power.beta, &received[k].signal);
        theta.scaled_add(-eta, &grad);
        next.push(theta);
    }
    state.apply_update(next);
    Ok(())
}

/// Receiver-side bookkeeping for the digital benchmark. Messages are
/// broadcast and decoding is deterministic, so all receivers (and the
/// sender's own accounting) share one replica per agent.
#[derive(Debug, Clone)]
pub struct QDsgdState {
    pub replicas: Vec<Array1<f64>>,
    pub memories: Vec<Array1<f64>>,
}

impl QDsgdState {
    /// Replicas start at zero: nothing has been decoded yet.
    pub fn new(n_agents: usize, dimension: usize) -> Self {
        QDsgdState {
            replicas: vec![Array1::zeros(dimension); n_agents],
            memories: vec![Array1::zeros(dimension); n_agents],
        }
    }
}

/// Link capacity model for the digital benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkBudget {
    /// Bits per round limited by each agent's SINR (the realistic case).
    SinrLimited,
    /// Infinite rate: replicas track iterates exactly. In this mode the
    /// round is bit-identical to [`dsgd_round`].
    Unlimited,
}

/// One quantized-DSGD round. Under a finite budget every agent compresses
/// the delta between its iterate and its last-acknowledged replica
/// (error feedback carries the remainder), receivers patch replicas, and
/// the gradient step mixes true own iterate with neighbor replicas.
#[allow(clippy::too_many_arguments)]
pub fn q_dsgd_round<G>(
    state: &mut ChainState,
    q: &mut QDsgdState,
    mixing: &MixingMatrix,
    budget: &RateBudget,
    link: LinkBudget,
    n_b: u32,
    eta: f64,
    mut gradient: G,
    seed: u64,
) -> Result<()>
where
    G: FnMut(usize, &Array1<f64>) -> Result<Array1<f64>>,
{
    let n = state.n_agents();
    match link {
        LinkBudget::Unlimited => {
            for j in 0..n {
                q.replicas[j].assign(state.iterate(j));
            }
        }
        LinkBudget::SinrLimited => {
            for j in 0..n {
                let t = budget.chosen_t[j];
                // replica + memory telescopes to the previously broadcast
                // iterate, so this is the fresh increment since last round
                // (round 0 includes the whole initial iterate).
                let delta = state.iterate(j) - &q.replicas[j] - &q.memories[j];
                let mut rng = rng::substream(seed, StreamRole::Quantizer, j, state.round);
                let msg = compression::compress_with_error_feedback(
                    &delta,
                    &mut q.memories[j],
                    t,
                    n_b,
                    &mut rng,
                )?;
                let used = msg.bit_count + n_b as u64;
                if used as f64 > budget.bits_per_block[j] && msg.t() > 0 {
                    return Err(Error::Internal(format!(
                        "agent {j} message of {used} bits exceeds budget {}",
                        budget.bits_per_block[j]
                    )));
                }
                msg.apply_to(&mut q.replicas[j])?;
            }
        }
    }

    let mut next = Vec::with_capacity(n);
    for k in 0..n {
        let grad = gradient(k, state.iterate(k))?;
        ensure_finite_gradient(&grad, k, state.round)?;
        let mut theta = mix_row(k, state.iterate(k), mixing, |j| &q.replicas[j]);
        theta.scaled_add(-eta, &grad);
        next.push(theta);
    }
    state.apply_update(next);
    Ok(())
}

/// Everything needed to run one chain end to end.
#[derive(Debug, Clone)]
pub struct ChainSetup<'a> {
    pub seed: u64,
    pub spec: &'a ModelSpec,
    /// One shard per agent. The centralized `sgld` runs on a single agent
    /// holding the pooled data.
    pub agent_data: &'a [Dataset],
    pub topology: &'a Topology,
    pub mixing: &'a MixingMatrix,
    pub config: &'a SamplerConfig,
    /// Required by the channel-aware algorithms.
    pub channel: Option<&'a ChannelParams>,
    /// Quantizer width for `q-dsgd`.
    pub value_bits: u32,
    pub link_budget: LinkBudget,
}

fn batched_gradient(
    setup: &ChainSetup,
    agent: usize,
    round: usize,
    theta: &Array1<f64>,
) -> Result<Array1<f64>> {
    let n_agents = setup.agent_data.len();
    let data = &setup.agent_data[agent];
    let fraction = setup.config.batch_fraction;
    if fraction >= 1.0 || data.is_empty() {
        return models::local_potential_gradient(setup.spec, data, theta, n_agents);
    }
    let indices = models::minibatch_indices(setup.seed, agent, round, data.len(), fraction);
    let batch = data.subset(&indices);
    let mut grad = models::negative_log_likelihood_gradient(setup.spec, &batch, theta)?;
    grad *= data.len() as f64 / indices.len() as f64;
    grad.scaled_add(1.0 / n_agents as f64, theta);
    Ok(grad)
}

/// Runs a configured chain for `total_rounds` rounds, recording iterates
/// after the burn-in and aborting on divergence. Initial iterates are drawn
/// from the prior, one substream per agent.
pub fn run_chain(setup: &ChainSetup) -> Result<ChainState> {
    setup.config.validate()?;
    let n = setup.topology.n_agents();
    if setup.agent_data.len() != n {
        return Err(Error::ShapeMismatch {
            what: "agent shards",
            expected: n,
            actual: setup.agent_data.len(),
        });
    }
    if setup.config.algorithm == Algorithm::Sgld && n != 1 {
        return Err(Error::InvalidConfig(
            "sgld is centralized; run it on a single pooled agent".into(),
        ));
    }
    let m = setup.spec.dimension();
    let eta = setup.config.step_size;

    let channel_params = if setup.config.algorithm.uses_channel() {
        let params = setup.channel.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{} needs channel parameters",
                setup.config.algorithm.as_str()
            ))
        })?;
        if params.block_length != m {
            return Err(Error::ShapeMismatch {
                what: "channel block length",
                expected: m,
                actual: params.block_length,
            });
        }
        Some(params)
    } else {
        None
    };

    // Every agent starts from the same prior draw; a shared initial point
    // removes the consensus transient from the burn-in.
    let initial = vec![models::sample_from_prior(setup.seed, 0, m); n];
    let mut state = ChainState::new(initial)?;

    let beta = channel_params.map(|p| receiver_scaling(p.noise_power, eta));
    let rate = match (setup.config.algorithm, setup.link_budget) {
        (Algorithm::QDsgd, LinkBudget::SinrLimited) => Some(compression::rate_budget(
            channel_params.expect("checked above"),
            setup.topology,
            setup.value_bits,
        )?),
        (Algorithm::QDsgd, LinkBudget::Unlimited) => Some(RateBudget {
            sinr: vec![f64::INFINITY; n],
            bits_per_block: vec![f64::INFINITY; n],
            chosen_t: vec![m; n],
        }),
        _ => None,
    };
    let mut q_state = QDsgdState::new(n, m);

    for round in 0..setup.config.total_rounds {
        let seed = setup.seed;
        let gradient =
            |k: usize, theta: &Array1<f64>| batched_gradient(setup, k, round, theta);
        match setup.config.algorithm {
            Algorithm::Sgld | Algorithm::Dsgld => {
                let xi = |k: usize| {
                    let mut rng = rng::substream(seed, StreamRole::Langevin, k, round);
                    rng::standard_normal_vec(&mut rng, m)
                };
                dsgld_round(&mut state, setup.mixing, eta, gradient, xi)?;
            }
            Algorithm::Dsgd => {
                dsgd_round(&mut state, setup.mixing, eta, gradient)?;
            }
            Algorithm::CdDsgld => {
                let params = channel_params.expect("checked above");
                let beta = beta.expect("channel algorithms have beta");
                let power = optimize_power_control(
                    state.iterates(),
                    setup.mixing.scalar_weight,
                    beta,
                    params,
                );
                let noise = channel::gaussian_noise(seed, round, params);
                cd_dsgld_round(
                    &mut state,
                    setup.topology,
                    setup.mixing,
                    params,
                    &power,
                    eta,
                    gradient,
                    noise,
                )?;
            }
            Algorithm::QDsgd => {
                q_dsgd_round(
                    &mut state,
                    &mut q_state,
                    setup.mixing,
                    rate.as_ref().expect("budget prepared above"),
                    setup.link_budget,
                    setup.value_bits,
                    eta,
                    gradient,
                    seed,
                )?;
            }
        }
        state.check_divergence()?;
        if state.round() > setup.config.burn_in {
            state.record_retained();
        }
    }
    Ok(state)
}
