//! Shared AWGN multiple-access channel.
//!
//! All agents transmit their length-`m` blocks simultaneously; agent `k`
//! receives the superposition of its neighbors' blocks plus white Gaussian
//! noise of per-sample variance `N0`,
//!
//! ```text
//! y_k = sum_{j in neighbors(k)} x_j + z_k,   z_k ~ N(0, N0 I_m),
//! ```
//!
//! and never hears its own transmission. Links have unit gain; every block
//! must satisfy the per-node power constraint `|x_j|^2 <= m P`.
//!
//! Noise enters through a caller-supplied closure mapping receiver id to a
//! noise vector. [`gaussian_noise`] gives the production draw, keyed by
//! `(seed, receiver, round)` so that parallel execution cannot reorder the
//! streams; [`zero_noise`] turns the channel into an exact adder for tests
//! and algebraic constructions.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRole};
use crate::topology::Topology;

/// Physical-layer constants for one experiment cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Noise variance `N0` per channel use.
    pub noise_power: f64,
    /// Transmit power budget `P` per channel use.
    pub power_budget: f64,
    /// Channel uses per block, equal to the model dimension `m`.
    pub block_length: usize,
}

impl ChannelParams {
    pub fn new(noise_power: f64, power_budget: f64, block_length: usize) -> Result<Self> {
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        if !(power_budget.is_finite() && power_budget > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "power budget must be positive, got {power_budget}"
            )));
        }
        if block_length == 0 {
            return Err(Error::InvalidConfig("block length must be positive".into()));
        }
        Ok(ChannelParams {
            noise_power,
            power_budget,
            block_length,
        })
    }

    /// Builds params from an SNR in decibels: `N0 = P / 10^(snr_db/10)`.
    pub fn from_snr_db(power_budget: f64, snr_db: f64, block_length: usize) -> Result<Self> {
        let noise_power = power_budget / 10f64.powf(snr_db / 10.0);
        ChannelParams::new(noise_power, power_budget, block_length)
    }

    /// Linear signal-to-noise ratio `P / N0`.
    pub fn snr(&self) -> f64 {
        self.power_budget / self.noise_power
    }
}

/// True iff `|x|^2 <= m P`. The comparison is exact; feasibility at the
/// boundary counts as satisfied.
pub fn check_power(x: &Array1<f64>, params: &ChannelParams) -> bool {
    x.dot(x) <= params.block_length as f64 * params.power_budget
}

/// One agent's transmission for one round. Construction enforces the block
/// length and the power constraint, so a `TransmitBlock` is always valid.
#[derive(Debug, Clone)]
pub struct TransmitBlock {
    agent: usize,
    signal: Array1<f64>,
}

impl TransmitBlock {
    pub fn new(agent: usize, signal: Array1<f64>, params: &ChannelParams) -> Result<Self> {
        if signal.len() != params.block_length {
            return Err(Error::ShapeMismatch {
                what: "transmit block",
                expected: params.block_length,
                actual: signal.len(),
            });
        }
        if !check_power(&signal, params) {
            return Err(Error::PowerViolation {
                agent,
                power: signal.dot(&signal),
                budget: params.block_length as f64 * params.power_budget,
            });
        }
        Ok(TransmitBlock { agent, signal })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn signal(&self) -> &Array1<f64> {
        &self.signal
    }
}

/// What agent `k` hears after one synchronized round.
#[derive(Debug, Clone)]
pub struct ReceiveBlock {
    pub agent: usize,
    pub signal: Array1<f64>,
}

/// Runs one synchronized transmission round.
///
/// Expects exactly one block per agent of the topology. The noise closure
/// is called once per receiver, in ascending receiver order.
pub fn transmit_round<F>(
    blocks: &[TransmitBlock],
    topology: &Topology,
    params: &ChannelParams,
    mut noise: F,
) -> Result<Vec<ReceiveBlock>>
where
    F: FnMut(usize) -> Array1<f64>,
{
    let n = topology.n_agents();
    if blocks.len() != n {
        return Err(Error::Protocol(format!(
            "expected one block per agent ({n}), got {}",
            blocks.len()
        )));
    }
    let mut by_agent: Vec<Option<&TransmitBlock>> = vec![None; n];
    for block in blocks {
        if block.agent >= n {
            return Err(Error::Protocol(format!(
                "block from unknown agent {}",
                block.agent
            )));
        }
        if by_agent[block.agent].replace(block).is_some() {
            return Err(Error::Protocol(format!(
                "agent {} transmitted twice in one round",
                block.agent
            )));
        }
    }

    let mut received = Vec::with_capacity(n);
    for k in 0..n {
        let mut y = noise(k);
        debug_assert_eq!(y.len(), params.block_length, "noise block length");
        for &j in topology.neighbors(k) {
            let block = by_agent[j].expect("all agents present after protocol check");
            y += &block.signal;
        }
        received.push(ReceiveBlock {
            agent: k,
            signal: y,
        });
    }
    Ok(received)
}

/// Per-receiver Gaussian noise `N(0, N0 I_m)` for one round, drawn from the
/// channel substream keyed by `(seed, receiver, round)`.
pub fn gaussian_noise(
    seed: u64,
    round: usize,
    params: &ChannelParams,
) -> impl FnMut(usize) -> Array1<f64> {
    let std = params.noise_power.sqrt();
    let m = params.block_length;
    move |receiver| {
        let mut rng = rng::substream(seed, StreamRole::Channel, receiver, round);
        rng::standard_normal_vec(&mut rng, m) * std
    }
}

/// The noiseless channel (`N0 -> 0` limit): receivers get the exact
/// neighbor superposition.
pub fn zero_noise(block_length: usize) -> impl FnMut(usize) -> Array1<f64> {
    move |_| Array1::zeros(block_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, TopologyKind};
    use ndarray::array;

    fn params(n0: f64, m: usize) -> ChannelParams {
        ChannelParams::new(n0, 1.0, m).unwrap()
    }

    fn scaled_blocks(t: &Topology, p: &ChannelParams, scale: f64) -> Vec<TransmitBlock> {
        (0..t.n_agents())
            .map(|j| {
                let mut signal = Array1::zeros(p.block_length);
                signal[0] = scale * (j as f64 + 1.0);
                TransmitBlock::new(j, signal, p).unwrap()
            })
            .collect()
    }

    #[test]
    fn params_validation_and_snr() {
        assert!(ChannelParams::new(0.0, 1.0, 4).is_err());
        assert!(ChannelParams::new(1.0, -1.0, 4).is_err());
        assert!(ChannelParams::new(1.0, 1.0, 0).is_err());
        let p = ChannelParams::from_snr_db(1.0, 20.0, 4).unwrap();
        assert!((p.noise_power - 0.01).abs() < 1e-15);
        assert!((p.snr() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn power_check_is_exact_at_boundary() {
        let p = params(1.0, 4);
        assert!(check_power(&Array1::zeros(4), &p));
        assert!(check_power(&array![1.0, 1.0, 1.0, 1.0], &p));
        assert!(!check_power(&array![2.0, 0.0, 0.0, 0.1], &p));
    }

    #[test]
    fn transmit_block_enforces_power_and_length() {
        let p = params(1.0, 4);
        let err = TransmitBlock::new(3, array![2.0, 0.0, 0.0, 0.1], &p).unwrap_err();
        match err {
            Error::PowerViolation { agent, .. } => assert_eq!(agent, 3),
            other => panic!("expected power violation, got {other}"),
        }
        assert!(TransmitBlock::new(0, array![1.0, 1.0], &p).is_err());
    }

    #[test]
    fn noiseless_round_is_exact_neighbor_sum() {
        let t = build_topology(TopologyKind::Ring, 5).unwrap();
        let p = params(1.0, 3);
        let blocks = scaled_blocks(&t, &p, 0.1);
        let received = transmit_round(&blocks, &t, &p, zero_noise(3)).unwrap();
        for k in 0..5 {
            let left = (k + 4) % 5;
            let right = (k + 1) % 5;
            let expected = 0.1 * ((left + 1) as f64 + (right + 1) as f64);
            assert!((received[k].signal[0] - expected).abs() < 1e-15);
            assert_eq!(received[k].signal[1], 0.0);
        }
    }

    #[test]
    fn lone_agent_receives_pure_noise() {
        let t = Topology::new(1, &[]).unwrap();
        let p = params(0.25, 6);
        let blocks = scaled_blocks(&t, &p, 0.0);
        let mut noise = gaussian_noise(9, 0, &p);
        let expected = noise(0);
        let received = transmit_round(&blocks, &t, &p, gaussian_noise(9, 0, &p)).unwrap();
        assert_eq!(received[0].signal, expected);
    }

    #[test]
    fn protocol_violations_are_rejected() {
        let t = build_topology(TopologyKind::Full, 3).unwrap();
        let p = params(1.0, 2);
        let blocks = scaled_blocks(&t, &p, 0.1);
        assert!(matches!(
            transmit_round(&blocks[..2], &t, &p, zero_noise(2)),
            Err(Error::Protocol(_))
        ));
        let mut doubled = blocks.clone();
        doubled[2] = TransmitBlock::new(0, Array1::zeros(2), &p).unwrap();
        assert!(matches!(
            transmit_round(&doubled, &t, &p, zero_noise(2)),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn noise_variance_matches_n0() {
        // 100 rounds x 1000 coordinates = 1e5 noise samples per receiver.
        let t = build_topology(TopologyKind::Ring, 3).unwrap();
        let n0 = 0.5;
        let p = params(n0, 1000);
        let blocks = scaled_blocks(&t, &p, 0.01);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let count = 100 * 1000;
        for round in 0..100 {
            let received =
                transmit_round(&blocks, &t, &p, gaussian_noise(7, round, &p)).unwrap();
            let clean = transmit_round(&blocks, &t, &p, zero_noise(1000)).unwrap();
            for (y, s) in received[0].signal.iter().zip(clean[0].signal.iter()) {
                let z = y - s;
                sum += z;
                sum_sq += z * z;
            }
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        let tol = 3.0 * n0 * (2.0 / count as f64).sqrt();
        assert!((var - n0).abs() <= tol, "variance {var} vs {n0} (tol {tol})");
    }

    #[test]
    fn noiseless_channel_is_linear() {
        let t = build_topology(TopologyKind::Star, 4).unwrap();
        let p = params(1.0, 5);
        let mut rng = rng::substream(3, StreamRole::Channel, 0, 999);
        for _ in 0..20 {
            let a: Vec<TransmitBlock> = (0..4)
                .map(|j| {
                    TransmitBlock::new(j, rng::standard_normal_vec(&mut rng, 5) * 0.3, &p).unwrap()
                })
                .collect();
            let b: Vec<TransmitBlock> = (0..4)
                .map(|j| {
                    TransmitBlock::new(j, rng::standard_normal_vec(&mut rng, 5) * 0.3, &p).unwrap()
                })
                .collect();
            let summed: Vec<TransmitBlock> = (0..4)
                .map(|j| {
                    TransmitBlock::new(j, a[j].signal() + b[j].signal(), &p).unwrap()
                })
                .collect();
            let ya = transmit_round(&a, &t, &p, zero_noise(5)).unwrap();
            let yb = transmit_round(&b, &t, &p, zero_noise(5)).unwrap();
            let ys = transmit_round(&summed, &t, &p, zero_noise(5)).unwrap();
            for k in 0..4 {
                let direct = &ya[k].signal + &yb[k].signal;
                for (lhs, rhs) in ys[k].signal.iter().zip(direct.iter()) {
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn receiver_noise_streams_are_uncorrelated() {
        let p = params(1.0, 100);
        let mut dot = 0.0;
        let mut sq0 = 0.0;
        let mut sq1 = 0.0;
        for round in 0..1000 {
            let mut noise = gaussian_noise(21, round, &p);
            let z0 = noise(0);
            let z1 = noise(1);
            dot += z0.dot(&z1);
            sq0 += z0.dot(&z0);
            sq1 += z1.dot(&z1);
        }
        let corr = dot / (sq0.sqrt() * sq1.sqrt());
        assert!(corr.abs() < 0.02, "correlation {corr}");
    }

    #[test]
    fn rounds_are_reproducible_in_any_order() {
        let t = build_topology(TopologyKind::Full, 4).unwrap();
        let p = params(2.0, 8);
        let blocks = scaled_blocks(&t, &p, 0.2);
        let run = |round: usize| {
            transmit_round(&blocks, &t, &p, gaussian_noise(5, round, &p)).unwrap()
        };
        let forward: Vec<_> = (0..3).map(run).collect();
        for round in [2, 0, 1] {
            let again = run(round);
            for k in 0..4 {
                assert_eq!(again[k].signal, forward[round][k].signal);
            }
        }
    }
}
