//! Digital-baseline compression: rate budgets, sparsification, quantization.
//!
//! The digital benchmark decodes each neighbor's block separately, treating
//! the other superimposed transmissions as noise. That fixes a per-round bit
//! budget `m log2(1 + SINR_k)`, which is spent on a top-`t` sparsified,
//! stochastically quantized update: `t` is the largest sparsity whose
//! position-encoding overhead `log2 C(m,t)` plus payload still fits.
//!
//! Quantization error and untransmitted coordinates are carried forward in
//! an error-feedback memory, so every coordinate eventually gets through.

use ndarray::Array1;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Valid range for the per-entry quantizer width. The lower end leaves at
/// least one mantissa bit in the scale header; the upper end keeps level
/// arithmetic exact in doubles.
pub const MIN_VALUE_BITS: u32 = 6;
pub const MAX_VALUE_BITS: u32 = 24;

fn check_value_bits(n_b: u32) -> Result<()> {
    if !(MIN_VALUE_BITS..=MAX_VALUE_BITS).contains(&n_b) {
        return Err(Error::InvalidConfig(format!(
            "value bits must lie in [{MIN_VALUE_BITS}, {MAX_VALUE_BITS}], got {n_b}"
        )));
    }
    Ok(())
}

/// Signal-to-interference-plus-noise ratio at a receiver whose closed
/// neighborhood (own node included) has `neighborhood_size` members:
/// `P / ((|N_k| - 1) P + N0)`.
pub fn sinr(params: &ChannelParams, neighborhood_size: usize) -> f64 {
    assert!(neighborhood_size >= 1, "neighborhood includes the node itself");
    let p = params.power_budget;
    p / ((neighborhood_size as f64 - 1.0) * p + params.noise_power)
}

/// `log2 C(m, t)` with the binomial evaluated in exact integer arithmetic.
pub fn golomb_overhead_bits(m: usize, t: usize) -> Result<f64> {
    if t > m {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {t} positions out of {m}"
        )));
    }
    let mut binom = BigUint::from(1u32);
    for i in 0..t.min(m - t) {
        binom *= BigUint::from((m - i) as u64);
        binom /= BigUint::from((i + 1) as u64);
    }
    Ok(log2_biguint(&binom))
}

/// Base-2 log of a positive big integer, exact to double precision: the top
/// 64 bits give the mantissa, the remaining width the exponent.
fn log2_biguint(b: &BigUint) -> f64 {
    let bits = b.bits();
    if bits <= 64 {
        return (b.to_u64().expect("fits in u64") as f64).log2();
    }
    let shift = bits - 64;
    let top = (b >> shift).to_u64().expect("shifted to 64 bits");
    (top as f64).log2() + shift as f64
}

/// Largest `t` in `[0, m]` whose encoded size `log2 C(m,t) + t * n_b` fits
/// in `budget_bits`. The size is not monotone in `t` (the position overhead
/// vanishes again at `t = m`), so every candidate is checked.
pub fn select_t(m: usize, n_b: u32, budget_bits: f64) -> usize {
    let mut best = 0;
    let mut binom = BigUint::from(1u32);
    for t in 0..=m {
        if t > 0 {
            binom *= BigUint::from((m - t + 1) as u64);
            binom /= BigUint::from(t as u64);
        }
        let cost = log2_biguint(&binom) + (t as u32 * n_b) as f64;
        if cost <= budget_bits {
            best = t;
        }
    }
    best
}

/// Whole bits occupied by one message payload: position overhead rounded up
/// plus `t` quantized entries. The scale header is accounted separately.
pub fn message_payload_bits(m: usize, t: usize, n_b: u32) -> Result<u64> {
    Ok(golomb_overhead_bits(m, t)?.ceil() as u64 + (t as u64) * n_b as u64)
}

/// Per-agent rate budget for one experiment cell: every agent decodes each
/// neighbor at its own SINR, so all of an agent's outgoing messages must fit
/// the worst (equal, here) budget `m log2(1 + SINR)`.
#[derive(Debug, Clone)]
pub struct RateBudget {
    pub sinr: Vec<f64>,
    pub bits_per_block: Vec<f64>,
    pub chosen_t: Vec<usize>,
}

/// Computes each agent's SINR-limited budget and sparsity choice. Budgets
/// are per agent from that agent's own SINR; the scale header comes out of
/// the budget before the sparsity scan.
pub fn rate_budget(params: &ChannelParams, topology: &Topology, n_b: u32) -> Result<RateBudget> {
    check_value_bits(n_b)?;
    let m = params.block_length;
    let n = topology.n_agents();
    let mut sinrs = Vec::with_capacity(n);
    let mut bits = Vec::with_capacity(n);
    let mut chosen = Vec::with_capacity(n);
    for k in 0..n {
        let s = sinr(params, topology.degree(k) + 1);
        let budget = m as f64 * (1.0 + s).log2();
        let mut t = select_t(m, n_b, budget - n_b as f64);
        // The feasibility scan works on the real-valued overhead; rounding
        // the emitted message up to whole bits can still spill over.
        while t > 0 && (message_payload_bits(m, t, n_b)? + n_b as u64) as f64 > budget {
            t -= 1;
        }
        sinrs.push(s);
        bits.push(budget);
        chosen.push(t);
    }
    Ok(RateBudget {
        sinr: sinrs,
        bits_per_block: bits,
        chosen_t: chosen,
    })
}

/// Number of quantizer levels: one less than `2^n_b` so the grid has an odd
/// point count and represents zero exactly.
fn level_count(n_b: u32) -> u64 {
    (1u64 << n_b) - 1
}

const SCALE_EXP_BITS: u32 = 5;
const SCALE_EXP_BIAS: i32 = 15;

/// Encodes the quantizer scale into its `n_b`-bit header field: 5 exponent
/// bits and `n_b - 5` mantissa bits, rounded up so the decoded scale never
/// falls below the input and quantized values stay in range.
pub fn encode_scale(scale: f64, n_b: u32) -> Result<u32> {
    check_value_bits(n_b)?;
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale must be finite and nonnegative, got {scale}"
        )));
    }
    if scale == 0.0 {
        return Ok(0);
    }
    let mb = n_b - SCALE_EXP_BITS;
    let mut exp = scale.log2().floor() as i32;
    // Guard against log/floor landing one off at powers of two.
    if scale < (exp as f64).exp2() {
        exp -= 1;
    } else if scale >= ((exp + 1) as f64).exp2() {
        exp += 1;
    }
    let frac = scale / (exp as f64).exp2() - 1.0;
    let mut mant = (frac * (1u64 << mb) as f64).ceil() as u64;
    if mant >= (1u64 << mb) {
        mant = 0;
        exp += 1;
    }
    let field = (exp + SCALE_EXP_BIAS).clamp(0, (1 << SCALE_EXP_BITS) - 1) as u32;
    Ok((field << mb) | mant as u32)
}

/// Decodes an `n_b`-bit scale header field.
pub fn decode_scale(code: u32, n_b: u32) -> Result<f64> {
    check_value_bits(n_b)?;
    let mb = n_b - SCALE_EXP_BITS;
    let exp = (code >> mb) as i32 - SCALE_EXP_BIAS;
    let mant = (code & ((1 << mb) - 1)) as f64 / (1u64 << mb) as f64;
    Ok((1.0 + mant) * (exp as f64).exp2())
}

/// Maps each value in `[-scale, scale]` to a level code by randomized
/// rounding between its two enclosing grid points, so the dequantized value
/// is unbiased. Positions within 1e-9 of a grid point round deterministically
/// to absorb floating-point error from round-tripped values.
pub fn quantize_codes(
    values: &Array1<f64>,
    n_b: u32,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>> {
    check_value_bits(n_b)?;
    let levels = level_count(n_b);
    let top = (levels - 1) as f64;
    let mut codes = Vec::with_capacity(values.len());
    for &v in values {
        if !v.is_finite() || v.abs() > scale {
            return Err(Error::Internal(format!(
                "value {v} outside quantizer range [-{scale}, {scale}]"
            )));
        }
        if scale == 0.0 {
            codes.push(((levels - 1) / 2) as u32);
            continue;
        }
        let pos = (v / scale + 1.0) * top / 2.0;
        let nearest = pos.round();
        let code = if (pos - nearest).abs() <= 1e-9 {
            nearest
        } else {
            let base = pos.floor();
            if rng.random::<f64>() < pos - base {
                base + 1.0
            } else {
                base
            }
        };
        debug_assert!((0.0..=top).contains(&code));
        codes.push(code as u32);
    }
    Ok(codes)
}

/// Reconstructs values from level codes: `(2 code / (levels-1) - 1) * scale`.
pub fn dequantize_codes(codes: &[u32], n_b: u32, scale: f64) -> Result<Array1<f64>> {
    check_value_bits(n_b)?;
    let top = (level_count(n_b) - 1) as f64;
    Ok(Array1::from_iter(
        codes
            .iter()
            .map(|&c| (2.0 * f64::from(c) / top - 1.0) * scale),
    ))
}

/// Randomized rounding to the grid and straight back to values.
pub fn stochastic_quantize(
    values: &Array1<f64>,
    n_b: u32,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array1<f64>> {
    let codes = quantize_codes(values, n_b, scale, rng)?;
    dequantize_codes(&codes, n_b, scale)
}

/// Keeps the `t` largest-magnitude coordinates (ties to the lowest index)
/// and returns `(sorted indices, their values, remainder)`: the remainder is
/// the input with the selected coordinates zeroed and becomes the next error
/// memory.
pub fn top_t_sparsify(combined: &Array1<f64>, t: usize) -> (Vec<usize>, Array1<f64>, Array1<f64>) {
    let m = combined.len();
    let t = t.min(m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        combined[b]
            .abs()
            .partial_cmp(&combined[a].abs())
            .expect("finite magnitudes")
            .then(a.cmp(&b))
    });
    let mut indices: Vec<usize> = order[..t].to_vec();
    indices.sort_unstable();
    let values = Array1::from_iter(indices.iter().map(|&i| combined[i]));
    let mut memory = combined.clone();
    for &i in &indices {
        memory[i] = 0.0;
    }
    (indices, values, memory)
}

/// One sparsified, quantized update message.
///
/// `bit_count` follows the position-coding model: `ceil(log2 C(m,t))` bits
/// for the index set plus `n_b` per entry. The `n_b`-bit scale header is
/// accounted on top when checking budgets. The byte layout exists for golden
/// tests, not as a wire protocol: fields are stored as little-endian 32-bit
/// words `[t][scale][first index, index gaps...][level codes...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub indices: Vec<usize>,
    pub codes: Vec<u32>,
    pub scale_code: u32,
    pub n_b: u32,
    pub vector_len: usize,
    pub bit_count: u64,
}

impl CompressedMessage {
    pub fn new(
        indices: Vec<usize>,
        codes: Vec<u32>,
        scale_code: u32,
        n_b: u32,
        vector_len: usize,
    ) -> Result<Self> {
        check_value_bits(n_b)?;
        if indices.len() != codes.len() {
            return Err(Error::ShapeMismatch {
                what: "message codes",
                expected: indices.len(),
                actual: codes.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "message indices must be strictly increasing".into(),
            ));
        }
        if indices.last().is_some_and(|&i| i >= vector_len) {
            return Err(Error::InvalidArgument(
                "message index outside the vector".into(),
            ));
        }
        let bit_count = message_payload_bits(vector_len, indices.len(), n_b)?;
        Ok(CompressedMessage {
            indices,
            codes,
            scale_code,
            n_b,
            vector_len,
            bit_count,
        })
    }

    pub fn t(&self) -> usize {
        self.indices.len()
    }

    /// Dequantized entry values, aligned with `indices`.
    pub fn values(&self) -> Result<Array1<f64>> {
        let scale = decode_scale(self.scale_code, self.n_b)?;
        dequantize_codes(&self.codes, self.n_b, scale)
    }

    /// Adds the carried update onto a receiver's replica of the sender.
    pub fn apply_to(&self, replica: &mut Array1<f64>) -> Result<()> {
        if replica.len() != self.vector_len {
            return Err(Error::ShapeMismatch {
                what: "replica",
                expected: self.vector_len,
                actual: replica.len(),
            });
        }
        let values = self.values()?;
        for (&i, &v) in self.indices.iter().zip(values.iter()) {
            replica[i] += v;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * (2 + 2 * self.t()));
        out.extend_from_slice(&(self.t() as u32).to_le_bytes());
        out.extend_from_slice(&self.scale_code.to_le_bytes());
        let mut prev = 0usize;
        for (pos, &i) in self.indices.iter().enumerate() {
            let gap = if pos == 0 { i } else { i - prev - 1 };
            out.extend_from_slice(&(gap as u32).to_le_bytes());
            prev = i;
        }
        for &c in &self.codes {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], n_b: u32, vector_len: usize) -> Result<Self> {
        let word = |at: usize| -> Result<u32> {
            let slice = bytes
                .get(4 * at..4 * at + 4)
                .ok_or_else(|| Error::InvalidArgument("message truncated".into()))?;
            Ok(u32::from_le_bytes(slice.try_into().expect("4 bytes")))
        };
        let t = word(0)? as usize;
        let scale_code = word(1)?;
        if bytes.len() != 4 * (2 + 2 * t) {
            return Err(Error::InvalidArgument(format!(
                "message of {} bytes does not match t={t}",
                bytes.len()
            )));
        }
        let mut indices = Vec::with_capacity(t);
        let mut prev = 0usize;
        for pos in 0..t {
            let gap = word(2 + pos)? as usize;
            let idx = if pos == 0 { gap } else { prev + 1 + gap };
            indices.push(idx);
            prev = idx;
        }
        let codes = (0..t).map(|pos| word(2 + t + pos)).collect::<Result<_>>()?;
        CompressedMessage::new(indices, codes, scale_code, n_b, vector_len)
    }
}

/// Compresses `update + memory` into a `t`-sparse quantized message and
/// leaves everything the message does not carry (including quantization
/// error) in `memory` for later rounds.
pub fn compress_with_error_feedback(
    update: &Array1<f64>,
    memory: &mut Array1<f64>,
    t: usize,
    n_b: u32,
    rng: &mut ChaCha8Rng,
) -> Result<CompressedMessage> {
    if update.len() != memory.len() {
        return Err(Error::ShapeMismatch {
            what: "error feedback memory",
            expected: update.len(),
            actual: memory.len(),
        });
    }
    let combined = update + &*memory;
    let (indices, values, mut remainder) = top_t_sparsify(&combined, t);
    let raw_scale = combined.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale_code = encode_scale(raw_scale, n_b)?;
    let scale = if raw_scale == 0.0 {
        0.0
    } else {
        decode_scale(scale_code, n_b)?
    };
    let codes = quantize_codes(&values, n_b, scale, rng)?;
    let sent = dequantize_codes(&codes, n_b, scale)?;
    for (pos, &i) in indices.iter().enumerate() {
        remainder[i] = values[pos] - sent[pos];
    }
    *memory = remainder;
    CompressedMessage::new(indices, codes, scale_code, n_b, update.len())
}
