//! Bit-rate calculus: stabilizing-rate thresholds per Jordan block, the
//! resilience margin they induce, geometric decay certificates, and average
//! data-rate accounting.
//!
//! The central quantity is the per-block threshold
//! `c * delta * log2(e) / (1 - 1/T - delta/tau_d)`: any integer bit rate
//! strictly above it makes the quantization range contract geometrically along
//! successful transmissions despite the attack budget.

use crate::dos::DoSParams;
use crate::error::{Error, Result};
use crate::model::BlockStructure;
use crate::quantize::MAX_BITS;

/// Time-invariant per-block bit counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateAssignment {
    bits: Vec<u32>,
}

impl RateAssignment {
    pub fn new(bits: Vec<u32>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidParam(
                "rate assignment needs at least one block".into(),
            ));
        }
        if let Some(&r) = bits.iter().find(|&&r| r > MAX_BITS) {
            return Err(Error::InvalidParam(format!(
                "bit count {r} exceeds the supported maximum {MAX_BITS}"
            )));
        }
        Ok(Self { bits })
    }

    /// The same bit count for every block of a structure.
    pub fn uniform(structure: &BlockStructure, bits: u32) -> Result<Self> {
        Self::new(vec![bits; structure.blocks().len()])
    }

    pub fn bits(&self) -> &[u32] {
        &self.bits
    }

    /// Per-element bit counts: each state element inherits the rate of its
    /// owning block.
    pub fn element_rates(&self, structure: &BlockStructure) -> Result<Vec<u32>> {
        structure.expand_per_block(&self.bits)
    }

    /// Bits sent in one transmission attempt (sum over elements).
    pub fn bits_per_attempt(&self, structure: &BlockStructure) -> Result<u64> {
        Ok(self
            .element_rates(structure)?
            .iter()
            .map(|&r| r as u64)
            .sum())
    }
}

/// Per-block geometric decay certificate along successful transmissions:
/// ranges obey `j(z_m) <= theta * alpha^{z_m - z_0} * j(z_0)` when `alpha < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCertificate {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
}

impl DecayCertificate {
    /// Valid iff every block that needs contraction (c >= 0) gets it.
    pub fn is_valid(&self, structure: &BlockStructure) -> bool {
        structure
            .blocks()
            .iter()
            .zip(&self.alpha)
            .all(|(b, &a)| b.c < 0.0 || a < 1.0)
    }
}

fn checked_budget(params: &DoSParams, delta: f64) -> Result<f64> {
    params.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let budget = params.budget(delta);
    if !(budget > 0.0) {
        return Err(Error::DosBudget(params.level(delta)));
    }
    Ok(budget)
}

/// Smallest real bit rate that stabilizes a block with real part `c` under the
/// given attack budget; integer rates strictly above it (or any rate at all
/// when `c < 0`) certify exponential convergence.
pub fn min_rate_threshold(c: f64, delta: f64, params: &DoSParams) -> Result<f64> {
    let budget = checked_budget(params, delta)?;
    if c < 0.0 {
        Ok(0.0)
    } else {
        Ok(c * delta * std::f64::consts::LOG2_E / budget)
    }
}

/// Largest admissible attack level `1/T + delta/tau_d` for a block running at
/// `r` bits: the resilience boundary as a function of the data rate.
pub fn robustness_margin(r: u32, c: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if c < 0.0 {
        return Ok(1.0);
    }
    if r == 0 {
        return Err(Error::InvalidParam(
            "an unstable block (c >= 0) cannot run at 0 bits".into(),
        ));
    }
    Ok(1.0 - c * delta * std::f64::consts::LOG2_E / r as f64)
}

/// Smallest integer rate strictly above the threshold, plus a guard margin.
pub fn suggest_rate(threshold: f64, guard: u32) -> u32 {
    let ceil = threshold.ceil();
    let base = if ceil > threshold {
        ceil as u32
    } else {
        // threshold is itself an integer (e.g. 0 for stable blocks): the
        // strict inequality needs one more bit only when contraction is
        // actually required, which suggest callers encode via threshold > 0;
        // at 0 the non-strict branch admits 0 bits.
        if threshold == 0.0 {
            0
        } else {
            ceil as u32 + 1
        }
    };
    base + guard
}

/// Per-block decay factors `alpha = e^c / 2^{r * budget / delta}` and
/// overshoot constants `theta = 2^{r * (kappa + eta*delta) / delta}`.
pub fn decay_certificate(
    assignment: &RateAssignment,
    structure: &BlockStructure,
    delta: f64,
    params: &DoSParams,
) -> Result<DecayCertificate> {
    let budget = checked_budget(params, delta)?;
    if assignment.bits().len() != structure.blocks().len() {
        return Err(Error::Dimension(format!(
            "rate assignment has {} blocks, structure has {}",
            assignment.bits().len(),
            structure.blocks().len()
        )));
    }
    let mut alpha = Vec::with_capacity(structure.blocks().len());
    let mut theta = Vec::with_capacity(structure.blocks().len());
    for (block, &r) in structure.blocks().iter().zip(assignment.bits()) {
        let r = r as f64;
        alpha.push(block.c.exp() / (r * budget / delta).exp2());
        theta.push((r * (params.kappa + params.eta * delta) / delta).exp2());
    }
    Ok(DecayCertificate { alpha, theta })
}

/// Average delivered data rate: bits carried by successes inside `[z0, zm)`
/// divided by the window length.
pub fn avg_rate_received(successes: &[(f64, u64)], z0: f64, zm: f64) -> Result<f64> {
    if !(zm > z0) {
        return Err(Error::InvalidParam(format!(
            "average-rate window [{z0}, {zm}) is empty"
        )));
    }
    let bits: u64 = successes
        .iter()
        .filter(|&&(t, _)| t >= z0 && t < zm)
        .map(|&(_, b)| b)
        .sum();
    Ok(bits as f64 / (zm - z0))
}

/// Average attempted data rate: bits per attempt over the sampling interval.
pub fn avg_rate_attempted(
    assignment: &RateAssignment,
    structure: &BlockStructure,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "delta must be positive, got {delta}"
        )));
    }
    Ok(assignment.bits_per_attempt(structure)? as f64 / delta)
}

/// Running average-rate test: entry `m` (0-based) is true iff the mean of the
/// first `m + 1` per-success bit counts clears the block's threshold (strictly
/// when `c >= 0`).
pub fn check_average_rate(
    history: &[f64],
    c: f64,
    delta: f64,
    params: &DoSParams,
) -> Result<Vec<bool>> {
    let threshold = min_rate_threshold(c, delta, params)?;
    let mut out = Vec::with_capacity(history.len());
    let mut sum = 0.0;
    for (i, &bits) in history.iter().enumerate() {
        sum += bits;
        let mean = sum / (i + 1) as f64;
        out.push(if c >= 0.0 {
            mean > threshold
        } else {
            mean >= threshold
        });
    }
    Ok(out)
}
