//! Time-varying bit-rate protocol: per-block clocks that certify net range
//! contraction, and the deterministic pre-transmission bit-budget rule both
//! codec sides evaluate independently.
//!
//! Each block keeps a clock instant `s` (the start of the current period). At
//! an attempt `t_k` the budget is chosen by a hypothetical test: if even a
//! success at `t_k` would keep the accumulated worst-case growth
//! `e^{c (t_k - s)} / (2^{R_max})^{successes + 1}` above 1, the block spends
//! its full `R_max` bits; otherwise it ramps up from cheap budgets
//! `ceil(w (t_k - s) log2 e)` with a growth rate `w > c`, saving bits right
//! after contraction has been banked. When a success pushes the ratio below 1
//! the clock rolls and the ramp restarts. All ratio tests run in log2 space so
//! long blackouts cannot overflow.

use crate::error::{Error, Result};
use crate::model::BlockStructure;
use crate::quantize::MAX_BITS;
use crate::rates::RateAssignment;

/// Per-block protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTvr {
    /// Real part of the block's eigenvalue (growth rate of the range flow).
    pub c: f64,
    /// Full bit budget, spent while contraction is behind schedule.
    pub r_max: u32,
    /// Ramp growth rate for the saving branch; must strictly exceed `c`.
    pub w: f64,
}

/// Protocol parameters for every block of a structure.
#[derive(Debug, Clone, PartialEq)]
pub struct TvrConfig {
    blocks: Vec<BlockTvr>,
}

impl TvrConfig {
    pub fn new(structure: &BlockStructure, r_max: &RateAssignment, w: &[f64]) -> Result<Self> {
        let n_blocks = structure.blocks().len();
        if r_max.bits().len() != n_blocks || w.len() != n_blocks {
            return Err(Error::Dimension(format!(
                "{} max rates and {} growth rates for {} blocks",
                r_max.bits().len(),
                w.len(),
                n_blocks
            )));
        }
        let mut blocks = Vec::with_capacity(n_blocks);
        for ((jb, &r), &wr) in structure.blocks().iter().zip(r_max.bits()).zip(w) {
            if !(wr > jb.c) || !wr.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "growth rate w = {wr} must strictly exceed the block rate c = {}",
                    jb.c
                )));
            }
            blocks.push(BlockTvr {
                c: jb.c,
                r_max: r,
                w: wr,
            });
        }
        Ok(Self { blocks })
    }

    /// Default growth rates `w = c + 1`.
    pub fn with_default_growth(structure: &BlockStructure, r_max: &RateAssignment) -> Result<Self> {
        let w: Vec<f64> = structure.blocks().iter().map(|b| b.c + 1.0).collect();
        Self::new(structure, r_max, &w)
    }

    pub fn blocks(&self) -> &[BlockTvr] {
        &self.blocks
    }

    /// The time-invariant assignment this protocol falls back to under
    /// sustained attack.
    pub fn max_assignment(&self) -> RateAssignment {
        RateAssignment::new(self.blocks.iter().map(|b| b.r_max).collect())
            .expect("validated at construction")
    }
}

/// One block's clock: the current period start and what has been banked since.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockClock {
    started: bool,
    s_prev: f64,
    successes_since: u64,
    bits_since: u64,
    g: u64,
}

impl BlockClock {
    /// A clock that has not seen its first success yet (full budget until
    /// then).
    pub fn new() -> Self {
        Self {
            started: false,
            s_prev: 0.0,
            successes_since: 0,
            bits_since: 0,
            g: 0,
        }
    }

    pub fn started(&self) -> bool {
        self.started
    }

    /// Start of the current period (meaningful once started).
    pub fn s_prev(&self) -> f64 {
        self.s_prev
    }

    pub fn successes_since(&self) -> u64 {
        self.successes_since
    }

    /// Period index `g`.
    pub fn g(&self) -> u64 {
        self.g
    }
}

impl Default for BlockClock {
    fn default() -> Self {
        Self::new()
    }
}

/// What a success did to the clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockEvent {
    /// First success ever: the clock anchors its first period here.
    Started,
    /// Success banked, contraction still behind schedule; period continues.
    Held,
    /// Period completed: contraction certified, clock rolled to this instant.
    /// Carries the completed period and the log2 of its spectral factor
    /// (computed from the bits actually spent, not the worst-case budget).
    Rolled {
        period: (f64, f64),
        lambda_log2: f64,
    },
}

/// Deterministic pre-transmission bit budget for an attempt at `tk`. Both
/// codec sides evaluate this from their synchronized clocks before the attempt
/// outcome is known.
pub fn next_bit_budget(clock: &BlockClock, blk: &BlockTvr, tk: f64) -> Result<u32> {
    if !clock.started {
        return Ok(blk.r_max);
    }
    let gap = tk - clock.s_prev;
    if !(gap > 0.0) {
        return Err(Error::InvalidParam(format!(
            "attempt at {tk} does not lie strictly after the clock instant {}",
            clock.s_prev
        )));
    }
    // Hypothetical post-success ratio, in log2 space.
    let log2_ratio = blk.c * gap * std::f64::consts::LOG2_E
        - blk.r_max as f64 * (clock.successes_since + 1) as f64;
    if log2_ratio < 0.0 {
        // Contraction is ahead of schedule: ramp the budget up slowly.
        let ramp = (blk.w * gap * std::f64::consts::LOG2_E).ceil();
        let ramp = ramp.clamp(0.0, blk.r_max as f64) as u32;
        Ok(ramp)
    } else {
        Ok(blk.r_max)
    }
}

/// Bank a successful transmission at `zm` that spent `bits_used` bits on this
/// block, rolling the clock when the period's contraction test passes.
pub fn on_success_update_clock(
    clock: &mut BlockClock,
    blk: &BlockTvr,
    zm: f64,
    bits_used: u32,
) -> ClockEvent {
    if !clock.started {
        clock.started = true;
        clock.s_prev = zm;
        clock.successes_since = 0;
        clock.bits_since = 0;
        clock.g = 0;
        return ClockEvent::Started;
    }
    clock.successes_since += 1;
    clock.bits_since += u64::from(bits_used);
    let span = zm - clock.s_prev;
    // Roll test uses the worst-case budget R_max, exactly as both sides can
    // reproduce it without knowing the actual spend.
    let log2_ratio = blk.c * span * std::f64::consts::LOG2_E
        - blk.r_max as f64 * clock.successes_since as f64;
    if log2_ratio < 0.0 {
        let lambda_log2 = spectral_log2(blk.c, span, clock.bits_since);
        let period = (clock.s_prev, zm);
        clock.s_prev = zm;
        clock.successes_since = 0;
        clock.bits_since = 0;
        clock.g += 1;
        ClockEvent::Rolled {
            period,
            lambda_log2,
        }
    } else {
        ClockEvent::Held
    }
}

/// `log2` of the spectral factor of one completed period: growth over the
/// span against the bits actually delivered.
pub fn spectral_log2(c: f64, span: f64, total_bits: u64) -> f64 {
    c * span * std::f64::consts::LOG2_E - total_bits as f64
}

/// Spectral factor `lambda = e^{c * span} / prod 2^{bits}` of a completed
/// period `[s_start, s_end]` with per-success bit spends.
pub fn spectral_check(c: f64, s_start: f64, s_end: f64, bits: &[u32]) -> Result<f64> {
    if !(s_end > s_start) {
        return Err(Error::InvalidParam(format!(
            "period [{s_start}, {s_end}] is not a completed clock period"
        )));
    }
    if bits.is_empty() {
        return Err(Error::InvalidParam(
            "a completed clock period contains at least one success".into(),
        ));
    }
    if let Some(&b) = bits.iter().find(|&&b| b > MAX_BITS) {
        return Err(Error::InvalidParam(format!(
            "bit spend {b} exceeds the supported maximum {MAX_BITS}"
        )));
    }
    let total: u64 = bits.iter().map(|&b| u64::from(b)).sum();
    Ok(spectral_log2(c, s_end - s_start, total).exp2())
}
