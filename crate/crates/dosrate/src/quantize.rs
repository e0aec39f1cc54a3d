//! Uniform quantizer on [-1, 1] with power-of-two cell counts, plus the codeword
//! encoding that crosses the channel.
//!
//! For a bit budget `R >= 1` the quantizer maps `chi` in [-1, 1) to the midpoint
//! `(floor(2^(R-1) chi) + 1/2) / 2^(R-1)` of its cell, and `chi = 1` to the top
//! midpoint `1 - 2^-R`. A budget of zero bits means "nothing transmitted" and
//! quantizes everything to 0. All arithmetic sticks to exact powers of two so
//! that encode/decode reproduces the quantizer value bit for bit.

use crate::error::{Error, Result};

/// Largest supported bit budget per element. Beyond 52 bits the cell index no
/// longer fits the exact integer range of an f64 and midpoints stop being
/// representable.
pub const MAX_BITS: u32 = 52;

/// Inputs may exceed 1 in magnitude by at most this much (integration round-off)
/// and are clamped back onto the boundary; anything larger is a hard overflow.
pub const OVERFLOW_SLACK: f64 = 1e-12;

/// Exact `2^r` for `r <= 52`.
#[inline]
pub(crate) fn pow2(r: u32) -> f64 {
    debug_assert!(r <= MAX_BITS);
    (1u64 << r) as f64
}

fn validate_bits(bits: u32) -> Result<()> {
    if bits > MAX_BITS {
        return Err(Error::InvalidParam(format!(
            "bit budget {bits} exceeds the supported maximum of {MAX_BITS}"
        )));
    }
    Ok(())
}

/// Clamp a nominally-in-range input onto [-1, 1], rejecting real overflows.
fn clamp_unit(chi: f64) -> Result<f64> {
    if chi.is_nan() {
        return Err(Error::QuantizerOverflow(f64::NAN));
    }
    if chi.abs() <= 1.0 {
        Ok(chi)
    } else if chi.abs() <= 1.0 + OVERFLOW_SLACK {
        Ok(chi.signum())
    } else {
        Err(Error::QuantizerOverflow(chi.abs()))
    }
}

/// Quantize `chi` in [-1, 1] to the midpoint of its uniform cell using `bits`
/// bits (`2^bits` cells). Zero bits quantizes to 0.
///
/// The quantization error is at most `2^-bits` in magnitude, which is what the
/// coder's range-contraction step relies on.
pub fn quantize(chi: f64, bits: u32) -> Result<f64> {
    validate_bits(bits)?;
    let chi = clamp_unit(chi)?;
    if bits == 0 {
        return Ok(0.0);
    }
    let half = pow2(bits - 1);
    if chi == 1.0 {
        // Top edge belongs to the last cell.
        Ok((half - 1.0 + 0.5) / half)
    } else {
        Ok(((half * chi).floor() + 0.5) / half)
    }
}

/// A quantizer output as it crosses the channel: a cell index of `bits` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Codeword {
    /// Cell index in `0 .. 2^bits` (0 when `bits == 0`).
    pub index: u64,
    /// Bit budget this codeword was produced under.
    pub bits: u32,
}

/// Encode `chi` in [-1, 1] as a cell index under `bits` bits.
///
/// The index is derived from the same floor computation as [`quantize`], so
/// `decode(encode(chi, b))` reproduces `quantize(chi, b)` exactly.
pub fn encode(chi: f64, bits: u32) -> Result<Codeword> {
    validate_bits(bits)?;
    let chi = clamp_unit(chi)?;
    if bits == 0 {
        return Ok(Codeword { index: 0, bits });
    }
    let half = pow2(bits - 1);
    let cell = if chi == 1.0 {
        half - 1.0
    } else {
        (half * chi).floor()
    };
    // cell is an integer in [-half, half - 1]; shift to [0, 2^bits - 1].
    let index = (cell as i64 + half as i64) as u64;
    Ok(Codeword { index, bits })
}

/// Decode a codeword back to its cell midpoint.
pub fn decode(cw: Codeword) -> Result<f64> {
    validate_bits(cw.bits)?;
    if cw.bits == 0 {
        return Ok(0.0);
    }
    let half = pow2(cw.bits - 1);
    let max_index = (1u64 << cw.bits) - 1;
    if cw.index > max_index {
        return Err(Error::InvalidParam(format!(
            "codeword index {} out of range for {} bits",
            cw.index, cw.bits
        )));
    }
    let cell = cw.index as i64 - half as i64;
    Ok((cell as f64 + 0.5) / half)
}

/// Worst-case magnitude of the scaled quantization error `|e - j q(e/j)|` for
/// inputs with `|e| <= j`: exactly `j / 2^bits`.
pub fn error_bound(range: f64, bits: u32) -> Result<f64> {
    validate_bits(bits)?;
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::InvalidParam(format!(
            "quantization range must be positive and finite, got {range}"
        )));
    }
    Ok(range / pow2(bits))
}
