//! The mirrored encoder/decoder state machine: a model-based predictor `xhat`,
//! a positive quantization-range vector `j` that provably dominates the
//! prediction error, and the jump updates both sides apply at every successful
//! transmission.
//!
//! Between transmissions the range vector flows exactly (it obeys the
//! autonomous modal dynamics, available in closed form) while the predictor is
//! integrated numerically. At a success the encoder quantizes the normalized
//! error `chi_l = e_l / j_l`, sends the cell indices, and both sides apply the
//! identical correction and halve the range `2^{R_l}`-fold. Encoder and decoder
//! run the same code on the same inputs, so their states stay bitwise equal.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{BlockStructure, TransformedSystem};
use crate::quantize::{decode, encode, pow2, Codeword};
use crate::rates::RateAssignment;

/// Shared state of the encoder/decoder pair (modal coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct CodecState {
    pub(crate) xhat: DVector<f64>,
    pub(crate) j: DVector<f64>,
    pub(crate) t: f64,
    pub(crate) rates: Vec<u32>,
}

impl CodecState {
    pub fn xhat(&self) -> &DVector<f64> {
        &self.xhat
    }

    /// Per-element quantization ranges (strictly positive).
    pub fn j(&self) -> &DVector<f64> {
        &self.j
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Default per-element bit counts applied by [`on_successful_tx`].
    pub fn rates(&self) -> &[u32] {
        &self.rates
    }
}

/// Build the initial state at `t = 0` (pre-event): `xhat = 0` and `j = j0`,
/// which must strictly dominate the initial modal state componentwise so the
/// very first quantization cannot overflow.
pub fn init(
    structure: &BlockStructure,
    rates: &RateAssignment,
    xbar0: &DVector<f64>,
    j0: &DVector<f64>,
) -> Result<CodecState> {
    let n = structure.n_x();
    if xbar0.len() != n || j0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state/range have lengths {}/{}, structure has {} elements",
            xbar0.len(),
            j0.len(),
            n
        )));
    }
    for l in 0..n {
        if !j0[l].is_finite() || !(j0[l] > xbar0[l].abs()) {
            return Err(Error::InvalidParam(format!(
                "initial range j0[{l}] = {} must strictly exceed |xbar0[{l}]| = {}",
                j0[l],
                xbar0[l].abs()
            )));
        }
    }
    Ok(CodecState {
        xhat: DVector::zeros(n),
        j: j0.clone(),
        t: 0.0,
        rates: rates.element_rates(structure)?,
    })
}

/// Classical fourth-order stage values for the predictor flow, exposed so the
/// simulator's coupled plant integration can consume the very same stages the
/// codec uses (keeping the two bitwise consistent).
pub(crate) struct Rk4Stages {
    pub k1: DVector<f64>,
    pub k2: DVector<f64>,
    pub k3: DVector<f64>,
    pub k4: DVector<f64>,
    /// Stage states: x2, x3 at `t + h/2`, x4 at `t + h`.
    pub x2: DVector<f64>,
    pub x3: DVector<f64>,
    pub x4: DVector<f64>,
}

pub(crate) fn predictor_stages(
    sys: &TransformedSystem,
    t: f64,
    xhat: &DVector<f64>,
    h: f64,
) -> Rk4Stages {
    let k1 = sys.predictor_deriv(t, xhat);
    let x2 = xhat + &k1 * (h / 2.0);
    let k2 = sys.predictor_deriv(t + h / 2.0, &x2);
    let x3 = xhat + &k2 * (h / 2.0);
    let k3 = sys.predictor_deriv(t + h / 2.0, &x3);
    let x4 = xhat + &k3 * h;
    let k4 = sys.predictor_deriv(t + h, &x4);
    Rk4Stages {
        k1,
        k2,
        k3,
        k4,
        x2,
        x3,
        x4,
    }
}

pub(crate) fn rk4_combine(x: &DVector<f64>, s: &Rk4Stages, h: f64) -> DVector<f64> {
    x + (&s.k1 + &s.k2 * 2.0 + &s.k3 * 2.0 + &s.k4) * (h / 6.0)
}

/// Advance the state over an event-free interval: the range vector flows
/// exactly via the closed-form modal transition, the predictor by fixed-step
/// fourth-order integration with `substeps` steps.
pub fn propagate(
    state: &mut CodecState,
    sys: &TransformedSystem,
    dt: f64,
    substeps: u32,
) -> Result<()> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParam(format!(
            "propagation interval must be non-negative and finite, got {dt}"
        )));
    }
    if substeps == 0 {
        return Err(Error::InvalidParam("substeps must be at least 1".into()));
    }
    if dt == 0.0 {
        return Ok(());
    }
    state.j = sys.structure().state_transition(dt) * &state.j;
    let h = dt / f64::from(substeps);
    for i in 0..substeps {
        let t = state.t + f64::from(i) * h;
        let stages = predictor_stages(sys, t, &state.xhat, h);
        state.xhat = rk4_combine(&state.xhat, &stages, h);
    }
    state.t += dt;
    Ok(())
}

/// One element's post-quantization update, shared verbatim by the encoder and
/// decoder paths so the two stay bitwise identical.
fn apply_element(state: &mut CodecState, l: usize, q: f64, bits: u32) {
    let jl = state.j[l];
    state.xhat[l] -= jl * q;
    state.j[l] = jl / pow2(bits);
}

fn check_range(state: &CodecState, l: usize) -> Result<()> {
    let jl = state.j[l];
    if !(jl > 0.0) || !jl.is_finite() {
        return Err(Error::InvariantBreach(format!(
            "quantization range j[{l}] = {jl} is not positive and finite at t = {}",
            state.t
        )));
    }
    Ok(())
}

/// Encoder side of a successful transmission at the current `state.t`, with
/// explicit per-element bit budgets and a precomputed error vector
/// `e = xhat - xbar`. Returns the codewords that cross the channel; the state
/// is updated exactly as the decoder will update it.
pub fn jump_with_error(
    state: &mut CodecState,
    e: &DVector<f64>,
    rates: &[u32],
) -> Result<Vec<Codeword>> {
    let n = state.xhat.len();
    if e.len() != n || rates.len() != n {
        return Err(Error::Dimension(format!(
            "error vector/rates have lengths {}/{}, state has {n} elements",
            e.len(),
            rates.len()
        )));
    }
    let mut codewords = Vec::with_capacity(n);
    for l in 0..n {
        check_range(state, l)?;
        // Once halving would push the range below the smallest normal float,
        // the element has contracted beyond representability (over a thousand
        // bits of range reduction) and relative arithmetic on subnormals is no
        // longer trustworthy. Park it: transmit nothing (a zero-bit codeword)
        // and hold the range. Both sides decide from the shared range state,
        // so they stay synchronized, and the flow's coupling can lift the
        // range back above the floor, at which point corrections resume.
        if state.j[l] / pow2(rates[l]) < f64::MIN_POSITIVE {
            codewords.push(Codeword { index: 0, bits: 0 });
            continue;
        }
        let chi = e[l] / state.j[l];
        let cw = encode(chi, rates[l])?;
        // Decode our own codeword: the correction applied here is, bit for
        // bit, what the decoder will reconstruct on the other side.
        let q = decode(cw)?;
        apply_element(state, l, q, rates[l]);
        codewords.push(cw);
    }
    Ok(codewords)
}

/// Encoder side of a successful transmission using the state's default rates:
/// measures the true modal state, quantizes the prediction error, applies the
/// jump, and returns the channel codewords.
pub fn on_successful_tx(
    state: &mut CodecState,
    xbar_true: &DVector<f64>,
) -> Result<Vec<Codeword>> {
    let e = &state.xhat - xbar_true;
    let rates = state.rates.clone();
    jump_with_error(state, &e, &rates)
}

/// Relative slack within which a post-jump error is projected back onto the
/// range envelope (see [`apply_error_jump`]).
const SNAP_SLACK: f64 = 1e-9;

/// In exact arithmetic a quantized jump leaves `|e| <= j`, with equality
/// attained when the normalized input sits exactly on a cell edge. Floating
/// point can then leave `|e|` a few ulps past `j`, and because the error and
/// the range flow by the same linear map, that excess survives to the next
/// attempt and is amplified `2^R`-fold by the boundary cell — compounding
/// into a genuine overflow after enough boundary hits. Projecting rounding-
/// level excess back onto the envelope keeps the invariant exact without
/// masking real violations (anything beyond the slack is left untouched).
fn snap_to_envelope(e: f64, j: f64) -> f64 {
    if e.abs() > j && e.abs() <= j * (1.0 + SNAP_SLACK) {
        j.copysign(e)
    } else {
        e
    }
}

/// Apply a success's corrections to an externally tracked error vector:
/// `e_l -= j_pre_l * q_l` with `j_pre` the pre-jump ranges, then project
/// rounding-level excess onto the contracted envelope. Used by drivers that
/// follow the exact error flow alongside the codec pair.
pub fn apply_error_jump(
    e: &mut DVector<f64>,
    j_pre: &DVector<f64>,
    codewords: &[Codeword],
) -> Result<()> {
    if e.len() != j_pre.len() || e.len() != codewords.len() {
        return Err(Error::Dimension(format!(
            "error/range/codeword lengths {}/{}/{} disagree",
            e.len(),
            j_pre.len(),
            codewords.len()
        )));
    }
    for (l, cw) in codewords.iter().enumerate() {
        e[l] -= j_pre[l] * decode(*cw)?;
        let j_post = j_pre[l] / pow2(cw.bits);
        e[l] = snap_to_envelope(e[l], j_post);
    }
    Ok(())
}

/// Decoder side of a successful transmission: reconstruct each correction from
/// the received codewords alone and apply the identical update.
pub fn apply_codewords(state: &mut CodecState, codewords: &[Codeword]) -> Result<()> {
    let n = state.xhat.len();
    if codewords.len() != n {
        return Err(Error::Dimension(format!(
            "{} codewords for {n} state elements",
            codewords.len()
        )));
    }
    for (l, cw) in codewords.iter().enumerate() {
        check_range(state, l)?;
        let q = decode(*cw)?;
        apply_element(state, l, q, cw.bits);
    }
    Ok(())
}

/// The control input induced by the current prediction, mapped back to
/// original coordinates.
pub fn control_input(state: &CodecState, sys: &TransformedSystem) -> DVector<f64> {
    sys.control_from_modal(state.t, &state.xhat)
}
