//! The encoder/decoder pair in lockstep, driven by hand.
//!
//! Both sides of the channel run the same state machine: a predictor `xhat`
//! and a positive range vector `j` that always dominates the prediction
//! error. The encoder measures the plant, quantizes the normalized error,
//! and ships cell indices; the decoder reconstructs the identical correction
//! from the indices alone. This example steps a scalar unstable plant
//! through a jam/success pattern and checks, after every event, that the two
//! states are bitwise equal and the error never leaves the range.
//!
//! Run with: `cargo run --example codec_lockstep`

use dosrate::codec;
use dosrate::model::{BlockStructure, JordanBlock, PlantSpec};
use dosrate::{build_transformed_system, RateAssignment};
use nalgebra::{dmatrix, DMatrix, DVector};

fn main() -> dosrate::Result<()> {
    // Scalar plant c = 1 with feedback k = -2; modal coordinates are the
    // plant coordinates (S = 1).
    let plant = PlantSpec::new(dmatrix![1.0], dmatrix![1.0], dmatrix![-2.0])?;
    let structure = BlockStructure::new(vec![JordanBlock::real(1.0, 1)?], DMatrix::identity(1, 1))?;
    let sys = build_transformed_system(plant, structure)?;

    // Initial plant state 1.5, initial range 2.0 (must strictly dominate it).
    let xbar0 = DVector::from_vec(vec![1.5]);
    let j0 = DVector::from_vec(vec![2.0]);
    let rates = RateAssignment::new(vec![3])?;
    let mut encoder = codec::init(sys.structure(), &rates, &xbar0, &j0)?;
    let mut decoder = encoder.clone();

    // The prediction error e = xhat - xbar obeys the autonomous modal flow
    // between events, so we can track it in closed form and recover the true
    // plant state as xbar = xhat - e whenever the encoder needs to measure.
    let mut e = -xbar0.clone();

    let delta = 0.2;
    let jammed = [true, true, false, true, false, true, true, false, false, false];

    println!("  t     event     j        |e|     e inside j?  sides equal?");
    for (k, &jam) in jammed.iter().enumerate() {
        // Event-free interval: both sides propagate identically; the error
        // flows by the exact state transition.
        codec::propagate(&mut encoder, &sys, delta, 8)?;
        codec::propagate(&mut decoder, &sys, delta, 8)?;
        e = sys.structure().state_transition(delta) * e;

        if jam {
            println!(
                "  {:.1}   jammed    {:.4}   {:.4}   {}            {}",
                f64::from(k as u32 + 1) * delta,
                encoder.j()[0],
                e[0].abs(),
                ok(e[0].abs() <= encoder.j()[0]),
                ok(encoder == decoder)
            );
            continue;
        }

        // Success: the encoder measures the plant and emits codewords...
        let xbar_true = encoder.xhat() - &e;
        let j_pre = encoder.j().clone();
        let codewords = codec::on_successful_tx(&mut encoder, &xbar_true)?;
        // ...the decoder sees only the codewords, yet lands on the same state.
        codec::apply_codewords(&mut decoder, &codewords)?;
        // The tracked error absorbs the identical correction.
        codec::apply_error_jump(&mut e, &j_pre, &codewords)?;

        println!(
            "  {:.1}   success   {:.4}   {:.4}   {}            {}   (sent index {} in {} bits)",
            f64::from(k as u32 + 1) * delta,
            encoder.j()[0],
            e[0].abs(),
            ok(e[0].abs() <= encoder.j()[0]),
            ok(encoder == decoder),
            codewords[0].index,
            codewords[0].bits
        );
        assert_eq!(encoder, decoder, "channel peers must stay bitwise equal");
    }

    // The control the decoder would apply, mapped back to plant coordinates.
    let u = codec::control_input(&decoder, &sys);
    println!(
        "\nafter {} attempts: prediction {:.4}, range {:.4}, control u = {:.4}",
        jammed.len(),
        decoder.xhat()[0],
        decoder.j()[0],
        u[0]
    );
    println!("(each success divides the range by 2^3; jammed stretches let it regrow e^t)");
    Ok(())
}

fn ok(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "NO"
    }
}
