//! Coordinate machinery: real Jordan structure, the rotating frame that makes
//! complex modes time-invariant, and the exact nonnegative state-transition
//! flow.
//!
//! The codec needs per-element quantization ranges that provably dominate
//! the error. That works in coordinates where the dynamics matrix is upper
//! bidiagonal with nonnegative off-diagonal — which a real Jordan form
//! composed with a rotating frame `E(t)` delivers for any real matrix whose
//! complex blocks would otherwise mix elements. This example exhibits the
//! identities the rest of the crate relies on.
//!
//! Run with: `cargo run --example jordan_transforms`

use dosrate::model::{BlockStructure, JordanBlock, PlantSpec};
use dosrate::build_transformed_system;
use nalgebra::{DMatrix, DVector};

fn main() -> dosrate::Result<()> {
    // A mixed structure: one stable real mode and one lightly damped
    // oscillator (complex pair 0.2 +/- 2i). The plant is written directly in
    // real Jordan coordinates, so S = I.
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[0.5, 0.0, 0.0, 0.0, 0.2, -2.0, 0.0, 2.0, 0.2],
    );
    let structure = BlockStructure::new(
        vec![JordanBlock::real(0.5, 1)?, JordanBlock::complex(0.2, 2.0, 1)?],
        DMatrix::identity(3, 3),
    )?;

    println!("real Jordan form:\n{}", structure.real_jordan());
    println!("modal (bidiagonal, time-invariant) form:\n{}", structure.modal_matrix());

    // The rotating frame is orthogonal at every instant...
    for &t in &[0.0, 0.37, 1.1, 2.9] {
        let e = structure.rotation_at(t);
        let defect = (&e * e.transpose() - DMatrix::<f64>::identity(3, 3)).abs().max();
        println!("t = {t:>4}: || E(t) E(t)^T - I ||_max = {defect:.2e}");
    }

    // ...and it unwinds the oscillation: E(t) J E(t)^T + E'(t) E(t)^T equals
    // the constant modal matrix (E' approximated by central differences).
    let h = 1e-6;
    let t = 0.77;
    let e = structure.rotation_at(t);
    let e_dot = (structure.rotation_at(t + h) - structure.rotation_at(t - h)) / (2.0 * h);
    let reconstructed = &e * structure.real_jordan() * e.transpose() + &e_dot * e.transpose();
    let gap = (&reconstructed - structure.modal_matrix()).abs().max();
    println!("\nmodal identity residual at t = {t}: {gap:.2e}");

    // Round trip through the moving coordinates.
    let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let xm = structure.to_modal(1.3, &x);
    let back = structure.from_modal(1.3, &xm);
    println!("to_modal/from_modal round trip error: {:.2e}", (&back - &x).abs().max());

    // The modal flow has nonnegative entries (this is what lets ranges
    // dominate errors componentwise) and satisfies the semigroup law.
    let phi = |dt: f64| structure.state_transition(dt);
    let p1 = phi(0.4);
    println!("\nstate transition over 0.4 s:\n{p1}");
    println!("smallest entry: {:.3} (never negative)", p1.min());
    let semigroup_gap = (phi(0.7) - phi(0.4) * phi(0.3)).abs().max();
    println!("semigroup residual |phi(0.7) - phi(0.4) phi(0.3)|: {semigroup_gap:.2e}");

    // For plants not already in Jordan coordinates, a structure can be
    // recovered numerically from any diagonalizable matrix.
    let generic = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
    let recovered = BlockStructure::from_diagonalizable(&generic)?;
    println!(
        "\nrecovered structure of [[0,1],[-2,-3]]: {} block(s) with c = {:?}",
        recovered.blocks().len(),
        recovered
            .blocks()
            .iter()
            .map(|b| (b.c * 1e6).round() / 1e6)
            .collect::<Vec<_>>()
    );

    // Pairing a plant with its structure validates everything and
    // precomputes the modal input/gain factors used by the codec.
    let b = DMatrix::identity(3, 3);
    let k = -(&a) - DMatrix::<f64>::identity(3, 3); // A + BK = -I
    let sys = build_transformed_system(PlantSpec::new(a, b, k)?, structure)?;
    println!(
        "\ntransformed system ready: {} states, modal gain at t = 0.5 is {}x{}",
        sys.n_x(),
        sys.gain_at(0.5).nrows(),
        sys.gain_at(0.5).ncols()
    );
    Ok(())
}
