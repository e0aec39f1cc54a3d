//! Bit-rate thresholds, resilience margins, and attack-budget arithmetic.
//!
//! Everything here is closed-form: given a block's instability rate `c`, the
//! sampling interval `delta`, and a frequency/duration attack budget, the
//! crate computes the minimum stabilizing bit rate, the largest attack level
//! a given rate survives, a geometric decay certificate, and worst-case
//! bounds on the gaps between successful transmissions.
//!
//! Run with: `cargo run --example bound_calculus`

use dosrate::dos::{bound_q, min_successes};
use dosrate::model::{BlockStructure, JordanBlock};
use dosrate::rates::{self, suggest_rate, RateAssignment};
use dosrate::DoSParams;
use nalgebra::DMatrix;

fn main() -> dosrate::Result<()> {
    let delta = 0.1;

    // An attack budget measured from a long jamming record: no more than one
    // onset per tau_d seconds of window (eta extra), and at most a 1/T
    // fraction of any window jammed (kappa extra seconds).
    let eta = 0.0;
    let tau_d = 0.96;
    let kappa = 0.0;
    let t_frac = 1.0 / (0.8793 - delta / tau_d);
    let params = DoSParams::new(eta, tau_d, kappa, t_frac)?;

    println!("attack budget: eta = {eta}, tau_d = {tau_d}, kappa = {kappa}, T = {t_frac:.4}");
    println!(
        "  level 1/T + delta/tau_d = {:.4}  (fraction of channel time lost)",
        params.level(delta)
    );
    println!(
        "  remaining budget 1 - level = {:.4}\n",
        params.budget(delta)
    );

    // Minimum stabilizing rate for a block with instability rate c = 1.
    let c = 1.0;
    let threshold = rates::min_rate_threshold(c, delta, &params)?;
    println!("block c = {c}: minimum stabilizing rate = {threshold:.4} bits/attempt");
    for guard in 0..2 {
        println!(
            "  suggest_rate(threshold, guard = {guard}) = {} bits",
            suggest_rate(threshold, guard)
        );
    }

    // The dual view: how much attack does a fixed rate tolerate?
    println!("\nresilience margin (largest survivable level) by rate:");
    for r in 1..=4 {
        let margin = rates::robustness_margin(r, c, delta)?;
        println!("  r = {r}: level < {margin:.4}");
    }

    // A decay certificate for the suggested rate on a concrete structure:
    // one Jordan block of size 2 with eigenvalue 1 (plant coordinates are
    // already modal here, so S = I).
    let structure = BlockStructure::new(
        vec![JordanBlock::real(c, 2)?],
        DMatrix::identity(2, 2),
    )?;
    let assignment = RateAssignment::uniform(&structure, suggest_rate(threshold, 0))?;
    let cert = rates::decay_certificate(&assignment, &structure, delta, &params)?;
    println!(
        "\ncertificate at r = {} bits: alpha = {:.4}, theta = {:.4}, valid = {}",
        assignment.bits()[0],
        cert.alpha[0],
        cert.theta[0],
        cert.is_valid(&structure)
    );
    println!("  (ranges contract by alpha at each success; theta is the overshoot)");

    // Worst-case channel behaviour under a budget: the longest possible wait
    // before the first success and between consecutive successes, and a
    // lower bound on the number of successes in a window. With zero offsets
    // (eta = kappa = 0) the worst gap Q is zero — the budget forbids any
    // jamming at t = 0 — so use a budget with room for real bursts.
    let bursty = DoSParams::new(1.0, tau_d, 0.3, t_frac)?;
    let q = bound_q(&bursty, delta)?;
    println!("\nworst-case success gaps under (eta = 1, kappa = 0.3) offsets:");
    println!("  first success no later than t = {q:.4} s");
    println!("  consecutive successes at most {:.4} s apart", q + delta);
    let horizon = 20.0;
    println!(
        "  at least {:.0} successes guaranteed in [0, {horizon}] s",
        min_successes(&bursty, delta, 0.0, horizon)?
    );

    // Rates below the threshold get an invalid certificate, not an error:
    // the calculus reports alpha >= 1 and lets the caller decide.
    let starved = RateAssignment::uniform(&structure, 1)?;
    let cert = rates::decay_certificate(&starved, &structure, delta, &params)?;
    println!(
        "\nstarved at r = 1 bit: alpha = {:.4}, valid = {}",
        cert.alpha[0],
        cert.is_valid(&structure)
    );
    Ok(())
}
