//! Attack traces: construction, admissibility checking, parameter fitting,
//! seeded random generation, and CSV round-trips.
//!
//! A trace is a list of disjoint jamming intervals, closed at onset and open
//! at the end. A frequency/duration budget `(eta, tau_d, kappa, T)` is
//! checked window-by-window: every `[a, b]` may contain at most
//! `eta + (b-a)/tau_d` onsets and at most `kappa + (b-a)/T` seconds of
//! jamming.
//!
//! Run with: `cargo run --example dos_traces`

use dosrate::dos::successful_instants;
use dosrate::{
    averaged_params, check_admissible, fit_params, generate_trace, DoSInterval, DoSParams,
    DoSTrace, TraceGenerator,
};

fn main() -> dosrate::Result<()> {
    let delta = 0.1;

    // Build a trace by hand: three bursts over a 10 s horizon.
    let trace = DoSTrace::new(
        vec![
            DoSInterval { onset: 0.5, duration: 0.7 },
            DoSInterval { onset: 3.0, duration: 1.2 },
            DoSInterval { onset: 7.25, duration: 0.5 },
        ],
        10.0,
    )?;
    println!("hand-built trace (horizon {} s):", trace.horizon());
    for iv in trace.intervals() {
        println!("  jammed [{:.2}, {:.2})", iv.onset, iv.end());
    }
    println!("  jammed at t = 0.5? {}", trace.is_jammed(0.5));
    println!("  jammed at t = 1.2? {} (interval ends open)", trace.is_jammed(1.2));
    println!("  onsets in [0, 5]: {}", trace.count_transitions(0.0, 5.0)?);
    println!("  jammed seconds in [0, 5]: {:.2}", trace.dos_duration(0.0, 5.0)?);

    // Which transmission attempts survive? Attempts happen at multiples of
    // delta; an attempt succeeds iff its instant is not jammed.
    let ok = successful_instants(&trace, delta)?;
    println!(
        "  attempts every {delta} s: {} of {} succeed, first at t = {}",
        ok.len(),
        (trace.horizon() / delta) as usize + 1,
        ok[0]
    );

    // Admissibility against a budget: the hand trace respects a lenient
    // budget but violates a strict one, and the checker reports the window.
    let lenient = DoSParams::new(1.0, 2.0, 1.0, 4.0)?;
    let strict = DoSParams::new(0.0, 5.0, 0.0, 10.0)?;
    println!("\nadmissible under (eta=1, tau_d=2, kappa=1, T=4)? {}", check_admissible(&trace, &lenient, delta)?.is_none());
    match check_admissible(&trace, &strict, delta)? {
        Some(v) => println!(
            "strict budget violated: {:?} constraint on window [{:.2}, {:.2}]: observed {:.2}, allowed {:.2}",
            v.kind, v.window.0, v.window.1, v.observed, v.allowed
        ),
        None => println!("strict budget unexpectedly satisfied"),
    }

    // Fit the tightest budget the trace itself satisfies, given offsets.
    let fitted = fit_params(&trace, 1.0, 1.0)?;
    println!(
        "\nfitted budget (eta = kappa = 1): tau_d = {:.3}, T = {:.3}, level = {:.3}",
        fitted.tau_d,
        fitted.t_frac,
        fitted.level(delta)
    );
    let avg = averaged_params(&trace)?;
    println!(
        "whole-horizon averages:        tau_d = {:.3}, T = {:.3}, level = {:.3}",
        avg.tau_d,
        avg.t_frac,
        avg.level(delta)
    );
    println!("(the fitted budget provably admits the trace window-by-window;");
    println!(" whole-horizon averages are descriptive and can hide local bursts)");

    // Seeded random traces: alternating clear/jam cycles with period and
    // duty ratio drawn uniformly from the given intervals. Same seed, same
    // trace — byte-for-byte.
    let gen = TraceGenerator::new((0.5, 1.5), (0.6, 0.9))?;
    let a = generate_trace(&gen, 20.0, 3)?;
    let b = generate_trace(&gen, 20.0, 3)?;
    assert_eq!(a, b);
    println!(
        "\nseeded generator (period 0.5-1.5 s, duty 0.6-0.9, seed 3): {} bursts, {:.2} s jammed ({:.0}% of horizon)",
        a.intervals().len(),
        a.dos_duration(0.0, 20.0)?,
        100.0 * a.dos_duration(0.0, 20.0)? / 20.0
    );

    // CSV round-trip: the textual form reloads to an identical trace.
    let csv = a.to_csv();
    let reloaded = DoSTrace::from_csv(&csv, Some(a.horizon()))?;
    assert_eq!(a, reloaded);
    println!("CSV round-trip: {} bytes, identical after reload", csv.len());
    println!("first lines:\n{}", csv.lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}
