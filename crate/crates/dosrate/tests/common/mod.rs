//! Shared fixtures and independently implemented oracles for the integration
//! suites. Everything here recomputes expected values through a different
//! arithmetic path than the library uses, so agreement is evidence rather
//! than tautology.

#![allow(dead_code)] // each test binary uses its own subset

use dosrate::dos::{generate_trace, DoSParams, DoSTrace, TraceGenerator};
use dosrate::model::{
    build_transformed_system, BlockStructure, JordanBlock, PlantSpec, TransformedSystem,
};
use dosrate::sim::SimResult;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The double-integrator benchmark plant: repeated eigenvalue 1 in a single
/// 2-dimensional real block, identity input, and a fixed stabilizing gain.
pub fn reference_system() -> TransformedSystem {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let b = DMatrix::identity(2, 2);
    let k = DMatrix::from_row_slice(2, 2, &[-2.1961, -0.7545, -0.7545, -2.7146]);
    let plant = PlantSpec::new(a, b, k).unwrap();
    let structure = BlockStructure::new(
        vec![JordanBlock::real(1.0, 2).unwrap()],
        DMatrix::identity(2, 2),
    )
    .unwrap();
    build_transformed_system(plant, structure).unwrap()
}

/// Deterministic search (seed 0, 1, 2, ...) for the first generated attack
/// whose statistics match the benchmark scenario: exactly 20 intervals over
/// 20 s totalling 15.52 +/- 0.5 s of jamming, drawn from cycles of period
/// U(0.5, 1.5) and duty U(0.6, 0.9).
pub fn find_reference_seed() -> u64 {
    let gen = TraceGenerator::new((0.5, 1.5), (0.6, 0.9)).unwrap();
    for seed in 0..10_000u64 {
        let trace = generate_trace(&gen, 20.0, seed).unwrap();
        if trace.intervals().len() == 20 {
            let total = trace.dos_duration(0.0, 20.0).unwrap();
            if (total - 15.52).abs() <= 0.5 {
                return seed;
            }
        }
    }
    panic!("no generator seed below 10000 matches the benchmark statistics");
}

/// The benchmark attack trace (see [`find_reference_seed`]).
pub fn reference_trace() -> DoSTrace {
    let gen = TraceGenerator::new((0.5, 1.5), (0.6, 0.9)).unwrap();
    generate_trace(&gen, 20.0, find_reference_seed()).unwrap()
}

/// Matrix exponential by diagonal Pade(13) approximation with scaling and
/// squaring — a different series and a different evaluation scheme than the
/// library's Taylor-based routine and its closed-form block flows.
pub fn pade_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = m.nrows();
    let one_norm = (0..n)
        .map(|jc| (0..n).map(|i| m[(i, jc)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if one_norm > THETA13 {
        (one_norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let eye = DMatrix::<f64>::identity(n, n);
    let u = &a
        * (&a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9])
            + &a6 * B[7]
            + &a4 * B[5]
            + &a2 * B[3]
            + &eye * B[1]);
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8])
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &eye * B[0];
    let mut f = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Pade denominator must be nonsingular");
    for _ in 0..s {
        f = &f * &f;
    }
    f
}

/// Random mix of real and complex blocks with real parts in [-0.5, 1.2].
pub fn random_blocks(rng: &mut ChaCha8Rng) -> Vec<JordanBlock> {
    let n_blocks = rng.gen_range(1..=2);
    (0..n_blocks)
        .map(|_| {
            let c = rng.gen_range(-0.5..1.2);
            if rng.gen_bool(0.4) {
                JordanBlock::complex(c, rng.gen_range(0.5..3.0), 1).unwrap()
            } else {
                JordanBlock::real(c, rng.gen_range(1..=2)).unwrap()
            }
        })
        .collect()
}

/// Random well-conditioned similarity: an orthogonal factor times a mild
/// diagonal scaling.
pub fn random_similarity(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = raw.qr().q();
    let scale = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(0.5..2.0)));
    q * scale
}

pub fn random_structure(rng: &mut ChaCha8Rng) -> BlockStructure {
    let blocks = random_blocks(rng);
    let n: usize = blocks.iter().map(JordanBlock::dim).sum();
    let s = random_similarity(rng, n);
    BlockStructure::new(blocks, s).unwrap()
}

/// Random plant consistent with a random block structure, with identity input
/// matrix and the gain chosen so the ideal closed loop is `-mu I` (Hurwitz).
pub fn random_system(rng: &mut ChaCha8Rng) -> TransformedSystem {
    let structure = random_structure(rng);
    let n = structure.n_x();
    let a = structure.s_inv() * structure.real_jordan() * structure.s();
    let b = DMatrix::<f64>::identity(n, n);
    let mu = rng.gen_range(0.4..1.5);
    let k = -&a - DMatrix::<f64>::identity(n, n) * mu;
    let plant = PlantSpec::new(a, b, k).unwrap();
    build_transformed_system(plant, structure).unwrap()
}

/// Closed-form range oracle: at each successful attempt instant the range
/// vector must equal a single whole-span flow of the initial range, scaled
/// per element by the accumulated power of two of all bits delivered so far.
/// The event loop instead chains one flow per interval and one halving per
/// success, so the two paths share no intermediate arithmetic.
///
/// Only valid while no element parks at the range floor (keep the total bits
/// per element well under 900 for runs starting at order-one ranges).
pub fn check_range_oracle(
    result: &SimResult,
    structure: &BlockStructure,
    j0: &DVector<f64>,
    max_relative: f64,
) -> Result<(), String> {
    let n = j0.len();
    let mut cum_bits = vec![0i32; n];
    let mut success_rows = result.samples.iter().filter(|r| r.attempt && r.success);
    for rec in result.log.iter().filter(|r| r.success) {
        let row = success_rows
            .next()
            .ok_or("fewer successful sample rows than successful log records")?;
        if (row.t - rec.t).abs() > 1e-12 {
            return Err(format!(
                "sample row at t = {} does not match log record at t = {}",
                row.t, rec.t
            ));
        }
        for l in 0..n {
            cum_bits[l] += rec.element_bits[l] as i32;
            if cum_bits[l] > 900 {
                return Err(format!(
                    "oracle out of range: element {l} accumulated {} bits",
                    cum_bits[l]
                ));
            }
        }
        let flowed = structure.state_transition(rec.t) * j0;
        for l in 0..n {
            let expected = flowed[l] * 2f64.powi(-cum_bits[l]);
            let got = row.j[l];
            let denom = expected.abs().max(1e-300);
            if ((got - expected) / denom).abs() > max_relative {
                return Err(format!(
                    "range mismatch at t = {}, element {l}: event loop {got:e}, closed form {expected:e}",
                    rec.t
                ));
            }
        }
    }
    Ok(())
}

/// Brute-force admissibility check, implemented directly on the interval list
/// (no library window queries): every ordered pair from a dense grid of
/// window endpoints must satisfy both budget constraints.
pub fn dense_admissibility_violation(
    trace: &DoSTrace,
    params: &DoSParams,
    grid_step: f64,
) -> Option<(f64, f64, &'static str)> {
    let horizon = trace.horizon();
    let mut points: Vec<f64> = vec![0.0, horizon];
    for iv in trace.intervals() {
        points.push(iv.onset);
        points.push((iv.onset + iv.duration).min(horizon));
    }
    let mut t = grid_step;
    while t < horizon {
        points.push(t);
        t += grid_step;
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    let slack = 1e-7;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            let span = b - a;
            let n_onsets = trace
                .intervals()
                .iter()
                .filter(|iv| a <= iv.onset && iv.onset <= b)
                .count() as f64;
            if n_onsets > params.eta + span / params.tau_d + slack {
                return Some((a, b, "frequency"));
            }
            let jammed: f64 = trace
                .intervals()
                .iter()
                .map(|iv| (iv.end().min(b) - iv.onset.max(a)).max(0.0))
                .sum();
            if jammed > params.kappa + span / params.t_frac + slack {
                return Some((a, b, "duration"));
            }
        }
    }
    None
}
