//! Command-line surface of the `dosrate` binary: argument parsing, subcommand
//! dispatch, and artifact emission.
//!
//! Five subcommands cover the toolkit: `simulate` runs one closed loop and
//! writes trajectory/transmission CSVs plus a summary and a manifest; `bound`
//! prints per-block bit-rate thresholds and decay certificates; `sweep` maps
//! the (rate, attack-level) stability region to CSV with optional Monte-Carlo
//! verification; `dos-check` fits attack budgets to a recorded trace; and
//! `compare` runs the fixed-rate and time-varying protocols on the same
//! attack and reports the bit cost of each.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for runtime
//! invariant breaches (a dump file is written), 4 when the attack budget
//! leaves no stabilizing bit rate. Output directories resolve from `--out`,
//! then `$DOSRATE_OUT/<subcommand>`, then `./dosrate-out/<subcommand>`.
//!
//! Sweeps fan out cells in parallel; each run owns its full state, nothing is
//! written until the single-threaded merge at the end.

pub mod config;
pub mod output;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use crate::dos::{self, DoSParams, DoSTrace, TraceGenerator};
use crate::error::{Error, Result};
use crate::model::TransformedSystem;
use crate::rates::{self, RateAssignment};
use crate::sim::{self, Protocol, SimConfig, SimResult, Verdict};
use config::Overrides;
use output::{fmt_num, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "dosrate",
    version,
    about = "Closed-loop simulation and bit-rate bounds for control over jammed, rate-limited channels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop simulation and write its artifacts.
    Simulate(CommonArgs),
    /// Print per-block rate thresholds, margins, and decay certificates.
    Bound(BoundArgs),
    /// Map the (rate, attack-level) stability region to CSV.
    Sweep(CommonArgs),
    /// Fit attack budget parameters to a recorded trace CSV.
    DosCheck(DosCheckArgs),
    /// Run both protocols on the same attack and compare their bit cost.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to $DOSRATE_OUT/<subcommand> or
    /// ./dosrate-out/<subcommand>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the attack generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override integration substeps per attempt interval.
    #[arg(long)]
    pub substeps: Option<u32>,
    /// Override the simulation horizon (s).
    #[arg(long)]
    pub horizon: Option<f64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            substeps: self.substeps,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// When set, also write the machine-readable lines and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the attack generator seed (affects fitted-parameter inputs).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the horizon the attack trace is generated on (s).
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DosCheckArgs {
    /// Recorded attack trace (CSV with onset_s,duration_s columns).
    #[arg(long)]
    pub trace: PathBuf,
    /// Sampling interval for the gap/success bounds (s).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Run configuration supplying delta when --delta is absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Horizon the trace is defined on; defaults to the last interval end.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// When set, also write the fit report and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Dispatch a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Bound(args) => cmd_bound(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::DosCheck(args) => cmd_dos_check(&args),
        Command::Compare(args) => cmd_compare(&args),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Key-value pairs describing one run, for the summary file and stdout.
fn summarize(result: &SimResult, trace: &DoSTrace, delta: f64) -> Vec<(String, String)> {
    let mut pairs: Vec<(String, String)> = vec![
        ("verdict".into(), result.verdict.to_string()),
        ("attempts".into(), result.attempts.to_string()),
        ("successes".into(), result.successes.to_string()),
        ("bits_attempted".into(), result.bits_attempted.to_string()),
        ("bits_delivered".into(), result.bits_delivered.to_string()),
        ("decay_exponent".into(), fmt_num(result.decay_exponent)),
        ("decay_r2".into(), fmt_num(result.decay_r2)),
        ("j_norm_initial".into(), fmt_num(result.j_norm_initial)),
        ("j_norm_final".into(), fmt_num(result.j_norm_final)),
        ("sync_error_max".into(), fmt_num(result.sync_error_max)),
        ("x_scale_max".into(), fmt_num(result.x_scale_max)),
        (
            "periods_completed".into(),
            result.periods_completed.to_string(),
        ),
    ];
    if let Some(l) = result.lambda_max_log2 {
        pairs.push(("lambda_max_log2".into(), fmt_num(l)));
    }
    if let Some(t) = result.early_stop_t {
        pairs.push(("early_stop_t".into(), fmt_num(t)));
    }
    pairs.push(("dos_onsets".into(), trace.intervals().len().to_string()));
    if let Ok(xi) = trace.dos_duration(0.0, trace.horizon()) {
        pairs.push(("dos_time".into(), fmt_num(xi)));
    }
    if let Ok(avg) = dos::averaged_params(trace) {
        pairs.push(("fitted_eta".into(), fmt_num(avg.eta)));
        pairs.push(("fitted_kappa".into(), fmt_num(avg.kappa)));
        pairs.push(("fitted_tau_d".into(), fmt_num(avg.tau_d)));
        pairs.push(("fitted_t_frac".into(), fmt_num(avg.t_frac)));
        pairs.push(("dos_level".into(), fmt_num(avg.level(delta))));
    }
    for (i, w) in result.warnings.iter().enumerate() {
        pairs.push((format!("warning_{i}"), w.clone()));
    }
    pairs
}

fn warn_if_budget_exhausted(config: &SimConfig) {
    let params = config
        .dos_params
        .or_else(|| dos::averaged_params(&config.trace).ok());
    if let Some(p) = params {
        let level = p.level(config.delta);
        if level >= 1.0 {
            eprintln!(
                "warning: attack level {level:.4} >= 1; no bit rate is certifiable, simulating anyway"
            );
        }
    }
}

fn cmd_simulate(args: &CommonArgs) -> Result<()> {
    let (config, text) = config::load(&args.config)?;
    let digest = config::config_digest(&text)?;
    let ov = args.overrides();
    let sim_config = config.build_sim(&ov)?;
    let out_dir = output::resolve_out_dir(args.out.as_deref(), "simulate");

    warn_if_budget_exhausted(&sim_config);
    let result = match sim::run(&sim_config) {
        Ok(r) => r,
        Err(e) => {
            if e.exit_code() == 3 {
                let dump = output::write_dump(
                    &out_dir,
                    &format!("run aborted: {e}\nconfig digest: {digest}"),
                )?;
                eprintln!("dump written to {}", dump.display());
            }
            return Err(e);
        }
    };
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let mut manifest = RunManifest::new("simulate", digest, config.effective_seed(&ov));
    output::write_trajectory_csv(&out_dir.join("trajectory.csv"), &result.samples)?;
    output::write_transmissions_csv(&out_dir.join("transmissions.csv"), &result.log)?;
    let pairs = summarize(&result, &sim_config.trace, sim_config.delta);
    output::write_summary(&out_dir.join("summary.txt"), &pairs)?;
    manifest.outputs = vec![
        "trajectory.csv".into(),
        "transmissions.csv".into(),
        "summary.txt".into(),
    ];
    manifest.write(&out_dir.join("manifest.toml"))?;

    println!("wrote {}", out_dir.display());
    for (k, v) in &pairs {
        if matches!(
            k.as_str(),
            "verdict" | "attempts" | "successes" | "bits_attempted" | "bits_delivered"
                | "decay_exponent" | "dos_level"
        ) {
            println!("{k} = {v}");
        }
    }
    Ok(())
}

fn cmd_bound(args: &BoundArgs) -> Result<()> {
    let (config, text) = config::load(&args.config)?;
    let digest = config::config_digest(&text)?;
    let system = config.build_system()?;
    let structure = system.structure();
    let delta = config.sim.delta;
    let ov = Overrides {
        seed: args.seed,
        substeps: None,
        horizon: args.horizon,
    };
    let params = match config.assumed_params()? {
        Some(p) => p,
        None => dos::averaged_params(&config.build_trace(&ov)?)?,
    };

    let configured: Option<Vec<u32>> = if config.protocol.bits.is_empty() {
        None
    } else {
        match config.build_protocol(structure)? {
            Protocol::TimeInvariant(ra) => Some(ra.bits().to_vec()),
            Protocol::TimeVarying(cfg) => Some(cfg.max_assignment().bits().to_vec()),
            Protocol::Unquantized => None,
        }
    };

    // A level at or above 1 makes the thresholds undefined: refuse (exit 4).
    let mut lines: Vec<(String, String)> = vec![
        ("delta".into(), fmt_num(delta)),
        ("eta".into(), fmt_num(params.eta)),
        ("tau_d".into(), fmt_num(params.tau_d)),
        ("kappa".into(), fmt_num(params.kappa)),
        ("t_frac".into(), fmt_num(params.t_frac)),
        ("level".into(), fmt_num(params.level(delta))),
        ("budget".into(), fmt_num(params.budget(delta))),
    ];
    let mut chosen = Vec::with_capacity(structure.blocks().len());
    let mut rows = Vec::new();
    for (r, block) in structure.blocks().iter().enumerate() {
        let threshold = rates::min_rate_threshold(block.c, delta, &params)?;
        let suggested = rates::suggest_rate(threshold, config.bound.guard);
        let rate = configured.as_ref().map_or(suggested, |bits| bits[r]);
        let margin = rates::robustness_margin(rate, block.c, delta)?;
        chosen.push(rate);
        rows.push((r, block.c, threshold, suggested, rate, margin));
    }
    let assignment = RateAssignment::new(chosen)?;
    let cert = rates::decay_certificate(&assignment, structure, delta, &params)?;
    let valid = cert.is_valid(structure);

    println!(
        "attack budget: eta = {}, tau_d = {}, kappa = {}, t_frac = {} (level {} at delta {})",
        fmt_num(params.eta),
        fmt_num(params.tau_d),
        fmt_num(params.kappa),
        fmt_num(params.t_frac),
        fmt_num(params.level(delta)),
        fmt_num(delta),
    );
    println!(
        "{:>5} {:>10} {:>12} {:>10} {:>8} {:>10} {:>12} {:>12}",
        "block", "c", "threshold", "suggested", "rate", "margin", "alpha", "theta"
    );
    for &(r, c, threshold, suggested, rate, margin) in &rows {
        println!(
            "{r:>5} {c:>10.4} {threshold:>12.4} {suggested:>10} {rate:>8} {margin:>10.4} {:>12.4e} {:>12.4e}",
            cert.alpha[r], cert.theta[r]
        );
        lines.push((format!("block_{r}.c"), fmt_num(c)));
        lines.push((format!("block_{r}.threshold"), fmt_num(threshold)));
        lines.push((format!("block_{r}.suggested"), suggested.to_string()));
        lines.push((format!("block_{r}.rate"), rate.to_string()));
        lines.push((format!("block_{r}.margin"), fmt_num(margin)));
        lines.push((format!("block_{r}.alpha"), fmt_num(cert.alpha[r])));
        lines.push((format!("block_{r}.theta"), fmt_num(cert.theta[r])));
    }
    println!("certificate valid: {valid}");
    lines.push(("certificate_valid".into(), valid.to_string()));
    for (k, v) in &lines {
        println!("{k} = {v}");
    }

    if args.out.is_some() {
        let out_dir = output::resolve_out_dir(args.out.as_deref(), "bound");
        output::write_summary(&out_dir.join("bound.txt"), &lines)?;
        let mut manifest = RunManifest::new("bound", digest, config.effective_seed(&ov));
        manifest.outputs = vec!["bound.txt".into()];
        manifest.write(&out_dir.join("manifest.toml"))?;
    }
    Ok(())
}

/// Evenly spaced grid over `[lo, hi]` including both endpoints.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Synthetic budget parameters realizing a pure attack level: all load on the
/// duration constraint, none on frequency.
pub fn params_for_level(level: f64) -> Result<DoSParams> {
    if level <= 0.0 {
        Ok(DoSParams::reliable())
    } else {
        DoSParams::new(0.0, f64::INFINITY, 0.0, 1.0 / level)
    }
}

/// Analytic stability verdict at one grid cell: every block with `c >= 0`
/// needs its uniform rate strictly above the threshold; levels at or above 1
/// are never certifiable.
pub fn analytic_stable(
    system: &TransformedSystem,
    rate: u32,
    level: f64,
    delta: f64,
) -> Result<bool> {
    if level >= 1.0 {
        return Ok(false);
    }
    let params = params_for_level(level)?;
    for block in system.structure().blocks() {
        if block.c < 0.0 {
            continue;
        }
        let threshold = rates::min_rate_threshold(block.c, delta, &params)?;
        if f64::from(rate) <= threshold {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Generate the hardest attack trace that still respects the requested level
/// in the certificate's sense: the budget fitted over every window (with unit
/// frequency/duration offsets) must not exceed the level. Whole-horizon
/// averages are not enough — a trace can average below the level yet carry
/// local bursts far denser than any admissible attack, voiding the analytic
/// guarantee being tested against. Candidates are drawn from roughly one-
/// second cycles at decreasing duty, and the admissible one with the highest
/// fitted level wins; an empty trace is the fallback when even sparse
/// jamming overshoots (levels below the frequency term's share).
pub fn trace_for_level(level: f64, delta: f64, horizon: f64, base_seed: u64) -> Result<DoSTrace> {
    if level <= 0.0 {
        return DoSTrace::empty(horizon);
    }
    let duty0 = (level - delta).clamp(0.0, 0.95);
    let mut best: Option<(f64, DoSTrace)> = None;
    for trial in 0..32u64 {
        let duty = duty0 * (1.0 - trial as f64 / 48.0);
        let gen = TraceGenerator::new((0.9, 1.1), (duty, duty))?;
        let trace = dos::generate_trace(&gen, horizon, base_seed.wrapping_add(trial))?;
        let fitted = if trace.intervals().is_empty() {
            0.0
        } else {
            dos::fit_params(&trace, 1.0, 1.0)?.level(delta)
        };
        if fitted <= level && best.as_ref().is_none_or(|(b, _)| fitted > *b) {
            best = Some((fitted, trace));
        }
    }
    match best {
        Some((_, trace)) => Ok(trace),
        None => DoSTrace::empty(horizon),
    }
}

fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let (config, text) = config::load(&args.config)?;
    let digest = config::config_digest(&text)?;
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    if sweep.r_min > sweep.r_max {
        return Err(Error::Config("sweep.r_min exceeds sweep.r_max".into()));
    }
    if sweep.level_count == 0 || !(sweep.level_min <= sweep.level_max) {
        return Err(Error::Config("sweep level grid is empty or inverted".into()));
    }
    let rates_axis: Vec<u32> = (sweep.r_min..=sweep.r_max).collect();
    let levels_axis = linspace(sweep.level_min, sweep.level_max, sweep.level_count);
    let cells: Vec<(u32, f64)> = rates_axis
        .iter()
        .flat_map(|&r| levels_axis.iter().map(move |&l| (r, l)))
        .collect();
    if cells.len() > sweep.max_cells {
        return Err(Error::Config(format!(
            "grid has {} cells, more than sweep.max_cells = {}; shrink the grid or raise the cap",
            cells.len(),
            sweep.max_cells
        )));
    }

    let ov = args.overrides();
    let system = config.build_system()?;
    let delta = config.sim.delta;
    let horizon = sweep.horizon.unwrap_or(config.effective_horizon(&ov));
    let substeps = ov
        .substeps
        .or(sweep.substeps)
        .unwrap_or(config.sim.substeps);
    let x0 = DVector::from_vec(config.sim.x0.clone());
    let global_seed = args.seed.unwrap_or(0);

    let results: Vec<(u32, f64, bool, f64)> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(rate, level))| -> Result<(u32, f64, bool, f64)> {
            let stable = analytic_stable(&system, rate, level, delta)?;
            if !(stable && sweep.empirical) {
                return Ok((rate, level, stable, f64::NAN));
            }
            let cell_seed = global_seed
                .wrapping_add(idx as u64)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut converged = 0u64;
            for s in 0..sweep.seeds {
                let trace = trace_for_level(
                    level,
                    delta,
                    horizon,
                    cell_seed.wrapping_add(s.wrapping_mul(7919)),
                )?;
                let cell_config = SimConfig {
                    system: system.clone(),
                    trace,
                    protocol: Protocol::TimeInvariant(RateAssignment::uniform(
                        system.structure(),
                        rate,
                    )?),
                    delta,
                    horizon,
                    substeps,
                    x0: x0.clone(),
                    range_margin: config.sim.range_margin,
                    dos_params: None,
                };
                if sim::run(&cell_config)?.verdict == Verdict::Converged {
                    converged += 1;
                }
            }
            Ok((rate, level, stable, converged as f64 / sweep.seeds as f64))
        })
        .collect::<Result<Vec<_>>>()?;

    let out_dir = output::resolve_out_dir(args.out.as_deref(), "sweep");
    let mut csv = String::from("R,dos_level,analytic_stable,empirical_converged_fraction\n");
    for &(rate, level, stable, fraction) in &results {
        csv.push_str(&format!(
            "{rate},{},{},{}\n",
            fmt_num(level),
            u8::from(stable),
            fmt_num(fraction)
        ));
    }
    let csv_path = out_dir.join("sweep.csv");
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(&csv_path, csv.as_bytes())?;
    let mut manifest = RunManifest::new("sweep", digest, Some(global_seed));
    manifest.outputs = vec!["sweep.csv".into()];
    manifest.write(&out_dir.join("manifest.toml"))?;

    let stable_cells = results.iter().filter(|r| r.2).count();
    let min_fraction = results
        .iter()
        .filter(|r| r.2 && !r.3.is_nan())
        .map(|r| r.3)
        .fold(f64::INFINITY, f64::min);
    println!("wrote {}", csv_path.display());
    println!("cells = {}", results.len());
    println!("analytic_stable_cells = {stable_cells}");
    if min_fraction.is_finite() {
        println!("min_empirical_fraction_on_stable = {}", fmt_num(min_fraction));
    }
    Ok(())
}

fn cmd_dos_check(args: &DosCheckArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.trace)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.trace.display())))?;
    let trace = DoSTrace::from_csv(&text, args.horizon)?;
    let delta = match args.delta {
        Some(d) => d,
        None => match &args.config {
            Some(path) => config::load(path)?.0.sim.delta,
            None => {
                return Err(Error::Config(
                    "provide --delta or --config to set the sampling interval".into(),
                ))
            }
        },
    };

    let mut lines: Vec<(String, String)> = vec![
        ("trace".into(), args.trace.display().to_string()),
        ("horizon".into(), fmt_num(trace.horizon())),
        ("delta".into(), fmt_num(delta)),
        ("onsets".into(), trace.intervals().len().to_string()),
        (
            "jammed_time".into(),
            fmt_num(trace.dos_duration(0.0, trace.horizon())?),
        ),
    ];

    let avg = dos::averaged_params(&trace)?;
    lines.push(("averaged.tau_d".into(), fmt_num(avg.tau_d)));
    lines.push(("averaged.t_frac".into(), fmt_num(avg.t_frac)));
    lines.push(("averaged.level".into(), fmt_num(avg.level(delta))));
    let avg_q = dos::bound_q(&avg, delta).unwrap_or(f64::INFINITY);
    lines.push(("averaged.q".into(), fmt_num(avg_q)));

    println!(
        "trace {}: {} onsets, {} s jammed over {} s",
        args.trace.display(),
        trace.intervals().len(),
        fmt_num(trace.dos_duration(0.0, trace.horizon())?),
        fmt_num(trace.horizon()),
    );
    println!(
        "{:>6} {:>6} {:>10} {:>10} {:>10} {:>10} {:>14} {:>12}",
        "eta", "kappa", "tau_d", "t_frac", "level", "q", "min_successes", "admissible"
    );

    for &(eta, kappa) in &[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (5.0, 5.0), (8.0, 8.0)] {
        let tag = format!("fit_e{}_k{}", eta as u32, kappa as u32);
        match dos::fit_params(&trace, eta, kappa) {
            Ok(p) => {
                let q = dos::bound_q(&p, delta).unwrap_or(f64::INFINITY);
                let succ = dos::min_successes(&p, delta, 0.0, trace.horizon())?;
                let admissible = dos::check_admissible(&trace, &p, delta)?.is_none();
                println!(
                    "{eta:>6} {kappa:>6} {:>10.4} {:>10.4} {:>10.4} {q:>10.4} {succ:>14.2} {admissible:>12}",
                    p.tau_d,
                    p.t_frac,
                    p.level(delta),
                );
                lines.push((format!("{tag}.tau_d"), fmt_num(p.tau_d)));
                lines.push((format!("{tag}.t_frac"), fmt_num(p.t_frac)));
                lines.push((format!("{tag}.level"), fmt_num(p.level(delta))));
                lines.push((format!("{tag}.q"), fmt_num(q)));
                lines.push((format!("{tag}.min_successes"), fmt_num(succ)));
                lines.push((format!("{tag}.admissible"), admissible.to_string()));
            }
            Err(e) => {
                println!("{eta:>6} {kappa:>6} fit failed: {e}");
                lines.push((format!("{tag}.error"), e.to_string()));
            }
        }
    }
    println!(
        "averaged: tau_d = {}, t_frac = {}, level = {}, q = {}",
        fmt_num(avg.tau_d),
        fmt_num(avg.t_frac),
        fmt_num(avg.level(delta)),
        fmt_num(avg_q),
    );

    if args.out.is_some() {
        let out_dir = output::resolve_out_dir(args.out.as_deref(), "dos-check");
        output::write_summary(&out_dir.join("doscheck.txt"), &lines)?;
        let mut manifest = RunManifest::new("dos-check", sha256_hex(text.as_bytes()), None);
        manifest.outputs = vec!["doscheck.txt".into()];
        manifest.write(&out_dir.join("manifest.toml"))?;
    }
    Ok(())
}

fn cmd_compare(args: &CommonArgs) -> Result<()> {
    let (config, text) = config::load(&args.config)?;
    let digest = config::config_digest(&text)?;
    let ov = args.overrides();
    let sim_config = config.build_sim(&ov)?;
    warn_if_budget_exhausted(&sim_config);
    let cmp = sim::compare_protocols(&sim_config)?;

    let out_dir = output::resolve_out_dir(args.out.as_deref(), "compare");
    output::write_trajectory_csv(
        &out_dir.join("trajectory_invariant.csv"),
        &cmp.invariant.samples,
    )?;
    output::write_trajectory_csv(&out_dir.join("trajectory_varying.csv"), &cmp.varying.samples)?;
    output::write_transmissions_csv(
        &out_dir.join("transmissions_invariant.csv"),
        &cmp.invariant.log,
    )?;
    output::write_transmissions_csv(
        &out_dir.join("transmissions_varying.csv"),
        &cmp.varying.log,
    )?;

    let mut pairs: Vec<(String, String)> = Vec::new();
    for (side, result) in [("invariant", &cmp.invariant), ("varying", &cmp.varying)] {
        for (k, v) in summarize(result, &sim_config.trace, sim_config.delta) {
            pairs.push((format!("{side}.{k}"), v));
        }
    }
    let saved = cmp.invariant.bits_attempted as i64 - cmp.varying.bits_attempted as i64;
    pairs.push(("bits_saved".into(), saved.to_string()));
    output::write_summary(&out_dir.join("compare.txt"), &pairs)?;
    let mut manifest = RunManifest::new("compare", digest, config.effective_seed(&ov));
    manifest.outputs = vec![
        "trajectory_invariant.csv".into(),
        "trajectory_varying.csv".into(),
        "transmissions_invariant.csv".into(),
        "transmissions_varying.csv".into(),
        "compare.txt".into(),
    ];
    manifest.write(&out_dir.join("manifest.toml"))?;

    println!("wrote {}", out_dir.display());
    println!(
        "{:<22} {:>16} {:>16}",
        "metric", "time-invariant", "time-varying"
    );
    let fmt_row = |name: &str, a: String, b: String| {
        println!("{name:<22} {a:>16} {b:>16}");
    };
    fmt_row(
        "verdict",
        cmp.invariant.verdict.to_string(),
        cmp.varying.verdict.to_string(),
    );
    fmt_row(
        "attempts",
        cmp.invariant.attempts.to_string(),
        cmp.varying.attempts.to_string(),
    );
    fmt_row(
        "successes",
        cmp.invariant.successes.to_string(),
        cmp.varying.successes.to_string(),
    );
    fmt_row(
        "bits_attempted",
        cmp.invariant.bits_attempted.to_string(),
        cmp.varying.bits_attempted.to_string(),
    );
    fmt_row(
        "bits_delivered",
        cmp.invariant.bits_delivered.to_string(),
        cmp.varying.bits_delivered.to_string(),
    );
    fmt_row(
        "decay_exponent",
        format!("{:.4}", cmp.invariant.decay_exponent),
        format!("{:.4}", cmp.varying.decay_exponent),
    );
    fmt_row(
        "periods_completed",
        cmp.invariant.periods_completed.to_string(),
        cmp.varying.periods_completed.to_string(),
    );
    println!("bits saved by the time-varying protocol: {saved}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_transformed_system, BlockStructure, JordanBlock, PlantSpec};
    use nalgebra::DMatrix;

    fn chain_system() -> TransformedSystem {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::identity(2, 2);
        let k = DMatrix::from_row_slice(2, 2, &[-2.1961, -0.7545, -0.7545, -2.7146]);
        let plant = PlantSpec::new(a, b, k).unwrap();
        let structure =
            BlockStructure::new(vec![JordanBlock::real(1.0, 2).unwrap()], DMatrix::identity(2, 2))
                .unwrap();
        build_transformed_system(plant, structure).unwrap()
    }

    #[test]
    fn linspace_covers_endpoints() {
        let axis = linspace(0.0, 1.0, 5);
        assert_eq!(axis.len(), 5);
        assert_eq!(axis[0], 0.0);
        assert_eq!(axis[4], 1.0);
        assert_eq!(linspace(0.3, 0.9, 1), vec![0.3]);
    }

    #[test]
    fn analytic_region_has_the_expected_boundary() {
        let system = chain_system();
        // c = 1, delta = 0.1: threshold at level L is 0.1*log2(e)/(1-L).
        // L = 0.5 -> threshold 0.2885, so R = 1 is stable.
        assert!(analytic_stable(&system, 1, 0.5, 0.1).unwrap());
        // L = 0.9 -> threshold 1.4427, R = 1 unstable, R = 2 stable.
        assert!(!analytic_stable(&system, 1, 0.9, 0.1).unwrap());
        assert!(analytic_stable(&system, 2, 0.9, 0.1).unwrap());
        // At or past saturation nothing is certifiable.
        assert!(!analytic_stable(&system, 50, 1.0, 0.1).unwrap());
        // R = 0 never stabilizes an unstable block.
        assert!(!analytic_stable(&system, 0, 0.0, 0.1).unwrap());
    }

    #[test]
    fn level_targeted_traces_land_near_the_target() {
        for &level in &[0.3, 0.5, 0.7] {
            let trace = trace_for_level(level, 0.1, 40.0, 11).unwrap();
            let achieved = dos::averaged_params(&trace).unwrap().level(0.1);
            assert!(
                (achieved - level).abs() < 0.1,
                "level {level}: achieved {achieved}"
            );
        }
        let empty = trace_for_level(0.0, 0.1, 10.0, 3).unwrap();
        assert!(empty.intervals().is_empty());
    }
}
