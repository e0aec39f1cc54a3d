//! Denial-of-service attack traces, admissibility against the frequency and
//! duration assumptions, and the deterministic bounds they imply for the
//! sequence of successful transmissions.
//!
//! An attack trace is a finite ordered list of intervals `{h} ∪ [h, h+tau)`:
//! closed at the onset (a zero-duration pulse still kills the transmission at
//! exactly `h`), right-open at the end. Admissibility is measured against two
//! budgets over every observation window `[a, b]`:
//!
//! * frequency: `n(a,b) <= eta + (b-a)/tau_d` — onsets per unit time,
//! * duration: `|Xi(a,b)| <= kappa + (b-a)/t_frac` — jammed time per unit time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One attack interval: jammed on `{onset} ∪ [onset, onset+duration)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoSInterval {
    pub onset: f64,
    pub duration: f64,
}

impl DoSInterval {
    /// End of the interval (exclusive).
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// An ordered, non-overlapping attack trace over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoSTrace {
    intervals: Vec<DoSInterval>,
    horizon: f64,
    /// Cumulative durations: prefix[i] = sum of durations of intervals < i.
    prefix: Vec<f64>,
}

impl DoSTrace {
    pub fn new(intervals: Vec<DoSInterval>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParam(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let mut prev_end: Option<f64> = None;
        for (i, iv) in intervals.iter().enumerate() {
            if !iv.onset.is_finite() || !iv.duration.is_finite() || iv.duration < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "interval {i} has invalid onset/duration ({}, {})",
                    iv.onset, iv.duration
                )));
            }
            if iv.onset < 0.0 || iv.end() > horizon {
                return Err(Error::InvalidParam(format!(
                    "interval {i} ([{}, {})) leaves [0, {horizon}]",
                    iv.onset,
                    iv.end()
                )));
            }
            if let Some(pe) = prev_end {
                if !(iv.onset > pe) {
                    return Err(Error::InvalidParam(format!(
                        "interval {i} onset {} does not start strictly after the \
                         previous interval's end {pe}",
                        iv.onset
                    )));
                }
            }
            prev_end = Some(iv.end());
        }
        let mut prefix = Vec::with_capacity(intervals.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for iv in &intervals {
            acc += iv.duration;
            prefix.push(acc);
        }
        Ok(Self {
            intervals,
            horizon,
            prefix,
        })
    }

    /// Trace with no attacks.
    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn intervals(&self) -> &[DoSInterval] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Is the network jammed at instant `t`? The onset itself counts; the
    /// right endpoint does not.
    pub fn is_jammed(&self, t: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.onset <= t);
        if idx == 0 {
            return false;
        }
        let iv = &self.intervals[idx - 1];
        t == iv.onset || t < iv.end()
    }

    /// Number of attack onsets inside the closed window `[a, b]`.
    pub fn count_transitions(&self, a: f64, b: f64) -> Result<usize> {
        self.validate_window(a, b)?;
        let lo = self.intervals.partition_point(|iv| iv.onset < a);
        let hi = self.intervals.partition_point(|iv| iv.onset <= b);
        Ok(hi - lo)
    }

    /// Total jammed time inside `[a, b]` (Lebesgue measure of the clipped
    /// union; pulses contribute nothing).
    pub fn dos_duration(&self, a: f64, b: f64) -> Result<f64> {
        self.validate_window(a, b)?;
        // Candidate intervals: end > a and onset < b. Ends are strictly
        // increasing because intervals are disjoint and ordered.
        let lo = self.intervals.partition_point(|iv| iv.end() <= a);
        let hi = self.intervals.partition_point(|iv| iv.onset < b);
        if lo >= hi {
            return Ok(0.0);
        }
        let mut total = self.prefix[hi] - self.prefix[lo];
        // Only the first candidate can be cut on the left, only the last on
        // the right (all other onsets/ends lie inside (a, b)).
        let first = &self.intervals[lo];
        if first.onset < a {
            total -= (a - first.onset).min(first.duration);
        }
        let last = &self.intervals[hi - 1];
        if last.end() > b {
            total -= (last.end() - b).min(last.duration);
        }
        Ok(total.max(0.0))
    }

    fn validate_window(&self, a: f64, b: f64) -> Result<()> {
        if !(0.0 <= a && a <= b && b <= self.horizon) {
            return Err(Error::InvalidParam(format!(
                "window [{a}, {b}] must satisfy 0 <= a <= b <= horizon ({})",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Serialize as CSV with a header row (`onset_s,duration_s`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("onset_s,duration_s\n");
        for iv in &self.intervals {
            out.push_str(&format!("{},{}\n", iv.onset, iv.duration));
        }
        out
    }

    /// Parse the CSV produced by [`DoSTrace::to_csv`]. When `horizon` is not
    /// supplied, the end of the last interval is used (the trace must then be
    /// nonempty).
    pub fn from_csv(text: &str, horizon: Option<f64>) -> Result<Self> {
        let mut intervals = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("onset")) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| {
                    Error::Config(format!("trace CSV line {} is missing a field", lineno + 1))
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| {
                    Error::Config(format!("trace CSV line {}: {e}", lineno + 1))
                })
            };
            let onset = parse(parts.next())?;
            let duration = parse(parts.next())?;
            intervals.push(DoSInterval { onset, duration });
        }
        let horizon = match horizon {
            Some(h) => h,
            None => intervals
                .last()
                .map(|iv| iv.end())
                .ok_or_else(|| Error::Config("empty trace CSV needs an explicit horizon".into()))?,
        };
        Self::new(intervals, horizon)
    }
}

/// Attack budget parameters: frequency `(eta, tau_d)` and duration
/// `(kappa, t_frac)`. Infinite `tau_d`/`t_frac` encode the reliable-network
/// limit (that budget never binds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoSParams {
    /// Chattering allowance on the onset count (must be >= 1 for any trace
    /// with at least one onset, since a zero-length window at an onset already
    /// counts one transition).
    pub eta: f64,
    /// Average dwell time between onsets (s, > 0; may be infinite).
    pub tau_d: f64,
    /// Additive allowance on jammed time (s, >= 0).
    pub kappa: f64,
    /// Duration-fraction denominator: at most `1/t_frac` of any long window
    /// may be jammed (> 1; may be infinite).
    pub t_frac: f64,
}

impl DoSParams {
    pub fn new(eta: f64, tau_d: f64, kappa: f64, t_frac: f64) -> Result<Self> {
        let p = Self {
            eta,
            tau_d,
            kappa,
            t_frac,
        };
        p.validate()?;
        Ok(p)
    }

    /// No-attack sentinel parameters.
    pub fn reliable() -> Self {
        Self {
            eta: 0.0,
            tau_d: f64::INFINITY,
            kappa: 0.0,
            t_frac: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParam(format!(
                "eta must be finite and >= 0, got {}",
                self.eta
            )));
        }
        if !(self.tau_d > 0.0) {
            return Err(Error::InvalidParam(format!(
                "tau_d must be > 0, got {}",
                self.tau_d
            )));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParam(format!(
                "kappa must be finite and >= 0, got {}",
                self.kappa
            )));
        }
        if !(self.t_frac > 1.0) {
            return Err(Error::InvalidParam(format!(
                "t_frac must be > 1, got {}",
                self.t_frac
            )));
        }
        Ok(())
    }

    /// Combined attack level `1/T + delta/tau_d` for a sampling interval.
    /// Stabilizability requires this to stay below 1.
    pub fn level(&self, delta: f64) -> f64 {
        1.0 / self.t_frac + delta / self.tau_d
    }

    /// Remaining budget `1 - level(delta)`.
    pub fn budget(&self, delta: f64) -> f64 {
        1.0 - self.level(delta)
    }
}

/// Which admissibility constraint a window violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Frequency,
    Duration,
}

/// First window found violating an admissibility constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub window: (f64, f64),
    pub kind: ConstraintKind,
    pub observed: f64,
    pub allowed: f64,
}

/// Relative slack used in admissibility comparisons so parameters fitted at
/// equality still pass.
const ADMISSIBLE_SLACK: f64 = 1e-9;

/// Check both attack-budget assumptions over every ordered pair of distinct
/// points from the event-augmented grid (interval endpoints, 0, horizon, and
/// multiples of `grid`). Returns the first violating window in scan order, or
/// `None` when admissible.
pub fn check_admissible(
    trace: &DoSTrace,
    params: &DoSParams,
    grid: f64,
) -> Result<Option<Violation>> {
    params.validate()?;
    if !(grid > 0.0) {
        return Err(Error::InvalidParam(format!(
            "grid step must be positive, got {grid}"
        )));
    }
    let points = event_grid(trace, grid);
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            let len = b - a;
            let n = trace.count_transitions(a, b)? as f64;
            let n_allowed = params.eta + len / params.tau_d;
            if n > n_allowed + ADMISSIBLE_SLACK * n_allowed.abs().max(1.0) {
                return Ok(Some(Violation {
                    window: (a, b),
                    kind: ConstraintKind::Frequency,
                    observed: n,
                    allowed: n_allowed,
                }));
            }
            let xi = trace.dos_duration(a, b)?;
            let xi_allowed = params.kappa + len / params.t_frac;
            if xi > xi_allowed + ADMISSIBLE_SLACK * xi_allowed.abs().max(1.0) {
                return Ok(Some(Violation {
                    window: (a, b),
                    kind: ConstraintKind::Duration,
                    observed: xi,
                    allowed: xi_allowed,
                }));
            }
        }
    }
    Ok(None)
}

fn event_grid(trace: &DoSTrace, grid: f64) -> Vec<f64> {
    let mut points = vec![0.0, trace.horizon()];
    for iv in trace.intervals() {
        points.push(iv.onset);
        if iv.duration > 0.0 {
            points.push(iv.end());
        }
    }
    let mut k = 1u64;
    loop {
        let t = k as f64 * grid;
        if t >= trace.horizon() {
            break;
        }
        points.push(t);
        k += 1;
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// Fit the binding `(tau_d, t_frac)` for fixed `(eta, kappa)`: the largest
/// rates such that both assumptions hold with equality on some window. The
/// frequency supremum is attained on onset pairs, the duration supremum on
/// interval-start x interval-end pairs; both families dominate every
/// positive-length window, so the result passes [`check_admissible`] for any
/// grid.
///
/// Degenerate inputs have no finite fit and are rejected: any onset forces
/// `eta >= 1` (a zero-length window at the onset already counts a transition)
/// and any positive-duration interval forces `kappa > 0` (windows inside the
/// interval are fully jammed).
pub fn fit_params(trace: &DoSTrace, eta: f64, kappa: f64) -> Result<DoSParams> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParam(format!("eta must be >= 0, got {eta}")));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParam(format!(
            "kappa must be >= 0, got {kappa}"
        )));
    }
    let ivs = trace.intervals();
    if ivs.is_empty() {
        return Ok(DoSParams {
            eta,
            tau_d: f64::INFINITY,
            kappa,
            t_frac: f64::INFINITY,
        });
    }
    if eta < 1.0 {
        return Err(Error::InvalidParam(format!(
            "no finite dwell time fits eta = {eta}: a zero-length window at an onset \
             already counts one transition, so eta must be at least 1"
        )));
    }

    // Frequency: max over onset pairs of (count - eta) / span.
    let mut max_rate = f64::NEG_INFINITY;
    for i in 0..ivs.len() {
        for j in (i + 1)..ivs.len() {
            let count = (j - i + 1) as f64;
            let span = ivs[j].onset - ivs[i].onset;
            max_rate = max_rate.max((count - eta) / span);
        }
    }
    let tau_d = if max_rate > 0.0 {
        1.0 / max_rate
    } else {
        f64::INFINITY
    };

    // Duration: max over interval-start x interval-end pairs of
    // (|Xi| - kappa) / span.
    let has_positive = ivs.iter().any(|iv| iv.duration > 0.0);
    let t_frac = if !has_positive {
        f64::INFINITY
    } else if kappa <= 0.0 {
        return Err(Error::InvalidParam(
            "no finite duration fraction fits kappa = 0: windows inside an attack \
             interval are fully jammed, so kappa must be positive"
                .into(),
        ));
    } else {
        let mut max_ratio = f64::NEG_INFINITY;
        for i in 0..ivs.len() {
            for j in i..ivs.len() {
                let span = ivs[j].end() - ivs[i].onset;
                if span <= 0.0 {
                    continue;
                }
                let xi = trace.dos_duration(ivs[i].onset, ivs[j].end())?;
                max_ratio = max_ratio.max((xi - kappa) / span);
            }
        }
        if max_ratio > 0.0 {
            1.0 / max_ratio
        } else {
            f64::INFINITY
        }
    };

    DoSParams::new(eta, tau_d, kappa, t_frac)
}

/// Descriptive whole-horizon averages: `tau_d` is the mean gap between
/// consecutive onsets, `1/t_frac` the jammed fraction of the horizon, with
/// `eta = kappa = 0`. These reproduce the "averaged over the horizon"
/// reporting convention; they are summary statistics, not a certified fit —
/// use [`fit_params`] for parameters that are guaranteed admissible.
pub fn averaged_params(trace: &DoSTrace) -> Result<DoSParams> {
    let ivs = trace.intervals();
    let tau_d = if ivs.len() >= 2 {
        (ivs[ivs.len() - 1].onset - ivs[0].onset) / (ivs.len() - 1) as f64
    } else {
        f64::INFINITY
    };
    let xi = trace.dos_duration(0.0, trace.horizon())?;
    let t_frac = if xi > 0.0 {
        trace.horizon() / xi
    } else {
        f64::INFINITY
    };
    Ok(DoSParams {
        eta: 0.0,
        tau_d,
        kappa: 0.0,
        t_frac,
    })
}

/// Worst-case gap bound for successful transmissions: the first success
/// happens by `Q`, and consecutive successes are never more than `Q + delta`
/// apart. Requires the attack level to stay below 1.
pub fn bound_q(params: &DoSParams, delta: f64) -> Result<f64> {
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
    Ok((params.kappa + params.eta * delta) / budget)
}

/// Lower bound (real-valued) on the number of successes in `[z0, zm)` for any
/// admissible trace.
pub fn min_successes(params: &DoSParams, delta: f64, z0: f64, zm: f64) -> Result<f64> {
    params.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if zm < z0 {
        return Err(Error::InvalidParam(format!(
            "window end {zm} precedes start {z0}"
        )));
    }
    let budget = params.budget(delta);
    Ok((budget / delta) * (zm - z0) - (params.kappa + params.eta * delta) / delta)
}

/// Attempt instants `k*delta <= horizon` (rounding-robust at the endpoint)
/// that escape every attack interval.
///
/// Note the inclusive endpoint convention here: this enumerates all sampling
/// instants inside the closed observation window. The simulator's attempt
/// schedule stops strictly before its horizon instead (an attempt at the final
/// instant would have nothing left to control).
pub fn successful_instants(trace: &DoSTrace, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParam(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }
    let k_max = last_multiple_at_or_below(trace.horizon(), delta);
    let mut out = Vec::new();
    for k in 0..=k_max {
        let t = k as f64 * delta;
        if !trace.is_jammed(t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Largest k with k*delta <= limit, robust to the quotient sitting one ulp
/// under an integer.
pub(crate) fn last_multiple_at_or_below(limit: f64, delta: f64) -> u64 {
    let q = limit / delta;
    let r = q.round();
    if (r * delta - limit).abs() <= 1e-9 * limit.max(delta) {
        r as u64
    } else {
        q.floor() as u64
    }
}

/// Number of multiples of `delta` strictly below `limit` (the simulator's
/// attempt count), robust at exact multiples.
pub(crate) fn multiples_strictly_below(limit: f64, delta: f64) -> u64 {
    let q = limit / delta;
    let r = q.round();
    if (r * delta - limit).abs() <= 1e-9 * limit.max(delta) {
        r as u64
    } else {
        q.ceil() as u64
    }
}

/// Uniform ranges for the attack generator: each cycle draws a period and a
/// duty fraction; the cycle starts jammed for `duty * period` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceGenerator {
    pub period: (f64, f64),
    pub duty: (f64, f64),
}

impl TraceGenerator {
    pub fn new(period: (f64, f64), duty: (f64, f64)) -> Result<Self> {
        let g = Self { period, duty };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let (plo, phi) = self.period;
        let (dlo, dhi) = self.duty;
        if !(plo > 0.0 && phi >= plo && phi.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "period range ({plo}, {phi}) must satisfy 0 < lo <= hi < inf"
            )));
        }
        if !(dlo >= 0.0 && dhi >= dlo && dhi <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "duty range ({dlo}, {dhi}) must satisfy 0 <= lo <= hi <= 1"
            )));
        }
        Ok(())
    }
}

fn sample_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Generate a random attack trace: cycles of random period, each jammed for
/// `duty * period` from the cycle start. Touching intervals merge (duty 1 over
/// several cycles yields one long interval); durations clip at the horizon.
/// Deterministic for a fixed seed.
pub fn generate_trace(gen: &TraceGenerator, horizon: f64, seed: u64) -> Result<DoSTrace> {
    gen.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParam(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut intervals: Vec<DoSInterval> = Vec::new();
    let mut t = 0.0;
    while t < horizon {
        let period = sample_range(&mut rng, gen.period.0, gen.period.1);
        let duty = sample_range(&mut rng, gen.duty.0, gen.duty.1);
        let end = (t + duty * period).min(horizon);
        let duration = end - t;
        if duration > 1e-12 {
            match intervals.last_mut() {
                Some(last) if t <= last.end() + 1e-12 => {
                    last.duration = end - last.onset;
                }
                _ => intervals.push(DoSInterval {
                    onset: t,
                    duration,
                }),
            }
        }
        t += period;
    }
    DoSTrace::new(intervals, horizon)
}
