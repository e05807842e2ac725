//! Upper and lower envelopes with their validity times, the sandwich check
//! on solver runs and the convergence experiment.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ErosionModel;
use crate::numerics::{bisect, grid_golden_min, simpson};
use crate::profile::{self, d_hk, d_ss, max_h2_over_hp, min_h_prime, phi_unchecked, psi_unchecked, z_adm_sat, z_stat_sat};
use crate::tracking::{init_state, regression_slope, run, MarkerField, RunResult, SolverConfig, WaveTable};
use crate::wave::{classify, construct, Classification, StationaryWave, WaveType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    UpperStage1,
    UpperStage2,
    LowerStage1,
    LowerStage2,
}

/// A bounding curve of the form: 1 at `-D`, 0 on `(-D, zero_until]`, then
/// `phi(q + shift)`, optionally 1 on `(-eps, 0]`.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub eps: f64,
    pub total_drop: f64,
    /// Switch point: `q_hat` for the stage-2 curves, `q1` for the lower stage-1 curve.
    pub switch: f64,
    pub zero_until: f64,
    pub shift: f64,
    pub plateau: bool,
    /// Time after which the bound is claimed to hold.
    pub validity_time: f64,
    pub timing: Timing,
    /// Right end of the initial zero set, if any.
    pub initial_front: Option<f64>,
    pub notes: Vec<String>,
}

/// Components of a validity time.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timing {
    /// Merge-time bound of the first stage.
    pub stage1: f64,
    /// Same bound with the square of `1 - zeta_o`, the power carried by the characteristic speed.
    pub stage1_squared: f64,
    /// Front ODE time of the second stage.
    pub stage2_ode: f64,
    /// Closed-form bound of the second stage.
    pub stage2_bound: f64,
    /// `v_eps` entering the closed bound.
    pub v_eps: f64,
    pub zeta_o: f64,
}

impl Envelope {
    pub fn value(&self, model: &ErosionModel, q: f64) -> f64 {
        let d = self.total_drop;
        if q <= -d {
            return 1.0;
        }
        if q <= self.zero_until {
            return 0.0;
        }
        if self.plateau && q > -self.eps {
            return 1.0;
        }
        phi_unchecked(model, (q + self.shift).min(0.0))
    }

    pub fn is_upper(&self) -> bool {
        matches!(self.kind, EnvelopeKind::UpperStage1 | EnvelopeKind::UpperStage2)
    }

    /// `L1` distance to the stationary wave.
    pub fn l1_to_wave(&self, model: &ErosionModel, wave: &StationaryWave) -> f64 {
        let d = self.total_drop;
        let table = WaveTable::new(model, wave, 20001);
        let mut br = vec![-d, 0.0, self.zero_until.max(-d), wave.smooth_left, (-self.eps).max(-d)];
        br.push((-d_hk(model) - self.shift).clamp(-d, 0.0));
        br.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        br.dedup();
        br.windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let inset = 1e-12 * (b - a);
                let n = (((b - a) / d * 4000.0).ceil() as usize).max(2);
                simpson(|q| (self.value(model, q.clamp(a + inset, b - inset)) - table.value(q.clamp(a + inset, b - inset))).abs(), a, b, n)
            })
            .sum()
    }
}

/// `T_zeta_o = D / ((1 - zeta_o) min h')`.
pub fn merge_time(model: &ErosionModel, total_drop: f64, zeta_o: f64) -> f64 {
    total_drop / ((1.0 - zeta_o) * min_h_prime(model))
}

fn merge_time_squared(model: &ErosionModel, total_drop: f64, zeta_o: f64) -> f64 {
    total_drop / ((1.0 - zeta_o).powi(2) * min_h_prime(model))
}

/// `C_bar = max(h^2/h') / kappa`; both envelope constants are `2 C_bar`.
pub fn c_bar(model: &ErosionModel, total_drop: f64) -> f64 {
    max_h2_over_hp(model) / profile::kappa(model, total_drop)
}

/// Stage-1 upper envelope `phi+`.
pub fn upper_envelope<S: Fn(f64) -> f64>(model: &ErosionModel, total_drop: f64, eps: f64, zeta0: S) -> Result<Envelope> {
    let d = total_drop;
    if !(eps > 0.0) || eps >= d {
        return Err(Error::OutOfDomain { name: "eps", value: eps, lo: 0.0, hi: d });
    }
    let zeta_o = zeta0(-eps);
    let below_phi = (1..200).all(|k| {
        let q = -eps * k as f64 / 200.0;
        zeta0(q) <= phi_unchecked(model, q) + 1e-12
    });
    let mut notes = Vec::new();
    let (shift, plateau) = if below_phi {
        notes.push("data below phi next to the boundary; phi itself is the envelope".into());
        (0.0, false)
    } else {
        (eps, true)
    };
    let timing = Timing {
        stage1: merge_time(model, d, zeta_o),
        stage1_squared: merge_time_squared(model, d, zeta_o),
        zeta_o,
        ..Default::default()
    };
    Ok(Envelope {
        kind: EnvelopeKind::UpperStage1,
        eps,
        total_drop: d,
        switch: -d,
        zero_until: -d,
        shift,
        plateau,
        validity_time: timing.stage1,
        timing,
        initial_front: initial_front(&zeta0, d),
        notes,
    })
}

fn initial_front<S: Fn(f64) -> f64>(zeta0: &S, d: f64) -> Option<f64> {
    let eps = 1e-10;
    let probe = -d + 1e-9 * d;
    if zeta0(probe) >= eps {
        return None;
    }
    if zeta0(-1e-12) < eps {
        return Some(0.0);
    }
    bisect(|q| if zeta0(q) < eps { -1.0 } else { 1.0 }, probe, 0.0, 0.0).ok()
}

/// Minimum of `f` on `[a, b]`: 4001-point scan plus golden refinement.
fn grid_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return f(a);
    }
    grid_golden_min(f, a, b, 4001, 1e-8).1
}

/// Time for a front moving with `speed(q) > 0` to travel from `a` to `b > a`.
fn travel_time<F: Fn(f64) -> f64>(speed: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = 8000;
    let step = (b - a) / n as f64;
    // midpoint rule: the integrand vanishes where the front starts from a zero state
    let mut t = 0.0;
    for k in 0..n {
        let v = speed(a + (k as f64 + 0.5) * step);
        if !(v > 0.0) {
            return f64::INFINITY;
        }
        t += step / v;
    }
    t
}

/// Stage-2 upper envelope `Z+`, for drops beyond `D_hk`.
pub fn upper_stage2(model: &ErosionModel, total_drop: f64, eps: f64, stage1: &Envelope) -> Result<Envelope> {
    let d = total_drop;
    let dhk = d_hk(model);
    if !(d > dhk) {
        return Err(Error::Regime(format!("upper stage 2 needs D > D_hk = {dhk}, got {d}")));
    }
    let wave = construct(model, d)?;
    let q_plus = wave.shock_right.expect("types 3 and 4 carry a shock");
    let c1 = 2.0 * c_bar(model, d);
    let q_hat = q_plus - c1 * eps;
    let mut notes = stage1.notes.clone();
    let phi_plus = |q: f64| stage1.value(model, q.max(-d + 1e-15));

    let target = q_hat.max(-d);
    let mut start = (-dhk - eps).max(-d);
    if start > -dhk - eps {
        notes.push(format!("front ODE start clamped to -D = {start}"));
    }
    if let Some(f) = stage1.initial_front {
        if f > start {
            notes.push(format!("front ODE starts at the initial shock front {f} instead of {start}"));
            start = f;
        }
    }
    // v_eps over the stretch the front has to cover; a single point if empty
    let gap = |q: f64| z_stat_sat(model, q + d) - phi_plus(q);
    let v_eps = grid_min(gap, start.min(target), target);
    if start >= target {
        notes.push("front already right of q_hat".into());
        let timing = Timing { v_eps, ..stage1.timing };
        return Ok(Envelope {
            kind: EnvelopeKind::UpperStage2,
            switch: q_hat,
            zero_until: target,
            validity_time: timing.stage1,
            timing,
            notes,
            ..stage1.clone()
        });
    }
    // F >= 1, so F = 1 gives the slowest admissible front
    let speed = |q: f64| {
        let z = phi_plus(q);
        if z <= 0.0 {
            return f64::INFINITY;
        }
        (1.0 - z) / z * (psi_unchecked(model, q + d) - model.h(z))
    };
    let stage2_ode = travel_time(speed, start, target);
    let factor = if wave.wave_type == WaveType::Type4 {
        notes.push("type 4: closed bound uses 1 - phi+(q_hat) since phi(q+) = 1".into());
        1.0 - phi_plus(target)
    } else {
        1.0 - phi_unchecked(model, q_plus)
    };
    let stage2_bound = if v_eps > 0.0 && factor > 0.0 { (dhk + eps) / (factor * min_h_prime(model) * v_eps) } else { f64::INFINITY };
    let timing = Timing { stage2_ode, stage2_bound, v_eps, ..stage1.timing };
    Ok(Envelope {
        kind: EnvelopeKind::UpperStage2,
        eps,
        total_drop: d,
        switch: q_hat,
        zero_until: q_hat.max(-d),
        shift: stage1.shift,
        plateau: stage1.plateau,
        validity_time: timing.stage1 + stage2_ode.max(stage2_bound),
        timing,
        initial_front: stage1.initial_front,
        notes,
    })
}

/// Rightmost crossing of `phi(q - eps)` and `z_adm(q + D)` in `(-D, 0]`;
/// `-D` when the shifted profile stays above, `0` when it ends below.
pub fn lower_switch(model: &ErosionModel, total_drop: f64, eps: f64) -> f64 {
    let d = total_drop;
    let g = |q: f64| phi_unchecked(model, q - eps) - z_adm_sat(model, q + d);
    let mut right = g(0.0);
    if right <= 0.0 {
        return 0.0;
    }
    let n = 20000;
    let step = d / n as f64;
    for k in (1..n).rev() {
        let q = -d + step * k as f64;
        let v = g(q);
        if v <= 0.0 && right > 0.0 {
            return bisect(g, q, q + step, 1e-14).unwrap_or(q);
        }
        right = v;
    }
    -d
}

/// Stage-1 lower envelope `phi-`, for drops below `D_ss`.
pub fn lower_envelope<S: Fn(f64) -> f64>(model: &ErosionModel, total_drop: f64, eps: f64, zeta0: S) -> Result<Envelope> {
    let d = total_drop;
    if !(d < d_ss(model)) {
        return Err(Error::Regime(format!("lower envelope needs D < D_ss, got {d}")));
    }
    if !(eps > 0.0) || eps >= d {
        return Err(Error::OutOfDomain { name: "eps", value: eps, lo: 0.0, hi: d });
    }
    let q1 = lower_switch(model, d, eps);
    let mut notes = Vec::new();
    if q1 == 0.0 {
        notes.push("phi(-eps) below z_adm(D); eps too large for a nontrivial bound".into());
    }
    let mut env = Envelope {
        kind: EnvelopeKind::LowerStage1,
        eps,
        total_drop: d,
        switch: q1,
        zero_until: q1,
        shift: -eps,
        plateau: false,
        validity_time: 0.0,
        timing: Timing::default(),
        initial_front: initial_front(&zeta0, d),
        notes,
    };
    // largest interval [q_o, 0] on which the data already lies above phi-
    let n = 4000;
    let mut q_o = 0.0;
    for k in 1..=n {
        let q = -d * k as f64 / n as f64;
        if q <= -d || zeta0(q) < env.value(model, q) - 1e-12 {
            break;
        }
        q_o = q;
    }
    if q_o == 0.0 {
        q_o = -d / n as f64;
        env.notes.push("data not above phi- on any grid interval next to the boundary".into());
    }
    let zeta_o = zeta0(q_o);
    env.timing = Timing {
        stage1: merge_time(model, d, zeta_o),
        stage1_squared: merge_time_squared(model, d, zeta_o),
        zeta_o,
        ..Default::default()
    };
    env.validity_time = env.timing.stage1;
    Ok(env)
}

/// Stage-2 lower envelope `Z-`.
pub fn lower_stage2(model: &ErosionModel, total_drop: f64, eps: f64, stage1: &Envelope) -> Result<Envelope> {
    let d = total_drop;
    if !(d < d_ss(model)) {
        return Err(Error::Regime(format!("lower stage 2 needs D < D_ss, got {d}")));
    }
    let wave = construct(model, d)?;
    let q1 = stage1.switch;
    let mut notes = stage1.notes.clone();
    let q_plus = match wave.wave_type {
        WaveType::Type3 => wave.shock_right.expect("type 3 carries a shock"),
        _ => -d,
    };
    let c2 = 2.0 * c_bar(model, d);
    let q_hat = q_plus + c2 * eps;
    let zero_until = if wave.wave_type == WaveType::Type1 { -d } else { q_hat.min(0.0) };
    if q1 <= -d {
        notes.push("phi(q - eps) stays above z_adm; no front to control".into());
        return Ok(Envelope {
            kind: EnvelopeKind::LowerStage2,
            switch: q_hat,
            validity_time: stage1.validity_time,
            notes,
            ..stage1.clone()
        });
    }
    let low = |q: f64| phi_unchecked(model, q - eps);
    let speed_left = |q: f64| {
        let z = low(q);
        if z <= 0.0 {
            return f64::INFINITY;
        }
        -(1.0 - z) / z * (psi_unchecked(model, q + d) - model.h(z))
    };
    // type 1: the front merges into -D
    let target = if wave.wave_type == WaveType::Type1 { -d } else { q_hat.max(-d) };
    if target >= q1 {
        notes.push("q_hat right of q1; no front travel needed".into());
        let timing = Timing { v_eps: f64::NAN, ..stage1.timing };
        return Ok(Envelope {
            kind: EnvelopeKind::LowerStage2,
            switch: q_hat,
            zero_until,
            validity_time: timing.stage1,
            timing,
            notes,
            ..stage1.clone()
        });
    }
    let stage2_ode = travel_time(|q| speed_left(target + q1 - q), target, q1);
    let v_eps = grid_min(|q| low(q) - z_stat_sat(model, q + d), q_hat.max(-d), q1);
    let stage2_bound = if v_eps > 0.0 {
        (d_hk(model).min(d) + eps) / ((1.0 - phi_unchecked(model, q1)) * min_h_prime(model) * v_eps)
    } else {
        f64::INFINITY
    };
    if d_hk(model) > d {
        notes.push("closed bound uses min(D_hk, D) as the travel distance".into());
    }
    let timing = Timing { stage2_ode, stage2_bound, v_eps, ..stage1.timing };
    Ok(Envelope {
        kind: EnvelopeKind::LowerStage2,
        eps,
        total_drop: d,
        switch: q_hat,
        zero_until,
        shift: -eps,
        plateau: false,
        validity_time: timing.stage1 + stage2_ode.max(stage2_bound),
        timing,
        initial_front: stage1.initial_front,
        notes,
    })
}

/// First point where a snapshot leaves the sandwich.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Violation {
    pub t: f64,
    pub q: f64,
    pub zeta: f64,
    pub bound: f64,
    pub upper: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub from_time: f64,
    pub tol: f64,
    pub checked: usize,
    pub holds: bool,
    pub first_violation: Option<Violation>,
    /// Earliest snapshot time from which every later snapshot lies inside.
    pub empirical_onset: Option<f64>,
}

fn snapshot_violation(s: &MarkerField, model: &ErosionModel, lower: &Envelope, upper: &Envelope, tol: f64, eps: f64) -> Option<Violation> {
    let d = s.total_drop;
    let n = 2001;
    for k in 0..n {
        let q = -d + d * k as f64 / (n - 1) as f64;
        let z = s.zeta_at(q, eps);
        let hi = upper.value(model, q);
        if z > hi + tol {
            return Some(Violation { t: s.time, q, zeta: z, bound: hi, upper: true });
        }
        let lo = lower.value(model, q);
        if z < lo - tol {
            return Some(Violation { t: s.time, q, zeta: z, bound: lo, upper: false });
        }
    }
    None
}

/// Checks `Z- - tol <= zeta <= Z+ + tol` on a 2001-point grid for every
/// snapshot at or after `from_time`.
pub fn sandwich_check(
    run: &RunResult,
    model: &ErosionModel,
    lower: &Envelope,
    upper: &Envelope,
    from_time: f64,
    tol: f64,
    clamp_eps: f64,
) -> SandwichReport {
    let flags: Vec<(f64, Option<Violation>)> =
        run.snapshots.iter().map(|s| (s.time, snapshot_violation(s, model, lower, upper, tol, clamp_eps))).collect();
    let checked: Vec<&(f64, Option<Violation>)> = flags.iter().filter(|f| f.0 >= from_time).collect();
    let first_violation = checked.iter().find_map(|f| f.1);
    let mut onset = None;
    for f in flags.iter().rev() {
        if f.1.is_some() {
            break;
        }
        onset = Some(f.0);
    }
    SandwichReport {
        from_time,
        tol,
        checked: checked.len(),
        holds: first_violation.is_none(),
        first_violation,
        empirical_onset: onset,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub classification: Classification,
    pub wave: StationaryWave,
    pub final_l1: f64,
    /// Regression slope of the tracked feature over the last quarter of the run.
    pub speed_estimate: f64,
    pub run: RunResult,
}

/// Speed of the tracked feature by regression over series points with `t >= from`.
pub fn speed_from_series(run: &RunResult, from: f64) -> f64 {
    let pts: Vec<_> = run.series.iter().filter(|p| p.t >= from).collect();
    let t: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let u: Vec<f64> = pts.iter().map(|p| p.feature_u).collect();
    regression_slope(&t, &u)
}

/// Runs the solver from `zeta0` and measures the approach to the wave.
pub fn convergence_experiment<S: Fn(f64) -> f64>(
    model: &ErosionModel,
    zeta0: S,
    total_drop: f64,
    config: &SolverConfig,
) -> Result<ConvergenceReport> {
    let classification = classify(model, total_drop)?;
    let wave = construct(model, total_drop)?;
    let state = init_state(zeta0, total_drop, config)?;
    let run = run(&state, model, config)?;
    let final_l1 = run.series.last().map_or(f64::NAN, |p| p.l1_distance);
    let speed_estimate = speed_from_series(&run, 0.75 * config.t_end);
    Ok(ConvergenceReport { classification, wave, final_l1, speed_estimate, run })
}

/// Maxima of the series over consecutive windows of the given width.
pub fn windowed_max(series: &[(f64, f64)], width: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let Some(t0) = series.first().map(|p| p.0) else { return out };
    for &(t, v) in series {
        let k = ((t - t0) / width).floor() as usize;
        if k >= out.len() {
            out.resize(k + 1, f64::NEG_INFINITY);
        }
        out[k] = out[k].max(v);
    }
    out.retain(|v| v.is_finite());
    out
}
