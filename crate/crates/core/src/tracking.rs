//! Characteristic-marker front tracking for monotone data `zeta(t, q)` on
//! `[-D, 0]` with at most one shock, glued to the left end.
//!
//! Markers move along characteristics. The shock's right front moves with
//! the Rankine-Hugoniot speed and re-emits characteristics tangentially
//! when the Lax condition would be violated. Values falling to zero are
//! clamped into the shock, which is how the nonnegativity constraint acts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ErosionModel;
use crate::numerics::simpson;
use crate::profile::{psi_unchecked, z_adm_sat};
use crate::transforms::feature_u;
use crate::wave::{construct, StationaryWave, WaveType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub id: u64,
    pub q: f64,
    pub zeta: f64,
}

/// Solver state. The last marker is always the boundary state `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerField {
    pub total_drop: f64,
    pub markers: Vec<Marker>,
    /// Right end of the shock `[-D, q+]` where `zeta = 0`.
    pub shock_right: Option<f64>,
    pub time: f64,
    /// Height `u` of the left edge of the nontrivial region.
    pub u_left: f64,
    pub next_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub delta_q: f64,
    pub cfl: f64,
    pub clamp_eps: f64,
    /// Re-seed a marker when the gap next to `q = 0` exceeds this.
    pub boundary_gap: f64,
    /// Split marker gaps wider than this.
    pub max_gap: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    /// Spacing of the L1 series.
    pub series_dt: f64,
    /// Level of the tracked feature for the speed estimate.
    pub feature_level: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_drop(1.0)
    }
}

impl SolverConfig {
    pub fn for_drop(total_drop: f64) -> Self {
        Self::with_delta_q(1e-3 * total_drop)
    }

    pub fn with_delta_q(delta_q: f64) -> Self {
        Self {
            delta_q,
            cfl: 0.4,
            clamp_eps: 1e-10,
            boundary_gap: 2.0 * delta_q,
            max_gap: 2.0 * delta_q,
            t_end: 1.0,
            snapshot_times: Vec::new(),
            series_dt: 0.1,
            feature_level: 0.5,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| Err(Error::Config { path: format!("solver.{path}"), msg: msg.into() });
        if !(self.delta_q > 0.0) {
            return bad("delta_q", "must be positive");
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl", "must lie in (0, 1]");
        }
        if !(self.clamp_eps >= 0.0) {
            return bad("clamp_eps", "must be nonnegative");
        }
        if !(self.t_end >= 0.0) {
            return bad("t_end", "must be nonnegative");
        }
        if !(self.series_dt > 0.0) {
            return bad("series_dt", "must be positive");
        }
        if !(self.boundary_gap > 0.0 && self.max_gap > 0.0) {
            return bad("boundary_gap", "gaps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Absorbed { t: f64, q: f64, zeta: f64 },
    Clamped { t: f64, q: f64 },
    Emitted { t: f64, q: f64, zeta: f64 },
    ShockCreated { t: f64, q: f64 },
    ShockRemoved { t: f64 },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Absorbed { .. } => "absorbed",
            Event::Clamped { .. } => "clamped",
            Event::Emitted { .. } => "emitted",
            Event::ShockCreated { .. } => "shock_created",
            Event::ShockRemoved { .. } => "shock_removed",
        }
    }
}

impl MarkerField {
    /// Left edge of the smooth region: the shock front, or `-D`.
    pub fn left_edge(&self) -> f64 {
        self.shock_right.unwrap_or(-self.total_drop)
    }

    /// Shock size `q+ + D`, zero without a shock.
    pub fn shock_size(&self) -> f64 {
        self.shock_right.map_or(0.0, |q| q + self.total_drop)
    }

    /// Reconstructed value just right of the left edge.
    pub fn edge_value(&self, clamp_eps: f64) -> f64 {
        let m = &self.markers;
        let z1 = m[0].zeta;
        if m.len() < 2 {
            return z1;
        }
        let l = self.left_edge();
        let (a, b) = (m[0], m[1]);
        let v = if b.q > a.q { a.zeta + (b.zeta - a.zeta) / (b.q - a.q) * (l - a.q) } else { a.zeta };
        let v = v.clamp(0.0, z1.max(0.0));
        if v < clamp_eps {
            z1
        } else {
            v
        }
    }

    /// Piecewise-linear reconstruction; `zeta(-D) = 1` by convention.
    pub fn zeta_at(&self, q: f64, clamp_eps: f64) -> f64 {
        let d = self.total_drop;
        if q <= -d || q >= 0.0 {
            return 1.0;
        }
        let l = self.left_edge();
        if self.shock_right.is_some() && q <= l {
            return 0.0;
        }
        let m = &self.markers;
        if q < m[0].q {
            let z0 = self.edge_value(clamp_eps);
            let span = m[0].q - l;
            if span <= 0.0 {
                return m[0].zeta;
            }
            return z0 + (m[0].zeta - z0) * (q - l) / span;
        }
        let i = m.partition_point(|k| k.q <= q);
        if i >= m.len() {
            return m[m.len() - 1].zeta;
        }
        let (a, b) = (m[i - 1], m[i]);
        if b.q <= a.q {
            return b.zeta;
        }
        a.zeta + (b.zeta - a.zeta) * (q - a.q) / (b.q - a.q)
    }

    /// Total variation of the reconstruction including both boundary jumps.
    pub fn total_variation(&self, clamp_eps: f64) -> f64 {
        let mut seq = vec![1.0];
        if self.shock_right.is_some() {
            seq.push(0.0);
        }
        seq.push(self.edge_value(clamp_eps));
        seq.extend(self.markers.iter().map(|m| m.zeta));
        seq.push(1.0);
        seq.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Largest decrease between consecutive markers (0 when monotone).
    pub fn monotonicity_defect(&self) -> f64 {
        self.markers.windows(2).map(|w| (w[0].zeta - w[1].zeta).max(0.0)).fold(0.0, f64::max)
    }

    /// Checks ordering, bounds and the shock-leftmost structure.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let d = self.total_drop;
        let m = &self.markers;
        let last = m.last().ok_or_else(|| Error::Regime("state without markers".into()))?;
        if last.q != 0.0 || last.zeta != 1.0 {
            return Err(Error::Regime("boundary marker missing".into()));
        }
        for w in m.windows(2) {
            if !(w[1].q > w[0].q) {
                return Err(Error::Regime(format!("marker order broken at q = {}", w[0].q)));
            }
        }
        if let Some(k) = m.iter().find(|k| !(-tol..=1.0 + tol).contains(&k.zeta) || k.q < -d - tol) {
            return Err(Error::Regime(format!("marker out of bounds: {:?}", k)));
        }
        if self.monotonicity_defect() > tol {
            return Err(Error::Regime(format!("non-monotone markers, defect {}", self.monotonicity_defect())));
        }
        if let Some(qp) = self.shock_right {
            if m[0].q < qp - tol {
                return Err(Error::Regime("marker inside the shock".into()));
            }
        }
        Ok(())
    }
}

const MAX_MARKERS: f64 = 1e7;

/// Builds the initial state from a sampler of non-decreasing data.
pub fn init_state<S: Fn(f64) -> f64>(zeta0: S, total_drop: f64, config: &SolverConfig) -> Result<MarkerField> {
    config.check()?;
    let d = total_drop;
    if !(d > 0.0) {
        return Err(Error::OutOfDomain { name: "D", value: d, lo: 0.0, hi: f64::INFINITY });
    }
    if d / config.delta_q > MAX_MARKERS {
        return Err(Error::Config { path: "solver.delta_q".into(), msg: format!("more than {MAX_MARKERS:e} markers for D = {d}") });
    }
    if (zeta0(0.0) - 1.0).abs() > 1e-12 {
        return Err(Error::InitialData(format!("zeta0(0) = {} must be 1", zeta0(0.0))));
    }
    let eps = config.clamp_eps;
    let n = ((d / config.delta_q).ceil() as usize).max(1);
    let h = d / n as f64;
    let inner = (1e-9 * d).min(1e-6 * h);
    // right-limit samples; the point -D itself carries the left state
    let grid: Vec<f64> = (0..=n).map(|k| if k == 0 { -d + inner } else if k == n { 0.0 } else { -d + h * k as f64 }).collect();
    let vals: Vec<f64> = grid.iter().map(|&q| zeta0(q)).collect();
    for (k, w) in vals.windows(2).enumerate() {
        if w[1] < w[0] - 1e-12 {
            return Err(Error::InitialData(format!("data decreases near q = {}", grid[k + 1])));
        }
    }
    if let Some(k) = vals.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InitialData(format!("value {} outside [0, 1] at q = {}", vals[k], grid[k])));
    }

    // right end of the zero set next to -D
    let mut shock_right = None;
    let mut start = -d;
    if vals[0] < eps {
        let k = vals.iter().rposition(|&v| v < eps).expect("first sample is below eps");
        let qz = if k == n {
            0.0
        } else {
            crate::numerics::bisect(|q| if zeta0(q) < eps { -1.0 } else { 1.0 }, grid[k], grid[k + 1], 0.0)
                .unwrap_or(grid[k])
        };
        let qz = if qz > -1e-12 * d { 0.0 } else { qz };
        if qz + d > 1e-9 * d {
            shock_right = Some(qz);
        }
        start = qz;
    }

    let mut markers = Vec::new();
    let mut id = 0u64;
    if start < 0.0 {
        let m = ((-start / config.delta_q).ceil() as usize).max(1);
        let hs = -start / m as f64;
        for k in 0..m {
            let q = start + hs * k as f64;
            let z = if k == 0 { zeta0(q + inner) } else { zeta0(q) };
            if z < eps {
                continue;
            }
            markers.push(Marker { id, q, zeta: z.min(1.0) });
            id += 1;
        }
    }
    markers.push(Marker { id, q: 0.0, zeta: 1.0 });
    id += 1;
    let state = MarkerField { total_drop: d, markers, shock_right, time: 0.0, u_left: 0.0, next_id: id };
    Ok(state)
}

/// Initial state sampled from a stationary wave.
pub fn init_from_wave(model: &ErosionModel, wave: &StationaryWave, config: &SolverConfig) -> Result<MarkerField> {
    init_state(|q| if q <= -wave.total_drop { 0.0 } else { wave.value(model, q) }, wave.total_drop, config)
}

/// Cumulative integrals of `h(zeta)` from each marker to `q = 0`, plus the
/// integral from the left edge.
struct Integrals {
    at_marker: Vec<f64>,
    at_edge: f64,
    edge_value: f64,
}

fn integrals(state: &MarkerField, model: &ErosionModel, clamp_eps: f64) -> Integrals {
    let m = &state.markers;
    let n = m.len();
    let mut at_marker = vec![0.0; n];
    let mut hr = model.h(m[n - 1].zeta.clamp(0.0, 1.0));
    for i in (0..n - 1).rev() {
        let hl = model.h(m[i].zeta.clamp(0.0, 1.0));
        at_marker[i] = at_marker[i + 1] + 0.5 * (hl + hr) * (m[i + 1].q - m[i].q).max(0.0);
        hr = hl;
    }
    let edge_value = state.edge_value(clamp_eps);
    let span = (m[0].q - state.left_edge()).max(0.0);
    let at_edge = at_marker[0] + 0.5 * (model.h(edge_value) + model.h(m[0].zeta.clamp(0.0, 1.0))) * span;
    Integrals { at_marker, at_edge, edge_value }
}

/// `F(zeta; q) = exp of the integral of h(zeta) over [q, 0]`.
pub fn integral_f(state: &MarkerField, model: &ErosionModel, q: f64, clamp_eps: f64) -> Result<f64> {
    let d = state.total_drop;
    if q < -d || q > 0.0 || q.is_nan() {
        return Err(Error::OutOfDomain { name: "q", value: q, lo: -d, hi: 0.0 });
    }
    let ints = integrals(state, model, clamp_eps);
    let m = &state.markers;
    let l = state.left_edge();
    let i = if q <= l {
        l.max(q) - q // shock part or empty
    } else {
        0.0
    };
    let val = if q <= l {
        ints.at_edge + model.h0 * i
    } else if q < m[0].q {
        let zq = state.zeta_at(q, clamp_eps);
        ints.at_marker[0] + 0.5 * (model.h(zq) + model.h(m[0].zeta)) * (m[0].q - q)
    } else {
        let k = m.partition_point(|k| k.q <= q).min(m.len() - 1).max(1);
        let zq = state.zeta_at(q, clamp_eps);
        ints.at_marker[k] + 0.5 * (model.h(zq) + model.h(m[k].zeta)) * (m[k].q - q)
    };
    Ok(val.exp())
}

/// `(q', zeta')` of marker `i` along its characteristic.
pub fn marker_velocity(state: &MarkerField, model: &ErosionModel, i: usize, clamp_eps: f64) -> (f64, f64) {
    let ints = integrals(state, model, clamp_eps);
    char_velocity(model, state.markers[i].zeta, ints.at_marker[i].exp())
}

fn char_velocity(model: &ErosionModel, zeta: f64, f: f64) -> (f64, f64) {
    let z = zeta.clamp(0.0, 1.0);
    let a = (1.0 - z) * (1.0 - z) * f;
    let h = model.h(z);
    (-a * model.h_prime(z), -a * h * h)
}

/// Right-front speed of a shock of size `delta` with right state `z_plus`.
pub fn front_speed(model: &ErosionModel, f: f64, delta: f64, z_plus: f64) -> f64 {
    if z_plus <= 0.0 {
        log::debug!("front speed requested with z+ = {z_plus}; returning 0");
        return 0.0;
    }
    let z = z_plus.min(1.0);
    f * (1.0 - z) / z * (psi_unchecked(model, delta.max(0.0)) - model.h(z))
}

/// Speed of the shock's right front for the current state.
pub fn shock_right_speed(state: &MarkerField, model: &ErosionModel, clamp_eps: f64) -> Result<f64> {
    if state.shock_right.is_none() {
        return Err(Error::Regime("state has no shock".into()));
    }
    let ints = integrals(state, model, clamp_eps);
    Ok(front_speed(model, ints.at_edge.exp(), state.shock_size(), ints.edge_value))
}

struct Rates {
    markers: Vec<(f64, f64)>,
    front: f64,
    u_left: f64,
}

fn rates(state: &MarkerField, model: &ErosionModel, clamp_eps: f64) -> Rates {
    let ints = integrals(state, model, clamp_eps);
    let markers = state
        .markers
        .iter()
        .zip(&ints.at_marker)
        .map(|(m, i)| char_velocity(model, m.zeta, i.exp()))
        .collect();
    let f_edge = ints.at_edge.exp();
    let (front, u_left) = match state.shock_right {
        Some(_) => {
            let delta = state.shock_size();
            let psi = psi_unchecked(model, delta);
            (front_speed(model, f_edge, delta, ints.edge_value), f_edge * psi)
        }
        None => (0.0, f_edge * model.h(ints.edge_value)),
    };
    Rates { markers, front, u_left }
}

fn advance(state: &MarkerField, r: &Rates, dt: f64) -> MarkerField {
    let mut s = state.clone();
    for (m, v) in s.markers.iter_mut().zip(&r.markers) {
        m.q += dt * v.0;
        m.zeta += dt * v.1;
    }
    if let Some(q) = s.shock_right.as_mut() {
        *q = (*q + dt * r.front).clamp(-s.total_drop, 0.0);
    }
    s.u_left += dt * r.u_left;
    s.time += dt;
    s
}

/// Largest stable step for the current state, before the CFL factor.
fn step_limit(state: &MarkerField, r: &Rates, config: &SolverConfig) -> (f64, &'static str) {
    let mut best = (f64::INFINITY, "none");
    let mut vmax = r.front.abs();
    let m = &state.markers;
    for i in 0..m.len() {
        let (qd, zd) = r.markers[i];
        vmax = vmax.max(qd.abs());
        if zd < 0.0 {
            let lim = m[i].zeta.max(config.delta_q) / -zd;
            if lim < best.0 {
                best = (lim, "value decay");
            }
        }
        if i + 1 < m.len() {
            let closing = qd - r.markers[i + 1].0;
            if closing > 0.0 {
                let lim = (m[i + 1].q - m[i].q) / closing;
                if lim < best.0 {
                    best = (lim, "marker collision");
                }
            }
        }
    }
    if vmax > 0.0 {
        let lim = config.delta_q / vmax;
        if lim < best.0 {
            best = (lim, "transport");
        }
    }
    best
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StepStats {
    pub steps: u64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub max_markers: usize,
    pub reseeded: u64,
    pub refined: u64,
    pub merged: u64,
    /// Largest monotonicity defect repaired after a step.
    pub max_monotone_repair: f64,
}

/// One Heun step of size at most `dt_cap` (pass infinity for the CFL step).
pub fn step(
    state: &MarkerField,
    model: &ErosionModel,
    config: &SolverConfig,
    dt_cap: f64,
) -> Result<(MarkerField, Vec<Event>, f64)> {
    let mut stats = StepStats::default();
    step_with_stats(state, model, config, dt_cap, &mut stats)
}

fn step_with_stats(
    state: &MarkerField,
    model: &ErosionModel,
    config: &SolverConfig,
    dt_cap: f64,
    stats: &mut StepStats,
) -> Result<(MarkerField, Vec<Event>, f64)> {
    let eps = config.clamp_eps;
    let r1 = rates(state, model, eps);
    let (lim, why) = step_limit(state, &r1, config);
    let dt = (config.cfl * lim).min(dt_cap);
    if dt.is_infinite() {
        // equilibrium: nothing moves
        return Ok((state.clone(), Vec::new(), 0.0));
    }
    if !(dt >= 1e-14) {
        return Err(Error::StepUnderflow { t: state.time, detail: format!("dt = {dt:e} limited by {why}") });
    }
    let stage = advance(state, &r1, dt);
    let r2 = rates(&stage, model, eps);
    let avg = Rates {
        markers: r1.markers.iter().zip(&r2.markers).map(|(a, b)| (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1))).collect(),
        front: 0.5 * (r1.front + r2.front),
        u_left: 0.5 * (r1.u_left + r2.u_left),
    };
    let mut s = advance(state, &avg, dt);
    // keep the boundary marker pinned
    if let Some(b) = s.markers.last_mut() {
        b.q = 0.0;
        b.zeta = 1.0;
    }
    let mut events = Vec::new();
    postprocess(&mut s, model, config, &mut events, stats);
    stats.steps += 1;
    stats.min_dt = if stats.steps == 1 { dt } else { stats.min_dt.min(dt) };
    stats.max_dt = stats.max_dt.max(dt);
    stats.max_markers = stats.max_markers.max(s.markers.len());
    Ok((s, events, dt))
}

fn postprocess(s: &mut MarkerField, model: &ErosionModel, config: &SolverConfig, events: &mut Vec<Event>, stats: &mut StepStats) {
    let eps = config.clamp_eps;
    let t = s.time;
    let d = s.total_drop;

    // monotone repair, sweeping from the boundary
    let mut defect = 0.0f64;
    for i in (0..s.markers.len() - 1).rev() {
        let right = s.markers[i + 1].zeta;
        if s.markers[i].zeta > right {
            defect = defect.max(s.markers[i].zeta - right);
            s.markers[i].zeta = right;
        }
        s.markers[i].zeta = s.markers[i].zeta.min(1.0);
    }
    stats.max_monotone_repair = stats.max_monotone_repair.max(defect);

    // (a) clamp vanishing values into the shock
    let mut clamp_to = None;
    while s.markers.len() > 1 && s.markers[0].zeta < eps {
        let m = s.markers.remove(0);
        events.push(Event::Clamped { t, q: m.q });
        clamp_to = Some(m.q.max(-d));
    }
    if let Some(q) = clamp_to {
        match s.shock_right {
            Some(qp) => s.shock_right = Some(qp.max(q)),
            None => {
                s.shock_right = Some(q);
                events.push(Event::ShockCreated { t, q });
            }
        }
    }

    // (b) absorb markers that crossed the left edge
    let l = s.left_edge();
    while s.markers.len() > 1 && s.markers[0].q < l {
        let m = s.markers.remove(0);
        events.push(Event::Absorbed { t, q: m.q, zeta: m.zeta });
    }
    if let Some(qp) = s.shock_right {
        // the boundary marker bounds the front
        if qp > 0.0 {
            s.shock_right = Some(0.0);
        }
    }

    // (c) tangential re-emission
    if let Some(qp) = s.shock_right {
        let delta = qp + d;
        let za = z_adm_sat(model, delta);
        let zp = s.edge_value(eps);
        if zp > za + 1e-12 && za >= eps && qp < 0.0 {
            let id = s.next_id;
            s.next_id += 1;
            s.markers.insert(0, Marker { id, q: qp, zeta: za });
            events.push(Event::Emitted { t, q: qp, zeta: za });
        }
    }

    // (d) boundary fan re-seeding, (d') gap refinement
    let n = s.markers.len();
    let (ql, zl) = if n >= 2 { (s.markers[n - 2].q, s.markers[n - 2].zeta) } else { (s.left_edge(), s.edge_value(eps)) };
    if -ql > config.boundary_gap {
        let q = -0.5 * config.boundary_gap;
        if q > s.left_edge() {
            let z = zl + (1.0 - zl) * (q - ql) / (0.0 - ql);
            let id = s.next_id;
            s.next_id += 1;
            s.markers.insert(n - 1, Marker { id, q, zeta: z });
            stats.reseeded += 1;
        }
    }
    let mut i = 0;
    while i + 1 < s.markers.len() {
        let (a, b) = (s.markers[i], s.markers[i + 1]);
        if b.q - a.q > config.max_gap {
            let pieces = ((b.q - a.q) / config.delta_q).ceil().max(2.0) as usize;
            for k in 1..pieces {
                let f = k as f64 / pieces as f64;
                let id = s.next_id;
                s.next_id += 1;
                s.markers.insert(i + k, Marker { id, q: a.q + f * (b.q - a.q), zeta: a.zeta + f * (b.zeta - a.zeta) });
                stats.refined += 1;
            }
            i += pieces;
        } else {
            i += 1;
        }
    }

    // (e) merge near-coincident markers
    let min_gap = config.delta_q / 100.0;
    let mut i = 0;
    while i + 1 < s.markers.len() {
        if s.markers[i + 1].q - s.markers[i].q < min_gap {
            let boundary = i + 1 == s.markers.len() - 1;
            s.markers.remove(if boundary { i } else { i + 1 });
            stats.merged += 1;
        } else {
            i += 1;
        }
    }

    // (f) remove a vanished shock
    if let Some(qp) = s.shock_right {
        if qp <= -d + 1e-12 {
            s.shock_right = None;
            events.push(Event::ShockRemoved { t });
        }
    }
}

/// Dense table of a stationary wave for fast repeated comparisons.
#[derive(Debug, Clone)]
pub struct WaveTable {
    pub wave: StationaryWave,
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl WaveTable {
    pub fn new(model: &ErosionModel, wave: &StationaryWave, n: usize) -> Self {
        let lo = wave.smooth_left;
        let n = n.max(2);
        let step = (0.0 - lo) / (n - 1) as f64;
        let values = (0..n)
            .map(|k| {
                let q = lo + step * k as f64;
                if k == 0 {
                    // right limit at the left end of the smooth part
                    match wave.wave_type {
                        WaveType::Type3 | WaveType::Type4 => crate::profile::phi_unchecked(model, q),
                        _ => wave.left_state(model),
                    }
                } else {
                    wave.value(model, q.min(0.0))
                }
            })
            .collect();
        Self { wave: *wave, lo, step, values }
    }

    /// `Z(q)` by linear interpolation; 0 on the shock.
    pub fn value(&self, q: f64) -> f64 {
        if q >= 0.0 {
            return 1.0;
        }
        if self.wave.shock_right.is_some() && q <= self.lo {
            return 0.0;
        }
        if q <= self.lo {
            return self.values[0];
        }
        if self.step <= 0.0 {
            return 1.0;
        }
        let x = (q - self.lo) / self.step;
        let k = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }
}

const L1_INTERVALS: usize = 4000;

/// `L1` distance between the state and a tabulated wave on `[-D, 0]`.
pub fn l1_distance_table(state: &MarkerField, table: &WaveTable, clamp_eps: f64) -> Result<f64> {
    let d = state.total_drop;
    if (d - table.wave.total_drop).abs() > 1e-12 * (1.0 + d) {
        return Err(Error::DropMismatch(d, table.wave.total_drop));
    }
    let mut br = vec![-d, 0.0, state.markers[0].q];
    if let Some(q) = state.shock_right {
        br.push(q);
    }
    if let Some(q) = table.wave.shock_right {
        br.push(q);
    }
    br.push(table.wave.smooth_left);
    br.retain(|q| *q >= -d && *q <= 0.0);
    br.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    br.dedup();
    let zero_state = |q: f64| state.shock_right.is_some_and(|s| q < s);
    let zero_wave = |q: f64| table.wave.shock_right.is_some_and(|s| q < s);
    let mut total = 0.0;
    for w in br.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        if zero_state(mid) && zero_wave(mid) {
            continue;
        }
        let n = ((len / d * L1_INTERVALS as f64).ceil() as usize).max(2);
        // evaluate strictly inside the piece so one-sided limits are used
        let inset = 1e-12 * len;
        total += simpson(
            |q| {
                let q = q.clamp(a + inset, b - inset);
                (state.zeta_at(q, clamp_eps) - table.value(q)).abs()
            },
            a,
            b,
            n,
        );
    }
    Ok(total)
}

/// `L1` distance between the state and the stationary wave.
pub fn l1_distance(state: &MarkerField, wave: &StationaryWave, model: &ErosionModel) -> Result<f64> {
    let table = WaveTable::new(model, wave, 20001);
    l1_distance_table(state, &table, 1e-10)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub l1_distance: f64,
    /// Shock front, `NaN` when there is no shock.
    pub shock_front: f64,
    /// Height of the tracked feature.
    pub feature_u: f64,
    /// Regression slope of `feature_u` over the last quarter of the run so far.
    pub speed_estimate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub reference: StationaryWave,
    pub snapshots: Vec<MarkerField>,
    pub events: Vec<Event>,
    pub series: Vec<SeriesPoint>,
    pub stats: StepStats,
    /// Largest total variation seen at a snapshot.
    pub max_total_variation: f64,
}

impl RunResult {
    pub fn event_count(&self, name: &str) -> usize {
        self.events.iter().filter(|e| e.name() == name).count()
    }
}

/// Least-squares slope of `y` against `t`.
pub fn regression_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    if t.len() < 2 {
        return f64::NAN;
    }
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let den: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn trailing_speed(series: &[SeriesPoint], t: f64) -> f64 {
    let from = 0.75 * t;
    let pts: Vec<&SeriesPoint> = series.iter().filter(|p| p.t >= from).collect();
    let ts: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let us: Vec<f64> = pts.iter().map(|p| p.feature_u).collect();
    regression_slope(&ts, &us)
}

/// Integrates to `config.t_end`, recording snapshots, events and the
/// distance to the stationary wave of the same drop.
pub fn run(state: &MarkerField, model: &ErosionModel, config: &SolverConfig) -> Result<RunResult> {
    config.check()?;
    let wave = construct(model, state.total_drop)?;
    let table = WaveTable::new(model, &wave, 20001);
    let eps = config.clamp_eps;
    let t_end = config.t_end;

    let mut snaps: Vec<f64> = config.snapshot_times.iter().copied().filter(|&t| t <= t_end && t >= state.time).collect();
    if snaps.is_empty() {
        snaps = vec![state.time, t_end];
    }
    snaps.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot time"));
    snaps.dedup();

    let mut s = state.clone();
    let mut result = RunResult {
        reference: wave,
        snapshots: Vec::new(),
        events: Vec::new(),
        series: Vec::new(),
        stats: StepStats::default(),
        max_total_variation: 0.0,
    };
    let mut next_snap = 0usize;
    let mut k_series = 0u64;
    let series_time = |k: u64| state.time + k as f64 * config.series_dt;
    let tiny = 1e-12 * (1.0 + t_end);
    loop {
        while next_snap < snaps.len() && snaps[next_snap] <= s.time + tiny {
            result.max_total_variation = result.max_total_variation.max(s.total_variation(eps));
            result.snapshots.push(s.clone());
            next_snap += 1;
        }
        while series_time(k_series) <= s.time + tiny && series_time(k_series) <= t_end + tiny {
            let l1 = l1_distance_table(&s, &table, eps)?;
            let mut p = SeriesPoint {
                t: s.time,
                l1_distance: l1,
                shock_front: s.shock_right.unwrap_or(f64::NAN),
                feature_u: feature_u(&s, config.feature_level, eps),
                speed_estimate: f64::NAN,
            };
            result.series.push(p.clone());
            p.speed_estimate = trailing_speed(&result.series, s.time);
            *result.series.last_mut().expect("just pushed") = p;
            k_series += 1;
        }
        if s.time >= t_end - tiny {
            break;
        }
        let mut target = t_end;
        if next_snap < snaps.len() {
            target = target.min(snaps[next_snap]);
        }
        target = target.min(series_time(k_series));
        let (ns, ev, dt) = step_with_stats(&s, model, config, target - s.time, &mut result.stats)?;
        if dt == 0.0 {
            // nothing moves; jump to the next recording time
            s.time = target;
            continue;
        }
        s = ns;
        if (s.time - target).abs() <= tiny {
            s.time = target;
        }
        result.events.extend(ev);
    }
    Ok(result)
}
