//! Classification of the total drop, construction of the unique stationary
//! wave `Z(q)` and its image as a moving profile in physical coordinates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ErosionModel;
use crate::numerics::{bisect, dopri45};
use crate::profile::{d_hk, d_ss, phi_unchecked, psi_unchecked, z_stat_sat};

/// Absolute tolerance for the measure-zero cases `D = D_hk`, `D = D_ss`.
pub const EQUALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WaveType {
    Type1,
    Type2,
    Type3,
    Type4,
}

impl WaveType {
    pub fn number(self) -> u8 {
        match self {
            WaveType::Type1 => 1,
            WaveType::Type2 => 2,
            WaveType::Type3 => 3,
            WaveType::Type4 => 4,
        }
    }
}

/// Intersection pattern of `phi(q)` and `z_stat(q + D)` on `[-D, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    /// 1 to 5, in order of increasing drop.
    pub case: u8,
    pub q_plus: Option<f64>,
    pub d_hk: f64,
    pub d_ss: f64,
}

impl Classification {
    pub fn wave_type(&self) -> WaveType {
        match self.case {
            1 => WaveType::Type1,
            2 => WaveType::Type2,
            3 => WaveType::Type3,
            _ => WaveType::Type4,
        }
    }
}

/// Root of `phi(q) = z_stat(q + D)` inside `[lo, hi]`.
pub fn intersection_root(model: &ErosionModel, total_drop: f64, lo: f64, hi: f64) -> Result<f64> {
    bisect(|q| phi_unchecked(model, q) - z_stat_sat(model, q + total_drop), lo, hi, 1e-13)
}

pub fn classify(model: &ErosionModel, total_drop: f64) -> Result<Classification> {
    if !(total_drop > 0.0) || !total_drop.is_finite() {
        return Err(Error::OutOfDomain { name: "D", value: total_drop, lo: 0.0, hi: f64::INFINITY });
    }
    let dhk = d_hk(model);
    let dss = d_ss(model);
    let mk = |case, q_plus| Classification { case, q_plus, d_hk: dhk, d_ss: dss };
    if model.h0 <= 0.0 || total_drop < dhk - EQUALITY_TOL {
        return Ok(mk(1, None));
    }
    if (total_drop - dhk).abs() <= EQUALITY_TOL {
        return Ok(mk(2, Some(-total_drop)));
    }
    if (total_drop - dss).abs() <= EQUALITY_TOL {
        return Ok(mk(4, Some(0.0)));
    }
    if total_drop > dss {
        return Ok(mk(5, None));
    }
    let q = intersection_root(model, total_drop, -dhk, 0.0)?;
    Ok(mk(3, Some(q)))
}

/// The stationary traveling wave for a given total drop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryWave {
    pub total_drop: f64,
    pub wave_type: WaveType,
    /// Right end of the `Z = 0` interval (Types 3 and 4).
    pub shock_right: Option<f64>,
    /// Left end of the smooth part; `Z = phi` on `(smooth_left, 0]`.
    pub smooth_left: f64,
}

pub fn construct(model: &ErosionModel, total_drop: f64) -> Result<StationaryWave> {
    let c = classify(model, total_drop)?;
    let wave_type = c.wave_type();
    let (shock_right, smooth_left) = match wave_type {
        WaveType::Type1 | WaveType::Type2 => (None, -total_drop),
        WaveType::Type3 => {
            let q = c.q_plus.expect("case 3 has a root");
            (Some(q), q)
        }
        WaveType::Type4 => (Some(0.0), 0.0),
    };
    Ok(StationaryWave { total_drop, wave_type, shock_right, smooth_left })
}

impl StationaryWave {
    /// `Z(q)`, with `Z(-D) = 1` by the left-limit convention.
    pub fn evaluate(&self, model: &ErosionModel, q: f64) -> Result<f64> {
        let d = self.total_drop;
        if q < -d || q > 0.0 || q.is_nan() {
            return Err(Error::OutOfDomain { name: "q", value: q, lo: -d, hi: 0.0 });
        }
        Ok(self.value(model, q))
    }

    /// Unchecked `Z(q)` for `q` in `[-D, 0]`.
    pub fn value(&self, model: &ErosionModel, q: f64) -> f64 {
        if q <= -self.total_drop || q >= 0.0 {
            return 1.0;
        }
        match self.shock_right {
            Some(qp) if q <= qp => 0.0,
            _ => phi_unchecked(model, q),
        }
    }

    /// Right limit `Z(-D+)`.
    pub fn left_state(&self, model: &ErosionModel) -> f64 {
        match self.shock_right {
            Some(_) => 0.0,
            None => phi_unchecked(model, -self.total_drop),
        }
    }
}

/// Speed of the wave in the physical frame.
pub fn physical_speed(model: &ErosionModel, wave: &StationaryWave) -> f64 {
    match wave.wave_type {
        WaveType::Type4 => psi_unchecked(model, wave.total_drop),
        _ => model.h1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HaltReason {
    /// Accumulated drop reached the end of the smooth part.
    DropReached,
    /// Slope exceeded the cap (hyper-kink).
    SlopeCap,
    /// `h'` numerically vanished.
    StiffPoint,
    /// Pure shock; nothing to integrate.
    PureJump,
}

/// Height-curve vertex; `jump` marks the lower end of a vertical jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub u: f64,
    /// Slope `u_x`; infinite across a jump.
    pub w: f64,
    pub jump: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhysicalWave {
    pub speed: f64,
    /// `(xi, W)` in the moving frame, ascending `xi`.
    pub xi_samples: Vec<(f64, f64)>,
    pub height_curve: Vec<CurvePoint>,
    /// Right boundary offset used in place of the condition at infinity.
    pub right_offset: f64,
    /// Vertical jump emitted at the left end of the smooth part.
    pub jump_height: f64,
    pub halt: HaltReason,
    /// Sup-norm distance between `1/W` and `Z` compared at equal drop.
    pub profile_check: f64,
}

/// Starting offset `W(window) - 1`.
pub const RIGHT_OFFSET: f64 = 1e-6;
const SLOPE_CAP: f64 = 1e8;
/// Above this slope the ODE switches to the drop as independent variable.
const SWITCH_SLOPE: f64 = 10.0;

/// `dW/ds` with `s = window - xi`. The textbook form
/// `f^2 (W-1) / (f - f'(W-1))` is rewritten with `f - f'(W-1) = (1-z)^2 h'(z)`,
/// `z = 1/W`, which removes the cancellation next to `W = 1`.
fn w_rate(model: &ErosionModel, w: f64) -> f64 {
    let z = 1.0 / w;
    let h = model.h(z);
    (1.0 - z) * h * h / (z * z * z * model.h_prime(z))
}

/// Moving-frame profile obtained from the slope ODE, sampled at about `n`
/// points, with its right edge at `xi = window`.
pub fn physical_wave(model: &ErosionModel, wave: &StationaryWave, window: f64, n: usize) -> Result<PhysicalWave> {
    let speed = physical_speed(model, wave);
    let d = wave.total_drop;
    if wave.wave_type == WaveType::Type4 {
        let pad = window.abs().max(1.0);
        let height_curve = vec![
            CurvePoint { x: -pad, u: -pad - d, w: 1.0, jump: false },
            CurvePoint { x: 0.0, u: -d, w: f64::INFINITY, jump: true },
            CurvePoint { x: 0.0, u: 0.0, w: 1.0, jump: false },
            CurvePoint { x: window.max(pad), u: window.max(pad), w: 1.0, jump: false },
        ];
        return Ok(PhysicalWave {
            speed,
            xi_samples: vec![(-pad, 1.0), (window.max(pad), 1.0)],
            height_curve,
            right_offset: 0.0,
            jump_height: d,
            halt: HaltReason::PureJump,
            profile_check: 0.0,
        });
    }
    let target = match wave.wave_type {
        WaveType::Type3 => -wave.shock_right.expect("type 3 has a front"),
        _ => d,
    };
    let stiff = std::cell::Cell::new(false);
    let rhs = |_s: f64, y: &[f64]| {
        let w = y[0].max(1.0);
        if model.h_prime(1.0 / w) < 1e-10 {
            stiff.set(true);
        }
        vec![w_rate(model, w), w - 1.0]
    };
    let stop = |_s: f64, y: &[f64]| y[1] >= target || y[0] >= SWITCH_SLOPE || stiff.get();
    let s_max = 1e4;
    let trace = dopri45(rhs, 0.0, &[1.0 + RIGHT_OFFSET, 0.0], s_max, 1e-10, 1e-12, 0.05, stop, 1e-13)?;
    if !trace.stopped {
        return Err(Error::StepUnderflow { t: s_max, detail: "slope ODE did not reach the end of the smooth part".into() });
    }
    // (s, W, drop)
    let mut pts: Vec<(f64, f64, f64)> = trace.t.iter().zip(&trace.y).map(|(s, y)| (*s, y[0], y[1])).collect();
    let (s1, w1, p1) = *pts.last().expect("trace has the start point");
    let mut halt = if stiff.get() { HaltReason::StiffPoint } else { HaltReason::DropReached };
    if !stiff.get() && p1 < target && w1 >= SWITCH_SLOPE {
        // steep part: drop as the independent variable, state (z, s)
        let rhs = |_p: f64, y: &[f64]| {
            let z = y[0].max(0.0);
            let h = model.h(z);
            vec![-h * h / model.h_prime(z), z / (1.0 - z)]
        };
        let stop = |_p: f64, y: &[f64]| y[0] <= 1.0 / SLOPE_CAP;
        let tail = dopri45(rhs, p1, &[1.0 / w1, s1], target, 1e-10, 1e-14, 0.01, stop, 1e-15)?;
        if tail.stopped {
            halt = HaltReason::SlopeCap;
        }
        pts.extend(tail.t.iter().zip(&tail.y).skip(1).map(|(p, y)| (y[1], 1.0 / y[0], *p)));
    }
    let last_drop = pts.last().expect("non-empty").2;
    let reached = last_drop.min(d);
    let jump_height = (d - reached).max(0.0);

    // compare 1/W with Z at equal drop
    let mut profile_check = 0.0f64;
    for &(_, w, p) in &pts {
        if p < target {
            profile_check = profile_check.max((1.0 / w - wave.value(model, -p)).abs());
        }
    }

    // trace runs right-to-left; flip into ascending xi
    let raw: Vec<(f64, f64, f64)> = pts.iter().map(|&(s, w, p)| (window - s, w, p)).rev().collect();
    let xi_left = raw[0].0;
    let stride = (raw.len() / n.max(2)).max(1);
    let mut picked: Vec<(f64, f64, f64)> = raw.iter().copied().step_by(stride).collect();
    if picked.last().map(|p| p.0) != raw.last().map(|p| p.0) {
        picked.push(*raw.last().expect("non-empty"));
    }

    // height: u = x - drop, since d(x - u)/dx = 1 - W and u(window) = window
    let u_at: Vec<f64> = raw.iter().map(|r| r.0 - r.2).collect();
    let last_i = raw.len() - 1;
    let mut height_curve = Vec::with_capacity(picked.len() + 4);
    let pad = 1.0;
    let u_left_top = u_at[0];
    let u_left = u_left_top - jump_height;
    height_curve.push(CurvePoint { x: xi_left - pad, u: u_left - pad, w: 1.0, jump: false });
    if jump_height > 0.0 {
        height_curve.push(CurvePoint { x: xi_left, u: u_left, w: f64::INFINITY, jump: true });
    }
    let idx: Vec<usize> = {
        let mut v: Vec<usize> = (0..raw.len()).step_by(stride).collect();
        if *v.last().expect("non-empty") != last_i {
            v.push(last_i);
        }
        v
    };
    for &i in &idx {
        height_curve.push(CurvePoint { x: raw[i].0, u: u_at[i], w: raw[i].1, jump: false });
    }
    height_curve.push(CurvePoint { x: window + pad, u: window + pad, w: 1.0, jump: false });

    Ok(PhysicalWave {
        speed,
        xi_samples: picked.iter().map(|p| (p.0, p.1)).collect(),
        height_curve,
        right_offset: RIGHT_OFFSET,
        jump_height,
        halt,
        profile_check,
    })
}

/// Drop between the two asymptotes of a height curve, `(x - u)` left minus right.
pub fn asymptote_gap(curve: &[CurvePoint]) -> f64 {
    let a = curve.first().expect("non-empty curve");
    let b = curve.last().expect("non-empty curve");
    (a.x - a.u) - (b.x - b.u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> ErosionModel {
        ErosionModel::builtin("quadratic").unwrap()
    }

    #[test]
    fn classify_examples() {
        let m = quad();
        assert_eq!(classify(&m, 0.3).unwrap().case, 1);
        let c = classify(&m, 0.5).unwrap();
        assert_eq!((c.case, c.q_plus), (2, Some(-0.5)));
        let c = classify(&m, 1.0).unwrap();
        assert_eq!(c.case, 3);
        assert!((c.q_plus.unwrap() + 0.12578253420128288).abs() < 1e-9);
        assert_eq!(classify(&m, 2.0).unwrap().case, 5);
        assert!(classify(&m, 0.0).is_err());
    }

    #[test]
    fn construct_and_evaluate() {
        let m = quad();
        let w = construct(&m, 0.3).unwrap();
        assert_eq!(w.wave_type, WaveType::Type1);
        assert!((w.evaluate(&m, -0.1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(w.evaluate(&m, 0.0).unwrap(), 1.0);
        assert_eq!(w.evaluate(&m, -0.3).unwrap(), 1.0);
        let w = construct(&m, 1.0).unwrap();
        assert_eq!(w.wave_type, WaveType::Type3);
        assert_eq!(w.evaluate(&m, -0.3).unwrap(), 0.0);
        assert!((w.evaluate(&m, -0.05).unwrap() - 0.9 / 1.1).abs() < 1e-12);
        let w = construct(&m, 2.0).unwrap();
        assert_eq!(w.wave_type, WaveType::Type4);
        assert_eq!(w.evaluate(&m, -1.0).unwrap(), 0.0);
        assert_eq!(w.evaluate(&m, -1.999).unwrap(), 0.0);
        assert_eq!(w.evaluate(&m, 0.0).unwrap(), 1.0);
        assert!(w.evaluate(&m, 0.1).is_err());
    }

    #[test]
    fn speeds() {
        let m = quad();
        for d in [0.3, 0.5, 1.0] {
            assert_eq!(physical_speed(&m, &construct(&m, d).unwrap()), 2.0);
        }
        let e = ErosionModel::builtin("example5").unwrap();
        assert_eq!(physical_speed(&e, &construct(&e, 2.0).unwrap()), 1.5);
        let s = physical_speed(&m, &construct(&m, 2.0).unwrap());
        assert!((s - 3.194528049465325).abs() < 1e-12);
    }

    #[test]
    fn slope_rate_matches_closed_form() {
        let m = quad();
        // -(W+1)^2 (W-1) at W = 2 is -9; w_rate is the leftward rate
        assert!((w_rate(&m, 2.0) - 9.0).abs() < 1e-12);
        assert_eq!(w_rate(&m, 1.0), 0.0);
        let f = m.f_eval(2.0).unwrap();
        let fp = m.f_prime(2.0);
        assert!((f * f * 1.0 / (f - fp * 1.0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn physical_wave_type1_drop() {
        let m = quad();
        let w = construct(&m, 0.3).unwrap();
        let p = physical_wave(&m, &w, 5.0, 400).unwrap();
        assert_eq!(p.halt, HaltReason::DropReached);
        assert!(p.profile_check < 1e-3, "{}", p.profile_check);
        assert!((asymptote_gap(&p.height_curve) - 0.3).abs() < 1e-3);
        assert!(p.xi_samples.iter().all(|s| s.1 >= 1.0));
    }

    #[test]
    fn physical_wave_type3_and_type4() {
        let m = quad();
        let w = construct(&m, 1.0).unwrap();
        let p = physical_wave(&m, &w, 5.0, 400).unwrap();
        assert!(p.profile_check < 1e-3);
        assert!((p.jump_height - (1.0 - 0.12578253420128288)).abs() < 1e-6);
        assert!((asymptote_gap(&p.height_curve) - 1.0).abs() < 1e-4);
        let w = construct(&m, 2.0).unwrap();
        let p = physical_wave(&m, &w, 5.0, 400).unwrap();
        assert_eq!(p.halt, HaltReason::PureJump);
        assert!((asymptote_gap(&p.height_curve) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn physical_wave_type2_hyper_kink() {
        let m = quad();
        let w = construct(&m, 0.5).unwrap();
        let p = physical_wave(&m, &w, 5.0, 400).unwrap();
        assert_eq!(p.halt, HaltReason::SlopeCap);
        assert!(p.jump_height < 1e-6);
        assert!((asymptote_gap(&p.height_curve) - 0.5).abs() < 1e-4);
    }
}
