//! The smooth stationary profile `phi`, the critical drops and the implicit
//! curves `z_stat` and `z_adm` that decide where a shock's right front sits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ErosionModel;
use crate::numerics::{bisect_polish, grid_golden_max, grid_golden_min};

const ROOT_TOL: f64 = 1e-12;
const SERIES_CUTOFF: f64 = 1e-8;
const EXTREMUM_GRID: usize = 10001;

/// Smooth stationary profile, extended by 0 left of `-D_hk`.
pub fn phi(model: &ErosionModel, q: f64) -> Result<f64> {
    if q > 0.0 || q.is_nan() {
        return Err(Error::OutOfDomain { name: "q", value: q, lo: f64::NEG_INFINITY, hi: 0.0 });
    }
    Ok(phi_unchecked(model, q))
}

pub(crate) fn phi_unchecked(model: &ErosionModel, q: f64) -> f64 {
    let q = q.min(0.0);
    if q <= -d_hk(model) {
        return 0.0;
    }
    let y = (model.h1 / (1.0 - model.h1 * q)).clamp(model.h0, model.h1);
    model.h_inverse(y).unwrap_or(0.0)
}

/// `phi'(q) = h(phi)^2 / h'(phi)` on `(-D_hk, 0]`, 0 to the left.
pub fn phi_prime(model: &ErosionModel, q: f64) -> f64 {
    if q <= -d_hk(model) {
        return 0.0;
    }
    let z = phi_unchecked(model, q);
    let h = model.h(z);
    h * h / model.h_prime(z)
}

/// Drop at which `phi` reaches 0; infinite when `h(0) = 0`.
pub fn d_hk(model: &ErosionModel) -> f64 {
    if model.h0 > 0.0 {
        1.0 / model.h0 - 1.0 / model.h1
    } else {
        f64::INFINITY
    }
}

/// `psi(s) = (exp(h0 s) - 1)/s`, with `psi(0) = h0`.
pub fn psi(model: &ErosionModel, s: f64) -> Result<f64> {
    if s < 0.0 || s.is_nan() {
        return Err(Error::OutOfDomain { name: "s", value: s, lo: 0.0, hi: f64::INFINITY });
    }
    Ok(psi_unchecked(model, s))
}

pub(crate) fn psi_unchecked(model: &ErosionModel, s: f64) -> f64 {
    let h0 = model.h0;
    if s <= SERIES_CUTOFF {
        h0 + 0.5 * h0 * h0 * s.max(0.0)
    } else {
        (h0 * s).exp_m1() / s
    }
}

/// `psi'(s)`.
pub fn psi_prime(model: &ErosionModel, s: f64) -> f64 {
    let h0 = model.h0;
    if s <= 1e-4 {
        // series: h0^2/2 + h0^3 s/3
        return 0.5 * h0 * h0 + h0 * h0 * h0 * s / 3.0;
    }
    let e = (h0 * s).exp();
    (h0 * s * e - (e - 1.0)) / (s * s)
}

/// Smallest shock size whose right front is stationary with `z+ = 1`.
pub fn d_ss(model: &ErosionModel) -> f64 {
    if model.h0 <= 0.0 {
        return f64::INFINITY;
    }
    let f = |s: f64| psi_unchecked(model, s) - model.h1;
    let lo = 1e-6;
    let mut hi = 100.0;
    while f(hi) < 0.0 && hi < 1e6 {
        hi *= 2.0;
    }
    bisect_polish(f, Some(|s: f64| psi_prime(model, s)), lo, hi, 1e-14).unwrap_or(f64::INFINITY)
}

fn check_delta(model: &ErosionModel, delta: f64) -> Result<()> {
    let dss = d_ss(model);
    if delta < 0.0 || delta > dss * (1.0 + 1e-12) || delta.is_nan() {
        return Err(Error::OutOfDomain { name: "delta", value: delta, lo: 0.0, hi: dss });
    }
    Ok(())
}

/// Right state making the right front of a shock of size `delta` stationary.
pub fn z_stat(model: &ErosionModel, delta: f64) -> Result<f64> {
    check_delta(model, delta)?;
    Ok(z_stat_sat(model, delta))
}

/// `z_stat`, saturated to 1 beyond `D_ss` and to 0 below 0.
pub fn z_stat_sat(model: &ErosionModel, delta: f64) -> f64 {
    if model.h0 <= 0.0 || delta <= 0.0 {
        return 0.0;
    }
    let y = psi_unchecked(model, delta);
    if y >= model.h1 {
        return 1.0;
    }
    model.h_inverse(y.max(model.h0)).unwrap_or(1.0)
}

fn adm_lhs(model: &ErosionModel, z: f64) -> f64 {
    model.h(z) - z * (1.0 - z) * model.h_prime(z)
}

/// Largest admissible right state of a shock of size `delta`.
pub fn z_adm(model: &ErosionModel, delta: f64) -> Result<f64> {
    check_delta(model, delta)?;
    Ok(z_adm_sat(model, delta))
}

/// `z_adm`, saturated to 1 beyond `D_ss` and to 0 below 0.
pub fn z_adm_sat(model: &ErosionModel, delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    let y = psi_unchecked(model, delta);
    if y >= model.h1 {
        return 1.0;
    }
    if y <= model.h0 {
        return 0.0;
    }
    // d/dz [h - z(1-z)h'] = 2z h' - z(1-z) h''
    let d = |z: f64| 2.0 * z * model.h_prime(z) - z * (1.0 - z) * model.h_second(z);
    bisect_polish(|z| adm_lhs(model, z) - y, Some(d), 0.0, 1.0, ROOT_TOL).unwrap_or(1.0)
}

/// `max h'` over `[0, 1]`.
pub fn max_h_prime(model: &ErosionModel) -> f64 {
    grid_golden_max(|z| model.h_prime(z), 0.0, 1.0, EXTREMUM_GRID, 1e-10).1
}

/// `min h'` over `[0, 1]`.
pub fn min_h_prime(model: &ErosionModel) -> f64 {
    grid_golden_min(|z| model.h_prime(z), 0.0, 1.0, EXTREMUM_GRID, 1e-10).1
}

/// `max h^2/h'` over `[0, 1]`, which is also `max phi'`.
pub fn max_h2_over_hp(model: &ErosionModel) -> f64 {
    grid_golden_max(|z| model.h(z).powi(2) / model.h_prime(z), 0.0, 1.0, EXTREMUM_GRID, 1e-10).1
}

/// Lower bound of `phi` on `[-D, 0]`; positive only when `h(0) = 0` or `D < D_hk`.
pub fn c_floor(model: &ErosionModel, total_drop: f64) -> f64 {
    phi_unchecked(model, -total_drop)
}

/// Transversality gap between `phi` and shifts of `z_stat`.
///
/// For `h(0) = 0` the minimum of `h^2/h'` is taken over `[c_o, 1]` with
/// `c_o = phi(-D)`, since it vanishes at `z = 0`.
pub fn kappa(model: &ErosionModel, total_drop: f64) -> f64 {
    if model.h0 > 0.0 {
        model.h0 * model.h0 / (2.0 * max_h_prime(model))
    } else {
        let co = c_floor(model, total_drop);
        grid_golden_min(|z| model.h(z).powi(2) / model.h_prime(z), co, 1.0, EXTREMUM_GRID, 1e-10).1
    }
}

/// Lower bound on `phi'` over the smooth part.
pub fn c_phi_min(model: &ErosionModel, total_drop: f64) -> f64 {
    if model.h0 > 0.0 {
        model.h0 * model.h0 / max_h_prime(model)
    } else {
        let co = c_floor(model, total_drop);
        let mx = grid_golden_max(|z| model.h_prime(z), co, 1.0, EXTREMUM_GRID, 1e-10).1;
        model.h(co).powi(2) / mx
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileConstants {
    pub d_hk: f64,
    pub d_ss: f64,
    pub kappa: f64,
    pub c_phi_min: f64,
    pub max_phi_prime: f64,
    pub min_h_prime: f64,
}

impl ProfileConstants {
    /// `total_drop` only matters for models with `h(0) = 0`.
    pub fn new(model: &ErosionModel, total_drop: f64) -> Self {
        Self {
            d_hk: d_hk(model),
            d_ss: d_ss(model),
            kappa: kappa(model, total_drop),
            c_phi_min: c_phi_min(model, total_drop),
            max_phi_prime: max_h2_over_hp(model),
            min_h_prime: min_h_prime(model),
        }
    }
}
