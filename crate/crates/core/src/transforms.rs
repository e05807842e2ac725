//! Changes of variables between inverse slope `z(u)`, drop coordinates
//! `zeta(q)` and the physical height curve `u(x)`.
//!
//! Curves are piecewise linear. A repeated abscissa encodes a jump.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tracking::MarkerField;
use crate::wave::CurvePoint;

/// Default cap keeping `1/(1 - zeta)` finite next to `zeta = 1`.
pub const CAP_EPS: f64 = 1e-6;

/// Samples `(u_i, z_i)` on a finite window; `z = 1` outside it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZProfile {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

impl ZProfile {
    pub fn new(u: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if u.len() != z.len() || u.is_empty() {
            return Err(Error::InitialData("profile needs matching, non-empty u and z".into()));
        }
        if u.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InitialData("profile abscissae must be non-decreasing".into()));
        }
        if let Some(v) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InitialData(format!("inverse slope {v} outside [0, 1]")));
        }
        Ok(Self { u, z })
    }

    /// Samples `f` on `[u_min, u_max]` with step at most `du`, inserting the
    /// given breakpoints twice (left and right limits).
    pub fn sample<F: Fn(f64) -> f64>(f: F, u_min: f64, u_max: f64, du: f64, breaks: &[f64]) -> Result<Self> {
        let mut cuts = vec![u_min];
        cuts.extend(breaks.iter().copied().filter(|b| *b > u_min && *b < u_max));
        cuts.push(u_max);
        let mut u = Vec::new();
        let mut z = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = (((b - a) / du).ceil() as usize).max(1);
            let inset = 1e-12 * (b - a);
            for k in 0..=n {
                let x = a + (b - a) * k as f64 / n as f64;
                let probe = if k == 0 { x + inset } else if k == n { x - inset } else { x };
                u.push(x);
                z.push(f(probe));
            }
        }
        Self::new(u, z)
    }

    pub fn value(&self, u: f64) -> f64 {
        if u < self.u[0] || u > self.u[self.u.len() - 1] {
            return 1.0;
        }
        let i = self.u.partition_point(|x| *x <= u);
        if i == 0 {
            return self.z[0];
        }
        if i >= self.u.len() {
            return self.z[self.z.len() - 1];
        }
        let (a, b) = (self.u[i - 1], self.u[i]);
        if b <= a {
            return self.z[i];
        }
        self.z[i - 1] + (self.z[i] - self.z[i - 1]) * (u - a) / (b - a)
    }
}

/// `D`, the integral of `1 - z`.
pub fn total_drop(zp: &ZProfile) -> f64 {
    zp.u
        .windows(2)
        .zip(zp.z.windows(2))
        .map(|(u, z)| (1.0 - 0.5 * (z[0] + z[1])) * (u[1] - u[0]))
        .sum()
}

/// Nodes `(q_i, zeta_i)` in drop coordinates; a repeated `q` is a jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropProfile {
    pub total_drop: f64,
    pub q: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl DropProfile {
    /// Right-continuous piecewise-linear value with `zeta(0) = 1`.
    pub fn value(&self, q: f64) -> f64 {
        if q >= 0.0 {
            return 1.0;
        }
        let i = self.q.partition_point(|x| *x <= q);
        if i == 0 {
            return self.zeta[0];
        }
        if i >= self.q.len() {
            return 1.0;
        }
        let (a, b) = (self.q[i - 1], self.q[i]);
        if b <= a {
            return self.zeta[i];
        }
        self.zeta[i - 1] + (self.zeta[i] - self.zeta[i - 1]) * (q - a) / (b - a)
    }
}

/// `q(u)`, the integral of `z - 1` from `u` to infinity, and `zeta(q)`.
pub fn u_to_q(zp: &ZProfile) -> Result<DropProfile> {
    for (k, w) in zp.z.windows(2).enumerate() {
        if w[1] < w[0] - 1e-12 {
            return Err(Error::InitialData(format!("inverse slope decreases at u = {}", zp.u[k + 1])));
        }
    }
    let n = zp.u.len();
    let mut q = vec![0.0; n];
    for i in (0..n - 1).rev() {
        q[i] = q[i + 1] - (1.0 - 0.5 * (zp.z[i] + zp.z[i + 1])) * (zp.u[i + 1] - zp.u[i]);
    }
    Ok(DropProfile { total_drop: -q[0], q, zeta: zp.z.clone() })
}

/// Which end of the drop interval carries the given height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Anchor {
    /// `u(q = 0)`.
    Right,
    /// `u(q = -D)`.
    Left,
}

/// Reconstruction nodes of a solver state, left to right.
pub fn state_nodes(state: &MarkerField, clamp_eps: f64) -> (Vec<f64>, Vec<f64>) {
    let d = state.total_drop;
    let mut q = Vec::with_capacity(state.markers.len() + 3);
    let mut z = Vec::with_capacity(state.markers.len() + 3);
    let edge = state.edge_value(clamp_eps);
    if let Some(qp) = state.shock_right {
        q.extend([-d, qp]);
        z.extend([0.0, 0.0]);
    }
    let l = state.left_edge();
    if state.markers[0].q > l {
        q.push(l);
        z.push(edge);
    }
    for m in &state.markers {
        q.push(m.q);
        z.push(m.zeta);
    }
    (q, z)
}

/// Maps nodes in drop coordinates to a height profile. Each piece has
/// `du = dq / (1 - zbar)` with `zbar` the mean of the capped end values, so
/// the drop of every piece is reproduced exactly.
pub fn nodes_to_u(q: &[f64], zeta: &[f64], u_anchor: f64, anchor: Anchor, cap_eps: f64) -> ZProfile {
    let cap = |z: f64| z.min(1.0 - cap_eps);
    let n = q.len();
    let mut u = vec![0.0; n];
    for i in 1..n {
        let zbar = 0.5 * (cap(zeta[i - 1]) + cap(zeta[i]));
        u[i] = u[i - 1] + (q[i] - q[i - 1]) / (1.0 - zbar);
    }
    let shift = match anchor {
        Anchor::Left => u_anchor - u[0],
        Anchor::Right => u_anchor - u[n - 1],
    };
    ZProfile { u: u.iter().map(|x| x + shift).collect(), z: zeta.iter().map(|&z| cap(z)).collect() }
}

/// Height profile of a solver state with `u(0) = u_anchor`.
pub fn q_to_u(state: &MarkerField, u_anchor: f64) -> ZProfile {
    let (q, z) = state_nodes(state, 1e-10);
    nodes_to_u(&q, &z, u_anchor, Anchor::Right, CAP_EPS)
}

/// Height profile anchored at the tracked left edge `u(-D) = u_left`.
pub fn q_to_u_left(state: &MarkerField, clamp_eps: f64) -> ZProfile {
    let (q, z) = state_nodes(state, clamp_eps);
    nodes_to_u(&q, &z, state.u_left, Anchor::Left, CAP_EPS)
}

/// Height where the profile first reaches `level`, measured from the
/// tracked left edge.
pub fn feature_u(state: &MarkerField, level: f64, clamp_eps: f64) -> f64 {
    let (q, z) = state_nodes(state, clamp_eps);
    let mut u = state.u_left;
    for i in 1..q.len() {
        let (za, zb) = (z[i - 1], z[i]);
        let dq = q[i] - q[i - 1];
        if zb >= level {
            if za >= level {
                return u;
            }
            // linear in q on this piece; du/dq = 1/(1 - zeta)
            let f = if zb > za { (level - za) / (zb - za) } else { 0.0 };
            let zm = 0.5 * (za + (za + f * (zb - za)));
            return u + f * dq / (1.0 - zm);
        }
        u += dq / (1.0 - 0.5 * (za + zb));
    }
    u
}

#[derive(Debug, Clone, Serialize)]
pub struct HeightCurve {
    pub points: Vec<CurvePoint>,
    /// `u - x` on the left asymptote.
    pub left_offset: f64,
    /// `u - x` on the right asymptote.
    pub right_offset: f64,
}

impl HeightCurve {
    /// Vertical distance between the asymptotes.
    pub fn drop(&self) -> f64 {
        self.right_offset - self.left_offset
    }
}

/// Physical curve `x(u) = x_anchor + integral of z`, with `x_anchor` the
/// position of the left end of the window.
pub fn reconstruct_height(zp: &ZProfile, x_anchor: f64) -> HeightCurve {
    let n = zp.u.len();
    let mut x = vec![x_anchor; n];
    for i in 1..n {
        x[i] = x[i - 1] + 0.5 * (zp.z[i - 1] + zp.z[i]) * (zp.u[i] - zp.u[i - 1]);
    }
    let points = (0..n)
        .map(|i| {
            let z = zp.z[i];
            // lower end of a vertical stretch: z = 0 on the piece to the right
            let jump = i + 1 < n && z == 0.0 && zp.z[i + 1] == 0.0 && zp.u[i + 1] > zp.u[i];
            CurvePoint { x: x[i], u: zp.u[i], w: if z > 0.0 { 1.0 / z } else { f64::INFINITY }, jump }
        })
        .collect();
    HeightCurve { points, left_offset: zp.u[0] - x[0], right_offset: zp.u[n - 1] - x[n - 1] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_examples() {
        let ones = ZProfile::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(total_drop(&ones), 0.0);
        let box_ = ZProfile::new(vec![0.0, 0.6, 0.6], vec![0.0, 0.0, 1.0]).unwrap();
        assert!((total_drop(&box_) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn exponential_tail_data_drop() {
        let zp = ZProfile::sample(
            |u| if u <= 0.6 { 0.0 } else { 1.0 - (-(u + 0.11) / 2.0).exp() },
            0.0,
            45.0,
            1e-3,
            &[0.6],
        )
        .unwrap();
        let d = total_drop(&zp);
        assert!((d - (0.6 + 2.0 * (-0.355f64).exp())).abs() < 1e-6, "{d}");
    }

    #[test]
    fn shock_maps_to_equal_length() {
        let zp = ZProfile::new(vec![0.0, 0.6, 0.6], vec![0.0, 0.0, 1.0]).unwrap();
        let dp = u_to_q(&zp).unwrap();
        assert!((dp.total_drop - 0.6).abs() < 1e-15);
        assert_eq!(dp.value(-0.3), 0.0);
        assert_eq!(dp.value(0.0), 1.0);
    }

    #[test]
    fn q_to_u_examples() {
        let zp = nodes_to_u(&[-1.0, 0.0], &[0.5, 0.5], 0.0, Anchor::Right, CAP_EPS);
        assert!((zp.u[1] - zp.u[0] - 2.0).abs() < 1e-15);
        let zp = nodes_to_u(&[-0.4, 0.0], &[0.0, 0.0], 3.0, Anchor::Left, CAP_EPS);
        assert_eq!(zp.u, vec![3.0, 3.4]);
        let zp = nodes_to_u(&[-1.0, 0.0], &[1.0 - 1e-9, 1.0 - 1e-9], 0.0, Anchor::Right, CAP_EPS);
        assert!((zp.u[1] - zp.u[0] - 1e6).abs() < 1e-3);
    }

    #[test]
    fn round_trip() {
        let f = |u: f64| 0.2 + 0.7 * (1.0 - (-u).exp());
        let zp = ZProfile::sample(f, 0.0, 3.0, 0.01, &[]).unwrap();
        let dp = u_to_q(&zp).unwrap();
        let back = nodes_to_u(&dp.q, &dp.zeta, zp.u[0], Anchor::Left, CAP_EPS);
        for (a, b) in back.u.iter().zip(&zp.u) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((total_drop(&back) - dp.total_drop).abs() < 1e-12);
    }

    #[test]
    fn height_jump() {
        let zp = ZProfile::new(vec![0.0, 0.6, 0.6, 2.0], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let hc = reconstruct_height(&zp, 0.0);
        assert!(hc.points[0].jump);
        assert_eq!(hc.points[1].x, 0.0);
        assert!((hc.drop() - 0.6).abs() < 1e-15);
        assert!(hc.points.windows(2).all(|w| w[1].u >= w[0].u));
    }
}
