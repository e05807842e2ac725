//! Small scalar numerics shared by the profile, wave and harness modules:
//! bracketed root finding, golden-section extremum search, composite
//! quadrature and an embedded Runge-Kutta stepper.

use crate::error::{Error, Result};

/// Bisection on a monotone residual followed by one Newton polish.
///
/// `f` must change sign on `[lo, hi]`. When `df` is supplied the Newton
/// update is only accepted if it stays inside the final bracket and does not
/// increase the residual.
pub fn bisect_polish<F, G>(
    f: F,
    df: Option<G>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoBracket { lo, hi, flo, fhi });
    }
    let (blo, bhi) = (lo, hi);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) <= f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
        if fm.abs() <= tol && (hi - lo) <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let fm = f(mid);
    if let Some(df) = df {
        let d = df(mid);
        if d.is_finite() && d != 0.0 {
            let cand = mid - fm / d;
            if cand >= blo && cand <= bhi && f(cand).abs() < fm.abs() {
                return Ok(cand);
            }
        }
    }
    Ok(mid)
}

/// Plain bisection without a derivative.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    bisect_polish(f, None::<fn(f64) -> f64>, lo, hi, tol)
}

/// Maximum of `f` on `[a, b]`: dense scan then golden-section refinement
/// around the best sample. Returns `(argmax, max)`.
pub fn grid_golden_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize, rel_tol: f64) -> (f64, f64) {
    let n = n.max(3);
    let step = (b - a) / (n - 1) as f64;
    let mut best = (a, f(a));
    for i in 1..n {
        let x = if i == n - 1 { b } else { a + step * i as f64 };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let mut lo = (best.0 - step).max(a);
    let mut hi = (best.0 + step).min(b);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo) <= rel_tol * (1.0 + best.0.abs()) {
            break;
        }
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Minimum counterpart of [`grid_golden_max`].
pub fn grid_golden_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize, rel_tol: f64) -> (f64, f64) {
    let (x, v) = grid_golden_max(|x| -f(x), a, b, n, rel_tol);
    (x, -v)
}

/// Composite Simpson rule with `n` intervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Outcome of an adaptive integration that may stop on an event.
#[derive(Debug, Clone)]
pub struct OdeTrace {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// True if the integration was stopped by the event predicate.
    pub stopped: bool,
}

/// Dormand-Prince 5(4) with step-size control. Integrates forward in `t`
/// from `t0` until `t_end` or until `stop(t, y)` returns true; the step that
/// first triggers `stop` is bisected so the returned endpoint sits on the
/// event to within `event_tol` in `t`.
#[allow(clippy::too_many_arguments)]
pub fn dopri45<F, S>(
    rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    rtol: f64,
    atol: f64,
    max_step: f64,
    stop: S,
    event_tol: f64,
) -> Result<OdeTrace>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
    S: Fn(f64, &[f64]) -> bool,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let dim = y0.len();
    let step = |t: f64, y: &[f64], h: f64| -> (Vec<f64>, f64) {
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut ys = y.to_vec();
            for (j, kj) in k.iter().enumerate() {
                for d in 0..dim {
                    ys[d] += h * A[s][j] * kj[d];
                }
            }
            k.push(rhs(t + C[s] * h, &ys));
        }
        let mut y5 = y.to_vec();
        let mut err = 0.0f64;
        for d in 0..dim {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for s in 0..7 {
                s5 += B5[s] * k[s][d];
                s4 += B4[s] * k[s][d];
            }
            y5[d] += h * s5;
            let sc = atol + rtol * y[d].abs().max(y5[d].abs());
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        (y5, err)
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut trace = OdeTrace { t: vec![t], y: vec![y.clone()], stopped: false };
    let mut h = (max_step).min((t_end - t0).abs()).max(1e-12) * 0.1;
    let mut iters = 0usize;
    while t < t_end {
        iters += 1;
        if iters > 2_000_000 {
            return Err(Error::StepUnderflow { t, detail: "dopri45 iteration budget exhausted".into() });
        }
        h = h.min(t_end - t).min(max_step);
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow { t, detail: format!("dopri45 step underflow, y = {:?}", y) });
        }
        let (yn, err) = step(t, &y, h);
        let finite = yn.iter().all(|v| v.is_finite());
        if !finite || err > 1.0 {
            let fac = if finite { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
            h *= fac;
            continue;
        }
        if stop(t + h, &yn) {
            // bisect the step length onto the event
            let (mut lo, mut hi) = (0.0, h);
            let mut best = yn.clone();
            while hi - lo > event_tol {
                let mid = 0.5 * (lo + hi);
                let (ym, _) = step(t, &y, mid);
                if stop(t + mid, &ym) {
                    hi = mid;
                    best = ym;
                } else {
                    lo = mid;
                }
            }
            t += hi;
            trace.t.push(t);
            trace.y.push(best);
            trace.stopped = true;
            return Ok(trace);
        }
        t += h;
        y = yn;
        trace.t.push(t);
        trace.y.push(y.clone());
        let fac = if err > 0.0 { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h *= fac;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect_polish(|x| x * x - 2.0, Some(|x: f64| 2.0 * x), 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_non_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn golden_max_of_parabola() {
        let (x, v) = grid_golden_max(|x| -(x - 0.3).powi(2) + 1.0, 0.0, 1.0, 101, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_cubic_exact() {
        let v = simpson(|x| x * x * x, 0.0, 2.0, 4);
        assert!((v - 4.0).abs() < 1e-13);
    }

    #[test]
    fn dopri_exponential_with_event() {
        let tr = dopri45(|_, y| vec![y[0]], 0.0, &[1.0], 10.0, 1e-10, 1e-12, 0.5, |_, y| y[0] >= 2.0, 1e-12).unwrap();
        assert!(tr.stopped);
        let t = *tr.t.last().unwrap();
        assert!((t - 2f64.ln()).abs() < 1e-8);
    }
}
