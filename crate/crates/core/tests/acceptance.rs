//! Acceptance criteria 1 to 9. Each test prints one `criterion N: PASS|FAIL` line.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use erodewave::cli::{csv_table, initial_profile, parse_config, snapshot_rows, InitialProfile, RunSpec};
use erodewave::harness::{
    c_bar, lower_envelope, lower_stage2, sandwich_check, speed_from_series, upper_envelope, upper_stage2, windowed_max,
};
use erodewave::profile::{d_hk, d_ss, kappa, phi, z_adm, z_stat, z_stat_sat};
use erodewave::tracking::{front_speed, init_from_wave, init_state, run, RunResult, SolverConfig};
use erodewave::transforms::{q_to_u, total_drop};
use erodewave::wave::{classify, construct, WaveType};
use erodewave::ErosionModel;

fn verdict(n: u8, ok: bool, elapsed: Duration, limit: Duration, detail: String) {
    let ok = ok && elapsed <= limit;
    println!(
        "criterion {n}: {} {detail} [{:.2}s, limit {}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

fn quad() -> ErosionModel {
    ErosionModel::builtin("quadratic").unwrap()
}

/// Independent oracle: bisection on `(e^D - 1)/D = 2`.
fn d_ss_oracle() -> f64 {
    let (mut lo, mut hi) = (0.5f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (mid.exp() - 1.0) / mid < 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_1_critical_drops() {
    let t0 = Instant::now();
    let m = quad();
    let hk = d_hk(&m);
    let ss = d_ss(&m);
    let oracle = d_ss_oracle();
    let ok = (hk - 0.5).abs() <= 1e-10 && (ss - oracle).abs() <= 1e-6 && (ss - 1.256431).abs() <= 1e-6;
    verdict(1, ok, t0.elapsed(), Duration::from_secs(1), format!("d_hk={hk:.12} d_ss={ss:.9} oracle={oracle:.9}"));
}

#[test]
fn criterion_2_closed_forms() {
    let t0 = Instant::now();
    let m = quad();
    let mut worst = 0.0f64;
    for k in 0..=100 {
        let q = -0.5 + 0.5 * k as f64 / 100.0;
        worst = worst.max((phi(&m, q).unwrap() - (1.0 + 2.0 * q) / (1.0 - 2.0 * q)).abs());
    }
    let dss = d_ss(&m);
    for k in 0..=100 {
        let delta = dss * k as f64 / 100.0;
        let (stat, adm) = if delta == 0.0 {
            (0.0, 0.0)
        } else {
            let r = delta.exp_m1() / delta - 1.0;
            (r, r.sqrt())
        };
        worst = worst.max((z_stat(&m, delta).unwrap() - stat).abs());
        worst = worst.max((z_adm(&m, delta).unwrap() - adm).abs());
    }
    verdict(2, worst <= 1e-8, t0.elapsed(), Duration::from_secs(1), format!("max deviation {worst:.3e} (tol 1e-8)"));
}

/// Sign changes of `phi(q) - z_stat(q + D)` where `z_stat` is defined.
fn crossings(m: &ErosionModel, d: f64) -> usize {
    let n = 20000;
    let right = (d_ss(m) - d).min(0.0);
    let span = right + d;
    let g = |q: f64| phi(m, q).unwrap() - z_stat_sat(m, q + d);
    let mut count = 0;
    let mut prev = g(-d + span / n as f64);
    for k in 2..=n {
        let v = g(-d + span * k as f64 / n as f64);
        if (prev < 0.0) != (v < 0.0) {
            count += 1;
        }
        prev = v;
    }
    count
}

#[test]
fn criterion_3_structural_properties() {
    let t0 = Instant::now();
    let m = quad();
    let dss = d_ss(&m);
    let n = 2000;
    let mut min_margin = f64::INFINITY;
    let mut increasing = true;
    let (mut ps, mut pa) = (z_stat(&m, 0.0).unwrap(), z_adm(&m, 0.0).unwrap());
    for k in 1..n {
        let delta = dss * k as f64 / n as f64;
        let (s, a) = (z_stat(&m, delta).unwrap(), z_adm(&m, delta).unwrap());
        min_margin = min_margin.min(a - s);
        increasing &= s > ps && a > pa;
        ps = s;
        pa = a;
    }
    let ends = z_stat(&m, 0.0).unwrap() == 0.0
        && z_adm(&m, 0.0).unwrap() == 0.0
        && (z_stat(&m, dss).unwrap() - 1.0).abs() < 1e-9
        && (z_adm(&m, dss).unwrap() - 1.0).abs() < 1e-9;

    // slope gap at the crossing, by centered differences
    let k = kappa(&m, 1.0);
    let mut min_gap = f64::INFINITY;
    for j in 1..50 {
        let d = 0.5 + (dss - 0.5) * j as f64 / 50.0;
        let q = classify(&m, d).unwrap().q_plus.unwrap();
        let h = 1e-6;
        let dphi = (phi(&m, q + h).unwrap() - phi(&m, q - h).unwrap()) / (2.0 * h);
        let dstat = (z_stat_sat(&m, q + d + h) - z_stat_sat(&m, q + d - h)) / (2.0 * h);
        min_gap = min_gap.min(dphi - dstat);
    }

    let drops = [0.3, 0.5, 0.9, 1.2564, 2.0];
    let cases: Vec<u8> = drops.iter().map(|&d| classify(&m, d).unwrap().case).collect();
    let counts: Vec<usize> = drops.iter().map(|&d| crossings(&m, d)).collect();
    let touch = (phi(&m, -0.5).unwrap() - z_stat(&m, 0.0).unwrap()).abs() < 1e-12;
    let ok = min_margin > 0.0
        && increasing
        && ends
        && min_gap >= k - 1e-6
        && d_hk(&m) < dss
        && cases == [1, 2, 3, 3, 5]
        && counts == [0, 0, 1, 1, 0]
        && touch;
    verdict(
        3,
        ok,
        t0.elapsed(),
        Duration::from_secs(5),
        format!("margin={min_margin:.3e} slope_gap={min_gap:.4} kappa={k} cases={cases:?} interior_crossings={counts:?}"),
    );
}

struct StationaryRun {
    d: f64,
    wave_type: WaveType,
    run: RunResult,
    delta_q: f64,
}

fn stationary_runs() -> &'static (Vec<StationaryRun>, Duration) {
    static RUNS: OnceLock<(Vec<StationaryRun>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t0 = Instant::now();
        let m = quad();
        let runs = [0.3, 0.5, 1.0, 2.0]
            .into_iter()
            .map(|d| {
                let w = construct(&m, d).unwrap();
                let mut cfg = SolverConfig::for_drop(d);
                cfg.t_end = 5.0;
                cfg.snapshot_times = (0..=10).map(|k| 0.5 * k as f64).collect();
                let s = init_from_wave(&m, &w, &cfg).unwrap();
                StationaryRun { d, wave_type: w.wave_type, run: run(&s, &m, &cfg).unwrap(), delta_q: cfg.delta_q }
            })
            .collect();
        (runs, t0.elapsed())
    })
}

#[test]
fn criterion_4_stationarity() {
    let (runs, elapsed) = stationary_runs();
    let mut ok = true;
    let mut parts = Vec::new();
    for r in runs {
        let worst = r.run.series.iter().map(|p| p.l1_distance).fold(0.0, f64::max);
        ok &= worst <= 5.0 * r.delta_q;
        parts.push(format!("D={} type{} max_l1={worst:.2e}", r.d, r.wave_type.number()));
    }
    verdict(4, ok, *elapsed, Duration::from_secs(60), format!("{} (tol 5 delta_q)", parts.join(", ")));
}

#[test]
fn criterion_5_shock_speed_signs() {
    let t0 = Instant::now();
    let m = quad();
    let dss = d_ss(&m);
    let mut ok = true;
    let mut worst_zero = 0.0f64;
    for i in 1..=50 {
        let delta = dss * i as f64 / 50.0;
        let zs = z_stat(&m, delta).unwrap();
        let v_stat = front_speed(&m, 1.0, delta, zs);
        let v_one = front_speed(&m, 1.0, delta, 1.0);
        worst_zero = worst_zero.max(v_stat.abs()).max(v_one.abs());
        for j in 1..=50 {
            let zp = j as f64 / 51.0;
            let v = front_speed(&m, 1.0, delta, zp);
            if (zp - zs).abs() < 1e-9 {
                continue;
            }
            ok &= if zp > zs { v < 0.0 } else { v > 0.0 };
        }
    }
    ok &= worst_zero <= 1e-12;
    verdict(5, ok, t0.elapsed(), Duration::from_secs(1), format!("50x50 grid, max |speed| at roots {worst_zero:.2e}"));
}

struct Example {
    model: ErosionModel,
    spec: RunSpec,
    profile: InitialProfile,
}

fn config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/example5_converge.json")
}

fn example() -> &'static Example {
    static EX: OnceLock<Example> = OnceLock::new();
    EX.get_or_init(|| {
        let spec = parse_config(&config_path()).unwrap();
        let model = ErosionModel::from_spec(&spec.model).unwrap();
        let profile = initial_profile(&spec, &model).unwrap();
        Example { model, spec, profile }
    })
}

fn example_run(delta_q: f64) -> (RunResult, Duration) {
    let ex = example();
    let mut cfg = ex.spec.solver_config().unwrap();
    cfg.delta_q = delta_q;
    cfg.boundary_gap = 2.0 * delta_q;
    cfg.max_gap = 2.0 * delta_q;
    let t0 = Instant::now();
    let s = init_state(|q| ex.profile.value(q), ex.profile.total_drop, &cfg).unwrap();
    let r = run(&s, &ex.model, &cfg).unwrap();
    (r, t0.elapsed())
}

fn main_run() -> &'static (RunResult, Duration) {
    static RUN: OnceLock<(RunResult, Duration)> = OnceLock::new();
    RUN.get_or_init(|| example_run(2e-3))
}

#[test]
fn criterion_6_convergence() {
    let ex = example();
    let (r, elapsed) = main_run();
    let d = ex.profile.total_drop;
    let c = classify(&ex.model, d).unwrap();
    let series: Vec<(f64, f64)> = r.series.iter().map(|p| (p.t, p.l1_distance)).collect();
    let maxima = windowed_max(&series, 1.0);
    let non_increasing = maxima[1..].windows(2).all(|w| w[1] <= w[0]);
    let below = series.iter().find(|p| p.1 < 0.02).map(|p| p.0);
    let final_l1 = series.last().unwrap().1;

    let dir = tempfile::tempdir().unwrap();
    for (k, s) in r.snapshots.iter().enumerate() {
        let rows = snapshot_rows(s, 1e-10);
        std::fs::write(dir.path().join(format!("snapshot_{k:03}.csv")), csv_table("q,zeta", &rows)).unwrap();
    }
    let emitted = std::fs::read_dir(dir.path()).unwrap().count();

    let ok = c.wave_type() == WaveType::Type3
        && (d - 2.00235).abs() < 1e-4
        && non_increasing
        && below.is_some()
        && final_l1 < 0.02 + 20.0 * 2e-3
        && emitted == 9;
    verdict(
        6,
        ok,
        *elapsed,
        Duration::from_secs(300),
        format!(
            "D={d:.7} type{} l1(0)={:.4} first<0.02 at t={:?} final_l1={final_l1:.4e} windowed_max_non_increasing={non_increasing} snapshots={emitted}",
            c.wave_type().number(),
            series[0].1,
            below
        ),
    );
}

#[test]
fn criterion_7_wave_speeds() {
    let t0 = Instant::now();
    let (r, _) = main_run();
    let s5 = speed_from_series(r, 60.0);
    let mut ok = (s5 / 1.5 - 1.0).abs() <= 0.05;
    let mut parts = vec![format!("example5 {s5:.4}")];
    let (runs, _) = stationary_runs();
    for sr in runs {
        let v = speed_from_series(&sr.run, 3.75);
        let target = if sr.wave_type == WaveType::Type4 { (2f64.exp() - 1.0) / 2.0 } else { 2.0 };
        let tol = if sr.wave_type == WaveType::Type4 { 0.01 } else { 0.05 };
        ok &= (v / target - 1.0).abs() <= tol;
        parts.push(format!("quadratic D={} {v:.5} (target {target:.5})", sr.d));
    }
    verdict(7, ok, t0.elapsed(), Duration::from_secs(120), parts.join(", "));
}

#[test]
fn criterion_8_sandwich() {
    let ex = example();
    let m = &ex.model;
    let d = ex.profile.total_drop;
    let (r, _) = main_run();
    let t0 = Instant::now();
    let zeta0 = |q: f64| ex.profile.value(q);
    let eps = 0.05;
    let up1 = upper_envelope(m, d, eps, zeta0).unwrap();
    let up = upper_stage2(m, d, eps, &up1).unwrap();
    let lo1 = lower_envelope(m, d, eps, zeta0).unwrap();
    let lo = lower_stage2(m, d, eps, &lo1).unwrap();
    let tol = 10.0 * 2e-3;
    let full = sandwich_check(r, m, &lo, &up, 0.0, tol, 1e-10);
    let onset = full.empirical_onset.expect("final snapshot inside the sandwich");
    let after = sandwich_check(r, m, &lo, &up, onset, tol, 1e-10);

    // negative control: zero set pushed 0.5 past the wave's shock front
    let wave = construct(m, d).unwrap();
    let mut shrunk = up.clone();
    shrunk.zero_until = wave.shock_right.unwrap() + 0.5;
    let control = sandwich_check(r, m, &lo, &shrunk, onset, tol, 1e-10);

    let c = 2.0 * c_bar(m, d);
    let mut l1_ok = true;
    let mut worst_ratio = 0.0f64;
    for e in [0.01, 0.05, 0.1] {
        let u1 = upper_envelope(m, d, e, |q| wave.value(m, q)).unwrap();
        let u = upper_stage2(m, d, e, &u1).unwrap();
        let l1 = lower_envelope(m, d, e, |q| wave.value(m, q)).unwrap();
        let l = lower_stage2(m, d, e, &l1).unwrap();
        for env in [&u, &l] {
            let dist = env.l1_to_wave(m, &wave);
            worst_ratio = worst_ratio.max(dist / (c * e));
            l1_ok &= dist <= c * e;
        }
    }
    let validity = up.validity_time.max(lo.validity_time);
    let ok = after.holds && after.checked >= 1 && !control.holds && l1_ok;
    verdict(
        8,
        ok,
        t0.elapsed(),
        Duration::from_secs(60),
        format!(
            "onset t={onset} checked={} control_violation={} C1=C2={c:.3} worst L1/(C eps)={worst_ratio:.3} validity_time={validity:.2}",
            after.checked,
            control.first_violation.is_some()
        ),
    );
}

fn drift_and_order(r: &RunResult) -> (f64, f64, f64) {
    let mut drift = 0.0f64;
    let mut defect = 0.0f64;
    let mut tv = 0.0f64;
    for s in &r.snapshots {
        let zp = q_to_u(s, 0.0);
        drift = drift.max((total_drop(&zp) - s.total_drop).abs() / (1.0 + s.time));
        defect = defect.max(s.monotonicity_defect());
        tv = tv.max(s.total_variation(1e-10));
    }
    (drift, defect, tv)
}

#[test]
fn criterion_9_conservation_and_refinement() {
    let (r2, e2) = main_run();
    let (r4, e4) = example_run(4e-3);
    let (r1, e1) = example_run(1e-3);
    let mut drift = 0.0f64;
    let mut defect = 0.0f64;
    let mut tv = 0.0f64;
    let stationary: Vec<&RunResult> = stationary_runs().0.iter().map(|s| &s.run).collect();
    for r in [&r4, r2, &r1].into_iter().chain(stationary) {
        let (a, b, c) = drift_and_order(r);
        drift = drift.max(a);
        defect = defect.max(b);
        tv = tv.max(c).max(r.max_total_variation);
    }
    let l = |r: &RunResult| r.series.last().unwrap().l1_distance;
    let (l4, l2, l1) = (l(&r4), l(r2), l(&r1));
    let (c1, c2) = ((l4 - l2).abs(), (l2 - l1).abs());
    let ok = drift <= 1e-6 && defect == 0.0 && tv <= 2.0 + 1e-6 && c2 < c1;
    verdict(
        9,
        ok,
        *e2 + e4 + e1,
        Duration::from_secs(600),
        format!("drift/(1+t)={drift:.2e} monotone_defect={defect:.1e} max_tv={tv:.12} final_l1 [4e-3,2e-3,1e-3]=[{l4:.5e},{l2:.5e},{l1:.5e}] changes {c1:.2e} > {c2:.2e}"),
    );
}
