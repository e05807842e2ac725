//! Run configuration, command dispatch and result files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::{self, Envelope};
use crate::model::{ErosionModel, ModelSpec};
use crate::profile::{d_hk, d_ss, kappa, max_h2_over_hp, phi_unchecked};
use crate::tracking::{init_from_wave, init_state, run, MarkerField, RunResult, SolverConfig};
use crate::transforms::{state_nodes, u_to_q, DropProfile, ZProfile};
use crate::wave::{classify, construct, physical_wave, StationaryWave};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Validate,
    Classify,
    Wave,
    Simulate,
    Converge,
    Physical,
    Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// `z(u) = a + b exp(c u)` from `from` up to the next piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub from: f64,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
}

fn default_u_max() -> f64 {
    45.0
}

fn default_du() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// The stationary wave, optionally lifted: `min(1, Z(q) + lift)`.
    Wave {
        #[serde(default)]
        lift: f64,
    },
    /// Inverse slope in height coordinates on `[0, u_max]`.
    Pieces {
        pieces: Vec<Piece>,
        #[serde(default = "default_u_max")]
        u_max: f64,
        #[serde(default = "default_du")]
        du: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub model: ModelSpec,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_drop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_data: Option<InitialData>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

pub const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_T_END: f64 = 10.0;
/// Envelope widths reported by the `envelope` mode.
pub const ENVELOPE_EPS: [f64; 3] = [0.01, 0.05, 0.1];

impl RunSpec {
    pub fn new(model: ModelSpec, mode: Mode) -> Self {
        RunSpec {
            model,
            mode,
            total_drop: None,
            initial_data: None,
            solver: SolverSection::default(),
            output: OutputSection::default(),
        }
    }

    /// Checks the spec and fills every default.
    pub fn complete(mut self) -> Result<RunSpec> {
        ErosionModel::from_spec(&self.model)?;
        if self.mode == Mode::Validate {
            self.fill_output();
            return Ok(self);
        }
        let drop = match &self.initial_data {
            Some(InitialData::Pieces { .. }) => {
                let d = self.drop_profile()?.expect("pieces").total_drop;
                if let Some(given) = self.total_drop {
                    if (given - d).abs() > 1e-6 * d.max(1.0) {
                        return Err(Error::DropMismatch(given, d));
                    }
                }
                d
            }
            _ => self.total_drop.ok_or_else(|| Error::Config { path: "total_drop".into(), msg: "required for this mode".into() })?,
        };
        if !(drop > 0.0 && drop.is_finite()) {
            return Err(Error::Config { path: "total_drop".into(), msg: format!("must be positive, got {drop}") });
        }
        self.total_drop = Some(drop);
        if let Some(InitialData::Wave { lift }) = self.initial_data {
            if !(0.0..1.0).contains(&lift) {
                return Err(Error::Config { path: "initial_data.lift".into(), msg: "must lie in [0, 1)".into() });
            }
        }
        let base = SolverConfig::for_drop(drop);
        let s = &mut self.solver;
        s.delta_q.get_or_insert(base.delta_q);
        s.cfl.get_or_insert(base.cfl);
        s.clamp_eps.get_or_insert(base.clamp_eps);
        s.t_end.get_or_insert(DEFAULT_T_END);
        s.snapshot_times.get_or_insert_with(Vec::new);
        self.solver_config()?.check()?;
        self.fill_output();
        Ok(self)
    }

    fn fill_output(&mut self) {
        self.output.dir.get_or_insert_with(|| DEFAULT_OUT_DIR.into());
        self.output.formats.get_or_insert_with(|| vec![Format::Csv, Format::Json]);
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let d = self.total_drop.unwrap_or(1.0);
        let dq = self.solver.delta_q.unwrap_or(1e-3 * d);
        let mut c = SolverConfig::with_delta_q(dq);
        if let Some(v) = self.solver.cfl {
            c.cfl = v;
        }
        if let Some(v) = self.solver.clamp_eps {
            c.clamp_eps = v;
        }
        c.t_end = self.solver.t_end.unwrap_or(DEFAULT_T_END);
        c.snapshot_times = self.solver.snapshot_times.clone().unwrap_or_default();
        if c.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= c.t_end)) {
            return Err(Error::Config { path: "solver.snapshot_times".into(), msg: "times must lie in [0, t_end]".into() });
        }
        if c.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config { path: "solver.snapshot_times".into(), msg: "times must increase".into() });
        }
        c.series_dt = (c.t_end / 1000.0).max(0.1);
        Ok(c)
    }

    fn drop_profile(&self) -> Result<Option<DropProfile>> {
        let Some(InitialData::Pieces { pieces, u_max, du }) = &self.initial_data else { return Ok(None) };
        if pieces.is_empty() {
            return Err(Error::Config { path: "initial_data.pieces".into(), msg: "at least one piece".into() });
        }
        if pieces.windows(2).any(|w| w[1].from <= w[0].from) || pieces[0].from > 0.0 {
            return Err(Error::Config { path: "initial_data.pieces".into(), msg: "pieces must start at or below 0 and increase".into() });
        }
        if !(*du > 0.0 && *u_max > *du) {
            return Err(Error::Config { path: "initial_data.du".into(), msg: "need 0 < du < u_max".into() });
        }
        let pieces = pieces.clone();
        let z = move |u: f64| {
            let p = pieces.iter().rev().find(|p| p.from <= u).unwrap_or(&pieces[0]);
            (p.a + p.b * (p.c * u).exp()).clamp(0.0, 1.0)
        };
        let breaks: Vec<f64> = self.piece_breaks();
        let zp = ZProfile::sample(z, 0.0, *u_max, *du, &breaks)?;
        u_to_q(&zp).map(Some).map_err(|e| match e {
            Error::InitialData(msg) => Error::Config { path: "initial_data.pieces".into(), msg },
            e => e,
        })
    }

    fn piece_breaks(&self) -> Vec<f64> {
        match &self.initial_data {
            Some(InitialData::Pieces { pieces, .. }) => pieces.iter().map(|p| p.from).filter(|u| *u > 0.0).collect(),
            _ => Vec::new(),
        }
    }
}

/// Parses and completes a JSON run description.
pub fn parse_config_str(text: &str) -> Result<RunSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: RunSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config { path, msg: e.into_inner().to_string() }
    })?;
    spec.complete()
}

pub fn parse_config(path: &Path) -> Result<RunSpec> {
    parse_config_str(&fs::read_to_string(path)?)
}

/// The initial profile in drop coordinates.
pub struct InitialProfile {
    pub total_drop: f64,
    sampler: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl InitialProfile {
    pub fn value(&self, q: f64) -> f64 {
        (self.sampler)(q)
    }
}

pub fn initial_profile(spec: &RunSpec, model: &ErosionModel) -> Result<InitialProfile> {
    if let Some(dp) = spec.drop_profile()? {
        return Ok(InitialProfile { total_drop: dp.total_drop, sampler: Box::new(move |q| dp.value(q)) });
    }
    let d = spec.total_drop.ok_or_else(|| Error::Config { path: "total_drop".into(), msg: "missing".into() })?;
    let wave = construct(model, d)?;
    let lift = match spec.initial_data {
        Some(InitialData::Wave { lift }) => lift,
        _ => 0.0,
    };
    let m = model.clone();
    Ok(InitialProfile {
        total_drop: d,
        sampler: Box::new(move |q| if q >= 0.0 || q <= -d { 1.0 } else { (wave.value(&m, q) + lift).min(1.0) }),
    })
}

fn start_state(spec: &RunSpec, model: &ErosionModel, config: &SolverConfig) -> Result<MarkerField> {
    match spec.initial_data {
        None | Some(InitialData::Wave { lift: 0.0 }) => {
            let wave = construct(model, spec.total_drop.expect("completed spec"))?;
            init_from_wave(model, &wave, config)
        }
        _ => {
            let p = initial_profile(spec, model)?;
            init_state(|q| p.value(q), p.total_drop, config)
        }
    }
}

/// Round-trip decimal form with 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Four decimals, cut toward zero, trailing zeros dropped.
pub fn short(x: f64) -> String {
    if !x.is_finite() {
        return num(x);
    }
    let t = (x * 1e4 + x.signum() * 1e-6).trunc() / 1e4;
    format!("{}", if t == 0.0 { 0.0 } else { t })
}

pub fn csv_table(header: &str, rows: &[Vec<f64>]) -> String {
    let mut s = String::with_capacity(40 * rows.len() + header.len() + 1);
    s.push_str(header);
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|&x| num(x)).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

/// Rows `(q, zeta)` of a solver state, ascending in `q`.
pub fn snapshot_rows(state: &MarkerField, clamp_eps: f64) -> Vec<Vec<f64>> {
    let (q, z) = state_nodes(state, clamp_eps);
    q.into_iter().zip(z).map(|(a, b)| vec![a, b]).collect()
}

pub fn series_rows(run: &RunResult) -> Vec<Vec<f64>> {
    run.series.iter().map(|p| vec![p.t, p.l1_distance, p.shock_front, p.speed_estimate]).collect()
}

/// Samples of the stationary wave with both one-sided values at jumps.
pub fn wave_rows(model: &ErosionModel, wave: &StationaryWave, n: usize) -> Vec<Vec<f64>> {
    let d = wave.total_drop;
    let mut rows = vec![vec![-d, 1.0]];
    let start = match wave.shock_right {
        Some(qp) => {
            rows.push(vec![-d, 0.0]);
            rows.push(vec![qp, 0.0]);
            qp
        }
        None => -d,
    };
    rows.push(vec![start, phi_unchecked(model, start)]);
    if start < 0.0 {
        for k in 1..n {
            let q = start - start * k as f64 / (n - 1) as f64;
            rows.push(vec![q, phi_unchecked(model, q)]);
        }
    }
    rows
}

pub fn envelope_rows(model: &ErosionModel, env: &Envelope, n: usize) -> Vec<Vec<f64>> {
    let d = env.total_drop;
    (0..n).map(|k| {
        let q = -d + d * k as f64 / (n - 1) as f64;
        vec![q, env.value(model, q)]
    })
    .collect()
}

/// What a dispatch printed and wrote.
#[derive(Debug, Default)]
pub struct Outcome {
    pub exit_code: i32,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    formats: &'a [Format],
    spec: &'a RunSpec,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            let p = self.dir.join(format!("{name}.csv"));
            fs::write(&p, csv_table(header, rows))?;
            self.files.push(p);
        }
        Ok(())
    }

    fn json(&mut self, name: &str, result: serde_json::Value) -> Result<()> {
        if self.formats.contains(&Format::Json) {
            let doc = json!({
                "metadata": {
                    "model": self.spec.model,
                    "spec": self.spec,
                    "versions": { "erodewave": env!("CARGO_PKG_VERSION") },
                },
                "result": result,
            });
            let p = self.dir.join(format!("{name}.json"));
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            fs::write(&p, text)?;
            self.files.push(p);
        }
        Ok(())
    }
}

/// Runs a completed spec and writes its outputs.
pub fn dispatch(spec: &RunSpec) -> Result<Outcome> {
    let dir = PathBuf::from(spec.output.dir.clone().unwrap_or_else(|| DEFAULT_OUT_DIR.into()));
    let formats = spec.output.formats.clone().unwrap_or_else(|| vec![Format::Csv, Format::Json]);
    fs::create_dir_all(&dir)?;
    let model = ErosionModel::from_spec(&spec.model)?;
    let mut out = Outcome::default();
    let mut w = Writer { dir: &dir, formats: &formats, spec, files: Vec::new() };

    let report = model.validate();
    if spec.mode == Mode::Validate || !report.all_passed() {
        for c in &report.checks {
            out.lines.push(format!("{} {} worst_z={:.6} margin={:.3e}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.worst_z, c.worst_margin));
        }
        let rows: Vec<String> = report
            .checks
            .iter()
            .map(|c| format!("{},{},{},{}", c.name, c.passed, num(c.worst_z), num(c.worst_margin)))
            .collect();
        if formats.contains(&Format::Csv) {
            let p = dir.join("validate.csv");
            fs::write(&p, format!("check,passed,worst_z,worst_margin\n{}\n", rows.join("\n")))?;
            w.files.push(p);
        }
        w.json("validate", serde_json::to_value(&report)?)?;
        out.exit_code = if report.all_passed() { 0 } else { 1 };
        if spec.mode != Mode::Validate {
            out.lines.push("model hypotheses fail; refusing to run".into());
        }
        out.files = w.files;
        return Ok(out);
    }

    let d = spec.total_drop.expect("completed spec");
    let config = spec.solver_config()?;
    match spec.mode {
        Mode::Validate => unreachable!(),
        Mode::Classify => {
            let c = classify(&model, d)?;
            let qp = c.q_plus.map_or_else(|| "none".to_string(), short);
            out.lines.push(format!("type={} q_plus={qp} d_hk={} d_ss={}", c.wave_type().number(), short(c.d_hk), short(c.d_ss)));
            let row = vec![c.wave_type().number() as f64, c.q_plus.unwrap_or(f64::NAN), c.d_hk, c.d_ss];
            w.csv("classify", "type,q_plus,d_hk,d_ss", &[row])?;
            w.json("classify", json!({ "type": c.wave_type().number(), "classification": c }))?;
        }
        Mode::Wave => {
            let wave = construct(&model, d)?;
            let rows = wave_rows(&model, &wave, 2001);
            out.lines.push(format!("type={} rows={}", wave.wave_type.number(), rows.len()));
            w.csv("wave", "q,zeta", &rows)?;
            w.json("wave", json!({ "wave": wave, "samples": rows }))?;
        }
        Mode::Simulate | Mode::Converge => {
            let state = start_state(spec, &model, &config)?;
            let r = run(&state, &model, &config)?;
            write_run(&mut w, &r, &config, spec.mode == Mode::Converge)?;
            let last = r.series.last();
            out.lines.push(format!(
                "t={} l1={:.6e} speed={:.6} snapshots={}",
                config.t_end,
                last.map_or(f64::NAN, |p| p.l1_distance),
                harness::speed_from_series(&r, 0.75 * config.t_end),
                r.snapshots.len()
            ));
        }
        Mode::Physical => {
            let wave = construct(&model, d)?;
            let p = physical_wave(&model, &wave, 10.0, 2001)?;
            let rows: Vec<Vec<f64>> = p.height_curve.iter().map(|c| vec![c.x, c.u, c.w, if c.jump { 1.0 } else { 0.0 }]).collect();
            out.lines.push(format!("speed={:.6} jump={:.6} halt={:?}", p.speed, p.jump_height, p.halt));
            w.csv("physical", "x,u,w,jump_flag", &rows)?;
            w.json("physical", serde_json::to_value(&p)?)?;
        }
        Mode::Envelope => {
            let wave = construct(&model, d)?;
            let p = initial_profile(spec, &model)?;
            let zeta0 = |q: f64| p.value(q);
            let c1 = 2.0 * max_h2_over_hp(&model) / kappa(&model, d);
            let mut list = Vec::new();
            for eps in ENVELOPE_EPS.into_iter().filter(|e| *e < d) {
                let mut envs = Vec::new();
                let up = harness::upper_envelope(&model, d, eps, zeta0)?;
                if d > d_hk(&model) {
                    envs.push(harness::upper_stage2(&model, d, eps, &up)?);
                }
                envs.push(up);
                if d < d_ss(&model) {
                    let lo = harness::lower_envelope(&model, d, eps, zeta0)?;
                    envs.push(harness::lower_stage2(&model, d, eps, &lo)?);
                    envs.push(lo);
                }
                for e in envs {
                    let tag = format!("envelope_{}_eps{}", kind_name(&e), eps);
                    w.csv(&tag, "q,zeta", &envelope_rows(&model, &e, 2001))?;
                    let l1 = e.l1_to_wave(&model, &wave);
                    out.lines.push(format!("{} eps={} validity_time={:.6} l1={:.6e}", kind_name(&e), eps, e.validity_time, l1));
                    list.push(json!({ "envelope": e, "l1_to_wave": l1 }));
                }
            }
            w.json("envelope", json!({ "c1": c1, "c2": c1, "c": 2.0 * c1, "envelopes": list }))?;
        }
    }
    out.files = w.files;
    Ok(out)
}

fn kind_name(e: &Envelope) -> &'static str {
    use harness::EnvelopeKind::*;
    match e.kind {
        UpperStage1 => "upper_stage1",
        UpperStage2 => "upper_stage2",
        LowerStage1 => "lower_stage1",
        LowerStage2 => "lower_stage2",
    }
}

fn write_run(w: &mut Writer<'_>, r: &RunResult, config: &SolverConfig, summary: bool) -> Result<()> {
    for (k, s) in r.snapshots.iter().enumerate() {
        w.csv(&format!("snapshot_{k:03}"), "q,zeta", &snapshot_rows(s, config.clamp_eps))?;
    }
    w.csv("series", "t,l1_distance,shock_front,speed_estimate", &series_rows(r))?;
    let snaps: Vec<_> = r
        .snapshots
        .iter()
        .map(|s| json!({ "t": s.time, "shock_right": s.shock_right, "u_left": s.u_left, "nodes": snapshot_rows(s, config.clamp_eps) }))
        .collect();
    let mut result = json!({
        "config": config,
        "snapshots": snaps,
        "series": r.series,
        "stats": r.stats,
        "max_total_variation": r.max_total_variation,
        "event_counts": {
            "absorbed": r.event_count("absorbed"),
            "clamped": r.event_count("clamped"),
            "emitted": r.event_count("emitted"),
            "shock_created": r.event_count("shock_created"),
            "shock_removed": r.event_count("shock_removed"),
        },
    });
    if summary {
        let t_end = config.t_end;
        result["speed_estimate"] = json!(harness::speed_from_series(r, 0.75 * t_end));
        result["final_l1"] = json!(r.series.last().map(|p| p.l1_distance));
    }
    w.json(if summary { "converge" } else { "simulate" }, result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_config() {
        let s = parse_config_str(r#"{"model":{"builtin":"quadratic"},"mode":"classify","total_drop":1.0}"#).unwrap();
        assert_eq!(s.mode, Mode::Classify);
        assert_eq!(s.total_drop, Some(1.0));
        assert_eq!(s.solver.delta_q, Some(1e-3));
        assert_eq!(s.solver.cfl, Some(0.4));
        assert_eq!(s.solver.clamp_eps, Some(1e-10));
    }

    #[test]
    fn missing_mode_is_named() {
        let e = parse_config_str(r#"{"model":{"builtin":"quadratic"},"total_drop":1.0}"#).unwrap_err();
        assert!(e.to_string().contains("mode"), "{e}");
        let e = parse_config_str(r#"{"model":{"builtin":"quadratic"},"mode":"wave","total_drop":1.0,"solver":{"cfl":"x"}}"#).unwrap_err();
        match e {
            Error::Config { path, .. } => assert_eq!(path, "solver.cfl"),
            e => panic!("{e}"),
        }
        let e = parse_config_str(r#"{"model":{"builtin":"nope"},"mode":"wave","total_drop":1.0}"#).unwrap_err();
        assert!(matches!(e, Error::UnknownBuiltin(_)));
    }

    #[test]
    fn round_trip() {
        let s = parse_config_str(r#"{"model":{"g_poly":[1,0,-1]},"mode":"simulate","total_drop":0.7,"solver":{"t_end":2,"snapshot_times":[0,1,2]}}"#).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(parse_config_str(&text).unwrap(), s);
    }

    #[test]
    fn short_format() {
        assert_eq!(short(-0.12578253420128283), "-0.1257");
        assert_eq!(short(0.49999999999999994), "0.5");
        assert_eq!(short(1.2564312086261697), "1.2564");
        assert_eq!(short(-1e-9), "0");
    }

    #[test]
    fn number_format() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
        assert_eq!(csv_table("q,zeta", &[]), "q,zeta\n");
    }

    #[test]
    fn type4_wave_rows() {
        let m = ErosionModel::builtin("quadratic").unwrap();
        let w = construct(&m, 2.0).unwrap();
        let rows = wave_rows(&m, &w, 2001);
        assert_eq!(rows, vec![vec![-2.0, 1.0], vec![-2.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]);
    }
}
