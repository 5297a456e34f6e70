//! Batch entry point: key-value configuration, subcommand dispatch, and
//! persistence of CSV/JSON outputs plus a run manifest.
//!
//! Exit codes: 0 success, 2 precondition violation, 3 non-convergence,
//! 64 unknown subcommand, 65 malformed configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::concentration::{
    bubble_profile, fit_scaling, fits_to_csv, moser_profile, radial_integral,
    sobolev_constant_radial, truncated_bubble_profile, BubbleParams, IntegralKind,
    MoserParams, ScalingFit,
};
use crate::error::{FucikError, Result};
use crate::fucik::{
    oracle1d::fucik_1d_oracle, parts_and_i, tau_map, theta_map, trace_curve, CurveKind,
    CurveTrace, FucikPoint, LevelOptions, ReduceOptions, ReductionSolve, TraceOptions,
};
use crate::linking::{
    build_geometry, minimax_search, mountain_pass_geometry, Classification, GeometryKind,
    GeometryOptions, MinimaxOptions, Nonlinearity, SpikeSpec,
};
use crate::operator::{
    build_operator, compute_spectrum_with, Domain, EigOptions, GridFunction, SplitPart,
    Spectrum,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;

const SUBCOMMANDS: [&str; 7] = ["eig", "curves", "oracle1d", "theta", "tau", "solve", "estimates"];

/// Resolved run configuration. `raw` echoes every key after precedence
/// (flag over file over default) and is what the manifest records.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: BTreeMap<String, String>,
}

impl RunConfig {
    /// Builds the configuration for one subcommand from command-line flags,
    /// reading `--config <file>` first when present.
    pub fn from_flags(flags: &[(String, String)]) -> Result<Self> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        for (_, v) in flags.iter().filter(|(k, _)| k == "config") {
            let text = fs::read_to_string(v)
                .map_err(|e| FucikError::Config(format!("cannot read config file {v}: {e}")))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    FucikError::Config(format!("{v}:{}: expected `key = value`", lineno + 1))
                })?;
                raw.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        for (k, v) in flags {
            if k != "config" {
                raw.insert(k.clone(), v.clone());
            }
        }
        Ok(Self { raw })
    }

    fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw.get(key).map(String::as_str).unwrap_or(default)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw.get(key) {
            None => Ok(default),
            Some(s) => parse_number(s)
                .ok_or_else(|| FucikError::Config(format!("{key}: not a number: {s}"))),
        }
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        let s = self
            .raw
            .get(key)
            .ok_or_else(|| FucikError::Config(format!("missing required key {key}")))?;
        parse_number(s).ok_or_else(|| FucikError::Config(format!("{key}: not a number: {s}")))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| FucikError::Config(format!("{key}: not an integer: {s}"))),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| FucikError::Config(format!("{key}: not an integer: {s}"))),
        }
    }

    pub fn domain(&self) -> Result<Domain> {
        parse_domain(self.str_or("domain", "square:pi"))
    }

    pub fn points_per_axis(&self, dim: usize) -> Result<Vec<usize>> {
        let spec = self.str_or("n", "63");
        let parts: Vec<&str> = spec.split(',').collect();
        let mut ns = Vec::with_capacity(dim);
        for p in &parts {
            let v: usize = p
                .trim()
                .parse()
                .map_err(|_| FucikError::Config(format!("n: not an integer: {p}")))?;
            ns.push(v);
        }
        if ns.len() == 1 {
            Ok(vec![ns[0]; dim])
        } else if ns.len() == dim {
            Ok(ns)
        } else {
            Err(FucikError::Config(format!(
                "n lists {} axes for a {dim}-dimensional domain",
                ns.len()
            )))
        }
    }

    pub fn level(&self) -> Result<usize> {
        self.usize_or("level", 2)
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64_or("seed", 0)
    }

    pub fn a_grid(&self) -> Result<Vec<f64>> {
        let s = self
            .raw
            .get("a-grid")
            .ok_or_else(|| FucikError::Config("missing required key a-grid".into()))?;
        parse_grid(s)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.str_or("out", "out"))
    }

    fn eig_options(&self) -> Result<EigOptions> {
        Ok(EigOptions {
            tol: self.f64_or("tol-eig", 1e-9)?,
            seed: self.seed()?,
            ..EigOptions::default()
        })
    }

    fn reduce_options(&self) -> Result<ReduceOptions> {
        Ok(ReduceOptions {
            tol: self.f64_or("tol-reduce", 1e-9)?,
            ..ReduceOptions::default()
        })
    }

    fn nonlinearity(&self, dim: usize) -> Result<Nonlinearity> {
        match self.str_or("nl", "exponential") {
            "exponential" => Nonlinearity::exponential(dim),
            "critical" => Nonlinearity::critical_power(dim),
            other => Err(FucikError::Config(format!("nl: unknown kind {other}"))),
        }
    }

    /// Record every default the run actually used, so the echoed config
    /// reproduces the run verbatim.
    fn echo(&mut self, key: &str, value: String) {
        self.raw.entry(key.to_string()).or_insert(value);
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s.trim() {
        "pi" => Some(PI),
        t => t.parse().ok().filter(|v: &f64| v.is_finite()),
    }
}

fn parse_domain(spec: &str) -> Result<Domain> {
    let err = || FucikError::Config(format!("domain: cannot parse {spec}"));
    let (kind, rest) = spec.split_once(':').ok_or_else(err)?;
    match kind {
        "interval" => Domain::interval(parse_number(rest).ok_or_else(err)?),
        "square" => {
            let l = parse_number(rest).ok_or_else(err)?;
            Domain::rectangle(l, l)
        }
        "box" => {
            let lengths: Option<Vec<f64>> = rest.split(',').map(parse_number).collect();
            Domain::hyperbox(&lengths.ok_or_else(err)?)
        }
        _ => Err(err()),
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let err = || FucikError::Config(format!("a-grid: expected lo:hi:count, got {s}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(err());
    }
    let lo = parse_number(parts[0]).ok_or_else(err)?;
    let hi = parse_number(parts[1]).ok_or_else(err)?;
    let count: usize = parts[2].parse().map_err(|_| err())?;
    if count < 2 || !(hi > lo) {
        return Err(err());
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

/// Manifest of one run; written last so its file list is complete.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub subcommand: String,
    pub config: BTreeMap<String, String>,
    pub spectrum_digest: Option<String>,
    pub outputs: Vec<String>,
    pub timings_ms: BTreeMap<String, u128>,
}

fn digest_spectrum(spec: &Spectrum) -> String {
    // FNV-1a over the eigenvalue bit patterns: a cheap deterministic
    // fingerprint for round-trip checks, not a cryptographic hash.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &l in spec.eigenvalues() {
        for byte in l.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

struct Writer {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        if contents.is_empty() {
            return Err(FucikError::Config(format!("refusing to write empty {name}")));
        }
        fs::write(self.dir.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| FucikError::Config(format!("serialization failed: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn timed<T>(timings: &mut BTreeMap<String, u128>, label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(label.to_string(), start.elapsed().as_millis());
    out
}

fn build_spectrum(cfg: &mut RunConfig, count: usize) -> Result<Spectrum> {
    let domain = cfg.domain()?;
    let dim = domain.dim();
    let ns = cfg.points_per_axis(dim)?;
    cfg.echo("domain", cfg.str_or("domain", "square:pi").to_string());
    cfg.echo(
        "n",
        ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
    );
    let op = build_operator(domain, &ns)?;
    compute_spectrum_with(&op, count, &cfg.eig_options()?)
}

fn curve_plot_data(trace: &CurveTrace) -> String {
    let mut out = String::new();
    for s in &trace.samples {
        out.push_str(&format!("{:.12e} {:.12e}\n", s.a, s.b));
    }
    out
}

#[derive(Serialize)]
struct ReductionReport {
    map: &'static str,
    level: usize,
    a: f64,
    b: f64,
    residual: f64,
    iterations: usize,
    input_norm_d: f64,
    output_norm_d: f64,
    i_value: f64,
}

fn reduction_report(
    spec: &Spectrum,
    point: &FucikPoint,
    sol: &ReductionSolve,
    map: &'static str,
) -> Result<ReductionReport> {
    let op = spec.operator();
    let combined = sol.input.add(&sol.output);
    let pi = parts_and_i(spec, &combined, point.a, point.b)?;
    Ok(ReductionReport {
        map,
        level: point.level,
        a: point.a,
        b: point.b,
        residual: sol.residual,
        iterations: sol.iterations,
        input_norm_d: op.d_norm(&sol.input),
        output_norm_d: op.d_norm(&sol.output),
        i_value: pi.value,
    })
}

/// Deterministic pseudo-random unit input for the reduction demos.
fn seeded_input(spec: &Spectrum, part: SplitPart, level: usize, seed: u64) -> Result<GridFunction> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let op = spec.operator();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..op.mesh().total())
        .map(|_| rng.gen::<f64>() - 0.5)
        .collect();
    let u = GridFunction::from_values(op.mesh(), vals)?;
    let mut proj = spec.project(level, &u, part)?;
    let nrm = op.d_norm(&proj);
    if nrm < 1e-12 {
        return Err(FucikError::InvalidParameters(
            "seeded input degenerates under projection".into(),
        ));
    }
    proj.scale(1.0 / nrm);
    Ok(proj)
}

fn run_eig(cfg: &mut RunConfig, w: &mut Writer, timings: &mut BTreeMap<String, u128>) -> Result<Option<String>> {
    let count = cfg.usize_or("count", cfg.level()?.max(5) + 1)?;
    cfg.echo("count", count.to_string());
    let spec = timed(timings, "spectrum", || build_spectrum(cfg, count))?;
    let mut csv = String::from("index,lambda,residual\n");
    for (i, (&l, &r)) in spec
        .eigenvalues()
        .iter()
        .zip(spec.residuals())
        .enumerate()
    {
        csv.push_str(&format!("{},{:.12e},{:.6e}\n", i + 1, l, r));
    }
    w.write("eigenvalues.csv", &csv)?;
    Ok(Some(digest_spectrum(&spec)))
}

fn run_curves(cfg: &mut RunConfig, w: &mut Writer, timings: &mut BTreeMap<String, u128>) -> Result<Option<String>> {
    let level = cfg.level()?;
    let kind = match cfg.str_or("kind", "nu") {
        "nu" => CurveKind::Nu,
        "mu" => CurveKind::Mu,
        other => return Err(FucikError::Config(format!("kind: unknown curve {other}"))),
    };
    cfg.echo("kind", kind.to_string());
    let a_grid = cfg.a_grid()?;
    let spec = timed(timings, "spectrum", || build_spectrum(cfg, level + 1))?;
    let opts = TraceOptions {
        tol_b: if cfg.raw.contains_key("tol-bisect") {
            Some(cfg.f64_req("tol-bisect")?)
        } else {
            None
        },
        level: LevelOptions {
            reduce: cfg.reduce_options()?,
            seed: cfg.seed()?,
            ..LevelOptions::default()
        },
        ..TraceOptions::default()
    };
    let trace = timed(timings, "trace", || {
        trace_curve(&spec, kind, level, &a_grid, &opts)
    })?;
    let stem = format!("{kind}_l{level}");
    w.write(&format!("{stem}.csv"), &trace.to_csv())?;
    w.write(&format!("{stem}.dat"), &curve_plot_data(&trace))?;
    Ok(Some(digest_spectrum(&spec)))
}

fn run_oracle1d(cfg: &mut RunConfig, w: &mut Writer, timings: &mut BTreeMap<String, u128>) -> Result<Option<String>> {
    let level = cfg.level()?;
    let domain = parse_domain(cfg.str_or("domain", "interval:pi"))?;
    if domain.dim() != 1 {
        return Err(FucikError::InvalidParameters(
            "oracle1d requires an interval domain".into(),
        ));
    }
    cfg.echo("domain", cfg.str_or("domain", "interval:pi").to_string());
    let a_grid = cfg.a_grid()?;
    let traces = timed(timings, "oracle", || {
        fucik_1d_oracle(domain.lengths()[0], level, &a_grid)
    })?;
    for trace in &traces {
        let stem = format!("oracle_{}_l{level}", trace.kind);
        w.write(&format!("{stem}.csv"), &trace.to_csv())?;
        w.write(&format!("{stem}.dat"), &curve_plot_data(trace))?;
    }
    Ok(None)
}

fn run_reduction(
    cfg: &mut RunConfig,
    w: &mut Writer,
    timings: &mut BTreeMap<String, u128>,
    map: &'static str,
) -> Result<Option<String>> {
    let level = cfg.level()?;
    let point = FucikPoint::new(cfg.f64_req("a")?, cfg.f64_req("b")?, level)?;
    let spec = timed(timings, "spectrum", || build_spectrum(cfg, level + 1))?;
    let opts = cfg.reduce_options()?;
    let seed = cfg.seed()?;
    let sol = timed(timings, map, || -> Result<ReductionSolve> {
        if map == "theta" {
            let input = seeded_input(&spec, SplitPart::MPart, level - 1, seed)?;
            theta_map(&spec, &input, &point, &opts)
        } else {
            let input = seeded_input(&spec, SplitPart::NPart, level, seed)?;
            tau_map(&spec, &input, &point, &opts)
        }
    })?;
    let report = reduction_report(&spec, &point, &sol, map)?;
    w.write_json(&format!("{map}.json"), &report)?;
    Ok(Some(digest_spectrum(&spec)))
}

fn run_solve(cfg: &mut RunConfig, w: &mut Writer, timings: &mut BTreeMap<String, u128>) -> Result<(Option<String>, bool)> {
    let level = cfg.level()?;
    let a = cfg.f64_req("a")?;
    let b = cfg.f64_req("b")?;
    let geometry = cfg.str_or("geometry", "below").to_string();
    cfg.echo("geometry", geometry.clone());
    let count = level.max(5) + 1;
    let spec = timed(timings, "spectrum", || build_spectrum(cfg, count))?;
    let dim = spec.operator().mesh().dim();
    let nl = cfg.nonlinearity(dim)?;
    cfg.echo("nl", cfg.str_or("nl", "exponential").to_string());

    let spike = match nl.two_star() {
        None => SpikeSpec::Moser {
            j: cfg.f64_or("j", 2980.958)?,
        },
        Some(_) => SpikeSpec::Bubble {
            eps: cfg.f64_or("eps", 0.05)?,
            mu: cfg.f64_or("mu", 2.0)?,
        },
    };
    let gopts = GeometryOptions {
        reduce: cfg.reduce_options()?,
        seed: cfg.seed()?,
        ..GeometryOptions::default()
    };
    let geom = timed(timings, "geometry", || match geometry.as_str() {
        "mountain" => mountain_pass_geometry(&spec, a, b, &spike, &nl, &gopts),
        "below" => build_geometry(
            &spec,
            GeometryKind::BelowCurve,
            &FucikPoint::new(a, b, level)?,
            &spike,
            &nl,
            &gopts,
        ),
        "above" => build_geometry(
            &spec,
            GeometryKind::AboveCurve,
            &FucikPoint::new(a, b, level)?,
            &spike,
            &nl,
            &gopts,
        ),
        "perturbed" => build_geometry(
            &spec,
            GeometryKind::PerturbedT,
            &FucikPoint::new(a, b, level)?,
            &spike,
            &nl,
            &gopts,
        ),
        other => Err(FucikError::Config(format!("geometry: unknown kind {other}"))),
    })?;
    let mopts = MinimaxOptions {
        grad_tol: cfg.f64_or("tol-crit", 1e-8)?,
        reduce: cfg.reduce_options()?,
        seed: cfg.seed()?,
        ..MinimaxOptions::default()
    };
    let report = timed(timings, "minimax", || {
        minimax_search(&spec, &geom, &nl, &mopts)
    })?;
    w.write_json("critical.json", &report)?;
    let converged = report.classification != Classification::NotConverged;
    Ok((Some(digest_spectrum(&spec)), converged))
}

fn estimate_fits() -> Result<Vec<ScalingFit>> {
    let x0_4 = vec![0.5 * PI; 4];
    let s4 = sobolev_constant_radial(4)?;
    let mut fits = Vec::new();

    // Truncated-bubble Dirichlet excess over the full-space constant decays
    // like the square of the concentration-times-cutoff scale in 4D.
    let mut series = Vec::new();
    for k in 0..8 {
        // The quadratic decay is asymptotic; eps starts at 0.03 so the
        // whole series sits in the scaling regime.
        let eps = 0.03 * 10f64.powf(-0.25 * k as f64);
        let p = BubbleParams::new(4, eps, 1.0, x0_4.clone())?;
        let grad = radial_integral(&truncated_bubble_profile(&p)?, IntegralKind::GradSquared)?;
        series.push((eps, grad - s4 * s4));
    }
    fits.push(fit_scaling("bubble_grad_excess", &series, 2.0, 0.2)?);

    // Critical-power mass of the full bubble scales like eps^((N-2)/2).
    let mut series = Vec::new();
    for k in 0..8 {
        let eps = 0.3 * 10f64.powf(-0.25 * k as f64);
        let p = BubbleParams::new(4, eps, 1.0, x0_4.clone())?;
        let mass = radial_integral(&bubble_profile(&p)?, IntegralKind::Power(3.0))?;
        series.push((eps, mass));
    }
    fits.push(fit_scaling("bubble_subcritical_mass", &series, 1.0, 0.2)?);

    // Moser peak mass and L2 norm both scale like d^2 at fixed j.
    let j = 2980.958;
    let mut mass_series = Vec::new();
    let mut l2_series = Vec::new();
    for k in 0..8 {
        let d = 0.9 * 10f64.powf(-0.25 * k as f64);
        let p = MoserParams::new(j, d, vec![0.5 * PI; 2])?;
        let prof = moser_profile(&p)?;
        mass_series.push((d, radial_integral(&prof, IntegralKind::Power(1.0))?));
        l2_series.push((d, radial_integral(&prof, IntegralKind::Power(2.0))?));
    }
    fits.push(fit_scaling("moser_mass", &mass_series, 2.0, 0.2)?);
    fits.push(fit_scaling("moser_l2", &l2_series, 2.0, 0.2)?);
    Ok(fits)
}

fn run_estimates(w: &mut Writer, timings: &mut BTreeMap<String, u128>) -> Result<Option<String>> {
    let fits = timed(timings, "estimates", estimate_fits)?;
    let mut summary = String::from("quantity,exponent,target,residual,pass\n");
    for fit in &fits {
        w.write(
            &format!("fit_{}.csv", fit.quantity),
            &fits_to_csv(std::slice::from_ref(fit)),
        )?;
        summary.push_str(&format!(
            "{},{:.12e},{:.12e},{:.6e},{}\n",
            fit.quantity, fit.exponent, fit.target, fit.residual, fit.pass
        ));
    }
    w.write("summary.csv", &summary)?;
    Ok(None)
}

fn split_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut flags = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| FucikError::Config(format!("expected a --flag, got {arg}")))?;
        let value = it
            .next()
            .ok_or_else(|| FucikError::Config(format!("flag --{key} is missing its value")))?;
        flags.push((key.to_string(), value.clone()));
    }
    Ok(flags)
}

fn exit_code_for(err: &FucikError) -> i32 {
    match err {
        FucikError::EigNonConvergence { .. }
        | FucikError::ReductionNonConvergence { .. }
        | FucikError::NoSignChange { .. }
        | FucikError::CoercivityHorizon(_)
        | FucikError::QuadratureFailure(_)
        | FucikError::ExponentialOverflow { .. } => EXIT_NONCONVERGENCE,
        FucikError::Config(_) => EXIT_CONFIG,
        _ => EXIT_PRECONDITION,
    }
}

fn apply_thread_cap() {
    if let Ok(v) = std::env::var("FUCIK_LINK_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn dispatch(subcommand: &str, cfg: &mut RunConfig) -> Result<(RunManifest, bool)> {
    let out_dir = cfg.out_dir();
    cfg.echo("out", out_dir.display().to_string());
    cfg.echo("seed", cfg.seed()?.to_string());
    let mut writer = Writer::new(&out_dir)?;
    let mut timings = BTreeMap::new();
    let total = Instant::now();
    let (digest, converged) = match subcommand {
        "eig" => (run_eig(cfg, &mut writer, &mut timings)?, true),
        "curves" => (run_curves(cfg, &mut writer, &mut timings)?, true),
        "oracle1d" => (run_oracle1d(cfg, &mut writer, &mut timings)?, true),
        "theta" => (run_reduction(cfg, &mut writer, &mut timings, "theta")?, true),
        "tau" => (run_reduction(cfg, &mut writer, &mut timings, "tau")?, true),
        "solve" => run_solve(cfg, &mut writer, &mut timings)?,
        "estimates" => (run_estimates(&mut writer, &mut timings)?, true),
        _ => unreachable!("dispatch called with validated subcommand"),
    };
    timings.insert("total".to_string(), total.elapsed().as_millis());
    let mut manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        config: cfg.raw.clone(),
        spectrum_digest: digest,
        outputs: writer.outputs.clone(),
        timings_ms: timings,
    };
    let mut writer = writer;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| FucikError::Config(format!("serialization failed: {e}")))?;
    writer.write("manifest.json", &format!("{json}\n"))?;
    manifest.outputs.push("manifest.json".to_string());
    Ok((manifest, converged))
}

/// Parses argv (without the program name), runs the requested pipeline, and
/// returns the process exit code. Errors are reported on stderr.
pub fn run_command(args: &[String]) -> i32 {
    apply_thread_cap();
    let Some(subcommand) = args.first() else {
        eprintln!("usage: fucik-link <{}> [--flag value]...", SUBCOMMANDS.join("|"));
        return EXIT_USAGE;
    };
    if !SUBCOMMANDS.contains(&subcommand.as_str()) {
        eprintln!("unknown subcommand: {subcommand}");
        return EXIT_USAGE;
    }
    let flags = match split_flags(&args[1..]) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let mut cfg = match RunConfig::from_flags(&flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    match dispatch(subcommand, &mut cfg) {
        Ok((_, true)) => EXIT_OK,
        Ok((_, false)) => {
            eprintln!("search did not converge; outputs written for inspection");
            EXIT_NONCONVERGENCE
        }
        Err(e) => {
            eprintln!("{e}");
            exit_code_for(&e)
        }
    }
}
