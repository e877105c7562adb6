//! Command line front end: generate preset fields, compute norms and decay
//! profiles, run the periodic solver, and drive the checker batteries.
//!
//! Every output embeds the resolved run configuration and a content digest
//! of each input file, and carries no timestamps, so identical invocations
//! produce byte-identical outputs. Exit codes: `0` when every checked
//! inequality holds, `1` when a checker reports a violation, `2` for usage
//! or configuration errors, `3` when a precondition refuses the run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use elkit::ericksen::{
    self, ClosedFormResiduals, EnergyLedger, Fd4RefinementReport, LedgerRow,
    ProbeConfig, ProbeSeries, SolverConfig, StationaryState,
};
use elkit::error::{ElkError, Result};
use elkit::fft::{fold_mode, herm_weight, Complex64, Fft3};
use elkit::grid::{read_field, write_field, AnyField, Grid3, ScalarField, VectorField};
use elkit::morrey::{self, EtaRegion, MorreyParams};
use elkit::spectral::SpectralPlan;
use elkit::synth;
use elkit::verify::{self, TimeCutoff, Verdict};

// ---------------------------------------------------------------------------
// Command line surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "elkit",
    version,
    about = "Field toolkit for the coupled velocity / unit-director system"
)]
struct Cli {
    /// Configuration file with `key = value` lines; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the sign chart of the decay exponent over a parameter grid.
    EtaMap(EtaMapArgs),
    /// Local Morrey or weighted Lebesgue norm of a stored field.
    Norm(NormArgs),
    /// Annulus decay profile of a stored field as CSV.
    Profile(ProfileArgs),
    /// Riesz transform battery: single modes, composition, pressure solve.
    RieszTest(RieszArgs),
    /// Reconstruct the pressure of a velocity/director pair and report.
    Pressure(PressureArgs),
    /// Residual reports for the explicit growing stationary state.
    Counterexample(CounterexampleArgs),
    /// Run the periodic solver and write ledger, probes and final fields.
    Solve(SolveArgs),
    /// Checker batteries over stored runs or built-in states.
    Check {
        #[command(subcommand)]
        what: CheckCmd,
    },
    /// Write preset fields to a directory.
    Gen(GenArgs),
}

#[derive(Subcommand)]
enum CheckCmd {
    /// Global energy inequality on a stored ledger.
    Energy(CheckEnergyArgs),
    /// Windowed localized energy inequality on a stored probe series.
    LocalEnergy(CheckLocalArgs),
    /// Localized gradient bound on a stationary state.
    Caccioppoli(CheckCaccArgs),
    /// Embedding survey over the fixed profile family.
    Embedding(CheckEmbeddingArgs),
    /// Rigidity hypothesis audit on a stationary state.
    Liouville(CheckLiouvilleArgs),
    /// Interpolation ratio of a velocity field.
    Sobolev(CheckSobolevArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Zero velocity, constant director.
    Zero,
    /// Taylor-Green velocity, constant director.
    TaylorGreen,
    /// Zero velocity, in-plane winding director.
    DirectorWinding,
    /// Taylor-Green velocity with a winding director.
    Coupled,
    /// Explicit growing stationary state (not periodic; `gen` only).
    Explicit,
    /// Radial plateau bump scalar sample (`gen` only).
    Bump,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Zero => "zero",
            Preset::TaylorGreen => "taylor-green",
            Preset::DirectorWinding => "director-winding",
            Preset::Coupled => "coupled",
            Preset::Explicit => "explicit",
            Preset::Bump => "bump",
        }
    }

    fn from_name(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Preset::Zero),
            "taylor-green" => Ok(Preset::TaylorGreen),
            "director-winding" => Ok(Preset::DirectorWinding),
            "coupled" => Ok(Preset::Coupled),
            "explicit" => Ok(Preset::Explicit),
            "bump" => Ok(Preset::Bump),
            other => Err(ElkError::BadParameter(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpaceArg {
    Local,
    Weighted,
}

impl SpaceArg {
    fn name(self) -> &'static str {
        match self {
            SpaceArg::Local => "local",
            SpaceArg::Weighted => "weighted",
        }
    }

    fn from_name(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(SpaceArg::Local),
            "weighted" => Ok(SpaceArg::Weighted),
            other => Err(ElkError::BadParameter(format!("unknown space '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StateArg {
    /// Zero velocity and pressure, constant director.
    Trivial,
    /// The explicit growing stationary state.
    Explicit,
}

impl StateArg {
    fn name(self) -> &'static str {
        match self {
            StateArg::Trivial => "trivial",
            StateArg::Explicit => "explicit",
        }
    }

    fn from_name(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(StateArg::Trivial),
            "explicit" => Ok(StateArg::Explicit),
            other => Err(ElkError::BadParameter(format!("unknown state '{other}'"))),
        }
    }
}

#[derive(Args)]
struct EtaMapArgs {
    /// Exponent weight values: `value` or `lo:hi:step`.
    #[arg(long)]
    gamma: Option<String>,
    /// Integrability values: `value` or `lo:hi:step`.
    #[arg(long)]
    p: Option<String>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct NormArgs {
    /// Stored field to measure.
    #[arg(long)]
    input: Option<String>,
    /// Which norm to compute.
    #[arg(long, value_enum)]
    space: Option<SpaceArg>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Explicit radius ladder `r1,r2,...`.
    #[arg(long)]
    radii: Option<String>,
    /// Geometric ladder `geometric:base` (or just `base`).
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    radii: Option<String>,
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct RieszArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    /// Number of random fields per battery.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long = "tol.single")]
    tol_single: Option<f64>,
    #[arg(long = "tol.compose")]
    tol_compose: Option<f64>,
    #[arg(long = "tol.poisson")]
    tol_poisson: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct PressureArgs {
    /// Built-in flow preset for the input pair.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Stored velocity field (alternative to --preset).
    #[arg(long)]
    u: Option<String>,
    /// Stored director field (optional with --u).
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long = "tol.div")]
    tol_div: Option<f64>,
    #[arg(long = "tol.poisson")]
    tol_poisson: Option<f64>,
    /// Also write the shell spectrum of the pressure next to --out.
    #[arg(long = "dump-spectra")]
    dump_spectra: bool,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    /// Shell half-width of the director region.
    #[arg(long)]
    band: Option<f64>,
    /// Additional report to attach (`liouville`).
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Velocity amplitude scale of the preset.
    #[arg(long)]
    amp: Option<f64>,
    /// Director winding strength of the preset.
    #[arg(long)]
    strength: Option<f64>,
    /// Probe cutoff radii `r1,r2,...` (enables localized probes).
    #[arg(long)]
    radii: Option<String>,
    /// Probe sampling stride in steps.
    #[arg(long)]
    stride: Option<usize>,
    /// Snapshot stride in steps (writes numbered field files).
    #[arg(long)]
    snapshots: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Also write the shell spectrum of the final fields.
    #[arg(long = "dump-spectra")]
    dump_spectra: bool,
    /// Disable the 2/3-rule dealiasing of the quadratic terms.
    #[arg(long = "no-dealias")]
    no_dealias: bool,
    /// Disable the per-step renormalization of the director.
    #[arg(long = "no-renormalize")]
    no_renormalize: bool,
    /// Keep the director coupling even for a spectrally constant director.
    #[arg(long = "force-coupled")]
    force_coupled: bool,
    /// Advective CFL number above which a warning is recorded.
    #[arg(long = "cfl-limit")]
    cfl_limit: Option<f64>,
}

#[derive(Args)]
struct CheckEnergyArgs {
    /// Ledger CSV produced by `solve`.
    #[arg(long)]
    ledger: Option<String>,
    /// Relative tolerance on the signed defect, scaled by E(0).
    #[arg(long = "tol.energy")]
    tol_energy: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CheckLocalArgs {
    /// Probe series JSON produced by `solve`.
    #[arg(long)]
    probes: Option<String>,
    /// Window start time.
    #[arg(long)]
    t0: Option<f64>,
    /// Window end time.
    #[arg(long)]
    t1: Option<f64>,
    /// Ramp width of the window cutoff.
    #[arg(long)]
    eps: Option<f64>,
    /// Relative tolerance on the windowed defect.
    #[arg(long = "tol.local")]
    tol_local: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CheckCaccArgs {
    #[arg(long, value_enum)]
    state: Option<StateArg>,
    /// Cutoff radius of the localized estimate.
    #[arg(long = "R")]
    radius: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    band: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CheckEmbeddingArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CheckLiouvilleArgs {
    #[arg(long, value_enum)]
    state: Option<StateArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    #[arg(long)]
    band: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CheckSobolevArgs {
    /// Stored velocity field.
    #[arg(long)]
    u: Option<String>,
    /// Built-in preset for the velocity (alternative to --u).
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "box")]
    box_half: Option<f64>,
    #[arg(long)]
    band: Option<f64>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    strength: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

// ---------------------------------------------------------------------------
// Resolved configuration, provenance and output plumbing
// ---------------------------------------------------------------------------

/// Provenance block embedded in every output: the literal invocation, the
/// resolved configuration (flag over file over default), and a SHA-256
/// digest of every input file.
#[derive(Serialize, Clone)]
struct RunMeta {
    tool: &'static str,
    version: &'static str,
    command: Vec<String>,
    config: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

/// Flag/file/default resolution with a record of every consumed setting.
struct Ctx {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

impl Ctx {
    fn new(config: Option<&PathBuf>) -> Result<Self> {
        let mut file = BTreeMap::new();
        let mut inputs = BTreeMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)?;
            inputs.insert("config".to_string(), digest_bytes(text.as_bytes()));
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(ElkError::BadParameter(format!(
                        "config line {}: expected `key = value`, got `{raw}`",
                        lineno + 1
                    )));
                };
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Ctx {
            file,
            resolved: BTreeMap::new(),
            inputs,
        })
    }

    fn lookup(&self, key: &str) -> Option<String> {
        self.file.get(key).cloned()
    }

    fn record(&mut self, key: &str, value: impl std::fmt::Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    fn f64(&mut self, key: &str, flag: Option<f64>, default: f64) -> Result<f64> {
        let v = match flag {
            Some(x) => x,
            None => match self.lookup(key) {
                Some(s) => parse_f64(key, &s)?,
                None => default,
            },
        };
        self.record(key, v);
        Ok(v)
    }

    fn req_f64(&mut self, key: &str, flag: Option<f64>) -> Result<f64> {
        let v = match flag {
            Some(x) => x,
            None => match self.lookup(key) {
                Some(s) => parse_f64(key, &s)?,
                None => {
                    return Err(ElkError::BadParameter(format!("--{key} is required")));
                }
            },
        };
        self.record(key, v);
        Ok(v)
    }

    fn usize(&mut self, key: &str, flag: Option<usize>, default: usize) -> Result<usize> {
        let v = match flag {
            Some(x) => x,
            None => match self.lookup(key) {
                Some(s) => s.parse::<usize>().map_err(|_| {
                    ElkError::BadParameter(format!("{key}: cannot parse `{s}` as an integer"))
                })?,
                None => default,
            },
        };
        self.record(key, v);
        Ok(v)
    }

    fn opt_usize(&mut self, key: &str, flag: Option<usize>) -> Result<Option<usize>> {
        let v = match flag {
            Some(x) => Some(x),
            None => match self.lookup(key) {
                Some(s) => Some(s.parse::<usize>().map_err(|_| {
                    ElkError::BadParameter(format!("{key}: cannot parse `{s}` as an integer"))
                })?),
                None => None,
            },
        };
        if let Some(x) = v {
            self.record(key, x);
        }
        Ok(v)
    }

    fn opt_str(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.or_else(|| self.lookup(key));
        if let Some(ref s) = v {
            self.record(key, s);
        }
        v
    }

    fn req_str(&mut self, key: &str, flag: Option<String>) -> Result<String> {
        self.opt_str(key, flag)
            .ok_or_else(|| ElkError::BadParameter(format!("--{key} is required")))
    }

    /// A switch that is on when the flag is present or the file says so.
    fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = flag
            || match self.lookup(key) {
                Some(s) => parse_bool(key, &s)?,
                None => false,
            };
        self.record(key, v);
        Ok(v)
    }

    /// A default-on setting with a `--no-...` style override flag.
    fn on_unless(&mut self, key: &str, off_flag: bool) -> Result<bool> {
        let v = if off_flag {
            false
        } else {
            match self.lookup(key) {
                Some(s) => parse_bool(key, &s)?,
                None => true,
            }
        };
        self.record(key, v);
        Ok(v)
    }

    fn digest_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.inputs.insert(role.to_string(), digest_bytes(&bytes));
        Ok(())
    }

    fn meta(&self) -> RunMeta {
        RunMeta {
            tool: "elkit",
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            config: self.resolved.clone(),
            inputs: self.inputs.clone(),
        }
    }
}

fn digest_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(7 + 64);
    s.push_str("sha256:");
    for b in out {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| ElkError::BadParameter(format!("{key}: cannot parse `{s}` as a number")))
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        other => Err(ElkError::BadParameter(format!(
            "{key}: cannot parse `{other}` as a boolean"
        ))),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            ensure_parent(path)?;
            std::fs::write(path, text)?;
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn json_doc<T: Serialize>(meta: &RunMeta, report: &T) -> String {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        meta: &'a RunMeta,
        report: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { meta, report }).expect("serializable report");
    s.push('\n');
    s
}

fn emit_json<T: Serialize>(out: Option<&Path>, meta: &RunMeta, report: &T) -> Result<()> {
    emit_text(out, &json_doc(meta, report))
}

fn meta_comment(meta: &RunMeta) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} {}", meta.tool, meta.version);
    let _ = writeln!(s, "# command: {}", meta.command.join(" "));
    for (k, v) in &meta.config {
        let _ = writeln!(s, "# config {k} = {v}");
    }
    for (k, v) in &meta.inputs {
        let _ = writeln!(s, "# input {k} = {v}");
    }
    s
}

/// Verdict wrapper for checker outputs: the exit code mirrors `holds`.
#[derive(Serialize)]
struct Checked<T: Serialize> {
    holds: bool,
    report: T,
}

fn verdict_exit(holds: bool) -> u8 {
    if holds {
        0
    } else {
        1
    }
}

// ---------------------------------------------------------------------------
// Shared argument helpers
// ---------------------------------------------------------------------------

fn grid_args(
    ctx: &mut Ctx,
    n: Option<usize>,
    box_half: Option<f64>,
    default_n: usize,
    default_box: f64,
) -> Result<Grid3> {
    let n = ctx.usize("n", n, default_n)?;
    let b = ctx.f64("box", box_half, default_box)?;
    Grid3::new(n, b)
}

/// `value` or `lo:hi:step` into an inclusive sample vector.
fn parse_range(key: &str, s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => Ok(vec![parse_f64(key, parts[0])?]),
        3 => {
            let lo = parse_f64(key, parts[0])?;
            let hi = parse_f64(key, parts[1])?;
            let step = parse_f64(key, parts[2])?;
            if !(step > 0.0) || !step.is_finite() {
                return Err(ElkError::BadParameter(format!(
                    "{key}: range step must be positive, got {step}"
                )));
            }
            if hi < lo {
                return Err(ElkError::BadParameter(format!(
                    "{key}: empty range {lo}:{hi}:{step}"
                )));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| lo + k as f64 * step).collect())
        }
        _ => Err(ElkError::BadParameter(format!(
            "{key}: expected `value` or `lo:hi:step`, got `{s}`"
        ))),
    }
}

fn parse_radii(s: &str) -> Result<Vec<f64>> {
    let rs: Vec<f64> = s
        .split(',')
        .map(|part| parse_f64("radii", part.trim()))
        .collect::<Result<_>>()?;
    if rs.is_empty() {
        return Err(ElkError::BadParameter("radii: empty list".into()));
    }
    for &r in &rs {
        if !(r > 0.0) || !r.is_finite() {
            return Err(ElkError::BadParameter(format!(
                "radii: radii must be positive, got {r}"
            )));
        }
    }
    Ok(rs)
}

/// `geometric:base` (or a bare number) into the ladder start radius.
fn parse_ladder_spec(s: &str) -> Result<f64> {
    let base = match s.strip_prefix("geometric:") {
        Some(rest) => rest,
        None => s,
    };
    let r0 = parse_f64("ladder", base)?;
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(ElkError::BadParameter(format!(
            "ladder: start radius must be positive, got {r0}"
        )));
    }
    Ok(r0)
}

fn resolve_radii(
    ctx: &mut Ctx,
    radii: Option<String>,
    ladder: Option<String>,
    grid: Grid3,
) -> Result<Vec<f64>> {
    let radii_s = ctx.opt_str("radii", radii);
    let ladder_s = ctx.opt_str("ladder", ladder);
    if radii_s.is_some() && ladder_s.is_some() {
        return Err(ElkError::BadParameter(
            "--radii and --ladder are mutually exclusive".into(),
        ));
    }
    let rs = if let Some(s) = radii_s {
        parse_radii(&s)?
    } else if let Some(s) = ladder_s {
        let r0 = parse_ladder_spec(&s)?;
        let l = morrey::ladder_from(r0, grid);
        if l.is_empty() {
            return Err(ElkError::BadParameter(format!(
                "ladder: start radius {r0} exceeds the usable radius {}",
                0.9 * grid.box_half()
            )));
        }
        l
    } else {
        morrey::default_ladder(grid)
    };
    ctx.record("radii.resolved", join_f64(&rs));
    Ok(rs)
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn preset_arg(ctx: &mut Ctx, flag: Option<Preset>) -> Result<Preset> {
    let v = match flag {
        Some(x) => x,
        None => match ctx.lookup("preset") {
            Some(s) => Preset::from_name(&s)?,
            None => {
                return Err(ElkError::BadParameter("--preset is required".into()));
            }
        },
    };
    ctx.record("preset", v.name());
    Ok(v)
}

fn space_arg(ctx: &mut Ctx, flag: Option<SpaceArg>) -> Result<SpaceArg> {
    let v = match flag {
        Some(x) => x,
        None => match ctx.lookup("space") {
            Some(s) => SpaceArg::from_name(&s)?,
            None => SpaceArg::Local,
        },
    };
    ctx.record("space", v.name());
    Ok(v)
}

fn state_arg(ctx: &mut Ctx, flag: Option<StateArg>) -> Result<StateArg> {
    let v = match flag {
        Some(x) => x,
        None => match ctx.lookup("state") {
            Some(s) => StateArg::from_name(&s)?,
            None => StateArg::Explicit,
        },
    };
    ctx.record("state", v.name());
    Ok(v)
}

/// Constant director pointing along the third axis.
fn axis_director(grid: Grid3) -> VectorField {
    let mut v = VectorField::zeros(grid);
    for d in v.comps[2].data.iter_mut() {
        *d = 1.0;
    }
    v
}

fn default_amp(preset: Preset) -> f64 {
    match preset {
        Preset::Coupled => 0.5,
        _ => 1.0,
    }
}

fn default_strength(preset: Preset) -> f64 {
    match preset {
        Preset::Coupled => 0.3,
        _ => 0.5,
    }
}

/// Periodic initial data for the flow presets.
fn preset_flow(preset: Preset, grid: Grid3, amp: f64, strength: f64) -> Result<(VectorField, VectorField)> {
    match preset {
        Preset::Zero => Ok((VectorField::zeros(grid), axis_director(grid))),
        Preset::TaylorGreen => Ok((synth::taylor_green(grid, amp), axis_director(grid))),
        Preset::DirectorWinding => Ok((
            VectorField::zeros(grid),
            synth::director_winding(grid, strength),
        )),
        Preset::Coupled => Ok((
            synth::taylor_green(grid, amp),
            synth::director_winding(grid, strength),
        )),
        Preset::Explicit | Preset::Bump => Err(ElkError::BadParameter(format!(
            "preset '{}' does not define a periodic flow state",
            preset.name()
        ))),
    }
}

fn build_state(which: StateArg, grid: Grid3, band: f64) -> Result<StationaryState> {
    match which {
        StateArg::Trivial => StationaryState::new(
            VectorField::zeros(grid),
            ScalarField::zeros(grid),
            axis_director(grid),
        ),
        StateArg::Explicit => ericksen::counterexample_state(grid, band),
    }
}

fn load_any(path: &Path) -> Result<AnyField> {
    read_field(path)
}

fn load_vector(path: &Path) -> Result<VectorField> {
    match read_field(path)? {
        AnyField::Vector(v) => Ok(v),
        other => Err(ElkError::BadFieldFile(format!(
            "{}: expected a 3-component field, found {} components",
            path.display(),
            other.ncomp()
        ))),
    }
}

// ---------------------------------------------------------------------------
// Shell spectra
// ---------------------------------------------------------------------------

/// Energy per integer wavenumber shell, summed over the given components.
fn shell_spectrum(comps: &[&ScalarField]) -> Vec<f64> {
    let g = comps[0].grid;
    let n = g.n();
    let nc = n / 2 + 1;
    let mut fft = Fft3::new(n);
    let mut spec = vec![Complex64::new(0.0, 0.0); fft.spec_len()];
    let kmax = ((3.0f64).sqrt() * (n as f64 / 2.0)).ceil() as usize + 1;
    let mut bins = vec![0.0f64; kmax + 1];
    let scale = 1.0 / (n * n * n) as f64;
    for f in comps {
        fft.forward(&f.data, &mut spec);
        let mut t = 0usize;
        for i in 0..n {
            let m0 = fold_mode(i, n) as f64;
            for j in 0..n {
                let m1 = fold_mode(j, n) as f64;
                for kc in 0..nc {
                    let m2 = kc as f64;
                    let shell = (m0 * m0 + m1 * m1 + m2 * m2).sqrt().round() as usize;
                    bins[shell] += herm_weight(kc, n) * spec[t].norm_sqr() * scale * scale;
                    t += 1;
                }
            }
        }
    }
    bins
}

fn spectrum_csv(meta: &RunMeta, labeled: &[(&str, Vec<f64>)]) -> String {
    let mut s = meta_comment(meta);
    s.push_str("field,shell,energy\n");
    for (label, bins) in labeled {
        for (k, e) in bins.iter().enumerate() {
            let _ = writeln!(s, "{label},{k},{e}");
        }
    }
    s
}

// ---------------------------------------------------------------------------
// eta-map
// ---------------------------------------------------------------------------

fn region_tag(region: EtaRegion) -> &'static str {
    match region {
        EtaRegion::Undefined => "undefined",
        EtaRegion::NonPositive => "eta_nonpositive",
        EtaRegion::Positive => "eta_positive",
    }
}

fn cmd_eta_map(ctx: &mut Ctx, a: EtaMapArgs) -> Result<u8> {
    let gamma_s = ctx.req_str("gamma", a.gamma)?;
    let p_s = ctx.req_str("p", a.p)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let gammas = parse_range("gamma", &gamma_s)?;
    let ps = parse_range("p", &p_s)?;
    let points = morrey::eta_region_map(&gammas, &ps);
    let meta = ctx.meta();
    let mut text = meta_comment(&meta);
    text.push_str("gamma,p,eta,region\n");
    for pt in &points {
        let eta = match pt.eta {
            Some(e) => format!("{e}"),
            None => String::new(),
        };
        let _ = writeln!(text, "{},{},{},{}", pt.gamma, pt.p, eta, region_tag(pt.region));
    }
    emit_text(out.as_deref(), &text)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// norm / profile
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct NormReport {
    space: &'static str,
    p: f64,
    gamma: f64,
    components: usize,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ladder: Option<morrey::RadialReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decaying: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaled_decaying: Option<bool>,
}

fn cmd_norm(ctx: &mut Ctx, a: NormArgs) -> Result<u8> {
    let input = ctx.req_str("input", a.input)?;
    let path = PathBuf::from(&input);
    ctx.digest_input("input", &path)?;
    let field = load_any(&path)?;
    let grid = field.grid();
    let space = space_arg(ctx, a.space)?;
    let gamma = ctx.f64("gamma", a.gamma, 1.0)?;
    let p = ctx.f64("p", a.p, 3.0)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);

    let report = match space {
        SpaceArg::Local => {
            let params = MorreyParams::new(p, gamma)?;
            let radii = resolve_radii(ctx, a.radii, a.ladder, grid)?;
            let rep = match &field {
                AnyField::Scalar(f) => morrey::local_morrey_norm(f, &params, &radii)?,
                AnyField::Vector(f) => morrey::local_morrey_norm(f, &params, &radii)?,
                AnyField::Tensor(f) => morrey::local_morrey_norm(f, &params, &radii)?,
            };
            NormReport {
                space: "local",
                p,
                gamma,
                components: field.ncomp(),
                value: rep.value,
                decaying: Some(rep.decaying()),
                scaled_decaying: Some(rep.scaled_decaying()),
                ladder: Some(rep),
            }
        }
        SpaceArg::Weighted => {
            let value = match &field {
                AnyField::Scalar(f) => morrey::weighted_lebesgue_norm(f, p, gamma),
                AnyField::Vector(f) => morrey::weighted_lebesgue_norm(f, p, gamma),
                AnyField::Tensor(f) => morrey::weighted_lebesgue_norm(f, p, gamma),
            };
            NormReport {
                space: "weighted",
                p,
                gamma,
                components: field.ncomp(),
                value,
                ladder: None,
                decaying: None,
                scaled_decaying: None,
            }
        }
    };
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &report)?;
    Ok(0)
}

fn cmd_profile(ctx: &mut Ctx, a: ProfileArgs) -> Result<u8> {
    let input = ctx.req_str("input", a.input)?;
    let path = PathBuf::from(&input);
    ctx.digest_input("input", &path)?;
    let field = load_any(&path)?;
    let grid = field.grid();
    let gamma = ctx.f64("gamma", a.gamma, 1.0)?;
    let p = ctx.f64("p", a.p, 3.0)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let params = MorreyParams::new(p, gamma)?;
    let radii = resolve_radii(ctx, a.radii, a.ladder, grid)?;
    let rep = match &field {
        AnyField::Scalar(f) => morrey::annulus_profile(f, &params, &radii)?,
        AnyField::Vector(f) => morrey::annulus_profile(f, &params, &radii)?,
        AnyField::Tensor(f) => morrey::annulus_profile(f, &params, &radii)?,
    };
    let meta = ctx.meta();
    let mut text = meta_comment(&meta);
    text.push_str("radius,value,scaled,under_resolved,boundary_clipped\n");
    for e in &rep.entries {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            e.radius, e.value, e.scaled, e.under_resolved, e.boundary_clipped
        );
    }
    emit_text(out.as_deref(), &text)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// riesz-test
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RieszReport {
    n: usize,
    box_half: f64,
    seeds: usize,
    single_mode_max: f64,
    composition_max: f64,
    poisson_max: f64,
    tol_single: f64,
    tol_compose: f64,
    tol_poisson: f64,
}

fn cmd_riesz(ctx: &mut Ctx, a: RieszArgs) -> Result<u8> {
    let grid = grid_args(ctx, a.n, a.box_half, 32, PI)?;
    let seeds = ctx.usize("seeds", a.seeds, 10)?;
    let tol_single = ctx.f64("tol.single", a.tol_single, 1e-12)?;
    let tol_compose = ctx.f64("tol.compose", a.tol_compose, 1e-10)?;
    let tol_poisson = ctx.f64("tol.poisson", a.tol_poisson, 1e-8)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);

    let mut plan = SpectralPlan::new(grid);
    let len = grid.len();

    // Single modes: the transform of sin(k.x) along axis a is
    // (k_a/|k|) cos(k.x) exactly.
    let modes: [[f64; 3]; 5] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [2.0, 1.0, 0.0],
        [1.0, 2.0, 3.0],
    ];
    let k0 = PI / grid.box_half();
    let mut single_mode_max = 0.0f64;
    for m in modes {
        let k = [m[0] * k0, m[1] * k0, m[2] * k0];
        let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        let f = ScalarField::from_fn(grid, |x| (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).sin());
        for axis in 0..3 {
            let got = plan.riesz(&f, axis);
            let want =
                ScalarField::from_fn(grid, |x| (k[axis] / kn) * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).cos());
            for t in 0..len {
                single_mode_max = single_mode_max.max((got.data[t] - want.data[t]).abs());
            }
        }
    }

    // Composition: the three squared transforms sum to minus the identity
    // on mean-free resolved data (the odd-symbol convention annihilates the
    // Nyquist planes, so the battery removes the unresolved band first).
    let mut composition_max = 0.0f64;
    for seed in 0..seeds {
        let raw = synth::random_scalar(grid, 300 + seed as u64, 6);
        let mut spec = plan.forward(&raw);
        spec[0] = Complex64::new(0.0, 0.0);
        plan.dealias(&mut spec);
        let f = plan.inverse(&spec);
        let mut acc = ScalarField::zeros(grid);
        for axis in 0..3 {
            let r1 = plan.riesz(&f, axis);
            let r2 = plan.riesz(&r1, axis);
            for t in 0..len {
                acc.data[t] += r2.data[t];
            }
        }
        for t in 0..len {
            composition_max = composition_max.max((acc.data[t] + f.data[t]).abs());
        }
    }

    // Pressure reconstruction: the recovered potential must solve the
    // discrete Poisson equation it was built from.
    let mut poisson_max = 0.0f64;
    for seed in 0..seeds {
        let u = plan.leray_project(&synth::random_solenoidal(grid, 700 + seed as u64, 6));
        let v = synth::random_unit_director(grid, 900 + seed as u64, 4);
        let pres = plan.pressure_q(&u, Some(&v), 1e-8)?;
        poisson_max = poisson_max.max(plan.poisson_residual(&u, Some(&v), &pres.q));
    }

    let holds =
        single_mode_max <= tol_single && composition_max <= tol_compose && poisson_max <= tol_poisson;
    let report = Checked {
        holds,
        report: RieszReport {
            n: grid.n(),
            box_half: grid.box_half(),
            seeds,
            single_mode_max,
            composition_max,
            poisson_max,
            tol_single,
            tol_compose,
            tol_poisson,
        },
    };
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &report)?;
    Ok(verdict_exit(holds))
}

// ---------------------------------------------------------------------------
// pressure
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PressureReport {
    n: usize,
    box_half: f64,
    div_max: f64,
    poisson_residual: f64,
    q_l2: f64,
    q_velocity_l2: f64,
    q_director_l2: f64,
    grad_q_max: f64,
    tol_poisson: f64,
}

fn scalar_l2(f: &ScalarField) -> f64 {
    let cv = f.grid.cell_volume();
    (f.data.iter().map(|d| d * d).sum::<f64>() * cv).sqrt()
}

fn cmd_pressure(ctx: &mut Ctx, a: PressureArgs) -> Result<u8> {
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let dump = ctx.switch("dump-spectra", a.dump_spectra)?;
    let tol_div = ctx.f64("tol.div", a.tol_div, 1e-8)?;
    let tol_poisson = ctx.f64("tol.poisson", a.tol_poisson, 1e-8)?;

    let (u, v) = if let Some(path_s) = ctx.opt_str("u", a.u.clone()) {
        if a.preset.is_some() {
            return Err(ElkError::BadParameter(
                "--preset and --u are mutually exclusive".into(),
            ));
        }
        let upath = PathBuf::from(&path_s);
        ctx.digest_input("u", &upath)?;
        let u = load_vector(&upath)?;
        let v = match ctx.opt_str("v", a.v) {
            Some(vs) => {
                let vpath = PathBuf::from(&vs);
                ctx.digest_input("v", &vpath)?;
                Some(load_vector(&vpath)?)
            }
            None => None,
        };
        (u, v)
    } else {
        let preset = preset_arg(ctx, a.preset)?;
        let grid = grid_args(ctx, a.n, a.box_half, 32, PI)?;
        let amp = ctx.f64("amp", a.amp, default_amp(preset))?;
        let strength = ctx.f64("strength", a.strength, default_strength(preset))?;
        let (u, v) = preset_flow(preset, grid, amp, strength)?;
        (u, Some(v))
    };

    let grid = u.grid();
    if let Some(ref vv) = v {
        grid.same_as(&vv.grid())?;
    }
    let mut plan = SpectralPlan::new(grid);
    let pres = plan.pressure_q(&u, v.as_ref(), tol_div)?;
    let residual = plan.poisson_residual(&u, v.as_ref(), &pres.q);
    let holds = residual <= tol_poisson;

    let report = Checked {
        holds,
        report: PressureReport {
            n: grid.n(),
            box_half: grid.box_half(),
            div_max: pres.div_max,
            poisson_residual: residual,
            q_l2: scalar_l2(&pres.q),
            q_velocity_l2: scalar_l2(&pres.q_velocity),
            q_director_l2: scalar_l2(&pres.q_director),
            grad_q_max: pres.grad_q.max_abs(),
            tol_poisson,
        },
    };
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &report)?;

    if dump {
        let Some(ref out_path) = out else {
            return Err(ElkError::BadParameter(
                "--dump-spectra needs --out to name the spectra file".into(),
            ));
        };
        let spath = out_path.with_extension("spectra.csv");
        let bins = shell_spectrum(&[&pres.q]);
        emit_text(Some(&spath), &spectrum_csv(&meta, &[("q", bins)]))?;
    }
    Ok(verdict_exit(holds))
}

// ---------------------------------------------------------------------------
// counterexample
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CounterexampleReport {
    n: usize,
    box_half: f64,
    band: f64,
    closed_form: ClosedFormResiduals,
    closed_form_zero: bool,
    refinement: Fd4RefinementReport,
    residual_decreasing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    liouville: Option<verify::LiouvilleVerdict>,
}

fn cmd_counterexample(ctx: &mut Ctx, a: CounterexampleArgs) -> Result<u8> {
    let grid = grid_args(ctx, a.n, a.box_half, 64, 2.0)?;
    let band = ctx.f64("band", a.band, 0.9)?;
    let report_kind = ctx.opt_str("report", a.report);
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);

    let fine = ericksen::counterexample_state(grid, band)?;
    let coarse_grid = Grid3::new(grid.n() / 2, grid.box_half())?;
    let coarse = ericksen::counterexample_state(coarse_grid, band)?;

    let closed = ericksen::closed_form_residual_max(&fine)?;
    let closed_zero =
        closed.momentum_max == 0.0 && closed.director_max == 0.0 && closed.divergence_max == 0.0;
    let refinement = ericksen::fd4_refinement_report(&coarse, &fine)?;
    let populated = refinement.fine.eligible_shell > 0 && refinement.fine.eligible_constant > 0;
    let decreasing =
        populated && refinement.shell_max_ratio > 1.0 && refinement.shell_rms_ratio > 1.0;

    let liouville = match report_kind.as_deref() {
        None => None,
        Some("liouville") => {
            let gamma = ctx.f64("gamma", a.gamma, 1.0)?;
            let p = ctx.f64("p", a.p, 3.0)?;
            let params = MorreyParams::new(p, gamma)?;
            Some(verify::liouville_check(&fine, &params)?)
        }
        Some(other) => {
            return Err(ElkError::BadParameter(format!(
                "unknown report '{other}' (expected 'liouville')"
            )));
        }
    };
    let flagged = liouville
        .as_ref()
        .map(|l| l.verdict == Verdict::CounterexampleFlag)
        .unwrap_or(false);

    let holds = closed_zero && decreasing && !flagged;
    let report = Checked {
        holds,
        report: CounterexampleReport {
            n: grid.n(),
            box_half: grid.box_half(),
            band,
            closed_form: closed,
            closed_form_zero: closed_zero,
            refinement,
            residual_decreasing: decreasing,
            liouville,
        },
    };
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &report)?;
    Ok(verdict_exit(holds))
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveSummary {
    preset: String,
    n: usize,
    box_half: f64,
    dt: f64,
    t_end: f64,
    steps: usize,
    dt_used: f64,
    e0: f64,
    max_defect: f64,
    max_abs_defect: f64,
    max_tight_defect: f64,
    sup_u_inf: f64,
    sup_grad_v_inf: f64,
    ns_path: bool,
    final_t: f64,
    files: Vec<String>,
    snapshots: Vec<f64>,
    warnings: Vec<String>,
    aborted: Option<String>,
}

fn cmd_solve(ctx: &mut Ctx, a: SolveArgs) -> Result<u8> {
    let preset = preset_arg(ctx, a.preset)?;
    let grid = grid_args(ctx, a.n, a.box_half, 32, PI)?;
    let dt = ctx.f64("dt", a.dt, 1e-3)?;
    let t_end = ctx.f64("T", a.t_end, 0.25)?;
    let amp = ctx.f64("amp", a.amp, default_amp(preset))?;
    let strength = ctx.f64("strength", a.strength, default_strength(preset))?;
    let out_dir = PathBuf::from(ctx.req_str("out", a.out)?);
    let probe_radii = match ctx.opt_str("radii", a.radii) {
        Some(s) => Some(parse_radii(&s)?),
        None => None,
    };
    let stride = ctx.usize("stride", a.stride, 1)?;
    let snapshots = ctx.opt_usize("snapshots", a.snapshots)?;
    let dump = ctx.switch("dump-spectra", a.dump_spectra)?;
    let dealias = ctx.on_unless("dealias", a.no_dealias)?;
    let renormalize = ctx.on_unless("renormalize", a.no_renormalize)?;
    let force_coupled = ctx.switch("force-coupled", a.force_coupled)?;
    let cfl_limit = ctx.f64("cfl-limit", a.cfl_limit, 0.5)?;

    let (u0, v0) = preset_flow(preset, grid, amp, strength)?;
    let mut cfg = SolverConfig::fixed(dt, t_end);
    cfg.dealias = dealias;
    cfg.renormalize = renormalize;
    cfg.force_coupled = force_coupled;
    cfg.cfl_limit = cfl_limit;
    cfg.probe = probe_radii.map(|radii| ProbeConfig { radii, stride });

    std::fs::create_dir_all(&out_dir)?;
    let meta = ctx.meta();

    let mut snap_times: Vec<f64> = Vec::new();
    let mut snap_errors: Vec<String> = Vec::new();
    let output = if let Some(stride_s) = snapshots {
        cfg.snapshot_stride = stride_s;
        let dir = out_dir.clone();
        let mut idx = 0usize;
        let times = &mut snap_times;
        let errors = &mut snap_errors;
        ericksen::evolve_with_observer(&u0, &v0, &cfg, move |st| {
            for (name, field) in [
                ("u", AnyField::Vector(st.u.clone())),
                ("v", AnyField::Vector(st.v.clone())),
                ("q", AnyField::Scalar(st.q.clone())),
            ] {
                let path = dir.join(format!("snap_{idx:04}_{name}.elf3"));
                if let Err(e) = write_field(&path, &field) {
                    errors.push(format!("snapshot write failed: {e}"));
                }
            }
            times.push(st.t);
            idx += 1;
        })?
    } else {
        ericksen::evolve(&u0, &v0, &cfg)?
    };

    let mut files = Vec::new();
    output.ledger.write_csv(out_dir.join("ledger.csv"))?;
    files.push("ledger.csv".to_string());
    if let Some(ref series) = output.probes {
        emit_json(Some(&out_dir.join("probes.json")), &meta, series)?;
        files.push("probes.json".to_string());
    }
    write_field(
        &out_dir.join("u.elf3"),
        &AnyField::Vector(output.final_state.u.clone()),
    )?;
    write_field(
        &out_dir.join("v.elf3"),
        &AnyField::Vector(output.final_state.v.clone()),
    )?;
    write_field(
        &out_dir.join("q.elf3"),
        &AnyField::Scalar(output.final_state.q.clone()),
    )?;
    files.extend(["u.elf3".into(), "v.elf3".into(), "q.elf3".into()]);
    if dump {
        let fu = &output.final_state.u;
        let bins_u = shell_spectrum(&[&fu.comps[0], &fu.comps[1], &fu.comps[2]]);
        let bins_q = shell_spectrum(&[&output.final_state.q]);
        emit_text(
            Some(&out_dir.join("spectra.csv")),
            &spectrum_csv(&meta, &[("u", bins_u), ("q", bins_q)]),
        )?;
        files.push("spectra.csv".to_string());
    }

    let mut warnings = output.warnings.clone();
    warnings.extend(snap_errors);
    let summary = SolveSummary {
        preset: preset.name().to_string(),
        n: grid.n(),
        box_half: grid.box_half(),
        dt,
        t_end,
        steps: output.steps,
        dt_used: output.dt_used,
        e0: output.ledger.e0(),
        max_defect: output.ledger.max_defect(),
        max_abs_defect: output.ledger.max_abs_defect(),
        max_tight_defect: output.ledger.max_tight_defect_through(f64::INFINITY),
        sup_u_inf: output.sup_u_inf,
        sup_grad_v_inf: output.sup_grad_v_inf,
        ns_path: output.ns_path,
        final_t: output.final_state.t,
        files,
        snapshots: snap_times,
        warnings,
        aborted: output.aborted.clone(),
    };
    emit_json(Some(&out_dir.join("run.json")), &meta, &summary)?;

    if let Some(reason) = output.aborted {
        return Err(ElkError::SolverAbort(reason));
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// check subcommands
// ---------------------------------------------------------------------------

fn read_ledger_csv(path: &Path) -> Result<EnergyLedger> {
    const HEADER: &str = "t,ku2,kdv2,cum_diss_u,cum_diss_v,defect";
    let text = std::fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| ElkError::BadFieldFile(format!("{}: empty ledger", path.display())))?;
    if header.trim() != HEADER {
        return Err(ElkError::BadFieldFile(format!(
            "{}: expected header `{HEADER}`, got `{header}`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(ElkError::BadFieldFile(format!(
                "{}: row {} has {} columns, expected 6",
                path.display(),
                k + 1,
                cols.len()
            )));
        }
        let mut vals = [0.0f64; 6];
        for (slot, col) in vals.iter_mut().zip(&cols) {
            *slot = col.trim().parse::<f64>().map_err(|_| {
                ElkError::BadFieldFile(format!(
                    "{}: row {}: cannot parse `{col}` as a number",
                    path.display(),
                    k + 1
                ))
            })?;
        }
        rows.push(LedgerRow {
            t: vals[0],
            ku2: vals[1],
            kdv2: vals[2],
            cum_diss_u: vals[3],
            cum_diss_v: vals[4],
            defect: vals[5],
            diss_u_inst: 0.0,
            diss_v_inst: 0.0,
            cum_slack: 0.0,
        });
    }
    Ok(EnergyLedger { rows })
}

fn read_probe_series(path: &Path) -> Result<ProbeSeries> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| ElkError::BadFieldFile(format!("{}: {e}", path.display())))?;
    let body = if value.get("report").is_some() {
        value.get("report").cloned().unwrap()
    } else if value.get("series").is_some() {
        value.get("series").cloned().unwrap()
    } else if value.get("probes").is_some() {
        value.get("probes").cloned().unwrap()
    } else {
        value
    };
    serde_json::from_value(body)
        .map_err(|e| ElkError::BadFieldFile(format!("{}: not a probe series: {e}", path.display())))
}

fn cmd_check_energy(ctx: &mut Ctx, a: CheckEnergyArgs) -> Result<u8> {
    let ledger_s = ctx.req_str("ledger", a.ledger)?;
    let path = PathBuf::from(&ledger_s);
    ctx.digest_input("ledger", &path)?;
    let tol = ctx.f64("tol.energy", a.tol_energy, 1e-3)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let ledger = read_ledger_csv(&path)?;
    let report = verify::global_energy_check(&ledger, tol)?;
    let holds = report.global.as_ref().map(|g| g.holds).unwrap_or(false);
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &Checked { holds, report })?;
    Ok(verdict_exit(holds))
}

fn cmd_check_local(ctx: &mut Ctx, a: CheckLocalArgs) -> Result<u8> {
    let probes_s = ctx.req_str("probes", a.probes)?;
    let path = PathBuf::from(&probes_s);
    ctx.digest_input("probes", &path)?;
    let t0 = ctx.req_f64("t0", a.t0)?;
    let t1 = ctx.req_f64("t1", a.t1)?;
    let eps = ctx.f64("eps", a.eps, (t1 - t0) / 8.0)?;
    let tol = ctx.f64("tol.local", a.tol_local, 1e-3)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let series = read_probe_series(&path)?;
    let window = TimeCutoff::new(t0, t1, eps)?;
    let report = verify::local_energy_defect(&series, &window, tol)?;
    let holds = report.local.as_ref().map(|l| l.holds).unwrap_or(false);
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &Checked { holds, report })?;
    Ok(verdict_exit(holds))
}

fn cmd_check_caccioppoli(ctx: &mut Ctx, a: CheckCaccArgs) -> Result<u8> {
    let which = state_arg(ctx, a.state)?;
    let grid = grid_args(ctx, a.n, a.box_half, 32, 4.0)?;
    let band = ctx.f64("band", a.band, 0.9)?;
    let radius = ctx.f64("R", a.radius, 2.0)?;
    let gamma = ctx.f64("gamma", a.gamma, 1.0)?;
    let p = ctx.f64("p", a.p, 3.0)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let params = MorreyParams::new(p, gamma)?;
    let state = build_state(which, grid, band)?;
    let report = verify::caccioppoli_check(&state, radius, &params)?;
    let holds = report.holds;
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &Checked { holds, report })?;
    Ok(verdict_exit(holds))
}

fn cmd_check_embedding(ctx: &mut Ctx, a: CheckEmbeddingArgs) -> Result<u8> {
    let grid = grid_args(ctx, a.n, a.box_half, 64, 10.0)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let report = verify::embedding_suite(grid)?;
    let holds = report.members.iter().all(|m| m.consistent)
        && report.gamma_ordering.iter().all(|g| g.violations == 0);
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &Checked { holds, report })?;
    Ok(verdict_exit(holds))
}

fn cmd_check_liouville(ctx: &mut Ctx, a: CheckLiouvilleArgs) -> Result<u8> {
    let which = state_arg(ctx, a.state)?;
    let grid = grid_args(ctx, a.n, a.box_half, 64, 4.0)?;
    let band = ctx.f64("band", a.band, 0.9)?;
    let gamma = ctx.f64("gamma", a.gamma, 1.0)?;
    let p = ctx.f64("p", a.p, 3.0)?;
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let params = MorreyParams::new(p, gamma)?;
    let state = build_state(which, grid, band)?;
    let report = verify::liouville_check(&state, &params)?;
    let holds = report.verdict != Verdict::CounterexampleFlag;
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &Checked { holds, report })?;
    Ok(verdict_exit(holds))
}

fn cmd_check_sobolev(ctx: &mut Ctx, a: CheckSobolevArgs) -> Result<u8> {
    let out = ctx.opt_str("out", a.out).map(PathBuf::from);
    let u = if let Some(path_s) = ctx.opt_str("u", a.u.clone()) {
        if a.preset.is_some() {
            return Err(ElkError::BadParameter(
                "--preset and --u are mutually exclusive".into(),
            ));
        }
        let path = PathBuf::from(&path_s);
        ctx.digest_input("u", &path)?;
        load_vector(&path)?
    } else {
        let preset = match a.preset {
            Some(p) => {
                ctx.record("preset", p.name());
                p
            }
            None => match ctx.lookup("preset") {
                Some(s) => {
                    let p = Preset::from_name(&s)?;
                    ctx.record("preset", p.name());
                    p
                }
                None => {
                    ctx.record("preset", Preset::TaylorGreen.name());
                    Preset::TaylorGreen
                }
            },
        };
        let grid = grid_args(ctx, a.n, a.box_half, 32, PI)?;
        let amp = ctx.f64("amp", a.amp, default_amp(preset))?;
        let (u, _) = preset_flow(preset, grid, amp, default_strength(preset))?;
        u
    };
    let report = verify::improved_sobolev_check(&u)?;
    let meta = ctx.meta();
    emit_json(out.as_deref(), &meta, &report)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GenReport {
    preset: String,
    n: usize,
    box_half: f64,
    files: Vec<String>,
}

fn cmd_gen(ctx: &mut Ctx, a: GenArgs) -> Result<u8> {
    let preset = preset_arg(ctx, a.preset)?;
    let default_box = match preset {
        Preset::Explicit | Preset::Bump => 2.0,
        _ => PI,
    };
    let grid = grid_args(ctx, a.n, a.box_half, 32, default_box)?;
    let out_dir = PathBuf::from(ctx.req_str("out", a.out)?);
    std::fs::create_dir_all(&out_dir)?;

    let mut files = Vec::new();
    match preset {
        Preset::Bump => {
            let radius = 1.2;
            let width = 0.4;
            ctx.record("bump.radius", radius);
            ctx.record("bump.width", width);
            let f = synth::plateau_bump(grid, radius, width);
            write_field(&out_dir.join("bump.elf3"), &AnyField::Scalar(f))?;
            files.push("bump.elf3".to_string());
        }
        Preset::Explicit => {
            let band = ctx.f64("band", a.band, 0.9)?;
            let s = ericksen::counterexample_state(grid, band)?;
            write_field(&out_dir.join("u.elf3"), &AnyField::Vector(s.u.clone()))?;
            write_field(&out_dir.join("v.elf3"), &AnyField::Vector(s.v.clone()))?;
            write_field(&out_dir.join("p.elf3"), &AnyField::Scalar(s.p.clone()))?;
            files.extend(["u.elf3".into(), "v.elf3".into(), "p.elf3".into()]);
        }
        _ => {
            let amp = ctx.f64("amp", a.amp, default_amp(preset))?;
            let strength = ctx.f64("strength", a.strength, default_strength(preset))?;
            let (u, v) = preset_flow(preset, grid, amp, strength)?;
            write_field(&out_dir.join("u.elf3"), &AnyField::Vector(u))?;
            write_field(&out_dir.join("v.elf3"), &AnyField::Vector(v))?;
            write_field(
                &out_dir.join("p.elf3"),
                &AnyField::Scalar(ScalarField::zeros(grid)),
            )?;
            files.extend(["u.elf3".into(), "v.elf3".into(), "p.elf3".into()]);
        }
    }

    let report = GenReport {
        preset: preset.name().to_string(),
        n: grid.n(),
        box_half: grid.box_half(),
        files,
    };
    let meta = ctx.meta();
    emit_json(Some(&out_dir.join("gen.json")), &meta, &report)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

fn exit_code(e: &ElkError) -> u8 {
    match e {
        ElkError::Precondition(_) | ElkError::SolverAbort(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut ctx = Ctx::new(cli.config.as_ref())?;
    match cli.cmd {
        Cmd::EtaMap(a) => cmd_eta_map(&mut ctx, a),
        Cmd::Norm(a) => cmd_norm(&mut ctx, a),
        Cmd::Profile(a) => cmd_profile(&mut ctx, a),
        Cmd::RieszTest(a) => cmd_riesz(&mut ctx, a),
        Cmd::Pressure(a) => cmd_pressure(&mut ctx, a),
        Cmd::Counterexample(a) => cmd_counterexample(&mut ctx, a),
        Cmd::Solve(a) => cmd_solve(&mut ctx, a),
        Cmd::Check { what } => match what {
            CheckCmd::Energy(a) => cmd_check_energy(&mut ctx, a),
            CheckCmd::LocalEnergy(a) => cmd_check_local(&mut ctx, a),
            CheckCmd::Caccioppoli(a) => cmd_check_caccioppoli(&mut ctx, a),
            CheckCmd::Embedding(a) => cmd_check_embedding(&mut ctx, a),
            CheckCmd::Liouville(a) => cmd_check_liouville(&mut ctx, a),
            CheckCmd::Sobolev(a) => cmd_check_sobolev(&mut ctx, a),
        },
        Cmd::Gen(a) => cmd_gen(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
