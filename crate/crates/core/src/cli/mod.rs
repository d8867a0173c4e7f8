//! Command-line interface: `relation`, `ai`, `continue` and `scan`.
//!
//! Exit codes: 0 success, 2 usage, 3 domain error, 4 continuation domain exceeded.

mod config;

use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::continuation::{self, FullParams, NewtonConfig, ParamScheme};
use crate::error::Error;
use crate::hyperbolicity::certify;
use crate::map3d;
use crate::relation::{BranchLabel, RelationCoeffs};
use crate::symbolic::{
    self, AIState, ClosedFormCase, Construction, Direction, RegionQuery, SymbolWord, TrappingSet,
};

pub use config::ConfigFile;

/// Environment variable selecting the worker thread count.
pub const THREADS_ENV: &str = "AILIMIT_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(Error::StepUnderflow { .. }) => 4,
            CliError::Domain(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Domain(e) => write!(f, "{}: {e}", e.name()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "ailimit",
    version,
    about = "Anti-integrable limit states of 3D quadratic maps"
)]
struct Cli {
    /// File of `key = value` lines; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the limit relation or print its invariants.
    Relation(RelationArgs),
    /// Construct limit states.
    Ai(AiArgs),
    /// Continue a limit state to a periodic orbit of the 3D map.
    Continue(ContinueArgs),
    /// Parameter scans (trapping regions, period-2 solutions).
    Scan(ScanArgs),
}

#[derive(Args, Debug, Clone)]
struct CoeffArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
}

impl CoeffArgs {
    fn resolve(&self, cfg: &ConfigFile) -> Result<RelationCoeffs, CliError> {
        let alpha1 = finite(cfg.or(self.alpha1, "alpha1", -1.0)?, "--alpha1")?;
        let sigma1 = finite(cfg.or(self.sigma1, "sigma1", 0.0)?, "--sigma1")?;
        let a = finite(cfg.or(self.a, "a", 1.0)?, "--a")?;
        let c = finite(cfg.or(self.c, "c", 0.0)?, "--c")?;
        Ok(RelationCoeffs::new(alpha1, sigma1, a, c))
    }
}

fn finite(x: f64, flag: &str) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(usage(format!("{flag} must be finite")))
    }
}

#[derive(Args, Debug)]
struct RelationArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    /// Points per branch.
    #[arg(long)]
    samples: Option<usize>,
    /// Print discriminant, canonical form and slope samples as JSON.
    #[arg(long)]
    info: bool,
    #[arg(long, allow_hyphen_values = true)]
    umin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    umax: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ClosedFormArg {
    SquareOne,
    ZeroMinusOne,
}

#[derive(Args, Debug)]
struct AiArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    /// Symbol word over '+' and '-'.
    #[arg(long, allow_hyphen_values = true)]
    word: Option<String>,
    /// Trapping set `lo:hi[,lo:hi...]`.
    #[arg(long = "B", allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum)]
    closed_form: Option<ClosedFormArg>,
    #[arg(long)]
    period: Option<usize>,
    /// Enumerate all states of this period.
    #[arg(long)]
    enumerate: Option<usize>,
    /// Periodic orbit of the unimodal branch with this cbar.
    #[arg(long)]
    unimodal: Option<f64>,
    #[arg(long)]
    seed: Option<f64>,
}

#[derive(Args, Debug)]
struct ContinueArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    #[arg(long, allow_hyphen_values = true)]
    word: Option<String>,
    /// Comma-separated values of one period of a limit state.
    #[arg(long, allow_hyphen_values = true)]
    state: Option<String>,
    /// JSON limit state as printed by `ai`.
    #[arg(long)]
    state_file: Option<PathBuf>,
    #[arg(long = "B", allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha_drift: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_drift: Option<f64>,
    /// Initial number of homotopy steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Newton residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Half-width of the unit-circle band for per-step monodromy moduli.
    #[arg(long)]
    band: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum ScanMode {
    Region,
    Period2,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum DirectionArg {
    Forward,
    Backward,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long, value_enum)]
    mode: Option<ScanMode>,
    /// Grid `lo:hi:step` (or a single value) for r = sigma1 / sqrt|alpha1|.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long = "B", allow_hyphen_values = true)]
    b: Option<String>,
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}

/// Runs the CLI on explicit arguments, printing to stdout/stderr, and
/// returns the exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(Output { text, failure }) => {
            print!("{text}");
            match failure {
                None => 0,
                Some(msg) => {
                    eprintln!("error: {msg}");
                    3
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Output {
    text: String,
    /// Set when output was produced but a verification failed.
    failure: Option<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Output {
            text,
            failure: None,
        }
    }
}

fn dispatch(cli: Cli) -> Result<Output, CliError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let out = match &cli.command {
        Command::Relation(a) => cmd_relation(a, &cfg)?,
        Command::Ai(a) => cmd_ai(a, &cfg)?,
        Command::Continue(a) => cmd_continue(a, &cfg)?,
        Command::Scan(a) => cmd_scan(a, &cfg)?,
    };
    cfg.check_unused()?;
    Ok(out)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_json(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}

fn cmd_relation(args: &RelationArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let coeffs = args.coeffs.resolve(cfg)?;
    let samples = cfg.or(args.samples, "samples", 100)?;
    let umin = finite(cfg.or(args.umin, "umin", -3.0)?, "--umin")?;
    let umax = finite(cfg.or(args.umax, "umax", 3.0)?, "--umax")?;
    if samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    if !(umax > umin) {
        return Err(usage("--umax must exceed --umin"));
    }
    let branches = if coeffs.a() != 0.0 {
        vec![BranchLabel::Plus, BranchLabel::Minus]
    } else if coeffs.b() != 0.0 {
        vec![BranchLabel::Principal]
    } else {
        return Err(Error::DegenerateBranch("a = b = 0 (vertical-line relation)").into());
    };
    let us: Vec<f64> = if samples == 1 {
        vec![umin]
    } else {
        (0..samples)
            .map(|i| umin + (umax - umin) * i as f64 / (samples - 1) as f64)
            .collect()
    };
    if args.info || cfg.or(None, "info", false)? {
        let mut slopes = Vec::new();
        let step = (us.len() / 5).max(1);
        for &s in &branches {
            for &u in us.iter().step_by(step) {
                if let Ok(v) = coeffs.forward_branch(s, u) {
                    slopes.push(json!({
                        "u": u,
                        "v": v,
                        "branch": s.symbol().to_string(),
                        "slope": coeffs.slope_unchecked(u, v),
                    }));
                }
            }
        }
        let info = json!({
            "coeffs": coeffs,
            "discriminant": coeffs.discriminant(),
            "canonical": coeffs.rescale_canonical(),
            "slope_samples": slopes,
        });
        return Ok(Output::ok(to_json(&info)));
    }
    let mut text = String::from("u,v,branch\n");
    for &s in &branches {
        for &u in &us {
            match coeffs.forward_branch(s, u) {
                Ok(v) => {
                    let _ = writeln!(text, "{},{},{}", fmt_f64(u), fmt_f64(v), s.symbol());
                }
                Err(Error::NegativeRadicand { .. }) | Err(Error::DivisionByZero(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(Output::ok(text))
}

fn state_json(state: &AIState) -> Value {
    let mut v = serde_json::to_value(state).expect("serializable state");
    if let Value::Object(m) = &mut v {
        m.insert("period".into(), json!(state.period()));
        m.insert(
            "certificate".into(),
            serde_json::to_value(certify(state)).expect("certificate"),
        );
    }
    v
}

fn parse_word(s: &str) -> Result<SymbolWord, CliError> {
    s.parse().map_err(|e: Error| usage(format!("--word: {e}")))
}

fn parse_set(s: &str) -> Result<TrappingSet, CliError> {
    s.parse().map_err(|e: Error| usage(format!("--B: {e}")))
}

fn positive(x: f64, flag: &str) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(usage(format!("{flag} must be positive")))
    }
}

fn cmd_ai(args: &AiArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let word: Option<String> = cfg.get(args.word.clone(), "word")?;
    let enumerate: Option<usize> = cfg.get(args.enumerate, "enumerate")?;
    let unimodal: Option<f64> = cfg.get(args.unimodal, "unimodal")?;
    let closed = args.closed_form;
    let modes = [
        word.is_some(),
        closed.is_some(),
        enumerate.is_some(),
        unimodal.is_some(),
    ];
    if modes.iter().filter(|&&m| m).count() != 1 {
        return Err(usage(
            "give exactly one of --word, --closed-form, --enumerate, --unimodal",
        ));
    }
    let tol = positive(cfg.or(args.tol, "tol", 1e-12)?, "--tol")?;
    let max_iter = cfg.or(args.max_iter, "max-iter", 10_000)?;
    let period: Option<usize> = cfg.get(args.period, "period")?;
    if let Some(case) = closed {
        let period = period.ok_or_else(|| usage("--closed-form needs --period"))?;
        if period == 0 {
            return Err(usage("--period must be positive"));
        }
        let case = match case {
            ClosedFormArg::SquareOne => ClosedFormCase::SquareOne,
            ClosedFormArg::ZeroMinusOne => ClosedFormCase::ZeroMinusOne,
        };
        let states = symbolic::closed_form_states(case, period)?;
        let v: Vec<Value> = states.iter().map(state_json).collect();
        return Ok(Output::ok(to_json(&v)));
    }
    if let Some(cbar) = unimodal {
        if !(cbar > 0.0 && cbar < 1.0) {
            return Err(usage("--unimodal must lie in (0, 1)"));
        }
        let period = period.unwrap_or(1);
        if period == 0 {
            return Err(usage("--period must be positive"));
        }
        let seed = cfg.or(args.seed, "seed", 0.5 / cbar + 0.1)?;
        if !(seed >= 0.0 && seed <= 1.0 / cbar) {
            return Err(usage("--seed must lie in [0, 1/cbar]"));
        }
        let state = symbolic::unimodal_periodic_orbit(cbar, period, seed)?;
        return Ok(Output::ok(to_json(&state_json(&state))));
    }
    let coeffs = args.coeffs.resolve(cfg)?;
    let b = parse_set(&cfg.or(args.b.clone(), "B", "-2:2".to_string())?)?;
    if let Some(p) = enumerate {
        if p == 0 {
            return Err(usage("--enumerate must be positive"));
        }
        let e = symbolic::enumerate_periodic_states(&coeffs, p, &b, tol, max_iter)?;
        let v = json!({
            "states": e.states.iter().map(state_json).collect::<Vec<_>>(),
            "min_pairwise_distance": e.min_pairwise_distance,
        });
        return Ok(Output::ok(to_json(&v)));
    }
    let word = parse_word(word.as_deref().unwrap_or_default())?;
    let state = symbolic::ai_fixed_point(&coeffs, &word, &b, max_iter, tol)?;
    Ok(Output::ok(to_json(&state_json(&state))))
}

fn cmd_continue(args: &ContinueArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let epsilon: Option<f64> = cfg.get(args.epsilon, "epsilon")?;
    let epsilon = positive(
        epsilon.ok_or_else(|| usage("--epsilon is required"))?,
        "--epsilon",
    )?;
    let delta = finite(cfg.or(args.delta, "delta", 0.3)?, "--delta")?;
    let alpha_drift = finite(
        cfg.or(args.alpha_drift, "alpha-drift", 0.0)?,
        "--alpha-drift",
    )?;
    let sigma_drift = finite(
        cfg.or(args.sigma_drift, "sigma-drift", 0.0)?,
        "--sigma-drift",
    )?;
    let steps = cfg.or(args.steps, "steps", 10)?;
    if steps == 0 {
        return Err(usage("--steps must be positive"));
    }
    let tol = positive(cfg.or(args.tol, "tol", 1e-12)?, "--tol")?;
    let band = cfg.or(args.band, "band", map3d::DEFAULT_BAND)?;
    if !(0.0..1.0).contains(&band) {
        return Err(usage("--band must lie in [0, 1)"));
    }
    let word: Option<String> = cfg.get(args.word.clone(), "word")?;
    let values: Option<String> = cfg.get(args.state.clone(), "state")?;
    let file: Option<PathBuf> = cfg.get(args.state_file.clone(), "state-file")?;
    let sources = [word.is_some(), values.is_some(), file.is_some()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(usage("give exactly one of --word, --state, --state-file"));
    }
    let coeffs = args.coeffs.resolve(cfg)?;
    let b = cfg.or(args.b.clone(), "B", "-2:2".to_string())?;
    let state = if let Some(w) = word {
        let w = parse_word(&w)?;
        symbolic::ai_fixed_point(&coeffs, &w, &parse_set(&b)?, 10_000, 1e-12)?
    } else if let Some(v) = values {
        let vals = v
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| usage("--state must be comma-separated numbers"))?;
        if vals.is_empty() {
            return Err(usage("--state is empty"));
        }
        AIState::from_values(coeffs, vals, None, Construction::Supplied, 1e-9)?
    } else {
        let path = file.expect("one source is present");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| usage(format!("--state-file {}: {e}", path.display())))?;
        let s: AIState = serde_json::from_str(&text)
            .map_err(|e| usage(format!("--state-file {}: {e}", path.display())))?;
        AIState::from_values(s.coeffs, s.values, s.word, s.construction, 1e-9)?
    };
    let scheme = ParamScheme {
        delta,
        alpha_drift,
        sigma_drift,
    };
    let target = FullParams::new(epsilon, &state.coeffs, scheme);
    let ncfg = NewtonConfig {
        tol,
        ..NewtonConfig::default()
    };
    let sol = continuation::continue_in_epsilon(&state, &target, steps, &ncfg)?;
    let orbit_residual = sol.orbit_residual()?;
    let orbit_tol = 10.0 * tol.max(1e-13) / (epsilon * epsilon);
    let residual_ok = sol.residual <= tol;
    let orbit_ok = orbit_residual <= orbit_tol;
    let band_ok = sol.band_ok(band);
    let mut v = serde_json::to_value(&sol).expect("serializable solution");
    if let Value::Object(m) = &mut v {
        m.insert(
            "checks".into(),
            json!({
                "residual_ok": residual_ok,
                "orbit_residual": orbit_residual,
                "orbit_residual_tolerance": orbit_tol,
                "orbit_residual_ok": orbit_ok,
                "band": band,
                "band_ok": band_ok,
            }),
        );
    }
    let failure = (!(residual_ok && orbit_ok && band_ok)).then(|| {
        format!(
            "verification failed (residual_ok={residual_ok}, orbit_residual_ok={orbit_ok}, band_ok={band_ok})"
        )
    });
    Ok(Output {
        text: to_json(&v),
        failure,
    })
}

/// Parses `lo:hi:step` or a single value.
fn parse_grid(s: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let bad = || {
        usage(format!(
            "{flag}: expected lo:hi:step or a number, got {s:?}"
        ))
    };
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if parts.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    match parts[..] {
        [x] => Ok(vec![x]),
        [lo, hi, step] => {
            if !(step > 0.0) {
                return Err(usage(format!("{flag}: step must be positive")));
            }
            if hi < lo {
                return Err(usage(format!("{flag}: empty grid")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                return Err(usage(format!("{flag}: grid too large")));
            }
            Ok((0..count).map(|i| lo + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

fn cmd_scan(args: &ScanArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let mode: Option<String> = cfg.get(
        args.mode.map(|m| match m {
            ScanMode::Region => "region".to_string(),
            ScanMode::Period2 => "period2".to_string(),
        }),
        "mode",
    )?;
    let mode = match mode.as_deref() {
        Some("region") => ScanMode::Region,
        Some("period2") => ScanMode::Period2,
        Some(m) => return Err(usage(format!("--mode: unknown mode {m:?}"))),
        None => return Err(usage("--mode is required")),
    };
    let a_grid = parse_grid(&cfg.or(args.a.clone(), "a", "1".to_string())?, "--a")?;
    let c_grid = parse_grid(&cfg.or(args.c.clone(), "c", "0".to_string())?, "--c")?;
    let alpha1 = finite(cfg.or(args.alpha1, "alpha1", -1.0)?, "--alpha1")?;
    match mode {
        ScanMode::Region => {
            let r_grid = parse_grid(&cfg.or(args.r.clone(), "r", "0".to_string())?, "--r")?;
            let n = cfg.or(args.n, "n", 1)?;
            let lambda = cfg.or(args.lambda, "lambda", 1.05)?;
            let grid_points = cfg.or(args.grid_points, "grid-points", 101)?;
            let direction = match args.direction {
                Some(DirectionArg::Backward) => Direction::Backward,
                Some(DirectionArg::Forward) => Direction::Forward,
                None => match cfg.get::<String>(None, "direction")?.as_deref() {
                    None | Some("forward") => Direction::Forward,
                    Some("backward") => Direction::Backward,
                    Some(d) => return Err(usage(format!("--direction: unknown value {d:?}"))),
                },
            };
            let q = RegionQuery {
                n,
                lambda,
                direction,
                grid_points,
            };
            q.validate()
                .map_err(|e| usage(format!("region query: {e}")))?;
            if alpha1 != 1.0 && alpha1 != -1.0 {
                return Err(usage("--alpha1 must be 1 or -1 in region mode"));
            }
            let b = parse_set(&cfg.or(args.b.clone(), "B", "-1.3:1.3".to_string())?)?;
            let mut cells = Vec::with_capacity(r_grid.len() * a_grid.len() * c_grid.len());
            for &r in &r_grid {
                for &a in &a_grid {
                    for &c in &c_grid {
                        cells.push((r, a, c));
                    }
                }
            }
            let rows: Vec<String> = cells
                .par_iter()
                .map(|&(r, a, c)| {
                    let coeffs = RelationCoeffs::new(alpha1, r, a, c);
                    let (member, margin) = match symbolic::region_membership(&coeffs, &b, &q) {
                        Ok(rep) => (rep.member, rep.margin),
                        Err(_) => (false, f64::NAN),
                    };
                    format!(
                        "{},{},{},{},{}\n",
                        fmt_f64(r),
                        fmt_f64(a),
                        fmt_f64(c),
                        member,
                        fmt_f64(margin)
                    )
                })
                .collect();
            Ok(Output::ok(format!(
                "r,a,c,member,margin\n{}",
                rows.concat()
            )))
        }
        ScanMode::Period2 => {
            let eps_grid = parse_grid(
                &cfg.get(args.epsilon.clone(), "epsilon")?
                    .ok_or_else(|| usage("--epsilon grid is required in period2 mode"))?,
                "--epsilon",
            )?;
            if a_grid.len() != 1 || c_grid.len() != 1 {
                return Err(usage("--a and --c must be single values in period2 mode"));
            }
            if eps_grid.iter().any(|&e| !(e > 0.0)) {
                return Err(usage("--epsilon grid must be positive"));
            }
            let sigma1 = finite(cfg.or(args.sigma1, "sigma1", 0.0)?, "--sigma1")?;
            let delta = finite(cfg.or(args.delta, "delta", 0.3)?, "--delta")?;
            let coeffs = RelationCoeffs::new(alpha1, sigma1, a_grid[0], c_grid[0]);
            let scheme = ParamScheme::constant_delta(delta);
            let mut text = String::from("epsilon,n_period1,n_period2_true\n");
            for &eps in &eps_grid {
                let e = FullParams::new(eps, &coeffs, scheme);
                let p1 = continuation::small_period_solutions(&e, 1)?;
                let p2 = continuation::small_period_solutions(&e, 2)?;
                let true2 = p2.iter().filter(|s| s[0] != s[1]).count();
                let _ = writeln!(text, "{},{},{}", fmt_f64(eps), p1.len(), true2);
            }
            Ok(Output::ok(text))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5", "--x").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("0:1:0.5", "--x").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.1:0.9:0.1", "--x").unwrap().len(), 9);
        assert!(parse_grid("1:0:0.1", "--x").is_err());
        assert!(parse_grid("0:1:0", "--x").is_err());
        assert!(parse_grid("0:1", "--x").is_err());
        assert!(parse_grid("", "--x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(usage("x").exit_code(), 2);
        assert_eq!(CliError::from(Error::ZeroDelta).exit_code(), 3);
        assert_eq!(
            CliError::from(Error::StepUnderflow {
                epsilon: 0.1,
                step: 1e-13
            })
            .exit_code(),
            4
        );
    }
}
