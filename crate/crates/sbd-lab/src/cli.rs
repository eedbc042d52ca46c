//! Batch front-end behind the `sbd` binary.
//!
//! Exit codes: 0 when every assertion holds, 2 when an assertion fails,
//! 3 when an input or precondition is rejected.

use crate::corpus;
use crate::density_pipeline::{seam_audit, Approximation, PipelineError, PipelineOptions, ReportRow, Theorem};
use crate::extension::{trace_gap, ReflectionParams, Side};
use crate::geometry::Rect;
use crate::mollify::{commutator_bound, Mollifier};
use crate::phase_field::{constants, gamma_check, GammaConfig, GammaRow, MinimizeOptions, Psi, Target};
use crate::rough_approx::classify_nodes;
use crate::sbd_field::{FieldSpec, SbdField};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

/// Environment variable that silences progress lines on stderr.
pub const QUIET_VAR: &str = "SBD_APPROX_QUIET";

const CSV_HELP: &str = "\
CSV output (floats with 17 significant digits, one header line):

  approx: thm,k,bd_error,l1_error,strain_lp_error,jump_symmdiff,jump_created,
          jump_amp_error,excluded_area,excluded_lp_error,silent_gamma_hat,
          eta_eps,cubes,strips,uncovered_length
    bd_error          ||u_k - u||_L1 + |E(u_k - u)|(Omega)
    l1_error          ||u_k - u||_L1
    strain_lp_error   ||e(u_k) - e(u)||_Lp
    jump_symmdiff     H1 of the symmetric difference of the jump sets
    jump_created      H1(J_{u_k} \\ J_u)
    jump_amp_error    integral of |[u] - [u_k]| over J_u and J_{u_k}
    excluded_area     area of the exceptional set E_k
    excluded_lp_error integral of |u_k - u|^p outside E_k
    silent_gamma_hat  length of the covered jump set where u_k does not jump
    eta_eps           strip parameter of the cover
    cubes, strips     cover size
    uncovered_length  H1 of the jump set left outside the cubes

  gamma: eps,energy,F_limit,rel_error,iterations
    energy     minimum found for the eps-functional
    F_limit    limit energy of the target
    rel_error  |energy - F_limit| / F_limit, or |energy| when F_limit = 0
  gamma --constants: psi,p,a,b

  verify: status,check,field,param,lhs,rhs
    status is PASS or FAIL; each check asserts lhs <= rhs

Exit status: 0 all assertions hold, 2 an assertion failed, 3 input rejected.
Set SBD_APPROX_QUIET to suppress progress output on stderr.";

#[derive(Parser, Debug)]
#[command(name = "sbd", version, about = "SBD field approximation and phase-field sweeps", after_long_help = CSV_HELP)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the field spec of a corpus entry as JSON.
    Gen(GenArgs),
    /// Run the glued approximation over a k sweep and emit the metric table.
    Approx(ApproxArgs),
    /// Minimize the phase-field energy over an eps sweep, or print (a, b).
    Gamma(GammaArgs),
    /// Check the classification, commutator, extension and constant bounds.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Corpus id: piecewise-rigid-flat, curved-crack-strained, pure-jump,
    /// smooth-poly, boundary-trace, random-jump or random-smooth.
    pub name: String,
    /// Write to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the random-* families.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ApproxArgs {
    /// Field-spec JSON path or corpus id.
    #[arg(long)]
    pub field: String,
    #[arg(long, default_value_t = 11)]
    pub thm: u32,
    /// Strictly increasing list, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16,32")]
    pub k: Vec<u32>,
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Write to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for random-* corpus ids.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reject k below 64/t.
    #[arg(long)]
    pub strict_scale: bool,
}

#[derive(Args, Debug)]
pub struct GammaArgs {
    /// Experiment JSON; defaults to the single-jump bar.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the eps sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub p: Option<f64>,
    /// linear, zero or power:SCALE,EXPONENT
    #[arg(long)]
    pub psi: Option<String>,
    /// jump, elastic or zero
    #[arg(long)]
    pub target: Option<String>,
    /// Print only the constants a and b.
    #[arg(long)]
    pub constants: bool,
    /// Write to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Field-spec JSON path or corpus id; defaults to the whole corpus.
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub k: Vec<u32>,
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Precondition(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Precondition(_) => EXIT_PRECONDITION,
            CliError::Assertion(_) => EXIT_ASSERTION,
        }
    }
}

fn pre<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Precondition(e.to_string())
}

/// Validated parameters of an approximation run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub theorem: Theorem,
    pub k_list: Vec<u32>,
    pub theta: f64,
    pub eps: f64,
    pub p: f64,
    pub strict_scale: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.k_list.is_empty() || self.k_list.windows(2).any(|w| w[1] <= w[0]) || self.k_list[0] == 0 {
            return Err(CliError::Precondition(format!("k list must be positive and strictly increasing, got {:?}", self.k_list)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(CliError::Precondition(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.p > 1.0) {
            return Err(CliError::Precondition(format!("p must exceed 1, got {}", self.p)));
        }
        Ok(())
    }
}

/// A float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        // `+ 0.0` folds -0 into 0
        format!("{:.16e}", x + 0.0)
    } else {
        x.to_string()
    }
}

fn quiet() -> bool {
    std::env::var(QUIET_VAR).is_ok_and(|v| !v.is_empty() && v != "0")
}

fn progress(msg: &str) {
    if !quiet() {
        eprintln!("{msg}");
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Precondition(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes()).map_err(pre)
        }
    }
}

/// Spec of a corpus id (including the seeded random families).
pub fn corpus_spec(name: &str, seed: u64) -> Result<FieldSpec, CliError> {
    match name {
        "random-jump" => Ok(corpus::random_jump_corpus(1, seed).remove(0)),
        "random-smooth" => Ok(corpus::random_smooth_corpus(1, seed).remove(0)),
        _ => corpus::spec(name).map_err(pre),
    }
}

/// A path to a field-spec file, or a corpus id when no such file exists.
pub fn load_field(arg: &str, seed: u64) -> Result<(String, SbdField), CliError> {
    let path = Path::new(arg);
    let spec = if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Precondition(format!("cannot read {arg}: {e}")))?;
        FieldSpec::from_json(&text).map_err(pre)?
    } else {
        corpus_spec(arg, seed)?
    };
    Ok((arg.to_string(), spec.build().map_err(pre)?))
}

pub fn cmd_gen(a: &GenArgs) -> Result<String, CliError> {
    let spec = corpus_spec(&a.name, a.seed)?;
    let mut json = serde_json::to_string_pretty(&spec).map_err(pre)?;
    json.push('\n');
    Ok(json)
}

fn report_line(r: &ReportRow) -> String {
    let mut cols = vec![r.theorem.code().to_string(), r.k.to_string()];
    cols.extend(
        [
            r.bd_error,
            r.l1_error,
            r.strain_lp_error,
            r.jump_symmdiff,
            r.jump_created,
            r.jump_amp_error,
            r.excluded_area,
            r.excluded_lp_error,
            r.silent_gamma_hat,
            r.eta_eps,
        ]
        .map(fmt_f64),
    );
    cols.push(r.cubes.to_string());
    cols.push(r.strips.to_string());
    cols.push(fmt_f64(r.uncovered_length));
    cols.join(",")
}

/// Rows of an approximation sweep and the invariant violations found.
pub fn run_approx(f: &SbdField, cfg: &RunConfig) -> Result<(Vec<ReportRow>, Vec<String>), CliError> {
    cfg.validate()?;
    let opts = PipelineOptions { theta: cfg.theta, strict_scale: cfg.strict_scale, ..PipelineOptions::default() };
    let smooth = f.jump_pieces().is_empty();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &k in &cfg.k_list {
        progress(&format!("approx thm{} k={k}", cfg.theorem.code()));
        let a = Approximation::build(f, cfg.theorem, k, cfg.eps, opts).map_err(|e: PipelineError| pre(e))?;
        let r = a.report(cfg.p).map_err(pre)?;
        if r.metrics().iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            failures.push(format!("k = {k}: a metric is negative or not finite"));
        }
        let seams = seam_audit(&a);
        if !seams.holds {
            failures.push(format!("k = {k}: jumping seam length exceeds 8 (strip count) / k"));
        }
        if smooth && r.jump_created != 0.0 {
            failures.push(format!("k = {k}: jump-free input gained jump length {}", r.jump_created));
        }
        rows.push(r);
    }
    Ok((rows, failures))
}

pub fn approx_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from(ReportRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&report_line(r));
        s.push('\n');
    }
    s
}

pub fn cmd_approx(a: &ApproxArgs) -> Result<(String, Vec<String>), CliError> {
    let theorem = Theorem::from_code(a.thm).ok_or_else(|| CliError::Precondition(format!("--thm must be 11, 12 or 13, got {}", a.thm)))?;
    let cfg = RunConfig { theorem, k_list: a.k.clone(), theta: a.theta, eps: a.eps, p: a.p, strict_scale: a.strict_scale };
    cfg.validate()?;
    let (_, f) = load_field(&a.field, a.seed)?;
    let (rows, failures) = run_approx(&f, &cfg)?;
    Ok((approx_csv(&rows), failures))
}

/// `linear`, `zero` or `power:SCALE,EXPONENT`.
pub fn parse_psi(s: &str) -> Result<Psi, CliError> {
    let bad = || CliError::Precondition(format!("unknown psi {s:?} (use linear, zero or power:SCALE,EXPONENT)"));
    match s.trim() {
        "linear" => Ok(Psi::Linear),
        "zero" => Ok(Psi::Zero),
        t => {
            let rest = t.strip_prefix("power:").ok_or_else(bad)?;
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            let scale = a.trim().parse().map_err(|_| bad())?;
            let exponent = b.trim().parse().map_err(|_| bad())?;
            Ok(Psi::Power { scale, exponent })
        }
    }
}

fn psi_name(psi: &Psi) -> String {
    match psi {
        Psi::Linear => "linear".into(),
        Psi::Zero => "zero".into(),
        Psi::Power { scale, exponent } => format!("power:{scale},{exponent}"),
    }
}

pub fn gamma_config(a: &GammaArgs) -> Result<GammaConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Precondition(format!("cannot read {}: {e}", p.display())))?;
            GammaConfig::from_json(&text).map_err(pre)?
        }
        None => GammaConfig::benchmark(),
    };
    if let Some(e) = &a.eps {
        cfg.eps_list = e.clone();
    }
    if let Some(p) = a.p {
        cfg.p = p;
    }
    if let Some(s) = &a.psi {
        cfg.psi = parse_psi(s)?;
    }
    if let Some(t) = &a.target {
        cfg.target = serde_json::from_value(serde_json::Value::String(t.clone()))
            .map_err(|_| CliError::Precondition(format!("unknown target {t:?} (use jump, elastic or zero)")))?;
    }
    if cfg.eps_list.is_empty() {
        return Err(CliError::Precondition("empty eps list".into()));
    }
    Ok(cfg)
}

pub fn gamma_csv(rows: &[GammaRow]) -> String {
    let mut s = String::from(GammaRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", fmt_f64(r.eps), fmt_f64(r.energy), fmt_f64(r.f_limit), fmt_f64(r.rel_error), r.iterations));
    }
    s
}

/// Violations of the sweep's postconditions.
pub fn gamma_failures(cfg: &GammaConfig, rows: &[GammaRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        if !(r.energy.is_finite() && r.energy >= 0.0) {
            out.push(format!("eps = {}: energy {} is negative or not finite", r.eps, r.energy));
        }
    }
    if cfg.target == Target::Zero {
        out.extend(rows.iter().filter(|r| r.energy != 0.0).map(|r| format!("eps = {}: zero target gave energy {}", r.eps, r.energy)));
    }
    let mut sorted: Vec<&GammaRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    if cfg.target == Target::Jump {
        for w in sorted.windows(2) {
            if w[1].rel_error >= w[0].rel_error {
                out.push(format!("relative error does not decrease from eps = {} to eps = {}", w[0].eps, w[1].eps));
            }
        }
    }
    out
}

pub fn cmd_gamma(a: &GammaArgs) -> Result<(String, Vec<String>), CliError> {
    if a.constants {
        let psi = match &a.psi {
            Some(s) => parse_psi(s)?,
            None => Psi::Linear,
        };
        let p = a.p.unwrap_or(2.0);
        let c = constants(psi, p).map_err(pre)?;
        return Ok((format!("psi,p,a,b\n{},{},{},{}\n", psi_name(&psi), fmt_f64(p), fmt_f64(c.a), fmt_f64(c.b)), Vec::new()));
    }
    let cfg = gamma_config(a)?;
    for &eps in &cfg.eps_list {
        progress(&format!("gamma eps={eps}"));
        cfg.initial_state(eps).map_err(pre)?;
    }
    let rows = gamma_check(&cfg, &MinimizeOptions::default()).map_err(pre)?;
    let failures = gamma_failures(&cfg, &rows);
    Ok((gamma_csv(&rows), failures))
}

struct Check {
    pass: bool,
    name: &'static str,
    field: String,
    param: String,
    lhs: f64,
    rhs: f64,
}

impl Check {
    fn new(name: &'static str, field: &str, param: String, lhs: f64, rhs: f64) -> Check {
        Check { pass: lhs <= rhs, name, field: field.into(), param, lhs, rhs }
    }

    fn line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.field,
            self.param,
            fmt_f64(self.lhs),
            fmt_f64(self.rhs)
        )
    }
}

fn verify_field(name: &str, f: &SbdField, a: &VerifyArgs, out: &mut Vec<Check>) -> Result<(), CliError> {
    let omega = f.bbox();
    for &k in &a.k {
        let c = classify_nodes(f, &omega, k, a.theta).map_err(pre)?;
        let kf = k as f64;
        out.push(Check::new("bad-node-count", name, format!("k={k}"), c.bad.len() as f64, c.jump_length * kf / a.theta));
        out.push(Check::new("bad-region-area", name, format!("k={k}"), c.bad_region_area(None), 256.0 * c.jump_length / (kf * a.theta)));
    }
    let pieces = f.jump_pieces();
    if pieces.is_empty() {
        let r = Rect::axis_aligned(omega.min, omega.max);
        for side in [Side::Top, Side::Bottom, Side::Left, Side::Right] {
            let gap = trace_gap(f, &r, side, ReflectionParams::default(), 200).map_err(pre)?;
            out.push(Check::new("trace-continuity", name, format!("{side:?}").to_lowercase(), gap, 1e-8));
        }
    } else {
        for r in [8.0, 16.0, 32.0] {
            let m = Mollifier::new(r).map_err(pre)?;
            let centre = pieces[pieces.len() / 2].seg.midpoint();
            let c = commutator_bound(f, &m, centre, a.p, 1.0 / (12.0 * r));
            out.push(Check::new("commutator", name, format!("r=1/{r}"), c.lhs, c.rhs * (1.0 + 1e-6)));
        }
    }
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<(String, Vec<String>), CliError> {
    if a.k.is_empty() || a.k.contains(&0) {
        return Err(CliError::Precondition("k list must hold positive values".into()));
    }
    if !(a.theta > 0.0 && a.theta < 1.0) {
        return Err(CliError::Precondition(format!("theta must lie in (0, 1), got {}", a.theta)));
    }
    if !(a.p > 1.0) {
        return Err(CliError::Precondition(format!("p must exceed 1, got {}", a.p)));
    }
    let fields: Vec<(String, SbdField)> = match &a.field {
        Some(arg) => vec![load_field(arg, a.seed)?],
        None => corpus::NAMES.iter().map(|n| load_field(n, a.seed)).collect::<Result<_, _>>()?,
    };
    let mut checks = Vec::new();
    let c = constants(Psi::Linear, 2.0).map_err(pre)?;
    checks.push(Check::new("constant-a", "linear", "p=2".into(), (c.a - 8.0 / 3.0).abs(), 1e-9));
    checks.push(Check::new("constant-b", "linear", "p=2".into(), (c.b - 2.0).abs(), 0.0));
    for (name, f) in &fields {
        progress(&format!("verify {name}"));
        verify_field(name, f, a, &mut checks)?;
    }
    let mut s = String::from("status,check,field,param,lhs,rhs\n");
    let mut failures = Vec::new();
    for c in &checks {
        s.push_str(&c.line());
        s.push('\n');
        if !c.pass {
            failures.push(format!("{} on {} ({})", c.name, c.field, c.param));
        }
    }
    Ok((s, failures))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Precondition("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (text, out, failures) = match &cli.command {
        Command::Gen(a) => (cmd_gen(a)?, &a.out, Vec::new()),
        Command::Approx(a) => {
            let (t, f) = cmd_approx(a)?;
            (t, &a.out, f)
        }
        Command::Gamma(a) => {
            let (t, f) = cmd_gamma(a)?;
            (t, &a.out, f)
        }
        Command::Verify(a) => {
            let (t, f) = cmd_verify(a)?;
            (t, &a.out, f)
        }
    };
    emit(out, &text)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failures.join("; ")))
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PRECONDITION } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("sbd: {e}");
            e.code()
        }
    }
}
