//! Command-line front end. Every command resolves its settings from an
//! optional TOML file and flags (flags win), and embeds the resolved settings
//! in structured output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::{BigUint, RandBigInt};
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{verify_conflict_free, LayoutKind};
use crate::ntt::{gen_twiddles, intt_gs_in_place, ntt_ct_in_place};
use crate::rns::{decompose, gen_basis, reconstruct, rns_polymul, RnsBasis, RnsPolynomial};
use crate::schedule::{
    build_schedule_on, check_raw_bound, trace_stats, trace_to_csv, OpKind, PipelineConfig,
};
use crate::sim::{self, detect_hazards, predicted_cycles, HazardPolicy, SimConfig, SimOp};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_HAZARD: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
/// An analysis command ran and found conflicts or hazards.
pub const EXIT_FINDINGS: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hfntt", version, about = "NTT polynomial arithmetic and accelerator model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward negacyclic NTT (natural order in, bit-reversed out).
    Ntt(TransformArgs),
    /// Inverse NTT (bit-reversed in, natural order out).
    Intt(TransformArgs),
    /// Negacyclic product of two polynomials.
    Polymul(PolymulArgs),
    /// Cycle-accurate run on the accelerator model.
    Sim(SimArgs),
    /// Dump the issue schedule.
    Schedule(ScheduleArgs),
    /// Check a memory layout for bank conflicts.
    LayoutCheck(Options),
    /// Static hazard analysis of a schedule.
    Hazards(ScheduleArgs),
    /// Closed-form cycle count.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpArg {
    Ntt,
    Intt,
    Mult,
    Polymul,
}

impl OpArg {
    fn kind(self) -> Result<OpKind> {
        match self {
            OpArg::Ntt => Ok(OpKind::Ntt),
            OpArg::Intt => Ok(OpKind::Intt),
            OpArg::Mult => Ok(OpKind::Mult),
            OpArg::Polymul => Err(Error::Parse(
                "op `polymul` has no single schedule; use ntt, intt or mult".into(),
            )),
        }
    }

    fn sim_op(self) -> Result<SimOp> {
        match self {
            OpArg::Ntt => Ok(SimOp::Ntt),
            OpArg::Intt => Ok(SimOp::Intt),
            OpArg::Polymul => Ok(SimOp::Polymul),
            OpArg::Mult => Err(Error::Parse(
                "op `mult` cannot be simulated alone; use polymul".into(),
            )),
        }
    }
}

/// Settings shared by all commands.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// TOML file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Polynomial degree N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of processing elements.
    #[arg(long)]
    pub npe: Option<usize>,
    /// Explicit single prime modulus.
    #[arg(long)]
    pub q: Option<u64>,
    /// Explicit comma-separated RNS primes.
    #[arg(long, value_delimiter = ',')]
    pub primes: Option<Vec<u64>>,
    /// Bit width of generated primes.
    #[arg(long)]
    pub q_bits: Option<u32>,
    /// Number of generated RNS primes.
    #[arg(long)]
    pub nq: Option<usize>,
    /// Pipeline profile: q32, q14 or ideal.
    #[arg(long)]
    pub profile: Option<String>,
    /// Explicit delays: read,write,pe_ntt,pe_intt,pe_mult.
    #[arg(long, value_delimiter = ',', num_args = 5)]
    pub delays: Option<Vec<u64>>,
    /// shifted or sequential.
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long)]
    pub setup_cycles: Option<u64>,
    /// stall or fail-fast.
    #[arg(long)]
    pub policy: Option<String>,
    /// Seed for generated inputs.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the output here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub options: Options,
    /// Coefficient file (whitespace separated, `#` comments).
    #[arg(long, conflicts_with = "coeffs")]
    pub input: Option<PathBuf>,
    /// Inline coefficients.
    #[arg(long, allow_hyphen_values = true)]
    pub coeffs: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PolymulArgs {
    #[command(flatten)]
    pub options: Options,
    #[arg(long, conflicts_with = "a_coeffs")]
    pub a: Option<PathBuf>,
    #[arg(long, conflicts_with = "b_coeffs")]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub a_coeffs: Option<String>,
    #[arg(long)]
    pub b_coeffs: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub inputs: PolymulArgs,
    #[arg(long, value_enum, default_value = "polymul")]
    pub op: OpArg,
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub options: Options,
    #[arg(long, value_enum, default_value = "ntt")]
    pub op: OpArg,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub options: Options,
    #[arg(long, value_enum, default_value = "ntt")]
    pub op: OpArg,
}

/// Contents of a `--config` file. Keys mirror the long flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: Option<usize>,
    pub npe: Option<usize>,
    pub q: Option<u64>,
    pub primes: Option<Vec<u64>>,
    pub q_bits: Option<u32>,
    pub nq: Option<usize>,
    pub profile: Option<String>,
    pub delays: Option<DelayTable>,
    pub layout: Option<String>,
    pub setup_cycles: Option<u64>,
    pub policy: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayTable {
    pub read: u64,
    pub write: u64,
    pub pe_ntt: u64,
    pub pe_intt: u64,
    pub pe_mult: u64,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("config: {}", e.message())))
}

/// Settings after merging file and flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    #[serde(rename = "N")]
    pub degree: usize,
    pub npe: usize,
    pub profile: String,
    pub pipeline: PipelineConfig,
    pub layout: LayoutKind,
    pub setup_cycles: u64,
    pub policy: HazardPolicy,
    pub moduli: Vec<u64>,
    pub seed: u64,
    #[serde(skip)]
    pub format: Option<Format>,
}

impl Resolved {
    pub fn from_options(opts: &Options) -> Result<Self> {
        let file = match &opts.config {
            Some(path) => parse_config(&read_file(path)?)?,
            None => RunConfig::default(),
        };
        let degree = opts.n.or(file.n).unwrap_or(4096);
        if !degree.is_power_of_two() || degree < 2 {
            return Err(Error::NotPowerOfTwo(degree));
        }
        let npe = opts.npe.or(file.npe).unwrap_or(1);

        let explicit_delays = opts
            .delays
            .as_ref()
            .map(|d| PipelineConfig::new(d[0], d[1], d[2], d[3], d[4]));
        let (profile, pipeline) = match (explicit_delays, opts.profile.as_ref()) {
            (Some(p), _) => ("custom".to_string(), p?),
            (None, Some(name)) => (name.clone(), PipelineConfig::profile(name)?),
            (None, None) => match (file.delays, file.profile) {
                (Some(d), _) => (
                    "custom".to_string(),
                    PipelineConfig::new(d.read, d.write, d.pe_ntt, d.pe_intt, d.pe_mult)?,
                ),
                (None, name) => {
                    let name = name.unwrap_or_else(|| "q32".to_string());
                    let pipeline = PipelineConfig::profile(&name)?;
                    (name, pipeline)
                }
            },
        };

        let layout = opts
            .layout
            .as_deref()
            .or(file.layout.as_deref())
            .unwrap_or("shifted")
            .parse()?;
        let policy = match opts.policy.as_deref().or(file.policy.as_deref()).unwrap_or("stall") {
            "stall" => HazardPolicy::Stall,
            "fail-fast" => HazardPolicy::FailFast,
            other => {
                return Err(Error::Parse(format!(
                    "unknown hazard policy `{other}` (expected `stall` or `fail-fast`)"
                )))
            }
        };

        let explicit_q = opts.q.or(file.q);
        let explicit_primes = opts.primes.clone().or(file.primes);
        let moduli = match (explicit_q, explicit_primes) {
            (Some(_), Some(_)) => {
                return Err(Error::Parse("give either q or primes, not both".into()))
            }
            (Some(q), None) => vec![q],
            (None, Some(p)) => p,
            (None, None) => {
                let bits = opts.q_bits.or(file.q_bits).unwrap_or(32);
                let nq = opts.nq.or(file.nq).unwrap_or(1);
                gen_basis(bits, nq, degree)?.primes()
            }
        };

        Ok(Resolved {
            degree,
            npe,
            profile,
            pipeline,
            layout,
            setup_cycles: opts.setup_cycles.or(file.setup_cycles).unwrap_or(0),
            policy,
            moduli,
            seed: opts.seed.or(file.seed).unwrap_or(0),
            format: opts.format,
        })
    }

    pub fn basis(&self) -> Result<RnsBasis> {
        RnsBasis::for_ntt(&self.moduli, self.degree)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let config = SimConfig {
            degree: self.degree,
            npe: self.npe,
            layout: self.layout,
            pipeline: self.pipeline,
            profile: self.profile.clone(),
            setup_cycles: self.setup_cycles,
            hazard_policy: self.policy,
        };
        config.validate()?;
        Ok(config)
    }

    fn layout_map(&self) -> Result<crate::layout::LayoutMap> {
        crate::layout::LayoutMap::with_kind(self.degree, self.layout)
    }
}

/// Text written by a command and its exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub output: String,
    pub code: i32,
}

impl Outcome {
    fn ok(output: String) -> Self {
        Outcome {
            output,
            code: EXIT_OK,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Hazard { .. } => EXIT_HAZARD,
        Error::ResultMismatch { .. } => EXIT_MISMATCH,
        _ => EXIT_INVALID,
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))
}

pub fn parse_coefficients(text: &str) -> Result<Vec<BigUint>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<BigUint>()
                .map_err(|_| Error::Parse(format!("`{t}` is not a non-negative integer")))
        })
        .collect()
}

fn operand(
    path: Option<&PathBuf>,
    inline: Option<&String>,
    resolved: &Resolved,
    basis: &RnsBasis,
    stream: u64,
) -> Result<RnsPolynomial> {
    let coeffs = match (path, inline) {
        (Some(p), _) => parse_coefficients(&read_file(p)?)?,
        (None, Some(text)) => parse_coefficients(text)?,
        (None, None) => {
            let mut rng = SplitMix64::seed_from_u64(resolved.seed.wrapping_add(stream));
            (0..resolved.degree)
                .map(|_| rng.gen_biguint_below(basis.big_q()))
                .collect()
        }
    };
    if coeffs.len() != resolved.degree {
        return Err(Error::LengthMismatch {
            expected: resolved.degree,
            got: coeffs.len(),
        });
    }
    decompose(&coeffs, basis)
}

fn render_coefficients(values: &[BigUint]) -> String {
    let mut out = String::new();
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

fn render_channels(poly: &RnsPolynomial, resolved: &Resolved, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let channels: Vec<_> = poly
                .residues()
                .iter()
                .map(|p| serde_json::json!({"q": p.modulus().q(), "coeffs": p.coeffs()}))
                .collect();
            Ok(json(&serde_json::json!({"config": resolved, "channels": channels})))
        }
        Format::Text => {
            let mut out = String::new();
            for p in poly.residues() {
                if poly.channels() > 1 {
                    let _ = writeln!(out, "# q = {}", p.modulus().q());
                }
                for c in p.coeffs() {
                    let _ = writeln!(out, "{c}");
                }
            }
            Ok(out)
        }
        Format::Csv => Err(unsupported_format("csv", "transform")),
    }
}

fn unsupported_format(format: &str, command: &str) -> Error {
    Error::Parse(format!("format `{format}` is not available for {command}"))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn transform(args: &TransformArgs, inverse: bool) -> Result<Outcome> {
    let resolved = Resolved::from_options(&args.options)?;
    let basis = resolved.basis()?;
    let input = operand(args.input.as_ref(), args.coeffs.as_ref(), &resolved, &basis, 0)?;
    let residues = input
        .residues()
        .iter()
        .map(|p| {
            let tw = gen_twiddles(p.modulus(), resolved.degree)?;
            let mut v = p.coeffs().to_vec();
            if inverse {
                intt_gs_in_place(&mut v, &tw)?;
            } else {
                ntt_ct_in_place(&mut v, &tw)?;
            }
            crate::ntt::Polynomial::new(v, p.modulus().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let out = RnsPolynomial::new(residues)?;
    let format = resolved.format.unwrap_or(Format::Text);
    Ok(Outcome::ok(render_channels(&out, &resolved, format)?))
}

fn polymul(args: &PolymulArgs) -> Result<Outcome> {
    let resolved = Resolved::from_options(&args.options)?;
    let basis = resolved.basis()?;
    let a = operand(args.a.as_ref(), args.a_coeffs.as_ref(), &resolved, &basis, 0)?;
    let b = operand(args.b.as_ref(), args.b_coeffs.as_ref(), &resolved, &basis, 1)?;
    let product = reconstruct(&rns_polymul(&a, &b, &basis)?, &basis)?;
    Ok(Outcome::ok(match resolved.format.unwrap_or(Format::Text) {
        Format::Text => render_coefficients(&product),
        Format::Json => {
            let coeffs: Vec<String> = product.iter().map(|c| c.to_string()).collect();
            json(&serde_json::json!({"config": resolved, "coeffs": coeffs}))
        }
        Format::Csv => return Err(unsupported_format("csv", "polymul")),
    }))
}

#[derive(Serialize)]
struct SimOutput<'a> {
    #[serde(flatten)]
    report: &'a sim::SimReport,
    config: &'a Resolved,
}

fn simulate(args: &SimArgs) -> Result<Outcome> {
    let inputs = &args.inputs;
    let resolved = Resolved::from_options(&inputs.options)?;
    let config = resolved.sim_config()?;
    let basis = resolved.basis()?;
    let op = args.op.sim_op()?;
    let a = operand(inputs.a.as_ref(), inputs.a_coeffs.as_ref(), &resolved, &basis, 0)?;
    let b = match op {
        SimOp::Polymul => Some(operand(
            inputs.b.as_ref(),
            inputs.b_coeffs.as_ref(),
            &resolved,
            &basis,
            1,
        )?),
        _ => None,
    };
    let report = sim::run(&config, &a, b.as_ref(), op)?;
    let output = match resolved.format.unwrap_or(Format::Json) {
        Format::Json => json(&SimOutput {
            report: &report,
            config: &resolved,
        }),
        Format::Text => {
            let mut out = format!(
                "op {} N {} Npe {} profile {} layout {}\n",
                report.op, report.degree, report.n_pe, report.profile, report.layout
            );
            for p in &report.phases {
                let predicted = p
                    .predicted_cycles
                    .map_or_else(|| "n/a".to_string(), |c| c.to_string());
                let _ = writeln!(
                    out,
                    "{:<5} cycles {:>7}  predicted {:>7}  stalls {}  conflicts {}  utilization {:.3}",
                    p.op.to_string(), p.total_cycles, predicted, p.stall_cycles, p.bank_conflicts, p.utilization
                );
            }
            let _ = writeln!(out, "total {}", report.total_cycles);
            out
        }
        Format::Csv => return Err(unsupported_format("csv", "sim")),
    };
    Ok(Outcome::ok(output))
}

fn schedule(args: &ScheduleArgs) -> Result<Outcome> {
    let resolved = Resolved::from_options(&args.options)?;
    let trace = build_schedule_on(resolved.layout_map()?, resolved.npe, args.op.kind()?)?;
    Ok(Outcome::ok(match resolved.format.unwrap_or(Format::Csv) {
        Format::Csv => trace_to_csv(&trace),
        Format::Json => json(&serde_json::json!({
            "config": resolved,
            "stats": trace_stats(&trace),
        })),
        Format::Text => {
            let stats = trace_stats(&trace);
            let mut out = format!(
                "{} N {} Npe {}: {} issue cycles, utilization {:.3}\n",
                stats.kind,
                stats.degree,
                stats.npe,
                stats.issue_cycles,
                stats.utilization()
            );
            for s in &stats.stages {
                let _ = writeln!(
                    out,
                    "stage {:>2} phase {} gap {:>5} rounds {:>4} cycles {}",
                    s.stage,
                    s.phase,
                    s.gap,
                    s.rounds.len(),
                    s.cycles
                );
            }
            out
        }
    }))
}

fn hazards(args: &ScheduleArgs) -> Result<Outcome> {
    let resolved = Resolved::from_options(&args.options)?;
    let kind = args.op.kind()?;
    let layout = resolved.layout_map()?;
    let trace = build_schedule_on(layout, resolved.npe, kind)?;
    let report = detect_hazards(&trace, &resolved.pipeline);
    let bound = check_raw_bound(&layout, resolved.npe, &resolved.pipeline, kind)?;
    let output = match resolved.format.unwrap_or(Format::Json) {
        Format::Json => json(&serde_json::json!({
            "config": resolved,
            "op": kind,
            "bound": bound,
            "findings": report.findings,
        })),
        Format::Text => {
            let mut out = format!("{} findings\n", report.findings.len());
            for f in &report.findings {
                let _ = writeln!(
                    out,
                    "cycle {} {} bank {} address {}",
                    f.cycle, f.kind, f.cell.bank, f.cell.address
                );
            }
            out
        }
        Format::Csv => return Err(unsupported_format("csv", "hazards")),
    };
    Ok(Outcome {
        output,
        code: if report.is_empty() { EXIT_OK } else { EXIT_FINDINGS },
    })
}

fn layout_check(opts: &Options) -> Result<Outcome> {
    let resolved = Resolved::from_options(opts)?;
    let report = verify_conflict_free(&resolved.layout_map()?);
    let output = match resolved.format.unwrap_or(Format::Json) {
        Format::Json => report.to_json_lines(),
        Format::Text => format!(
            "{} layout, N {}: {} pairs checked, {} violations\n",
            report.layout,
            report.degree,
            report.pairs_checked,
            report.violations.len()
        ),
        Format::Csv => return Err(unsupported_format("csv", "layout-check")),
    };
    Ok(Outcome {
        output,
        code: if report.is_conflict_free() {
            EXIT_OK
        } else {
            EXIT_FINDINGS
        },
    })
}

fn predict(args: &PredictArgs) -> Result<Outcome> {
    let resolved = Resolved::from_options(&args.options)?;
    let kind = args.op.kind()?;
    let cycles = predicted_cycles(
        resolved.degree,
        resolved.npe,
        &resolved.pipeline,
        resolved.setup_cycles,
        kind,
    )?;
    Ok(Outcome::ok(match resolved.format.unwrap_or(Format::Text) {
        Format::Text => format!("{cycles}\n"),
        Format::Json => json(&serde_json::json!({
            "config": resolved,
            "op": kind,
            "cycles": cycles,
        })),
        Format::Csv => return Err(unsupported_format("csv", "predict")),
    }))
}

fn output_path(command: &Command) -> Option<&PathBuf> {
    match command {
        Command::Ntt(a) | Command::Intt(a) => a.options.output.as_ref(),
        Command::Polymul(a) => a.options.output.as_ref(),
        Command::Sim(a) => a.inputs.options.output.as_ref(),
        Command::Schedule(a) | Command::Hazards(a) => a.options.output.as_ref(),
        Command::LayoutCheck(o) => o.output.as_ref(),
        Command::Predict(a) => a.options.output.as_ref(),
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let outcome = match &cli.command {
        Command::Ntt(a) => transform(a, false),
        Command::Intt(a) => transform(a, true),
        Command::Polymul(a) => polymul(a),
        Command::Sim(a) => simulate(a),
        Command::Schedule(a) => schedule(a),
        Command::Hazards(a) => hazards(a),
        Command::LayoutCheck(o) => layout_check(o),
        Command::Predict(a) => predict(a),
    }?;
    if let Some(path) = output_path(&cli.command) {
        std::fs::write(path, &outcome.output)
            .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display())))?;
        return Ok(Outcome {
            output: String::new(),
            code: outcome.code,
        });
    }
    Ok(outcome)
}

/// Parses `args`, runs the command, prints, and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.output);
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Result<Outcome> {
        let cli = Cli::try_parse_from(std::iter::once("hfntt").chain(args.iter().copied()))
            .map_err(|e| Error::Parse(e.to_string()))?;
        execute(&cli)
    }

    #[test]
    fn predict_headline() {
        let out = run(&["predict", "--n", "4096", "--npe", "16", "--profile", "q32"]).unwrap();
        assert_eq!(out.output, "1555\n");
        let out = run(&["predict", "--n", "4096", "--npe", "16", "--op", "intt"]).unwrap();
        assert_eq!(out.output, "1556\n");
    }

    #[test]
    fn golden_product() {
        let out = run(&[
            "polymul", "--n", "4", "--q", "17", "--a-coeffs", "1 1 0 0", "--b-coeffs",
            "16 1 0 0",
        ])
        .unwrap();
        assert_eq!(out.output, "16\n0\n1\n0\n");
    }

    #[test]
    fn sequential_layout_has_findings() {
        let out = run(&["layout-check", "--n", "16", "--layout", "sequential"]).unwrap();
        assert_eq!(out.code, EXIT_FINDINGS);
        let head: serde_json::Value =
            serde_json::from_str(out.output.lines().next().unwrap()).unwrap();
        assert!(head["violations"].as_u64().unwrap() > 0);
        let out = run(&["layout-check", "--n", "16"]).unwrap();
        assert_eq!(out.code, EXIT_OK);
    }

    #[test]
    fn validation_errors_are_distinct() {
        let cases: Vec<&[&str]> = vec![
            &["predict", "--n", "100"],
            &["predict", "--n", "2048"],
            &["predict", "--n", "4096", "--npe", "3"],
            &["predict", "--n", "4096", "--npe", "64"],
            &["predict", "--profile", "fast"],
            &["predict", "--layout", "diagonal"],
            &["predict", "--policy", "retry"],
            &["predict", "--delays", "2,2,15,15,14"],
            &["ntt", "--n", "16", "--q", "19"],
            &["ntt", "--n", "16", "--q", "15"],
            &["ntt", "--n", "4", "--q", "17", "--coeffs", "1 2 3"],
            &["ntt", "--n", "4", "--q", "17", "--coeffs", "1 2 x 4"],
            &["ntt", "--n", "4", "--q", "17", "--coeffs", "1 2 17 4"],
        ];
        let mut messages = std::collections::HashSet::new();
        for args in cases {
            let err = run(args).expect_err(&format!("{args:?}"));
            assert_eq!(exit_code(&err), EXIT_INVALID);
            assert!(messages.insert(err.to_string()), "duplicate message for {args:?}");
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "n = 1024\nnpe = 4\nprofile = \"q14\"\nq_bits = 14\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        assert_eq!(run(&["predict", "--config", p]).unwrap().output, "1295\n");
        assert_eq!(
            run(&["predict", "--config", p, "--npe", "16"]).unwrap().output,
            "335\n"
        );
        std::fs::write(&path, "n = 1024\nbogus = 1\n").unwrap();
        assert!(run(&["predict", "--config", p]).is_err());
    }

    #[test]
    fn sim_json_is_deterministic_and_embeds_config() {
        let args = [
            "sim", "--n", "64", "--npe", "2", "--q-bits", "30", "--nq", "2", "--seed", "9",
            "--profile", "ideal",
        ];
        let first = run(&args).unwrap();
        assert_eq!(first, run(&args).unwrap());
        let v: serde_json::Value = serde_json::from_str(&first.output).unwrap();
        assert_eq!(v["op"], "polymul");
        assert_eq!(v["N"], 64);
        assert_eq!(v["config"]["moduli"].as_array().unwrap().len(), 2);
        assert_eq!(v["stalls"], 0);
    }

    #[test]
    fn fail_fast_exit_code() {
        let err = run(&[
            "sim", "--n", "16", "--npe", "2", "--op", "ntt", "--policy", "fail-fast",
        ])
        .unwrap_err();
        assert_eq!(exit_code(&err), EXIT_HAZARD);
    }

    #[test]
    fn transform_roundtrip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let evals = dir.path().join("evals.txt");
        let back = dir.path().join("back.txt");
        let e = evals.to_str().unwrap();
        run(&["ntt", "--n", "16", "--q", "97", "--coeffs", "1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16", "-o", e]).unwrap();
        run(&["intt", "--n", "16", "--q", "97", "--input", e, "-o", back.to_str().unwrap()]).unwrap();
        let got = parse_coefficients(&std::fs::read_to_string(back).unwrap()).unwrap();
        let want: Vec<BigUint> = (1u32..=16).map(BigUint::from).collect();
        assert_eq!(got, want);
    }
}
