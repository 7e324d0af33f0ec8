//! Command-line front end: mesh inspection, measure compression, control
//! count selection, error sweeps, point-set distance, and compressed
//! geodesic matching.
//!
//! Every run emits exactly one manifest recording the resolved
//! configuration, the seed, the artifact version, and per-phase timings.
//! Commands that write files place it next to the output as
//! `<out>.manifest.json`; commands that print to standard output embed it
//! in the printed JSON. Reruns of the same command line are byte-identical
//! except for the fields `wall_time_s`, `timings`, and `timestamp`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::compress::{
    choose_m_trace, compression_error2, error_curve, project_measure, CompressionResult,
    GrowthPolicy,
};
use crate::error::Error;
use crate::kernels::KernelSpec;
use crate::measures::{measure_of_mesh, DiracMeasure, Representation};
use crate::mesh::{load_mesh, save_obj, MeshFormat};
use crate::nystrom::{SamplerConfig, SamplerKind};
use crate::registration::{
    compressed_match, hausdorff_distance, DeformationConfig, MatchOptions, MatchTarget, StepRule,
};

/// Runs the CLI and returns the process exit code: 0 on success, 2 on a
/// usage error, 1 on an input or numerical error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.exit_code() == 0 { 0 } else { 2 };
            let _ = err.print();
            return code;
        }
    };
    configure_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            2
        }
        Err(Failure::Run(err)) => {
            eprintln!("error: {err}");
            1
        }
    }
}

#[derive(Parser)]
#[command(
    name = "measurezip",
    version,
    about = "Kernel-measure compression and geodesic matching for triangle meshes"
)]
struct Cli {
    /// Cap the worker thread count (falls back to MEASUREZIP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a mesh measure onto a sampled control subset.
    Compress(CompressArgs),
    /// Grow the control count until the trace error meets a tolerance.
    ChooseM(ChooseMArgs),
    /// Sweep compression error over samplers, sizes, and seeds.
    ErrorCurve(ErrorCurveArgs),
    /// Match a template mesh onto a target by geodesic shooting.
    Match(MatchArgs),
    /// Hausdorff distance between the vertex sets of two meshes.
    Hausdorff(HausdorffArgs),
    /// Print mesh statistics.
    Info(InfoArgs),
}

/// A failed run, split by exit code.
enum Failure {
    /// Bad arguments; exit 2.
    Usage(String),
    /// Input or numerical error during execution; exit 1.
    Run(Error),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Run(err)
    }
}

type CliResult = std::result::Result<(), Failure>;

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Compress(args) => run_compress(args),
        Command::ChooseM(args) => run_choose_m(args),
        Command::ErrorCurve(args) => run_error_curve(args),
        Command::Match(args) => run_match(args),
        Command::Hausdorff(args) => run_hausdorff(args),
        Command::Info(args) => run_info(args),
    }
}

fn configure_threads(cap: Option<usize>) {
    let cap = cap.or_else(|| {
        std::env::var("MEASUREZIP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = cap.filter(|&n| n > 0) {
        // The global pool is built once per process; a second run in the
        // same process keeps the first configuration.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

// ---------------------------------------------------------------------------
// Shared pieces: manifests, file IO, flag parsers.

/// Provenance record written alongside every output.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: u64,
    version: String,
    /// Per-phase wall time in seconds.
    timings: BTreeMap<String, f64>,
    timestamp: String,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, seed: u64, phases: Phases) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timings: phases.finish(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }
}

/// Phase clock feeding the manifest timings.
struct Phases {
    marks: BTreeMap<String, f64>,
    start: Instant,
    last: Instant,
}

impl Phases {
    fn new() -> Phases {
        let now = Instant::now();
        Phases {
            marks: BTreeMap::new(),
            start: now,
            last: now,
        }
    }

    fn mark(&mut self, name: &str) {
        let now = Instant::now();
        self.marks
            .insert(name.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }

    fn finish(mut self) -> BTreeMap<String, f64> {
        self.marks
            .insert("total".to_string(), self.start.elapsed().as_secs_f64());
        self.marks
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", out.display()))
}

fn to_json_value(value: &impl Serialize) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(value)
        .map_err(|e| Failure::Run(Error::InvalidArgument(format!("serialization failed: {e}"))))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Run(Error::InvalidArgument(format!("serialization failed: {e}"))))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Run(Error::io(path, e)))?;
    Ok(())
}

fn print_json(value: &impl Serialize) -> CliResult {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Run(Error::InvalidArgument(format!("serialization failed: {e}"))))?;
    // A closed pipe on the consumer side is a normal way for a run to end.
    match writeln!(std::io::stdout().lock(), "{text}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Failure::Run(Error::io("<stdout>", e))),
    }
}

fn read_kernel(path: &Path) -> Result<KernelSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Run(Error::io(path, e)))?;
    let spec: KernelSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::Run(Error::parse(path, e.line(), e.to_string())))?;
    spec.validate()?;
    Ok(spec)
}

/// Loads a mesh and builds its measure, warning about dropped triangles.
fn load_measure(
    path: &Path,
    rep: Representation,
) -> Result<(DiracMeasure, crate::mesh::TriangleMesh), Failure> {
    let mesh = load_mesh(path, None)?;
    let (mu, dropped) = measure_of_mesh(&mesh, rep)?;
    if dropped > 0 {
        eprintln!(
            "warning: {}: dropped {dropped} zero-area triangles from the varifold",
            path.display()
        );
    }
    Ok((mu, mesh))
}

fn parse_rep(text: &str) -> Result<Representation, String> {
    match text {
        "current" => Ok(Representation::Current),
        "varifold" => Ok(Representation::Varifold),
        other => Err(format!("unknown representation {other:?} (expected current or varifold)")),
    }
}

fn parse_sampler(text: &str) -> Result<SamplerKind, String> {
    match text {
        "uniform" => Ok(SamplerKind::Uniform),
        "rls" | "recursive-rls" | "recursive_rls" => Ok(SamplerKind::RecursiveRls),
        "exact-rls" | "exact_rls" => Ok(SamplerKind::ExactRls),
        "kdpp" | "mcmc-kdpp" | "mcmc_kdpp" => Ok(SamplerKind::McmcKdpp),
        other => Err(format!(
            "unknown sampler {other:?} (expected uniform, rls, exact-rls, or kdpp)"
        )),
    }
}

fn parse_growth(text: &str) -> Result<GrowthPolicy, String> {
    match text {
        "double" => Ok(GrowthPolicy::Double),
        "add-one" | "add_one" => Ok(GrowthPolicy::AddOne),
        other => Err(format!("unknown growth policy {other:?} (expected double or add-one)")),
    }
}

/// Seed collection given either as `1,2,7` or as an inclusive range `1..20`.
#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seed_list(text: &str) -> Result<SeedList, String> {
    if let Some((lo, hi)) = text.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo: u64 = lo
            .trim()
            .parse()
            .map_err(|_| format!("bad range start {lo:?}"))?;
        let hi: u64 = hi
            .trim()
            .parse()
            .map_err(|_| format!("bad range end {hi:?}"))?;
        if hi < lo {
            return Err(format!("empty seed range {text:?}"));
        }
        return Ok(SeedList((lo..=hi).collect()));
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| format!("bad seed {s:?}")))
        .collect::<Result<Vec<u64>, String>>()?;
    if seeds.is_empty() {
        return Err("no seeds given".to_string());
    }
    Ok(SeedList(seeds))
}

/// Sampler tuning flags shared by the sampling commands.
#[derive(Debug, Args, Serialize)]
struct SamplerFlags {
    /// Target rank of the leverage-score sketch.
    #[arg(long, default_value_t = 64)]
    rank: usize,
    /// Sketch failure probability.
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
    /// Ridge parameter of the leverage scores.
    #[arg(long, default_value_t = 1e-3)]
    lambda_reg: f64,
    /// Swap-chain length of the DPP sampler.
    #[arg(long, default_value_t = 2000)]
    mcmc_iters: usize,
}

impl SamplerFlags {
    fn config(&self, m: Option<usize>) -> SamplerConfig {
        SamplerConfig {
            target_rank: self.rank,
            delta: self.delta,
            lambda_reg: self.lambda_reg,
            chain_iterations: self.mcmc_iters,
            m_exact: m,
        }
    }
}

// ---------------------------------------------------------------------------
// compress

#[derive(Args)]
struct CompressArgs {
    /// Input mesh (.obj or .ply).
    #[arg(long)]
    input: PathBuf,
    /// Measure representation: current or varifold.
    #[arg(long, value_parser = parse_rep)]
    rep: Representation,
    /// Kernel description file (JSON).
    #[arg(long)]
    kernel: PathBuf,
    /// Control sampler: uniform, rls, exact-rls, or kdpp.
    #[arg(long, default_value = "rls", value_parser = parse_sampler)]
    sampler: SamplerKind,
    /// Number of control atoms; defaults to the rank-derived size.
    #[arg(long, conflicts_with = "tau")]
    m: Option<usize>,
    /// Grow the control count until the trace error drops below this.
    #[arg(long)]
    tau: Option<f64>,
    /// Interpret --tau per atom (multiplied by the atom count).
    #[arg(long, requires = "tau")]
    tau_relative: bool,
    /// Growth policy under --tau: double or add-one.
    #[arg(long, default_value = "double", value_parser = parse_growth)]
    growth: GrowthPolicy,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also compute the exact squared dual error (an O(n^2) pass).
    #[arg(long)]
    evaluate: bool,
    #[command(flatten)]
    sampler_flags: SamplerFlags,
    /// Output JSON path for the compressed measure.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct CompressConfigEcho<'a> {
    input: String,
    rep: Representation,
    kernel: &'a KernelSpec,
    sampler: SamplerKind,
    sampler_config: &'a SamplerConfig,
    m: Option<usize>,
    tau: Option<f64>,
    tau_relative: bool,
    growth: GrowthPolicy,
    evaluate: bool,
    out: String,
}

fn run_compress(args: CompressArgs) -> CliResult {
    if args.m == Some(0) {
        return Err(Failure::Usage("--m must be at least 1".to_string()));
    }
    let mut phases = Phases::new();
    let (mu, _) = load_measure(&args.input, args.rep)?;
    phases.mark("load");
    let kernel = read_kernel(&args.kernel)?;
    let config = args.sampler_flags.config(args.m);

    let start = Instant::now();
    let result = match args.tau {
        None => {
            let m = args.m.unwrap_or_else(|| config.sample_size(mu.n()));
            crate::compress::compress_measure(
                &mu,
                &kernel,
                args.sampler,
                &config,
                m,
                args.seed,
                args.evaluate,
            )?
        }
        Some(tau) => {
            let tau_abs = if args.tau_relative { tau * mu.n() as f64 } else { tau };
            let search =
                choose_m_trace(&mu, &kernel, tau_abs, args.sampler, &config, args.seed, args.growth)?;
            let compressed = project_measure(&mu, &search.controls, &kernel)?;
            let trace_error = search
                .trajectory
                .last()
                .map(|step| step.trace_error)
                .unwrap_or(f64::NAN);
            let squared_error = if args.evaluate {
                Some(compression_error2(&mu, &compressed, &kernel)?)
            } else {
                None
            };
            CompressionResult {
                compressed,
                controls: search.controls,
                trace_error,
                squared_error,
                wall_time_s: start.elapsed().as_secs_f64(),
            }
        }
    };
    phases.mark("compress");

    write_json(&args.out, &result)?;
    let echo = CompressConfigEcho {
        input: args.input.display().to_string(),
        rep: args.rep,
        kernel: &kernel,
        sampler: args.sampler,
        sampler_config: &config,
        m: args.m,
        tau: args.tau,
        tau_relative: args.tau_relative,
        growth: args.growth,
        evaluate: args.evaluate,
        out: args.out.display().to_string(),
    };
    let manifest = RunManifest::new("compress", to_json_value(&echo)?, args.seed, phases);
    write_json(&manifest_path(&args.out), &manifest)
}

// ---------------------------------------------------------------------------
// choose-m

#[derive(Args)]
struct ChooseMArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_rep)]
    rep: Representation,
    #[arg(long)]
    kernel: PathBuf,
    /// Trace-error tolerance.
    #[arg(long)]
    tau: f64,
    /// Interpret --tau per atom (multiplied by the atom count).
    #[arg(long)]
    tau_relative: bool,
    #[arg(long, default_value = "rls", value_parser = parse_sampler)]
    sampler: SamplerKind,
    #[arg(long, default_value = "double", value_parser = parse_growth)]
    growth: GrowthPolicy,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    sampler_flags: SamplerFlags,
    /// Output JSON path for the size search record.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct ChooseMConfigEcho<'a> {
    input: String,
    rep: Representation,
    kernel: &'a KernelSpec,
    tau: f64,
    tau_relative: bool,
    sampler: SamplerKind,
    sampler_config: &'a SamplerConfig,
    growth: GrowthPolicy,
    out: String,
}

fn run_choose_m(args: ChooseMArgs) -> CliResult {
    let mut phases = Phases::new();
    let (mu, _) = load_measure(&args.input, args.rep)?;
    phases.mark("load");
    let kernel = read_kernel(&args.kernel)?;
    let config = args.sampler_flags.config(None);
    let tau_abs = if args.tau_relative {
        args.tau * mu.n() as f64
    } else {
        args.tau
    };
    let search = choose_m_trace(
        &mu,
        &kernel,
        tau_abs,
        args.sampler,
        &config,
        args.seed,
        args.growth,
    )?;
    phases.mark("search");

    write_json(&args.out, &search)?;
    let echo = ChooseMConfigEcho {
        input: args.input.display().to_string(),
        rep: args.rep,
        kernel: &kernel,
        tau: args.tau,
        tau_relative: args.tau_relative,
        sampler: args.sampler,
        sampler_config: &config,
        growth: args.growth,
        out: args.out.display().to_string(),
    };
    let manifest = RunManifest::new("choose-m", to_json_value(&echo)?, args.seed, phases);
    write_json(&manifest_path(&args.out), &manifest)
}

// ---------------------------------------------------------------------------
// error-curve

#[derive(Args)]
struct ErrorCurveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_rep)]
    rep: Representation,
    #[arg(long)]
    kernel: PathBuf,
    /// Control counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
    /// Samplers to sweep, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_sampler, required = true)]
    samplers: Vec<SamplerKind>,
    /// Seeds: a comma list `1,2,7` or an inclusive range `1..20`.
    #[arg(long, value_parser = parse_seed_list)]
    seeds: SeedList,
    #[command(flatten)]
    sampler_flags: SamplerFlags,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct ErrorCurveConfigEcho<'a> {
    input: String,
    rep: Representation,
    kernel: &'a KernelSpec,
    m: &'a [usize],
    samplers: &'a [SamplerKind],
    seeds: &'a [u64],
    sampler_config: &'a SamplerConfig,
    out: String,
}

fn run_error_curve(args: ErrorCurveArgs) -> CliResult {
    if args.m.iter().any(|&m| m == 0) {
        return Err(Failure::Usage("--m entries must be at least 1".to_string()));
    }
    let mut phases = Phases::new();
    let (mu, _) = load_measure(&args.input, args.rep)?;
    phases.mark("load");
    let kernel = read_kernel(&args.kernel)?;
    let config = args.sampler_flags.config(None);
    let seeds = &args.seeds.0;
    let rows = error_curve(&mu, &kernel, &args.m, &args.samplers, seeds, &config)?;
    phases.mark("sweep");

    let mut writer = csv::Writer::from_path(&args.out)
        .map_err(|e| Failure::Run(Error::InvalidArgument(format!("cannot write CSV: {e}"))))?;
    writer
        .write_record([
            "sampler",
            "m",
            "seed",
            "squared_error",
            "trace_error",
            "wall_time_s",
        ])
        .and_then(|_| {
            for row in &rows {
                writer.write_record([
                    row.sampler.to_string(),
                    row.m.to_string(),
                    row.seed.to_string(),
                    format!("{:.16e}", row.squared_error),
                    format!("{:.16e}", row.trace_error),
                    format!("{:.16e}", row.wall_time_s),
                ])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Failure::Run(Error::InvalidArgument(format!("cannot write CSV: {e}"))))?;
    phases.mark("write");

    let echo = ErrorCurveConfigEcho {
        input: args.input.display().to_string(),
        rep: args.rep,
        kernel: &kernel,
        m: &args.m,
        samplers: &args.samplers,
        seeds,
        sampler_config: &config,
        out: args.out.display().to_string(),
    };
    let seed_echo = seeds.first().copied().unwrap_or(0);
    let manifest = RunManifest::new("error-curve", to_json_value(&echo)?, seed_echo, phases);
    write_json(&manifest_path(&args.out), &manifest)
}

// ---------------------------------------------------------------------------
// match

#[derive(Args)]
struct MatchArgs {
    /// Template mesh to deform.
    #[arg(long)]
    template: PathBuf,
    /// Target: a mesh file, or a measure/compression JSON.
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_parser = parse_rep)]
    rep: Representation,
    /// Matching kernel file (JSON).
    #[arg(long)]
    kernel: PathBuf,
    /// Deformation kernel file: a bare kernel or a full config (JSON).
    #[arg(long)]
    defkernel: PathBuf,
    /// Data-term weight; overrides the config file.
    #[arg(long)]
    lambda: Option<f64>,
    /// Control-triangle count for the template; all triangles when absent.
    #[arg(long)]
    m_template: Option<usize>,
    /// Compressed size for the target measure; uncompressed when absent.
    #[arg(long)]
    m_target: Option<usize>,
    /// Time steps of the geodesic integrator; overrides the config file.
    #[arg(long)]
    steps: Option<usize>,
    /// Gradient-descent iteration cap; overrides the config file.
    #[arg(long)]
    iters: Option<usize>,
    /// Fixed step size; backtracking line search when absent.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value = "rls", value_parser = parse_sampler)]
    sampler: SamplerKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    sampler_flags: SamplerFlags,
    /// Output JSON path for the match record.
    #[arg(long)]
    out: PathBuf,
    /// Optional OBJ path for the deformed template.
    #[arg(long)]
    deformed: Option<PathBuf>,
}

/// Accepted shapes of the --defkernel file.
#[derive(Deserialize)]
#[serde(untagged)]
enum DeformationFile {
    Config {
        kernel_v: KernelSpec,
        #[serde(default)]
        n_steps: Option<usize>,
        #[serde(default)]
        lambda_match: Option<f64>,
        #[serde(default)]
        max_iters: Option<usize>,
        #[serde(default)]
        step_rule: Option<StepRule>,
    },
    Kernel(KernelSpec),
}

fn read_deformation(path: &Path, args: &MatchArgs) -> Result<DeformationConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Run(Error::io(path, e)))?;
    let file: DeformationFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Run(Error::parse(path, e.line(), e.to_string())))?;
    let (kernel_v, f_steps, f_lambda, f_iters, f_rule) = match file {
        DeformationFile::Config {
            kernel_v,
            n_steps,
            lambda_match,
            max_iters,
            step_rule,
        } => (kernel_v, n_steps, lambda_match, max_iters, step_rule),
        DeformationFile::Kernel(kernel_v) => (kernel_v, None, None, None, None),
    };
    let step_rule = match args.eta {
        Some(eta) => StepRule::Fixed { eta },
        None => f_rule.unwrap_or(StepRule::Backtracking),
    };
    let lambda_match = args.lambda.or(f_lambda).ok_or_else(|| {
        Failure::Usage("--lambda is required when the deformation file does not set lambda_match".to_string())
    })?;
    Ok(DeformationConfig {
        kernel_v,
        n_steps: args.steps.or(f_steps).unwrap_or(10),
        lambda_match,
        max_iters: args.iters.or(f_iters).unwrap_or(200),
        step_rule,
    })
}

fn load_target(path: &Path) -> Result<MatchTarget, Failure> {
    if MeshFormat::from_path(path).is_some() {
        return Ok(MatchTarget::Mesh(load_mesh(path, None)?));
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::Run(Error::io(path, e)))?;
    if let Ok(measure) = serde_json::from_str::<DiracMeasure>(&text) {
        return Ok(MatchTarget::Measure(measure));
    }
    match serde_json::from_str::<CompressionResult>(&text) {
        Ok(result) => Ok(MatchTarget::Measure(result.compressed)),
        Err(e) => Err(Failure::Run(Error::parse(
            path,
            e.line(),
            "target is neither a mesh nor a measure JSON".to_string(),
        ))),
    }
}

#[derive(Serialize)]
struct MatchConfigEcho<'a> {
    template: String,
    target: String,
    rep: Representation,
    kernel: &'a KernelSpec,
    deformation: &'a DeformationConfig,
    sampler: SamplerKind,
    sampler_config: &'a SamplerConfig,
    m_template: Option<usize>,
    m_target: Option<usize>,
    out: String,
    deformed: Option<String>,
}

#[derive(Serialize)]
struct MatchReport<'a> {
    p0: Vec<[f64; 3]>,
    controls: &'a crate::nystrom::ControlSet,
    iterations: &'a [crate::registration::IterationRecord],
    hausdorff: f64,
    wall_time_s: f64,
    config: MatchConfigEcho<'a>,
}

fn run_match(args: MatchArgs) -> CliResult {
    if args.m_template == Some(0) || args.m_target == Some(0) {
        return Err(Failure::Usage("compressed sizes must be at least 1".to_string()));
    }
    let mut phases = Phases::new();
    let template = load_mesh(&args.template, None)?;
    let target = load_target(&args.target)?;
    phases.mark("load");
    let kernel = read_kernel(&args.kernel)?;
    let cfg = read_deformation(&args.defkernel, &args)?;
    let opts = MatchOptions {
        representation: args.rep,
        kernel: kernel.clone(),
        sampler: args.sampler,
        sampler_config: args.sampler_flags.config(None),
        m_template: args.m_template,
        m_target: args.m_target,
        seed: args.seed,
    };
    let result = compressed_match(&template, &target, &cfg, &opts)?;
    phases.mark("match");

    if let Some(deformed) = &args.deformed {
        save_obj(&result.deformed_template, deformed)?;
    }
    let config = MatchConfigEcho {
        template: args.template.display().to_string(),
        target: args.target.display().to_string(),
        rep: args.rep,
        kernel: &kernel,
        deformation: &cfg,
        sampler: args.sampler,
        sampler_config: &opts.sampler_config,
        m_template: args.m_template,
        m_target: args.m_target,
        out: args.out.display().to_string(),
        deformed: args.deformed.as_ref().map(|p| p.display().to_string()),
    };
    let report = MatchReport {
        p0: result.p0.iter().map(|p| [p.x, p.y, p.z]).collect(),
        controls: &result.controls,
        iterations: &result.iterations,
        hausdorff: result.hausdorff,
        wall_time_s: result.wall_time_s,
        config,
    };
    write_json(&args.out, &report)?;
    phases.mark("write");

    let manifest = RunManifest::new("match", to_json_value(&report.config)?, args.seed, phases);
    write_json(&manifest_path(&args.out), &manifest)
}

// ---------------------------------------------------------------------------
// hausdorff

#[derive(Args)]
struct HausdorffArgs {
    /// First mesh.
    a: PathBuf,
    /// Second mesh.
    b: PathBuf,
}

#[derive(Serialize)]
struct HausdorffReport {
    hausdorff_distance: f64,
    n_vertices_a: usize,
    n_vertices_b: usize,
    manifest: RunManifest,
}

fn run_hausdorff(args: HausdorffArgs) -> CliResult {
    let mut phases = Phases::new();
    let mesh_a = load_mesh(&args.a, None)?;
    let mesh_b = load_mesh(&args.b, None)?;
    phases.mark("load");
    let value = hausdorff_distance(mesh_a.vertices(), mesh_b.vertices())?;
    phases.mark("distance");

    let config = serde_json::json!({
        "a": args.a.display().to_string(),
        "b": args.b.display().to_string(),
    });
    print_json(&HausdorffReport {
        hausdorff_distance: value,
        n_vertices_a: mesh_a.n_vertices(),
        n_vertices_b: mesh_b.n_vertices(),
        manifest: RunManifest::new("hausdorff", config, 0, phases),
    })
}

// ---------------------------------------------------------------------------
// info

#[derive(Args)]
struct InfoArgs {
    /// Mesh to inspect.
    input: PathBuf,
}

#[derive(Serialize)]
struct InfoReport {
    n_vertices: usize,
    n_triangles: usize,
    bounding_box: BoundingBox,
    total_area: f64,
    manifest: RunManifest,
}

#[derive(Serialize)]
struct BoundingBox {
    min: [f64; 3],
    max: [f64; 3],
}

fn run_info(args: InfoArgs) -> CliResult {
    let mut phases = Phases::new();
    let mesh = load_mesh(&args.input, None)?;
    phases.mark("load");
    let (lo, hi) = mesh.bounding_box();
    let config = serde_json::json!({ "input": args.input.display().to_string() });
    print_json(&InfoReport {
        n_vertices: mesh.n_vertices(),
        n_triangles: mesh.n_triangles(),
        bounding_box: BoundingBox {
            min: [lo.x, lo.y, lo.z],
            max: [hi.x, hi.y, hi.z],
        },
        total_area: mesh.total_area(),
        manifest: RunManifest::new("info", config, 0, phases),
    })
}
