use cilab::bench::{decompose_bench, frame_bench, DecompBenchConfig, FrameBenchConfig};
use cilab::config::RunConfig;
use cilab::field::{read_container, write_container, write_obj};
use cilab::kallen::ScalarToy;
use cilab::mollify::{mollification_bench, BenchConfig};
use cilab::stage::{run_with, series_csv, StageReport};
use cilab::Error;
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cilab", version, about = "Convex-integration stage laboratory")]
struct Cli {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for all sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured stages.
    Run,
    /// Baseline and perturbed pointwise decompositions.
    Decompose,
    /// Frame orthonormality and the strain identity.
    Frames,
    /// Fitted mollification rates on the band-limited corpus.
    MollifyBench,
    /// The scalar coefficient-iteration toy.
    KallenToy,
    /// Triangulated surface of a stored map field.
    ExportMesh {
        /// CIGF field container.
        field: PathBuf,
        /// One-based ambient coordinates, e.g. 1,2,3.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
        coords: Vec<usize>,
    },
}

/// Exit statuses.
const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_CHECKS: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_) => EXIT_IO,
        Error::Config(_)
        | Error::Toml(_)
        | Error::Infeasible(_)
        | Error::Resolution(_)
        | Error::DomainExhausted(_)
        | Error::Hypothesis { .. } => EXIT_CONFIG,
        _ => EXIT_ABORT,
    }
}

struct Ctx {
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn load<T: DeserializeOwned + Default>(&self) -> Result<T, Error> {
        match &self.config {
            None => Ok(T::default()),
            Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Toml(e.to_string())),
        }
    }

    fn out_dir(&self, fallback: &str) -> Result<PathBuf, Error> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from(fallback));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn status(pass: bool) -> u8 {
    if pass {
        0
    } else {
        EXIT_CHECKS
    }
}

fn stage_line(r: &StageReport) -> String {
    format!(
        "stage {}: defect/δ = {:.3e}, C_w = {:.3}, min eig = {:.3e}, {} ({:.1} s)",
        r.q,
        r.defect_ratio0,
        r.w.max_constant(),
        r.shortness_min_eig,
        if r.passed() { "pass" } else { "FAIL" },
        r.wall_clock_s
    )
}

fn cmd_run(ctx: &Ctx) -> Result<u8, Error> {
    let mut cfg: RunConfig = match &ctx.config {
        None => RunConfig::default(),
        Some(p) => RunConfig::load(p)?,
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    let dir = ctx.out_dir(&cfg.output)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let mut done: Vec<StageReport> = Vec::new();
    let result = run_with(&cfg, |rep| {
        write_json(&dir.join(format!("stage_{}.json", rep.q)), &serde_json::json!({ "config": &cfg, "report": rep }))?;
        ctx.say(stage_line(rep));
        done.push(rep.clone());
        Ok(())
    });
    fs::write(dir.join("series.csv"), series_csv(&done)?)?;
    match result {
        Ok(outcome) => {
            write_json(&dir.join("summary.json"), &serde_json::json!({ "config": &cfg, "summary": &outcome.summary }))?;
            write_container(fs::File::create(dir.join("final_map.cigf"))?, &outcome.final_map)?;
            if cfg.n == 2 {
                write_obj(fs::File::create(dir.join("final_map.obj"))?, &outcome.final_map, [0, 1, 2])?;
            }
            let s = &outcome.summary;
            ctx.say(format!(
                "‖f_Q − f_0‖_(1,{:.3}) = {:.4e}, partial sum = {:.4e}, total shrink = {:.4}",
                s.alpha_prime, s.holder_distance, s.partial_sum, s.total_shrink
            ));
            Ok(status(s.all_passed))
        }
        Err(Error::StageAbort { q, source, partial }) => {
            let msg = source.to_string();
            write_json(
                &dir.join(format!("stage_{q}_abort.json")),
                &serde_json::json!({ "config": &cfg, "error": msg, "partial": partial }),
            )?;
            eprintln!("stage {q} aborted: {msg}");
            Ok(EXIT_ABORT)
        }
        Err(e) => Err(e),
    }
}

fn cmd_decompose(ctx: &Ctx) -> Result<u8, Error> {
    let mut cfg: DecompBenchConfig = ctx.load()?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    let r = decompose_bench(&cfg)?;
    let a: Vec<String> = r.baseline.iter().map(|v| format!("{v:.15}")).collect();
    ctx.say(format!("A_k = [{}]", a.join(", ")));
    let worst = r.samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    ctx.say(format!("{} perturbed problems, largest residual {worst:.3e}", r.samples.len()));
    write_json(&ctx.out_dir(".")?.join("decompose.json"), &r)?;
    Ok(status(r.pass))
}

fn cmd_frames(ctx: &Ctx) -> Result<u8, Error> {
    let cfg: FrameBenchConfig = ctx.load()?;
    let r = frame_bench(&cfg)?;
    ctx.say(format!("spiral: tangency {:.3e}, gram {:.3e}", r.spiral.tangent, r.spiral.gram));
    ctx.say(format!(
        "strain identity: residual {:.3e} (truncation estimate {:.3e}), order {:.2}",
        r.identity.max_residual, r.identity.truncation_estimate, r.convergence_order
    ));
    write_json(&ctx.out_dir(".")?.join("frames.json"), &r)?;
    Ok(status(r.pass))
}

fn cmd_mollify_bench(ctx: &Ctx) -> Result<u8, Error> {
    let mut cfg: BenchConfig = ctx.load()?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    let r = mollification_bench(&cfg)?;
    for e in &r.estimates {
        let mean = e.fitted.iter().sum::<f64>() / e.fitted.len().max(1) as f64;
        ctx.say(format!("({}) nominal {:+.1}, mean fitted {:+.3}, worst deviation {:.3}", e.name, e.nominal, mean, e.worst_deviation));
    }
    write_json(&ctx.out_dir(".")?.join("mollify_bench.json"), &r)?;
    Ok(status(r.pass))
}

#[derive(serde::Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct ToyConfig {
    eps: f64,
    steps: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { eps: 0.01, steps: 5 }
    }
}

fn cmd_kallen_toy(ctx: &Ctx) -> Result<u8, Error> {
    let cfg: ToyConfig = ctx.load()?;
    let toy = ScalarToy { eps: cfg.eps };
    let (a, trace) = toy.run(cfg.steps)?;
    let exact = toy.fixed_point();
    ctx.say(format!("fixed point {a:.10} (closed form {exact:.10})"));
    let pass = (a - exact).abs() <= 1e-10;
    write_json(
        &ctx.out_dir(".")?.join("kallen_toy.json"),
        &serde_json::json!({ "config": cfg, "fixed_point": a, "closed_form": exact, "trace": trace }),
    )?;
    Ok(status(pass))
}

fn cmd_export_mesh(ctx: &Ctx, field: &Path, coords: &[usize]) -> Result<u8, Error> {
    if coords.len() != 3 || coords.contains(&0) {
        return Err(Error::Config("coordinates are three one-based indices".into()));
    }
    let f = read_container(fs::File::open(field)?)?;
    let stem = field.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
    let path = ctx.out_dir(".")?.join(format!("{stem}.obj"));
    write_obj(fs::File::create(&path)?, &f, [coords[0] - 1, coords[1] - 1, coords[2] - 1])?;
    ctx.say(format!("{} vertices written to {}", f.valid_count(), path.display()));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx { config: cli.config, out: cli.out, seed: cli.seed, quiet: cli.quiet };
    let result = match &cli.command {
        Command::Run => cmd_run(&ctx),
        Command::Decompose => cmd_decompose(&ctx),
        Command::Frames => cmd_frames(&ctx),
        Command::MollifyBench => cmd_mollify_bench(&ctx),
        Command::KallenToy => cmd_kallen_toy(&ctx),
        Command::ExportMesh { field, coords } => cmd_export_mesh(&ctx, field, coords),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
