use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use uled_inspect::eval::ClassificationReport;
use uled_inspect::io::{write_defect_map, write_frame};
use uled_inspect::ml::KMeansConfig;
use uled_inspect::pipeline::{run, AnalysisConfig, CornerMode, PipelineConfig, Stage};
use uled_inspect::synthgen::{generate, SynthConfig};
use uled_inspect::Error;

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

/// Relative tolerance used by `evaluate` for numeric fields.
const REL_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "uled-inspect", version, about = "µLED array grid reconstruction and defect classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic frame with known defects from a key = value config.
    Generate(GenerateArgs),
    /// Reconstruct the grid, classify every µLED and write the report.
    Analyze(AnalyzeArgs),
    /// Compare two reports.
    Evaluate(EvaluateArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_frame: PathBuf,
    #[arg(long)]
    out_defects: PathBuf,
    /// Corner sidecar; defaults to the frame path with a `.corners.json` extension.
    #[arg(long)]
    out_corners: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    frame: PathBuf,
    /// Ground-truth defect map; enables the confusion matrix.
    #[arg(long)]
    defects: Option<PathBuf>,
    /// Emitting-surface corners TL, TR, BR, BL as x1,y1,...,x4,y4.
    #[arg(long, value_parser = parse_corners, conflicts_with = "auto_corners", allow_hyphen_values = true)]
    corners: Option<[[f64; 2]; 4]>,
    /// Detect the corners from the frame (the default).
    #[arg(long)]
    auto_corners: bool,
    #[arg(long, default_value_t = 0.3)]
    rel_threshold: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_init: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Pass exactly twice.
    #[arg(long = "report", required = true)]
    reports: Vec<PathBuf>,
}

fn parse_corners(s: &str) -> Result<[[f64; 2]; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 8 || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("expected 8 finite numbers, got {}", v.len()));
    }
    Ok([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]], [v[6], v[7]]])
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("ULED_INSPECT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new(EXIT_USAGE, format!("ULED_INSPECT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn corners_path(frame: &Path) -> PathBuf {
    frame.with_extension("corners.json")
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = SynthConfig::from_kv_str(&text).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let synth = generate(&cfg).map_err(|e| Failure::new(error_code(&e), e.to_string()))?;
    let sidecar = json!({
        "corners": synth.corners,
        "distortion": synth.distortion.matrix(),
        "seed": cfg.seed,
    });
    let corners = args.out_corners.unwrap_or_else(|| corners_path(&args.out_frame));
    let io = |e: Error| Failure::new(error_code(&e), e.to_string());
    write_frame(&synth.frame, &args.out_frame).map_err(io)?;
    write_defect_map(&synth.defects, &args.out_defects).map_err(io)?;
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(&corners, text).map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", corners.display())))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let corners = match args.corners {
        Some(c) => CornerMode::Explicit(c),
        None => CornerMode::Auto,
    };
    let cfg = PipelineConfig {
        frame: args.frame,
        defects: args.defects,
        out_dir: args.out,
        analysis: AnalysisConfig {
            corners,
            rel_threshold: args.rel_threshold,
            kmeans: KMeansConfig { seed: args.seed, n_init: args.n_init, ..Default::default() },
        },
    };
    let report = run(&cfg).map_err(|e| {
        let code = match (&e.source, e.stage) {
            (Error::Io { .. }, _) => EXIT_IO,
            (_, Stage::Config) => EXIT_USAGE,
            _ => EXIT_STAGE,
        };
        Failure::new(code, e.to_string())
    })?;
    println!("{}", summary(&report));
    Ok(())
}

fn summary(r: &ClassificationReport) -> String {
    let g = &r.grid_metrics;
    let s = &r.les_stats;
    let mut line = format!(
        "cells={} cell_size={:.3}x{:.3}px defects={}",
        r.per_cell.len(),
        g.mean_cell_width,
        g.mean_cell_height,
        r.per_cell.len() - r.functional_count()
    );
    if let Some(cm) = &r.confusion {
        line += &format!(
            " accuracy={:.6} fnr={:.6} fpr={:.6}",
            cm.accuracy, cm.false_negative_rate, cm.false_positive_rate
        );
    }
    line += &format!(
        " raw_mean={:.6e}±{:.3e} denoised_mean={:.6e}±{:.3e}",
        s.raw_mean, s.raw_sem, s.denoised_mean, s.denoised_sem
    );
    if !r.flags.is_empty() {
        line += &format!(" flags={}", r.flags.join(","));
    }
    line
}

fn load_report(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))?;
    let report = ClassificationReport::from_json(&text)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn diff(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let p = format!("{path}.{k}");
                diff(&p, x.get(k).unwrap_or(&Value::Null), y.get(k).unwrap_or(&Value::Null), out);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            let scale = 1f64.max(x.abs()).max(y.abs());
            if (x - y).abs() > REL_TOLERANCE * scale {
                out.push(format!("{path}: {x} != {y}"));
            }
        }
        _ if a != b => out.push(format!("{path}: {a} != {b}")),
        _ => {}
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    if args.reports.len() != 2 {
        return Err(Failure::new(EXIT_USAGE, format!("--report must be given twice, got {}", args.reports.len())));
    }
    let a = load_report(&args.reports[0])?;
    let b = load_report(&args.reports[1])?;
    let mut lines = Vec::new();
    for section in ["grid_metrics", "confusion", "les_stats", "flags"] {
        diff(section, &a[section], &b[section], &mut lines);
    }
    let labels = |v: &Value| -> Vec<Value> {
        v["per_cell"].as_array().map_or(Vec::new(), |cells| cells.iter().map(|c| c["predicted"].clone()).collect())
    };
    let (la, lb) = (labels(&a), labels(&b));
    if la != lb {
        let changed = la.iter().zip(&lb).filter(|(x, y)| x != y).count() + la.len().abs_diff(lb.len());
        lines.push(format!("per_cell.predicted: {changed} cells differ"));
    }
    if lines.is_empty() {
        println!("identical");
        Ok(())
    } else {
        for l in &lines {
            println!("{l}");
        }
        Err(Failure::new(EXIT_MISMATCH, format!("{} field(s) differ", lines.len())))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Version => {
            println!("uled-inspect {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
