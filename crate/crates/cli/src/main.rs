use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cosim_core::agent::train_agent;
use cosim_core::graph::{build_resnet_like_with_classes, TensorShape, DEFAULT_NUM_CLASSES};
use cosim_core::harness::{
    exit_code, load_reports_json, render_report, run_with, verify_claims, BenchmarkConfig, Mode,
    ReportFormat, EXIT_CLAIM_FAILED, EXIT_OK,
};
use cosim_core::platform::estimate_resources;
use cosim_core::sim::{Placement, RunReport, SimModel, SimOptions};
use cosim_core::{Error, QTable};

/// Agent-driven CPU/FPGA co-design simulator.
///
/// Exit codes: 0 success, 1 a verified claim failed, 2 bad config or
/// input, 3 infeasible placement or accelerator.
#[derive(Parser, Debug)]
#[command(name = "cosim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the residual CNN template as a model JSON file.
    GenModel(GenModelArgs),
    /// Train the placement agent and save its Q-tables.
    Train(TrainArgs),
    /// Run one or more modes and print the metric table.
    Bench(BenchArgs),
    /// Run cpu, gpu and fpga-agent (or read reports) and check the claims.
    Verify(VerifyArgs),
    /// Simulate one mode and write its per-resource timeline as CSV.
    ExportTimeline(TimelineArgs),
    /// Print the default benchmark config.
    EmitConfig(EmitConfigArgs),
}

#[derive(Args, Debug)]
struct GenModelArgs {
    #[arg(long, default_value_t = 4)]
    num_blocks: usize,
    #[arg(long, default_value_t = 16)]
    base_channels: usize,
    /// N,C,H,W with N = 1.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [1, 3, 32, 32])]
    input_shape: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Options shared by every command that runs the simulator.
#[derive(Args, Debug)]
struct RunArgs {
    /// Benchmark config TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the run seed and the agent seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use a saved Q-table instead of training the agent.
    #[arg(long)]
    load_qtable: Option<PathBuf>,
    /// Accuracy samples; 0 skips accuracy.
    #[arg(long)]
    num_images: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Overrides the configured episode count.
    #[arg(long)]
    episodes: Option<usize>,
    /// Where to write the Q-tables.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Modes to run, in column order; the config's mode when omitted.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<Mode>,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Output file; the config's output.report, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Check these JSON reports instead of running the benchmarks.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TimelineArgs {
    #[command(flatten)]
    run: RunArgs,
    /// The config's mode when omitted.
    #[arg(long)]
    mode: Option<Mode>,
    /// Output CSV; the config's output.timeline_csv when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmitConfigArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn load_config(args: &RunArgs) -> Result<BenchmarkConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => BenchmarkConfig::load(path)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = args.num_images {
        cfg.num_images = n;
    }
    Ok(cfg)
}

fn load_qtable(args: &RunArgs) -> Result<Option<QTable>, Error> {
    args.load_qtable.as_ref().map(QTable::load).transpose()
}

/// Runs `modes` in order against one loaded model and platform set.
fn run_modes(
    cfg: &BenchmarkConfig,
    modes: &[Mode],
    qtable: Option<&QTable>,
) -> Result<Vec<RunReport>, Error> {
    let graph = cfg.build_model()?;
    let platforms = cfg.load_platforms()?;
    modes
        .iter()
        .map(|&mode| {
            let run = BenchmarkConfig {
                mode,
                ..cfg.clone()
            };
            Ok(run_with(&run, &graph, &platforms, qtable)?.report)
        })
        .collect()
}

fn gen_model(args: GenModelArgs) -> Result<i32, Error> {
    let shape = TensorShape::new(
        args.input_shape[0],
        args.input_shape[1],
        args.input_shape[2],
        args.input_shape[3],
    );
    if args.num_blocks == 0
        || args.base_channels == 0
        || args.num_classes == 0
        || !shape.is_positive()
    {
        return Err(Error::Parse {
            what: "model parameters".into(),
            message: "blocks, channels, classes and every input dimension must be positive".into(),
        });
    }
    let graph = build_resnet_like_with_classes(
        args.num_blocks,
        args.base_channels,
        shape,
        args.num_classes,
    );
    write_or_print(args.out.as_deref(), &graph.to_json_string())?;
    Ok(EXIT_OK)
}

fn train(args: TrainArgs) -> Result<i32, Error> {
    let cfg = load_config(&args.run)?;
    let mut agent = cfg.agent.clone().unwrap_or_default();
    if let Some(n) = args.episodes {
        agent.episodes = n;
    }
    let graph = cfg.build_model()?;
    let platforms = cfg.load_platforms()?;
    let model = SimModel::new(&graph, &platforms, SimOptions::default())?;
    let outcome = train_agent::<f64>(&model, &agent)?;
    outcome.q.save(&args.out)?;
    let a = &outcome.best_assignment;
    println!(
        "trained {} episodes on {} layers: {} on fpga, {} on cpu, objective {:.6e}",
        agent.episodes,
        a.len(),
        a.count(Placement::Fpga),
        a.count(Placement::Cpu),
        outcome.best_objective
    );
    println!("q-tables written to {}", args.out.display());
    Ok(EXIT_OK)
}

fn bench(args: BenchArgs) -> Result<i32, Error> {
    let cfg = load_config(&args.run)?;
    let qtable = load_qtable(&args.run)?;
    let modes = if args.mode.is_empty() {
        vec![cfg.mode]
    } else {
        args.mode.clone()
    };
    let reports = run_modes(&cfg, &modes, qtable.as_ref())?;
    let mut text = render_report(&reports, args.format);
    if args.format == ReportFormat::Table {
        let r = estimate_resources(&cfg.load_platforms()?.accelerator);
        text.push_str(&format!(
            "\nFPGA resources: LUT {:.1}%, DSP {:.1}%, BRAM {:.1}%, utilization {:.1}%{}\n",
            r.lut_utilization * 100.0,
            r.dsp_utilization * 100.0,
            r.bram_utilization * 100.0,
            r.utilization * 100.0,
            if r.is_feasible() {
                ""
            } else {
                " (does not fit)"
            }
        ));
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.report.as_ref().map(|p| cfg.resolve(p)));
    write_or_print(out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn verify(args: VerifyArgs) -> Result<i32, Error> {
    let cfg = load_config(&args.run)?;
    let reports = match &args.reports {
        Some(path) => load_reports_json(path)?,
        None => {
            let qtable = load_qtable(&args.run)?;
            run_modes(
                &cfg,
                &[Mode::Cpu, Mode::Gpu, Mode::FpgaAgent],
                qtable.as_ref(),
            )?
        }
    };
    let checklist = verify_claims(&reports, cfg.quant.accuracy_threshold_points)?;
    print!("{checklist}");
    Ok(if checklist.all_passed() {
        EXIT_OK
    } else {
        EXIT_CLAIM_FAILED
    })
}

fn export_timeline(args: TimelineArgs) -> Result<i32, Error> {
    let mut cfg = load_config(&args.run)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    cfg.num_images = 0;
    let qtable = load_qtable(&args.run)?;
    let graph = cfg.build_model()?;
    let platforms = cfg.load_platforms()?;
    let outcome = run_with(&cfg, &graph, &platforms, qtable.as_ref())?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.timeline_csv.as_ref().map(|p| cfg.resolve(p)));
    write_or_print(out.as_deref(), &outcome.sim.timeline.to_csv())?;
    Ok(EXIT_OK)
}

fn emit_config(args: EmitConfigArgs) -> Result<i32, Error> {
    write_or_print(
        args.out.as_deref(),
        &BenchmarkConfig::default().to_toml_string(),
    )?;
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenModel(a) => gen_model(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
        Command::ExportTimeline(a) => export_timeline(a),
        Command::EmitConfig(a) => emit_config(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
