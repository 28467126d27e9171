use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BenchmarkConfig, HarnessError, Mode};
use crate::agent::{
    best_threshold_heuristic, brute_force_partition, greedy_assignment, train_agent,
};
use crate::graph::ModelGraph;
use crate::platform::{estimate_resources, PlatformSet};
use crate::quant::{eval_accuracy, FloatWeights, ModelWeights, Precision, SyntheticTask};
use crate::sim::{
    report_metrics, Assignment, HostKind, Placement, RunReport, SimModel, SimOptions, SimResult,
};
use crate::{Error, QTable};

/// Independent seed streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Task = 1,
    Weights = 2,
    Train = 3,
    Calibration = 4,
    Eval = 5,
}

fn derive_seed(base: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: RunReport,
    pub sim: SimResult,
    /// Table trained for this run; `None` when loaded or not needed.
    pub trained: Option<QTable>,
}

fn host_of(mode: Mode) -> HostKind {
    if mode == Mode::Gpu {
        HostKind::Gpu
    } else {
        HostKind::Cpu
    }
}

/// Placement for `mode`, plus the freshly trained table for fpga-agent.
pub fn resolve_assignment(
    cfg: &BenchmarkConfig,
    model: &SimModel,
    qtable: Option<&QTable>,
) -> Result<(Assignment, Option<QTable>), Error> {
    let lambda = cfg.energy_weight();
    Ok(match cfg.mode {
        Mode::Cpu | Mode::Gpu => (Assignment::uniform(model.len(), Placement::Cpu), None),
        Mode::FpgaAgent => {
            let agent = cfg.agent.clone().unwrap_or_default();
            match qtable {
                Some(q) => (greedy_assignment(model, q, agent.intensity_buckets), None),
                None => {
                    let outcome = train_agent::<f64>(model, &agent)?;
                    (outcome.best_assignment, Some(outcome.q))
                }
            }
        }
        Mode::FpgaHeuristic => (best_threshold_heuristic(model, lambda)?.assignment, None),
        Mode::FpgaOracle => (brute_force_partition(model, lambda, None)?.assignment, None),
    })
}

/// Top-1 accuracy on the configured synthetic task: float for host-only
/// placements, int8 once any layer runs on the accelerator.
pub fn benchmark_accuracy(
    cfg: &BenchmarkConfig,
    graph: &ModelGraph,
    precision: Precision,
) -> Result<f64, Error> {
    let q = &cfg.quant;
    let seed = cfg.rng_seed;
    let task = SyntheticTask::<f32>::new(
        graph.input_shape,
        graph.layers.last().map_or(1, |l| l.out_channels),
        q.class_spread,
        derive_seed(seed, Stream::Task),
    );
    let mut float = FloatWeights::he_init(graph, derive_seed(seed, Stream::Weights));
    float.fit_centroid_classifier(
        graph,
        &task.sample(q.train_samples, derive_seed(seed, Stream::Train)),
    )?;
    let calibration = task.sample(
        q.calibration_samples,
        derive_seed(seed, Stream::Calibration),
    );
    let weights = ModelWeights::new(graph, float, &calibration.samples, q.scale_epsilon as f32)?;
    let eval = task.sample(cfg.num_images, derive_seed(seed, Stream::Eval));
    Ok(eval_accuracy(graph, &weights, &eval, precision)?.top1_accuracy)
}

pub fn run_with(
    cfg: &BenchmarkConfig,
    graph: &ModelGraph,
    platforms: &PlatformSet,
    qtable: Option<&QTable>,
) -> Result<BenchOutcome, Error> {
    let options = SimOptions {
        host: host_of(cfg.mode),
        ..SimOptions::default()
    };
    let model = SimModel::new(graph, platforms, options)?;
    let (assignment, trained) = resolve_assignment(cfg, &model, qtable)?;
    if assignment.count(Placement::Fpga) > 0 {
        let resources = estimate_resources(&platforms.accelerator);
        if !resources.is_feasible() {
            return Err(HarnessError::ResourcesExceeded {
                utilization: resources.utilization,
            }
            .into());
        }
    }
    let sim = model.simulate(&assignment, true)?;
    let mut report = report_metrics(cfg.mode.label(), &sim, platforms);
    if cfg.num_images > 0 {
        let precision = if assignment.count(Placement::Fpga) > 0 {
            Precision::Int8
        } else {
            Precision::Float
        };
        report.top1_accuracy = Some(benchmark_accuracy(cfg, graph, precision)?);
    }
    Ok(BenchOutcome {
        report,
        sim,
        trained,
    })
}

/// Loads the model and platforms named by `cfg` and runs its mode.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    qtable: Option<&QTable>,
) -> Result<BenchOutcome, Error> {
    let graph = cfg.build_model()?;
    let platforms = cfg.load_platforms()?;
    run_with(cfg, &graph, &platforms, qtable)
}
