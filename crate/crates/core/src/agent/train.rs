use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    encode_state, greedy_action, select_action, td_update, ActionChoice, AgentConfig, QTablePair,
};
use crate::sim::{objective, Assignment, Placement, SimModel};
use crate::{Error, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub q: QTablePair<T>,
    /// Greedy placement under the final primary table.
    pub best_assignment: Assignment,
    /// Objective of that placement.
    pub best_objective: f64,
    /// Objective of every training episode, in order.
    pub episode_costs: Vec<f64>,
}

fn forced(model: &SimModel, pos: usize, choice: ActionChoice) -> ActionChoice {
    if model.tileable(pos) {
        choice
    } else {
        ActionChoice::RunOnCpu
    }
}

/// Runs `cfg.episodes` epsilon-greedy episodes over the layers in storage
/// order. Each step's reward is the negated makespan increase plus
/// `lambda` times the energy increase, so an episode's rewards sum to the
/// negated objective. Layers the accelerator cannot tile are forced onto
/// the host and still produce a transition.
pub fn train_agent<T: Scalar>(
    model: &SimModel,
    cfg: &AgentConfig,
) -> Result<TrainOutcome<T>, Error> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut q = QTablePair::new();
    let mut epsilon = cfg.epsilon_start;
    let mut episode_costs = Vec::with_capacity(cfg.episodes);
    let lambda = cfg.reward_energy_weight;
    let accel = model.accel();
    let state = |pos, prev| encode_state(&model.costs, pos, prev, accel, cfg.intensity_buckets);

    for _ in 0..cfg.episodes {
        let mut stepper = model.stepper(false);
        let mut s = state(0, None);
        for pos in 0..model.len() {
            let action = forced(model, pos, select_action(&q, &s, epsilon, &mut rng));
            let delta = stepper.step(action.placement())?;
            let reward = -(delta.makespan_s + lambda * delta.energy_j);
            let next = (pos + 1 < model.len()).then(|| state(pos + 1, Some(action.placement())));
            td_update(&mut q, &s, action, T::of(reward), next.as_ref(), cfg);
            if let Some(n) = next {
                s = n;
            }
        }
        let result = stepper.finish();
        episode_costs.push(objective(result.makespan_s, result.energy_j, lambda));
        epsilon = (epsilon * cfg.epsilon_decay).max(cfg.epsilon_end);
    }

    let best_assignment = greedy_assignment(model, &q, cfg.intensity_buckets);
    let best_objective = model.objective(&best_assignment, lambda)?;
    Ok(TrainOutcome {
        q,
        best_assignment,
        best_objective,
        episode_costs,
    })
}

/// Epsilon-zero rollout of the primary table.
pub fn greedy_assignment<T: Scalar>(
    model: &SimModel,
    q: &QTablePair<T>,
    intensity_buckets: usize,
) -> Assignment {
    let mut placements = Vec::with_capacity(model.len());
    let mut prev: Option<Placement> = None;
    for pos in 0..model.len() {
        let s = encode_state(&model.costs, pos, prev, model.accel(), intensity_buckets);
        let p = forced(model, pos, greedy_action(q, &s)).placement();
        placements.push(p);
        prev = Some(p);
    }
    Assignment { placements }
}
