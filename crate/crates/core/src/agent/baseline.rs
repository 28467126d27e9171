use super::{AgentError, DEFAULT_MAX_ORACLE_LAYERS};
use crate::graph::LayerCost;
use crate::sim::{Assignment, Placement, SimError, SimModel};

/// Offloads every tileable layer whose arithmetic intensity reaches
/// `threshold`.
pub fn heuristic_baseline(costs: &[LayerCost], tileable: &[bool], threshold: f64) -> Assignment {
    Assignment {
        placements: costs
            .iter()
            .zip(tileable)
            .map(|(c, &ok)| {
                if ok && c.arithmetic_intensity >= threshold {
                    Placement::Fpga
                } else {
                    Placement::Cpu
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicResult {
    pub assignment: Assignment,
    pub threshold: f64,
    pub objective: f64,
}

/// Heuristic at the best threshold among every distinct layer intensity and
/// infinity (all host). The lowest threshold wins ties.
pub fn best_threshold_heuristic(
    model: &SimModel,
    lambda: f64,
) -> Result<HeuristicResult, SimError> {
    let tileable: Vec<bool> = (0..model.len()).map(|i| model.tileable(i)).collect();
    let mut thresholds: Vec<f64> = model.costs.iter().map(|c| c.arithmetic_intensity).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let mut best: Option<HeuristicResult> = None;
    for threshold in thresholds {
        let assignment = heuristic_baseline(&model.costs, &tileable, threshold);
        let objective = model.objective(&assignment, lambda)?;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(HeuristicResult {
                assignment,
                threshold,
                objective,
            });
        }
    }
    Ok(best.expect("the all-host threshold is always evaluated"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub assignment: Assignment,
    pub objective: f64,
    /// Placement vectors enumerated, feasible or not.
    pub evaluated: u64,
}

/// Exhaustive search over all 2^L placements. Infeasible vectors (an
/// untileable layer offloaded) are skipped; the first minimum in
/// enumeration order wins, so all-host wins exact ties.
pub fn brute_force_partition(
    model: &SimModel,
    lambda: f64,
    max_layers: Option<usize>,
) -> Result<OracleResult, AgentError> {
    let max = max_layers.unwrap_or(DEFAULT_MAX_ORACLE_LAYERS);
    let layers = model.len();
    if layers > max || layers >= 64 {
        return Err(AgentError::TooManyLayers { layers, max });
    }
    let mut best: Option<(u64, f64)> = None;
    let total = 1u64 << layers;
    for bits in 0..total {
        let assignment = Assignment::from_bits(layers, bits);
        match model.objective(&assignment, lambda) {
            Ok(obj) if best.is_none_or(|(_, b)| obj < b) => best = Some((bits, obj)),
            Ok(_) | Err(SimError::InfeasibleAssignment { .. }) => {}
            Err(e) => return Err(AgentError::Format(e.to_string())),
        }
    }
    let (bits, objective) = best.expect("all-host placement is always feasible");
    Ok(OracleResult {
        assignment: Assignment::from_bits(layers, bits),
        objective,
        evaluated: total,
    })
}
