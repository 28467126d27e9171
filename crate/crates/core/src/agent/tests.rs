use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{graph_costs, LayerSpec, ModelGraph, TensorShape};
use crate::platform::PlatformSet;
use crate::sim::{Assignment, SimModel, SimOptions};
use crate::synth::{random_graph, random_platforms};

fn state(layer_index: usize) -> AgentState {
    AgentState {
        layer_index,
        prev_placement: None,
        intensity_bucket: 0,
        occupancy_bucket: 0,
    }
}

fn fast_cfg(episodes: usize, seed: u64) -> AgentConfig {
    AgentConfig {
        episodes,
        rng_seed: seed,
        ..AgentConfig::default()
    }
}

#[test]
fn intensity_buckets_are_log_spaced() {
    assert_eq!(intensity_bucket(0.0, 8), 0);
    assert_eq!(intensity_bucket(0.2499, 8), 0);
    assert_eq!(intensity_bucket(0.25, 8), 1);
    // edges 0.25 * 1024^(k/6): 0.25, 0.794, 2.52, 8, 25.4, 80.6, 256
    assert_eq!(intensity_bucket(8.0, 8), 4);
    assert_eq!(intensity_bucket(7.99, 8), 3);
    assert_eq!(intensity_bucket(256.0, 8), 7);
    assert_eq!(intensity_bucket(1e9, 8), 7);
    for b in [2usize, 3, 8, 16] {
        let mut last = 0;
        for k in 0..200 {
            let v = intensity_bucket(0.01 * 1.1f64.powi(k), b);
            assert!(v >= last && (v as usize) < b);
            last = v;
        }
    }
}

#[test]
fn occupancy_bucket_edges() {
    assert_eq!(occupancy_bucket(0.0), 0);
    assert_eq!(occupancy_bucket(0.25), 1);
    assert_eq!(occupancy_bucket(0.5), 2);
    assert_eq!(occupancy_bucket(1.0), 2);
    assert_eq!(occupancy_bucket(1.0001), 3);
}

#[test]
fn state_encoding_examples() {
    let graph = ModelGraph::new(
        TensorShape::new(1, 4, 8, 8),
        vec![
            LayerSpec::conv(0, 3, 1, 1, 4, 8, vec![]),
            LayerSpec::activation(1, 8, Some(0)),
            LayerSpec::activation(2, 8, Some(1)),
        ],
    )
    .unwrap();
    let costs = graph_costs(&graph, 1).unwrap();
    let accel = PlatformSet::paper_calibrated().accelerator;
    let first = encode_state(&costs, 0, None, &accel, 8);
    assert_eq!(first.prev_placement, None);
    let act = encode_state(&costs, 1, Some(Placement::Fpga), &accel, 8);
    assert_eq!(act.intensity_bucket, 0);
    assert_eq!(
        act,
        encode_state(&costs, 1, Some(Placement::Fpga), &accel, 8)
    );
    // layers 1 and 2 differ only in index
    let other = encode_state(&costs, 2, Some(Placement::Fpga), &accel, 8);
    assert_eq!(
        (act.intensity_bucket, act.occupancy_bucket),
        (other.intensity_bucket, other.occupancy_bucket)
    );
    assert_ne!(act, other);
}

#[test]
fn greedy_selection_and_tie_break() {
    let mut q = QTablePair::<f64>::new();
    let s = state(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(select_action(&q, &s, 0.0, &mut rng), ActionChoice::RunOnCpu);
    q.q_primary.insert(s, [-1.0, -0.5]);
    for _ in 0..100 {
        assert_eq!(
            select_action(&q, &s, 0.0, &mut rng),
            ActionChoice::OffloadToFpga
        );
    }
    q.q_primary.insert(s, [-0.5, -0.5]);
    assert_eq!(select_action(&q, &s, 0.0, &mut rng), ActionChoice::RunOnCpu);
    // the target table is not consulted for selection
    q.q_target.insert(s, [-9.0, 9.0]);
    assert_eq!(select_action(&q, &s, 0.0, &mut rng), ActionChoice::RunOnCpu);
}

#[test]
fn full_exploration_is_uniform() {
    let q = QTablePair::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fpga = (0..10_000)
        .filter(|_| select_action(&q, &state(0), 1.0, &mut rng) == ActionChoice::OffloadToFpga)
        .count();
    assert!((4800..=5200).contains(&fpga), "{fpga}");
}

#[test]
fn td_update_closed_form() {
    let cfg = AgentConfig::default();
    let mut q = QTablePair::<f64>::new();
    td_update(
        &mut q,
        &state(0),
        ActionChoice::OffloadToFpga,
        -2.0,
        Some(&state(1)),
        &cfg,
    );
    assert_eq!(q.primary(&state(0)), [0.0, -0.2]);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let mut q = QTablePair::<f64>::new();
        let (s, n) = (state(rng.gen_range(0..3)), state(rng.gen_range(3..6)));
        let a = ActionChoice::ALL[rng.gen_range(0..2)];
        let (q0, t0, t1, r): (f64, f64, f64, f64) = (
            rng.gen_range(-5.0..0.0),
            rng.gen_range(-5.0..0.0),
            rng.gen_range(-5.0..0.0),
            rng.gen_range(-3.0..0.0),
        );
        q.primary_mut(s)[a.index()] = q0;
        q.q_target.insert(n, [t0, t1]);
        let cfg = AgentConfig {
            alpha: rng.gen_range(0.01..1.0),
            gamma: rng.gen_range(0.0..0.99),
            ..AgentConfig::default()
        };
        td_update(&mut q, &s, a, r, Some(&n), &cfg);
        let expected = q0 + cfg.alpha * (r + cfg.gamma * t0.max(t1) - q0);
        assert!((q.primary(&s)[a.index()] - expected).abs() <= 1e-12);
        // terminal transition ignores the target table
        let mut q2 = q.clone();
        let before = q2.primary(&s)[a.index()];
        td_update(&mut q2, &s, a, r, None, &cfg);
        assert!((q2.primary(&s)[a.index()] - (before + cfg.alpha * (r - before))).abs() <= 1e-12);
    }
}

#[test]
fn zero_rewards_keep_tables_zero() {
    let cfg = AgentConfig::default();
    let mut q = QTablePair::<f64>::new();
    for i in 0..250 {
        td_update(
            &mut q,
            &state(i % 4),
            ActionChoice::ALL[i % 2],
            0.0,
            Some(&state((i + 1) % 4)),
            &cfg,
        );
    }
    assert!(q.values().all(|v| v == 0.0));
}

#[test]
fn target_syncs_after_exactly_n_updates() {
    let cfg = AgentConfig {
        sync_period_n: 7,
        ..AgentConfig::default()
    };
    let mut q = QTablePair::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 1..=7 {
        td_update(
            &mut q,
            &state(i % 3),
            ActionChoice::ALL[i % 2],
            rng.gen_range(-1.0..0.0),
            Some(&state(i)),
            &cfg,
        );
        if i < 7 {
            // the value path never writes the target
            assert!(q.q_target.is_empty());
            assert_eq!(q.steps_since_sync, i);
        }
    }
    assert_eq!(q.q_target, q.q_primary);
    assert_eq!(q.steps_since_sync, 0);
    assert!(q.q_target.keys().all(|k| q.q_primary.contains_key(k)));
}

#[test]
fn scaling_frozen_table_keeps_greedy_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut q = QTablePair::<f64>::new();
    for i in 0..200 {
        q.q_primary.insert(
            state(i),
            [rng.gen_range(-1.0..0.0), rng.gen_range(-1.0..0.0)],
        );
    }
    q.q_primary.insert(state(500), [-0.25, -0.25]);
    for c in [1e-6, 0.5, 3.0, 1e6] {
        let mut scaled = q.clone();
        scaled
            .q_primary
            .values_mut()
            .for_each(|v| v.iter_mut().for_each(|x| *x *= c));
        for s in q.q_primary.keys() {
            assert_eq!(greedy_action(&q, s), greedy_action(&scaled, s));
        }
    }
}

#[test]
fn config_validation() {
    assert!(AgentConfig::default().validate().is_ok());
    let bad = AgentConfig {
        epsilon_end: 0.9,
        epsilon_start: 0.5,
        ..AgentConfig::default()
    };
    assert!(matches!(
        bad.validate(),
        Err(AgentError::Invalid {
            field: "epsilon_end",
            ..
        })
    ));
    let bad = AgentConfig {
        gamma: 1.0,
        ..AgentConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn qtable_text_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut q = QTablePair::<f64>::new();
    for i in 0..30 {
        let s = AgentState {
            layer_index: i,
            prev_placement: [None, Some(Placement::Cpu), Some(Placement::Fpga)][i % 3],
            intensity_bucket: (i % 8) as u8,
            occupancy_bucket: (i % 4) as u8,
        };
        q.q_primary
            .insert(s, [rng.gen_range(-1.0..0.0), -1e-7 * rng.gen::<f64>()]);
    }
    q.sync_target();
    q.q_primary.insert(state(99), [0.1, 0.2]);
    q.steps_since_sync = 17;
    assert_eq!(QTablePair::<f64>::from_text(&q.to_text()).unwrap(), q);

    assert!(QTablePair::<f64>::from_text("garbage").is_err());
    let orphan = "# cosim qtable v1\nsteps_since_sync 0\ntarget 0 none 0 0 1 2\n";
    assert!(QTablePair::<f64>::from_text(orphan).is_err());
}

fn model(graph: &ModelGraph, p: &PlatformSet) -> SimModel {
    SimModel::new(graph, p, SimOptions::default()).unwrap()
}

#[test]
fn oracle_enumerates_all_and_picks_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_platforms(&mut rng);
    let graph = ModelGraph::new(
        TensorShape::new(1, 4, 8, 8),
        vec![
            LayerSpec::conv(0, 3, 1, 1, 4, 8, vec![]),
            LayerSpec::activation(1, 8, Some(0)),
            LayerSpec::conv(2, 3, 1, 1, 8, 8, vec![1]),
        ],
    )
    .unwrap();
    let m = model(&graph, &p);
    let oracle = brute_force_partition(&m, 0.0, None).unwrap();
    assert_eq!(oracle.evaluated, 8);
    for bits in 0..8 {
        if let Ok(obj) = m.objective(&Assignment::from_bits(3, bits), 0.0) {
            assert!(oracle.objective <= obj);
        }
    }

    let one = ModelGraph::new(
        TensorShape::new(1, 4, 8, 8),
        vec![LayerSpec::conv(0, 3, 1, 1, 4, 8, vec![])],
    )
    .unwrap();
    let m = model(&one, &p);
    let oracle = brute_force_partition(&m, 0.0, None).unwrap();
    let cpu = m.objective(&Assignment::from_bits(1, 0), 0.0).unwrap();
    let fpga = m
        .objective(&Assignment::from_bits(1, 1), 0.0)
        .unwrap_or(f64::INFINITY);
    assert_eq!(oracle.objective, cpu.min(fpga));

    let big = random_graph(&mut ChaCha8Rng::seed_from_u64(7), 12);
    let m = model(&big, &p);
    assert_eq!(
        brute_force_partition(&m, 0.0, Some(big.len() - 1)),
        Err(AgentError::TooManyLayers {
            layers: big.len(),
            max: big.len() - 1
        })
    );
}

#[test]
fn heuristic_threshold_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let graph = random_graph(&mut rng, 10);
    let costs = graph_costs(&graph, 1).unwrap();
    let tileable: Vec<bool> = (0..costs.len()).map(|i| i % 3 != 0).collect();
    let zero = heuristic_baseline(&costs, &tileable, 0.0);
    for (i, p) in zero.placements.iter().enumerate() {
        assert_eq!(*p == Placement::Fpga, tileable[i]);
    }
    assert_eq!(
        heuristic_baseline(&costs, &tileable, f64::INFINITY).count(Placement::Fpga),
        0
    );
    let t = 1.0;
    let mid = heuristic_baseline(&costs, &tileable, t);
    for (i, c) in costs.iter().enumerate() {
        assert_eq!(
            mid.placements[i] == Placement::Fpga,
            tileable[i] && c.arithmetic_intensity >= t
        );
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let graph = random_graph(&mut rng, 8);
    let p = random_platforms(&mut rng);
    let m = model(&graph, &p);
    let a = train_agent::<f64>(&m, &fast_cfg(200, 11)).unwrap();
    let b = train_agent::<f64>(&m, &fast_cfg(200, 11)).unwrap();
    assert_eq!(a.episode_costs.len(), 200);
    assert_eq!(
        a.episode_costs
            .iter()
            .map(|c| c.to_bits())
            .collect::<Vec<_>>(),
        b.episode_costs
            .iter()
            .map(|c| c.to_bits())
            .collect::<Vec<_>>()
    );
    assert_eq!(a.q, b.q);
}

#[test]
fn fast_accelerator_learns_all_offload() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let graph = random_graph(&mut rng, 8);
    let mut p = random_platforms(&mut rng);
    p.accelerator.num_macs = 1 << 20;
    p.accelerator.bus_transfers_per_sec = 1e15;
    p.accelerator.onchip_buffer_bytes = 1 << 26;
    p.accelerator.per_layer_setup_s = 0.0;
    p.hosts.cpu.per_layer_overhead_s = 1e-4;
    let m = model(&graph, &p);
    let oracle = brute_force_partition(&m, 0.0, None).unwrap();
    assert_eq!(
        oracle.assignment,
        Assignment::uniform(graph.len(), Placement::Fpga)
    );
    let out = train_agent::<f64>(&m, &fast_cfg(2000, 1)).unwrap();
    assert_eq!(out.best_assignment, oracle.assignment);
}

#[test]
fn zero_mac_graph_stays_on_host() {
    let graph = ModelGraph::new(
        TensorShape::new(1, 8, 8, 8),
        vec![
            LayerSpec::activation(0, 8, None),
            LayerSpec::pool(1, 2, 2, 0, 8, vec![0]),
            LayerSpec::activation(2, 8, Some(1)),
        ],
    )
    .unwrap();
    let mut p = random_platforms(&mut ChaCha8Rng::seed_from_u64(12));
    p.hosts.cpu.per_layer_overhead_s = 1e-7;
    p.accelerator.per_layer_setup_s = 1e-4;
    let m = model(&graph, &p);
    let oracle = brute_force_partition(&m, 0.0, None).unwrap();
    assert_eq!(oracle.assignment, Assignment::uniform(3, Placement::Cpu));
    assert_eq!(
        train_agent::<f64>(&m, &fast_cfg(2000, 2))
            .unwrap()
            .best_assignment,
        oracle.assignment
    );
}

#[test]
fn untileable_layers_are_forced_to_host() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let graph = random_graph(&mut rng, 8);
    let mut p = random_platforms(&mut rng);
    p.accelerator.onchip_buffer_bytes = 1;
    let m = model(&graph, &p);
    let out = train_agent::<f64>(&m, &fast_cfg(50, 3)).unwrap();
    assert_eq!(
        out.best_assignment,
        Assignment::uniform(graph.len(), Placement::Cpu)
    );
    // every forced step still produced a transition
    assert_eq!(
        out.q.q_primary.values().filter(|v| v[0] != 0.0).count(),
        graph.len()
    );
}

#[test]
fn learned_values_respect_reward_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..5 {
        let graph = random_graph(&mut rng, 10);
        let p = random_platforms(&mut rng);
        let m = model(&graph, &p);
        let cfg = fast_cfg(300, seed);
        // one step can cost at most a whole episode, and no episode costs
        // more than the worst feasible placement
        let r_max = (0..1u64 << m.len())
            .filter_map(|bits| m.objective(&Assignment::from_bits(m.len(), bits), 0.0).ok())
            .fold(0.0, f64::max);
        let out = train_agent::<f64>(&m, &cfg).unwrap();
        let floor = -r_max / (1.0 - cfg.gamma);
        assert!(out.q.values().all(|v| v <= 0.0 && v >= floor));
    }
}

#[test]
fn dominance_chain_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..20 {
        let graph = random_graph(&mut rng, 10);
        let p = random_platforms(&mut rng);
        let m = model(&graph, &p);
        let oracle = brute_force_partition(&m, 0.0, None).unwrap();
        let heur = best_threshold_heuristic(&m, 0.0).unwrap();
        let cpu = m
            .objective(&Assignment::uniform(m.len(), Placement::Cpu), 0.0)
            .unwrap();
        assert!(oracle.objective <= heur.objective && heur.objective <= cpu);
    }
}
