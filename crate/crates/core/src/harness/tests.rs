use std::path::Path;

use super::*;
use crate::agent::AgentConfig;
use crate::graph::{LayerSpec, ModelGraph, TensorShape};
use crate::sim::{PlacementCounts, RunReport, SimModel, SimOptions};

fn quick(mode: Mode) -> BenchmarkConfig {
    BenchmarkConfig {
        mode,
        num_images: 0,
        ..BenchmarkConfig::default()
    }
}

fn parse(text: &str) -> Result<BenchmarkConfig, ConfigError> {
    BenchmarkConfig::from_toml_str(text, Path::new("bench.toml"))
}

fn report(
    label: &str,
    latency: f64,
    throughput: f64,
    power: f64,
    accuracy: Option<f64>,
) -> RunReport {
    RunReport {
        label: label.into(),
        latency_ms_per_image: latency,
        throughput_images_per_s: throughput,
        power_w: power,
        energy_j_per_image: power * latency / 1000.0,
        efficiency_images_per_s_per_w: throughput / power,
        stream_overhead_ms: 0.0,
        assignment_summary: PlacementCounts::default(),
        top1_accuracy: accuracy,
    }
}

fn table_reports() -> Vec<RunReport> {
    vec![
        report("CPU", 40.2, 24.8, 85.0, Some(92.0)),
        report("GPU", 6.1, 112.0, 125.0, Some(92.2)),
        report("AI_FPGA_Agent", 3.5, 284.7, 28.0, Some(91.9)),
    ]
}

#[test]
fn default_config_round_trips_byte_identically() {
    let first = BenchmarkConfig::default().to_toml_string();
    let loaded = parse(&first).unwrap();
    assert_eq!(loaded.to_toml_string(), first);
    assert_eq!(loaded.base_dir, Path::new(""));
}

#[test]
fn parse_errors_name_the_field() {
    let text = BenchmarkConfig::default().to_toml_string();
    let err = parse(&text.replace("class_spread = 0.75", "class_spread = \"wide\"")).unwrap_err();
    assert_eq!(err.field, "quant.class_spread");
    assert_eq!(err.path, Path::new("bench.toml"));

    let err = parse(&text.replace("[quant]\n", "[quant]\nbogus = 1\n")).unwrap_err();
    assert_eq!(err.field, "quant.bogus");
    assert!(err.reason.contains("unknown field"), "{}", err.reason);

    let err = parse(&text.replace("mode = \"fpga-agent\"", "mode = \"tpu\"")).unwrap_err();
    assert_eq!(err.field, "mode");
}

#[test]
fn omitted_keys_take_defaults() {
    let cfg =
        parse("mode = \"cpu\"\n[agent]\nepisodes = 40\n[quant]\nclass_spread = 0.5\n").unwrap();
    let expected = BenchmarkConfig {
        mode: Mode::Cpu,
        agent: Some(AgentConfig {
            episodes: 40,
            ..AgentConfig::default()
        }),
        quant: QuantSection {
            class_spread: 0.5,
            ..QuantSection::default()
        },
        ..BenchmarkConfig::default()
    };
    assert_eq!(cfg, expected);
    assert_eq!(parse("").unwrap(), BenchmarkConfig::default());

    let err = parse("[agent]\nalpah = 0.1\n").unwrap_err();
    assert_eq!(err.field, "agent.alpah");
}

#[test]
fn validation_errors_name_the_field() {
    let mut cfg = BenchmarkConfig::default();
    cfg.agent.as_mut().unwrap().alpha = 0.0;
    assert_eq!(
        cfg.validate(Path::new("c.toml")).unwrap_err().field,
        "agent.alpha"
    );

    let cfg = BenchmarkConfig {
        agent: None,
        ..BenchmarkConfig::default()
    };
    assert_eq!(
        cfg.validate(Path::new("c.toml")).unwrap_err().field,
        "agent"
    );
    // Only fpga-agent needs the agent section.
    BenchmarkConfig {
        mode: Mode::Cpu,
        ..cfg
    }
    .validate(Path::new("c.toml"))
    .unwrap();

    let mut cfg = BenchmarkConfig::default();
    cfg.quant.calibration_samples = 0;
    assert_eq!(
        cfg.validate(Path::new("c.toml")).unwrap_err().field,
        "quant.calibration_samples"
    );

    let mut cfg = BenchmarkConfig::default();
    cfg.model.input_shape = [2, 3, 32, 32];
    assert_eq!(
        cfg.validate(Path::new("c.toml")).unwrap_err().field,
        "model.input_shape"
    );
}

#[test]
fn unknown_builtin_is_a_config_error() {
    let mut cfg = quick(Mode::Cpu);
    cfg.platforms.source = "builtin:nope".into();
    let err = run_benchmark(&cfg, None).unwrap_err();
    assert!(matches!(err, crate::Error::Config(ref c) if c.field == "platforms.source"));
    assert_eq!(exit_code(&err), EXIT_CONFIG);
}

#[test]
fn relative_paths_resolve_against_the_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    let graph = quick(Mode::Cpu).build_model().unwrap();
    graph.save(dir.path().join("m.json")).unwrap();
    let text = BenchmarkConfig::default()
        .to_toml_string()
        .replace("[model]\n", "[model]\npath = \"m.json\"\n");
    let path = dir.path().join("bench.toml");
    std::fs::write(&path, text).unwrap();
    let cfg = BenchmarkConfig::load(&path).unwrap();
    assert_eq!(cfg.build_model().unwrap(), graph);
}

#[test]
fn table_columns_are_reproduced() {
    let expect = [
        (Mode::Cpu, 40.2, 24.8, 85.0, 0.29),
        (Mode::Gpu, 6.1, 112.0, 125.0, 0.90),
        (Mode::FpgaAgent, 3.5, 284.7, 28.0, 10.17),
    ];
    for (mode, latency, throughput, power, efficiency) in expect {
        let r = run_benchmark(&quick(mode), None).unwrap().report;
        assert_eq!(r.label, mode.label());
        assert!(
            (r.latency_ms_per_image / latency - 1.0).abs() < 0.01,
            "{mode}: {r:?}"
        );
        assert!(
            (r.throughput_images_per_s / throughput - 1.0).abs() < 0.01,
            "{mode}: {r:?}"
        );
        assert!((r.power_w / power - 1.0).abs() < 0.01, "{mode}: {r:?}");
        assert_eq!(
            format!("{:.2}", r.efficiency_images_per_s_per_w),
            format!("{efficiency:.2}")
        );
    }
}

#[test]
fn same_seed_gives_identical_json() {
    let mut cfg = quick(Mode::FpgaAgent);
    cfg.num_images = 20;
    cfg.quant.train_samples = 20;
    cfg.quant.calibration_samples = 4;
    let a = run_benchmark(&cfg, None).unwrap();
    let b = run_benchmark(&cfg, None).unwrap();
    let json =
        |o: &BenchOutcome| render_report(std::slice::from_ref(&o.report), ReportFormat::Json);
    assert_eq!(json(&a), json(&b));
    assert!(a.report.top1_accuracy.is_some());
    assert_eq!(a.trained, b.trained);
}

#[test]
fn loaded_table_replaces_training() {
    let cfg = quick(Mode::FpgaAgent);
    let trained = run_benchmark(&cfg, None).unwrap();
    let q = trained.trained.clone().unwrap();
    let reused = run_benchmark(&cfg, Some(&q)).unwrap();
    assert!(reused.trained.is_none());
    assert_eq!(reused.report, trained.report);
}

#[test]
fn oracle_is_no_worse_than_any_mode_on_a_toy_graph() {
    let graph = ModelGraph::new(
        TensorShape::new(1, 8, 8, 8),
        vec![
            LayerSpec::conv(0, 3, 1, 1, 8, 16, vec![]),
            LayerSpec::activation(1, 16, Some(0)),
            LayerSpec::conv(2, 1, 1, 0, 16, 8, vec![1]),
        ],
    )
    .unwrap();
    let platforms = crate::platform::PlatformSet::paper_calibrated();
    let model = SimModel::new(&graph, &platforms, SimOptions::default()).unwrap();
    let objective = |mode: Mode| {
        let cfg = quick(mode);
        let (assignment, _) = resolve_assignment(&cfg, &model, None).unwrap();
        model.objective(&assignment, 0.0).unwrap()
    };
    let oracle = objective(Mode::FpgaOracle);
    for mode in [Mode::Cpu, Mode::FpgaAgent, Mode::FpgaHeuristic] {
        assert!(oracle <= objective(mode), "{mode}");
    }
}

#[test]
fn oracle_on_the_full_model_is_infeasible() {
    let err = run_benchmark(&quick(Mode::FpgaOracle), None).unwrap_err();
    assert_eq!(exit_code(&err), EXIT_INFEASIBLE);
}

#[test]
fn claims_on_table_values() {
    let checklist = verify_claims(&table_reports(), 0.5).unwrap();
    let speedup = checklist.get("latency speedup").unwrap();
    assert_eq!(speedup.status, ClaimStatus::Pass);
    assert!((speedup.measured.unwrap() - 11.4857).abs() < 1e-3);

    let efficiency = checklist.get("efficiency vs GPU").unwrap();
    assert_eq!(efficiency.status, ClaimStatus::Info);
    let expected = (284.7 / 28.0) / (112.0 / 125.0);
    assert!((efficiency.measured.unwrap() - expected).abs() < 1e-9);
    assert!(efficiency.detail.contains("2-3x"));

    let accuracy = checklist.get("int8 accuracy delta").unwrap();
    assert_eq!(accuracy.status, ClaimStatus::Pass);
    assert!(checklist.all_passed());
}

#[test]
fn accuracy_claim_uses_the_threshold() {
    let mut reports = table_reports();
    reports[2].top1_accuracy = Some(91.6);
    let at = |reports: &[RunReport], t| {
        verify_claims(reports, t)
            .unwrap()
            .get("int8 accuracy delta")
            .unwrap()
            .status
    };
    assert_eq!(at(&reports, 0.5), ClaimStatus::Pass);
    assert_eq!(at(&reports, 0.3), ClaimStatus::Fail);

    reports[0].top1_accuracy = None;
    assert_eq!(at(&reports, 0.5), ClaimStatus::Skipped);
}

#[test]
fn slow_accelerator_fails_the_speedup_claim() {
    let mut reports = table_reports();
    reports[2].latency_ms_per_image = 5.0;
    let checklist = verify_claims(&reports, 0.5).unwrap();
    assert_eq!(
        checklist.get("latency speedup").unwrap().status,
        ClaimStatus::Fail
    );
    assert!(!checklist.all_passed());
}

#[test]
fn missing_reports_are_errors() {
    let cpu_only = vec![table_reports().remove(0)];
    assert_eq!(
        verify_claims(&cpu_only, 0.5),
        Err(HarnessError::MissingReport {
            label: "AI_FPGA_Agent".into()
        })
    );
    let no_gpu: Vec<RunReport> = table_reports()
        .into_iter()
        .filter(|r| r.label != "GPU")
        .collect();
    let checklist = verify_claims(&no_gpu, 0.5).unwrap();
    assert_eq!(
        checklist.get("efficiency vs GPU").unwrap().status,
        ClaimStatus::Skipped
    );
}

#[test]
fn table_format_uses_the_metric_labels() {
    let text = render_report(&table_reports(), ReportFormat::Table);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("Metric") && lines[0].ends_with("AI_FPGA_Agent"));
    for (line, label) in lines[1..].iter().zip([
        "Latency (ms/image)",
        "Throughput (images/s)",
        "Power Consumption (W)",
        "Energy Efficiency (images/s/W)",
        "Top-1 Accuracy (%)",
    ]) {
        assert!(line.starts_with(label), "{line}");
    }
    assert!(lines[4].ends_with("10.17"));
    assert!(lines[5].ends_with("91.9"));
}

#[test]
fn csv_has_header_and_five_full_precision_rows() {
    let mut reports = table_reports();
    reports[1].top1_accuracy = None;
    let text = render_report(&reports, ReportFormat::Csv);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], "metric,CPU,GPU,AI_FPGA_Agent");
    let efficiency = 284.7f64 / 28.0;
    assert_eq!(
        lines[4],
        format!(
            "\"Energy Efficiency (images/s/W)\",{},{},{}",
            24.8f64 / 85.0,
            112.0f64 / 125.0,
            efficiency
        )
    );
    assert_eq!(lines[5], "\"Top-1 Accuracy (%)\",92,,91.9");
}

#[test]
fn json_reloads_to_the_same_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let mut reports = table_reports();
    reports[0].latency_ms_per_image = 40.2;
    reports[1].top1_accuracy = None;
    emit_report(&reports, ReportFormat::Json, &path).unwrap();
    assert_eq!(load_reports_json(&path).unwrap(), reports);
}

#[test]
fn modes_and_formats_parse() {
    for mode in Mode::ALL {
        assert_eq!(mode.as_str().parse::<Mode>().unwrap(), mode);
    }
    assert!("fpga".parse::<Mode>().is_err());
    assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
    assert!("xml".parse::<ReportFormat>().is_err());
}

#[test]
fn seed_override_reaches_the_agent() {
    let mut cfg = BenchmarkConfig::default();
    cfg.set_seed(42);
    assert_eq!(cfg.rng_seed, 42);
    assert_eq!(cfg.agent.unwrap().rng_seed, 42);
}

#[test]
fn oversized_accelerator_is_infeasible_only_when_used() {
    let graph = quick(Mode::Cpu).build_model().unwrap();
    let mut platforms = crate::platform::PlatformSet::paper_calibrated();
    platforms.accelerator.num_macs = 4000;
    let err = run_with(&quick(Mode::FpgaAgent), &graph, &platforms, None).unwrap_err();
    assert!(
        matches!(err, crate::Error::Harness(HarnessError::ResourcesExceeded { utilization }) if utilization > 1.0)
    );
    assert_eq!(exit_code(&err), EXIT_INFEASIBLE);
    run_with(&quick(Mode::Cpu), &graph, &platforms, None).unwrap();
}
