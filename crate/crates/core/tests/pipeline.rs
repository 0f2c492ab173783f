use kangrid::adaptation::{adapt_network, AdaptationStrategy};
use kangrid::benchmarks::{read_dataset_csv, synthetic_suite, task_by_name, write_dataset_csv};
use kangrid::experiment::{experiment_tasks, plan_cells, run_cell, ExperimentKind, Protocol};
use kangrid::stats::{aggregate, CURVATURE, INPUT};
use kangrid::training::{train, GridEvent, LossKind, Objective, TrainConfig};
use kangrid::Network;

fn small_config(strategy: AdaptationStrategy) -> TrainConfig {
    TrainConfig {
        iterations: 60,
        learning_rate: 1e-2,
        grid_schedule: vec![GridEvent { iteration: 20, grid: 5 }, GridEvent { iteration: 40, grid: 8 }],
        strategy,
        seed: 11,
        loss_kind: LossKind::Mse,
        boundary_weight: 1.0,
        initial_grid: 3,
        spline_order: 3,
    }
}

#[test]
fn training_with_events_is_deterministic_and_grows_the_grid() {
    let task = task_by_name("f4").unwrap();
    let data = task.train_set(3).unwrap();
    let objective = Objective::Mse {
        inputs: &data.inputs,
        targets: &data.targets,
    };
    for strategy in [AdaptationStrategy::InputBased, AdaptationStrategy::curvature()] {
        let cfg = small_config(strategy);
        let mut a = cfg.build_network(&[2, 5, 1]).unwrap();
        let mut b = a.clone();
        let out_a = train(&mut a, &objective, &cfg).unwrap();
        let out_b = train(&mut b, &objective, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(out_a.final_loss.to_bits(), out_b.final_loss.to_bits());
        assert_eq!(a.grid_size(), 8);
        assert_eq!(out_a.events.len(), 2);
        assert!(out_a.final_loss < out_a.trace[0].loss);
        let grids: Vec<usize> = out_a.trace.iter().map(|r| r.grid_g).collect();
        assert_eq!((grids[19], grids[20], grids[40]), (3, 5, 8));
    }
}

#[test]
fn checkpoint_survives_a_file_roundtrip_after_adaptation() {
    let task = task_by_name("f1").unwrap();
    let data = task.train_set(0).unwrap();
    let mut net = Network::new(&[1, 4, 1], 3, 3, 2).unwrap();
    adapt_network(&mut net, &data.inputs, &AdaptationStrategy::curvature(), 7).unwrap();
    let dir = std::env::temp_dir().join(format!("kangrid-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("net.json");
    std::fs::write(&path, net.to_checkpoint()).unwrap();
    let back = Network::from_checkpoint(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.predict(&data.inputs), net.predict(&data.inputs));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn datasets_roundtrip_through_csv() {
    for task in synthetic_suite().into_iter().filter(|t| t.dimension() <= 2) {
        let data = task.train_set(1).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data, "{}", task.name);
    }
}

#[test]
fn both_strategies_share_data_and_initialization() {
    let tasks = experiment_tasks(ExperimentKind::Synthetic, None).unwrap();
    let protocol = Protocol::for_experiment(ExperimentKind::Synthetic).scaled(0.02).unwrap();
    let strategies = [AdaptationStrategy::InputBased, AdaptationStrategy::curvature()];
    let cells = plan_cells(&tasks[..2], &strategies, &[0], &protocol);
    let outcomes: Vec<_> = cells.iter().map(|c| run_cell(c).unwrap()).collect();
    // identical first loss means identical data and initial network
    for pair in [(0, 1), (2, 3)] {
        let (a, b) = (&outcomes[pair.0], &outcomes[pair.1]);
        assert_eq!(a.result.task, b.result.task);
        assert_eq!(a.training.trace[0].loss.to_bits(), b.training.trace[0].loss.to_bits());
    }
    let results: Vec<_> = outcomes.iter().map(|o| o.result.clone()).collect();
    let names: Vec<String> = tasks[..2].iter().map(|t| t.name()).collect();
    let report = aggregate("synthetic", &names, &[INPUT.into(), CURVATURE.into()], &[0], &results).unwrap();
    assert_eq!(report.tasks.len(), 2);
    assert!(report.tasks.iter().all(|t| t.improvement_pct.is_some()));
}
