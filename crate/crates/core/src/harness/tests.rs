use super::*;

fn tiny() -> ExperimentConfig {
    parse_config(
        r#"
        [experiment]
        reps = 3
        patterns = 4
        slaves = 3
        [network]
        n_input = 5
        n_hidden = 40
        n_output = 3
        [operate]
        fractions = [0.0, 5.0, 20.0]
        [learn_faults]
        fractions = [0.0, 2.0, 5.0]
        [equil_sweep]
        steps = [0, 50]
        [hist]
        equilibration_steps = 50
        bins = 8
        "#,
        Profile::Desk,
    )
    .unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn overlay_keeps_unlisted_defaults() {
    let cfg = tiny();
    assert_eq!(cfg.experiment.reps, 3);
    assert_eq!(cfg.network.connectivity, 0.9);
    assert_eq!(cfg.training, TrainingConfig::default());
    assert_eq!(cfg.operate.kinds, vec![FaultKind::Node, FaultKind::Synapse]);
}

#[test]
fn profiles() {
    let desk = ExperimentConfig::profile(Profile::Desk);
    let paper = ExperimentConfig::profile(Profile::Paper);
    assert_eq!(desk.network.spec(0).neuron_count(), 500);
    assert_eq!(desk.experiment.reps, 100);
    assert_eq!(paper.network.spec(0).neuron_count(), 2000);
    assert_eq!(paper.experiment.reps, 1000);
    assert!(desk.validate().is_ok() && paper.validate().is_ok());
    assert!("laptop".parse::<Profile>().is_err());
}

#[test]
fn config_errors() {
    for text in [
        "[experiment]\nreps = 0",
        "[experiment]\nbogus = 1",
        "[nonsense]\nx = 1",
        "[operate]\nfractions = [1.0, 1.0]",
        "[learn_faults]\nfractions = [2.0, 1.0]",
        "[operate]\nfractions = [100.0]",
        "[equil_sweep]\nsteps = []",
        "[training]\neta_reinforce = 0.0",
        "[delivery]\norder = \"lifo\"",
        "[network]\nn_hidden = 0",
        "not toml at all [",
    ] {
        assert!(parse_config(text, Profile::Desk).is_err(), "accepted: {text}");
    }
}

#[test]
fn hash_tracks_content() {
    let a = tiny();
    let mut b = tiny();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    b.experiment.seed = 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn seeds_are_stable_and_distinct() {
    assert_eq!(derive_seed(1, "x", 2), derive_seed(1, "x", 2));
    assert_ne!(derive_seed(1, "x", 2), derive_seed(1, "y", 2));
    assert_ne!(rep_seed(0, 0), rep_seed(0, 1));
    assert_eq!(rep_seed(5, 3), 5 ^ rep_seed(0, 3));
    let s = RepSeeds::new(9, 4);
    let all = [s.network, s.patterns, s.training, s.equilibration, s.faults, s.delivery, s.dither];
    let distinct: std::collections::BTreeSet<_> = all.iter().collect();
    assert_eq!(distinct.len(), all.len());
    assert!((0.0..1.0).contains(&s.dither_offset()));
}

#[test]
fn pattern_csv_round_trip() {
    let p = random_patterns(6, 3, 5, 1).unwrap();
    let mut buf = Vec::new();
    write_patterns(&mut buf, &p).unwrap();
    let text = format!("# comment\n{}", String::from_utf8(buf).unwrap());
    assert_eq!(read_patterns(text.as_bytes()).unwrap(), p);
    assert!(read_patterns("id,input,target\n1,01\n".as_bytes()).is_err());
    assert!(read_patterns("id,input,target\n1,0x,1\n".as_bytes()).is_err());
}

#[test]
fn single_repetition_quartiles_collapse() {
    let run = run_training(&tiny(), 0, 0, None).unwrap().record;
    let s = CostSummary::of(&[&run]);
    let c = run.cycles_used as f64;
    assert_eq!((s.q1, s.median, s.q3), (c, c, c));
    assert_eq!(s.reps, 1);
}

#[test]
fn zero_cycle_budget_is_recorded_not_raised() {
    let mut cfg = tiny();
    cfg.training.max_cycles = 0;
    let run = run_training(&cfg, 0, 0, None).unwrap();
    assert!(!run.record.converged);
    assert_eq!(run.record.cycles_used, 0);
}

#[test]
fn converged_training_has_zero_error() {
    let run = run_training(&tiny(), 1, 0, None).unwrap();
    assert!(run.record.converged);
    assert_eq!(run.record.global_error, 0.0);
    assert_eq!(run.record.quality, 1.0);
}

#[test]
fn sweep_points_share_the_repetition_network() {
    let cfg = tiny();
    let a = run_training(&cfg, 2, 0, None).unwrap();
    let b = run_training(&cfg, 2, 0, Some((FaultKind::Node, 5.0))).unwrap();
    assert_eq!(a.initial, b.initial);
    assert_eq!(a.patterns, b.patterns);
    assert!(b.weights.stuck_count() > 0);
}

#[test]
fn learn_faults_orders_and_shares_zero_point() {
    let cfg = tiny();
    let runs = learn_under_faults(&cfg).unwrap();
    assert_eq!(runs.len(), 2 * 3 * 3);
    let zero_node: Vec<_> = runs.iter().filter(|r| r.kind == Some(FaultKind::Node) && r.fraction == 0.0).collect();
    let zero_syn: Vec<_> = runs.iter().filter(|r| r.kind == Some(FaultKind::Synapse) && r.fraction == 0.0).collect();
    for (a, b) in zero_node.iter().zip(&zero_syn) {
        assert_eq!((a.rep, a.cycles_used), (b.rep, b.cycles_used));
    }
    assert_eq!(runs[0].rep, 0);
    assert_eq!(runs[1].rep, 1);
}

#[test]
fn operate_zero_fraction_is_perfect_after_convergence() {
    let cfg = tiny();
    let run = run_training(&cfg, 1, 0, None).unwrap();
    assert!(run.record.converged);
    let rows = operate_sweep(&cfg, &run.topology, &run.weights, &run.patterns).unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r.fraction == 0.0) {
        assert_eq!(r.mean_quality, 1.0);
        assert_eq!(r.stddev, 0.0);
        assert_eq!(r.reps, 3);
    }
}

#[test]
fn commands_write_headers_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    assert!(cmd_train(&cfg, dir.path()).unwrap());
    cmd_operate(&cfg, &dir.path().join("weights.txt"), &dir.path().join("patterns.csv"), dir.path())
        .unwrap();
    cmd_learn_faults(&cfg, dir.path()).unwrap();
    let one_step = ExperimentConfig {
        equil_sweep: EquilibrationSweepSection { steps: vec![20] },
        ..cfg.clone()
    };
    cmd_equil_sweep(&one_step, dir.path()).unwrap();
    assert_eq!(read(&dir.path().join("equil_sweep.csv")).lines().count(), 3);
    cmd_hist(&cfg, dir.path()).unwrap();
    for (file, header) in [
        ("operate.csv", OPERATE_CSV_HEADER),
        ("learn_faults.csv", COST_CSV_HEADER),
        ("equil_sweep.csv", EQUIL_CSV_HEADER),
        ("histograms.csv", crate::metrics::HISTOGRAM_CSV_HEADER),
        ("spread.csv", SPREAD_CSV_HEADER),
        ("train.csv", RUNS_CSV_HEADER),
        ("training_log.csv", crate::learning::TRAINING_LOG_HEADER),
        ("patterns.csv", PATTERN_CSV_HEADER),
    ] {
        let text = read(&dir.path().join(file));
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config sha256="), "{file}");
        assert_eq!(lines.next().unwrap(), header, "{file}");
    }
    let hist = read(&dir.path().join("histograms.csv"));
    assert_eq!(hist.lines().count(), 2 + 2 * 3 * 8);
}

#[test]
fn missing_weights_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_operate(&tiny(), &dir.path().join("none.txt"), &dir.path().join("p.csv"), dir.path());
    assert!(matches!(err, Err(HarnessError::Io { .. })));
}

#[test]
fn outputs_are_reproducible() {
    let cfg = tiny();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        cmd_train(&cfg, d).unwrap();
        cmd_learn_faults(&cfg, d).unwrap();
    }
    for f in ["weights.txt", "training_log.csv", "learn_faults.csv", "learn_faults_runs.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}
