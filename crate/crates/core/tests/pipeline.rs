use std::fs;
use std::path::Path;

use vvc_core::agent::{Checkpoint, DqnAgent, DqnConfig};
use vvc_core::bench::{self, DataPaths, ExperimentSpec};
use vvc_core::env::{read_offline_dataset, ActionVector};
use vvc_core::Error;

fn small_spec(out: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new("case13_balanced", out);
    spec.seeds = vec![0];
    spec.steps = 120;
    spec.horizon = 200;
    spec
}

#[test]
fn train_without_data_names_the_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let err = bench::train(&small_spec(dir.path())).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact { what: "offline dataset", .. }), "{err}");
    assert_eq!(err.kind(), "missing_artifact");
}

#[test]
fn offline_log_matches_environment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let paths = bench::generate_data(&spec).unwrap();
    let (meta, rows) = read_offline_dataset(&paths.offline).unwrap();
    let env = bench::load_env(&spec).unwrap();
    assert_eq!(&meta.layout, env.layout());
    assert_eq!(meta.action_sizes, env.action_sizes());
    assert_eq!(rows.len(), spec.horizon);
    // rows chain: each next observation is the following row's observation
    for w in rows.windows(2) {
        assert_eq!(w[0].next_obs, w[1].obs);
        assert_eq!(w[0].t + 1, w[1].t);
    }
    for (row, base) in rows.iter().zip(&env.baseline().rewards) {
        assert!((row.reward - base.total).abs() < 1e-6);
    }
}

#[test]
fn mismatched_state_option_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path());
    bench::generate_data(&spec).unwrap();
    spec.state_option = 1;
    assert!(matches!(bench::train(&spec), Err(Error::LayoutMismatch(_))));
}

#[test]
fn default_algorithm_compares_equal_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path());
    spec.algorithm = "default".into();
    spec.seeds = vec![0, 1];
    bench::generate_data(&spec).unwrap();
    let runs = bench::train(&spec).unwrap();
    for run in &runs {
        assert_eq!(run.metrics.len(), spec.steps);
        assert!(run.metrics.iter().all(|m| m.reward_default_delta == 0.0));
    }
    let (report_dir, summaries) = bench::report(dir.path()).unwrap();
    assert!(summaries.iter().all(|s| s.status == "complete" && s.mean_delta_final == 0.0));
    for f in ["reward_delta.csv", "reward_delta.dat", "max_violation.csv", "max_violation.dat", "summary.csv"] {
        assert!(report_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn report_flags_missing_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path());
    spec.algorithm = "default".into();
    bench::generate_data(&spec).unwrap();
    bench::train(&spec).unwrap();
    spec.seeds = vec![0, 7];
    bench::write_spec(&spec).unwrap();
    let (_, summaries) = bench::report(dir.path()).unwrap();
    assert_eq!(summaries[0].status, "complete");
    assert_eq!(summaries[1].status, "missing");
}

#[test]
fn checkpoint_round_trip_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    bench::generate_data(&spec).unwrap();
    let trained = bench::train(&spec).unwrap();
    let ck_path = spec.seed_dir(0).join("checkpoint.json");
    let ck = Checkpoint::load(&ck_path).unwrap();
    assert_eq!(ck.seed, 0);
    let again = tempfile::NamedTempFile::new().unwrap();
    ck.save(again.path()).unwrap();
    assert!(fs::read(&ck_path).unwrap() == fs::read(again.path()).unwrap());

    let eval = bench::evaluate(&spec).unwrap();
    assert_eq!(eval[0].metrics.len(), spec.steps);
    assert!(eval[0].metrics.iter().all(|m| m.epsilon == 0.0));
    assert_eq!(trained[0].metrics.len(), spec.steps);
    assert!(spec.seed_dir(0).join("eval.csv").exists());
}

#[test]
fn holding_positions_costs_no_switching() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    bench::generate_data(&spec).unwrap();
    let mut env = bench::load_env(&spec).unwrap();
    env.reset();
    let hold = ActionVector::from_positions(env.positions().unwrap());
    for _ in 0..20 {
        let out = env.step(&hold).unwrap();
        assert_eq!(out.info.reward.switch_term, 0.0);
    }
}

#[test]
fn agent_network_matches_layout() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    bench::generate_data(&spec).unwrap();
    let env = bench::load_env(&spec).unwrap();
    let agent = DqnAgent::new(env.layout().dim(), &env.action_sizes(), DqnConfig::default(), 0);
    let ck = agent.checkpoint();
    assert_eq!(ck.net.input_dim(), env.layout().dim());
    assert_eq!(ck.net.heads(), env.action_sizes().as_slice());
    assert_eq!(DataPaths::of(&spec).spec, dir.path().join("spec.json"));
}
