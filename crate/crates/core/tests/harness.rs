use std::fs;
use std::path::Path;

use lkcwave::harness::{
    self, EstimatorPolicy, ExperimentConfig, GridPolicy, Record, RunControl, RECORDS_FILE, SUMMARY_FILE,
};
use lkcwave::{Error, Manifold};

fn torus_config(dir: &Path, replicates: u64) -> ExperimentConfig {
    ExperimentConfig {
        manifold: Manifold::Torus,
        energies: vec![5, 25],
        levels: vec![-1.0, 0.0, 0.5],
        replicates,
        seed: 2024,
        output_dir: dir.to_path_buf(),
        workers: Some(3),
        grid: GridPolicy::default(),
        estimators: EstimatorPolicy::default(),
    }
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn outputs_are_byte_identical_across_runs_and_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    harness::run_ensemble(&torus_config(a.path(), 4)).unwrap();
    let mut cfg = torus_config(b.path(), 4);
    cfg.workers = Some(1);
    harness::run_ensemble(&cfg).unwrap();
    assert_eq!(read(a.path(), RECORDS_FILE), read(b.path(), RECORDS_FILE));
    assert_eq!(read(a.path(), SUMMARY_FILE), read(b.path(), SUMMARY_FILE));
}

#[test]
fn records_follow_energy_replicate_level_order() {
    let dir = tempfile::tempdir().unwrap();
    let res = harness::run_ensemble(&torus_config(dir.path(), 2)).unwrap();
    let keys: Vec<(u64, u64, f64)> = res.records.iter().map(|r| (r.n, r.replicate, r.level)).collect();
    let mut expected = Vec::new();
    for n in [5, 25] {
        for rep in 0..2 {
            for u in [-1.0, 0.0, 0.5] {
                expected.push((n, rep, u));
            }
        }
    }
    assert_eq!(keys, expected);
    assert_eq!(
        harness::read_records(&dir.path().join(RECORDS_FILE)).unwrap(),
        res.records
    );
    assert!(res.records.iter().all(|r| r.epc_chaos2_derivative.is_some()));
}

#[test]
fn degenerate_energy_leaves_epc_chaos_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = torus_config(dir.path(), 2);
    cfg.energies = vec![1];
    let res = harness::run_ensemble(&cfg).unwrap();
    assert!(res
        .records
        .iter()
        .all(|r| r.epc_chaos2_reduced.is_none() && r.epc_chaos2_derivative.is_none()));
    assert!(res.records.iter().all(|r| r.boundary_chaos2_reduced.is_some()));
    assert!(res.summary.is_some());
}

#[test]
fn interrupted_run_resumes_to_the_same_output() {
    let full = tempfile::tempdir().unwrap();
    harness::run_ensemble(&torus_config(full.path(), 5)).unwrap();

    let part = tempfile::tempdir().unwrap();
    let cfg = torus_config(part.path(), 5);
    let first = harness::run_ensemble_with(&cfg, RunControl { stop_after: Some(3) }).unwrap();
    assert!(first.summary.is_none());
    assert!(!part.path().join(SUMMARY_FILE).exists());

    // Simulate a crash mid-write: half a replicate plus a torn line.
    let path = part.path().join(RECORDS_FILE);
    let mut text = read(part.path(), RECORDS_FILE);
    let extra = read(full.path(), RECORDS_FILE).lines().nth(10).unwrap().to_string();
    text.push_str(&extra);
    text.push('\n');
    text.push_str(&extra[..extra.len() / 2]);
    fs::write(&path, text).unwrap();

    let second = harness::run_ensemble(&cfg).unwrap();
    assert_eq!(second.meta.resumed_replicates, 3);
    assert!(second.meta.complete);
    assert_eq!(read(full.path(), RECORDS_FILE), read(part.path(), RECORDS_FILE));
    assert_eq!(read(full.path(), SUMMARY_FILE), read(part.path(), SUMMARY_FILE));
}

#[test]
fn resuming_with_a_different_configuration_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = torus_config(dir.path(), 2);
    harness::run_ensemble_with(&cfg, RunControl { stop_after: Some(1) }).unwrap();
    let mut other = cfg.clone();
    other.seed += 1;
    assert!(matches!(harness::run_ensemble(&other), Err(Error::InvalidConfig(_))));
    let mut workers = cfg.clone();
    workers.workers = Some(1);
    assert!(harness::run_ensemble(&workers).is_ok());
}

#[test]
fn summary_is_invariant_to_record_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = torus_config(dir.path(), 4);
    let res = harness::run_ensemble(&cfg).unwrap();
    let mut shuffled: Vec<Record> = res.records.clone();
    shuffled.reverse();
    shuffled.swap(1, 7);
    let s = harness::summarize_records(&cfg, &shuffled).unwrap();
    assert_eq!(
        serde_json::to_string(&s).unwrap(),
        serde_json::to_string(res.summary.as_ref().unwrap()).unwrap()
    );
    assert_eq!(harness::summarize(dir.path()).unwrap(), s);
}

#[test]
fn single_replicate_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let res = harness::run_ensemble(&torus_config(dir.path(), 1)).unwrap();
    let s = res.summary.unwrap();
    for l in &s.levels {
        assert_eq!(l.replicates, 1);
        assert_eq!(l.l2.variance, 0.0);
        assert!(l.l2.mean.is_finite());
    }
}

#[test]
fn unrepresentable_energy_is_an_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = torus_config(dir.path(), 1);
    cfg.energies = vec![3];
    assert!(matches!(harness::run_ensemble(&cfg), Err(Error::InvalidConfig(_))));
    assert!(!dir.path().join(RECORDS_FILE).exists());
}

#[test]
fn empty_or_header_only_records_are_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(RECORDS_FILE);
    fs::write(&path, "").unwrap();
    assert!(matches!(harness::summarize(&path), Err(Error::MalformedRecord(_))));
    let full = tempfile::tempdir().unwrap();
    harness::run_ensemble(&torus_config(full.path(), 1)).unwrap();
    let header = read(full.path(), RECORDS_FILE).lines().next().unwrap().to_string();
    fs::write(&path, header + "\n").unwrap();
    assert!(matches!(harness::summarize(&path), Err(Error::MalformedRecord(_))));
    fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(matches!(harness::summarize(&path), Err(Error::MalformedRecord(_))));
}

#[test]
fn plotdata_has_one_row_per_energy_and_level() {
    let dir = tempfile::tempdir().unwrap();
    harness::run_ensemble(&torus_config(dir.path(), 3)).unwrap();
    let paths = harness::emit_plotdata(dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    for p in paths {
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3, "{}", p.display());
    }
}

#[test]
fn sphere_ensemble_runs_and_matches_expected_area() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        manifold: Manifold::Sphere,
        energies: vec![6],
        levels: vec![0.0],
        replicates: 40,
        seed: 11,
        output_dir: dir.path().to_path_buf(),
        workers: None,
        grid: GridPolicy {
            points_per_wavelength: 8.0,
            ..GridPolicy::default()
        },
        estimators: EstimatorPolicy::default(),
    };
    let res = harness::run_ensemble(&cfg).unwrap();
    assert!(res
        .records
        .iter()
        .all(|r| r.epc_chaos2_derivative.is_none() && r.epc_chaos2_reduced.is_some()));
    let s = res.summary.unwrap();
    let lvl = &s.levels[0];
    assert!((lvl.l2.mean - lvl.expected[2]).abs() <= 4.0 * lvl.l2.std_err, "{lvl:?}");
}
