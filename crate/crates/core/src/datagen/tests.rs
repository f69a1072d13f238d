use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cases;
use crate::grid::{enumerate_actions, ActionConfig};

fn case14_oracle() -> AcOracle {
    let grid = cases::builtin("case14").unwrap();
    let dict = enumerate_actions(&grid, &ActionConfig::default());
    AcOracle::new(grid, dict)
}

fn small_config(seed: u64) -> SamplingConfig {
    SamplingConfig {
        seed,
        n_unary_actions: 4,
        n_ref_samples: 6,
        n_per_unary: 2,
        n_double_actions: 3,
        n_per_double: 2,
        ..SamplingConfig::default()
    }
}

fn totals(grid: &GridCase, x: &InjectionSample) -> (f64, f64) {
    let mut gen = 0.0;
    let mut load = 0.0;
    for (p, inj) in x.p.iter().zip(&grid.injections) {
        match inj.kind {
            InjectionKind::Generator => gen += p,
            InjectionKind::Load => load -= p,
        }
    }
    (gen, load)
}

#[test]
fn degenerate_range_keeps_loads_nominal() {
    let grid = cases::builtin("case14").unwrap();
    let x = sample_injection(&grid, (1.0, 1.0), &mut ChaCha8Rng::seed_from_u64(0));
    for (p, inj) in x.p.iter().zip(&grid.injections) {
        if inj.kind == InjectionKind::Load {
            assert_eq!(*p, inj.p);
        }
    }
    assert_eq!(x.q, InjectionSample::nominal(&grid).q);
}

#[test]
fn generation_covers_load_plus_allowance() {
    let grid = cases::builtin("case14").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x = sample_injection(&grid, (0.7, 1.3), &mut rng);
        let (gen, load) = totals(&grid, &x);
        assert!((gen - load - 0.02 * load).abs() <= 1e-9, "gen {gen} load {load}");
        assert!(x.p.iter().zip(&grid.injections).all(|(p, i)| i.kind != InjectionKind::Generator || *p >= 0.0));
    }
}

#[test]
fn load_factors_stay_in_range() {
    let grid = cases::builtin("case14").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let x = sample_injection(&grid, (0.7, 1.3), &mut rng);
        for (p, inj) in x.p.iter().zip(&grid.injections) {
            if inj.kind == InjectionKind::Load {
                let f = p / inj.p;
                assert!((0.7..=1.3).contains(&f), "factor {f}");
            }
        }
    }
}

#[test]
fn sampling_is_seeded() {
    let grid = cases::builtin("case14").unwrap();
    let a = sample_injection(&grid, (0.7, 1.3), &mut ChaCha8Rng::seed_from_u64(1));
    let b = sample_injection(&grid, (0.7, 1.3), &mut ChaCha8Rng::seed_from_u64(1));
    let c = sample_injection(&grid, (0.7, 1.3), &mut ChaCha8Rng::seed_from_u64(2));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn row_count_formulas() {
    let full_scale = SamplingConfig {
        n_unary_actions: 100,
        n_ref_samples: 50_000,
        n_per_unary: 1000,
        n_double_actions: 1500,
        n_per_double: 100,
        ..SamplingConfig::default()
    };
    assert_eq!(full_scale.source_rows(), 150_000);
    assert_eq!(full_scale.target_rows(), 150_000);
    let desk =
        SamplingConfig { n_unary_actions: 20, n_ref_samples: 10_000, n_per_unary: 200, ..SamplingConfig::default() };
    assert_eq!(desk.source_rows(), 14_000);
}

#[test]
fn invalid_load_range_rejected() {
    for range in [(0.0, 1.0), (1.2, 1.1), (-1.0, 1.0)] {
        let cfg = SamplingConfig { load_range: range, ..SamplingConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }
}

#[test]
fn reference_only_source() {
    let oracle = case14_oracle();
    let cfg = SamplingConfig { n_unary_actions: 0, n_ref_samples: 5, ..small_config(0) };
    let ds = build_source_dataset(&oracle, &cfg, Split::SourceTrain).unwrap();
    assert_eq!(ds.len(), 5);
    assert!(ds.rows.iter().all(|r| r.tag == DomainTag::Reference && r.tau.weight() == 0));
}

#[test]
fn source_layout_and_weights() {
    let oracle = case14_oracle();
    let cfg = small_config(7);
    let ds = build_source_dataset(&oracle, &cfg, Split::SourceTrain).unwrap();
    assert_eq!(ds.len(), cfg.source_rows());
    assert_eq!(ds.header.unary_actions.len(), 4);
    assert_eq!(ds.header.dict_hash, oracle.dict.hash());
    for (k, row) in ds.rows.iter().enumerate() {
        if k < cfg.n_ref_samples {
            assert_eq!((row.tag, row.tau.weight()), (DomainTag::Reference, 0));
        } else {
            let action = ds.header.unary_actions[(k - cfg.n_ref_samples) / cfg.n_per_unary];
            assert_eq!(row.tag, DomainTag::Unary);
            assert_eq!(row.tau, TopologyVector::unary(oracle.dict.len(), action));
        }
    }
}

#[test]
fn train_and_test_share_actions_not_samples() {
    let oracle = case14_oracle();
    let cfg = small_config(8);
    let train = build_source_dataset(&oracle, &cfg, Split::SourceTrain).unwrap();
    let test = build_source_dataset(&oracle, &cfg, Split::SourceTest).unwrap();
    assert_eq!(train.header.unary_actions, test.header.unary_actions);
    assert_ne!(train.rows[0].x, test.rows[0].x);
}

#[test]
fn target_rows_are_unseen_pairs() {
    let oracle = case14_oracle();
    let cfg = small_config(9);
    let source = build_source_dataset(&oracle, &cfg, Split::SourceTrain).unwrap();
    let target = build_target_dataset(&oracle, &cfg, &source.header.unary_actions).unwrap();
    assert_eq!(target.len(), cfg.target_rows());
    let seen: Vec<&TopologyVector> = source.rows.iter().map(|r| &r.tau).collect();
    for row in &target.rows {
        assert_eq!(row.tau.weight(), 2);
        assert_eq!(row.tag, DomainTag::Double);
        assert!(!seen.contains(&&row.tau));
        assert!(row.tau.active().all(|i| source.header.unary_actions.contains(&i)));
    }
    let mut pairs = target.header.double_actions.clone();
    pairs.dedup();
    assert_eq!(pairs.len(), 3);
}

#[test]
fn exhaustive_pairs_when_all_requested() {
    // Line disconnections only, on a ring where any two can go.
    let mut grid = crate::grid::test_grids::triangle();
    grid.branches.push(crate::grid::test_grids::line(1, 2, 0.2));
    grid.branches.push(crate::grid::test_grids::line(2, 3, 0.2));
    let dict = enumerate_actions(&grid, &ActionConfig { bus_splits: false, ..ActionConfig::default() });
    let oracle = AcOracle::new(grid, dict);
    let n = oracle.dict.len();
    let all: Vec<usize> = (0..n).collect();
    let mut compatible = 0;
    for i in 0..n {
        for j in i + 1..n {
            let tau = TopologyVector::from_indices(n, &[i, j]);
            let nominal = InjectionSample::nominal(&oracle.grid);
            compatible += oracle.flows(&tau, &nominal).is_ok() as usize;
        }
    }
    let cfg =
        SamplingConfig { n_double_actions: compatible, n_per_double: 1, load_range: (0.9, 1.1), ..small_config(1) };
    let target = build_target_dataset(&oracle, &cfg, &all).unwrap();
    let mut pairs = target.header.double_actions.clone();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), compatible);

    let too_many = SamplingConfig { n_double_actions: compatible + 1, ..cfg };
    match build_target_dataset(&oracle, &too_many, &all) {
        Err(Error::DataGen(m)) => assert!(m.contains(&format!("only {compatible}")), "{m}"),
        other => panic!("expected DataGen error, got {other:?}"),
    }
}

#[test]
fn too_many_unary_actions_requested() {
    let oracle = case14_oracle();
    let cfg = SamplingConfig { n_unary_actions: oracle.dict.len() + 1, ..small_config(0) };
    assert!(matches!(build_source_dataset(&oracle, &cfg, Split::SourceTrain), Err(Error::DataGen(_))));
}

/// Wraps the AC oracle and fails a fixed share of calls away from the
/// nominal operating point.
struct Flaky {
    inner: AcOracle,
    calls: AtomicUsize,
    fail_every: usize,
}

impl FlowOracle for Flaky {
    fn grid(&self) -> &GridCase {
        &self.inner.grid
    }

    fn dict(&self) -> &ActionDictionary {
        &self.inner.dict
    }

    fn flows(&self, tau: &TopologyVector, x: &InjectionSample) -> Result<FlowVector> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let nominal = x.p == InjectionSample::nominal(&self.inner.grid).p;
        if !nominal && tau.weight() > 0 && n.is_multiple_of(self.fail_every) {
            return Err(Error::Convergence { iterations: 20, last_mismatch: 1.0 });
        }
        self.inner.flows(tau, x)
    }
}

#[test]
fn heavy_oracle_failure_is_an_error() {
    let oracle = Flaky { inner: case14_oracle(), calls: AtomicUsize::new(0), fail_every: 1 };
    let cfg = SamplingConfig { n_unary_actions: 0, ..small_config(0) };
    let target = build_target_dataset(&oracle, &SamplingConfig { n_double_actions: 1, ..cfg }, &[0, 1, 2]);
    match target {
        Err(Error::DataGen(m)) => assert!(m.contains("failed"), "{m}"),
        other => panic!("expected DataGen error, got {other:?}"),
    }
}

#[test]
fn rare_failures_are_resampled() {
    let oracle = Flaky { inner: case14_oracle(), calls: AtomicUsize::new(0), fail_every: 40 };
    let cfg = SamplingConfig { n_double_actions: 2, n_per_double: 20, ..small_config(0) };
    let source = build_source_dataset(&case14_oracle(), &cfg, Split::SourceTrain).unwrap();
    let target = build_target_dataset(&oracle, &cfg, &source.header.unary_actions).unwrap();
    assert_eq!(target.len(), 40);
}

#[test]
fn file_round_trip_and_replay() {
    let oracle = case14_oracle();
    let ds = build_source_dataset(&oracle, &small_config(11), Split::SourceTrain).unwrap();
    let mut buf = Vec::new();
    ds.write_to(&mut buf).unwrap();
    let back = Dataset::read_from(buf.as_slice()).unwrap();
    assert_eq!(back, ds);
    let all: Vec<usize> = (0..back.len()).collect();
    assert_eq!(back.replay(&oracle, &all).unwrap(), 0.0);
}

#[test]
fn same_seed_same_bytes() {
    let oracle = case14_oracle();
    let bytes = |seed| {
        let ds = build_source_dataset(&oracle, &small_config(seed), Split::SourceTrain).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        buf
    };
    assert_eq!(bytes(5), bytes(5));
    assert_ne!(bytes(5), bytes(6));
}

#[test]
fn malformed_files_rejected() {
    assert!(matches!(Dataset::read_from(&b""[..]), Err(Error::Parse(_))));
    assert!(matches!(Dataset::read_from(&b"{not json}\n"[..]), Err(Error::Parse(_))));

    let oracle = case14_oracle();
    let ds = build_source_dataset(
        &oracle,
        &SamplingConfig { n_unary_actions: 0, n_ref_samples: 2, ..small_config(0) },
        Split::SourceTrain,
    )
    .unwrap();
    let mut buf = Vec::new();
    ds.write_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut row: DatasetRow = serde_json::from_str(&lines[1]).unwrap();
    row.y.pop();
    lines[1] = serde_json::to_string(&row).unwrap();
    assert!(matches!(Dataset::read_from(lines.join("\n").as_bytes()), Err(Error::Shape(_))));

    let bumped = text.replacen("\"schema_version\":1", "\"schema_version\":99", 1);
    assert!(matches!(Dataset::read_from(bumped.as_bytes()), Err(Error::Parse(_))));
}
