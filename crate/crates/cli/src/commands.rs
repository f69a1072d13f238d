use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use leapgrid_core::datagen::{build_source_dataset, build_target_dataset, Dataset, Split};
use leapgrid_core::leapnet::{train as fit, Checkpoint, TrainState, TrainingSet, CHECKPOINT_VERSION};
use leapgrid_core::{
    enumerate_actions, AcOracle, InjectionSample, Model, ModelKind, Standardizer, Tensor2, TrainConfig,
};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::metrics::{evaluate, predict_all, quantile, summarize, ErrorSummary, MetricsRow, SplitName};
use crate::{Failure, ResultExt};

/// Where every artifact of an experiment lives under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self, split: SplitName) -> PathBuf {
        let name = match split {
            SplitName::Train => "source_train.jsonl",
            SplitName::RegularTest => "source_test.jsonl",
            SplitName::SuperTest => "target_test.jsonl",
        };
        self.root.join("data").join(name)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("data").join("manifest.json")
    }

    pub fn checkpoint(&self, model: ModelKind, seed: u64) -> PathBuf {
        self.root.join("models").join(format!("{model}-seed{seed}.json"))
    }

    pub fn metrics(&self, model: ModelKind, seed: u64) -> PathBuf {
        self.root.join("metrics").join(format!("{model}-seed{seed}.csv"))
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("eval").join("summary.json")
    }

    pub fn bench(&self) -> PathBuf {
        self.root.join("bench.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

fn seeds_for(cfg: &ExperimentConfig, only: Option<u64>) -> Vec<u64> {
    match only {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    }
}

fn oracle_for(cfg: &ExperimentConfig) -> anyhow::Result<AcOracle> {
    let grid = cfg.load_grid().fail_as(Failure::Input)?;
    let dict = enumerate_actions(&grid, &cfg.actions);
    Ok(AcOracle::new(grid, dict))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub grid: String,
    pub dict_hash: String,
    pub dict_size: usize,
    pub seed: u64,
    pub unary_actions: Vec<usize>,
    pub files: Vec<ManifestEntry>,
}

/// Builds the source train, source test and target test files plus a
/// manifest of their hashes.
pub fn gen_data(cfg: &ExperimentConfig, layout: &Layout, seed: Option<u64>) -> anyhow::Result<Manifest> {
    let oracle = oracle_for(cfg)?;
    let mut sampling = cfg.sampling.clone();
    if let Some(s) = seed {
        sampling.seed = s;
    }
    info!("{}: {} unary actions in dictionary", oracle.grid.name, oracle.dict.len());
    let train = build_source_dataset(&oracle, &sampling, Split::SourceTrain)?;
    let test = build_source_dataset(&oracle, &sampling, Split::SourceTest)?;
    let target = build_target_dataset(&oracle, &sampling, &train.header.unary_actions)?;

    let mut files = Vec::new();
    for (split, ds) in [(SplitName::Train, &train), (SplitName::RegularTest, &test), (SplitName::SuperTest, &target)] {
        let path = layout.dataset(split);
        create_parent(&path)?;
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes)?;
        fs::write(&path, &bytes).with_context(|| format!("cannot write {}", path.display()))?;
        files.push(ManifestEntry {
            file: path.file_name().unwrap().to_string_lossy().into_owned(),
            rows: ds.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        info!("wrote {} ({} rows)", path.display(), ds.len());
    }
    let manifest = Manifest {
        grid: oracle.grid.name.clone(),
        dict_hash: oracle.dict.hash(),
        dict_size: oracle.dict.len(),
        seed: sampling.seed,
        unary_actions: train.header.unary_actions.clone(),
        files,
    };
    fs::write(layout.manifest(), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// The three dataset files as matrices.
pub struct Splits {
    pub datasets: Vec<(SplitName, Dataset)>,
    pub tensors: Vec<(SplitName, Tensor2, Tensor2, Tensor2)>,
}

impl Splits {
    pub fn load(layout: &Layout) -> anyhow::Result<Self> {
        let mut datasets = Vec::new();
        for split in SplitName::ALL {
            let path = layout.dataset(split);
            if !path.exists() {
                return Err(anyhow!("{} is missing; run gen-data first", path.display())).fail_as(Failure::Input);
            }
            let ds = Dataset::load(&path)
                .with_context(|| format!("reading {}", path.display()))
                .fail_as(Failure::Artifact)?;
            datasets.push((split, ds));
        }
        let first = &datasets[0].1.header;
        for (split, ds) in &datasets[1..] {
            if ds.header.dims != first.dims || ds.header.dict_hash != first.dict_hash {
                return Err(anyhow!("{} does not match the training file's dimensions or dictionary", split.as_str()))
                    .fail_as(Failure::Compat);
            }
        }
        let tensors = datasets
            .iter()
            .map(|(s, ds)| {
                let (x, tau, y) = ds.tensors();
                (*s, x, tau, y)
            })
            .collect();
        Ok(Self { datasets, tensors })
    }

    pub fn get(&self, split: SplitName) -> (&Tensor2, &Tensor2, &Tensor2) {
        let (_, x, tau, y) = self.tensors.iter().find(|t| t.0 == split).expect("all splits loaded");
        (x, tau, y)
    }

    fn standardizer(&self) -> Standardizer {
        let (x, _, y) = self.get(SplitName::Train);
        Standardizer::fit(x, y)
    }
}

/// Metrics of one training run, in epoch order.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub model: ModelKind,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> anyhow::Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> anyhow::Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let expected = ["model", "seed", "epoch", "split", "mse_std", "mse_mw2", "mape"];
    let headers = reader.headers()?.clone();
    if headers.iter().ne(expected) {
        bail!("{}: unexpected header {:?}", path.display(), headers);
    }
    let mut rows = Vec::new();
    for (k, r) in reader.deserialize().enumerate() {
        let row: MetricsRow = r.with_context(|| format!("{} record {}", path.display(), k + 1))?;
        if ![row.mse_std, row.mse_mw2, row.mape].iter().all(|v| v.is_finite()) {
            bail!("{} record {}: non-finite metric", path.display(), k + 1);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Trains every configured model for every seed (or just `seed`), writing
/// a checkpoint and a metrics CSV per run. With `resume`, runs continue from
/// their checkpoint.
pub fn train(
    cfg: &ExperimentConfig,
    layout: &Layout,
    seed: Option<u64>,
    resume: bool,
) -> anyhow::Result<Vec<RunResult>> {
    let splits = Splits::load(layout)?;
    let standardizer = splits.standardizer();
    let (x, tau, y) = splits.get(SplitName::Train);
    let data = TrainingSet::new(standardizer.scale_x(x)?, tau.clone(), standardizer.scale_y(y)?)?;
    let runs: Vec<(ModelKind, u64)> =
        cfg.models.iter().flat_map(|&m| seeds_for(cfg, seed).into_iter().map(move |s| (m, s))).collect();
    runs.par_iter()
        .map(|&(model, s)| {
            run_one(cfg, layout, &splits, &standardizer, &data, model, s, resume)
                .with_context(|| format!("{model} seed {s}"))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    cfg: &ExperimentConfig,
    layout: &Layout,
    splits: &Splits,
    standardizer: &Standardizer,
    data: &TrainingSet,
    kind: ModelKind,
    seed: u64,
    resume: bool,
) -> anyhow::Result<RunResult> {
    let (n_x, n_tau, n_y) = (data.x.cols(), data.tau.cols(), data.y.cols());
    let leap_cfg = cfg.leap_config(n_x, n_tau, n_y);
    let tc = TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        seed,
    };
    let ckpt_path = layout.checkpoint(kind, seed);
    let metrics_path = layout.metrics(kind, seed);

    let (mut model, mut state, mut rows) = if resume && ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path).fail_as(Failure::Artifact)?;
        if ckpt.model.kind() != kind || ckpt.model.net.dims() != (n_x, n_tau, n_y) || ckpt.config != leap_cfg {
            return Err(anyhow!("checkpoint {} does not match this configuration", ckpt_path.display()))
                .fail_as(Failure::Compat);
        }
        let mut rows =
            if metrics_path.exists() { read_metrics(&metrics_path).fail_as(Failure::Artifact)? } else { Vec::new() };
        rows.retain(|r| r.epoch <= ckpt.state.epoch);
        info!("{kind} seed {seed}: resuming after epoch {}", ckpt.state.epoch);
        (ckpt.model, ckpt.state, rows)
    } else {
        (Model::new(kind, &leap_cfg, standardizer.clone(), seed), TrainState::new(&tc), Vec::new())
    };

    let every = cfg.train.eval_every;
    while state.epoch < tc.epochs {
        let stop = ((state.epoch / every + 1) * every).min(tc.epochs);
        fit(&mut model, &mut state, data, &TrainConfig { epochs: stop, ..tc.clone() }, |_, _, _| Ok(()))
            .fail_as(Failure::Numerics)?;
        for split in SplitName::ALL {
            let (x, tau, y) = splits.get(split);
            let s = evaluate(&model, x, tau, y).fail_as(Failure::Numerics)?;
            rows.push(MetricsRow {
                model: kind.to_string(),
                seed,
                epoch: state.epoch,
                split,
                mse_std: s.mse_std,
                mse_mw2: s.mse_mw2,
                mape: s.mape,
            });
        }
        write_metrics(&metrics_path, &rows)?;
        create_parent(&ckpt_path)?;
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            seed,
            config: leap_cfg.clone(),
            train: tc.clone(),
            state: state.clone(),
            model: model.clone(),
        }
        .save(&ckpt_path)?;
        info!("{kind} seed {seed}: epoch {}/{}", state.epoch, tc.epochs);
    }
    Ok(RunResult { model: kind, seed, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub seed: u64,
    pub epoch: usize,
    pub rows: usize,
    pub errors: ErrorSummary,
}

fn check_compat(ckpt: &Checkpoint, ds: &Dataset) -> anyhow::Result<()> {
    let d = ds.header.dims;
    if ds.is_empty() {
        return Err(anyhow!("dataset has no rows")).fail_as(Failure::Compat);
    }
    if ckpt.model.net.dims() != (d.x, d.tau, d.y) {
        return Err(anyhow!(
            "checkpoint expects dims {:?}, dataset has ({}, {}, {})",
            ckpt.model.net.dims(),
            d.x,
            d.tau,
            d.y
        ))
        .fail_as(Failure::Compat);
    }
    Ok(())
}

/// Evaluates one checkpoint on one dataset file.
pub fn eval_one(checkpoint: &Path, dataset: &Path) -> anyhow::Result<EvalReport> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("reading {}", checkpoint.display()))
        .fail_as(Failure::Artifact)?;
    let ds =
        Dataset::load(dataset).with_context(|| format!("reading {}", dataset.display())).fail_as(Failure::Artifact)?;
    check_compat(&ckpt, &ds)?;
    let (x, tau, y) = ds.tensors();
    let errors = evaluate(&ckpt.model, &x, &tau, &y).fail_as(Failure::Numerics)?;
    Ok(EvalReport { model: ckpt.model.kind(), seed: ckpt.seed, epoch: ckpt.state.epoch, rows: ds.len(), errors })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub split: SplitName,
    pub rows: usize,
    pub models: Vec<EvalReport>,
    /// DC approximation against the stored AC flows on the same rows.
    pub dc: ErrorSummary,
}

/// DC flows for every row of a dataset, in MW.
pub fn dc_predictions(oracle: &AcOracle, ds: &Dataset) -> anyhow::Result<Tensor2> {
    let rows: Vec<Vec<f64>> = ds
        .rows
        .par_iter()
        .map(|r| {
            let x = InjectionSample::from_active(&oracle.grid, r.x.clone())?;
            Ok(oracle.dc_flows(&r.tau, &x)?.0)
        })
        .collect::<leapgrid_core::Result<_>>()?;
    Ok(Tensor2::from_rows(&rows)?)
}

/// Evaluates all checkpoints on all splits, next to the DC approximation.
pub fn eval(cfg: &ExperimentConfig, layout: &Layout, seed: Option<u64>) -> anyhow::Result<Vec<SplitEval>> {
    let splits = Splits::load(layout)?;
    let oracle = oracle_for(cfg)?;
    let header = &splits.datasets[0].1.header;
    if header.dict_hash != oracle.dict.hash() {
        return Err(anyhow!("datasets were built with a different action dictionary")).fail_as(Failure::Compat);
    }
    let y_std = splits.standardizer().y_std;

    let mut ckpts = Vec::new();
    for &kind in &cfg.models {
        for s in seeds_for(cfg, seed) {
            let path = layout.checkpoint(kind, s);
            if !path.exists() {
                return Err(anyhow!("{} is missing; run train first", path.display())).fail_as(Failure::Input);
            }
            ckpts.push(
                Checkpoint::load(&path)
                    .with_context(|| format!("reading {}", path.display()))
                    .fail_as(Failure::Artifact)?,
            );
        }
    }

    let mut out = Vec::new();
    for (split, ds) in &splits.datasets {
        let (x, tau, y) = splits.get(*split);
        let mut models = Vec::new();
        for ckpt in &ckpts {
            check_compat(ckpt, ds)?;
            let errors = evaluate(&ckpt.model, x, tau, y).fail_as(Failure::Numerics)?;
            models.push(EvalReport {
                model: ckpt.model.kind(),
                seed: ckpt.seed,
                epoch: ckpt.state.epoch,
                rows: ds.len(),
                errors,
            });
        }
        let dc = summarize(&dc_predictions(&oracle, ds)?, y, &y_std);
        out.push(SplitEval { split: *split, rows: ds.len(), models, dc });
    }
    let path = layout.summary();
    create_parent(&path)?;
    fs::write(&path, serde_json::to_string_pretty(&out)? + "\n")?;
    Ok(out)
}

/// Timed passes per side; the fastest is reported, which filters out
/// scheduler noise on shared machines.
const BENCH_REPEATS: usize = 3;

fn best_of(repeats: usize, mut f: impl FnMut() -> leapgrid_core::Result<()>) -> leapgrid_core::Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_samples: usize,
    pub model: ModelKind,
    pub ac_us_per_sample: f64,
    pub nn_us_per_sample: f64,
    pub speedup: f64,
    pub cpu: String,
    pub threads: usize,
    /// Speed-up reported for the 118-bus grid on a GPU; context only.
    pub published_speedup: f64,
}

fn cpu_name() -> String {
    fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}

/// Times the AC oracle row by row and the network on one batch, over the
/// first `n_samples` rows of the regular test set (cycled if shorter).
pub fn bench(cfg: &ExperimentConfig, layout: &Layout, seed: Option<u64>) -> anyhow::Result<BenchReport> {
    let n = cfg.bench_samples;
    if n < 100 {
        return Err(anyhow!("bench_samples must be at least 100, got {n}")).fail_as(Failure::Input);
    }
    let kind = *cfg.models.first().ok_or_else(|| anyhow!("no model configured")).fail_as(Failure::Input)?;
    let s = *seeds_for(cfg, seed).first().ok_or_else(|| anyhow!("no seed configured")).fail_as(Failure::Input)?;
    let path = layout.checkpoint(kind, s);
    if !path.exists() {
        return Err(anyhow!("{} is missing; run train first", path.display())).fail_as(Failure::Input);
    }
    let ckpt = Checkpoint::load(&path).fail_as(Failure::Artifact)?;
    let test_path = layout.dataset(SplitName::RegularTest);
    let ds = Dataset::load(&test_path)
        .with_context(|| format!("reading {}", test_path.display()))
        .fail_as(Failure::Artifact)?;
    check_compat(&ckpt, &ds)?;
    let oracle = oracle_for(cfg)?;

    let rows: Vec<_> = ds.rows.iter().cycle().take(n).collect();
    let samples: Vec<InjectionSample> =
        rows.iter().map(|r| InjectionSample::from_active(&oracle.grid, r.x.clone())).collect::<Result<_, _>>()?;
    let ac = best_of(BENCH_REPEATS, || {
        for (r, x) in rows.iter().zip(&samples) {
            oracle.flows(&r.tau, x)?;
        }
        Ok(())
    })?;

    let x = Tensor2::from_rows(&rows.iter().map(|r| r.x.clone()).collect::<Vec<_>>())?;
    let tau = Tensor2::from_rows(&rows.iter().map(|r| r.tau.as_f64()).collect::<Vec<_>>())?;
    predict_all(&ckpt.model, &x, &tau)?;
    let nn = best_of(BENCH_REPEATS, || predict_all(&ckpt.model, &x, &tau).map(drop))?;

    let report = BenchReport {
        n_samples: n,
        model: kind,
        ac_us_per_sample: 1e6 * ac / n as f64,
        nn_us_per_sample: 1e6 * nn / n as f64,
        speedup: ac / nn,
        cpu: cpu_name(),
        threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        published_speedup: 300.0,
    };
    fs::write(layout.bench(), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// One aggregated line of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub model: String,
    pub split: SplitName,
    pub epoch: usize,
    pub seeds: usize,
    pub metric: String,
    pub median: f64,
    pub q20: f64,
    pub q80: f64,
}

pub const REPORT_HEADER_COMMENT: &str =
    "# quantiles across seeds by linear interpolation between order statistics: h = (n - 1) p";

/// Median and [20%, 80%] band across seeds for every (model, split, epoch)
/// and metric.
type Getter = fn(&MetricsRow) -> f64;

pub fn aggregate(rows: &[MetricsRow]) -> Vec<BandRow> {
    let mut groups: BTreeMap<(String, SplitName, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.model.clone(), r.split, r.epoch)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((model, split, epoch), members) in groups {
        let metrics: [(&str, Getter); 3] =
            [("mse_std", |r| r.mse_std), ("mse_mw2", |r| r.mse_mw2), ("mape", |r| r.mape)];
        for (name, get) in metrics {
            let mut v: Vec<f64> = members.iter().map(|r| get(r)).collect();
            v.sort_by(f64::total_cmp);
            out.push(BandRow {
                model: model.clone(),
                split,
                epoch,
                seeds: v.len(),
                metric: name.to_string(),
                median: quantile(&v, 0.5),
                q20: quantile(&v, 0.2),
                q80: quantile(&v, 0.8),
            });
        }
    }
    out
}

/// Aggregates metrics CSVs into a plot-ready CSV.
pub fn report_files(inputs: &[PathBuf], output: &Path) -> anyhow::Result<Vec<BandRow>> {
    let mut rows = Vec::new();
    for path in inputs {
        rows.extend(read_metrics(path).fail_as(Failure::Artifact)?);
    }
    if rows.is_empty() {
        return Err(anyhow!("no metrics rows found")).fail_as(Failure::Artifact);
    }
    let bands = aggregate(&rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    for b in &bands {
        w.serialize(b)?;
    }
    let body = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    create_parent(output)?;
    fs::write(output, [REPORT_HEADER_COMMENT.as_bytes(), b"\n", &body].concat())?;
    Ok(bands)
}

/// Report over every metrics CSV of the experiment.
pub fn report(layout: &Layout) -> anyhow::Result<Vec<BandRow>> {
    let dir = layout.root.join("metrics");
    let mut inputs: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect(),
        Err(_) => Vec::new(),
    };
    inputs.sort();
    report_files(&inputs, &layout.report())
}
