//! Source/target dataset protocol: injections sampled around the nominal
//! operating point, a reference-heavy source domain with a few examples per
//! unary action, and a target domain of unseen action pairs.

mod dataset;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_topology, ActionDictionary, BusKind, GridCase, InjectionKind, TopologyVector};
use crate::powerflow::{AcOracle, FlowVector, InjectionSample};

pub use dataset::{Dataset, DatasetHeader, DatasetRow, Dims, DomainTag, SCHEMA_VERSION};

/// Share of total load added to scheduled generation to cover losses.
pub const LOSS_ALLOWANCE: f64 = 0.02;
/// Largest tolerated share of oracle failures while building a dataset.
pub const MAX_FAILURE_RATE: f64 = 0.10;
/// Resampling rounds for rows whose oracle call failed.
pub const RETRY_ROUNDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub seed: u64,
    /// Uniform load scaling range `[lo, hi]` relative to nominal.
    pub load_range: (f64, f64),
    pub n_unary_actions: usize,
    pub n_ref_samples: usize,
    pub n_per_unary: usize,
    pub n_double_actions: usize,
    pub n_per_double: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            load_range: (0.7, 1.3),
            n_unary_actions: 20,
            n_ref_samples: 10_000,
            n_per_unary: 200,
            n_double_actions: 100,
            n_per_double: 50,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.load_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Validation(format!("load range [{lo}, {hi}] must satisfy 0 < lo <= hi")));
        }
        Ok(())
    }

    pub fn source_rows(&self) -> usize {
        self.n_ref_samples + self.n_unary_actions * self.n_per_unary
    }

    pub fn target_rows(&self) -> usize {
        self.n_double_actions * self.n_per_double
    }
}

/// Which file of the protocol a dataset is. Each split draws injections
/// from its own random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    SourceTrain,
    SourceTest,
    TargetTest,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::SourceTrain => 1,
            Split::SourceTest => 2,
            Split::TargetTest => 3,
        }
    }
}

/// Anything that can produce `y = S(x, tau)`.
pub trait FlowOracle: Sync {
    fn grid(&self) -> &GridCase;
    fn dict(&self) -> &ActionDictionary;
    fn flows(&self, tau: &TopologyVector, x: &InjectionSample) -> Result<FlowVector>;
}

impl FlowOracle for AcOracle {
    fn grid(&self) -> &GridCase {
        &self.grid
    }

    fn dict(&self) -> &ActionDictionary {
        &self.dict
    }

    fn flows(&self, tau: &TopologyVector, x: &InjectionSample) -> Result<FlowVector> {
        AcOracle::flows(self, tau, x)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one injection vector.
///
/// Every load is scaled by its own uniform factor in `load_range`. All
/// in-service generators (the slack's schedule included) are then scaled by
/// one common factor so that scheduled generation equals total load plus
/// the loss allowance; the slack bus absorbs the actual AC residual.
pub fn sample_injection<R: Rng>(grid: &GridCase, load_range: (f64, f64), rng: &mut R) -> InjectionSample {
    let (lo, hi) = load_range;
    let mut p: Vec<f64> = grid.injections.iter().map(|i| i.p).collect();
    for (pk, inj) in p.iter_mut().zip(&grid.injections) {
        if inj.kind == InjectionKind::Load {
            let factor = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            *pk = inj.p * factor;
        }
    }
    let load: f64 =
        -p.iter().zip(&grid.injections).filter(|(_, i)| i.kind == InjectionKind::Load).map(|(p, _)| p).sum::<f64>();
    let nominal_gen: f64 = grid.injections.iter().filter(|i| i.kind == InjectionKind::Generator).map(|i| i.p).sum();
    let target = load * (1.0 + LOSS_ALLOWANCE);
    if nominal_gen > 0.0 {
        let scale = target / nominal_gen;
        for (pk, inj) in p.iter_mut().zip(&grid.injections) {
            if inj.kind == InjectionKind::Generator {
                *pk = inj.p * scale;
            }
        }
    } else if let Some(k) = slack_generator(grid) {
        p[k] = target;
    }
    InjectionSample::from_active(grid, p).expect("sample has one entry per injection")
}

fn slack_generator(grid: &GridCase) -> Option<usize> {
    let slack = grid.buses.iter().find(|b| b.kind == BusKind::Slack)?.id;
    grid.injections.iter().position(|i| i.kind == InjectionKind::Generator && i.bus == slack)
}

/// Picks `n_unary_actions` dictionary entries in seeded random order,
/// skipping actions the oracle cannot solve at nominal injections.
pub fn select_unary_actions(oracle: &dyn FlowOracle, config: &SamplingConfig) -> Result<Vec<usize>> {
    let dict = oracle.dict();
    if config.n_unary_actions > dict.len() {
        return Err(Error::DataGen(format!(
            "{} unary actions requested, dictionary has {}",
            config.n_unary_actions,
            dict.len()
        )));
    }
    let mut order: Vec<usize> = (0..dict.len()).collect();
    order.shuffle(&mut rng_for(config.seed, 0));
    let nominal = InjectionSample::nominal(oracle.grid());
    let mut chosen = Vec::with_capacity(config.n_unary_actions);
    for i in order {
        if chosen.len() == config.n_unary_actions {
            break;
        }
        match oracle.flows(&TopologyVector::unary(dict.len(), i), &nominal) {
            Ok(_) => chosen.push(i),
            Err(e) => warn!("skipping unary action {i}: {e}"),
        }
    }
    if chosen.len() < config.n_unary_actions {
        return Err(Error::DataGen(format!(
            "only {} of {} requested unary actions are solvable",
            chosen.len(),
            config.n_unary_actions
        )));
    }
    Ok(chosen)
}

/// One slot per requested row: the topology and its tag.
type Plan = Vec<(TopologyVector, DomainTag)>;

/// Fills a plan with oracle-labelled rows. Injections are drawn sequentially
/// from `rng`; oracle calls run in parallel; failed rows are redrawn in later
/// rounds. Output order is the plan order.
fn label_rows(
    oracle: &dyn FlowOracle,
    plan: &Plan,
    load_range: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DatasetRow>> {
    let grid = oracle.grid();
    let mut rows: Vec<Option<DatasetRow>> = vec![None; plan.len()];
    let mut pending: Vec<usize> = (0..plan.len()).collect();
    let (mut attempts, mut failures) = (0usize, 0usize);
    for _ in 0..RETRY_ROUNDS {
        if pending.is_empty() {
            break;
        }
        let draws: Vec<(usize, InjectionSample)> =
            pending.iter().map(|&slot| (slot, sample_injection(grid, load_range, rng))).collect();
        let results: Vec<(usize, InjectionSample, Result<FlowVector>)> = draws
            .into_par_iter()
            .map(|(slot, x)| {
                let y = oracle.flows(&plan[slot].0, &x);
                (slot, x, y)
            })
            .collect();
        pending.clear();
        for (slot, x, y) in results {
            attempts += 1;
            match y {
                Ok(y) => {
                    let (tau, tag) = plan[slot].clone();
                    rows[slot] = Some(DatasetRow { x: x.p, tau, y: y.0, tag });
                }
                Err(e) => {
                    failures += 1;
                    warn!("row {slot}: oracle failed ({e}); resampling");
                    pending.push(slot);
                }
            }
        }
        if attempts > 0 && failures as f64 > MAX_FAILURE_RATE * attempts as f64 && attempts >= 20 {
            break;
        }
    }
    let rate = if attempts == 0 { 0.0 } else { failures as f64 / attempts as f64 };
    if rate > MAX_FAILURE_RATE || !pending.is_empty() {
        return Err(Error::DataGen(format!(
            "{failures} of {attempts} oracle calls failed ({:.1}%); the sampling range is probably unrealistic",
            100.0 * rate
        )));
    }
    Ok(rows.into_iter().map(|r| r.expect("every slot labelled")).collect())
}

fn header(
    oracle: &dyn FlowOracle,
    config: &SamplingConfig,
    split: Split,
    unary: &[usize],
    doubles: &[(usize, usize)],
) -> DatasetHeader {
    let grid = oracle.grid();
    DatasetHeader {
        schema_version: SCHEMA_VERSION,
        grid: grid.name.clone(),
        dict_hash: oracle.dict().hash(),
        dims: Dims { x: grid.injections.len(), tau: oracle.dict().len(), y: grid.branches.len() },
        split,
        seed: config.seed,
        config: config.clone(),
        unary_actions: unary.to_vec(),
        double_actions: doubles.to_vec(),
    }
}

/// Reference rows first, then `n_per_unary` rows for each selected unary
/// action in selection order. Train and test splits share the same actions.
pub fn build_source_dataset(oracle: &dyn FlowOracle, config: &SamplingConfig, split: Split) -> Result<Dataset> {
    config.validate()?;
    let unary = select_unary_actions(oracle, config)?;
    let n_tau = oracle.dict().len();
    let mut plan: Plan = vec![(TopologyVector::reference(n_tau), DomainTag::Reference); config.n_ref_samples];
    for &i in &unary {
        plan.extend(std::iter::repeat_n((TopologyVector::unary(n_tau, i), DomainTag::Unary), config.n_per_unary));
    }
    let rows = label_rows(oracle, &plan, config.load_range, &mut rng_for(config.seed, split.stream()))?;
    Ok(Dataset { header: header(oracle, config, split, &unary, &[]), rows })
}

/// Rows for `n_double_actions` pairs of source unary actions, drawn without
/// replacement among compatible pairs: the combined topology is valid and
/// the oracle solves it at nominal injections.
pub fn build_target_dataset(
    oracle: &dyn FlowOracle,
    config: &SamplingConfig,
    source_unary: &[usize],
) -> Result<Dataset> {
    config.validate()?;
    let grid = oracle.grid();
    let dict = oracle.dict();
    let n_tau = dict.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (a, &i) in source_unary.iter().enumerate() {
        for &j in &source_unary[a + 1..] {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    let mut rng = rng_for(config.seed, Split::TargetTest.stream());
    pairs.shuffle(&mut rng);

    let nominal = InjectionSample::nominal(grid);
    let compatible = |&(i, j): &(usize, usize)| {
        let tau = TopologyVector::from_indices(n_tau, &[i, j]);
        apply_topology(grid, &tau, dict).is_ok() && oracle.flows(&tau, &nominal).is_ok()
    };
    let mut chosen = Vec::with_capacity(config.n_double_actions);
    for p in &pairs {
        if chosen.len() == config.n_double_actions {
            break;
        }
        if compatible(p) {
            chosen.push(*p);
        }
    }
    if chosen.len() < config.n_double_actions {
        let achievable = pairs.iter().filter(|p| compatible(p)).count();
        return Err(Error::DataGen(format!(
            "{} double actions requested, only {achievable} compatible pairs exist",
            config.n_double_actions
        )));
    }

    let mut plan: Plan = Vec::with_capacity(config.target_rows());
    for &(i, j) in &chosen {
        plan.extend(std::iter::repeat_n(
            (TopologyVector::from_indices(n_tau, &[i, j]), DomainTag::Double),
            config.n_per_double,
        ));
    }
    let rows = label_rows(oracle, &plan, config.load_range, &mut rng)?;
    Ok(Dataset { header: header(oracle, config, Split::TargetTest, source_unary, &chosen), rows })
}

#[cfg(test)]
mod tests;
