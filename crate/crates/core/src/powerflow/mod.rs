//! The physical reference `y = S(x, tau)`: Newton-Raphson AC power flow and
//! the DC linear approximation used as a baseline.

mod ac;
mod dc;

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_topology, ActionDictionary, BusKind, GridCase, InjectionKind, TopologyVector};

pub use ac::{ac_solve, AcProblem, AcSolution};
pub use dc::dc_solve;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 20;

/// Active (and reactive) power per injection, in the injection order of the
/// owning `GridCase`. MW / MVAr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionSample {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionSample {
    pub fn nominal(grid: &GridCase) -> Self {
        Self { p: grid.injections.iter().map(|i| i.p).collect(), q: grid.injections.iter().map(|i| i.q).collect() }
    }

    /// Builds a sample from active powers alone. Loads keep their nominal
    /// power factor; generator reactive powers stay nominal.
    pub fn from_active(grid: &GridCase, p: Vec<f64>) -> Result<Self> {
        if p.len() != grid.injections.len() {
            return Err(Error::Shape(format!(
                "injection vector has {} entries, grid has {} injections",
                p.len(),
                grid.injections.len()
            )));
        }
        let q = grid
            .injections
            .iter()
            .zip(&p)
            .map(|(inj, &p)| match inj.kind {
                InjectionKind::Load if inj.p != 0.0 => inj.q * (p / inj.p),
                _ => inj.q,
            })
            .collect();
        Ok(Self { p, q })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub(crate) fn check(&self, grid: &GridCase) -> Result<()> {
        let n = grid.injections.len();
        if self.p.len() != n || self.q.len() != n {
            return Err(Error::Shape(format!(
                "injection sample has {}/{} entries, grid has {n} injections",
                self.p.len(),
                self.q.len()
            )));
        }
        if self.p.iter().chain(&self.q).any(|v| !v.is_finite()) {
            return Err(Error::Numerics("non-finite injection".into()));
        }
        Ok(())
    }
}

/// From-end active power per branch, MW, in branch order. Out-of-service
/// branches carry exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowVector(pub Vec<f64>);

impl FlowVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of branches whose flow exceeds their thermal limit.
    pub fn overloads(&self, grid: &GridCase) -> Vec<usize> {
        grid.branches
            .iter()
            .zip(&self.0)
            .enumerate()
            .filter(|(_, (br, &f))| br.is_overloaded(f))
            .map(|(k, _)| k)
            .collect()
    }
}

impl Index<usize> for FlowVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Per-bus specified injections in per-unit, indexed like `grid.buses`.
/// Reactive injections of generators only count on PQ buses.
pub(crate) fn bus_injections(grid: &GridCase, x: &InjectionSample) -> (Vec<f64>, Vec<f64>) {
    let index = grid.bus_index();
    let mut p = vec![0.0; grid.buses.len()];
    let mut q = vec![0.0; grid.buses.len()];
    for (k, inj) in grid.injections.iter().enumerate() {
        let b = index[&inj.bus];
        p[b] += x.p[k] / grid.base_mva;
        if inj.kind == InjectionKind::Load || grid.buses[b].kind == BusKind::PQ {
            q[b] += x.q[k] / grid.base_mva;
        }
    }
    (p, q)
}

/// `S(x, tau)`: AC flows on the grid after applying `tau`. Branch indexing is
/// that of the reference grid.
pub fn oracle(
    grid: &GridCase,
    tau: &TopologyVector,
    dict: &ActionDictionary,
    x: &InjectionSample,
) -> Result<FlowVector> {
    let perturbed = apply_topology(grid, tau, dict)?;
    Ok(ac_solve(&perturbed, x, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?.flows)
}

/// The AC oracle bound to one grid and action dictionary.
#[derive(Clone, Debug)]
pub struct AcOracle {
    pub grid: GridCase,
    pub dict: ActionDictionary,
    pub tol: f64,
    pub max_iter: usize,
}

impl AcOracle {
    pub fn new(grid: GridCase, dict: ActionDictionary) -> Self {
        Self { grid, dict, tol: DEFAULT_TOLERANCE, max_iter: DEFAULT_MAX_ITER }
    }

    pub fn flows(&self, tau: &TopologyVector, x: &InjectionSample) -> Result<FlowVector> {
        let perturbed = apply_topology(&self.grid, tau, &self.dict)?;
        Ok(ac_solve(&perturbed, x, self.tol, self.max_iter)?.flows)
    }

    /// DC approximation on the same perturbed grid.
    pub fn dc_flows(&self, tau: &TopologyVector, x: &InjectionSample) -> Result<FlowVector> {
        let perturbed = apply_topology(&self.grid, tau, &self.dict)?;
        dc_solve(&perturbed, x)
    }
}
