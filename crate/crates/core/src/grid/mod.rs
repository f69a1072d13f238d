//! Electrical network model: buses, branches, injections, and the topology
//! actions that perturb them.

mod actions;
mod matpower;
mod topology;

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use actions::{enumerate_actions, ActionConfig, ActionDictionary, Element, TopologyVector, UnaryAction};
pub use matpower::parse_matpower_case;
pub use topology::apply_topology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    #[serde(rename = "pv")]
    PV,
    #[serde(rename = "pq")]
    PQ,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External (file) bus number.
    pub id: u32,
    pub kind: BusKind,
    /// `None` when the source file leaves the nominal voltage unspecified (0).
    pub base_kv: Option<f64>,
    /// Voltage magnitude setpoint in per-unit, PV and slack buses only.
    pub voltage_setpoint: Option<f64>,
    pub substation_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, per-unit.
    pub b_charging: f64,
    pub status: bool,
    /// MW rating, absent when the file carries 0 (unlimited).
    pub thermal_limit: Option<f64>,
}

impl Branch {
    /// True when |flow_mw| exceeds the rating. Unrated branches never overload.
    pub fn is_overloaded(&self, flow_mw: f64) -> bool {
        self.thermal_limit.is_some_and(|limit| flow_mw.abs() > limit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    Generator,
    Load,
}

/// Power injected at a bus. Loads carry negative `p`/`q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub bus: u32,
    /// MW, positive = production.
    pub p: f64,
    /// MVAr. Only used for loads and for generators sitting on PQ buses.
    pub q: f64,
    pub kind: InjectionKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub injections: Vec<Injection>,
}

impl GridCase {
    pub fn bus_index(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches.iter().enumerate().filter(|(_, br)| br.status)
    }

    /// Checks every structural invariant: unique ids, a single slack bus,
    /// well-formed branches, and connectivity over in-service branches.
    pub fn validate(&self) -> Result<()> {
        if self.base_mva.is_nan() || self.base_mva <= 0.0 {
            return Err(Error::Validation(format!("baseMVA must be positive, got {}", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }
        let mut seen = HashSet::new();
        for bus in &self.buses {
            if !seen.insert(bus.id) {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if let Some(kv) = bus.base_kv {
                if kv.is_nan() || kv <= 0.0 {
                    return Err(Error::Validation(format!("bus {} has non-positive base kV", bus.id)));
                }
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return Err(Error::Validation(format!("expected exactly one slack bus, found {slacks}")));
        }
        for (i, br) in self.branches.iter().enumerate() {
            if br.from_bus == br.to_bus {
                return Err(Error::Validation(format!("branch {i} is a self-loop on bus {}", br.from_bus)));
            }
            if br.x == 0.0 {
                return Err(Error::Validation(format!("branch {i} has zero reactance")));
            }
            for end in [br.from_bus, br.to_bus] {
                if !seen.contains(&end) {
                    return Err(Error::Validation(format!("branch {i} references unknown bus {end}")));
                }
            }
        }
        for (i, inj) in self.injections.iter().enumerate() {
            if !seen.contains(&inj.bus) {
                return Err(Error::Validation(format!("injection {i} references unknown bus {}", inj.bus)));
            }
        }
        if !self.is_connected() {
            return Err(Error::Validation("grid is not connected over in-service branches".into()));
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        self.is_connected_without(None)
    }

    /// Connectivity over in-service branches, optionally pretending one
    /// branch is open.
    pub(crate) fn is_connected_without(&self, skip: Option<usize>) -> bool {
        let n = self.buses.len();
        if n == 0 {
            return true;
        }
        let index = self.bus_index();
        let mut adj = vec![Vec::new(); n];
        for (k, br) in self.in_service_branches() {
            if Some(k) == skip {
                continue;
            }
            let (Some(&f), Some(&t)) = (index.get(&br.from_bus), index.get(&br.to_bus)) else {
                return false;
            };
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Canonical JSON: struct field order, integer ids, floats in shortest
    /// round-trip form.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: GridCase = serde_json::from_str(text)?;
        grid.validate()?;
        Ok(grid)
    }
}


#[cfg(test)]
mod tests {
    use super::test_grids::*;
    use super::*;

    #[test]
    fn validate_rejects_two_slacks() {
        let mut g = two_bus(0.1, 10.0);
        g.buses[1].kind = BusKind::Slack;
        assert!(matches!(g.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn validate_rejects_islands() {
        let mut g = triangle();
        g.branches[0].status = false;
        g.branches[2].status = false;
        assert!(matches!(g.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn overload_check_ignores_unrated_lines() {
        let mut br = line(1, 2, 0.1);
        assert!(!br.is_overloaded(1e9));
        br.thermal_limit = Some(100.0);
        assert!(br.is_overloaded(-100.5));
        assert!(!br.is_overloaded(99.0));
    }

    #[test]
    fn json_round_trip() {
        let g = triangle();
        let back = GridCase::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
    }
}
