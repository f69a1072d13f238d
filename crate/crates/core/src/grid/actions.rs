use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GridCase;
use crate::error::{Error, Result};

/// Something attached to a substation: a branch end or an injection,
/// referenced by its index in the owning `GridCase`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    Branch(usize),
    Injection(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryAction {
    LineDisconnect {
        branch_index: usize,
    },
    /// Splits the substation's busbar in two: `keep` stays on the original
    /// bus, `moved` goes to a freshly created bus.
    BusSplit {
        substation_id: u32,
        keep: Vec<Element>,
        moved: Vec<Element>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionConfig {
    pub line_disconnects: bool,
    pub bus_splits: bool,
    /// Minimum number of attached elements for a substation to get a split.
    pub min_split_elements: usize,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self { line_disconnects: true, bus_splits: true, min_split_elements: 4 }
    }
}

/// Ordered set of unary actions; position `i` is bit `i` of a `TopologyVector`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDictionary {
    pub actions: Vec<UnaryAction>,
}

impl ActionDictionary {
    pub fn new(actions: Vec<UnaryAction>) -> Result<Self> {
        for (i, a) in actions.iter().enumerate() {
            if actions[..i].contains(a) {
                return Err(Error::Validation(format!("duplicate action at index {i}")));
            }
            if let UnaryAction::BusSplit { keep, moved, .. } = a {
                if keep.is_empty() || moved.is_empty() {
                    return Err(Error::Validation(format!("action {i}: empty split partition")));
                }
                if keep.iter().any(|e| moved.contains(e)) {
                    return Err(Error::Validation(format!("action {i}: overlapping split partition")));
                }
            }
        }
        Ok(Self { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("dictionary serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Binary perturbation vector over an `ActionDictionary`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopologyVector(Vec<u8>);

impl TopologyVector {
    /// The reference topology: no action applied.
    pub fn reference(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn unary(len: usize, i: usize) -> Self {
        Self::from_indices(len, &[i])
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Self {
        let mut bits = vec![0; len];
        for &i in indices {
            bits[i] = 1;
        }
        Self(bits)
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Validation("topology bits must be 0 or 1".into()));
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i)
    }

    /// Bitwise OR of two vectors of equal length.
    pub fn union(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as f64).collect()
    }
}

/// Elements attached to a bus: in-service branches in branch order, then
/// injections in injection order.
pub(crate) fn attachments(grid: &GridCase, bus_id: u32) -> Vec<Element> {
    let branches = grid
        .in_service_branches()
        .filter(|(_, br)| br.from_bus == bus_id || br.to_bus == bus_id)
        .map(|(k, _)| Element::Branch(k));
    let injections =
        grid.injections.iter().enumerate().filter(|(_, inj)| inj.bus == bus_id).map(|(k, _)| Element::Injection(k));
    branches.chain(injections).collect()
}

/// Builds the deterministic action dictionary: one disconnection per
/// in-service non-bridge branch (branch order), then one split per bus with
/// enough attachments (bus order), alternating attachments between halves.
pub fn enumerate_actions(grid: &GridCase, config: &ActionConfig) -> ActionDictionary {
    let mut actions = Vec::new();
    if config.line_disconnects {
        for (k, _) in grid.in_service_branches() {
            if grid.is_connected_without(Some(k)) {
                actions.push(UnaryAction::LineDisconnect { branch_index: k });
            }
        }
    }
    if config.bus_splits {
        for bus in &grid.buses {
            let attached = attachments(grid, bus.id);
            if attached.len() < config.min_split_elements.max(2) {
                continue;
            }
            let (keep, moved): (Vec<_>, Vec<_>) = attached.iter().enumerate().partition(|(pos, _)| pos % 2 == 0);
            actions.push(UnaryAction::BusSplit {
                substation_id: bus.substation_id,
                keep: keep.into_iter().map(|(_, e)| *e).collect(),
                moved: moved.into_iter().map(|(_, e)| *e).collect(),
            });
        }
    }
    ActionDictionary { actions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_grids::*;
    use crate::grid::BusKind;

    #[test]
    fn two_bus_grid_has_no_actions() {
        let dict = enumerate_actions(&two_bus(0.1, 10.0), &ActionConfig::default());
        assert!(dict.is_empty());
    }

    #[test]
    fn triangle_lines_are_all_disconnectable() {
        let dict = enumerate_actions(&triangle(), &ActionConfig::default());
        assert_eq!(dict.len(), 3);
        assert_eq!(dict.actions[2], UnaryAction::LineDisconnect { branch_index: 2 });
    }

    #[test]
    fn split_alternates_attachments() {
        let mut g = triangle();
        g.buses.push(bus(4, BusKind::PQ));
        g.branches.push(line(1, 4, 0.2));
        g.branches.push(line(2, 4, 0.2));
        let dict = enumerate_actions(&g, &ActionConfig::default());
        // bus 1: branches 0, 1, 3 and generator 0
        let split = dict.actions.iter().find(|a| matches!(a, UnaryAction::BusSplit { .. })).unwrap();
        assert_eq!(
            split,
            &UnaryAction::BusSplit {
                substation_id: 1,
                keep: vec![Element::Branch(0), Element::Branch(3)],
                moved: vec![Element::Branch(1), Element::Injection(0)],
            }
        );
    }

    #[test]
    fn dictionary_rejects_duplicates() {
        let a = UnaryAction::LineDisconnect { branch_index: 0 };
        assert!(ActionDictionary::new(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn topology_vector_helpers() {
        let a = TopologyVector::unary(4, 1);
        let b = TopologyVector::unary(4, 3);
        let ab = a.union(&b);
        assert_eq!(ab.bits(), &[0, 1, 0, 1]);
        assert_eq!(ab.weight(), 2);
        assert_eq!(ab.active().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(TopologyVector::reference(4).weight(), 0);
        assert!(TopologyVector::from_bits(vec![0, 2]).is_err());
    }
}
