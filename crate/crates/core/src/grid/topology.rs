use std::collections::HashSet;

use super::{ActionDictionary, Bus, BusKind, Element, GridCase, InjectionKind, TopologyVector, UnaryAction};
use crate::error::{Error, Result};

/// Returns a new grid with every action whose bit is set applied.
///
/// Disconnections only flip branch status. Splits append one bus per split
/// (ids continue after the current maximum, in dictionary order) and move
/// the `moved` half of the partition onto it. Branch and injection order is
/// never changed, so flow and injection vectors keep their indexing.
pub fn apply_topology(grid: &GridCase, tau: &TopologyVector, dict: &ActionDictionary) -> Result<GridCase> {
    if tau.len() != dict.len() {
        return Err(Error::Topology(format!(
            "topology vector has {} bits, dictionary has {} actions",
            tau.len(),
            dict.len()
        )));
    }
    let mut out = grid.clone();
    if tau.weight() == 0 {
        return Ok(out);
    }

    let mut split_substations = HashSet::new();
    for i in tau.active() {
        if let UnaryAction::BusSplit { substation_id, .. } = &dict.actions[i] {
            if !split_substations.insert(*substation_id) {
                return Err(Error::Topology(format!("substation {substation_id} is split twice")));
            }
        }
    }

    for i in tau.active() {
        match &dict.actions[i] {
            UnaryAction::LineDisconnect { branch_index } => {
                let br = out
                    .branches
                    .get_mut(*branch_index)
                    .ok_or_else(|| Error::Topology(format!("action {i}: branch {branch_index} out of range")))?;
                br.status = false;
            }
            UnaryAction::BusSplit { substation_id, keep, moved } => {
                split_bus(&mut out, *substation_id, keep, moved)
                    .map_err(|e| Error::Topology(format!("action {i}: {e}")))?;
            }
        }
    }

    if !out.is_connected() {
        return Err(Error::Topology("topology leaves the grid disconnected".into()));
    }
    Ok(out)
}

fn split_bus(grid: &mut GridCase, substation_id: u32, keep: &[Element], moved: &[Element]) -> Result<(), String> {
    let orig = grid
        .buses
        .iter()
        .position(|b| b.id == substation_id)
        .ok_or_else(|| format!("no bus for substation {substation_id}"))?;
    let orig_id = grid.buses[orig].id;
    let new_id = grid.buses.iter().map(|b| b.id).max().unwrap_or(0) + 1;

    for e in keep.iter().chain(moved) {
        let attached = match *e {
            Element::Branch(k) => grid.branches.get(k).is_some_and(|br| br.from_bus == orig_id || br.to_bus == orig_id),
            Element::Injection(k) => grid.injections.get(k).is_some_and(|inj| inj.bus == orig_id),
        };
        if !attached {
            return Err(format!("{e:?} is not attached to bus {orig_id}"));
        }
    }

    let mut moved_gen = false;
    for e in moved {
        match *e {
            Element::Branch(k) => {
                let br = &mut grid.branches[k];
                if br.from_bus == orig_id {
                    br.from_bus = new_id;
                } else {
                    br.to_bus = new_id;
                }
            }
            Element::Injection(k) => {
                let inj = &mut grid.injections[k];
                inj.bus = new_id;
                moved_gen |= inj.kind == InjectionKind::Generator;
            }
        }
    }

    let source = grid.buses[orig].clone();
    let (kind, voltage_setpoint) = if moved_gen && source.kind != BusKind::PQ {
        (BusKind::PV, source.voltage_setpoint)
    } else {
        (BusKind::PQ, None)
    };
    let kept_gen = grid.injections.iter().any(|inj| inj.bus == orig_id && inj.kind == InjectionKind::Generator);
    if source.kind == BusKind::PV && !kept_gen {
        grid.buses[orig].kind = BusKind::PQ;
        grid.buses[orig].voltage_setpoint = None;
    }
    grid.buses.push(Bus { id: new_id, kind, voltage_setpoint, ..source });
    Ok(())
}
