use std::collections::HashMap;

use super::{Branch, Bus, BusKind, GridCase, Injection, InjectionKind};
use crate::error::{Error, Result};

// Matpower column indices (0-based).
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const BASE_KV: usize = 9;

const GEN_BUS: usize = 0;
const PG: usize = 1;
const QG: usize = 2;
const VG: usize = 5;
const GEN_STATUS: usize = 7;

const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const RATE_A: usize = 5;
const BR_STATUS: usize = 10;

/// Parses the `baseMVA`, `bus`, `gen` and `branch` blocks of a Matpower case.
///
/// Injections are emitted as one entry per in-service generator (file order)
/// followed by one load per bus with nonzero demand (bus order). A PV bus
/// without any in-service generator is demoted to PQ, as Matpower does.
/// Branch rows with status 0 are kept.
pub fn parse_matpower_case(text: &str) -> Result<GridCase> {
    let text = strip_comments(text);
    let name = case_name(&text).unwrap_or_else(|| "case".to_string());
    let base_mva = scalar(&text, "baseMVA")?;
    let bus_rows = matrix(&text, "bus", 13)?;
    let gen_rows = matrix(&text, "gen", 8)?;
    let branch_rows = matrix(&text, "branch", 11)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index = HashMap::new();
    for row in &bus_rows {
        let id = as_id(row[BUS_I], "bus id")?;
        let kind = match row[BUS_TYPE] as i64 {
            1 => BusKind::PQ,
            2 => BusKind::PV,
            3 => BusKind::Slack,
            other => return Err(Error::Validation(format!("bus {id}: unsupported bus type {other}"))),
        };
        if index.insert(id, buses.len()).is_some() {
            return Err(Error::Validation(format!("duplicate bus id {id}")));
        }
        buses.push(Bus {
            id,
            kind,
            base_kv: (row[BASE_KV] > 0.0).then_some(row[BASE_KV]),
            voltage_setpoint: None,
            substation_id: id,
        });
    }

    let mut injections = Vec::new();
    let mut has_gen = vec![false; buses.len()];
    for row in &gen_rows {
        let bus = as_id(row[GEN_BUS], "generator bus")?;
        let &bi =
            index.get(&bus).ok_or_else(|| Error::Validation(format!("generator references unknown bus {bus}")))?;
        if row[GEN_STATUS] <= 0.0 {
            continue;
        }
        if !has_gen[bi] {
            has_gen[bi] = true;
            if buses[bi].kind != BusKind::PQ {
                buses[bi].voltage_setpoint = Some(row[VG]);
            }
        }
        injections.push(Injection { bus, p: row[PG], q: row[QG], kind: InjectionKind::Generator });
    }
    for (bus, has) in buses.iter_mut().zip(&has_gen) {
        if bus.kind == BusKind::PV && !has {
            bus.kind = BusKind::PQ;
        }
        if bus.kind == BusKind::Slack && bus.voltage_setpoint.is_none() {
            bus.voltage_setpoint = Some(1.0);
        }
    }
    for (bus, row) in buses.iter().zip(&bus_rows) {
        if row[PD] != 0.0 || row[QD] != 0.0 {
            injections.push(Injection { bus: bus.id, p: -row[PD], q: -row[QD], kind: InjectionKind::Load });
        }
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (k, row) in branch_rows.iter().enumerate() {
        let from_bus = as_id(row[F_BUS], "branch from bus")?;
        let to_bus = as_id(row[T_BUS], "branch to bus")?;
        for end in [from_bus, to_bus] {
            if !index.contains_key(&end) {
                return Err(Error::Validation(format!("branch {k} references unknown bus {end}")));
            }
        }
        if row[BR_X] == 0.0 {
            return Err(Error::Validation(format!("branch {k} ({from_bus}-{to_bus}) has zero reactance")));
        }
        branches.push(Branch {
            from_bus,
            to_bus,
            r: row[BR_R],
            x: row[BR_X],
            b_charging: row[BR_B],
            status: row[BR_STATUS] > 0.0,
            thermal_limit: (row[RATE_A] > 0.0).then_some(row[RATE_A]),
        });
    }

    let grid = GridCase { name, base_mva, buses, branches, injections };
    grid.validate()?;
    Ok(grid)
}

fn strip_comments(text: &str) -> String {
    text.lines().map(|line| line.split('%').next().unwrap_or("")).collect::<Vec<_>>().join("\n")
}

fn case_name(text: &str) -> Option<String> {
    let line = text.lines().find(|l| l.trim_start().starts_with("function"))?;
    let name = line.split('=').nth(1)?.trim().trim_end_matches(';');
    (!name.is_empty()).then(|| name.to_string())
}

fn scalar(text: &str, field: &str) -> Result<f64> {
    let key = format!("mpc.{field}");
    let start = find_assignment(text, &key).ok_or_else(|| Error::Parse(format!("missing {key}")))?;
    let rest = &text[start..];
    let end = rest.find([';', '\n']).unwrap_or(rest.len());
    rest[..end].trim().parse().map_err(|_| Error::Parse(format!("{key} is not a number: {:?}", rest[..end].trim())))
}

fn matrix(text: &str, field: &str, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let key = format!("mpc.{field}");
    let start = find_assignment(text, &key).ok_or_else(|| Error::Parse(format!("missing {key}")))?;
    let rest = text[start..].trim_start();
    let body = rest.strip_prefix('[').ok_or_else(|| Error::Parse(format!("{key} is not a matrix")))?;
    let end = body.find(']').ok_or_else(|| Error::Parse(format!("{key}: unterminated matrix")))?;
    let mut rows = Vec::new();
    for raw in body[..end].split([';', '\n']) {
        let cells: Vec<&str> = raw.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if cells.is_empty() {
            continue;
        }
        let row = cells
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| Error::Parse(format!("{key}: bad number {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() < min_cols {
            return Err(Error::Parse(format!(
                "{key}: row {} has {} columns, need at least {min_cols}",
                rows.len() + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Byte offset just past `key =`, ignoring keys that merely share a prefix
/// (`mpc.bus` vs `mpc.bus_name`).
fn find_assignment(text: &str, key: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(pos) = text[from..].find(key) {
        let after = from + pos + key.len();
        let tail = text[after..].trim_start();
        if let Some(value) = tail.strip_prefix('=') {
            return Some(text.len() - value.len());
        }
        from = after;
    }
    None
}

fn as_id(value: f64, what: &str) -> Result<u32> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as u32)
    } else {
        Err(Error::Parse(format!("{what} {value} is not a positive integer")))
    }
}
