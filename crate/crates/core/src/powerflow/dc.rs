use nalgebra::{DMatrix, DVector};

use super::{bus_injections, FlowVector, InjectionSample};
use crate::error::{Error, Result};
use crate::grid::GridCase;

/// DC power flow: solves `B' theta = P` with the slack angle pinned at zero.
///
/// `B'` uses series susceptances `1/x` of in-service branches only. The slack
/// bus takes whatever injection balances the rest of the system.
pub fn dc_solve(grid: &GridCase, x: &InjectionSample) -> Result<FlowVector> {
    x.check(grid)?;
    if !grid.is_connected() {
        return Err(Error::Solve("B' is singular: grid is disconnected".into()));
    }
    let slack = grid.slack_index().ok_or_else(|| Error::Solve("no slack bus".into()))?;
    let n = grid.buses.len();
    let index = grid.bus_index();
    let (p, _) = bus_injections(grid, x);

    // Reduced ordering skips the slack bus.
    let reduced = |b: usize| {
        if b < slack {
            Some(b)
        } else if b > slack {
            Some(b - 1)
        } else {
            None
        }
    };

    let m = n - 1;
    let mut bp = DMatrix::<f64>::zeros(m, m);
    for (_, br) in grid.in_service_branches() {
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        let s = 1.0 / br.x;
        if let Some(i) = reduced(f) {
            bp[(i, i)] += s;
        }
        if let Some(j) = reduced(t) {
            bp[(j, j)] += s;
        }
        if let (Some(i), Some(j)) = (reduced(f), reduced(t)) {
            bp[(i, j)] -= s;
            bp[(j, i)] -= s;
        }
    }
    let rhs = DVector::from_iterator(m, (0..n).filter(|&b| b != slack).map(|b| p[b]));

    let theta_r = if m == 0 {
        DVector::zeros(0)
    } else {
        bp.lu().solve(&rhs).ok_or_else(|| Error::Solve("B' is singular".into()))?
    };
    if theta_r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solve("B' solve produced non-finite angles".into()));
    }
    let theta = |b: usize| reduced(b).map_or(0.0, |i| theta_r[i]);

    let flows = grid
        .branches
        .iter()
        .map(|br| {
            if !br.status {
                return 0.0;
            }
            let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
            (theta(f) - theta(t)) / br.x * grid.base_mva
        })
        .collect();
    Ok(FlowVector(flows))
}
