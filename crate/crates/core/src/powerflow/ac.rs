use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{bus_injections, FlowVector, InjectionSample};
use crate::error::{Error, Result};
use crate::grid::{BusKind, GridCase};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcSolution {
    /// Per-unit voltage magnitudes, indexed like `grid.buses`.
    pub vm: Vec<f64>,
    /// Voltage angles in radians; the slack bus is at 0.
    pub va: Vec<f64>,
    pub flows: FlowVector,
    /// Number of mismatch evaluations, including the one that met the
    /// tolerance. A flat start that already balances reports 1.
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Polar power-mismatch equations for one grid and injection sample.
///
/// The state vector is `[theta(pv ++ pq), vm(pq)]`. The mismatch is
/// calculated minus specified power: P rows for PV and PQ buses, then Q rows
/// for PQ buses.
#[derive(Clone, Debug)]
pub struct AcProblem {
    /// Sparse admittance rows: `(column, G, B)`, diagonal included.
    ybus: Vec<Vec<(usize, f64, f64)>>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    pvpq: Vec<usize>,
    pq: Vec<usize>,
    /// Fixed magnitudes for PV/slack buses, flat 1.0 elsewhere.
    vm_fixed: Vec<f64>,
    slack: usize,
}

impl AcProblem {
    pub fn new(grid: &GridCase, x: &InjectionSample) -> Result<Self> {
        x.check(grid)?;
        let n = grid.buses.len();
        let slack = grid.slack_index().ok_or_else(|| Error::Solve("no slack bus".into()))?;
        let index = grid.bus_index();

        let mut dense = vec![(0.0f64, 0.0f64); n * n];
        let mut touched = vec![false; n * n];
        for (_, br) in grid.in_service_branches() {
            let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
            let z2 = br.r * br.r + br.x * br.x;
            let (g, b) = (br.r / z2, -br.x / z2);
            let bc = br.b_charging / 2.0;
            for (i, j) in [(f, f), (t, t)] {
                dense[i * n + j].0 += g;
                dense[i * n + j].1 += b + bc;
                touched[i * n + j] = true;
            }
            for (i, j) in [(f, t), (t, f)] {
                dense[i * n + j].0 -= g;
                dense[i * n + j].1 -= b;
                touched[i * n + j] = true;
            }
        }
        let ybus = (0..n)
            .map(|i| {
                (0..n).filter(|&j| touched[i * n + j]).map(|j| (j, dense[i * n + j].0, dense[i * n + j].1)).collect()
            })
            .collect();

        let (p_spec, q_spec) = bus_injections(grid, x);
        let pv: Vec<usize> = (0..n).filter(|&i| grid.buses[i].kind == BusKind::PV).collect();
        let pq: Vec<usize> = (0..n).filter(|&i| grid.buses[i].kind == BusKind::PQ).collect();
        let pvpq = [pv, pq.clone()].concat();
        let vm_fixed = grid
            .buses
            .iter()
            .map(|b| match b.kind {
                BusKind::PQ => 1.0,
                _ => b.voltage_setpoint.unwrap_or(1.0),
            })
            .collect();
        Ok(Self { ybus, p_spec, q_spec, pvpq, pq, vm_fixed, slack })
    }

    pub fn dim(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }

    /// Flat start: all angles 0, PQ magnitudes 1.
    pub fn flat_start(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim()];
        s[self.pvpq.len()..].fill(1.0);
        s
    }

    pub fn voltages(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.vm_fixed.len();
        let mut vm = self.vm_fixed.clone();
        let mut va = vec![0.0; n];
        for (k, &i) in self.pvpq.iter().enumerate() {
            va[i] = state[k];
        }
        let off = self.pvpq.len();
        for (k, &i) in self.pq.iter().enumerate() {
            vm[i] = state[off + k];
        }
        (vm, va)
    }

    fn bus_powers(&self, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = vm.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for &(k, g, b) in &self.ybus[i] {
                let (s, c) = (va[i] - va[k]).sin_cos();
                let vv = vm[i] * vm[k];
                p[i] += vv * (g * c + b * s);
                q[i] += vv * (g * s - b * c);
            }
        }
        (p, q)
    }

    pub fn mismatch(&self, state: &[f64]) -> Vec<f64> {
        let (vm, va) = self.voltages(state);
        let (p, q) = self.bus_powers(&vm, &va);
        self.pvpq.iter().map(|&i| p[i] - self.p_spec[i]).chain(self.pq.iter().map(|&i| q[i] - self.q_spec[i])).collect()
    }

    /// Analytic Jacobian of `mismatch`, row-major, `dim x dim`.
    pub fn jacobian(&self, state: &[f64]) -> Vec<f64> {
        let (vm, va) = self.voltages(state);
        let (p, q) = self.bus_powers(&vm, &va);
        let n = vm.len();
        let dim = self.dim();
        let npvpq = self.pvpq.len();

        // Column positions of each bus in the state vector.
        let mut theta_col = vec![usize::MAX; n];
        let mut vm_col = vec![usize::MAX; n];
        for (k, &i) in self.pvpq.iter().enumerate() {
            theta_col[i] = k;
        }
        for (k, &i) in self.pq.iter().enumerate() {
            vm_col[i] = npvpq + k;
        }

        let mut jac = vec![0.0; dim * dim];
        let rows = self.pvpq.iter().map(|&i| (i, true)).chain(self.pq.iter().map(|&i| (i, false))).enumerate();
        for (r, (i, is_p)) in rows {
            let row = &mut jac[r * dim..(r + 1) * dim];
            for &(k, g, b) in &self.ybus[i] {
                if k == i {
                    let v2 = vm[i] * vm[i];
                    let (d_theta, d_vm) = if is_p {
                        (-q[i] - b * v2, p[i] / vm[i] + g * vm[i])
                    } else {
                        (p[i] - g * v2, q[i] / vm[i] - b * vm[i])
                    };
                    if theta_col[i] != usize::MAX {
                        row[theta_col[i]] += d_theta;
                    }
                    if vm_col[i] != usize::MAX {
                        row[vm_col[i]] += d_vm;
                    }
                    continue;
                }
                let (s, c) = (va[i] - va[k]).sin_cos();
                let (d_theta, d_vm) = if is_p {
                    (vm[i] * vm[k] * (g * s - b * c), vm[i] * (g * c + b * s))
                } else {
                    (-vm[i] * vm[k] * (g * c + b * s), vm[i] * (g * s - b * c))
                };
                if theta_col[k] != usize::MAX {
                    row[theta_col[k]] += d_theta;
                }
                if vm_col[k] != usize::MAX {
                    row[vm_col[k]] += d_vm;
                }
            }
        }
        jac
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Full Newton-Raphson from a flat start.
///
/// PV and slack buses hold their setpoint magnitude; reactive limits are not
/// enforced. Returns once `max |mismatch| <= tol`; more than `max_iter`
/// Newton updates is a `Convergence` error.
pub fn ac_solve(grid: &GridCase, x: &InjectionSample, tol: f64, max_iter: usize) -> Result<AcSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    if !grid.is_connected() {
        return Err(Error::Solve("grid is disconnected".into()));
    }
    let problem = AcProblem::new(grid, x)?;
    let dim = problem.dim();
    let mut state = problem.flat_start();
    let mut evaluations = 0;
    loop {
        evaluations += 1;
        let f = problem.mismatch(&state);
        let norm = max_abs(&f);
        if norm <= tol {
            let (vm, va) = problem.voltages(&state);
            debug_assert_eq!(va[problem.slack], 0.0);
            let flows = branch_flows(grid, &vm, &va);
            return Ok(AcSolution { vm, va, flows, iterations: evaluations, max_mismatch: norm });
        }
        if evaluations > max_iter || !norm.is_finite() {
            return Err(Error::Convergence { iterations: evaluations - 1, last_mismatch: norm });
        }
        let jac = DMatrix::from_row_slice(dim, dim, &problem.jacobian(&state));
        let rhs = DVector::from_iterator(dim, f.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs).ok_or_else(|| Error::Solve("singular Jacobian".into()))?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solve("singular Jacobian".into()));
        }
        for (s, d) in state.iter_mut().zip(step.iter()) {
            *s += d;
        }
    }
}

/// From-end active power in MW for every branch.
fn branch_flows(grid: &GridCase, vm: &[f64], va: &[f64]) -> FlowVector {
    let index = grid.bus_index();
    let flows = grid
        .branches
        .iter()
        .map(|br| {
            if !br.status {
                return 0.0;
            }
            let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
            let z2 = br.r * br.r + br.x * br.x;
            let (g, b) = (br.r / z2, -br.x / z2);
            let (s, c) = (va[f] - va[t]).sin_cos();
            let p = vm[f] * vm[f] * g - vm[f] * vm[t] * (g * c + b * s);
            p * grid.base_mva
        })
        .collect();
    FlowVector(flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_grids::*;
    use crate::powerflow::dc_solve;

    #[test]
    fn flat_case_needs_one_evaluation() {
        let mut g = triangle();
        for inj in &mut g.injections {
            inj.p = 0.0;
        }
        let sol = ac_solve(&g, &InjectionSample::nominal(&g), 1e-8, 20).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.vm.iter().all(|&v| v == 1.0));
        assert!(sol.va.iter().all(|&a| a == 0.0));
        assert!(sol.flows.as_slice().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn two_bus_light_load_matches_dc() {
        // Lossless line, 1 MW (0.01 pu) load: exact transfer is
        // P = V1 V2 sin(d) / x, DC gives d = P x.
        let g = two_bus(0.1, 1.0);
        let x = InjectionSample::nominal(&g);
        let ac = ac_solve(&g, &x, 1e-12, 20).unwrap();
        let dc = dc_solve(&g, &x).unwrap();
        assert!(((ac.flows[0] - dc[0]) / dc[0]).abs() < 0.01);
        let transfer = ac.vm[0] * ac.vm[1] * (ac.va[0] - ac.va[1]).sin() / 0.1 * 100.0;
        assert!((transfer - ac.flows[0]).abs() < 1e-9);
    }

    #[test]
    fn max_iter_exceeded() {
        let g = two_bus(0.1, 50.0);
        let err = ac_solve(&g, &InjectionSample::nominal(&g), 1e-8, 0).unwrap_err();
        match err {
            Error::Convergence { iterations, last_mismatch } => {
                assert_eq!(iterations, 0);
                assert!((last_mismatch - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn impossible_transfer_does_not_converge() {
        // Beyond the maximum transferable power V^2/x = 10 pu.
        let g = two_bus(0.1, 2000.0);
        assert!(ac_solve(&g, &InjectionSample::nominal(&g), 1e-8, 20).is_err());
    }

    #[test]
    fn rejects_non_positive_tolerance() {
        let g = two_bus(0.1, 1.0);
        assert!(matches!(ac_solve(&g, &InjectionSample::nominal(&g), 0.0, 20), Err(Error::Precondition(_))));
    }
}
