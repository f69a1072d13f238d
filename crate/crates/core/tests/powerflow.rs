use leapgrid_core::cases;
use leapgrid_core::grid::{Branch, Bus, BusKind, Injection, InjectionKind};
use leapgrid_core::powerflow::{AcProblem, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use leapgrid_core::{ac_solve, dc_solve, GridCase, InjectionSample};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    base_mva: f64,
    vm: Vec<f64>,
    va_rad: Vec<f64>,
    pf_mw: Vec<f64>,
}

fn reference() -> Reference {
    serde_json::from_str(include_str!("fixtures/case14_pypower.json")).unwrap()
}

#[test]
fn case14_converges_quickly() {
    let grid = cases::builtin("case14").unwrap();
    let sol = ac_solve(&grid, &InjectionSample::nominal(&grid), DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
    assert!(sol.iterations <= 10, "{} iterations", sol.iterations);
    assert!(sol.max_mismatch <= 1e-8);
}

#[test]
fn case14_matches_pypower() {
    let grid = cases::builtin("case14").unwrap();
    let r = reference();
    let sol = ac_solve(&grid, &InjectionSample::nominal(&grid), 1e-10, DEFAULT_MAX_ITER).unwrap();
    for i in 0..14 {
        assert!((sol.vm[i] - r.vm[i]).abs() <= 1e-4, "vm bus {i}: {} vs {}", sol.vm[i], r.vm[i]);
        assert!((sol.va[i] - r.va_rad[i]).abs() <= 1e-4, "va bus {i}: {} vs {}", sol.va[i], r.va_rad[i]);
    }
    for (k, (ours, theirs)) in sol.flows.as_slice().iter().zip(&r.pf_mw).enumerate() {
        assert!((ours - theirs).abs() / r.base_mva <= 1e-4, "branch {k}: {ours} vs {theirs} MW");
    }
}

fn bus(id: u32, kind: BusKind) -> Bus {
    Bus { id, kind, base_kv: None, voltage_setpoint: (kind != BusKind::PQ).then_some(1.02), substation_id: id }
}

fn branch(from: u32, to: u32, r: f64, x: f64, b: f64) -> Branch {
    Branch { from_bus: from, to_bus: to, r, x, b_charging: b, status: true, thermal_limit: None }
}

/// A connected random grid: a ring through every bus plus some chords.
/// Bus 1 is the slack; every third bus is PV.
fn arb_grid() -> impl Strategy<Value = GridCase> {
    (4usize..9)
        .prop_flat_map(|n| {
            let lines = prop::collection::vec((0.002f64..0.05, 0.05f64..0.3, 0.0f64..0.05), n + 3);
            let chords = prop::collection::vec((0..n, 0..n), 3);
            let loads = prop::collection::vec(5.0f64..40.0, n);
            (Just(n), lines, chords, loads)
        })
        .prop_map(|(n, lines, chords, loads)| {
            let buses = (1..=n as u32)
                .map(|id| {
                    bus(
                        id,
                        if id == 1 {
                            BusKind::Slack
                        } else if id % 3 == 0 {
                            BusKind::PV
                        } else {
                            BusKind::PQ
                        },
                    )
                })
                .collect();
            let mut branches = Vec::new();
            for (i, &(r, x, b)) in lines.iter().take(n).enumerate() {
                branches.push(branch(i as u32 + 1, ((i + 1) % n) as u32 + 1, r, x, b));
            }
            for (k, &(a, c)) in chords.iter().enumerate() {
                if a != c {
                    let (r, x, b) = lines[n + k];
                    branches.push(branch(a as u32 + 1, c as u32 + 1, r, x, b));
                }
            }
            let mut injections = Vec::new();
            for id in 1..=n as u32 {
                if id == 1 || id % 3 == 0 {
                    injections.push(Injection { bus: id, p: 20.0, q: 0.0, kind: InjectionKind::Generator });
                }
            }
            for (i, &p) in loads.iter().enumerate() {
                if i > 0 {
                    injections.push(Injection { bus: i as u32 + 1, p: -p, q: -0.3 * p, kind: InjectionKind::Load });
                }
            }
            GridCase { name: "random".into(), base_mva: 100.0, buses, branches, injections }
        })
}

fn central_jacobian(problem: &AcProblem, state: &[f64]) -> Vec<f64> {
    let n = problem.dim();
    let h = 1e-6;
    let mut jac = vec![0.0; n * n];
    for col in 0..n {
        let mut up = state.to_vec();
        let mut down = state.to_vec();
        up[col] += h;
        down[col] -= h;
        let (fu, fd) = (problem.mismatch(&up), problem.mismatch(&down));
        for row in 0..n {
            jac[row * n + col] = (fu[row] - fd[row]) / (2.0 * h);
        }
    }
    jac
}

/// Per-bus balance of DC flows in per unit: injection minus outgoing flow.
fn dc_residuals(grid: &GridCase, x: &InjectionSample, flows: &[f64]) -> Vec<f64> {
    let index = grid.bus_index();
    let mut r = vec![0.0; grid.buses.len()];
    for (p, inj) in x.p.iter().zip(&grid.injections) {
        r[index[&inj.bus]] += p / grid.base_mva;
    }
    for (k, br) in grid.in_service_branches() {
        r[index[&br.from_bus]] -= flows[k] / grid.base_mva;
        r[index[&br.to_bus]] += flows[k] / grid.base_mva;
    }
    r
}

#[test]
fn case14_dc_conserves_power() {
    let grid = cases::builtin("case14").unwrap();
    let x = InjectionSample::nominal(&grid);
    let flows = dc_solve(&grid, &x).unwrap();
    let slack = grid.slack_index().unwrap();
    let r = dc_residuals(&grid, &x, flows.as_slice());
    for (i, v) in r.iter().enumerate() {
        if i != slack {
            assert!(v.abs() <= 1e-9, "bus {i}: {v}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobian_matches_central_differences(grid in arb_grid(), jitter in prop::collection::vec(-0.05f64..0.05, 16)) {
        let x = InjectionSample::nominal(&grid);
        let problem = AcProblem::new(&grid, &x).unwrap();
        let mut state = problem.flat_start();
        for (s, j) in state.iter_mut().zip(&jitter) {
            *s += j;
        }
        let analytic = problem.jacobian(&state);
        let numeric = central_jacobian(&problem, &state);
        for (a, n) in analytic.iter().zip(&numeric) {
            prop_assert!((a - n).abs() <= 1e-5, "analytic {} numeric {}", a, n);
        }
    }

    #[test]
    fn dc_balances_every_non_slack_bus(grid in arb_grid(), scale in 0.5f64..1.5) {
        let mut x = InjectionSample::nominal(&grid);
        x.p.iter_mut().for_each(|p| *p *= scale);
        let flows = dc_solve(&grid, &x).unwrap();
        let slack = grid.slack_index().unwrap();
        let r = dc_residuals(&grid, &x, flows.as_slice());
        for (i, v) in r.iter().enumerate() {
            if i != slack {
                prop_assert!(v.abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn dc_is_linear(grid in arb_grid(), a in -2.0f64..2.0, b in -2.0f64..2.0, seed in prop::collection::vec(-30.0f64..30.0, 12)) {
        let x1 = InjectionSample::nominal(&grid);
        let x2 = InjectionSample { p: (0..x1.len()).map(|k| seed[k % seed.len()]).collect(), q: x1.q.clone() };
        let mix = InjectionSample { p: x1.p.iter().zip(&x2.p).map(|(u, v)| a * u + b * v).collect(), q: x1.q.clone() };
        let (f1, f2, fm) = (dc_solve(&grid, &x1).unwrap(), dc_solve(&grid, &x2).unwrap(), dc_solve(&grid, &mix).unwrap());
        for k in 0..fm.len() {
            let expected = a * f1[k] + b * f2[k];
            prop_assert!((fm[k] - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn converged_ac_solutions_satisfy_mismatch(grid in arb_grid()) {
        let x = InjectionSample::nominal(&grid);
        if let Ok(sol) = ac_solve(&grid, &x, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER) {
            prop_assert!(sol.max_mismatch <= DEFAULT_TOLERANCE);
            prop_assert!(sol.flows.as_slice().iter().all(|f| f.is_finite()));
        }
    }
}
