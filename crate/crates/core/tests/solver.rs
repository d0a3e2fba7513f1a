use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nnsysid::lmsolver::{run_lm, LmConfig, LmReport, ResidualProvider, ScheduleMode};
use nnsysid::Result;

struct Closure<F> {
    n: usize,
    f: F,
}

impl<F: FnMut(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>)> ResidualProvider for Closure<F> {
    fn n_params(&self) -> usize {
        self.n
    }

    fn residuals(&mut self, params: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.f)(params).0)
    }

    fn residuals_and_jacobian(&mut self, params: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((self.f)(params))
    }
}

fn identity_bowl(p: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    (p.clone(), DMatrix::identity(p.len(), p.len()))
}

fn rosenbrock(p: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (a, b) = (p[0], p[1]);
    let e = DVector::from_vec(vec![10.0 * (b - a * a), 1.0 - a]);
    let j = DMatrix::from_row_slice(2, 2, &[-20.0 * a, 10.0, -1.0, 0.0]);
    (e, j)
}

fn accepted_objectives_nonincreasing(report: &LmReport) -> bool {
    let accepted: Vec<f64> = report
        .state
        .history
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.objective)
        .collect();
    accepted.windows(2).all(|w| w[1] <= w[0])
}

fn cfg(epochs: usize) -> LmConfig {
    LmConfig {
        max_epochs: epochs,
        ..LmConfig::default()
    }
}

#[test]
fn convex_bowl_converges_within_twenty_epochs() {
    let mut p = Closure { n: 2, f: identity_bowl };
    let report = run_lm(&mut p, DVector::from_vec(vec![5.0, -3.0]), &cfg(20)).unwrap();
    assert!(
        report.state.params.norm() < 1e-8,
        "‖Θ‖ = {:e}",
        report.state.params.norm()
    );
    assert!(accepted_objectives_nonincreasing(&report));
}

#[test]
fn rosenbrock_reaches_tiny_objective() {
    let mut p = Closure { n: 2, f: rosenbrock };
    let report = run_lm(&mut p, DVector::from_vec(vec![-1.2, 1.0]), &cfg(200)).unwrap();
    assert!(report.state.objective < 1e-10, "V = {:e}", report.state.objective);
    assert!((report.state.params[0] - 1.0).abs() < 1e-5);
    assert!((report.state.params[1] - 1.0).abs() < 1e-5);
    assert!(accepted_objectives_nonincreasing(&report));
}

#[test]
fn overflowing_trials_are_rejected_and_damping_grows() {
    let overflow = |p: &DVector<f64>| {
        let (e, j) = rosenbrock(p);
        if p.norm() > 2.0 {
            (DVector::from_element(2, f64::INFINITY), j)
        } else {
            (e, j)
        }
    };
    let mut p = Closure { n: 2, f: overflow };
    let report = run_lm(
        &mut p,
        DVector::from_vec(vec![-1.2, 1.0]),
        &LmConfig {
            max_epochs: 100,
            lambda0: 1e-6,
            ..LmConfig::default()
        },
    )
    .unwrap();
    let h = &report.state.history;
    assert_eq!(h.len(), 100);
    let overflowed: Vec<usize> = (0..h.len()).filter(|&i| h[i].rho == f64::NEG_INFINITY).collect();
    assert!(!overflowed.is_empty(), "the test problem should overflow at least once");
    for &i in &overflowed {
        assert!(!h[i].accepted);
        if i + 1 < h.len() {
            assert!(h[i + 1].lambda > h[i].lambda);
        }
    }
    assert!(report.state.objective.is_finite());
    assert!(accepted_objectives_nonincreasing(&report));
}

#[test]
fn overflow_also_grows_damping_in_paper_literal_mode() {
    // minimum at (10, 0), but every point with ‖Θ‖ > 2 overflows
    let walled = |p: &DVector<f64>| {
        let e = p - DVector::from_vec(vec![10.0, 0.0]);
        let j = DMatrix::identity(2, 2);
        if p.norm() > 2.0 {
            (DVector::from_element(2, f64::INFINITY), j)
        } else {
            (e, j)
        }
    };
    let mut p = Closure { n: 2, f: walled };
    let report = run_lm(
        &mut p,
        DVector::zeros(2),
        &LmConfig {
            max_epochs: 30,
            schedule: ScheduleMode::PaperLiteral,
            ..LmConfig::default()
        },
    )
    .unwrap();
    let h = &report.state.history;
    assert_eq!(h.len(), 30);
    assert!(h[0].rho == f64::NEG_INFINITY && !h[0].accepted);
    for w in h.windows(2) {
        if w[0].rho == f64::NEG_INFINITY {
            assert!(w[1].lambda > w[0].lambda);
        }
    }
    assert!(report.state.params.norm() <= 2.0);
}

#[test]
fn damping_stays_above_geometric_floor() {
    let mut p = Closure { n: 2, f: identity_bowl };
    let c = cfg(60);
    let report = run_lm(&mut p, DVector::from_vec(vec![1.0, 2.0]), &c).unwrap();
    for (k, r) in report.state.history.iter().enumerate() {
        assert!(r.lambda > 0.0);
        assert!(r.lambda >= c.lambda0 * c.shrink.powi(k as i32));
    }
}

fn random_problem() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    (2usize..6, 1usize..4).prop_flat_map(|(rows_extra, n)| {
        let m = n + rows_extra;
        (
            prop::collection::vec(-2.0..2.0f64, m * n),
            prop::collection::vec(-2.0..2.0f64, m),
            prop::collection::vec(-3.0..3.0f64, n),
        )
            .prop_map(move |(a, b, x)| {
                (
                    DMatrix::from_row_slice(m, n, &a),
                    DVector::from_vec(b),
                    DVector::from_vec(x),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accepted_objectives_never_increase((a, b, x0) in random_problem(), mode in prop_oneof![Just(ScheduleMode::Fletcher), Just(ScheduleMode::PaperLiteral)]) {
        // e(x) = tanh(Ax) - b: nonlinear, bounded, with an exact Jacobian
        let n = x0.len();
        let f = |x: &DVector<f64>| {
            let z = &a * x;
            let e = z.map(f64::tanh) - &b;
            let d = z.map(|v| 1.0 - v.tanh().powi(2));
            let mut j = a.clone();
            for (i, mut row) in j.row_iter_mut().enumerate() {
                row *= d[i];
            }
            (e, j)
        };
        let mut p = Closure { n, f };
        let report = run_lm(&mut p, x0, &LmConfig { max_epochs: 40, schedule: mode, ..LmConfig::default() }).unwrap();
        prop_assert!(accepted_objectives_nonincreasing(&report));
        let first = report.state.history.first().map(|r| r.objective).unwrap();
        prop_assert!(report.state.objective <= first);
    }
}

#[test]
fn steps_to_points_with_overflowing_jacobian_are_rejected() {
    // residuals stay finite everywhere, the Jacobian overflows outside ‖Θ‖ ≤ 2
    let walled = |p: &DVector<f64>| {
        let e = p - DVector::from_vec(vec![10.0, 0.0]);
        let j = if p.norm() > 2.0 {
            DMatrix::from_element(2, 2, f64::INFINITY)
        } else {
            DMatrix::identity(2, 2)
        };
        (e, j)
    };
    let mut p = Closure { n: 2, f: walled };
    let report = run_lm(&mut p, DVector::zeros(2), &cfg(40)).unwrap();
    let h = &report.state.history;
    assert_eq!(h.len(), 40);
    assert!(h.iter().any(|r| r.rho == f64::NEG_INFINITY));
    for w in h.windows(2) {
        if w[0].rho == f64::NEG_INFINITY {
            assert!(!w[0].accepted);
            assert!(w[1].lambda > w[0].lambda);
        }
    }
    assert!(report.state.params.norm() <= 2.0);
    assert!(accepted_objectives_nonincreasing(&report));
}
