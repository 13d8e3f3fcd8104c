use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

use rpchoice::criterion::{cycle_residual_dot, cycle_residual_euclid, DotForm, EuclidForm};
use rpchoice::data::{load_csv, write_csv, CsvSchema};
use rpchoice::projection::{jl_diagnostic, ProjectionSpec, Sparsity};
use rpchoice::{CriterionForm, Cycle, CycleSet, Dataset, Market, Orientation, ShareTotal};

/// `n` markets of `d x b` covariates with strictly positive shares summing to one.
fn dataset(n: usize, d: usize, b: usize) -> impl Strategy<Value = Dataset> {
    let market = (
        prop::collection::vec(-3.0f64..3.0, d * b),
        prop::collection::vec(0.01f64..1.0, d),
    )
        .prop_map(move |(x, w)| {
            let total: f64 = w.iter().sum();
            Market::new(
                DMatrix::from_row_slice(d, b, &x),
                DVector::from_iterator(d, w.iter().map(|v| v / total)),
            )
            .unwrap()
        });
    prop::collection::vec(market, n).prop_map(|m| Dataset::new(m, ShareTotal::Complete).unwrap())
}

fn instance() -> impl Strategy<Value = (Dataset, CycleSet)> {
    (2usize..=5, 2usize..=8, 1usize..=3).prop_flat_map(|(n, d, b)| {
        dataset(n, d, b).prop_map(move |data| {
            let lengths: Vec<usize> = (2..=n.min(3)).collect();
            let cycles = CycleSet::enumerate(n, &lengths, Orientation::Both).unwrap();
            (data, cycles)
        })
    })
}

fn beta(b: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-2.0f64..2.0, b).prop_map(DVector::from_vec)
}

fn with_betas(count: usize) -> impl Strategy<Value = (Dataset, CycleSet, Vec<DVector<f64>>)> {
    instance().prop_flat_map(move |(data, cycles)| {
        let b = data.b();
        prop::collection::vec(beta(b), count).prop_map(move |betas| (data.clone(), cycles.clone(), betas))
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn criterion_is_convex((data, cycles, betas) in with_betas(2), lam in 0.0f64..=1.0) {
        let q = DotForm.bind(&data, &cycles).unwrap();
        let mix = lam * &betas[0] + (1.0 - lam) * &betas[1];
        let lhs = q.value(&mix);
        let rhs = lam * q.value(&betas[0]) + (1.0 - lam) * q.value(&betas[1]);
        prop_assert!(lhs <= rhs + 1e-10 * rhs.max(1.0));
    }

    #[test]
    fn euclid_form_is_four_times_dot((data, cycles, betas) in with_betas(1)) {
        let b = &betas[0];
        let qd = DotForm.bind(&data, &cycles).unwrap().value(b);
        let qe = EuclidForm.bind(&data, &cycles).unwrap().value(b);
        prop_assert!(rel_close(qe, 4.0 * qd, 1e-10) || (qd == 0.0 && qe.abs() < 1e-24));
        for c in cycles.cycles() {
            let rd = cycle_residual_dot(c, b, &data);
            let re = cycle_residual_euclid(c, b, &data);
            prop_assert!((re - 2.0 * rd).abs() <= 1e-10 * (1.0 + rd.abs()));
        }
    }

    #[test]
    fn two_cycles_are_orientation_free((data, _c, betas) in with_betas(1)) {
        let b = &betas[0];
        for i in 0..data.n() {
            for j in (i + 1)..data.n() {
                let fwd = cycle_residual_dot(&Cycle::new(vec![i, j]).unwrap(), b, &data);
                let bwd = cycle_residual_dot(&Cycle::new(vec![j, i]).unwrap(), b, &data);
                prop_assert!((fwd - bwd).abs() <= 1e-12 * (1.0 + fwd.abs()));
            }
        }
    }

    #[test]
    fn market_utility_shifts_leave_q_unchanged(
        (data, cycles, betas) in with_betas(1),
        shifts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 5),
    ) {
        // Adding the same row a_i to every choice in market i shifts each
        // utility in that market by a_i . beta; with unit share totals the
        // cycle sums telescope.
        let b = &betas[0];
        let shifted: Vec<Market> = data
            .markets()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut x = m.covariates().clone();
                for (c, shift) in shifts[i].iter().take(data.b()).enumerate() {
                    x.column_mut(c).add_scalar_mut(*shift);
                }
                Market::new(x, m.shares().clone()).unwrap()
            })
            .collect();
        let moved = Dataset::new(shifted, ShareTotal::Complete).unwrap();
        let q0 = DotForm.bind(&data, &cycles).unwrap().value(b);
        let q1 = DotForm.bind(&moved, &cycles).unwrap().value(b);
        let scale: f64 = shifts.iter().flatten().map(|v| v.abs()).sum::<f64>() * b.norm() + 1.0;
        prop_assert!((q0 - q1).abs() <= 1e-10 * scale * scale * (1.0 + q0));
    }

    #[test]
    fn residuals_are_linear_and_q_is_homogeneous(
        (data, cycles, betas) in with_betas(2),
        a in -3.0f64..3.0,
        t in 0.1f64..10.0,
    ) {
        let q = DotForm.bind(&data, &cycles).unwrap();
        let combo = a * &betas[0] + &betas[1];
        let r0 = q.residuals(&betas[0]);
        let r1 = q.residuals(&betas[1]);
        for (rc, (x, y)) in q.residuals(&combo).iter().zip(r0.iter().zip(&r1)) {
            prop_assert!((rc - (a * x + y)).abs() <= 1e-10 * (1.0 + rc.abs()));
        }
        let scaled = q.value(&(t * &betas[0]));
        prop_assert!(rel_close(scaled, t * t * q.value(&betas[0]), 1e-10) || scaled < 1e-20);
    }

    #[test]
    fn subgradient_matches_finite_differences((data, cycles, betas) in with_betas(2)) {
        let q = DotForm.bind(&data, &cycles).unwrap();
        let b = &betas[0];
        let dir = &betas[1];
        let h = 1e-6;
        // Residuals near a kink make the one-sided derivatives differ.
        let near_kink = q.residuals(b).iter().any(|r| r.abs() < 1e-3);
        prop_assume!(!near_kink && dir.norm() > 1e-3);
        let fd = (q.value(&(b + h * dir)) - q.value(&(b - h * dir))) / (2.0 * h);
        let an = q.subgradient(b).dot(dir);
        prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "fd {} analytic {}", fd, an);
        let ge = EuclidForm.bind(&data, &cycles).unwrap().subgradient(b);
        prop_assert!((&ge - 4.0 * q.subgradient(b)).norm() <= 1e-9 * (1.0 + ge.norm()));
    }

    #[test]
    fn csv_round_trip(data in (2usize..=4, 2usize..=6, 1usize..=3).prop_flat_map(|(n, d, b)| dataset(n, d, b))) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&data, &path).unwrap();
        let back = load_csv(&path, &CsvSchema::default()).unwrap();
        prop_assert_eq!(back.markets(), data.markets());
        prop_assert_eq!(back.covariate_names(), data.covariate_names());
        prop_assert_eq!(back.market_ids(), data.market_ids());
    }
}

proptest! {
    #![proptest_config(Config {
        cases: 12,
        rng_seed: RngSeed::Fixed(0x6a6c),
        ..Config::default()
    })]

    #[test]
    fn projected_distance_is_unbiased(
        w in prop::collection::vec(-2.0f64..2.0, 16..64),
        k in 2usize..12,
        which in 0usize..3,
        seed in any::<u64>(),
    ) {
        let d = w.len();
        let s = [Sparsity::Optimal, Sparsity::GaussianEquivalent, Sparsity::Sparse][which];
        let spec = ProjectionSpec::new(k, d, s, seed).unwrap();
        let zeros = vec![0.0; d];
        let draws = 10_000;
        let r = jl_diagnostic(&w, &zeros, &spec, draws).unwrap();
        let sigma = (r.predicted_var / draws as f64).sqrt();
        prop_assert!(
            (r.mean_sq_dist - r.true_sq_dist).abs() <= 3.0 * sigma,
            "mean {} truth {} sigma {}", r.mean_sq_dist, r.true_sq_dist, sigma
        );
    }
}
