//! Solvers and gradients checked against independent oracles: lattice search,
//! finite differences and closed forms.

mod common;

use cape_core::accounting::project_to_simplex;
use cape_core::cape::{loss, loss_gradient, AllocationVector};
use cape_core::market_data::MarketSequence;
use cape_core::solver::{
    best_fixed_allocation, brute_force_simplex_min, olu_objective, solve_cape_step, solve_olu_step,
    CapeStepProblem, CurvatureMatrix,
};
use cape_core::strategies::bcrp;
use common::*;
use rand::Rng;

#[test]
fn cape_step_agrees_with_lattice_search() {
    let mut rng = rng(11);
    for _ in 0..40 {
        let d = rng.random_range(1..=2);
        let m = d + 1;
        let w = random_allocation(&mut rng, m);
        let grad: Vec<f64> = (0..m).map(|_| -(0.5 + rng.random::<f64>())).collect();
        let metric = random_metric(&mut rng, m);
        let eta = 0.5 + 1.5 * rng.random::<f64>();
        let lambda = if rng.random_bool(0.2) {
            1.0
        } else {
            0.05 * rng.random::<f64>()
        };
        let problem = CapeStepProblem {
            grad: &grad,
            w_current: &w,
            metric: &metric,
            eta,
            lambda,
        };
        let got = solve_cape_step(&problem).unwrap();
        let f_got = problem.objective(got.as_slice());
        let (lattice, f_lattice) =
            brute_force_simplex_min(|v| problem.objective(v), m, 1e-3).unwrap();
        assert!(
            f_got <= f_lattice + 1e-12,
            "solver above lattice: {f_got} vs {f_lattice}"
        );
        let gap = f_lattice - f_got;
        assert!(gap <= 1e-5, "gap {gap}");
        let mu = eta * smallest_eigenvalue(&metric);
        let bound = (2.0 * gap.max(0.0) / mu).sqrt() + 1e-9;
        assert!(euclid(got.as_slice(), &lattice) <= bound.max(2e-3));
    }
}

#[test]
fn olu_step_agrees_with_lattice_search() {
    let mut rng = rng(12);
    for _ in 0..40 {
        let n = rng.random_range(2..=3);
        // The l1 kink sits at b0; keep it on the lattice so the search can reach it.
        let b0 = random_lattice_portfolio(&mut rng, n, 1000);
        let x = random_vector(&mut rng, n);
        let eta = rng.random::<f64>();
        let lambda = 0.1 * rng.random::<f64>();
        let got = solve_olu_step(&x, &b0, eta, lambda).unwrap();
        let f = |b: &[f64]| olu_objective(&x, b0.as_slice(), eta, lambda, b);
        let (lattice, f_lattice) = brute_force_simplex_min(f, n, 1e-3).unwrap();
        let f_got = f(got.as_slice());
        assert!(f_got <= f_lattice + 1e-12);
        let gap = f_lattice - f_got;
        assert!(gap <= 1e-5, "gap {gap}");
        let dist = euclid(got.as_slice(), &lattice);
        assert!(
            dist <= (2.0 * gap.max(0.0)).sqrt() + 1e-9,
            "dist {dist} gap {gap} {:?} {:?}",
            got,
            lattice
        );
    }
}

#[test]
fn euclidean_metric_without_regulariser_is_a_projection() {
    let mut rng = rng(13);
    for _ in 0..100 {
        let m = rng.random_range(2..=6);
        let w = random_allocation(&mut rng, m);
        let grad: Vec<f64> = (0..m).map(|_| 3.0 * rng.random::<f64>() - 2.0).collect();
        let c = 0.1 + 5.0 * rng.random::<f64>();
        let eta = 0.2 + rng.random::<f64>();
        let metric = CurvatureMatrix::scaled_identity(m, c).unwrap();
        let got = solve_cape_step(&CapeStepProblem {
            grad: &grad,
            w_current: &w,
            metric: &metric,
            eta,
            lambda: 0.0,
        })
        .unwrap();
        let target: Vec<f64> = w
            .as_slice()
            .iter()
            .zip(&grad)
            .map(|(wi, g)| wi - g / (eta * c))
            .collect();
        let expected = project_to_simplex(&target);
        assert!(euclid(got.as_slice(), expected.as_slice()) <= 1e-9);
    }
}

#[test]
fn best_fixed_allocation_agrees_with_lattice_search() {
    let mut rng = rng(14);
    for _ in 0..5 {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| random_vector(&mut rng, 3).as_slice().to_vec())
            .collect();
        let lambda = 0.01 * rng.random::<f64>();
        let got = best_fixed_allocation(&rows, lambda, None).unwrap();
        let f = |w: &[f64]| -> f64 {
            rows.iter()
                .map(|r| {
                    -r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().ln() + lambda * (w[0] + w[1])
                })
                .sum()
        };
        let (lattice, f_lattice) = brute_force_simplex_min(f, 3, 1e-3).unwrap();
        assert!((f(&got.point) - got.value).abs() <= 1e-9);
        assert!(got.value <= f_lattice + 1e-10);
        assert!(
            euclid(&got.point, &lattice) <= 2e-3,
            "{:?} vs {:?}",
            got.point,
            lattice
        );
    }
}

#[test]
fn identical_histories_share_the_minimiser() {
    let row = vec![1.3, 0.9, 1.05];
    let once = best_fixed_allocation(&[row.clone()], 0.0, None).unwrap();
    let many = best_fixed_allocation(&vec![row; 7], 0.0, None).unwrap();
    assert!(euclid(&once.point, &[1.0, 0.0, 0.0]) <= 1e-9);
    assert!(euclid(&once.point, &many.point) <= 1e-9);
}

#[test]
fn bcrp_agrees_with_lattice_search() {
    let mut rng = rng(15);
    for _ in 0..5 {
        let market = random_market(&mut rng, 3, 30);
        let b = bcrp(&market).unwrap();
        let log_wealth = |w: &[f64]| -> f64 { -market.iter().map(|x| x.dot(w).ln()).sum::<f64>() };
        let (_, f_lattice) = brute_force_simplex_min(log_wealth, 3, 1e-3).unwrap();
        assert!(log_wealth(b.as_slice()) <= f_lattice + 1e-10);
    }
}

#[test]
fn bcrp_on_a_single_day_picks_the_best_stock() {
    let market = MarketSequence::from_rows("one", vec![vec![0.9, 1.4, 1.1]]).unwrap();
    let b = bcrp(&market).unwrap();
    assert!(euclid(b.as_slice(), &[0.0, 1.0, 0.0]) <= 1e-9);
}

/// Loss recomputed from scratch for any point of `R^m`.
fn raw_loss(p: &[Vec<f64>], x: &[f64], w: &[f64]) -> f64 {
    let gross: f64 = p
        .iter()
        .zip(w)
        .map(|(col, wj)| wj * col.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>())
        .sum();
    -gross.ln()
}

#[test]
fn loss_gradient_matches_central_differences() {
    let mut rng = rng(16);
    for _ in 0..100 {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(2..=6);
        let p_plus = random_p_plus(&mut rng, d, n);
        let x = random_vector(&mut rng, n);
        let w = random_allocation(&mut rng, d + 1);
        let cols: Vec<Vec<f64>> = p_plus
            .columns()
            .iter()
            .map(|c| c.as_slice().to_vec())
            .collect();
        assert!(
            (loss(&w, &x, &p_plus).unwrap() - raw_loss(&cols, x.as_slice(), w.as_slice())).abs()
                <= 1e-14
        );

        let g = loss_gradient(&w, &x, &p_plus).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..=d)
            .map(|i| {
                let mut up = w.as_slice().to_vec();
                let mut dn = up.clone();
                up[i] += h;
                dn[i] -= h;
                (raw_loss(&cols, x.as_slice(), &up) - raw_loss(&cols, x.as_slice(), &dn))
                    / (2.0 * h)
            })
            .collect();
        let err = euclid(&g, &fd) / euclid(&g, &vec![0.0; g.len()]);
        assert!(err <= 1e-5, "relative error {err}");
    }
}

#[test]
fn loss_directional_derivative_on_the_simplex() {
    let mut rng = rng(17);
    for _ in 0..50 {
        let d = rng.random_range(1..=4);
        let n = rng.random_range(2..=5);
        let p_plus = random_p_plus(&mut rng, d, n);
        let x = random_vector(&mut rng, n);
        let mut w = random_simplex(&mut rng, d + 1);
        w.iter_mut()
            .for_each(|v| *v = 0.5 * *v + 0.5 / (d + 1) as f64);
        let (i, j) = (0, d);
        let h = 1e-6;
        let shifted = |s: f64| {
            let mut v = w.clone();
            v[i] += s;
            v[j] -= s;
            AllocationVector::new(v).unwrap()
        };
        let fd = (loss(&shifted(h), &x, &p_plus).unwrap()
            - loss(&shifted(-h), &x, &p_plus).unwrap())
            / (2.0 * h);
        let g = loss_gradient(&AllocationVector::new(w.clone()).unwrap(), &x, &p_plus).unwrap();
        let exact = g[i] - g[j];
        assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }
}
