#![allow(dead_code)]

use cape_core::accounting::Portfolio;
use cape_core::cape::{AllocationVector, AugmentedPortfolioMatrix};
use cape_core::market_data::{MarketSequence, MarketVector};
use cape_core::solver::CurvatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random simplex point; with probability 1/4 some coordinates are zeroed.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let sparse = rng.random_bool(0.25);
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.random_bool(0.4) {
                0.0
            } else {
                -rng.random::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

pub fn random_portfolio(rng: &mut ChaCha8Rng, n: usize) -> Portfolio {
    Portfolio::new(random_simplex(rng, n)).unwrap()
}

pub fn random_allocation(rng: &mut ChaCha8Rng, m: usize) -> AllocationVector {
    AllocationVector::new(random_simplex(rng, m)).unwrap()
}

/// Relative prices in roughly [0.5, 2].
pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> MarketVector {
    MarketVector::new(
        (0..n)
            .map(|_| (rng.random::<f64>() * 1.4 - 0.7).exp())
            .collect(),
    )
    .unwrap()
}

pub fn random_market(rng: &mut ChaCha8Rng, n: usize, t: usize) -> MarketSequence {
    MarketSequence::from_vectors("random", (0..t).map(|_| random_vector(rng, n)).collect()).unwrap()
}

pub fn random_decisions(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Vec<Portfolio> {
    (0..t).map(|_| random_portfolio(rng, n)).collect()
}

pub fn random_p_plus(rng: &mut ChaCha8Rng, d: usize, n: usize) -> AugmentedPortfolioMatrix {
    let base = (0..d).map(|_| random_portfolio(rng, n)).collect();
    AugmentedPortfolioMatrix::new(base, random_portfolio(rng, n)).unwrap()
}

/// `eps I` plus up to three outer products of loss-gradient-sized vectors.
pub fn random_metric(rng: &mut ChaCha8Rng, m: usize) -> CurvatureMatrix {
    let mut a = CurvatureMatrix::scaled_identity(m, 0.5 + rng.random::<f64>()).unwrap();
    for _ in 0..rng.random_range(0..=3) {
        let g: Vec<f64> = (0..m).map(|_| -(0.3 + 1.2 * rng.random::<f64>())).collect();
        a.add_outer(&g).unwrap();
    }
    a
}

/// Cumulative wealth as the plain product of `<b_t, x_t>`.
pub fn product_of_returns(decisions: &[Portfolio], market: &MarketSequence) -> f64 {
    decisions
        .iter()
        .zip(market.iter())
        .map(|(b, x)| {
            b.as_slice()
                .iter()
                .zip(x.as_slice())
                .map(|(p, r)| p * r)
                .sum::<f64>()
        })
        .product()
}

pub fn dense(a: &CurvatureMatrix) -> Vec<Vec<f64>> {
    a.to_rows()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn smallest_eigenvalue(a: &CurvatureMatrix) -> f64 {
    a.eigenvalues()[0]
}

/// Random simplex point on the lattice `{k / steps}`.
pub fn random_lattice_portfolio(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> Portfolio {
    let w = random_simplex(rng, n);
    let mut counts: Vec<usize> = w
        .iter()
        .map(|v| (v * steps as f64).floor() as usize)
        .collect();
    let missing = steps - counts.iter().sum::<usize>();
    let i = rng.random_range(0..n);
    counts[i] += missing;
    Portfolio::new(counts.iter().map(|&c| c as f64 / steps as f64).collect()).unwrap()
}
