//! Constrained minimisation on the probability simplex.
//!
//! - [`solve_simplex_qp`]: exact primal active-set method for strictly convex
//!   quadratics; backs the ensemble step and the Newton iterations below.
//! - [`solve_cape_step`]: linearised loss + linear hold penalty + quadratic
//!   Bregman term under the accumulated curvature matrix.
//! - [`solve_olu_step`]: log-loss with a genuine `l1` lazy-update penalty,
//!   solved by proximal gradient with an exact simplex-`l1` prox.
//! - [`minimize_log_loss`]: `-sum log <c_t, w> + <linear, w>` (BCRP and the
//!   best fixed allocation in hindsight).
//! - [`brute_force_simplex_min`]: lattice enumeration, used as a test oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accounting::{check_dim, project_simplex_vec, Portfolio};
use crate::cape::AllocationVector;
use crate::error::{Error, Result};
use crate::market_data::MarketVector;

const MAX_ITERATIONS: usize = 10_000;
const MAX_NEWTON_ITERATIONS: usize = 200;

/// Symmetric positive-definite metric `A_t = eps I + sum_s g_s g_s^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMatrix {
    a: DMatrix<f64>,
}

impl CurvatureMatrix {
    pub fn scaled_identity(order: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            a: DMatrix::identity(order, order) * epsilon,
        })
    }

    /// Builds from dense rows, checking symmetry and positive definiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        for row in rows {
            check_dim(m, row.len())?;
        }
        let a = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        let scale = a.amax().max(1.0);
        for i in 0..m {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(
                        "curvature matrix is not symmetric".into(),
                    ));
                }
            }
        }
        if a.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { a })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.order())
            .map(|i| self.a.row(i).iter().copied().collect())
            .collect()
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Rank-one update `A += g g^T`.
    pub fn add_outer(&mut self, g: &[f64]) -> Result<()> {
        check_dim(self.order(), g.len())?;
        let v = DVector::from_column_slice(g);
        self.a.ger(1.0, &v, &v, 1.0);
        Ok(())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .a
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        v.dot(&(&self.a * &v))
    }
}

impl Serialize for CurvatureMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CurvatureMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        CurvatureMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Minimises `0.5 w^T H w + c^T w` over the probability simplex.
///
/// Primal active-set method started from the feasible point `start`. `H` must
/// be positive definite; the result satisfies the KKT conditions up to rounding.
pub fn solve_simplex_qp(h: &DMatrix<f64>, c: &[f64], start: &[f64]) -> Result<Vec<f64>> {
    let m = c.len();
    check_dim(m, h.nrows())?;
    check_dim(m, h.ncols())?;
    check_dim(m, start.len())?;
    if m == 1 {
        return Ok(vec![1.0]);
    }

    let mut w = if start.iter().all(|x| *x >= 0.0) && (start.iter().sum::<f64>() - 1.0).abs() < 1e-9
    {
        start.to_vec()
    } else {
        project_simplex_vec(start)
    };
    let mut active: Vec<bool> = w.iter().map(|&x| x <= 0.0).collect();
    for (wi, &a) in w.iter_mut().zip(&active) {
        if a {
            *wi = 0.0;
        }
    }

    let scale = h
        .amax()
        .max(c.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())))
        .max(1.0);
    let dual_tol = 1e-13 * scale;
    let feas_tol = 1e-14;
    let cap = 50 * m + 100;

    for _ in 0..cap {
        let free: Vec<usize> = (0..m).filter(|&i| !active[i]).collect();
        let k = free.len();
        let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut rhs = DVector::<f64>::zeros(k + 1);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = h[(i, j)];
            }
            kkt[(a, k)] = -1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = -c[i];
        }
        rhs[k] = 1.0;
        let sol = kkt.lu().solve(&rhs).ok_or(Error::NotPositiveDefinite)?;
        if sol.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let mu = sol[k];

        let mut blocking: Option<(usize, f64)> = None;
        for (a, &i) in free.iter().enumerate() {
            let target = sol[a];
            if target < -feas_tol {
                let alpha = w[i] / (w[i] - target);
                if blocking.is_none_or(|(_, best)| alpha < best) {
                    blocking = Some((i, alpha));
                }
            }
        }

        match blocking {
            None => {
                for (a, &i) in free.iter().enumerate() {
                    w[i] = sol[a].max(0.0);
                }
                normalize(&mut w);
                let grad = qp_gradient(h, c, &w);
                let release = (0..m)
                    .filter(|&i| active[i])
                    .map(|i| (i, grad[i] - mu))
                    .filter(|&(_, nu)| nu < -dual_tol)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match release {
                    None => return Ok(w),
                    Some((i, _)) => active[i] = false,
                }
            }
            Some((idx, alpha)) => {
                for (a, &i) in free.iter().enumerate() {
                    w[i] += alpha * (sol[a] - w[i]);
                    if w[i] < 0.0 {
                        w[i] = 0.0;
                    }
                }
                w[idx] = 0.0;
                active[idx] = true;
                normalize(&mut w);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cap,
        gap: f64::NAN,
    })
}

fn qp_gradient(h: &DMatrix<f64>, c: &[f64], w: &[f64]) -> Vec<f64> {
    let m = c.len();
    (0..m)
        .map(|i| c[i] + (0..m).map(|j| h[(i, j)] * w[j]).sum::<f64>())
        .collect()
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    if s > 0.0 && s != 1.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
}

/// Norm of `w - P(w - grad)`, zero exactly at a stationary point of a smooth
/// function over the simplex.
pub fn projected_gradient_residual(w: &[f64], grad: &[f64]) -> f64 {
    let stepped: Vec<f64> = w.iter().zip(grad).map(|(a, g)| a - g).collect();
    let projected = project_simplex_vec(&stepped);
    w.iter()
        .zip(&projected)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// The per-round ensemble update:
///
/// `min_w <grad, w - w0> + lambda * sum_{i<d} w_i + eta/2 (w - w0)^T A (w - w0)`
///
/// over the `(d+1)`-simplex. On the simplex the `l1` regulariser of the first
/// `d` coordinates is linear, so the problem is a smooth convex QP.
#[derive(Debug, Clone)]
pub struct CapeStepProblem<'a> {
    pub grad: &'a [f64],
    pub w_current: &'a AllocationVector,
    pub metric: &'a CurvatureMatrix,
    pub eta: f64,
    pub lambda: f64,
}

impl CapeStepProblem<'_> {
    fn validate(&self) -> Result<()> {
        let m = self.w_current.len();
        check_dim(m, self.grad.len())?;
        check_dim(m, self.metric.order())?;
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("gradient is not finite".into()));
        }
        Ok(())
    }

    /// Composite objective at `w`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let w0 = self.w_current.as_slice();
        let diff: Vec<f64> = w.iter().zip(w0).map(|(a, b)| a - b).collect();
        let linear: f64 = self.grad.iter().zip(&diff).map(|(g, d)| g * d).sum();
        let penalty: f64 = w[..w.len() - 1].iter().sum();
        linear + self.lambda * penalty + 0.5 * self.eta * self.metric.quad_form(&diff)
    }

    /// Gradient of [`objective`](Self::objective) at `w`.
    pub fn objective_gradient(&self, w: &[f64]) -> Vec<f64> {
        let w0 = self.w_current.as_slice();
        let m = w.len();
        let a = self.metric.matrix();
        (0..m)
            .map(|i| {
                let quad: f64 = (0..m).map(|j| a[(i, j)] * (w[j] - w0[j])).sum();
                let reg = if i + 1 < m { self.lambda } else { 0.0 };
                self.grad[i] + reg + self.eta * quad
            })
            .collect()
    }
}

pub fn solve_cape_step(problem: &CapeStepProblem<'_>) -> Result<AllocationVector> {
    problem.validate()?;
    let a = problem.metric.matrix();
    if a.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let m = problem.w_current.len();
    let w0 = problem.w_current.as_slice();
    let h = a * problem.eta;
    let c: Vec<f64> = (0..m)
        .map(|i| {
            let hw0: f64 = (0..m).map(|j| h[(i, j)] * w0[j]).sum();
            let reg = if i + 1 < m { problem.lambda } else { 0.0 };
            problem.grad[i] + reg - hw0
        })
        .collect();
    let w = solve_simplex_qp(&h, &c, w0)?;
    AllocationVector::new(w)
}

/// Objective of the lazy-update step:
/// `-eta log <b, x> + 0.5 ||b - b0||^2 + lambda ||b - b0||_1`.
pub fn olu_objective(x: &MarketVector, b_current: &[f64], eta: f64, lambda: f64, b: &[f64]) -> f64 {
    let gross = x.dot(b);
    let log_term = if eta == 0.0 {
        0.0
    } else if gross > 0.0 {
        -eta * gross.ln()
    } else {
        f64::INFINITY
    };
    let (sq, abs) = b
        .iter()
        .zip(b_current)
        .fold((0.0, 0.0), |(sq, abs), (bi, ci)| {
            (sq + (bi - ci) * (bi - ci), abs + (bi - ci).abs())
        });
    log_term + 0.5 * sq + lambda * abs
}

/// Minimises [`olu_objective`] over the simplex.
pub fn solve_olu_step(
    x_prev: &MarketVector,
    b_current: &Portfolio,
    eta: f64,
    lambda: f64,
) -> Result<Portfolio> {
    check_dim(b_current.len(), x_prev.len())?;
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "eta must be non-negative, got {eta}"
        )));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let b0 = b_current.as_slice();
    if eta == 0.0 {
        return Ok(b_current.clone());
    }
    let xs = x_prev.as_slice();
    let smooth = |b: &[f64]| -> f64 {
        let gross = x_prev.dot(b);
        if gross <= 0.0 {
            return f64::INFINITY;
        }
        -eta * gross.ln()
            + 0.5
                * b.iter()
                    .zip(b0)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
    };

    let mut b = if x_prev.dot(b0) > 0.0 {
        b0.to_vec()
    } else {
        let best = xs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Portfolio::vertex(b0.len(), best).into_inner()
    };

    let smooth_grad = |b: &[f64]| -> Vec<f64> {
        let gross = x_prev.dot(b);
        xs.iter()
            .zip(b)
            .zip(b0)
            .map(|((xi, bi), ci)| -eta * xi / gross + (bi - ci))
            .collect()
    };

    let mut step = 1.0;
    let mut mapping_norm = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let f_b = smooth(&b);
        let grad = smooth_grad(&b);
        let candidate = loop {
            let v: Vec<f64> = b.iter().zip(&grad).map(|(bi, gi)| bi - step * gi).collect();
            let cand = prox_simplex_l1(&v, b0, step * lambda);
            let f_c = smooth(&cand);
            let diff_sq: f64 = cand.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
            let lin: f64 = grad
                .iter()
                .zip(cand.iter().zip(&b))
                .map(|(g, (p, q))| g * (p - q))
                .sum();
            let sufficient = f_c.is_finite()
                && f_c <= f_b + lin + diff_sq / (2.0 * step) + 1e-15 * f_b.abs().max(1.0);
            let curvature = sufficient && {
                let grad_c = smooth_grad(&cand);
                let bend: f64 = grad_c
                    .iter()
                    .zip(&grad)
                    .zip(cand.iter().zip(&b))
                    .map(|((gc, gb), (p, q))| (gc - gb) * (p - q))
                    .sum();
                bend <= diff_sq / step
            };
            if curvature {
                break cand;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    gap: mapping_norm,
                });
            }
        };
        mapping_norm = candidate
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
            / step;
        b = candidate;
        if mapping_norm < 1e-11 {
            return Portfolio::new(b);
        }
        step = (step * 1.5).min(1e6);
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        gap: 0.5 * mapping_norm * mapping_norm,
    })
}

/// `argmin_{b in simplex} 0.5 ||b - v||^2 + tau ||b - b0||_1`.
///
/// Separable for a fixed multiplier `mu` of the sum constraint; `mu` is located
/// by bisection and then refined on the final linear piece.
pub(crate) fn prox_simplex_l1(v: &[f64], b0: &[f64], tau: f64) -> Vec<f64> {
    let coord = |vi: f64, ci: f64, mu: f64| -> (f64, bool) {
        let u = vi + mu;
        let z = if u > ci + tau {
            u - tau
        } else if u < ci - tau {
            u + tau
        } else {
            return (ci.max(0.0), false);
        };
        if z > 0.0 {
            (z, true)
        } else {
            (0.0, false)
        }
    };
    let total = |mu: f64| -> f64 { v.iter().zip(b0).map(|(&vi, &ci)| coord(vi, ci, mu).0).sum() };

    let vmax = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let vmin = v.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mut lo = -vmax - tau - 1.0;
    let mut hi = 1.0 - vmin + tau + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut mu = 0.5 * (lo + hi);
    let s = total(mu);
    let slope = v
        .iter()
        .zip(b0)
        .filter(|(&vi, &ci)| coord(vi, ci, mu).1)
        .count();
    if slope > 0 {
        mu += (1.0 - s) / slope as f64;
    }
    v.iter()
        .zip(b0)
        .map(|(&vi, &ci)| coord(vi, ci, mu).0)
        .collect()
}

/// Result of [`minimize_log_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogLossMinimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Frank-Wolfe duality gap at `point`; an upper bound on suboptimality.
    pub gap: f64,
}

/// Minimises `F(w) = -sum_t log <c_t, w> + <linear, w>` over the simplex.
///
/// Damped Newton iterations whose direction is the exact simplex-constrained
/// minimiser of the local quadratic model, with Armijo backtracking. Stops on
/// the Frank-Wolfe gap `<grad, w> - min_i grad_i`, which bounds `F(w) - F*`.
pub fn minimize_log_loss(
    rows: &[Vec<f64>],
    linear: &[f64],
    start: Option<&[f64]>,
) -> Result<LogLossMinimum> {
    let m = linear.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty decision space".into()));
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no loss terms".into()));
    }
    for r in rows {
        check_dim(m, r.len())?;
        if r.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(
                "loss coefficients must be finite and non-negative".into(),
            ));
        }
    }

    let value = |w: &[f64]| -> f64 {
        let mut total: f64 = linear.iter().zip(w).map(|(l, x)| l * x).sum();
        for r in rows {
            let g: f64 = r.iter().zip(w).map(|(c, x)| c * x).sum();
            if g <= 0.0 {
                return f64::INFINITY;
            }
            total -= g.ln();
        }
        total
    };

    let uniform = vec![1.0 / m as f64; m];
    let mut w = match start {
        Some(s) if s.len() == m => project_simplex_vec(s),
        _ => uniform.clone(),
    };
    if !value(&w).is_finite() {
        w = uniform;
        if !value(&w).is_finite() {
            return Err(Error::Bankrupt);
        }
    }

    let tol = 1e-12 * (rows.len() as f64).max(1.0);
    let mut gap = f64::INFINITY;
    let mut f_w = value(&w);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let mut grad = linear.to_vec();
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for r in rows {
            let g: f64 = r.iter().zip(&w).map(|(c, x)| c * x).sum();
            let v = DVector::from_iterator(m, r.iter().map(|c| c / g));
            for (gi, vi) in grad.iter_mut().zip(v.iter()) {
                *gi -= vi;
            }
            hess.ger(1.0, &v, &v, 1.0);
        }
        gap = frank_wolfe_gap(&w, &grad);
        if gap <= tol {
            break;
        }
        let damping = 1e-12 * (hess.trace() / m as f64).max(1e-12);
        for i in 0..m {
            hess[(i, i)] += damping;
        }
        let c: Vec<f64> = (0..m)
            .map(|i| grad[i] - (0..m).map(|j| hess[(i, j)] * w[j]).sum::<f64>())
            .collect();
        let target = solve_simplex_qp(&hess, &c, &w)?;
        let dir: Vec<f64> = target.iter().zip(&w).map(|(a, b)| a - b).collect();
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if slope >= 0.0 {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-16 {
            let trial: Vec<f64> = w
                .iter()
                .zip(&dir)
                .map(|(a, d)| (a + alpha * d).max(0.0))
                .collect();
            let f_trial = value(&trial);
            if f_trial <= f_w + 1e-4 * alpha * slope {
                w = trial;
                normalize(&mut w);
                f_w = value(&w);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if gap > 1e-7 * (rows.len() as f64).max(1.0) {
        return Err(Error::NonConvergence {
            iterations: MAX_NEWTON_ITERATIONS,
            gap,
        });
    }
    Ok(LogLossMinimum {
        value: value(&w),
        point: w,
        gap,
    })
}

fn frank_wolfe_gap(w: &[f64], grad: &[f64]) -> f64 {
    let inner: f64 = w.iter().zip(grad).map(|(a, g)| a * g).sum();
    let min = grad.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    (inner - min).max(0.0)
}

/// Best fixed allocation in hindsight for the composite ensemble loss
/// `sum_t [-log <c_t, w> + lambda * sum_{i<d} w_i]`, `c_t = P_t^T x_t`.
///
/// The hold penalty is charged every round, matching the per-round composite
/// loss the online learner suffers.
pub fn best_fixed_allocation(
    coefficients: &[Vec<f64>],
    lambda: f64,
    start: Option<&[f64]>,
) -> Result<LogLossMinimum> {
    let m = coefficients
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("empty loss history".into()))?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let per_round = lambda * coefficients.len() as f64;
    let mut linear = vec![per_round; m];
    linear[m - 1] = 0.0;
    minimize_log_loss(coefficients, &linear, start)
}

/// Exhaustive search over the simplex lattice `{k / N}` with `N = round(1 / resolution)`.
pub fn brute_force_simplex_min<F>(
    objective: F,
    m: usize,
    resolution: f64,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if m == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if m > 4 {
        return Err(Error::DimensionTooLarge(m));
    }
    if !(resolution.is_finite() && (1e-3 - 1e-15..=1.0).contains(&resolution)) {
        return Err(Error::InvalidInput(format!(
            "resolution {resolution} outside [1e-3, 1]"
        )));
    }
    let steps = (1.0 / resolution).round() as usize;
    let mut counts = vec![0usize; m];
    let mut point = vec![0.0; m];
    let mut best = (vec![0.0; m], f64::INFINITY);

    fn recurse<F: Fn(&[f64]) -> f64>(
        idx: usize,
        remaining: usize,
        steps: usize,
        counts: &mut [usize],
        point: &mut [f64],
        objective: &F,
        best: &mut (Vec<f64>, f64),
    ) {
        let m = counts.len();
        if idx == m - 1 {
            counts[idx] = remaining;
            for (p, &c) in point.iter_mut().zip(counts.iter()) {
                *p = c as f64 / steps as f64;
            }
            let value = objective(point);
            if value < best.1 {
                best.0.copy_from_slice(point);
                best.1 = value;
            }
            return;
        }
        for k in 0..=remaining {
            counts[idx] = k;
            recurse(
                idx + 1,
                remaining - k,
                steps,
                counts,
                point,
                objective,
                best,
            );
        }
    }

    recurse(
        0,
        steps,
        steps,
        &mut counts,
        &mut point,
        &objective,
        &mut best,
    );
    if !best.1.is_finite() {
        return Err(Error::InvalidInput(
            "objective is not finite anywhere on the lattice".into(),
        ));
    }
    Ok(best)
}
