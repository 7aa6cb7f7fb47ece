//! Commission-avoiding portfolio ensemble.
//!
//! The ensemble mixes `d` base strategies plus one artificial expert whose
//! recommendation is always the current drifted holdings `b̂`. Putting weight on
//! that last column means "keep what you have", which costs no commission.
//!
//! Each round:
//! 1. play the stock portfolio `P⁺_t w_t` and suffer `g_t(w) = -log <x_t, P⁺_t w>`;
//! 2. drift the holdings to `b̂_t` and build `P⁺_{t+1}` from the base strategies'
//!    next portfolios with `b̂_t` as the last column;
//! 3. `A_t = A_{t-1} + ∇g_t ∇g_tᵀ`;
//! 4. `w_{t+1} = argmin_w <∇g_t, w - w_t> + λ R(w) + η/2 ||w - w_t||²_{A_t}`,
//!    where `R(w)` is the total weight on the base strategies.

use serde::{Deserialize, Serialize};

use crate::accounting::{check_dim, drift, Portfolio};
use crate::error::{Error, Result};
use crate::market_data::MarketVector;
use crate::solver::{best_fixed_allocation, solve_cape_step, CapeStepProblem, CurvatureMatrix};

const CLAMP_TOL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-9;

/// Weights over the `d` base strategies and the artificial hold expert (last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AllocationVector(Vec<f64>);

impl AllocationVector {
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidInput(
                "allocation needs at least one base strategy and the hold expert".into(),
            ));
        }
        for w in weights.iter_mut() {
            if !w.is_finite() || *w < -CLAMP_TOL {
                return Err(Error::InvalidInput(format!(
                    "invalid allocation weight {w}"
                )));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "allocation sums to {sum}, not 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m >= 2);
        Self(vec![1.0 / m as f64; m])
    }

    /// All weight on the hold expert.
    pub fn hold(m: usize) -> Self {
        assert!(m >= 2);
        let mut w = vec![0.0; m];
        w[m - 1] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of base strategies.
    pub fn d(&self) -> usize {
        self.0.len() - 1
    }

    pub fn hold_weight(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for AllocationVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        AllocationVector::new(v)
    }
}

impl From<AllocationVector> for Vec<f64> {
    fn from(a: AllocationVector) -> Self {
        a.0
    }
}

impl std::ops::Index<usize> for AllocationVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `n x (d+1)` matrix of stock portfolios, stored column-wise. The last column
/// is the artificial expert (the drifted holdings of the previous round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AugmentedPortfolioMatrix {
    columns: Vec<Portfolio>,
}

impl AugmentedPortfolioMatrix {
    pub fn new(base: Vec<Portfolio>, hold: Portfolio) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::InvalidInput(
                "at least one base strategy is required".into(),
            ));
        }
        let n = hold.len();
        for col in &base {
            check_dim(n, col.len())?;
        }
        let mut columns = base;
        columns.push(hold);
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[Portfolio] {
        &self.columns
    }

    pub fn hold_column(&self) -> &Portfolio {
        &self.columns[self.columns.len() - 1]
    }

    /// Number of stocks.
    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    /// Number of columns, `d + 1`.
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// `P⁺ᵀ x`: the gross return of every column.
    pub fn column_returns(&self, x: &MarketVector) -> Result<Vec<f64>> {
        check_dim(self.n(), x.len())?;
        Ok(self.columns.iter().map(|c| x.dot(c.as_slice())).collect())
    }
}

/// The stock portfolio `P⁺ w` induced by an allocation.
pub fn stock_portfolio(
    p_plus: &AugmentedPortfolioMatrix,
    w: &AllocationVector,
) -> Result<Portfolio> {
    check_dim(p_plus.m(), w.len())?;
    let mut out = vec![0.0; p_plus.n()];
    for (col, &wj) in p_plus.columns.iter().zip(w.as_slice()) {
        if wj == 0.0 {
            continue;
        }
        for (o, c) in out.iter_mut().zip(col.as_slice()) {
            *o += wj * c;
        }
    }
    Portfolio::new(out)
}

/// `g(w) = -log <x, P⁺ w>`.
pub fn loss(
    w: &AllocationVector,
    x: &MarketVector,
    p_plus: &AugmentedPortfolioMatrix,
) -> Result<f64> {
    let gross = stock_portfolio(p_plus, w)?.gross_return(x)?;
    if gross <= 0.0 {
        return Err(Error::Bankrupt);
    }
    Ok(-gross.ln())
}

/// `∇g(w) = -P⁺ᵀ x / <x, P⁺ w>`.
pub fn loss_gradient(
    w: &AllocationVector,
    x: &MarketVector,
    p_plus: &AugmentedPortfolioMatrix,
) -> Result<Vec<f64>> {
    let returns = p_plus.column_returns(x)?;
    check_dim(returns.len(), w.len())?;
    let gross: f64 = returns.iter().zip(w.as_slice()).map(|(r, wj)| r * wj).sum();
    if gross <= 0.0 {
        return Err(Error::Bankrupt);
    }
    Ok(returns.iter().map(|r| -r / gross).collect())
}

/// Total weight on the base strategies, `1 - w_{d+1}`.
pub fn regularizer(w: &AllocationVector) -> f64 {
    w.as_slice()[..w.d()].iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapeConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

impl Default for CapeConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            epsilon: 1.0,
            lambda: 0.005,
        }
    }
}

impl CapeConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Everything the ensemble carries between rounds. Serialises to a JSON
/// checkpoint (`round`, `w`, row-major `a`, `p_plus` as a list of columns, `b_hat`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    /// 1-based index of the round about to be played.
    pub round: usize,
    pub w: AllocationVector,
    pub a: CurvatureMatrix,
    pub p_plus: AugmentedPortfolioMatrix,
    pub b_hat: Portfolio,
    pub config: CapeConfig,
}

/// What happened in one call to [`EnsembleState::advance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: usize,
    /// Allocation played this round.
    pub w: AllocationVector,
    /// Stock portfolio played this round.
    pub played: Portfolio,
    pub gross_return: f64,
    pub loss: f64,
    pub regularizer: f64,
    pub gradient: Vec<f64>,
    /// `P⁺ᵀ x`, enough to re-evaluate this round's loss at any allocation.
    pub column_returns: Vec<f64>,
}

impl EnsembleState {
    /// Uniform allocation, `A_0 = epsilon I`, all columns (including the hold
    /// expert) set to the uniform stock portfolio.
    pub fn init(d: usize, n: usize, config: CapeConfig) -> Result<Self> {
        if d < 1 || n < 1 {
            return Err(Error::InvalidInput(
                "need d >= 1 base strategies and n >= 1 stocks".into(),
            ));
        }
        config.validate()?;
        let uniform = Portfolio::uniform(n);
        Ok(Self {
            round: 1,
            w: AllocationVector::uniform(d + 1),
            a: CurvatureMatrix::scaled_identity(d + 1, config.epsilon)?,
            p_plus: AugmentedPortfolioMatrix::new(vec![uniform.clone(); d], uniform.clone())?,
            b_hat: uniform,
            config,
        })
    }

    /// Replaces the base columns of the current matrix (the hold column is kept).
    pub fn with_base_portfolios(mut self, base: &[Portfolio]) -> Result<Self> {
        check_dim(self.d(), base.len())?;
        self.p_plus =
            AugmentedPortfolioMatrix::new(base.to_vec(), self.p_plus.hold_column().clone())?;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.w.d()
    }

    pub fn n(&self) -> usize {
        self.p_plus.n()
    }

    /// The stock portfolio this state will play.
    pub fn current_portfolio(&self) -> Result<Portfolio> {
        stock_portfolio(&self.p_plus, &self.w)
    }

    /// Plays the current allocation against `x`, then moves to the next round
    /// with `next_base` as the base strategies' portfolios. The state is left
    /// untouched on error.
    pub fn advance(&mut self, x: &MarketVector, next_base: &[Portfolio]) -> Result<RoundOutcome> {
        check_dim(self.d(), next_base.len())?;
        let played = self.current_portfolio()?;
        let gross = played.gross_return(x)?;
        if gross <= 0.0 {
            return Err(Error::Bankrupt);
        }
        let column_returns = self.p_plus.column_returns(x)?;
        let gradient: Vec<f64> = column_returns.iter().map(|r| -r / gross).collect();
        let b_hat = drift(&played, x)?;

        let mut a = self.a.clone();
        a.add_outer(&gradient)?;
        let w_next = solve_cape_step(&CapeStepProblem {
            grad: &gradient,
            w_current: &self.w,
            metric: &a,
            eta: self.config.eta,
            lambda: self.config.lambda,
        })?;
        let p_plus = AugmentedPortfolioMatrix::new(next_base.to_vec(), b_hat.clone())?;

        let outcome = RoundOutcome {
            round: self.round,
            regularizer: regularizer(&self.w),
            w: std::mem::replace(&mut self.w, w_next),
            played,
            gross_return: gross,
            loss: -gross.ln(),
            gradient,
            column_returns,
        };
        self.a = a;
        self.p_plus = p_plus;
        self.b_hat = b_hat;
        self.round += 1;
        Ok(outcome)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text)?;
        check_dim(state.w.len(), state.a.order())?;
        check_dim(state.w.len(), state.p_plus.m())?;
        check_dim(state.n(), state.b_hat.len())?;
        state.config.validate()?;
        Ok(state)
    }
}

/// One round of the loss log: the loss coefficients `P⁺ᵀ x` and the allocation played.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub column_returns: Vec<f64>,
    pub w: Vec<f64>,
}

impl From<&RoundOutcome> for LossRecord {
    fn from(o: &RoundOutcome) -> Self {
        Self {
            column_returns: o.column_returns.clone(),
            w: o.w.as_slice().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub t: usize,
    pub regret: f64,
    /// `regret / ln t`, absent for `t = 1`.
    pub ratio: Option<f64>,
    pub best_fixed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub lambda: f64,
    pub points: Vec<RegretPoint>,
    /// Least-squares `c` in `regret ≈ c ln t` over points with `t >= 2`.
    pub fitted_log_coefficient: f64,
}

/// Prefix lengths 1, 2, 5, 10, 20, 50, ... below `total`, plus `total` itself.
pub fn default_regret_prefixes(total: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut base = 1usize;
    'outer: loop {
        for k in [1, 2, 5] {
            let t = base * k;
            if t >= total {
                break 'outer;
            }
            out.push(t);
        }
        base *= 10;
    }
    if total > 0 {
        out.push(total);
    }
    out
}

/// Composite regret of the played allocations against the best fixed allocation
/// of every requested prefix.
pub fn regret_trace(log: &[LossRecord], lambda: f64, prefixes: &[usize]) -> Result<RegretTrace> {
    if log.is_empty() {
        return Err(Error::InvalidInput("empty loss log".into()));
    }
    let mut prefixes: Vec<usize> = prefixes
        .iter()
        .copied()
        .filter(|&t| t >= 1 && t <= log.len())
        .collect();
    prefixes.sort_unstable();
    prefixes.dedup();

    let rows: Vec<Vec<f64>> = log.iter().map(|r| r.column_returns.clone()).collect();
    let mut online = Vec::with_capacity(log.len());
    let mut running = 0.0;
    for r in log {
        let gross: f64 = r.column_returns.iter().zip(&r.w).map(|(c, w)| c * w).sum();
        if gross <= 0.0 {
            return Err(Error::Bankrupt);
        }
        let reg: f64 = r.w[..r.w.len() - 1].iter().sum();
        running += -gross.ln() + lambda * reg;
        online.push(running);
    }

    let mut points = Vec::with_capacity(prefixes.len());
    let mut warm: Option<Vec<f64>> = None;
    for &t in &prefixes {
        let best = best_fixed_allocation(&rows[..t], lambda, warm.as_deref())?;
        let regret = online[t - 1] - best.value;
        points.push(RegretPoint {
            t,
            regret,
            ratio: (t >= 2).then(|| regret / (t as f64).ln()),
            best_fixed: best.point.clone(),
        });
        warm = Some(best.point);
    }
    let (num, den) = points
        .iter()
        .filter(|p| p.t >= 2)
        .fold((0.0, 0.0), |(num, den), p| {
            let l = (p.t as f64).ln();
            (num + p.regret * l, den + l * l)
        });
    Ok(RegretTrace {
        lambda,
        points,
        fitted_log_coefficient: if den > 0.0 { num / den } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(w: &[f64]) -> Portfolio {
        Portfolio::new(w.to_vec()).unwrap()
    }

    fn x(r: &[f64]) -> MarketVector {
        MarketVector::new(r.to_vec()).unwrap()
    }

    #[test]
    fn init_examples() {
        let s = EnsembleState::init(4, 3, CapeConfig::default()).unwrap();
        assert_eq!(s.w.as_slice(), &[0.2; 5]);
        assert_eq!(s.b_hat, Portfolio::uniform(3));
        assert_eq!(s.p_plus.hold_column(), &Portfolio::uniform(3));
        let s = EnsembleState::init(1, 2, CapeConfig::default()).unwrap();
        assert_eq!(s.a.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(EnsembleState::init(0, 2, CapeConfig::default()).is_err());
    }

    #[test]
    fn stock_portfolio_examples() {
        let m = AugmentedPortfolioMatrix::new(vec![p(&[1.0, 0.0])], p(&[0.0, 1.0])).unwrap();
        assert_eq!(
            stock_portfolio(&m, &AllocationVector::new(vec![1.0, 0.0]).unwrap()).unwrap(),
            p(&[1.0, 0.0])
        );
        let mixed = stock_portfolio(&m, &AllocationVector::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert_eq!(mixed.as_slice(), &[0.3, 0.7]);
        let b = p(&[0.1, 0.9]);
        let same = AugmentedPortfolioMatrix::new(vec![b.clone(), b.clone()], b.clone()).unwrap();
        let out =
            stock_portfolio(&same, &AllocationVector::new(vec![0.2, 0.3, 0.5]).unwrap()).unwrap();
        for (u, v) in out.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-15);
        }
        assert!(stock_portfolio(&same, &AllocationVector::uniform(2)).is_err());
    }

    #[test]
    fn loss_examples() {
        let m = AugmentedPortfolioMatrix::new(vec![p(&[1.0, 0.0])], p(&[0.0, 1.0])).unwrap();
        let w = AllocationVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(loss(&w, &x(&[1.0, 3.0]), &m).unwrap(), 0.0);
        assert!((loss(&w, &x(&[2.0, 3.0]), &m).unwrap() + 2f64.ln()).abs() < 1e-15);
        assert_eq!(
            loss(&AllocationVector::uniform(2), &x(&[1.0, 1.0]), &m).unwrap(),
            0.0
        );
        assert!(matches!(
            loss(&w, &x(&[0.0, 3.0]), &m),
            Err(Error::Bankrupt)
        ));
    }

    #[test]
    fn gradient_on_flat_market_is_minus_one() {
        let m = AugmentedPortfolioMatrix::new(vec![p(&[0.2, 0.8]), p(&[1.0, 0.0])], p(&[0.5, 0.5]))
            .unwrap();
        let g = loss_gradient(
            &AllocationVector::new(vec![0.1, 0.6, 0.3]).unwrap(),
            &x(&[1.0, 1.0]),
            &m,
        )
        .unwrap();
        for gi in g {
            assert!((gi + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn regularizer_examples() {
        assert_eq!(regularizer(&AllocationVector::hold(4)), 0.0);
        assert_eq!(regularizer(&AllocationVector::uniform(4)), 0.75);
        assert_eq!(
            regularizer(&AllocationVector::new(vec![0.3, 0.2, 0.5]).unwrap()),
            0.5
        );
    }

    #[test]
    fn flat_market_constant_gradient_keeps_allocation() {
        let b = p(&[0.3, 0.3, 0.4]);
        let mut s = EnsembleState::init(3, 3, CapeConfig::default().with_lambda(0.0))
            .unwrap()
            .with_base_portfolios(&[b.clone(), b.clone(), b.clone()])
            .unwrap();
        let w0 = s.w.clone();
        for _ in 0..5 {
            s.advance(&MarketVector::ones(3), &[b.clone(), b.clone(), b.clone()])
                .unwrap();
        }
        for (a, c) in s.w.as_slice().iter().zip(w0.as_slice()) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_lambda_moves_to_hold_expert() {
        let bases = [p(&[0.9, 0.1]), p(&[0.2, 0.8])];
        let mut s = EnsembleState::init(2, 2, CapeConfig::default().with_lambda(1e6))
            .unwrap()
            .with_base_portfolios(&bases)
            .unwrap();
        s.advance(&x(&[1.1, 0.95]), &bases).unwrap();
        assert_eq!(s.w.as_slice(), AllocationVector::hold(3).as_slice());
        assert_eq!(s.current_portfolio().unwrap(), s.b_hat);
    }

    #[test]
    fn advance_keeps_state_on_bankruptcy() {
        let bases = [p(&[1.0, 0.0])];
        let mut s = EnsembleState::init(1, 2, CapeConfig::default())
            .unwrap()
            .with_base_portfolios(&bases)
            .unwrap();
        s.w = AllocationVector::new(vec![1.0, 0.0]).unwrap();
        let before = s.clone();
        assert!(matches!(
            s.advance(&x(&[0.0, 1.0]), &bases),
            Err(Error::Bankrupt)
        ));
        assert_eq!(s, before);
    }

    #[test]
    fn checkpoint_json_roundtrip() {
        let bases = [p(&[0.7, 0.3]), p(&[0.1, 0.9])];
        let mut s = EnsembleState::init(2, 2, CapeConfig::default())
            .unwrap()
            .with_base_portfolios(&bases)
            .unwrap();
        s.advance(&x(&[1.03, 0.97]), &bases).unwrap();
        let back = EnsembleState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let value: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(value["a"].as_array().unwrap().len(), 3);
        assert_eq!(value["p_plus"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn regret_of_the_optimum_is_zero() {
        let rows = vec![
            vec![1.1, 0.9, 1.0],
            vec![0.95, 1.05, 1.0],
            vec![1.02, 0.99, 1.0],
        ];
        let best = best_fixed_allocation(&rows, 0.01, None).unwrap();
        let log: Vec<LossRecord> = rows
            .iter()
            .map(|r| LossRecord {
                column_returns: r.clone(),
                w: best.point.clone(),
            })
            .collect();
        let trace = regret_trace(&log, 0.01, &[3]).unwrap();
        assert!(trace.points[0].regret.abs() < 1e-10, "{trace:?}");
    }

    #[test]
    fn prefixes() {
        assert_eq!(
            default_regret_prefixes(120),
            vec![1, 2, 5, 10, 20, 50, 100, 120]
        );
        assert_eq!(default_regret_prefixes(1), vec![1]);
        assert_eq!(default_regret_prefixes(10), vec![1, 2, 5, 10]);
    }
}
