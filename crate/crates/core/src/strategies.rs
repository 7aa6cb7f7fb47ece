//! Commission-oblivious base strategies.
//!
//! Each strategy observes one market vector per day and proposes the portfolio
//! for the following day. Fixed variants: multiplicative EG, PAMR-0, OLMAR-1
//! (simple moving average) and single-window Anticor without the BAH wrapper.
//! OLU is the lazy-update commission-aware baseline; BCRP is computed in hindsight.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::accounting::{check_dim, drift, project_to_simplex, Portfolio};
use crate::error::{Error, Result};
use crate::market_data::{MarketSequence, MarketVector};
use crate::solver::{minimize_log_loss, solve_olu_step};

/// Floor applied to relatives before taking logs in Anticor.
const LOG_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyParams {
    pub eg_eta: f64,
    pub pamr_epsilon: f64,
    pub olmar_window: usize,
    pub olmar_epsilon: f64,
    pub anticor_window: usize,
    pub olu_eta: f64,
    pub olu_lambda: f64,
    /// Use `lambda = 1 / sqrt(T)` for OLU instead of `olu_lambda`.
    pub olu_lambda_inverse_sqrt_t: bool,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            eg_eta: 0.05,
            pamr_epsilon: 0.5,
            olmar_window: 5,
            olmar_epsilon: 10.0,
            anticor_window: 30,
            olu_eta: 0.1,
            olu_lambda: 0.01,
            olu_lambda_inverse_sqrt_t: false,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("eg_eta", self.eg_eta)?;
        positive("pamr_epsilon", self.pamr_epsilon)?;
        positive("olmar_epsilon", self.olmar_epsilon)?;
        positive("olu_eta", self.olu_eta)?;
        if !(self.olu_lambda.is_finite() && self.olu_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "olu_lambda must be non-negative, got {}",
                self.olu_lambda
            )));
        }
        if self.olmar_window < 2 || self.anticor_window < 2 {
            return Err(Error::Config("strategy windows must be at least 2".into()));
        }
        Ok(())
    }

    pub fn olu_lambda_for(&self, horizon: usize) -> f64 {
        if self.olu_lambda_inverse_sqrt_t {
            1.0 / (horizon.max(1) as f64).sqrt()
        } else {
            self.olu_lambda
        }
    }
}

/// Online strategy contract.
pub trait Strategy: Send {
    fn name(&self) -> &'static str;

    /// Portfolio for the coming round.
    fn next_portfolio(&self) -> Portfolio;

    /// Reveals the market vector of the round just played.
    fn observe(&mut self, x: &MarketVector) -> Result<()>;

    fn reset(&mut self);
}

/// Online base strategies that can be instantiated from [`StrategyParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseKind {
    #[serde(rename = "UCRP", alias = "ucrp")]
    Ucrp,
    #[serde(rename = "EG", alias = "eg")]
    Eg,
    #[serde(rename = "PAMR", alias = "pamr")]
    Pamr,
    #[serde(rename = "OLMAR", alias = "olmar")]
    Olmar,
    #[serde(rename = "Anticor", alias = "anticor", alias = "ANTICOR")]
    Anticor,
    #[serde(rename = "OLU", alias = "olu")]
    Olu,
}

impl BaseKind {
    pub fn label(self) -> &'static str {
        match self {
            BaseKind::Ucrp => "UCRP",
            BaseKind::Eg => "EG",
            BaseKind::Pamr => "PAMR",
            BaseKind::Olmar => "OLMAR",
            BaseKind::Anticor => "Anticor",
            BaseKind::Olu => "OLU",
        }
    }

    /// `horizon` is only used by OLU's `1/sqrt(T)` mode.
    pub fn build(self, n: usize, params: &StrategyParams, horizon: usize) -> Box<dyn Strategy> {
        match self {
            BaseKind::Ucrp => Box::new(Ucrp::new(n)),
            BaseKind::Eg => Box::new(Eg::new(n, params.eg_eta)),
            BaseKind::Pamr => Box::new(Pamr::new(n, params.pamr_epsilon)),
            BaseKind::Olmar => Box::new(Olmar::new(n, params.olmar_window, params.olmar_epsilon)),
            BaseKind::Anticor => Box::new(Anticor::new(n, params.anticor_window)),
            BaseKind::Olu => Box::new(Olu::new(n, params.olu_eta, params.olu_lambda_for(horizon))),
        }
    }
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Plays `strategy` over the whole market without commissions.
///
/// Returns `T + 1` portfolios: the decision for every day plus the one the
/// strategy would play after the last day.
pub fn replay(strategy: &mut dyn Strategy, market: &MarketSequence) -> Result<Vec<Portfolio>> {
    strategy.reset();
    let mut out = Vec::with_capacity(market.len() + 1);
    out.push(strategy.next_portfolio());
    for (t, x) in market.iter().enumerate() {
        strategy.observe(x).map_err(|e| e.at_round(t + 1))?;
        out.push(strategy.next_portfolio());
    }
    Ok(out)
}

pub fn ucrp_next(n: usize) -> Portfolio {
    Portfolio::uniform(n)
}

/// Multiplicative update `b_i <- b_i exp(eta x_i / <b, x>)`, renormalised.
pub fn eg_next(b_prev: &Portfolio, x_prev: &MarketVector, eta: f64) -> Result<Portfolio> {
    let gross = b_prev.gross_return(x_prev)?;
    if gross <= 0.0 {
        return Err(Error::Bankrupt);
    }
    let raw: Vec<f64> = b_prev
        .as_slice()
        .iter()
        .zip(x_prev.as_slice())
        .map(|(b, x)| b * (eta * x / gross).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Portfolio::new(raw.into_iter().map(|v| v / total).collect())
}

/// PAMR-0: `tau = max(0, <b,x> - eps) / ||x - mean(x)||^2`,
/// `b <- P(b - tau (x - mean(x)))`. A flat market vector keeps `b`.
pub fn pamr_next(b_prev: &Portfolio, x_prev: &MarketVector, epsilon: f64) -> Result<Portfolio> {
    let gross = b_prev.gross_return(x_prev)?;
    let loss = (gross - epsilon).max(0.0);
    if loss == 0.0 {
        return Ok(b_prev.clone());
    }
    let xs = x_prev.as_slice();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let denom: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom == 0.0 {
        return Ok(b_prev.clone());
    }
    let tau = loss / denom;
    let raw: Vec<f64> = b_prev
        .as_slice()
        .iter()
        .zip(xs)
        .map(|(b, x)| b - tau * (x - mean))
        .collect();
    Ok(project_to_simplex(&raw))
}

/// OLMAR-1 prediction of the next relatives:
/// `x~_i = (1/k) sum_{j<k} 1 / prod_{l<j} x_{t-l,i}` with `k = min(window, t + 1)`.
///
/// `history` ends with the most recent day. Returns `None` on a degenerate
/// (non-finite) prediction, e.g. after a zero relative.
pub fn olmar_predictor(history: &[MarketVector], window: usize) -> Option<Vec<f64>> {
    let n = history.last()?.len();
    let terms = window.min(history.len() + 1);
    let mut prediction = vec![1.0; n];
    let mut inverse_product = vec![1.0; n];
    for j in 1..terms {
        let x = &history[history.len() - j];
        for i in 0..n {
            inverse_product[i] /= x[i];
            prediction[i] += inverse_product[i];
        }
    }
    for p in prediction.iter_mut() {
        *p /= terms as f64;
    }
    prediction
        .iter()
        .all(|p| p.is_finite())
        .then_some(prediction)
}

/// OLMAR-1 step: move towards the predicted relatives when `<b, x~> < eps`.
pub fn olmar_next(
    history: &[MarketVector],
    b_prev: &Portfolio,
    window: usize,
    epsilon: f64,
) -> Result<Portfolio> {
    if window < 2 {
        return Err(Error::InvalidInput(
            "OLMAR window must be at least 2".into(),
        ));
    }
    let Some(last) = history.last() else {
        return Ok(b_prev.clone());
    };
    check_dim(b_prev.len(), last.len())?;
    let Some(pred) = olmar_predictor(history, window) else {
        return Ok(b_prev.clone());
    };
    let mean = pred.iter().sum::<f64>() / pred.len() as f64;
    let denom: f64 = pred.iter().map(|p| (p - mean) * (p - mean)).sum();
    if denom == 0.0 {
        return Ok(b_prev.clone());
    }
    let expected: f64 = pred.iter().zip(b_prev.as_slice()).map(|(p, b)| p * b).sum();
    let step = ((epsilon - expected) / denom).max(0.0);
    if step == 0.0 {
        return Ok(b_prev.clone());
    }
    let raw: Vec<f64> = b_prev
        .as_slice()
        .iter()
        .zip(&pred)
        .map(|(b, p)| b + step * (p - mean))
        .collect();
    Ok(project_to_simplex(&raw))
}

/// Single-window Anticor transfer.
///
/// Compares log-relatives over the two most recent adjacent windows. Wealth
/// flows from stock `i` to `j` when `i` outperformed `j` in the latest window and
/// `i`'s earlier returns are positively correlated with `j`'s later returns.
/// Returns `b_prev` until `2 * window` days are available.
pub fn anticor_next(
    history: &[MarketVector],
    b_prev: &Portfolio,
    window: usize,
) -> Result<Portfolio> {
    if window < 2 {
        return Err(Error::InvalidInput(
            "Anticor window must be at least 2".into(),
        ));
    }
    if history.len() < 2 * window {
        return Ok(b_prev.clone());
    }
    let n = b_prev.len();
    check_dim(n, history[0].len())?;
    let len = history.len();
    let log_window = |range: std::ops::Range<usize>| -> Vec<Vec<f64>> {
        history[range]
            .iter()
            .map(|x| x.as_slice().iter().map(|r| r.max(LOG_FLOOR).ln()).collect())
            .collect()
    };
    let early = log_window(len - 2 * window..len - window);
    let late = log_window(len - window..len);

    let stats = |rows: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        let w = rows.len() as f64;
        let mean: Vec<f64> = (0..n)
            .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / w)
            .collect();
        let std: Vec<f64> = (0..n)
            .map(|i| {
                (rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (w - 1.0)).sqrt()
            })
            .collect();
        (mean, std)
    };
    let (mu_early, sd_early) = stats(&early);
    let (mu_late, sd_late) = stats(&late);

    let mut corr = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if sd_early[i] > 0.0 && sd_late[j] > 0.0 {
                let cov = early
                    .iter()
                    .zip(&late)
                    .map(|(e, l)| (e[i] - mu_early[i]) * (l[j] - mu_late[j]))
                    .sum::<f64>()
                    / (window as f64 - 1.0);
                corr[i][j] = cov / (sd_early[i] * sd_late[j]);
            }
        }
    }

    let mut claims = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && mu_late[i] > mu_late[j] && corr[i][j] > 0.0 {
                claims[i][j] = corr[i][j] + (-corr[i][i]).max(0.0) + (-corr[j][j]).max(0.0);
            }
        }
    }

    let b = b_prev.as_slice();
    let mut next = b.to_vec();
    for i in 0..n {
        let total: f64 = claims[i].iter().sum();
        if total > 0.0 {
            for j in 0..n {
                let moved = b[i] * claims[i][j] / total;
                next[i] -= moved;
                next[j] += moved;
            }
        }
    }
    Portfolio::new(next)
}

/// Best constant rebalanced portfolio in hindsight: maximises `sum_t log <b, x_t>`.
pub fn bcrp(market: &MarketSequence) -> Result<Portfolio> {
    let rows: Vec<Vec<f64>> = market.iter().map(|x| x.as_slice().to_vec()).collect();
    let res = minimize_log_loss(&rows, &vec![0.0; market.n()], None)?;
    Portfolio::new(res.point)
}

pub fn olu_next(
    b_prev: &Portfolio,
    x_prev: &MarketVector,
    eta: f64,
    lambda: f64,
) -> Result<Portfolio> {
    solve_olu_step(x_prev, b_prev, eta, lambda)
}

#[derive(Debug, Clone)]
pub struct Ucrp {
    n: usize,
}

impl Ucrp {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl Strategy for Ucrp {
    fn name(&self) -> &'static str {
        "UCRP"
    }

    fn next_portfolio(&self) -> Portfolio {
        ucrp_next(self.n)
    }

    fn observe(&mut self, x: &MarketVector) -> Result<()> {
        check_dim(self.n, x.len())
    }

    fn reset(&mut self) {}
}

#[derive(Debug, Clone)]
pub struct Eg {
    eta: f64,
    b: Portfolio,
}

impl Eg {
    pub fn new(n: usize, eta: f64) -> Self {
        Self {
            eta,
            b: Portfolio::uniform(n),
        }
    }
}

impl Strategy for Eg {
    fn name(&self) -> &'static str {
        "EG"
    }

    fn next_portfolio(&self) -> Portfolio {
        self.b.clone()
    }

    fn observe(&mut self, x: &MarketVector) -> Result<()> {
        match eg_next(&self.b, x, self.eta) {
            Ok(b) => self.b = b,
            // nothing to learn from a wiped-out round
            Err(Error::Bankrupt) => {}
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.b = Portfolio::uniform(self.b.len());
    }
}

#[derive(Debug, Clone)]
pub struct Pamr {
    epsilon: f64,
    b: Portfolio,
}

impl Pamr {
    pub fn new(n: usize, epsilon: f64) -> Self {
        Self {
            epsilon,
            b: Portfolio::uniform(n),
        }
    }
}

impl Strategy for Pamr {
    fn name(&self) -> &'static str {
        "PAMR"
    }

    fn next_portfolio(&self) -> Portfolio {
        self.b.clone()
    }

    fn observe(&mut self, x: &MarketVector) -> Result<()> {
        self.b = pamr_next(&self.b, x, self.epsilon)?;
        Ok(())
    }

    fn reset(&mut self) {
        self.b = Portfolio::uniform(self.b.len());
    }
}

#[derive(Debug, Clone)]
pub struct Olmar {
    window: usize,
    epsilon: f64,
    b: Portfolio,
    history: VecDeque<MarketVector>,
}

impl Olmar {
    pub fn new(n: usize, window: usize, epsilon: f64) -> Self {
        Self {
            window,
            epsilon,
            b: Portfolio::uniform(n),
            history: VecDeque::with_capacity(window),
        }
    }
}

impl Strategy for Olmar {
    fn name(&self) -> &'static str {
        "OLMAR"
    }

    fn next_portfolio(&self) -> Portfolio {
        self.b.clone()
    }

    fn observe(&mut self, x: &MarketVector) -> Result<()> {
        check_dim(self.b.len(), x.len())?;
        self.history.push_back(x.clone());
        // the predictor needs at most window - 1 past relatives
        while self.history.len() > self.window.saturating_sub(1).max(1) {
            self.history.pop_front();
        }
        let history = self.history.make_contiguous();
        self.b = olmar_next(history, &self.b, self.window, self.epsilon)?;
        Ok(())
    }

    fn reset(&mut self) {
        self.b = Portfolio::uniform(self.b.len());
        self.history.clear();
    }
}

/// Anticor transfers are applied to the drifted holdings, so during warmup the
/// strategy buys and holds its initial uniform portfolio.
#[derive(Debug, Clone)]
pub struct Anticor {
    window: usize,
    b: Portfolio,
    history: VecDeque<MarketVector>,
}

impl Anticor {
    pub fn new(n: usize, window: usize) -> Self {
        Self {
            window,
            b: Portfolio::uniform(n),
            history: VecDeque::with_capacity(2 * window),
        }
    }
}

impl Strategy for Anticor {
    fn name(&self) -> &'static str {
        "Anticor"
    }

    fn next_portfolio(&self) -> Portfolio {
        self.b.clone()
    }

    fn observe(&mut self, x: &MarketVector) -> Result<()> {
        check_dim(self.b.len(), x.len())?;
        let held = match drift(&self.b, x) {
            Ok(b) => b,
            Err(Error::Bankrupt) => self.b.clone(),
            Err(e) => return Err(e),
        };
        self.history.push_back(x.clone());
        while self.history.len() > 2 * self.window {
            self.history.pop_front();
        }
        let history = self.history.make_contiguous();
        self.b = anticor_next(history, &held, self.window)?;
        Ok(())
    }

    fn reset(&mut self) {
        self.b = Portfolio::uniform(self.b.len());
        self.history.clear();
    }
}

#[derive(Debug, Clone)]
pub struct Olu {
    eta: f64,
    lambda: f64,
    b: Portfolio,
}

impl Olu {
    pub fn new(n: usize, eta: f64, lambda: f64) -> Self {
        Self {
            eta,
            lambda,
            b: Portfolio::uniform(n),
        }
    }
}

impl Strategy for Olu {
    fn name(&self) -> &'static str {
        "OLU"
    }

    fn next_portfolio(&self) -> Portfolio {
        self.b.clone()
    }

    fn observe(&mut self, x: &MarketVector) -> Result<()> {
        check_dim(self.b.len(), x.len())?;
        self.b = olu_next(&self.b, x, self.eta, self.lambda)?;
        Ok(())
    }

    fn reset(&mut self) {
        self.b = Portfolio::uniform(self.b.len());
    }
}
