//! Portfolio arithmetic and commission-aware wealth bookkeeping.
//!
//! Under the proportional model a trade of `d` dollars in either direction costs
//! `gamma / 2 * d`. After playing `b_t` on day `t` the holdings drift to
//! `b̂_t = b_t ⊙ x_t / <b_t, x_t>`; rebalancing to `b_{t+1}` costs
//! `gamma / 2 * ||b_{t+1} - b̂_t||_1` of current wealth. The ledger multiplies
//! wealth by `<b_t, x_t> * (1 - gamma/2 * ||b_{t+1} - b̂_t||_1)` every round.
//!
//! Conventions: establishing `b_1` is free, and the last round pays no forward
//! rebalance cost since there is no `b_{T+1}`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{MarketSequence, MarketVector};

/// Negative entries down to this value are clamped to zero.
const CLAMP_TOL: f64 = 1e-12;
/// Allowed deviation of the weight sum from one.
const SUM_TOL: f64 = 1e-9;

/// A point on the probability simplex over `n` stocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Portfolio(Vec<f64>);

impl Portfolio {
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("portfolio is empty".into()));
        }
        for (i, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "weight {} is not finite",
                    i + 1
                )));
            }
            if *w < 0.0 {
                if *w < -CLAMP_TOL {
                    return Err(Error::InvalidInput(format!(
                        "weight {} is negative ({w})",
                        i + 1
                    )));
                }
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform portfolio needs at least one stock");
        Self(vec![1.0 / n as f64; n])
    }

    /// All wealth in stock `i`.
    pub fn vertex(n: usize, i: usize) -> Self {
        assert!(i < n);
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &Portfolio) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(l1(&self.0, &other.0))
    }

    /// Gross return `<b, x>`.
    pub fn gross_return(&self, x: &MarketVector) -> Result<f64> {
        check_dim(self.len(), x.len())?;
        Ok(x.dot(&self.0))
    }
}

impl TryFrom<Vec<f64>> for Portfolio {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Portfolio::new(v)
    }
}

impl From<Portfolio> for Vec<f64> {
    fn from(p: Portfolio) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for Portfolio {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Proportional commission rate `gamma` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CommissionRate(f64);

impl CommissionRate {
    pub const ZERO: CommissionRate = CommissionRate(0.0);

    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!(
                "commission rate {gamma} outside [0, 1]"
            )));
        }
        Ok(Self(gamma))
    }

    pub fn gamma(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CommissionRate {
    type Error = Error;

    fn try_from(g: f64) -> Result<Self> {
        CommissionRate::new(g)
    }
}

impl From<CommissionRate> for f64 {
    fn from(r: CommissionRate) -> Self {
        r.0
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Holdings after one day of price movement, before any rebalancing.
///
/// Fails with [`Error::Bankrupt`] when `<b, x> = 0`.
pub fn drift(b: &Portfolio, x: &MarketVector) -> Result<Portfolio> {
    let gross = b.gross_return(x)?;
    if gross <= 0.0 {
        return Err(Error::Bankrupt);
    }
    Portfolio::new(
        b.as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(w, r)| w * r / gross)
            .collect(),
    )
}

/// Fraction of wealth paid to move from `b_hat` to `b_next`: `gamma/2 * ||b_next - b_hat||_1`.
pub fn rebalance_cost_fraction(
    b_hat: &Portfolio,
    b_next: &Portfolio,
    rate: CommissionRate,
) -> Result<f64> {
    Ok(0.5 * rate.gamma() * b_next.l1_distance(b_hat)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    /// 1-based round index.
    pub t: usize,
    pub gross_return: f64,
    pub turnover: f64,
    pub commission_fraction: f64,
    pub net_factor: f64,
    pub cumulative_wealth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthLedger {
    pub gamma: f64,
    pub initial_wealth: f64,
    pub records: Vec<LedgerRecord>,
    /// Round at which the gross return hit zero; wealth is frozen at 0 from there.
    pub bankrupt_round: Option<usize>,
    pub entry_cost_charged: bool,
    pub final_round_cost_charged: bool,
}

impl WealthLedger {
    pub fn final_wealth(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_wealth, |r| r.cumulative_wealth)
    }

    pub fn total_turnover(&self) -> f64 {
        self.records.iter().map(|r| r.turnover).sum()
    }

    /// Wealth lost to commissions, summed over rounds as a fraction of the
    /// wealth held at each payment.
    pub fn total_commission_fraction(&self) -> f64 {
        self.records.iter().map(|r| r.commission_fraction).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,gross_return,turnover,commission_fraction,net_factor,cumulative_wealth\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t,
                r.gross_return,
                r.turnover,
                r.commission_fraction,
                r.net_factor,
                r.cumulative_wealth
            );
        }
        out
    }
}

/// Runs the commission-aware wealth recurrence over a decision sequence.
///
/// `decisions[t]` is the portfolio played on day `t`. A zero gross return ends
/// the ledger with cumulative wealth 0 rather than failing.
pub fn run_ledger(
    decisions: &[Portfolio],
    market: &MarketSequence,
    rate: CommissionRate,
) -> Result<WealthLedger> {
    run_ledger_from(decisions, market, rate, 1.0)
}

pub fn run_ledger_from(
    decisions: &[Portfolio],
    market: &MarketSequence,
    rate: CommissionRate,
    initial_wealth: f64,
) -> Result<WealthLedger> {
    check_dim(market.len(), decisions.len())?;
    let half_gamma = 0.5 * rate.gamma();
    let mut ledger = WealthLedger {
        gamma: rate.gamma(),
        initial_wealth,
        records: Vec::with_capacity(decisions.len()),
        bankrupt_round: None,
        entry_cost_charged: false,
        final_round_cost_charged: false,
    };
    let mut wealth = initial_wealth;
    for (t, (b, x)) in decisions.iter().zip(market.iter()).enumerate() {
        let gross = b.gross_return(x)?;
        if gross <= 0.0 {
            ledger.records.push(LedgerRecord {
                t: t + 1,
                gross_return: 0.0,
                turnover: 0.0,
                commission_fraction: 0.0,
                net_factor: 0.0,
                cumulative_wealth: 0.0,
            });
            ledger.bankrupt_round = Some(t + 1);
            break;
        }
        let turnover = match decisions.get(t + 1) {
            Some(next) => {
                let b_hat = drift(b, x)?;
                next.l1_distance(&b_hat)?
            }
            None => 0.0,
        };
        let commission_fraction = half_gamma * turnover;
        let net_factor = gross * (1.0 - commission_fraction);
        wealth *= net_factor;
        ledger.records.push(LedgerRecord {
            t: t + 1,
            gross_return: gross,
            turnover,
            commission_fraction,
            net_factor,
            cumulative_wealth: wealth,
        });
    }
    Ok(ledger)
}

/// Euclidean projection onto the probability simplex (sort-based, `O(n log n)`).
pub fn project_to_simplex(v: &[f64]) -> Portfolio {
    Portfolio(project_simplex_vec(v))
}

pub(crate) fn project_simplex_vec(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
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
    fn portfolio_construction() {
        assert_eq!(
            p(&[0.5, 0.5 + 5e-13, -5e-13]).as_slice(),
            &[0.5, 0.5 + 5e-13, 0.0]
        );
        assert!(Portfolio::new(vec![1.1, -0.1]).is_err());
        assert!(Portfolio::new(vec![0.5, 0.6]).is_err());
        assert!(Portfolio::new(vec![]).is_err());
        assert!(serde_json::from_str::<Portfolio>("[0.7, 0.7]").is_err());
    }

    #[test]
    fn commission_rate_range() {
        assert!(CommissionRate::new(-0.01).is_err());
        assert!(CommissionRate::new(1.01).is_err());
        assert_eq!(CommissionRate::new(0.01).unwrap().gamma(), 0.01);
    }

    #[test]
    fn drift_examples() {
        assert_eq!(
            drift(&p(&[0.5, 0.5]), &x(&[1.0, 1.0])).unwrap().as_slice(),
            &[0.5, 0.5]
        );
        assert_eq!(
            drift(&p(&[1.0, 0.0]), &x(&[3.0, 7.0])).unwrap().as_slice(),
            &[1.0, 0.0]
        );
        let d = drift(&p(&[0.5, 0.5]), &x(&[2.0, 1.0])).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn drift_bankrupt() {
        let err = drift(&p(&[1.0, 0.0]), &x(&[0.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::Bankrupt));
    }

    #[test]
    fn cost_fraction_examples() {
        let rate = CommissionRate::new(0.01).unwrap();
        let a = p(&[0.3, 0.7]);
        assert_eq!(rebalance_cost_fraction(&a, &a, rate).unwrap(), 0.0);
        assert!(
            (rebalance_cost_fraction(&p(&[1.0, 0.0]), &p(&[0.0, 1.0]), rate).unwrap() - 0.01).abs()
                < 1e-15
        );
        let rate = CommissionRate::new(0.005).unwrap();
        let c = rebalance_cost_fraction(&p(&[0.6, 0.4]), &p(&[0.5, 0.5]), rate).unwrap();
        assert!((c - 0.0005).abs() < 1e-15);
        assert!(rebalance_cost_fraction(&p(&[1.0]), &p(&[0.5, 0.5]), rate).is_err());
    }

    #[test]
    fn ledger_hand_trace() {
        let market = MarketSequence::from_rows("m", vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let decisions = [p(&[1.0, 0.0]), p(&[0.0, 1.0])];
        let ledger = run_ledger(&decisions, &market, CommissionRate::new(0.01).unwrap()).unwrap();
        assert_eq!(ledger.records[0].turnover, 2.0);
        assert!((ledger.records[0].net_factor - 1.98).abs() < 1e-15);
        assert_eq!(ledger.records[1].net_factor, 2.0);
        assert!((ledger.final_wealth() - 3.96).abs() < 1e-14);
    }

    #[test]
    fn ledger_zero_commission_is_plain_product() {
        let market =
            MarketSequence::from_rows("m", vec![vec![1.2, 0.9], vec![0.8, 1.3], vec![1.05, 1.0]])
                .unwrap();
        let decisions = [p(&[0.2, 0.8]), p(&[0.9, 0.1]), p(&[0.5, 0.5])];
        let ledger = run_ledger(&decisions, &market, CommissionRate::ZERO).unwrap();
        let product: f64 = decisions
            .iter()
            .zip(market.iter())
            .map(|(b, x)| b.gross_return(x).unwrap())
            .product();
        assert_eq!(ledger.final_wealth(), product);
    }

    #[test]
    fn ledger_flat_market_hold() {
        let market = MarketSequence::from_rows("m", vec![vec![1.0; 3]; 100]).unwrap();
        let b = p(&[0.2, 0.3, 0.5]);
        let ledger =
            run_ledger(&vec![b; 100], &market, CommissionRate::new(0.01).unwrap()).unwrap();
        assert_eq!(ledger.final_wealth(), 1.0);
        assert_eq!(ledger.total_turnover(), 0.0);
    }

    #[test]
    fn ledger_bankruptcy_freezes_at_zero() {
        let market =
            MarketSequence::from_rows("m", vec![vec![1.5, 1.0], vec![0.0, 1.0], vec![2.0, 2.0]])
                .unwrap();
        let decisions = vec![p(&[1.0, 0.0]); 3];
        let ledger = run_ledger(&decisions, &market, CommissionRate::ZERO).unwrap();
        assert_eq!(ledger.final_wealth(), 0.0);
        assert_eq!(ledger.bankrupt_round, Some(2));
        assert_eq!(ledger.records.len(), 2);
    }

    #[test]
    fn ledger_length_mismatch() {
        let market = MarketSequence::from_rows("m", vec![vec![1.0, 1.0]; 2]).unwrap();
        assert!(run_ledger(&[Portfolio::uniform(2)], &market, CommissionRate::ZERO).is_err());
        assert!(run_ledger(
            &vec![Portfolio::uniform(3); 2],
            &market,
            CommissionRate::ZERO
        )
        .is_err());
    }

    #[test]
    fn ledger_csv_shape() {
        let market = MarketSequence::from_rows("m", vec![vec![1.0, 2.0]; 3]).unwrap();
        let ledger = run_ledger(
            &vec![Portfolio::uniform(2); 3],
            &market,
            CommissionRate::ZERO,
        )
        .unwrap();
        let csv = ledger.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("t,gross_return,turnover"));
    }

    #[test]
    fn projection_examples() {
        let on = [0.2, 0.3, 0.5];
        let out = project_to_simplex(&on);
        for (a, b) in out.as_slice().iter().zip(on) {
            assert!((a - b).abs() < 1e-15);
        }
        let out = project_to_simplex(&[0.5, 0.7]);
        assert!((out[0] - 0.4).abs() < 1e-15 && (out[1] - 0.6).abs() < 1e-15);
        assert_eq!(project_to_simplex(&[2.0, -1.0]).as_slice(), &[1.0, 0.0]);
    }
}
