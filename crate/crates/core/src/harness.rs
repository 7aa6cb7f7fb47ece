//! Experiment orchestration.
//!
//! An [`ExperimentSpec`] names a market, a list of strategies and a list of
//! commission rates. Every base strategy (and CAPE with a fixed `lambda`) is
//! commission-oblivious, so its decisions are computed once and charged at each
//! rate. Walk-forward CAPE re-selects `lambda` from net-of-commission wealth and
//! therefore runs once per rate.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{run_ledger, CommissionRate, Portfolio, WealthLedger};
use crate::cape::{
    default_regret_prefixes, regret_trace, CapeConfig, EnsembleState, LossRecord, RegretTrace,
};
use crate::error::{Error, Result};
use crate::market_data::{
    generate_synthetic, load_market_csv, MarketSequence, MarketVector, SyntheticMarketSpec,
};
use crate::strategies::{bcrp, replay, BaseKind, StrategyParams};

/// Commission rates of the published evaluation grid.
pub const BENCHMARK_GAMMAS: [f64; 4] = [0.0025, 0.005, 0.0075, 0.01];

/// Scores closer than this (in log-wealth) are treated as ties.
const WF_TIE_TOL: f64 = 1e-12;

pub fn default_lambda_grid() -> Vec<f64> {
    vec![
        0.0, 0.0025, 0.005, 0.0075, 0.01, 0.015, 0.02, 0.03, 0.04, 0.05,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv(PathBuf),
    Synthetic(SyntheticMarketSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
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
    #[serde(rename = "BCRP", alias = "bcrp")]
    Bcrp,
    /// CAPE in the mode given by [`CapeSettings::mode`].
    #[serde(rename = "CAPE", alias = "cape")]
    Cape,
    #[serde(rename = "CAPE-Naive", alias = "cape-naive")]
    CapeNaive,
    #[serde(rename = "CAPE-WF", alias = "cape-wf")]
    CapeWf,
}

impl StrategyKind {
    pub fn base(self) -> Option<BaseKind> {
        match self {
            StrategyKind::Ucrp => Some(BaseKind::Ucrp),
            StrategyKind::Eg => Some(BaseKind::Eg),
            StrategyKind::Pamr => Some(BaseKind::Pamr),
            StrategyKind::Olmar => Some(BaseKind::Olmar),
            StrategyKind::Anticor => Some(BaseKind::Anticor),
            StrategyKind::Olu => Some(BaseKind::Olu),
            _ => None,
        }
    }

    fn cape_mode(self, default: CapeMode) -> Option<CapeMode> {
        match self {
            StrategyKind::Cape => Some(default),
            StrategyKind::CapeNaive => Some(CapeMode::Naive),
            StrategyKind::CapeWf => Some(CapeMode::Wf),
            _ => None,
        }
    }

    pub fn label(self, default_mode: CapeMode) -> &'static str {
        if let Some(b) = self.base() {
            return b.label();
        }
        match self.cape_mode(default_mode) {
            Some(CapeMode::Naive) => "CAPE-Naive",
            Some(CapeMode::Wf) => "CAPE-WF",
            None => "BCRP",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::Config(format!("unknown strategy '{name}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapeMode {
    Naive,
    Wf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reselect {
    EveryRound,
    EveryWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapeSettings {
    pub mode: CapeMode,
    /// Fixed `lambda` in naive mode; also used during walk-forward warmup.
    pub lambda: f64,
    pub wf_window: usize,
    pub lambda_grid: Vec<f64>,
    pub reselect: Reselect,
    pub eta: f64,
    pub epsilon: f64,
    pub experts: Vec<BaseKind>,
    pub regret_trace: bool,
}

impl Default for CapeSettings {
    fn default() -> Self {
        Self {
            mode: CapeMode::Naive,
            lambda: 0.005,
            wf_window: 25,
            lambda_grid: default_lambda_grid(),
            reselect: Reselect::EveryRound,
            eta: 1.0,
            epsilon: 1.0,
            experts: vec![
                BaseKind::Eg,
                BaseKind::Pamr,
                BaseKind::Anticor,
                BaseKind::Olmar,
            ],
            regret_trace: true,
        }
    }
}

impl CapeSettings {
    pub fn config(&self) -> CapeConfig {
        CapeConfig {
            eta: self.eta,
            epsilon: self.epsilon,
            lambda: self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config().validate()?;
        if self.wf_window < 2 {
            return Err(Error::Config(format!(
                "wf_window must be at least 2, got {}",
                self.wf_window
            )));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda_grid must not be empty".into()));
        }
        if self
            .lambda_grid
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err(Error::Config(
                "lambda_grid entries must be non-negative".into(),
            ));
        }
        if self.lambda_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("lambda_grid must be sorted ascending".into()));
        }
        if self.experts.is_empty() {
            return Err(Error::Config("CAPE needs at least one expert".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub params: StrategyParams,
    #[serde(default)]
    pub cape: CapeSettings,
    /// Overrides the seed of a synthetic dataset.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_strategies() -> Vec<StrategyKind> {
    vec![
        StrategyKind::Eg,
        StrategyKind::Pamr,
        StrategyKind::Anticor,
        StrategyKind::Olmar,
        StrategyKind::CapeNaive,
        StrategyKind::CapeWf,
        StrategyKind::Olu,
        StrategyKind::Ucrp,
    ]
}

fn default_gammas() -> Vec<f64> {
    BENCHMARK_GAMMAS.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            strategies: default_strategies(),
            gammas: default_gammas(),
            params: StrategyParams::default(),
            cape: CapeSettings::default(),
            seed: None,
            output_dir: default_output_dir(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for &g in &self.gammas {
            CommissionRate::new(g).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.params.validate()?;
        self.cape.validate()?;
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<MarketSequence> {
        match &self.dataset {
            DatasetSource::Csv(path) => load_market_csv(path),
            DatasetSource::Synthetic(s) => {
                let mut s = s.clone();
                if let Some(seed) = self.seed {
                    s.seed = seed;
                }
                generate_synthetic(&s)
            }
        }
    }
}

/// Extra output of a CAPE cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapeDetails {
    pub mode: CapeMode,
    /// Allocation played in every round.
    pub weights: Vec<Vec<f64>>,
    /// `lambda` used to compute the next allocation after every round.
    pub lambdas: Vec<f64>,
    /// Walk-forward only: rounds played with the naive `lambda` before the first full window.
    pub wf_warmup_rounds: Option<usize>,
    pub regret: Option<RegretTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: String,
    pub gamma: f64,
    pub final_wealth: f64,
    pub ledger: Option<WealthLedger>,
    /// Set when the run failed; `final_wealth` is then 0.
    pub error: Option<String>,
    pub cape: Option<CapeDetails>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub n: usize,
    pub t: usize,
    pub gammas: Vec<f64>,
    pub strategies: Vec<String>,
    pub cells: Vec<CellReport>,
    pub metadata: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn cell(&self, strategy: &str, gamma: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.gamma == gamma)
    }

    pub fn wealth(&self, strategy: &str, gamma: f64) -> Option<f64> {
        self.cell(strategy, gamma).map(|c| c.final_wealth)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Output of one CAPE run over a market.
#[derive(Debug, Clone, PartialEq)]
pub struct CapeRun {
    pub decisions: Vec<Portfolio>,
    pub weights: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub loss_log: Vec<LossRecord>,
    pub wf_warmup_rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkForwardSettings {
    pub window: usize,
    pub grid: Vec<f64>,
    pub reselect: Reselect,
    pub gamma: CommissionRate,
}

/// Base-strategy portfolios arranged by round: `rounds[t]` holds the `d`
/// portfolios for day `t` (0-based), with one extra entry after the last day.
pub fn base_by_round(per_strategy: &[Vec<Portfolio>]) -> Result<Vec<Vec<Portfolio>>> {
    let len = per_strategy
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("no base strategies".into()))?;
    if per_strategy.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidInput(
            "base decision sequences differ in length".into(),
        ));
    }
    Ok((0..len)
        .map(|t| per_strategy.iter().map(|s| s[t].clone()).collect())
        .collect())
}

fn check_base_rounds(market: &MarketSequence, base: &[Vec<Portfolio>]) -> Result<()> {
    if base.len() != market.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: market.len() + 1,
            found: base.len(),
        });
    }
    Ok(())
}

/// Runs CAPE with a fixed `lambda` over the whole market.
pub fn run_cape_fixed(
    market: &MarketSequence,
    base: &[Vec<Portfolio>],
    config: CapeConfig,
) -> Result<CapeRun> {
    check_base_rounds(market, base)?;
    let mut state =
        EnsembleState::init(base[0].len(), market.n(), config)?.with_base_portfolios(&base[0])?;
    let mut run = CapeRun {
        decisions: Vec::with_capacity(market.len()),
        weights: Vec::with_capacity(market.len()),
        lambdas: Vec::with_capacity(market.len()),
        loss_log: Vec::with_capacity(market.len()),
        wf_warmup_rounds: None,
    };
    for (t, x) in market.iter().enumerate() {
        let outcome = state
            .advance(x, &base[t + 1])
            .map_err(|e| e.at_round(t + 1))?;
        run.loss_log.push(LossRecord::from(&outcome));
        run.weights.push(outcome.w.as_slice().to_vec());
        run.decisions.push(outcome.played);
        run.lambdas.push(config.lambda);
    }
    Ok(run)
}

/// Runs CAPE whose `lambda` is re-selected by [`walk_forward_lambda`] on the
/// last `window` rounds. Earlier rounds use `config.lambda`.
pub fn run_cape_walk_forward(
    market: &MarketSequence,
    base: &[Vec<Portfolio>],
    config: CapeConfig,
    wf: &WalkForwardSettings,
) -> Result<CapeRun> {
    check_base_rounds(market, base)?;
    if wf.window < 2 {
        return Err(Error::Config(
            "walk-forward window must be at least 2".into(),
        ));
    }
    let mut state =
        EnsembleState::init(base[0].len(), market.n(), config)?.with_base_portfolios(&base[0])?;
    let mut checkpoints: VecDeque<EnsembleState> = VecDeque::with_capacity(wf.window + 1);
    let mut run = CapeRun {
        decisions: Vec::with_capacity(market.len()),
        weights: Vec::with_capacity(market.len()),
        lambdas: Vec::with_capacity(market.len()),
        loss_log: Vec::with_capacity(market.len()),
        wf_warmup_rounds: Some(wf.window.saturating_sub(1).min(market.len())),
    };
    let vectors = market.vectors();
    let mut lambda = config.lambda;
    for (t, x) in vectors.iter().enumerate() {
        checkpoints.push_back(state.clone());
        if checkpoints.len() > wf.window {
            checkpoints.pop_front();
        }
        if checkpoints.len() == wf.window {
            let first = t + 1 - wf.window;
            let due = match wf.reselect {
                Reselect::EveryRound => true,
                Reselect::EveryWindow => first % wf.window == 0,
            };
            if due {
                lambda = walk_forward_lambda(
                    &checkpoints[0],
                    &vectors[first..=t],
                    &base[first + 1..=t + 1],
                    &wf.grid,
                    wf.gamma,
                )
                .map_err(|e| e.at_round(t + 1))?;
            }
        }
        state.config.lambda = lambda;
        let outcome = state
            .advance(x, &base[t + 1])
            .map_err(|e| e.at_round(t + 1))?;
        run.loss_log.push(LossRecord::from(&outcome));
        run.weights.push(outcome.w.as_slice().to_vec());
        run.decisions.push(outcome.played);
        run.lambdas.push(lambda);
    }
    Ok(run)
}

/// Net log-wealth of replaying `window` from `checkpoint` with a given `lambda`,
/// including the commission for moving into every next allocation.
fn replay_score(
    checkpoint: &EnsembleState,
    window: &[MarketVector],
    next_base: &[Vec<Portfolio>],
    lambda: f64,
    gamma: CommissionRate,
) -> Result<f64> {
    let mut state = checkpoint.clone();
    state.config.lambda = lambda;
    let half_gamma = 0.5 * gamma.gamma();
    let mut log_wealth = 0.0;
    for (x, base) in window.iter().zip(next_base) {
        let outcome = match state.advance(x, base) {
            Ok(o) => o,
            Err(Error::Bankrupt) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let next = state.current_portfolio()?;
        let turnover = next.l1_distance(&state.b_hat)?;
        log_wealth += outcome.gross_return.ln() + (1.0 - half_gamma * turnover).ln();
    }
    Ok(log_wealth)
}

/// Picks the `lambda` in `grid` whose replay from `checkpoint` over the window
/// earns the most net wealth at commission rate `gamma`. Ties go to the smaller `lambda`.
///
/// `next_base[k]` are the base portfolios revealed after `window[k]`.
pub fn walk_forward_lambda(
    checkpoint: &EnsembleState,
    window: &[MarketVector],
    next_base: &[Vec<Portfolio>],
    grid: &[f64],
    gamma: CommissionRate,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if window.len() != next_base.len() {
        return Err(Error::DimensionMismatch {
            expected: window.len(),
            found: next_base.len(),
        });
    }
    let mut candidates = grid.to_vec();
    candidates.sort_by(f64::total_cmp);
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let scores = candidates
        .par_iter()
        .map(|&l| replay_score(checkpoint, window, next_base, l, gamma))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = (candidates[0], scores[0]);
    for (&l, &s) in candidates.iter().zip(&scores).skip(1) {
        if s > best.1 + WF_TIE_TOL || (best.1 == f64::NEG_INFINITY && s > best.1) {
            best = (l, s);
        }
    }
    Ok(best.0)
}

/// Precomputed market and base-strategy decisions shared by all cells.
struct Engine<'a> {
    spec: &'a ExperimentSpec,
    market: MarketSequence,
    base: HashMap<BaseKind, std::result::Result<Vec<Portfolio>, String>>,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let market = spec.load_dataset()?;
        let mut kinds: Vec<BaseKind> = spec.strategies.iter().filter_map(|s| s.base()).collect();
        if spec
            .strategies
            .iter()
            .any(|s| s.cape_mode(spec.cape.mode).is_some())
        {
            kinds.extend(spec.cape.experts.iter().copied());
        }
        kinds.sort_by_key(|k| k.label());
        kinds.dedup();
        let base = kinds
            .par_iter()
            .map(|&k| {
                let mut s = k.build(market.n(), &spec.params, market.len());
                (k, replay(s.as_mut(), &market).map_err(|e| e.to_string()))
            })
            .collect();
        Ok(Self { spec, market, base })
    }

    fn base_decisions(&self, kind: BaseKind) -> Result<&Vec<Portfolio>> {
        match self.base.get(&kind) {
            Some(Ok(d)) => Ok(d),
            Some(Err(msg)) => Err(Error::InvalidInput(format!("{kind}: {msg}"))),
            None => Err(Error::InvalidInput(format!("{kind} was not computed"))),
        }
    }

    fn expert_rounds(&self) -> Result<Vec<Vec<Portfolio>>> {
        let per: Vec<Vec<Portfolio>> = self
            .spec
            .cape
            .experts
            .iter()
            .map(|&k| self.base_decisions(k).cloned())
            .collect::<Result<_>>()?;
        base_by_round(&per)
    }

    fn ledger_cells(
        &self,
        label: &str,
        decisions: &[Portfolio],
        cape: Option<CapeDetails>,
    ) -> Vec<CellReport> {
        self.spec
            .gammas
            .iter()
            .map(|&g| self.ledger_cell(label, decisions, g, cape.clone()))
            .collect()
    }

    fn cells_for(&self, kind: StrategyKind) -> Vec<CellReport> {
        let label = kind.label(self.spec.cape.mode);
        let fail_all = |e: &Error| -> Vec<CellReport> {
            self.spec
                .gammas
                .iter()
                .map(|&g| failed_cell(label, g, e))
                .collect()
        };
        if let Some(b) = kind.base() {
            return match self.base_decisions(b) {
                Ok(d) => self.ledger_cells(label, &d[..self.market.len()], None),
                Err(e) => fail_all(&e),
            };
        }
        match kind.cape_mode(self.spec.cape.mode) {
            None => match bcrp(&self.market) {
                Ok(b) => self.ledger_cells(label, &vec![b; self.market.len()], None),
                Err(e) => fail_all(&e),
            },
            Some(CapeMode::Naive) => match self.cape_naive() {
                Ok((decisions, details)) => self.ledger_cells(label, &decisions, Some(details)),
                Err(e) => fail_all(&e),
            },
            Some(CapeMode::Wf) => self
                .spec
                .gammas
                .par_iter()
                .map(|&g| match self.cape_wf(g, self.spec.cape.wf_window) {
                    Ok((decisions, details)) => {
                        self.ledger_cell(label, &decisions, g, Some(details))
                    }
                    Err(e) => failed_cell(label, g, &e),
                })
                .collect(),
        }
    }

    fn ledger_cell(
        &self,
        label: &str,
        decisions: &[Portfolio],
        gamma: f64,
        cape: Option<CapeDetails>,
    ) -> CellReport {
        let rate = CommissionRate::new(gamma).expect("validated");
        match run_ledger(decisions, &self.market, rate) {
            Ok(ledger) => CellReport {
                strategy: label.to_string(),
                gamma,
                final_wealth: ledger.final_wealth(),
                ledger: Some(ledger),
                error: None,
                cape,
            },
            Err(e) => failed_cell(label, gamma, &e),
        }
    }

    fn cape_naive(&self) -> Result<(Vec<Portfolio>, CapeDetails)> {
        let rounds = self.expert_rounds()?;
        let config = self.spec.cape.config();
        let run = run_cape_fixed(&self.market, &rounds, config)?;
        let regret = if self.spec.cape.regret_trace {
            Some(regret_trace(
                &run.loss_log,
                config.lambda,
                &default_regret_prefixes(run.loss_log.len()),
            )?)
        } else {
            None
        };
        Ok((
            run.decisions,
            CapeDetails {
                mode: CapeMode::Naive,
                weights: run.weights,
                lambdas: run.lambdas,
                wf_warmup_rounds: None,
                regret,
            },
        ))
    }

    fn cape_wf(&self, gamma: f64, window: usize) -> Result<(Vec<Portfolio>, CapeDetails)> {
        let rounds = self.expert_rounds()?;
        let settings = WalkForwardSettings {
            window,
            grid: self.spec.cape.lambda_grid.clone(),
            reselect: self.spec.cape.reselect,
            gamma: CommissionRate::new(gamma)?,
        };
        let run = run_cape_walk_forward(&self.market, &rounds, self.spec.cape.config(), &settings)?;
        Ok((
            run.decisions,
            CapeDetails {
                mode: CapeMode::Wf,
                weights: run.weights,
                lambdas: run.lambdas,
                wf_warmup_rounds: run.wf_warmup_rounds,
                regret: None,
            },
        ))
    }
}

fn failed_cell(label: &str, gamma: f64, err: &Error) -> CellReport {
    CellReport {
        strategy: label.to_string(),
        gamma,
        final_wealth: 0.0,
        ledger: None,
        error: Some(err.to_string()),
        cape: None,
    }
}

fn metadata(spec: &ExperimentSpec) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert(
        "entry_cost".into(),
        "not charged (b_1 is established for free)".into(),
    );
    m.insert(
        "final_round_cost".into(),
        "not charged (no decision after the last day)".into(),
    );
    m.insert(
        "strategy_variants".into(),
        "EG multiplicative; PAMR-0; OLMAR-1 (simple moving average); Anticor single window, no BAH wrapper".into(),
    );
    m.insert(
        "anticor_caveat".into(),
        "published tables may use a buy-and-hold wrapper over several Anticor windows".into(),
    );
    m.insert(
        "wf_scoring".into(),
        "net of commissions at the cell's gamma".into(),
    );
    m.insert(
        "cape".into(),
        format!(
            "eta={} epsilon={} lambda={} wf_window={} reselect={:?}",
            spec.cape.eta,
            spec.cape.epsilon,
            spec.cape.lambda,
            spec.cape.wf_window,
            spec.cape.reselect
        ),
    );
    m.insert(
        "cape_experts".into(),
        spec.cape
            .experts
            .iter()
            .map(|k| k.label())
            .collect::<Vec<_>>()
            .join(","),
    );
    m
}

/// Runs every (strategy, gamma) cell. Cells that fail numerically are reported
/// with `final_wealth = 0` and an error message; the others proceed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport> {
    let started = Instant::now();
    let engine = Engine::new(spec)?;
    let cells: Vec<CellReport> = spec
        .strategies
        .par_iter()
        .map(|&k| engine.cells_for(k))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(RunReport {
        dataset: engine.market.name.clone(),
        n: engine.market.n(),
        t: engine.market.len(),
        gammas: spec.gammas.clone(),
        strategies: spec
            .strategies
            .iter()
            .map(|s| s.label(spec.cape.mode).to_string())
            .collect(),
        cells,
        metadata: metadata(spec),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub window: usize,
    pub gamma: f64,
    pub final_wealth: f64,
}

/// One walk-forward CAPE run per window size and commission rate.
pub fn sensitivity_sweep(spec: &ExperimentSpec, windows: &[usize]) -> Result<Vec<SensitivityRow>> {
    if let Some(w) = windows.iter().find(|&&w| w < 2) {
        return Err(Error::Config(format!("window {w} is smaller than 2")));
    }
    let engine = Engine::new(spec)?;
    let jobs: Vec<(usize, f64)> = windows
        .iter()
        .flat_map(|&w| spec.gammas.iter().map(move |&g| (w, g)))
        .collect();
    jobs.par_iter()
        .map(|&(window, gamma)| {
            let (decisions, _) = engine.cape_wf(gamma, window)?;
            let ledger = run_ledger(&decisions, &engine.market, CommissionRate::new(gamma)?)?;
            Ok(SensitivityRow {
                window,
                gamma,
                final_wealth: ledger.final_wealth(),
            })
        })
        .collect()
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("window,gamma,final_wealth\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.window, r.gamma, r.final_wealth);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Both,
}

/// Wealth table: one row per (dataset, gamma), one column per strategy.
pub fn wealth_table_csv(report: &RunReport) -> String {
    let mut out = String::from("dataset,gamma");
    for s in &report.strategies {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    if report.strategies.is_empty() {
        return out;
    }
    for &g in &report.gammas {
        let _ = write!(out, "{},{}", report.dataset, g);
        for s in &report.strategies {
            match report.wealth(s, g) {
                Some(w) => {
                    let _ = write!(out, ",{w}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn file_label(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the report to `dir` and returns the written paths.
///
/// CSV output: `wealth_table.csv`, `ledger_<strategy>_<gamma>.csv`,
/// `weights_cape.csv`, `regret.csv` and the long-format `wealth_long.csv`.
/// JSON output: `report.json`.
pub fn emit_report(
    report: &RunReport,
    dir: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut emit = |name: String, contents: String| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };

    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        emit("wealth_table.csv".into(), wealth_table_csv(report))?;

        let mut long = String::from("strategy,gamma,t,cumulative_wealth\n");
        let mut weights = String::from("strategy,gamma,round,lambda,weights\n");
        let mut regret = String::from("strategy,gamma,t,regret,regret_over_log_t\n");
        let mut any_cape = false;
        let mut any_regret = false;
        for cell in &report.cells {
            if let Some(ledger) = &cell.ledger {
                emit(
                    format!("ledger_{}_{}.csv", file_label(&cell.strategy), cell.gamma),
                    ledger.to_csv(),
                )?;
                for r in &ledger.records {
                    let _ = writeln!(
                        long,
                        "{},{},{},{}",
                        cell.strategy, cell.gamma, r.t, r.cumulative_wealth
                    );
                }
            }
            if let Some(details) = &cell.cape {
                any_cape = true;
                for (t, (w, l)) in details.weights.iter().zip(&details.lambdas).enumerate() {
                    let joined = w.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
                    let _ = writeln!(
                        weights,
                        "{},{},{},{},{}",
                        cell.strategy,
                        cell.gamma,
                        t + 1,
                        l,
                        joined
                    );
                }
                if let Some(trace) = &details.regret {
                    any_regret = true;
                    for p in &trace.points {
                        let ratio = p.ratio.map(|r| r.to_string()).unwrap_or_default();
                        let _ = writeln!(
                            regret,
                            "{},{},{},{},{}",
                            cell.strategy, cell.gamma, p.t, p.regret, ratio
                        );
                    }
                }
            }
        }
        emit("wealth_long.csv".into(), long)?;
        if any_cape {
            emit("weights_cape.csv".into(), weights)?;
        }
        if any_regret {
            emit("regret.csv".into(), regret)?;
        }
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        emit("report.json".into(), report.to_json()?)?;
    }
    Ok(written)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunReport::from_json(&text)
}

/// Process exit code for an error: 1 configuration, 2 data, 3 numerical.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config(_) | Error::Json(_) => 1,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}
