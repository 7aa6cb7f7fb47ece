//! Relative-price market sequences.
//!
//! Day `t` of a market is a vector of price relatives, `close_t / close_{t-1}`
//! for every stock. Sequences are loaded from CSV (one row per day, one column
//! per stock), derived from raw closing prices, or generated synthetically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One day of price relatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarketVector(Vec<f64>);

impl MarketVector {
    pub fn new(relatives: Vec<f64>) -> Result<Self> {
        if relatives.is_empty() {
            return Err(Error::InvalidInput("market vector is empty".into()));
        }
        if let Some(i) = relatives.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidInput(format!(
                "relative price {} at stock {} is not a finite non-negative number",
                relatives[i],
                i + 1
            )));
        }
        if relatives.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidInput("every relative price is zero".into()));
        }
        Ok(Self(relatives))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
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

    pub fn has_zero(&self) -> bool {
        self.0.iter().any(|&x| x == 0.0)
    }

    /// Inner product with a weight vector of the same dimension.
    pub fn dot(&self, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.0.len());
        self.0.iter().zip(weights).map(|(x, w)| x * w).sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|x| x * c).collect())
    }
}

impl std::ops::Index<usize> for MarketVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// An ordered list of `T` market vectors over the same `n` stocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSequence {
    pub name: String,
    pub symbols: Vec<String>,
    /// Opaque label for the first day; never interpreted.
    pub start_day: Option<String>,
    vectors: Vec<MarketVector>,
}

impl MarketSequence {
    pub fn new(
        name: impl Into<String>,
        symbols: Vec<String>,
        vectors: Vec<MarketVector>,
    ) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidInput(
                "market sequence needs at least one day".into(),
            ));
        }
        let n = symbols.len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "market sequence needs at least one stock".into(),
            ));
        }
        for v in &vectors {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            symbols,
            start_day: None,
            vectors,
        })
    }

    /// Builds a sequence with generated symbols `S1..Sn`.
    pub fn from_vectors(name: impl Into<String>, vectors: Vec<MarketVector>) -> Result<Self> {
        let n = vectors.first().map_or(0, MarketVector::len);
        Self::new(name, default_symbols(n), vectors)
    }

    /// Convenience constructor from raw rows; every row is validated.
    pub fn from_rows(name: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let vectors = rows
            .into_iter()
            .map(MarketVector::new)
            .collect::<Result<Vec<_>>>()?;
        Self::from_vectors(name, vectors)
    }

    /// Number of stocks.
    pub fn n(&self) -> usize {
        self.symbols.len()
    }

    /// Number of days.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[MarketVector] {
        &self.vectors
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MarketVector> {
        self.vectors.iter()
    }

    /// A contiguous sub-range of days as its own sequence.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let vectors = self
            .vectors
            .get(range.clone())
            .ok_or_else(|| Error::InvalidInput(format!("window {range:?} out of bounds")))?
            .to_vec();
        Self::new(self.name.clone(), self.symbols.clone(), vectors)
    }
}

fn default_symbols(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("S{i}")).collect()
}

/// Loads a CSV of relative prices: a header row of stock symbols, then one row per day.
///
/// Errors name the offending cell with 1-based row/column numbers (the header is row 1).
/// Zero relatives are accepted but logged, since the log-loss of a portfolio fully
/// concentrated in a zeroed stock is undefined.
pub fn load_market_csv(path: impl AsRef<Path>) -> Result<MarketSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "market".to_string());
    parse_market_csv(&name, &text)
}

/// Parses CSV text in the same format as [`load_market_csv`].
pub fn parse_market_csv(name: &str, text: &str) -> Result<MarketSequence> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let symbols: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let n = symbols.len();
    if n == 0 || symbols.iter().all(String::is_empty) {
        return Err(Error::InvalidInput(
            "missing header row of stock symbols".into(),
        ));
    }

    let mut vectors = Vec::new();
    let mut zero_days = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record?;
        if record.len() != n {
            return Err(Error::Ragged {
                row,
                expected: n,
                found: record.len(),
            });
        }
        let mut relatives = Vec::with_capacity(n);
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Cell {
                row,
                column: col + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: col + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            if value < 0.0 {
                return Err(Error::Cell {
                    row,
                    column: col + 1,
                    message: format!("negative relative price {value}"),
                });
            }
            relatives.push(value);
        }
        let vector = MarketVector::new(relatives).map_err(|e| Error::Cell {
            row,
            column: 1,
            message: e.to_string(),
        })?;
        if vector.has_zero() {
            zero_days += 1;
        }
        vectors.push(vector);
    }
    if vectors.is_empty() {
        return Err(Error::InvalidInput(format!("{name}: no data rows")));
    }
    if zero_days > 0 {
        log::warn!("{name}: {zero_days} day(s) contain zero relative prices");
    }
    MarketSequence::new(name, symbols, vectors)
}

/// Canonical CSV rendering: shortest round-trip decimal for every value.
pub fn write_csv(seq: &MarketSequence) -> String {
    let mut out = seq.symbols.join(",");
    out.push('\n');
    for v in seq.iter() {
        for (i, x) in v.as_slice().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv_file(seq: &MarketSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_csv(seq)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Converts a `T x n` matrix of closing prices into `T - 1` days of relatives.
pub fn from_price_levels(closes: &[Vec<f64>]) -> Result<MarketSequence> {
    if closes.len() < 2 {
        return Err(Error::InvalidInput(
            "at least two rows of closing prices are required".into(),
        ));
    }
    let n = closes[0].len();
    for (t, row) in closes.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Ragged {
                row: t + 1,
                expected: n,
                found: row.len(),
            });
        }
        if let Some(i) = row.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Cell {
                row: t + 1,
                column: i + 1,
                message: format!("price {} is not positive", row[i]),
            });
        }
    }
    let vectors = closes
        .windows(2)
        .map(|pair| {
            MarketVector::new(
                pair[1]
                    .iter()
                    .zip(&pair[0])
                    .map(|(next, prev)| next / prev)
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MarketSequence::from_vectors("prices", vectors)
}

/// Generative model for synthetic markets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticModel {
    /// `x_i = exp(mu_i + sigma_i * z)` with independent standard normal `z`.
    /// A single `mu` or `sigma` entry applies to every stock.
    IidLognormal {
        #[serde(deserialize_with = "scalar_or_vec")]
        mu: Vec<f64>,
        #[serde(deserialize_with = "scalar_or_vec")]
        sigma: Vec<f64>,
    },
    /// Each stock sits in one of two relative levels and flips with
    /// `switch_probability` after every day. Stocks start in alternating states.
    MeanReverting {
        up: f64,
        down: f64,
        switch_probability: f64,
    },
}

fn scalar_or_vec<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn per_stock(values: &[f64], i: usize) -> f64 {
    if values.len() == 1 {
        values[0]
    } else {
        values[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMarketSpec {
    pub n: usize,
    #[serde(rename = "T", alias = "t")]
    pub t: usize,
    pub model: SyntheticModel,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticMarketSpec {
    pub fn iid_lognormal(n: usize, t: usize, mu: f64, sigma: f64, seed: u64) -> Self {
        Self {
            n,
            t,
            model: SyntheticModel::IidLognormal {
                mu: vec![mu; n],
                sigma: vec![sigma; n],
            },
            seed,
        }
    }

    pub fn mean_reverting(
        n: usize,
        t: usize,
        up: f64,
        down: f64,
        switch_probability: f64,
        seed: u64,
    ) -> Self {
        Self {
            n,
            t,
            model: SyntheticModel::MeanReverting {
                up,
                down,
                switch_probability,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "synthetic market needs n >= 2, got {}",
                self.n
            )));
        }
        if self.t < 1 {
            return Err(Error::Config("synthetic market needs T >= 1".into()));
        }
        match &self.model {
            SyntheticModel::IidLognormal { mu, sigma } => {
                let fits = |len: usize| len == 1 || len == self.n;
                if !fits(mu.len()) || !fits(sigma.len()) {
                    return Err(Error::Config(format!(
                        "mu and sigma must have 1 or {} entries (got {} and {})",
                        self.n,
                        mu.len(),
                        sigma.len()
                    )));
                }
                if mu.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Config("mu entries must be finite".into()));
                }
                if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::Config("sigma entries must be positive".into()));
                }
            }
            SyntheticModel::MeanReverting {
                up,
                down,
                switch_probability,
            } => {
                if !(up.is_finite() && *up > 0.0 && down.is_finite() && *down > 0.0) {
                    return Err(Error::Config("relative levels must be positive".into()));
                }
                if !(0.0..=1.0).contains(switch_probability) {
                    return Err(Error::Config(
                        "switch probability must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic synthetic market; equal specs give bitwise-equal output.
pub fn generate_synthetic(spec: &SyntheticMarketSpec) -> Result<MarketSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut vectors = Vec::with_capacity(spec.t);
    match &spec.model {
        SyntheticModel::IidLognormal { mu, sigma } => {
            for _ in 0..spec.t {
                let day = (0..spec.n)
                    .map(|i| {
                        let z: f64 = rng.sample(StandardNormal);
                        (per_stock(mu, i) + per_stock(sigma, i) * z).exp()
                    })
                    .collect();
                vectors.push(MarketVector::new(day)?);
            }
        }
        SyntheticModel::MeanReverting {
            up,
            down,
            switch_probability,
        } => {
            let levels = [*up, *down];
            let mut state: Vec<usize> = (0..spec.n).map(|i| i % 2).collect();
            for _ in 0..spec.t {
                vectors.push(MarketVector::new(
                    state.iter().map(|&s| levels[s]).collect(),
                )?);
                for s in state.iter_mut() {
                    // always draw so the stream does not depend on the probability
                    let u: f64 = rng.random();
                    if u < *switch_probability {
                        *s = 1 - *s;
                    }
                }
            }
        }
    }
    let name = match spec.model {
        SyntheticModel::IidLognormal { .. } => "synthetic-iid",
        SyntheticModel::MeanReverting { .. } => "synthetic-mr",
    };
    MarketSequence::from_vectors(name, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_row_file() {
        let seq = parse_market_csv("m", "A,B\n1.0,1.0\n2.0,0.5").unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.n(), 2);
        assert_eq!(seq.vectors()[0].as_slice(), &[1.0, 1.0]);
        assert_eq!(seq.vectors()[1].as_slice(), &[2.0, 0.5]);
        assert_eq!(seq.symbols, vec!["A", "B"]);
    }

    #[test]
    fn negative_cell_reports_location() {
        let err = parse_market_csv("m", "A,B\n1.0,1.0\n-1.0,2.0").unwrap_err();
        match err {
            Error::Cell { row, column, .. } => assert_eq!((row, column), (3, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_ragged_rows() {
        let err = parse_market_csv("m", "A,B\n1.0,abc").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Cell {
                    row: 2,
                    column: 2,
                    ..
                }
            ),
            "{err:?}"
        );
        let err = parse_market_csv("m", "A,B\n1.0,1.0\n1.0").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Ragged {
                    row: 3,
                    expected: 2,
                    found: 1
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn zero_relatives_are_accepted() {
        let seq = parse_market_csv("m", "A,B\n0,1.5").unwrap();
        assert!(seq.vectors()[0].has_zero());
        assert!(parse_market_csv("m", "A,B\n0,0").is_err());
    }

    #[test]
    fn missing_file() {
        let err = load_market_csv("/definitely/not/here.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn price_levels_to_relatives() {
        let seq = from_price_levels(&[vec![10.0, 20.0], vec![20.0, 10.0]]).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.vectors()[0].as_slice(), &[2.0, 0.5]);

        let seq = from_price_levels(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]]).unwrap();
        assert_eq!(seq.vectors()[0].as_slice(), &[2.0, 2.0]);
        assert_eq!(seq.vectors()[1].as_slice(), &[2.0, 2.0]);

        let flat = from_price_levels(&vec![vec![3.5, 7.25, 1.0]; 5]).unwrap();
        assert!(flat.iter().all(|v| v.as_slice() == [1.0, 1.0, 1.0]));
    }

    #[test]
    fn price_levels_errors() {
        assert!(from_price_levels(&[vec![1.0, 2.0]]).is_err());
        assert!(from_price_levels(&[vec![1.0, 2.0], vec![0.0, 2.0]]).is_err());
        assert!(from_price_levels(&[vec![1.0, 2.0], vec![-1.0, 2.0]]).is_err());
    }

    #[test]
    fn synthetic_degenerate_noise() {
        let spec = SyntheticMarketSpec::iid_lognormal(4, 50, 0.0, 1e-12, 7);
        let seq = generate_synthetic(&spec).unwrap();
        for v in seq.iter() {
            for &x in v.as_slice() {
                assert!((x - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticMarketSpec::iid_lognormal(5, 100, 0.001, 0.02, 42);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticMarketSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mean_reverting_with_certain_switch_alternates() {
        let spec = SyntheticMarketSpec::mean_reverting(3, 6, 1.1, 0.9, 1.0, 1);
        let seq = generate_synthetic(&spec).unwrap();
        // stock 1 starts up, stock 2 down, stock 3 up; every state flips daily
        let expected = [
            [1.1, 0.9, 1.1],
            [0.9, 1.1, 0.9],
            [1.1, 0.9, 1.1],
            [0.9, 1.1, 0.9],
            [1.1, 0.9, 1.1],
            [0.9, 1.1, 0.9],
        ];
        for (v, e) in seq.iter().zip(expected) {
            assert_eq!(v.as_slice(), &e);
        }
    }

    #[test]
    fn synthetic_validation() {
        assert!(
            generate_synthetic(&SyntheticMarketSpec::iid_lognormal(1, 5, 0.0, 0.1, 0)).is_err()
        );
        assert!(
            generate_synthetic(&SyntheticMarketSpec::iid_lognormal(2, 0, 0.0, 0.1, 0)).is_err()
        );
        assert!(
            generate_synthetic(&SyntheticMarketSpec::iid_lognormal(2, 5, 0.0, 0.0, 0)).is_err()
        );
        assert!(
            generate_synthetic(&SyntheticMarketSpec::mean_reverting(2, 5, 1.1, 0.9, 1.5, 0))
                .is_err()
        );
    }

    #[test]
    fn synthetic_spec_json() {
        let json = r#"{"n":2,"T":3,"model":{"kind":"mean_reverting","up":1.2,"down":0.8,"switch_probability":0.5},"seed":9}"#;
        let spec: SyntheticMarketSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.t, 3);
        assert_eq!(generate_synthetic(&spec).unwrap().len(), 3);
    }
}
