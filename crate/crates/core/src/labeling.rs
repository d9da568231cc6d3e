//! Stock-trend labels derived from closing prices around an event date.
//!
//! The trading calendar is whatever dates a ticker's series contains; the
//! event date itself need not be a trading date. The daily label compares
//! the first close after the event with the last close before it; the
//! weekly label compares the means of the five trading days on either
//! side. Ties and declines both label 0, so labels are binary.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Daily,
    Weekly,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Daily => write!(f, "daily"),
            Horizon::Weekly => write!(f, "weekly"),
        }
    }
}

impl FromStr for Horizon {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "daily" => Ok(Horizon::Daily),
            "weekly" => Ok(Horizon::Weekly),
            other => Err(format!("unknown horizon '{other}' (expected daily or weekly)")),
        }
    }
}

/// Why an event could not be labeled.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Unlabelable {
    #[error("no price series for ticker '{0}'")]
    UnknownTicker(String),
    #[error("no trading dates before {0}")]
    NoHistoryBefore(NaiveDate),
    #[error("no trading dates after {0}")]
    NoHistoryAfter(NaiveDate),
    #[error("only {available} trading dates before {date}, need {needed}")]
    ShortHistoryBefore {
        date: NaiveDate,
        available: usize,
        needed: usize,
    },
    #[error("only {available} trading dates after {date}, need {needed}")]
    ShortHistoryAfter {
        date: NaiveDate,
        available: usize,
        needed: usize,
    },
}

#[derive(Debug, Error)]
pub enum PriceError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed price row '{row}'")]
    MalformedRow { line: usize, row: String },
    #[error("line {line}: bad date '{value}' (expected YYYY-MM-DD)")]
    BadDate { line: usize, value: String },
    #[error("line {line}: close {value} is not a positive finite number")]
    BadClose { line: usize, value: String },
    #[error("line {line}: duplicate close for {ticker} on {date}")]
    DuplicateRow {
        line: usize,
        ticker: String,
        date: NaiveDate,
    },
}

/// One ticker's closes, sorted by date.
#[derive(Debug, Clone, Default)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Number of trading dates strictly before `date`; also the index of
    /// the first trading date at or after it.
    fn partition(&self, date: NaiveDate) -> usize {
        self.dates.partition_point(|&d| d < date)
    }

    /// Closes for the `k` trading dates strictly before `date`, oldest
    /// first.
    pub fn closes_before(&self, date: NaiveDate, k: usize) -> Option<&[f64]> {
        let p = self.partition(date);
        if p < k {
            None
        } else {
            Some(&self.closes[p - k..p])
        }
    }

    /// Closes for the `k` trading dates strictly after `date`, oldest
    /// first.
    pub fn closes_after(&self, date: NaiveDate, k: usize) -> Option<&[f64]> {
        let mut p = self.partition(date);
        if self.dates.get(p) == Some(&date) {
            p += 1;
        }
        if p + k > self.closes.len() {
            None
        } else {
            Some(&self.closes[p..p + k])
        }
    }
}

/// All tickers' series, keyed by ticker symbol.
#[derive(Debug, Default)]
pub struct PriceStore {
    series: HashMap<String, PriceSeries>,
}

impl PriceStore {
    pub fn series(&self, ticker: &str) -> Option<&PriceSeries> {
        self.series.get(ticker)
    }

    pub fn n_tickers(&self) -> usize {
        self.series.len()
    }
}

/// Parses `ticker,date,close` CSV (with optional header) into sorted
/// per-ticker series.
pub fn load_prices(r: impl BufRead) -> Result<PriceStore, PriceError> {
    let mut rows: HashMap<String, Vec<(NaiveDate, f64, usize)>> = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 1 && trimmed.eq_ignore_ascii_case("ticker,date,close") {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() != 3 {
            return Err(PriceError::MalformedRow {
                line: line_no,
                row: trimmed.to_string(),
            });
        }
        let ticker = parts[0].trim();
        if ticker.is_empty() {
            return Err(PriceError::MalformedRow {
                line: line_no,
                row: trimmed.to_string(),
            });
        }
        let date = NaiveDate::parse_from_str(parts[1].trim(), "%Y-%m-%d").map_err(|_| {
            PriceError::BadDate {
                line: line_no,
                value: parts[1].trim().to_string(),
            }
        })?;
        let close: f64 = parts[2].trim().parse().map_err(|_| PriceError::BadClose {
            line: line_no,
            value: parts[2].trim().to_string(),
        })?;
        if !close.is_finite() || close <= 0.0 {
            return Err(PriceError::BadClose {
                line: line_no,
                value: parts[2].trim().to_string(),
            });
        }
        rows.entry(ticker.to_string()).or_default().push((date, close, line_no));
    }
    let mut store = PriceStore::default();
    for (ticker, mut list) in rows {
        list.sort_by_key(|&(d, _, _)| d);
        let mut series = PriceSeries::default();
        for &(date, close, line) in &list {
            if series.dates.last() == Some(&date) {
                return Err(PriceError::DuplicateRow {
                    line,
                    ticker: ticker.clone(),
                    date,
                });
            }
            series.dates.push(date);
            series.closes.push(close);
        }
        store.series.insert(ticker, series);
    }
    Ok(store)
}

pub fn load_prices_file(path: &Path) -> Result<PriceStore, PriceError> {
    let f = std::fs::File::open(path)?;
    load_prices(std::io::BufReader::new(f))
}

/// An earnings-call event to be labeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallEvent {
    pub doc_id: String,
    pub ticker: String,
    pub call_date: NaiveDate,
}

/// 1 when the first close after the date exceeds the last close before it;
/// 0 otherwise (ties included).
pub fn daily_label(series: &PriceSeries, date: NaiveDate) -> Result<u8, Unlabelable> {
    let before = series
        .closes_before(date, 1)
        .ok_or(Unlabelable::NoHistoryBefore(date))?;
    let after = series
        .closes_after(date, 1)
        .ok_or(Unlabelable::NoHistoryAfter(date))?;
    Ok(u8::from(after[0] > before[0]))
}

const WEEK: usize = 5;

/// 1 when the mean close of the five trading dates after the date exceeds
/// the mean of the five before; 0 otherwise.
pub fn weekly_label(series: &PriceSeries, date: NaiveDate) -> Result<u8, Unlabelable> {
    let before = series.closes_before(date, WEEK).ok_or_else(|| {
        let available = series.partition(date);
        if available == 0 {
            Unlabelable::NoHistoryBefore(date)
        } else {
            Unlabelable::ShortHistoryBefore {
                date,
                available,
                needed: WEEK,
            }
        }
    })?;
    let after = series.closes_after(date, WEEK).ok_or_else(|| {
        let mut p = series.partition(date);
        if series.dates.get(p) == Some(&date) {
            p += 1;
        }
        let available = series.len() - p;
        if available == 0 {
            Unlabelable::NoHistoryAfter(date)
        } else {
            Unlabelable::ShortHistoryAfter {
                date,
                available,
                needed: WEEK,
            }
        }
    })?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(u8::from(mean(after) > mean(before)))
}

pub fn label_event(
    store: &PriceStore,
    event: &CallEvent,
    horizon: Horizon,
) -> Result<u8, Unlabelable> {
    let series = store
        .series(&event.ticker)
        .ok_or_else(|| Unlabelable::UnknownTicker(event.ticker.clone()))?;
    match horizon {
        Horizon::Daily => daily_label(series, event.call_date),
        Horizon::Weekly => weekly_label(series, event.call_date),
    }
}

/// One emitted label row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub doc_id: String,
    pub horizon: Horizon,
    pub label: u8,
}
