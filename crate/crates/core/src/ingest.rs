//! Daily OHLC price files → one sample group per ticker.
//!
//! The expected layout is a UTF-8, comma-separated file whose first line is a
//! header naming (case-insensitively) `date`, `symbol`, `open`, `close`,
//! `low` and `high`; further columns such as `volume` are ignored. Each day
//! becomes the 4-vector `(open, close, low, high)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::SampleGroup;

pub const DEFAULT_MIN_DAYS: usize = 30;
const COLUMNS: [&str; 6] = ["date", "symbol", "open", "close", "low", "high"];

#[derive(Debug, Clone, PartialEq)]
pub struct StockRecord {
    pub date: NaiveDate,
    pub symbol: String,
    pub open: f64,
    pub close: f64,
    pub low: f64,
    pub high: f64,
}

impl StockRecord {
    /// `low ≤ min(open, close)` and `high ≥ max(open, close)`.
    pub fn is_consistent(&self) -> bool {
        self.low <= self.open.min(self.close) && self.high >= self.open.max(self.close)
    }

    pub fn features(&self) -> Vec<f64> {
        vec![self.open, self.close, self.low, self.high]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub min_days: usize,
    /// Reject malformed rows and OHLC inconsistencies instead of skipping or
    /// logging them.
    pub strict: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            min_days: DEFAULT_MIN_DAYS,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StockData {
    /// Sorted by symbol; samples ordered by date.
    pub groups: Vec<SampleGroup>,
    pub rows_read: usize,
    pub skipped_rows: usize,
    pub duplicate_rows: usize,
    pub inconsistent_rows: usize,
    pub dropped_symbols: Vec<String>,
    pub dropped_rows: usize,
}

impl StockData {
    pub fn total_samples(&self) -> usize {
        self.groups.iter().map(SampleGroup::len).sum()
    }
}

pub fn load_stock_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<StockData> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_stock_csv(file, opts)
}

fn parse_row(record: &csv::StringRecord, idx: &[usize; 6]) -> std::result::Result<StockRecord, String> {
    let field = |i: usize| record.get(idx[i]).map(str::trim).ok_or_else(|| format!("missing {}", COLUMNS[i]));
    let raw_date = field(0)?;
    let date_part = raw_date.get(..10).unwrap_or(raw_date);
    let date = NaiveDate::parse_from_str(date_part, "%Y-%m-%d")
        .map_err(|e| format!("bad date {raw_date:?}: {e}"))?;
    let symbol = field(1)?;
    if symbol.is_empty() {
        return Err("empty symbol".into());
    }
    let mut prices = [0.0; 4];
    for (k, p) in prices.iter_mut().enumerate() {
        let text = field(k + 2)?;
        *p = text
            .parse::<f64>()
            .map_err(|e| format!("bad {} {text:?}: {e}", COLUMNS[k + 2]))?;
        if !(*p > 0.0 && p.is_finite()) {
            return Err(format!("{} must be positive, got {text}", COLUMNS[k + 2]));
        }
    }
    Ok(StockRecord {
        date,
        symbol: symbol.to_string(),
        open: prices[0],
        close: prices[1],
        low: prices[2],
        high: prices[3],
    })
}

pub fn read_stock_csv<R: Read>(reader: R, opts: &IngestOptions) -> Result<StockData> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))?;
    }

    let mut data = StockData::default();
    let mut by_symbol: BTreeMap<String, BTreeMap<NaiveDate, Vec<f64>>> = BTreeMap::new();
    for result in rdr.records() {
        let record = result?;
        data.rows_read += 1;
        let line = record.position().map_or(0, |p| p.line());
        let row = match parse_row(&record, &idx) {
            Ok(row) => row,
            Err(message) if opts.strict => return Err(Error::Row { line, message }),
            Err(message) => {
                warn!("skipping line {line}: {message}");
                data.skipped_rows += 1;
                continue;
            }
        };
        if !row.is_consistent() {
            if opts.strict {
                return Err(Error::Row {
                    line,
                    message: format!("inconsistent OHLC for {} on {}", row.symbol, row.date),
                });
            }
            data.inconsistent_rows += 1;
        }
        let days = by_symbol.entry(row.symbol.clone()).or_default();
        if days.insert(row.date, row.features()).is_some() {
            data.duplicate_rows += 1;
        }
    }
    if data.inconsistent_rows > 0 {
        warn!("{} rows violate low <= open/close <= high", data.inconsistent_rows);
    }

    for (symbol, days) in by_symbol {
        if days.len() < opts.min_days {
            data.dropped_rows += days.len();
            data.dropped_symbols.push(symbol);
            continue;
        }
        data.groups.push(SampleGroup::new(symbol, days.into_values().collect())?);
    }
    if !data.dropped_symbols.is_empty() {
        warn!(
            "dropped {} symbols with fewer than {} days",
            data.dropped_symbols.len(),
            opts.min_days
        );
    }
    Ok(data)
}

/// Adds independent `N(0, σ²)` noise to every coordinate of every sample.
pub fn add_noise<R: Rng + ?Sized>(groups: &[SampleGroup], sigma: f64, rng: &mut R) -> Vec<SampleGroup> {
    if sigma == 0.0 {
        return groups.to_vec();
    }
    groups
        .iter()
        .map(|g| {
            let samples = g
                .samples()
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            SampleGroup::new(g.id.clone(), samples).expect("shape preserved")
        })
        .collect()
}

/// Day-over-day log returns `ln(x_t / x_{t−1})` per coordinate.
pub fn log_returns(groups: &[SampleGroup]) -> Result<Vec<SampleGroup>> {
    groups
        .iter()
        .map(|g| {
            let samples = g
                .samples()
                .windows(2)
                .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b / a).ln()).collect())
                .collect();
            SampleGroup::new(g.id.clone(), samples)
        })
        .collect()
}

/// Deterministic synthetic OHLC history: `tickers` symbols split across four
/// sectors that differ in price level and volatility, with a shared
/// per-sector daily factor. Weekdays only, starting 2016-06-01.
pub fn synthetic_ohlc(tickers: usize, days: usize, seed: u64) -> Vec<StockRecord> {
    const LEVELS: [f64; 4] = [18.0, 45.0, 95.0, 170.0];
    const VOLS: [f64; 4] = [0.010, 0.014, 0.018, 0.024];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || rng.sample::<f64, _>(StandardNormal);

    let mut dates = Vec::with_capacity(days);
    let mut day = NaiveDate::from_ymd_opt(2016, 6, 1).expect("valid date");
    while dates.len() < days {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(day);
        }
        day = day + Days::new(1);
    }

    let sector_of = |t: usize| t % 4;
    let mut closes: Vec<f64> = (0..tickers)
        .map(|t| LEVELS[sector_of(t)] * (0.12 * normal()).exp())
        .collect();
    let mut out = Vec::with_capacity(tickers * days);
    for date in dates {
        let factors: Vec<f64> = (0..4).map(|_| normal()).collect();
        for (t, close) in closes.iter_mut().enumerate() {
            let s = sector_of(t);
            let open = *close * (0.2 * VOLS[s] * normal()).exp();
            let ret = VOLS[s] * (0.7 * factors[s] + 0.7 * normal());
            let new_close = open * ret.exp();
            let high = open.max(new_close) * (1.0 + 0.4 * VOLS[s] * normal().abs());
            let low = open.min(new_close) * (1.0 - 0.4 * VOLS[s] * normal().abs());
            let round = |x: f64| (x * 1e4).round() / 1e4;
            let (open, close_r, low, high) = (round(open), round(new_close), round(low), round(high));
            out.push(StockRecord {
                date,
                symbol: format!("SYN{t:02}"),
                open,
                close: close_r,
                low: low.min(open).min(close_r),
                high: high.max(open).max(close_r),
            });
            *close = new_close;
        }
    }
    out
}

/// Writes records in the `date,symbol,open,close,low,high,volume` layout.
pub fn write_stock_csv<W: Write>(records: &[StockRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "symbol", "open", "close", "low", "high", "volume"])?;
    for r in records {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.symbol.clone(),
            format!("{:.4}", r.open),
            format!("{:.4}", r.close),
            format!("{:.4}", r.low),
            format!("{:.4}", r.high),
            "0".to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
