//! Imbalance price data: loading, validation, train/validation/test
//! splitting, episode sampling and synthetic waveforms.

mod load;
mod record;
mod split;
mod synth;

pub use load::{load_prices, LoadReport, PriceFileFormat};
pub use record::{Day, PriceRecord, PriceSeries, MINUTES_PER_DAY, MINUTES_PER_QUARTER_HOUR};
pub use split::{sample_episode, split, SplitSpec};
pub use synth::{synthesize_prices, WaveformSpec};

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read price file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed price file: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Parse { row: u64, message: String },
    #[error("row {row}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { row: u64, timestamp: NaiveDateTime },
    #[error("settlement price not constant within quarter-hour {quarter_hour} of {date}")]
    InconsistentSettlement { date: NaiveDate, quarter_hour: u32 },
    #[error("no complete days in input")]
    NoCompleteDays,
    #[error("day {date} is incomplete ({records} of 1440 records)")]
    IncompleteDay { date: NaiveDate, records: usize },
    #[error("record {index} of day {date} is out of place or has non-finite prices")]
    MalformedDay { date: NaiveDate, index: usize },
    #[error("price series is empty")]
    EmptySeries,
    #[error("day {0} appears more than once")]
    DuplicateDay(NaiveDate),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
}
