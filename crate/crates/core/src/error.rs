use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point ({lat}, {lon}) lies outside the study region")]
    OutOfRegion { lat: f64, lon: f64 },
    #[error("no home area inferable: every nighttime interval is null")]
    NoHomeInferable,
    #[error("no work area inferable: every daytime interval is null")]
    NoWorkInferable,
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("missing label pairs in reference data: {0:?}")]
    MissingPairs(Vec<(u32, u32)>),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used in machine-parseable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Domain(_) => "domain",
            Error::OutOfRegion { .. } => "out_of_region",
            Error::NoHomeInferable => "no_home",
            Error::NoWorkInferable => "no_work",
            Error::Vocabulary(_) => "vocabulary",
            Error::Training(_) => "training",
            Error::Degenerate(_) => "degenerate",
            Error::MissingPairs(_) => "missing_pairs",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
