use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numerology index {0} out of range (expected 0, 1 or 2)")]
    InvalidNumerology(u8),

    #[error("unsupported numerology: {0}")]
    UnsupportedNumerology(String),

    #[error("unsupported bandwidth/SCS pair: {bw_mhz} MHz at {scs_khz} kHz")]
    UnsupportedBandwidth { bw_mhz: u32, scs_khz: u32 },

    #[error("UE processing capability {0} not supported (expected 1 or 2)")]
    InvalidCapability(u8),

    #[error("CQI {0} is out of range for transmission")]
    CqiOutOfRange(u8),

    #[error("distance {0} m is outside the cell")]
    OutsideCell(f64),

    #[error("invalid CQI map: {0}")]
    InvalidCqiMap(String),

    #[error("{payload_bits}-bit payload needs more than {max_rb} RBs")]
    InfeasibleAllocation { payload_bits: u32, max_rb: u16 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid request precedes released slots (slot {requested} < {first_live})")]
    SlotReleased { requested: u64, first_live: u64 },

    #[error("{0}")]
    Spec(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
