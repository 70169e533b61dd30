use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding an `SNUR` raster or `SNUT` topology file.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimensions {width}x{height} overflow the addressable size")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("unknown raster kind code {0}")]
    UnknownKind(u8),
    #[error("dtype {dtype} cannot hold a raster of kind {kind}")]
    DtypeKindMismatch { dtype: u8, kind: u8 },
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
    #[error("malformed content: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("itoh oracle inapplicable: {residues} residue(s) present")]
    OracleInapplicable { residues: usize },
    #[error("non-finite value at timestep {step}: {detail}")]
    Numerical { step: u32, detail: String },
    #[error("network of {requested} neurons exceeds capacity {max}")]
    Capacity { requested: usize, max: usize },
    #[error("decision trace is missing {0}")]
    TraceIncomplete(&'static str),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn raster(msg: impl Into<String>) -> Self {
        Error::InvalidRaster(msg.into())
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
