use thiserror::Error;

use crate::shares::Holder;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("party index {index} out of range 1..={k}")]
    PartyOutOfRange { index: usize, k: usize },
    #[error("no secret key supplied for active slot {0}")]
    MissingKey(usize),
    #[error("duplicate partial decryption from party {0}")]
    DuplicateParty(usize),
    #[error("missing partial decryption from party {0}")]
    MissingParty(usize),
    #[error("cannot extend a ciphertext with {have} slots down to {want}")]
    ExtendTooSmall { have: usize, want: usize },
    #[error("shares must come from opposite holders, both are {0:?}")]
    SameHolder(Holder),
    #[error("share batch mixes holders")]
    MixedHolders,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("backend mismatch: operands come from different backends")]
    BackendMismatch,
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("value {value} does not fit in {width}-bit two's complement")]
    Overflow { value: i64, width: usize },
    #[error("malformed encoding: {0}")]
    Codec(String),
    #[error("protocol aborted by {role}: {cause}")]
    Abort { role: String, cause: String },
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
