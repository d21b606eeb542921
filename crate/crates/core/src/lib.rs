//! Multi-key TFHE building blocks over a 32-bit discretized torus.

pub mod activation;
pub mod backend;
pub mod circuits;
pub mod codec;
pub mod data;
pub mod error;
pub mod protocol;
pub mod recipes;
pub mod report;
pub mod shares;
pub mod tlwe;
pub mod torus;
pub mod train;

pub use activation::{ActKind, ActSpec};
pub use backend::{BackendKind, EncBit, GateCounter, GateKind, Session};
pub use circuits::{Combiner, EncWord};
pub use error::{Error, Result};
pub use shares::{ArithShare, Holder, ShareBatch};
pub use tlwe::{MKCiphertext, MKParams, PartialDec, PublicKey, SecretKey};
pub use torus::{decode_quarter_bit, Decoded, NoiseParams, NoiseSampler, Torus32};
pub use data::{Dataset, GenConfig, PrepMode, RawDataset, Standardizer};
pub use train::{Mode, ScaleConfig};
