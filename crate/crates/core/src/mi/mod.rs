//! Post-hoc leakage evaluation: the KSG estimator, exact discrete mutual
//! information, the flatness pathology table and Welch spectra.

mod discrete;
mod ksg;
mod pathology;
mod psd;

pub use discrete::{exact_discrete_mi, iid_lower_bound_check, DiscreteJoint, MarkovChainSpec, MAX_ENUMERATION};
pub use ksg::{digamma_int, episode_mi, ksg_mi, per_step_mi, KsgConfig};
pub use pathology::{flatness_pathology, PathologyRow, SyntheticLinearPolicy};
pub use psd::{welch_psd, PsdConfig, Spectrum};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MiError {
    #[error("need more than k = {k} samples, got {n}")]
    TooFewSamples { n: usize, k: usize },
    #[error("coordinate {0} has zero variance after jitter")]
    ZeroVariance(usize),
    #[error("sample sets disagree in size or dimension")]
    DimensionMismatch,
    #[error("samples must be finite")]
    NonFinite,
    #[error("invalid joint distribution: {0}")]
    InvalidJoint(String),
    #[error("enumeration over {0} sequence pairs exceeds the limit")]
    AlphabetTooLarge(u128),
    #[error("signal of length {len} shorter than segment length {segment}")]
    SignalTooShort { len: usize, segment: usize },
    #[error("no input episodes")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
