//! Differentially private hyperdimensional classification.
//!
//! Cosine random-projection encoding, bundling classifier, Gaussian noise
//! calibration for class hypervectors, SNR prediction, encoding-spread
//! tuning, inversion attacks and inference-time dimension dropping.

pub mod attack;
pub mod bench;
pub mod classifier;
pub mod data;
pub mod dp;
pub mod error;
pub mod hdc;
pub mod io;
pub mod query_privacy;
pub mod rng;
pub mod snr;
pub mod tuner;

pub use classifier::{train, ClassHypervector, ClassModel, Prediction};
pub use dp::{calibrate_noise, check_dp_precondition, compute_sensitivity, privatize, retrain_private, PrivacyParams};
pub use error::{Error, ErrorKind, Result};
pub use hdc::{
    cosine_similarity, encode, generate_basis, quantize, BasisDescriptor, EncodedHypervector, FeatureVector, PhaseMode,
    QuantizedHypervector, RandomBasis,
};
