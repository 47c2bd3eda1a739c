//! Differentially private text rewriting by masked-token replacement.
//!
//! Every token of an input text is masked in turn and refilled by sampling
//! from a masked scorer's clipped, temperature-scaled logits. With logits
//! clipped to a range of width `Δu` and temperature `T = 2Δu/ε`, each
//! replacement is an exponential-mechanism draw and costs ε; a rewrite of
//! `n` replaced tokens costs `nε` by sequential composition.
//!
//! ```
//! use dpmlm::{BuiltinScorer, ClipRange, Epsilon, RewriteConfig, Rewriter};
//!
//! let scorer = BuiltinScorer::toy(500).unwrap();
//! let config = RewriteConfig::new(Epsilon::new(25.0).unwrap(), ClipRange::new(0.0, 2.0).unwrap());
//! let result = Rewriter::new(&scorer, &config).unwrap().rewrite("The dog slept in the park.").unwrap();
//! assert_eq!(result.ledger.total(), 25.0 * 7.0);
//! ```

pub mod accountant;
pub mod calibration;
pub mod error;
pub mod evalkit;
pub mod mechanism;
pub mod rewriter;
pub mod scorer;
pub mod seed;
pub mod verifier;

pub use accountant::{BudgetLedger, BudgetReport};
pub use calibration::{Calibration, LogitSampleStats};
pub use error::{Error, Result};
pub use mechanism::{ClipRange, Epsilon, LogitVector, ProbabilityVector};
pub use rewriter::{RerankConfig, RewriteConfig, RewriteResult, Rewriter, StopwordPolicy};
pub use scorer::{BuiltinScorer, Embedder, MaskQuery, RemoteScorer, Scorer, Vocabulary};
pub use verifier::{LdpReport, MechanismVariant};
