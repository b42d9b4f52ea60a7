//! SPOC: estimation of the topic-document matrix of a pLSI topic model by
//! successive projection on the leading singular vectors of the observed
//! document-word frequency matrix.
//!
//! Module map:
//! - [`linalg`]: dense matrices, truncated SVD, norms
//! - [`spa`]: successive projection and the minimum-volume ellipsoid preconditioner
//! - [`spoc`]: the estimator of `W` and `A`, plus the adaptive choice of `K`
//! - [`synth`]: ground-truth generation and multinomial corpus sampling
//! - [`metrics`]: permutation-invariant errors and bound evaluators

pub mod assignment;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod spa;
pub mod spoc;
pub mod synth;

pub use error::{Result, SpocError};
pub use linalg::{DenseMatrix, SvdResult};
pub use spa::{AnchorIndexSet, Preconditioner};
pub use spoc::{SpocEstimate, SpocOptions};
pub use synth::{CorpusSample, RngSeed, TopicModelTruth};
