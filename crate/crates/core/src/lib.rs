//! Complementary-label learning laboratory.
//!
//! The crate models how complementary labels (classes an instance does *not*
//! belong to) are generated through a transition matrix `Q`, how constrained
//! labeling protocols bias that matrix, what the bias does to the conditional
//! entropy `H(Y | Ȳ)` and the Fano floor on classification error, and how
//! `Q`-aware losses (forward correction, unbiased risk estimation, complementary
//! probability estimation) train classifiers from such labels.
//!
//! Modules:
//! - [`transition`]: building, estimating, validating and inverting `Q`.
//! - [`infotheory`]: conditional entropy, mutual information, Fano bound and the
//!   sparse-vs-dense entropy ordering simulation.
//! - [`protocol`]: synthetic data, k-means, candidate label sets, annotation.
//! - [`learner`]: softmax classifiers with hand-written gradients for every loss.
//! - [`metrics`]: noise rate, imbalance ratio, empirical transitions, reports.
//! - [`cli`]: the `bicl` experiment driver.

pub mod cli;
pub mod error;
pub mod infotheory;
pub mod learner;
pub mod metrics;
pub mod numfmt;
pub mod protocol;
pub mod rng;
pub mod transition;

pub use error::{Error, Result};
pub use infotheory::{ClassPrior, InfoReport};
pub use learner::{
    Architecture, ClassifierParams, CpeVariant, LossKind, LossSpec, Optimizer, TrainConfig,
    TrainReport, UreCorrection,
};
pub use metrics::DatasetReport;
pub use protocol::{
    CandidateAssignment, CandidateMode, ClusterModel, ComplementaryDataset, LabeledDataset,
};
pub use transition::{InverseTransition, PairCounts, TransitionMatrix};
