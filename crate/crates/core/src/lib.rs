//! Saliency-guided sparse white-box adversarial attacks over a minimal
//! neural-network engine, with epsilon-ball baselines and a benchmark
//! harness.
//!
//! The attack ranks input features by Taylor-decomposition relevance, then
//! enables them one at a time for an inner gradient loop that minimizes the
//! true-class logit plus a weighted L2 distance. Perturbations stay sparse
//! because a feature only changes once the outer loop has enabled it.

pub mod attacks;
pub mod dataset;
pub mod dtd;
pub mod error;
pub mod explain;
pub mod forward;
pub mod grad;
pub mod metrics;
pub mod model_io;
pub mod network;
pub mod seeds;
pub mod suite;
pub mod tensor;
pub mod train;

pub use attacks::{
    ae_gen, attack_objective, bim, clip_box, di_aa, fgsm, pgd, AttackConfig, AttackOutcome, Mask,
};
pub use dataset::{load_dataset, DataFormat, Dataset};
pub use dtd::{dtd_relevance, sort_saliency, FeatureOrder, RelevanceMap};
pub use error::{Error, Result};
pub use forward::{forward, ForwardTrace};
pub use grad::{input_gradient, ObjectiveSpec};
pub use metrics::{lp_norms, SummaryStats};
pub use model_io::{load_model, model_file_hash, save_model};
pub use network::{dense_arch, fold_batchnorm, Layer, Network};
pub use tensor::{softmax_probs, Tensor};
pub use train::{
    adversarial_train, evaluate_accuracy, train, AdvTrainConfig, OptimizerKind, TrainConfig,
};
