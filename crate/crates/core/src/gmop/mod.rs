//! Toy trainer for a mixture of pseudo open-set detectors on synthetic
//! prototype data, with gated pairwise ranking loss and ablations.

mod ablate;
mod model;
mod partition;
mod task;
mod train;

pub use ablate::{ablate, AblationAxis, AblationRow, AblationTable, AblationValue};
pub use model::{
    cross_entropy, finite_difference_error, gated_pair_loss, gradient, objective, pair_loss_sum, pair_term,
    prototype_logit, rank_loss, Architecture, Forward, GateMode, Prompt, PrototypeScorer, ToyGmopModel,
    GRADIENT_CHECK_FLOOR,
};
pub use partition::{make_partitions, PseudoPartition};
pub use task::{generate_task, LabeledPoint, SyntheticTask, TaskConfig};
pub use train::{evaluate, test_evalset, train, untrained_model, TrainConfig, TrainRun, TrainTrace};
