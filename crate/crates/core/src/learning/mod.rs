//! Community federated learning: synthetic tasks, FedProx local training,
//! weighted aggregation, validation accuracy and the coefficient-of-variation
//! fairness metric with the per-device importance weights derived from it.

mod cov;
mod data;
mod model;
mod train;

pub use cov::{cov_from_accuracies, importance, update_cov, CommunityState, DEGENERATE_COV};
pub use data::{make_synthetic_tasks, Dataset, DeviceData, SyntheticTasks, TaskModel};
pub use model::{validation_accuracy, ModelParams, ModelShape};
pub use train::{
    aggregate, local_objective, local_train_fedprox, sgd_momentum, LocalUpdate, TrainOptions,
};
