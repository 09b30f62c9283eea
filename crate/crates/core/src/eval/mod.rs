//! Quality of a trained autoencoder: Stiefel reconstruction metrics, K-NN on
//! codes and the manifold tangent classifier.

mod knn;
mod mtc;
mod stiefel;

pub use knn::{knn_accuracies, knn_accuracy, knn_on_codes, knn_predict, Neighbours};
pub use mtc::{classify, softmax, tangent_bases, train_mtc, MtcConfig, MtcModel, MtcReport};
pub use stiefel::{stiefel_metrics, stiefel_metrics_from, StiefelMetrics};
