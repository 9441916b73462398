//! End-to-end training pipelines: node classification and link
//! prediction, with their splits, metrics, ablation switches, and run
//! reports.

mod link_prediction;
mod metrics;
mod node_classification;
mod report;
mod split;

pub use link_prediction::{
    build_lp_operator, run_link_prediction, train_link_prediction,
    train_link_prediction_with_operator, train_graph_adjacency,
};
pub use metrics::{accuracy, auc, average_precision};
pub use node_classification::{
    build_nc_operator, run_node_classification, train_node_classification,
    train_node_classification_with_operator,
};
pub use report::{aggregate, write_reports_jsonl, Aggregate, RunReport};
pub use split::{
    sample_negatives, split_edges, split_nodes, EdgeSplit, EdgeSplitRatios, NodeSplit,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motif::MotifId;
use crate::neural::{dot_scores, sigmoid};
use crate::ppr::SolverConfig;

/// Which stages the propagation operator participates in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    /// Plain MLP; the graph is never used.
    None,
    /// Propagate during training only; predictions come from raw MLP output.
    Train,
    /// Train the MLP alone; propagate only when predicting.
    Predict,
    /// Full pipeline: propagate during training and prediction.
    TrainAndPredict,
}

impl AblationMode {
    pub fn during_training(self) -> bool {
        matches!(self, AblationMode::Train | AblationMode::TrainAndPredict)
    }

    pub fn during_prediction(self) -> bool {
        matches!(self, AblationMode::Predict | AblationMode::TrainAndPredict)
    }

    pub fn parse(s: &str) -> Option<AblationMode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Some(AblationMode::None),
            "train" => Some(AblationMode::Train),
            "predict" => Some(AblationMode::Predict),
            "train-predict" | "train-and-predict" | "both" => Some(AblationMode::TrainAndPredict),
            _ => None,
        }
    }
}

/// Experiment configuration shared by both pipelines. Defaults follow the
/// standard protocol for citation-scale benchmarks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Motif blended into the adjacency; `None` keeps the plain edge
    /// adjacency (the blend is skipped entirely).
    pub motif: Option<MotifId>,
    /// Edge/motif mixing weight.
    pub tau: f64,
    /// Teleport probability of the diffusion.
    pub alpha: f64,
    /// Entrywise power applied to the diffusion matrix.
    pub beta: f64,
    pub hidden: usize,
    /// Output dimension for link-prediction embeddings (node
    /// classification uses the class count instead).
    pub embedding_dim: usize,
    /// Hidden-layer dropout rate.
    pub dropout: f64,
    /// Re-sampled Bernoulli dropout over the propagation operator's
    /// entries during training.
    pub adjacency_dropout: bool,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early stopping patience in epochs; `None` disables early stopping.
    pub patience: Option<usize>,
    /// Mini-batch size for link prediction.
    pub batch_size: usize,
    pub ablation: AblationMode,
    pub solver: SolverConfig,
    /// Labeled nodes drawn per class for the training set.
    pub n_train_per_class: usize,
    /// Size of the random validation set.
    pub n_val: usize,
    pub edge_split: EdgeSplitRatios,
    pub runs: usize,
    pub seed: u64,
    /// Draw a fresh split for every run (otherwise only the model
    /// initialization and dropout vary across runs).
    pub reshuffle_splits: bool,
}

impl TrainConfig {
    /// Node-classification defaults: h = 64, dropout 0.5 on the hidden
    /// layer and the operator, lambda = 0.005, alpha = 0.1, beta = 0.5,
    /// tau = 0.9, patience 100, 20 labels per class, 500 validation nodes.
    pub fn node_classification_defaults() -> TrainConfig {
        TrainConfig {
            motif: Some(MotifId::M7),
            tau: 0.9,
            alpha: 0.1,
            beta: 0.5,
            hidden: 64,
            embedding_dim: 64,
            dropout: 0.5,
            adjacency_dropout: true,
            l2_lambda: 0.005,
            learning_rate: 1e-3,
            max_epochs: 10_000,
            patience: Some(100),
            batch_size: 1024,
            ablation: AblationMode::TrainAndPredict,
            solver: SolverConfig::default(),
            n_train_per_class: 20,
            n_val: 500,
            edge_split: EdgeSplitRatios::default(),
            runs: 1,
            seed: 0,
            reshuffle_splits: true,
        }
    }

    /// Link-prediction defaults: 5:1:4 split behind a forced spanning
    /// tree, 1:1 negatives, batch 1024, Adam at 1e-3, no early stopping,
    /// no operator dropout.
    pub fn link_prediction_defaults() -> TrainConfig {
        TrainConfig {
            motif: Some(MotifId::M7),
            tau: 0.9,
            alpha: 0.1,
            beta: 0.5,
            hidden: 64,
            embedding_dim: 64,
            dropout: 0.5,
            adjacency_dropout: false,
            l2_lambda: 0.0,
            learning_rate: 1e-3,
            max_epochs: 1000,
            patience: None,
            batch_size: 1024,
            ablation: AblationMode::TrainAndPredict,
            solver: SolverConfig::default(),
            n_train_per_class: 20,
            n_val: 500,
            edge_split: EdgeSplitRatios::default(),
            runs: 1,
            seed: 0,
            reshuffle_splits: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Domain(format!("tau {} outside [0, 1]", self.tau)));
        }
        if !(0.0 < self.alpha && self.alpha <= 1.0) {
            return Err(Error::Domain(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(0.0 < self.beta && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta {} outside (0, 1]", self.beta)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Domain(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Domain("l2 lambda must be nonnegative".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Domain("learning rate must be positive".into()));
        }
        if self.runs == 0 {
            return Err(Error::Domain("run count must be at least 1".into()));
        }
        if self.hidden == 0 || self.embedding_dim == 0 {
            return Err(Error::Domain("layer sizes must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Domain("max epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be at least 1".into()));
        }
        self.edge_split.validate()
    }

    /// Stable hex digest of the full configuration; embedded in every
    /// emitted record so results can be traced back to their settings.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            use std::fmt::Write as _;
            write!(hex, "{byte:02x}").expect("write to string");
        }
        hex
    }

    /// Seed for run `index` under this configuration.
    pub fn run_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// Sigmoid dot-product edge scores, `p_uv = sigmoid(z_u . z_v)`.
pub fn score_edges(z: &Array2<f64>, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    Ok(dot_scores(z, pairs)?.into_iter().map(sigmoid).collect())
}
