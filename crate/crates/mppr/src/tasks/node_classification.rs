//! Semi-supervised node classification: an MLP generates per-node class
//! predictions from features alone, the propagation operator diffuses
//! them over the graph, and a masked softmax cross-entropy (averaged over
//! the labeled training nodes) plus L2 on the first layer is minimized
//! full-batch with Adam. Early stopping watches validation accuracy with
//! validation loss as the tie-break and restores the best snapshot.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{to_adjacency, Graph};
use crate::motif::{blend, motif_adjacency, BlendedAdjacency};
use crate::neural::{
    adam_step, backward, mlp_forward, softmax_rows, AdamState, Features, LossGrad, MlpModel,
};
use crate::ppr::{build_operator, PropagationOperator};

use super::metrics::accuracy;
use super::report::{aggregate, Aggregate, RunReport};
use super::split::{split_nodes, NodeSplit};
use super::{AblationMode, TrainConfig};

/// Builds the diffusion operator for a node-classification config; `None`
/// when the ablation mode never propagates.
pub fn build_nc_operator(g: &Graph, config: &TrainConfig) -> Result<Option<PropagationOperator>> {
    if config.ablation == AblationMode::None {
        return Ok(None);
    }
    let a = to_adjacency(g);
    let theta = match config.motif {
        Some(m) => blend(&a, &motif_adjacency(&a, m)?, config.tau)?,
        None => BlendedAdjacency {
            tau: 0.0,
            matrix: a,
        },
    };
    Ok(Some(build_operator(
        &theta,
        config.alpha,
        config.beta,
        &config.solver,
    )?))
}

fn argmax_rows(z: &ndarray::Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect()
}

/// Trains one node-classification run, building the operator internally.
pub fn train_node_classification(
    g: &Graph,
    split: &NodeSplit,
    config: &TrainConfig,
) -> Result<(MlpModel, RunReport)> {
    let op = build_nc_operator(g, config)?;
    train_node_classification_with_operator(g, split, op.as_ref(), config, config.seed)
}

/// Trains one run against a pre-built operator (shared across runs by the
/// multi-run driver).
pub fn train_node_classification_with_operator(
    g: &Graph,
    split: &NodeSplit,
    op: Option<&PropagationOperator>,
    config: &TrainConfig,
    run_seed: u64,
) -> Result<(MlpModel, RunReport)> {
    config.validate()?;
    let labels = g
        .labels()
        .ok_or_else(|| Error::Split("node classification needs labels".into()))?;
    if g.n_classes() < 2 {
        return Err(Error::Split("need at least two classes".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let features = Features::new(g.features());
    let mut model = MlpModel::glorot(
        g.n_features(),
        config.hidden,
        g.n_classes(),
        config.dropout,
        config.l2_lambda,
        &mut rng,
    )?;
    let mut adam = AdamState::new(&model);

    let prop_train = config.ablation.during_training().then_some(()).and(op);
    let prop_predict = config.ablation.during_prediction().then_some(()).and(op);
    // Cheap xoshiro stream for the large per-epoch operator masks; seeded
    // from the run's main generator.
    let mut mask_rng = rand::rngs::SmallRng::seed_from_u64(rng.gen());

    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut val_metrics = Vec::new();
    let mut loss_clamps = 0usize;
    let mut best: Option<(f64, f64, usize, MlpModel)> = None;
    let mut epochs_without_improvement = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        // Training step.
        let dropped_op = match prop_train {
            Some(op) if config.adjacency_dropout && config.dropout > 0.0 => {
                Some(op.with_entry_dropout(config.dropout, &mut mask_rng))
            }
            _ => None,
        };
        let train_op = dropped_op.as_ref().or(prop_train);
        let trace = mlp_forward(&model, &features, Some(&mut rng))?;
        let z = match train_op {
            Some(op) => op.propagate(&trace.output)?,
            None => trace.output.clone(),
        };
        let grads = backward(
            &model,
            &features,
            &trace,
            train_op,
            LossGrad::NodeCrossEntropy {
                z: &z,
                labels,
                mask: &split.train,
                mean: true,
            },
        )?;
        adam_step(&mut model, &grads, &mut adam, config.learning_rate)?;
        train_losses.push(grads.loss);
        loss_clamps += grads.clamped;

        // Validation pass without any dropout.
        let (val_loss, val_acc) = evaluate(&model, &features, prop_predict, labels, &split.val)?;
        val_losses.push(val_loss);
        val_metrics.push(val_acc);

        if let Some(patience) = config.patience {
            let improved = match &best {
                None => true,
                Some((best_acc, best_loss, _, _)) => {
                    val_acc > *best_acc || (val_acc == *best_acc && val_loss < *best_loss)
                }
            };
            if improved {
                best = Some((val_acc, val_loss, epoch, model.clone()));
                epochs_without_improvement = 0;
            } else {
                epochs_without_improvement += 1;
                if epochs_without_improvement >= patience {
                    break;
                }
            }
        }
    }

    let best_epoch = best.as_ref().map(|(_, _, e, _)| *e);
    if let Some((_, _, _, snapshot)) = best {
        model = snapshot;
    }
    let (_, test_acc) = evaluate(&model, &features, prop_predict, labels, &split.test)?;

    let total_seconds = start.elapsed().as_secs_f64();
    let report = RunReport {
        task: "node-classification".into(),
        seed: run_seed,
        config_hash: config.config_hash(),
        epochs_run,
        best_epoch,
        train_losses,
        val_losses,
        val_metrics,
        test_accuracy: Some(test_acc),
        test_auc: None,
        test_ap: None,
        total_seconds,
        mean_epoch_seconds: total_seconds / epochs_run as f64,
        sparsify_threshold: op.and_then(|o| o.sparsify_threshold),
        loss_clamps,
    };
    Ok((model, report))
}

/// Loss and accuracy of the prediction path on a node set.
fn evaluate(
    model: &MlpModel,
    features: &Features<'_>,
    prop: Option<&PropagationOperator>,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<(f64, f64)> {
    let trace = mlp_forward(model, features, None)?;
    let z = match prop {
        Some(op) => op.propagate(&trace.output)?,
        None => trace.output,
    };
    let probs = softmax_rows(&z);
    let loss = if mask.is_empty() {
        f64::NAN
    } else {
        crate::neural::nll_loss(&probs, labels, mask)?.value / mask.len() as f64
    };
    let acc = accuracy(&argmax_rows(&probs), labels, mask)?;
    Ok((loss, acc))
}

/// Runs `config.runs` seeded repetitions in parallel worker threads,
/// sharing one operator build. Returns all reports, their aggregate, and
/// the final run's model.
pub fn run_node_classification(
    g: &Graph,
    config: &TrainConfig,
) -> Result<(Vec<RunReport>, Aggregate, MlpModel)> {
    config.validate()?;
    let op = build_nc_operator(g, config)?;
    let base_split = if config.reshuffle_splits {
        None
    } else {
        Some(split_nodes(
            g,
            config.n_train_per_class,
            config.n_val,
            config.seed,
        )?)
    };
    let results: Vec<(MlpModel, RunReport)> = (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let run_seed = config.run_seed(i);
            let split = match &base_split {
                Some(s) => s.clone(),
                None => split_nodes(g, config.n_train_per_class, config.n_val, run_seed)?,
            };
            train_node_classification_with_operator(g, &split, op.as_ref(), config, run_seed)
        })
        .collect::<Result<_>>()?;
    let mut models: Vec<MlpModel> = Vec::new();
    let mut reports = Vec::new();
    for (m, r) in results {
        models.push(m);
        reports.push(r);
    }
    let agg = aggregate(&reports)?;
    let last_model = models.pop().expect("runs >= 1");
    Ok((reports, agg, last_model))
}
