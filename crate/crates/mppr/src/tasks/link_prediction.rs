//! Link prediction: an MLP encoder produces node embeddings, the
//! propagation operator (built from the training graph only) diffuses
//! them, and a dot-product decoder with sigmoid scores candidate pairs.
//! Mini-batch Adam minimizes binary cross-entropy over positive training
//! edges paired 1:1 with negatives re-sampled every epoch.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::motif::{blend, motif_adjacency, BlendedAdjacency};
use crate::neural::{
    adam_step, backward, bce_loss, dot_scores, mlp_forward, AdamState, Features, LossGrad,
    MlpModel,
};
use crate::ppr::{build_operator, PropagationOperator};
use crate::sparse::SparseMatrix;

use super::metrics::{auc, average_precision};
use super::report::{aggregate, Aggregate, RunReport};
use super::split::{sample_negatives, split_edges, EdgeSplit};
use super::{AblationMode, TrainConfig};

/// Directed adjacency of the training graph: the original directed edges
/// whose unordered pair landed in the training positives. Motifs are
/// computed on this directed form; validation and test edges never enter.
pub fn train_graph_adjacency(g: &Graph, esplit: &EdgeSplit) -> SparseMatrix {
    let train_set: BTreeSet<(usize, usize)> = esplit.train_pos.iter().copied().collect();
    SparseMatrix::from_triplets(
        g.n_nodes(),
        g.n_nodes(),
        g.edges()
            .iter()
            .filter(|&&(u, v)| train_set.contains(&(u.min(v), u.max(v))))
            .map(|&(u, v)| (u, v, 1.0)),
    )
    .expect("edges validated by Graph construction")
}

/// Builds the diffusion operator from the training graph of an edge
/// split; `None` when the ablation mode never propagates.
pub fn build_lp_operator(
    g: &Graph,
    esplit: &EdgeSplit,
    config: &TrainConfig,
) -> Result<Option<PropagationOperator>> {
    if config.ablation == AblationMode::None {
        return Ok(None);
    }
    let a = train_graph_adjacency(g, esplit);
    let theta = match config.motif {
        Some(m) => blend(&a, &motif_adjacency(&a, m)?, config.tau)?,
        None => BlendedAdjacency {
            tau: 0.0,
            matrix: a,
        },
    };
    // Held-out pairs must not appear in the blend: motif matrices only
    // connect pairs that share a training edge.
    debug_assert!(esplit
        .val_pos
        .iter()
        .chain(&esplit.test_pos)
        .all(|&(u, v)| theta.matrix.get(u, v) == 0.0 && theta.matrix.get(v, u) == 0.0));
    Ok(Some(build_operator(
        &theta,
        config.alpha,
        config.beta,
        &config.solver,
    )?))
}

fn eval_pairs(
    z: &ndarray::Array2<f64>,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
) -> Result<(f64, f64, f64)> {
    let pairs: Vec<(usize, usize)> = pos.iter().chain(neg).copied().collect();
    let logits = dot_scores(z, &pairs)?;
    let labels: Vec<bool> = (0..pairs.len()).map(|i| i < pos.len()).collect();
    let targets: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
    let loss = bce_loss(&logits, &targets)? / pairs.len().max(1) as f64;
    Ok((
        loss,
        auc(&logits, &labels)?,
        average_precision(&logits, &labels)?,
    ))
}

/// Trains one link-prediction run, building the operator internally.
pub fn train_link_prediction(
    g: &Graph,
    esplit: &EdgeSplit,
    config: &TrainConfig,
) -> Result<(MlpModel, RunReport)> {
    let op = build_lp_operator(g, esplit, config)?;
    train_link_prediction_with_operator(g, esplit, op.as_ref(), config, config.seed)
}

/// Trains one run against a pre-built operator.
pub fn train_link_prediction_with_operator(
    g: &Graph,
    esplit: &EdgeSplit,
    op: Option<&PropagationOperator>,
    config: &TrainConfig,
    run_seed: u64,
) -> Result<(MlpModel, RunReport)> {
    config.validate()?;
    if esplit.train_pos.is_empty() {
        return Err(Error::Split("no training edges".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let features = Features::new(g.features());
    let mut model = MlpModel::glorot(
        g.n_features(),
        config.hidden,
        config.embedding_dim,
        config.dropout,
        config.l2_lambda,
        &mut rng,
    )?;
    let mut adam = AdamState::new(&model);

    let prop_train = config.ablation.during_training().then_some(()).and(op);
    let prop_predict = config.ablation.during_prediction().then_some(()).and(op);
    let mut mask_rng = rand::rngs::SmallRng::seed_from_u64(rng.gen());

    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut val_metrics = Vec::new();
    let mut best: Option<(f64, f64, usize, MlpModel)> = None;
    let mut epochs_without_improvement = 0usize;
    let mut epochs_run = 0usize;
    let k = esplit.train_pos.len();

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        // Fresh 1:1 negatives and a fresh positive order every epoch.
        let neg_seed = run_seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let negatives = sample_negatives(g, k, neg_seed)?;
        let mut positives = esplit.train_pos.clone();
        positives.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut processed = 0usize;
        for (pos_chunk, neg_chunk) in positives
            .chunks(config.batch_size)
            .zip(negatives.chunks(config.batch_size))
        {
            let pairs: Vec<(usize, usize)> =
                pos_chunk.iter().chain(neg_chunk).copied().collect();
            let targets: Vec<f64> = pos_chunk
                .iter()
                .map(|_| 1.0)
                .chain(neg_chunk.iter().map(|_| 0.0))
                .collect();
            let dropped_op = match prop_train {
                Some(op) if config.adjacency_dropout && config.dropout > 0.0 => {
                    Some(op.with_entry_dropout(config.dropout, &mut mask_rng))
                }
                _ => None,
            };
            let batch_op = dropped_op.as_ref().or(prop_train);
            let trace = mlp_forward(&model, &features, Some(&mut rng))?;
            let z = match batch_op {
                Some(op) => op.propagate(&trace.output)?,
                None => trace.output.clone(),
            };
            let grads = backward(
                &model,
                &features,
                &trace,
                batch_op,
                LossGrad::EdgeBce {
                    z: &z,
                    pairs: &pairs,
                    targets: &targets,
                },
            )?;
            adam_step(&mut model, &grads, &mut adam, config.learning_rate)?;
            epoch_loss += grads.loss;
            processed += pairs.len();
        }
        train_losses.push(epoch_loss / processed.max(1) as f64);

        let z_eval = embed(&model, &features, prop_predict)?;
        let (val_loss, val_auc, _) = eval_pairs(&z_eval, &esplit.val_pos, &esplit.val_neg)?;
        val_losses.push(val_loss);
        val_metrics.push(val_auc);

        if let Some(patience) = config.patience {
            let improved = match &best {
                None => true,
                Some((best_auc, best_loss, _, _)) => {
                    val_auc > *best_auc || (val_auc == *best_auc && val_loss < *best_loss)
                }
            };
            if improved {
                best = Some((val_auc, val_loss, epoch, model.clone()));
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
    let z_eval = embed(&model, &features, prop_predict)?;
    let (_, test_auc, test_ap) = eval_pairs(&z_eval, &esplit.test_pos, &esplit.test_neg)?;

    let total_seconds = start.elapsed().as_secs_f64();
    let report = RunReport {
        task: "link-prediction".into(),
        seed: run_seed,
        config_hash: config.config_hash(),
        epochs_run,
        best_epoch,
        train_losses,
        val_losses,
        val_metrics,
        test_accuracy: None,
        test_auc: Some(test_auc),
        test_ap: Some(test_ap),
        total_seconds,
        mean_epoch_seconds: total_seconds / epochs_run as f64,
        sparsify_threshold: op.and_then(|o| o.sparsify_threshold),
        loss_clamps: 0,
    };
    Ok((model, report))
}

/// Final embeddings out of the prediction path.
pub fn embed(
    model: &MlpModel,
    features: &Features<'_>,
    prop: Option<&PropagationOperator>,
) -> Result<ndarray::Array2<f64>> {
    let trace = mlp_forward(model, features, None)?;
    match prop {
        Some(op) => op.propagate(&trace.output),
        None => Ok(trace.output),
    }
}

/// Runs `config.runs` seeded repetitions in parallel worker threads.
/// Preprocessing keeps the largest connected component; every run draws
/// its own edge split (and therefore its own training-graph operator)
/// unless `reshuffle_splits` is off.
pub fn run_link_prediction(
    g: &Graph,
    config: &TrainConfig,
) -> Result<(Vec<RunReport>, Aggregate, MlpModel)> {
    config.validate()?;
    let lcc = g.induced_subgraph(&g.largest_component())?;
    let base = if config.reshuffle_splits {
        None
    } else {
        let esplit = split_edges(&lcc, config.edge_split, config.seed)?;
        let op = build_lp_operator(&lcc, &esplit, config)?;
        Some((esplit, op))
    };
    let results: Vec<(MlpModel, RunReport)> = (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let run_seed = config.run_seed(i);
            match &base {
                Some((esplit, op)) => train_link_prediction_with_operator(
                    &lcc,
                    esplit,
                    op.as_ref(),
                    config,
                    run_seed,
                ),
                None => {
                    let esplit = split_edges(&lcc, config.edge_split, run_seed)?;
                    let op = build_lp_operator(&lcc, &esplit, config)?;
                    train_link_prediction_with_operator(
                        &lcc,
                        &esplit,
                        op.as_ref(),
                        config,
                        run_seed,
                    )
                }
            }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::caveman_graph;
    use crate::tasks::score_edges;
    use crate::tasks::EdgeSplitRatios;

    fn quick_config() -> TrainConfig {
        let mut c = TrainConfig::link_prediction_defaults();
        c.hidden = 16;
        c.embedding_dim = 8;
        c.max_epochs = 150;
        c.dropout = 0.2;
        c.seed = 5;
        c
    }

    #[test]
    fn identical_embeddings_score_half_everywhere() {
        let z = ndarray::Array2::from_elem((6, 4), 0.3);
        let pairs = vec![(0, 1), (2, 3), (4, 5)];
        let p = score_edges(&z, &pairs).unwrap();
        assert!(p.iter().all(|&v| v == p[0]));
        let labels = vec![true, false, true];
        let logits = dot_scores(&z, &pairs).unwrap();
        assert_eq!(auc(&logits, &labels).unwrap(), 0.5);
    }

    #[test]
    fn caveman_graph_intra_clique_edges_rank_high() {
        let g = caveman_graph(10, 6, 11);
        let esplit = split_edges(&g, EdgeSplitRatios::default(), 7).unwrap();
        let config = quick_config();
        let (model, report) = train_link_prediction(&g, &esplit, &config).unwrap();
        assert!(
            report.test_auc.unwrap() >= 0.9,
            "test AUC {} below 0.9",
            report.test_auc.unwrap()
        );
        // held-out intra-clique edges vs inter-clique non-edges
        let features = Features::new(g.features());
        let op = build_lp_operator(&g, &esplit, &config).unwrap();
        let z = embed(&model, &features, op.as_ref()).unwrap();
        let intra: Vec<(usize, usize)> = esplit
            .test_pos
            .iter()
            .copied()
            .filter(|&(u, v)| (u < 10) == (v < 10))
            .collect();
        let inter: Vec<(usize, usize)> = (0..10)
            .flat_map(|u| (10..20).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.edges().contains(&(u, v)) && !g.edges().contains(&(v, u)))
            .take(intra.len().max(4))
            .collect();
        let intra_scores = score_edges(&z, &intra).unwrap();
        let inter_scores = score_edges(&z, &inter).unwrap();
        let min_intra = intra_scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean_inter = inter_scores.iter().sum::<f64>() / inter_scores.len() as f64;
        assert!(
            min_intra > mean_inter,
            "intra min {min_intra} vs inter mean {mean_inter}"
        );
    }

    #[test]
    fn training_graph_excludes_held_out_pairs() {
        let g = caveman_graph(8, 4, 3);
        let esplit = split_edges(&g, EdgeSplitRatios::default(), 19).unwrap();
        let a = train_graph_adjacency(&g, &esplit);
        for &(u, v) in esplit.val_pos.iter().chain(&esplit.test_pos) {
            assert_eq!(a.get(u, v), 0.0);
            assert_eq!(a.get(v, u), 0.0);
        }
        // blended adjacency too, for every motif
        for m in crate::motif::MotifId::ALL {
            let am = motif_adjacency(&a, m).unwrap();
            let theta = blend(&a, &am, 0.9).unwrap();
            for &(u, v) in esplit.val_pos.iter().chain(&esplit.test_pos) {
                assert_eq!(theta.matrix.get(u, v), 0.0, "leak via motif {m}");
            }
        }
    }

    #[test]
    fn multi_run_driver_is_deterministic() {
        let g = caveman_graph(8, 4, 23);
        let mut config = quick_config();
        config.runs = 2;
        config.max_epochs = 30;
        let (a, agg_a, _) = run_link_prediction(&g, &config).unwrap();
        let (b, agg_b, _) = run_link_prediction(&g, &config).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.test_auc, y.test_auc);
            assert_eq!(x.test_ap, y.test_ap);
            assert_eq!(x.train_losses, y.train_losses);
        }
        assert_eq!(agg_a.mean_auc, agg_b.mean_auc);
    }
}
