//! Scratch calibration harness: times the operator build and training
//! epochs at citation scale and prints pipeline metrics.

use std::time::Instant;

use mppr::graph::to_adjacency;
use mppr::motif::{blend, motif_adjacency, MotifId};
use mppr::ppr::build_operator;
use mppr::synthetic::{community_graph, CommunityGraphSpec};
use mppr::tasks::{
    run_link_prediction, run_node_classification, AblationMode, TrainConfig,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("nc");

    let spec = CommunityGraphSpec::citation_scale(42);
    let t0 = Instant::now();
    let g = community_graph(&spec);
    println!(
        "graph: n={} m={} classes={} features={} ({:.2?})",
        g.n_nodes(),
        g.n_edges(),
        g.n_classes(),
        g.n_features(),
        t0.elapsed()
    );
    let labels = g.labels().unwrap();
    let intra = g
        .edges()
        .iter()
        .filter(|&&(u, v)| labels[u] == labels[v])
        .count();
    println!(
        "homophily: {:.3}; feature nnz per node: {:.1}",
        intra as f64 / g.n_edges() as f64,
        g.features().iter().filter(|&&v| v != 0.0).count() as f64 / g.n_nodes() as f64
    );

    if mode == "op" || mode == "nc" {
        let t = Instant::now();
        let a = to_adjacency(&g);
        let am = motif_adjacency(&a, MotifId::M7).unwrap();
        println!("motif m7: nnz={} ({:.2?})", am.matrix.nnz(), t.elapsed());
        let theta = blend(&a, &am, 0.9).unwrap();
        let t = Instant::now();
        let op = build_operator(&theta, 0.1, 0.5, &Default::default()).unwrap();
        println!("operator build (direct, beta): {:.2?}, n={}", t.elapsed(), op.n());
    }

    if mode == "nc" {
        let mut config = TrainConfig::node_classification_defaults();
        config.runs = 3;
        config.seed = 7;
        config.max_epochs = 1500;
        let t = Instant::now();
        let (reports, agg, _) = run_node_classification(&g, &config).unwrap();
        for r in &reports {
            println!(
                "  run seed={} acc={:.4} epochs={} best={:?} epoch_ms={:.1}",
                r.seed,
                r.test_accuracy.unwrap(),
                r.epochs_run,
                r.best_epoch,
                r.mean_epoch_seconds * 1e3
            );
        }
        println!(
            "nc: mean_acc={:.4} var={:.6} mean_epochs={:.0} total={:.1?}",
            agg.mean_accuracy.unwrap(),
            agg.var_accuracy.unwrap(),
            agg.mean_epochs,
            t.elapsed()
        );
    }

    if mode == "nc-ablation" {
        for ablation in [
            AblationMode::None,
            AblationMode::Predict,
            AblationMode::TrainAndPredict,
        ] {
            let mut config = TrainConfig::node_classification_defaults();
            config.runs = 3;
            config.seed = 7;
            config.max_epochs = 1500;
            config.ablation = ablation;
            let t = Instant::now();
            let (_, agg, _) = run_node_classification(&g, &config).unwrap();
            println!(
                "ablation {:?}: mean_acc={:.4} mean_epochs={:.0} ({:.1?})",
                ablation,
                agg.mean_accuracy.unwrap(),
                agg.mean_epochs,
                t.elapsed()
            );
        }
    }

    if mode == "lp" {
        let mut config = TrainConfig::link_prediction_defaults();
        config.runs = 2;
        config.seed = 7;
        config.max_epochs = args
            .get(2)
            .and_then(|s| s.parse().ok())
            .unwrap_or(200);
        let t = Instant::now();
        let (reports, agg, _) = run_link_prediction(&g, &config).unwrap();
        for r in &reports {
            println!(
                "  run seed={} auc={:.4} ap={:.4} epochs={} epoch_ms={:.1}",
                r.seed,
                r.test_auc.unwrap(),
                r.test_ap.unwrap(),
                r.epochs_run,
                r.mean_epoch_seconds * 1e3
            );
        }
        println!(
            "lp: mean_auc={:.4} mean_ap={:.4} total={:.1?}",
            agg.mean_auc.unwrap(),
            agg.mean_ap.unwrap(),
            t.elapsed()
        );
    }
}
