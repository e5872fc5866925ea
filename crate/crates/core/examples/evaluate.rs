//! Membership inference, embedding-density distance and the poisoning
//! efficacy check for one unlearning run.

use gnn_unlearn::backbones::{train_model, BackboneKind, Hyper};
use gnn_unlearn::cli::{attack, kde_triple, retrain, ExperimentConfig};
use gnn_unlearn::evalsuite::run_efficacy;
use gnn_unlearn::graph::{sample_unlearn_set, SbmConfig};
use gnn_unlearn::unlearner::{unlearn, RectifierConfig};

fn main() -> gnn_unlearn::Result<()> {
    let cfg = ExperimentConfig::default();
    let (g, split) = SbmConfig::default().generate(0)?;
    let hyper = Hyper::defaults(BackboneKind::Gcn);
    let model = train_model(&g, &split, BackboneKind::Gcn, &hyper)?.model;
    let request = sample_unlearn_set(&split, 0.1, 0)?;
    let out = unlearn(&model, &g, &request, &RectifierConfig::default())?;
    let re = retrain(&g, &split, &request, &cfg, 0)?;

    let mia = attack(
        &g,
        &split,
        &request,
        &model,
        &out.embeddings.h_tilde,
        &re.model,
    )?;
    println!(
        "MIA AUC: ours {:.4}, retrain {:.4}",
        mia.mia_auc_ours, mia.mia_auc_retrain
    );

    let kde = kde_triple(&cfg, &model, &out.embeddings, &re.model)?.summary()?;
    println!(
        "KDE L1 to retrain: original {:.4}, unlearned {:.4}",
        kde.original_vs_retrain, kde.unlearned_vs_retrain
    );

    let e = run_efficacy(
        &g,
        &split,
        BackboneKind::Gcn,
        0.3,
        &[0, 1, 2],
        &hyper,
        &RectifierConfig::default(),
    )?;
    for r in &e.runs {
        println!(
            "seed {}: poisoned F1 {:.4} -> unlearned {:.4}",
            r.seed, r.f1_poisoned, r.f1_unlearned
        );
    }
    println!("mean efficacy delta {:+.4}", e.delta);
    Ok(())
}
