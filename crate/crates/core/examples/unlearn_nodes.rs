//! Removes 10% of the training nodes, compares against retraining from
//! scratch, then reuses the rectifier to drop a handful of edges.

use gnn_unlearn::backbones::{classify, micro_f1, predict, train_model, BackboneKind, Hyper};
use gnn_unlearn::graph::{remove_nodes, sample_edge_request, sample_unlearn_set, SbmConfig};
use gnn_unlearn::unlearner::{edge_unlearn, unlearn, RectifierConfig};

fn main() -> gnn_unlearn::Result<()> {
    let (g, split) = SbmConfig::default().generate(0)?;
    let hyper = Hyper::defaults(BackboneKind::Gcn);
    let model = train_model(&g, &split, BackboneKind::Gcn, &hyper)?.model;

    let request = sample_unlearn_set(&split, 0.1, 0)?;
    let out = unlearn(&model, &g, &request, &RectifierConfig::default())?;
    let f1 = micro_f1(&classify(&out.embeddings.h_tilde), g.labels(), &split.test)?;
    println!(
        "unlearned {} nodes in {:.2}s, test F1 {f1:.4}",
        request.len(),
        out.seconds
    );

    let (pg, remap) = remove_nodes(&g, request.node_set())?;
    let ps = split.remap(&remap);
    let re = train_model(&pg, &ps, BackboneKind::Gcn, &hyper)?;
    println!(
        "retrained in {:.2}s, test F1 {:.4}",
        re.seconds,
        predict(&re.model, &pg, &ps.test)?.f1
    );

    let edges = sample_edge_request(&g, 0.02, 0)?;
    let e = edge_unlearn(&out.rectifier, &g, &model.capture, edges.edge_set())?;
    let f1 = micro_f1(&classify(&e.h_tilde), g.labels(), &split.test)?;
    println!(
        "dropped {} edges with the same rectifier, test F1 {f1:.4}",
        edges.len()
    );
    Ok(())
}
