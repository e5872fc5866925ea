//! Trains both backbones on a synthetic graph and reports test micro-F1.

use gnn_unlearn::backbones::{extract_h, predict, train_model, BackboneKind, Hyper};
use gnn_unlearn::graph::SbmConfig;

fn main() -> gnn_unlearn::Result<()> {
    let (g, split) = SbmConfig::default().generate(0)?;
    for kind in [BackboneKind::Gcn, BackboneKind::Sgc] {
        let out = train_model(&g, &split, kind, &Hyper::defaults(kind))?;
        let f1 = predict(&out.model, &g, &split.test)?.f1;
        let h = extract_h(&out.model)?;
        println!(
            "{kind}: test F1 {f1:.4} in {:.2}s, last layer H is {}x{}",
            out.seconds,
            h.out_dim(),
            h.in_dim()
        );
    }
    Ok(())
}
