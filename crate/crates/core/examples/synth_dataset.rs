//! Generates a stochastic block model graph and writes it in the on-disk
//! interchange format. Usage: `synth_dataset [OUT_DIR]`.

use gnn_unlearn::graph::{load_dataset, save_dataset, SbmConfig};

fn main() -> gnn_unlearn::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "sbm_dataset".into());
    let (g, split) = SbmConfig::default().generate(0)?;
    save_dataset(&dir, &g, &split)?;
    let (back, back_split) = load_dataset(&dir)?;
    println!(
        "{}: {} nodes, {} edges, {} classes, {} train / {} test -> {dir}",
        back.name(),
        back.n(),
        back.num_edges(),
        back.num_classes(),
        back_split.train.len(),
        back_split.test.len()
    );
    Ok(())
}
