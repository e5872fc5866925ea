//! Full multi-seed pipeline from a flat config, as the `pipeline`
//! subcommand runs it. Usage: `sweep [OUT_DIR]`.

use gnn_unlearn::cli::FlatConfig;

const CONFIG: &str = "
backbone = sgc
unlearn.ratio = 0.1
seeds = 0..3
eval.efficacy = true
";

fn main() -> gnn_unlearn::Result<()> {
    let mut flat = FlatConfig::parse(CONFIG, "inline")?;
    flat.set(
        "out",
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "sweep_out".into()),
    )?;
    let cfg = flat.resolve()?;
    let report = gnn_unlearn::cli::run_pipeline(&cfg)?;
    for (k, mean) in &report.mean {
        println!("{k:<26} {mean:.4} +- {:.4}", report.std[k]);
    }
    Ok(())
}
