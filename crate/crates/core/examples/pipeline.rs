//! Runs every stage on the bundled toy config into a temporary directory
//! and prints the rendered report.

use std::path::Path;

use multicap::pipeline::{Pipeline, RunManifest, COMMANDS};

fn main() -> multicap::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/toy.json");
    let out = std::env::temp_dir().join("multicap-pipeline");
    let pipeline = Pipeline::open(&config, &out, None)?
        .with_strict(true)
        .with_oracle(true);

    let report = pipeline.run_all()?;
    print!("{report}");

    println!("\nmanifests under {}:", out.display());
    for command in COMMANDS {
        let m = RunManifest::load(&out, command)?;
        println!(
            "  {:9} {} outputs, first {}",
            m.command,
            m.outputs.len(),
            m.outputs.first().map_or("-", |a| &a.path)
        );
    }
    Ok(())
}
