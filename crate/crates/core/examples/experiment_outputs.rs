//! Writes a small ball experiment to disk, then verifies and re-aggregates it.

use safenum::harness::{emit_outputs, report, run_experiment, verify, ExperimentConfig, Study};

fn main() -> safenum::Result<()> {
    let out = std::env::temp_dir().join("safenum-example-ball");
    let config = ExperimentConfig {
        seeds: (0..5).collect(),
        horizon: 20,
        ..ExperimentConfig::for_study(Study::Ball)
    };
    let bundle = run_experiment(&config)?;
    emit_outputs(&bundle, &out)?;
    println!("wrote {} runs to {}", bundle.runs.len(), out.display());

    let checked = verify(&out)?;
    println!(
        "verify: {} runs, {} trace rows, {} problems",
        checked.runs_checked,
        checked.rows_checked,
        checked.problems.len()
    );
    for series in report(&out)? {
        let last = series.bands.last().unwrap();
        println!(
            "{:<16} {:<6} k={:<3} mean {:.4e} std {:.2e}",
            series.figure, series.method, last.k, last.mean, last.std
        );
    }
    Ok(())
}
