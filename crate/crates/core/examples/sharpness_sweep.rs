//! Total regret across the sharpness grid with a handful of seeds.

use safenum::harness::{run_experiment, ExperimentConfig, Study};

fn main() -> safenum::Result<()> {
    let config = ExperimentConfig {
        seeds: vec![0, 1],
        ..ExperimentConfig::for_study(Study::SharpnessSweep)
    };
    let bundle = run_experiment(&config)?;
    println!(
        "{:>7} {:>6} {:>4} {:>12} {:>12}",
        "beta", "Gamma", "n", "R(T/2)", "initial gap"
    );
    for pair in bundle.runs.chunks(config.seeds.len()) {
        let cell = pair[0].job.cell.unwrap();
        let done: Vec<_> = pair.iter().filter_map(|r| r.metrics.as_ref()).collect();
        if done.is_empty() {
            continue;
        }
        let mean = |f: &dyn Fn(&safenum::metrics::MetricsReport) -> f64| {
            done.iter().map(|m| f(m)).sum::<f64>() / done.len() as f64
        };
        println!(
            "{:>7} {:>6} {:>4} {:>12.4} {:>12.4}",
            2.0 * cell.omega,
            cell.gamma,
            cell.n,
            mean(&|m| m.regret),
            mean(&|m| m.initial_gap)
        );
    }
    Ok(())
}
