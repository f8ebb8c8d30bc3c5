//! Binary-matrix benchmark: the safe method against the dual gradient baseline.

use safenum::harness::{run_job, ExperimentConfig, JobSpec, Study};

fn main() {
    let config = ExperimentConfig::for_study(Study::BenchmarkBinary);
    for seed in 0..3 {
        let out = run_job(&config, &JobSpec { seed, cell: None });
        if let Some(f) = &out.failure {
            println!("{}: {:?} {}", out.id, f.kind, f.message);
            continue;
        }
        let inst = out.instance.as_ref().unwrap();
        let m = out.metrics.as_ref().unwrap();
        let dg = out.baseline.as_ref().unwrap();
        let dg_worst = dg.infeasibility.iter().copied().fold(0.0, f64::max);
        println!(
            "{}: n = {}, m = {}, Gamma = {:.2}",
            out.id,
            inst.n,
            inst.m.unwrap_or(0),
            inst.gamma_x
        );
        println!(
            "  safe: max infeasibility {:.1e}, final |x-x*|^2 {:.3e}, regret {:.3}",
            m.max_infeasibility,
            m.dist_sq.last().unwrap(),
            m.regret
        );
        println!(
            "  dual gradient: max infeasibility {dg_worst:.3}, final |x-x*|^2 {:.3e}",
            dg.dist_sq.last().unwrap()
        );
    }
}
