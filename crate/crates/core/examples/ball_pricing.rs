//! Safe pricing for quad-log users sharing the unit ball, with the regret it accrues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use safenum::geometry::FeasibleSet;
use safenum::metrics::{regret, solve_central};
use safenum::spnum::{compute_schedule, ScheduleMode, Spnum};
use safenum::utilities::{Population, PriceResponse, RegularityConstants, UtilityModel};

fn main() -> safenum::Result<()> {
    let n = 8;
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let users = (0..n)
        .map(|_| {
            let y = rng.gen_range(-2.0..2.0);
            let theta = rng.gen_range(0.0..1.0);
            UtilityModel::quad_log(y, theta, -1.0, 1.0).map(PriceResponse::new)
        })
        .collect::<safenum::Result<Vec<_>>>()?;
    let population = Population::new(users)?;
    let set = FeasibleSet::ball(vec![0.0; n], 1.0)?;
    let constants = RegularityConstants::ball();
    let schedule = compute_schedule(constants, 1.0, 1.0, n, n, 1, ScheduleMode::Paper)?;

    let trace = Spnum::new(&set, &population, &schedule).run_default(60)?;
    let central = solve_central(&set, &population, constants.l, 1e-13)?;
    let report = regret(&trace, &central, &set)?;

    println!(
        "f* = {:.6}, {} iterations, all demands feasible: {}",
        central.f_star,
        trace.iterations(),
        trace.all_feasible()
    );
    println!(
        "{:>4} {:>12} {:>12} {:>12} {:>10}",
        "k", "R(k)", "R/log(1+k)", "|x-x*|^2", "depth"
    );
    let updates: Vec<_> = trace.updates().collect();
    for k in [1, 2, 5, 10, 20, 30] {
        println!(
            "{k:>4} {:>12.5e} {:>12.5e} {:>12.5e} {:>10.3e}",
            report.regret_curve[k - 1],
            report.regret_over_log[k - 1],
            report.dist_sq[k],
            updates[k - 1].margin
        );
    }
    Ok(())
}
