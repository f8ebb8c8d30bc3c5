//! Step, shrinkage and sampling schedules for a ball instance.

use safenum::spnum::{compute_schedule, ScheduleMode};
use safenum::utilities::RegularityConstants;

fn main() -> safenum::Result<()> {
    for n in [5, 10, 20] {
        let s = compute_schedule(
            RegularityConstants::ball(),
            1.0,
            1.0,
            n,
            n,
            1,
            ScheduleMode::Paper,
        )?;
        println!("n = {n}: Delta = {:.4e}, tau = {:.3}", s.delta, s.tau);
        println!(
            "  {:>4} {:>12} {:>12} {:>12} {:>12}",
            "t", "gamma", "shrinkage", "eta", "e_i bound"
        );
        for t in [0, 1, 2, 5, 10, 25] {
            println!(
                "  {t:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                s.gamma(t),
                s.shrinkage(t as i64),
                s.eta(t),
                s.jacobian_error_bound(t, 1)
            );
        }
    }
    Ok(())
}
