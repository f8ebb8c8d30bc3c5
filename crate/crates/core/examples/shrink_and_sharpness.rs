//! Shrunk sets, maximum shrinkage and the sharpness constant.

use safenum::geometry::{FeasibleSet, ProjectionOptions, SharpnessMode};
use safenum::linalg::Vector;

fn main() -> safenum::Result<()> {
    // A thin wedge: sharp corners make Gamma large.
    let wedge = FeasibleSet::polytope(
        vec![vec![0.2, -1.0], vec![0.2, 1.0], vec![-1.0, 0.0]],
        vec![0.2, 0.2, 0.2],
    )?;
    let ball = FeasibleSet::ball(vec![0.0, 0.0], 1.0)?;

    for (name, set) in [("wedge", &wedge), ("ball", &ball)] {
        let h = set.max_shrinkage()?;
        let center = set.deepest_point()?;
        let (gamma, mode) = set.sharpness_bound_auto()?;
        println!(
            "{name}: H = {h:.4} at ({:.4}, {:.4}), Gamma = {gamma:.3} ({mode:?})",
            center[0], center[1]
        );
        // The spectral value can fall below what the boundary actually shows.
        println!(
            "  spectral estimate {:.3}",
            set.sharpness_bound(SharpnessMode::SpectralBound)?
        );
        for frac in [0.05, 0.25, 0.5, 0.9] {
            let delta = frac * h;
            let observed = set.sharpness_empirical(delta, 64)?;
            println!(
                "  delta = {delta:.4}: max |Pi(x) - x| over the boundary {observed:.4} <= Gamma delta = {:.4}",
                gamma * delta
            );
        }
        let shrunk = set.shrink(0.5 * h)?;
        let far = Vector::from_vec(vec![5.0, 0.3]);
        let y = shrunk.project(&far, &ProjectionOptions::default())?;
        println!(
            "  projection of (5, 0.3) onto X_(H/2) has depth {:.4}",
            set.depth(&y)
        );
    }
    Ok(())
}
