//! Euclidean projection onto the four set kinds.

use safenum::geometry::{FeasibleSet, ProjectionOptions};
use safenum::linalg::Vector;

fn main() -> safenum::Result<()> {
    let opts = ProjectionOptions::default();
    let sets = [
        (
            "triangle",
            FeasibleSet::polytope(
                vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
                vec![0.0, 0.0, 1.0],
            )?,
        ),
        ("unit ball", FeasibleSet::ball(vec![0.0, 0.0], 1.0)?),
        ("box", FeasibleSet::boxed(vec![-0.5, 0.0], vec![0.5, 2.0])?),
        (
            "ball and halfplane",
            FeasibleSet::intersection(vec![
                FeasibleSet::ball(vec![0.0, 0.0], 1.0)?,
                FeasibleSet::polytope(
                    vec![
                        vec![1.0, 1.0],
                        vec![-1.0, 0.0],
                        vec![0.0, -1.0],
                        vec![1.0, 0.0],
                        vec![0.0, 1.0],
                    ],
                    vec![0.5, 2.0, 2.0, 2.0, 2.0],
                )?,
            ])?,
        ),
    ];
    let points = [vec![2.0, 2.0], vec![-1.5, 0.3], vec![0.2, 0.1]];
    for (name, set) in &sets {
        println!("{name}");
        for p in &points {
            let x = Vector::from_column_slice(p);
            let y = set.project(&x, &opts)?;
            println!(
                "  ({:5.2}, {:5.2}) -> ({:8.5}, {:8.5})  moved {:.5}, depth {:+.2e}",
                x[0],
                x[1],
                y[0],
                y[1],
                (&y - &x).norm(),
                set.depth(&y)
            );
        }
    }
    Ok(())
}
