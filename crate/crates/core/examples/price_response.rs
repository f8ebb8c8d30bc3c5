//! Price responses of the three utility families and their exact Jacobians.

use safenum::utilities::{PriceResponse, UtilityModel};

fn main() -> safenum::Result<()> {
    let users = [
        (
            "quad-log y=3 theta=0.5",
            UtilityModel::quad_log(3.0, 0.5, 0.0, 1.0)?,
            [0.0, 0.7, 1.0, 1.5, 2.0],
        ),
        (
            "alpha-fair alpha=2",
            UtilityModel::alpha_fair(2.0, 0.1, 2.0)?,
            [0.1, 0.5, 1.0, 5.0, 40.0],
        ),
        (
            "cos-quad theta=1.5 omega=0.1",
            UtilityModel::cos_quad(1.5, 0.1, 0.0, 1.0)?,
            [20.0, 30.0, 40.0, 50.0, 70.0],
        ),
    ];
    for (name, model, prices) in users {
        let user = PriceResponse::new(model);
        println!("{name}");
        for p in prices {
            let x = user.price_response(&[p])?[0];
            let slope = match user.response_jacobian_exact(&[p]) {
                Ok(j) => format!("{:+.5}", j[(0, 0)]),
                Err(_) => "clipped".to_string(),
            };
            let marginal = user.model().gradient(&[x])?[0];
            println!("  p = {p:5.1}: x = {x:.6}, f'(x) = {marginal:8.4}, dx/dp = {slope}");
        }
    }
    Ok(())
}
