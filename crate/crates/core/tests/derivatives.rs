mod common;

use common::*;
use safenum::error::Error;
use safenum::utilities::{
    certify_constants, FamilyRange, RegularityConstants, UtilityModel, CERTIFY_GRID,
};

fn assert_second_order(name: &str, model: &UtilityModel, x: f64, h: f64) {
    let (g, hs) = fd_ratios(model, x, h);
    assert!((3.5..=4.5).contains(&g), "{name}: gradient error ratio {g}");
    assert!(
        (3.5..=4.5).contains(&hs),
        "{name}: hessian error ratio {hs}"
    );
}

#[test]
fn quad_log_derivatives_converge_at_second_order() {
    for (y, theta, x) in [(3.0, 0.8, 0.7), (-1.0, 0.3, -0.6), (0.5, 1.0, 1.4)] {
        let m = UtilityModel::quad_log(y, theta, -2.0, 2.0).unwrap();
        assert_second_order("quad_log", &m, x, 0.05);
    }
}

#[test]
fn alpha_fair_derivatives_converge_at_second_order() {
    for (alpha, x) in [(0.5, 0.8), (1.0, 0.6), (2.0, 1.1), (3.0, 0.9)] {
        let m = UtilityModel::alpha_fair(alpha, 0.1, 2.0).unwrap();
        assert_second_order("alpha_fair", &m, x, 0.01);
    }
}

#[test]
fn cos_quad_derivatives_converge_at_second_order() {
    for (theta, omega, x) in [(1.0, 0.1, 0.3), (2.0, 1.0, 0.6), (1.5, 3.0, 0.2)] {
        let m = UtilityModel::cos_quad(theta, omega, 0.0, 1.0).unwrap();
        assert_second_order("cos_quad", &m, x, 0.05);
    }
}

#[test]
fn third_derivative_matches_differenced_hessian() {
    let models = [
        UtilityModel::quad_log(1.0, 0.7, -2.0, 2.0).unwrap(),
        UtilityModel::alpha_fair(2.0, 0.1, 2.0).unwrap(),
        UtilityModel::cos_quad(1.3, 2.0, 0.0, 1.0).unwrap(),
    ];
    for m in &models {
        for x in [0.35, 0.5, 0.8] {
            let (fd, _) = central_diff(|v| m.hessian(&[v]).unwrap()[(0, 0)], x, 1e-4);
            let exact = m.third_derivative(&[x], 0).unwrap();
            assert!(
                (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                "{m:?} at {x}: {fd} vs {exact}"
            );
        }
    }
}

/// Constants measured by differencing on a widened domain, so the region endpoints keep
/// two-sided stencils.
fn differenced_constants(
    models: &[UtilityModel],
    region: (f64, f64),
    grid: usize,
) -> RegularityConstants {
    let (lo, hi) = region;
    let mut c = RegularityConstants {
        mu: f64::INFINITY,
        l: 0.0,
        m: 0.0,
        beta: 0.0,
    };
    for model in models {
        let f = |v: f64| model.value(&[v]).unwrap();
        let g = |v: f64| model.gradient(&[v]).unwrap()[0];
        let h = |v: f64| model.hessian(&[v]).unwrap()[(0, 0)];
        for i in 0..grid {
            let x = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            let (d1, _) = central_diff(f, x, 1e-5);
            let (d2, _) = central_diff(g, x, 1e-5);
            let (d3, _) = central_diff(h, x, 1e-4);
            c.m = c.m.max(d1.abs());
            c.mu = c.mu.min(-d2);
            c.l = c.l.max(-d2);
            c.beta = c.beta.max(d3.abs());
        }
    }
    c
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-12)
}

fn assert_constants_close(got: &RegularityConstants, want: &RegularityConstants, rel: f64) {
    assert!(close(got.mu, want.mu, rel), "mu {} vs {}", got.mu, want.mu);
    assert!(close(got.l, want.l, rel), "L {} vs {}", got.l, want.l);
    assert!(close(got.m, want.m, rel), "M {} vs {}", got.m, want.m);
    assert!(
        close(got.beta, want.beta, rel),
        "beta {} vs {}",
        got.beta,
        want.beta
    );
}

fn span(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

#[test]
fn benchmark_constants_match_differenced_audit() {
    let range = FamilyRange::QuadLog {
        y: (3.0, 3.0),
        theta: (0.0, 1.0),
    };
    let configured = RegularityConstants::benchmark();
    let tight = certify_constants(&range, (0.0, 1.0), CERTIFY_GRID, &configured).unwrap();
    let models: Vec<_> = span(0.0, 1.0, 21)
        .into_iter()
        .map(|t| UtilityModel::quad_log(3.0, t, -1.0, 2.0).unwrap())
        .collect();
    let oracle = differenced_constants(&models, (0.0, 1.0), 201);
    assert_constants_close(&tight, &oracle, 1e-5);
    // Every configured benchmark constant is attained.
    assert_constants_close(&configured, &oracle, 1e-5);
}

#[test]
fn ball_constants_match_differenced_audit() {
    let range = FamilyRange::QuadLog {
        y: (-2.0, 2.0),
        theta: (0.0, 1.0),
    };
    let configured = RegularityConstants::ball();
    let tight = certify_constants(&range, (-1.0, 1.0), CERTIFY_GRID, &configured).unwrap();
    let mut models = Vec::new();
    for y in span(-2.0, 2.0, 21) {
        for t in span(0.0, 1.0, 21) {
            models.push(UtilityModel::quad_log(y, t, -2.0, 2.0).unwrap());
        }
    }
    let oracle = differenced_constants(&models, (-1.0, 1.0), 101);
    assert_constants_close(&tight, &oracle, 1e-5);
    assert_constants_close(&configured, &oracle, 1e-5);
}

#[test]
fn cos_quad_constants_are_certified_and_l_is_attained() {
    for omega in [0.001, 0.1] {
        let range = FamilyRange::CosQuad {
            theta: (1.0, 2.0),
            omega,
        };
        let configured = RegularityConstants::cos_quad(omega);
        let tight = certify_constants(&range, (0.0, 1.0), CERTIFY_GRID, &configured).unwrap();
        let models: Vec<_> = span(1.0, 2.0, 21)
            .into_iter()
            .map(|t| UtilityModel::cos_quad(t, omega, -0.5, 1.5).unwrap())
            .collect();
        let oracle = differenced_constants(&models, (0.0, 1.0), 201);
        assert!(close(tight.l, oracle.l, 1e-6) && close(tight.m, oracle.m, 1e-6));
        assert!(close(tight.mu, oracle.mu, 1e-6));
        assert!((tight.beta - oracle.beta).abs() <= 1e-6 * omega);
        assert!(
            close(configured.l, tight.l, 1e-9),
            "L {} vs {}",
            configured.l,
            tight.l
        );
        assert!(configured.mu <= tight.mu && configured.beta >= tight.beta);
        assert!(configured.m >= tight.m);
    }
}

#[test]
fn understated_lipschitz_constant_is_rejected() {
    let range = FamilyRange::CosQuad {
        theta: (1.0, 2.0),
        omega: 0.1,
    };
    let stated = RegularityConstants {
        m: 40.0,
        ..RegularityConstants::cos_quad(0.1)
    };
    let err = certify_constants(&range, (0.0, 1.0), CERTIFY_GRID, &stated).unwrap_err();
    assert!(matches!(err, Error::CertificationFailure(_)), "{err:?}");
}
