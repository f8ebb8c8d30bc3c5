//! Brute-force reference implementations shared by the integration tests. None of them call
//! into the solver paths they check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use safenum::geometry::FeasibleSet;
use safenum::linalg::{Matrix, Vector};
use safenum::utilities::UtilityModel;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Subsets of `0..m` with at most `max` elements, including the empty one.
pub fn subsets(m: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for j in 0..m {
        let mut more = Vec::new();
        for s in &out {
            if s.len() < max {
                let mut t = s.clone();
                t.push(j);
                more.push(t);
            }
        }
        out.extend(more);
    }
    out
}

/// Minimizes `0.5 sum_k w_k (x_k - a_k)^2` over `{x : rows x <= c}` by enumerating active
/// sets and keeping the KKT point (primal feasible, nonnegative multipliers).
pub fn weighted_projection_kkt(rows: &[Vec<f64>], c: &[f64], a: &[f64], w: &[f64]) -> Vector {
    let d = a.len();
    let av = Vector::from_column_slice(a);
    let winv = Vector::from_iterator(d, w.iter().map(|v| 1.0 / v));
    let mut best: Option<(f64, Vector)> = None;
    for s in subsets(rows.len(), d) {
        let k = s.len();
        let x = if k == 0 {
            av.clone()
        } else {
            let a_s = Matrix::from_fn(k, d, |i, j| rows[s[i]][j]);
            let m = &a_s * Matrix::from_diagonal(&winv) * a_s.transpose();
            if m.determinant().abs() < 1e-12 {
                continue;
            }
            let rhs = &a_s * &av - Vector::from_iterator(k, s.iter().map(|&j| c[j]));
            let Some(lambda) = m.lu().solve(&rhs) else {
                continue;
            };
            if lambda.iter().any(|&l| l < -1e-12) {
                continue;
            }
            &av - Matrix::from_diagonal(&winv) * a_s.transpose() * lambda
        };
        let feasible = rows
            .iter()
            .zip(c)
            .all(|(r, &cj)| r.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= cj + 1e-10);
        if !feasible {
            continue;
        }
        let obj: f64 = (0..d).map(|k| 0.5 * w[k] * (x[k] - a[k]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.expect("a bounded nonempty polytope has a KKT point").1
}

pub fn projection_kkt(rows: &[Vec<f64>], c: &[f64], y: &[f64]) -> Vector {
    weighted_projection_kkt(rows, c, y, &vec![1.0; y.len()])
}

/// Unit box `[-1, 1]^d` plus `extra` random cuts `a x <= b` with `b in [0.2, 1]`, so the origin
/// is interior.
pub fn random_polytope(rng: &mut ChaCha20Rng, d: usize, extra: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut c = Vec::new();
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut r = vec![0.0; d];
            r[k] = s;
            rows.push(r);
            c.push(1.0);
        }
    }
    for _ in 0..extra {
        let r: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if r.iter().map(|v| v * v).sum::<f64>() < 1e-2 {
            continue;
        }
        rows.push(r);
        c.push(rng.gen_range(0.2..1.0));
    }
    (rows, c)
}

pub fn random_point(rng: &mut ChaCha20Rng, d: usize, scale: f64) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| rng.gen_range(-scale..scale)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetFamily {
    Polytope,
    Ball,
    Box,
    Intersection,
}

impl SetFamily {
    pub const ALL: [SetFamily; 4] = [Self::Polytope, Self::Ball, Self::Box, Self::Intersection];
}

pub fn random_set(rng: &mut ChaCha20Rng, family: SetFamily, d: usize) -> FeasibleSet {
    match family {
        SetFamily::Polytope => {
            let extra = rng.gen_range(0..=8usize.saturating_sub(2 * d));
            let (rows, c) = random_polytope(rng, d, extra);
            FeasibleSet::polytope(rows, c).unwrap()
        }
        SetFamily::Ball => {
            let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            FeasibleSet::ball(center, rng.gen_range(0.5..2.0)).unwrap()
        }
        SetFamily::Box => {
            let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.5..3.0)).collect();
            FeasibleSet::boxed(lo, hi).unwrap()
        }
        SetFamily::Intersection => {
            let extra = rng.gen_range(0..=2);
            let (rows, c) = random_polytope(rng, d, extra);
            let ball = FeasibleSet::ball(vec![0.0; d], rng.gen_range(0.8..1.5)).unwrap();
            FeasibleSet::intersection(vec![FeasibleSet::polytope(rows, c).unwrap(), ball]).unwrap()
        }
    }
}

/// Scalar price response by a `1e-6` grid search on `f(x) - p x` and bisection on the
/// stationarity condition inside the bracketing cell.
pub fn response_grid_bisection(model: &UtilityModel, p: f64) -> f64 {
    let (lo, hi) = (model.lo()[0], model.hi()[0]);
    let cells = ((hi - lo) / 1e-6).ceil() as usize;
    let obj = |x: f64| model.value(&[x]).unwrap() - p * x;
    let at = |i: usize| (lo + (hi - lo) * i as f64 / cells as f64).min(hi);
    let mut best = 0;
    let mut best_v = obj(lo);
    for i in 1..=cells {
        let v = obj(at(i));
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    let slope = |x: f64| model.gradient(&[x]).unwrap()[0] - p;
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(cells)));
    // Values of large-offset utilities round at the grid scale; widen until the slope brackets.
    let mut width = b - a;
    while slope(a) <= 0.0 && a > lo {
        width *= 2.0;
        a = (a - width).max(lo);
    }
    while slope(b) >= 0.0 && b < hi {
        width *= 2.0;
        b = (b + width).min(hi);
    }
    if slope(a) <= 0.0 {
        return a;
    }
    if slope(b) >= 0.0 {
        return b;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Central differences of `f` at `x` with step `h`: first and second derivative.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    let (fp, f0, fm) = (f(x + h), f(x), f(x - h));
    ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
}

/// Largest `|Pi(y) - oracle(y)|` per random polytope instance (`d <= 4`, at most 8 rows).
pub fn projection_oracle_errors(seed: u64, cases: usize) -> Vec<f64> {
    use safenum::geometry::ProjectionOptions;
    let mut r = rng(seed);
    (0..cases)
        .map(|_| {
            let d = r.gen_range(1..=4usize);
            let extra = r.gen_range(0..=8 - 2 * d);
            let (rows, c) = random_polytope(&mut r, d, extra);
            let set = FeasibleSet::polytope(rows.clone(), c.clone()).unwrap();
            (0..5)
                .map(|_| {
                    let y = random_point(&mut r, d, 3.0);
                    let got = set.project(&y, &ProjectionOptions::default()).unwrap();
                    (got - projection_kkt(&rows, &c, y.as_slice())).amax()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// A random scalar user from one of the three families.
pub fn random_scalar_user(r: &mut ChaCha20Rng, family: usize) -> UtilityModel {
    match family % 3 {
        0 => UtilityModel::quad_log(r.gen_range(-2.0..3.0), r.gen_range(0.0..1.0), -1.0, 1.0)
            .unwrap(),
        1 => UtilityModel::alpha_fair(
            r.gen_range(0.5..3.0),
            r.gen_range(0.05..0.5),
            r.gen_range(1.0..2.0),
        )
        .unwrap(),
        _ => UtilityModel::cos_quad(
            r.gen_range(1.0..2.0),
            [0.001, 0.1][r.gen_range(0..2)],
            0.0,
            1.0,
        )
        .unwrap(),
    }
}

/// `|g(p) - oracle(p)|` for random users and prices, interior and clipped.
pub fn response_oracle_errors(seed: u64, cases: usize) -> Vec<f64> {
    use safenum::utilities::PriceResponse;
    let mut r = rng(seed);
    (0..cases)
        .map(|i| {
            let model = random_scalar_user(&mut r, i);
            let (lo, hi) = (model.lo()[0], model.hi()[0]);
            // Prices spanning the marginal utilities over the domain, plus a margin on both sides.
            let g_lo = model.gradient(&[lo]).unwrap()[0];
            let g_hi = model.gradient(&[hi]).unwrap()[0];
            let span = (g_lo - g_hi).abs().max(1.0);
            let p = r.gen_range(g_hi - 0.1 * span..g_lo + 0.1 * span);
            let got = PriceResponse::new(model.clone())
                .price_response(&[p])
                .unwrap()[0];
            (got - response_grid_bisection(&model, p)).abs()
        })
        .collect()
}

/// `|x* - oracle|` for quadratic users on random polytopes: the optimum is the projection of
/// `y - 1` and is found by active-set enumeration.
pub fn central_oracle_errors(seed: u64, cases: usize) -> Vec<f64> {
    use safenum::metrics::solve_central;
    use safenum::utilities::{Population, PriceResponse};
    let mut r = rng(seed);
    (0..cases)
        .map(|_| {
            let d = r.gen_range(1..=4usize);
            let extra = r.gen_range(0..=8 - 2 * d);
            let (rows, c) = random_polytope(&mut r, d, extra);
            let set = FeasibleSet::polytope(rows.clone(), c.clone()).unwrap();
            let y: Vec<f64> = (0..d).map(|_| r.gen_range(-1.5..2.5)).collect();
            let users = y
                .iter()
                .map(|&yi| PriceResponse::new(UtilityModel::quad_log(yi, 0.0, -5.0, 5.0).unwrap()))
                .collect();
            let pop = Population::new(users).unwrap();
            let sol = solve_central(&set, &pop, 1.0, 1e-13).unwrap();
            let target: Vec<f64> = y.iter().map(|v| v - 1.0).collect();
            (sol.x() - projection_kkt(&rows, &c, &target)).amax()
        })
        .collect()
}

/// Error ratios `e(h) / e(h/2)` of central differences against the analytic gradient and
/// Hessian. Steps are chosen per family so that truncation dominates rounding.
pub fn fd_ratios(model: &UtilityModel, x: f64, h: f64) -> (f64, f64) {
    let g = model.gradient(&[x]).unwrap()[0];
    let hs = model.hessian(&[x]).unwrap()[(0, 0)];
    let f = |v: f64| model.value(&[v]).unwrap();
    let gf = |v: f64| model.gradient(&[v]).unwrap()[0];
    let err = |h: f64| {
        let (d1, _) = central_diff(f, x, h);
        let (d2, _) = central_diff(gf, x, h);
        ((d1 - g).abs(), (d2 - hs).abs())
    };
    let (g1, h1) = err(h);
    let (g2, h2) = err(h / 2.0);
    (g1 / g2, h1 / h2)
}

/// Violations of the four geometric properties on `cases` random sets of one family.
pub fn geometry_property_failures(family: SetFamily, seed: u64, cases: usize) -> Vec<String> {
    use safenum::geometry::ProjectionOptions;
    let opts = ProjectionOptions::default();
    let tol = 1e-8;
    let mut r = rng(seed);
    let mut failures = Vec::new();
    for case in 0..cases {
        let d = r.gen_range(1..=3usize);
        let set = random_set(&mut r, family, d);
        let h = set.max_shrinkage().unwrap();
        let (x, y) = (random_point(&mut r, d, 3.0), random_point(&mut r, d, 3.0));
        let (px, py) = (
            set.project(&x, &opts).unwrap(),
            set.project(&y, &opts).unwrap(),
        );
        if (&px - &py).norm() > (&x - &y).norm() + tol {
            failures.push(format!("case {case}: projection expands distances"));
        }
        let d1 = r.gen_range(0.0..0.9) * h;
        let d2 = d1 + r.gen_range(0.0..1.0) * (0.9 * h - d1);
        let s1 = set.shrink(d1).unwrap();
        let s2 = set.shrink(d2).unwrap();
        let z2 = s2.project(&x, &opts).unwrap();
        if set.depth(&z2) < d2 - tol {
            failures.push(format!(
                "case {case}: shrunk-set point has depth {} < {d2}",
                set.depth(&z2)
            ));
        }
        if !s1.contains(&z2, tol) {
            failures.push(format!("case {case}: X_{d2} is not inside X_{d1}"));
        }
        // Intersections carry no closed-form constant; their callers supply one.
        if family != SetFamily::Intersection {
            let (gamma, _) = set.sharpness_bound_auto().unwrap();
            let sharp = set.sharpness_empirical(d2, 16).unwrap();
            if sharp > gamma * d2 * (1.0 + 1e-9) + tol {
                failures.push(format!(
                    "case {case}: sharpness {sharp} exceeds {gamma} * {d2}"
                ));
            }
        }
    }
    failures
}
