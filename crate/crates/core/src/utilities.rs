//! Concave user utilities, certified regularity constants and the exact price response
//! `g_i(p) = argmax_{x in dom f_i} f_i(x) - <p, x>`.

use std::ops::Range;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Price-response tolerance on `|f'(x) - p|` for scalar users.
pub const TOL_G_SCALAR: f64 = 1e-12;
/// KKT-residual tolerance for block users.
pub const TOL_G_BLOCK: f64 = 1e-10;
/// Grid points per dimension used by [`certify_constants`].
pub const CERTIFY_GRID: usize = 1001;

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `-0.5 (x-y)' Q (x-y) - sum x_k - theta sum log(1 + e^{x_k})`; `Q = 1` for scalar users.
    QuadLog { y: Vector, theta: f64, q: Matrix },
    /// `x^{1-alpha} / (1-alpha)`, or `log x` for `alpha = 1`.
    AlphaFair { alpha: f64 },
    /// `theta (cos(omega (x-1)) / omega^2 - 10 (x-2)^2 - x sin(omega) / omega)`.
    CosQuad { theta: f64, omega: f64 },
}

/// A strongly concave utility on a closed box domain.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityModel {
    family: Family,
    lo: Vector,
    hi: Vector,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidModel(format!(
            "domain [{lo}, {hi}] is not a proper interval"
        )));
    }
    Ok(())
}

impl UtilityModel {
    /// Scalar `-0.5 (x-y)^2 - x - theta log(1+e^x)` on `[lo, hi]`.
    pub fn quad_log(y: f64, theta: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::quad_log_block(vec![y], theta, Matrix::identity(1, 1), vec![lo], vec![hi])
    }

    /// Block quadratic-log utility with a symmetric positive definite coupling `q`.
    pub fn quad_log_block(
        y: Vec<f64>,
        theta: f64,
        q: Matrix,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self> {
        let d = y.len();
        if d == 0 || q.nrows() != d || q.ncols() != d || lo.len() != d || hi.len() != d {
            return Err(Error::InvalidModel("quad-log dimensions disagree".into()));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::InvalidModel(format!(
                "theta must be nonnegative, got {theta}"
            )));
        }
        if (&q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidModel(
                "coupling matrix is not symmetric".into(),
            ));
        }
        if Cholesky::new(q.clone()).is_none() {
            return Err(Error::InvalidModel(
                "coupling matrix is not positive definite".into(),
            ));
        }
        for k in 0..d {
            check_interval(lo[k], hi[k])?;
        }
        Ok(Self {
            family: Family::QuadLog {
                y: Vector::from_vec(y),
                theta,
                q,
            },
            lo: Vector::from_vec(lo),
            hi: Vector::from_vec(hi),
        })
    }

    /// Scalar alpha-fair utility; the domain must stay away from the pole at zero.
    pub fn alpha_fair(alpha: f64, lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidModel(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(lo > 0.0) {
            return Err(Error::InvalidModel(format!(
                "alpha-fair domain must have a positive lower bound, got {lo}"
            )));
        }
        Ok(Self {
            family: Family::AlphaFair { alpha },
            lo: Vector::from_element(1, lo),
            hi: Vector::from_element(1, hi),
        })
    }

    pub fn cos_quad(theta: f64, omega: f64, lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        if !(theta > 0.0) || !(omega > 0.0) || !theta.is_finite() || !omega.is_finite() {
            return Err(Error::InvalidModel(format!(
                "cos-quad needs theta > 0 and omega > 0, got {theta}, {omega}"
            )));
        }
        Ok(Self {
            family: Family::CosQuad { theta, omega },
            lo: Vector::from_element(1, lo),
            hi: Vector::from_element(1, hi),
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    /// Coordinatewise separable (every family except a coupled quad-log block).
    pub fn is_separable(&self) -> bool {
        match &self.family {
            Family::QuadLog { q, .. } => {
                let d = q.nrows();
                (0..d).all(|i| (0..d).all(|j| i == j || q[(i, j)] == 0.0))
            }
            _ => true,
        }
    }

    fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidModel(format!(
                "point has dimension {} but the utility has {}",
                x.len(),
                self.dim()
            )));
        }
        for (k, &v) in x.iter().enumerate() {
            if !(v >= self.lo[k] && v <= self.hi[k]) {
                return Err(Error::DomainViolation {
                    point: x.to_vec(),
                    coord: k,
                    lo: self.lo[k],
                    hi: self.hi[k],
                });
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match &self.family {
            Family::QuadLog { y, theta, q } => {
                let z = Vector::from_column_slice(x) - y;
                let quad = 0.5 * z.dot(&(q * &z));
                -quad - x.iter().sum::<f64>() - theta * x.iter().map(|&v| softplus(v)).sum::<f64>()
            }
            Family::AlphaFair { alpha } => {
                let v = x[0];
                if *alpha == 1.0 {
                    v.ln()
                } else {
                    v.powf(1.0 - alpha) / (1.0 - alpha)
                }
            }
            Family::CosQuad { theta, omega } => {
                let v = x[0];
                theta
                    * ((omega * (v - 1.0)).cos() / (omega * omega)
                        - 10.0 * (v - 2.0).powi(2)
                        - v * omega.sin() / omega)
            }
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vector> {
        self.check_domain(x)?;
        Ok(self.gradient_unchecked(x))
    }

    fn gradient_unchecked(&self, x: &[f64]) -> Vector {
        match &self.family {
            Family::QuadLog { y, theta, q } => {
                let xv = Vector::from_column_slice(x);
                let z = &xv - y;
                -(q * z)
                    - Vector::from_iterator(x.len(), x.iter().map(|&v| 1.0 + theta * sigmoid(v)))
            }
            Family::AlphaFair { alpha } => Vector::from_element(1, x[0].powf(-alpha)),
            Family::CosQuad { theta, omega } => {
                let v = x[0];
                Vector::from_element(
                    1,
                    theta
                        * (-(omega * (v - 1.0)).sin() / omega
                            - 20.0 * (v - 2.0)
                            - omega.sin() / omega),
                )
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_domain(x)?;
        Ok(self.hessian_unchecked(x))
    }

    fn hessian_unchecked(&self, x: &[f64]) -> Matrix {
        match &self.family {
            Family::QuadLog { theta, q, .. } => {
                let mut h = -q.clone();
                for (k, &v) in x.iter().enumerate() {
                    let s = sigmoid(v);
                    h[(k, k)] -= theta * s * (1.0 - s);
                }
                h
            }
            Family::AlphaFair { alpha } => {
                Matrix::from_element(1, 1, -alpha * x[0].powf(-alpha - 1.0))
            }
            Family::CosQuad { theta, omega } => {
                Matrix::from_element(1, 1, theta * (-(omega * (x[0] - 1.0)).cos() - 20.0))
            }
        }
    }

    /// Third derivative along coordinate `k` (all families have diagonal third derivatives).
    pub fn third_derivative(&self, x: &[f64], k: usize) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match &self.family {
            Family::QuadLog { theta, .. } => {
                let s = sigmoid(x[k]);
                -theta * s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Family::AlphaFair { alpha } => alpha * (alpha + 1.0) * x[0].powf(-alpha - 2.0),
            Family::CosQuad { theta, omega } => theta * omega * (omega * (x[0] - 1.0)).sin(),
        })
    }
}

/// Strong concavity `mu`, smoothness `L`, Lipschitz constant `M` and Hessian Lipschitz
/// constant `beta`, valid on a stated region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub beta: f64,
}

impl RegularityConstants {
    pub fn new(mu: f64, l: f64, m: f64, beta: f64) -> Result<Self> {
        let c = Self { mu, l, m, beta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.l, self.m, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.mu > 0.0) || !(self.m > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidConstants(format!("{self:?}")));
        }
        if self.mu > self.l {
            return Err(Error::InvalidConstants(format!(
                "mu = {} exceeds L = {}",
                self.mu, self.l
            )));
        }
        Ok(())
    }

    /// True when `self` is a valid (looser or equal) certificate for `tight`.
    pub fn dominates(&self, tight: &Self, rel_tol: f64) -> bool {
        let slack = |v: f64| rel_tol * v.abs().max(1e-300);
        self.mu <= tight.mu + slack(tight.mu)
            && self.l >= tight.l - slack(tight.l)
            && self.m >= tight.m - slack(tight.m)
            && self.beta >= tight.beta - slack(tight.beta)
    }

    /// Constants of the benchmark quad-log users (`y = 3`, `theta in [0, 1]`, region `[0, 1]`).
    pub fn benchmark() -> Self {
        Self {
            mu: 1.0,
            l: 1.25,
            m: 2.0,
            beta: logistic_beta(),
        }
    }

    /// Quad-log users with `y in [-2, 2]`, `theta in [0, 1]` on `[-1, 1]`.
    pub fn ball() -> Self {
        let e = std::f64::consts::E;
        Self {
            mu: 1.0,
            l: 1.25,
            m: 4.0 + e / (1.0 + e),
            beta: logistic_beta(),
        }
    }

    /// Cos-quad users with `theta in [1, 2]` on `[0, 1]`. `M` is 80: the gradient at
    /// `x = 0` equals `40 theta`.
    pub fn cos_quad(omega: f64) -> Self {
        Self {
            mu: 19.0,
            l: 42.0,
            m: 80.0,
            beta: 2.0 * omega,
        }
    }
}

/// `sinh(1) / (2 (1 + cosh(1))^2)`, the largest `|d^3/dx^3 log(1+e^x)|` on `[-1, 1]`.
pub fn logistic_beta() -> f64 {
    1f64.sinh() / (2.0 * (1.0 + 1f64.cosh()).powi(2))
}

/// Parameter ranges of a scalar family, for auditing constants over a whole population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyRange {
    QuadLog { y: (f64, f64), theta: (f64, f64) },
    AlphaFair { alpha: f64 },
    CosQuad { theta: (f64, f64), omega: f64 },
}

impl FamilyRange {
    fn members(&self, lo: f64, hi: f64) -> Result<Vec<UtilityModel>> {
        const PARAM_GRID: usize = 21;
        let span = |(a, b): (f64, f64)| -> Vec<f64> {
            if a == b {
                vec![a]
            } else {
                (0..PARAM_GRID)
                    .map(|i| a + (b - a) * i as f64 / (PARAM_GRID - 1) as f64)
                    .collect()
            }
        };
        let mut out = Vec::new();
        match *self {
            Self::QuadLog { y, theta } => {
                for &yv in &span(y) {
                    for &t in &span(theta) {
                        out.push(UtilityModel::quad_log(yv, t, lo, hi)?);
                    }
                }
            }
            Self::AlphaFair { alpha } => out.push(UtilityModel::alpha_fair(alpha, lo, hi)?),
            Self::CosQuad { theta, omega } => {
                for &t in &span(theta) {
                    out.push(UtilityModel::cos_quad(t, omega, lo, hi)?);
                }
            }
        }
        Ok(out)
    }
}

/// Tightest constants observed on a `grid`-point audit of `region` over the family's
/// parameter range.
pub fn audit_constants(
    range: &FamilyRange,
    region: (f64, f64),
    grid: usize,
) -> Result<RegularityConstants> {
    let (lo, hi) = region;
    check_interval(lo, hi)?;
    if grid < 2 {
        return Err(Error::InvalidModel(
            "audit grid needs at least two points".into(),
        ));
    }
    let mut mu = f64::INFINITY;
    let mut l: f64 = 0.0;
    let mut m: f64 = 0.0;
    let mut beta: f64 = 0.0;
    for model in range.members(lo, hi)? {
        for i in 0..grid {
            let x = [lo + (hi - lo) * i as f64 / (grid - 1) as f64];
            let g = model.gradient(&x)?[0];
            let h = model.hessian(&x)?[(0, 0)];
            if !(h < 0.0) {
                return Err(Error::CertificationFailure(format!(
                    "second derivative {h} at x = {} is not negative",
                    x[0]
                )));
            }
            m = m.max(g.abs());
            mu = mu.min(-h);
            l = l.max(-h);
            beta = beta.max(model.third_derivative(&x, 0)?.abs());
        }
    }
    Ok(RegularityConstants { mu, l, m, beta })
}

/// Audits the family on `region` and checks that `configured` dominates the audit.
/// Returns the audited (tight) constants.
pub fn certify_constants(
    range: &FamilyRange,
    region: (f64, f64),
    grid: usize,
    configured: &RegularityConstants,
) -> Result<RegularityConstants> {
    configured.validate()?;
    let tight = audit_constants(range, region, grid)?;
    if !configured.dominates(&tight, 1e-9) {
        return Err(Error::CertificationFailure(format!(
            "configured {configured:?} does not dominate audited {tight:?}"
        )));
    }
    Ok(tight)
}

/// A selfish user: the exact maximizer of utility minus payment.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceResponse {
    model: UtilityModel,
    tol_g: f64,
}

impl PriceResponse {
    pub fn new(model: UtilityModel) -> Self {
        let tol_g = if model.dim() == 1 {
            TOL_G_SCALAR
        } else {
            TOL_G_BLOCK
        };
        Self { model, tol_g }
    }

    pub fn with_tol(model: UtilityModel, tol_g: f64) -> Self {
        Self { model, tol_g }
    }

    pub fn model(&self) -> &UtilityModel {
        &self.model
    }

    pub fn tol_g(&self) -> f64 {
        self.tol_g
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `argmax_{x in dom} f(x) - <p, x>`.
    pub fn price_response(&self, p: &[f64]) -> Result<Vector> {
        if p.len() != self.dim() {
            return Err(Error::SolverFailure(format!(
                "price has dimension {} but the user has {}",
                p.len(),
                self.dim()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure(format!("non-finite price {p:?}")));
        }
        if self.model.is_separable() {
            let mut x = Vector::zeros(self.dim());
            for k in 0..self.dim() {
                x[k] = self.solve_coordinate(k, p[k])?;
            }
            Ok(x)
        } else {
            self.projected_newton(p)
        }
    }

    /// `[Hess f(g(p))]^{-1}`; undefined when the response touches the domain boundary.
    pub fn response_jacobian_exact(&self, p: &[f64]) -> Result<Matrix> {
        let x = self.price_response(p)?;
        let interior = (0..x.len()).all(|k| x[k] > self.model.lo[k] && x[k] < self.model.hi[k]);
        if !interior {
            return Err(Error::BoundaryResponse {
                point: x.as_slice().to_vec(),
            });
        }
        self.model
            .hessian(x.as_slice())?
            .try_inverse()
            .ok_or_else(|| Error::SolverFailure("singular Hessian at the response".into()))
    }

    /// Safeguarded Newton-bisection on the strictly decreasing map `x -> df/dx_k - p`.
    /// Other coordinates do not matter for separable models.
    fn solve_coordinate(&self, k: usize, p: f64) -> Result<f64> {
        let (lo, hi) = (self.model.lo[k], self.model.hi[k]);
        let mut point = self.model.lo.as_slice().to_vec();
        let mut eval = |v: f64| -> (f64, f64) {
            point[k] = v;
            let g = self.model.gradient_unchecked(&point)[k] - p;
            let h = self.model.hessian_unchecked(&point)[(k, k)];
            (g, h)
        };
        if eval(lo).0 <= 0.0 {
            return Ok(lo);
        }
        if eval(hi).0 >= 0.0 {
            return Ok(hi);
        }
        let (mut a, mut b) = (lo, hi);
        let mut x = 0.5 * (a + b);
        for _ in 0..400 {
            let (r, h) = eval(x);
            if r == 0.0 {
                return Ok(x);
            }
            if r > 0.0 {
                a = x;
            } else {
                b = x;
            }
            let newton = x - r / h;
            let next = if newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            let settled = (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE)
                || b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs());
            x = next;
            if settled {
                let (r, h) = eval(x);
                // Residual is limited by one ulp of x times the slope.
                let floor = 4.0 * f64::EPSILON * x.abs().max(1.0) * h.abs();
                if r.abs() <= self.tol_g.max(floor) {
                    return Ok(x);
                }
                return Err(Error::SolverFailure(format!(
                    "coordinate {k} settled at {x} with residual {r:e}"
                )));
            }
        }
        Err(Error::SolverFailure(format!(
            "no convergence for price {p}"
        )))
    }

    /// Projected Newton with Armijo backtracking for coupled quad-log blocks.
    fn projected_newton(&self, p: &[f64]) -> Result<Vector> {
        let model = &self.model;
        let d = model.dim();
        let pv = Vector::from_column_slice(p);
        let clamp = |z: &Vector| {
            Vector::from_iterator(d, (0..d).map(|k| z[k].clamp(model.lo[k], model.hi[k])))
        };
        let objective = |z: &Vector| model.value(z.as_slice()).map(|f| f - pv.dot(z));
        let kkt = |z: &Vector, g: &Vector| (clamp(&(z + g)) - z).norm();

        let mut x = clamp(&((&model.lo + &model.hi) / 2.0));
        let mut best = f64::INFINITY;
        let mut stalls = 0;
        for _ in 0..500 {
            let g = model.gradient_unchecked(x.as_slice()) - &pv;
            let residual = kkt(&x, &g);
            if residual <= 1e-15 * (1.0 + x.norm()) {
                return Ok(x);
            }
            if residual < best * 0.5 {
                best = residual;
                stalls = 0;
            } else {
                stalls += 1;
                if stalls >= 5 {
                    break;
                }
            }
            let eps = residual.min(1e-8);
            let active: Vec<bool> = (0..d)
                .map(|k| {
                    (x[k] <= model.lo[k] + eps && g[k] < 0.0)
                        || (x[k] >= model.hi[k] - eps && g[k] > 0.0)
                })
                .collect();
            let free: Vec<usize> = (0..d).filter(|&k| !active[k]).collect();
            let mut dir = g.clone();
            if !free.is_empty() {
                let neg_h = -model.hessian_unchecked(x.as_slice());
                let hff = Matrix::from_fn(free.len(), free.len(), |i, j| neg_h[(free[i], free[j])]);
                let gf = Vector::from_iterator(free.len(), free.iter().map(|&k| g[k]));
                let step = Cholesky::new(hff)
                    .ok_or_else(|| {
                        Error::SolverFailure("Hessian block is not negative definite".into())
                    })?
                    .solve(&gf);
                for (i, &k) in free.iter().enumerate() {
                    dir[k] = step[i];
                }
            }
            let f0 = objective(&x)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-20 {
                let trial = clamp(&(&x + &dir * alpha));
                let decrease: f64 = (0..d)
                    .map(|k| {
                        if active[k] {
                            g[k] * (trial[k] - x[k])
                        } else {
                            alpha * g[k] * dir[k]
                        }
                    })
                    .sum();
                if objective(&trial)? >= f0 + 1e-4 * decrease {
                    x = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let g = model.gradient_unchecked(x.as_slice()) - &pv;
        let residual = kkt(&x, &g);
        if residual <= self.tol_g {
            Ok(x)
        } else {
            Err(Error::SolverFailure(format!(
                "projected Newton stalled with KKT residual {residual:e}"
            )))
        }
    }
}

/// The users of one instance, with their blocks of the stacked demand vector.
#[derive(Clone, Debug)]
pub struct Population {
    users: Vec<PriceResponse>,
    offsets: Vec<usize>,
}

impl Population {
    pub fn new(users: Vec<PriceResponse>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidModel(
                "a population needs at least one user".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(users.len() + 1);
        offsets.push(0);
        for u in &users {
            offsets.push(offsets.last().unwrap() + u.dim());
        }
        Ok(Self { users, offsets })
    }

    /// Number of users `n`.
    pub fn n(&self) -> usize {
        self.users.len()
    }

    /// Total dimension `d`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Largest block dimension.
    pub fn d_bar(&self) -> usize {
        self.users.iter().map(PriceResponse::dim).max().unwrap_or(0)
    }

    pub fn users(&self) -> &[PriceResponse] {
        &self.users
    }

    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn respond(&self, p: &Vector) -> Result<Vector> {
        let mut x = Vector::zeros(self.dim());
        for (i, u) in self.users.iter().enumerate() {
            let b = self.block(i);
            let xi = u.price_response(&p.as_slice()[b.clone()])?;
            x.rows_mut(b.start, b.len()).copy_from(&xi);
        }
        Ok(x)
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        let mut g = Vector::zeros(self.dim());
        for (i, u) in self.users.iter().enumerate() {
            let b = self.block(i);
            let gi = u.model().gradient(&x.as_slice()[b.clone()])?;
            g.rows_mut(b.start, b.len()).copy_from(&gi);
        }
        Ok(g)
    }

    /// Total utility `f(x) = sum_i f_i(x_i)`.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        let mut total = 0.0;
        for (i, u) in self.users.iter().enumerate() {
            total += u.model().value(&x.as_slice()[self.block(i)])?;
        }
        Ok(total)
    }

    /// Stacked domain bounds.
    pub fn domain(&self) -> (Vector, Vector) {
        let lo = Vector::from_iterator(
            self.dim(),
            self.users
                .iter()
                .flat_map(|u| u.model().lo().iter().copied()),
        );
        let hi = Vector::from_iterator(
            self.dim(),
            self.users
                .iter()
                .flat_map(|u| u.model().hi().iter().copied()),
        );
        (lo, hi)
    }
}
