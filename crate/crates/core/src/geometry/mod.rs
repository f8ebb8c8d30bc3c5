//! Convex compact feasible sets: projection, erosion by a ball, maximum shrinkage and
//! sharpness constants.
//!
//! Every set reports a `depth(x)`, the signed distance from `x` to the complement of the set
//! (negative outside). The shrunk set `X_delta` is then exactly `{x : depth(x) >= delta}`, and
//! the maximum shrinkage is `max_x depth(x)`.
//!
//! All sets are immutable after construction and are `Send + Sync`.

mod polytope;

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub use polytope::Polytope;
pub(crate) use polytope::{binomial, Combinations};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, Matrix, Vector};

/// Default projection tolerance.
pub const TOL_PROJ: f64 = 1e-10;
/// Default Dykstra sweep cap.
pub const MAX_CYCLES: usize = 100_000;
/// Largest number of `d`-row subsets the exact sharpness constant will enumerate.
pub const ENUMERATION_CAP: u128 = 20_000;
/// Bisection tolerance for the maximum shrinkage of intersections.
pub const BISECTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionOptions {
    pub tol: f64,
    pub max_cycles: usize,
    /// Attempt an exact active-set finish every this many Dykstra sweeps (polytopes).
    pub polish_every: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: TOL_PROJ,
            max_cycles: MAX_CYCLES,
            polish_every: 4,
        }
    }
}

impl ProjectionOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Closed Euclidean ball.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    center: Vector,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidSet("ball needs a positive dimension".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSet(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            center: Vector::from_vec(center),
            radius,
        })
    }

    pub fn unit(d: usize) -> Self {
        Self {
            center: Vector::zeros(d),
            radius: 1.0,
        }
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    lo: Vector,
    hi: Vector,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidSet(
                "box bounds must share a positive dimension".into(),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::InvalidSet(
                "box needs lo < hi in every coordinate".into(),
            ));
        }
        Ok(Self {
            lo: Vector::from_vec(lo),
            hi: Vector::from_vec(hi),
        })
    }

    pub fn unit(d: usize) -> Self {
        Self {
            lo: Vector::zeros(d),
            hi: Vector::from_element(d, 1.0),
        }
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    /// The same box as a polytope with rows `+-e_k`.
    pub fn to_polytope(&self) -> Polytope {
        let d = self.lo.len();
        let mut rows = Vec::with_capacity(2 * d);
        let mut c = Vec::with_capacity(2 * d);
        for k in 0..d {
            let mut up = vec![0.0; d];
            up[k] = 1.0;
            rows.push(up);
            c.push(self.hi[k]);
            let mut down = vec![0.0; d];
            down[k] = -1.0;
            rows.push(down);
            c.push(-self.lo[k]);
        }
        Polytope::new(rows, c).expect("a box with lo < hi is a valid polytope")
    }
}

/// Intersection of convex sets. The maximum shrinkage is computed lazily by bisection.
#[derive(Clone, Debug)]
pub struct Intersection {
    parts: Vec<FeasibleSet>,
    chebyshev: OnceLock<(Vector, f64)>,
}

impl Intersection {
    pub fn parts(&self) -> &[FeasibleSet] {
        &self.parts
    }
}

#[derive(Clone, Debug)]
pub enum FeasibleSet {
    Polytope(Polytope),
    Ball(Ball),
    Box(BoxSet),
    Intersection(Intersection),
}

impl From<Polytope> for FeasibleSet {
    fn from(p: Polytope) -> Self {
        Self::Polytope(p)
    }
}

impl From<Ball> for FeasibleSet {
    fn from(b: Ball) -> Self {
        Self::Ball(b)
    }
}

impl From<BoxSet> for FeasibleSet {
    fn from(b: BoxSet) -> Self {
        Self::Box(b)
    }
}

/// How to obtain the sharpness constant `Gamma` with `Sharp(delta) <= Gamma * delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SharpnessMode {
    /// `sqrt(d) * max kappa(A_l)` over linearly independent `d`-row subsets.
    ExactEnumeration,
    /// `sqrt(d) * kappa(A)`. Cheap, but not an upper bound on the enumerated value in
    /// general: thin wedges exceed it.
    SpectralBound,
    /// Caller-provided constant.
    Supplied(f64),
}

/// A shrunk set `X_delta = {x in X : x + v in X for all |v| <= delta}`.
#[derive(Clone, Debug)]
pub struct ShrunkSet {
    base: FeasibleSet,
    delta: f64,
    set: FeasibleSet,
}

impl ShrunkSet {
    pub fn base(&self) -> &FeasibleSet {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The eroded set as a stand-alone feasible set.
    pub fn as_set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn project(&self, x: &Vector, opts: &ProjectionOptions) -> Result<Vector> {
        self.set.project(x, opts)
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.set.contains(x, tol)
    }
}

impl FeasibleSet {
    pub fn polytope(rows: Vec<Vec<f64>>, c: Vec<f64>) -> Result<Self> {
        Polytope::new(rows, c).map(Self::Polytope)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Ball::new(center, radius).map(Self::Ball)
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        BoxSet::new(lo, hi).map(Self::Box)
    }

    /// Intersection of at least one set; rejects mismatched dimensions and empty interiors.
    pub fn intersection(parts: Vec<FeasibleSet>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidSet("empty intersection list".into()));
        };
        let d = first.dim();
        if parts.iter().any(|p| p.dim() != d) {
            return Err(Error::InvalidSet(
                "intersection parts differ in dimension".into(),
            ));
        }
        let set = Self::Intersection(Intersection {
            parts,
            chebyshev: OnceLock::new(),
        });
        if set.max_shrinkage()? <= 0.0 {
            return Err(Error::InvalidSet("intersection has empty interior".into()));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Polytope(p) => p.dim(),
            Self::Ball(b) => b.center.len(),
            Self::Box(b) => b.lo.len(),
            Self::Intersection(i) => i.parts[0].dim(),
        }
    }

    /// Signed distance to the complement: positive inside, zero on the boundary.
    pub fn depth(&self, x: &Vector) -> f64 {
        match self {
            Self::Polytope(p) => p.depth(x.as_slice()),
            Self::Ball(b) => b.radius - (x - &b.center).norm(),
            Self::Box(b) => (0..x.len())
                .map(|k| (x[k] - b.lo[k]).min(b.hi[k] - x[k]))
                .fold(f64::INFINITY, f64::min),
            Self::Intersection(i) => i
                .parts
                .iter()
                .map(|p| p.depth(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.depth(x) >= -tol
    }

    /// Strict interior membership.
    pub fn contains_interior(&self, x: &Vector) -> bool {
        self.depth(x) > 0.0
    }

    /// Euclidean projection, exact up to `opts.tol`.
    pub fn project(&self, x: &Vector, opts: &ProjectionOptions) -> Result<Vector> {
        if x.len() != self.dim() {
            return Err(Error::InvalidSet(format!(
                "point has dimension {} but the set has {}",
                x.len(),
                self.dim()
            )));
        }
        match self {
            Self::Polytope(p) => p.project(x, opts),
            Self::Ball(b) => {
                let offset = x - &b.center;
                let r = offset.norm();
                if r <= b.radius {
                    Ok(x.clone())
                } else {
                    Ok(&b.center + offset * (b.radius / r))
                }
            }
            Self::Box(b) => Ok(Vector::from_iterator(
                x.len(),
                (0..x.len()).map(|k| x[k].clamp(b.lo[k], b.hi[k])),
            )),
            Self::Intersection(i) => dykstra(&i.parts, x, opts),
        }
    }

    /// Erodes the set by a ball of radius `delta`.
    pub fn shrink(&self, delta: f64) -> Result<ShrunkSet> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidSet(format!(
                "shrinkage must be nonnegative, got {delta}"
            )));
        }
        let max = self.max_shrinkage()?;
        if delta > max {
            return Err(Error::EmptyShrunkSet { delta, max });
        }
        Ok(ShrunkSet {
            base: self.clone(),
            delta,
            set: self.eroded(delta),
        })
    }

    fn eroded(&self, delta: f64) -> Self {
        if delta == 0.0 {
            return self.clone();
        }
        match self {
            Self::Polytope(p) => Self::Polytope(p.eroded(delta)),
            Self::Ball(b) => Self::Ball(Ball {
                center: b.center.clone(),
                radius: b.radius - delta,
            }),
            Self::Box(b) => Self::Box(BoxSet {
                lo: b.lo.add_scalar(delta),
                hi: b.hi.add_scalar(-delta),
            }),
            Self::Intersection(i) => {
                let parts = i.parts.iter().map(|p| p.eroded(delta)).collect();
                let chebyshev = OnceLock::new();
                if let Some((center, h)) = i.chebyshev.get() {
                    let _ = chebyshev.set((center.clone(), (h - delta).max(0.0)));
                }
                Self::Intersection(Intersection { parts, chebyshev })
            }
        }
    }

    /// `H = sup{delta : X_delta nonempty}`.
    pub fn max_shrinkage(&self) -> Result<f64> {
        Ok(match self {
            Self::Polytope(p) => p.max_shrinkage(),
            Self::Ball(b) => b.radius,
            Self::Box(b) => (&b.hi - &b.lo).min() / 2.0,
            Self::Intersection(i) => intersection_chebyshev(i)?.1,
        })
    }

    /// A point of maximal depth.
    pub fn deepest_point(&self) -> Result<Vector> {
        Ok(match self {
            Self::Polytope(p) => p.center(),
            Self::Ball(b) => b.center.clone(),
            Self::Box(b) => (&b.lo + &b.hi) / 2.0,
            Self::Intersection(i) => intersection_chebyshev(i)?.0,
        })
    }

    /// Largest `t >= 0` such that `x + t u` stays in the set, for `x` inside.
    pub fn ray_to_boundary(&self, x: &Vector, u: &Vector) -> f64 {
        match self {
            Self::Polytope(p) => p.ray_to_boundary(x.as_slice(), u.as_slice()),
            Self::Ball(b) => {
                // |x - c + t u|^2 = r^2
                let w = x - &b.center;
                let a = u.norm_squared();
                let half_b = w.dot(u);
                let cc = w.norm_squared() - b.radius * b.radius;
                let disc = (half_b * half_b - a * cc).max(0.0);
                ((-half_b + disc.sqrt()) / a).max(0.0)
            }
            Self::Box(b) => (0..x.len())
                .filter_map(|k| {
                    if u[k] > 0.0 {
                        Some((b.hi[k] - x[k]) / u[k])
                    } else if u[k] < 0.0 {
                        Some((b.lo[k] - x[k]) / u[k])
                    } else {
                        None
                    }
                })
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
            Self::Intersection(i) => i
                .parts
                .iter()
                .map(|p| p.ray_to_boundary(x, u))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// The set as one polytope, when every part is polyhedral.
    pub fn as_polytope(&self) -> Option<Polytope> {
        match self {
            Self::Polytope(p) => Some(p.clone()),
            Self::Box(b) => Some(b.to_polytope()),
            Self::Ball(_) => None,
            Self::Intersection(i) => {
                let parts: Option<Vec<Polytope>> = i.parts.iter().map(Self::as_polytope).collect();
                let parts = parts?;
                Polytope::stack(&parts.iter().collect::<Vec<_>>()).ok()
            }
        }
    }

    /// A constant `Gamma >= 1` with `Sharp(delta) <= Gamma * delta`.
    pub fn sharpness_bound(&self, mode: SharpnessMode) -> Result<f64> {
        if let SharpnessMode::Supplied(gamma) = mode {
            if !(gamma >= 1.0 && gamma.is_finite()) {
                return Err(Error::InvalidConstants(format!(
                    "supplied Gamma must be >= 1, got {gamma}"
                )));
            }
            return Ok(gamma);
        }
        match self {
            Self::Ball(_) => return Ok(1.0),
            Self::Box(b) => return Ok((b.lo.len() as f64).sqrt()),
            _ => {}
        }
        let poly = self.as_polytope().ok_or_else(|| {
            Error::InvalidSet("no closed-form sharpness for this set; supply Gamma".into())
        })?;
        let d = poly.dim();
        let sqrt_d = (d as f64).sqrt();
        match mode {
            SharpnessMode::SpectralBound => Ok(sqrt_d * condition_number(&poly.matrix()).max(1.0)),
            SharpnessMode::ExactEnumeration => {
                let subsets = binomial(poly.n_rows(), d);
                if subsets > ENUMERATION_CAP {
                    return Err(Error::EnumerationTooLarge {
                        subsets,
                        cap: ENUMERATION_CAP,
                    });
                }
                let rows = poly.rows();
                let mut worst: f64 = 1.0;
                for subset in Combinations::new(poly.n_rows(), d) {
                    let a = Matrix::from_fn(d, d, |i, k| rows[subset[i]][k]);
                    let s = crate::linalg::singular_values(&a);
                    let (hi, lo) = (s[0], s[d - 1]);
                    if lo > 1e-10 * hi {
                        worst = worst.max(hi / lo);
                    }
                }
                Ok(sqrt_d * worst)
            }
            SharpnessMode::Supplied(_) => unreachable!(),
        }
    }

    /// Exact enumeration when it fits under the cap, otherwise the spectral bound.
    /// Returns the constant and the mode that produced it.
    pub fn sharpness_bound_auto(&self) -> Result<(f64, SharpnessMode)> {
        match self.sharpness_bound(SharpnessMode::ExactEnumeration) {
            Ok(g) => Ok((g, SharpnessMode::ExactEnumeration)),
            Err(Error::EnumerationTooLarge { .. }) => Ok((
                self.sharpness_bound(SharpnessMode::SpectralBound)?,
                SharpnessMode::SpectralBound,
            )),
            Err(e) => Err(e),
        }
    }

    /// Largest observed `|Pi_{X_delta}(x) - x|` over sampled boundary points (and all vertices
    /// for small polytopes, where the supremum is attained).
    pub fn sharpness_empirical(&self, delta: f64, samples: usize) -> Result<f64> {
        let shrunk = self.shrink(delta)?;
        if delta == 0.0 {
            return Ok(0.0);
        }
        let opts = ProjectionOptions::default();
        let mut worst: f64 = 0.0;
        let mut probe = |x: &Vector| -> Result<()> {
            let y = shrunk.project(x, &opts)?;
            worst = worst.max((y - x).norm());
            Ok(())
        };
        if let Some(poly) = self.as_polytope() {
            if let Some(vertices) = poly.vertices(ENUMERATION_CAP) {
                for v in vertices {
                    probe(&Vector::from_vec(v))?;
                }
            }
        }
        let center = self.deepest_point()?;
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_0001);
        let d = self.dim();
        for _ in 0..samples {
            let u = Vector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
            let u = u.normalize();
            let t = self.ray_to_boundary(&center, &u);
            probe(&(&center + u * t))?;
        }
        Ok(worst)
    }
}

/// Dykstra's alternating projections onto an intersection.
fn dykstra(parts: &[FeasibleSet], x: &Vector, opts: &ProjectionOptions) -> Result<Vector> {
    let inside = parts
        .iter()
        .map(|p| p.depth(x))
        .fold(f64::INFINITY, f64::min);
    if inside >= 0.0 {
        return Ok(x.clone());
    }
    let mut y = x.clone();
    let mut corrections = vec![Vector::zeros(x.len()); parts.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_cycles {
        // `y` can repeat across a cycle while the corrections still drift; track those.
        let mut moved = 0.0_f64;
        for (part, q) in parts.iter().zip(corrections.iter_mut()) {
            let z = &y + &*q;
            y = part.project(&z, opts)?;
            let next = &z - &y;
            moved = moved.max((&next - &*q).norm());
            *q = next;
        }
        residual = moved;
        let violation = -parts
            .iter()
            .map(|p| p.depth(&y))
            .fold(f64::INFINITY, f64::min);
        if residual <= opts.tol && violation <= opts.tol {
            return Ok(y);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_cycles,
        residual,
    })
}

/// Deepest point of an intersection by bisection on the shrinkage, certifying each level by
/// projecting the last certified point onto the eroded parts.
fn intersection_chebyshev(i: &Intersection) -> Result<(Vector, f64)> {
    if let Some(v) = i.chebyshev.get() {
        return Ok(v.clone());
    }
    let mut hi = f64::INFINITY;
    for p in &i.parts {
        hi = hi.min(p.max_shrinkage()?);
    }
    let mut best = i.parts[0].deepest_point()?;
    let feas_opts = ProjectionOptions {
        max_cycles: 5_000,
        tol: 1e-12,
        ..ProjectionOptions::default()
    };
    let certify = |delta: f64, start: &Vector| -> Option<Vector> {
        let eroded: Vec<FeasibleSet> = i.parts.iter().map(|p| p.eroded(delta)).collect();
        let y = dykstra(&eroded, start, &feas_opts).ok()?;
        let depth = i
            .parts
            .iter()
            .map(|p| p.depth(&y))
            .fold(f64::INFINITY, f64::min);
        (depth >= delta - 1e-10).then_some(y)
    };
    let mut lo = 0.0;
    match certify(0.0, &best) {
        Some(y) => best = y,
        None => {
            return Err(Error::InvalidSet("intersection is empty".into()));
        }
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        match certify(mid, &best) {
            Some(y) => {
                lo = mid;
                best = y;
            }
            None => hi = mid,
        }
    }
    let depth = i
        .parts
        .iter()
        .map(|p| p.depth(&best))
        .fold(f64::INFINITY, f64::min);
    let result = (best, depth.max(0.0).min(lo.max(depth)));
    let _ = i.chebyshev.set(result.clone());
    Ok(result)
}
