//! Continuous-field models: the interval field for the odd sphere, the
//! double-cone field for the even sphere, and the numeric invariants read off
//! them (trace winding, homotopy floors, the spectrum of `c`, retractions).
//!
//! Fibers are `n x n` block matrices over `M_q`, indexed `(block, k)` with the
//! block index slow. Fields are evaluated lazily so that long grids never hold
//! every fiber in memory at once.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra_core::{AlgebraElement, Expr, Family, PhaseConvention, Presentation};
use crate::linalg::{cis, CMat, LinalgError, MatrixJson, Real};
use crate::phase_ring::ExactRational;
use crate::report::{Check, Report};
use crate::tolerances;
use crate::torus_rep::{rieffel_projection, Rep, RepError, RieffelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("expected the {expected} presentation, got {got}")]
    WrongPresentation { expected: &'static str, got: String },
    #[error("operation needs {0} base")]
    WrongBase(&'static str),
    #[error("singular fiber at t={t}")]
    Singular { t: f64 },
    #[error("log step too coarse near t={t} (||g^-1 g' - 1|| = {norm})")]
    StepTooCoarse { t: f64, norm: f64 },
    #[error("{which} endpoint is not scalar (deviation {deviation})")]
    NonScalarEndpoint { which: &'static str, deviation: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("fiber refinement needs a lazily evaluated field")]
    NotRefinable,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Rep(#[from] RepError),
}

fn as_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// One fiber of a field.
///
/// `Modal` stores `(1_c (x) V) diag(modes) (1_c (x) V*)` for a unitary frame
/// `V` shared between fibers; `Kron` stores `small (x) 1_q`.
#[derive(Debug, Clone)]
pub enum Fiber<T> {
    Dense(CMat<T>),
    Modal { frame: Arc<CMat<T>>, modes: Vec<CMat<T>> },
    Kron { small: CMat<T>, q: usize },
}

impl<T: Real> Fiber<T> {
    pub fn scalar(c: Complex<T>, block: usize, q: usize) -> Self {
        Fiber::Kron { small: CMat::scalar(block, c), q }
    }

    pub fn dim(&self) -> usize {
        match self {
            Fiber::Dense(m) => m.rows(),
            Fiber::Modal { frame, modes } => frame.rows() * modes.first().map_or(0, |m| m.rows()),
            Fiber::Kron { small, q } => small.rows() * q,
        }
    }

    pub fn to_dense(&self) -> CMat<T> {
        match self {
            Fiber::Dense(m) => m.clone(),
            Fiber::Kron { small, q } => small.kron(&CMat::identity(*q)),
            Fiber::Modal { frame, modes } => {
                let q = frame.rows();
                let c = modes.first().map_or(0, |m| m.rows());
                let mut out = CMat::zeros(c * q, c * q);
                let frame_adj = frame.adjoint();
                for i in 0..c {
                    for j in 0..c {
                        if modes.iter().all(|m| m[(i, j)] == Complex::new(T::zero(), T::zero())) {
                            continue;
                        }
                        let scaled = CMat::from_fn(q, q, |r, col| frame[(r, col)] * modes[col][(i, j)]);
                        out.set_block(i * q, j * q, &(&scaled * &frame_adj));
                    }
                }
                out
            }
        }
    }

    /// Modes in `frame`, when the fiber is diagonal there.
    fn modes_in(&self, frame: &Arc<CMat<T>>) -> Option<Vec<CMat<T>>> {
        match self {
            Fiber::Modal { frame: f, modes } if Arc::ptr_eq(f, frame) => Some(modes.clone()),
            Fiber::Kron { small, q } if *q == frame.rows() => Some(vec![small.clone(); *q]),
            _ => None,
        }
    }

    fn combine(&self, rhs: &Self, op: impl Fn(&CMat<T>, &CMat<T>) -> Result<CMat<T>, LinalgError>) -> Result<Self, FieldError> {
        if self.dim() != rhs.dim() {
            return Err(FieldError::Shape(format!("fiber dims {} and {}", self.dim(), rhs.dim())));
        }
        if let (Fiber::Kron { small: a, q }, Fiber::Kron { small: b, q: q2 }) = (self, rhs) {
            if q == q2 {
                return Ok(Fiber::Kron { small: op(a, b)?, q: *q });
            }
        }
        let frame = match (self, rhs) {
            (Fiber::Modal { frame, .. }, _) | (_, Fiber::Modal { frame, .. }) => Some(frame.clone()),
            _ => None,
        };
        if let Some(frame) = frame {
            if let (Some(a), Some(b)) = (self.modes_in(&frame), rhs.modes_in(&frame)) {
                let modes = a.iter().zip(&b).map(|(x, y)| op(x, y)).collect::<Result<Vec<_>, _>>()?;
                return Ok(Fiber::Modal { frame, modes });
            }
        }
        Ok(Fiber::Dense(op(&self.to_dense(), &rhs.to_dense())?))
    }

    fn map_parts(&self, op: impl Fn(&CMat<T>) -> Result<CMat<T>, LinalgError>) -> Result<Self, FieldError> {
        Ok(match self {
            Fiber::Dense(m) => Fiber::Dense(op(m)?),
            Fiber::Kron { small, q } => Fiber::Kron { small: op(small)?, q: *q },
            Fiber::Modal { frame, modes } => {
                Fiber::Modal { frame: frame.clone(), modes: modes.iter().map(op).collect::<Result<_, _>>()? }
            }
        })
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self, FieldError> {
        self.combine(rhs, |a, b| a.try_mul(b))
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, FieldError> {
        self.combine(rhs, |a, b| a.try_add(b))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, FieldError> {
        self.combine(rhs, |a, b| a.try_sub(b))
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        self.map_parts(|m| Ok(m.scale(c))).expect("scaling cannot fail")
    }

    pub fn adjoint(&self) -> Self {
        self.map_parts(|m| Ok(m.adjoint())).expect("adjoint cannot fail")
    }

    pub fn inverse(&self) -> Result<Self, FieldError> {
        self.map_parts(|m| m.inverse())
    }

    pub fn powi(&self, k: i32) -> Result<Self, FieldError> {
        let base = if k < 0 { self.inverse()? } else { self.clone() };
        base.map_parts(|m| m.powi(k.unsigned_abs()))
    }

    /// Block direct sum: `a` blocks followed by `b` blocks over the same `M_q`.
    pub fn direct_sum(&self, rhs: &Self, q: usize) -> Result<Self, FieldError> {
        if let (Fiber::Kron { small: a, q: qa }, Fiber::Kron { small: b, q: qb }) = (self, rhs) {
            if qa == qb {
                return Ok(Fiber::Kron { small: a.direct_sum(b), q: *qa });
            }
        }
        let frame = match (self, rhs) {
            (Fiber::Modal { frame, .. }, _) | (_, Fiber::Modal { frame, .. }) => Some(frame.clone()),
            _ => None,
        };
        if let Some(frame) = frame {
            if let (Some(a), Some(b)) = (self.modes_in(&frame), rhs.modes_in(&frame)) {
                let modes = a.iter().zip(&b).map(|(x, y)| x.direct_sum(y)).collect();
                return Ok(Fiber::Modal { frame, modes });
            }
        }
        let (a, b) = (self.to_dense(), rhs.to_dense());
        if a.rows() % q != 0 || b.rows() % q != 0 {
            return Err(FieldError::Shape(format!("direct sum of {}x{} and {}x{} over M_{q}", a.rows(), a.rows(), b.rows(), b.rows())));
        }
        Ok(Fiber::Dense(a.direct_sum(&b)))
    }

    pub fn trace(&self) -> Complex<T> {
        match self {
            Fiber::Dense(m) => m.trace(),
            Fiber::Kron { small, q } => small.trace() * T::of_usize(*q),
            Fiber::Modal { modes, .. } => modes.iter().fold(Complex::new(T::zero(), T::zero()), |acc, m| acc + m.trace()),
        }
    }

    pub fn frob_norm(&self) -> T {
        match self {
            Fiber::Dense(m) => m.frob_norm(),
            Fiber::Kron { small, q } => small.frob_norm() * T::of_usize(*q).sqrt(),
            Fiber::Modal { modes, .. } => modes.iter().fold(T::zero(), |acc, m| acc + m.frob_norm().powi(2)).sqrt(),
        }
    }

    pub fn min_singular_value(&self) -> Result<T, FieldError> {
        Ok(match self {
            Fiber::Dense(m) => m.min_singular_value()?,
            Fiber::Kron { small, .. } => small.min_singular_value()?,
            Fiber::Modal { modes, .. } => {
                let mut best = T::infinity();
                for m in modes {
                    best = best.min(m.min_singular_value()?);
                }
                best
            }
        })
    }

    /// Mean diagonal value `c` and the normalized distance `||M - c||_F / sqrt(dim)`.
    pub fn scalar_deviation(&self) -> (Complex<T>, T) {
        let dim = T::of_usize(self.dim().max(1));
        let c = self.trace() / dim;
        let dev = match self {
            Fiber::Kron { small, .. } => small.add_scalar(-c).frob_norm() / T::of_usize(small.rows().max(1)).sqrt(),
            Fiber::Modal { modes, .. } => {
                modes.iter().fold(T::zero(), |acc, m| acc + m.add_scalar(-c).frob_norm().powi(2)).sqrt() / dim.sqrt()
            }
            Fiber::Dense(m) => m.add_scalar(-c).frob_norm() / dim.sqrt(),
        };
        (c, dev)
    }

    /// `tr Log(M)` for `M` near the identity.
    ///
    /// Fails with `StepTooCoarse` (with `t = NaN`) unless every part satisfies
    /// `||M - 1||_F < 1`.
    pub fn trace_log_near_identity(&self) -> Result<Complex<T>, FieldError> {
        match self {
            Fiber::Dense(m) => trace_log(m),
            Fiber::Kron { small, q } => Ok(trace_log(small)? * T::of_usize(*q)),
            Fiber::Modal { modes, .. } => {
                modes.iter().try_fold(Complex::new(T::zero(), T::zero()), |acc, m| Ok(acc + trace_log(m)?))
            }
        }
    }
}

fn trace_log<T: Real>(m: &CMat<T>) -> Result<Complex<T>, FieldError> {
    let one = Complex::new(T::one(), T::zero());
    let d = m.add_scalar(-one);
    let r = d.frob_norm();
    if !(r < T::one()) {
        return Err(FieldError::StepTooCoarse { t: f64::NAN, norm: as_f64(r) });
    }
    if m.rows() == 1 {
        return Ok(m[(0, 0)].ln());
    }
    let mut sum = Complex::new(T::zero(), T::zero());
    let mut power = d.clone();
    let floor = T::epsilon() * T::lit(0.1);
    for k in 1..=2000usize {
        let term = power.trace() / T::of_usize(k);
        sum = if k % 2 == 1 { sum + term } else { sum - term };
        if r.powi(k as i32 + 1) * T::of_usize(m.rows()) <= floor * T::of_usize(k + 1) {
            break;
        }
        power = &power * &d;
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    North,
    South,
}

impl Hemisphere {
    pub fn sign<T: Real>(self) -> T {
        match self {
            Hemisphere::North => T::one(),
            Hemisphere::South => -T::one(),
        }
    }
}

/// A point of the base: `t` is the interval parameter and `s` the
/// cone height, with `s = 0` on the equator and `s = 1` at the pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasePoint<T> {
    Interval { t: T },
    Cone { hemisphere: Hemisphere, s: T, t: T },
}

impl<T: Real> BasePoint<T> {
    pub fn t(&self) -> T {
        match self {
            BasePoint::Interval { t } | BasePoint::Cone { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Base<T> {
    Interval { grid: Vec<T> },
    DoubleCone { cone: Vec<T>, equator: Vec<T> },
}

impl<T: Real> Base<T> {
    /// `steps + 1` equally spaced points of `[0, 1]`.
    pub fn interval(steps: usize) -> Self {
        Base::Interval { grid: uniform_grid(steps) }
    }

    pub fn double_cone(cone_steps: usize, equator_steps: usize) -> Self {
        Base::DoubleCone { cone: uniform_grid(cone_steps), equator: uniform_grid(equator_steps) }
    }

    pub fn len(&self) -> usize {
        match self {
            Base::Interval { grid } => grid.len(),
            Base::DoubleCone { cone, equator } => 2 * cone.len() * equator.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in storage order: the interval grid, or north then south with
    /// the cone index slow.
    pub fn point(&self, index: usize) -> BasePoint<T> {
        match self {
            Base::Interval { grid } => BasePoint::Interval { t: grid[index] },
            Base::DoubleCone { cone, equator } => {
                let per = cone.len() * equator.len();
                let hemisphere = if index < per { Hemisphere::North } else { Hemisphere::South };
                let rest = index % per;
                BasePoint::Cone { hemisphere, s: cone[rest / equator.len()], t: equator[rest % equator.len()] }
            }
        }
    }

    /// Storage index of a cone point given by grid indices.
    pub fn cone_index(&self, hemisphere: Hemisphere, i_s: usize, i_t: usize) -> Option<usize> {
        match self {
            Base::DoubleCone { cone, equator } if i_s < cone.len() && i_t < equator.len() => {
                let offset = if hemisphere == Hemisphere::North { 0 } else { cone.len() * equator.len() };
                Some(offset + i_s * equator.len() + i_t)
            }
            _ => None,
        }
    }
}

pub fn uniform_grid<T: Real>(steps: usize) -> Vec<T> {
    let steps = steps.max(1);
    (0..=steps).map(|k| T::of_usize(k) / T::of_usize(steps)).collect()
}

type Source<T> = Arc<dyn Fn(&BasePoint<T>) -> Result<Fiber<T>, FieldError> + Send + Sync>;

#[derive(Clone)]
enum Samples<T> {
    Lazy(Source<T>),
    Stored(Arc<Vec<Fiber<T>>>),
}

/// A grid-sampled field of `block x block` matrices over `M_q`.
#[derive(Clone)]
pub struct FieldElement<T> {
    base: Base<T>,
    block: usize,
    q: usize,
    samples: Samples<T>,
}

impl<T: fmt::Debug> fmt::Debug for FieldElement<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.samples {
            Samples::Lazy(_) => "lazy",
            Samples::Stored(_) => "stored",
        };
        f.debug_struct("FieldElement")
            .field("base", &self.base)
            .field("block", &self.block)
            .field("q", &self.q)
            .field("samples", &kind)
            .finish()
    }
}

impl<T: Real> FieldElement<T> {
    pub fn lazy(
        base: Base<T>,
        block: usize,
        q: usize,
        source: impl Fn(&BasePoint<T>) -> Result<Fiber<T>, FieldError> + Send + Sync + 'static,
    ) -> Self {
        Self { base, block, q, samples: Samples::Lazy(Arc::new(source)) }
    }

    pub fn from_fibers(base: Base<T>, block: usize, q: usize, fibers: Vec<Fiber<T>>) -> Result<Self, FieldError> {
        if fibers.len() != base.len() {
            return Err(FieldError::Shape(format!("{} fibers for {} base points", fibers.len(), base.len())));
        }
        if let Some(bad) = fibers.iter().find(|f| f.dim() != block * q) {
            return Err(FieldError::Shape(format!("fiber of dim {} in a {}x{} block field", bad.dim(), block, q)));
        }
        Ok(Self { base, block, q, samples: Samples::Stored(Arc::new(fibers)) })
    }

    /// Scalar function times the identity, as a `1 x 1` block field over `M_q`.
    pub fn scalar_field(base: Base<T>, q: usize, f: impl Fn(&BasePoint<T>) -> Complex<T> + Send + Sync + 'static) -> Self {
        Self::lazy(base, 1, q, move |p| Ok(Fiber::scalar(f(p), 1, q)))
    }

    pub fn base(&self) -> &Base<T> {
        &self.base
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn fiber_dim(&self) -> usize {
        self.block * self.q
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn is_lazy(&self) -> bool {
        matches!(self.samples, Samples::Lazy(_))
    }

    pub fn point(&self, index: usize) -> BasePoint<T> {
        self.base.point(index)
    }

    pub fn fiber(&self, index: usize) -> Result<Fiber<T>, FieldError> {
        if index >= self.len() {
            return Err(FieldError::Shape(format!("fiber index {index} of {}", self.len())));
        }
        match &self.samples {
            Samples::Lazy(f) => f(&self.base.point(index)),
            Samples::Stored(v) => Ok(v[index].clone()),
        }
    }

    /// Evaluates off the grid; only lazy fields support this.
    pub fn eval_at(&self, point: &BasePoint<T>) -> Result<Fiber<T>, FieldError> {
        match &self.samples {
            Samples::Lazy(f) => f(point),
            Samples::Stored(_) => Err(FieldError::NotRefinable),
        }
    }

    pub fn materialize(&self) -> Result<Self, FieldError> {
        let fibers = (0..self.len()).map(|i| self.fiber(i)).collect::<Result<Vec<_>, _>>()?;
        Self::from_fibers(self.base.clone(), self.block, self.q, fibers)
    }

    /// Pointwise map; stays lazy when `self` is.
    pub fn map(&self, f: impl Fn(&BasePoint<T>, Fiber<T>) -> Result<Fiber<T>, FieldError> + Send + Sync + 'static) -> Result<Self, FieldError> {
        match &self.samples {
            Samples::Lazy(src) => {
                let src = src.clone();
                Ok(Self::lazy(self.base.clone(), self.block, self.q, move |p| f(p, src(p)?)))
            }
            Samples::Stored(v) => {
                let fibers = v.iter().enumerate().map(|(i, x)| f(&self.base.point(i), x.clone())).collect::<Result<Vec<_>, _>>()?;
                Self::from_fibers(self.base.clone(), self.block, self.q, fibers)
            }
        }
    }

    /// Pointwise product of two fields on the same base.
    pub fn mul(&self, rhs: &Self) -> Result<Self, FieldError> {
        if self.base != rhs.base || self.block != rhs.block || self.q != rhs.q {
            return Err(FieldError::Shape("fields live on different bases".into()));
        }
        match (&self.samples, &rhs.samples) {
            (Samples::Lazy(a), Samples::Lazy(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Ok(Self::lazy(self.base.clone(), self.block, self.q, move |p| a(p)?.mul(&b(p)?)))
            }
            _ => {
                let fibers = (0..self.len()).map(|i| self.fiber(i)?.mul(&rhs.fiber(i)?)).collect::<Result<Vec<_>, _>>()?;
                Self::from_fibers(self.base.clone(), self.block, self.q, fibers)
            }
        }
    }

    /// Keeps at most `max_points` points per grid axis (endpoints included).
    pub fn coarsen(&self, max_points: usize) -> Result<Self, FieldError> {
        let pick = |grid: &[T]| -> Vec<usize> {
            let n = grid.len();
            if n <= max_points.max(2) {
                return (0..n).collect();
            }
            let m = max_points.max(2);
            let mut idx: Vec<usize> = (0..m).map(|k| k * (n - 1) / (m - 1)).collect();
            idx.dedup();
            idx
        };
        match &self.base {
            Base::Interval { grid } => {
                let idx = pick(grid);
                let base = Base::Interval { grid: idx.iter().map(|i| grid[*i]).collect() };
                let fibers = idx.iter().map(|i| self.fiber(*i)).collect::<Result<Vec<_>, _>>()?;
                Self::from_fibers(base, self.block, self.q, fibers)
            }
            Base::DoubleCone { cone, equator } => {
                let (is, it) = (pick(cone), pick(equator));
                let base = Base::DoubleCone {
                    cone: is.iter().map(|i| cone[*i]).collect(),
                    equator: it.iter().map(|i| equator[*i]).collect(),
                };
                let mut fibers = Vec::with_capacity(base.len());
                for h in [Hemisphere::North, Hemisphere::South] {
                    for a in &is {
                        for b in &it {
                            fibers.push(self.fiber(self.base.cone_index(h, *a, *b).expect("in range"))?);
                        }
                    }
                }
                Self::from_fibers(base, self.block, self.q, fibers)
            }
        }
    }

    pub fn to_json(&self) -> Result<FieldJson, FieldError> {
        let grid = match &self.base {
            Base::Interval { grid } => GridJson::Interval(grid.iter().map(|x| as_f64(*x)).collect()),
            Base::DoubleCone { cone, equator } => GridJson::DoubleCone {
                cone: cone.iter().map(|x| as_f64(*x)).collect(),
                equator: equator.iter().map(|x| as_f64(*x)).collect(),
            },
        };
        let base = match self.base {
            Base::Interval { .. } => "interval",
            Base::DoubleCone { .. } => "double_cone",
        };
        let fibers = (0..self.len()).map(|i| Ok(self.fiber(i)?.to_dense().to_json())).collect::<Result<Vec<_>, FieldError>>()?;
        Ok(FieldJson { base: base.into(), grid, block: self.block, q: self.q, fibers })
    }

    pub fn from_json(j: &FieldJson) -> Result<Self, FieldError> {
        let base = match (j.base.as_str(), &j.grid) {
            ("interval", GridJson::Interval(g)) => Base::Interval { grid: g.iter().map(|x| T::lit(*x)).collect() },
            ("double_cone", GridJson::DoubleCone { cone, equator }) => Base::DoubleCone {
                cone: cone.iter().map(|x| T::lit(*x)).collect(),
                equator: equator.iter().map(|x| T::lit(*x)).collect(),
            },
            (b, _) => return Err(FieldError::Shape(format!("base '{b}' does not match its grid"))),
        };
        let fibers = j.fibers.iter().map(|m| Ok(Fiber::Dense(CMat::from_json(m)?))).collect::<Result<Vec<_>, FieldError>>()?;
        Self::from_fibers(base, j.block, j.q, fibers)
    }
}

/// `{base, grid, block, q, fibers}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    pub base: String,
    pub grid: GridJson,
    pub block: usize,
    pub q: usize,
    pub fibers: Vec<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridJson {
    Interval(Vec<f64>),
    DoubleCone { cone: Vec<f64>, equator: Vec<f64> },
}

/// A monomial of an odd or even sphere, reduced to numeric data.
#[derive(Debug, Clone)]
struct SphereTerm<T> {
    coeff: Complex<T>,
    half_t: T,
    half_1mt: T,
    z_degree: T,
    x_power: i32,
    e1: i64,
    e2: i64,
}

fn sphere_terms<Q: ExactRational, T: Real>(a: &AlgebraElement<Q>, theta: T) -> Vec<SphereTerm<T>> {
    a.terms()
        .map(|(mono, c)| {
            let e = mono.exps();
            let (d1, d2) = (e[0] + e[1], e[2] + e[3]);
            SphereTerm {
                coeff: c.eval(theta),
                half_t: T::lit(d1 as f64 / 2.0),
                half_1mt: T::lit(d2 as f64 / 2.0),
                z_degree: T::lit((d1 + d2) as f64 / 2.0),
                x_power: mono.central() as i32,
                e1: (e[0] - e[1]) as i64,
                e2: (e[2] - e[3]) as i64,
            }
        })
        .collect()
}

fn check_sphere(a: &Presentation, family: Family, expected: &'static str) -> Result<(), FieldError> {
    if a.family != family || a.m != 2 || a.convention != PhaseConvention::Standard {
        return Err(FieldError::WrongPresentation { expected, got: a.to_string() });
    }
    Ok(())
}

/// Continuous field of an `odd_sphere(2)` element: `z1 -> sqrt(t) U1`,
/// `z2 -> sqrt(1 - t) U2` on `steps + 1` points of `[0, 1]`.
pub fn eval_s3<Q: ExactRational, T: Real>(a: &AlgebraElement<Q>, rep: &Rep<T>, steps: usize) -> Result<FieldElement<T>, FieldError> {
    check_sphere(a.presentation(), Family::OddSphere, "odd_sphere(2)")?;
    let terms = sphere_terms(a, rep.theta());
    let rep = Arc::new(rep.clone());
    let q = rep.q();
    Ok(FieldElement::lazy(Base::interval(steps), 1, q, move |p| {
        Ok(Fiber::Dense(sphere_fiber(&rep, &terms, p.t(), T::one(), T::one())))
    }))
}

/// Double-cone field of an `even_sphere(2)` element: on each hemisphere the
/// `z_i` are odd-sphere fibers scaled by `sqrt(1 - s^2)` and `x = +-s`.
pub fn eval_s4<Q: ExactRational, T: Real>(
    a: &AlgebraElement<Q>,
    rep: &Rep<T>,
    cone_steps: usize,
    equator_steps: usize,
) -> Result<FieldElement<T>, FieldError> {
    check_sphere(a.presentation(), Family::EvenSphere, "even_sphere(2)")?;
    let terms = sphere_terms(a, rep.theta());
    let rep = Arc::new(rep.clone());
    let q = rep.q();
    Ok(FieldElement::lazy(Base::double_cone(cone_steps, equator_steps), 1, q, move |p| match *p {
        BasePoint::Cone { hemisphere, s, t } => {
            let radial = (T::one() - s * s).max(T::zero());
            Ok(Fiber::Dense(sphere_fiber(&rep, &terms, t, radial, hemisphere.sign::<T>() * s)))
        }
        BasePoint::Interval { .. } => Err(FieldError::WrongBase("a double-cone")),
    }))
}

fn sphere_fiber<T: Real>(rep: &Rep<T>, terms: &[SphereTerm<T>], t: T, radial: T, height: T) -> CMat<T> {
    let q = rep.q();
    let mut out = CMat::zeros(q, q);
    let one_minus_t = (T::one() - t).max(T::zero());
    for term in terms {
        let weight = t.powf(term.half_t) * one_minus_t.powf(term.half_1mt) * radial.powf(term.z_degree) * height.powi(term.x_power);
        if weight == T::zero() {
            continue;
        }
        let word = rep.word(term.e1, term.e2);
        let c = term.coeff * weight;
        let shift = term.e2.rem_euclid(q as i64) as usize;
        for r in 0..q {
            let col = (r + shift) % q;
            out[(r, col)] = out[(r, col)] + c * word[(r, col)];
        }
    }
    out
}

/// Normalized Hilbert-Schmidt distance of each `q x q` block from
/// `span{U2^k}` (constant cyclic diagonals); the maximum over blocks.
pub fn span_u2_residual<T: Real>(m: &CMat<T>, q: usize) -> T {
    block_residual(m, q, |b| {
        let mut acc = T::zero();
        for shift in 0..q {
            let vals: Vec<Complex<T>> = (0..q).map(|r| b[(r, (r + shift) % q)]).collect();
            let mean = vals.iter().fold(Complex::new(T::zero(), T::zero()), |a, v| a + v) / T::of_usize(q);
            acc = acc + vals.iter().fold(T::zero(), |a, v| a + (v - mean).norm_sqr());
        }
        acc
    })
}

/// Normalized Hilbert-Schmidt norm of the off-diagonal part of each block,
/// i.e. the distance from `span{U1^k}`; the maximum over blocks.
pub fn span_u1_residual<T: Real>(m: &CMat<T>, q: usize) -> T {
    block_residual(m, q, |b| {
        let mut acc = T::zero();
        for r in 0..q {
            for c in 0..q {
                if r != c {
                    acc = acc + b[(r, c)].norm_sqr();
                }
            }
        }
        acc
    })
}

fn block_residual<T: Real>(m: &CMat<T>, q: usize, sq: impl Fn(&CMat<T>) -> T) -> T {
    let n = m.rows() / q.max(1);
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            let b = m.block(i * q, j * q, q, q);
            worst = worst.max((sq(&b) / T::of_usize(q)).sqrt());
        }
    }
    worst
}

/// Endpoint constraints of an interval field: the `t = 0` fiber in
/// `span{U2^k}`, the `t = 1` fiber in `span{U1^k}`.
pub fn boundary_check<T: Real>(f: &FieldElement<T>) -> Result<Report, FieldError> {
    if !matches!(f.base(), Base::Interval { .. }) {
        return Err(FieldError::WrongBase("an interval"));
    }
    let first = f.fiber(0)?.to_dense();
    let last = f.fiber(f.len() - 1)?.to_dense();
    let tol = tolerances::BOUNDARY;
    let mut report = Report::new();
    report.push(Check::within("t0_in_span_u2", as_f64(span_u2_residual(&first, f.q())), tol));
    report.push(Check::within("t1_in_span_u1", as_f64(span_u1_residual(&last, f.q())), tol));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindingResult<T> {
    pub value: T,
    /// Number of grid steps.
    pub grid: usize,
    /// `|value - value on every other grid point|`, when that coarser sum exists.
    pub residual: Option<T>,
    /// Extra bisections needed to keep every log step in range.
    pub refinements: usize,
    /// `min_k 1 / ||g_k^-1||_F`, a lower bound on the smallest singular value.
    pub min_singular_bound: T,
}

/// `(1/2 pi) sum_k Im tau(Log(g_k^-1 g_{k+1}))` with `tau = tr / q`.
pub fn winding<T: Real>(g: &FieldElement<T>) -> Result<WindingResult<T>, FieldError> {
    let Base::Interval { grid } = g.base() else {
        return Err(FieldError::WrongBase("an interval"));
    };
    if grid.len() < 2 {
        return Err(FieldError::Shape("winding needs at least two grid points".into()));
    }
    let first = g.fiber(0)?;
    let last = g.fiber(grid.len() - 1)?;
    for (which, fib) in [("t=0", &first), ("t=1", &last)] {
        let (c, dev) = fib.scalar_deviation();
        if dev > T::lit(tolerances::BOUNDARY) * (T::one() + c.norm()) {
            return Err(FieldError::NonScalarEndpoint { which, deviation: as_f64(dev) });
        }
    }

    let mut fine = Complex::new(T::zero(), T::zero());
    let mut coarse: Option<Complex<T>> = Some(Complex::new(T::zero(), T::zero()));
    let mut refinements = 0;
    let mut bound = T::infinity();
    let mut prev = first;
    let mut prev_inv = invert(&prev, grid[0])?;
    let mut even_inv = prev_inv.clone();
    let mut even_t = grid[0];
    let mut even_fiber = prev.clone();
    bound = bound.min(T::one() / prev_inv.frob_norm());
    for k in 1..grid.len() {
        let cur = if k == grid.len() - 1 { last.clone() } else { g.fiber(k)? };
        let cur_inv = invert(&cur, grid[k])?;
        let (inc, extra) = log_increment(g, grid[k - 1], &prev, &prev_inv, grid[k], &cur, 0)?;
        fine = fine + inc;
        refinements += extra;
        bound = bound.min(T::one() / cur_inv.frob_norm());
        if k % 2 == 0 {
            coarse = match (coarse, log_increment(g, even_t, &even_fiber, &even_inv, grid[k], &cur, 0)) {
                (Some(acc), Ok((v, _))) => Some(acc + v),
                _ => None,
            };
            even_t = grid[k];
            even_fiber = cur.clone();
            even_inv = cur_inv.clone();
        }
        prev = cur;
        prev_inv = cur_inv;
    }
    if (grid.len() - 1) % 2 == 1 {
        coarse = None;
    }
    let norm = T::TAU() * T::of_usize(g.q());
    let value = fine.im / norm;
    Ok(WindingResult {
        value,
        grid: grid.len() - 1,
        residual: coarse.map(|c| (c.im / norm - value).abs()),
        refinements,
        min_singular_bound: bound,
    })
}

fn invert<T: Real>(f: &Fiber<T>, t: T) -> Result<Fiber<T>, FieldError> {
    f.inverse().map_err(|e| match e {
        FieldError::Linalg(LinalgError::Singular) => FieldError::Singular { t: as_f64(t) },
        other => other,
    })
}

fn log_increment<T: Real>(
    g: &FieldElement<T>,
    ta: T,
    a: &Fiber<T>,
    a_inv: &Fiber<T>,
    tb: T,
    b: &Fiber<T>,
    depth: usize,
) -> Result<(Complex<T>, usize), FieldError> {
    match a_inv.mul(b)?.trace_log_near_identity() {
        Ok(v) => Ok((v, 0)),
        Err(FieldError::StepTooCoarse { norm, .. }) => {
            if depth >= 24 || !g.is_lazy() {
                return Err(FieldError::StepTooCoarse { t: as_f64(ta), norm });
            }
            let tm = (ta + tb) / T::lit(2.0);
            let mid = g.eval_at(&BasePoint::Interval { t: tm })?;
            let mid_inv = invert(&mid, tm)?;
            let (v1, r1) = log_increment(g, ta, a, a_inv, tm, &mid, depth + 1)?;
            let (v2, r2) = log_increment(g, tm, &mid, &mid_inv, tb, b, depth + 1)?;
            Ok((v1 + v2, r1 + r2 + 1))
        }
        Err(e) => Err(e),
    }
}

/// Spectral data of a Rieffel projection `P = V diag(lambda) V*`.
#[derive(Debug, Clone)]
pub struct ModalProjection<T> {
    pub frame: Arc<CMat<T>>,
    pub eigenvalues: Vec<T>,
    pub projection: CMat<T>,
}

impl<T: Real> ModalProjection<T> {
    pub fn rieffel(rep: &Rep<T>, params: &RieffelParams<T>) -> Result<Self, FieldError> {
        let p = rieffel_projection(rep, params)?.matrix;
        let eig = p.hermitian_eigen()?;
        Ok(Self { frame: Arc::new(eig.vectors), eigenvalues: eig.values, projection: p })
    }

    /// Modes `mu_j = 1 + (z - 1) lambda_j` of `z P + 1 - P`.
    pub fn modes_at(&self, z: Complex<T>) -> Vec<Complex<T>> {
        let one = Complex::new(T::one(), T::zero());
        self.eigenvalues.iter().map(|l| one + (z - one) * *l).collect()
    }

    /// Eigenvalues of `c(u, t) = exp(2 pi i t)(1 - u) P + 1 - (1 - u) P`.
    pub fn c_eigenvalues(&self, u: T, t: T) -> Vec<Complex<T>> {
        let one = Complex::new(T::one(), T::zero());
        let w = (cis(T::TAU() * t) - one) * (T::one() - u);
        self.eigenvalues.iter().map(|l| one + w * *l).collect()
    }
}

/// `X^s` with `X(t) = exp(2 pi i t) P + 1 - P` for the Rieffel projection `P`.
pub fn x_loop<T: Real>(rep: &Rep<T>, params: &RieffelParams<T>, s: i32, steps: usize) -> Result<FieldElement<T>, FieldError> {
    let modal = Arc::new(ModalProjection::rieffel(rep, params)?);
    Ok(x_loop_from(modal, s, 1, steps))
}

/// `X^s (+) 1_{block - 1}` in the frame of `modal`.
pub fn x_loop_from<T: Real>(modal: Arc<ModalProjection<T>>, s: i32, block: usize, steps: usize) -> FieldElement<T> {
    let q = modal.frame.rows();
    FieldElement::lazy(Base::interval(steps), block, q, move |p| {
        let modes = modal
            .modes_at(cis(T::TAU() * p.t()))
            .into_iter()
            .map(|mu| {
                let mut m = CMat::identity(block);
                m[(0, 0)] = mu.powi(s);
                m
            })
            .collect();
        Ok(Fiber::Modal { frame: modal.frame.clone(), modes })
    })
}

/// `W(t) = exp(2 pi i t) 1`.
pub fn w_loop<T: Real>(q: usize, steps: usize) -> FieldElement<T> {
    FieldElement::scalar_field(Base::interval(steps), q, |p| cis(T::TAU() * p.t()))
}

/// Smallest singular value over every fiber of a sampled family; passes iff
/// it stays at or above `floor`.
pub fn homotopy_check<T: Real>(family: &[FieldElement<T>], floor: T) -> Result<Report, FieldError> {
    let mut min = T::infinity();
    for field in family {
        for i in 0..field.len() {
            min = min.min(field.fiber(i)?.min_singular_value()?);
        }
    }
    let mut report = Report::new();
    report.push(Check::new("min_singular_value", min >= floor, Some(as_f64(min))));
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SpectrumResult<T> {
    /// Distinct eigenvalue samples of `c(u, t)`.
    pub points: Vec<Complex<T>>,
    pub coverage: T,
    pub boundary_gap: T,
    pub report: Report,
}

/// Eigenvalues of `c(u, t) = exp(2 pi i t)(1 - u) P + 1 - (1 - u) P` on a
/// `grid x grid` lattice, with a coverage check against the closed disk.
pub fn spectrum_c<T: Real>(rep: &Rep<T>, params: &RieffelParams<T>, grid: usize) -> Result<SpectrumResult<T>, FieldError> {
    let modal = ModalProjection::rieffel(rep, params)?;
    let grid = grid.max(2);
    let us: Vec<T> = (0..grid).map(|i| T::of_usize(i) / T::of_usize(grid - 1)).collect();
    let ts: Vec<T> = (0..grid).map(|k| T::of_usize(k) / T::of_usize(grid)).collect();
    let one = Complex::new(T::one(), T::zero());

    let mut points = Vec::with_capacity(grid * grid * modal.eigenvalues.len());
    for &u in &us {
        for &t in &ts {
            points.extend(modal.c_eigenvalues(u, t));
        }
    }
    let key = |z: &Complex<T>| ((as_f64(z.re) * 1e12).round() as i64, (as_f64(z.im) * 1e12).round() as i64);
    points.sort_by_key(key);
    points.dedup_by_key(|z| key(z));

    // Eigen-residual of the modal formula against the dense matrix.
    let mut eigen_residual = T::zero();
    let p = &modal.projection;
    let frame = modal.frame.as_ref();
    for (u, t) in [(us[0], ts[0]), (us[grid / 3], ts[grid / 2]), (us[grid - 1], ts[grid - 1]), (us[0], ts[grid / 4])] {
        let w = cis(T::TAU() * t) - one;
        let c = p.scale(w * (T::one() - u)).add_scalar(one);
        let d = CMat::from_diag(&modal.c_eigenvalues(u, t));
        eigen_residual = eigen_residual.max((&(&c * frame) - &(frame * &d)).frob_norm());
    }

    let boundary_max = ts
        .iter()
        .flat_map(|t| modal.c_eigenvalues(T::zero(), *t))
        .fold(T::zero(), |m, z| m.max(z.norm()));
    let boundary_gap = (T::one() - boundary_max).abs();
    let coverage = disk_coverage(&points, T::lit(0.01));

    let mut report = Report::new();
    report.push(Check::within("eigen_residual", as_f64(eigen_residual), tolerances::RIEFFEL_RESIDUAL));
    report.push(Check::within("disk_coverage", as_f64(coverage), tolerances::SPECTRUM_COVERAGE));
    report.push(Check::within("boundary_reached", as_f64(boundary_gap), tolerances::SPECTRUM_BOUNDARY));
    Ok(SpectrumResult { points, coverage, boundary_gap, report })
}

/// Largest distance from a mesh of the closed unit disk (spacing `h`, plus
/// the boundary circle) to the nearest sample.
pub fn disk_coverage<T: Real>(samples: &[Complex<T>], h: T) -> T {
    let cell = 0.05;
    let lo = -1.5;
    let cells = (3.0 / cell) as usize + 1;
    let mut buckets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cells * cells];
    let bucket_of = |x: f64| (((x - lo) / cell).floor().max(0.0) as usize).min(cells - 1);
    for z in samples {
        let (x, y) = (as_f64(z.re), as_f64(z.im));
        if x.abs() > 1.5 || y.abs() > 1.5 {
            continue;
        }
        buckets[bucket_of(x) * cells + bucket_of(y)].push((x, y));
    }
    let nearest = |x: f64, y: f64| -> f64 {
        let (bx, by) = (bucket_of(x) as i64, bucket_of(y) as i64);
        let mut best = f64::INFINITY;
        for ring in 0..cells as i64 {
            if best.is_finite() && (ring as f64 - 1.0) * cell > best {
                break;
            }
            for i in bx - ring..=bx + ring {
                for j in by - ring..=by + ring {
                    let on_ring = (i - bx).abs() == ring || (j - by).abs() == ring;
                    if !on_ring || i < 0 || j < 0 || i >= cells as i64 || j >= cells as i64 {
                        continue;
                    }
                    for (px, py) in &buckets[i as usize * cells + j as usize] {
                        best = best.min(((px - x).powi(2) + (py - y).powi(2)).sqrt());
                    }
                }
            }
        }
        best
    };
    let h = as_f64(h);
    let steps = (2.0 / h).round() as i64;
    let mut worst: f64 = 0.0;
    for i in 0..=steps {
        for j in 0..=steps {
            let (x, y) = (-1.0 + i as f64 * h, -1.0 + j as f64 * h);
            if x * x + y * y <= 1.0 {
                worst = worst.max(nearest(x, y));
            }
        }
    }
    let ring = (std::f64::consts::TAU / h).ceil() as usize;
    for k in 0..ring {
        let a = std::f64::consts::TAU * k as f64 / ring as f64;
        worst = worst.max(nearest(a.cos(), a.sin()));
    }
    T::lit(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retraction {
    BallToScalars,
    SolidTorusToCircle,
}

impl Retraction {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ball_to_scalars" | "ball-to-scalars" => Some(Self::BallToScalars),
            "solid_torus_to_circle" | "solid-torus-to-circle" => Some(Self::SolidTorusToCircle),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BallToScalars => "ball_to_scalars",
            Self::SolidTorusToCircle => "solid_torus_to_circle",
        }
    }
}

/// Samples the retraction on `steps + 1` values of its parameter and checks
/// that it is well defined fiber-wise and ends where it should.
pub fn retraction_check<T: Real>(which: Retraction, rep: &Rep<T>, steps: usize) -> Result<Report, FieldError> {
    match which {
        Retraction::BallToScalars => ball_to_scalars(rep, steps),
        Retraction::SolidTorusToCircle => solid_torus_to_circle(rep, steps),
    }
}

fn ball_to_scalars<T: Real>(rep: &Rep<T>, steps: usize) -> Result<Report, FieldError> {
    let pres = Presentation::ball(2, false);
    let relations: Vec<(String, Expr)> = pres
        .relations()
        .into_iter()
        .map(|(name, text)| (name, crate::algebra_core::parse_expr(&text).expect("preset relations parse")))
        .collect();
    let q = rep.q();
    let theta = rep.theta();
    let norm = |m: &CMat<T>| m.frob_norm() / T::of_usize(q).sqrt();
    let id = CMat::<T>::identity(q);
    let (mut radius, mut others, mut start, mut end) = (T::zero(), T::zero(), T::zero(), T::zero());
    for tr in uniform_grid::<T>(steps) {
        for r in uniform_grid::<T>(4) {
            for tau in uniform_grid::<T>(4) {
                let w1 = rep.u1().scale_re(r * tau.sqrt());
                let w2 = rep.u2().scale_re(r * (T::one() - tau).sqrt());
                let y = (T::one() - r * r).max(T::zero()).sqrt();
                let shrink = T::one() - tr;
                let fw1 = w1.scale_re(shrink);
                let fw2 = w2.scale_re(shrink);
                let fy = (T::one() - shrink * shrink * (T::one() - y * y)).max(T::zero()).sqrt();
                let fy_m = id.scale_re(fy);
                let env = |name: &str| match name {
                    "w1" => Some(fw1.clone()),
                    "w2" => Some(fw2.clone()),
                    "y" => Some(fy_m.clone()),
                    _ => None,
                };
                for (name, rel) in &relations {
                    let res = norm(&eval_numeric(rel, &env, theta, q)?);
                    if name == "radius" {
                        radius = radius.max(res);
                    } else {
                        others = others.max(res);
                    }
                }
                if tr == T::zero() {
                    start = start.max(norm(&(&fw1 - &w1))).max(norm(&(&fw2 - &w2))).max((fy - y).abs());
                }
                if tr == T::one() {
                    end = end.max(norm(&fw1)).max(norm(&fw2)).max((fy - T::one()).abs());
                }
            }
        }
    }
    let tol = tolerances::RETRACTION;
    let mut report = Report::new();
    report.push(Check::within("radius_relation", as_f64(radius), tol));
    report.push(Check::within("other_relations", as_f64(others), tol));
    report.push(Check::within("identity_at_start", as_f64(start), tol));
    report.push(Check::within("scalars_at_end", as_f64(end), tol));
    Ok(report.prefixed("ball_to_scalars"))
}

fn solid_torus_to_circle<T: Real>(rep: &Rep<T>, steps: usize) -> Result<Report, FieldError> {
    let pres = Presentation::odd_sphere(2);
    let sample = AlgebraElement::<num_rational::BigRational>::parse("z1 + z2 + 2*z1*z2' - i*z1^2*z1'", pres)
        .expect("sample element parses");
    let field = eval_s3(&sample, rep, steps)?;
    let q = rep.q();
    let norm = |m: &CMat<T>| m.frob_norm() / T::of_usize(q).sqrt();
    // f_r(s) = f((1 - r) s + r), written so that s = 1 and r = 1 are exact.
    let retracted = |r: T, s: T| -> Result<CMat<T>, FieldError> {
        let arg = T::one() - (T::one() - r) * (T::one() - s);
        Ok(field.eval_at(&BasePoint::Interval { t: arg })?.to_dense())
    };
    let grid = uniform_grid::<T>(steps);
    let top = field.fiber(grid.len() - 1)?.to_dense();
    let end_value = retracted(T::one(), T::zero())?;
    let (mut fixed, mut constant, mut start) = (T::zero(), T::zero(), T::zero());
    for (k, &x) in grid.iter().enumerate() {
        fixed = fixed.max(norm(&(&retracted(x, T::one())? - &top)));
        constant = constant.max(norm(&(&retracted(T::one(), x)? - &end_value)));
        start = start.max(norm(&(&retracted(T::zero(), x)? - &field.fiber(k)?.to_dense())));
    }
    let mut report = Report::new();
    report.push(Check::within("fixes_boundary", as_f64(fixed), tolerances::RETRACTION));
    report.push(Check::within("identity_at_start", as_f64(start), tolerances::RETRACTION));
    report.push(Check::within("constant_at_end", as_f64(constant), tolerances::RETRACTION));
    report.push(Check::within("end_in_span_u1", as_f64(span_u1_residual(&end_value, q)), tolerances::BOUNDARY));
    Ok(report.prefixed("solid_torus_to_circle"))
}

/// Evaluates an expression with generators bound to matrices.
fn eval_numeric<T: Real>(
    e: &Expr,
    env: &dyn Fn(&str) -> Option<CMat<T>>,
    theta: T,
    dim: usize,
) -> Result<CMat<T>, FieldError> {
    let rec = |x: &Expr| eval_numeric(x, env, theta, dim);
    Ok(match e {
        Expr::Number { num, den, imag } => {
            let n: f64 = num.parse().map_err(|_| FieldError::Shape(format!("number {num}")))?;
            let d: f64 = den.as_deref().unwrap_or("1").parse().map_err(|_| FieldError::Shape(format!("number {num}")))?;
            let v = T::lit(n / d);
            let c = if *imag { Complex::new(T::zero(), v) } else { Complex::new(v, T::zero()) };
            CMat::scalar(dim, c)
        }
        Expr::Rho { half } => CMat::scalar(dim, cis(T::PI() * theta * T::lit(*half as f64))),
        Expr::Gen { name, adj, pow, .. } => {
            let m = env(name).ok_or_else(|| FieldError::Shape(format!("unbound generator {name}")))?;
            let m = if *adj { m.adjoint() } else { m };
            let m = if *pow < 0 { m.inverse()? } else { m };
            m.powi(pow.unsigned_abs())?
        }
        Expr::Add(a, b) => rec(a)?.try_add(&rec(b)?)?,
        Expr::Sub(a, b) => rec(a)?.try_sub(&rec(b)?)?,
        Expr::Mul(a, b) => rec(a)?.try_mul(&rec(b)?)?,
        Expr::Neg(a) => rec(a)?.scale_re(-T::one()),
        Expr::Adj(a) => rec(a)?.adjoint(),
        Expr::Pow(a, k) => rec(a)?.powi(*k)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    type E = AlgebraElement<BigRational>;

    fn rep(p: i64, q: i64) -> Rep<f64> {
        Rep::clock_shift(p, q).unwrap()
    }

    fn params(r: &Rep<f64>) -> RieffelParams<f64> {
        RieffelParams::proportional(0.2, r.theta()).unwrap()
    }

    fn s3(text: &str) -> E {
        E::parse(text, Presentation::odd_sphere(2)).unwrap()
    }

    fn s4(text: &str) -> E {
        E::parse(text, Presentation::even_sphere(2)).unwrap()
    }

    #[test]
    fn eval_s3_examples() {
        let r = rep(3, 8);
        let radius = eval_s3(&s3("z1*z1' + z2*z2'"), &r, 8).unwrap();
        for i in 0..radius.len() {
            assert!((&radius.fiber(i).unwrap().to_dense() - &CMat::identity(8)).frob_norm() <= 1e-12);
        }
        let z1 = eval_s3(&s3("z1"), &r, 8).unwrap();
        assert_eq!(z1.fiber(0).unwrap().frob_norm(), 0.0);
        let z2 = eval_s3(&s3("z2"), &r, 2).unwrap();
        let half = z2.fiber(1).unwrap().to_dense();
        assert!((&half - &r.u2().scale_re(0.5f64.sqrt())).frob_norm() <= 1e-15);
        assert!(matches!(eval_s3(&s4("x"), &r, 4), Err(FieldError::WrongPresentation { .. })));
    }

    #[test]
    fn eval_s4_examples() {
        let r = rep(2, 5);
        let radius = eval_s4(&s4("z1*z1' + z2*z2' + x^2"), &r, 6, 6).unwrap();
        for i in 0..radius.len() {
            assert!((&radius.fiber(i).unwrap().to_dense() - &CMat::identity(5)).frob_norm() <= 1e-10);
        }
        let x = eval_s4(&s4("x"), &r, 4, 4).unwrap();
        let pole = x.base().cone_index(Hemisphere::North, 4, 2).unwrap();
        assert!((&x.fiber(pole).unwrap().to_dense() - &CMat::identity(5)).frob_norm() == 0.0);
        let south_pole = x.base().cone_index(Hemisphere::South, 4, 0).unwrap();
        assert!((&x.fiber(south_pole).unwrap().to_dense() + &CMat::identity(5)).frob_norm() == 0.0);
        for t in 0..5 {
            let eq = x.base().cone_index(Hemisphere::North, 0, t).unwrap();
            assert_eq!(x.fiber(eq).unwrap().frob_norm(), 0.0);
        }
    }

    #[test]
    fn eval_s4_seam_and_poles() {
        let r = rep(2, 5);
        let f = eval_s4(&s4("z1 + 3*z2'*x - z1*z2 + x^2"), &r, 4, 4).unwrap();
        for t in 0..5 {
            let n = f.fiber(f.base().cone_index(Hemisphere::North, 0, t).unwrap()).unwrap().to_dense();
            let s = f.fiber(f.base().cone_index(Hemisphere::South, 0, t).unwrap()).unwrap().to_dense();
            assert!((&n - &s).frob_norm() <= 1e-12);
            let pole = f.fiber(f.base().cone_index(Hemisphere::North, 4, t).unwrap()).unwrap();
            assert!(pole.scalar_deviation().1 <= 1e-12);
        }
    }

    #[test]
    fn boundary_check_examples() {
        let r = rep(3, 8);
        assert!(boundary_check(&eval_s3(&s3("z2"), &r, 16).unwrap()).unwrap().passed());
        assert!(boundary_check(&eval_s3(&s3("z1 + z2"), &r, 16).unwrap()).unwrap().passed());
        let bad = FieldElement::from_fibers(
            Base::interval(1),
            1,
            8,
            vec![Fiber::Dense(r.u1().clone()), Fiber::Dense(r.u1().clone())],
        )
        .unwrap();
        let report = boundary_check(&bad).unwrap();
        assert!(!report.get("t0_in_span_u2").unwrap().pass);
        assert!(report.get("t1_in_span_u1").unwrap().pass);
    }

    #[test]
    fn boundary_residual_does_not_grow_with_refinement() {
        let r = rep(2, 5);
        let a = s3("z1*z2' + 2*z2^2 - z1'");
        let res = |n| boundary_check(&eval_s3(&a, &r, n).unwrap()).unwrap().max_residual();
        assert!(res(64) <= res(32) + 1e-15);
    }

    #[test]
    fn winding_examples() {
        let r = rep(34, 89);
        let x = x_loop(&r, &params(&r), 1, 2048).unwrap();
        let w = winding(&x).unwrap();
        assert!((w.value - 34.0 / 89.0).abs() <= 1e-3, "{}", w.value);
        let constant = FieldElement::<f64>::scalar_field(Base::interval(16), 4, |_| Complex::new(1.0, 0.0));
        assert_eq!(winding(&constant).unwrap().value, 0.0);
        let wl = winding(&w_loop::<f64>(4, 64)).unwrap();
        assert!((wl.value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn winding_refines_coarse_steps() {
        let w = winding(&w_loop::<f64>(3, 2)).unwrap();
        assert!((w.value - 1.0).abs() <= 1e-12);
        assert!(w.refinements > 0);
        let stored = w_loop::<f64>(3, 2).materialize().unwrap();
        assert!(matches!(winding(&stored), Err(FieldError::StepTooCoarse { .. })));
    }

    #[test]
    fn winding_rejects_bad_loops() {
        let r = rep(3, 8);
        let open = FieldElement::<f64>::scalar_field(Base::interval(8), 8, |p| cis(std::f64::consts::PI * p.t()));
        assert!(winding(&open).is_ok());
        let nonscalar = eval_s3(&s3("1 + z1"), &r, 8).unwrap();
        assert!(matches!(winding(&nonscalar), Err(FieldError::NonScalarEndpoint { .. })));
        let singular = FieldElement::<f64>::scalar_field(Base::interval(4), 2, |p| Complex::new(1.0 - 2.0 * p.t() * (1.0 - p.t()) * 2.0, 0.0));
        assert!(matches!(winding(&singular), Err(FieldError::Singular { .. })));
    }

    #[test]
    fn dense_and_modal_winding_agree() {
        let r = rep(3, 8);
        for s in [-2, 1, 3] {
            let modal = x_loop(&r, &params(&r), s, 256).unwrap();
            let dense = modal.map(|_, f| Ok(Fiber::Dense(f.to_dense()))).unwrap();
            let (a, b) = (winding(&modal).unwrap().value, winding(&dense).unwrap().value);
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            assert!((a - s as f64 * 3.0 / 8.0).abs() <= 2e-3 * (s.abs() as f64).max(1.0));
        }
    }

    #[test]
    fn winding_is_additive_and_grid_stable() {
        let r = rep(21, 55);
        let p = params(&r);
        let modal = Arc::new(ModalProjection::rieffel(&r, &p).unwrap());
        for (a, b) in [(1, 2), (-3, 1), (2, -2)] {
            let xa = x_loop_from(modal.clone(), a, 1, 1024);
            let xb = x_loop_from(modal.clone(), b, 1, 1024);
            let sum = winding(&xa).unwrap().value + winding(&xb).unwrap().value;
            let prod = winding(&xa.mul(&xb).unwrap()).unwrap().value;
            assert!((sum - prod).abs() <= 2e-3);
        }
        let x2 = |n| winding(&x_loop_from(modal.clone(), 2, 1, n)).unwrap();
        let (w1, w2) = (x2(2048), x2(4096));
        assert!((w1.value - w2.value).abs() <= 1e-4);
        assert!(w2.residual.unwrap() <= 1e-4);
        assert!(w2.min_singular_bound > 0.0);
    }

    #[test]
    fn fiber_algebra_matches_dense() {
        let r = rep(2, 5);
        let modal = Arc::new(ModalProjection::rieffel(&r, &params(&r)).unwrap());
        let f = x_loop_from(modal.clone(), 2, 2, 8).fiber(3).unwrap();
        let g = x_loop_from(modal, -1, 2, 8).fiber(5).unwrap();
        let k = Fiber::Kron { small: CMat::from_rows(vec![vec![Complex::new(1.0, 0.5), Complex::new(0.0, 2.0)], vec![Complex::new(-1.0, 0.0), Complex::new(3.0, 0.0)]]).unwrap(), q: 5 };
        let close = |a: &Fiber<f64>, b: &CMat<f64>| (&a.to_dense() - b).frob_norm() <= 1e-12;
        let (fd, gd, kd) = (f.to_dense(), g.to_dense(), k.to_dense());
        assert!(close(&f.mul(&g).unwrap(), &(&fd * &gd)));
        assert!(matches!(f.mul(&k).unwrap(), Fiber::Modal { .. }));
        assert!(close(&f.mul(&k).unwrap(), &(&fd * &kd)));
        assert!(close(&k.add(&g).unwrap(), &(&kd + &gd)));
        assert!(close(&f.inverse().unwrap(), &fd.inverse().unwrap()));
        assert!(close(&f.adjoint(), &fd.adjoint()));
        assert!(close(&k.powi(-2).unwrap(), &kd.inverse().unwrap().powi(2).unwrap()));
        assert!((f.trace() - fd.trace()).norm() <= 1e-12);
        assert!((f.frob_norm() - fd.frob_norm()).abs() <= 1e-12);
        assert!((k.min_singular_value().unwrap() - kd.min_singular_value().unwrap()).abs() <= 1e-10);
        let sum = f.direct_sum(&k, 5).unwrap();
        assert!(close(&sum, &fd.direct_sum(&kd)));
        let dense = Fiber::Dense(fd.clone());
        assert!(close(&dense.direct_sum(&g, 5).unwrap(), &fd.direct_sum(&gd)));
    }

    #[test]
    fn trace_log_matches_log_det() {
        let m = CMat::from_rows(vec![
            vec![Complex::new(1.1, 0.05), Complex::new(0.1, -0.2)],
            vec![Complex::new(0.0, 0.1), Complex::new(0.9, 0.3)],
        ])
        .unwrap();
        let tl = Fiber::Dense(m.clone()).trace_log_near_identity().unwrap();
        let det = m.det().unwrap();
        assert!((tl - det.ln()).norm() <= 1e-13);
        let far = Fiber::Dense(CMat::<f64>::scalar(2, Complex::new(3.0, 0.0)));
        assert!(matches!(far.trace_log_near_identity(), Err(FieldError::StepTooCoarse { .. })));
    }

    #[test]
    fn homotopy_check_examples() {
        let s_grid = uniform_grid::<f64>(8);
        let rot: Vec<_> = s_grid
            .iter()
            .map(|&s| FieldElement::<f64>::scalar_field(Base::interval(16), 3, move |p| cis(std::f64::consts::TAU * s * p.t())))
            .collect();
        let report = homotopy_check(&rot, 1e-6).unwrap();
        assert!(report.passed());
        assert!((report.max_residual() - 1.0).abs() <= 1e-12);
        let shrink: Vec<_> = s_grid
            .iter()
            .map(|&s| FieldElement::<f64>::scalar_field(Base::interval(4), 3, move |_| Complex::new(1.0 - s, 0.0)))
            .collect();
        assert!(!homotopy_check(&shrink, 1e-6).unwrap().passed());
    }

    #[test]
    fn spectrum_examples() {
        let r = rep(3, 8);
        let p = params(&r);
        let modal = ModalProjection::rieffel(&r, &p).unwrap();
        for t in [0.1, 0.37, 0.8] {
            assert!(modal.c_eigenvalues(1.0, t).iter().all(|z| *z == Complex::new(1.0, 0.0)));
            let edge = modal.c_eigenvalues(0.0, t);
            let top = edge.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!((top - 1.0).abs() <= 1e-8);
            // Chord from 1 to exp(2 pi i t).
            let target = cis(std::f64::consts::TAU * t) - 1.0;
            assert!(edge.iter().all(|z| ((*z - 1.0) * target.conj()).im.abs() <= 1e-10));
        }
        let res = spectrum_c(&rep(21, 55), &params(&rep(21, 55)), 64).unwrap();
        assert!(res.report.passed(), "{:?}", res.report);
        assert!(res.coverage <= 0.1);
        let coarse = spectrum_c(&r, &p, 4).unwrap();
        assert!(!coarse.report.get("disk_coverage").unwrap().pass);
    }

    #[test]
    fn disk_coverage_of_dense_mesh() {
        let pts: Vec<Complex<f64>> = (0..=40)
            .flat_map(|i| (0..=40).map(move |j| Complex::new(-1.0 + i as f64 / 20.0, -1.0 + j as f64 / 20.0)))
            .collect();
        let cov = disk_coverage(&pts, 0.01);
        assert!(cov <= 0.05 * std::f64::consts::FRAC_1_SQRT_2 + 1e-9);
        assert!((disk_coverage::<f64>(&[Complex::new(0.0, 0.0)], 0.1) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn retractions_pass() {
        let r = rep(3, 8);
        for which in [Retraction::BallToScalars, Retraction::SolidTorusToCircle] {
            let report = retraction_check(which, &r, 8).unwrap();
            assert!(report.passed(), "{report:?}");
        }
        assert_eq!(Retraction::from_name("ball_to_scalars"), Some(Retraction::BallToScalars));
    }

    #[test]
    fn field_json_round_trip() {
        let r = rep(1, 3);
        let f = eval_s4(&s4("z1 + x"), &r, 2, 2).unwrap();
        let j = f.to_json().unwrap();
        let text = serde_json::to_string(&j).unwrap();
        assert!(text.contains("\"base\":\"double_cone\""));
        let back = FieldElement::<f64>::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.len(), f.len());
        for i in 0..f.len() {
            assert!((&back.fiber(i).unwrap().to_dense() - &f.fiber(i).unwrap().to_dense()).frob_norm() <= 1e-15);
        }
        let coarse = f.coarsen(2).unwrap();
        assert_eq!(coarse.len(), 8);
    }

    fn arb_s3() -> impl Strategy<Value = E> {
        let pres = Presentation::odd_sphere(2);
        prop::collection::vec((0i32..=2, 0i32..=2, 0i32..=2, 0i32..=2, -3i64..=3, -2i32..=2), 1..=3).prop_map(move |ts| {
            ts.into_iter().fold(E::zero(pres), |acc, (a1, b1, a2, b2, c, half)| {
                let coeff = crate::phase_ring::PhaseScalar::monomial(crate::phase_ring::GaussianRational::from_int(c), half);
                &acc + &E::from_monomial(pres, crate::algebra_core::Monomial::new(vec![a1, b1, a2, b2], 0, 0), coeff).unwrap()
            })
        })
    }

    fn arb_s4() -> impl Strategy<Value = E> {
        let pres = Presentation::even_sphere(2);
        prop::collection::vec((0i32..=1, 0i32..=1, 0i32..=1, 0i32..=1, 0u32..=2, -3i64..=3), 1..=3).prop_map(move |ts| {
            ts.into_iter().fold(E::zero(pres), |acc, (a1, b1, a2, b2, x, c)| {
                let coeff = crate::phase_ring::PhaseScalar::from_int(c);
                &acc + &E::from_monomial(pres, crate::algebra_core::Monomial::new(vec![a1, b1, a2, b2], x, 0), coeff).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn eval_s3_is_star_homomorphism(a in arb_s3(), b in arb_s3()) {
            let r = rep(2, 5);
            let (fa, fb) = (eval_s3(&a, &r, 4).unwrap(), eval_s3(&b, &r, 4).unwrap());
            let fab = eval_s3(&(&a * &b), &r, 4).unwrap();
            let fadj = eval_s3(&a.adjoint(), &r, 4).unwrap();
            for i in 0..fa.len() {
                let (x, y) = (fa.fiber(i).unwrap().to_dense(), fb.fiber(i).unwrap().to_dense());
                let xy = fab.fiber(i).unwrap().to_dense();
                prop_assert!((&xy - &(&x * &y)).frob_norm() <= 1e-10 * (1.0 + xy.frob_norm()));
                prop_assert!((&fadj.fiber(i).unwrap().to_dense() - &x.adjoint()).frob_norm() <= 1e-10 * (1.0 + x.frob_norm()));
            }
        }

        #[test]
        fn eval_s4_is_star_homomorphism(a in arb_s4(), b in arb_s4()) {
            let r = rep(1, 3);
            let (fa, fb) = (eval_s4(&a, &r, 3, 3).unwrap(), eval_s4(&b, &r, 3, 3).unwrap());
            let fab = eval_s4(&(&a * &b), &r, 3, 3).unwrap();
            let fadj = eval_s4(&a.adjoint(), &r, 3, 3).unwrap();
            for i in 0..fa.len() {
                let (x, y) = (fa.fiber(i).unwrap().to_dense(), fb.fiber(i).unwrap().to_dense());
                let xy = fab.fiber(i).unwrap().to_dense();
                prop_assert!((&xy - &(&x * &y)).frob_norm() <= 1e-10 * (1.0 + xy.frob_norm()));
                prop_assert!((&fadj.fiber(i).unwrap().to_dense() - &x.adjoint()).frob_norm() <= 1e-10 * (1.0 + x.frob_norm()));
            }
        }

        #[test]
        fn winding_of_x_power_is_linear(s in -3i32..=3) {
            let r = rep(5, 13);
            let w = winding(&x_loop(&r, &params(&r), s, 512).unwrap()).unwrap();
            prop_assert!((w.value - s as f64 * 5.0 / 13.0).abs() <= 2e-3 * (s.abs() as f64).max(1.0));
        }
    }
}
