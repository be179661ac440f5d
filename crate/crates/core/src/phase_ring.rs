//! Exact coefficients: finite sums of half-integer powers of the formal phase
//! `rho = exp(2 pi i theta)` with Gaussian-rational coefficients.
//!
//! Numeric evaluation uses the fixed branch `rho^(k/2) = exp(pi i theta k)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex;
use num_integer::Integer;
use num_traits::{FromPrimitive, Signed, ToPrimitive};
use thiserror::Error;

use crate::linalg::Real;

/// Exact rational scalar used for coefficients (`BigRational`, `Rational64`, ...).
pub trait ExactRational:
    Clone
    + Eq
    + Ord
    + fmt::Debug
    + fmt::Display
    + num_traits::Num
    + Signed
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// `num / den` built from machine integers.
    fn from_fraction(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("i64 numerator") / Self::from_i64(den).expect("i64 denominator")
    }
}

impl<T> ExactRational for T where
    T: Clone
        + Eq
        + Ord
        + fmt::Debug
        + fmt::Display
        + num_traits::Num
        + Signed
        + FromPrimitive
        + ToPrimitive
        + Send
        + Sync
        + 'static
{
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThetaError {
    #[error("denominator must be positive, got {0}")]
    NonPositiveDenominator(i64),
    #[error("irrational theta must be finite and in (0,1), got {0}")]
    OutOfRange(f64),
    #[error("q_max must be at least 1")]
    BadBound,
}

/// Whether a deformation parameter is treated as rational or irrational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaKind {
    Rational,
    Irrational,
}

/// The deformation parameter. The 2x2 skew matrix is stored through its
/// single entry `theta_12 = theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta {
    /// Reduced `p/q` with `0 <= p < q`.
    Rational { p: i64, q: i64 },
    Irrational(f64),
}

impl Theta {
    /// Reduces `p/q` modulo 1 and to lowest terms.
    pub fn rational(p: i64, q: i64) -> Result<Self, ThetaError> {
        if q <= 0 {
            return Err(ThetaError::NonPositiveDenominator(q));
        }
        let p = p.rem_euclid(q);
        let g = p.gcd(&q).max(1);
        Ok(Theta::Rational { p: p / g, q: q / g })
    }

    pub fn irrational(value: f64) -> Result<Self, ThetaError> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Theta::Irrational(value))
        } else {
            Err(ThetaError::OutOfRange(value))
        }
    }

    pub fn kind(&self) -> ThetaKind {
        match self {
            Theta::Rational { .. } => ThetaKind::Rational,
            Theta::Irrational(_) => ThetaKind::Irrational,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Theta::Rational { p, q } => p as f64 / q as f64,
            Theta::Irrational(v) => v,
        }
    }

    /// The rational number used for finite-dimensional numerics: the value
    /// itself for rational theta, otherwise the last continued-fraction
    /// convergent with denominator at most `q_max`.
    pub fn numeric_pq(&self, q_max: i64) -> Result<(i64, i64), ThetaError> {
        match *self {
            Theta::Rational { p, q } => Ok((p, q)),
            Theta::Irrational(v) => {
                if q_max < 1 {
                    return Err(ThetaError::BadBound);
                }
                Ok(*convergents(v, q_max).last().expect("at least one convergent"))
            }
        }
    }
}

/// Continued-fraction convergents `p/q` of `value` with `q <= q_max`.
pub fn convergents(value: f64, q_max: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let (mut p_prev, mut q_prev) = (1i64, 0i64);
    let (mut p_cur, mut q_cur) = (value.floor() as i64, 1i64);
    out.push((p_cur, q_cur));
    let mut frac = value - value.floor();
    for _ in 0..64 {
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor() as i64;
        frac = inv - inv.floor();
        let p_next = a * p_cur + p_prev;
        let q_next = a * q_cur + q_prev;
        if q_next > q_max {
            break;
        }
        p_prev = p_cur;
        q_prev = q_cur;
        p_cur = p_next;
        q_cur = q_next;
        out.push((p_cur, q_cur));
    }
    out
}

/// `re + im i` with exact rational parts.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct GaussianRational<Q> {
    pub re: Q,
    pub im: Q,
}

impl<Q: ExactRational> GaussianRational<Q> {
    pub fn new(re: Q, im: Q) -> Self {
        Self { re, im }
    }

    pub fn real(re: Q) -> Self {
        Self { re, im: Q::zero() }
    }

    pub fn from_int(n: i64) -> Self {
        Self::real(Q::from_i64(n).expect("i64"))
    }

    pub fn i() -> Self {
        Self::new(Q::zero(), Q::one())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -self.im.clone())
    }

    /// True for `-a` and `-ai` with `a > 0`; such values print with a leading minus.
    pub fn is_negative_axis(&self) -> bool {
        if self.im.is_zero() {
            self.re.is_negative()
        } else {
            self.re.is_zero() && self.im.is_negative()
        }
    }

    pub fn to_complex<T: Real>(&self) -> Complex<T> {
        let re = T::from_f64(self.re.to_f64().unwrap_or(f64::NAN)).expect("finite");
        let im = T::from_f64(self.im.to_f64().unwrap_or(f64::NAN)).expect("finite");
        Complex::new(re, im)
    }
}

impl<Q: ExactRational> Add for &GaussianRational<Q> {
    type Output = GaussianRational<Q>;
    fn add(self, rhs: Self) -> GaussianRational<Q> {
        GaussianRational::new(self.re.clone() + rhs.re.clone(), self.im.clone() + rhs.im.clone())
    }
}

impl<Q: ExactRational> Sub for &GaussianRational<Q> {
    type Output = GaussianRational<Q>;
    fn sub(self, rhs: Self) -> GaussianRational<Q> {
        GaussianRational::new(self.re.clone() - rhs.re.clone(), self.im.clone() - rhs.im.clone())
    }
}

impl<Q: ExactRational> Mul for &GaussianRational<Q> {
    type Output = GaussianRational<Q>;
    fn mul(self, rhs: Self) -> GaussianRational<Q> {
        let re = self.re.clone() * rhs.re.clone() - self.im.clone() * rhs.im.clone();
        let im = self.re.clone() * rhs.im.clone() + self.im.clone() * rhs.re.clone();
        GaussianRational::new(re, im)
    }
}

impl<Q: ExactRational> Neg for &GaussianRational<Q> {
    type Output = GaussianRational<Q>;
    fn neg(self) -> GaussianRational<Q> {
        GaussianRational::new(-self.re.clone(), -self.im.clone())
    }
}

impl<Q: ExactRational> fmt::Display for GaussianRational<Q> {
    /// Parseable by the expression grammar: `3`, `1/2i`, `(1/2 - 3i)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", self.re),
            (true, false) => write!(f, "{}i", self.im),
            (false, false) => {
                let sign = if self.im.is_negative() { '-' } else { '+' };
                write!(f, "({} {} {}i)", self.re, sign, self.im.abs())
            }
        }
    }
}

/// A finite sum `sum_k c_k rho^(k/2)`. Keys are doubled exponents so that
/// `rho^(1/2)` is stored under `1` and `rho` under `2`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PhaseScalar<Q> {
    terms: BTreeMap<i32, GaussianRational<Q>>,
}

impl<Q: ExactRational> Default for PhaseScalar<Q> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<Q: ExactRational> PhaseScalar<Q> {
    pub fn zero() -> Self {
        Self { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::monomial(GaussianRational::from_int(1), 0)
    }

    pub fn from_int(n: i64) -> Self {
        Self::monomial(GaussianRational::from_int(n), 0)
    }

    pub fn from_rational(q: Q) -> Self {
        Self::monomial(GaussianRational::real(q), 0)
    }

    pub fn from_gaussian(c: GaussianRational<Q>) -> Self {
        Self::monomial(c, 0)
    }

    /// `rho^(half_exp / 2)`.
    pub fn rho_half_power(half_exp: i32) -> Self {
        Self::monomial(GaussianRational::from_int(1), half_exp)
    }

    /// `rho^k`.
    pub fn rho_power(k: i32) -> Self {
        Self::rho_half_power(2 * k)
    }

    /// `c * rho^(half_exp / 2)`.
    pub fn monomial(c: GaussianRational<Q>, half_exp: i32) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(half_exp, c);
        }
        Self { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&0).is_some_and(|c| c.is_one())
    }

    /// `(doubled exponent, coefficient)` pairs in increasing exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (i32, &GaussianRational<Q>)> {
        self.terms.iter().map(|(k, c)| (*k, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// The single `(doubled exponent, coefficient)` pair, when there is one.
    pub fn as_monomial(&self) -> Option<(i32, &GaussianRational<Q>)> {
        if self.terms.len() == 1 {
            self.terms.iter().next().map(|(k, c)| (*k, c))
        } else {
            None
        }
    }

    fn accumulate(&mut self, half_exp: i32, c: GaussianRational<Q>) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(half_exp).or_insert_with(|| GaussianRational::from_int(0));
        *slot = &*slot + &c;
        if slot.is_zero() {
            self.terms.remove(&half_exp);
        }
    }

    /// Multiplies by `rho^(half_exp / 2)`.
    pub fn shift(&self, half_exp: i32) -> Self {
        if half_exp == 0 {
            return self.clone();
        }
        Self { terms: self.terms.iter().map(|(k, c)| (k + half_exp, c.clone())).collect() }
    }

    pub fn scale(&self, c: &GaussianRational<Q>) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect() }
    }

    pub fn scale_int(&self, n: i64) -> Self {
        self.scale(&GaussianRational::from_int(n))
    }

    /// Complex conjugation: `rho -> rho^-1` and coefficients conjugated.
    pub fn conj(&self) -> Self {
        Self { terms: self.terms.iter().map(|(k, c)| (-k, c.conj())).collect() }
    }

    /// Substitutes `rho = exp(2 pi i theta)`, using `sqrt(rho) = exp(pi i theta)`.
    pub fn eval<T: Real>(&self, theta: T) -> Complex<T> {
        let pi = T::PI();
        self.terms.iter().fold(Complex::new(T::zero(), T::zero()), |acc, (k, c)| {
            let angle = pi * theta * T::from_i32(*k).expect("i32");
            acc + c.to_complex::<T>() * Complex::from_polar(T::one(), angle)
        })
    }

    pub fn eval_theta<T: Real>(&self, theta: &Theta) -> Complex<T> {
        self.eval(T::from_f64(theta.value()).expect("finite theta"))
    }
}

impl<Q: ExactRational> Add for &PhaseScalar<Q> {
    type Output = PhaseScalar<Q>;
    fn add(self, rhs: Self) -> PhaseScalar<Q> {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.accumulate(*k, c.clone());
        }
        out
    }
}

impl<Q: ExactRational> Sub for &PhaseScalar<Q> {
    type Output = PhaseScalar<Q>;
    fn sub(self, rhs: Self) -> PhaseScalar<Q> {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.accumulate(*k, -c);
        }
        out
    }
}

impl<Q: ExactRational> Mul for &PhaseScalar<Q> {
    type Output = PhaseScalar<Q>;
    fn mul(self, rhs: Self) -> PhaseScalar<Q> {
        let mut out = PhaseScalar::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                out.accumulate(ka + kb, ca * cb);
            }
        }
        out
    }
}

impl<Q: ExactRational> Neg for &PhaseScalar<Q> {
    type Output = PhaseScalar<Q>;
    fn neg(self) -> PhaseScalar<Q> {
        PhaseScalar { terms: self.terms.iter().map(|(k, c)| (*k, -c)).collect() }
    }
}

macro_rules! forward_owned {
    ($ty:ident, $($tr:ident :: $m:ident),*) => {$(
        impl<Q: ExactRational> $tr for $ty<Q> {
            type Output = $ty<Q>;
            fn $m(self, rhs: Self) -> $ty<Q> {
                (&self).$m(&rhs)
            }
        }
    )*};
}
forward_owned!(PhaseScalar, Add::add, Sub::sub, Mul::mul);
forward_owned!(GaussianRational, Add::add, Sub::sub, Mul::mul);

fn fmt_half_exp(k: i32) -> String {
    if k % 2 == 0 {
        format!("{}", k / 2)
    } else {
        format!("{}/2", k)
    }
}

fn rho_factor(k: i32) -> String {
    match k {
        2 => "rho".to_string(),
        _ => format!("rho^{}", fmt_half_exp(k)),
    }
}

impl<Q: ExactRational> PhaseScalar<Q> {
    /// Sign-separated rendering used by element printing: a single term
    /// with a negative real or imaginary coefficient renders as `(true, -term)`.
    pub(crate) fn split_sign(&self) -> (bool, String) {
        if let Some((k, c)) = self.as_monomial() {
            if c.is_negative_axis() {
                let positive = PhaseScalar::monomial(-c, k);
                return (true, positive.to_string());
            }
        }
        (false, self.to_string())
    }
}

impl<Q: ExactRational> fmt::Display for PhaseScalar<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let render = |k: i32, c: &GaussianRational<Q>| -> String {
            match (k, c.is_one()) {
                (0, _) => c.to_string(),
                (_, true) => rho_factor(k),
                _ => format!("{}*{}", c, rho_factor(k)),
            }
        };
        if let Some((k, c)) = self.as_monomial() {
            return write!(f, "{}", render(k, c));
        }
        write!(f, "(")?;
        for (idx, (k, c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative_axis();
            let body = if negative { render(*k, &-c) } else { render(*k, c) };
            match (idx, negative) {
                (0, false) => write!(f, "{body}")?,
                (0, true) => write!(f, "-{body}")?,
                (_, false) => write!(f, " + {body}")?,
                (_, true) => write!(f, " - {body}")?,
            }
        }
        write!(f, ")")
    }
}
