//! Clock-and-shift representations of the rational rotation algebra and the
//! Rieffel projection built from them.
//!
//! `U1 = diag(exp(2 pi i theta k))` and `U2 e_k = e_{k-1}`, so that
//! `U2 U1 = rho U1 U2` and `U2 f(U1) U2* = f(U1 shifted by theta)`.

use num_complex::Complex;
use num_integer::Integer;
use thiserror::Error;

use crate::algebra_core::{AlgebraElement, Family, PhaseConvention};
use crate::linalg::{cis, CMat, Real};
use crate::phase_ring::ExactRational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepError {
    #[error("p={p} and q={q} are not coprime")]
    NotCoprime { p: i64, q: i64 },
    #[error("dimension q={0} must be at least 2")]
    TooSmall(i64),
    #[error("represent needs the standard torus(2) presentation, got {0}")]
    NotTorus(String),
    #[error("ramp width {eps} must lie in (0, {max}]")]
    InvalidEpsilon { eps: f64, max: f64 },
}

/// `q`-dimensional clock and shift matrices for `theta = p/q`.
#[derive(Debug, Clone)]
pub struct Rep<T> {
    p: i64,
    q: usize,
    u1: CMat<T>,
    u2: CMat<T>,
}

impl<T: Real> Rep<T> {
    pub fn clock_shift(p: i64, q: i64) -> Result<Self, RepError> {
        if q < 2 {
            return Err(RepError::TooSmall(q));
        }
        if p.gcd(&q) != 1 {
            return Err(RepError::NotCoprime { p, q });
        }
        let p = p.rem_euclid(q);
        let n = q as usize;
        let u1 = CMat::from_diag(&(0..n).map(|k| clock_phase::<T>(p, n, k)).collect::<Vec<_>>());
        let one = Complex::new(T::one(), T::zero());
        let u2 = CMat::from_fn(n, n, |r, c| if (r + 1) % n == c { one } else { Complex::new(T::zero(), T::zero()) });
        Ok(Self { p, q: n, u1, u2 })
    }

    pub fn p(&self) -> i64 {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn theta(&self) -> T {
        T::lit(self.p as f64 / self.q as f64)
    }

    pub fn u1(&self) -> &CMat<T> {
        &self.u1
    }

    pub fn u2(&self) -> &CMat<T> {
        &self.u2
    }

    /// Clock eigen-angles `x_k = frac(p k / q)` in `[0, 1)`.
    pub fn clock_angles(&self) -> Vec<T> {
        (0..self.q)
            .map(|k| T::lit(((self.p as i128 * k as i128).rem_euclid(self.q as i128)) as f64 / self.q as f64))
            .collect()
    }

    /// `U1^a U2^b`, built entry-wise.
    pub fn word(&self, a: i64, b: i64) -> CMat<T> {
        let n = self.q;
        let shift = b.rem_euclid(n as i64) as usize;
        let mut out = CMat::zeros(n, n);
        for r in 0..n {
            out[(r, (r + shift) % n)] = clock_phase(self.p * a.rem_euclid(n as i64), n, r);
        }
        out
    }

    /// `||U1 U1* - 1||`, `||U2 U2* - 1||` and `||U2 U1 - rho U1 U2||` (Frobenius).
    pub fn defects(&self) -> [T; 3] {
        let id = CMat::identity(self.q);
        let rho = cis(T::TAU() * self.theta());
        let comm = &(&self.u2 * &self.u1) - &(&self.u1 * &self.u2).scale(rho);
        [
            (&(&self.u1 * &self.u1.adjoint()) - &id).frob_norm(),
            (&(&self.u2 * &self.u2.adjoint()) - &id).frob_norm(),
            comm.frob_norm(),
        ]
    }

    /// Evaluates a `torus(2)` element with `rho = exp(2 pi i p/q)`.
    pub fn represent<Q: ExactRational>(&self, a: &AlgebraElement<Q>) -> Result<CMat<T>, RepError> {
        let pres = a.presentation();
        if pres.family != Family::Torus || pres.m != 2 || pres.convention != PhaseConvention::Standard {
            return Err(RepError::NotTorus(pres.to_string()));
        }
        let theta = self.theta();
        let mut out = CMat::zeros(self.q, self.q);
        for (mono, c) in a.terms() {
            let coeff: Complex<T> = c.eval(theta);
            let (e1, e2) = (mono.exps()[0] as i64, mono.exps()[1] as i64);
            let shift = e2.rem_euclid(self.q as i64) as usize;
            for r in 0..self.q {
                let col = (r + shift) % self.q;
                out[(r, col)] = out[(r, col)] + coeff * clock_phase::<T>(self.p * e1.rem_euclid(self.q as i64), self.q, r);
            }
        }
        Ok(out)
    }
}

/// `exp(2 pi i (num * k mod q) / q)` with the residue taken exactly.
fn clock_phase<T: Real>(num: i64, q: usize, k: usize) -> Complex<T> {
    let r = (num as i128 * k as i128).rem_euclid(q as i128);
    cis(T::TAU() * T::lit(r as f64 / q as f64))
}

/// `tr(M) / dim`.
pub fn numeric_trace<T: Real>(m: &CMat<T>) -> Result<Complex<T>, crate::linalg::LinalgError> {
    if !m.is_square() {
        return Err(crate::linalg::LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    Ok(m.trace() / T::of_usize(m.rows()))
}

/// Piecewise-linear bump: ramp up on `[0, eps]`, flat on `[eps, theta]`,
/// ramp down on `[theta, theta + eps]`, zero elsewhere on the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RieffelParams<T> {
    pub epsilon: T,
}

impl<T: Real> RieffelParams<T> {
    pub fn new(epsilon: T, theta: T) -> Result<Self, RepError> {
        let max = theta.min(T::one() - theta);
        if !(epsilon > T::zero() && epsilon <= max) {
            return Err(RepError::InvalidEpsilon {
                eps: epsilon.to_f64().unwrap_or(f64::NAN),
                max: max.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { epsilon })
    }

    /// `epsilon = fraction * min(theta, 1 - theta)`.
    pub fn proportional(fraction: T, theta: T) -> Result<Self, RepError> {
        Self::new(fraction * theta.min(T::one() - theta), theta)
    }

    pub fn f(&self, x: T, theta: T) -> T {
        let eps = self.epsilon;
        let x = x - x.floor();
        if x <= eps {
            x / eps
        } else if x <= theta {
            T::one()
        } else if x <= theta + eps {
            T::one() - (x - theta) / eps
        } else {
            T::zero()
        }
    }

    pub fn g(&self, x: T, theta: T) -> T {
        let x = x - x.floor();
        if x < self.epsilon {
            let f = self.f(x, theta);
            (f - f * f).max(T::zero()).sqrt()
        } else {
            T::zero()
        }
    }
}

/// A Rieffel projection together with its self-test residuals.
#[derive(Debug, Clone)]
pub struct RieffelProjection<T> {
    pub matrix: CMat<T>,
    /// `||P^2 - P||_F`.
    pub idempotent_residual: T,
    /// `||P* - P||_F`.
    pub adjoint_residual: T,
    /// `|tr(P)/q - p/q|`.
    pub trace_error: T,
}

/// `P = U2* g(U1) + f(U1) + g(U1) U2`.
pub fn rieffel_projection<T: Real>(rep: &Rep<T>, params: &RieffelParams<T>) -> Result<RieffelProjection<T>, RepError> {
    let theta = rep.theta();
    let params = RieffelParams::new(params.epsilon, theta)?;
    let angles = rep.clock_angles();
    let f = CMat::from_diag(&angles.iter().map(|x| Complex::new(params.f(*x, theta), T::zero())).collect::<Vec<_>>());
    let g = CMat::from_diag(&angles.iter().map(|x| Complex::new(params.g(*x, theta), T::zero())).collect::<Vec<_>>());
    let gu2 = &g * rep.u2();
    let p = &(&rep.u2().adjoint() * &g) + &(&f + &gu2);
    let idempotent_residual = (&(&p * &p) - &p).frob_norm();
    let adjoint_residual = (&p.adjoint() - &p).frob_norm();
    let trace_error = (p.trace().re / T::of_usize(rep.q()) - theta).abs();
    Ok(RieffelProjection { matrix: p, idempotent_residual, adjoint_residual, trace_error })
}
