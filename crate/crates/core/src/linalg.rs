//! Small dense complex linear algebra, generic over the float type.

use std::fmt::{Debug, Display};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Float types the numeric layer runs on (`f32`, `f64`).
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("representable size")
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
}

pub fn cis<T: Real>(angle: T) -> Complex<T> {
    Complex::from_polar(T::one(), angle)
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, Complex::new(T::one(), T::zero()))
    }

    pub fn scalar(n: usize, c: Complex<T>) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(d: &[Complex<T>]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex<T>>>) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Shape("ragged rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    fn require_square(&self) -> Result<usize, LinalgError> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols })
        }
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                let b_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * *b;
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Result<Self, LinalgError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(LinalgError::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| *v * c).collect() }
    }

    pub fn scale_re(&self, c: T) -> Self {
        self.scale(Complex::new(c, T::zero()))
    }

    /// `self + c * 1`.
    pub fn add_scalar(&self, c: Complex<T>) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] = out[(i, i)] + c;
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn frob_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr()).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc.max(v.norm()))
    }

    /// `self (x) rhs` with `rhs` as the fast index.
    pub fn kron(&self, rhs: &Self) -> Self {
        Self::from_fn(self.rows * rhs.rows, self.cols * rhs.cols, |r, c| {
            self[(r / rhs.rows, c / rhs.cols)] * rhs[(r % rhs.rows, c % rhs.cols)]
        })
    }

    pub fn direct_sum(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows + rhs.rows, self.cols + rhs.cols);
        out.set_block(0, 0, self);
        out.set_block(self.rows, self.cols, rhs);
        out
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                self[(r0 + r, c0 + c)] = b[(r, c)];
            }
        }
    }

    pub fn powi(&self, k: u32) -> Result<Self, LinalgError> {
        let n = self.require_square()?;
        let mut acc = Self::identity(n);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.try_mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.try_mul(&base)?;
            }
        }
        Ok(acc)
    }

    pub fn lu(&self) -> Result<Lu<T>, LinalgError> {
        let n = self.require_square()?;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        let scale = self.max_abs();
        let tiny = scale * T::epsilon() * T::of_usize(n.max(1));
        for k in 0..n {
            let (piv, best) = (k..n)
                .map(|r| (r, a[(r, k)].norm()))
                .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= tiny || best == T::zero() {
                return Err(LinalgError::Singular);
            }
            if piv != k {
                for c in 0..n {
                    a.data.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let d = a[(k, k)];
            for r in k + 1..n {
                let f = a[(r, k)] / d;
                a[(r, k)] = f;
                if f.is_zero() {
                    continue;
                }
                for c in k + 1..n {
                    let v = a[(k, c)];
                    a[(r, c)] = a[(r, c)] - f * v;
                }
            }
        }
        Ok(Lu { lu: a, perm, sign })
    }

    pub fn inverse(&self) -> Result<Self, LinalgError> {
        let n = self.require_square()?;
        self.lu()?.solve(&Self::identity(n))
    }

    pub fn det(&self) -> Result<Complex<T>, LinalgError> {
        match self.lu() {
            Ok(lu) => Ok(lu.det()),
            Err(LinalgError::Singular) => Ok(Complex::zero()),
            Err(e) => Err(e),
        }
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
    /// rotations. Eigenvalues ascend; column `j` of the frame is the `j`-th
    /// eigenvector.
    pub fn hermitian_eigen(&self) -> Result<HermitianEigen<T>, LinalgError> {
        let n = self.require_square()?;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let total = a.frob_norm().max(T::min_positive_value());
        let tol = T::epsilon() * total;
        for _sweep in 0..100 {
            let off = (0..n)
                .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
                .fold(T::zero(), |acc, (i, j)| acc + a[(i, j)].norm_sqr())
                .sqrt();
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    let mag = apq.norm();
                    if mag <= tol * T::lit(1e-3) {
                        continue;
                    }
                    let phase = cis(-apq.arg());
                    let tau = (a[(q, q)].re - a[(p, p)].re) / (T::lit(2.0) * mag);
                    let sgn = if tau >= T::zero() { T::one() } else { -T::one() };
                    let t = sgn / (tau.abs() + (T::one() + tau * tau).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    let j_pp = Complex::new(c, T::zero());
                    let j_pq = Complex::new(s, T::zero());
                    let j_qp = phase * (-s);
                    let j_qq = phase * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = akp * j_pp + akq * j_qp;
                        a[(k, q)] = akp * j_pq + akq * j_qq;
                        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                        v[(k, p)] = vkp * j_pp + vkq * j_qp;
                        v[(k, q)] = vkp * j_pq + vkq * j_qq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = j_pp * apk + j_qp.conj() * aqk;
                        a[(q, k)] = j_pq * apk + j_qq.conj() * aqk;
                    }
                    a[(p, q)] = Complex::zero();
                    a[(q, p)] = Complex::zero();
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = Self::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok(HermitianEigen { values, vectors })
    }

    /// Smallest singular value, from the spectrum of `A* A`.
    pub fn min_singular_value(&self) -> Result<T, LinalgError> {
        self.require_square()?;
        let gram = self.adjoint().try_mul(self)?;
        let eig = gram.hermitian_eigen()?;
        Ok(eig.values.first().copied().unwrap_or(T::zero()).max(T::zero()).sqrt())
    }

    pub fn cast<S: Real>(&self) -> CMat<S> {
        let conv = |x: T| S::from_f64(x.to_f64().unwrap_or(f64::NAN)).expect("finite");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| Complex::new(conv(z.re), conv(z.im))).collect(),
        }
    }

    pub fn to_json(&self) -> MatrixJson {
        let part = |f: fn(&Complex<T>) -> T| -> Vec<Vec<f64>> {
            (0..self.rows)
                .map(|r| (0..self.cols).map(|c| f(&self[(r, c)]).to_f64().unwrap_or(f64::NAN)).collect())
                .collect()
        };
        MatrixJson { dim: self.rows, cols: (!self.is_square()).then_some(self.cols), re: part(|z| z.re), im: part(|z| z.im) }
    }

    pub fn from_json(j: &MatrixJson) -> Result<Self, LinalgError> {
        let cols = j.cols.unwrap_or(j.dim);
        if j.re.len() != j.dim || j.im.len() != j.dim || j.re.iter().chain(&j.im).any(|r| r.len() != cols) {
            return Err(LinalgError::Shape("json matrix dimensions".into()));
        }
        Ok(Self::from_fn(j.dim, cols, |r, c| {
            Complex::new(T::lit(j.re[r][c]), T::lit(j.im[r][c]))
        }))
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Real> Mul for &CMat<T> {
    type Output = CMat<T>;
    fn mul(self, rhs: Self) -> CMat<T> {
        self.try_mul(rhs).expect("matrix product shapes")
    }
}

impl<T: Real> Add for &CMat<T> {
    type Output = CMat<T>;
    fn add(self, rhs: Self) -> CMat<T> {
        self.try_add(rhs).expect("matrix sum shapes")
    }
}

impl<T: Real> Sub for &CMat<T> {
    type Output = CMat<T>;
    fn sub(self, rhs: Self) -> CMat<T> {
        self.try_sub(rhs).expect("matrix difference shapes")
    }
}

/// `{dim, re, im}`; `cols` is present only for rectangular matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: CMat<T>,
    perm: Vec<usize>,
    sign: T,
}

impl<T: Real> Lu<T> {
    pub fn solve(&self, b: &CMat<T>) -> Result<CMat<T>, LinalgError> {
        let n = self.lu.rows;
        if b.rows != n {
            return Err(LinalgError::Shape(format!("solve with {} rows against {n}", b.rows)));
        }
        let m = b.cols;
        let mut x = CMat::from_fn(n, m, |r, c| b[(self.perm[r], c)]);
        for c in 0..m {
            for r in 0..n {
                let mut acc = x[(r, c)];
                for k in 0..r {
                    acc = acc - self.lu[(r, k)] * x[(k, c)];
                }
                x[(r, c)] = acc;
            }
            for r in (0..n).rev() {
                let mut acc = x[(r, c)];
                for k in r + 1..n {
                    acc = acc - self.lu[(r, k)] * x[(k, c)];
                }
                x[(r, c)] = acc / self.lu[(r, r)];
            }
        }
        Ok(x)
    }

    pub fn det(&self) -> Complex<T> {
        (0..self.lu.rows).fold(Complex::new(self.sign, T::zero()), |acc, i| acc * self.lu[(i, i)])
    }
}

#[derive(Debug, Clone)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: CMat<T>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn arb_mat(n: usize) -> impl Strategy<Value = CMat<f64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
            .prop_map(move |v| CMat::from_fn(n, n, |r, col| c(v[r * n + col].0, v[r * n + col].1)))
    }

    #[test]
    fn inverse_of_known_matrix() {
        let a = CMat::from_rows(vec![vec![c(2.0, 0.0), c(1.0, 1.0)], vec![c(0.0, -1.0), c(3.0, 0.0)]]).unwrap();
        let inv = a.inverse().unwrap();
        assert!((&(&a * &inv) - &CMat::identity(2)).frob_norm() < 1e-14);
        // det = 6 - (1+i)(-i) = 6 + i - 1 = 5 + i
        assert!((a.det().unwrap() - c(5.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = CMat::from_rows(vec![vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]).unwrap();
        assert_eq!(a.inverse().unwrap_err(), LinalgError::Singular);
        assert_eq!(a.det().unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn pauli_y_spectrum() {
        let y = CMat::from_rows(vec![vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]).unwrap();
        let e = y.hermitian_eigen().unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kron_and_direct_sum_shapes() {
        let a = CMat::<f64>::identity(2);
        let b = CMat::scalar(3, c(2.0, 0.0));
        assert_eq!(a.kron(&b).trace(), c(12.0, 0.0));
        let s = a.direct_sum(&b);
        assert_eq!((s.rows(), s.trace()), (5, c(8.0, 0.0)));
    }

    #[test]
    fn json_round_trip() {
        let a = CMat::from_rows(vec![vec![c(1.0, -2.0), c(0.5, 0.25)]]).unwrap();
        assert_eq!(CMat::from_json(&a.to_json()).unwrap(), a);
        let sq = CMat::<f64>::identity(3);
        assert!(serde_json::to_string(&sq.to_json()).unwrap().starts_with("{\"dim\":3,\"re\""));
    }

    #[test]
    fn works_in_single_precision() {
        let a = CMat::<f32>::from_fn(3, 3, |r, col| Complex::new((r + 2 * col) as f32, if r == col { 4.0 } else { 0.0 }));
        let inv = a.inverse().unwrap();
        assert!((&(&a * &inv) - &CMat::identity(3)).frob_norm() < 1e-5);
    }

    proptest! {
        #[test]
        fn hermitian_eigen_reconstructs(a in arb_mat(6)) {
            let h = &a + &a.adjoint();
            let e = h.hermitian_eigen().unwrap();
            let d = CMat::from_diag(&e.values.iter().map(|v| c(*v, 0.0)).collect::<Vec<_>>());
            let rebuilt = &(&e.vectors * &d) * &e.vectors.adjoint();
            prop_assert!((&rebuilt - &h).frob_norm() < 1e-11);
            prop_assert!((&(&e.vectors.adjoint() * &e.vectors) - &CMat::identity(6)).frob_norm() < 1e-12);
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn lu_solve_and_det(a in arb_mat(5), b in arb_mat(5)) {
            let m = a.add_scalar(c(3.0, 0.0));
            let x = m.lu().unwrap().solve(&b).unwrap();
            prop_assert!((&(&m * &x) - &b).frob_norm() < 1e-11);
            let dprod = m.det().unwrap() * b.det().unwrap();
            let dmb = (&m * &b).det().unwrap();
            prop_assert!((dprod - dmb).norm() <= 1e-9 * (1.0 + dmb.norm()));
        }

        #[test]
        fn unitary_has_unit_singular_values(a in arb_mat(4)) {
            let h = &a + &a.adjoint();
            let u = h.hermitian_eigen().unwrap().vectors;
            prop_assert!((u.min_singular_value().unwrap() - 1.0).abs() < 1e-7);
        }
    }
}
