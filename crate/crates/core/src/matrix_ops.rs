//! Matrices over the twisted algebras and the exact charge-one instanton
//! computation: the projection `e`, trivializations `psi1`, `psi2`, the
//! clutching matrix `h` and the factorization of `h^-1`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra_core::{AlgebraElement, AlgebraError, GeneratorMap, PhaseConvention, Presentation};
use crate::phase_ring::ExactRational;
use crate::report::{Check, Report};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("unknown builtin '{0}'")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A rectangular matrix of elements over one presentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgMatrix<Q> {
    pres: Presentation,
    rows: usize,
    cols: usize,
    entries: Vec<AlgebraElement<Q>>,
}

/// `{rows, cols, entries}` with entries in the expression grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgMatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<String>>,
}

impl<Q: ExactRational> AlgMatrix<Q> {
    pub fn new(pres: Presentation, rows: usize, cols: usize, entries: Vec<AlgebraElement<Q>>) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(MatrixError::Shape(format!("{} entries for {rows}x{cols}", entries.len())));
        }
        if let Some(bad) = entries.iter().find(|e| *e.presentation() != pres) {
            return Err(AlgebraError::PresentationMismatch(bad.presentation().to_string(), pres.to_string()).into());
        }
        Ok(Self { pres, rows, cols, entries })
    }

    /// Parses a row-major table of expressions.
    pub fn parse(pres: Presentation, table: &[&[&str]]) -> Result<Self, MatrixError> {
        let rows = table.len();
        let cols = table.first().map_or(0, |r| r.len());
        if table.iter().any(|r| r.len() != cols) {
            return Err(MatrixError::Shape("ragged rows".into()));
        }
        let entries = table
            .iter()
            .flat_map(|r| r.iter())
            .map(|s| AlgebraElement::parse(s, pres))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(pres, rows, cols, entries)
    }

    pub fn identity(pres: Presentation, n: usize) -> Self {
        let entries = (0..n * n)
            .map(|k| if k / n == k % n { AlgebraElement::one(pres) } else { AlgebraElement::zero(pres) })
            .collect();
        Self { pres, rows: n, cols: n, entries }
    }

    pub fn zeros(pres: Presentation, rows: usize, cols: usize) -> Self {
        Self { pres, rows, cols, entries: vec![AlgebraElement::zero(pres); rows * cols] }
    }

    pub fn presentation(&self) -> &Presentation {
        &self.pres
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &AlgebraElement<Q> {
        &self.entries[r * self.cols + c]
    }

    pub fn entries(&self) -> &[AlgebraElement<Q>] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(AlgebraElement::is_zero)
    }

    /// Total number of nonzero terms over all entries.
    pub fn nonzero_terms(&self) -> usize {
        self.entries.iter().map(AlgebraElement::num_terms).sum()
    }

    fn same_pres(&self, rhs: &Self) -> Result<(), MatrixError> {
        if self.pres == rhs.pres {
            Ok(())
        } else {
            Err(AlgebraError::PresentationMismatch(self.pres.to_string(), rhs.pres.to_string()).into())
        }
    }

    pub fn mat_mul(&self, rhs: &Self) -> Result<Self, MatrixError> {
        self.same_pres(rhs)?;
        if self.cols != rhs.rows {
            return Err(MatrixError::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * rhs.cols);
        for r in 0..self.rows {
            for c in 0..rhs.cols {
                let mut acc = AlgebraElement::zero(self.pres);
                for k in 0..self.cols {
                    let (a, b) = (self.get(r, k), rhs.get(k, c));
                    if !a.is_zero() && !b.is_zero() {
                        acc = &acc + &(a * b);
                    }
                }
                entries.push(acc);
            }
        }
        Ok(Self { pres: self.pres, rows: self.rows, cols: rhs.cols, entries })
    }

    fn zip(&self, rhs: &Self, neg: bool) -> Result<Self, MatrixError> {
        self.same_pres(rhs)?;
        if (self.rows, self.cols) != (rhs.rows, rhs.cols) {
            return Err(MatrixError::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| if neg { a - b } else { a + b })
            .collect();
        Ok(Self { pres: self.pres, rows: self.rows, cols: self.cols, entries })
    }

    pub fn mat_add(&self, rhs: &Self) -> Result<Self, MatrixError> {
        self.zip(rhs, false)
    }

    pub fn mat_sub(&self, rhs: &Self) -> Result<Self, MatrixError> {
        self.zip(rhs, true)
    }

    /// Conjugate transpose with the algebra star on entries.
    pub fn adjoint(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for r in 0..self.cols {
            for c in 0..self.rows {
                entries.push(self.get(c, r).adjoint());
            }
        }
        Self { pres: self.pres, rows: self.cols, cols: self.rows, entries }
    }

    pub fn substitute(&self, map: &GeneratorMap<Q>, dst: Presentation) -> Result<Self, MatrixError> {
        let entries = self.entries.iter().map(|e| e.substitute(map, dst)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { pres: dst, rows: self.rows, cols: self.cols, entries })
    }

    pub fn alg_trace(&self) -> Result<AlgebraElement<Q>, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare(self.rows, self.cols));
        }
        Ok((0..self.rows).fold(AlgebraElement::zero(self.pres), |acc, i| &acc + self.get(i, i)))
    }

    /// Exact residuals of `A^2 - A` and `A* - A`.
    pub fn is_projection(&self) -> Result<Report, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare(self.rows, self.cols));
        }
        let mut report = Report::new();
        report.push(Check::exact("idempotent", self.mat_mul(self)?.mat_sub(self)?.nonzero_terms()));
        report.push(Check::exact("self_adjoint", self.adjoint().mat_sub(self)?.nonzero_terms()));
        Ok(report)
    }

    pub fn to_json(&self) -> AlgMatrixJson {
        AlgMatrixJson {
            rows: self.rows,
            cols: self.cols,
            entries: (0..self.rows).map(|r| (0..self.cols).map(|c| self.get(r, c).to_string()).collect()).collect(),
        }
    }

    pub fn from_json(json: &AlgMatrixJson, pres: Presentation) -> Result<Self, MatrixError> {
        if json.entries.len() != json.rows || json.entries.iter().any(|r| r.len() != json.cols) {
            return Err(MatrixError::Shape("json entries do not match rows/cols".into()));
        }
        let table: Vec<Vec<&str>> = json.entries.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
        let rows: Vec<&[&str]> = table.iter().map(Vec::as_slice).collect();
        Self::parse(pres, &rows)
    }
}

impl<Q: ExactRational> fmt::Display for AlgMatrix<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Named matrices of the instanton computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// 4x4 projection over `even_sphere(2)`.
    E,
    /// 2x4 trivialization over `ball(2, with_u)`; `u` stands for `(1+y)^-1`.
    Psi1,
    Psi1Inv,
    Psi2,
    Psi2Inv,
    /// 2x2 clutching matrix over `odd_sphere(2)`.
    HExpected,
    HInverse,
    ZCorrected,
    /// Product of the five factors of `h^-1`.
    FactorizationChain,
}

impl Builtin {
    pub const ALL: [Builtin; 9] = [
        Builtin::E,
        Builtin::Psi1,
        Builtin::Psi1Inv,
        Builtin::Psi2,
        Builtin::Psi2Inv,
        Builtin::HExpected,
        Builtin::HInverse,
        Builtin::ZCorrected,
        Builtin::FactorizationChain,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::E => "e",
            Builtin::Psi1 => "psi1",
            Builtin::Psi1Inv => "psi1_inv",
            Builtin::Psi2 => "psi2",
            Builtin::Psi2Inv => "psi2_inv",
            Builtin::HExpected => "h_expected",
            Builtin::HInverse => "h_inverse",
            Builtin::ZCorrected => "z_corrected",
            Builtin::FactorizationChain => "factorization_chain",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, MatrixError> {
        Self::ALL.into_iter().find(|b| b.name() == name).ok_or_else(|| MatrixError::UnknownBuiltin(name.into()))
    }

    pub fn presentation(&self, convention: PhaseConvention) -> Presentation {
        let p = match self {
            Builtin::E => Presentation::even_sphere(2),
            Builtin::Psi1 | Builtin::Psi1Inv | Builtin::Psi2 | Builtin::Psi2Inv => Presentation::ball(2, true),
            _ => Presentation::odd_sphere(2),
        };
        p.with_convention(convention)
    }
}

const E_TABLE: [[&str; 4]; 4] = [
    ["1/2*(1+x)", "0", "1/2*z2", "1/2*z1"],
    ["0", "1/2*(1+x)", "-1/2*rho*z1'", "1/2*z2'"],
    ["1/2*z2'", "-1/2*rho^-1*z1", "1/2*(1-x)", "0"],
    ["1/2*z1'", "1/2*z2", "0", "1/2*(1-x)"],
];
const PSI1: [[&str; 4]; 2] = [["1", "0", "u*w2", "u*w1"], ["0", "1", "-rho*u*w1'", "u*w2'"]];
const PSI1_INV: [[&str; 2]; 4] = [
    ["1/2*(1+y)", "0"],
    ["0", "1/2*(1+y)"],
    ["1/2*w2'", "-1/2*rho^-1*w1"],
    ["1/2*w1'", "1/2*w2"],
];
const PSI2: [[&str; 4]; 2] = [["u*w2'", "-rho^-1*u*w1", "1", "0"], ["u*w1'", "u*w2", "0", "1"]];
const PSI2_INV: [[&str; 2]; 4] = [
    ["1/2*w2", "1/2*w1"],
    ["-1/2*rho*w1'", "1/2*w2'"],
    ["1/2*(1+y)", "0"],
    ["0", "1/2*(1+y)"],
];
const H_EXPECTED: [[&str; 2]; 2] = [["z2'", "-rho^-1*z1"], ["z1'", "z2"]];
const H_INVERSE: [[&str; 2]; 2] = [["z2", "z1"], ["-rho*z1'", "z2'"]];
const Z_CORRECTED: [[&str; 2]; 2] = [["z1", "rho^-1/2*z2"], ["-rho^-1/2*z2'", "z1'"]];
const FACTORS: [[[&str; 2]; 2]; 5] = [
    [["1", "0"], ["0", "-rho"]],
    [["1", "0"], ["0", "rho^-1/2"]],
    Z_CORRECTED,
    [["1", "0"], ["0", "rho^1/2"]],
    [["0", "1"], ["1", "0"]],
];

fn table<'a, const C: usize>(rows: &'a [[&'static str; C]]) -> Vec<&'a [&'static str]> {
    rows.iter().map(|r| r.as_slice()).collect()
}

/// The named matrix under the given phase convention.
pub fn builtin_with<Q: ExactRational>(b: Builtin, convention: PhaseConvention) -> AlgMatrix<Q> {
    let pres = b.presentation(convention);
    let parsed = match b {
        Builtin::E => AlgMatrix::parse(pres, &table(&E_TABLE)),
        Builtin::Psi1 => AlgMatrix::parse(pres, &table(&PSI1)),
        Builtin::Psi1Inv => AlgMatrix::parse(pres, &table(&PSI1_INV)),
        Builtin::Psi2 => AlgMatrix::parse(pres, &table(&PSI2)),
        Builtin::Psi2Inv => AlgMatrix::parse(pres, &table(&PSI2_INV)),
        Builtin::HExpected => AlgMatrix::parse(pres, &table(&H_EXPECTED)),
        Builtin::HInverse => AlgMatrix::parse(pres, &table(&H_INVERSE)),
        Builtin::ZCorrected => AlgMatrix::parse(pres, &table(&Z_CORRECTED)),
        Builtin::FactorizationChain => factorization_factors_with(convention)
            .into_iter()
            .try_fold(AlgMatrix::identity(pres, 2), |acc, f| acc.mat_mul(&f)),
    };
    parsed.expect("builtin tables are well formed")
}

pub fn builtin<Q: ExactRational>(name: &str) -> Result<AlgMatrix<Q>, MatrixError> {
    Ok(builtin_with(Builtin::from_name(name)?, PhaseConvention::Standard))
}

/// The five factors of `h^-1`, left to right.
pub fn factorization_factors_with<Q: ExactRational>(convention: PhaseConvention) -> Vec<AlgMatrix<Q>> {
    let pres = Presentation::odd_sphere(2).with_convention(convention);
    FACTORS.iter().map(|f| AlgMatrix::parse(pres, &table(f)).expect("factor table")).collect()
}

fn gen<Q: ExactRational>(pres: Presentation, text: &str) -> AlgebraElement<Q> {
    AlgebraElement::parse(text, pres).expect("generator image")
}

/// `e` pulled back to a ball: `z_i -> w_i`, `x -> sign * y`.
pub fn pullback_map<Q: ExactRational>(convention: PhaseConvention, sign: i32) -> GeneratorMap<Q> {
    let ball = Presentation::ball(2, true).with_convention(convention);
    let mut map = GeneratorMap::new();
    map.insert("z1".into(), gen(ball, "w1"));
    map.insert("z2".into(), gen(ball, "w2"));
    map.insert("x".into(), gen(ball, if sign >= 0 { "y" } else { "-y" }));
    map
}

/// The quotient `j_k`: `w_i -> z_i`, `y -> 0`, `u -> 1`.
pub fn boundary_map<Q: ExactRational>(convention: PhaseConvention) -> GeneratorMap<Q> {
    let s3 = Presentation::odd_sphere(2).with_convention(convention);
    let mut map = GeneratorMap::new();
    map.insert("w1".into(), gen(s3, "z1"));
    map.insert("w2".into(), gen(s3, "z2"));
    map.insert("y".into(), AlgebraElement::zero(s3));
    map.insert("u".into(), AlgebraElement::one(s3));
    map
}

/// `i_1(e)` (sign `+1`) or `i_2(e)` (sign `-1`).
pub fn pulled_back_e<Q: ExactRational>(convention: PhaseConvention, sign: i32) -> AlgMatrix<Q> {
    let ball = Presentation::ball(2, true).with_convention(convention);
    builtin_with::<Q>(Builtin::E, convention)
        .substitute(&pullback_map(convention, sign), ball)
        .expect("pullback substitution")
}

/// `j_1(psi1^-1)`.
pub fn j1_psi1_inv<Q: ExactRational>(convention: PhaseConvention) -> AlgMatrix<Q> {
    let s3 = Presentation::odd_sphere(2).with_convention(convention);
    builtin_with::<Q>(Builtin::Psi1Inv, convention)
        .substitute(&boundary_map(convention), s3)
        .expect("boundary substitution")
}

/// `h = j_2(psi2) j_1(psi1)^-1`.
pub fn compute_h_with<Q: ExactRational>(convention: PhaseConvention) -> AlgMatrix<Q> {
    let s3 = Presentation::odd_sphere(2).with_convention(convention);
    let j2_psi2 = builtin_with::<Q>(Builtin::Psi2, convention)
        .substitute(&boundary_map(convention), s3)
        .expect("boundary substitution");
    j2_psi2.mat_mul(&j1_psi1_inv(convention)).expect("2x4 times 4x2")
}

pub fn compute_h<Q: ExactRational>() -> AlgMatrix<Q> {
    compute_h_with(PhaseConvention::Standard)
}

fn diff_check<Q: ExactRational>(name: &str, a: &AlgMatrix<Q>, b: &AlgMatrix<Q>) -> Check {
    match a.mat_sub(b) {
        Ok(d) => Check::exact(name, d.nonzero_terms()),
        Err(_) => Check::flag(name, false),
    }
}

/// Five-factor product equals `h^-1`, and `h h^-1 = 1`, `h^-1 h = 1`, `Z Z* = Z* Z = 1`.
pub fn verify_factorization<Q: ExactRational>() -> Report {
    let conv = PhaseConvention::Standard;
    let s3 = Presentation::odd_sphere(2);
    let one = AlgMatrix::<Q>::identity(s3, 2);
    let h = builtin_with::<Q>(Builtin::HExpected, conv);
    let h_inv = builtin_with::<Q>(Builtin::HInverse, conv);
    let z = builtin_with::<Q>(Builtin::ZCorrected, conv);
    let chain = builtin_with::<Q>(Builtin::FactorizationChain, conv);
    let mut r = Report::new();
    r.push(diff_check("factorization_equals_h_inverse", &chain, &h_inv));
    r.push(diff_check("h_times_h_inverse", &h.mat_mul(&h_inv).expect("2x2"), &one));
    r.push(diff_check("h_inverse_times_h", &h_inv.mat_mul(&h).expect("2x2"), &one));
    r.push(diff_check("z_corrected_unitary_left", &z.mat_mul(&z.adjoint()).expect("2x2"), &one));
    r.push(diff_check("z_corrected_unitary_right", &z.adjoint().mat_mul(&z).expect("2x2"), &one));
    r
}

/// The full exact instanton suite, including the swapped-convention control.
pub fn verify_instanton<Q: ExactRational>() -> Report {
    let conv = PhaseConvention::Standard;
    let ball = Presentation::ball(2, true);
    let s4 = Presentation::even_sphere(2);
    let e = builtin_with::<Q>(Builtin::E, conv);
    let mut r = e.is_projection().expect("square").prefixed("e");
    let trace = e.alg_trace().expect("square");
    r.push(Check::exact("e/trace_is_2", (&trace - &AlgebraElement::from_int(s4, 2)).num_terms()));

    let one2 = AlgMatrix::<Q>::identity(ball, 2);
    let psi1 = builtin_with::<Q>(Builtin::Psi1, conv);
    let psi1_inv = builtin_with::<Q>(Builtin::Psi1Inv, conv);
    let psi2 = builtin_with::<Q>(Builtin::Psi2, conv);
    let psi2_inv = builtin_with::<Q>(Builtin::Psi2Inv, conv);
    r.push(diff_check("psi1_psi1_inv", &psi1.mat_mul(&psi1_inv).expect("shapes"), &one2));
    r.push(diff_check("psi2_psi2_inv", &psi2.mat_mul(&psi2_inv).expect("shapes"), &one2));
    r.push(diff_check("psi1_inv_psi1", &psi1_inv.mat_mul(&psi1).expect("shapes"), &pulled_back_e(conv, 1)));
    r.push(diff_check("psi2_inv_psi2", &psi2_inv.mat_mul(&psi2).expect("shapes"), &pulled_back_e(conv, -1)));
    r.push(diff_check("compute_h", &compute_h_with::<Q>(conv), &builtin_with(Builtin::HExpected, conv)));
    r.extend(verify_factorization::<Q>());

    let sw = PhaseConvention::Swapped;
    let control = |name: &str, defect: usize| Check::new(format!("negative_control/{name}"), defect > 0, Some(defect as f64));
    let e_sw = builtin_with::<Q>(Builtin::E, sw);
    r.push(control("e_not_idempotent_when_swapped", e_sw.mat_mul(&e_sw).expect("4x4").mat_sub(&e_sw).expect("4x4").nonzero_terms()));
    let h_sw = compute_h_with::<Q>(sw).mat_mul(&builtin_with(Builtin::HInverse, sw)).expect("2x2");
    let one_sw = AlgMatrix::<Q>::identity(Presentation::odd_sphere(2).with_convention(sw), 2);
    r.push(control("h_not_invertible_when_swapped", h_sw.mat_sub(&one_sw).expect("2x2").nonzero_terms()));
    let psi_sw = builtin_with::<Q>(Builtin::Psi1, sw).mat_mul(&builtin_with(Builtin::Psi1Inv, sw)).expect("2x2");
    let one_ball = AlgMatrix::<Q>::identity(Presentation::ball(2, true).with_convention(sw), 2);
    r.push(control("psi1_not_invertible_when_swapped", psi_sw.mat_sub(&one_ball).expect("2x2").nonzero_terms()));
    r
}

/// Images of the even-sphere relations under `z_i -> (w_i, w_i)`, `x -> (y, -y)`.
pub fn verify_pullback<Q: ExactRational>() -> Report {
    let s4 = Presentation::even_sphere(2);
    let ball = Presentation::ball(2, true);
    let mut r = Report::new();
    for (label, sign) in [("first_summand", 1), ("second_summand", -1)] {
        let map = pullback_map::<Q>(PhaseConvention::Standard, sign);
        let sub = crate::algebra_core::hom_check(&map, s4, ball).expect("complete map");
        r.extend(sub.prefixed(label));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::{BigRational, Rational64};
    use proptest::prelude::*;

    type M = AlgMatrix<BigRational>;

    fn el(text: &str, pres: Presentation) -> AlgebraElement<BigRational> {
        AlgebraElement::parse(text, pres).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let e: M = builtin("e").unwrap();
        let one = M::identity(*e.presentation(), 4);
        assert_eq!(one.mat_mul(&e).unwrap(), e);
        assert!(M::identity(Presentation::torus(2), 2).is_projection().unwrap().passed());
    }

    #[test]
    fn e_is_projection_of_trace_two() {
        let e: M = builtin("e").unwrap();
        assert_eq!(e.get(0, 0), &el("1/2 + 1/2*x", Presentation::even_sphere(2)));
        assert!(e.is_projection().unwrap().passed());
        assert_eq!(e.alg_trace().unwrap(), el("2", Presentation::even_sphere(2)));
        assert_eq!(M::identity(Presentation::even_sphere(2), 4).alg_trace().unwrap().to_string(), "4");
    }

    #[test]
    fn swapped_convention_breaks_e() {
        let e: M = builtin_with(Builtin::E, PhaseConvention::Swapped);
        assert!(!e.is_projection().unwrap().get("idempotent").unwrap().pass);
    }

    #[test]
    fn trivializations() {
        let ball = Presentation::ball(2, true);
        let psi1: M = builtin("psi1").unwrap();
        let psi1_inv: M = builtin("psi1_inv").unwrap();
        assert_eq!(psi1.mat_mul(&psi1_inv).unwrap(), M::identity(ball, 2));
        // Independent expansion of e under x -> y, entered by hand.
        let i1_e = M::parse(
            ball,
            &[
                &["1/2*(1+y)", "0", "1/2*w2", "1/2*w1"],
                &["0", "1/2*(1+y)", "-1/2*rho*w1'", "1/2*w2'"],
                &["1/2*w2'", "-1/2*rho^-1*w1", "1/2*(1-y)", "0"],
                &["1/2*w1'", "1/2*w2", "0", "1/2*(1-y)"],
            ],
        )
        .unwrap();
        assert_eq!(pulled_back_e::<BigRational>(PhaseConvention::Standard, 1), i1_e);
        assert_eq!(psi1_inv.mat_mul(&psi1).unwrap(), i1_e);
    }

    #[test]
    fn h_from_trivializations() {
        let s3 = Presentation::odd_sphere(2);
        let expected =
            M::parse(s3, &[&["1/2", "0"], &["0", "1/2"], &["1/2*z2'", "-1/2*rho^-1*z1"], &["1/2*z1'", "1/2*z2"]]).unwrap();
        assert_eq!(j1_psi1_inv::<BigRational>(PhaseConvention::Standard), expected);
        let h: M = compute_h();
        assert_eq!(h, builtin("h_expected").unwrap());
        assert_eq!(h.alg_trace().unwrap(), el("z2 + z2'", s3));
        // The formal product never reorders generators, so it reads the same
        // under the swapped convention; what breaks there is invertibility.
        let sw = PhaseConvention::Swapped;
        let h_sw: M = compute_h_with(sw);
        assert_eq!(h_sw, builtin_with(Builtin::HExpected, sw));
        let prod = h_sw.mat_mul(&builtin_with(Builtin::HInverse, sw)).unwrap();
        assert_ne!(prod, M::identity(*h_sw.presentation(), 2));
    }

    #[test]
    fn factorization() {
        let r = verify_factorization::<BigRational>();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        let chain: M = builtin("factorization_chain").unwrap();
        assert_eq!(chain.to_string(), "[z2, z1]\n[-rho * z1', z2']\n");
    }

    #[test]
    fn suites_pass() {
        let r = verify_instanton::<BigRational>();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        assert!(verify_pullback::<BigRational>().passed());
        // Same exact suite over 64-bit rationals.
        assert!(verify_instanton::<Rational64>().passed());
    }

    #[test]
    fn errors() {
        let s3 = Presentation::odd_sphere(2);
        let a = M::identity(s3, 2);
        let b = M::zeros(s3, 3, 1);
        assert!(matches!(a.mat_mul(&b), Err(MatrixError::Shape(_))));
        assert!(matches!(b.is_projection(), Err(MatrixError::NotSquare(3, 1))));
        let c = M::identity(Presentation::torus(2), 2);
        assert!(matches!(a.mat_mul(&c), Err(MatrixError::Algebra(AlgebraError::PresentationMismatch(..)))));
        assert!(matches!(builtin::<BigRational>("f"), Err(MatrixError::UnknownBuiltin(_))));
    }

    #[test]
    fn json_round_trip() {
        let e: M = builtin("e").unwrap();
        let json = serde_json::to_value(e.to_json()).unwrap();
        assert_eq!(json["rows"], 4);
        assert_eq!(json["entries"][0][0], "1/2 + 1/2 * x");
        let back = M::from_json(&serde_json::from_value(json).unwrap(), Presentation::even_sphere(2)).unwrap();
        assert_eq!(back, e);
    }

    fn arb_matrix(pres: Presentation, rows: usize, cols: usize) -> impl Strategy<Value = M> {
        let atoms = ["0", "1", "z1", "z2", "z1'", "z2'", "rho*z1*z2", "z1*z2'", "-i*z2*z2'", "1/2 + z1'"];
        prop::collection::vec((prop::sample::select(atoms.to_vec()), -2i64..=2), rows * cols).prop_map(move |picks| {
            let entries = picks.into_iter().map(|(a, k)| el(&format!("{k}*({a})"), pres)).collect();
            M::new(pres, rows, cols, entries).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn product_is_associative(
            a in arb_matrix(Presentation::odd_sphere(2), 2, 3),
            b in arb_matrix(Presentation::odd_sphere(2), 3, 2),
            c in arb_matrix(Presentation::odd_sphere(2), 2, 2),
        ) {
            let left = a.mat_mul(&b).unwrap().mat_mul(&c).unwrap();
            let right = a.mat_mul(&b.mat_mul(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn adjoint_reverses_products(
            a in arb_matrix(Presentation::odd_sphere(2), 2, 3),
            b in arb_matrix(Presentation::odd_sphere(2), 3, 2),
        ) {
            let ab = a.mat_mul(&b).unwrap();
            prop_assert_eq!(ab.adjoint(), b.adjoint().mat_mul(&a.adjoint()).unwrap());
            prop_assert_eq!(a.adjoint().adjoint(), a);
        }
    }
}
