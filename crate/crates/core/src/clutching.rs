//! Clutching over the double cone: module classes `N(n, s)`, their
//! semigroup, and idempotent fields glued from an equator loop.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field_model::{
    eval_s3, winding, x_loop_from, Base, BasePoint, Fiber, FieldElement, FieldError, FieldJson, Hemisphere, ModalProjection,
};
use crate::linalg::{CMat, Real};
use crate::matrix_ops::{builtin_with, Builtin};
use crate::phase_ring::{Theta, ThetaKind};
use crate::algebra_core::PhaseConvention;
use crate::report::{Check, Report};
use crate::tolerances;
use crate::torus_rep::{Rep, RieffelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClutchError {
    #[error("rank must be non-negative, got {0}")]
    NegativeRank(i64),
    #[error("cannot combine a {0:?} class with a {1:?} class")]
    KindMismatch(ThetaKind, ThetaKind),
    #[error("unknown module name '{0}'")]
    UnknownName(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index extraction needs an X^s loop, datum is {0}")]
    MissingProvenance(String),
    #[error("{what} = {value} is not within 0.2 of an integer")]
    Ambiguous { what: &'static str, value: f64 },
    #[error("seam mismatch {0} above tolerance")]
    SeamMismatch(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Isomorphism class `N(rank, index)`, or the zero module.
///
/// Irrational classes are `{0} u (N x Z)`; rational ones are
/// `{0, 1} u ((N \ {1}) x Z)`, so rank 1 always carries index 0 there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModuleClass {
    kind: ThetaKind,
    rank: u64,
    index: i64,
}

impl ModuleClass {
    /// Normalizes `(n, s)`: rank 0 is the zero class, and rational rank 1
    /// drops its index.
    pub fn new(kind: ThetaKind, n: i64, s: i64) -> Result<Self, ClutchError> {
        if n < 0 {
            return Err(ClutchError::NegativeRank(n));
        }
        let index = match (kind, n) {
            (_, 0) | (ThetaKind::Rational, 1) => 0,
            _ => s,
        };
        Ok(Self { kind, rank: n as u64, index })
    }

    pub fn zero(kind: ThetaKind) -> Self {
        Self { kind, rank: 0, index: 0 }
    }

    pub fn kind(&self) -> ThetaKind {
        self.kind
    }

    pub fn rank(&self) -> u64 {
        self.rank
    }

    pub fn index(&self) -> i64 {
        self.index
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0
    }

    /// Every class with `rank <= max_rank` and `|index| <= max_index`.
    pub fn enumerate(kind: ThetaKind, max_rank: u64, max_index: i64) -> Vec<Self> {
        let mut out = vec![Self::zero(kind)];
        for n in 1..=max_rank as i64 {
            for s in -max_index..=max_index {
                let c = Self::new(kind, n, s).expect("n >= 1");
                if out.last() != Some(&c) {
                    out.push(c);
                }
            }
        }
        out
    }
}

impl fmt::Display for ModuleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "0")
        } else {
            write!(f, "N({}, {})", self.rank, self.index)
        }
    }
}

pub fn make_class(theta: &Theta, n: i64, s: i64) -> Result<ModuleClass, ClutchError> {
    ModuleClass::new(theta.kind(), n, s)
}

pub fn direct_sum(a: ModuleClass, b: ModuleClass) -> Result<ModuleClass, ClutchError> {
    if a.kind != b.kind {
        return Err(ClutchError::KindMismatch(a.kind, b.kind));
    }
    ModuleClass::new(a.kind, (a.rank + b.rank) as i64, a.index + b.index)
}

/// `(a + c = b + c) => (a = b)` in the implemented semigroup.
pub fn cancellation_test(a: ModuleClass, b: ModuleClass, c: ModuleClass) -> Result<bool, ClutchError> {
    if a.kind != b.kind {
        return Err(ClutchError::KindMismatch(a.kind, b.kind));
    }
    Ok(direct_sum(a, c)? != direct_sum(b, c)? || a == b)
}

/// Classes of named modules: `instanton_e`, `landi_vs(n)` for `n >= 1` and
/// `brain_landi(n,s)` for `n >= 2`, all over irrational theta.
pub fn named_module_class(name: &str) -> Result<ModuleClass, ClutchError> {
    named_module_class_for(name, ThetaKind::Irrational)
}

pub fn named_module_class_for(name: &str, kind: ThetaKind) -> Result<ModuleClass, ClutchError> {
    let name = name.trim();
    let unknown = || ClutchError::UnknownName(name.to_string());
    let args = |prefix: &str| -> Option<Vec<i64>> {
        let inner = name.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
        inner.split(',').map(|a| a.trim().parse().ok()).collect()
    };
    if name == "instanton_e" {
        return ModuleClass::new(kind, 2, -1);
    }
    if let Some(a) = args("landi_vs") {
        let [n] = a[..] else { return Err(unknown()) };
        if n < 1 {
            return Err(ClutchError::InvalidArgument(format!("landi_vs needs n >= 1, got {n}")));
        }
        return ModuleClass::new(kind, n + 1, -(n * (n + 1) * (n + 2)) / 6);
    }
    if let Some(a) = args("brain_landi") {
        let [n, s] = a[..] else { return Err(unknown()) };
        if n < 2 {
            return Err(ClutchError::InvalidArgument(format!("brain_landi needs n >= 2, got {n}")));
        }
        return ModuleClass::new(kind, n, s);
    }
    Err(unknown())
}

/// Exhaustive semigroup laws over `rank <= max_rank`, `|index| <= max_index`
/// in both kinds, plus the named classes. Residuals count counterexamples.
pub fn verify_semigroup(max_rank: u64, max_index: i64) -> Report {
    let mut report = Report::new();
    for kind in [ThetaKind::Irrational, ThetaKind::Rational] {
        let classes = ModuleClass::enumerate(kind, max_rank, max_index);
        let sum = |a, b| direct_sum(a, b).expect("same kind");
        let zero = ModuleClass::zero(kind);
        let (mut assoc, mut comm, mut neutral, mut cancel, mut decomp) = (0usize, 0usize, 0usize, 0usize, 0usize);
        for &a in &classes {
            if sum(a, zero) != a || sum(zero, a) != a {
                neutral += 1;
            }
            for &b in &classes {
                if sum(a, b) != sum(b, a) {
                    comm += 1;
                }
                for &c in &classes {
                    if sum(sum(a, b), c) != sum(a, sum(b, c)) {
                        assoc += 1;
                    }
                    if !cancellation_test(a, b, c).expect("same kind") {
                        cancel += 1;
                    }
                }
            }
        }
        for n in 1..=max_rank as i64 {
            for s in -max_index..=max_index {
                let whole = ModuleClass::new(kind, n, s).expect("n >= 1");
                // Rank-1 rational classes are trivial, so split off a rank-2 piece there.
                let split = match kind {
                    ThetaKind::Irrational => Some((1, n - 1)),
                    ThetaKind::Rational if n >= 2 => Some((2, n - 2)),
                    ThetaKind::Rational => None,
                };
                if let Some((head, rest)) = split {
                    let parts = sum(ModuleClass::new(kind, head, s).expect("head"), ModuleClass::new(kind, rest, 0).expect("rest"));
                    if parts != whole {
                        decomp += 1;
                    }
                }
            }
        }
        let k = match kind {
            ThetaKind::Irrational => "irrational",
            ThetaKind::Rational => "rational",
        };
        report.push(Check::exact(format!("{k}/associativity"), assoc));
        report.push(Check::exact(format!("{k}/commutativity"), comm));
        report.push(Check::exact(format!("{k}/neutral_zero"), neutral));
        report.push(Check::exact(format!("{k}/cancellation"), cancel));
        report.push(Check::exact(format!("{k}/decomposition"), decomp));
    }
    let expect = |name: &str, n: i64, s: i64| {
        let got = named_module_class(name);
        Check::flag(format!("class/{name}"), got == ModuleClass::new(ThetaKind::Irrational, n, s))
    };
    report.push(expect("instanton_e", 2, -1));
    report.push(expect("landi_vs(1)", 2, -1));
    report.push(expect("landi_vs(2)", 3, -4));
    report.push(Check::flag(
        "class/instanton_splits_as_line_plus_free",
        direct_sum(
            ModuleClass::new(ThetaKind::Irrational, 1, -1).expect("class"),
            ModuleClass::new(ThetaKind::Irrational, 1, 0).expect("class"),
        ) == named_module_class("instanton_e"),
    ));
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// `X^s (+) 1_{n-1}`.
    XPower(i32),
    Identity,
    HExpected,
    Custom(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::XPower(s) => write!(f, "X^{s}"),
            Provenance::Identity => write!(f, "identity"),
            Provenance::HExpected => write!(f, "h_expected"),
            Provenance::Custom(label) => write!(f, "custom:{label}"),
        }
    }
}

/// An invertible `n x n` loop over the equator, with where it came from.
#[derive(Debug, Clone)]
pub struct ClutchingDatum<T> {
    pub n: usize,
    pub equator: FieldElement<T>,
    pub provenance: Provenance,
    pub kind: ThetaKind,
    /// The numeric theta used for the loop (`p/q` of the representation).
    pub theta: T,
}

impl<T: Real> ClutchingDatum<T> {
    /// `X^s (+) 1_{n-1}` over `steps` equator intervals.
    pub fn x_power(rep: &Rep<T>, params: &RieffelParams<T>, n: usize, s: i32, steps: usize, kind: ThetaKind) -> Result<Self, ClutchError> {
        if n == 0 {
            return Err(ClutchError::InvalidArgument("clutching needs n >= 1".into()));
        }
        let modal = Arc::new(ModalProjection::rieffel(rep, params).map_err(ClutchError::Field)?);
        Ok(Self::x_power_from(modal, n, s, steps, kind, rep.theta()))
    }

    pub fn x_power_from(modal: Arc<ModalProjection<T>>, n: usize, s: i32, steps: usize, kind: ThetaKind, theta: T) -> Self {
        Self { n, equator: x_loop_from(modal, s, n, steps), provenance: Provenance::XPower(s), kind, theta }
    }

    pub fn identity(rep: &Rep<T>, n: usize, steps: usize, kind: ThetaKind) -> Self {
        let q = rep.q();
        let equator = FieldElement::lazy(Base::interval(steps), n, q, move |_| Ok(Fiber::Kron { small: CMat::identity(n), q }));
        Self { n, equator, provenance: Provenance::Identity, kind, theta: rep.theta() }
    }

    /// The `2 x 2` transition `(z2*, -rho-bar z1; z1*, z2)` on the odd-sphere field.
    pub fn h_expected(rep: &Rep<T>, steps: usize, kind: ThetaKind) -> Result<Self, ClutchError> {
        let h = builtin_with::<crate::Rational>(Builtin::HExpected, PhaseConvention::Standard);
        let q = rep.q();
        let entries = h
            .entries()
            .iter()
            .map(|e| eval_s3(e, rep, steps))
            .collect::<Result<Vec<_>, _>>()?;
        let cols = h.cols();
        let equator = FieldElement::lazy(Base::interval(steps), h.rows(), q, move |p| {
            let mut m = CMat::zeros(cols * q, cols * q);
            for (k, e) in entries.iter().enumerate() {
                m.set_block((k / cols) * q, (k % cols) * q, &e.eval_at(p)?.to_dense());
            }
            Ok(Fiber::Dense(m))
        });
        Ok(Self { n: 2, equator, provenance: Provenance::HExpected, kind, theta: rep.theta() })
    }

    pub fn custom(label: &str, equator: FieldElement<T>, kind: ThetaKind, theta: T) -> Self {
        Self { n: equator.block(), equator, provenance: Provenance::Custom(label.into()), kind, theta }
    }

    /// Conjugates the loop by a constant invertible `n x n` matrix.
    pub fn conjugated(&self, d: &CMat<T>) -> Result<Self, ClutchError> {
        let q = self.equator.q();
        let dk = Fiber::Kron { small: d.clone(), q };
        let dinv = Fiber::Kron { small: d.inverse().map_err(FieldError::from)?, q };
        let equator = self.equator.map(move |_, f| dk.mul(&f)?.mul(&dinv))?;
        Ok(Self { equator, ..self.clone() })
    }

    fn loop_at(&self, t: T) -> Result<Fiber<T>, FieldError> {
        if self.equator.is_lazy() {
            return self.equator.eval_at(&BasePoint::Interval { t });
        }
        let Base::Interval { grid } = self.equator.base() else {
            return Err(FieldError::WrongBase("an interval"));
        };
        let k = grid.iter().position(|x| *x == t).ok_or(FieldError::NotRefinable)?;
        self.equator.fiber(k)
    }
}

/// `R(sigma)`: rotation by `pi sigma / 2` mixing the two `n`-blocks.
fn rotation<T: Real>(n: usize, sigma: T, q: usize) -> (Fiber<T>, Fiber<T>) {
    let angle = T::FRAC_PI_2() * sigma;
    let (c, s) = (angle.cos(), angle.sin());
    let build = |s: T| {
        let mut r = CMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            r[(i, i)] = Complex::new(c, T::zero());
            r[(n + i, n + i)] = Complex::new(c, T::zero());
            r[(i, n + i)] = Complex::new(-s, T::zero());
            r[(n + i, i)] = Complex::new(s, T::zero());
        }
        Fiber::Kron { small: r, q }
    };
    (build(s), build(-s))
}

/// `1_n (+) 0_n`.
pub fn base_projection<T: Real>(n: usize) -> CMat<T> {
    CMat::from_diag(&(0..2 * n).map(|i| Complex::new(if i < n { T::one() } else { T::zero() }, T::zero())).collect::<Vec<_>>())
}

/// Idempotent field on the double cone clutched by the datum's loop `h`.
///
/// On the north cone `P = L(1 - s) (1_n (+) 0_n) L(1 - s)^-1` with the
/// Whitehead path `L(sigma) = (h (+) 1) R(sigma) (h^-1 (+) 1) R(sigma)^-1`;
/// `L(0) = 1` at the pole and `L(1) = h (+) h^-1` on the equator. The south
/// cone carries the constant `1_n (+) 0_n`.
pub fn build_idempotent<T: Real>(d: &ClutchingDatum<T>, cone_steps: usize) -> Result<FieldElement<T>, ClutchError> {
    let Base::Interval { grid } = d.equator.base().clone() else {
        return Err(FieldError::WrongBase("an interval").into());
    };
    for (k, t) in grid.iter().enumerate() {
        d.equator.fiber(k)?.inverse().map_err(|_| FieldError::Singular { t: t.to_f64().unwrap_or(f64::NAN) })?;
    }
    let n = d.n;
    let q = d.equator.q();
    let datum = d.clone();
    let proj = Fiber::Kron { small: base_projection::<T>(n), q };
    let one = Fiber::Kron { small: CMat::identity(n), q };
    let base = Base::DoubleCone { cone: crate::field_model::uniform_grid(cone_steps), equator: grid };
    let field = FieldElement::lazy(base, 2 * n, q, move |p| {
        let BasePoint::Cone { hemisphere, s, t } = *p else {
            return Err(FieldError::WrongBase("a double-cone"));
        };
        if hemisphere == Hemisphere::South {
            return Ok(proj.clone());
        }
        let h = datum.loop_at(t)?;
        let h_inv = h.inverse()?;
        let (r, r_inv) = rotation(n, T::one() - s, q);
        let a = h.direct_sum(&one, q)?;
        let a_inv = h_inv.direct_sum(&one, q)?;
        let l = a.mul(&r)?.mul(&a_inv)?.mul(&r_inv)?;
        let l_inv = r.mul(&a)?.mul(&r_inv)?.mul(&a_inv)?;
        l.mul(&proj)?.mul(&l_inv)
    });
    let seam = seam_residual(&field)?;
    if !(seam <= T::lit(tolerances::CLUTCH_SEAM)) {
        return Err(ClutchError::SeamMismatch(seam.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(field)
}

fn seam_residual<T: Real>(p: &FieldElement<T>) -> Result<T, FieldError> {
    let Base::DoubleCone { equator, .. } = p.base() else {
        return Err(FieldError::WrongBase("a double-cone"));
    };
    let mut worst = T::zero();
    for k in 0..equator.len() {
        let north = p.fiber(p.base().cone_index(Hemisphere::North, 0, k).expect("grid"))?;
        let south = p.fiber(p.base().cone_index(Hemisphere::South, 0, k).expect("grid"))?;
        worst = worst.max(north.sub(&south)?.frob_norm());
    }
    Ok(worst)
}

/// One pass over an idempotent field.
#[derive(Debug, Clone, PartialEq)]
pub struct IdempotentScan<T> {
    /// `max ||P^2 - P||_F` over all fibers.
    pub idempotent: T,
    /// `max ||P_north - P_south||_F` over the equator.
    pub seam: T,
    /// `max ||P - (1_n (+) 0_n)||_F` over both poles.
    pub pole: T,
    /// Mean of `tr(P) / q`.
    pub mean_rank: T,
    pub fibers: usize,
}

pub fn scan_idempotent<T: Real>(p: &FieldElement<T>) -> Result<IdempotentScan<T>, FieldError> {
    if !matches!(p.base(), Base::DoubleCone { .. }) {
        return Err(FieldError::WrongBase("a double-cone"));
    }
    let n = p.block() / 2;
    let q = p.q();
    let target = Fiber::Kron { small: base_projection::<T>(n), q };
    let (mut idem, mut pole) = (T::zero(), T::zero());
    let mut trace = T::zero();
    for i in 0..p.len() {
        let f = p.fiber(i)?;
        idem = idem.max(f.mul(&f)?.sub(&f)?.frob_norm());
        trace = trace + f.trace().re;
        if let BasePoint::Cone { s, .. } = p.point(i) {
            if s == T::one() {
                pole = pole.max(f.sub(&target)?.frob_norm());
            }
        }
    }
    Ok(IdempotentScan {
        idempotent: idem,
        seam: seam_residual(p)?,
        pole,
        mean_rank: trace / (T::of_usize(q) * T::of_usize(p.len().max(1))),
        fibers: p.len(),
    })
}

fn round_checked(value: f64, what: &'static str) -> Result<i64, ClutchError> {
    let r = value.round();
    if !((value - r).abs() <= tolerances::ROUNDING_AMBIGUITY) {
        return Err(ClutchError::Ambiguous { what, value });
    }
    Ok(r as i64)
}

/// `(rank, index)` of a clutched idempotent: rank from the mean fiber trace,
/// index as `round(winding(h) / theta)` for `X^s` loops.
pub fn recover_invariants<T: Real>(p: &FieldElement<T>, d: &ClutchingDatum<T>) -> Result<ModuleClass, ClutchError> {
    let scan = scan_idempotent(p)?;
    recover_from_scan(&scan, d)
}

pub fn recover_from_scan<T: Real>(scan: &IdempotentScan<T>, d: &ClutchingDatum<T>) -> Result<ModuleClass, ClutchError> {
    let rank = round_checked(scan.mean_rank.to_f64().unwrap_or(f64::NAN), "rank")?;
    let index = match d.provenance {
        Provenance::XPower(_) | Provenance::Identity => {
            let w = winding(&d.equator)?;
            let theta = d.theta.to_f64().unwrap_or(f64::NAN);
            round_checked(w.value.to_f64().unwrap_or(f64::NAN) / theta, "index")?
        }
        _ => return Err(ClutchError::MissingProvenance(d.provenance.to_string())),
    };
    ModuleClass::new(d.kind, rank, index)
}

/// Builds, scans and recovers; every check at the clutching tolerances.
pub fn verify_clutching<T: Real>(d: &ClutchingDatum<T>, cone_steps: usize, expected: ModuleClass) -> Result<Report, ClutchError> {
    let p = build_idempotent(d, cone_steps)?;
    let scan = scan_idempotent(&p)?;
    let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
    let mut report = Report::new();
    report.push(Check::within("projection", f(scan.idempotent), tolerances::CLUTCH_PROJECTION));
    report.push(Check::within("seam", f(scan.seam), tolerances::CLUTCH_SEAM));
    report.push(Check::within("pole", f(scan.pole), tolerances::CLUTCH_POLE));
    match recover_from_scan(&scan, d) {
        Ok(class) => report.push(Check::new("invariants", class == expected, Some((class.rank as f64 - expected.rank as f64).abs() + (class.index - expected.index).abs() as f64))),
        Err(_) => report.push(Check::new("invariants", false, None)),
    }
    Ok(report)
}

/// Winding number of `z -> z^s` on the unit circle, read with the same
/// log-increment rule in the `1 x 1` case. The bundle's Chern number is `-s`.
pub fn classical_chern(s: i64, steps: usize) -> Result<i64, ClutchError> {
    if steps < 256 {
        return Err(ClutchError::InvalidArgument(format!("grid {steps} below 256")));
    }
    let field = FieldElement::<f64>::scalar_field(Base::interval(steps), 1, move |p| {
        crate::linalg::cis(std::f64::consts::TAU * s as f64 * p.t())
    });
    let w = winding(&field)?;
    round_checked(w.value, "winding")
}

/// Field JSON plus `{n, provenance, theta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutchedJson {
    #[serde(flatten)]
    pub field: FieldJson,
    pub n: usize,
    pub provenance: Provenance,
    pub theta: f64,
}

pub fn clutched_json<T: Real>(p: &FieldElement<T>, d: &ClutchingDatum<T>) -> Result<ClutchedJson, FieldError> {
    Ok(ClutchedJson {
        field: p.to_json()?,
        n: d.n,
        provenance: d.provenance.clone(),
        theta: d.theta.to_f64().unwrap_or(f64::NAN),
    })
}
