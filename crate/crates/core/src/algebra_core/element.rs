use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};


use super::monomial::Monomial;
use super::parser::{parse_expr, Expr};
use super::presentation::{Generator, Presentation};
use super::AlgebraError;
use crate::phase_ring::{ExactRational, GaussianRational, PhaseScalar};
use crate::report::{Check, Report};

/// Images of source generators, keyed by generator name (`"z1"`, `"x"`, ...).
pub type GeneratorMap<Q> = BTreeMap<String, AlgebraElement<Q>>;

/// A finite sum of normal-ordered monomials with exact phase coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlgebraElement<Q> {
    pres: Presentation,
    terms: BTreeMap<Monomial, PhaseScalar<Q>>,
}

/// Multiplies two normal words without reducing, returning the concatenated
/// word and the doubled exponent of the exchange phase.
fn raw_product(pres: &Presentation, a: &Monomial, b: &Monomial) -> (Monomial, i32) {
    let mut exps = a.exps.clone();
    for (e, f) in exps.iter_mut().zip(&b.exps) {
        *e += f;
    }
    // Moving each letter of `b` left past the letters of `a` with larger
    // index contributes rho^(N_j(a) N_i(b)) for every pair i < j.
    let mut prefix = 0i64;
    let mut total = 0i64;
    for j in 0..pres.m {
        total += a.charge(pres, j) as i64 * prefix;
        prefix += b.charge(pres, j) as i64;
    }
    let half = 2 * pres.phase_sign() as i64 * total;
    let half = i32::try_from(half).expect("phase exponent overflow");
    (Monomial { exps, central: a.central + b.central, inv: a.inv + b.inv }, half)
}

/// Reduces a raw word to a signed combination of normal words.
fn reduce<Q: ExactRational>(pres: &Presentation, raw: Monomial) -> Vec<(Monomial, Q)> {
    let mut out: Vec<(Monomial, Q)> = Vec::new();
    if pres.is_torus() {
        out.push((raw, Q::one()));
        return out;
    }
    let top = 2 * (pres.m - 1);
    let k = raw.exps[top].min(raw.exps[top + 1]) as u32;
    if k == 0 {
        out.push((raw, Q::one()));
    } else {
        // (z_m z_m*)^k = (1 - sum_{i<m} z_i z_i* - c^2)^k, expanded in the
        // commuting central letters z_i z_i* and c.
        let lower = pres.m - 1;
        let with_c = pres.central_name().is_some();
        let mut poly: BTreeMap<(Vec<u32>, u32), i64> = BTreeMap::new();
        poly.insert((vec![0; lower], 0), 1);
        for _ in 0..k {
            let mut next: BTreeMap<(Vec<u32>, u32), i64> = BTreeMap::new();
            for ((inc, c), coef) in &poly {
                *next.entry((inc.clone(), *c)).or_default() += coef;
                for i in 0..lower {
                    let mut bumped = inc.clone();
                    bumped[i] += 1;
                    *next.entry((bumped, *c)).or_default() -= coef;
                }
                if with_c {
                    *next.entry((inc.clone(), c + 2)).or_default() -= coef;
                }
            }
            next.retain(|_, v| *v != 0);
            poly = next;
        }
        let mut base = raw;
        base.exps[top] -= k as i32;
        base.exps[top + 1] -= k as i32;
        for ((inc, c), coef) in poly {
            let mut mono = base.clone();
            for (i, d) in inc.iter().enumerate() {
                mono.exps[2 * i] += *d as i32;
                mono.exps[2 * i + 1] += *d as i32;
            }
            mono.central += c;
            out.push((mono, Q::from_i64(coef).expect("i64 coefficient")));
        }
    }
    if pres.has_u() {
        out = out.into_iter().flat_map(|(mono, coef)| reduce_u(mono, coef)).collect();
    }
    out
}

/// Applies `u y -> 1 - u` until no word has both letters.
fn reduce_u<Q: ExactRational>(mono: Monomial, coef: Q) -> Vec<(Monomial, Q)> {
    if mono.central == 0 || mono.inv == 0 {
        return vec![(mono, coef)];
    }
    let mut pending: BTreeMap<(u32, u32), Q> = BTreeMap::new();
    pending.insert((mono.central, mono.inv), Q::one());
    let mut done: BTreeMap<(u32, u32), Q> = BTreeMap::new();
    while let Some(((c, d), v)) = pending.pop_last() {
        if c == 0 || d == 0 {
            let slot = done.entry((c, d)).or_insert_with(Q::zero);
            *slot = slot.clone() + v;
            continue;
        }
        // u^d y^c = u^(d-1) y^(c-1) - u^d y^(c-1)
        for (key, sign) in [((c - 1, d - 1), Q::one()), ((c - 1, d), -Q::one())] {
            let slot = pending.entry(key).or_insert_with(Q::zero);
            *slot = slot.clone() + v.clone() * sign;
        }
    }
    done.into_iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|((c, d), v)| (Monomial { exps: mono.exps.clone(), central: c, inv: d }, v * coef.clone()))
        .collect()
}

impl<Q: ExactRational> AlgebraElement<Q> {
    pub fn zero(pres: Presentation) -> Self {
        Self { pres, terms: BTreeMap::new() }
    }

    pub fn one(pres: Presentation) -> Self {
        Self::scalar(pres, PhaseScalar::one())
    }

    pub fn from_int(pres: Presentation, n: i64) -> Self {
        Self::scalar(pres, PhaseScalar::from_int(n))
    }

    pub fn scalar(pres: Presentation, c: PhaseScalar<Q>) -> Self {
        let mut out = Self::zero(pres);
        out.accumulate(Monomial::one(&pres), c);
        out
    }

    pub fn generator(pres: Presentation, g: Generator) -> Self {
        let mut mono = Monomial::one(&pres);
        match g {
            Generator::Normal(i) if pres.is_torus() => mono.exps[i] = 1,
            Generator::Normal(i) => mono.exps[2 * i] = 1,
            Generator::Central => mono.central = 1,
            Generator::Inverse => mono.inv = 1,
        }
        let mut out = Self::zero(pres);
        out.accumulate(mono, PhaseScalar::one());
        out
    }

    /// Looks a generator up by name (`"z2"`, `"y"`, ...).
    pub fn named(pres: Presentation, name: &str) -> Result<Self, AlgebraError> {
        pres.generator(name).map(|g| Self::generator(pres, g)).ok_or_else(|| AlgebraError::UnknownGenerator {
            name: name.to_string(),
            presentation: pres.to_string(),
            pos: 0,
        })
    }

    /// `coeff * word`, reduced to normal form.
    pub fn from_monomial(pres: Presentation, word: Monomial, coeff: PhaseScalar<Q>) -> Result<Self, AlgebraError> {
        let fits = word.exps.len() == pres.slots()
            && (pres.is_torus() || word.exps.iter().all(|e| *e >= 0))
            && (word.central == 0 || pres.central_name().is_some())
            && (word.inv == 0 || pres.has_u());
        if !fits {
            return Err(AlgebraError::InvalidMonomial(pres.to_string()));
        }
        let mut out = Self::zero(pres);
        for (mono, q) in reduce::<Q>(&pres, word) {
            out.accumulate(mono, coeff.scale(&GaussianRational::real(q)));
        }
        Ok(out)
    }

    fn accumulate(&mut self, mono: Monomial, c: PhaseScalar<Q>) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&mono) {
            Some(slot) => {
                *slot = &*slot + &c;
                if slot.is_zero() {
                    self.terms.remove(&mono);
                }
            }
            None => {
                self.terms.insert(mono, c);
            }
        }
    }

    pub fn presentation(&self) -> &Presentation {
        &self.pres
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &PhaseScalar<Q>)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, mono: &Monomial) -> PhaseScalar<Q> {
        self.terms.get(mono).cloned().unwrap_or_default()
    }

    /// Coefficient of the empty word.
    pub fn trace_coeff(&self) -> PhaseScalar<Q> {
        self.coefficient(&Monomial::one(&self.pres))
    }

    /// Largest word degree, `0` for scalars and zero.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Re-reduces every term. Elements are always kept reduced, so this is
    /// the identity; it exists to state idempotency explicitly.
    pub fn normal_form(&self) -> Self {
        let mut out = Self::zero(self.pres);
        for (mono, c) in &self.terms {
            for (m, q) in reduce::<Q>(&self.pres, mono.clone()) {
                out.accumulate(m, c.scale(&GaussianRational::real(q)));
            }
        }
        out
    }

    fn check_same(&self, rhs: &Self) -> Result<(), AlgebraError> {
        if self.pres == rhs.pres {
            Ok(())
        } else {
            Err(AlgebraError::PresentationMismatch(self.pres.to_string(), rhs.pres.to_string()))
        }
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self, AlgebraError> {
        self.check_same(rhs)?;
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.accumulate(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self, AlgebraError> {
        self.try_add(&-rhs)
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self, AlgebraError> {
        self.check_same(rhs)?;
        let mut out = Self::zero(self.pres);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                let (raw, half) = raw_product(&self.pres, ma, mb);
                let c = (ca * cb).shift(half);
                for (mono, q) in reduce::<Q>(&self.pres, raw) {
                    let term = if q.is_one() { c.clone() } else { c.scale(&GaussianRational::real(q)) };
                    out.accumulate(mono, term);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &PhaseScalar<Q>) -> Self {
        let mut out = Self::zero(self.pres);
        for (m, v) in &self.terms {
            out.accumulate(m.clone(), v * c);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::one(self.pres), |acc, _| &acc * self)
    }

    /// The star: conjugate-linear and order reversing.
    pub fn adjoint(&self) -> Self {
        let pres = self.pres;
        let mut out = Self::zero(pres);
        for (mono, c) in &self.terms {
            let mut exps = mono.exps.clone();
            if pres.is_torus() {
                exps.iter_mut().for_each(|e| *e = -*e);
            } else {
                for pair in exps.chunks_mut(2) {
                    pair.swap(0, 1);
                }
            }
            // Reordering the reversed word contributes rho^(N_i N_j) per pair i < j.
            let mut prefix = 0i64;
            let mut total = 0i64;
            for j in 0..pres.m {
                let n = mono.charge(&pres, j) as i64;
                total += n * prefix;
                prefix += n;
            }
            let half = i32::try_from(2 * pres.phase_sign() as i64 * total).expect("phase exponent overflow");
            let word = Monomial { exps, central: mono.central, inv: mono.inv };
            out.accumulate(word, c.conj().shift(half));
        }
        out
    }

    /// Replaces each generator by its image in `dst` and multiplies out.
    /// Negative torus exponents use the adjoint of the image.
    pub fn substitute(&self, map: &GeneratorMap<Q>, dst: Presentation) -> Result<Self, AlgebraError> {
        let mut images: Vec<(Self, Self)> = Vec::new();
        for g in self.pres.generators() {
            let name = self.pres.generator_name(g);
            let img = map.get(&name).ok_or_else(|| AlgebraError::Unmapped(name.clone()))?;
            if img.pres != dst {
                return Err(AlgebraError::PresentationMismatch(img.pres.to_string(), dst.to_string()));
            }
            images.push((img.clone(), img.adjoint()));
        }
        let idx_central = self.pres.m;
        let idx_inv = self.pres.m + usize::from(self.pres.central_name().is_some());
        let mut out = Self::zero(dst);
        for (mono, c) in &self.terms {
            let mut acc = Self::scalar(dst, c.clone());
            for i in 0..self.pres.m {
                let (img, adj) = &images[i];
                if self.pres.is_torus() {
                    let e = mono.exps[i];
                    let base = if e >= 0 { img } else { adj };
                    acc = &acc * &base.pow(e.unsigned_abs());
                } else {
                    acc = &acc * &img.pow(mono.exps[2 * i] as u32);
                    acc = &acc * &adj.pow(mono.exps[2 * i + 1] as u32);
                }
            }
            if mono.central > 0 {
                acc = &acc * &images[idx_central].0.pow(mono.central);
            }
            if mono.inv > 0 {
                acc = &acc * &images[idx_inv].0.pow(mono.inv);
            }
            out = &out + &acc;
        }
        Ok(out)
    }

    /// Evaluates a parsed expression, resolving generators through `env`.
    pub fn eval_expr(
        expr: &Expr,
        pres: Presentation,
        env: &dyn Fn(&str, usize) -> Result<Self, AlgebraError>,
    ) -> Result<Self, AlgebraError> {
        let rec = |e: &Expr| Self::eval_expr(e, pres, env);
        Ok(match expr {
            Expr::Number { num, den, imag } => {
                let literal = format!("{num}/{}", den.as_deref().unwrap_or("1"));
                let q = Q::from_str_radix(&literal, 10).map_err(|_| AlgebraError::InvalidMonomial(literal.clone()))?;
                let g = if *imag { GaussianRational::new(Q::zero(), q) } else { GaussianRational::real(q) };
                Self::scalar(pres, PhaseScalar::from_gaussian(g))
            }
            Expr::Rho { half } => Self::scalar(pres, PhaseScalar::rho_half_power(*half)),
            Expr::Gen { name, adj, pow, pos } => {
                let mut base = env(name, *pos)?;
                if *adj {
                    base = base.adjoint();
                }
                if *pow >= 0 {
                    base.pow(*pow as u32)
                } else if pres.is_torus() {
                    base.adjoint().pow(pow.unsigned_abs())
                } else {
                    return Err(AlgebraError::NegativePower { name: name.clone(), pos: *pos });
                }
            }
            Expr::Add(a, b) => rec(a)?.try_add(&rec(b)?)?,
            Expr::Sub(a, b) => rec(a)?.try_sub(&rec(b)?)?,
            Expr::Mul(a, b) => rec(a)?.try_mul(&rec(b)?)?,
            Expr::Neg(a) => -&rec(a)?,
            Expr::Adj(a) => rec(a)?.adjoint(),
            Expr::Pow(a, k) => rec(a)?.pow(*k),
        })
    }

    pub fn parse(text: &str, pres: Presentation) -> Result<Self, AlgebraError> {
        let expr = parse_expr(text)?;
        let env = |name: &str, pos: usize| {
            pres.generator(name).map(|g| Self::generator(pres, g)).ok_or_else(|| AlgebraError::UnknownGenerator {
                name: name.to_string(),
                presentation: pres.to_string(),
                pos,
            })
        };
        Self::eval_expr(&expr, pres, &env)
    }
}

/// Parses and normalizes `text` in `pres`.
pub fn parse_element<Q: ExactRational>(text: &str, pres: Presentation) -> Result<AlgebraElement<Q>, AlgebraError> {
    AlgebraElement::parse(text, pres)
}

/// Checks that the images of the generators of `src` satisfy every defining
/// relation of `src` inside `dst`.
pub fn hom_check<Q: ExactRational>(
    map: &GeneratorMap<Q>,
    src: Presentation,
    dst: Presentation,
) -> Result<Report, AlgebraError> {
    for name in src.generator_names() {
        let img = map.get(&name).ok_or_else(|| AlgebraError::Unmapped(name.clone()))?;
        if img.pres != dst {
            return Err(AlgebraError::PresentationMismatch(img.pres.to_string(), dst.to_string()));
        }
    }
    let env = |name: &str, _pos: usize| map.get(name).cloned().ok_or_else(|| AlgebraError::Unmapped(name.to_string()));
    let mut report = Report::new();
    for (name, text) in src.relations() {
        let expr = parse_expr(&text)?;
        let value = AlgebraElement::eval_expr(&expr, dst, &env)?;
        report.push(Check::exact(name, value.num_terms()));
    }
    Ok(report)
}

impl<Q: ExactRational> Add for &AlgebraElement<Q> {
    type Output = AlgebraElement<Q>;
    fn add(self, rhs: Self) -> AlgebraElement<Q> {
        self.try_add(rhs).expect("elements of one presentation")
    }
}

impl<Q: ExactRational> Sub for &AlgebraElement<Q> {
    type Output = AlgebraElement<Q>;
    fn sub(self, rhs: Self) -> AlgebraElement<Q> {
        self.try_sub(rhs).expect("elements of one presentation")
    }
}

impl<Q: ExactRational> Mul for &AlgebraElement<Q> {
    type Output = AlgebraElement<Q>;
    fn mul(self, rhs: Self) -> AlgebraElement<Q> {
        self.try_mul(rhs).expect("elements of one presentation")
    }
}

impl<Q: ExactRational> Neg for &AlgebraElement<Q> {
    type Output = AlgebraElement<Q>;
    fn neg(self) -> AlgebraElement<Q> {
        AlgebraElement { pres: self.pres, terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }
}

impl<Q: ExactRational> fmt::Display for AlgebraElement<Q> {
    /// Canonical rendering, e.g. `1 - z1*z1' - x^2` or `rho * z1*z2`; the
    /// output parses back to the same element.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (mono, c)) in self.terms.iter().enumerate() {
            let (negative, coeff) = c.split_sign();
            let body = match (mono.is_one(), coeff.as_str()) {
                (true, _) => coeff,
                (false, "1") => mono.render(&self.pres),
                (false, _) => format!("{coeff} * {}", mono.render(&self.pres)),
            };
            match (idx, negative) {
                (0, false) => write!(f, "{body}")?,
                (0, true) => write!(f, "-{body}")?,
                (_, false) => write!(f, " + {body}")?,
                (_, true) => write!(f, " - {body}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    type E = AlgebraElement<BigRational>;
    type P = PhaseScalar<BigRational>;

    fn el(text: &str, pres: Presentation) -> E {
        E::parse(text, pres).unwrap_or_else(|e| panic!("{text}: {e}"))
    }

    #[test]
    fn parse_examples() {
        let s3 = Presentation::odd_sphere(2);
        let z1z2 = el("z1*z2", s3);
        assert_eq!(z1z2.num_terms(), 1);
        assert!(z1z2.terms().next().unwrap().1.is_one());
        assert!(el("z1*z1' + z2*z2' - 1", s3).is_zero());
        assert_eq!(el("u*(1+y)", Presentation::ball(2, true)), E::one(Presentation::ball(2, true)));
    }

    #[test]
    fn unknown_generator_has_position() {
        let err = E::parse("z1 + w1", Presentation::odd_sphere(2)).unwrap_err();
        assert!(matches!(err, AlgebraError::UnknownGenerator { pos: 5, .. }), "{err:?}");
        assert!(matches!(
            E::parse("z1^-1", Presentation::odd_sphere(2)).unwrap_err(),
            AlgebraError::NegativePower { .. }
        ));
    }

    #[test]
    fn normal_form_examples() {
        let s3 = Presentation::odd_sphere(2);
        assert_eq!(el("z2*z1", s3).to_string(), "rho * z1*z2");
        let s4 = Presentation::even_sphere(2);
        assert_eq!(el("z2*z2'", s4), el("1 - z1*z1' - x^2", s4));
        let b = Presentation::ball(2, true);
        assert_eq!(el("u*y^2", b), el("y - 1 + u", b));
        let e = el("u*y^2", b);
        assert_eq!(e.normal_form(), e);
    }

    #[test]
    fn multiplication_examples() {
        let s3 = Presentation::odd_sphere(2);
        assert_eq!(&el("z1", s3) * &el("z1'", s3), el("z1*z1'", s3));
        assert_eq!(el("z1*z1'", s3).num_terms(), 1);
        let t = Presentation::torus(2);
        assert!((&el("U1", t) * &el("U1^-1", t)).terms().all(|(m, c)| m.is_one() && c.is_one()));
        // Brute-force oracle: z1 z2 z2* z1* = z1 (1 - z1 z1*) z1* = z1z1* - (z1z1*)^2.
        let lhs = &el("z1*z2", s3) * &el("z2'*z1'", s3);
        let mut expected = E::zero(s3);
        for (exps, coef) in [(vec![1, 1, 0, 0], 1), (vec![2, 2, 0, 0], -1)] {
            expected = &expected + &E::from_monomial(s3, Monomial::new(exps, 0, 0), P::from_int(coef)).unwrap();
        }
        assert_eq!(lhs, expected);
        assert_eq!(lhs.to_string(), "z1*z1' - z1^2*z1'^2");
    }

    #[test]
    fn adjoint_examples() {
        let s3 = Presentation::odd_sphere(2);
        assert_eq!(el("z1", s3).adjoint(), el("z1'", s3));
        // adjoint(rho z1 z2) = rho^-1 z2* z1* = rho^-1 rho z1* z2*.
        assert_eq!(el("rho*z1*z2", s3).adjoint(), el("rho^-1*z2'*z1'", s3));
        assert_eq!(el("rho*z1*z2", s3).adjoint().to_string(), "z1'*z2'");
        let s4 = Presentation::even_sphere(2);
        assert_eq!(el("x", s4).adjoint(), el("x", s4));
    }

    #[test]
    fn trace_coeff_examples() {
        let t = Presentation::torus(2);
        assert!(el("1", t).trace_coeff().is_one());
        for (a, b) in [(1, 0), (0, -2), (3, 1)] {
            assert!(el(&format!("U1^{a}*U2^{b}"), t).trace_coeff().is_zero());
        }
        assert!(el("z1*z1'", Presentation::odd_sphere(2)).trace_coeff().is_zero());
    }

    fn identity_map(src: Presentation, dst: Presentation, central: &str) -> GeneratorMap<BigRational> {
        let mut map = GeneratorMap::new();
        for i in 1..=src.m {
            map.insert(format!("z{i}"), el(&format!("w{i}"), dst));
        }
        map.insert("x".into(), el(central, dst));
        map
    }

    #[test]
    fn hom_check_examples() {
        let s4 = Presentation::even_sphere(2);
        let ball = Presentation::ball(2, false);
        assert!(hom_check(&identity_map(s4, ball, "y"), s4, ball).unwrap().passed());
        assert!(hom_check(&identity_map(s4, ball, "-y"), s4, ball).unwrap().passed());
        let mut swapped = identity_map(s4, ball, "y");
        swapped.insert("z1".into(), el("w2", ball));
        swapped.insert("z2".into(), el("w1", ball));
        let r = hom_check(&swapped, s4, ball).unwrap();
        assert!(!r.get("exchange(z1,z2)").unwrap().pass);
        let mut partial = identity_map(s4, ball, "y");
        partial.remove("x");
        assert_eq!(hom_check(&partial, s4, ball).unwrap_err(), AlgebraError::Unmapped("x".into()));
    }

    #[test]
    fn presets_satisfy_their_relations() {
        for pres in [
            Presentation::torus(1),
            Presentation::torus(3),
            Presentation::odd_sphere(1),
            Presentation::odd_sphere(3),
            Presentation::even_sphere(2),
            Presentation::even_sphere(3),
            Presentation::ball(2, true),
            Presentation::ball(3, false),
            Presentation::odd_sphere(2).swapped(),
        ] {
            let map: GeneratorMap<BigRational> =
                pres.generators().into_iter().map(|g| (pres.generator_name(g), E::generator(pres, g))).collect();
            let r = hom_check(&map, pres, pres).unwrap();
            assert!(r.passed(), "{pres}: {:?}", r.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn printing_round_trips() {
        let b = Presentation::ball(2, true);
        for text in ["(1/2 + 1/3i)*rho^-1/2*w1*w2' - 1/2i*y", "(1 + rho)*w1^2 - rho*u", "-w2'"] {
            let e = el(text, b);
            assert_eq!(el(&e.to_string(), b), e, "{e}");
        }
        assert_eq!(E::zero(b).to_string(), "0");
    }

    pub(crate) fn arb_element(pres: Presentation) -> impl Strategy<Value = E> {
        let letters = pres.slots() + 2;
        let term = (
            prop::collection::vec((0..letters, -2i32..=2), 0..=6),
            -3i64..=3,
            -2i64..=2,
            1i64..=3,
            -2i32..=2,
        );
        prop::collection::vec(term, 1..=3).prop_map(move |terms| {
            let mut out = E::zero(pres);
            for (word, re, im, den, half) in terms {
                let mut mono = Monomial::one(&pres);
                for (slot, sign) in word {
                    if slot < pres.slots() {
                        let step = if pres.is_torus() && sign < 0 { -1 } else { 1 };
                        mono.exps[slot] += step;
                    } else if slot == pres.slots() && pres.central_name().is_some() {
                        mono.central += 1;
                    } else if pres.has_u() {
                        mono.inv += 1;
                    }
                }
                let c = P::monomial(
                    GaussianRational::new(BigRational::from_fraction(re, den), BigRational::from_fraction(im, den)),
                    half,
                );
                out = &out + &E::from_monomial(pres, mono, c).unwrap();
            }
            out
        })
    }

    fn presets() -> impl Strategy<Value = Presentation> {
        prop::sample::select(vec![
            Presentation::torus(2),
            Presentation::odd_sphere(2),
            Presentation::even_sphere(2),
            Presentation::ball(2, true),
            Presentation::odd_sphere(3),
        ])
    }

    fn triple() -> impl Strategy<Value = (E, E, E)> {
        presets().prop_flat_map(|p| (arb_element(p), arb_element(p), arb_element(p)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ring_laws((a, b, c) in triple()) {
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&(&a + &b) * &c, &(&a * &c) + &(&b * &c));
        }

        #[test]
        fn adjoint_is_involutive_antihomomorphism((a, b, _c) in triple()) {
            prop_assert_eq!(a.adjoint().adjoint(), a.clone());
            prop_assert_eq!((&a * &b).adjoint(), &b.adjoint() * &a.adjoint());
        }

        #[test]
        fn normal_form_idempotent((a, _b, _c) in triple()) {
            prop_assert_eq!(a.normal_form(), a.clone());
            prop_assert!(a.terms().all(|(m, _)| m.is_normal(a.presentation())));
        }

        #[test]
        fn radius_terms_are_central((a, _b, _c) in triple()) {
            let pres = *a.presentation();
            if !pres.is_torus() {
                for i in 1..=pres.m {
                    let zz = el(&format!("{0}{i}*{0}{i}'", pres.normal_prefix()), pres);
                    prop_assert_eq!(&zz * &a, &a * &zz);
                }
            }
        }

        #[test]
        fn torus_trace_is_tracial(a in arb_element(Presentation::torus(2)), b in arb_element(Presentation::torus(2))) {
            prop_assert_eq!((&a * &b).trace_coeff(), (&b * &a).trace_coeff());
        }

        #[test]
        fn display_round_trips((a, _b, _c) in triple()) {
            prop_assert_eq!(el(&a.to_string(), *a.presentation()), a);
        }
    }
}
