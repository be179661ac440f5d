use std::cmp::Ordering;

use super::presentation::Presentation;

/// A normal-ordered word `z1^a1 z1*^b1 ... zm^am zm*^bm x^c u^d`.
///
/// For the torus, `exps[i]` is the Laurent exponent of `U_{i+1}`; otherwise
/// `exps[2i]` and `exps[2i+1]` are `a_{i+1}` and `b_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub(crate) exps: Vec<i32>,
    pub(crate) central: u32,
    pub(crate) inv: u32,
}

impl Monomial {
    pub fn one(pres: &Presentation) -> Self {
        Self { exps: vec![0; pres.slots()], central: 0, inv: 0 }
    }

    /// Raw constructor; the word need not be reduced. Use
    /// [`super::AlgebraElement::from_monomial`] to normalize it.
    pub fn new(exps: Vec<i32>, central: u32, inv: u32) -> Self {
        Self { exps, central, inv }
    }

    pub fn exps(&self) -> &[i32] {
        &self.exps
    }

    pub fn central(&self) -> u32 {
        self.central
    }

    pub fn inv(&self) -> u32 {
        self.inv
    }

    pub fn is_one(&self) -> bool {
        self.central == 0 && self.inv == 0 && self.exps.iter().all(|e| *e == 0)
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|e| e.unsigned_abs()).sum::<u32>() + self.central + self.inv
    }

    /// Net charge `N_i = a_i - b_i` (or the Laurent exponent).
    pub(crate) fn charge(&self, pres: &Presentation, i: usize) -> i32 {
        if pres.is_torus() {
            self.exps[i]
        } else {
            self.exps[2 * i] - self.exps[2 * i + 1]
        }
    }

    /// Whether the word is already reduced for `pres`.
    pub fn is_normal(&self, pres: &Presentation) -> bool {
        if self.exps.len() != pres.slots() {
            return false;
        }
        if !pres.is_torus() {
            if self.exps.iter().any(|e| *e < 0) {
                return false;
            }
            let top = 2 * (pres.m - 1);
            if self.exps[top] > 0 && self.exps[top + 1] > 0 {
                return false;
            }
        }
        if pres.central_name().is_none() && self.central > 0 {
            return false;
        }
        if pres.has_u() {
            !(self.central > 0 && self.inv > 0)
        } else {
            self.inv == 0
        }
    }

    /// Word rendering such as `z1*z2'^2*x`; the empty word renders as `1`.
    pub fn render(&self, pres: &Presentation) -> String {
        let mut parts = Vec::new();
        let letter = |name: String, e: i64| -> String {
            if e == 1 {
                name
            } else {
                format!("{name}^{e}")
            }
        };
        let prefix = pres.normal_prefix();
        for i in 0..pres.m {
            if pres.is_torus() {
                let e = self.exps[i];
                if e != 0 {
                    parts.push(letter(format!("{prefix}{}", i + 1), e as i64));
                }
            } else {
                let (a, b) = (self.exps[2 * i], self.exps[2 * i + 1]);
                if a > 0 {
                    parts.push(letter(format!("{prefix}{}", i + 1), a as i64));
                }
                if b > 0 {
                    parts.push(letter(format!("{prefix}{}'", i + 1), b as i64));
                }
            }
        }
        if let (Some(c), true) = (pres.central_name(), self.central > 0) {
            parts.push(letter(c.to_string(), self.central as i64));
        }
        if self.inv > 0 {
            parts.push(letter("u".into(), self.inv as i64));
        }
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
            .then_with(|| self.central.cmp(&other.central))
            .then_with(|| self.inv.cmp(&other.inv))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_words() {
        let p = Presentation::even_sphere(2);
        assert_eq!(Monomial::one(&p).render(&p), "1");
        assert_eq!(Monomial::new(vec![1, 2, 0, 1], 3, 0).render(&p), "z1*z1'^2*z2'*x^3");
        let t = Presentation::torus(2);
        assert_eq!(Monomial::new(vec![-1, 2], 0, 0).render(&t), "U1^-1*U2^2");
    }

    #[test]
    fn normality() {
        let p = Presentation::odd_sphere(2);
        assert!(Monomial::new(vec![1, 1, 1, 0], 0, 0).is_normal(&p));
        assert!(!Monomial::new(vec![0, 0, 1, 1], 0, 0).is_normal(&p));
        let b = Presentation::ball(2, true);
        assert!(!Monomial::new(vec![0; 4], 1, 1).is_normal(&b));
    }

    #[test]
    fn lower_degree_first() {
        let p = Presentation::odd_sphere(2);
        let z1 = Monomial::new(vec![1, 0, 0, 0], 0, 0);
        let z2 = Monomial::new(vec![0, 0, 1, 0], 0, 0);
        let z1z2 = Monomial::new(vec![1, 0, 1, 0], 0, 0);
        assert!(Monomial::one(&p) < z1 && z1 < z2 && z2 < z1z2);
    }
}
