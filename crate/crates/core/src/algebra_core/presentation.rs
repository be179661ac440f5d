use std::fmt;

use super::AlgebraError;

/// The four families of twisted algebras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Unitaries `U1..Um`.
    Torus,
    /// Normal `z1..zm` with `sum z_i z_i* = 1`.
    OddSphere,
    /// Normal `z1..zm` and central self-adjoint `x` with `sum z_i z_i* + x^2 = 1`.
    EvenSphere,
    /// Normal `w1..wm` and central self-adjoint `y` with `sum w_i w_i* + y^2 = 1`,
    /// optionally with `u` satisfying `u (1 + y) = 1`.
    Ball { with_u: bool },
}

/// Which sign of `theta` the exchange relations use. `Swapped` exists only
/// as a negative control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PhaseConvention {
    /// `z2 z1 = rho z1 z2`.
    #[default]
    Standard,
    /// `z1 z2 = rho z2 z1`.
    Swapped,
}

/// A single generator, resolved against a presentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `z_i`, `w_i` or `U_i`, zero-based.
    Normal(usize),
    /// `x` or `y`.
    Central,
    /// `u`.
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Presentation {
    pub family: Family,
    pub m: usize,
    pub convention: PhaseConvention,
}

impl Presentation {
    pub fn new(family: Family, m: usize) -> Result<Self, AlgebraError> {
        if m == 0 {
            return Err(AlgebraError::InvalidPresentation("m must be at least 1".into()));
        }
        Ok(Self { family, m, convention: PhaseConvention::Standard })
    }

    pub fn torus(m: usize) -> Self {
        Self::new(Family::Torus, m).expect("m >= 1")
    }

    pub fn odd_sphere(m: usize) -> Self {
        Self::new(Family::OddSphere, m).expect("m >= 1")
    }

    pub fn even_sphere(m: usize) -> Self {
        Self::new(Family::EvenSphere, m).expect("m >= 1")
    }

    pub fn ball(m: usize, with_u: bool) -> Self {
        Self::new(Family::Ball { with_u }, m).expect("m >= 1")
    }

    pub fn with_convention(mut self, convention: PhaseConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn swapped(self) -> Self {
        self.with_convention(PhaseConvention::Swapped)
    }

    /// CLI names: `s3`, `s4`, `ball`, `ball-nou`, `torus` (and the long forms).
    pub fn by_name(name: &str, m: usize) -> Result<Self, AlgebraError> {
        let family = match name {
            "s3" | "odd" | "odd_sphere" => Family::OddSphere,
            "s4" | "even" | "even_sphere" => Family::EvenSphere,
            "ball" => Family::Ball { with_u: true },
            "ball-nou" | "ball_nou" => Family::Ball { with_u: false },
            "torus" | "t2" => Family::Torus,
            other => return Err(AlgebraError::InvalidPresentation(format!("unknown algebra '{other}'"))),
        };
        Self::new(family, m)
    }

    pub fn is_torus(&self) -> bool {
        self.family == Family::Torus
    }

    pub fn has_u(&self) -> bool {
        matches!(self.family, Family::Ball { with_u: true })
    }

    /// Sign applied to every exchange phase exponent.
    pub fn phase_sign(&self) -> i32 {
        match self.convention {
            PhaseConvention::Standard => 1,
            PhaseConvention::Swapped => -1,
        }
    }

    pub fn normal_prefix(&self) -> char {
        match self.family {
            Family::Torus => 'U',
            Family::OddSphere | Family::EvenSphere => 'z',
            Family::Ball { .. } => 'w',
        }
    }

    pub fn central_name(&self) -> Option<char> {
        match self.family {
            Family::EvenSphere => Some('x'),
            Family::Ball { .. } => Some('y'),
            _ => None,
        }
    }

    /// Number of exponent slots per monomial: `m` Laurent exponents for the
    /// torus, otherwise `2m` for the pairs `(a_i, b_i)`.
    pub fn slots(&self) -> usize {
        if self.is_torus() {
            self.m
        } else {
            2 * self.m
        }
    }

    pub fn generator(&self, name: &str) -> Option<Generator> {
        let mut chars = name.chars();
        let head = chars.next()?;
        let rest = chars.as_str();
        if rest.is_empty() {
            if Some(head) == self.central_name() {
                return Some(Generator::Central);
            }
            if head == 'u' && self.has_u() {
                return Some(Generator::Inverse);
            }
            return None;
        }
        if head != self.normal_prefix() || rest.starts_with('0') {
            return None;
        }
        let i: usize = rest.parse().ok()?;
        (1..=self.m).contains(&i).then_some(Generator::Normal(i - 1))
    }

    pub fn generator_name(&self, g: Generator) -> String {
        match g {
            Generator::Normal(i) => format!("{}{}", self.normal_prefix(), i + 1),
            Generator::Central => self.central_name().map(String::from).unwrap_or_default(),
            Generator::Inverse => "u".into(),
        }
    }

    pub fn generators(&self) -> Vec<Generator> {
        let mut out: Vec<Generator> = (0..self.m).map(Generator::Normal).collect();
        if self.central_name().is_some() {
            out.push(Generator::Central);
        }
        if self.has_u() {
            out.push(Generator::Inverse);
        }
        out
    }

    pub fn generator_names(&self) -> Vec<String> {
        self.generators().into_iter().map(|g| self.generator_name(g)).collect()
    }

    /// Defining relations as `(name, expression)`; each expression is zero in
    /// the algebra. Expressions use the grammar of [`super::parse_expr`].
    pub fn relations(&self) -> Vec<(String, String)> {
        let n = |i: usize| format!("{}{}", self.normal_prefix(), i + 1);
        // z_i z_j = rho_ji z_j z_i for i < j; rho_ji = rho^-1 in the standard convention.
        let inv = format!("rho^{}", -self.phase_sign());
        let fwd = format!("rho^{}", self.phase_sign());
        let mut rels = Vec::new();
        for i in 0..self.m {
            let zi = n(i);
            if self.is_torus() {
                rels.push((format!("unitary({zi})"), format!("{zi}*{zi}' - 1")));
                rels.push((format!("unitary({zi}')"), format!("{zi}'*{zi} - 1")));
            } else {
                rels.push((format!("normal({zi})"), format!("{zi}*{zi}' - {zi}'*{zi}")));
            }
            for j in 0..self.m {
                if i == j {
                    continue;
                }
                let zj = n(j);
                if i < j {
                    rels.push((format!("exchange({zi},{zj})"), format!("{zi}*{zj} - {inv}*{zj}*{zi}")));
                }
                if !self.is_torus() {
                    let phase = if i < j { &fwd } else { &inv };
                    rels.push((format!("starred({zi},{zj}')"), format!("{zi}*{zj}' - {phase}*{zj}'*{zi}")));
                }
            }
        }
        if !self.is_torus() {
            let mut radius: Vec<String> = (0..self.m).map(|i| format!("{0}*{0}'", n(i))).collect();
            if let Some(c) = self.central_name() {
                radius.push(format!("{c}^2"));
            }
            rels.push(("radius".into(), format!("{} - 1", radius.join(" + "))));
        }
        let mut centrals: Vec<String> = self.central_name().map(String::from).into_iter().collect();
        if self.has_u() {
            centrals.push("u".into());
        }
        for c in &centrals {
            rels.push((format!("self_adjoint({c})"), format!("{c} - {c}'")));
            for i in 0..self.m {
                let zi = n(i);
                rels.push((format!("central({c},{zi})"), format!("{c}*{zi} - {zi}*{c}")));
                rels.push((format!("central({c},{zi}')"), format!("{c}*{zi}' - {zi}'*{c}")));
            }
        }
        if self.has_u() {
            rels.push(("central(u,y)".into(), "u*y - y*u".into()));
            rels.push(("inverse(u)".into(), "u*(1 + y) - 1".into()));
        }
        rels
    }
}

impl fmt::Display for Presentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.m;
        match self.family {
            Family::Torus => write!(f, "torus({m})")?,
            Family::OddSphere => write!(f, "odd_sphere({m})")?,
            Family::EvenSphere => write!(f, "even_sphere({m})")?,
            Family::Ball { with_u: true } => write!(f, "ball({m}, with_u)")?,
            Family::Ball { with_u: false } => write!(f, "ball({m})")?,
        }
        if self.convention == PhaseConvention::Swapped {
            write!(f, "[swapped]")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_lookup() {
        let p = Presentation::ball(2, true);
        assert_eq!(p.generator("w2"), Some(Generator::Normal(1)));
        assert_eq!(p.generator("y"), Some(Generator::Central));
        assert_eq!(p.generator("u"), Some(Generator::Inverse));
        assert_eq!(p.generator("z1"), None);
        assert_eq!(p.generator("w3"), None);
        assert_eq!(p.generator("w01"), None);
        assert_eq!(Presentation::ball(2, false).generator("u"), None);
        assert_eq!(p.generator_names(), ["w1", "w2", "y", "u"]);
    }

    #[test]
    fn zero_generators_rejected() {
        assert!(Presentation::new(Family::Torus, 0).is_err());
        assert!(Presentation::by_name("klein", 2).is_err());
    }

    #[test]
    fn relation_counts() {
        // normality 2, exchange 1, starred 2, radius 1.
        assert_eq!(Presentation::odd_sphere(2).relations().len(), 6);
        // unitarity 4, exchange 1.
        assert_eq!(Presentation::torus(2).relations().len(), 5);
        // + self_adjoint(x) + 4 centrality.
        assert_eq!(Presentation::even_sphere(2).relations().len(), 11);
    }
}
