//! Discs of the projective line over `C_p` with rational centers.
//!
//! A finite disc is `{z : |z - c| ≤ p^ρ}` (closed) or `{z : |z - c| < p^ρ}`
//! (open). An outer disc is the complement of a finite one and contains ∞.
//! Set relations are decided as subsets of `P¹(C_p)`, whose value group is
//! dense and residue field infinite, not as subsets of `Q_p`.

use std::fmt;

use num_traits::Signed;
use thiserror::Error;

use crate::padic::{abs_diff, AbsValue, Exponent, Mobius, Prime, ProjectivePoint, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscError {
    #[error("pole of the transformation lies inside the disc")]
    PoleInsideDisc,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Disc {
    pub prime: Prime,
    pub center: Rational,
    /// Radius is `p^rho`.
    pub rho: Exponent,
    pub closed: bool,
    pub outer: bool,
}

impl Disc {
    pub fn closed(prime: Prime, center: Rational, rho: Exponent) -> Self {
        Disc {
            prime,
            center,
            rho,
            closed: true,
            outer: false,
        }
    }

    pub fn open(prime: Prime, center: Rational, rho: Exponent) -> Self {
        Disc {
            prime,
            center,
            rho,
            closed: false,
            outer: false,
        }
    }

    pub fn radius(&self) -> AbsValue {
        AbsValue::pow(self.prime, self.rho)
    }

    pub fn complement(&self) -> Disc {
        Disc {
            closed: !self.closed,
            outer: !self.outer,
            ..self.clone()
        }
    }

    fn finite_contains(&self, d: AbsValue) -> bool {
        let r = self.radius();
        if self.closed {
            d <= r
        } else {
            d < r
        }
    }

    pub fn contains(&self, x: &ProjectivePoint) -> bool {
        match x {
            ProjectivePoint::Infinity => self.outer,
            ProjectivePoint::Finite(x) => {
                let d = abs_diff(x, &self.center, self.prime);
                if self.outer {
                    !self.complement().finite_contains(d)
                } else {
                    self.finite_contains(d)
                }
            }
        }
    }

    pub fn contains_rational(&self, x: &Rational) -> bool {
        self.contains(&ProjectivePoint::Finite(x.clone()))
    }

    pub fn is_subset_of(&self, other: &Disc) -> bool {
        match (self.outer, other.outer) {
            (false, false) => {
                if !other.contains_rational(&self.center) {
                    return false;
                }
                self.rho < other.rho || (self.rho == other.rho && (other.closed || !self.closed))
            }
            (false, true) => self.is_disjoint(&other.complement()),
            (true, false) => false,
            (true, true) => other.complement().is_subset_of(&self.complement()),
        }
    }

    pub fn is_disjoint(&self, other: &Disc) -> bool {
        match (self.outer, other.outer) {
            (false, false) => {
                !other.contains_rational(&self.center) && !self.contains_rational(&other.center)
            }
            (false, true) => self.is_subset_of(&other.complement()),
            (true, false) => other.is_subset_of(&self.complement()),
            (true, true) => false,
        }
    }

    pub fn same_set(&self, other: &Disc) -> bool {
        self.is_subset_of(other) && other.is_subset_of(self)
    }

    /// Image of a disc under `m` as a subset of `P¹`.
    pub fn image(&self, m: &Mobius) -> Disc {
        if self.outer {
            return self.complement().image(m).complement();
        }
        match m.pole() {
            ProjectivePoint::Finite(pole) if self.contains_rational(&pole) => {
                let [a, _, c, _] = m.entries();
                let p = self.prime;
                let det = AbsValue::from_valuation(
                    p,
                    crate::padic::valuation(&Rational::from_integer(m.det()), p),
                );
                let cc = crate::padic::abs_p(&Rational::from_integer(c.clone()), p);
                let big = det.div(&cc.mul(&cc)).div(&self.radius());
                Disc {
                    prime: p,
                    center: Rational::new(a.clone(), c.clone()),
                    rho: big.exponent.expect("nonzero"),
                    closed: self.closed,
                    outer: true,
                }
            }
            _ => self.finite_image(m),
        }
    }

    fn finite_image(&self, m: &Mobius) -> Disc {
        let center = match m.apply_finite(&self.center) {
            ProjectivePoint::Finite(x) => x,
            ProjectivePoint::Infinity => unreachable!("pole outside the disc"),
        };
        let dv = m
            .derivative_valuation(&self.center)
            .expect("pole outside the disc");
        Disc {
            center,
            rho: self.rho - Exponent::from_integer(dv),
            ..self.clone()
        }
    }
}

/// Image of a finite disc whose closure misses the pole of `m`.
pub fn disc_image(m: &Mobius, d: &Disc) -> Result<Disc, DiscError> {
    if d.outer {
        return Err(DiscError::PoleInsideDisc);
    }
    if let ProjectivePoint::Finite(pole) = m.pole() {
        if d.contains_rational(&pole) {
            return Err(DiscError::PoleInsideDisc);
        }
    }
    Ok(d.finite_image(m))
}

impl fmt::Display for Disc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match (self.outer, self.closed) {
            (false, true) => "<=",
            (false, false) => "<",
            (true, true) => ">=",
            (true, false) => ">",
        };
        let c = if self.center.is_negative() {
            format!("({})", self.center)
        } else {
            self.center.to_string()
        };
        write!(f, "{{|z - {}| {} {}^({})}}", c, rel, self.prime, self.rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{int, rat};

    fn e(n: i64) -> Exponent {
        Exponent::from_integer(n)
    }

    #[test]
    fn membership_and_relations() {
        let p = Prime::new(2).unwrap();
        let d = Disc::closed(p, int(0), e(-1));
        assert!(d.contains_rational(&int(2)));
        assert!(!d.contains_rational(&int(1)));
        assert!(d.complement().contains(&ProjectivePoint::Infinity));
        let small = Disc::closed(p, int(4), e(-2));
        assert!(small.is_subset_of(&d));
        assert!(!d.is_subset_of(&small));
        let open = Disc::open(p, int(0), e(-1));
        assert!(open.is_subset_of(&d));
        assert!(!d.is_subset_of(&open));
        assert!(Disc::closed(p, int(1), e(-1)).is_disjoint(&d));
        assert!(!d.complement().is_disjoint(&d.complement()));
    }

    #[test]
    fn images() {
        let p = Prime::new(3).unwrap();
        let scale = Mobius::from_i64(9, 0, 0, 1, p).unwrap();
        let d = Disc::closed(p, int(1), e(-1));
        assert_eq!(
            disc_image(&scale, &d).unwrap(),
            Disc::closed(p, int(9), e(-3))
        );
        let inv = Mobius::from_i64(0, 1, 1, 0, p).unwrap();
        assert_eq!(
            disc_image(&inv, &d).unwrap(),
            Disc::closed(p, int(1), e(-1))
        );
        let at_zero = Disc::closed(p, int(0), e(-1));
        assert_eq!(disc_image(&inv, &at_zero), Err(DiscError::PoleInsideDisc));
        let img = at_zero.image(&inv);
        assert!(img.outer && img.closed);
        assert!(img.same_set(&Disc::open(p, int(0), e(1)).complement()));
        assert!(img.contains_rational(&rat(1, 3)));
    }
}
