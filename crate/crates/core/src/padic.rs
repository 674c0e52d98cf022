//! Exact p-adic arithmetic on rational points.
//!
//! Points live in `Q ⊂ Q_p`. Absolute values are kept as exact
//! `(prime, exponent)` pairs with rational exponents so that radii from
//! the value group `p^Q` of `C_p` can be represented without floats.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;
pub type Exponent = Rational64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PadicError {
    #[error("{0} is not a prime")]
    NotPrime(u32),
    #[error("singular matrix (determinant zero)")]
    Singular,
    #[error("point is the pole of the transformation")]
    Pole,
    #[error("matrices over different primes")]
    PrimeMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prime(u32);

impl Prime {
    pub fn new(p: u32) -> Result<Self, PadicError> {
        if p < 2 || (2..).take_while(|d| d * d <= p).any(|d| p % d == 0) {
            return Err(PadicError::NotPrime(p));
        }
        Ok(Prime(p))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// `p^e` as an exact rational, for integer `e` of either sign.
    pub fn pow_rational(self, e: i64) -> Rational {
        let base = BigInt::from(self.0).pow(e.unsigned_abs() as u32);
        if e >= 0 {
            Rational::from_integer(base)
        } else {
            Rational::new(BigInt::one(), base)
        }
    }

    pub fn pow_f64(self, e: Exponent) -> f64 {
        self.as_f64().powf(exp_f64(e))
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn exp_f64(e: Exponent) -> f64 {
    *e.numer() as f64 / *e.denom() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }
}

impl PartialOrd for Valuation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Valuation {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Valuation::Infinite, Valuation::Infinite) => Ordering::Equal,
            (Valuation::Infinite, _) => Ordering::Greater,
            (_, Valuation::Infinite) => Ordering::Less,
            (Valuation::Finite(a), Valuation::Finite(b)) => a.cmp(b),
        }
    }
}

/// Multiplicity of `p` in a nonzero integer; `None` for zero.
pub fn valuation_int(n: &BigInt, p: Prime) -> Option<i64> {
    if n.is_zero() {
        return None;
    }
    if p.0 == 2 {
        return n.trailing_zeros().map(|t| t as i64);
    }
    if let Some(mut m) = n.to_i128() {
        let pp = p.0 as i128;
        let mut v = 0;
        while m % pp == 0 {
            m /= pp;
            v += 1;
        }
        return Some(v);
    }
    let pb = BigInt::from(p.0);
    let mut m = n.clone();
    let mut v = 0;
    loop {
        let (q, r) = m.div_rem(&pb);
        if !r.is_zero() {
            return Some(v);
        }
        m = q;
        v += 1;
    }
}

pub fn valuation(x: &Rational, p: Prime) -> Valuation {
    match valuation_int(x.numer(), p) {
        None => Valuation::Infinite,
        Some(vn) => Valuation::Finite(vn - valuation_int(x.denom(), p).unwrap_or(0)),
    }
}

/// `v_p(x - y)` computed on the integer cross difference.
pub fn val_diff(x: &Rational, y: &Rational, p: Prime) -> Valuation {
    let num = x.numer() * y.denom() - y.numer() * x.denom();
    match valuation_int(&num, p) {
        None => Valuation::Infinite,
        Some(vn) => Valuation::Finite(
            vn - valuation_int(x.denom(), p).unwrap_or(0)
                - valuation_int(y.denom(), p).unwrap_or(0),
        ),
    }
}

/// Exact p-adic absolute value `p^exponent`; `exponent = None` encodes 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AbsValue {
    pub prime: Prime,
    pub exponent: Option<Exponent>,
}

impl AbsValue {
    pub fn zero(prime: Prime) -> Self {
        AbsValue {
            prime,
            exponent: None,
        }
    }

    pub fn one(prime: Prime) -> Self {
        Self::pow(prime, Exponent::zero())
    }

    pub fn pow(prime: Prime, e: Exponent) -> Self {
        AbsValue {
            prime,
            exponent: Some(e),
        }
    }

    pub fn from_valuation(prime: Prime, v: Valuation) -> Self {
        match v {
            Valuation::Infinite => Self::zero(prime),
            Valuation::Finite(v) => Self::pow(prime, Exponent::from_integer(-v)),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.exponent.is_none()
    }

    pub fn to_f64(&self) -> f64 {
        match self.exponent {
            None => 0.0,
            Some(e) => self.prime.pow_f64(e),
        }
    }

    /// `|x|^(-s)`; panics on zero.
    pub fn neg_pow_f64(&self, s: f64) -> f64 {
        let e = self.exponent.expect("negative power of zero");
        self.prime.as_f64().powf(-exp_f64(e) * s)
    }

    pub fn to_rational(&self) -> Option<Rational> {
        match self.exponent {
            None => Some(Rational::zero()),
            Some(e) if e.is_integer() => Some(self.prime.pow_rational(*e.numer())),
            Some(_) => None,
        }
    }

    pub fn mul(&self, other: &AbsValue) -> AbsValue {
        let exponent = match (self.exponent, other.exponent) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        AbsValue {
            prime: self.prime,
            exponent,
        }
    }

    pub fn div(&self, other: &AbsValue) -> AbsValue {
        let b = other.exponent.expect("division by zero absolute value");
        AbsValue {
            prime: self.prime,
            exponent: self.exponent.map(|a| a - b),
        }
    }

    pub fn max(self, other: AbsValue) -> AbsValue {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl PartialOrd for AbsValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.prime != other.prime {
            return None;
        }
        Some(match (self.exponent, other.exponent) {
            (None, None) => Ordering::Equal,
            (None, _) => Ordering::Less,
            (_, None) => Ordering::Greater,
            (Some(a), Some(b)) => a.cmp(&b),
        })
    }
}

impl fmt::Display for AbsValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exponent {
            None => write!(f, "0"),
            Some(e) => write!(f, "{}^({})", self.prime, e),
        }
    }
}

pub fn abs_p(x: &Rational, p: Prime) -> AbsValue {
    AbsValue::from_valuation(p, valuation(x, p))
}

pub fn abs_diff(x: &Rational, y: &Rational, p: Prime) -> AbsValue {
    AbsValue::from_valuation(p, val_diff(x, y, p))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PAdicScalar {
    pub value: Rational,
    pub prime: Prime,
}

impl PAdicScalar {
    pub fn new(value: Rational, prime: Prime) -> Self {
        PAdicScalar { value, prime }
    }

    pub fn valuation(&self) -> Valuation {
        valuation(&self.value, self.prime)
    }

    pub fn abs(&self) -> AbsValue {
        abs_p(&self.value, self.prime)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ProjectivePoint {
    Finite(Rational),
    Infinity,
}

impl ProjectivePoint {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            ProjectivePoint::Finite(x) => Some(x),
            ProjectivePoint::Infinity => None,
        }
    }
}

impl From<Rational> for ProjectivePoint {
    fn from(x: Rational) -> Self {
        ProjectivePoint::Finite(x)
    }
}

impl fmt::Display for ProjectivePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectivePoint::Finite(x) => write!(f, "{x}"),
            ProjectivePoint::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Hyperbolic,
    NonHyperbolic,
}

/// `z ↦ (az + b)/(cz + d)` in PGL2(Q_p).
///
/// Entries are stored as coprime integers with the first nonzero entry
/// positive, so derived equality is projective equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mobius {
    a: BigInt,
    b: BigInt,
    c: BigInt,
    d: BigInt,
    prime: Prime,
}

impl Mobius {
    pub fn new(
        a: Rational,
        b: Rational,
        c: Rational,
        d: Rational,
        prime: Prime,
    ) -> Result<Self, PadicError> {
        let l = [&a, &b, &c, &d]
            .iter()
            .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
        let scale = |x: &Rational| (x * Rational::from_integer(l.clone())).to_integer();
        Self::from_integers(scale(&a), scale(&b), scale(&c), scale(&d), prime)
    }

    pub fn from_i64(a: i64, b: i64, c: i64, d: i64, prime: Prime) -> Result<Self, PadicError> {
        Self::from_integers(a.into(), b.into(), c.into(), d.into(), prime)
    }

    pub fn from_integers(
        a: BigInt,
        b: BigInt,
        c: BigInt,
        d: BigInt,
        prime: Prime,
    ) -> Result<Self, PadicError> {
        if (&a * &d - &b * &c).is_zero() {
            return Err(PadicError::Singular);
        }
        let g = a.gcd(&b).gcd(&c).gcd(&d);
        let first_negative = [&a, &b, &c, &d]
            .into_iter()
            .find(|x| !x.is_zero())
            .is_some_and(|x| x.is_negative());
        let g = if first_negative { -g } else { g };
        Ok(Mobius {
            a: a / &g,
            b: b / &g,
            c: c / &g,
            d: d / &g,
            prime,
        })
    }

    pub fn identity(prime: Prime) -> Self {
        Mobius {
            a: BigInt::one(),
            b: BigInt::zero(),
            c: BigInt::zero(),
            d: BigInt::one(),
            prime,
        }
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn entries(&self) -> [&BigInt; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    pub fn det(&self) -> BigInt {
        &self.a * &self.d - &self.b * &self.c
    }

    pub fn trace(&self) -> BigInt {
        &self.a + &self.d
    }

    /// Matrix product `self · other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        Self::from_integers(
            &self.a * &other.a + &self.b * &other.c,
            &self.a * &other.b + &self.b * &other.d,
            &self.c * &other.a + &self.d * &other.c,
            &self.c * &other.b + &self.d * &other.d,
            self.prime,
        )
        .expect("product of invertible matrices")
    }

    pub fn inverse(&self) -> Mobius {
        Self::from_integers(
            self.d.clone(),
            -&self.b,
            -&self.c,
            self.a.clone(),
            self.prime,
        )
        .expect("inverse of invertible matrix")
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.prime)
    }

    pub fn pole(&self) -> ProjectivePoint {
        if self.c.is_zero() {
            ProjectivePoint::Infinity
        } else {
            ProjectivePoint::Finite(Rational::new(-&self.d, self.c.clone()))
        }
    }

    pub fn apply(&self, x: &ProjectivePoint) -> ProjectivePoint {
        match x {
            ProjectivePoint::Infinity => self.apply_infinity(),
            ProjectivePoint::Finite(x) => self.apply_finite(x),
        }
    }

    fn apply_infinity(&self) -> ProjectivePoint {
        if self.c.is_zero() {
            ProjectivePoint::Infinity
        } else {
            ProjectivePoint::Finite(Rational::new(self.a.clone(), self.c.clone()))
        }
    }

    pub fn apply_finite(&self, x: &Rational) -> ProjectivePoint {
        let (n, m) = (x.numer(), x.denom());
        let num = &self.a * n + &self.b * m;
        let den = &self.c * n + &self.d * m;
        if den.is_zero() {
            ProjectivePoint::Infinity
        } else {
            ProjectivePoint::Finite(Rational::new(num, den))
        }
    }

    /// `v_p(m'(x)) = v_p(det) - 2 v_p(cx + d)`.
    pub fn derivative_valuation(&self, x: &Rational) -> Result<i64, PadicError> {
        let den = &self.c * x.numer() + &self.d * x.denom();
        let vden = valuation_int(&den, self.prime).ok_or(PadicError::Pole)?;
        let vm = valuation_int(x.denom(), self.prime).unwrap_or(0);
        let vdet = valuation_int(&self.det(), self.prime).expect("nonsingular");
        Ok(vdet - 2 * (vden - vm))
    }

    pub fn derivative_abs(&self, x: &Rational) -> Result<AbsValue, PadicError> {
        let v = self.derivative_valuation(x)?;
        Ok(AbsValue::from_valuation(self.prime, Valuation::Finite(v)))
    }

    /// Hyperbolic iff `v_p(tr² / det) < 0`.
    pub fn classify(&self) -> Classification {
        let t = self.trace();
        let q = Rational::new(&t * &t, self.det());
        match valuation(&q, self.prime) {
            Valuation::Finite(v) if v < 0 => Classification::Hyperbolic,
            _ => Classification::NonHyperbolic,
        }
    }
}

impl fmt::Display for Mobius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} {}; {} {}]", self.a, self.b, self.c, self.d)
    }
}

/// A nonzero rational as `p^v · u` with the unit `u` reduced modulo `p^N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Residue {
    pub v: i64,
    pub u: u64,
}

/// Arithmetic in `Z/p^N` with `p^N < 2^62`, used to compare valuations fast.
#[derive(Clone, Copy, Debug)]
pub struct ResidueRing {
    prime: Prime,
    modulus: u64,
}

impl ResidueRing {
    pub fn new(prime: Prime) -> Self {
        let p = prime.0 as u64;
        let mut modulus = p;
        while modulus <= (1u64 << 62) / p {
            modulus *= p;
        }
        ResidueRing { prime, modulus }
    }

    fn reduce(&self, n: &BigInt) -> u64 {
        let m = BigInt::from(self.modulus);
        let r = n.mod_floor(&m);
        r.to_u64().expect("reduced below modulus")
    }

    fn inverse(&self, a: u64) -> u64 {
        let (mut old_r, mut r) = (a as i128, self.modulus as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        old_s.rem_euclid(self.modulus as i128) as u64
    }

    /// `None` for zero.
    pub fn of(&self, x: &Rational) -> Option<Residue> {
        let vn = valuation_int(x.numer(), self.prime)?;
        let vd = valuation_int(x.denom(), self.prime).unwrap_or(0);
        let pb = BigInt::from(self.prime.0);
        let n = x.numer() / num_traits::Pow::pow(&pb, vn as u64);
        let d = x.denom() / num_traits::Pow::pow(&pb, vd as u64);
        let u = (self.reduce(&n) as u128 * self.inverse(self.reduce(&d)) as u128
            % self.modulus as u128) as u64;
        Some(Residue { v: vn - vd, u })
    }

    /// `v_p(x - y)`, or `None` when the residues cannot decide it.
    pub fn val_diff(&self, x: Option<Residue>, y: Option<Residue>) -> Option<Valuation> {
        match (x, y) {
            (None, None) => Some(Valuation::Infinite),
            (Some(a), None) | (None, Some(a)) => Some(Valuation::Finite(a.v)),
            (Some(a), Some(b)) if a.v != b.v => Some(Valuation::Finite(a.v.min(b.v))),
            (Some(a), Some(b)) => {
                let mut w = (a.u + self.modulus - b.u) % self.modulus;
                if w == 0 {
                    return None;
                }
                let p = self.prime.0 as u64;
                let mut v = a.v;
                while w % p == 0 {
                    w /= p;
                    v += 1;
                }
                Some(Valuation::Finite(v))
            }
        }
    }
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(n.into())
}
