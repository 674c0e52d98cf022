//! Schottky groups as free groups on hyperbolic Möbius generators.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Pow, ToPrimitive, Zero};
use thiserror::Error;

use crate::disc::Disc;
use crate::padic::{exp_f64, Classification, Exponent, Mobius, Prime, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchottkyError {
    #[error("a Schottky group needs at least one generator")]
    NoGenerators,
    #[error("generator {0} is not hyperbolic")]
    NotHyperbolic(usize),
    #[error("generators {0} and {1} coincide projectively")]
    DuplicateGenerator(usize, usize),
    #[error("generator {0} is over a different prime")]
    PrimeMismatch(usize),
    #[error("word enumeration needs {needed} words, cap is {cap}")]
    Budget { needed: u128, cap: usize },
    #[error("series diverges: (2g-1) p^(-s) >= 1 for g = {genus}, p = {prime}, s = {s}")]
    Divergence {
        genus: usize,
        prime: u32,
        s: Exponent,
    },
    #[error("fundamental domain needs {expected} discs, got {got}")]
    DiscCount { expected: usize, got: usize },
}

/// Letter index in `0..2g`: `i < g` is generator `i`, `i + g` its inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(pub u8);

impl Letter {
    pub fn generator(i: usize) -> Self {
        Letter(i as u8)
    }

    pub fn inverse_of_generator(i: usize, genus: usize) -> Self {
        Letter((i + genus) as u8)
    }

    pub fn inverse(self, genus: usize) -> Self {
        Letter(((self.0 as usize + genus) % (2 * genus)) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A freely reduced word over the `2g` letter alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    genus: usize,
    letters: Vec<Letter>,
}

impl Word {
    pub fn identity(genus: usize) -> Self {
        Word {
            genus,
            letters: Vec::new(),
        }
    }

    pub fn from_letters(genus: usize, letters: impl IntoIterator<Item = Letter>) -> Self {
        let mut out: Vec<Letter> = Vec::new();
        for l in letters {
            assert!(l.index() < 2 * genus, "letter out of range");
            if out.last() == Some(&l.inverse(genus)) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word {
            genus,
            letters: out,
        }
    }

    /// Parse `a`, `b`, ... for generators and `A`, `B`, ... for inverses; `e` is the identity.
    pub fn parse(genus: usize, s: &str) -> Option<Self> {
        let mut letters = Vec::new();
        for ch in s.chars() {
            if ch == 'e' && s.len() == 1 {
                break;
            }
            let l = if ch.is_ascii_lowercase() {
                Letter::generator((ch as u8 - b'a') as usize)
            } else if ch.is_ascii_uppercase() {
                Letter::inverse_of_generator((ch as u8 - b'A') as usize, genus)
            } else {
                return None;
            };
            if l.index() >= 2 * genus {
                return None;
            }
            letters.push(l);
        }
        Some(Self::from_letters(genus, letters))
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word {
            genus: self.genus,
            letters: self
                .letters
                .iter()
                .rev()
                .map(|l| l.inverse(self.genus))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Word) -> Word {
        Self::from_letters(
            self.genus,
            self.letters.iter().chain(other.letters.iter()).copied(),
        )
    }
}

pub fn word_length(w: &Word) -> usize {
    w.len()
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "e");
        }
        for l in &self.letters {
            let i = l.index();
            let ch = if i < self.genus {
                (b'a' + i as u8) as char
            } else {
                (b'A' + (i - self.genus) as u8) as char
            };
            write!(f, "{ch}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SchottkyGroup {
    prime: Prime,
    generators: Vec<Mobius>,
    alphabet: Vec<Mobius>,
}

impl SchottkyGroup {
    pub fn new(prime: Prime, generators: Vec<Mobius>) -> Result<Self, SchottkyError> {
        if generators.is_empty() {
            return Err(SchottkyError::NoGenerators);
        }
        for (i, m) in generators.iter().enumerate() {
            if m.prime() != prime {
                return Err(SchottkyError::PrimeMismatch(i));
            }
            if m.classify() != Classification::Hyperbolic {
                return Err(SchottkyError::NotHyperbolic(i));
            }
            for (j, n) in generators.iter().enumerate().take(i) {
                if n == m {
                    return Err(SchottkyError::DuplicateGenerator(j, i));
                }
            }
        }
        let mut alphabet = generators.clone();
        alphabet.extend(generators.iter().map(Mobius::inverse));
        Ok(SchottkyGroup {
            prime,
            generators,
            alphabet,
        })
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn genus(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Mobius] {
        &self.generators
    }

    pub fn letter_map(&self, l: Letter) -> &Mobius {
        &self.alphabet[l.index()]
    }

    pub fn word_to_mobius(&self, w: &Word) -> Mobius {
        w.letters()
            .iter()
            .fold(Mobius::identity(self.prime), |acc, l| {
                acc.compose(self.letter_map(*l))
            })
    }

    /// All reduced words of length `≤ l_max`, grouped by length.
    pub fn enumerate_words(
        &self,
        l_max: usize,
        cap: Option<usize>,
    ) -> Result<Vec<Vec<Word>>, SchottkyError> {
        let g = self.genus();
        check_budget(g, l_max, cap)?;
        let mut levels = vec![vec![Word::identity(g)]];
        for _ in 0..l_max {
            let prev = levels.last().expect("nonempty");
            let mut next = Vec::with_capacity(prev.len() * (2 * g - 1).max(1));
            for w in prev {
                let banned = w.letters().last().map(|l| l.inverse(g));
                for x in 0..2 * g {
                    let x = Letter(x as u8);
                    if Some(x) != banned {
                        let mut letters = w.letters().to_vec();
                        letters.push(x);
                        next.push(Word { genus: g, letters });
                    }
                }
            }
            levels.push(next);
        }
        Ok(levels)
    }
}

fn check_budget(g: usize, l_max: usize, cap: Option<usize>) -> Result<(), SchottkyError> {
    if let Some(cap) = cap {
        let needed = (0..=l_max)
            .map(|l| word_count(g, l))
            .fold(0u128, |a, b| a.saturating_add(b));
        if needed > cap as u128 {
            return Err(SchottkyError::Budget { needed, cap });
        }
    }
    Ok(())
}

/// Number of reduced words of length `l`: `2g(2g-1)^(l-1)`, and 1 for `l = 0`.
pub fn word_count(g: usize, l: usize) -> u128 {
    if l == 0 {
        return 1;
    }
    let base = (2 * g - 1) as u128;
    (2 * g as u128).saturating_mul(base.saturating_pow(l as u32 - 1))
}

/// The cruder counting bound `(2g)^l`.
pub fn coarse_word_bound(g: usize, l: usize) -> u128 {
    (2 * g as u128).saturating_pow(l as u32)
}

/// Breadth-first table of reduced words with cached matrices.
#[derive(Clone, Debug)]
pub struct WordTable {
    pub words: Vec<Word>,
    pub maps: Vec<Mobius>,
    /// Position of the inverse word.
    pub inverse: Vec<usize>,
    pub l_max: usize,
}

impl WordTable {
    pub fn new(
        group: &SchottkyGroup,
        l_max: usize,
        cap: Option<usize>,
    ) -> Result<Self, SchottkyError> {
        check_budget(group.genus(), l_max, cap)?;
        let g = group.genus();
        let mut words = vec![Word::identity(g)];
        let mut maps = vec![Mobius::identity(group.prime())];
        let mut start = 0;
        for _ in 0..l_max {
            let end = words.len();
            for i in start..end {
                let banned = words[i].letters().last().map(|l| l.inverse(g));
                for x in 0..2 * g {
                    let x = Letter(x as u8);
                    if Some(x) == banned {
                        continue;
                    }
                    let mut letters = words[i].letters().to_vec();
                    letters.push(x);
                    let m = maps[i].compose(group.letter_map(x));
                    words.push(Word { genus: g, letters });
                    maps.push(m);
                }
            }
            start = end;
        }
        let index: HashMap<&Word, usize> = words.iter().enumerate().map(|(i, w)| (w, i)).collect();
        let inverse = words.iter().map(|w| index[&w.inverse()]).collect();
        Ok(WordTable {
            words,
            maps,
            inverse,
            l_max,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// `2g` discs; generator `i` maps the complement of disc `i` onto disc `i + g`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoodFundamentalDomain {
    pub discs: Vec<Disc>,
}

impl GoodFundamentalDomain {
    pub fn new(genus: usize, discs: Vec<Disc>) -> Result<Self, SchottkyError> {
        if discs.len() != 2 * genus {
            return Err(SchottkyError::DiscCount {
                expected: 2 * genus,
                got: discs.len(),
            });
        }
        Ok(GoodFundamentalDomain { discs })
    }

    /// Whether a point lies outside every hole disc.
    pub fn contains(&self, x: &crate::padic::ProjectivePoint) -> bool {
        self.discs.iter().all(|d| !d.contains(x))
    }

    pub fn translate(&self, m: &Mobius) -> GoodFundamentalDomain {
        GoodFundamentalDomain {
            discs: self.discs.iter().map(|d| d.image(m)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckEntry {
    Disjointness {
        first: usize,
        second: usize,
        ok: bool,
    },
    Pairing {
        generator: usize,
        ok: bool,
    },
}

impl CheckEntry {
    pub fn ok(&self) -> bool {
        match self {
            CheckEntry::Disjointness { ok, .. } | CheckEntry::Pairing { ok, .. } => *ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
    pub valid: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.ok())
    }
}

pub fn validate_fundamental_domain(
    group: &SchottkyGroup,
    f: &GoodFundamentalDomain,
    generators: Option<&[Mobius]>,
) -> ValidationReport {
    let gens = generators.unwrap_or(group.generators());
    let g = gens.len();
    let mut entries = Vec::new();
    for i in 0..f.discs.len() {
        for j in i + 1..f.discs.len() {
            entries.push(CheckEntry::Disjointness {
                first: i,
                second: j,
                ok: f.discs[i].is_disjoint(&f.discs[j]),
            });
        }
    }
    for (i, m) in gens.iter().enumerate() {
        let ok =
            f.discs.len() == 2 * g && f.discs[i].complement().image(m).same_set(&f.discs[i + g]);
        entries.push(CheckEntry::Pairing { generator: i, ok });
    }
    let valid = entries.iter().all(CheckEntry::ok);
    ValidationReport { entries, valid }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Number {
    Exact(Rational),
    Approx(f64),
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Exact(r) => write!(f, "{r}"),
            Number::Approx(x) => write!(f, "{x}"),
        }
    }
}

impl Number {
    pub fn to_f64(&self) -> f64 {
        match self {
            Number::Exact(r) => rational_to_f64(r),
            Number::Approx(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Number::Exact(r) => Some(r),
            Number::Approx(_) => None,
        }
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// `Σ_{ℓ(γ) ≤ L} p^(-sℓ(γ))` with its geometric tail and the closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthSeries {
    pub truncated: Number,
    pub tail: Number,
    pub closed_form: Number,
    /// `p^s > 2g`, the cruder sufficient condition.
    pub coarse_condition: bool,
}

/// `p^s > base` for `s = a/b > 0`, decided exactly as `p^a > base^b`.
pub fn power_exceeds(p: Prime, s: Exponent, base: u64) -> bool {
    let (a, b) = (*s.numer(), *s.denom());
    if a <= 0 {
        return base < 1;
    }
    BigInt::from(p.get()).pow(a as u32) > BigInt::from(base).pow(b as u32)
}

pub fn series_converges(genus: usize, p: Prime, s: Exponent) -> bool {
    s > Exponent::zero() && power_exceeds(p, s, (2 * genus - 1) as u64)
}

pub fn gamma_length_series(
    genus: usize,
    p: Prime,
    s: Exponent,
    l_max: usize,
) -> Result<LengthSeries, SchottkyError> {
    if !series_converges(genus, p, s) {
        return Err(SchottkyError::Divergence {
            genus,
            prime: p.get(),
            s,
        });
    }
    let coarse_condition = power_exceeds(p, s, 2 * genus as u64);
    let g2 = 2 * genus as i64;
    if s.is_integer() {
        let x = p.pow_rational(-*s.numer());
        let r = Rational::from_integer((g2 - 1).into()) * &x;
        let lead = Rational::from_integer(g2.into()) * &x;
        let mut truncated = Rational::one();
        let mut term = lead.clone();
        for _ in 1..=l_max {
            truncated += &term;
            term *= &r;
        }
        let one_minus_r = Rational::one() - &r;
        let tail = &term / &one_minus_r;
        let closed_form = Rational::one() + &lead / &one_minus_r;
        Ok(LengthSeries {
            truncated: Number::Exact(truncated),
            tail: Number::Exact(tail),
            closed_form: Number::Exact(closed_form),
            coarse_condition,
        })
    } else {
        let x = p.as_f64().powf(-exp_f64(s));
        let r = (g2 - 1) as f64 * x;
        let lead = g2 as f64 * x;
        let truncated = 1.0 + (0..l_max).map(|l| lead * r.powi(l as i32)).sum::<f64>();
        let tail = lead * r.powi(l_max as i32) / (1.0 - r);
        Ok(LengthSeries {
            truncated: Number::Approx(truncated),
            tail: Number::Approx(tail),
            closed_form: Number::Approx(1.0 + lead / (1.0 - r)),
            coarse_condition,
        })
    }
}

/// Tail of the length series after `l`; zero-length shift gives the closed form minus one.
pub fn length_series_tail(
    genus: usize,
    p: Prime,
    s: Exponent,
    l: usize,
) -> Result<f64, SchottkyError> {
    Ok(gamma_length_series(genus, p, s, l)?.tail.to_f64())
}

impl fmt::Display for LengthSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "truncated {:?}, tail {:?}, closed {:?}",
            self.truncated, self.tail, self.closed_form
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::int;

    fn tate(p: u32, q: i64) -> SchottkyGroup {
        let p = Prime::new(p).unwrap();
        SchottkyGroup::new(p, vec![Mobius::from_i64(q, 0, 0, 1, p).unwrap()]).unwrap()
    }

    #[test]
    fn lengths_reduce() {
        let w = Word::parse(2, "aA").unwrap();
        assert_eq!(word_length(&w), 0);
        assert_eq!(Word::parse(2, "ab").unwrap().len(), 2);
        assert_eq!(
            Word::parse(2, "abBa").unwrap(),
            Word::parse(2, "aa").unwrap()
        );
        assert_eq!(Word::parse(2, "abBa").unwrap().to_string(), "aa");
    }

    #[test]
    fn enumeration_counts() {
        let p = Prime::new(5).unwrap();
        let g2 = SchottkyGroup::new(
            p,
            vec![
                Mobius::from_i64(2, 5, 1, 0, p).unwrap(),
                Mobius::from_i64(3, 2, 1, -1, p).unwrap(),
            ],
        )
        .unwrap();
        let words = g2.enumerate_words(2, None).unwrap();
        assert_eq!(words[1].len(), 4);
        assert_eq!(words[2].len(), 12);
        let t = tate(2, 4).enumerate_words(3, None).unwrap();
        let l3: Vec<String> = t[3].iter().map(|w| w.to_string()).collect();
        assert_eq!(l3, vec!["aaa", "AAA"]);
        assert!(matches!(
            g2.enumerate_words(6, Some(100)),
            Err(SchottkyError::Budget { .. })
        ));
    }

    #[test]
    fn group_validation() {
        let p = Prime::new(3).unwrap();
        let ell = Mobius::from_i64(0, -1, 1, 0, p).unwrap();
        assert_eq!(
            SchottkyGroup::new(p, vec![ell]).unwrap_err(),
            SchottkyError::NotHyperbolic(0)
        );
        let h = Mobius::from_i64(3, 0, 0, 1, p).unwrap();
        assert_eq!(
            SchottkyGroup::new(p, vec![h.clone(), h]).unwrap_err(),
            SchottkyError::DuplicateGenerator(0, 1)
        );
        assert_eq!(
            SchottkyGroup::new(p, vec![]).unwrap_err(),
            SchottkyError::NoGenerators
        );
    }

    #[test]
    fn word_maps() {
        let g = tate(2, 4);
        let a = Word::parse(1, "a").unwrap();
        assert_eq!(g.word_to_mobius(&a), g.generators()[0]);
        assert!(g.word_to_mobius(&Word::identity(1)).is_identity());
        assert!(g.word_to_mobius(&a.mul(&a.inverse())).is_identity());
        let table = WordTable::new(&g, 3, None).unwrap();
        assert_eq!(table.len(), 7);
        for (i, w) in table.words.iter().enumerate() {
            assert_eq!(table.maps[i], g.word_to_mobius(w));
            assert_eq!(table.words[table.inverse[i]], w.inverse());
        }
    }

    #[test]
    fn tate_domain_validates() {
        let g = tate(2, 4);
        let p = g.prime();
        let d1 = Disc::closed(p, int(0), Exponent::from_integer(0)).complement();
        let d2 = Disc::closed(p, int(0), Exponent::from_integer(-2));
        let f = GoodFundamentalDomain::new(1, vec![d1.clone(), d2]).unwrap();
        assert!(validate_fundamental_domain(&g, &f, None).valid);
        let bad = GoodFundamentalDomain::new(
            1,
            vec![d1, Disc::closed(p, int(0), Exponent::from_integer(1))],
        )
        .unwrap();
        let report = validate_fundamental_domain(&g, &bad, None);
        assert!(!report.valid);
        assert!(report
            .failures()
            .any(|e| matches!(e, CheckEntry::Disjointness { .. })));
    }

    #[test]
    fn series_examples() {
        let p2 = Prime::new(2).unwrap();
        let s = gamma_length_series(1, p2, Exponent::from_integer(1), 4).unwrap();
        assert_eq!(s.closed_form, Number::Exact(int(3)));
        let p5 = Prime::new(5).unwrap();
        let s = gamma_length_series(2, p5, Exponent::from_integer(1), 3).unwrap();
        assert_eq!(s.closed_form, Number::Exact(int(3)));
        assert!(s.coarse_condition);
        assert!(
            !gamma_length_series(2, Prime::new(3).unwrap(), Exponent::new(5, 4), 3)
                .unwrap()
                .coarse_condition
        );
        let t = gamma_length_series(2, p5, Exponent::from_integer(1), 0).unwrap();
        assert_eq!(t.tail, Number::Exact(int(2)));
        assert!(gamma_length_series(2, p2, Exponent::from_integer(1), 3).is_err());
        let half = gamma_length_series(1, p2, Exponent::new(1, 2), 50).unwrap();
        let closed = 1.0 + 2.0 * 2f64.powf(-0.5) / (1.0 - 2f64.powf(-0.5));
        assert!((half.closed_form.to_f64() - closed).abs() < 1e-12);
    }

    #[test]
    fn word_count_formula() {
        assert_eq!(word_count(1, 3), 2);
        assert_eq!(word_count(2, 2), 12);
        assert_eq!(coarse_word_bound(2, 2), 16);
        assert!(BigInt::zero() < BigInt::from(word_count(3, 8)));
    }
}
