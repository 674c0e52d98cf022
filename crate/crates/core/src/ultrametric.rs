//! Finite-depth orbit trees, equity measures and ω-induced measures.
//!
//! Each orbit is a rooted tree of closed discs. The tree ultrametric on
//! leaves is `diam(join)`; across orbits of one component it is the exact
//! distance between the orbit root discs.

use num_bigint::BigInt;
use num_integer::binomial;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::disc::{disc_image, Disc};
use crate::padic::{abs_diff, abs_p, AbsValue, Exponent, Mobius, Prime, ProjectivePoint, Rational};
use crate::schottky::{GoodFundamentalDomain, SchottkyGroup, Word};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UltrametricError {
    #[error("vertex {0} does not exist")]
    NoSuchVertex(usize),
    #[error("child radius exponent {child} is not below the parent's {parent}")]
    ChildNotSmaller { parent: Exponent, child: Exponent },
    #[error("child disc is not contained in its parent")]
    ChildOutsideParent,
    #[error("child disc meets sibling {0}")]
    OverlappingSiblings(usize),
    #[error("radius exponent {0} is not an integer")]
    NonIntegerRadius(Exponent),
    #[error("measure violates equity at vertex {0}")]
    NotEquitable(usize),
    #[error("form has a possible zero or pole on vertex {vertex} of orbit {orbit}")]
    FormVanishes { orbit: usize, vertex: usize },
    #[error("form has a possible zero or pole on the disc")]
    FormVanishesOnDisc,
    #[error("orbits {0} and {1} overlap")]
    OverlappingOrbits(usize, usize),
    #[error("orbit {orbit} meets hole disc {disc} of the fundamental domain")]
    OrbitOutsideDomain { orbit: usize, disc: usize },
    #[error("points coincide")]
    ZeroDistance,
    #[error("no orbits given")]
    EmptyDomain,
    #[error("both translate representatives are at infinity")]
    InfinitePoint,
    #[error("form denominator is the zero polynomial")]
    ZeroDenominator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub center: Rational,
    pub rho: Exponent,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitTree {
    prime: Prime,
    vertices: Vec<Vertex>,
}

impl OrbitTree {
    pub fn root(prime: Prime, center: Rational, rho: Exponent) -> Self {
        OrbitTree {
            prime,
            vertices: vec![Vertex {
                center,
                rho,
                parent: None,
                children: Vec::new(),
                depth: 0,
            }],
        }
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn disc(&self, v: usize) -> Disc {
        let x = &self.vertices[v];
        Disc::closed(self.prime, x.center.clone(), x.rho)
    }

    pub fn root_disc(&self) -> Disc {
        self.disc(0)
    }

    pub fn add_child(
        &mut self,
        parent: usize,
        center: Rational,
        rho: Exponent,
    ) -> Result<usize, UltrametricError> {
        let pv = self
            .vertices
            .get(parent)
            .ok_or(UltrametricError::NoSuchVertex(parent))?;
        if rho >= pv.rho {
            return Err(UltrametricError::ChildNotSmaller {
                parent: pv.rho,
                child: rho,
            });
        }
        let d = Disc::closed(self.prime, center.clone(), rho);
        if !d.is_subset_of(&self.disc(parent)) {
            return Err(UltrametricError::ChildOutsideParent);
        }
        if let Some(&s) = pv.children.iter().find(|&&s| !self.disc(s).is_disjoint(&d)) {
            return Err(UltrametricError::OverlappingSiblings(s));
        }
        let depth = pv.depth + 1;
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            center,
            rho,
            parent: Some(parent),
            children: Vec::new(),
            depth,
        });
        self.vertices[parent].children.push(id);
        Ok(id)
    }

    /// `p` children per vertex, radius exponent dropping by one per level.
    pub fn regular(
        prime: Prime,
        center: Rational,
        rho: i64,
        depth: usize,
    ) -> Result<Self, UltrametricError> {
        Self::with_profile(prime, center, rho, &vec![1; depth])
    }

    /// Level `k` splits each vertex into `p^drops[k]` children whose radius
    /// exponent is `drops[k]` lower.
    pub fn with_profile(
        prime: Prime,
        center: Rational,
        rho: i64,
        drops: &[u32],
    ) -> Result<Self, UltrametricError> {
        let mut tree = Self::root(prime, center, Exponent::from_integer(rho));
        let mut frontier = vec![0usize];
        for &drop in drops {
            let mut next = Vec::new();
            for v in frontier {
                let r = *tree.vertices[v].rho.numer();
                let base = tree.vertices[v].center.clone();
                let p = prime.get() as i64;
                for k in 0..p.pow(drop) {
                    let mut offset = Rational::zero();
                    let mut rest = k;
                    for i in 0..drop as i64 {
                        offset += Rational::from_integer(BigInt::from(rest % p))
                            * prime.pow_rational(i - r);
                        rest /= p;
                    }
                    next.push(tree.add_child(
                        v,
                        &base + offset,
                        Exponent::from_integer(r - drop as i64),
                    )?);
                }
            }
            frontier = next;
        }
        Ok(tree)
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            let ch = &self.vertices[v].children;
            if ch.is_empty() {
                out.push(v);
            }
            stack.extend(ch.iter().rev());
        }
        out
    }

    pub fn internal_vertices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            let ch = &self.vertices[v].children;
            if !ch.is_empty() {
                out.push(v);
            }
            stack.extend(ch.iter().rev());
        }
        out
    }

    pub fn ancestors(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = self.vertices[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    pub fn join(&self, a: usize, b: usize) -> usize {
        let anc = self.ancestors(a);
        let mut cur = b;
        loop {
            if anc.contains(&cur) {
                return cur;
            }
            cur = self.vertices[cur].parent.expect("vertices share the root");
        }
    }

    pub fn is_ancestor(&self, anc: usize, v: usize) -> bool {
        self.ancestors(v).contains(&anc)
    }

    pub fn max_depth(&self) -> usize {
        self.vertices.iter().map(|v| v.depth).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `ν(A) = diam(A)`.
    DiameterRule,
    /// Each orbit has mass one, split evenly among children.
    Probability,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquityMeasure {
    pub masses: Vec<Rational>,
}

impl EquityMeasure {
    pub fn diameter_rule(tree: &OrbitTree) -> Result<Self, UltrametricError> {
        let masses = tree
            .vertices()
            .iter()
            .map(|v| {
                if v.rho.is_integer() {
                    Ok(tree.prime().pow_rational(*v.rho.numer()))
                } else {
                    Err(UltrametricError::NonIntegerRadius(v.rho))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = EquityMeasure { masses };
        if let Some(v) = m.equity_violation(tree) {
            return Err(UltrametricError::NotEquitable(v));
        }
        Ok(m)
    }

    pub fn probability(tree: &OrbitTree) -> Self {
        let mut masses = vec![Rational::zero(); tree.vertices().len()];
        masses[0] = Rational::one();
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            let ch = &tree.vertex(v).children;
            if !ch.is_empty() {
                let share = &masses[v] / Rational::from_integer(BigInt::from(ch.len()));
                for &c in ch {
                    masses[c] = share.clone();
                    stack.push(c);
                }
            }
        }
        EquityMeasure { masses }
    }

    pub fn build(tree: &OrbitTree, n: Normalization) -> Result<Self, UltrametricError> {
        match n {
            Normalization::DiameterRule => Self::diameter_rule(tree),
            Normalization::Probability => Ok(Self::probability(tree)),
        }
    }

    pub fn equity_violation(&self, tree: &OrbitTree) -> Option<usize> {
        tree.vertices().iter().enumerate().find_map(|(i, v)| {
            if v.children.is_empty() {
                return None;
            }
            let s: Rational = v.children.iter().map(|&c| self.masses[c].clone()).sum();
            (s != self.masses[i]).then_some(i)
        })
    }
}

/// `ν(A) = diam(A)` for a free-standing disc with integer radius exponent.
pub fn nu(disc: &Disc) -> Result<Rational, UltrametricError> {
    if !disc.rho.is_integer() {
        return Err(UltrametricError::NonIntegerRadius(disc.rho));
    }
    Ok(disc.prime.pow_rational(*disc.rho.numer()))
}

fn polynomial_eval(coeffs: &[Rational], x: &Rational) -> Rational {
    coeffs
        .iter()
        .rev()
        .fold(Rational::zero(), |acc, a| acc * x + a)
}

/// Taylor coefficients of `P(c + t)` in `t`.
fn taylor_shift(coeffs: &[Rational], c: &Rational) -> Vec<Rational> {
    (0..coeffs.len())
        .map(|k| {
            (k..coeffs.len())
                .map(|j| {
                    let b = Rational::from_integer(binomial(BigInt::from(j), BigInt::from(k)));
                    b * &coeffs[j] * num_traits::pow(c.clone(), j - k)
                })
                .sum()
        })
        .collect()
}

/// `|P|` on a disc when the constant Taylor term strictly dominates.
fn constant_abs_on(coeffs: &[Rational], disc: &Disc) -> Option<AbsValue> {
    let p = disc.prime;
    let b = taylor_shift(coeffs, &disc.center);
    let lead = abs_p(b.first()?, p);
    let e0 = lead.exponent?;
    for (k, bk) in b.iter().enumerate().skip(1) {
        if let Some(ek) = abs_p(bk, p).exponent {
            let bound = ek + disc.rho * Exponent::from_integer(k as i64);
            let dominated = if disc.closed { e0 > bound } else { e0 >= bound };
            if !dominated {
                return None;
            }
        }
    }
    Some(lead)
}

/// Coefficient `f = P/Q` of a differential form `f dx`, ascending powers.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaForm {
    pub numer: Vec<Rational>,
    pub denom: Vec<Rational>,
}

impl OmegaForm {
    pub fn new(numer: Vec<Rational>, denom: Vec<Rational>) -> Result<Self, UltrametricError> {
        if denom.iter().all(Zero::is_zero) {
            return Err(UltrametricError::ZeroDenominator);
        }
        Ok(OmegaForm { numer, denom })
    }

    pub fn constant_one() -> Self {
        OmegaForm {
            numer: vec![Rational::one()],
            denom: vec![Rational::one()],
        }
    }

    pub fn eval(&self, x: &Rational) -> Option<Rational> {
        let q = polynomial_eval(&self.denom, x);
        (!q.is_zero()).then(|| polynomial_eval(&self.numer, x) / q)
    }

    /// `|f|` on the disc, if certified constant and nonzero there.
    pub fn abs_on(&self, disc: &Disc) -> Option<AbsValue> {
        let n = constant_abs_on(&self.numer, disc)?;
        let d = constant_abs_on(&self.denom, disc)?;
        Some(n.div(&d))
    }
}

/// `μ(A) = |f(c_A)| ν(A)`.
pub fn mu(disc: &Disc, omega: &OmegaForm) -> Result<Rational, UltrametricError> {
    let c = omega
        .abs_on(disc)
        .ok_or(UltrametricError::FormVanishesOnDisc)?;
    let cr = c.to_rational().ok_or(UltrametricError::NonIntegerRadius(
        c.exponent.expect("nonzero"),
    ))?;
    Ok(cr * nu(disc)?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Branching {
    Regular,
    Profile(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitShape {
    pub center: Rational,
    pub rho: i64,
    pub branching: Branching,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LeafRef {
    pub orbit: usize,
    pub vertex: usize,
}

/// The depth-D leaf partition of one component with its masses.
#[derive(Clone, Debug)]
pub struct MeasuredDomain {
    prime: Prime,
    pub trees: Vec<OrbitTree>,
    pub nu: Vec<EquityMeasure>,
    /// `μ` on every vertex; leaves from the form, internal vertices by summation.
    pub mu: Vec<Vec<Rational>>,
    pub leaves: Vec<LeafRef>,
    leaf_of: Vec<Vec<Option<usize>>>,
    ranges: Vec<Vec<(usize, usize)>>,
}

pub fn build_partition(
    prime: Prime,
    shapes: &[OrbitShape],
    omega: &OmegaForm,
    depth: usize,
    normalization: Normalization,
) -> Result<MeasuredDomain, UltrametricError> {
    let trees = shapes
        .iter()
        .map(|s| match &s.branching {
            Branching::Regular => OrbitTree::regular(prime, s.center.clone(), s.rho, depth),
            Branching::Profile(drops) => {
                let d: Vec<u32> = drops.iter().copied().cycle().take(depth).collect();
                OrbitTree::with_profile(prime, s.center.clone(), s.rho, &d)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    MeasuredDomain::from_trees(prime, trees, omega, normalization)
}

impl MeasuredDomain {
    pub fn from_trees(
        prime: Prime,
        trees: Vec<OrbitTree>,
        omega: &OmegaForm,
        normalization: Normalization,
    ) -> Result<Self, UltrametricError> {
        if trees.is_empty() {
            return Err(UltrametricError::EmptyDomain);
        }
        for i in 0..trees.len() {
            for j in 0..i {
                if !trees[i].root_disc().is_disjoint(&trees[j].root_disc()) {
                    return Err(UltrametricError::OverlappingOrbits(j, i));
                }
            }
        }
        let nu = trees
            .iter()
            .map(|t| EquityMeasure::build(t, normalization))
            .collect::<Result<Vec<_>, _>>()?;
        let mut leaves = Vec::new();
        let mut leaf_of = Vec::new();
        let mut ranges = Vec::new();
        let mut mus = Vec::new();
        for (o, t) in trees.iter().enumerate() {
            let mut lo = vec![None; t.vertices().len()];
            let mut m = vec![Rational::zero(); t.vertices().len()];
            for v in t.leaves() {
                let c = omega
                    .abs_on(&t.disc(v))
                    .ok_or(UltrametricError::FormVanishes {
                        orbit: o,
                        vertex: v,
                    })?;
                let c = c.to_rational().ok_or(UltrametricError::NonIntegerRadius(
                    c.exponent.expect("nonzero"),
                ))?;
                m[v] = c * &nu[o].masses[v];
                lo[v] = Some(leaves.len());
                leaves.push(LeafRef {
                    orbit: o,
                    vertex: v,
                });
            }
            let mut r = vec![(usize::MAX, 0usize); t.vertices().len()];
            for v in t.leaves() {
                let idx = lo[v].expect("leaf");
                for a in t.ancestors(v) {
                    r[a] = (r[a].0.min(idx), r[a].1.max(idx + 1));
                    if a != v {
                        let add = m[v].clone();
                        m[a] += add;
                    }
                }
            }
            leaf_of.push(lo);
            ranges.push(r);
            mus.push(m);
        }
        Ok(MeasuredDomain {
            prime,
            trees,
            nu,
            mu: mus,
            leaves,
            leaf_of,
            ranges,
        })
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_disc(&self, i: usize) -> Disc {
        let l = self.leaves[i];
        self.trees[l.orbit].disc(l.vertex)
    }

    pub fn leaf_center(&self, i: usize) -> &Rational {
        let l = self.leaves[i];
        &self.trees[l.orbit].vertex(l.vertex).center
    }

    pub fn leaf_mu(&self, i: usize) -> &Rational {
        let l = self.leaves[i];
        &self.mu[l.orbit][l.vertex]
    }

    pub fn leaf_index(&self, orbit: usize, vertex: usize) -> Option<usize> {
        self.leaf_of[orbit][vertex]
    }

    /// Half-open range of leaf indices below a vertex.
    pub fn leaf_range(&self, orbit: usize, vertex: usize) -> (usize, usize) {
        self.ranges[orbit][vertex]
    }

    pub fn orbit_range(&self, orbit: usize) -> (usize, usize) {
        self.ranges[orbit][0]
    }

    pub fn orbit_mass(&self, orbit: usize) -> &Rational {
        &self.mu[orbit][0]
    }

    pub fn total_mass(&self) -> Rational {
        self.mu.iter().map(|m| m[0].clone()).sum()
    }

    /// Leaf containing a point, if any.
    pub fn locate(&self, x: &Rational) -> Option<usize> {
        (0..self.leaves.len()).find(|&i| self.leaf_disc(i).contains_rational(x))
    }

    /// Tree ultrametric between distinct leaves.
    pub fn tree_distance(&self, a: usize, b: usize) -> Result<AbsValue, UltrametricError> {
        if a == b {
            return Err(UltrametricError::ZeroDistance);
        }
        let (la, lb) = (self.leaves[a], self.leaves[b]);
        if la.orbit == lb.orbit {
            let t = &self.trees[la.orbit];
            Ok(AbsValue::pow(
                self.prime,
                t.vertex(t.join(la.vertex, lb.vertex)).rho,
            ))
        } else {
            let ca = &self.trees[la.orbit].vertex(0).center;
            let cb = &self.trees[lb.orbit].vertex(0).center;
            Ok(abs_diff(ca, cb, self.prime))
        }
    }

    /// Every orbit root must miss every hole disc.
    pub fn check_inside(&self, f: &GoodFundamentalDomain) -> Result<(), UltrametricError> {
        for (o, t) in self.trees.iter().enumerate() {
            for (j, d) in f.discs.iter().enumerate() {
                if !t.root_disc().is_disjoint(d) {
                    return Err(UltrametricError::OrbitOutsideDomain { orbit: o, disc: j });
                }
            }
        }
        Ok(())
    }

    /// The same partition moved by `m`; centers and radii follow disc images
    /// and the measure is recomputed from the form on the image discs.
    pub fn translate(
        &self,
        m: &Mobius,
        omega: &OmegaForm,
        normalization: Normalization,
    ) -> Result<MeasuredDomain, UltrametricError> {
        let trees = self
            .trees
            .iter()
            .map(|t| {
                let mut vertices = Vec::with_capacity(t.vertices().len());
                for (i, v) in t.vertices().iter().enumerate() {
                    let img = disc_image(m, &t.disc(i))
                        .map_err(|_| UltrametricError::ChildOutsideParent)?;
                    vertices.push(Vertex {
                        center: img.center,
                        rho: img.rho,
                        ..v.clone()
                    });
                }
                Ok(OrbitTree {
                    prime: t.prime,
                    vertices,
                })
            })
            .collect::<Result<Vec<_>, UltrametricError>>()?;
        MeasuredDomain::from_trees(self.prime, trees, omega, normalization)
    }
}

pub fn dist_points(x: &Rational, y: &Rational, p: Prime) -> Result<AbsValue, UltrametricError> {
    let d = abs_diff(x, y, p);
    if d.is_zero() {
        Err(UltrametricError::ZeroDistance)
    } else {
        Ok(d)
    }
}

fn finite_gap(x: &ProjectivePoint, y: &ProjectivePoint, p: Prime) -> Option<AbsValue> {
    match (x, y) {
        (ProjectivePoint::Finite(a), ProjectivePoint::Finite(b)) => Some(abs_diff(a, b, p)),
        _ => None,
    }
}

/// Distance between `x` and the translate `ηy`, symmetrised as
/// `min(|x - ηy|, |η⁻¹x - y|)`.
///
/// The symmetrised value is unchanged by `(x, η, y) ↦ (y, η⁻¹, x)` and by
/// moving both arguments along `η` itself, which the raw `|x - ηy|` is not.
pub fn translate_distance(
    x: &Rational,
    eta_y: &ProjectivePoint,
    eta_inv_x: &ProjectivePoint,
    y: &Rational,
    p: Prime,
) -> Result<AbsValue, UltrametricError> {
    let fx = ProjectivePoint::Finite(x.clone());
    let fy = ProjectivePoint::Finite(y.clone());
    let d = match (finite_gap(&fx, eta_y, p), finite_gap(eta_inv_x, &fy, p)) {
        (Some(a), Some(b)) => {
            if a <= b {
                a
            } else {
                b
            }
        }
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(UltrametricError::InfinitePoint),
    };
    if d.is_zero() {
        Err(UltrametricError::ZeroDistance)
    } else {
        Ok(d)
    }
}

pub fn translate_distance_by(
    m: &Mobius,
    x: &Rational,
    y: &Rational,
) -> Result<AbsValue, UltrametricError> {
    let eta_y = m.apply_finite(y);
    let eta_inv_x = m.inverse().apply_finite(x);
    translate_distance(x, &eta_y, &eta_inv_x, y, m.prime())
}

/// A point `βx` recorded through its fundamental-domain representative.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslatePoint {
    pub word: Word,
    pub point: Rational,
}

impl TranslatePoint {
    /// Distance to another translate pair `γy` through the reduced word `β⁻¹γ`.
    pub fn distance(
        &self,
        other: &TranslatePoint,
        group: &SchottkyGroup,
    ) -> Result<AbsValue, UltrametricError> {
        let w = self.word.inverse().mul(&other.word);
        translate_distance_by(&group.word_to_mobius(&w), &self.point, &other.point)
    }

    pub fn realize(&self, group: &SchottkyGroup) -> ProjectivePoint {
        group.word_to_mobius(&self.word).apply_finite(&self.point)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceViolation {
    pub word: Word,
    pub leaf: usize,
    pub expected: AbsValue,
    pub found: Option<AbsValue>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub checked: usize,
    pub skipped: usize,
    pub violations: Vec<InvarianceViolation>,
}

impl InvarianceReport {
    pub fn invariant(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compare `|f(γc)| diam(γA)` with `|f(c)| diam(A)` on every leaf and word.
pub fn check_invariance(
    omega: &OmegaForm,
    group: &SchottkyGroup,
    domain: &MeasuredDomain,
    words: &[Word],
) -> InvarianceReport {
    let mut report = InvarianceReport {
        checked: 0,
        skipped: 0,
        violations: Vec::new(),
    };
    for w in words {
        let m = group.word_to_mobius(w);
        for i in 0..domain.num_leaves() {
            let a = domain.leaf_disc(i);
            let Ok(img) = disc_image(&m, &a) else {
                report.skipped += 1;
                continue;
            };
            report.checked += 1;
            let Some(fa) = omega.abs_on(&a) else {
                report.skipped += 1;
                continue;
            };
            let expected = fa.mul(&a.radius());
            let found = omega.abs_on(&img).map(|f| f.mul(&img.radius()));
            if found != Some(expected) {
                report.violations.push(InvarianceViolation {
                    word: w.clone(),
                    leaf: i,
                    expected,
                    found,
                });
            }
        }
    }
    report
}
