//! Ultrametric wavelets on measured orbit trees.

use num_complex::Complex64;
use num_traits::Zero;
use thiserror::Error;

use crate::padic::{ProjectivePoint, Rational};
use crate::schottky::{rational_to_f64, GoodFundamentalDomain, Letter, SchottkyGroup, Word};
use crate::ultrametric::MeasuredDomain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("vertex has {0} children; wavelets need at least two")]
    DegenerateVertex(usize),
    #[error("point did not reach the fundamental domain after {0} steps")]
    NoRepresentative(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Anchor {
    /// Wavelet supported on a tree vertex.
    Vertex {
        component: usize,
        orbit: usize,
        vertex: usize,
    },
    /// Mean-zero combination of the orbit indicators of one component.
    ComponentRoot { component: usize },
    /// Normalized constant on a component.
    Constant { component: usize },
}

impl Anchor {
    pub fn component(&self) -> usize {
        match *self {
            Anchor::Vertex { component, .. }
            | Anchor::ComponentRoot { component }
            | Anchor::Constant { component } => component,
        }
    }
}

/// One wavelet at a vertex, given by its value on each child.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavelet {
    pub index: usize,
    pub values: Vec<Complex64>,
    pub child_masses: Vec<f64>,
}

impl Wavelet {
    pub fn mean(&self) -> Complex64 {
        self.values
            .iter()
            .zip(&self.child_masses)
            .map(|(v, m)| v * m)
            .sum()
    }

    pub fn inner(&self, other: &Wavelet) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.child_masses)
            .map(|((a, b), m)| a * b.conj() * m)
            .sum()
    }
}

/// Unnormalized weighted Helmert patterns; column `j` is 1 on children
/// `0..j`, `-M_j/m_j` on child `j` and 0 beyond, with `M_j = Σ_{i<j} m_i`.
pub fn helmert_exact(masses: &[Rational]) -> Vec<Vec<Rational>> {
    let mut out = Vec::new();
    let mut acc = Rational::zero();
    for j in 1..masses.len() {
        acc += &masses[j - 1];
        let mut v = vec![Rational::zero(); masses.len()];
        for x in v.iter_mut().take(j) {
            *x = Rational::from_integer(1.into());
        }
        v[j] = -(&acc / &masses[j]);
        out.push(v);
    }
    out
}

/// Orthonormal mean-zero real basis of the functions constant on children.
pub fn helmert(masses: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for j in 1..masses.len() {
        acc += masses[j - 1];
        let b = -acc / masses[j];
        let norm = (acc + b * b * masses[j]).sqrt();
        let mut v = vec![0.0; masses.len()];
        for x in v.iter_mut().take(j) {
            *x = 1.0 / norm;
        }
        v[j] = b / norm;
        out.push(v);
    }
    out
}

/// The `m - 1` wavelets at a vertex with the given child masses.
pub fn wavelets_at(masses: &[Rational]) -> Result<Vec<Wavelet>, WaveletError> {
    let m = masses.len();
    if m < 2 {
        return Err(WaveletError::DegenerateVertex(m));
    }
    let child_masses: Vec<f64> = masses.iter().map(rational_to_f64).collect();
    if masses.iter().all(|x| *x == masses[0]) {
        let total: f64 = child_masses.iter().sum();
        let scale = total.sqrt().recip();
        Ok((1..m)
            .map(|j| Wavelet {
                index: j,
                values: (0..m)
                    .map(|k| {
                        let theta = 2.0 * std::f64::consts::PI * ((j * k) % m) as f64 / m as f64;
                        Complex64::from_polar(scale, theta)
                    })
                    .collect(),
                child_masses: child_masses.clone(),
            })
            .collect())
    } else {
        Ok(helmert(&child_masses)
            .into_iter()
            .enumerate()
            .map(|(j, v)| Wavelet {
                index: j + 1,
                values: v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
                child_masses: child_masses.clone(),
            })
            .collect())
    }
}

pub fn real_wavelets_at(masses: &[Rational]) -> Result<Vec<Vec<f64>>, WaveletError> {
    if masses.len() < 2 {
        return Err(WaveletError::DegenerateVertex(masses.len()));
    }
    Ok(helmert(
        &masses.iter().map(rational_to_f64).collect::<Vec<_>>(),
    ))
}

/// A function on the leaf partition of one component.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantFunction<T = Complex64> {
    pub anchor: Anchor,
    pub index: usize,
    pub coeffs: Vec<T>,
}

pub type RealFunction = InvariantFunction<f64>;

impl InvariantFunction<Complex64> {
    pub fn inner(&self, other: &Self, domain: &MeasuredDomain) -> Complex64 {
        (0..domain.num_leaves())
            .map(|i| self.coeffs[i] * other.coeffs[i].conj() * rational_to_f64(domain.leaf_mu(i)))
            .sum()
    }

    pub fn mean(&self, domain: &MeasuredDomain) -> Complex64 {
        (0..domain.num_leaves())
            .map(|i| self.coeffs[i] * rational_to_f64(domain.leaf_mu(i)))
            .sum()
    }
}

impl InvariantFunction<f64> {
    pub fn inner(&self, other: &Self, domain: &MeasuredDomain) -> f64 {
        (0..domain.num_leaves())
            .map(|i| self.coeffs[i] * other.coeffs[i] * rational_to_f64(domain.leaf_mu(i)))
            .sum()
    }
}

/// Spread per-child values over the leaves below each child.
fn spread<T: Copy + Zero>(
    domain: &MeasuredDomain,
    orbit: usize,
    vertex: usize,
    values: &[T],
) -> Vec<T> {
    let mut coeffs = vec![T::zero(); domain.num_leaves()];
    for (k, &c) in domain.trees[orbit]
        .vertex(vertex)
        .children
        .iter()
        .enumerate()
    {
        let (lo, hi) = domain.leaf_range(orbit, c);
        for x in &mut coeffs[lo..hi] {
            *x = values[k];
        }
    }
    coeffs
}

fn orbit_spread<T: Copy + Zero>(domain: &MeasuredDomain, values: &[T]) -> Vec<T> {
    let mut coeffs = vec![T::zero(); domain.num_leaves()];
    for (o, &v) in values.iter().enumerate() {
        let (lo, hi) = domain.orbit_range(o);
        for x in &mut coeffs[lo..hi] {
            *x = v;
        }
    }
    coeffs
}

fn child_masses(domain: &MeasuredDomain, orbit: usize, vertex: usize) -> Vec<Rational> {
    domain.trees[orbit]
        .vertex(vertex)
        .children
        .iter()
        .map(|&c| domain.mu[orbit][c].clone())
        .collect()
}

/// Orbit-level functions of one component: the constant, then the
/// mean-zero Helmert combinations of orbit indicators.
pub fn orbit_level_basis(component: usize, domain: &MeasuredDomain) -> Vec<RealFunction> {
    let n = domain.trees.len();
    let total = rational_to_f64(&domain.total_mass());
    let mut out = vec![InvariantFunction {
        anchor: Anchor::Constant { component },
        index: 0,
        coeffs: vec![total.sqrt().recip(); domain.num_leaves()],
    }];
    let masses: Vec<f64> = (0..n)
        .map(|o| rational_to_f64(domain.orbit_mass(o)))
        .collect();
    for (j, v) in helmert(&masses).into_iter().enumerate() {
        out.push(InvariantFunction {
            anchor: Anchor::ComponentRoot { component },
            index: j + 1,
            coeffs: orbit_spread(domain, &v),
        });
    }
    out
}

/// Wavelet anchors of a component: every vertex with at least two children.
pub fn vertex_anchors(component: usize, domain: &MeasuredDomain) -> Vec<Anchor> {
    let mut out = Vec::new();
    for (orbit, t) in domain.trees.iter().enumerate() {
        for vertex in t.internal_vertices() {
            if t.vertex(vertex).children.len() >= 2 {
                out.push(Anchor::Vertex {
                    component,
                    orbit,
                    vertex,
                });
            }
        }
    }
    out
}

/// Orthonormal basis of functions on the leaves: orbit-level functions first,
/// then the character wavelets of every vertex in depth-first order.
pub fn basis(component: usize, domain: &MeasuredDomain) -> Vec<InvariantFunction> {
    let mut out: Vec<InvariantFunction> = orbit_level_basis(component, domain)
        .into_iter()
        .map(|f| InvariantFunction {
            anchor: f.anchor,
            index: f.index,
            coeffs: f
                .coeffs
                .into_iter()
                .map(|x| Complex64::new(x, 0.0))
                .collect(),
        })
        .collect();
    for anchor in vertex_anchors(component, domain) {
        let Anchor::Vertex { orbit, vertex, .. } = anchor else {
            unreachable!()
        };
        for w in wavelets_at(&child_masses(domain, orbit, vertex)).expect("at least two children") {
            out.push(InvariantFunction {
                anchor,
                index: w.index,
                coeffs: spread(domain, orbit, vertex, &w.values),
            });
        }
    }
    out
}

/// Real wavelets at every vertex, without the orbit-level functions.
pub fn real_vertex_wavelets(component: usize, domain: &MeasuredDomain) -> Vec<RealFunction> {
    let mut out = Vec::new();
    for anchor in vertex_anchors(component, domain) {
        let Anchor::Vertex { orbit, vertex, .. } = anchor else {
            unreachable!()
        };
        for (j, v) in real_wavelets_at(&child_masses(domain, orbit, vertex))
            .expect("at least two children")
            .into_iter()
            .enumerate()
        {
            out.push(InvariantFunction {
                anchor,
                index: j + 1,
                coeffs: spread(domain, orbit, vertex, &v),
            });
        }
    }
    out
}

pub fn real_basis(component: usize, domain: &MeasuredDomain) -> Vec<RealFunction> {
    let mut out = orbit_level_basis(component, domain);
    out.extend(real_vertex_wavelets(component, domain));
    out
}

/// Gram matrix deviation `max |⟨b_i, b_j⟩ - δ_ij|`.
pub fn gram_deviation(basis: &[InvariantFunction], domain: &MeasuredDomain) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.inner(b, domain) - target).norm());
        }
    }
    worst
}

/// Largest residual when each leaf indicator is reconstructed from the basis.
pub fn completeness_residual(basis: &[InvariantFunction], domain: &MeasuredDomain) -> f64 {
    let n = domain.num_leaves();
    let mut worst = 0.0f64;
    for leaf in 0..n {
        let mut ind = vec![Complex64::zero(); n];
        ind[leaf] = Complex64::new(1.0, 0.0);
        let target = InvariantFunction {
            anchor: Anchor::Constant { component: 0 },
            index: 0,
            coeffs: ind.clone(),
        };
        let mut rec = vec![Complex64::zero(); n];
        for b in basis {
            let c = target.inner(b, domain);
            for (r, x) in rec.iter_mut().zip(&b.coeffs) {
                *r += c * x;
            }
        }
        for (r, x) in rec.iter().zip(&ind) {
            worst = worst.max((r - x).norm());
        }
    }
    worst
}

/// Move a point into the fundamental domain; returns `(β, x₀)` with `x = βx₀`.
pub fn reduce_to_domain(
    x: &ProjectivePoint,
    group: &SchottkyGroup,
    f: &GoodFundamentalDomain,
) -> Result<(Word, ProjectivePoint), WaveletError> {
    const MAX_STEPS: usize = 10_000;
    let g = group.genus();
    let mut letters = Vec::new();
    let mut cur = x.clone();
    for _ in 0..MAX_STEPS {
        let Some(j) = f.discs.iter().position(|d| d.contains(&cur)) else {
            return Ok((Word::from_letters(g, letters), cur));
        };
        let (step, record) = if j < g {
            (Letter::generator(j), Letter::inverse_of_generator(j, g))
        } else {
            (
                Letter::inverse_of_generator(j - g, g),
                Letter::generator(j - g),
            )
        };
        cur = group.letter_map(step).apply(&cur);
        letters.push(record);
    }
    Err(WaveletError::NoRepresentative(MAX_STEPS))
}

/// `ψ^Γ(γx) = ψ(x)`, evaluated through the fundamental-domain representative.
pub struct ExtendedFunction<'a, T> {
    pub function: &'a InvariantFunction<T>,
    pub group: &'a SchottkyGroup,
    pub domain: &'a GoodFundamentalDomain,
    pub partition: &'a MeasuredDomain,
}

pub fn extend_invariant<'a, T>(
    function: &'a InvariantFunction<T>,
    group: &'a SchottkyGroup,
    domain: &'a GoodFundamentalDomain,
    partition: &'a MeasuredDomain,
) -> ExtendedFunction<'a, T> {
    ExtendedFunction {
        function,
        group,
        domain,
        partition,
    }
}

impl<T: Copy + Zero> ExtendedFunction<'_, T> {
    /// Value at a point; zero on the part of the domain outside the modeled orbits.
    pub fn eval(&self, x: &ProjectivePoint) -> Result<T, WaveletError> {
        let (_, x0) = reduce_to_domain(x, self.group, self.domain)?;
        Ok(match x0 {
            ProjectivePoint::Finite(r) => self
                .partition
                .locate(&r)
                .map_or(T::zero(), |i| self.function.coeffs[i]),
            ProjectivePoint::Infinity => T::zero(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{int, rat, Prime};
    use crate::ultrametric::{build_partition, Branching, Normalization, OmegaForm, OrbitShape};

    #[test]
    fn two_children_equal() {
        let w = wavelets_at(&[rat(1, 2), rat(1, 2)]).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].mean().norm() < 1e-15);
        assert!((w[0].inner(&w[0]).re - 1.0).abs() < 1e-15);
        assert!((w[0].values[0] + w[0].values[1]).norm() < 1e-15);
    }

    #[test]
    fn three_children_gram() {
        let w = wavelets_at(&[rat(1, 3), rat(1, 3), rat(1, 3)]).unwrap();
        for a in &w {
            for b in &w {
                let target = if a.index == b.index { 1.0 } else { 0.0 };
                assert!((a.inner(b) - target).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unequal_pair() {
        let m = [rat(2, 3), rat(1, 3)];
        let w = wavelets_at(&m).unwrap();
        assert!(w[0].mean().norm() < 1e-15);
        assert!((w[0].inner(&w[0]).re - 1.0).abs() < 1e-14);
        let h = helmert_exact(&m);
        assert_eq!(h[0], vec![int(1), int(-2)]);
        assert!(wavelets_at(&[int(1)]).is_err());
    }

    #[test]
    fn basis_counts() {
        let p = Prime::new(2).unwrap();
        let block = OrbitShape {
            center: int(1),
            rho: 0,
            branching: Branching::Regular,
        };
        let d = build_partition(
            p,
            &[block.clone()],
            &OmegaForm::constant_one(),
            1,
            Normalization::DiameterRule,
        )
        .unwrap();
        assert_eq!(basis(0, &d).len(), 2);
        let p3 = Prime::new(3).unwrap();
        let d = build_partition(
            p3,
            &[block],
            &OmegaForm::constant_one(),
            2,
            Normalization::DiameterRule,
        )
        .unwrap();
        let b = basis(0, &d);
        assert_eq!(b.len(), 9);
        assert!(gram_deviation(&b, &d) < 1e-12);
        assert!(completeness_residual(&b, &d) < 1e-12);
    }
}
