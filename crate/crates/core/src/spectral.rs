//! Invariant distance-kernel operators, their wavelet spectra and a dense
//! finite-resolution oracle.
//!
//! On one component the operator acts on leaf-constant invariant functions by
//! `(Δf)(x) = μ(F)⁻¹ ∫_F Σ_η p^(-αℓ(η)) d(x, η, y)^(-α) (f(y) - f(x)) dμ(y)`
//! with `d` the symmetrised translate distance. The identity word uses the
//! tree ultrametric. Components are coupled by the constant kernel
//! `w_ij S_i S_j`, where `S_i` is the length series of `Γ_i`.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::padic::{
    val_diff, Exponent, Mobius, Prime, ProjectivePoint, Rational, Residue, ResidueRing, Valuation,
};
use crate::schottky::{
    gamma_length_series, power_exceeds, rational_to_f64, series_converges,
    validate_fundamental_domain, GoodFundamentalDomain, Number, SchottkyError, SchottkyGroup, Word,
    WordTable,
};
use crate::ultrametric::{
    translate_distance_by, MeasuredDomain, Normalization, OmegaForm, OrbitShape, UltrametricError,
};
use crate::wavelets::{helmert, Anchor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Ultrametric(#[from] UltrametricError),
    #[error(transparent)]
    Schottky(#[from] SchottkyError),
    #[error("component {0}: fundamental domain fails validation")]
    InvalidDomain(usize),
    #[error("component {component}: radius exponent {rho} is not an integer")]
    NonIntegerRadius { component: usize, rho: Exponent },
    #[error("component {component}: kernel is not constant on leaves {a} and {b} for word {word}")]
    PartitionTooCoarse {
        component: usize,
        a: usize,
        b: usize,
        word: String,
    },
    #[error("component {component}: eigenvalue depends on the sample point ({first} vs {second})")]
    XDependence {
        component: usize,
        first: f64,
        second: f64,
    },
    #[error("orbit block entry ({a}, {b}) depends on the sample leaf ({first} vs {second})")]
    OrbitBlockXDependence {
        a: usize,
        b: usize,
        first: f64,
        second: f64,
    },
    #[error("coupling weights must be an {expected}x{expected} matrix")]
    WeightShape { expected: usize },
    #[error("coupling weights are not symmetric at ({0}, {1})")]
    AsymmetricWeights(usize, usize),
    #[error("coupling weight ({0}, {1}) is negative")]
    NegativeWeight(usize, usize),
    #[error("exponent must be positive")]
    NonPositiveExponent,
    #[error(
        "no vertex {vertex} with at least two children in orbit {orbit} of component {component}"
    )]
    NoSuchAnchor {
        component: usize,
        orbit: usize,
        vertex: usize,
    },
}

/// Integration domain for the non-identity words in the wavelet eigenvalue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IntegrationMode {
    /// All of `F` for `γ ≠ e`; this is the value the operator actually has.
    #[default]
    FullDomain,
    /// `F ∖ A` for every word with the `μ(A)^(1-α)` self term.
    Complement,
}

/// Exponent in the coupling length series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CouplingExponent {
    /// Weights `p^(-α_Z ℓ)`.
    #[default]
    Scaled,
    /// Weights `p^(-ℓ)`.
    Unscaled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOptions {
    pub l_max: usize,
    pub integration: IntegrationMode,
    pub coupling_exponent: CouplingExponent,
    pub word_cap: Option<usize>,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            l_max: 4,
            integration: IntegrationMode::FullDomain,
            coupling_exponent: CouplingExponent::Scaled,
            word_cap: Some(500_000),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComponentConfig {
    pub group: SchottkyGroup,
    pub fundamental_domain: GoodFundamentalDomain,
    pub omega: OmegaForm,
    pub orbits: Vec<OrbitShape>,
    pub normalization: Normalization,
    pub alpha: Exponent,
}

/// Both convergence conditions for the length series at `α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvergenceCheck {
    /// `(2g-1) p^(-α) < 1`, enforced.
    pub sharp: bool,
    /// `p^α > 2g`, reported.
    pub coarse: bool,
}

pub fn convergence_check(genus: usize, p: Prime, s: Exponent) -> ConvergenceCheck {
    ConvergenceCheck {
        sharp: series_converges(genus, p, s),
        coarse: s > Exponent::zero() && power_exceeds(p, s, 2 * genus as u64),
    }
}

impl ComponentConfig {
    pub fn convergence(&self) -> ConvergenceCheck {
        convergence_check(self.group.genus(), self.group.prime(), self.alpha)
    }

    /// Validate and build the depth-`depth` partition.
    pub fn build(&self, index: usize, depth: usize) -> Result<Component, SpectralError> {
        let partition = crate::ultrametric::build_partition(
            self.group.prime(),
            &self.orbits,
            &self.omega,
            depth,
            self.normalization,
        )?;
        Component::from_partition(index, self.clone(), partition)
    }
}

/// Masses on a shifted fundamental domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftMasses {
    /// Recomputed from the form on the image discs.
    FromForm,
    /// `μ(γ₀A) = μ(A)`, the invariant extension of the measure on `F`.
    Transported,
}

#[derive(Clone, Debug)]
pub struct Component {
    pub index: usize,
    pub config: ComponentConfig,
    /// The fundamental domain the partition lives in.
    pub fundamental_domain: GoodFundamentalDomain,
    /// Partition carrying the masses.
    pub partition: MeasuredDomain,
    /// Partition whose centers enter the distances; the original one after a shift.
    pub representatives: MeasuredDomain,
    pub conjugator: Option<Word>,
}

impl Component {
    pub fn from_partition(
        index: usize,
        config: ComponentConfig,
        partition: MeasuredDomain,
    ) -> Result<Self, SpectralError> {
        if config.alpha <= Exponent::zero() {
            return Err(SpectralError::NonPositiveExponent);
        }
        let g = config.group.genus();
        let p = config.group.prime();
        if !config.convergence().sharp {
            return Err(SchottkyError::Divergence {
                genus: g,
                prime: p.get(),
                s: config.alpha,
            }
            .into());
        }
        if !validate_fundamental_domain(&config.group, &config.fundamental_domain, None).valid {
            return Err(SpectralError::InvalidDomain(index));
        }
        partition.check_inside(&config.fundamental_domain)?;
        for t in &partition.trees {
            for v in t.vertices() {
                if !v.rho.is_integer() {
                    return Err(SpectralError::NonIntegerRadius {
                        component: index,
                        rho: v.rho,
                    });
                }
            }
        }
        Ok(Component {
            index,
            fundamental_domain: config.fundamental_domain.clone(),
            representatives: partition.clone(),
            partition,
            config,
            conjugator: None,
        })
    }

    /// The same component with `F` replaced by `γ₀F`.
    ///
    /// Distances are evaluated on representatives in `F`, so every word `η'`
    /// of the sum becomes `γ₀⁻¹η'γ₀` acting on the original centers.
    pub fn shifted(&self, gamma0: &Word, masses: ShiftMasses) -> Result<Component, SpectralError> {
        let m = self.config.group.word_to_mobius(gamma0);
        let mut partition =
            self.representatives
                .translate(&m, &self.config.omega, self.config.normalization)?;
        if masses == ShiftMasses::Transported {
            partition.mu = self.partition.mu.clone();
        }
        Ok(Component {
            index: self.index,
            config: self.config.clone(),
            fundamental_domain: self.config.fundamental_domain.translate(&m),
            partition,
            representatives: self.representatives.clone(),
            conjugator: Some(gamma0.clone()),
        })
    }

    pub fn genus(&self) -> usize {
        self.config.group.genus()
    }

    pub fn prime(&self) -> Prime {
        self.config.group.prime()
    }

    pub fn total_mass(&self) -> Rational {
        self.partition.total_mass()
    }

    pub fn num_leaves(&self) -> usize {
        self.partition.num_leaves()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingConfig {
    weights: Vec<Vec<Rational>>,
    pub alpha_z: Exponent,
}

impl CouplingConfig {
    pub fn new(weights: Vec<Vec<Rational>>, alpha_z: Exponent) -> Result<Self, SpectralError> {
        let n = weights.len();
        if n == 0 || weights.iter().any(|r| r.len() != n) {
            return Err(SpectralError::WeightShape { expected: n.max(1) });
        }
        if alpha_z <= Exponent::zero() {
            return Err(SpectralError::NonPositiveExponent);
        }
        for i in 0..n {
            for j in 0..n {
                if weights[i][j] != weights[j][i] {
                    return Err(SpectralError::AsymmetricWeights(i, j));
                }
                if weights[i][j].is_negative() {
                    return Err(SpectralError::NegativeWeight(i, j));
                }
            }
        }
        Ok(CouplingConfig { weights, alpha_z })
    }

    pub fn uncoupled(n: usize) -> Self {
        CouplingConfig {
            weights: vec![vec![Rational::zero(); n]; n],
            alpha_z: Exponent::from_integer(1),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> &Rational {
        &self.weights[i][j]
    }

    fn active(&self) -> bool {
        (0..self.len()).any(|i| (0..self.len()).any(|j| i != j && !self.weights[i][j].is_zero()))
    }
}

/// `μ(F)⁻¹ p^(-αℓ(β⁻¹γ)) d(x, β⁻¹γ, y)^(-α)`, the kernel between `βx` and `γy`.
pub fn kernel_h(
    x: &Rational,
    beta: &Word,
    y: &Rational,
    gamma: &Word,
    group: &SchottkyGroup,
    alpha: Exponent,
    mu_f: &Rational,
) -> Result<Number, SpectralError> {
    let eta = beta.inverse().mul(gamma);
    let d = translate_distance_by(&group.word_to_mobius(&eta), x, y)?;
    let e = d.exponent.ok_or(UltrametricError::ZeroDistance)?;
    let k = alpha * (Exponent::from_integer(eta.len() as i64) + e);
    let p = group.prime();
    if k.is_integer() {
        Ok(Number::Exact(p.pow_rational(-k.to_integer()) / mu_f))
    } else {
        Ok(Number::Approx(p.pow_f64(-k) / rational_to_f64(mu_f)))
    }
}

#[derive(Clone, Debug)]
enum Image {
    Infinity,
    Point {
        exact: Rational,
        residue: Option<Residue>,
        log_derivative: i64,
    },
}

/// Kernel sums of one component on its leaf pairs.
#[derive(Clone, Debug)]
pub struct ComponentKernel {
    pub n: usize,
    /// Identity-word term `diam(join)^(-α)`, zero on the diagonal.
    pub tree: Vec<f64>,
    /// `Σ_{η≠e} p^(-αℓ(η)) d(c_A, η, c_B)^(-α)`.
    pub translates: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_f: f64,
    /// Truncation bound for eigenvalues and matrix rows.
    pub tail_bound: f64,
    /// `Σ_{ℓ(γ)≤L} p^(-αℓ(γ))`.
    pub series_truncated: f64,
    pub words: usize,
}

impl ComponentKernel {
    pub fn full(&self, a: usize, b: usize) -> f64 {
        self.tree[a * self.n + b] + self.translates[a * self.n + b]
    }
}

fn word_name(w: &Word) -> String {
    w.to_string()
}

pub fn compute_kernel(
    comp: &Component,
    l_max: usize,
    cap: Option<usize>,
) -> Result<ComponentKernel, SpectralError> {
    let group = &comp.config.group;
    let p = group.prime();
    let g = group.genus();
    let alpha = comp.config.alpha;
    let af = crate::padic::exp_f64(alpha);
    let lnp = p.as_f64().ln();
    let reps = &comp.representatives;
    let n = reps.num_leaves();
    let table = WordTable::new(group, l_max, cap)?;
    let words: Vec<(Word, Mobius)> = (0..table.len())
        .map(|k| match &comp.conjugator {
            None => (table.words[k].clone(), table.maps[k].clone()),
            Some(c) => {
                let w = c.inverse().mul(&table.words[k]).mul(c);
                let m = group.word_to_mobius(&w);
                (w, m)
            }
        })
        .collect();
    let ring = ResidueRing::new(p);
    let centers: Vec<Rational> = (0..n).map(|i| reps.leaf_center(i).clone()).collect();
    let rho: Vec<i64> = (0..n).map(|i| reps.leaf_disc(i).rho.to_integer()).collect();
    let res: Vec<Option<Residue>> = centers.iter().map(|c| ring.of(c)).collect();
    let images: Vec<Vec<Image>> = words
        .par_iter()
        .map(|(_, m)| {
            centers
                .iter()
                .map(|c| match m.apply_finite(c) {
                    ProjectivePoint::Infinity => Image::Infinity,
                    ProjectivePoint::Finite(x) => Image::Point {
                        residue: ring.of(&x),
                        exact: x,
                        log_derivative: -m.derivative_valuation(c).expect("finite image"),
                    },
                })
                .collect()
        })
        .collect();
    let vdiff = |x: &Rational, rx: Option<Residue>, y: &Rational, ry: Option<Residue>| {
        ring.val_diff(rx, ry).unwrap_or_else(|| val_diff(x, y, p))
    };
    let rows: Vec<Result<Vec<f64>, SpectralError>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut row = vec![0.0; n];
            for (b, out) in row.iter_mut().enumerate() {
                let mut sum = 0.0;
                for k in 1..words.len() {
                    let coarse = || SpectralError::PartitionTooCoarse {
                        component: comp.index,
                        a,
                        b,
                        word: word_name(&words[k].0),
                    };
                    let mut best: Option<i64> = None;
                    if let Image::Point {
                        exact,
                        residue,
                        log_derivative,
                    } = &images[k][b]
                    {
                        let Valuation::Finite(v) = vdiff(&centers[a], res[a], exact, *residue)
                        else {
                            return Err(coarse());
                        };
                        if -v <= rho[a] || -v <= rho[b] + log_derivative {
                            return Err(coarse());
                        }
                        best = Some(v);
                    }
                    if let Image::Point {
                        exact,
                        residue,
                        log_derivative,
                    } = &images[table.inverse[k]][a]
                    {
                        let Valuation::Finite(v) = vdiff(exact, *residue, &centers[b], res[b])
                        else {
                            return Err(coarse());
                        };
                        if -v <= rho[b] || -v <= rho[a] + log_derivative {
                            return Err(coarse());
                        }
                        best = Some(best.map_or(v, |w| w.max(v)));
                    }
                    let v = best.ok_or(UltrametricError::InfinitePoint)?;
                    let l = words[k].0.len() as f64;
                    sum += (-af * (l - v as f64) * lnp).exp();
                }
                *out = sum;
            }
            Ok(row)
        })
        .collect();
    let mut translates = Vec::with_capacity(n * n);
    for r in rows {
        translates.extend(r?);
    }
    let mut tree = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let d = reps.tree_distance(a, b)?;
                tree[a * n + b] = d.neg_pow_f64(af);
            }
        }
    }
    let mu: Vec<f64> = (0..n)
        .map(|i| rational_to_f64(comp.partition.leaf_mu(i)))
        .collect();
    let mu_f = rational_to_f64(&comp.partition.total_mass());
    let delta = hole_gap(comp)?;
    let shift = comp.conjugator.as_ref().map_or(0, |c| 2 * c.len());
    let l_eff = l_max.saturating_sub(shift);
    let tail = gamma_length_series(g, p, alpha, l_eff)?.tail.to_f64();
    let tail_bound = tail * (-af * delta as f64 * lnp).exp();
    let series_truncated = gamma_length_series(g, p, alpha, l_max)?.truncated.to_f64();
    Ok(ComponentKernel {
        n,
        tree,
        translates,
        mu,
        mu_f,
        tail_bound,
        series_truncated,
        words: words.len(),
    })
}

/// Exponent of the smallest distance from a leaf center to a hole disc.
fn hole_gap(comp: &Component) -> Result<i64, SpectralError> {
    let p = comp.prime();
    let reps = &comp.representatives;
    let mut best: Option<Exponent> = None;
    for d in &comp.config.fundamental_domain.discs {
        let e = if d.outer {
            d.rho
        } else {
            let mut m: Option<Exponent> = None;
            for i in 0..reps.num_leaves() {
                let v = crate::padic::abs_diff(reps.leaf_center(i), &d.center, p)
                    .exponent
                    .ok_or(UltrametricError::ZeroDistance)?;
                m = Some(m.map_or(v, |w: Exponent| w.min(v)));
            }
            m.expect("nonempty partition")
        };
        best = Some(best.map_or(e, |w: Exponent| w.min(e)));
    }
    Ok(best.expect("at least two holes").floor().to_integer())
}

/// Coupling eigenvalue `λ_{i₀} = -Σ_{j≠i₀} w_{i₀j} μ(F_j) S_{i₀} S_j`.
pub fn eigenvalue_z(
    i0: usize,
    components: &[Component],
    coupling: &CouplingConfig,
    mode: CouplingExponent,
) -> Result<Number, SpectralError> {
    if coupling.len() != components.len() {
        return Err(SpectralError::WeightShape {
            expected: components.len(),
        });
    }
    let s = match mode {
        CouplingExponent::Scaled => coupling.alpha_z,
        CouplingExponent::Unscaled => Exponent::from_integer(1),
    };
    if components.len() == 1 || !coupling.active() {
        return Ok(Number::Exact(Rational::zero()));
    }
    let series = components
        .iter()
        .map(|c| Ok(gamma_length_series(c.genus(), c.prime(), s, 0)?.closed_form))
        .collect::<Result<Vec<Number>, SchottkyError>>()?;
    let mut exact = Some(Rational::zero());
    let mut approx = 0.0;
    for (j, c) in components.iter().enumerate() {
        if j == i0 || coupling.weight(i0, j).is_zero() {
            continue;
        }
        let w = coupling.weight(i0, j);
        let mass = c.total_mass();
        approx -=
            rational_to_f64(w) * rational_to_f64(&mass) * series[i0].to_f64() * series[j].to_f64();
        exact = match (exact, series[i0].exact(), series[j].exact()) {
            (Some(acc), Some(si), Some(sj)) => Some(acc - w * &mass * si * sj),
            _ => None,
        };
    }
    Ok(exact.map_or(Number::Approx(approx), Number::Exact))
}

/// The coupling kernel constants `S_i(s)` for each component.
fn coupling_scales(
    components: &[Component],
    coupling: &CouplingConfig,
    mode: CouplingExponent,
) -> Result<Vec<f64>, SpectralError> {
    if components.len() == 1 || !coupling.active() {
        return Ok(vec![0.0; components.len()]);
    }
    let s = match mode {
        CouplingExponent::Scaled => coupling.alpha_z,
        CouplingExponent::Unscaled => Exponent::from_integer(1),
    };
    components
        .iter()
        .map(|c| {
            Ok(gamma_length_series(c.genus(), c.prime(), s, 0)?
                .closed_form
                .to_f64())
        })
        .collect()
}

/// Components with their precomputed kernels.
#[derive(Clone, Debug)]
pub struct Model {
    pub components: Vec<Component>,
    pub coupling: CouplingConfig,
    pub options: SpectralOptions,
    pub kernels: Vec<ComponentKernel>,
    /// First global leaf index of each component.
    pub offsets: Vec<usize>,
    scales: Vec<f64>,
    coupling_eigenvalues: Vec<Number>,
}

impl Model {
    pub fn new(
        components: Vec<Component>,
        coupling: CouplingConfig,
        options: SpectralOptions,
    ) -> Result<Self, SpectralError> {
        if coupling.len() != components.len() {
            return Err(SpectralError::WeightShape {
                expected: components.len(),
            });
        }
        let kernels = components
            .iter()
            .map(|c| compute_kernel(c, options.l_max, options.word_cap))
            .collect::<Result<Vec<_>, _>>()?;
        let mut offsets = Vec::with_capacity(components.len());
        let mut acc = 0;
        for c in &components {
            offsets.push(acc);
            acc += c.num_leaves();
        }
        let scales = coupling_scales(&components, &coupling, options.coupling_exponent)?;
        let coupling_eigenvalues = (0..components.len())
            .map(|i| eigenvalue_z(i, &components, &coupling, options.coupling_exponent))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Model {
            components,
            coupling,
            options,
            kernels,
            offsets,
            scales,
            coupling_eigenvalues,
        })
    }

    /// Build every component at `depth` and precompute kernels.
    pub fn build(
        configs: &[ComponentConfig],
        coupling: CouplingConfig,
        depth: usize,
        options: SpectralOptions,
    ) -> Result<Self, SpectralError> {
        let components = configs
            .iter()
            .enumerate()
            .map(|(i, c)| c.build(i, depth))
            .collect::<Result<Vec<_>, _>>()?;
        Model::new(components, coupling, options)
    }

    pub fn num_leaves(&self) -> usize {
        self.components.iter().map(Component::num_leaves).sum()
    }

    pub fn coupling_eigenvalue(&self, i: usize) -> &Number {
        &self.coupling_eigenvalues[i]
    }

    pub fn coupling_scale(&self, i: usize) -> f64 {
        self.scales[i]
    }

    /// Global masses of all leaves.
    pub fn masses(&self) -> Vec<f64> {
        self.kernels
            .iter()
            .flat_map(|k| k.mu.iter().copied())
            .collect()
    }
}

/// Dense generator over the global leaf partition.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub mu: Vec<f64>,
    pub component_of: Vec<usize>,
    /// Global orbit index of every leaf.
    pub orbit_of: Vec<usize>,
    /// Global orbit index to `(component, orbit)`.
    pub orbits: Vec<(usize, usize)>,
}

impl OperatorMatrix {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(f);
        (&self.matrix * v).iter().copied().collect()
    }

    /// `max |μ_A M[A][B] - μ_B M[B][A]|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..a {
                worst = worst.max(
                    (self.mu[a] * self.matrix[(a, b)] - self.mu[b] * self.matrix[(b, a)]).abs(),
                );
            }
        }
        worst
    }

    pub fn row_sum_defect(&self) -> f64 {
        (0..self.n())
            .map(|a| self.matrix.row(a).sum().abs())
            .fold(0.0, f64::max)
    }

    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.n();
        let mut m = f64::INFINITY;
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    m = m.min(self.matrix[(a, b)]);
                }
            }
        }
        m
    }

    /// `μ`-inner product.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.mu)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }
}

pub fn assemble_matrix(model: &Model) -> OperatorMatrix {
    let n = model.num_leaves();
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    let mu = model.masses();
    let mut component_of = Vec::with_capacity(n);
    let mut orbit_of = Vec::with_capacity(n);
    let mut orbits = Vec::new();
    for (i, (c, k)) in model.components.iter().zip(&model.kernels).enumerate() {
        let o = model.offsets[i];
        for r in 0..c.partition.trees.len() {
            orbits.push((i, r));
        }
        let base = orbits.len() - c.partition.trees.len();
        for a in 0..k.n {
            component_of.push(i);
            orbit_of.push(base + c.partition.leaves[a].orbit);
            for b in 0..k.n {
                if a != b {
                    matrix[(o + a, o + b)] = k.full(a, b) / k.mu_f * k.mu[b];
                }
            }
        }
    }
    for i in 0..model.components.len() {
        for j in 0..model.components.len() {
            if i == j {
                continue;
            }
            let w = rational_to_f64(model.coupling.weight(i, j));
            if w == 0.0 {
                continue;
            }
            let z = w * model.scales[i] * model.scales[j];
            for a in 0..model.kernels[i].n {
                for b in 0..model.kernels[j].n {
                    matrix[(model.offsets[i] + a, model.offsets[j] + b)] =
                        z * model.kernels[j].mu[b];
                }
            }
        }
    }
    for a in 0..n {
        let s: f64 = (0..n).filter(|&b| b != a).map(|b| matrix[(a, b)]).sum();
        matrix[(a, a)] = -s;
    }
    OperatorMatrix {
        matrix,
        mu,
        component_of,
        orbit_of,
        orbits,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaEigenvalue {
    pub value: f64,
    pub tail_bound: f64,
    /// Values at the first and last leaf below the anchor.
    pub samples: [f64; 2],
}

fn delta_at(
    k: &ComponentKernel,
    lo: usize,
    hi: usize,
    diam_pow: f64,
    mass_v: f64,
    alpha: f64,
    mode: IntegrationMode,
    a: usize,
) -> f64 {
    let outside: f64 = (0..k.n)
        .filter(|b| *b < lo || *b >= hi)
        .map(|b| k.tree[a * k.n + b] * k.mu[b])
        .sum();
    match mode {
        IntegrationMode::FullDomain => {
            let all: f64 = (0..k.n).map(|b| k.translates[a * k.n + b] * k.mu[b]).sum();
            -(outside + diam_pow * mass_v + all) / k.mu_f
        }
        IntegrationMode::Complement => {
            let trans: f64 = (0..k.n)
                .filter(|b| *b < lo || *b >= hi)
                .map(|b| k.translates[a * k.n + b] * k.mu[b])
                .sum();
            -(outside + trans + k.series_truncated * mass_v.powf(1.0 - alpha)) / k.mu_f
        }
    }
}

/// Eigenvalue of the component operator on the wavelets anchored at a vertex.
pub fn eigenvalue_delta(
    model: &Model,
    component: usize,
    orbit: usize,
    vertex: usize,
) -> Result<DeltaEigenvalue, SpectralError> {
    let c = &model.components[component];
    let k = &model.kernels[component];
    let t = c
        .partition
        .trees
        .get(orbit)
        .ok_or(SpectralError::NoSuchAnchor {
            component,
            orbit,
            vertex,
        })?;
    if vertex >= t.vertices().len() || t.vertex(vertex).children.len() < 2 {
        return Err(SpectralError::NoSuchAnchor {
            component,
            orbit,
            vertex,
        });
    }
    let af = crate::padic::exp_f64(c.config.alpha);
    let (lo, hi) = c.partition.leaf_range(orbit, vertex);
    let rho = c.representatives.trees[orbit].vertex(vertex).rho;
    let diam_pow = c.prime().pow_f64(-rho * c.config.alpha);
    let mass_v = rational_to_f64(&c.partition.mu[orbit][vertex]);
    let first = delta_at(
        k,
        lo,
        hi,
        diam_pow,
        mass_v,
        af,
        model.options.integration,
        lo,
    );
    let second = delta_at(
        k,
        lo,
        hi,
        diam_pow,
        mass_v,
        af,
        model.options.integration,
        hi - 1,
    );
    if (first - second).abs() > 1e-10 * first.abs().max(1.0) {
        return Err(SpectralError::XDependence {
            component,
            first,
            second,
        });
    }
    Ok(DeltaEigenvalue {
        value: first,
        tail_bound: k.tail_bound,
        samples: [first, second],
    })
}

/// Eigenpair of the orbit-level block, as one value per global orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitMode {
    pub group: usize,
    pub index: usize,
    pub eigenvalue: f64,
    pub orbit_values: Vec<f64>,
    pub tail_bound: f64,
}

/// Generator restricted to functions constant on each orbit, eigensolved
/// separately on every connected coupling group.
pub fn orbit_block(
    model: &Model,
    matrix: &OperatorMatrix,
) -> Result<Vec<OrbitMode>, SpectralError> {
    let r = matrix.orbits.len();
    let mut ranges = vec![(usize::MAX, 0usize); r];
    for (leaf, &o) in matrix.orbit_of.iter().enumerate() {
        ranges[o] = (ranges[o].0.min(leaf), ranges[o].1.max(leaf + 1));
    }
    let masses: Vec<f64> = ranges
        .iter()
        .map(|&(lo, hi)| matrix.mu[lo..hi].iter().sum())
        .collect();
    let mut q = DMatrix::<f64>::zeros(r, r);
    let row_sum = |leaf: usize, b: usize| -> f64 {
        (ranges[b].0..ranges[b].1)
            .map(|y| matrix.matrix[(leaf, y)])
            .sum()
    };
    for a in 0..r {
        for b in 0..r {
            if a == b {
                continue;
            }
            let first = row_sum(ranges[a].0, b);
            let second = row_sum(ranges[a].1 - 1, b);
            if (first - second).abs() > 1e-10 * first.abs().max(1.0) {
                return Err(SpectralError::OrbitBlockXDependence {
                    a,
                    b,
                    first,
                    second,
                });
            }
            q[(a, b)] = first;
        }
        let s: f64 = (0..r).filter(|&b| b != a).map(|b| q[(a, b)]).sum();
        q[(a, a)] = -s;
    }
    let mut label: Vec<usize> = (0..r).collect();
    fn find(l: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while l[x] != x {
            l[x] = l[l[x]];
            x = l[x];
        }
        x
    }
    for a in 0..r {
        for b in 0..r {
            if a != b && q[(a, b)] != 0.0 {
                let (ra, rb) = (find(&mut label, a), find(&mut label, b));
                label[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let roots: Vec<usize> = (0..r).map(|a| find(&mut label, a)).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for a in 0..r {
        match groups.iter_mut().find(|g| roots[g[0]] == roots[a]) {
            Some(g) => g.push(a),
            None => groups.push(vec![a]),
        }
    }
    let mut out = Vec::new();
    for (gi, members) in groups.iter().enumerate() {
        let m = members.len();
        let mut s = DMatrix::<f64>::zeros(m, m);
        for (x, &a) in members.iter().enumerate() {
            for (y, &b) in members.iter().enumerate() {
                s[(x, y)] = masses[a].sqrt() * q[(a, b)] / masses[b].sqrt();
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        let tail = members
            .iter()
            .map(|&a| 2.0 * model.kernels[matrix.orbits[a].0].tail_bound)
            .fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        for (index, &col) in order.iter().enumerate() {
            let mut values = vec![0.0; r];
            let u = eig.eigenvectors.column(col);
            let sign = if u
                .iter()
                .copied()
                .fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc })
                < 0.0
            {
                -1.0
            } else {
                1.0
            };
            for (x, &a) in members.iter().enumerate() {
                values[a] = sign * u[x] / masses[a].sqrt();
            }
            let value = if m == 1 { 0.0 } else { eig.eigenvalues[col] };
            out.push(OrbitMode {
                group: gi,
                index,
                eigenvalue: value,
                orbit_values: values,
                tail_bound: tail,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumAnchor {
    Wavelet(Anchor),
    ConstantBlock { group: usize, index: usize },
}

impl fmt::Display for SpectrumAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrumAnchor::Wavelet(Anchor::Vertex {
                component,
                orbit,
                vertex,
            }) => {
                write!(f, "c{component}:o{orbit}:v{vertex}")
            }
            SpectrumAnchor::Wavelet(a) => write!(f, "{a:?}"),
            SpectrumAnchor::ConstantBlock { group, index } => write!(f, "block{group}:{index}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEntry {
    pub component: usize,
    pub anchor: SpectrumAnchor,
    pub depth: usize,
    pub eigenvalue: f64,
    pub multiplicity: usize,
    pub tail_bound: f64,
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub anchor: SpectrumAnchor,
    pub eigenvalue: f64,
    pub tail_bound: f64,
    /// Values on the global leaves, `μ`-orthonormal.
    pub vector: Vec<f64>,
}

struct AnchorValue {
    component: usize,
    orbit: usize,
    vertex: usize,
    eigenvalue: f64,
    tail_bound: f64,
}

fn anchor_values(model: &Model) -> Result<Vec<AnchorValue>, SpectralError> {
    let mut jobs = Vec::new();
    for (i, c) in model.components.iter().enumerate() {
        for (o, t) in c.partition.trees.iter().enumerate() {
            for v in t.internal_vertices() {
                if t.vertex(v).children.len() >= 2 {
                    jobs.push((i, o, v));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(i, o, v)| {
            let d = eigenvalue_delta(model, i, o, v)?;
            let z = model.coupling_eigenvalues[i].to_f64();
            Ok(AnchorValue {
                component: i,
                orbit: o,
                vertex: v,
                eigenvalue: d.value + z,
                tail_bound: d.tail_bound,
            })
        })
        .collect()
}

/// Wavelet entries and the orbit block, sorted by descending eigenvalue.
pub fn full_spectrum(
    model: &Model,
    matrix: &OperatorMatrix,
) -> Result<Vec<SpectrumEntry>, SpectralError> {
    let mut out: Vec<SpectrumEntry> = anchor_values(model)?
        .into_iter()
        .map(|a| {
            let t = &model.components[a.component].partition.trees[a.orbit];
            SpectrumEntry {
                component: a.component,
                anchor: SpectrumAnchor::Wavelet(Anchor::Vertex {
                    component: a.component,
                    orbit: a.orbit,
                    vertex: a.vertex,
                }),
                depth: t.vertex(a.vertex).depth,
                eigenvalue: a.eigenvalue,
                multiplicity: t.vertex(a.vertex).children.len() - 1,
                tail_bound: a.tail_bound,
            }
        })
        .collect();
    for m in orbit_block(model, matrix)? {
        let component = (0..matrix.orbits.len())
            .find(|&a| m.orbit_values[a] != 0.0)
            .map_or(0, |a| matrix.orbits[a].0);
        out.push(SpectrumEntry {
            component,
            anchor: SpectrumAnchor::ConstantBlock {
                group: m.group,
                index: m.index,
            },
            depth: 0,
            eigenvalue: m.eigenvalue,
            multiplicity: 1,
            tail_bound: m.tail_bound,
        });
    }
    out.sort_by(|a, b| b.eigenvalue.total_cmp(&a.eigenvalue));
    Ok(out)
}

/// Eigenpairs spanning all leaf-constant functions: real wavelets with their
/// analytic eigenvalues and the orbit-block eigenvectors.
pub fn eigenpairs(model: &Model, matrix: &OperatorMatrix) -> Result<Vec<Eigenpair>, SpectralError> {
    let n = model.num_leaves();
    let mut out = Vec::with_capacity(n);
    for m in orbit_block(model, matrix)? {
        let vector = matrix.orbit_of.iter().map(|&o| m.orbit_values[o]).collect();
        out.push(Eigenpair {
            anchor: SpectrumAnchor::ConstantBlock {
                group: m.group,
                index: m.index,
            },
            eigenvalue: m.eigenvalue,
            tail_bound: m.tail_bound,
            vector,
        });
    }
    for a in anchor_values(model)? {
        let c = &model.components[a.component];
        let t = &c.partition.trees[a.orbit];
        let children = &t.vertex(a.vertex).children;
        let masses: Vec<f64> = children
            .iter()
            .map(|&ch| rational_to_f64(&c.partition.mu[a.orbit][ch]))
            .collect();
        for pattern in helmert(&masses) {
            let mut vector = vec![0.0; n];
            for (k, &ch) in children.iter().enumerate() {
                let (lo, hi) = c.partition.leaf_range(a.orbit, ch);
                for x in
                    &mut vector[model.offsets[a.component] + lo..model.offsets[a.component] + hi]
                {
                    *x = pattern[k];
                }
            }
            out.push(Eigenpair {
                anchor: SpectrumAnchor::Wavelet(Anchor::Vertex {
                    component: a.component,
                    orbit: a.orbit,
                    vertex: a.vertex,
                }),
                eigenvalue: a.eigenvalue,
                tail_bound: a.tail_bound,
                vector,
            });
        }
    }
    Ok(out)
}

/// `ℰ(u, v) = ½ Σ_{A,B} μ_A M[A][B] (u_B - u_A)(v_B - v_A)`.
pub fn dirichlet_form(u: &[f64], v: &[f64], matrix: &OperatorMatrix) -> f64 {
    let n = matrix.n();
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                s += matrix.mu[a] * matrix.matrix[(a, b)] * (u[b] - u[a]) * (v[b] - v[a]);
            }
        }
    }
    0.5 * s
}

/// Length of the longest word needed for the shifted comparison.
pub fn shift_budget(l_max: usize, gamma0: &Word) -> usize {
    l_max.saturating_sub(2 * gamma0.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disc::Disc;
    use crate::padic::{int, rat};
    use crate::ultrametric::Branching;

    fn e(n: i64) -> Exponent {
        Exponent::from_integer(n)
    }

    fn tate() -> ComponentConfig {
        let p = Prime::new(2).unwrap();
        let gamma = Mobius::from_i64(4, 0, 0, 1, p).unwrap();
        let group = SchottkyGroup::new(p, vec![gamma]).unwrap();
        let d1 = Disc::closed(p, int(0), e(0)).complement();
        let d2 = Disc::closed(p, int(0), e(-2));
        ComponentConfig {
            group,
            fundamental_domain: GoodFundamentalDomain::new(1, vec![d1, d2]).unwrap(),
            omega: OmegaForm::new(vec![int(1)], vec![int(0), int(1)]).unwrap(),
            orbits: vec![
                OrbitShape {
                    center: int(1),
                    rho: -1,
                    branching: Branching::Regular,
                },
                OrbitShape {
                    center: int(2),
                    rho: -2,
                    branching: Branching::Regular,
                },
            ],
            normalization: Normalization::DiameterRule,
            alpha: e(2),
        }
    }

    #[test]
    fn kernel_examples() {
        let c = tate();
        let one = Rational::from_integer(1.into());
        let id = Word::identity(1);
        let a = Word::parse(1, "a").unwrap();
        let v = kernel_h(&int(1), &id, &int(1), &a, &c.group, e(1), &one).unwrap();
        assert_eq!(v, Number::Exact(rat(1, 2)));
        let v = kernel_h(&int(1), &id, &int(3), &id, &c.group, e(1), &one).unwrap();
        assert_eq!(v, Number::Exact(int(2)));
        assert!(kernel_h(&int(1), &id, &int(1), &id, &c.group, e(1), &one).is_err());
    }

    #[test]
    fn tate_masses_and_matrix() {
        let model = Model::build(
            &[tate()],
            CouplingConfig::uncoupled(1),
            2,
            SpectralOptions::default(),
        )
        .unwrap();
        assert_eq!(model.components[0].total_mass(), int(1));
        let m = assemble_matrix(&model);
        assert!(m.symmetry_defect() < 1e-12);
        assert!(m.row_sum_defect() < 1e-12);
        assert!(m.min_off_diagonal() > 0.0);
        let block = full_spectrum(&model, &m).unwrap();
        assert_eq!(block[0].eigenvalue, 0.0);
        assert!(block[1..].iter().all(|s| s.eigenvalue < 0.0));
        let count: usize = block.iter().map(|s| s.multiplicity).sum();
        assert_eq!(count, m.n());
    }

    #[test]
    fn coupling_validation() {
        assert!(
            CouplingConfig::new(vec![vec![int(0), int(1)], vec![int(2), int(0)]], e(1)).is_err()
        );
        assert!(
            CouplingConfig::new(vec![vec![int(0), int(-1)], vec![int(-1), int(0)]], e(1)).is_err()
        );
        assert!(
            CouplingConfig::new(vec![vec![int(0), int(1)], vec![int(1), int(0)]], e(1)).is_ok()
        );
    }
}
