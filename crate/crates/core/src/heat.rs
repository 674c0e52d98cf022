//! Heat semigroup, transition kernels and the jump process of the generator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use thiserror::Error;

use crate::spectral::{Eigenpair, OperatorMatrix, SpectrumAnchor};
use crate::wavelets::Anchor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatError {
    #[error("time {0} is negative")]
    NegativeTime(f64),
    #[error("horizon {0} must be positive")]
    NonPositiveHorizon(f64),
    #[error("leaf {0} has zero jump rate")]
    AbsorbingState(usize),
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("leaf {0} is out of range")]
    NoSuchLeaf(usize),
}

/// `μ`-orthonormal eigenpairs of the generator.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    /// Tree depth of the wavelet anchor, `None` for orbit-level modes.
    pub levels: Vec<Option<usize>>,
}

impl SpectralDecomposition {
    /// From analytic eigenpairs; `depth_of` gives the depth of a wavelet anchor.
    pub fn from_eigenpairs(
        pairs: &[Eigenpair],
        mu: Vec<f64>,
        depth_of: impl Fn(&Anchor) -> usize,
    ) -> Self {
        SpectralDecomposition {
            eigenvalues: pairs.iter().map(|p| p.eigenvalue).collect(),
            vectors: pairs.iter().map(|p| p.vector.clone()).collect(),
            mu,
            levels: pairs
                .iter()
                .map(|p| match &p.anchor {
                    SpectrumAnchor::Wavelet(a) => Some(depth_of(a)),
                    SpectrumAnchor::ConstantBlock { .. } => None,
                })
                .collect(),
        }
    }

    /// Direct eigensolve of `D^(1/2) M D^(-1/2)`.
    pub fn from_matrix(m: &OperatorMatrix) -> Self {
        let n = m.n();
        let s: Vec<f64> = m.mu.iter().map(|x| x.sqrt()).collect();
        let sym = DMatrix::from_fn(n, n, |a, b| s[a] * m.matrix[(a, b)] / s[b]);
        let sym = (&sym + sym.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        SpectralDecomposition {
            eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
            vectors: order
                .iter()
                .map(|&k| (0..n).map(|a| eig.eigenvectors[(a, k)] / s[a]).collect())
                .collect(),
            mu: m.mu.clone(),
            levels: vec![None; n],
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.mu)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    /// `max |⟨φ_i, φ_j⟩ - δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.vectors.iter().enumerate() {
            for (j, b) in self.vectors.iter().enumerate().take(i + 1) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(a, b) - target).abs());
            }
        }
        worst
    }

    /// Largest error reconstructing a leaf indicator.
    pub fn completeness_residual(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for leaf in 0..n {
            let mut rec = vec![0.0; n];
            for v in &self.vectors {
                let c = v[leaf] * self.mu[leaf];
                for (r, x) in rec.iter_mut().zip(v) {
                    *r += c * x;
                }
            }
            for (y, r) in rec.iter().enumerate() {
                let target = if y == leaf { 1.0 } else { 0.0 };
                worst = worst.max((r - target).abs());
            }
        }
        worst
    }

    fn check_len(&self, f: &[f64]) -> Result<(), HeatError> {
        if f.len() != self.n() {
            return Err(HeatError::DimensionMismatch {
                expected: self.n(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// `u(t) = Σ_k e^(λ_k t) ⟨u₀, φ_k⟩ φ_k`.
pub fn solve_cauchy(u0: &[f64], t: f64, d: &SpectralDecomposition) -> Result<Vec<f64>, HeatError> {
    if t < 0.0 {
        return Err(HeatError::NegativeTime(t));
    }
    d.check_len(u0)?;
    if t == 0.0 {
        return Ok(u0.to_vec());
    }
    let mut u = vec![0.0; d.n()];
    for (lambda, v) in d.eigenvalues.iter().zip(&d.vectors) {
        let c = (lambda * t).exp() * d.inner(u0, v);
        if c == 0.0 {
            continue;
        }
        for (x, y) in u.iter_mut().zip(v) {
            *x += c * y;
        }
    }
    Ok(u)
}

pub fn total_mass(u: &[f64], mu: &[f64]) -> f64 {
    u.iter().zip(mu).map(|(a, m)| a * m).sum()
}

#[derive(Clone, Debug)]
pub struct TransitionKernel {
    pub t: f64,
    pub matrix: DMatrix<f64>,
    pub mu: Vec<f64>,
    /// Entries in `[-1e-10, 0)` set to zero.
    pub clipped: usize,
    /// Smallest entry before clipping.
    pub min_entry: f64,
}

impl TransitionKernel {
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.mu.len())
            .map(|a| (self.matrix.row(a).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn detailed_balance_defect(&self) -> f64 {
        let n = self.mu.len();
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

    pub fn row(&self, a: usize) -> Vec<f64> {
        self.matrix.row(a).iter().copied().collect()
    }
}

/// `P(t) = exp(tM)` through the decomposition.
pub fn transition_matrix(t: f64, d: &SpectralDecomposition) -> Result<TransitionKernel, HeatError> {
    if t < 0.0 {
        return Err(HeatError::NegativeTime(t));
    }
    let n = d.n();
    if t == 0.0 {
        return Ok(TransitionKernel {
            t,
            matrix: DMatrix::identity(n, n),
            mu: d.mu.clone(),
            clipped: 0,
            min_entry: 0.0,
        });
    }
    let mut p = DMatrix::<f64>::zeros(n, n);
    for (lambda, v) in d.eigenvalues.iter().zip(&d.vectors) {
        let e = (lambda * t).exp();
        for a in 0..n {
            if v[a] == 0.0 {
                continue;
            }
            let ea = e * v[a];
            for b in 0..n {
                p[(a, b)] += ea * v[b] * d.mu[b];
            }
        }
    }
    let mut clipped = 0;
    let mut min_entry = f64::INFINITY;
    for x in p.iter_mut() {
        min_entry = min_entry.min(*x);
        if *x < 0.0 && *x >= -1e-10 {
            *x = 0.0;
            clipped += 1;
        }
    }
    Ok(TransitionKernel {
        t,
        matrix: p,
        mu: d.mu.clone(),
        clipped,
        min_entry,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagonalStatus {
    Converged,
    Diverged,
    Inconclusive,
}

/// Level-by-level behaviour of `p(t, x, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalDiagnostic {
    pub status: DiagonalStatus,
    /// Contribution of each wavelet level containing `x`, shallow first.
    pub levels: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Smallest `t` at which every level ratio drops below one.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatKernelValue {
    pub value: f64,
    pub terms: usize,
    pub diagnostic: Option<DiagonalDiagnostic>,
}

/// Density `p(t, x, y)` of the transition law with respect to `μ`.
///
/// Only eigenfunctions nonzero at both points contribute; for analytic
/// decompositions these are the wavelets whose support contains the join.
pub fn heat_kernel(
    t: f64,
    x: usize,
    y: usize,
    d: &SpectralDecomposition,
) -> Result<HeatKernelValue, HeatError> {
    if t < 0.0 {
        return Err(HeatError::NegativeTime(t));
    }
    let n = d.n();
    if x >= n {
        return Err(HeatError::NoSuchLeaf(x));
    }
    if y >= n {
        return Err(HeatError::NoSuchLeaf(y));
    }
    let mut value = 0.0;
    let mut terms = 0;
    let mut by_level: std::collections::BTreeMap<usize, (f64, f64, f64)> = Default::default();
    for (k, v) in d.vectors.iter().enumerate() {
        if v[x] == 0.0 || v[y] == 0.0 {
            continue;
        }
        let lambda = d.eigenvalues[k];
        let term = (lambda * t).exp() * v[x] * v[y];
        value += term;
        terms += 1;
        if x == y {
            if let Some(level) = d.levels[k] {
                let e = by_level.entry(level).or_insert((0.0, 0.0, lambda));
                e.0 += term;
                e.1 += v[x] * v[x];
            }
        }
    }
    let diagnostic =
        (x == y).then(|| diagonal_diagnostic(&by_level.into_values().collect::<Vec<_>>()));
    Ok(HeatKernelValue {
        value,
        terms,
        diagnostic,
    })
}

fn diagonal_diagnostic(levels: &[(f64, f64, f64)]) -> DiagonalDiagnostic {
    let values: Vec<f64> = levels.iter().map(|l| l.0).collect();
    let mut partial_sums = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for v in &values {
        acc += v;
        partial_sums.push(acc);
    }
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    let mut threshold = 0.0f64;
    for w in levels.windows(2) {
        let gap = w[0].2 - w[1].2;
        if gap > 0.0 {
            threshold = threshold.max((w[1].1 / w[0].1).ln() / gap);
        } else if w[1].1 >= w[0].1 {
            threshold = f64::INFINITY;
        }
    }
    let status = match ratios.as_slice() {
        [] => DiagonalStatus::Inconclusive,
        [.., last] if *last >= 1.0 => DiagonalStatus::Diverged,
        [only] => {
            if *only < 1.0 {
                DiagonalStatus::Converged
            } else {
                DiagonalStatus::Inconclusive
            }
        }
        [.., prev, last] => {
            if *prev < 1.0 && last <= prev {
                DiagonalStatus::Converged
            } else {
                DiagonalStatus::Inconclusive
            }
        }
    };
    DiagonalDiagnostic {
        status,
        levels: values,
        partial_sums,
        ratios,
        threshold,
    }
}

/// Holding rates and jump distributions of the embedded chain.
#[derive(Clone, Debug)]
pub struct JumpChain {
    pub rates: Vec<f64>,
    /// Cumulative jump probabilities per leaf, paired with target leaves.
    cumulative: Vec<Vec<(f64, usize)>>,
}

impl JumpChain {
    pub fn new(m: &OperatorMatrix) -> Self {
        let n = m.n();
        let mut rates = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for a in 0..n {
            let rate: f64 = (0..n).filter(|&b| b != a).map(|b| m.matrix[(a, b)]).sum();
            let mut acc = 0.0;
            let mut row = Vec::new();
            for b in 0..n {
                if b != a && m.matrix[(a, b)] > 0.0 {
                    acc += m.matrix[(a, b)] / rate;
                    row.push((acc, b));
                }
            }
            rates.push(rate);
            cumulative.push(row);
        }
        JumpChain { rates, cumulative }
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    fn jump(&self, a: usize, u: f64) -> usize {
        let row = &self.cumulative[a];
        let i = row.partition_point(|&(c, _)| c <= u);
        row[i.min(row.len() - 1)].1
    }
}

/// Piecewise-constant right-continuous path on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub seed: u64,
    pub path_index: u64,
    pub initial: usize,
    pub jump_times: Vec<f64>,
    /// State entered at each jump.
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl PathSample {
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            self.initial
        } else {
            self.states[k - 1]
        }
    }

    pub fn final_state(&self) -> usize {
        self.states.last().copied().unwrap_or(self.initial)
    }
}

/// One path of the jump process from `x0`, with stream `path_index` of the seed.
pub fn sample_path(
    x0: usize,
    horizon: f64,
    seed: u64,
    path_index: u64,
    chain: &JumpChain,
) -> Result<PathSample, HeatError> {
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(HeatError::NonPositiveHorizon(horizon));
    }
    if x0 >= chain.n() {
        return Err(HeatError::NoSuchLeaf(x0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    let mut t = 0.0;
    let mut state = x0;
    let mut jump_times = Vec::new();
    let mut states = Vec::new();
    loop {
        let rate = chain.rates[state];
        if rate <= 0.0 {
            return Err(HeatError::AbsorbingState(state));
        }
        t += Exp::new(rate).expect("positive rate").sample(&mut rng);
        if t > horizon {
            break;
        }
        state = chain.jump(state, rng.gen::<f64>());
        jump_times.push(t);
        states.push(state);
    }
    Ok(PathSample {
        seed,
        path_index,
        initial: x0,
        jump_times,
        states,
        horizon,
    })
}

/// `count` independent paths, computed in parallel and returned in index order.
pub fn sample_paths(
    x0: usize,
    horizon: f64,
    seed: u64,
    count: u64,
    chain: &JumpChain,
) -> Result<Vec<PathSample>, HeatError> {
    (0..count)
        .into_par_iter()
        .map(|i| sample_path(x0, horizon, seed, i, chain))
        .collect()
}

/// Law of the state at the horizon.
pub fn empirical_law(paths: &[PathSample], n: usize) -> Vec<f64> {
    let mut law = vec![0.0; n];
    for p in paths {
        law[p.final_state()] += 1.0;
    }
    let total = paths.len().max(1) as f64;
    law.iter_mut().for_each(|x| *x /= total);
    law
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> OperatorMatrix {
        OperatorMatrix {
            matrix: DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]),
            mu: vec![2.0 / 3.0, 1.0 / 3.0],
            component_of: vec![0, 0],
            orbit_of: vec![0, 1],
            orbits: vec![(0, 0), (0, 1)],
        }
    }

    #[test]
    fn two_state_semigroup() {
        let m = two_state();
        let d = SpectralDecomposition::from_matrix(&m);
        assert!((d.eigenvalues[1] + 3.0).abs() < 1e-12);
        let p = transition_matrix(1.0, &d).unwrap();
        let expect = 2.0 / 3.0 + (1.0 / 3.0) * (-3.0f64).exp();
        assert!((p.matrix[(0, 0)] - expect).abs() < 1e-12);
        assert!(p.row_sum_defect() < 1e-12);
        assert!(p.detailed_balance_defect() < 1e-12);
        assert_eq!(
            transition_matrix(0.0, &d).unwrap().matrix,
            DMatrix::identity(2, 2)
        );
        assert!(transition_matrix(-1.0, &d).is_err());
    }

    #[test]
    fn sampler_is_reproducible() {
        let chain = JumpChain::new(&two_state());
        let a = sample_path(0, 5.0, 7, 3, &chain).unwrap();
        let b = sample_path(0, 5.0, 7, 3, &chain).unwrap();
        assert_eq!(a, b);
        assert!(a.states.windows(2).all(|w| w[0] != w[1]));
        let short = sample_path(0, 1e-9, 7, 0, &chain).unwrap();
        assert!(short.jump_times.is_empty());
    }
}
