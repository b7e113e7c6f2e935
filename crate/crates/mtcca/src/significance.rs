//! Permutation significance testing of canonical correlation coefficients.
//!
//! The null distribution of the k-th coefficient is built by repeatedly
//! permuting the rows of Y (which destroys the pairing while leaving the Y
//! marginal untouched), recomputing the coefficient for each permuted pair,
//! and reading the p-value off the empirical CDF. Each permutation draws its
//! shuffle from a counter-seeded stream, so results are reproducible and
//! independent of execution order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::{MtFunctionSpec, PairedSample};
use crate::param_select::{select_parameters, SearchKind, SelectConfig};
use crate::solver::mtcca;

/// Fraction of failed permutations above which the null is abandoned.
const MAX_FAILURE_FRACTION: f64 = 0.05;

/// How the MT-function spec is chosen for each permuted replicate.
///
/// `Reselect` re-optimizes `(s, t)` on every permuted pair so that the null
/// statistic matches the observed one; `Fixed` reuses one spec everywhere,
/// which is much cheaper. `Identity` tests plain linear CCA.
#[derive(Debug, Clone)]
pub enum SpecStrategy {
    Identity,
    Fixed(MtFunctionSpec),
    Reselect {
        kind: SearchKind,
        config: SelectConfig,
    },
}

/// Permutation-test settings. The defaults mirror the crate-wide choices:
/// 1000 permutations at significance level 0.01.
#[derive(Debug, Clone)]
pub struct PermutationConfig {
    pub m_permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Keep the null replicates in the report.
    pub retain_null: bool,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            m_permutations: 1000,
            alpha: 0.01,
            seed: 0,
            retain_null: false,
        }
    }
}

/// Outcome of a permutation test for one coefficient order.
#[derive(Debug, Clone)]
pub struct SignificanceReport {
    /// 1-based order of the tested coefficient.
    pub order_k: usize,
    /// Observed coefficient, computed under the same spec strategy.
    pub theta0: f64,
    /// Fraction of null replicates at or above `theta0`.
    pub p_value: f64,
    pub m_permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Null replicates for this order, when retained.
    pub null_samples: Option<Vec<f64>>,
}

impl SignificanceReport {
    pub fn significant(&self) -> bool {
        self.p_value < self.alpha
    }
}

/// Full set of null replicates: one coefficient vector per successful
/// permutation.
#[derive(Debug, Clone)]
pub struct PermutationNull {
    pub thetas: Vec<Vec<f64>>,
    pub failures: usize,
}

fn rho_under_strategy(sample: &PairedSample, strategy: &SpecStrategy) -> Result<Vec<f64>> {
    let solution = match strategy {
        SpecStrategy::Identity => mtcca(sample, &MtFunctionSpec::Identity)?,
        SpecStrategy::Fixed(spec) => mtcca(sample, spec)?,
        SpecStrategy::Reselect { kind, config } => {
            let selection = select_parameters(sample, *kind, config)?;
            mtcca(sample, &selection.spec_star)?
        }
    };
    Ok(solution.rho.iter().copied().collect())
}

fn permuted_rho(
    sample: &PairedSample,
    strategy: &SpecStrategy,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut perm: Vec<usize> = (0..sample.n()).collect();
    perm.shuffle(&mut rng);
    rho_under_strategy(&sample.with_permuted_y(perm.as_slice()), strategy)
}

/// Generates the permutation null for all coefficient orders at once.
///
/// A failed permutation is redrawn once from a disjoint stream; permutations
/// that fail twice are dropped and counted. More than 5% drops abort with
/// `DegenerateNull`.
pub fn permutation_null(
    sample: &PairedSample,
    strategy: &SpecStrategy,
    config: &PermutationConfig,
) -> Result<PermutationNull> {
    let m = config.m_permutations;
    let draws: Vec<Option<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|i| {
            // Streams 2i and 2i+1: the retry never collides with another
            // permutation's primary draw.
            permuted_rho(sample, strategy, config.seed, 2 * i as u64)
                .or_else(|_| permuted_rho(sample, strategy, config.seed, 2 * i as u64 + 1))
                .ok()
        })
        .collect();
    let failures = draws.iter().filter(|d| d.is_none()).count();
    if failures as f64 > MAX_FAILURE_FRACTION * m as f64 {
        return Err(Error::DegenerateNull { failures, total: m });
    }
    Ok(PermutationNull {
        thetas: draws.into_iter().flatten().collect(),
        failures,
    })
}

/// Empirical p-value: the fraction of null replicates `>= theta0`. Ties
/// count toward the p-value, which errs on the conservative side.
fn empirical_p(theta0: f64, null: &[f64]) -> f64 {
    if null.is_empty() {
        return 1.0;
    }
    null.iter().filter(|&&t| t >= theta0).count() as f64 / null.len() as f64
}

/// Permutation test for the k-th order coefficient (1-based).
pub fn permutation_test(
    sample: &PairedSample,
    strategy: &SpecStrategy,
    order_k: usize,
    config: &PermutationConfig,
) -> Result<SignificanceReport> {
    let r = sample.p().min(sample.q());
    if order_k == 0 || order_k > r {
        return Err(Error::DimensionMismatch {
            what: "coefficient order",
            expected: r,
            found: order_k,
        });
    }
    if config.m_permutations == 0 {
        return Err(Error::DimensionMismatch {
            what: "permutation count",
            expected: 1,
            found: 0,
        });
    }
    let observed = rho_under_strategy(sample, strategy)?;
    let null = permutation_null(sample, strategy, config)?;
    let column: Vec<f64> = null.thetas.iter().map(|t| t[order_k - 1]).collect();
    let theta0 = observed[order_k - 1];
    Ok(SignificanceReport {
        order_k,
        theta0,
        p_value: empirical_p(theta0, &column),
        m_permutations: config.m_permutations,
        alpha: config.alpha,
        seed: config.seed,
        null_samples: config.retain_null.then_some(column),
    })
}

/// Permutation tests for every order from one shared null, avoiding
/// `r` separate permutation passes.
pub fn permutation_test_all_orders(
    sample: &PairedSample,
    strategy: &SpecStrategy,
    config: &PermutationConfig,
) -> Result<Vec<SignificanceReport>> {
    let observed = rho_under_strategy(sample, strategy)?;
    let null = permutation_null(sample, strategy, config)?;
    Ok((0..observed.len())
        .map(|k| {
            let column: Vec<f64> = null.thetas.iter().map(|t| t[k]).collect();
            SignificanceReport {
                order_k: k + 1,
                theta0: observed[k],
                p_value: empirical_p(observed[k], &column),
                m_permutations: config.m_permutations,
                alpha: config.alpha,
                seed: config.seed,
                null_samples: config.retain_null.then_some(column),
            }
        })
        .collect())
}
