//! Canonical correlation extraction from transformed moments.
//!
//! The constrained maximization of the correlation coefficient under the
//! transformed measure reduces to a generalized eigenvalue problem on the
//! block pencil of the covariance matrices. We solve it in whitened form:
//! Cholesky-factor both diagonal blocks, take the SVD of
//! `K = Lx^-1 Sigma_xy Ly^-T`, and map the singular pairs back. This keeps
//! the problem symmetric-definite at half the pencil dimension.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result, Side};
use crate::moments::{transformed_moments, MtFunctionSpec, PairedSample, TransformedMoments};

/// Ridge factor for the one-shot Cholesky retry, scaled by `trace/dim`.
const JITTER_SCALE: f64 = 1e-10;

/// Ordered canonical correlation coefficients with paired directions.
///
/// Column `k` of `a_dirs`/`b_dirs` holds the k-th direction pair, normalized
/// to unit variance under the transformed measure and sign-fixed so the
/// largest-magnitude entry of `a_k` is positive.
#[derive(Debug, Clone)]
pub struct CcaSolution {
    /// Coefficients in `[0, 1]`, non-increasing; length `r = min(p, q)`.
    pub rho: DVector<f64>,
    /// p x r matrix of X-side directions.
    pub a_dirs: DMatrix<f64>,
    /// q x r matrix of Y-side directions.
    pub b_dirs: DMatrix<f64>,
    /// Transform the moments were computed under. Standalone `solve_cca`
    /// calls on externally built moments are tagged `Identity`; `mtcca`
    /// records the actual spec.
    pub spec_used: MtFunctionSpec,
    /// Smallest eigenvalues of `sigma_x` and `sigma_y`, as passed in.
    pub conditioning: (f64, f64),
}

impl CcaSolution {
    pub fn order(&self) -> usize {
        self.rho.len()
    }

    /// First-order coefficient, the dependence statistic used throughout.
    pub fn rho1(&self) -> f64 {
        self.rho[0]
    }
}

/// Solves the canonical correlation problem for a set of transformed moments.
pub fn solve_cca(moments: &TransformedMoments) -> Result<CcaSolution> {
    solve_with_spec(moments, MtFunctionSpec::Identity)
}

/// Full pipeline: transformed moments under `spec`, then the pencil solve.
/// The identity spec yields empirical linear CCA.
pub fn mtcca(sample: &PairedSample, spec: &MtFunctionSpec) -> Result<CcaSolution> {
    let moments = transformed_moments(sample, spec)?;
    solve_with_spec(&moments, spec.clone())
}

fn solve_with_spec(moments: &TransformedMoments, spec: MtFunctionSpec) -> Result<CcaSolution> {
    let sigma_x = &moments.sigma_x;
    let sigma_y = &moments.sigma_y;
    let sigma_xy = &moments.sigma_xy;
    if sigma_x
        .iter()
        .chain(sigma_y.iter())
        .chain(sigma_xy.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite {
            what: "covariance input",
        });
    }
    let p = sigma_x.nrows();
    let q = sigma_y.nrows();
    if sigma_xy.nrows() != p || sigma_xy.ncols() != q {
        return Err(Error::DimensionMismatch {
            what: "cross-covariance shape",
            expected: p,
            found: sigma_xy.nrows(),
        });
    }
    let r = p.min(q);

    let min_eig_x = SymmetricEigen::new(sigma_x.clone()).eigenvalues.min();
    let min_eig_y = SymmetricEigen::new(sigma_y.clone()).eigenvalues.min();

    let lx = cholesky_with_jitter(sigma_x, Side::X, min_eig_x)?;
    let ly = cholesky_with_jitter(sigma_y, Side::Y, min_eig_y)?;

    // K = Lx^-1 Sigma_xy Ly^-T, solved triangularly from both sides.
    let w = lx
        .solve_lower_triangular(sigma_xy)
        .ok_or(Error::SingularCovariance {
            side: Side::X,
            min_eig: min_eig_x,
        })?;
    let k = ly
        .solve_lower_triangular(&w.transpose())
        .ok_or(Error::SingularCovariance {
            side: Side::Y,
            min_eig: min_eig_y,
        })?
        .transpose();

    let svd = k.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");

    // Back-substitute the whitening: a = Lx^-T u, b = Ly^-T v.
    let a_white = lx
        .transpose()
        .solve_upper_triangular(&u.columns(0, r).into_owned())
        .ok_or(Error::SingularCovariance {
            side: Side::X,
            min_eig: min_eig_x,
        })?;
    let b_white = ly
        .transpose()
        .solve_upper_triangular(&v_t.rows(0, r).transpose().into_owned())
        .ok_or(Error::SingularCovariance {
            side: Side::Y,
            min_eig: min_eig_y,
        })?;

    let mut rho: Vec<f64> = svd
        .singular_values
        .iter()
        .take(r)
        .map(|&s| s.clamp(0.0, 1.0))
        .collect();
    let mut a = a_white;
    let mut b = b_white;

    // Deterministic order: descending rho, exact ties broken by ascending
    // lexicographic comparison of the |a_k| entries.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| {
        rho[j]
            .partial_cmp(&rho[i])
            .unwrap()
            .then_with(|| lex_cmp_abs(&a.column(i).into_owned(), &a.column(j).into_owned()))
    });
    let rho_sorted: Vec<f64> = order.iter().map(|&i| rho[i]).collect();
    let a_sorted = DMatrix::from_fn(p, r, |i, k| a[(i, order[k])]);
    let b_sorted = DMatrix::from_fn(q, r, |i, k| b[(i, order[k])]);
    rho = rho_sorted;
    a = a_sorted;
    b = b_sorted;

    // Sign convention: flip each pair jointly so the largest-magnitude entry
    // of a_k is positive; joint flips preserve a_k' Sigma_xy b_k = rho_k >= 0.
    for kcol in 0..r {
        let mut idx = 0;
        let mut best = 0.0f64;
        for i in 0..p {
            let m = a[(i, kcol)].abs();
            if m > best {
                best = m;
                idx = i;
            }
        }
        if a[(idx, kcol)] < 0.0 {
            for i in 0..p {
                a[(i, kcol)] = -a[(i, kcol)];
            }
            for i in 0..q {
                b[(i, kcol)] = -b[(i, kcol)];
            }
        }
    }

    Ok(CcaSolution {
        rho: DVector::from_vec(rho),
        a_dirs: a,
        b_dirs: b,
        spec_used: spec,
        conditioning: (min_eig_x, min_eig_y),
    })
}

fn lex_cmp_abs(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.abs().partial_cmp(&y.abs()).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Cholesky factor of `m`, gated on numerical nonsingularity
/// (`min_eig > 1e-10 * trace/dim`) and retried once with a ridge of the same
/// scale when rounding makes the raw factorization fail. A second failure
/// reports the matrix as singular rather than regularizing harder, since
/// heavy ridging would silently distort the coefficients.
fn cholesky_with_jitter(m: &DMatrix<f64>, side: Side, min_eig: f64) -> Result<DMatrix<f64>> {
    let dim = m.nrows() as f64;
    let threshold = JITTER_SCALE * m.trace() / dim;
    if min_eig <= threshold {
        return Err(Error::SingularCovariance { side, min_eig });
    }
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += threshold;
    }
    jittered
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::SingularCovariance { side, min_eig })
}
