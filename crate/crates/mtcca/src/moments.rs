//! Measure-transformed moment estimation.
//!
//! A pair of non-negative MT-functions `(u, v)` reweights the joint sample by
//! `phi_n = u(x_n) v(y_n) / mean(u v)`. This module evaluates those weights in
//! the log domain and produces the weighted covariance / cross-covariance
//! matrices and means that the rest of the crate consumes. With the identity
//! transform the estimators reduce to the standard unbiased sample moments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative mass threshold above which a single sample is considered to carry
/// the whole transform, making the weighted moments meaningless.
const DEGENERATE_WEIGHT_SHARE: f64 = 1.0 - 1e-12;

/// N joint observations of `X in R^p` and `Y in R^q`, with column labels.
///
/// Rows are observations. Construction validates that both blocks have the
/// same number of rows, that `N >= 2`, and that every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    x_data: DMatrix<f64>,
    y_data: DMatrix<f64>,
    x_labels: Vec<String>,
    y_labels: Vec<String>,
}

impl PairedSample {
    pub fn new(
        x_data: DMatrix<f64>,
        y_data: DMatrix<f64>,
        x_labels: Vec<String>,
        y_labels: Vec<String>,
    ) -> Result<Self> {
        if x_data.nrows() != y_data.nrows() {
            return Err(Error::DimensionMismatch {
                what: "paired sample row counts",
                expected: x_data.nrows(),
                found: y_data.nrows(),
            });
        }
        if x_data.nrows() < 2 {
            return Err(Error::TooFewSamples {
                min: 2,
                found: x_data.nrows(),
            });
        }
        if x_data.ncols() == 0 || y_data.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                what: "sample column count",
                expected: 1,
                found: 0,
            });
        }
        if x_labels.len() != x_data.ncols() {
            return Err(Error::DimensionMismatch {
                what: "x labels",
                expected: x_data.ncols(),
                found: x_labels.len(),
            });
        }
        if y_labels.len() != y_data.ncols() {
            return Err(Error::DimensionMismatch {
                what: "y labels",
                expected: y_data.ncols(),
                found: y_labels.len(),
            });
        }
        if x_data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "x data" });
        }
        if y_data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "y data" });
        }
        Ok(Self {
            x_data,
            y_data,
            x_labels,
            y_labels,
        })
    }

    /// Builds a sample with generated labels `x1..xp`, `y1..yq`.
    pub fn unlabeled(x_data: DMatrix<f64>, y_data: DMatrix<f64>) -> Result<Self> {
        let x_labels = (1..=x_data.ncols()).map(|i| format!("x{i}")).collect();
        let y_labels = (1..=y_data.ncols()).map(|i| format!("y{i}")).collect();
        Self::new(x_data, y_data, x_labels, y_labels)
    }

    pub fn n(&self) -> usize {
        self.x_data.nrows()
    }

    pub fn p(&self) -> usize {
        self.x_data.ncols()
    }

    pub fn q(&self) -> usize {
        self.y_data.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x_data
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y_data
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn y_labels(&self) -> &[String] {
        &self.y_labels
    }

    /// Returns a copy with the rows of `y_data` reordered by `perm`
    /// (`perm[n]` is the source row of new row `n`). Marginal moments of Y are
    /// unchanged; only the pairing with X is destroyed.
    pub fn with_permuted_y(&self, perm: &[usize]) -> Self {
        debug_assert_eq!(perm.len(), self.n());
        let mut y = DMatrix::zeros(self.n(), self.q());
        for (dst, &src) in perm.iter().enumerate() {
            y.set_row(dst, &self.y_data.row(src));
        }
        Self {
            x_data: self.x_data.clone(),
            y_data: y,
            x_labels: self.x_labels.clone(),
            y_labels: self.y_labels.clone(),
        }
    }

    /// Returns a copy translated by constant vectors `alpha` (X) and `beta` (Y).
    pub fn translated(&self, alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<Self> {
        if alpha.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "x translation",
                expected: self.p(),
                found: alpha.len(),
            });
        }
        if beta.len() != self.q() {
            return Err(Error::DimensionMismatch {
                what: "y translation",
                expected: self.q(),
                found: beta.len(),
            });
        }
        let mut x = self.x_data.clone();
        let mut y = self.y_data.clone();
        for mut row in x.row_iter_mut() {
            row += alpha.transpose();
        }
        for mut row in y.row_iter_mut() {
            row += beta.transpose();
        }
        Self::new(x, y, self.x_labels.clone(), self.y_labels.clone())
    }
}

/// Transform family applied to the joint sample.
///
/// `Identity` leaves the measure untouched (linear CCA). `Exponential` tilts
/// by `exp(s'x) exp(t'y)` and is translation invariant. `Gaussian` localizes
/// around `(s, t)` with widths `(sigma, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MtFunctionSpec {
    Identity,
    Exponential {
        s: DVector<f64>,
        t: DVector<f64>,
    },
    Gaussian {
        s: DVector<f64>,
        t: DVector<f64>,
        sigma: f64,
        tau: f64,
    },
}

impl MtFunctionSpec {
    pub fn exponential(s: DVector<f64>, t: DVector<f64>) -> Result<Self> {
        if s.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec {
                reason: "exponential parameters must be finite".into(),
            });
        }
        Ok(Self::Exponential { s, t })
    }

    pub fn gaussian(s: DVector<f64>, t: DVector<f64>, sigma: f64, tau: f64) -> Result<Self> {
        if s.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec {
                reason: "gaussian locations must be finite".into(),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidSpec {
                reason: format!("gaussian widths must be positive, got sigma={sigma}, tau={tau}"),
            });
        }
        Ok(Self::Gaussian { s, t, sigma, tau })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Exponential { .. } => "exponential",
            Self::Gaussian { .. } => "gaussian",
        }
    }

    fn check_dims(&self, p: usize, q: usize) -> Result<()> {
        let (sp, tq) = match self {
            Self::Identity => return Ok(()),
            Self::Exponential { s, t } => (s.len(), t.len()),
            Self::Gaussian { s, t, .. } => (s.len(), t.len()),
        };
        if sp != p {
            return Err(Error::DimensionMismatch {
                what: "MT-function s parameter",
                expected: p,
                found: sp,
            });
        }
        if tq != q {
            return Err(Error::DimensionMismatch {
                what: "MT-function t parameter",
                expected: q,
                found: tq,
            });
        }
        Ok(())
    }
}

/// Weighted means and covariance/cross-covariance matrices under the
/// transformed measure, plus weight-concentration diagnostics.
#[derive(Debug, Clone)]
pub struct TransformedMoments {
    /// p x p weighted covariance of X (symmetric, PSD up to rounding).
    pub sigma_x: DMatrix<f64>,
    /// q x q weighted covariance of Y.
    pub sigma_y: DMatrix<f64>,
    /// p x q weighted cross-covariance.
    pub sigma_xy: DMatrix<f64>,
    /// Weighted mean of X.
    pub mu_x: DVector<f64>,
    /// Weighted mean of Y.
    pub mu_y: DVector<f64>,
    /// Maximum of the per-sample log weights before normalization.
    pub log_weight_max: f64,
    /// `(sum phi)^2 / (N sum phi^2)`: 1 for uniform weights, near 0 when a
    /// few samples carry all the mass.
    pub effective_sample_fraction: f64,
}

/// Neumaier-compensated accumulator. The running compensation keeps weighted
/// sums accurate for N up to 10^6.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn total(self) -> f64 {
        self.sum + self.c
    }
}

fn row_norms_squared(data: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(data.nrows());
    for j in 0..data.ncols() {
        let col = data.column(j);
        for i in 0..data.nrows() {
            out[i] += col[i] * col[i];
        }
    }
    out
}

/// Per-sample log weights `log u(x_n) + log v(y_n)`, up to a common additive
/// constant. Normalization constants cancel in the weight ratio, so the
/// Gaussian family drops its `(2 pi sigma^2)^{-p/2}` factors here.
pub fn log_weights(sample: &PairedSample, spec: &MtFunctionSpec) -> Result<DVector<f64>> {
    spec.check_dims(sample.p(), sample.q())?;
    let n = sample.n();
    let lw = match spec {
        MtFunctionSpec::Identity => DVector::zeros(n),
        MtFunctionSpec::Exponential { s, t } => sample.x() * s + sample.y() * t,
        MtFunctionSpec::Gaussian { s, t, sigma, tau } => {
            let xs = sample.x() * s;
            let yt = sample.y() * t;
            let s_norm2 = s.norm_squared();
            let t_norm2 = t.norm_squared();
            let xn2 = row_norms_squared(sample.x());
            let yn2 = row_norms_squared(sample.y());
            let mut lw = DVector::zeros(n);
            for i in 0..n {
                let dx2 = xn2[i] - 2.0 * xs[i] + s_norm2;
                let dy2 = yn2[i] - 2.0 * yt[i] + t_norm2;
                lw[i] = -dx2 / (2.0 * sigma * sigma) - dy2 / (2.0 * tau * tau);
            }
            lw
        }
    };
    debug_assert!(lw.iter().all(|v| v.is_finite()), "log weights overflowed");
    Ok(lw)
}

/// Normalizes log weights into `phi_n = exp(l_n) / mean(exp(l))`, shifted by
/// the maximum before exponentiation so extreme logs cannot overflow.
/// The result is non-negative with mean exactly 1 up to rounding.
pub fn normalized_weights(log_w: &DVector<f64>) -> DVector<f64> {
    let n = log_w.len();
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = log_w.map(|l| (l - m).exp());
    let mut acc = Compensated::default();
    for &e in exps.iter() {
        acc.add(e);
    }
    let mean = acc.total() / n as f64;
    exps / mean
}

/// Empirical measure-transformed moments of the sample under `spec`.
///
/// Means are `mu = (1/N) sum_n z_n phi_n`; covariances are accumulated in
/// centered form, `(1/(N-1)) sum_n phi_n (z_n - mu_z)(w_n - mu_w)'`, which is
/// algebraically identical to the raw-moment expression while keeping the
/// diagonal blocks PSD. The identity transform reproduces the standard
/// unbiased sample covariance.
pub fn transformed_moments(
    sample: &PairedSample,
    spec: &MtFunctionSpec,
) -> Result<TransformedMoments> {
    let lw = log_weights(sample, spec)?;
    let phi = normalized_weights(&lw);
    let n = sample.n();

    let mut sum_phi = Compensated::default();
    let mut sum_phi2 = Compensated::default();
    let mut max_phi = 0.0f64;
    for &w in phi.iter() {
        sum_phi.add(w);
        sum_phi2.add(w * w);
        max_phi = max_phi.max(w);
    }
    let total = sum_phi.total();
    if max_phi / total > DEGENERATE_WEIGHT_SHARE {
        return Err(Error::DegenerateWeights {
            max_share: max_phi / total,
        });
    }
    let effective_sample_fraction = total * total / (n as f64 * sum_phi2.total());

    let mu_x = weighted_column_means(sample.x(), &phi);
    let mu_y = weighted_column_means(sample.y(), &phi);

    // Centered copies and a phi-scaled right factor turn the weighted sums
    // into three matrix products.
    let xc = centered(sample.x(), &mu_x);
    let yc = centered(sample.y(), &mu_y);
    let xcw = row_scaled(&xc, &phi);
    let ycw = row_scaled(&yc, &phi);
    let denom = (n - 1) as f64;
    let mut sigma_x = xc.transpose() * &xcw / denom;
    let mut sigma_y = yc.transpose() * &ycw / denom;
    let sigma_xy = xc.transpose() * &ycw / denom;
    symmetrize(&mut sigma_x);
    symmetrize(&mut sigma_y);

    debug_assert!(sigma_x.iter().all(|v| v.is_finite()));
    debug_assert!(sigma_y.iter().all(|v| v.is_finite()));
    debug_assert!(sigma_xy.iter().all(|v| v.is_finite()));

    Ok(TransformedMoments {
        sigma_x,
        sigma_y,
        sigma_xy,
        mu_x,
        mu_y,
        log_weight_max: lw.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        effective_sample_fraction,
    })
}

fn weighted_column_means(data: &DMatrix<f64>, phi: &DVector<f64>) -> DVector<f64> {
    let n = data.nrows();
    let d = data.ncols();
    let mut acc = vec![Compensated::default(); d];
    for i in 0..n {
        let w = phi[i];
        for j in 0..d {
            acc[j].add(w * data[(i, j)]);
        }
    }
    DVector::from_iterator(d, acc.into_iter().map(|a| a.total() / n as f64))
}

fn centered(data: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for j in 0..out.ncols() {
        let m = mu[j];
        for v in out.column_mut(j).iter_mut() {
            *v -= m;
        }
    }
    out
}

fn row_scaled(data: &DMatrix<f64>, phi: &DVector<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for j in 0..out.ncols() {
        let mut col = out.column_mut(j);
        for i in 0..col.len() {
            col[i] *= phi[i];
        }
    }
    out
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Standard unbiased sample covariance of the columns of `data` (identity
/// weighting, two-pass centered).
pub fn sample_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    let phi = DVector::from_element(data.nrows(), 1.0);
    let mu = weighted_column_means(data, &phi);
    let c = centered(data, &mu);
    let mut cov = c.transpose() * &c / (data.nrows() - 1) as f64;
    symmetrize(&mut cov);
    cov
}

/// Unweighted column means.
pub fn sample_mean(data: &DMatrix<f64>) -> DVector<f64> {
    let phi = DVector::from_element(data.nrows(), 1.0);
    weighted_column_means(data, &phi)
}

/// Per-column sample standard deviations (unbiased variance).
pub fn sample_stds(data: &DMatrix<f64>) -> DVector<f64> {
    sample_covariance(data).diagonal().map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn two_col_sample() -> PairedSample {
        let x = dmatrix![0.0, 1.0; 1.0, 2.0; 2.0, 0.5; -1.0, 0.0];
        let y = dmatrix![0.5, 1.0; 1.5, -1.0; 0.0, 2.0; 1.0, 0.0];
        PairedSample::unlabeled(x, y).unwrap()
    }

    #[test]
    fn rejects_row_count_mismatch() {
        let x = DMatrix::zeros(3, 2);
        let y = DMatrix::zeros(4, 2);
        assert!(matches!(
            PairedSample::unlabeled(x, y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut x = DMatrix::zeros(3, 1);
        x[(1, 0)] = f64::NAN;
        let y = DMatrix::zeros(3, 1);
        assert!(matches!(
            PairedSample::unlabeled(x, y),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn rejects_single_observation() {
        let x = DMatrix::zeros(1, 1);
        let y = DMatrix::zeros(1, 1);
        assert!(matches!(
            PairedSample::unlabeled(x, y),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn gaussian_spec_requires_positive_widths() {
        let s = DVector::zeros(1);
        let t = DVector::zeros(1);
        assert!(MtFunctionSpec::gaussian(s.clone(), t.clone(), 0.0, 1.0).is_err());
        assert!(MtFunctionSpec::gaussian(s.clone(), t.clone(), 1.0, -2.0).is_err());
        assert!(MtFunctionSpec::gaussian(s, t, 1.0, 1.0).is_ok());
    }

    #[test]
    fn identity_log_weights_are_zero() {
        let sample = two_col_sample();
        let lw = log_weights(&sample, &MtFunctionSpec::Identity).unwrap();
        assert!(lw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exponential_log_weights_are_linear_form() {
        // s = [1], t = [0], X rows {0, ln 2} -> [0, ln 2].
        let x = dmatrix![0.0; std::f64::consts::LN_2];
        let y = dmatrix![5.0; -3.0];
        let sample = PairedSample::unlabeled(x, y).unwrap();
        let spec = MtFunctionSpec::exponential(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        )
        .unwrap();
        let lw = log_weights(&sample, &spec).unwrap();
        assert!((lw[0] - 0.0).abs() < 1e-15);
        assert!((lw[1] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gaussian_log_weights_match_direct_evaluation() {
        // Oracle: l = -(x^2 + y^2)/2 for s = t = 0, sigma = tau = 1.
        // Rows (0,0) and (1,1) give [0, -1] up to a common additive constant.
        let x = dmatrix![0.0; 1.0];
        let y = dmatrix![0.0; 1.0];
        let sample = PairedSample::unlabeled(x, y).unwrap();
        let spec =
            MtFunctionSpec::gaussian(DVector::zeros(1), DVector::zeros(1), 1.0, 1.0).unwrap();
        let lw = log_weights(&sample, &spec).unwrap();
        assert!(((lw[0] - lw[1]) - 1.0).abs() < 1e-14);
        assert!((lw[0] - 0.0).abs() < 1e-14);
    }

    #[test]
    fn log_weights_reject_dimension_mismatch() {
        let sample = two_col_sample();
        let spec = MtFunctionSpec::exponential(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0, 0.0]),
        )
        .unwrap();
        assert!(matches!(
            log_weights(&sample, &spec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_logs_normalize_to_ones() {
        let lw = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]);
        let phi = normalized_weights(&lw);
        for &w in phi.iter() {
            assert!((w - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_weight_ratio() {
        // u v values {1, 3}: phi = {1, 3} / 2 = {0.5, 1.5}.
        let lw = DVector::from_vec(vec![0.0f64, 3.0f64.ln()]);
        let phi = normalized_weights(&lw);
        assert!((phi[0] - 0.5).abs() < 1e-14);
        assert!((phi[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn extreme_logs_do_not_overflow() {
        // Shift-by-max oracle in exact arithmetic: [2/(1+e), 2e/(1+e)].
        let lw = DVector::from_vec(vec![1000.0, 1001.0]);
        let phi = normalized_weights(&lw);
        assert!((phi[0] - 0.5378828427399902).abs() < 1e-14);
        assert!((phi[1] - 1.4621171572600098).abs() < 1e-14);
        assert!(phi.iter().all(|v| v.is_finite()));
    }

    type RawMoments = (
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DVector<f64>,
        DVector<f64>,
    );

    /// Literal single-pass evaluation of the raw-moment estimator, kept
    /// independent of the centered accumulation used by the implementation.
    fn brute_force_moments(sample: &PairedSample, spec: &MtFunctionSpec) -> RawMoments {
        let n = sample.n() as f64;
        let lw = log_weights(sample, spec).unwrap();
        let uv = lw.map(f64::exp);
        let mean_uv = uv.sum() / n;
        let phi = uv / mean_uv;
        let (p, q) = (sample.p(), sample.q());
        let mut mu_x = DVector::zeros(p);
        let mut mu_y = DVector::zeros(q);
        let mut rx = DMatrix::zeros(p, p);
        let mut ry = DMatrix::zeros(q, q);
        let mut rxy = DMatrix::zeros(p, q);
        for i in 0..sample.n() {
            let xi = sample.x().row(i).transpose();
            let yi = sample.y().row(i).transpose();
            mu_x += &xi * (phi[i] / n);
            mu_y += &yi * (phi[i] / n);
            rx += &xi * xi.transpose() * phi[i];
            ry += &yi * yi.transpose() * phi[i];
            rxy += &xi * yi.transpose() * phi[i];
        }
        let c = n / (n - 1.0);
        let sigma_x = rx / (n - 1.0) - &mu_x * mu_x.transpose() * c;
        let sigma_y = ry / (n - 1.0) - &mu_y * mu_y.transpose() * c;
        let sigma_xy = rxy / (n - 1.0) - &mu_x * mu_y.transpose() * c;
        (sigma_x, sigma_y, sigma_xy, mu_x, mu_y)
    }

    #[test]
    fn scalar_exponential_matches_frozen_oracle() {
        // N = 3, X = [0,1,2], Y = [0,1,4], exponential s = [0.1], t = [0].
        // Expected values computed by direct evaluation of the raw-moment
        // formulas in exact-order f64 arithmetic.
        let x = dmatrix![0.0; 1.0; 2.0];
        let y = dmatrix![0.0; 1.0; 4.0];
        let sample = PairedSample::unlabeled(x, y).unwrap();
        let spec = MtFunctionSpec::exponential(
            DVector::from_vec(vec![0.1]),
            DVector::from_vec(vec![0.0]),
        )
        .unwrap();
        let m = transformed_moments(&sample, &spec).unwrap();
        assert!((m.mu_x[0] - 1.066555795755198).abs() < 1e-12);
        assert!((m.mu_y[0] - 1.8008865979770492).abs() < 1e-12);
        assert!((m.sigma_x[(0, 0)] - 0.9950179987770678).abs() < 1e-12);
        assert!((m.sigma_y[(0, 0)] - 4.445518308802207).abs() < 1e-12);
        assert!((m.sigma_xy[(0, 0)] - 2.023203245775702).abs() < 1e-12);

        let (sx, sy, sxy, mx, my) = brute_force_moments(&sample, &spec);
        assert!((m.sigma_x[(0, 0)] - sx[(0, 0)]).abs() < 1e-12);
        assert!((m.sigma_y[(0, 0)] - sy[(0, 0)]).abs() < 1e-12);
        assert!((m.sigma_xy[(0, 0)] - sxy[(0, 0)]).abs() < 1e-12);
        assert!((m.mu_x[0] - mx[0]).abs() < 1e-12);
        assert!((m.mu_y[0] - my[0]).abs() < 1e-12);
    }

    #[test]
    fn identity_reduces_to_unbiased_sample_moments() {
        let sample = two_col_sample();
        let m = transformed_moments(&sample, &MtFunctionSpec::Identity).unwrap();
        let sx = sample_covariance(sample.x());
        let sy = sample_covariance(sample.y());
        let (bx, by, bxy, _, _) = brute_force_moments(&sample, &MtFunctionSpec::Identity);
        assert!((&m.sigma_x - &sx).amax() < 1e-12);
        assert!((&m.sigma_y - &sy).amax() < 1e-12);
        assert!((&m.sigma_x - &bx).amax() < 1e-12);
        assert!((&m.sigma_y - &by).amax() < 1e-12);
        assert!((&m.sigma_xy - &bxy).amax() < 1e-12);
        assert!((m.effective_sample_fraction - 1.0).abs() < 1e-12);
        assert_eq!(m.log_weight_max, 0.0);
    }

    #[test]
    fn concentrated_weights_are_rejected() {
        // A huge exponential tilt puts essentially all mass on the largest x.
        let x = dmatrix![0.0; 1.0; 100.0];
        let y = dmatrix![0.0; 1.0; 2.0];
        let sample = PairedSample::unlabeled(x, y).unwrap();
        let spec = MtFunctionSpec::exponential(
            DVector::from_vec(vec![50.0]),
            DVector::from_vec(vec![0.0]),
        )
        .unwrap();
        assert!(matches!(
            transformed_moments(&sample, &spec),
            Err(Error::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn exponential_translation_leaves_weights_and_moments_unchanged() {
        let sample = two_col_sample();
        let spec = MtFunctionSpec::exponential(
            DVector::from_vec(vec![0.3, -0.2]),
            DVector::from_vec(vec![0.1, 0.25]),
        )
        .unwrap();
        let alpha = DVector::from_vec(vec![5.0, -2.0]);
        let beta = DVector::from_vec(vec![-7.0, 3.0]);
        let shifted = sample.translated(&alpha, &beta).unwrap();

        let phi0 = normalized_weights(&log_weights(&sample, &spec).unwrap());
        let phi1 = normalized_weights(&log_weights(&shifted, &spec).unwrap());
        assert!((&phi0 - &phi1).amax() < 1e-12);

        let m0 = transformed_moments(&sample, &spec).unwrap();
        let m1 = transformed_moments(&shifted, &spec).unwrap();
        assert!((&m0.sigma_x - &m1.sigma_x).amax() < 1e-10);
        assert!((&m0.sigma_y - &m1.sigma_y).amax() < 1e-10);
        assert!((&m0.sigma_xy - &m1.sigma_xy).amax() < 1e-10);
    }

    fn arbitrary_sample_and_spec() -> impl Strategy<Value = (PairedSample, MtFunctionSpec)> {
        let dims = (2usize..6, 1usize..4, 1usize..4);
        dims.prop_flat_map(|(n, p, q)| {
            let data_x = proptest::collection::vec(-3.0f64..3.0, n * p);
            let data_y = proptest::collection::vec(-3.0f64..3.0, n * q);
            let s = proptest::collection::vec(-0.8f64..0.8, p);
            let t = proptest::collection::vec(-0.8f64..0.8, q);
            let widths = (0.5f64..3.0, 0.5f64..3.0);
            let kind = 0usize..3;
            (
                Just((n, p, q)),
                data_x,
                data_y,
                s,
                t,
                widths,
                kind,
            )
                .prop_map(|((n, p, q), dx, dy, s, t, (sig, tau), kind)| {
                    let x = DMatrix::from_vec(n, p, dx);
                    let y = DMatrix::from_vec(n, q, dy);
                    let sample = PairedSample::unlabeled(x, y).unwrap();
                    let spec = match kind {
                        0 => MtFunctionSpec::Identity,
                        1 => MtFunctionSpec::exponential(
                            DVector::from_vec(s),
                            DVector::from_vec(t),
                        )
                        .unwrap(),
                        _ => MtFunctionSpec::gaussian(
                            DVector::from_vec(s),
                            DVector::from_vec(t),
                            sig,
                            tau,
                        )
                        .unwrap(),
                    };
                    (sample, spec)
                })
        })
    }

    proptest! {
        #[test]
        fn weights_always_average_to_one((sample, spec) in arbitrary_sample_and_spec()) {
            let phi = normalized_weights(&log_weights(&sample, &spec).unwrap());
            let mean = phi.sum() / phi.len() as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
            prop_assert!(phi.iter().all(|&w| w >= 0.0));
        }

        #[test]
        fn covariance_blocks_are_psd((sample, spec) in arbitrary_sample_and_spec()) {
            if let Ok(m) = transformed_moments(&sample, &spec) {
                for block in [&m.sigma_x, &m.sigma_y] {
                    let eig = nalgebra::SymmetricEigen::new(block.clone());
                    let min = eig.eigenvalues.min();
                    prop_assert!(min >= -1e-10 * block.trace().max(1.0));
                }
            }
        }
    }
}
