//! Shared oracles for the integration suites.
//!
//! Everything here deliberately avoids the library's solution path: the
//! canonical correlation oracle solves the full block pencil with a
//! symmetric-definite reduction instead of per-block whitening plus SVD, and
//! the textbook moment oracle accumulates raw sums.

use mtcca::PairedSample;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type DirectionPairs = Vec<(DVector<f64>, DVector<f64>)>;

/// Generalized eigensolve of the full `(p+q)` pencil
/// `[[0, Sxy],[Sxy', 0]] z = rho [[Sx, 0],[0, Sy]] z`, reduced with the
/// Cholesky factor of the block-diagonal side. Returns the positive
/// eigenvalues in descending order with their direction pairs normalized to
/// unit variance.
pub fn pencil_cca_oracle(
    sx: &DMatrix<f64>,
    sy: &DMatrix<f64>,
    sxy: &DMatrix<f64>,
) -> (Vec<f64>, DirectionPairs) {
    let p = sx.nrows();
    let q = sy.nrows();
    let d = p + q;
    let mut a_full = DMatrix::zeros(d, d);
    a_full.view_mut((0, p), (p, q)).copy_from(sxy);
    a_full
        .view_mut((p, 0), (q, p))
        .copy_from(&sxy.transpose());
    let mut b_full = DMatrix::zeros(d, d);
    b_full.view_mut((0, 0), (p, p)).copy_from(sx);
    b_full.view_mut((p, p), (q, q)).copy_from(sy);

    let l = b_full.clone().cholesky().expect("oracle pencil B is SPD").l();
    // C = L^-1 A L^-T, kept symmetric by construction.
    let tmp = l
        .solve_lower_triangular(&a_full)
        .expect("triangular solve");
    let c = l
        .solve_lower_triangular(&tmp.transpose())
        .expect("triangular solve")
        .transpose();
    let c = (&c + &c.transpose()) * 0.5;

    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    let r = p.min(q);
    let mut rhos = Vec::with_capacity(r);
    let mut dirs = Vec::with_capacity(r);
    let lt = l.transpose();
    for &idx in order.iter().take(r) {
        let lambda = eig.eigenvalues[idx];
        rhos.push(lambda.max(0.0));
        let w = eig.eigenvectors.column(idx).into_owned();
        let z = lt
            .solve_upper_triangular(&w)
            .expect("triangular solve");
        let mut a = z.rows(0, p).into_owned();
        let mut b = z.rows(p, q).into_owned();
        let va = (&a.transpose() * sx * &a)[(0, 0)];
        let vb = (&b.transpose() * sy * &b)[(0, 0)];
        if va > 0.0 {
            a /= va.sqrt();
        }
        if vb > 0.0 {
            b /= vb.sqrt();
        }
        dirs.push((a, b));
    }
    (rhos, dirs)
}

/// Raw-moment textbook estimators: `R/(n-1) - n/(n-1) mean mean'` with plain
/// summation, structurally different from the library's centered two-pass.
pub fn textbook_moments(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mx = x.row_sum().transpose() / n;
    let my = y.row_sum().transpose() / n;
    let sx = x.transpose() * x / (n - 1.0) - &mx * mx.transpose() * (n / (n - 1.0));
    let sy = y.transpose() * y / (n - 1.0) - &my * my.transpose() * (n / (n - 1.0));
    let sxy = x.transpose() * y / (n - 1.0) - &mx * my.transpose() * (n / (n - 1.0));
    (sx, sy, sxy)
}

/// Consistent random covariance blocks from a dense square root.
pub fn random_joint_blocks(
    rng: &mut ChaCha8Rng,
    p: usize,
    q: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let d = p + q;
    let g = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let c = &g * g.transpose() + DMatrix::identity(d, d) * 0.05;
    (
        c.view((0, 0), (p, p)).into_owned(),
        c.view((p, p), (q, q)).into_owned(),
        c.view((0, p), (p, q)).into_owned(),
    )
}

pub fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
}

pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize) -> PairedSample {
    PairedSample::unlabeled(
        standard_normal_matrix(rng, n, p),
        standard_normal_matrix(rng, n, q),
    )
    .unwrap()
}

/// Draws `n` rows from `N(0, cov)` via the Cholesky factor.
pub fn correlated_normal_rows(
    rng: &mut ChaCha8Rng,
    n: usize,
    cov: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = cov.nrows();
    let l = cov.clone().cholesky().expect("covariance is SPD").l();
    let z = standard_normal_matrix(rng, n, d);
    z * l.transpose()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One pass/fail line per criterion check; failures accumulate into the
/// returned list so a criterion reports every violated bound at once.
pub struct Checks {
    criterion: &'static str,
    failures: Vec<String>,
}

impl Checks {
    pub fn new(criterion: &'static str) -> Self {
        Self {
            criterion,
            failures: Vec::new(),
        }
    }

    pub fn check(&mut self, label: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{label}]: {verdict} ({detail})", self.criterion);
        if !pass {
            self.failures.push(format!("{label}: {detail}"));
        }
    }

    pub fn finish(self) {
        assert!(
            self.failures.is_empty(),
            "criterion {} failed: {}",
            self.criterion,
            self.failures.join("; ")
        );
    }
}
