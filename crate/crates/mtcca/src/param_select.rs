//! Data-driven selection of the MT-function parameters.
//!
//! Directly maximizing the first canonical coefficient over `(s, t)` is
//! impractical, so we maximize `psi`, an element-by-element lower bound on
//! it, with projected gradient ascent over a family-specific search region:
//! a quadratic approximate-MGF region for the exponential family and a
//! 5th-95th percentile box for the Gaussian family. The ascent is
//! derivative-free (central differences), multi-start, and deterministic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Side};
use crate::moments::{
    sample_mean, sample_stds, transformed_moments, MtFunctionSpec, PairedSample,
    TransformedMoments,
};

/// MGF bound for the exponential-family region.
const REGION_BOUND_D: f64 = std::f64::consts::SQRT_2;
/// Bisection steps used when projecting onto the quadratic region boundary.
const PROJECTION_BISECTIONS: usize = 20;
/// Maximum number of step halvings in the backtracking line search.
const LINE_SEARCH_HALVINGS: usize = 30;

/// Transform family to select parameters for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchKind {
    /// Exponential MT-functions over the quadratic approximate-MGF region.
    ExponentialQuadratic,
    /// Gaussian MT-functions over the empirical percentile box, with widths
    /// fixed by [`default_gaussian_widths`].
    GaussianPercentileBox,
}

/// Feasible set for the `(s, t)` search, in original data coordinates.
#[derive(Debug, Clone)]
pub enum SearchRegion {
    ExponentialQuadratic {
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        r_x: DMatrix<f64>,
        r_y: DMatrix<f64>,
        r_xy: DMatrix<f64>,
        bound_d: f64,
        /// Explicit cap on `||(s,t)||_2`; the quadratic set alone is
        /// unbounded when the second-moment matrix is indefinite.
        norm_cap: f64,
    },
    GaussianPercentileBox {
        lo_s: DVector<f64>,
        hi_s: DVector<f64>,
        lo_t: DVector<f64>,
        hi_t: DVector<f64>,
    },
}

impl SearchRegion {
    /// Quadratic empirical approximation of the joint MGF at `(s, t)`.
    /// Only defined for the exponential-family region.
    pub fn j_hat(&self, s: &DVector<f64>, t: &DVector<f64>) -> Option<f64> {
        match self {
            SearchRegion::ExponentialQuadratic {
                mu_x,
                mu_y,
                r_x,
                r_y,
                r_xy,
                ..
            } => Some(
                1.0 + s.dot(mu_x)
                    + t.dot(mu_y)
                    + 0.5 * (s.transpose() * r_x * s)[(0, 0)]
                    + (s.transpose() * r_xy * t)[(0, 0)]
                    + 0.5 * (t.transpose() * r_y * t)[(0, 0)],
            ),
            SearchRegion::GaussianPercentileBox { .. } => None,
        }
    }

    pub fn contains(&self, s: &DVector<f64>, t: &DVector<f64>) -> bool {
        match self {
            SearchRegion::ExponentialQuadratic {
                bound_d, norm_cap, ..
            } => {
                let norm2 = s.norm_squared() + t.norm_squared();
                norm2.sqrt() <= *norm_cap && self.j_hat(s, t).unwrap() <= *bound_d
            }
            SearchRegion::GaussianPercentileBox {
                lo_s,
                hi_s,
                lo_t,
                hi_t,
            } => {
                s.iter()
                    .enumerate()
                    .all(|(i, &v)| lo_s[i] <= v && v <= hi_s[i])
                    && t.iter()
                        .enumerate()
                        .all(|(i, &v)| lo_t[i] <= v && v <= hi_t[i])
            }
        }
    }

    /// Scale used to size the initial line-search step.
    fn diameter(&self) -> f64 {
        match self {
            SearchRegion::ExponentialQuadratic { norm_cap, .. } => 2.0 * norm_cap,
            SearchRegion::GaussianPercentileBox {
                lo_s,
                hi_s,
                lo_t,
                hi_t,
            } => {
                let mut d2 = 0.0;
                for i in 0..lo_s.len() {
                    d2 += (hi_s[i] - lo_s[i]).powi(2);
                }
                for i in 0..lo_t.len() {
                    d2 += (hi_t[i] - lo_t[i]).powi(2);
                }
                d2.sqrt()
            }
        }
    }

    /// Maps a proposal back into the region. The box clips componentwise;
    /// the quadratic region bisects along the segment from the (feasible)
    /// current point, which stays feasible even if the set is non-convex.
    fn project(&self, from: &Point, proposal: &Point) -> Point {
        match self {
            SearchRegion::GaussianPercentileBox {
                lo_s,
                hi_s,
                lo_t,
                hi_t,
            } => {
                let s = DVector::from_fn(lo_s.len(), |i, _| {
                    proposal.s[i].clamp(lo_s[i], hi_s[i])
                });
                let t = DVector::from_fn(lo_t.len(), |i, _| {
                    proposal.t[i].clamp(lo_t[i], hi_t[i])
                });
                Point { s, t }
            }
            SearchRegion::ExponentialQuadratic { .. } => {
                if self.contains(&proposal.s, &proposal.t) {
                    return proposal.clone();
                }
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                for _ in 0..PROJECTION_BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    let cand = from.lerp(proposal, mid);
                    if self.contains(&cand.s, &cand.t) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                from.lerp(proposal, lo)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Point {
    s: DVector<f64>,
    t: DVector<f64>,
}

impl Point {
    fn lerp(&self, other: &Point, frac: f64) -> Point {
        Point {
            s: &self.s + (&other.s - &self.s) * frac,
            t: &self.t + (&other.t - &self.t) * frac,
        }
    }

    fn distance(&self, other: &Point) -> f64 {
        ((&self.s - &other.s).norm_squared() + (&self.t - &other.t).norm_squared()).sqrt()
    }
}

/// Ascent configuration. Defaults follow the crate-wide choices: 8 starts,
/// 200 iterations, central-difference step `1e-4 * (1 + |coord|)`, initial
/// line-search step of a tenth of the region diameter.
#[derive(Debug, Clone)]
pub struct SelectConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    pub grad_step_h: f64,
    /// Absolute initial line-search step; `None` uses `0.1 * diameter`.
    pub init_step: Option<f64>,
    /// Convergence threshold on the accepted step norm.
    pub tol: f64,
    /// Plateau stop: converge once an accepted step improves the objective
    /// by less than this. Cuts the long geometric tail of ridge-following
    /// without measurably moving the optimum.
    pub psi_tol: f64,
    /// Feasibility floor on the effective sample fraction. Transforms that
    /// concentrate the weights onto fewer than this fraction of the sample
    /// inflate the empirical objective through small-sample bias, so such
    /// points are rejected during the search.
    pub min_effective_fraction: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iters: 200,
            grad_step_h: 1e-4,
            init_step: None,
            tol: 1e-6,
            psi_tol: 1e-8,
            min_effective_fraction: 0.1,
        }
    }
}

impl SelectConfig {
    /// Reduced-effort profile for inner loops that re-select parameters many
    /// times (e.g. per permutation): fewer starts and iterations.
    pub fn fast() -> Self {
        Self {
            n_starts: 3,
            max_iters: 40,
            psi_tol: 1e-5,
            ..Self::default()
        }
    }
}

/// One accepted ascent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub iteration: usize,
    pub psi: f64,
    pub step_norm: f64,
}

/// Outcome of the multi-start ascent.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub s_star: DVector<f64>,
    pub t_star: DVector<f64>,
    pub psi_star: f64,
    /// Full spec at the optimum (records the Gaussian widths when relevant).
    pub spec_star: MtFunctionSpec,
    /// Accepted steps per start, index-aligned with `converged`.
    pub trace: Vec<Vec<TraceStep>>,
    pub n_starts: usize,
    pub converged: Vec<bool>,
}

/// Element-by-element lower bound on the first canonical coefficient:
/// the root mean square of `sigma_xy[i,j]^2 / (sigma_x[i,i] sigma_y[j,j])`.
pub fn psi_objective(moments: &TransformedMoments) -> Result<f64> {
    let p = moments.sigma_x.nrows();
    let q = moments.sigma_y.nrows();
    for i in 0..p {
        if moments.sigma_x[(i, i)] <= 0.0 {
            return Err(Error::ZeroVariance {
                side: Side::X,
                index: i,
            });
        }
    }
    for j in 0..q {
        if moments.sigma_y[(j, j)] <= 0.0 {
            return Err(Error::ZeroVariance {
                side: Side::Y,
                index: j,
            });
        }
    }
    let mut sum = 0.0;
    for i in 0..p {
        for j in 0..q {
            let c = moments.sigma_xy[(i, j)];
            sum += c * c / (moments.sigma_x[(i, i)] * moments.sigma_y[(j, j)]);
        }
    }
    Ok((sum / (p * q) as f64).sqrt())
}

/// Average per-coordinate sample standard deviations, used as the Gaussian
/// width parameters.
pub fn default_gaussian_widths(sample: &PairedSample) -> Result<(f64, f64)> {
    let sx = sample_stds(sample.x());
    let sy = sample_stds(sample.y());
    // NaN (a sqrt of a tiny negative variance) counts as degenerate too.
    for (i, &v) in sx.iter().enumerate() {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::ZeroVariance {
                side: Side::X,
                index: i,
            });
        }
    }
    for (i, &v) in sy.iter().enumerate() {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::ZeroVariance {
                side: Side::Y,
                index: i,
            });
        }
    }
    Ok((sx.sum() / sx.len() as f64, sy.sum() / sy.len() as f64))
}

/// Empirical percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Builds the feasible region for the given family from the sample.
pub fn build_search_region(sample: &PairedSample, kind: SearchKind) -> SearchRegion {
    match kind {
        SearchKind::ExponentialQuadratic => {
            let n = sample.n() as f64;
            let mu_x = sample_mean(sample.x());
            let mu_y = sample_mean(sample.y());
            let r_x = sample.x().transpose() * sample.x() / n;
            let r_y = sample.y().transpose() * sample.y() / n;
            let r_xy = sample.x().transpose() * sample.y() / n;
            let max_abs = sample
                .x()
                .iter()
                .chain(sample.y().iter())
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            let norm_cap = if max_abs > 0.0 { 10.0 / max_abs } else { 10.0 };
            SearchRegion::ExponentialQuadratic {
                mu_x,
                mu_y,
                r_x,
                r_y,
                r_xy,
                bound_d: REGION_BOUND_D,
                norm_cap,
            }
        }
        SearchKind::GaussianPercentileBox => {
            let column_pcts = |data: &DMatrix<f64>, pct: f64| {
                DVector::from_fn(data.ncols(), |j, _| {
                    percentile(data.column(j).as_slice(), pct)
                })
            };
            SearchRegion::GaussianPercentileBox {
                lo_s: column_pcts(sample.x(), 5.0),
                hi_s: column_pcts(sample.x(), 95.0),
                lo_t: column_pcts(sample.y(), 5.0),
                hi_t: column_pcts(sample.y(), 95.0),
            }
        }
    }
}

/// Selects `(s*, t*)` by multi-start projected gradient ascent on `psi`.
///
/// Start 0 is the origin when feasible; for the Gaussian box, an infeasible
/// origin is replaced by the clipped sample mean, which is equivalent to
/// centering the data first. Remaining starts come from a deterministic
/// low-discrepancy sequence inside the region, so the whole search is
/// reproducible from the config alone. Evaluations that degenerate the
/// transform weights score as negative infinity and are stepped around.
pub fn select_parameters(
    sample: &PairedSample,
    kind: SearchKind,
    config: &SelectConfig,
) -> Result<SelectionResult> {
    let region = build_search_region(sample, kind);
    let widths = match kind {
        SearchKind::GaussianPercentileBox => Some(default_gaussian_widths(sample)?),
        SearchKind::ExponentialQuadratic => None,
    };
    let make_spec = |s: &DVector<f64>, t: &DVector<f64>| -> MtFunctionSpec {
        match widths {
            Some((sigma, tau)) => MtFunctionSpec::Gaussian {
                s: s.clone(),
                t: t.clone(),
                sigma,
                tau,
            },
            None => MtFunctionSpec::Exponential {
                s: s.clone(),
                t: t.clone(),
            },
        }
    };

    let eval = |pt: &Point| -> std::result::Result<f64, Error> {
        let spec = make_spec(&pt.s, &pt.t);
        let moments = transformed_moments(sample, &spec)?;
        if moments.effective_sample_fraction < config.min_effective_fraction {
            return Err(Error::DegenerateWeights {
                max_share: 1.0 - moments.effective_sample_fraction,
            });
        }
        psi_objective(&moments)
    };
    // Degenerate weights (or the zero-variance diagonals they induce) reject
    // the point without aborting the search.
    let eval_soft = |pt: &Point| -> f64 {
        match eval(pt) {
            Ok(v) => v,
            Err(Error::DegenerateWeights { .. }) | Err(Error::ZeroVariance { .. }) => {
                f64::NEG_INFINITY
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let starts = generate_starts(sample, &region, config.n_starts);
    let init_step = config.init_step.unwrap_or(0.1 * region.diameter());

    let mut traces = Vec::with_capacity(starts.len());
    let mut converged_flags = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, f64, Point)> = None;

    for (start_idx, start) in starts.iter().enumerate() {
        let mut x = start.clone();
        let mut fx = eval_soft(&x);
        let mut trace = vec![TraceStep {
            iteration: 0,
            psi: fx,
            step_norm: 0.0,
        }];
        let mut converged = false;

        // Warm-started backtracking: begin each line search at twice the
        // previously accepted step (capped at the initial step) so the
        // search does not re-halve from the region scale on every iteration.
        let mut warm_step = init_step;
        for iter in 1..=config.max_iters {
            let grad = numerical_gradient(&eval_soft, &x, config.grad_step_h);
            let gnorm =
                (grad.0.norm_squared() + grad.1.norm_squared()).sqrt();
            if gnorm == 0.0 || !gnorm.is_finite() {
                converged = true;
                break;
            }
            let dir = Point {
                s: &grad.0 / gnorm,
                t: &grad.1 / gnorm,
            };
            let try_step = |step: f64| -> (Point, f64) {
                let proposal = Point {
                    s: &x.s + &dir.s * step,
                    t: &x.t + &dir.t * step,
                };
                let cand = region.project(&x, &proposal);
                let fc = eval_soft(&cand);
                (cand, fc)
            };

            let mut step = warm_step;
            let mut accepted: Option<(Point, f64)> = None;
            for _ in 0..LINE_SEARCH_HALVINGS {
                let (cand, fc) = try_step(step);
                if fc > fx {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            // Expand while the objective keeps improving, up to the cap.
            if let Some(mut best_f) = accepted.as_ref().map(|(_, f)| *f) {
                while step * 2.0 <= init_step {
                    let (cand, fc) = try_step(step * 2.0);
                    if fc > best_f {
                        step *= 2.0;
                        best_f = fc;
                        accepted = Some((cand, fc));
                    } else {
                        break;
                    }
                }
            }

            match accepted {
                Some((cand, fc)) => {
                    debug_assert!(region.contains(&cand.s, &cand.t));
                    let step_norm = cand.distance(&x);
                    let gain = fc - fx;
                    x = cand;
                    fx = fc;
                    warm_step = (step * 2.0).min(init_step);
                    trace.push(TraceStep {
                        iteration: iter,
                        psi: fx,
                        step_norm,
                    });
                    if step_norm < config.tol || gain < config.psi_tol {
                        converged = true;
                        break;
                    }
                }
                None => {
                    converged = true;
                    break;
                }
            }
        }

        match &best {
            Some((_, best_f, _)) if *best_f >= fx => {}
            _ => best = Some((start_idx, fx, x.clone())),
        }
        traces.push(trace);
        converged_flags.push(converged);
    }

    let (_, psi_star, point) = best.expect("at least one start");
    if !psi_star.is_finite() {
        // Every evaluated point degenerated; surface the underlying error
        // from the first start.
        return Err(eval(&starts[0]).expect_err("non-finite best psi"));
    }
    Ok(SelectionResult {
        spec_star: make_spec(&point.s, &point.t),
        s_star: point.s,
        t_star: point.t,
        psi_star,
        trace: traces,
        n_starts: config.n_starts,
        converged: converged_flags,
    })
}

/// Central-difference gradient with per-coordinate step `h * (1 + |x_i|)`.
/// Coordinates whose probes degenerate contribute a zero partial.
fn numerical_gradient<F: Fn(&Point) -> f64>(
    f: &F,
    x: &Point,
    h: f64,
) -> (DVector<f64>, DVector<f64>) {
    let p = x.s.len();
    let q = x.t.len();
    let mut gs = DVector::zeros(p);
    let mut gt = DVector::zeros(q);
    let mut probe = x.clone();
    for i in 0..p {
        let hi = h * (1.0 + x.s[i].abs());
        probe.s[i] = x.s[i] + hi;
        let fp = f(&probe);
        probe.s[i] = x.s[i] - hi;
        let fm = f(&probe);
        probe.s[i] = x.s[i];
        gs[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * hi)
        } else {
            0.0
        };
    }
    for i in 0..q {
        let hi = h * (1.0 + x.t[i].abs());
        probe.t[i] = x.t[i] + hi;
        let fp = f(&probe);
        probe.t[i] = x.t[i] - hi;
        let fm = f(&probe);
        probe.t[i] = x.t[i];
        gt[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * hi)
        } else {
            0.0
        };
    }
    (gs, gt)
}

/// Start 0 is the origin (or the clipped sample-mean anchor when the origin
/// is outside the Gaussian box); the rest fill the region with a Kronecker
/// low-discrepancy sequence, pulled toward the anchor when a point lands
/// outside the quadratic region.
fn generate_starts(sample: &PairedSample, region: &SearchRegion, n_starts: usize) -> Vec<Point> {
    let p = sample.p();
    let q = sample.q();
    let d = p + q;
    let origin = Point {
        s: DVector::zeros(p),
        t: DVector::zeros(q),
    };
    let anchor = if region.contains(&origin.s, &origin.t) {
        origin
    } else {
        let mean = Point {
            s: sample_mean(sample.x()),
            t: sample_mean(sample.y()),
        };
        let clipped = region.project(&mean, &mean);
        if region.contains(&clipped.s, &clipped.t) {
            clipped
        } else {
            mean
        }
    };

    let mut starts = vec![anchor.clone()];
    if n_starts <= 1 {
        return starts;
    }

    let alphas: Vec<f64> = first_primes(d)
        .into_iter()
        .map(|pr| (pr as f64).sqrt().fract())
        .collect();
    let unit_to_point = |u: &[f64]| -> Point {
        match region {
            SearchRegion::GaussianPercentileBox {
                lo_s,
                hi_s,
                lo_t,
                hi_t,
            } => Point {
                s: DVector::from_fn(p, |i, _| lo_s[i] + u[i] * (hi_s[i] - lo_s[i])),
                t: DVector::from_fn(q, |i, _| lo_t[i] + u[p + i] * (hi_t[i] - lo_t[i])),
            },
            SearchRegion::ExponentialQuadratic { norm_cap, .. } => {
                let half = norm_cap / (d as f64).sqrt();
                Point {
                    s: DVector::from_fn(p, |i, _| (2.0 * u[i] - 1.0) * half),
                    t: DVector::from_fn(q, |i, _| (2.0 * u[p + i] - 1.0) * half),
                }
            }
        }
    };

    for k in 1..n_starts {
        let u: Vec<f64> = (0..d)
            .map(|i| (0.5 + k as f64 * alphas[i]).fract())
            .collect();
        let raw = unit_to_point(&u);
        let pt = if region.contains(&raw.s, &raw.t) {
            raw
        } else {
            region.project(&starts[0], &raw)
        };
        starts.push(pt);
    }
    starts
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}
