//! Gaussian likelihoods, the closed-form variance MLE under a fixed range,
//! BLUP prediction, and cross-measure predictive errors.
//!
//! The correlation matrix Gamma(alpha) is sigma^2-free, so one Cholesky
//! factorization serves the determinant, the quadratic form, and the
//! prediction weights.

use crate::error::{Error, Result};
use crate::kernel::{
    correlation_vector, gram_matrix, MaternParams, TruncationPolicy,
};
use crate::spectrum::{ManifoldSpec, Point};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Clone, Debug)]
pub struct Dataset {
    sites: Vec<Point>,
    observations: Vec<f64>,
}

impl Dataset {
    /// Validates lengths, membership on `m`, and pairwise-distinct sites.
    pub fn new(m: &ManifoldSpec, sites: Vec<Point>, observations: Vec<f64>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Dataset("need at least one site".into()));
        }
        if sites.len() != observations.len() {
            return Err(Error::Dataset(format!(
                "{} sites but {} observations",
                sites.len(),
                observations.len()
            )));
        }
        for (i, s) in sites.iter().enumerate() {
            if !s.lies_on(m) {
                return Err(Error::Dataset(format!(
                    "site {i} does not lie on {}",
                    m.kind_name()
                )));
            }
        }
        if let Some(z) = observations.iter().find(|z| !z.is_finite()) {
            return Err(Error::Dataset(format!("non-finite observation {z}")));
        }
        for i in 0..sites.len() {
            for j in (i + 1)..sites.len() {
                let d = crate::spectrum::geodesic_distance(m, &sites[i], &sites[j])?;
                if d < crate::kernel::MIN_SITE_SEPARATION {
                    return Err(Error::Dataset(format!(
                        "sites {i} and {j} are {d:.3e} apart, below the minimum separation"
                    )));
                }
            }
        }
        Ok(Dataset {
            sites,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub sigma2_hat: f64,
    pub log_likelihood: f64,
    pub condition_estimate: f64,
    pub jitter_used: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct PredictionResult {
    pub mean: f64,
    pub mse: f64,
}

/// A factored correlation matrix with everything the likelihood needs.
pub(crate) struct CorrelationFactor {
    chol: Cholesky<f64, Dyn>,
    pub jitter_used: f64,
    pub condition_estimate: f64,
    pub log_det: f64,
}

const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

impl CorrelationFactor {
    /// Cholesky with an escalating diagonal jitter ladder, each rung scaled
    /// by trace/n; jitter is always reported, never silent.
    pub fn new(corr: &DMatrix<f64>) -> Result<Self> {
        let n = corr.nrows();
        let scale = corr.trace() / n as f64;
        let mut last_jitter = 0.0;
        for (rung, &j) in std::iter::once(&0.0).chain(JITTER_LADDER.iter()).enumerate() {
            let jitter = j * scale;
            last_jitter = jitter;
            let m = if rung == 0 {
                corr.clone()
            } else {
                let mut m = corr.clone();
                for i in 0..n {
                    m[(i, i)] += jitter;
                }
                m
            };
            if let Some(chol) = Cholesky::new(m) {
                let l = chol.l();
                let mut log_det = 0.0;
                let mut dmin = f64::INFINITY;
                let mut dmax = 0.0f64;
                for i in 0..n {
                    let d = l[(i, i)];
                    log_det += d.ln();
                    dmin = dmin.min(d);
                    dmax = dmax.max(d);
                }
                log_det *= 2.0;
                return Ok(CorrelationFactor {
                    chol,
                    jitter_used: jitter,
                    condition_estimate: (dmax / dmin) * (dmax / dmin),
                    log_det,
                });
            }
        }
        Err(Error::FactorizationFailure {
            last_jitter,
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// The lower-triangular factor L with L L^T = Gamma + jitter I.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// z^T Gamma^{-1} z through the triangular factor, guaranteed >= 0.
    pub fn quad_form(&self, z: &DVector<f64>) -> f64 {
        let y = self
            .chol
            .l()
            .solve_lower_triangular(z)
            .expect("factor has positive diagonal");
        y.norm_squared()
    }
}

fn factored_correlation(
    d: &Dataset,
    m: &ManifoldSpec,
    nu: f64,
    alpha: f64,
    t: &TruncationPolicy,
) -> Result<(CorrelationFactor, DMatrix<f64>)> {
    let p = MaternParams::new(nu, 1.0, alpha)?;
    let gram = gram_matrix(m, &p, t, d.sites())?;
    let f = CorrelationFactor::new(&gram.correlation)?;
    Ok((f, gram.correlation))
}

fn obs_vector(d: &Dataset) -> DVector<f64> {
    DVector::from_column_slice(d.observations())
}

/// Gaussian log likelihood at (nu, alpha, sigma2):
/// -(n/2) log(2 pi sigma^2) - (1/2) log det Gamma - z^T Gamma^{-1} z / (2 sigma^2).
pub fn log_likelihood(
    d: &Dataset,
    m: &ManifoldSpec,
    nu: f64,
    alpha: f64,
    sigma2: f64,
    t: &TruncationPolicy,
) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("must be positive and finite, got {sigma2}"),
        });
    }
    let (f, _) = factored_correlation(d, m, nu, alpha, t)?;
    let z = obs_vector(d);
    let n = d.len() as f64;
    Ok(
        -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - 0.5 * f.log_det
            - f.quad_form(&z) / (2.0 * sigma2),
    )
}

/// Closed-form MLE sigma2_hat = z^T Gamma^{-1} z / n at fixed (nu, alpha),
/// with the likelihood evaluated at the optimum. The all-zero observation
/// vector gives sigma2_hat = 0 and a +inf likelihood supremum.
pub fn mle_sigma2(
    d: &Dataset,
    m: &ManifoldSpec,
    nu: f64,
    alpha: f64,
    t: &TruncationPolicy,
) -> Result<FitResult> {
    let (f, _) = factored_correlation(d, m, nu, alpha, t)?;
    let z = obs_vector(d);
    let n = d.len() as f64;
    let sigma2_hat = f.quad_form(&z) / n;
    let log_likelihood = if sigma2_hat > 0.0 {
        -0.5 * n * (2.0 * std::f64::consts::PI * sigma2_hat).ln() - 0.5 * f.log_det - 0.5 * n
    } else {
        f64::INFINITY
    };
    Ok(FitResult {
        sigma2_hat,
        log_likelihood,
        condition_estimate: f.condition_estimate,
        jitter_used: f.jitter_used,
    })
}

/// BLUP of Z(x0): mean = gamma^T Gamma^{-1} z, mse = sigma2 (1 - gamma^T Gamma^{-1} gamma).
pub fn blup(
    d: &Dataset,
    m: &ManifoldSpec,
    nu: f64,
    alpha: f64,
    sigma2: f64,
    t: &TruncationPolicy,
    x0: &Point,
) -> Result<PredictionResult> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("must be positive and finite, got {sigma2}"),
        });
    }
    let (f, _) = factored_correlation(d, m, nu, alpha, t)?;
    let p = MaternParams::new(nu, 1.0, alpha)?;
    let gamma = correlation_vector(m, &p, t, d.sites(), x0)?;
    let weights = f.solve(&gamma);
    let z = obs_vector(d);
    let mean = weights.dot(&z);
    let mse = (sigma2 * (1.0 - weights.dot(&gamma))).max(0.0);
    Ok(PredictionResult { mean, mse })
}

/// Expected squared error, under the `truth` measure, of the BLUP built
/// from `model`: sigma2_a (1 - 2 w^T gamma_a + w^T Gamma_a w) with
/// w = Gamma_b^{-1} gamma_b. Both parameter sets share the smoothness.
pub fn predictive_mse_cross(
    m: &ManifoldSpec,
    truth: &MaternParams,
    model: &MaternParams,
    sites: &[Point],
    x0: &Point,
    t: &TruncationPolicy,
) -> Result<f64> {
    if truth.nu != model.nu {
        return Err(Error::SmoothnessMismatch {
            nu1: truth.nu,
            nu2: model.nu,
        });
    }
    let pa = MaternParams::new(truth.nu, 1.0, truth.alpha)?;
    let pb = MaternParams::new(model.nu, 1.0, model.alpha)?;
    let gram_a = gram_matrix(m, &pa, t, sites)?;
    let gamma_a = correlation_vector(m, &pa, t, sites, x0)?;
    let gram_b = gram_matrix(m, &pb, t, sites)?;
    let gamma_b = correlation_vector(m, &pb, t, sites, x0)?;
    let fb = CorrelationFactor::new(&gram_b.correlation)?;
    let w = fb.solve(&gamma_b);
    let quad = (&gram_a.correlation * &w).dot(&w);
    Ok((truth.sigma2 * (1.0 - 2.0 * w.dot(&gamma_a) + quad)).max(0.0))
}
