//! Equivalence vs orthogonality of two Gaussian measures on a manifold.
//!
//! Built-in spectra get exact parameter rules: below dimension four the
//! measures are equivalent exactly when the microergodic quantity
//! sigma^2 / C_{nu,alpha} matches; from dimension four both parameters are
//! identifiable and must match. Custom spectra fall back to a numeric
//! diagnostic on the relative-density series sum_n t(n) ((rho2-rho1)/rho1)^2,
//! whose convergence (log-log slope below -1) decides equivalence.

use crate::error::{Error, Result};
use crate::kernel::{
    norm_constant, MaternDensity, MaternParams, SpectralDensity, SqExpDensity, SqExpParams,
    TruncationPolicy,
};
use crate::spectrum::ManifoldSpec;

/// Default relative tolerance for the analytic parameter rules; dominates
/// the certified truncation error of the constants being compared.
pub const DEFAULT_EQUIV_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Equivalent,
    Orthogonal,
    Inconclusive,
}

/// Numeric evidence from the series diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct TailDiagnostic {
    pub partial_sum: f64,
    /// Log-log slope of the series summand; below -1 the series converges.
    /// -inf flags exactly equal densities.
    pub tail_exponent: f64,
}

#[derive(Clone, Debug)]
pub struct EquivalenceVerdict {
    pub verdict: Verdict,
    /// Identifier of the rule that produced the verdict.
    pub rule: &'static str,
    pub diagnostic: Option<TailDiagnostic>,
}

/// The two model families with exact rules. Mixed-family comparisons are
/// unrepresentable by construction.
#[derive(Clone, Copy, Debug)]
pub enum Family {
    Matern(MaternParams, MaternParams),
    SqExp(SqExpParams, SqExpParams),
}

/// The microergodic quantity sigma^2 / C_{nu,alpha}.
pub fn microergodic(m: &ManifoldSpec, p: &MaternParams, t: &TruncationPolicy) -> Result<f64> {
    Ok(p.sigma2 / norm_constant(m, p, t)?.value)
}

/// Partial sum S_N = sum_{n<=N} t(n) ((rho2(n)-rho1(n))/rho1(n))^2 of the
/// series whose finiteness decides equivalence.
pub fn series_test_partial(
    m: &ManifoldSpec,
    rho1: &dyn SpectralDensity,
    rho2: &dyn SpectralDensity,
    n_max: u64,
) -> Result<f64> {
    let mut acc = 0.0;
    for n in 0..=n_max {
        acc += summand(m, rho1, rho2, n)?;
    }
    Ok(acc)
}

fn summand(
    m: &ManifoldSpec,
    rho1: &dyn SpectralDensity,
    rho2: &dyn SpectralDensity,
    n: u64,
) -> Result<f64> {
    let r1 = rho1.rho(n)?;
    if !(r1 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "rho1",
            reason: format!("reference density must be positive, got {r1} at level {n}"),
        });
    }
    let rel = (rho2.rho(n)? - r1) / r1;
    Ok(m.multiplicity(n)? * rel * rel)
}

/// Least-squares slope of log(summand) against log(n) over [n_lo, n_hi].
/// Slopes below -1 indicate a convergent series. On a finite spectrum the
/// window is clamped to the table.
pub fn tail_exponent(
    m: &ManifoldSpec,
    rho1: &dyn SpectralDensity,
    rho2: &dyn SpectralDensity,
    n_lo: u64,
    n_hi: u64,
) -> Result<f64> {
    if n_lo < 10 || n_lo >= n_hi {
        return Err(Error::InvalidParameter {
            name: "n_lo",
            reason: format!("need 10 <= n_lo < n_hi, got [{n_lo}, {n_hi}]"),
        });
    }
    let n_hi = match m.max_level() {
        Some(max) => n_hi.min(max),
        None => n_hi,
    };
    if n_hi <= n_lo {
        return Err(Error::InvalidParameter {
            name: "n_hi",
            reason: "fit window collapsed on the finite spectrum".into(),
        });
    }
    let mut pts = Vec::with_capacity((n_hi - n_lo + 1) as usize);
    for n in n_lo..=n_hi {
        let s = summand(m, rho1, rho2, n)?;
        if s > 0.0 {
            pts.push(((n as f64).ln(), s.ln()));
        }
    }
    if pts.is_empty() {
        return Err(Error::ExactlyEqualDensities);
    }
    if pts.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "densities",
            reason: "tail fit degenerate: only one nonzero summand in the window".into(),
        });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Decide equivalence of the two measures in `family` on `m`.
pub fn equivalence_verdict(
    m: &ManifoldSpec,
    family: &Family,
    tol: f64,
) -> Result<EquivalenceVerdict> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be a nonnegative real, got {tol}"),
        });
    }
    let policy = TruncationPolicy::default();
    match family {
        Family::Matern(p1, p2) => {
            if p1.nu != p2.nu {
                return Err(Error::SmoothnessMismatch {
                    nu1: p1.nu,
                    nu2: p2.nu,
                });
            }
            if matches!(m, ManifoldSpec::Custom(_)) {
                let d1 = MaternDensity::new(m, p1, &policy)?;
                let d2 = MaternDensity::new(m, p2, &policy)?;
                return diagnostic_verdict(m, &d1, &d2);
            }
            if m.dimension() <= 3 {
                let t1 = microergodic(m, p1, &policy)?;
                let t2 = microergodic(m, p2, &policy)?;
                let verdict = if close_rel(t1, t2, tol) {
                    Verdict::Equivalent
                } else {
                    Verdict::Orthogonal
                };
                Ok(EquivalenceVerdict {
                    verdict,
                    rule: "matern-d≤3",
                    diagnostic: None,
                })
            } else {
                let same = close_rel(p1.sigma2, p2.sigma2, tol) && close_rel(p1.alpha, p2.alpha, tol);
                Ok(EquivalenceVerdict {
                    verdict: if same {
                        Verdict::Equivalent
                    } else {
                        Verdict::Orthogonal
                    },
                    rule: "matern-d≥4",
                    diagnostic: None,
                })
            }
        }
        Family::SqExp(q1, q2) => {
            if matches!(m, ManifoldSpec::Custom(_)) {
                let d1 = SqExpDensity::new(m, q1, &policy)?;
                let d2 = SqExpDensity::new(m, q2, &policy)?;
                return diagnostic_verdict(m, &d1, &d2);
            }
            let same = close_rel(q1.sigma2, q2.sigma2, tol) && close_rel(q1.alpha, q2.alpha, tol);
            Ok(EquivalenceVerdict {
                verdict: if same {
                    Verdict::Equivalent
                } else {
                    Verdict::Orthogonal
                },
                rule: "sqexp",
                diagnostic: None,
            })
        }
    }
}

/// Dead-band classification of the diagnostic slope: the theoretical
/// boundary sits at -1, and fits inside (-1.2, -0.8) are not trusted.
fn diagnostic_verdict(
    m: &ManifoldSpec,
    d1: &dyn SpectralDensity,
    d2: &dyn SpectralDensity,
) -> Result<EquivalenceVerdict> {
    let hi = match m.max_level() {
        Some(max) => max.min(2000),
        None => 2000,
    };
    if hi < 22 {
        return Ok(EquivalenceVerdict {
            verdict: Verdict::Inconclusive,
            rule: "series-test",
            diagnostic: None,
        });
    }
    let lo = 50u64.min(hi - 10).max(10);
    match tail_exponent(m, d1, d2, lo, hi) {
        Ok(slope) => {
            let partial = series_test_partial(m, d1, d2, hi)?;
            let verdict = if slope < -1.2 {
                Verdict::Equivalent
            } else if slope > -0.8 {
                Verdict::Orthogonal
            } else {
                Verdict::Inconclusive
            };
            Ok(EquivalenceVerdict {
                verdict,
                rule: "series-test",
                diagnostic: Some(TailDiagnostic {
                    partial_sum: partial,
                    tail_exponent: slope,
                }),
            })
        }
        Err(Error::ExactlyEqualDensities) => Ok(EquivalenceVerdict {
            verdict: Verdict::Equivalent,
            rule: "series-test",
            diagnostic: Some(TailDiagnostic {
                partial_sum: 0.0,
                tail_exponent: f64::NEG_INFINITY,
            }),
        }),
        Err(e) => Err(e),
    }
}
