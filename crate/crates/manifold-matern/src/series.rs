//! Certified analytic tails for spectral sums.
//!
//! Normalizing constants need sums of the form
//!     sum_{n >= n0} p(m) (m^2 + b)^{-s},   m = n + offset,
//! with p a low-degree polynomial. Direct truncation converges far too
//! slowly near small smoothness, so the tail is expanded binomially in
//! b/m^2 and reduced to Hurwitz-zeta tails, each evaluated by
//! Euler-Maclaurin with an explicit remainder. Every approximation step
//! contributes to the returned bound, so callers get value + rigorous error.

/// A partial analytic result: `bound` dominates |value - exact|.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TailSum {
    pub value: f64,
    pub bound: f64,
}

/// sum_{j >= 0} (q + j)^{-sigma}, for sigma > 1 and q >= 8.
///
/// Euler-Maclaurin through the q^{-sigma-5} term; the remainder of the
/// alternating Bernoulli series is dominated by the first omitted term.
pub(crate) fn hurwitz_tail(sigma: f64, q: f64) -> TailSum {
    debug_assert!(sigma > 1.0, "needs a convergent exponent, got {sigma}");
    debug_assert!(q >= 8.0, "tail start {q} too small for the E-M remainder");
    let inv = 1.0 / q;
    let qs = q.powf(-sigma);
    let mut value = q * qs / (sigma - 1.0) + 0.5 * qs;
    let mut c = sigma * qs * inv;
    value += c / 12.0;
    c *= (sigma + 1.0) * (sigma + 2.0) * inv * inv;
    value -= c / 720.0;
    c *= (sigma + 3.0) * (sigma + 4.0) * inv * inv;
    value += c / 30_240.0;
    c *= (sigma + 5.0) * (sigma + 6.0) * inv * inv;
    TailSum {
        value,
        bound: c / 1_209_600.0 + 1e-16 * value.abs(),
    }
}

/// Number of binomial-expansion terms; enough for ~1e-13 relative accuracy
/// at |b|/q0^2 <= 1/64.
const EXPANSION_TERMS: usize = 14;

/// sum_{n >= n0} p(m) (m^2 + b)^{-s} with m = n + offset and
/// p(m) = sum_j coeffs[j] m^j.
///
///// Preconditions: s > 1/2 + deg/2 so every reduced exponent exceeds 1, and
/// (n0 + offset)^2 >= 64 |b| so the binomial expansion contracts.
pub(crate) fn poly_spectral_tail(
    n0: u64,
    offset: f64,
    b: f64,
    s: f64,
    coeffs: &[f64],
) -> TailSum {
    let q0 = n0 as f64 + offset;
    debug_assert!(q0 * q0 >= 64.0 * b.abs(), "tail start {q0} too small for b={b}");
    let mut value = 0.0;
    let mut bound = 0.0;
    // Signed coefficients can cancel; rounding scales with the absolute sum.
    let mut abs_acc = 0.0;
    for (j, &pj) in coeffs.iter().enumerate() {
        if pj == 0.0 {
            continue;
        }
        // (m^2+b)^{-s} = sum_k t_k m^{-2s-2k}, t_k = (-1)^k binom(s+k-1, k) b^k.
        let mut t_k = 1.0;
        for k in 0..EXPANSION_TERMS {
            let h = hurwitz_tail(2.0 * s + 2.0 * k as f64 - j as f64, q0);
            value += pj * t_k * h.value;
            abs_acc += (pj * t_k * h.value).abs();
            bound += pj.abs() * t_k.abs() * h.bound;
            t_k *= -(s + k as f64) * b / (k as f64 + 1.0);
        }
        // Geometric envelope for the dropped expansion terms: term ratios are
        // at most r below, and r < 1 by the precondition.
        let k = EXPANSION_TERMS as f64;
        let r = (b.abs() / (q0 * q0)) * (s + k) / (k + 1.0);
        let h = hurwitz_tail(2.0 * s + 2.0 * k - j as f64, q0);
        let rem = if r < 0.9 {
            t_k.abs() * (h.value + h.bound) / (1.0 - r)
        } else {
            f64::INFINITY
        };
        bound += pj.abs() * rem;
    }
    bound += 2e-16 * abs_acc;
    TailSum { value, bound }
}
