//! Counter-based pseudo-random numbers for the Monte Carlo harness.
//!
//! Every draw is a pure function of (seed, stream, counter), so replicate r
//! of an experiment produces identical bits no matter how work is scheduled
//! across threads. Normals come from the inverse distribution function, one
//! uniform per normal, which keeps the draw count per replicate fixed.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; bijective on u64.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed counter generator. `stream` separates independent substreams
/// (replicate indices, site draws) under one experiment seed.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        // Both maps are bijections of stream for fixed seed, so distinct
        // streams never collide on the key.
        let key = mix64(mix64(seed ^ GOLDEN).wrapping_add(stream.wrapping_mul(GOLDEN)));
        CounterRng { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key ^ self.counter.wrapping_mul(GOLDEN));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform on the open interval (0, 1); endpoints are unreachable.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        // 53 high bits, centered on half-ulp offsets.
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline]
    pub fn next_standard_normal(&mut self) -> f64 {
        inverse_standard_normal(self.next_uniform())
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_standard_normal();
        }
    }
}

// Rational minimax coefficients for the central region |p - 1/2| <= 0.425.
#[rustfmt::skip]
const A: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
#[rustfmt::skip]
const B: [f64; 7] = [
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
// Intermediate region sqrt(-ln(min(p,1-p))) <= 5.
#[rustfmt::skip]
const C: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
#[rustfmt::skip]
const D: [f64; 7] = [
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
// Far tail, sqrt(-ln(min(p,1-p))) > 5.
#[rustfmt::skip]
const E: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
#[rustfmt::skip]
const F: [f64; 7] = [
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

#[inline]
fn rational(num: &[f64; 8], den: &[f64; 7], r: f64) -> f64 {
    let mut n = num[7];
    for c in num[..7].iter().rev() {
        n = n * r + c;
    }
    let mut d = den[6];
    for c in den[..6].iter().rev() {
        d = d * r + c;
    }
    n / (d * r + 1.0)
}

/// Inverse of the standard normal distribution function (Wichura's PPND16
/// rational approximations); relative error below 1e-15 on (0, 1).
pub fn inverse_standard_normal(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * rational(&A, &B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        rational(&C, &D, r - 1.6)
    } else {
        rational(&E, &F, r - 5.0)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}
