//! Legendre polynomials via the three-term recurrence, which is stable on
//! [-1, 1] for all degrees used here.

/// Streaming generator of P_0(z), P_1(z), P_2(z), ... for fixed z.
#[derive(Clone, Debug)]
pub struct LegendreSeq {
    z: f64,
    k: u64,
    p_prev: f64,
    p_cur: f64,
}

impl LegendreSeq {
    pub fn new(z: f64) -> Self {
        LegendreSeq {
            z,
            k: 0,
            p_prev: 0.0,
            p_cur: 0.0,
        }
    }
}

impl Iterator for LegendreSeq {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let v = match self.k {
            0 => {
                self.p_cur = 1.0;
                1.0
            }
            1 => {
                self.p_prev = 1.0;
                self.p_cur = self.z;
                self.z
            }
            k => {
                // Bonnet: (n+1) P_{n+1} = (2n+1) z P_n - n P_{n-1}, n = k-1.
                let n = (k - 1) as f64;
                let next =
                    ((2.0 * n + 1.0) * self.z * self.p_cur - n * self.p_prev) / (n + 1.0);
                self.p_prev = self.p_cur;
                self.p_cur = next;
                next
            }
        };
        self.k += 1;
        Some(v)
    }
}

pub fn legendre(n: u64, z: f64) -> f64 {
    LegendreSeq::new(z)
        .nth(n as usize)
        .expect("iterator is infinite")
}
