//! Laplace-Beltrami spectra of the built-in manifolds plus user-supplied
//! finite spectra.
//!
//! Conventions: the circle has unit circumference, points theta in [0, 1),
//! eigenvalues 4 pi^2 n^2, and volume 1. Sphere2 is the unit 2-sphere with
//! eigenvalues n(n+1) and volume 4 pi. SphereD(d), d >= 3, is the unit
//! d-sphere with eigenvalues n(n+d-1); it exposes no pointwise addition
//! kernel, so only spectral-density-level operations are available there.
//! A Custom spectrum is a finite table and is treated as the entire model:
//! sums over it are exact, and levels beyond the table are an error.

use crate::error::{Error, Result};
use crate::legendre;

#[derive(Clone, Debug, PartialEq)]
pub struct CustomSpectrum {
    dim: u32,
    volume: f64,
    /// (lambda_n, t(n)) indexed by level n.
    rows: Vec<(f64, f64)>,
}

impl CustomSpectrum {
    pub fn new(dim: u32, volume: f64, rows: Vec<(f64, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "dimension must be at least 1".into(),
            });
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::InvalidParameter {
                name: "volume",
                reason: format!("must be positive and finite, got {volume}"),
            });
        }
        if rows.is_empty() {
            return Err(Error::InvalidParameter {
                name: "rows",
                reason: "spectrum table is empty".into(),
            });
        }
        let mut last = f64::NEG_INFINITY;
        for (i, &(lam, mult)) in rows.iter().enumerate() {
            if !(lam.is_finite() && lam >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    reason: format!("level {i}: eigenvalue {lam} not a nonnegative real"),
                });
            }
            if lam <= last {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    reason: format!("level {i}: eigenvalues must increase strictly"),
                });
            }
            if !(mult.is_finite() && mult > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "multiplicity",
                    reason: format!("level {i}: multiplicity {mult} not positive"),
                });
            }
            last = lam;
        }
        Ok(CustomSpectrum { dim, volume, rows })
    }

    pub fn levels(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ManifoldSpec {
    Circle,
    Sphere2,
    SphereD { d: u32 },
    Custom(CustomSpectrum),
}

impl ManifoldSpec {
    pub fn sphere_d(d: u32) -> Result<ManifoldSpec> {
        if d < 3 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!(
                    "SphereD covers d >= 3; use Circle or Sphere2 for low dimensions, got {d}"
                ),
            });
        }
        if d > 64 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!("sphere dimension {d} beyond supported range (<= 64)"),
            });
        }
        Ok(ManifoldSpec::SphereD { d })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ManifoldSpec::Circle => "circle",
            ManifoldSpec::Sphere2 => "sphere2",
            ManifoldSpec::SphereD { .. } => "sphere_d",
            ManifoldSpec::Custom(_) => "custom",
        }
    }

    pub fn dimension(&self) -> u32 {
        match self {
            ManifoldSpec::Circle => 1,
            ManifoldSpec::Sphere2 => 2,
            ManifoldSpec::SphereD { d } => *d,
            ManifoldSpec::Custom(c) => c.dim,
        }
    }

    /// Riemannian volume: 1 for the circle, surface area for spheres.
    pub fn volume(&self) -> f64 {
        match self {
            ManifoldSpec::Circle => 1.0,
            ManifoldSpec::Sphere2 => 4.0 * std::f64::consts::PI,
            // 2 pi^{(d+1)/2} / Gamma((d+1)/2) via a rational-argument Gamma.
            ManifoldSpec::SphereD { d } => unit_sphere_area(*d),
            ManifoldSpec::Custom(c) => c.volume,
        }
    }

    /// Highest valid level for finite spectra; None when unbounded.
    pub fn max_level(&self) -> Option<u64> {
        match self {
            ManifoldSpec::Custom(c) => Some(c.rows.len() as u64 - 1),
            _ => None,
        }
    }

    fn check_level(&self, n: u64) -> Result<()> {
        if let Some(max) = self.max_level() {
            if n > max {
                return Err(Error::LevelOutOfRange {
                    level: n,
                    max_level: max,
                });
            }
        }
        Ok(())
    }

    pub fn eigenvalue(&self, n: u64) -> Result<f64> {
        self.check_level(n)?;
        let nf = n as f64;
        Ok(match self {
            ManifoldSpec::Circle => {
                4.0 * std::f64::consts::PI * std::f64::consts::PI * nf * nf
            }
            ManifoldSpec::Sphere2 => nf * (nf + 1.0),
            ManifoldSpec::SphereD { d } => nf * (nf + *d as f64 - 1.0),
            ManifoldSpec::Custom(c) => c.rows[n as usize].0,
        })
    }

    pub fn multiplicity(&self, n: u64) -> Result<f64> {
        self.check_level(n)?;
        Ok(match self {
            ManifoldSpec::Circle => {
                if n == 0 {
                    1.0
                } else {
                    2.0
                }
            }
            ManifoldSpec::Sphere2 => 2.0 * n as f64 + 1.0,
            ManifoldSpec::SphereD { d } => sphere_multiplicity(*d, n),
            ManifoldSpec::Custom(c) => c.rows[n as usize].1,
        })
    }

    pub fn has_addition_kernel(&self) -> bool {
        matches!(self, ManifoldSpec::Circle | ManifoldSpec::Sphere2)
    }

    /// Normalized addition kernel as a function of c = cos(geodesic distance):
    /// equals 1 at coincident points. Circle: cos(2 pi n d); Sphere2: the
    /// degree-n Legendre polynomial P_n(c).
    pub fn addition_kernel(&self, n: u64, c: f64) -> Result<f64> {
        let c = c.clamp(-1.0, 1.0);
        match self {
            ManifoldSpec::Circle => {
                Ok((2.0 * std::f64::consts::PI * n as f64 * c.acos()).cos())
            }
            ManifoldSpec::Sphere2 => Ok(legendre::legendre(n, c)),
            _ => Err(Error::NoAdditionKernel),
        }
    }

    /// Counting function N(lambda): eigenfunctions (with multiplicity) whose
    /// eigenvalue is at most lambda. Grows like lambda^{d/2} (Weyl).
    pub fn eigenvalue_count(&self, lambda: f64) -> f64 {
        let mut total = 0.0;
        let mut n = 0u64;
        loop {
            match self.eigenvalue(n) {
                Ok(lam) if lam <= lambda => {
                    total += self.multiplicity(n).expect("level just validated");
                }
                _ => break,
            }
            n += 1;
        }
        total
    }
}

/// t_d(n) = (2n+d-1) * (n+1)(n+2)...(n+d-2) / (d-1)! for n >= 1; t_d(0) = 1.
fn sphere_multiplicity(d: u32, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;
    let df = d as f64;
    let mut t = 2.0 * nf + df - 1.0;
    for i in 1..=(d - 2) {
        t *= (nf + i as f64) / i as f64;
    }
    // Remaining 1/(d-1) of the factorial.
    t / (df - 1.0)
}

/// Coefficients of t_d(n) as a polynomial in m = n + (d-1)/2, ascending
/// powers. Exact for every n >= 1; degree d-1 with only alternate powers.
pub(crate) fn sphere_multiplicity_poly(d: u32) -> Vec<f64> {
    let half = (d as f64 - 1.0) / 2.0;
    // Start from 2m, then multiply the linear factors (m + (i - half)).
    let mut poly = vec![0.0, 2.0];
    for i in 1..=(d as i64 - 2) {
        let root = i as f64 - half;
        let mut next = vec![0.0; poly.len() + 1];
        for (j, &c) in poly.iter().enumerate() {
            next[j] += c * root;
            next[j + 1] += c;
        }
        poly = next;
    }
    let mut fact = 1.0;
    for i in 2..d as u64 {
        fact *= i as f64;
    }
    for c in &mut poly {
        *c /= fact;
    }
    poly
}

fn unit_sphere_area(d: u32) -> f64 {
    // 2 pi^{(d+1)/2} / Gamma((d+1)/2); the argument is integer or half-integer.
    let pi = std::f64::consts::PI;
    let a = (d + 1) as f64 / 2.0;
    let mut g = if (d + 1) % 2 == 0 {
        1.0 // Gamma(1)
    } else {
        pi.sqrt() // Gamma(1/2)
    };
    let mut x = if (d + 1) % 2 == 0 { 1.0 } else { 0.5 };
    while x + 0.5 < a + 0.25 {
        g *= x;
        x += 1.0;
    }
    2.0 * pi.powf(a) / g
}

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Circle { theta: f64 },
    Sphere2([f64; 3]),
    SphereD(Vec<f64>),
}

impl Point {
    /// Circle point; the coordinate is reduced mod 1.
    pub fn circle(theta: f64) -> Result<Point> {
        if !theta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "theta",
                reason: format!("not finite: {theta}"),
            });
        }
        let t = theta.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negatives.
        let t = if t >= 1.0 { 0.0 } else { t };
        Ok(Point::Circle { theta: t })
    }

    /// Unit 2-sphere point; the vector is normalized on construction.
    pub fn sphere2(x: f64, y: f64, z: f64) -> Result<Point> {
        let v = normalize(&[x, y, z])?;
        Ok(Point::Sphere2([v[0], v[1], v[2]]))
    }

    pub fn sphere_d(coords: Vec<f64>) -> Result<Point> {
        if coords.len() < 4 {
            return Err(Error::InvalidParameter {
                name: "coords",
                reason: format!(
                    "SphereD points need at least 4 coordinates, got {}",
                    coords.len()
                ),
            });
        }
        Ok(Point::SphereD(normalize(&coords)?))
    }

    pub fn lies_on(&self, m: &ManifoldSpec) -> bool {
        matches!(
            (self, m),
            (Point::Circle { .. }, ManifoldSpec::Circle)
                | (Point::Sphere2(_), ManifoldSpec::Sphere2)
        ) || matches!((self, m), (Point::SphereD(v), ManifoldSpec::SphereD { d })
                if v.len() == *d as usize + 1)
    }
}

fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "coords",
            reason: "non-finite coordinate".into(),
        });
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::InvalidParameter {
            name: "coords",
            reason: "vector too close to zero to normalize".into(),
        });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn geodesic_distance(m: &ManifoldSpec, x: &Point, y: &Point) -> Result<f64> {
    if !x.lies_on(m) || !y.lies_on(m) {
        return Err(Error::ManifoldMismatch);
    }
    Ok(match (x, y) {
        (Point::Circle { theta: a }, Point::Circle { theta: b }) => {
            let d = (a - b).abs();
            d.min(1.0 - d)
        }
        (Point::Sphere2(a), Point::Sphere2(b)) => {
            let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            dot.clamp(-1.0, 1.0).acos()
        }
        (Point::SphereD(a), Point::SphereD(b)) => {
            let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            dot.clamp(-1.0, 1.0).acos()
        }
        _ => return Err(Error::ManifoldMismatch),
    })
}

/// Parse a custom spectrum table.
///
/// Line one is a header `# d=<int> V=<real>`; each following non-blank,
/// non-comment line is `n lambda multiplicity` with contiguous levels
/// n = 0, 1, 2, ...
pub fn parse_custom_spectrum(text: &str) -> Result<CustomSpectrum> {
    let mut lines = text.lines();
    let header = loop {
        match lines.next() {
            Some(l) if l.trim().is_empty() => continue,
            Some(l) => break l.trim(),
            None => return Err(Error::Parse("empty spectrum file".into())),
        }
    };
    let (dim, volume) = parse_header(header)?;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected `n lambda multiplicity`, got {} fields",
                lineno + 2,
                fields.len()
            )));
        }
        let n: u64 = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad level index", lineno + 2)))?;
        if n as usize != rows.len() {
            return Err(Error::Parse(format!(
                "line {}: levels must be contiguous from 0 (expected {}, got {})",
                lineno + 2,
                rows.len(),
                n
            )));
        }
        let lam: f64 = fields[1]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad eigenvalue", lineno + 2)))?;
        let mult: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad multiplicity", lineno + 2)))?;
        rows.push((lam, mult));
    }
    CustomSpectrum::new(dim, volume, rows).map_err(|e| Error::Parse(e.to_string()))
}

fn parse_header(header: &str) -> Result<(u32, f64)> {
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("header must start with `# d=<int> V=<real>`".into()))?;
    let mut dim = None;
    let mut vol = None;
    for tok in body.split_whitespace() {
        if let Some(v) = tok.strip_prefix("d=") {
            dim = v.parse::<u32>().ok();
        } else if let Some(v) = tok.strip_prefix("V=") {
            vol = v.parse::<f64>().ok();
        }
    }
    match (dim, vol) {
        (Some(d), Some(v)) => Ok((d, v)),
        _ => Err(Error::Parse(
            "header must carry d=<int> and V=<real>".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn builtin_eigenvalues() {
        let c = ManifoldSpec::Circle;
        assert_eq!(c.eigenvalue(0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            c.eigenvalue(3).unwrap(),
            4.0 * std::f64::consts::PI.powi(2) * 9.0,
            epsilon = 1e-12
        );
        let s = ManifoldSpec::Sphere2;
        assert_eq!(s.eigenvalue(3).unwrap(), 12.0);
        let s4 = ManifoldSpec::sphere_d(4).unwrap();
        assert_eq!(s4.eigenvalue(1).unwrap(), 4.0);
        for m in [&c, &s, &s4] {
            assert_eq!(m.eigenvalue(0).unwrap(), 0.0);
            let mut last = -1.0;
            for n in 0..200 {
                let lam = m.eigenvalue(n).unwrap();
                assert!(lam > last);
                last = lam;
            }
        }
    }

    #[test]
    fn builtin_multiplicities() {
        let c = ManifoldSpec::Circle;
        assert_eq!(c.multiplicity(0).unwrap(), 1.0);
        assert_eq!(c.multiplicity(5).unwrap(), 2.0);
        let s = ManifoldSpec::Sphere2;
        assert_eq!(s.multiplicity(3).unwrap(), 7.0);
        let s4 = ManifoldSpec::sphere_d(4).unwrap();
        assert_eq!(s4.multiplicity(0).unwrap(), 1.0);
        assert_eq!(s4.multiplicity(2).unwrap(), 14.0);
        // S^3 harmonics have t(n) = (n+1)^2.
        let s3 = ManifoldSpec::sphere_d(3).unwrap();
        for n in 0..30u64 {
            assert_abs_diff_eq!(
                s3.multiplicity(n).unwrap(),
                ((n + 1) * (n + 1)) as f64,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn multiplicity_polynomial_agrees_with_direct_formula() {
        for d in [2u32, 3, 4, 5, 7, 10] {
            let poly = sphere_multiplicity_poly(d);
            assert_eq!(poly.len(), d as usize);
            let m = if d == 2 {
                ManifoldSpec::Sphere2
            } else {
                ManifoldSpec::sphere_d(d).unwrap()
            };
            for n in 1..40u64 {
                let mm = n as f64 + (d as f64 - 1.0) / 2.0;
                let mut p = 0.0;
                for &c in poly.iter().rev() {
                    p = p * mm + c;
                }
                let t = m.multiplicity(n).unwrap();
                assert!(
                    (p - t).abs() <= 1e-10 * t,
                    "d={d} n={n}: poly {p} vs direct {t}"
                );
            }
        }
    }

    #[test]
    fn sphere_volumes() {
        assert_abs_diff_eq!(
            ManifoldSpec::Sphere2.volume(),
            4.0 * std::f64::consts::PI,
            epsilon = 1e-15
        );
        // S^3 area 2 pi^2; S^4 area 8 pi^2 / 3.
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(
            ManifoldSpec::sphere_d(3).unwrap().volume(),
            2.0 * pi * pi,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ManifoldSpec::sphere_d(4).unwrap().volume(),
            8.0 * pi * pi / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn circle_distances_wrap() {
        let m = ManifoldSpec::Circle;
        let a = Point::circle(0.1).unwrap();
        let b = Point::circle(0.9).unwrap();
        assert_abs_diff_eq!(geodesic_distance(&m, &a, &b).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(geodesic_distance(&m, &a, &a).unwrap(), 0.0);
        let c = Point::circle(-0.05).unwrap();
        assert_abs_diff_eq!(
            geodesic_distance(&m, &a, &c).unwrap(),
            0.15,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sphere_distances() {
        let m = ManifoldSpec::Sphere2;
        let n = Point::sphere2(0.0, 0.0, 1.0).unwrap();
        let s = Point::sphere2(0.0, 0.0, -1.0).unwrap();
        assert_abs_diff_eq!(
            geodesic_distance(&m, &n, &s).unwrap(),
            std::f64::consts::PI,
            epsilon = 1e-15
        );
        let e = Point::sphere2(5.0, 0.0, 0.0).unwrap(); // normalized on construction
        assert_abs_diff_eq!(
            geodesic_distance(&m, &n, &e).unwrap(),
            std::f64::consts::PI / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mismatched_points_error() {
        let m = ManifoldSpec::Circle;
        let a = Point::circle(0.1).unwrap();
        let b = Point::sphere2(1.0, 0.0, 0.0).unwrap();
        assert_eq!(
            geodesic_distance(&m, &a, &b).unwrap_err(),
            Error::ManifoldMismatch
        );
        let s4 = ManifoldSpec::sphere_d(4).unwrap();
        let p5 = Point::sphere_d(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p6 = Point::sphere_d(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(geodesic_distance(&s4, &p5, &p5).is_ok());
        assert_eq!(
            geodesic_distance(&s4, &p5, &p6).unwrap_err(),
            Error::ManifoldMismatch
        );
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        use crate::rng::CounterRng;
        let mut rng = CounterRng::new(31, 0);
        let mc = ManifoldSpec::Circle;
        let ms = ManifoldSpec::Sphere2;
        for _ in 0..1000 {
            let pts: Vec<Point> = (0..3)
                .map(|_| Point::circle(rng.next_uniform()).unwrap())
                .collect();
            let d01 = geodesic_distance(&mc, &pts[0], &pts[1]).unwrap();
            let d12 = geodesic_distance(&mc, &pts[1], &pts[2]).unwrap();
            let d02 = geodesic_distance(&mc, &pts[0], &pts[2]).unwrap();
            assert!(d02 <= d01 + d12 + 1e-12);

            let sph: Vec<Point> = (0..3)
                .map(|_| {
                    let z = 2.0 * rng.next_uniform() - 1.0;
                    let phi = 2.0 * std::f64::consts::PI * rng.next_uniform();
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    Point::sphere2(r * phi.cos(), r * phi.sin(), z).unwrap()
                })
                .collect();
            let e01 = geodesic_distance(&ms, &sph[0], &sph[1]).unwrap();
            let e12 = geodesic_distance(&ms, &sph[1], &sph[2]).unwrap();
            let e02 = geodesic_distance(&ms, &sph[0], &sph[2]).unwrap();
            assert!(e02 <= e01 + e12 + 1e-12);
        }
    }

    #[test]
    fn weyl_counting_stays_bounded() {
        for (m, d) in [(ManifoldSpec::Circle, 1.0), (ManifoldSpec::Sphere2, 2.0)] {
            let mut ratios = Vec::new();
            let mut lam = 100.0;
            while lam <= 1e6 {
                ratios.push(m.eigenvalue_count(lam) / lam.powf(d / 2.0));
                lam *= 1.6;
            }
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0, f64::max);
            assert!(lo > 0.0 && hi.is_finite());
            assert!(
                hi / lo < 2.0,
                "{}: counting ratio drifts [{lo}, {hi}]",
                m.kind_name()
            );
        }
    }

    #[test]
    fn addition_kernel_matches_independent_legendre_on_sphere() {
        let m = ManifoldSpec::Sphere2;
        for n in 0..=50u64 {
            for i in 0..=40 {
                let c = -1.0 + 2.0 * i as f64 / 40.0;
                // Independent of the streaming iterator: direct recurrence.
                let (mut a, mut b) = (1.0, c);
                let p = match n {
                    0 => a,
                    1 => b,
                    _ => {
                        for k in 1..n {
                            let k = k as f64;
                            let next = ((2.0 * k + 1.0) * c * b - k * a) / (k + 1.0);
                            a = b;
                            b = next;
                        }
                        b
                    }
                };
                let got = m.addition_kernel(n, c).unwrap();
                let tol = 1e-10 * p.abs().max(1e-3);
                assert!((got - p).abs() <= tol, "n={n} c={c}: {got} vs {p}");
            }
        }
        assert_eq!(m.addition_kernel(7, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn circle_addition_kernel_is_a_cosine_in_the_distance() {
        let m = ManifoldSpec::Circle;
        for n in 0..12u64 {
            for i in 0..=20 {
                let d = 0.5 * i as f64 / 20.0;
                let got = m.addition_kernel(n, d.cos()).unwrap();
                let want = (2.0 * std::f64::consts::PI * n as f64 * d).cos();
                assert_abs_diff_eq!(got, want, epsilon = 1e-7);
            }
        }
        assert!(ManifoldSpec::sphere_d(4)
            .unwrap()
            .addition_kernel(1, 0.5)
            .is_err());
    }

    #[test]
    fn custom_spectrum_roundtrip_and_errors() {
        let text = "# d=2 V=12.566370614359172\n\
                    0 0.0 1\n\
                    1 2.0 3\n\
                    2 6.0 5\n";
        let c = parse_custom_spectrum(text).unwrap();
        assert_eq!(c.levels(), 3);
        let m = ManifoldSpec::Custom(c);
        assert_eq!(m.dimension(), 2);
        assert_eq!(m.eigenvalue(2).unwrap(), 6.0);
        assert_eq!(m.multiplicity(1).unwrap(), 3.0);
        assert_eq!(m.max_level(), Some(2));
        assert_eq!(
            m.eigenvalue(3).unwrap_err(),
            Error::LevelOutOfRange {
                level: 3,
                max_level: 2
            }
        );

        assert!(parse_custom_spectrum("").is_err());
        assert!(parse_custom_spectrum("0 0 1\n").is_err()); // missing header
        assert!(parse_custom_spectrum("# d=2 V=1\n0 0 1\n2 5 1\n").is_err()); // gap
        assert!(parse_custom_spectrum("# d=2 V=1\n0 3 1\n1 2 1\n").is_err()); // not increasing
        assert!(parse_custom_spectrum("# d=2 V=1\n0 0 -1\n").is_err()); // bad mult
    }

    #[test]
    fn points_normalize_and_reduce() {
        match Point::circle(1.75).unwrap() {
            Point::Circle { theta } => assert_abs_diff_eq!(theta, 0.75, epsilon = 1e-15),
            _ => unreachable!(),
        }
        match Point::circle(-0.25).unwrap() {
            Point::Circle { theta } => assert_abs_diff_eq!(theta, 0.75, epsilon = 1e-15),
            _ => unreachable!(),
        }
        match Point::sphere2(3.0, 4.0, 0.0).unwrap() {
            Point::Sphere2(v) => {
                assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15);
                assert_abs_diff_eq!(v[1], 0.8, epsilon = 1e-15);
                let norm: f64 = v.iter().map(|x| x * x).sum();
                assert!((norm - 1.0).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        assert!(Point::sphere2(0.0, 0.0, 0.0).is_err());
        assert!(Point::circle(f64::NAN).is_err());
    }
}
