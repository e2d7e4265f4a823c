//! Scalar backends for projective dynamics: the real field with a
//! comparison tolerance, and fixed-precision p-adic rationals.
//!
//! Field objects carry their context (tolerance, prime, precision); element
//! values are plain data interpreted through the field object.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use rand::Rng;
use rand_distr::StandardNormal;

/// A valued field with the operations projective dynamics needs: exact (or
/// tolerance-tracked) arithmetic, a real-valued absolute value, vector norms
/// and projective normalization, and seeded sampling.
pub trait ValuedField: Clone + std::fmt::Debug {
    type Elem: Clone + std::fmt::Debug + PartialEq;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn sub(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn div(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn neg(&self, a: &Self::Elem) -> Self::Elem;
    fn from_rational(&self, r: &BigRational) -> Self::Elem;

    /// The field's absolute value, as a double.
    fn abs(&self, a: &Self::Elem) -> f64;
    /// Zero at working precision.
    fn is_zero(&self, a: &Self::Elem) -> bool;
    /// Standard vector norm: Euclidean over the reals, max-abs p-adically.
    fn vec_norm(&self, v: &[Self::Elem]) -> f64;
    /// Projective normalization to a canonical representative.
    fn normalize_vec(&self, v: &[Self::Elem]) -> Vec<Self::Elem>;
    /// A random vector suitable for projective sampling.
    fn sample_vec<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Self::Elem>;
    /// A random perturbation vector of norm at most `scale`.
    fn sample_perturbation<R: Rng>(&self, scale: f64, n: usize, rng: &mut R)
        -> Vec<Self::Elem>;
    /// Comparison tolerance for distances and margins.
    fn tol(&self) -> f64;
    fn describe(&self) -> String;

    /// Certified-disjointness margin for two metric balls of the projective
    /// metric: a positive value proves the closed balls are disjoint.
    fn ball_separation(&self, d_centers: f64, r1: f64, r2: f64) -> f64;

    /// Certified-disjointness margin for a metric ball against the
    /// `rho`-neighborhood of a hyperplane, given the center-to-hyperplane
    /// distance. Positive proves disjointness.
    fn ball_hyperplane_separation(&self, d_center_hyp: f64, r: f64, rho: f64) -> f64;
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Binary floating reals with an explicit comparison tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub tolerance: f64,
}

impl Default for RealField {
    fn default() -> Self {
        RealField { tolerance: 1e-9 }
    }
}

impl ValuedField for RealField {
    type Elem = f64;

    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        1.0
    }
    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&self, a: &f64, b: &f64) -> f64 {
        a / b
    }
    fn neg(&self, a: &f64) -> f64 {
        -a
    }
    fn from_rational(&self, r: &BigRational) -> f64 {
        rational_to_f64(r)
    }
    fn abs(&self, a: &f64) -> f64 {
        a.abs()
    }
    fn is_zero(&self, a: &f64) -> bool {
        a.abs() <= self.tolerance
    }
    fn vec_norm(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
    fn normalize_vec(&self, v: &[f64]) -> Vec<f64> {
        let norm = self.vec_norm(v);
        assert!(norm > 0.0, "cannot normalize the zero vector");
        let mut out: Vec<f64> = v.iter().map(|x| x / norm).collect();
        // Fix the sign so equal projective points get equal coordinates.
        if let Some(first) = out.iter().find(|x| x.abs() > self.tolerance) {
            if *first < 0.0 {
                out.iter_mut().for_each(|x| *x = -*x);
            }
        }
        out
    }
    fn sample_vec<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        // Gaussian coordinates give the rotation-invariant distribution on
        // the projective space.
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            if self.vec_norm(&v) > 1e-6 {
                return self.normalize_vec(&v);
            }
        }
    }
    fn sample_perturbation<R: Rng>(&self, scale: f64, n: usize, rng: &mut R) -> Vec<f64> {
        let t: f64 = rng.gen_range(0.0..1.0);
        let u = self.sample_vec(n, rng);
        u.into_iter().map(|x| x * t * scale).collect()
    }
    fn tol(&self) -> f64 {
        self.tolerance
    }
    fn describe(&self) -> String {
        "real".into()
    }
    fn ball_separation(&self, d_centers: f64, r1: f64, r2: f64) -> f64 {
        // Distances are sines of principal angles and the angular triangle
        // inequality is exact, so compare angles rather than chord lengths.
        clamp01(d_centers).asin() - clamp01(r1).asin() - clamp01(r2).asin()
    }
    fn ball_hyperplane_separation(&self, d_center_hyp: f64, r: f64, rho: f64) -> f64 {
        // d(p, ker f) = cos(angle(p, dual f)); a point of the ball has angle
        // to the dual at most angle(center) + asin(r).
        let theta = clamp01(d_center_hyp).acos() + clamp01(r).asin();
        if theta >= std::f64::consts::FRAC_PI_2 {
            return -rho;
        }
        theta.cos() - rho
    }
}

/// Fixed-precision p-adic numbers, represented as exact rationals with the
/// absolute value `|x| = p^{-v_p(x)}`. The precision only controls sampling
/// granularity and the zero cutoff; arithmetic itself is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct PadicField {
    pub p: u32,
    pub digits: u32,
}

impl PadicField {
    pub fn new(p: u32, digits: u32) -> Self {
        assert!(p >= 2 && digits >= 1);
        PadicField { p, digits }
    }

    /// p-adic valuation of a nonzero rational.
    pub fn valuation(&self, x: &BigRational) -> i64 {
        assert!(!x.is_zero());
        let p = BigInt::from(self.p);
        let count = |mut n: BigInt| -> i64 {
            let mut v = 0;
            while (&n % &p).is_zero() {
                n /= &p;
                v += 1;
            }
            v
        };
        count(x.numer().abs()) - count(x.denom().abs())
    }
}

impl ValuedField for PadicField {
    type Elem = BigRational;

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn one(&self) -> BigRational {
        BigRational::one()
    }
    fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }
    fn sub(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a - b
    }
    fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn div(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a / b
    }
    fn neg(&self, a: &BigRational) -> BigRational {
        -a
    }
    fn from_rational(&self, r: &BigRational) -> BigRational {
        r.clone()
    }
    fn abs(&self, a: &BigRational) -> f64 {
        if a.is_zero() {
            return 0.0;
        }
        (self.p as f64).powi(-(self.valuation(a) as i32))
    }
    fn is_zero(&self, a: &BigRational) -> bool {
        a.is_zero() || self.valuation(a) >= self.digits as i64
    }
    fn vec_norm(&self, v: &[BigRational]) -> f64 {
        v.iter().map(|x| self.abs(x)).fold(0.0, f64::max)
    }
    fn normalize_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        // Divide by the first coordinate of maximal absolute value, so all
        // coordinates are p-adic integers and the pivot is exactly 1.
        let norm = self.vec_norm(v);
        assert!(norm > 0.0, "cannot normalize the zero vector");
        let pivot = v
            .iter()
            .find(|x| self.abs(x) == norm)
            .expect("norm attained")
            .clone();
        v.iter().map(|x| x / &pivot).collect()
    }
    fn sample_vec<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<BigRational> {
        // Uniform digit strings of the configured length: integers drawn
        // uniformly from [0, p^digits).
        loop {
            let v: Vec<BigRational> = (0..n)
                .map(|_| {
                    let mut acc = BigInt::zero();
                    let p = BigInt::from(self.p);
                    for _ in 0..self.digits {
                        let d = rng.gen_range(0..self.p);
                        acc = &acc * &p + BigInt::from(d);
                    }
                    BigRational::from_integer(acc)
                })
                .collect();
            if v.iter().any(|x| !x.is_zero()) {
                return self.normalize_vec(&v);
            }
        }
    }
    fn sample_perturbation<R: Rng>(
        &self,
        scale: f64,
        n: usize,
        rng: &mut R,
    ) -> Vec<BigRational> {
        // Scale a unit sample by p^k with p^{-k} <= scale; the ultrametric
        // makes the resulting norm exactly bounded by the scale.
        let k = (-(scale.ln()) / (self.p as f64).ln()).ceil().max(0.0) as u32;
        let factor = BigRational::from_integer(BigInt::from(self.p).pow(k));
        self.sample_vec(n, rng)
            .into_iter()
            .map(|x| x * &factor)
            .collect()
    }
    fn tol(&self) -> f64 {
        (self.p as f64).powi(-(self.digits as i32))
    }
    fn describe(&self) -> String {
        format!("padic(p={}, digits={})", self.p, self.digits)
    }
    fn ball_separation(&self, d_centers: f64, r1: f64, r2: f64) -> f64 {
        // Ultrametric: if the centers are farther apart than both radii,
        // every pair of ball points realizes the center distance.
        d_centers - r1.max(r2)
    }
    fn ball_hyperplane_separation(&self, d_center_hyp: f64, r: f64, rho: f64) -> f64 {
        // Within radius r < d(c, H), the hyperplane distance is constant at
        // d(c, H) by the ultrametric equality.
        d_center_hyp - r.max(rho)
    }
}

/// Convert a big rational to the nearest double.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    let f = |i: &BigInt| -> f64 {
        // Stay exact for small integers, fall back to string conversion for
        // large ones (desk-scale values never reach that path in practice).
        i.to_string().parse::<f64>().unwrap_or(f64::NAN)
    };
    f(r.numer()) / f(r.denom())
}
