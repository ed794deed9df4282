//! Random variates built on `libm` only.
//!
//! Every transcendental call goes through `libm`, so a given stream yields the
//! same bits on every platform and whatever features the build unifies.

use rand::Rng;

use crate::math;

/// Uniform on `(0, 1]`, safe for logarithms.
#[inline]
fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard normal by Box-Muller (one value per call).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u = open_uniform(rng);
    let v = rng.random::<f64>();
    math::sqrt(-2.0 * math::ln(u)) * libm::cos(2.0 * core::f64::consts::PI * v)
}

/// Gamma with the given shape and rate (Marsaglia-Tsang).
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0);
    if shape < 1.0 {
        let boost = libm::pow(open_uniform(rng), 1.0 / shape);
        return gamma(rng, shape + 1.0, rate) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / math::sqrt(9.0 * d);
    loop {
        let x = standard_normal(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = open_uniform(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || math::ln(u) < 0.5 * x2 + d * (1.0 - v + math::ln(v)) {
            return d * v / rate;
        }
    }
}

/// Beta(1, b) by inversion: `1 - U^(1/b)`.
pub fn beta_one<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    debug_assert!(b > 0.0);
    1.0 - libm::pow(open_uniform(rng), 1.0 / b)
}

/// Geometric on `{0, 1, ...}` with the given mean, by inversion. This is the
/// negative binomial with size 1.
pub fn geometric<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let q = mean / (1.0 + mean);
    let k = libm::floor(math::ln(open_uniform(rng)) / math::ln(q));
    if k >= u32::MAX as f64 {
        u32::MAX
    } else {
        k as u32
    }
}
