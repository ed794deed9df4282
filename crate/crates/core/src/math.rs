//! Scalar helpers over `libm` so the crate stays `no_std`.

pub const PROB_FLOOR: f64 = 1e-6;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Logistic function, stable for large |x|.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}

/// Clip a probability into `[PROB_FLOOR, 1 - PROB_FLOOR]`.
#[inline]
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    sqrt(ss / (xs.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_logit_roundtrip() {
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((expit(logit(p)) - p).abs() < 1e-12);
        }
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
    }
}
