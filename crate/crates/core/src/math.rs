use statrs::distribution::{ContinuousCDF, Normal};

/// Smallest probability distance from 0 or 1 used where logs or strict
/// interior bounds are required.
pub const PROB_EPS: f64 = 1e-12;

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile, polished by Newton steps on `norm_cdf`.
pub fn norm_quantile(p: f64) -> f64 {
    let mut z = Normal::standard().inverse_cdf(p);
    if z.is_finite() {
        for _ in 0..2 {
            let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            if dens > 0.0 {
                z -= (norm_cdf(z) - p) / dens;
            }
        }
    }
    z
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_values() {
        assert_eq!(expit(0.0), 0.5);
        assert!((expit(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((expit(-40.0) - (-40f64).exp() / (1.0 + (-40f64).exp())).abs() < 1e-30);
    }

    #[test]
    fn normal_cdf_and_quantile() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((norm_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((norm_cdf(-6.0) - 9.865_876_450_376_98e-10).abs() < 1e-22);
        assert!((norm_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn sd_uses_n_minus_one() {
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
