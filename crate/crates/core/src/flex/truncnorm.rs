use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

/// Standard normal conditioned on `z > a`. Plain rejection when `a <= 0`,
/// otherwise the exponential-proposal sampler of Robert (1995).
pub fn lower_truncated<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    loop {
        let z = a + exp.sample(rng);
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - rate) * (z - rate) {
            return z;
        }
    }
}

/// Latent utility for the probit likelihood: `N(mean, 1)` restricted to
/// `(0, inf)` when `y = 1` and `(-inf, 0]` when `y = 0`.
pub fn latent<R: Rng + ?Sized>(rng: &mut R, mean: f64, y: u8) -> f64 {
    if y == 1 {
        mean + lower_truncated(rng, -mean)
    } else {
        mean - lower_truncated(rng, mean)
    }
}
