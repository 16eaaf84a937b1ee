//! Shape-4 gamma law of trader buy-sell spreads.

use rand::Rng;
use rand_distr::Exp1;

/// Spread density `rho(L) = L^3 exp(-L/L*) / (6 L*^4)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpreadDistribution {
    pub l_star: f64,
}

impl SpreadDistribution {
    pub fn new(l_star: f64) -> Self {
        assert!(l_star > 0.0, "spread scale must be positive");
        Self { l_star }
    }

    pub fn mean(&self) -> f64 {
        4.0 * self.l_star
    }

    pub fn variance(&self) -> f64 {
        4.0 * self.l_star * self.l_star
    }

    pub fn pdf(&self, l: f64) -> f64 {
        if l < 0.0 {
            return 0.0;
        }
        let x = l / self.l_star;
        x * x * x * (-x).exp() / (6.0 * self.l_star)
    }

    /// `P(>= l)`, closed form for integer shape.
    pub fn ccdf(&self, l: f64) -> f64 {
        if l <= 0.0 {
            return 1.0;
        }
        let x = l / self.l_star;
        (-x).exp() * (1.0 + x + x * x / 2.0 + x * x * x / 6.0)
    }
}

/// Draws one spread as a sum of four exponentials of mean `L*`.
pub fn sample_spread<R: Rng + ?Sized>(rng: &mut R, dist: &SpreadDistribution) -> f64 {
    let mut s = 0.0;
    for _ in 0..4 {
        let e: f64 = rng.sample(Exp1);
        s += e;
    }
    s * dist.l_star
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn moments_match_gamma4() {
        let dist = SpreadDistribution::new(15.0);
        let mut rng = RngStream::new(11);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_spread(&mut rng, &dist)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
        let skew = m3 / var.powf(1.5);
        assert!((mean - 60.0).abs() < 0.2, "mean {mean}");
        assert!((var / 900.0 - 1.0).abs() < 0.01, "var {var}");
        // gamma(4) skewness is 2/sqrt(4) = 1
        assert!((skew - 1.0).abs() < 0.02, "skew {skew}");
    }

    #[test]
    fn empirical_ccdf_at_four_scales_matches_quadrature() {
        let dist = SpreadDistribution::new(15.0);
        // Oracle: trapezoid integral of the density beyond 4 L*.
        let (a, b, n) = (60.0, 60.0 + 40.0 * 15.0, 400_000);
        let h = (b - a) / n as f64;
        let mut tail = 0.5 * (dist.pdf(a) + dist.pdf(b));
        for k in 1..n {
            tail += dist.pdf(a + k as f64 * h);
        }
        tail *= h;
        assert!((tail - dist.ccdf(60.0)).abs() < 1e-9);

        let mut rng = RngStream::new(12);
        let m = 1_000_000;
        let hits = (0..m)
            .filter(|_| sample_spread(&mut rng, &dist) >= 60.0)
            .count();
        let emp = hits as f64 / m as f64;
        assert!((emp / tail - 1.0).abs() < 0.01, "emp {emp} vs {tail}");
    }

    #[test]
    fn samples_positive() {
        let dist = SpreadDistribution::new(0.5);
        let mut rng = RngStream::new(1);
        assert!((0..10_000).all(|_| sample_spread(&mut rng, &dist) > 0.0));
    }
}
