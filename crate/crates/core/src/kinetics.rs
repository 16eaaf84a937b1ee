//! Closed-form mean-field results for the trader model, and the two small
//! auxiliary simulations they rest on (a Brownian particle with hopping
//! barriers, and the order-statistics law of transaction intervals).
//!
//! Everything here is a pure function except the hopping-barrier Monte
//! Carlo routines, which take their own [`RngStream`].

use rand::Rng;
use rand_distr::StandardNormal;

use crate::par;
use crate::quad::{self, QuadError, QuadOptions};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum KineticsError {
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("invalid mixture bounds: need 0 < kappa_min <= kappa_max and m > 0")]
    InvalidMixture,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Spread density `L^3 exp(-L/L*) / (6 L*^4)`.
pub fn spread_pdf(l: f64, l_star: f64) -> Result<f64, KineticsError> {
    if l < 0.0 {
        return Err(KineticsError::Negative {
            what: "spread",
            value: l,
        });
    }
    let x = l / l_star;
    Ok(x * x * x * (-x).exp() / (6.0 * l_star))
}

/// Steady relative-midprice density of a trader with spread `L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TentProfile {
    pub l: f64,
}

impl TentProfile {
    pub fn density(&self, r: f64) -> f64 {
        tent_density(r, self.l)
    }

    /// Probability mass of `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let h = self.l / 2.0;
        let cdf = |x: f64| {
            let x = x.clamp(-h, h);
            if x <= 0.0 {
                0.5 * ((x + h) / h).powi(2)
            } else {
                1.0 - 0.5 * ((h - x) / h).powi(2)
            }
        };
        cdf(b) - cdf(a)
    }
}

/// `(4/L^2) max(L/2 - |r|, 0)`.
#[inline]
pub fn tent_density(r: f64, l: f64) -> f64 {
    4.0 / (l * l) * (l / 2.0 - r.abs()).max(0.0)
}

/// Average ask-side profile at depth `r >= 0` for gamma-distributed
/// spreads, in closed form.
pub fn avg_orderbook_profile(r: f64, l_star: f64) -> Result<f64, KineticsError> {
    if r < 0.0 {
        return Err(KineticsError::Negative {
            what: "depth",
            value: r,
        });
    }
    Ok(scaled_profile(r / l_star) / l_star)
}

fn scaled_profile(x: f64) -> f64 {
    4.0 / 3.0
        * (-1.5 * x).exp()
        * ((2.0 + x) * (0.5 * x).sinh() - 0.5 * x * (-0.5 * x).exp())
}

/// Mass of the average ask profile on `[a, b]` (used for bin averages).
pub fn avg_orderbook_profile_mass(a: f64, b: f64, l_star: f64) -> Result<f64, KineticsError> {
    let a = a.max(0.0);
    if b <= a {
        return Ok(0.0);
    }
    let f = |r: f64| scaled_profile(r / l_star) / l_star;
    if b == f64::INFINITY {
        return Ok(quad::integrate_to_infinity(f, a, l_star, QuadOptions::default())?);
    }
    Ok(quad::integrate(f, a, b, QuadOptions::default())?)
}

/// `tau* = 3 L*^2 / (N sigma^2)`.
pub fn mean_transaction_interval(n: usize, sigma: f64, l_star: f64) -> f64 {
    3.0 * l_star * l_star / (n as f64 * sigma * sigma)
}

/// Mean-field mean interval for an arbitrary spread density:
/// `1 / (2 N sigma^2 int L^-2 rho(L) dL)`. `scale` is the decay length of
/// `rho` used by the quadrature mapping.
pub fn mean_transaction_interval_general<F: Fn(f64) -> f64>(
    n: usize,
    sigma: f64,
    rho: F,
    scale: f64,
) -> Result<f64, KineticsError> {
    let moment = quad::integrate_to_infinity(
        |l| if l > 0.0 { rho(l) / (l * l) } else { 0.0 },
        0.0,
        scale,
        QuadOptions::default(),
    )?;
    Ok(1.0 / (2.0 * n as f64 * sigma * sigma * moment))
}

/// Law of the transaction interval: the later of two exponential arrivals
/// of mean `a`, with `tau* = 3a/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalLaw {
    pub tau_star: f64,
}

impl IntervalLaw {
    pub fn new(tau_star: f64) -> Self {
        assert!(tau_star > 0.0, "mean interval must be positive");
        Self { tau_star }
    }

    /// Scale of the two underlying exponential arrivals.
    pub fn arrival_scale(&self) -> f64 {
        2.0 * self.tau_star / 3.0
    }

    pub fn ccdf(&self, tau: f64) -> f64 {
        interval_ccdf(tau, self.tau_star)
    }

    pub fn cdf(&self, tau: f64) -> f64 {
        1.0 - self.ccdf(tau)
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        -self.arrival_scale() * (1.0 - u.sqrt()).ln()
    }
}

/// `P(>= tau) = 1 - (1 - exp(-3 tau / 2 tau*))^2`.
pub fn interval_ccdf(tau: f64, tau_star: f64) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    let e = (-1.5 * tau / tau_star).exp();
    // 1 - (1-e)^2 = e (2 - e)
    e * (2.0 - e)
}

/// Predicted decay length of the price-movement tail, `2 dz* / 3`.
pub fn price_decay_length(dz_star: f64) -> f64 {
    2.0 * dz_star / 3.0
}

/// Exponential price-movement tail `exp(-3|dp| / 2 dz*)`. Meaningful only
/// when `dz* >> dp*` and trend following dominates the noise.
pub fn price_tail_ccdf(dp_abs: f64, dz_star: f64) -> f64 {
    (-dp_abs.abs() / price_decay_length(dz_star)).exp()
}

/// Superposition of exponential tails with decay lengths distributed as a
/// truncated power law, `Q(kappa) ~ kappa^(-m-1)` on `[kappa_min, kappa_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawMixture {
    pub m: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl PowerLawMixture {
    pub fn new(m: f64, kappa_min: f64, kappa_max: f64) -> Result<Self, KineticsError> {
        if !(m > 0.0 && kappa_min > 0.0 && kappa_max >= kappa_min && kappa_max.is_finite()) {
            return Err(KineticsError::InvalidMixture);
        }
        Ok(Self {
            m,
            kappa_min,
            kappa_max,
        })
    }

    pub fn ccdf(&self, dp_abs: f64) -> Result<f64, KineticsError> {
        let x = dp_abs.abs();
        if x == 0.0 {
            return Ok(1.0);
        }
        if self.kappa_max == self.kappa_min {
            return Ok((-x / self.kappa_min).exp());
        }
        let m = self.m;
        let (s0, s1) = (self.kappa_min.ln(), self.kappa_max.ln());
        // kappa = e^s, Q(kappa) dkappa ~ e^(-m s) ds; shift by s0 to keep the
        // integrand O(1).
        let raw = quad::integrate(
            |s| (-m * (s - s0)).exp() * (-x * (-s).exp()).exp(),
            s0,
            s1,
            QuadOptions::default(),
        )?;
        let norm = (1.0 - (-m * (s1 - s0)).exp()) / m;
        Ok(raw / norm)
    }

    /// Draws a decay length from the truncated power law.
    pub fn sample_kappa<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.kappa_max == self.kappa_min {
            return self.kappa_min;
        }
        let u: f64 = rng.random();
        let lo = self.kappa_min.powf(-self.m);
        let hi = self.kappa_max.powf(-self.m);
        (lo - u * (lo - hi)).powf(-1.0 / self.m)
    }

    /// Draws `|dp|` from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let kappa = self.sample_kappa(rng);
        let u: f64 = rng.random();
        -kappa * (1.0 - u).ln()
    }
}

pub fn powerlaw_mixture_ccdf(
    dp_abs: f64,
    m: f64,
    kappa_min: f64,
    kappa_max: f64,
) -> Result<f64, KineticsError> {
    PowerLawMixture::new(m, kappa_min, kappa_max)?.ccdf(dp_abs)
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

const CHUNKS: usize = 64;

/// Steps per `L^2 / sigma^2` for the barrier walkers.
const BARRIER_STEPS_PER_UNIT: f64 = 1.0e4;

fn chunk_sizes(total: usize) -> Vec<usize> {
    let chunks = CHUNKS.min(total.max(1));
    (0..chunks)
        .map(|k| total / chunks + usize::from(k < total % chunks))
        .collect()
}

/// Probability that a Brownian path from `x` to `y` over step `h` touched
/// the barrier `b` (both endpoints below it).
#[inline]
fn bridge_touch(b: f64, x: f64, y: f64, var: f64) -> f64 {
    (-2.0 * (b - x) * (b - y) / var).exp()
}

/// First passage of a walker from `r = 0` to `|r| = L/2`, sampled on a fine
/// grid with Brownian-bridge crossing detection between grid points.
fn first_passage(l: f64, sigma: f64, h: f64, rng: &mut RngStream) -> f64 {
    let half = l / 2.0;
    let sd = sigma * h.sqrt();
    let var = sigma * sigma * h;
    let (mut x, mut t) = (0.0f64, 0.0f64);
    loop {
        let g: f64 = rng.sample(StandardNormal);
        let y = x + sd * g;
        if y.abs() >= half {
            return t + 0.5 * h;
        }
        let p = bridge_touch(half, x, y, var) + bridge_touch(half, -x, -y, var);
        if p > 1e-12 && rng.open01() < p {
            return t + 0.5 * h;
        }
        x = y;
        t += h;
    }
}

/// Mean first-passage time of a Brownian particle started at the centre of
/// `(-L/2, L/2)`; the exact value is `L^2 / (4 sigma^2)`.
pub fn hopping_barrier_mfpt(l: f64, sigma: f64, rng: &RngStream, n_samples: usize) -> Estimate {
    let h = l * l / (sigma * sigma * BARRIER_STEPS_PER_UNIT);
    let sizes = chunk_sizes(n_samples);
    let partial = par::map_indices(sizes.len(), |k| {
        let mut stream = rng.substream(k as u64 + 1);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..sizes[k] {
            let t = first_passage(l, sigma, h, &mut stream);
            s += t;
            s2 += t * t;
        }
        (s, s2)
    });
    let (s, s2) = partial
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = n_samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Estimate {
        mean,
        stderr: (var / n).sqrt(),
        samples: n_samples,
    }
}

/// Time-averaged position density of a walker that hops back to `r = 0`
/// whenever it reaches `|r| = L/2`. Returns `n_bins` densities over
/// `[-L/2, L/2]`; `duration` is the total simulated time across walkers,
/// in units of `L^2 / sigma^2`.
pub fn hopping_barrier_stationary(
    l: f64,
    sigma: f64,
    rng: &RngStream,
    duration: f64,
    n_bins: usize,
) -> Vec<f64> {
    let h = l * l / (sigma * sigma * BARRIER_STEPS_PER_UNIT);
    let steps_total = (duration * BARRIER_STEPS_PER_UNIT).ceil() as usize;
    let sizes = chunk_sizes(steps_total);
    let half = l / 2.0;
    let width = l / n_bins as f64;
    let parts = par::map_indices(sizes.len(), |k| {
        let mut stream = rng.substream(k as u64 + 1);
        let mut counts = vec![0u64; n_bins];
        let sd = sigma * h.sqrt();
        let var = sigma * sigma * h;
        let mut x = 0.0f64;
        for _ in 0..sizes[k] {
            let g: f64 = stream.sample(StandardNormal);
            let y = x + sd * g;
            let touched = y.abs() >= half || {
                let p = bridge_touch(half, x, y, var) + bridge_touch(half, -x, -y, var);
                p > 1e-12 && stream.open01() < p
            };
            x = if touched { 0.0 } else { y };
            let bin = (((x + half) / width) as usize).min(n_bins - 1);
            counts[bin] += 1;
        }
        counts
    });
    let mut counts = vec![0u64; n_bins];
    for p in parts {
        for (c, v) in counts.iter_mut().zip(p) {
            *c += v;
        }
    }
    let total: u64 = counts.iter().sum();
    counts
        .into_iter()
        .map(|c| c as f64 / (total as f64 * width))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_pdf_edges() {
        assert_eq!(spread_pdf(0.0, 15.0).unwrap(), 0.0);
        assert!(spread_pdf(-1.0, 15.0).is_err());
    }

    #[test]
    fn spread_pdf_peaks_at_three_scales() {
        // d/dL [L^3 e^{-L/L*}] = 0  <=>  L = 3 L*; scan a fine grid.
        let l_star = 15.0;
        let (mut best, mut arg) = (0.0, 0.0);
        for k in 0..200_000 {
            let l = k as f64 * 1e-3;
            let v = spread_pdf(l, l_star).unwrap();
            if v > best {
                best = v;
                arg = l;
            }
        }
        assert!((arg - 45.0).abs() < 2e-3);
    }

    #[test]
    fn tent_values() {
        assert_eq!(tent_density(0.0, 10.0), 0.2);
        assert_eq!(tent_density(5.0, 10.0), 0.0);
        assert_eq!(tent_density(-5.0, 10.0), 0.0);
        assert_eq!(tent_density(7.0, 10.0), 0.0);
        let t = TentProfile { l: 10.0 };
        assert!((t.mass(-5.0, 5.0) - 1.0).abs() < 1e-15);
        assert!((t.mass(0.0, 5.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn profile_zero_at_origin_and_rejects_negative() {
        assert_eq!(avg_orderbook_profile(0.0, 15.0).unwrap(), 0.0);
        assert!(avg_orderbook_profile(-0.1, 15.0).is_err());
    }

    #[test]
    fn interval_law_basics() {
        assert_eq!(interval_ccdf(0.0, 5.0), 1.0);
        let tau_star = 5.0;
        let mut prev = 1.0;
        for k in 1..100 {
            let v = interval_ccdf(k as f64 * 0.3, tau_star);
            assert!(v < prev);
            prev = v;
        }
        let big = 40.0;
        let approx = 2.0 * (-1.5 * big / tau_star).exp();
        assert!((interval_ccdf(big, tau_star) / approx - 1.0).abs() < 1e-5);
    }

    #[test]
    fn interval_sampler_mean() {
        let law = IntervalLaw::new(4.0);
        let mut rng = RngStream::new(5);
        let n = 400_000;
        let m = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m / 4.0 - 1.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn tau_star_scaling() {
        assert_eq!(mean_transaction_interval(25, 1.0, 15.0), 27.0);
        assert_eq!(
            mean_transaction_interval(50, 1.0, 15.0) * 2.0,
            mean_transaction_interval(25, 1.0, 15.0)
        );
    }

    #[test]
    fn price_tail_values() {
        assert_eq!(price_tail_ccdf(0.0, 7.2), 1.0);
        assert!((price_decay_length(7.2) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn mixture_edge_cases() {
        let mix = PowerLawMixture::new(3.5, 2.0, 2.0).unwrap();
        assert!((mix.ccdf(3.0).unwrap() - (-1.5f64).exp()).abs() < 1e-15);
        assert_eq!(powerlaw_mixture_ccdf(0.0, 3.5, 1.0, 100.0).unwrap(), 1.0);
        assert!(PowerLawMixture::new(3.5, 2.0, 1.0).is_err());
        assert!(PowerLawMixture::new(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn mixture_kappa_sampler_within_bounds() {
        let mix = PowerLawMixture::new(3.5, 1.0, 1000.0).unwrap();
        let mut rng = RngStream::new(2);
        for _ in 0..10_000 {
            let k = mix.sample_kappa(&mut rng);
            assert!((1.0..=1000.0).contains(&k));
        }
    }

    #[test]
    fn mfpt_diffusive_scaling() {
        let rng = RngStream::new(9);
        let a = hopping_barrier_mfpt(2.0, 1.0, &rng, 20_000);
        let b = hopping_barrier_mfpt(2.0, 2.0, &rng, 20_000);
        assert!((a.mean / b.mean - 4.0).abs() < 0.2, "{} {}", a.mean, b.mean);
    }
}
