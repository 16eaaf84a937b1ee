//! Analyses applied to finished runs, shared by the recipe runner and the
//! acceptance harness, plus the analytic self-checks.

use crate::kinetics::{
    self, avg_orderbook_profile, avg_orderbook_profile_mass, hopping_barrier_mfpt,
    hopping_barrier_stationary, spread_pdf, tent_density, IntervalLaw, KineticsError,
    PowerLawMixture,
};
use crate::quad::{self, QuadOptions};
use crate::rng::RngStream;
use crate::stats::{
    curvature_exponential, empirical_ccdf, fit_exponential_decay, fit_powerlaw_tail,
    fit_tanh_response, ks_distance, ks_two_sample, moments, Ccdf, Curvature, ExponentialFit,
    FitRange, Moments, Origin, PowerLawFit, ProfileAccumulator, ProfileHistogram, StatsError,
    TanhFit, TanhFitOptions,
};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
}

impl From<quad::QuadError> for AnalysisError {
    fn from(e: quad::QuadError) -> Self {
        Self::Kinetics(e.into())
    }
}

/// Pooled order-book profile in each measured frame with its L1 distance to
/// the closed-form average profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileAnalysis {
    pub l_star: f64,
    pub frames: Vec<(ProfileHistogram, f64)>,
}

impl ProfileAnalysis {
    pub fn l1(&self, origin: Origin) -> Option<f64> {
        self.frames
            .iter()
            .find(|(h, _)| h.origin == origin)
            .map(|(_, d)| *d)
    }
}

/// Merges per-replica accumulators frame by frame.
pub fn profile_analysis(
    per_replica: Vec<Vec<ProfileAccumulator>>,
    l_star: f64,
) -> Result<ProfileAnalysis, AnalysisError> {
    let mut merged: Vec<ProfileAccumulator> = Vec::new();
    for accs in per_replica {
        if merged.is_empty() {
            merged = accs;
            continue;
        }
        for (m, a) in merged.iter_mut().zip(&accs) {
            m.merge(a)?;
        }
    }
    if merged.is_empty() {
        return Err(StatsError::Empty.into());
    }
    let mut frames = Vec::new();
    for acc in merged {
        let h = acc.finish()?;
        let d = h.l1_distance(|a, b| avg_orderbook_profile_mass(a, b, l_star))?;
        frames.push((h, d));
    }
    Ok(ProfileAnalysis { l_star, frames })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalAnalysis {
    pub n: usize,
    pub mean: f64,
    /// `tau*` of the reference law, when one applies.
    pub tau_star: Option<f64>,
    /// KS distance to the reference law.
    pub ks: Option<f64>,
    pub ccdf: Ccdf,
}

impl IntervalAnalysis {
    pub fn mean_ratio(&self) -> Option<f64> {
        self.tau_star.map(|t| self.mean / t)
    }
}

pub fn interval_analysis(
    intervals: &[f64],
    tau_star: Option<f64>,
) -> Result<IntervalAnalysis, AnalysisError> {
    let ccdf = empirical_ccdf(intervals, false)?;
    let m = moments(intervals);
    let ks = tau_star.map(|t| {
        let law = IntervalLaw::new(t);
        ks_distance(intervals, |x| law.cdf(x))
    });
    Ok(IntervalAnalysis {
        n: intervals.len(),
        mean: m.mean,
        tau_star,
        ks,
        ccdf,
    })
}

/// Probability window of the CCDF used for tail fits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailWindow {
    pub p_hi: f64,
    pub p_lo: f64,
}

impl Default for TailWindow {
    fn default() -> Self {
        Self {
            p_hi: 0.1,
            p_lo: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailAnalysis {
    /// Moments of the signed price movements.
    pub moments: Moments,
    /// CCDF of `|dp|`.
    pub ccdf: Ccdf,
    pub window: TailWindow,
    pub fit: Option<ExponentialFit>,
    pub curvature: Option<Curvature>,
    /// Decay length expected from the configuration.
    pub predicted_kappa: Option<f64>,
}

impl TailAnalysis {
    pub fn kappa_error(&self) -> Option<f64> {
        Some(self.fit?.kappa / self.predicted_kappa? - 1.0)
    }
}

pub fn tail_analysis(
    dps: &[f64],
    window: TailWindow,
    predicted_kappa: Option<f64>,
) -> Result<TailAnalysis, AnalysisError> {
    let abs: Vec<f64> = dps.iter().map(|d| d.abs()).collect();
    let ccdf = empirical_ccdf(&abs, false)?;
    let range = FitRange::by_probability(&ccdf, window.p_hi, window.p_lo);
    Ok(TailAnalysis {
        moments: moments(dps),
        fit: fit_exponential_decay(&ccdf, range).ok(),
        curvature: curvature_exponential(&ccdf, range),
        ccdf,
        window,
        predicted_kappa,
    })
}

pub fn response_analysis(
    pairs: &[(f64, f64)],
    opts: TanhFitOptions,
) -> Result<TanhFit, AnalysisError> {
    Ok(fit_tanh_response(pairs, opts)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureAnalysis {
    pub mixture: PowerLawMixture,
    pub x_min: f64,
    pub fit: PowerLawFit,
    /// Log-log slope of the exact mixture CCDF between `x_min` and ten
    /// times `x_min`.
    pub exact_exponent: f64,
    pub ccdf: Ccdf,
}

pub fn mixture_analysis(
    mixture: PowerLawMixture,
    n_samples: usize,
    x_min: f64,
    rng: &mut RngStream,
) -> Result<MixtureAnalysis, AnalysisError> {
    let samples: Vec<f64> = (0..n_samples).map(|_| mixture.sample(rng)).collect();
    let fit = fit_powerlaw_tail(&samples, x_min)?;
    let (a, b) = (x_min, 10.0 * x_min);
    let exact_exponent = -(mixture.ccdf(b)?.ln() - mixture.ccdf(a)?.ln()) / (b / a).ln();
    Ok(MixtureAnalysis {
        mixture,
        x_min,
        fit,
        exact_exponent,
        ccdf: empirical_ccdf(&samples, false)?,
    })
}

/// Two-sample comparison of a run against a reference run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub ks_interval: Option<f64>,
    pub ks_abs_dp: Option<f64>,
    /// Reference profile L1 divided by this run's, in the midprice frame.
    pub l1_improvement: Option<f64>,
}

pub fn compare_samples(
    intervals: (&[f64], &[f64]),
    dps: (&[f64], &[f64]),
) -> (Option<f64>, Option<f64>) {
    let ks = |a: &[f64], b: &[f64]| (!a.is_empty() && !b.is_empty()).then(|| ks_two_sample(a, b));
    let abs = |x: &[f64]| x.iter().map(|d| d.abs()).collect::<Vec<_>>();
    (
        ks(intervals.0, intervals.1),
        ks(&abs(dps.0), &abs(dps.1)),
    )
}

/// One analytic self-check.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    /// Measured discrepancy.
    pub value: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance
    }
}

/// Compares the closed forms with direct numerical evaluation: the average
/// profile against the spread-weighted tent convolution, the density
/// normalizations, the interval-law mean, and the hopping-barrier Monte
/// Carlo against its exact first-passage time and tent density.
pub fn oracle_checks(seed: u64) -> Result<Vec<OracleCheck>, AnalysisError> {
    let l_star = 15.0;
    let tight = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        ..QuadOptions::default()
    };
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let r = 0.3 + k as f64 * 0.9;
        // The tent of spread L sits on (0, L) in ask depth.
        let conv = quad::integrate_to_infinity(
            |l| {
                if l <= r {
                    0.0
                } else {
                    spread_pdf(l, l_star).unwrap_or(0.0) * tent_density(r - l / 2.0, l)
                }
            },
            r,
            l_star,
            tight,
        )?;
        worst = worst.max((avg_orderbook_profile(r, l_star)? - conv).abs());
    }
    checks.push(OracleCheck {
        name: "profile_vs_convolution",
        value: worst,
        tolerance: 1e-8,
    });

    let spread_norm =
        quad::integrate_to_infinity(|l| spread_pdf(l, l_star).unwrap_or(0.0), 0.0, l_star, tight)?;
    checks.push(OracleCheck {
        name: "spread_normalization",
        value: (spread_norm - 1.0).abs(),
        tolerance: 1e-8,
    });
    let l = 7.0;
    let tent_norm = quad::integrate(|r| tent_density(r, l), -l / 2.0, 0.0, tight)?
        + quad::integrate(|r| tent_density(r, l), 0.0, l / 2.0, tight)?;
    checks.push(OracleCheck {
        name: "tent_normalization",
        value: (tent_norm - 1.0).abs(),
        tolerance: 1e-8,
    });

    let tau_star = 6.75;
    let law = IntervalLaw::new(tau_star);
    let mean = quad::integrate_to_infinity(|t| law.ccdf(t), 0.0, tau_star, tight)?;
    checks.push(OracleCheck {
        name: "interval_mean",
        value: (mean / tau_star - 1.0).abs(),
        tolerance: 1e-8,
    });

    let rng = RngStream::new(seed);
    let (l, sigma) = (2.0, 1.0);
    let mfpt = hopping_barrier_mfpt(l, sigma, &rng.substream(1), 20_000);
    checks.push(OracleCheck {
        name: "barrier_mfpt",
        value: (mfpt.mean / (l * l / (4.0 * sigma * sigma)) - 1.0).abs(),
        tolerance: 0.02,
    });
    let n_bins = 40;
    let dens = hopping_barrier_stationary(l, sigma, &rng.substream(2), 2_000.0, n_bins);
    let w = l / n_bins as f64;
    let l1: f64 = dens
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let a = -l / 2.0 + k as f64 * w;
            (d * w - kinetics::TentProfile { l }.mass(a, a + w)).abs()
        })
        .sum();
    checks.push(OracleCheck {
        name: "barrier_stationary_tent",
        value: l1,
        tolerance: 0.02,
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn exponential_tail_recovered() {
        let mut rng = RngStream::new(4);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| {
                let e = -4.8 * rng.open01().ln();
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            })
            .collect();
        let t = tail_analysis(&xs, TailWindow::default(), Some(4.8)).unwrap();
        assert!(t.kappa_error().unwrap().abs() < 0.05);
        assert!(t.curvature.unwrap().consistent);
        assert!(t.moments.skewness.abs() < 0.1);
    }

    #[test]
    fn interval_law_samples_pass_ks() {
        let law = IntervalLaw::new(2.0);
        let mut rng = RngStream::new(5);
        let xs: Vec<f64> = (0..20_000).map(|_| law.sample(&mut rng)).collect();
        let a = interval_analysis(&xs, Some(2.0)).unwrap();
        assert!(a.ks.unwrap() < 0.015);
        assert!((a.mean_ratio().unwrap() - 1.0).abs() < 0.03);
    }

    #[test]
    fn oracle_checks_pass() {
        for c in oracle_checks(1).unwrap() {
            assert!(c.passed(), "{} {} > {}", c.name, c.value, c.tolerance);
        }
    }

    #[test]
    fn identical_samples_compare_equal() {
        let xs = [1.0, 2.0, 3.0];
        let (a, b) = compare_samples((&xs, &xs), (&xs, &[]));
        assert_eq!(a, Some(0.0));
        assert_eq!(b, None);
    }
}
