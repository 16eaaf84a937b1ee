//! Tick-time iteration of the price movement,
//! `dp(T+1) = c tau(T) tanh(dp(T) / dp*) + zeta(T)`, with `tau` drawn from
//! the transaction-interval law and Gaussian `zeta` independent of `tau`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use toml::{Table, Value};

use crate::config::{ConfigError, FieldError};
use crate::kinetics::IntervalLaw;
use crate::rng::RngStream;

/// Ticks dropped before recording by default.
pub const DEFAULT_LANGEVIN_WARMUP: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LangevinConfig {
    /// Trend-following strength (tpip per time).
    pub c: f64,
    pub dp_star: f64,
    #[serde(serialize_with = "serialize_law")]
    pub tau_law: IntervalLaw,
    /// Standard deviation of `zeta` (tpip).
    pub zeta_scale: f64,
    pub n_ticks: u64,
    pub seed: u64,
    pub warmup_ticks: u64,
}

fn serialize_law<S: serde::Serializer>(law: &IntervalLaw, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(law.tau_star)
}

impl LangevinConfig {
    /// `c = dz_star / tau_star`.
    pub fn new(
        dz_star: f64,
        dp_star: f64,
        tau_star: f64,
        zeta_scale: f64,
        n_ticks: u64,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let mut t = Table::new();
        t.insert("dz_star".into(), Value::Float(dz_star));
        t.insert("dp_star".into(), Value::Float(dp_star));
        t.insert("tau_star".into(), Value::Float(tau_star));
        t.insert("zeta_scale".into(), Value::Float(zeta_scale));
        t.insert("n_ticks".into(), Value::Integer(n_ticks as i64));
        t.insert("seed".into(), Value::Integer(seed as i64));
        validate_langevin(&t)
    }

    pub fn dz_star(&self) -> f64 {
        self.c * self.tau_law.tau_star
    }
}

/// Validates a raw table with keys `dz_star`, `dp_star`, `tau_star`,
/// `zeta_scale`, `n_ticks`, `seed` and optional `warmup_ticks`.
pub fn validate_langevin(raw: &Table) -> Result<LangevinConfig, ConfigError> {
    let mut errors = Vec::new();
    let mut fail = |field: &str, msg: String| {
        errors.push(FieldError {
            field: field.into(),
            message: msg,
        })
    };
    let num = |field: &str, min_exclusive: Option<f64>, fail: &mut dyn FnMut(&str, String)| {
        match raw.get(field) {
            None => {
                fail(field, "missing field".into());
                f64::NAN
            }
            Some(v) => {
                let x = match v {
                    Value::Float(x) => *x,
                    Value::Integer(i) => *i as f64,
                    other => {
                        fail(field, format!("expected a number, found {}", other.type_str()));
                        return f64::NAN;
                    }
                };
                let ok = match min_exclusive {
                    Some(m) => x > m,
                    None => x >= 0.0,
                } && x.is_finite();
                if !ok {
                    let what = if min_exclusive.is_some() {
                        "positive"
                    } else {
                        "non-negative"
                    };
                    fail(field, format!("must be {what}, got {x}"));
                }
                x
            }
        }
    };
    let dz_star = num("dz_star", None, &mut fail);
    let dp_star = num("dp_star", Some(0.0), &mut fail);
    let tau_star = num("tau_star", Some(0.0), &mut fail);
    let zeta_scale = num("zeta_scale", None, &mut fail);
    let int = |field: &str, required: bool, fail: &mut dyn FnMut(&str, String)| match raw.get(field) {
        None if required => {
            fail(field, "missing field".into());
            None
        }
        None => None,
        Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(other) => {
            fail(field, format!("expected a non-negative integer, found {other}"));
            None
        }
    };
    let n_ticks = int("n_ticks", true, &mut fail);
    let seed = int("seed", true, &mut fail);
    let warmup = int("warmup_ticks", false, &mut fail);
    if n_ticks == Some(0) {
        fail("n_ticks", "must be at least 1".into());
    }
    for key in raw.keys() {
        if ![
            "dz_star",
            "dp_star",
            "tau_star",
            "zeta_scale",
            "n_ticks",
            "seed",
            "warmup_ticks",
        ]
        .contains(&key.as_str())
        {
            fail(key, "unknown field".into());
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError { violations: errors });
    }
    Ok(LangevinConfig {
        c: dz_star / tau_star,
        dp_star,
        tau_law: IntervalLaw::new(tau_star),
        zeta_scale,
        n_ticks: n_ticks.unwrap_or(1),
        seed: seed.unwrap_or(0),
        warmup_ticks: warmup.unwrap_or(DEFAULT_LANGEVIN_WARMUP),
    })
}

/// One tick of the iteration.
#[inline]
pub fn langevin_step(dp: f64, tau: f64, zeta: f64, config: &LangevinConfig) -> f64 {
    config.c * tau * (dp / config.dp_star).tanh() + zeta
}

/// Runs the chain from `dp = 0` and returns `n_ticks` movements after the
/// warmup.
pub fn run_langevin(config: &LangevinConfig, rng: &mut RngStream) -> Vec<f64> {
    let mut dp = 0.0;
    let mut out = Vec::with_capacity(config.n_ticks as usize);
    for k in 0..config.warmup_ticks + config.n_ticks {
        let tau = config.tau_law.sample(rng);
        let g: f64 = rng.sample(StandardNormal);
        dp = langevin_step(dp, tau, config.zeta_scale * g, config);
        if k >= config.warmup_ticks {
            out.push(dp);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_distance, moments};

    fn cfg(dz: f64, zeta: f64) -> LangevinConfig {
        LangevinConfig::new(dz, 3.0, 6.75, zeta, 200_000, 9).unwrap()
    }

    #[test]
    fn step_fixed_point_and_saturation() {
        let c = cfg(7.2, 1.0);
        assert_eq!(langevin_step(0.0, 5.0, 0.0, &c), 0.0);
        assert!((langevin_step(1e9, 5.0, 0.0, &c) - c.c * 5.0).abs() < 1e-12);
        let free = cfg(0.0, 1.0);
        assert_eq!(langevin_step(4.0, 5.0, 0.7, &free), 0.7);
    }

    #[test]
    fn small_trend_is_linear() {
        let c = cfg(7.2, 1.0);
        for &x in &[0.01, 0.1, 0.299] {
            let exact = langevin_step(x, 2.0, 0.0, &c);
            let linear = c.c * 2.0 * x / c.dp_star;
            assert!((exact / linear - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn no_trend_reproduces_noise() {
        let c = cfg(0.0, 2.0);
        let xs = run_langevin(&c, &mut RngStream::new(1));
        let normal_cdf = |x: f64| {
            // Abramowitz-Stegun 7.1.26 erf approximation, error < 1.5e-7.
            let z = x / (2.0 * 2f64.sqrt());
            let t = 1.0 / (1.0 + 0.327_591_1 * z.abs());
            let poly = t
                * (0.254_829_592
                    + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
            let erf = 1.0 - poly * (-z * z).exp();
            0.5 * (1.0 + erf.copysign(z))
        };
        assert!(ks_distance(&xs, normal_cdf) < 0.02);
    }

    #[test]
    fn reflection_symmetric() {
        let xs = run_langevin(&cfg(7.2, 1.5), &mut RngStream::new(2));
        let m = moments(&xs);
        assert!(m.skewness.abs() < 0.05, "{}", m.skewness);
    }

    #[test]
    fn validation_collects_fields() {
        let t: Table = toml::from_str("dz_star = -1\ndp_star = 0\nseed = 1\nfoo = 2").unwrap();
        let e = validate_langevin(&t).unwrap_err();
        for f in ["dz_star", "dp_star", "tau_star", "zeta_scale", "n_ticks", "foo"] {
            assert!(e.mentions(f), "{f}");
        }
    }
}
