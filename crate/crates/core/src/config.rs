//! Model parameters for the microscopic simulation and their validation.

use std::fmt;

use serde::Serialize;
use toml::{Table, Value};

/// Default integration step as a fraction of `L*^2 / (N sigma^2)`.
pub const DEFAULT_DT_FRACTION: f64 = 1.0e-2;

/// Default warmup, in transactions per trader.
pub const DEFAULT_WARMUP_PER_TRADER: u64 = 10;

/// One violated constraint, reported with the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigError {
    pub violations: Vec<FieldError>,
}

impl ConfigError {
    pub fn single(field: &str, message: impl Into<String>) -> Self {
        Self {
            violations: vec![FieldError {
                field: field.to_string(),
                message: message.into(),
            }],
        }
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

/// Validated parameters of the trend-following trader model.
///
/// `c` and `tau_star` are derived: `tau_star = 3 L*^2 / (N sigma^2)` and
/// `c = dz_star / tau_star`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n_traders: usize,
    /// Spread scale L* (tpip).
    pub l_star: f64,
    /// Trend saturation scale (tpip).
    pub dp_star: f64,
    /// Mean trend displacement per mean transaction interval (tpip).
    pub dz_star: f64,
    /// Noise scale (tpip per sqrt time).
    pub sigma: f64,
    pub dt: f64,
    /// Mean interval between requotes in the Poisson variant.
    pub dt_can: f64,
    pub n_transactions: u64,
    pub seed: u64,
    pub warmup_transactions: u64,
    tau_star: f64,
    c: f64,
}

impl ExperimentConfig {
    /// Builds a config with the default `dt`, `dt_can` and warmup.
    pub fn new(
        n_traders: usize,
        l_star: f64,
        dp_star: f64,
        dz_star: f64,
        sigma: f64,
        n_transactions: u64,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let mut t = Table::new();
        t.insert("N".into(), Value::Integer(n_traders as i64));
        t.insert("L_star".into(), Value::Float(l_star));
        t.insert("dp_star".into(), Value::Float(dp_star));
        t.insert("dz_star".into(), Value::Float(dz_star));
        t.insert("sigma".into(), Value::Float(sigma));
        t.insert("n_transactions".into(), Value::Integer(n_transactions as i64));
        t.insert("seed".into(), Value::Integer(seed as i64));
        validate_config(&t)
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    /// Trend-following strength (tpip per time).
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Changes the trader count and recomputes the derived quantities. `dt`
    /// and `dt_can` keep their ratio to `tau_star`.
    pub fn with_traders(&self, n: usize) -> Result<Self, ConfigError> {
        if n < 2 {
            return Err(ConfigError::single("N", "N<2"));
        }
        let tau_star = mean_interval(n, self.l_star, self.sigma);
        let scale = tau_star / self.tau_star;
        Ok(Self {
            n_traders: n,
            dt: self.dt * scale,
            dt_can: self.dt_can * scale,
            tau_star,
            c: self.dz_star / tau_star,
            ..self.clone()
        })
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self, ConfigError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ConfigError::single("dt", "must be positive"));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn with_dt_can(mut self, dt_can: f64) -> Result<Self, ConfigError> {
        if !(dt_can > 0.0 && dt_can.is_finite()) {
            return Err(ConfigError::single("dt_can", "must be positive"));
        }
        self.dt_can = dt_can;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_transactions(mut self, n: u64, warmup: u64) -> Self {
        self.n_transactions = n;
        self.warmup_transactions = warmup;
        self
    }
}

fn mean_interval(n: usize, l_star: f64, sigma: f64) -> f64 {
    3.0 * l_star * l_star / (n as f64 * sigma * sigma)
}

struct Reader<'a> {
    raw: &'a Table,
    errors: Vec<FieldError>,
}

impl Reader<'_> {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn float(&mut self, field: &str) -> Option<f64> {
        match self.raw.get(field) {
            None => None,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(other) => {
                self.fail(field, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn integer(&mut self, field: &str) -> Option<i64> {
        match self.raw.get(field) {
            None => None,
            Some(Value::Integer(i)) => Some(*i),
            Some(other) => {
                self.fail(field, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn required_positive(&mut self, field: &str) -> f64 {
        match self.float(field) {
            None if !self.raw.contains_key(field) => {
                self.fail(field, "missing field");
                f64::NAN
            }
            None => f64::NAN,
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                self.fail(field, format!("must be positive, got {x}"));
                f64::NAN
            }
            Some(x) => x,
        }
    }
}

/// Parses and validates a raw key-value parameter table. All violations are
/// collected before returning.
pub fn validate_config(raw: &Table) -> Result<ExperimentConfig, ConfigError> {
    let mut r = Reader {
        raw,
        errors: Vec::new(),
    };

    let n_traders = match r.integer("N") {
        None if !raw.contains_key("N") => {
            r.fail("N", "missing field");
            0
        }
        None => 0,
        Some(n) if n < 2 => {
            r.fail("N", "N<2");
            0
        }
        Some(n) => n as usize,
    };
    let l_star = r.required_positive("L_star");
    let dp_star = r.required_positive("dp_star");
    let sigma = r.required_positive("sigma");
    let dz_star = match r.float("dz_star") {
        None if !raw.contains_key("dz_star") => {
            r.fail("dz_star", "missing field");
            f64::NAN
        }
        None => f64::NAN,
        Some(x) if !(x >= 0.0 && x.is_finite()) => {
            r.fail("dz_star", format!("must be non-negative, got {x}"));
            f64::NAN
        }
        Some(x) => x,
    };
    let n_transactions = match r.integer("n_transactions") {
        None if !raw.contains_key("n_transactions") => {
            r.fail("n_transactions", "missing field");
            0
        }
        None => 0,
        Some(n) if n < 1 => {
            r.fail("n_transactions", "must be at least 1");
            0
        }
        Some(n) => n as u64,
    };
    let seed = match r.integer("seed") {
        None if !raw.contains_key("seed") => {
            r.fail("seed", "missing field");
            0
        }
        None => 0,
        Some(s) => s as u64,
    };
    let warmup_transactions = match r.integer("warmup_transactions") {
        None => DEFAULT_WARMUP_PER_TRADER * n_traders as u64,
        Some(w) if w < 0 => {
            r.fail("warmup_transactions", "must be non-negative");
            0
        }
        Some(w) => w as u64,
    };
    let dt = r.float("dt");
    let dt_can = r.float("dt_can");

    let tau_star = mean_interval(n_traders.max(2), l_star, sigma);
    let dt = match dt {
        None => DEFAULT_DT_FRACTION * tau_star / 3.0,
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            r.fail("dt", format!("must be positive, got {x}"));
            f64::NAN
        }
        Some(x) => x,
    };
    let dt_can = match dt_can {
        None => tau_star / 4.0,
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            r.fail("dt_can", format!("must be positive, got {x}"));
            f64::NAN
        }
        Some(x) => x,
    };

    let known = [
        "N",
        "L_star",
        "dp_star",
        "dz_star",
        "sigma",
        "dt",
        "dt_can",
        "n_transactions",
        "seed",
        "warmup_transactions",
    ];
    for key in raw.keys() {
        if !known.contains(&key.as_str()) {
            r.fail(key, "unknown field");
        }
    }

    if !r.errors.is_empty() {
        return Err(ConfigError {
            violations: r.errors,
        });
    }

    Ok(ExperimentConfig {
        n_traders,
        l_star,
        dp_star,
        dz_star,
        sigma,
        dt,
        dt_can,
        n_transactions,
        seed,
        warmup_transactions,
        tau_star,
        c: dz_star / tau_star,
    })
}
