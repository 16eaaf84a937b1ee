//! Experiment recipes: a TOML file naming one model, its parameters, the
//! measurements to take and how many seeded replicas to pool.
//!
//! ```toml
//! name = "example"
//! model = "microsim-continuous"  # microsim-poisson | langevin | ziob | powerlaw-mixture | oracle
//! replica_count = 4
//! records = "ticks"              # none | ticks | ticks+book
//! dt_halving = false            # microsim: repeat with dt / 2 into dt_half/
//! restart_on_drain = false      # ziob: continue on a fresh book when a side empties
//! output_dir = "out/example"     # default output/<name>
//!
//! [params]                       # model parameters; `seed` is the base seed
//! N = 25
//! L_star = 15.0
//! dp_star = 4.5
//! dz_star = 3.15
//! sigma = 1.0
//! n_transactions = 10000
//! seed = 1
//!
//! [profile]
//! interval_tau = 0.5
//!
//! [intervals]
//! [price_tail]
//! [layered]                      # bin_width, max_depth
//! [response]                     # bin_width, min_count
//!
//! [reference]                    # optional second run to compare with
//! model = "microsim-poisson"
//! params = { dt_can = 0.1 }
//! ```

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::config::{validate_config, ConfigError, ExperimentConfig, FieldError};
use crate::experiments::{
    compare_samples, interval_analysis, mixture_analysis, oracle_checks, profile_analysis,
    response_analysis, tail_analysis, AnalysisError, Comparison, IntervalAnalysis,
    MixtureAnalysis, OracleCheck, ProfileAnalysis, TailAnalysis, TailWindow,
};
use crate::kinetics::{price_decay_length, PowerLawMixture};
use crate::langevin::{run_langevin, validate_langevin, LangevinConfig};
use crate::microsim::{
    run_replicas, LayeredProbe, Probes, SimError, SnapshotProbe, Variant,
};
use crate::par;
use crate::records::TsvSink;
use crate::rng::RngStream;
use crate::stats::{LayeredReport, LayeredSamples, Origin, StatsError, TanhFit, TanhFitOptions};
use crate::ziob::{
    validate_ziob, ziob_run, ziob_steady_relations, ZiobConfig, ZiobError, ZiobOutput, ZiobProbes,
};

/// Recipes shipped with the crate, by name.
pub const BUILTIN_RECIPES: &[(&str, &str)] = &[
    ("fig_b4_profile", include_str!("../../../recipes/fig_b4_profile.toml")),
    ("fig_b4_profile_n100", include_str!("../../../recipes/fig_b4_profile_n100.toml")),
    ("fig_b5_price_tail", include_str!("../../../recipes/fig_b5_price_tail.toml")),
    ("langevin_price_tail", include_str!("../../../recipes/langevin_price_tail.toml")),
    ("layered_poisson", include_str!("../../../recipes/layered_poisson.toml")),
    ("powerlaw_mixture", include_str!("../../../recipes/powerlaw_mixture.toml")),
    ("ziob_realistic", include_str!("../../../recipes/ziob_realistic.toml")),
    ("ziob_adjusted", include_str!("../../../recipes/ziob_adjusted.toml")),
    ("oracles", include_str!("../../../recipes/oracles.toml")),
    ("poisson_equivalence", include_str!("../../../recipes/poisson_equivalence.toml")),
    ("tanh_response", include_str!("../../../recipes/tanh_response.toml")),
];

pub fn builtin_recipe(name: &str) -> Option<&'static str> {
    BUILTIN_RECIPES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    MicrosimContinuous,
    MicrosimPoisson,
    Langevin,
    Ziob,
    PowerLawMixture,
    Oracle,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::MicrosimContinuous,
        ModelKind::MicrosimPoisson,
        ModelKind::Langevin,
        ModelKind::Ziob,
        ModelKind::PowerLawMixture,
        ModelKind::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::MicrosimContinuous => "microsim-continuous",
            ModelKind::MicrosimPoisson => "microsim-poisson",
            ModelKind::Langevin => "langevin",
            ModelKind::Ziob => "ziob",
            ModelKind::PowerLawMixture => "powerlaw-mixture",
            ModelKind::Oracle => "oracle",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub mixture: PowerLawMixture,
    pub n_samples: usize,
    pub x_min: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Microsim(Variant, ExperimentConfig),
    Langevin(LangevinConfig),
    Ziob(ZiobConfig),
    Mixture(MixtureParams),
    Oracle { seed: u64 },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Microsim(Variant::Continuous, _) => ModelKind::MicrosimContinuous,
            ModelSpec::Microsim(Variant::Poisson, _) => ModelKind::MicrosimPoisson,
            ModelSpec::Langevin(_) => ModelKind::Langevin,
            ModelSpec::Ziob(_) => ModelKind::Ziob,
            ModelSpec::Mixture(_) => ModelKind::PowerLawMixture,
            ModelSpec::Oracle { .. } => ModelKind::Oracle,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Microsim(_, c) => c.seed,
            ModelSpec::Langevin(c) => c.seed,
            ModelSpec::Ziob(c) => c.seed,
            ModelSpec::Mixture(m) => m.seed,
            ModelSpec::Oracle { seed } => *seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordMode {
    None,
    Ticks,
    TicksAndBook,
}

/// Order-book profile snapshots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileSpec {
    /// Snapshot cadence in model time units.
    pub interval: f64,
    pub bin_width: f64,
    pub lo: f64,
    pub hi: f64,
    pub min_snapshots: u64,
    /// Spread scale of the closed-form profile compared against; defaults
    /// to the model's own.
    pub l_star: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeSpec {
    pub profile: Option<ProfileSpec>,
    pub intervals: bool,
    pub price_tail: Option<TailWindow>,
    pub layered: Option<LayeredProbe>,
    pub response: Option<TanhFitOptions>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recipe {
    pub name: String,
    pub description: String,
    pub model: ModelSpec,
    pub replicas: usize,
    pub output_dir: Option<PathBuf>,
    pub records: RecordMode,
    pub dt_halving: bool,
    /// ZI-OB only: restart a replica whose book side empties.
    pub restart_on_drain: bool,
    pub probes: ProbeSpec,
    pub reference: Option<Box<Recipe>>,
}

impl Recipe {
    pub fn base_seed(&self) -> u64 {
        self.model.seed()
    }

    pub fn replica_seeds(&self) -> Vec<u64> {
        (0..self.replicas as u64)
            .map(|r| RngStream::replica_seed(self.base_seed(), r))
            .collect()
    }

    /// The same recipe with the microsim integration step halved.
    pub fn with_halved_dt(&self) -> Option<Recipe> {
        let ModelSpec::Microsim(v, cfg) = &self.model else {
            return None;
        };
        let cfg = cfg.clone().with_dt(cfg.dt / 2.0).ok()?;
        Some(Recipe {
            model: ModelSpec::Microsim(*v, cfg),
            dt_halving: false,
            reference: None,
            ..self.clone()
        })
    }
}

/// Parses and validates recipe text. All violations are collected, with
/// field names qualified by their section.
pub fn parse_recipe(text: &str) -> Result<Recipe, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigError::single("recipe", format!("malformed TOML: {}", e.message()))
    })?;
    parse_table(&table, None)
}

pub fn load_recipe(path: &Path) -> Result<Recipe, RunError> {
    let text = fs::read_to_string(path)?;
    Ok(parse_recipe(&text)?)
}

struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
    }

    fn absorb(&mut self, prefix: &str, e: ConfigError) {
        for v in e.violations {
            self.push(format!("{prefix}.{}", v.field), v.message);
        }
    }
}

fn number(t: &Table, section: &str, key: &str, errs: &mut Errors) -> Option<f64> {
    match t.get(key)? {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        v => {
            errs.push(
                qualify(section, key),
                format!("expected a number, found {}", v.type_str()),
            );
            None
        }
    }
}

fn positive(t: &Table, section: &str, key: &str, default: f64, errs: &mut Errors) -> f64 {
    match number(t, section, key, errs) {
        None => default,
        Some(x) if x > 0.0 && x.is_finite() => x,
        Some(x) => {
            errs.push(qualify(section, key), format!("must be positive, got {x}"));
            default
        }
    }
}

fn qualify(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn reject_unknown(t: &Table, section: &str, known: &[&str], errs: &mut Errors) {
    for key in t.keys() {
        if !known.contains(&key.as_str()) {
            errs.push(qualify(section, key), "unknown field");
        }
    }
}

/// Reads an optional probe section: absent, `false`, `true` or a table.
fn section<'a>(t: &'a Table, key: &str, errs: &mut Errors) -> Option<Option<&'a Table>> {
    match t.get(key)? {
        Value::Table(s) => Some(Some(s)),
        Value::Boolean(true) => Some(None),
        Value::Boolean(false) => None,
        v => {
            errs.push(key, format!("expected a table or boolean, found {}", v.type_str()));
            None
        }
    }
}

const TOP_KEYS: [&str; 15] = [
    "name",
    "restart_on_drain",
    "description",
    "model",
    "replica_count",
    "output_dir",
    "records",
    "dt_halving",
    "params",
    "profile",
    "intervals",
    "price_tail",
    "layered",
    "response",
    "reference",
];

fn parse_table(t: &Table, base: Option<(&Table, &str)>) -> Result<Recipe, ConfigError> {
    let mut errs = Errors(Vec::new());
    reject_unknown(t, "", &TOP_KEYS, &mut errs);

    let string = |key: &str, errs: &mut Errors| match t.get(key) {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(v) => {
            errs.push(key, format!("expected a string, found {}", v.type_str()));
            None
        }
    };
    let name = string("name", &mut errs)
        .or_else(|| base.map(|_| "reference".to_string()))
        .unwrap_or_else(|| {
            errs.push("name", "missing field");
            String::new()
        });
    if !name.is_empty() && (name.contains(['/', '\\']) || name.starts_with('.')) {
        errs.push("name", "must be a plain file name");
    }
    let description = string("description", &mut errs).unwrap_or_default();
    let model_label = string("model", &mut errs).or_else(|| base.map(|(_, m)| m.to_string()));
    let kind = match model_label.as_deref() {
        None => {
            errs.push("model", "missing field");
            None
        }
        Some(s) => ModelKind::parse(s).or_else(|| {
            let all: Vec<_> = ModelKind::ALL.iter().map(|m| m.label()).collect();
            errs.push("model", format!("unknown model {s:?}; expected one of {}", all.join(", ")));
            None
        }),
    };

    let replicas = match t.get("replica_count") {
        None => 1,
        Some(Value::Integer(n)) if *n >= 1 => *n as usize,
        Some(v) => {
            errs.push("replica_count", format!("must be a positive integer, got {v}"));
            1
        }
    };
    let output_dir = string("output_dir", &mut errs).map(PathBuf::from);
    let records = match string("records", &mut errs).as_deref() {
        None | Some("ticks") => RecordMode::Ticks,
        Some("none") => RecordMode::None,
        Some("ticks+book") => RecordMode::TicksAndBook,
        Some(s) => {
            errs.push("records", format!("expected none, ticks or ticks+book, got {s:?}"));
            RecordMode::Ticks
        }
    };
    let dt_halving = match t.get("dt_halving") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(v) => {
            errs.push("dt_halving", format!("expected a boolean, found {}", v.type_str()));
            false
        }
    };

    let restart_on_drain = match t.get("restart_on_drain") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(v) => {
            errs.push("restart_on_drain", format!("expected a boolean, found {}", v.type_str()));
            false
        }
    };
    if restart_on_drain && kind.is_some_and(|k| k != ModelKind::Ziob) {
        errs.push("restart_on_drain", "only applies to the ziob model");
    }

    // Reference params are overrides on top of the base params.
    let own_params = match t.get("params") {
        None => Table::new(),
        Some(Value::Table(p)) => p.clone(),
        Some(v) => {
            errs.push("params", format!("expected a table, found {}", v.type_str()));
            Table::new()
        }
    };
    let params = match base {
        Some((b, _)) => {
            let mut merged = b.clone();
            merged.extend(own_params);
            merged
        }
        None => own_params,
    };
    let model = kind.and_then(|k| match build_model(k, &params) {
        Ok(m) => Some(m),
        Err(e) => {
            errs.absorb("params", e);
            None
        }
    });

    let probes = parse_probes(t, kind, &mut errs);
    if dt_halving && !matches!(kind, Some(ModelKind::MicrosimContinuous | ModelKind::MicrosimPoisson)) {
        errs.push("dt_halving", "only applies to microsim models");
    }

    let reference = match (t.get("reference"), base) {
        (None, _) => None,
        (Some(_), Some(_)) => {
            errs.push("reference.reference", "references cannot nest");
            None
        }
        (Some(Value::Table(r)), None) => {
            let mut sub = r.clone();
            let inherited = [
                "profile",
                "intervals",
                "price_tail",
                "layered",
                "response",
                "replica_count",
                "records",
                "restart_on_drain",
            ];
            for key in inherited {
                if let (Some(v), false) = (t.get(key), sub.contains_key(key)) {
                    sub.insert(key.into(), v.clone());
                }
            }
            match parse_table(&sub, Some((&params, model_label.as_deref().unwrap_or("")))) {
                Ok(r) => Some(Box::new(r)),
                Err(e) => {
                    errs.absorb("reference", e);
                    None
                }
            }
        }
        (Some(v), None) => {
            errs.push("reference", format!("expected a table, found {}", v.type_str()));
            None
        }
    };

    if !errs.0.is_empty() {
        return Err(ConfigError { violations: errs.0 });
    }
    Ok(Recipe {
        name,
        description,
        model: model.expect("model validated"),
        replicas,
        output_dir,
        records,
        dt_halving,
        restart_on_drain,
        probes,
        reference,
    })
}

fn build_model(kind: ModelKind, params: &Table) -> Result<ModelSpec, ConfigError> {
    Ok(match kind {
        ModelKind::MicrosimContinuous => ModelSpec::Microsim(Variant::Continuous, validate_config(params)?),
        ModelKind::MicrosimPoisson => ModelSpec::Microsim(Variant::Poisson, validate_config(params)?),
        ModelKind::Langevin => ModelSpec::Langevin(validate_langevin(params)?),
        ModelKind::Ziob => ModelSpec::Ziob(validate_ziob(params)?),
        ModelKind::PowerLawMixture => ModelSpec::Mixture(mixture_params(params)?),
        ModelKind::Oracle => {
            let mut errs = Errors(Vec::new());
            reject_unknown(params, "", &["seed"], &mut errs);
            let seed = match params.get("seed") {
                Some(Value::Integer(s)) => *s as u64,
                None => 1,
                Some(v) => {
                    errs.push("seed", format!("expected an integer, found {}", v.type_str()));
                    0
                }
            };
            if !errs.0.is_empty() {
                return Err(ConfigError { violations: errs.0 });
            }
            ModelSpec::Oracle { seed }
        }
    })
}

fn mixture_params(p: &Table) -> Result<MixtureParams, ConfigError> {
    let mut errs = Errors(Vec::new());
    reject_unknown(p, "", &["m", "kappa_min", "kappa_max", "n_samples", "x_min", "seed"], &mut errs);
    let req = |key: &str, errs: &mut Errors| {
        if !p.contains_key(key) {
            errs.push(key, "missing field");
        }
        positive(p, "", key, f64::NAN, errs)
    };
    let m = req("m", &mut errs);
    let kappa_min = req("kappa_min", &mut errs);
    let kappa_max = req("kappa_max", &mut errs);
    let x_min = req("x_min", &mut errs);
    let n_samples = req("n_samples", &mut errs);
    let seed = match p.get("seed") {
        Some(Value::Integer(s)) => *s as u64,
        _ => {
            errs.push("seed", "missing or non-integer field");
            0
        }
    };
    if !errs.0.is_empty() {
        return Err(ConfigError { violations: errs.0 });
    }
    let mixture = PowerLawMixture::new(m, kappa_min, kappa_max)
        .map_err(|e| ConfigError::single("kappa_max", e.to_string()))?;
    Ok(MixtureParams {
        mixture,
        n_samples: n_samples as usize,
        x_min,
        seed,
    })
}

fn parse_probes(t: &Table, kind: Option<ModelKind>, errs: &mut Errors) -> ProbeSpec {
    let empty = Table::new();
    let mut probes = ProbeSpec::default();
    let microsim = matches!(kind, Some(ModelKind::MicrosimContinuous | ModelKind::MicrosimPoisson));
    let ziob = kind == Some(ModelKind::Ziob);
    // With an unknown model only the probe fields themselves are checked.
    let allowed = |probe: &str, ok: bool, errs: &mut Errors| {
        let ok = ok || kind.is_none();
        if !ok {
            let label = kind.map(|k| k.label()).unwrap_or("?");
            errs.push(probe, format!("not available for model {label}"));
        }
        ok
    };

    if let Some(s) = section(t, "profile", errs) {
        let s = s.unwrap_or(&empty);
        if allowed("profile", microsim || ziob, errs) {
            reject_unknown(
                s,
                "profile",
                &["interval_tau", "interval", "bin_width", "lo", "hi", "min_snapshots", "l_star"],
                errs,
            );
            let interval = if microsim {
                // Stored in units of tau*; converted once the model is known.
                positive(s, "profile", "interval_tau", 0.5, errs)
            } else {
                positive(s, "profile", "interval", 10.0, errs)
            };
            let lo = number(s, "profile", "lo", errs).unwrap_or(if microsim { -30.0 } else { 0.0 });
            let hi = number(s, "profile", "hi", errs).unwrap_or(200.0);
            if !(hi > lo) {
                errs.push("profile.hi", "must exceed profile.lo");
            }
            let min_snapshots = number(s, "profile", "min_snapshots", errs).unwrap_or(0.0);
            probes.profile = Some(ProfileSpec {
                interval,
                bin_width: positive(s, "profile", "bin_width", 1.0, errs),
                lo,
                hi,
                min_snapshots: min_snapshots.max(0.0) as u64,
                l_star: number(s, "profile", "l_star", errs),
            });
            if ziob && !s.contains_key("l_star") {
                errs.push("profile.l_star", "required for the ziob model");
            }
        }
    }
    if let Some(s) = section(t, "intervals", errs) {
        if allowed("intervals", microsim || ziob, errs) {
            reject_unknown(s.unwrap_or(&empty), "intervals", &[], errs);
            probes.intervals = true;
        }
    }
    if let Some(s) = section(t, "price_tail", errs) {
        let s = s.unwrap_or(&empty);
        let ok = microsim || ziob || kind == Some(ModelKind::Langevin);
        if allowed("price_tail", ok, errs) {
            reject_unknown(s, "price_tail", &["p_hi", "p_lo"], errs);
            let d = TailWindow::default();
            let w = TailWindow {
                p_hi: positive(s, "price_tail", "p_hi", d.p_hi, errs),
                p_lo: positive(s, "price_tail", "p_lo", d.p_lo, errs),
            };
            if !(w.p_hi <= 1.0 && w.p_lo < w.p_hi) {
                errs.push("price_tail.p_lo", "need 0 < p_lo < p_hi <= 1");
            }
            probes.price_tail = Some(w);
        }
    }
    if let Some(s) = section(t, "layered", errs) {
        let s = s.unwrap_or(&empty);
        if allowed("layered", microsim || ziob, errs) {
            reject_unknown(s, "layered", &["bin_width", "max_depth"], errs);
            probes.layered = Some(LayeredProbe {
                bin_width: positive(s, "layered", "bin_width", 1.0, errs),
                max_depth: positive(s, "layered", "max_depth", 60.0, errs),
            });
        }
    }
    if let Some(s) = section(t, "response", errs) {
        let s = s.unwrap_or(&empty);
        if allowed("response", microsim, errs) {
            reject_unknown(s, "response", &["bin_width", "min_count"], errs);
            let d = TanhFitOptions::default();
            probes.response = Some(TanhFitOptions {
                bin_width: positive(s, "response", "bin_width", d.bin_width, errs),
                min_count: positive(s, "response", "min_count", d.min_count as f64, errs) as usize,
            });
        }
    }
    probes
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid recipe: {0}")]
    Config(#[from] ConfigError),
    #[error("model error: {0}")]
    Model(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(e) => RunError::Io(e),
            e => RunError::Model(e.to_string()),
        }
    }
}

impl From<ZiobError> for RunError {
    fn from(e: ZiobError) -> Self {
        match e {
            ZiobError::Io(e) => RunError::Io(e),
            ZiobError::Config(e) => RunError::Config(e),
            e => RunError::Model(e.to_string()),
        }
    }
}

impl From<AnalysisError> for RunError {
    fn from(e: AnalysisError) -> Self {
        RunError::Model(e.to_string())
    }
}

impl From<StatsError> for RunError {
    fn from(e: StatsError) -> Self {
        RunError::Model(e.to_string())
    }
}

/// Flux-balance measurements of the ZI order book.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowAnalysis {
    pub mean_volume: f64,
    pub fill_ratio: f64,
    pub predicted_volume: f64,
    pub predicted_fill_ratio: f64,
    /// Times a book side emptied and the replica restarted.
    pub drains: u64,
}

/// Change of headline results when the integration step is halved.
#[derive(Clone, Debug, PartialEq)]
pub struct DtSensitivity {
    /// `(metric, value at dt, value at dt / 2)`.
    pub rows: Vec<(&'static str, f64, f64)>,
}

impl DtSensitivity {
    pub fn get(&self, metric: &str) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .find(|r| r.0 == metric)
            .map(|r| (r.1, r.2))
    }
}

/// Everything a recipe run measured.
#[derive(Clone, Debug, PartialEq)]
pub struct Analyses {
    pub recipe: String,
    pub model: ModelKind,
    pub replica_seeds: Vec<u64>,
    pub n_ticks: usize,
    pub profile: Option<ProfileAnalysis>,
    pub intervals: Option<IntervalAnalysis>,
    pub price_tail: Option<TailAnalysis>,
    pub layered: Option<LayeredReport>,
    pub response: Option<TanhFit>,
    pub flow: Option<FlowAnalysis>,
    pub mixture: Option<MixtureAnalysis>,
    pub oracle: Option<Vec<OracleCheck>>,
    pub reference: Option<Box<Analyses>>,
    pub comparison: Option<Comparison>,
    pub halved: Option<Box<Analyses>>,
    pub dt_sensitivity: Option<DtSensitivity>,
    /// Pooled post-warmup samples, kept for comparisons.
    pub interval_samples: Vec<f64>,
    pub dp_samples: Vec<f64>,
}

impl Analyses {
    fn empty(recipe: &Recipe, kind: ModelKind) -> Self {
        Self {
            recipe: recipe.name.clone(),
            model: kind,
            replica_seeds: recipe.replica_seeds(),
            n_ticks: 0,
            profile: None,
            intervals: None,
            price_tail: None,
            layered: None,
            response: None,
            flow: None,
            mixture: None,
            oracle: None,
            reference: None,
            comparison: None,
            halved: None,
            dt_sensitivity: None,
            interval_samples: Vec::new(),
            dp_samples: Vec::new(),
        }
    }

    /// Headline values compared under dt halving.
    fn headline(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        if let Some(p) = &self.profile {
            for (h, d) in &p.frames {
                out.push((
                    match h.origin {
                        Origin::CentreOfMass => "profile_l1_cm",
                        Origin::MarketMid => "profile_l1_mid",
                    },
                    *d,
                ));
            }
        }
        if let Some(i) = &self.intervals {
            if let Some(r) = i.mean_ratio() {
                out.push(("interval_mean_ratio", r));
            }
            if let Some(k) = i.ks {
                out.push(("interval_ks", k));
            }
        }
        if let Some(fit) = self.price_tail.as_ref().and_then(|t| t.fit) {
            out.push(("kappa", fit.kappa));
        }
        out
    }
}

type ReplicaSink = Option<TsvSink<BufWriter<File>>>;

fn open_sink(dir: Option<&Path>, mode: RecordMode, replica: usize) -> io::Result<ReplicaSink> {
    let Some(dir) = dir else {
        return Ok(None);
    };
    if mode == RecordMode::None {
        return Ok(None);
    }
    let records = dir.join("records");
    fs::create_dir_all(&records)?;
    let ticks = BufWriter::new(File::create(records.join(format!("replica_{replica:03}_ticks.tsv")))?);
    let book = match mode {
        RecordMode::TicksAndBook => Some(BufWriter::new(File::create(
            records.join(format!("replica_{replica:03}_book.tsv")),
        )?)),
        _ => None,
    };
    Ok(Some(TsvSink::new(ticks, book)))
}

/// Runs a recipe. Record files go under `out_dir` when given; reports are
/// written separately from the returned analyses.
pub fn run_recipe(recipe: &Recipe, out_dir: Option<&Path>) -> Result<Analyses, RunError> {
    let mut analyses = match &recipe.model {
        ModelSpec::Microsim(variant, cfg) => run_microsim(recipe, *variant, cfg, out_dir)?,
        ModelSpec::Langevin(cfg) => run_langevin_recipe(recipe, cfg)?,
        ModelSpec::Ziob(cfg) => run_ziob(recipe, cfg, out_dir)?,
        ModelSpec::Mixture(p) => {
            let mut a = Analyses::empty(recipe, ModelKind::PowerLawMixture);
            let mut rng = RngStream::new(p.seed);
            a.mixture = Some(mixture_analysis(p.mixture, p.n_samples, p.x_min, &mut rng)?);
            a
        }
        ModelSpec::Oracle { seed } => {
            let mut a = Analyses::empty(recipe, ModelKind::Oracle);
            a.oracle = Some(oracle_checks(*seed)?);
            a
        }
    };

    if recipe.dt_halving {
        if let Some(half) = recipe.with_halved_dt() {
            let sub = out_dir.map(|d| d.join("dt_half"));
            let halved = run_recipe(&half, sub.as_deref())?;
            let full = analyses.headline();
            let rows = full
                .iter()
                .filter_map(|(k, v)| {
                    let h = halved.headline().into_iter().find(|(m, _)| m == k)?;
                    Some((*k, *v, h.1))
                })
                .collect();
            analyses.dt_sensitivity = Some(DtSensitivity { rows });
            analyses.halved = Some(Box::new(halved));
        }
    }
    if let Some(reference) = &recipe.reference {
        let sub = out_dir.map(|d| d.join("reference"));
        let r = run_recipe(reference, sub.as_deref())?;
        let (ks_interval, ks_abs_dp) = compare_samples(
            (&analyses.interval_samples, &r.interval_samples),
            (&analyses.dp_samples, &r.dp_samples),
        );
        let l1 = |a: &Analyses| a.profile.as_ref().and_then(|p| p.l1(Origin::MarketMid));
        analyses.comparison = Some(Comparison {
            ks_interval,
            ks_abs_dp,
            l1_improvement: match (l1(&r), l1(&analyses)) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            },
        });
        analyses.reference = Some(Box::new(r));
    }
    Ok(analyses)
}

fn run_microsim(
    recipe: &Recipe,
    variant: Variant,
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<Analyses, RunError> {
    let kind = match variant {
        Variant::Continuous => ModelKind::MicrosimContinuous,
        Variant::Poisson => ModelKind::MicrosimPoisson,
    };
    let p = &recipe.probes;
    let probes = Probes {
        snapshots: p.profile.map(|s| SnapshotProbe {
            interval: s.interval * cfg.tau_star(),
            bin_width: s.bin_width,
            lo: s.lo,
            hi: s.hi,
            min_snapshots: s.min_snapshots,
        }),
        layered: p.layered,
        response: p.response.is_some(),
        max_time: None,
    };
    let results = run_replicas(cfg, variant, &probes, recipe.replicas, |r| {
        open_sink(out_dir, recipe.records, r)
    });
    let mut outputs = Vec::with_capacity(results.len());
    for r in results {
        outputs.push(r?.0);
    }

    let mut a = Analyses::empty(recipe, kind);
    for o in &outputs {
        a.n_ticks += o.ticks.len();
        a.interval_samples.extend(o.ticks.iter().map(|t| t.interval));
        a.dp_samples.extend(o.ticks.iter().map(|t| t.dp));
    }
    if let Some(spec) = p.profile {
        let accs = outputs
            .iter()
            .map(|o| {
                [o.profile_cm.clone(), o.profile_mid.clone()]
                    .into_iter()
                    .flatten()
                    .collect()
            })
            .collect();
        a.profile = Some(profile_analysis(accs, spec.l_star.unwrap_or(cfg.l_star))?);
    }
    if p.intervals {
        a.intervals = Some(interval_analysis(&a.interval_samples, Some(cfg.tau_star()))?);
    }
    if let Some(w) = p.price_tail {
        a.price_tail = Some(tail_analysis(&a.dp_samples, w, Some(price_decay_length(cfg.dz_star)))?);
    }
    if p.layered.is_some() {
        let mut pooled: Option<LayeredSamples> = None;
        for o in &outputs {
            if let Some(acc) = &o.layered {
                let s = acc.samples(&o.ticks);
                match pooled.as_mut() {
                    None => pooled = Some(s),
                    Some(all) => all.merge(&s)?,
                }
            }
        }
        if let Some(s) = pooled {
            a.layered = Some(s.report()?);
        }
    }
    if let Some(opts) = p.response {
        let pairs: Vec<(f64, f64)> = outputs.iter().flat_map(|o| o.response.iter().copied()).collect();
        a.response = Some(response_analysis(&pairs, opts)?);
    }
    Ok(a)
}

fn run_langevin_recipe(recipe: &Recipe, cfg: &LangevinConfig) -> Result<Analyses, RunError> {
    let seeds = recipe.replica_seeds();
    let runs = par::map_slice(&seeds, |&seed| {
        let c = LangevinConfig { seed, ..*cfg };
        run_langevin(&c, &mut RngStream::new(seed))
    });
    let mut a = Analyses::empty(recipe, ModelKind::Langevin);
    a.dp_samples = runs.concat();
    a.n_ticks = a.dp_samples.len();
    if let Some(w) = recipe.probes.price_tail {
        a.price_tail = Some(tail_analysis(
            &a.dp_samples,
            w,
            Some(price_decay_length(cfg.dz_star())),
        )?);
    }
    Ok(a)
}

fn run_ziob(recipe: &Recipe, cfg: &ZiobConfig, out_dir: Option<&Path>) -> Result<Analyses, RunError> {
    let p = &recipe.probes;
    let probes = ZiobProbes {
        snapshot_interval: p.profile.map(|s| s.interval),
        bin_width: p.profile.map(|s| s.bin_width).unwrap_or(1.0),
        max_depth: p.profile.map(|s| s.hi).unwrap_or(200.0),
        layered: p.layered,
    };
    let seeds = recipe.replica_seeds();
    let results = par::map_indices(seeds.len(), |r| -> Result<_, RunError> {
        let mut sink = open_sink(out_dir, recipe.records, r)?;
        ziob_segments(cfg, seeds[r], &probes, recipe.restart_on_drain, &mut sink)
    });
    let mut outputs = Vec::new();
    let mut drains = 0;
    for r in results {
        let (segments, d) = r?;
        outputs.extend(segments);
        drains += d;
    }

    let mut a = Analyses::empty(recipe, ModelKind::Ziob);
    for o in &outputs {
        a.n_ticks += o.ticks.len();
        a.interval_samples.extend(o.ticks.iter().map(|t| t.interval));
        a.dp_samples.extend(o.ticks.iter().map(|t| t.dp));
    }
    let elapsed: f64 = outputs.iter().map(|o| o.elapsed).sum();
    let (v, q) = ziob_steady_relations(cfg.mu_tot(), cfg.lambda, cfg.omega)?;
    a.flow = Some(FlowAnalysis {
        mean_volume: outputs.iter().map(|o| o.mean_volume * o.elapsed).sum::<f64>()
            / elapsed.max(f64::MIN_POSITIVE),
        fill_ratio: outputs.iter().map(|o| o.filled).sum::<u64>() as f64
            / outputs.iter().map(|o| o.submitted).sum::<u64>().max(1) as f64,
        predicted_volume: v,
        predicted_fill_ratio: q,
        drains,
    });
    if let Some(spec) = p.profile {
        let accs = outputs
            .iter()
            .map(|o| o.profile.clone().into_iter().collect())
            .collect();
        let l_star = spec.l_star.expect("validated with the recipe");
        a.profile = Some(profile_analysis(accs, l_star)?);
    }
    if p.intervals {
        a.intervals = Some(interval_analysis(&a.interval_samples, None)?);
    }
    if let Some(w) = p.price_tail {
        a.price_tail = Some(tail_analysis(&a.dp_samples, w, None)?);
    }
    if p.layered.is_some() {
        let mut pooled: Option<LayeredSamples> = None;
        for o in &outputs {
            if let Some(acc) = &o.layered {
                let s = acc.samples(&o.ticks);
                match pooled.as_mut() {
                    None => pooled = Some(s),
                    Some(all) => all.merge(&s)?,
                }
            }
        }
        if let Some(s) = pooled {
            a.layered = Some(s.report()?);
        }
    }
    Ok(a)
}

/// Restarts after a drained side are capped at this many per replica.
const MAX_RESTARTS: u64 = 1000;

/// Runs one ZI-OB replica. With `restart`, a drained book keeps its
/// measurements and a fresh book with a derived seed continues until the
/// event budget is spent. Returns the segments and the number of drains.
fn ziob_segments(
    cfg: &ZiobConfig,
    seed: u64,
    probes: &ZiobProbes,
    restart: bool,
    sink: &mut ReplicaSink,
) -> Result<(Vec<ZiobOutput>, u64), RunError> {
    let mut segments = Vec::new();
    let mut remaining = cfg.n_events;
    let mut drains = 0;
    while remaining > 0 {
        let seg_seed = if drains == 0 {
            seed
        } else {
            RngStream::replica_seed(seed, drains)
        };
        let c = ZiobConfig {
            seed: seg_seed,
            n_events: remaining,
            ..cfg.clone()
        };
        match ziob_run(&c, &mut RngStream::new(seg_seed), probes, sink) {
            Ok(o) => {
                segments.push(o);
                break;
            }
            Err(ZiobError::EmptySide { partial, .. }) if restart && drains < MAX_RESTARTS => {
                remaining -= partial.events.min(remaining);
                segments.push(*partial);
                drains += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((segments, drains))
}
