//! Zero-intelligence order book: limit orders arrive at depths drawn from a
//! rate density around the market midprice, resting orders are cancelled
//! independently, and market orders hit the opposite best. Simulated exactly
//! by next-event sampling.

use std::collections::BTreeMap;
use std::io;

use rand::Rng;
use serde::Serialize;
use toml::{Table, Value};

use crate::config::{ConfigError, FieldError};
use crate::microsim::LayeredProbe;
use crate::records::{BookEvent, EventKind, RecordSink, Side, TickRecord};
use crate::rng::RngStream;
use crate::stats::{LayeredAccumulator, Origin, ProfileAccumulator, StatsError};

/// Default offset of the synthetic submission density (tpip).
pub const DEFAULT_R0: f64 = 10.0;
/// Default tail exponent of the synthetic submission density.
pub const DEFAULT_MU_EXPONENT: f64 = 2.9;
/// Default number of depth levels carrying submissions.
pub const DEFAULT_R_MAX: usize = 300;

const ANONYMOUS: u32 = u32::MAX;

/// Submission rate density `mu_tot (r0 + r)^-exponent / Z` on the depth
/// grid `r = 0, 1, .., r_max - 1`.
pub fn mu_density_powerlaw(mu_tot: f64, exponent: f64, r0: f64, r_max: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..r_max).map(|r| (r0 + r as f64).powf(-exponent)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| mu_tot * x / z).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZiobConfig {
    /// Submission rate per unit depth at `r = 0, 1, ..` (per time per tpip).
    pub mu_density: Vec<f64>,
    /// Cancellation rate per resting order.
    pub lambda: f64,
    /// Market order rate.
    pub omega: f64,
    pub n_events: u64,
    /// Events simulated before measurement starts.
    pub warmup_events: u64,
    pub seed: u64,
}

impl ZiobConfig {
    pub fn new(
        mu_density: Vec<f64>,
        lambda: f64,
        omega: f64,
        n_events: u64,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let mut errors = Vec::new();
        let mut fail = |f: &str, m: String| {
            errors.push(FieldError {
                field: f.into(),
                message: m,
            })
        };
        if mu_density.is_empty() || mu_density.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            fail("mu_density", "must be a non-empty list of non-negative rates".into());
        }
        let mu_tot: f64 = mu_density.iter().sum();
        if !(lambda > 0.0 && lambda.is_finite()) {
            fail("lambda", format!("must be positive, got {lambda}"));
        }
        if !(omega >= 0.0 && omega.is_finite()) {
            fail("omega", format!("must be non-negative, got {omega}"));
        }
        if !(mu_tot > omega) {
            fail("omega", format!("drained book: mu_tot {mu_tot} <= omega {omega}"));
        }
        if n_events == 0 {
            fail("n_events", "must be at least 1".into());
        }
        if !errors.is_empty() {
            return Err(ConfigError { violations: errors });
        }
        let mut cfg = Self {
            mu_density,
            lambda,
            omega,
            n_events,
            warmup_events: 0,
            seed,
        };
        cfg.warmup_events = cfg.default_warmup();
        Ok(cfg)
    }

    pub fn mu_tot(&self) -> f64 {
        self.mu_density.iter().sum()
    }

    /// Events in ten volume relaxation times `1 / lambda` at steady state.
    pub fn default_warmup(&self) -> u64 {
        let (n_vol, _) = flux_balance(self.mu_tot(), self.lambda, self.omega);
        let rate = self.mu_tot() + self.lambda * n_vol + self.omega;
        (10.0 / self.lambda * rate).ceil() as u64
    }

    pub fn with_warmup(mut self, events: u64) -> Self {
        self.warmup_events = events;
        self
    }
}

fn flux_balance(mu_tot: f64, lambda: f64, omega: f64) -> (f64, f64) {
    ((mu_tot - omega) / lambda, omega / mu_tot)
}

#[derive(Debug, thiserror::Error)]
pub enum ZiobError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    /// Carries the measurements taken before the side emptied.
    #[error("{side} side of the book emptied at time {time} after {events} events")]
    EmptySide {
        side: Side,
        time: f64,
        events: u64,
        partial: Box<ZiobOutput>,
    },
    #[error("record sink failed: {0}")]
    Io(#[from] io::Error),
    #[error("invalid probe: {0}")]
    Probe(#[from] StatsError),
}

/// Steady-state resting volume `(mu_tot - omega) / lambda` and quote fill
/// ratio `omega / mu_tot`.
pub fn ziob_steady_relations(mu_tot: f64, lambda: f64, omega: f64) -> Result<(f64, f64), ZiobError> {
    if !(mu_tot > omega) || !(lambda > 0.0) || omega < 0.0 {
        return Err(ConfigError::single(
            "omega",
            format!("drained book: mu_tot {mu_tot}, lambda {lambda}, omega {omega}"),
        )
        .into());
    }
    Ok(flux_balance(mu_tot, lambda, omega))
}

/// Unit-volume orders on an integer price grid.
#[derive(Clone, Debug, Default)]
pub struct BookState {
    /// `(side, price, position within its level)`.
    orders: Vec<(Side, i64, usize)>,
    bids: BTreeMap<i64, Vec<usize>>,
    asks: BTreeMap<i64, Vec<usize>>,
}

impl BookState {
    pub fn volume(&self) -> usize {
        self.orders.len()
    }

    fn levels(&self, side: Side) -> &BTreeMap<i64, Vec<usize>> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn levels_mut(&mut self, side: Side) -> &mut BTreeMap<i64, Vec<usize>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<i64> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<i64> {
        self.asks.keys().next().copied()
    }

    /// Market midprice; `None` when a side is empty.
    pub fn midprice(&self) -> Option<f64> {
        Some(0.5 * (self.best_bid()? + self.best_ask()?) as f64)
    }

    pub fn side_volume(&self, side: Side) -> usize {
        self.levels(side).values().map(Vec::len).sum()
    }

    /// `(price, volume)` per level, ascending in price.
    pub fn depth_profile(&self, side: Side) -> impl Iterator<Item = (i64, usize)> + '_ {
        self.levels(side).iter().map(|(p, v)| (*p, v.len()))
    }

    pub fn insert(&mut self, side: Side, price: i64) {
        let idx = self.orders.len();
        let level = self.levels_mut(side).entry(price).or_default();
        level.push(idx);
        let pos = level.len() - 1;
        self.orders.push((side, price, pos));
    }

    /// Removes order `idx` and returns its side and price.
    fn remove(&mut self, idx: usize) -> (Side, i64) {
        let (side, price, pos) = self.orders[idx];
        let levels = self.levels_mut(side);
        let level = levels.get_mut(&price).expect("order level exists");
        level.swap_remove(pos);
        let moved_in_level = level.get(pos).copied();
        let emptied = level.is_empty();
        if emptied {
            levels.remove(&price);
        }
        if let Some(other) = moved_in_level {
            self.orders[other].2 = pos;
        }
        let last = self.orders.len() - 1;
        self.orders.swap_remove(idx);
        if idx != last {
            let (s, p, q) = self.orders[idx];
            self.levels_mut(s).get_mut(&p).expect("moved order level")[q] = idx;
        }
        (side, price)
    }

    /// Removes one order at the best price of `side`.
    fn take_best(&mut self, side: Side) -> Option<i64> {
        let price = match side {
            Side::Bid => self.best_bid()?,
            Side::Ask => self.best_ask()?,
        };
        let idx = *self.levels(side)[&price].last().expect("non-empty level");
        self.remove(idx);
        Some(price)
    }

    /// Cancels a uniformly chosen resting order.
    fn cancel_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<(Side, i64)> {
        if self.orders.is_empty() {
            return None;
        }
        let idx = rng.random_range(0..self.orders.len());
        Some(self.remove(idx))
    }
}

/// Measurement options of a ZI-OB run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ZiobProbes {
    /// Ask-side profile relative to the market midprice, sampled at this
    /// time cadence on `[0, max_depth)`.
    pub snapshot_interval: Option<f64>,
    pub bin_width: f64,
    pub max_depth: f64,
    pub layered: Option<LayeredProbe>,
}

#[derive(Clone, Debug)]
pub struct ZiobOutput {
    /// Post-warmup transactions.
    pub ticks: Vec<TickRecord>,
    pub profile: Option<ProfileAccumulator>,
    pub layered: Option<LayeredAccumulator>,
    /// Post-warmup limit-order submissions and fills of resting orders.
    pub submitted: u64,
    pub filled: u64,
    /// Time average of the resting volume after warmup.
    pub mean_volume: f64,
    /// Post-warmup events and simulated time.
    pub events: u64,
    pub elapsed: f64,
    pub final_book: BookState,
}

impl ZiobOutput {
    pub fn fill_ratio(&self) -> f64 {
        self.filled as f64 / self.submitted.max(1) as f64
    }
}

fn depth_of(side: Side, price: i64, mid: f64) -> f64 {
    match side {
        Side::Bid => mid - price as f64,
        Side::Ask => price as f64 - mid,
    }
}

fn draw_side<R: Rng + ?Sized>(rng: &mut R) -> Side {
    if rng.random::<bool>() {
        Side::Bid
    } else {
        Side::Ask
    }
}

/// Walker alias-free sampler for the depth grid: cumulative weights.
struct DepthSampler {
    cumulative: Vec<f64>,
}

impl DepthSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        Self {
            cumulative: weights
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Fills both sides to the steady-state volume around midprice 0.5.
fn initial_book(config: &ZiobConfig, sampler: &DepthSampler, rng: &mut RngStream) -> BookState {
    let (n_vol, _) = flux_balance(config.mu_tot(), config.lambda, config.omega);
    let mut book = BookState::default();
    book.insert(Side::Bid, 0);
    book.insert(Side::Ask, 1);
    for _ in 0..(n_vol.round() as usize).saturating_sub(2) {
        let r = sampler.sample(rng) as i64;
        match draw_side(rng) {
            Side::Bid => book.insert(Side::Bid, -r),
            Side::Ask => book.insert(Side::Ask, 1 + r),
        }
    }
    book
}

/// Runs the ZI-OB model for `warmup_events + n_events` events.
pub fn ziob_run<S: RecordSink>(
    config: &ZiobConfig,
    rng: &mut RngStream,
    probes: &ZiobProbes,
    sink: &mut S,
) -> Result<ZiobOutput, ZiobError> {
    let sampler = DepthSampler::new(&config.mu_density);
    let mu_tot = config.mu_tot();
    let mut book = initial_book(config, &sampler, rng);
    let record_book = probes.layered.is_some() || sink.wants_book_events();

    let mut profile = match probes.snapshot_interval {
        Some(_) => Some(ProfileAccumulator::new(
            Origin::MarketMid,
            probes.bin_width,
            0.0,
            probes.max_depth,
        )?),
        None => None,
    };
    let mut layered: Option<LayeredAccumulator> = None;

    let mut t = 0.0;
    let mut tick = 0u64;
    let mut price: Option<f64> = None;
    let mut last_trade_time = 0.0;
    let mut ticks = Vec::new();
    let (mut submitted, mut filled) = (0u64, 0u64);
    let mut volume_time = 0.0;
    let mut t_start = 0.0;
    let mut next_snapshot = f64::INFINITY;
    let total_events = config.warmup_events + config.n_events;
    let mut measured_events = 0u64;
    let mut drained = None;

    for event in 0..total_events {
        let measuring = event >= config.warmup_events;
        if event == config.warmup_events {
            t_start = t;
            if let Some(dt) = probes.snapshot_interval {
                next_snapshot = t + dt;
            }
            if let Some(l) = probes.layered {
                layered = Some(LayeredAccumulator::new(l.bin_width, l.max_depth, tick + 1)?);
            }
        }
        let n_live = book.volume() as f64;
        let rate = mu_tot + config.lambda * n_live + config.omega;
        let dt = -rng.open01().ln() / rate;

        if let (Some(acc), Some(interval)) = (profile.as_mut(), probes.snapshot_interval) {
            while next_snapshot < t + dt {
                let mid = book.midprice().expect("both sides quoted between events");
                acc.add_snapshot(
                    book.depth_profile(Side::Ask)
                        .flat_map(|(p, v)| std::iter::repeat_n(p as f64 - mid, v)),
                );
                next_snapshot += interval;
            }
        }
        if measuring {
            volume_time += n_live * dt;
        }
        t += dt;

        let mid = book.midprice().expect("both sides quoted between events");
        let mut events: [Option<BookEvent>; 1] = [None];
        let mut trade: Option<f64> = None;
        let u = rng.random::<f64>() * rate;
        if u < mu_tot {
            let r = sampler.sample(rng) as f64;
            let side = draw_side(rng);
            if measuring {
                submitted += 1;
            }
            let (limit, opposite_best) = match side {
                Side::Bid => ((mid - r).floor() as i64, book.best_ask()),
                Side::Ask => ((mid + r).ceil() as i64, book.best_bid()),
            };
            let marketable = match (side, opposite_best) {
                (Side::Bid, Some(a)) => limit >= a,
                (Side::Ask, Some(b)) => limit <= b,
                _ => false,
            };
            if marketable {
                let opposite = match side {
                    Side::Bid => Side::Ask,
                    Side::Ask => Side::Bid,
                };
                trade = book.take_best(opposite).map(|p| p as f64);
                if measuring {
                    filled += 1;
                }
            } else {
                book.insert(side, limit);
                events[0] = Some(BookEvent {
                    time: t,
                    tick,
                    side,
                    kind: EventKind::Submission,
                    depth: depth_of(side, limit, mid),
                    trader: ANONYMOUS,
                });
            }
        } else if u < mu_tot + config.lambda * n_live {
            if let Some((side, p)) = book.cancel_random(rng) {
                events[0] = Some(BookEvent {
                    time: t,
                    tick,
                    side,
                    kind: EventKind::Cancellation,
                    depth: depth_of(side, p, mid),
                    trader: ANONYMOUS,
                });
            }
        } else {
            // A buy order lifts the best ask, a sell order hits the best bid.
            let hit = match draw_side(rng) {
                Side::Bid => Side::Ask,
                Side::Ask => Side::Bid,
            };
            trade = book.take_best(hit).map(|p| p as f64);
            if measuring {
                filled += 1;
            }
        }

        if let Some(e) = events[0] {
            if record_book {
                sink.book(&e)?;
            }
            if let Some(acc) = layered.as_mut() {
                acc.push(&e);
            }
        }
        if let Some(p) = trade {
            tick += 1;
            let record = TickRecord {
                tick,
                time: t,
                interval: t - last_trade_time,
                price: p,
                dp: price.map(|q| p - q).unwrap_or(0.0),
                warmup: !measuring,
            };
            last_trade_time = t;
            price = Some(p);
            sink.tick(&record)?;
            if measuring {
                ticks.push(record);
            }
        }
        if measuring {
            measured_events += 1;
        }
        if let Some(side) = [Side::Bid, Side::Ask]
            .into_iter()
            .find(|s| book.levels(*s).is_empty())
        {
            drained = Some((side, event + 1));
            break;
        }
    }
    sink.flush()?;
    let elapsed = if measured_events > 0 { t - t_start } else { 0.0 };
    let output = ZiobOutput {
        ticks,
        profile,
        layered,
        submitted,
        filled,
        mean_volume: if elapsed > 0.0 { volume_time / elapsed } else { 0.0 },
        events: measured_events,
        elapsed,
        final_book: book,
    };
    match drained {
        Some((side, events)) => Err(ZiobError::EmptySide {
            side,
            time: t,
            events,
            partial: Box::new(output),
        }),
        None => Ok(output),
    }
}

/// Builds a config from a raw table with keys `lambda`, `omega`,
/// `n_events`, `seed` and optional `mu_tot` (1), `mu_exponent`, `mu_r0`,
/// `mu_r_max` and `warmup_events`. The submission density is the synthetic
/// power law.
pub fn validate_ziob(raw: &Table) -> Result<ZiobConfig, ConfigError> {
    let mut errors = Vec::new();
    let mut fail = |f: &str, m: String| {
        errors.push(FieldError {
            field: f.into(),
            message: m,
        })
    };
    let known = [
        "mu_tot",
        "mu_exponent",
        "mu_r0",
        "mu_r_max",
        "lambda",
        "omega",
        "n_events",
        "warmup_events",
        "seed",
    ];
    for key in raw.keys() {
        if !known.contains(&key.as_str()) {
            fail(key, "unknown field".into());
        }
    }
    let mut num = |key: &str, default: Option<f64>| -> f64 {
        match raw.get(key) {
            None => default.unwrap_or_else(|| {
                fail(key, "missing field".into());
                f64::NAN
            }),
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(v) => {
                fail(key, format!("expected a number, found {}", v.type_str()));
                f64::NAN
            }
        }
    };
    let mu_tot = num("mu_tot", Some(1.0));
    let exponent = num("mu_exponent", Some(DEFAULT_MU_EXPONENT));
    let r0 = num("mu_r0", Some(DEFAULT_R0));
    let r_max = num("mu_r_max", Some(DEFAULT_R_MAX as f64));
    let lambda = num("lambda", None);
    let omega = num("omega", None);
    let n_events = num("n_events", None);
    let seed = num("seed", None);
    let warmup = raw.get("warmup_events").map(|_| num("warmup_events", None));
    for (key, v) in [("mu_tot", mu_tot), ("mu_exponent", exponent), ("mu_r0", r0)] {
        if !(v > 0.0 && v.is_finite()) {
            fail(key, format!("must be positive, got {v}"));
        }
    }
    let count = |v: f64| (v >= 0.0 && v.fract() == 0.0).then_some(v as u64);
    let mut checked = |key: &str, v: f64| {
        count(v).unwrap_or_else(|| {
            if !v.is_nan() {
                fail(key, format!("expected a non-negative integer, got {v}"));
            }
            0
        })
    };
    let r_max = checked("mu_r_max", r_max) as usize;
    let n_events = checked("n_events", n_events);
    let seed = checked("seed", seed);
    let warmup = warmup.map(|w| checked("warmup_events", w));
    if r_max == 0 {
        fail("mu_r_max", "must be at least 1".into());
    }
    if !errors.is_empty() {
        return Err(ConfigError { violations: errors });
    }
    let cfg = ZiobConfig::new(
        mu_density_powerlaw(mu_tot, exponent, r0, r_max),
        lambda,
        omega,
        n_events,
        seed,
    )?;
    Ok(match warmup {
        Some(w) => cfg.with_warmup(w),
        None => cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::NullSink;

    fn realistic(n_events: u64, seed: u64) -> ZiobConfig {
        ZiobConfig::new(
            mu_density_powerlaw(1.0, DEFAULT_MU_EXPONENT, DEFAULT_R0, DEFAULT_R_MAX),
            9.5e-3,
            0.05,
            n_events,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn steady_relations_values() {
        let (v, q) = ziob_steady_relations(1.0, 9.5e-3, 0.05).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
        assert!((q - 0.05).abs() < 1e-15);
        let (v, q) = ziob_steady_relations(1.0, 2.5e-3, 0.75).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
        assert_eq!(q, 0.75);
        assert_eq!(ziob_steady_relations(2.0, 1.0, 0.0).unwrap().1, 0.0);
        assert!(ziob_steady_relations(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn density_normalized() {
        let mu = mu_density_powerlaw(3.0, 2.9, 10.0, 500);
        assert!((mu.iter().sum::<f64>() - 3.0).abs() < 1e-6);
        assert!(mu.windows(2).all(|w| w[1] < w[0]));
        // Huge offset: flat over a bounded window.
        let flat = mu_density_powerlaw(1.0, 2.9, 1e9, 50);
        assert!((flat[0] / flat[49] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn drained_book_rejected() {
        let e = ZiobConfig::new(vec![0.1; 5], 0.01, 1.0, 10, 1).unwrap_err();
        assert!(e.mentions("omega"));
    }

    #[test]
    fn table_validation() {
        let t: Table = toml::from_str("lambda = 0.01\nomega = 0.05\nn_events = 10\nseed = 3").unwrap();
        let cfg = validate_ziob(&t).unwrap();
        assert!((cfg.mu_tot() - 1.0).abs() < 1e-9);
        assert_eq!(cfg.mu_density.len(), DEFAULT_R_MAX);
        let t: Table = toml::from_str("lambda = -1\nomega = 'x'\nn_events = 1.5\nfoo = 1").unwrap();
        let e = validate_ziob(&t).unwrap_err();
        for f in ["omega", "n_events", "seed", "foo"] {
            assert!(e.mentions(f), "{f}: {e:?}");
        }
    }

    #[test]
    fn book_bookkeeping() {
        let mut b = BookState::default();
        b.insert(Side::Bid, 5);
        b.insert(Side::Bid, 5);
        b.insert(Side::Ask, 8);
        b.insert(Side::Bid, 3);
        assert_eq!(b.midprice(), Some(6.5));
        assert_eq!(b.take_best(Side::Bid), Some(5));
        assert_eq!(b.side_volume(Side::Bid), 2);
        let mut rng = RngStream::new(1);
        while b.volume() > 0 {
            b.cancel_random(&mut rng).unwrap();
            for (k, &(s, p, pos)) in b.orders.iter().enumerate() {
                assert_eq!(b.levels(s)[&p][pos], k);
            }
        }
        assert_eq!(b.midprice(), None);
    }

    #[test]
    fn flux_balance_holds() {
        let cfg = realistic(400_000, 3);
        let out = ziob_run(&cfg, &mut RngStream::new(3), &ZiobProbes::default(), &mut NullSink)
            .unwrap();
        assert!((out.mean_volume / 100.0 - 1.0).abs() < 0.1, "{}", out.mean_volume);
        assert!((out.fill_ratio() / 0.05 - 1.0).abs() < 0.1, "{}", out.fill_ratio());
        let b = &out.final_book;
        assert!(b.best_bid().unwrap() < b.best_ask().unwrap());
    }
}
