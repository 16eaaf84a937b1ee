use rand::Rng;

use crate::config::ExperimentConfig;
use crate::rng::RngStream;
use crate::spread::{sample_spread, SpreadDistribution};

/// One trader: a midprice and a fixed buy-sell spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraderState {
    pub id: u32,
    /// Midprice (tpip).
    pub z: f64,
    l: f64,
}

impl TraderState {
    pub fn new(id: u32, z: f64, spread: f64) -> Self {
        assert!(spread > 0.0, "spread must be positive");
        Self { id, z, l: spread }
    }

    #[inline]
    pub fn spread(&self) -> f64 {
        self.l
    }

    #[inline]
    pub fn bid(&self) -> f64 {
        self.z - 0.5 * self.l
    }

    #[inline]
    pub fn ask(&self) -> f64 {
        self.z + 0.5 * self.l
    }
}

/// Random streams of one simulation: a global stream plus one substream per
/// trader (trader `k` uses stream id `k + 1`).
#[derive(Clone, Debug)]
pub struct SimRng {
    pub global: RngStream,
    pub traders: Vec<RngStream>,
}

impl SimRng {
    pub fn new(seed: u64, n_traders: usize) -> Self {
        let root = RngStream::new(seed);
        Self {
            traders: (0..n_traders)
                .map(|k| root.substream(k as u64 + 1))
                .collect(),
            global: root,
        }
    }
}

/// Full state of the trader ensemble.
#[derive(Clone, Debug)]
pub struct SimState {
    pub traders: Vec<TraderState>,
    /// Last transacted price.
    pub p: f64,
    /// Last price movement.
    pub dp: f64,
    pub t: f64,
    /// Transactions so far.
    pub tick: u64,
    pub last_transaction_time: f64,
    /// Midprices before the latest displacement, for crossing-time
    /// interpolation.
    pub(crate) z_prev: Vec<f64>,
}

impl SimState {
    pub fn from_traders(traders: Vec<TraderState>) -> Self {
        let z_prev = traders.iter().map(|t| t.z).collect();
        Self {
            traders,
            p: 0.0,
            dp: 0.0,
            t: 0.0,
            tick: 0,
            last_transaction_time: 0.0,
            z_prev,
        }
    }

    pub fn n(&self) -> usize {
        self.traders.len()
    }

    /// Records the current midprices as the pre-step reference.
    pub fn mark_positions(&mut self) {
        for (zp, tr) in self.z_prev.iter_mut().zip(&self.traders) {
            *zp = tr.z;
        }
    }

    /// `(best bid, best ask)` over all traders.
    pub fn best_quotes(&self) -> (f64, f64) {
        self.traders.iter().fold(
            (f64::NEG_INFINITY, f64::INFINITY),
            |(b, a), t| (b.max(t.bid()), a.min(t.ask())),
        )
    }

    /// Market midprice `(max b + min a) / 2`.
    pub fn market_midprice(&self) -> f64 {
        let (b, a) = self.best_quotes();
        0.5 * (b + a)
    }

    pub fn has_crossing(&self) -> bool {
        let (b, a) = self.best_quotes();
        b >= a
    }
}

/// Spreads i.i.d. from the gamma law, midprices uniform on `[-L*, L*]`.
pub fn init_state(config: &ExperimentConfig, rng: &mut SimRng) -> SimState {
    assert_eq!(rng.traders.len(), config.n_traders, "one stream per trader");
    let dist = SpreadDistribution::new(config.l_star);
    let traders = rng
        .traders
        .iter_mut()
        .enumerate()
        .map(|(k, s)| {
            let l = sample_spread(s, &dist);
            let z = config.l_star * (2.0 * s.random::<f64>() - 1.0);
            TraderState::new(k as u32, z, l)
        })
        .collect();
    SimState::from_traders(traders)
}

/// Trend-following drift `c tanh(dp / dp*)`.
#[inline]
pub fn drift(dp: f64, config: &ExperimentConfig) -> f64 {
    config.c() * (dp / config.dp_star).tanh()
}

/// Centre of mass and relative midprices.
pub fn decompose_cm(state: &SimState) -> (f64, Vec<f64>) {
    let n = state.n() as f64;
    let cm = state.traders.iter().map(|t| t.z).sum::<f64>() / n;
    let r = state.traders.iter().map(|t| t.z - cm).collect();
    (cm, r)
}
