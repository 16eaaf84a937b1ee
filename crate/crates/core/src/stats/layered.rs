use std::collections::HashMap;

use super::moments::{linear_regression, pearson};
use super::StatsError;
use crate::records::{BookEvent, EventKind, Side, TickRecord};

/// Fewer tick intervals than this give unstable coefficients.
pub const MIN_LAYERED_TICKS: usize = 1000;

/// Correlation of per-tick order-flow imbalance with the next price move.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredReport {
    pub bin_width: f64,
    /// Bin centres (tpip).
    pub depth: Vec<f64>,
    /// Bid side: Pearson coefficient of `N_r^-(T)` with `dp(T)`.
    pub c_minus: Vec<f64>,
    /// Ask side.
    pub c_plus: Vec<f64>,
    /// Depth of the first sign change of `c_minus`.
    pub gamma_c: Option<f64>,
    /// Pearson coefficient of `N_inner(T)` with `dp(T)`.
    pub inner_corr: Option<f64>,
    /// Slope of `dp` regressed on `N_inner`.
    pub inner_slope: Option<f64>,
    pub n_ticks: usize,
}

/// Streams book events into per-tick net counts (submissions minus
/// cancellations) per depth bin and side. Depths below zero fall in the
/// first bin, depths beyond the last bin are dropped.
#[derive(Clone, Debug)]
pub struct LayeredAccumulator {
    bin_width: f64,
    n_bins: usize,
    first_tick: u64,
    /// Row `T - first_tick`: `n_bins` bid counts then `n_bins` ask counts.
    rows: Vec<i32>,
}

impl LayeredAccumulator {
    pub fn new(bin_width: f64, max_depth: f64, first_tick: u64) -> Result<Self, StatsError> {
        if !(bin_width > 0.0) || !(max_depth > bin_width) {
            return Err(StatsError::DegenerateBinning(format!(
                "width {bin_width} up to depth {max_depth}"
            )));
        }
        Ok(Self {
            bin_width,
            n_bins: (max_depth / bin_width).ceil() as usize,
            first_tick,
            rows: Vec::new(),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Events before `first_tick` are ignored.
    pub fn push(&mut self, e: &BookEvent) {
        if e.tick < self.first_tick {
            return;
        }
        let k = (e.depth / self.bin_width).floor().max(0.0);
        if k >= self.n_bins as f64 {
            return;
        }
        let row = (e.tick - self.first_tick) as usize;
        let width = 2 * self.n_bins;
        if self.rows.len() < (row + 1) * width {
            self.rows.resize((row + 1) * width, 0);
        }
        let col = k as usize
            + match e.side {
                Side::Bid => 0,
                Side::Ask => self.n_bins,
            };
        self.rows[row * width + col] += match e.kind {
            EventKind::Submission => 1,
            EventKind::Cancellation => -1,
        };
    }

    /// Correlates the accumulated counts with `dp(T) = p(T+1) - p(T)` taken
    /// from `ticks`.
    pub fn finish(&self, ticks: &[TickRecord]) -> Result<LayeredReport, StatsError> {
        self.samples(ticks).report()
    }

    /// Pairs every tick interval with its price move. Tick intervals without
    /// a following transaction are dropped.
    pub fn samples(&self, ticks: &[TickRecord]) -> LayeredSamples {
        let price: HashMap<u64, f64> = ticks.iter().map(|t| (t.tick, t.price)).collect();
        let width = 2 * self.n_bins;
        let n_rows = self.rows.len() / width;
        let mut rows = Vec::new();
        let mut dps = Vec::new();
        // A tick interval with no events still counts as a sample.
        let last_tick = ticks.iter().map(|t| t.tick).max().unwrap_or(0);
        let span = (last_tick.saturating_sub(self.first_tick) as usize).max(n_rows);
        for r in 0..span {
            let t = self.first_tick + r as u64;
            let (Some(p0), Some(p1)) = (price.get(&t), price.get(&(t + 1))) else {
                continue;
            };
            match self.rows.get(r * width..(r + 1) * width) {
                Some(row) => rows.extend_from_slice(row),
                None => rows.extend(std::iter::repeat_n(0, width)),
            }
            dps.push(p1 - p0);
        }
        LayeredSamples {
            bin_width: self.bin_width,
            n_bins: self.n_bins,
            rows,
            dps,
        }
    }
}

/// Per-tick net counts paired with price moves; samples from independent
/// runs can be pooled.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredSamples {
    bin_width: f64,
    n_bins: usize,
    rows: Vec<i32>,
    dps: Vec<f64>,
}

impl LayeredSamples {
    pub fn len(&self) -> usize {
        self.dps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dps.is_empty()
    }

    pub fn merge(&mut self, other: &LayeredSamples) -> Result<(), StatsError> {
        if self.n_bins != other.n_bins || self.bin_width != other.bin_width {
            return Err(StatsError::DegenerateBinning("binnings differ".into()));
        }
        self.rows.extend_from_slice(&other.rows);
        self.dps.extend_from_slice(&other.dps);
        Ok(())
    }

    pub fn report(&self) -> Result<LayeredReport, StatsError> {
        let dps = &self.dps;
        if dps.len() < MIN_LAYERED_TICKS {
            return Err(StatsError::InsufficientTicks {
                needed: MIN_LAYERED_TICKS,
                got: dps.len(),
            });
        }
        let n_bins = self.n_bins;
        let width = 2 * n_bins;
        let cell = |r: usize, col: usize| -> f64 { self.rows[r * width + col] as f64 };
        let coefficient = |col: usize| -> f64 {
            let xs: Vec<f64> = (0..dps.len()).map(|r| cell(r, col)).collect();
            pearson(&xs, dps).unwrap_or(0.0)
        };
        let c_minus: Vec<f64> = (0..n_bins).map(coefficient).collect();
        let c_plus: Vec<f64> = (0..n_bins).map(|k| coefficient(n_bins + k)).collect();
        let depth: Vec<f64> = (0..n_bins)
            .map(|k| (k as f64 + 0.5) * self.bin_width)
            .collect();
        let gamma_c = first_sign_change(&depth, &c_minus);

        let (inner_corr, inner_slope) = match gamma_c {
            Some(g) => {
                let inner_bins: Vec<usize> = (0..n_bins).filter(|&k| depth[k] < g).collect();
                let n_inner: Vec<f64> = (0..dps.len())
                    .map(|r| {
                        inner_bins
                            .iter()
                            .map(|&k| cell(r, k) - cell(r, n_bins + k))
                            .sum()
                    })
                    .collect();
                (
                    pearson(&n_inner, dps),
                    linear_regression(&n_inner, dps).map(|(_, b, _)| b),
                )
            }
            None => (None, None),
        };
        Ok(LayeredReport {
            bin_width: self.bin_width,
            depth,
            c_minus,
            c_plus,
            gamma_c,
            inner_corr,
            inner_slope,
            n_ticks: dps.len(),
        })
    }
}

/// Linear interpolation of the first zero crossing of `y(x)`.
fn first_sign_change(x: &[f64], y: &[f64]) -> Option<f64> {
    let start = y.iter().position(|v| *v != 0.0)?;
    let mut prev = start;
    for k in start + 1..y.len() {
        if y[k] == 0.0 {
            continue;
        }
        if y[k].signum() != y[prev].signum() {
            let f = y[prev] / (y[prev] - y[k]);
            return Some(x[prev] + f * (x[k] - x[prev]));
        }
        prev = k;
    }
    None
}

/// Batch form over collected events.
pub fn layered_analysis(
    events: &[BookEvent],
    ticks: &[TickRecord],
    bin_width: f64,
    max_depth: f64,
) -> Result<LayeredReport, StatsError> {
    let first = ticks.iter().map(|t| t.tick).min().ok_or(StatsError::InsufficientTicks {
        needed: MIN_LAYERED_TICKS,
        got: 0,
    })?;
    let mut acc = LayeredAccumulator::new(bin_width, max_depth, first)?;
    for e in events {
        acc.push(e);
    }
    acc.finish(ticks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn ticks_from_prices(prices: &[f64]) -> Vec<TickRecord> {
        prices
            .iter()
            .enumerate()
            .map(|(k, &p)| TickRecord {
                tick: k as u64,
                time: k as f64,
                interval: 1.0,
                price: p,
                dp: if k == 0 { 0.0 } else { p - prices[k - 1] },
                warmup: false,
            })
            .collect()
    }

    fn ev(tick: u64, side: Side, kind: EventKind, depth: f64) -> BookEvent {
        BookEvent {
            time: tick as f64,
            tick,
            side,
            kind,
            depth,
            trader: 0,
        }
    }

    /// Synthetic layered book: before an up move, bids are submitted at
    /// shallow depth and cancelled deep.
    fn layered_fixture(n: usize, seed: u64) -> (Vec<BookEvent>, Vec<TickRecord>) {
        let mut rng = RngStream::new(seed);
        let mut prices = vec![0.0];
        let mut events = Vec::new();
        for t in 0..n as u64 {
            let dp: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            prices.push(prices.last().unwrap() + dp);
            let (inner, outer) = if dp > 0.0 {
                (EventKind::Submission, EventKind::Cancellation)
            } else {
                (EventKind::Cancellation, EventKind::Submission)
            };
            events.push(ev(t, Side::Bid, inner, 2.5));
            events.push(ev(t, Side::Bid, outer, 20.5));
            let (ask_in, ask_out) = (outer, inner);
            events.push(ev(t, Side::Ask, ask_in, 2.5));
            events.push(ev(t, Side::Ask, ask_out, 20.5));
            if rng.random::<f64>() < 0.5 {
                events.push(ev(t, Side::Bid, EventKind::Submission, 2.5));
            }
        }
        (events, ticks_from_prices(&prices))
    }

    #[test]
    fn synthetic_layers_detected() {
        let (events, ticks) = layered_fixture(5000, 1);
        let r = layered_analysis(&events, &ticks, 1.0, 40.0).unwrap();
        assert!(r.c_minus[2] > 0.5);
        assert!(r.c_minus[20] < -0.5);
        assert!(r.c_plus[2] < -0.5);
        let g = r.gamma_c.unwrap();
        assert!(g > 2.5 && g < 20.5, "{g}");
        assert!(r.inner_corr.unwrap() > 0.8);
        assert!(r.inner_slope.unwrap() > 0.0);
        assert!(r
            .c_minus
            .iter()
            .chain(&r.c_plus)
            .all(|c| (-1.0..=1.0).contains(c)));
    }

    #[test]
    fn shuffled_prices_decorrelate() {
        let (events, ticks) = layered_fixture(20_000, 2);
        let mut dps: Vec<f64> = ticks.windows(2).map(|w| w[1].price - w[0].price).collect();
        dps.shuffle(&mut RngStream::new(3));
        let mut prices = vec![0.0];
        for d in dps {
            prices.push(prices.last().unwrap() + d);
        }
        let r = layered_analysis(&events, &ticks_from_prices(&prices), 1.0, 40.0).unwrap();
        let bound = 3.0 / (r.n_ticks as f64).sqrt();
        for c in r.c_minus.iter().chain(&r.c_plus) {
            assert!(c.abs() < bound, "{c} vs {bound}");
        }
    }

    #[test]
    fn too_few_ticks() {
        let (events, ticks) = layered_fixture(100, 1);
        assert!(matches!(
            layered_analysis(&events, &ticks, 1.0, 40.0),
            Err(StatsError::InsufficientTicks { got: 100, .. })
        ));
    }

    #[test]
    fn sign_change_interpolates() {
        let x = [0.5, 1.5, 2.5];
        assert_eq!(first_sign_change(&x, &[1.0, 1.0, -1.0]), Some(2.0));
        assert_eq!(first_sign_change(&x, &[1.0, 0.5, 0.2]), None);
    }
}
