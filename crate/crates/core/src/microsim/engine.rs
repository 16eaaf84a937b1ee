//! Displacement steps and crossing settlement.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::state::{drift, SimRng, SimState};
use crate::config::ExperimentConfig;
use crate::records::{BookEvent, EventKind, Side};

/// A settled crossing: trader `buyer` bought from `seller` at the buyer's bid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransactionEvent {
    pub tick: u64,
    pub time: f64,
    pub buyer: u32,
    pub seller: u32,
    pub price: f64,
    pub interval: f64,
    pub dp: f64,
}

/// Scratch output of one step. Reused across steps to avoid allocation.
#[derive(Clone, Debug, Default)]
pub struct StepOutput {
    pub transactions: Vec<TransactionEvent>,
    pub book: Vec<BookEvent>,
    /// Emit quote-change events.
    pub record_book: bool,
    /// Store all midprices right after each settlement (row-major, one row
    /// of `N` per transaction).
    pub capture_positions: bool,
    pub positions: Vec<f64>,
    /// Market midprice the book events of this step are measured from.
    z_mid: f64,
}

impl StepOutput {
    pub fn new(record_book: bool, capture_positions: bool) -> Self {
        Self {
            record_book,
            capture_positions,
            ..Self::default()
        }
    }

    pub fn clear(&mut self) {
        self.transactions.clear();
        self.book.clear();
        self.positions.clear();
    }

    fn begin(&mut self, state: &SimState) {
        if self.record_book {
            self.z_mid = state.market_midprice();
        }
    }

    fn quote(&mut self, state: &SimState, trader: u32, side: Side, kind: EventKind, price: f64) {
        let depth = match side {
            Side::Bid => self.z_mid - price,
            Side::Ask => price - self.z_mid,
        };
        self.book.push(BookEvent {
            time: state.t,
            tick: state.tick,
            side,
            kind,
            depth,
            trader,
        });
    }

    /// Cancel-and-replace of both quotes after a move from `z_old` to `z_new`.
    fn requote(&mut self, state: &SimState, k: usize, z_old: f64, z_new: f64) {
        let tr = state.traders[k];
        let h = 0.5 * tr.spread();
        let id = tr.id;
        self.quote(state, id, Side::Bid, EventKind::Cancellation, z_old - h);
        self.quote(state, id, Side::Bid, EventKind::Submission, z_new - h);
        self.quote(state, id, Side::Ask, EventKind::Cancellation, z_old + h);
        self.quote(state, id, Side::Ask, EventKind::Submission, z_new + h);
    }
}

/// Linear-interpolation estimate of when, within the last displacement,
/// the pair's gap reached the contact distance. Pairs brought into contact
/// by a settlement jump get 1.
fn crossing_fraction(state: &SimState, i: usize, j: usize) -> f64 {
    let (ti, tj) = (&state.traders[i], &state.traders[j]);
    let threshold = 0.5 * (ti.spread() + tj.spread());
    let g0 = state.z_prev[i] - state.z_prev[j];
    let g1 = ti.z - tj.z;
    if g0 >= threshold {
        0.0
    } else if g1 > g0 {
        ((threshold - g0) / (g1 - g0)).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

fn settle_pair(state: &mut SimState, i: usize, j: usize, out: &mut StepOutput) {
    let bid = state.traders[i].bid();
    let price = bid;
    let dp = price - state.p;
    let (li, lj) = (state.traders[i].spread(), state.traders[j].spread());
    let (zi, zj) = (state.traders[i].z, state.traders[j].z);

    state.traders[i].z = zi - 0.5 * li;
    state.traders[j].z = zj + 0.5 * lj;
    state.tick += 1;
    let interval = state.t - state.last_transaction_time;
    state.last_transaction_time = state.t;
    state.p = price;
    state.dp = dp;

    if out.record_book {
        let (id_i, id_j) = (state.traders[i].id, state.traders[j].id);
        // Buyer: bid filled, fresh bid below; ask moved down.
        out.quote(state, id_i, Side::Bid, EventKind::Submission, zi - li);
        out.quote(state, id_i, Side::Ask, EventKind::Cancellation, zi + 0.5 * li);
        out.quote(state, id_i, Side::Ask, EventKind::Submission, zi);
        // Seller: ask filled, fresh ask above; bid moved up.
        out.quote(state, id_j, Side::Ask, EventKind::Submission, zj + lj);
        out.quote(state, id_j, Side::Bid, EventKind::Cancellation, zj - 0.5 * lj);
        out.quote(state, id_j, Side::Bid, EventKind::Submission, zj);
    }
    if out.capture_positions {
        out.positions.extend(state.traders.iter().map(|t| t.z));
    }
    out.transactions.push(TransactionEvent {
        tick: state.tick,
        time: state.t,
        buyer: state.traders[i].id,
        seller: state.traders[j].id,
        price,
        interval,
        dp,
    });
}

/// Settles every crossing (`b_i >= a_j`) in ascending order of estimated
/// crossing time, rescanning after each settlement since a requote jump can
/// create a new crossing. Ties break on trader index. Returns the number of
/// settlements.
pub fn match_and_settle(state: &mut SimState, out: &mut StepOutput) -> usize {
    let n = state.n();
    let cap = 4 * n * n + 16;
    let mut settled = 0;
    let mut bidders = Vec::new();
    let mut askers = Vec::new();
    loop {
        let (best_bid, best_ask) = state.best_quotes();
        if best_bid < best_ask {
            break;
        }
        bidders.clear();
        askers.clear();
        for (k, t) in state.traders.iter().enumerate() {
            if t.bid() >= best_ask {
                bidders.push(k);
            }
            if t.ask() <= best_bid {
                askers.push(k);
            }
        }
        let mut chosen: Option<(f64, usize, usize)> = None;
        for &i in &bidders {
            for &j in &askers {
                if i == j || state.traders[i].bid() < state.traders[j].ask() {
                    continue;
                }
                let f = crossing_fraction(state, i, j);
                let better = match chosen {
                    None => true,
                    Some((fb, ib, jb)) => (f, i, j) < (fb, ib, jb),
                };
                if better {
                    chosen = Some((f, i, j));
                }
            }
        }
        let (_, i, j) = chosen.expect("a crossing implies a crossing pair");
        settle_pair(state, i, j, out);
        settled += 1;
        assert!(settled <= cap, "settlement did not terminate after {cap} transactions");
    }
    settled
}

/// One Euler-Maruyama step of every midprice followed by settlement.
pub fn step_continuous(
    state: &mut SimState,
    config: &ExperimentConfig,
    rng: &mut SimRng,
    out: &mut StepOutput,
) {
    state.mark_positions();
    out.begin(state);
    let mu = drift(state.dp, config) * config.dt;
    let sd = config.sigma * config.dt.sqrt();
    for k in 0..state.n() {
        let g: f64 = rng.traders[k].sample(StandardNormal);
        let z_old = state.traders[k].z;
        let z_new = z_old + mu + sd * g;
        state.traders[k].z = z_new;
        if out.record_book {
            out.requote(state, k, z_old, z_new);
        }
    }
    state.t += config.dt;
    match_and_settle(state, out);
}

/// Requote jump of the Poisson variant for the given `dp`.
#[inline]
fn poisson_jump(config: &ExperimentConfig, dp: f64, g: f64) -> f64 {
    config.c() * config.dt_can * (dp / config.dp_star).tanh() + config.sigma * config.dt_can.sqrt() * g
}

fn requote_trader(
    state: &mut SimState,
    config: &ExperimentConfig,
    rng: &mut SimRng,
    k: usize,
    out: &mut StepOutput,
) {
    let g: f64 = rng.traders[k].sample(StandardNormal);
    let z_old = state.traders[k].z;
    let z_new = z_old + poisson_jump(config, state.dp, g);
    state.traders[k].z = z_new;
    if out.record_book {
        out.requote(state, k, z_old, z_new);
    }
}

/// One step of the Poisson requote variant: each trader requotes with
/// probability `dt / dt_can`, then crossings are settled.
pub fn step_poisson(
    state: &mut SimState,
    config: &ExperimentConfig,
    rng: &mut SimRng,
    out: &mut StepOutput,
) {
    let p = config.dt / config.dt_can;
    assert!(p <= 1.0, "Poisson variant needs dt <= dt_can");
    state.mark_positions();
    out.begin(state);
    let mut moved = false;
    for k in 0..state.n() {
        if rng.traders[k].random::<f64>() < p {
            requote_trader(state, config, rng, k, out);
            moved = true;
        }
    }
    state.t += config.dt;
    if moved {
        match_and_settle(state, out);
    }
}

/// Event-skipping driver for the Poisson variant. Each trader's next
/// requote step is drawn geometrically, which has the same law as drawing
/// a Bernoulli trial per step, so steps without requotes are skipped.
#[derive(Clone, Debug)]
pub struct PoissonClock {
    step: u64,
    queue: BinaryHeap<Reverse<(u64, u32)>>,
    log_keep: f64,
    batch: Vec<usize>,
}

impl PoissonClock {
    pub fn new(config: &ExperimentConfig, rng: &mut SimRng) -> Self {
        let p = config.dt / config.dt_can;
        assert!(p <= 1.0, "Poisson variant needs dt <= dt_can");
        let mut clock = Self {
            step: 0,
            queue: BinaryHeap::with_capacity(rng.traders.len()),
            log_keep: (1.0 - p).ln(),
            batch: Vec::new(),
        };
        for k in 0..rng.traders.len() {
            let next = clock.draw_next(rng, k);
            clock.queue.push(Reverse((next, k as u32)));
        }
        clock
    }

    fn draw_next(&self, rng: &mut SimRng, k: usize) -> u64 {
        if self.log_keep == f64::NEG_INFINITY {
            return self.step + 1;
        }
        let u = rng.traders[k].open01();
        self.step + 1 + (u.ln() / self.log_keep).floor() as u64
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Step index of the next requote.
    pub fn next_step(&self) -> u64 {
        self.queue.peek().map(|r| r.0 .0).unwrap_or(u64::MAX)
    }

    /// Jumps to the next step with at least one requote, applies the
    /// requotes and settles. `state.t` is set to `step * dt`.
    pub fn advance(
        &mut self,
        state: &mut SimState,
        config: &ExperimentConfig,
        rng: &mut SimRng,
        out: &mut StepOutput,
    ) {
        let step = self.next_step();
        self.step = step;
        self.batch.clear();
        while let Some(&Reverse((s, k))) = self.queue.peek() {
            if s != step {
                break;
            }
            self.queue.pop();
            self.batch.push(k as usize);
        }
        self.batch.sort_unstable();
        state.mark_positions();
        out.begin(state);
        for idx in 0..self.batch.len() {
            let k = self.batch[idx];
            requote_trader(state, config, rng, k, out);
            let next = self.draw_next(rng, k);
            self.queue.push(Reverse((next, k as u32)));
        }
        state.t = step as f64 * config.dt;
        match_and_settle(state, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microsim::state::TraderState;

    fn pair(z1: f64, l1: f64, z2: f64, l2: f64) -> SimState {
        SimState::from_traders(vec![TraderState::new(0, z1, l1), TraderState::new(1, z2, l2)])
    }

    #[test]
    fn touching_pair_transacts_at_bid() {
        // z1 - z2 = (4 + 6)/2 exactly.
        let mut s = pair(5.0, 4.0, 0.0, 6.0);
        s.p = 1.0;
        let mut out = StepOutput::default();
        assert_eq!(match_and_settle(&mut s, &mut out), 1);
        let e = out.transactions[0];
        assert_eq!((e.buyer, e.seller), (0, 1));
        assert_eq!(e.price, 3.0);
        assert_eq!(e.dp, 2.0);
        assert_eq!(s.tick, 1);
        assert_eq!((s.traders[0].z, s.traders[1].z), (3.0, 3.0));
        assert!(!s.has_crossing());
    }

    #[test]
    fn settlement_strictly_reduces_gap() {
        let mut s = pair(5.5, 4.0, 0.0, 6.0);
        let mut out = StepOutput::default();
        match_and_settle(&mut s, &mut out);
        let gap = s.traders[0].z - s.traders[1].z;
        assert!((gap - 0.5).abs() < 1e-12);
        assert!(gap < 5.0);
    }

    #[test]
    fn no_crossing_no_event() {
        let mut s = pair(4.9, 4.0, 0.0, 6.0);
        let mut out = StepOutput::default();
        assert_eq!(match_and_settle(&mut s, &mut out), 0);
        assert_eq!(s.tick, 0);
    }

    #[test]
    fn spreads_survive_steps() {
        let cfg = ExperimentConfig::new(10, 5.0, 2.0, 3.0, 1.0, 10, 1).unwrap();
        let mut rng = SimRng::new(1, 10);
        let mut s = crate::microsim::init_state(&cfg, &mut rng);
        let spreads: Vec<f64> = s.traders.iter().map(|t| t.spread()).collect();
        let mut out = StepOutput::default();
        for _ in 0..5000 {
            out.clear();
            step_continuous(&mut s, &cfg, &mut rng, &mut out);
            assert!(!s.has_crossing());
        }
        assert!(s.tick > 0);
        for (t, l) in s.traders.iter().zip(&spreads) {
            assert_eq!(t.spread(), *l);
            assert!(((t.ask() - t.bid()) - l).abs() <= 1e-9 * (1.0 + t.z.abs()));
        }
    }

    #[test]
    fn poisson_step_without_requotes_only_moves_clock() {
        let cfg = ExperimentConfig::new(5, 5.0, 2.0, 3.0, 1.0, 10, 1)
            .unwrap()
            .with_dt_can(1e12)
            .unwrap();
        let mut rng = SimRng::new(4, 5);
        let mut s = crate::microsim::init_state(&cfg, &mut rng);
        let before = s.traders.clone();
        let mut out = StepOutput::default();
        step_poisson(&mut s, &cfg, &mut rng, &mut out);
        assert_eq!(s.traders, before);
        assert_eq!(s.t, cfg.dt);
        assert!(out.transactions.is_empty());
    }

    #[test]
    fn clock_matches_bernoulli_rate() {
        let cfg = ExperimentConfig::new(20, 5.0, 2.0, 0.0, 1.0, 10, 1)
            .unwrap()
            .with_dt_can(1.0)
            .unwrap()
            .with_dt(0.05)
            .unwrap();
        let mut rng = SimRng::new(8, 20);
        let mut s = crate::microsim::init_state(&cfg, &mut rng);
        let mut clock = PoissonClock::new(&cfg, &mut rng);
        let mut out = StepOutput::new(true, false);
        let mut requotes = 0usize;
        while clock.next_step() < 200_000 {
            out.clear();
            clock.advance(&mut s, &cfg, &mut rng, &mut out);
            requotes += out
                .book
                .iter()
                .filter(|e| e.kind == EventKind::Cancellation && e.side == Side::Bid)
                .count();
            requotes -= out.transactions.len();
        }
        // 20 traders * 200000 steps * 0.05
        let expected: f64 = 20.0 * 200_000.0 * 0.05;
        let sd = (expected * 0.95).sqrt();
        assert!(((requotes as f64) - expected).abs() < 4.0 * sd, "{requotes}");
    }

    #[test]
    fn book_events_for_settlement() {
        let mut s = pair(5.0, 4.0, 0.0, 6.0);
        let mut out = StepOutput::new(true, false);
        out.begin(&s);
        match_and_settle(&mut s, &mut out);
        assert_eq!(out.book.len(), 6);
        let subs = out
            .book
            .iter()
            .filter(|e| e.kind == EventKind::Submission)
            .count();
        assert_eq!(subs, 4);
        assert!(out.book.iter().all(|e| e.tick == 1));
    }
}
