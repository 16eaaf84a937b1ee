//! Full runs of the microscopic model with warmup and measurement probes.

use std::io;

use super::engine::{step_continuous, PoissonClock, StepOutput};
use super::state::{decompose_cm, init_state, SimRng, SimState};
use crate::config::ExperimentConfig;
use crate::par;
use crate::records::{RecordSink, TickRecord};
use crate::rng::RngStream;
use crate::stats::{LayeredAccumulator, Origin, ProfileAccumulator, StatsError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Euler-Maruyama integration of every midprice.
    Continuous,
    /// Requotes at Poisson times of mean `dt_can`.
    Poisson,
}

/// Order-book profile snapshots at a fixed time cadence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotProbe {
    pub interval: f64,
    pub bin_width: f64,
    /// Profiles cover `[lo, hi)`; the rest goes to under/overflow.
    pub lo: f64,
    pub hi: f64,
    /// The run continues past `n_transactions` until this many post-warmup
    /// snapshots are taken.
    pub min_snapshots: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayeredProbe {
    pub bin_width: f64,
    pub max_depth: f64,
}

/// Selects what a run measures besides the tick stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Probes {
    pub snapshots: Option<SnapshotProbe>,
    pub layered: Option<LayeredProbe>,
    /// Collect `(dp(T-1), z_i(T) - z_i(T-1))` for traders not involved in
    /// transaction `T`.
    pub response: bool,
    /// Abort when simulated time exceeds this without finishing.
    pub max_time: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("record sink failed: {0}")]
    Io(#[from] io::Error),
    #[error("invalid probe: {0}")]
    Probe(#[from] StatsError),
    #[error("no progress: {ticks} transactions by time {time}")]
    Stalled { time: f64, ticks: u64 },
}

/// Measurements of one run. Tick records cover the post-warmup window.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub ticks: Vec<TickRecord>,
    pub profile_cm: Option<ProfileAccumulator>,
    pub profile_mid: Option<ProfileAccumulator>,
    pub layered: Option<LayeredAccumulator>,
    pub response: Vec<(f64, f64)>,
    pub steps: u64,
    /// Simulated time since the last warmup transaction.
    pub elapsed: f64,
    pub final_state: SimState,
}

impl SimOutput {
    pub fn intervals(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.interval).collect()
    }

    pub fn price_moves(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.dp).collect()
    }
}

fn take_snapshot(state: &SimState, cm: &mut ProfileAccumulator, mid: &mut ProfileAccumulator) {
    let (zc, _) = decompose_cm(state);
    let zm = state.market_midprice();
    cm.add_snapshot(state.traders.iter().map(|t| t.ask() - zc));
    mid.add_snapshot(state.traders.iter().map(|t| t.ask() - zm));
}

/// Runs one simulation from a fresh initial state. The first
/// `warmup_transactions` ticks are streamed flagged and excluded from every
/// probe.
pub fn run_simulation<S: RecordSink>(
    config: &ExperimentConfig,
    variant: Variant,
    rng: &mut SimRng,
    probes: &Probes,
    sink: &mut S,
) -> Result<SimOutput, SimError> {
    let mut state = init_state(config, rng);
    let warmup = config.warmup_transactions;
    let target = warmup + config.n_transactions;
    let record_book = probes.layered.is_some() || sink.wants_book_events();
    let mut out = StepOutput::new(record_book, probes.response);
    let mut clock = match variant {
        Variant::Poisson => Some(PoissonClock::new(config, rng)),
        Variant::Continuous => None,
    };

    let mut profiles = match probes.snapshots {
        Some(s) => Some((
            ProfileAccumulator::new(Origin::CentreOfMass, s.bin_width, s.lo, s.hi)?,
            ProfileAccumulator::new(Origin::MarketMid, s.bin_width, s.lo, s.hi)?,
        )),
        None => None,
    };
    let mut next_snapshot = probes.snapshots.map(|s| s.interval).unwrap_or(f64::INFINITY);
    let mut layered = match probes.layered {
        Some(l) => Some(LayeredAccumulator::new(l.bin_width, l.max_depth, warmup + 1)?),
        None => None,
    };

    let mut ticks = Vec::with_capacity(config.n_transactions as usize);
    let mut response = Vec::new();
    let mut prev_positions: Vec<f64> = Vec::new();
    let mut prev_dp = 0.0;
    let mut warmup_end_time = if warmup == 0 { Some(0.0) } else { None };
    let mut steps = 0u64;

    let done = |state: &SimState, profiles: &Option<(ProfileAccumulator, ProfileAccumulator)>| {
        state.tick >= target
            && match (probes.snapshots, profiles) {
                (Some(s), Some((cm, _))) => cm.n_snapshots() >= s.min_snapshots,
                _ => true,
            }
    };

    while !done(&state, &profiles) {
        let t_next = match &clock {
            Some(c) => c.next_step() as f64 * config.dt,
            None => state.t + config.dt,
        };
        if let Some((cm, mid)) = profiles.as_mut() {
            let interval = probes.snapshots.map(|s| s.interval).unwrap_or(f64::INFINITY);
            while next_snapshot < t_next {
                if state.tick > warmup {
                    take_snapshot(&state, cm, mid);
                }
                next_snapshot += interval;
            }
        }

        out.clear();
        match clock.as_mut() {
            Some(c) => c.advance(&mut state, config, rng, &mut out),
            None => step_continuous(&mut state, config, rng, &mut out),
        }
        steps += 1;

        if record_book {
            for e in &out.book {
                sink.book(e)?;
                if let Some(acc) = layered.as_mut() {
                    acc.push(e);
                }
            }
        }
        let n = state.n();
        for (k, ev) in out.transactions.iter().enumerate() {
            let in_warmup = ev.tick <= warmup;
            let record = TickRecord {
                tick: ev.tick,
                time: ev.time,
                interval: ev.interval,
                price: ev.price,
                dp: ev.dp,
                warmup: in_warmup,
            };
            sink.tick(&record)?;
            if ev.tick == warmup {
                warmup_end_time = Some(ev.time);
            }
            if !in_warmup {
                ticks.push(record);
            }
            if probes.response {
                let row = &out.positions[k * n..(k + 1) * n];
                if !in_warmup && !prev_positions.is_empty() {
                    let (b, s) = (ev.buyer as usize, ev.seller as usize);
                    for i in 0..n {
                        if i != b && i != s {
                            response.push((prev_dp, row[i] - prev_positions[i]));
                        }
                    }
                }
                prev_positions.clear();
                prev_positions.extend_from_slice(row);
                prev_dp = ev.dp;
            }
        }

        if let Some(max) = probes.max_time {
            if state.t > max {
                return Err(SimError::Stalled {
                    time: state.t,
                    ticks: state.tick,
                });
            }
        }
    }
    sink.flush()?;

    let elapsed = match warmup_end_time {
        Some(t0) => state.last_transaction_time - t0,
        None => 0.0,
    };
    let (profile_cm, profile_mid) = match profiles {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    Ok(SimOutput {
        ticks,
        profile_cm,
        profile_mid,
        layered,
        response,
        steps,
        elapsed,
        final_state: state,
    })
}

/// Runs `replicas` independent simulations with seeds derived from
/// `config.seed`, in parallel when the feature is enabled. `make_sink`
/// builds the sink of each replica.
pub fn run_replicas<S, F>(
    config: &ExperimentConfig,
    variant: Variant,
    probes: &Probes,
    replicas: usize,
    make_sink: F,
) -> Vec<Result<(SimOutput, S), SimError>>
where
    S: RecordSink + Send,
    F: Fn(usize) -> io::Result<S> + Sync + Send,
{
    par::map_indices(replicas, |r| {
        let seed = RngStream::replica_seed(config.seed, r as u64);
        let cfg = config.clone().with_seed(seed);
        let mut rng = SimRng::new(seed, cfg.n_traders);
        let mut sink = make_sink(r)?;
        let output = run_simulation(&cfg, variant, &mut rng, probes, &mut sink)?;
        Ok((output, sink))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{CollectSink, NullSink};

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::new(10, 5.0, 2.0, 1.0, 1.0, 500, 11)
            .unwrap()
            .with_transactions(500, 50)
    }

    #[test]
    fn tick_count_and_warmup_flags() {
        let c = cfg();
        let mut sink = CollectSink::ticks_only();
        let out = run_simulation(
            &c,
            Variant::Continuous,
            &mut SimRng::new(c.seed, c.n_traders),
            &Probes::default(),
            &mut sink,
        )
        .unwrap();
        assert_eq!(out.ticks.len(), 500);
        assert_eq!(sink.ticks.iter().filter(|t| t.warmup).count(), 50);
        assert!(sink.ticks.windows(2).all(|w| w[1].tick == w[0].tick + 1));
        let total: f64 = out.ticks.iter().map(|t| t.interval).sum();
        assert!((total - out.elapsed).abs() < 1e-9 * out.elapsed.max(1.0));
    }

    #[test]
    fn deterministic_ticks() {
        let c = cfg();
        let run = || {
            let mut sink = CollectSink::ticks_only();
            run_simulation(
                &c,
                Variant::Poisson,
                &mut SimRng::new(c.seed, c.n_traders),
                &Probes::default(),
                &mut sink,
            )
            .unwrap();
            sink.ticks
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn replicas_have_distinct_seeds() {
        let c = cfg();
        let res = run_replicas(&c, Variant::Continuous, &Probes::default(), 3, |_| {
            Ok(NullSink)
        });
        let prices: Vec<f64> = res
            .into_iter()
            .map(|r| r.unwrap().0.ticks[0].price)
            .collect();
        assert!(prices[0] != prices[1] && prices[1] != prices[2]);
    }

    #[test]
    fn snapshots_reach_minimum() {
        let c = cfg();
        let probes = Probes {
            snapshots: Some(SnapshotProbe {
                interval: c.tau_star(),
                bin_width: 1.0,
                lo: -10.0,
                hi: 40.0,
                min_snapshots: 800,
            }),
            ..Probes::default()
        };
        let out = run_simulation(
            &c,
            Variant::Continuous,
            &mut SimRng::new(1, c.n_traders),
            &probes,
            &mut NullSink,
        )
        .unwrap();
        let cm = out.profile_cm.unwrap();
        assert!(cm.n_snapshots() >= 800);
        assert_eq!(cm.snapshot().total(), cm.n_snapshots() * 10);
    }

    #[test]
    fn stalled_run_reported() {
        let c = ExperimentConfig::new(2, 1e6, 2.0, 0.0, 1.0, 10, 1)
            .unwrap()
            .with_dt(0.01)
            .unwrap();
        let probes = Probes {
            max_time: Some(1.0),
            ..Probes::default()
        };
        let r = run_simulation(
            &c,
            Variant::Continuous,
            &mut SimRng::new(1, 2),
            &probes,
            &mut NullSink,
        );
        assert!(matches!(r, Err(SimError::Stalled { .. })));
    }
}
