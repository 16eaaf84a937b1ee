//! Per-transaction and per-quote records shared by both order-book models,
//! and the sinks they are streamed to.

use std::fmt;
use std::io::{self, Write};

/// One transaction in tick time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickRecord {
    /// Tick index, incremented per transaction.
    pub tick: u64,
    pub time: f64,
    /// Time since the previous transaction.
    pub interval: f64,
    pub price: f64,
    /// Price movement `p(T) - p(T-1)`.
    pub dp: f64,
    /// Set for ticks inside the warmup window.
    pub warmup: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bid,
    Ask,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Submission,
    Cancellation,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Submission => "submission",
            EventKind::Cancellation => "cancellation",
        })
    }
}

/// A change of a quoted price, located by its depth from the market
/// midprice (`z_M - b` for bids, `a - z_M` for asks).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BookEvent {
    pub time: f64,
    /// Number of transactions that happened before this event.
    pub tick: u64,
    pub side: Side,
    pub kind: EventKind,
    pub depth: f64,
    /// Trader id, or `u32::MAX` for anonymous orders.
    pub trader: u32,
}

/// Destination of record streams. One sink per replica.
pub trait RecordSink {
    fn tick(&mut self, record: &TickRecord) -> io::Result<()>;

    fn book(&mut self, _event: &BookEvent) -> io::Result<()> {
        Ok(())
    }

    /// Whether book events should be produced at all; they are numerous.
    fn wants_book_events(&self) -> bool {
        false
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps everything in memory.
#[derive(Clone, Debug, Default)]
pub struct CollectSink {
    pub ticks: Vec<TickRecord>,
    pub book_events: Vec<BookEvent>,
    pub collect_book: bool,
}

impl CollectSink {
    pub fn ticks_only() -> Self {
        Self::default()
    }

    pub fn with_book_events() -> Self {
        Self {
            collect_book: true,
            ..Self::default()
        }
    }
}

impl RecordSink for CollectSink {
    fn tick(&mut self, record: &TickRecord) -> io::Result<()> {
        self.ticks.push(*record);
        Ok(())
    }

    fn book(&mut self, event: &BookEvent) -> io::Result<()> {
        self.book_events.push(*event);
        Ok(())
    }

    fn wants_book_events(&self) -> bool {
        self.collect_book
    }
}

/// Discards records.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullSink;

impl RecordSink for NullSink {
    fn tick(&mut self, _record: &TickRecord) -> io::Result<()> {
        Ok(())
    }
}

pub const TICK_HEADER: &str = "tick\ttime\tinterval\tprice_tpip\tdp_tpip\twarmup";
pub const BOOK_HEADER: &str = "time\ttick\tside\tkind\tdepth_tpip\ttrader";

/// Streams tab-separated record files with a header line. Ticks and book
/// events go to separate writers.
pub struct TsvSink<W: Write> {
    ticks: W,
    book: Option<W>,
    wrote_tick_header: bool,
    wrote_book_header: bool,
}

impl<W: Write> TsvSink<W> {
    pub fn new(ticks: W, book: Option<W>) -> Self {
        Self {
            ticks,
            book,
            wrote_tick_header: false,
            wrote_book_header: false,
        }
    }

    pub fn into_inner(self) -> (W, Option<W>) {
        (self.ticks, self.book)
    }
}

impl<W: Write> RecordSink for TsvSink<W> {
    fn tick(&mut self, r: &TickRecord) -> io::Result<()> {
        if !self.wrote_tick_header {
            writeln!(self.ticks, "{TICK_HEADER}")?;
            self.wrote_tick_header = true;
        }
        writeln!(
            self.ticks,
            "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{}",
            r.tick,
            r.time,
            r.interval,
            r.price,
            r.dp,
            u8::from(r.warmup)
        )
    }

    fn book(&mut self, e: &BookEvent) -> io::Result<()> {
        let Some(w) = self.book.as_mut() else {
            return Ok(());
        };
        if !self.wrote_book_header {
            writeln!(w, "{BOOK_HEADER}")?;
            self.wrote_book_header = true;
        }
        writeln!(
            w,
            "{:.9e}\t{}\t{}\t{}\t{:.9e}\t{}",
            e.time, e.tick, e.side, e.kind, e.depth, e.trader
        )
    }

    fn wants_book_events(&self) -> bool {
        self.book.is_some()
    }

    fn flush(&mut self) -> io::Result<()> {
        self.ticks.flush()?;
        if let Some(w) = self.book.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

/// Parses a tick file written by [`TsvSink`].
pub fn read_ticks(text: &str) -> Result<Vec<TickRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TICK_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields", i + 2));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            Ok(TickRecord {
                tick: f[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
                time: num(f[1])?,
                interval: num(f[2])?,
                price: num(f[3])?,
                dp: num(f[4])?,
                warmup: f[5] == "1",
            })
        })
        .collect()
}

/// `None` discards records.
impl<S: RecordSink> RecordSink for Option<S> {
    fn tick(&mut self, record: &TickRecord) -> io::Result<()> {
        match self {
            Some(s) => s.tick(record),
            None => Ok(()),
        }
    }

    fn book(&mut self, event: &BookEvent) -> io::Result<()> {
        match self {
            Some(s) => s.book(event),
            None => Ok(()),
        }
    }

    fn wants_book_events(&self) -> bool {
        self.as_ref().is_some_and(|s| s.wants_book_events())
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_roundtrip() {
        let mut sink = TsvSink::new(Vec::new(), Some(Vec::new()));
        let r = TickRecord {
            tick: 3,
            time: 1.5,
            interval: 0.25,
            price: -12.125,
            dp: 3.0,
            warmup: false,
        };
        sink.tick(&r).unwrap();
        sink.book(&BookEvent {
            time: 1.0,
            tick: 2,
            side: Side::Ask,
            kind: EventKind::Cancellation,
            depth: 4.0,
            trader: 7,
        })
        .unwrap();
        let (ticks, book) = sink.into_inner();
        let text = String::from_utf8(ticks).unwrap();
        assert_eq!(read_ticks(&text).unwrap(), vec![r]);
        let book = String::from_utf8(book.unwrap()).unwrap();
        assert!(book.starts_with(BOOK_HEADER));
        assert!(book.contains("\task\tcancellation\t"));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_ticks("nope\n").is_err());
    }
}

