use std::fmt;

use super::StatsError;

/// Reference price that depths are measured from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    CentreOfMass,
    MarketMid,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::CentreOfMass => "cm",
            Origin::MarketMid => "mid",
        })
    }
}

/// Binned profile of quote depths on `[lo, lo + bins * bin_width)`.
/// Quotes outside the range are kept as under/overflow so normalization is
/// always against the total count.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileHistogram {
    pub origin: Origin,
    pub bin_width: f64,
    pub lo: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub n_snapshots: u64,
}

impl ProfileHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.bin_width * self.counts.len() as f64
    }

    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let a = self.lo + self.bin_width * k as f64;
        (a, a + self.bin_width)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|k| self.lo + self.bin_width * (k as f64 + 0.5))
            .collect()
    }

    /// Count divided by total count and bin width.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total().max(1) as f64 * self.bin_width;
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }

    /// Counting-error standard error of each density value.
    pub fn stderr(&self) -> Vec<f64> {
        let norm = self.total().max(1) as f64 * self.bin_width;
        self.counts
            .iter()
            .map(|&c| (c as f64).sqrt() / norm)
            .collect()
    }

    /// L1 distance between this histogram and a law binned identically.
    /// `mass(a, b)` is the law's probability of `[a, b)`; infinite bounds
    /// are passed for the under/overflow cells.
    pub fn l1_distance<F, E>(&self, mut mass: F) -> Result<f64, E>
    where
        F: FnMut(f64, f64) -> Result<f64, E>,
    {
        let total = self.total().max(1) as f64;
        let mut d = 0.0;
        for (k, &c) in self.counts.iter().enumerate() {
            let (a, b) = self.bin_edges(k);
            d += (c as f64 / total - mass(a, b)?).abs();
        }
        d += (self.underflow as f64 / total - mass(f64::NEG_INFINITY, self.lo)?).abs();
        d += (self.overflow as f64 / total - mass(self.hi(), f64::INFINITY)?).abs();
        Ok(d)
    }

    /// L1 distance between two histograms on the same binning.
    pub fn l1_between(&self, other: &ProfileHistogram) -> Result<f64, StatsError> {
        if self.counts.len() != other.counts.len()
            || self.bin_width != other.bin_width
            || self.lo != other.lo
        {
            return Err(StatsError::DegenerateBinning("binnings differ".into()));
        }
        let (ta, tb) = (self.total().max(1) as f64, other.total().max(1) as f64);
        let cells = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| (a, b))
            .chain([(self.underflow, other.underflow), (self.overflow, other.overflow)]);
        Ok(cells
            .map(|(a, b)| (a as f64 / ta - b as f64 / tb).abs())
            .sum())
    }
}

/// Accumulates quote depths snapshot by snapshot.
#[derive(Clone, Debug)]
pub struct ProfileAccumulator {
    hist: ProfileHistogram,
}

impl ProfileAccumulator {
    pub fn new(origin: Origin, bin_width: f64, lo: f64, hi: f64) -> Result<Self, StatsError> {
        if !(bin_width > 0.0) || !(hi > lo) {
            return Err(StatsError::DegenerateBinning(format!(
                "width {bin_width} on [{lo}, {hi})"
            )));
        }
        let bins = ((hi - lo) / bin_width).ceil() as usize;
        Ok(Self {
            hist: ProfileHistogram {
                origin,
                bin_width,
                lo,
                counts: vec![0; bins],
                underflow: 0,
                overflow: 0,
                n_snapshots: 0,
            },
        })
    }

    #[inline]
    pub fn add(&mut self, depth: f64) {
        let h = &mut self.hist;
        let u = (depth - h.lo) / h.bin_width;
        if u < 0.0 {
            h.underflow += 1;
        } else if u >= h.counts.len() as f64 {
            h.overflow += 1;
        } else {
            h.counts[u as usize] += 1;
        }
    }

    pub fn add_snapshot<I: IntoIterator<Item = f64>>(&mut self, depths: I) {
        for d in depths {
            self.add(d);
        }
        self.hist.n_snapshots += 1;
    }

    pub fn n_snapshots(&self) -> u64 {
        self.hist.n_snapshots
    }

    /// Adds another accumulator with identical binning.
    pub fn merge(&mut self, other: &ProfileAccumulator) -> Result<(), StatsError> {
        let (a, b) = (&mut self.hist, &other.hist);
        if a.counts.len() != b.counts.len() || a.bin_width != b.bin_width || a.lo != b.lo {
            return Err(StatsError::DegenerateBinning("binnings differ".into()));
        }
        for (x, y) in a.counts.iter_mut().zip(&b.counts) {
            *x += y;
        }
        a.underflow += b.underflow;
        a.overflow += b.overflow;
        a.n_snapshots += b.n_snapshots;
        Ok(())
    }

    pub fn finish(self) -> Result<ProfileHistogram, StatsError> {
        if self.hist.n_snapshots == 0 || self.hist.total() == 0 {
            return Err(StatsError::Empty);
        }
        Ok(self.hist)
    }

    pub fn snapshot(&self) -> &ProfileHistogram {
        &self.hist
    }
}

/// Histogram of per-snapshot quote depths on `[0, max_depth)`.
pub fn orderbook_histogram(
    snapshots: &[Vec<f64>],
    origin: Origin,
    bin_width: f64,
    max_depth: f64,
) -> Result<ProfileHistogram, StatsError> {
    if snapshots.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut acc = ProfileAccumulator::new(origin, bin_width, 0.0, max_depth)?;
    for s in snapshots {
        acc.add_snapshot(s.iter().copied());
    }
    acc.finish()
}
