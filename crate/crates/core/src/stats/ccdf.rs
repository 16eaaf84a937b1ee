use super::StatsError;

/// Right-continuous empirical CCDF, `P(>= x)`, at the distinct sample
/// values in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct Ccdf {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Number of samples behind the curve.
    pub n: usize,
}

impl Ccdf {
    /// `P(>= x)` for an arbitrary `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.x.partition_point(|&v| v < x);
        if idx >= self.x.len() {
            0.0
        } else {
            self.p[idx]
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Points with `x` in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x
            .iter()
            .zip(&self.p)
            .filter(move |(x, _)| **x >= lo && **x <= hi)
            .map(|(x, p)| (*x, *p))
    }

    /// Smallest `x` with `P(>= x) <= p`.
    pub fn quantile_x(&self, p: f64) -> f64 {
        let idx = self.p.partition_point(|&v| v > p);
        self.x[idx.min(self.x.len() - 1)]
    }

    /// At most `max_points` points, evenly spaced in `log P`, for fitting.
    pub fn thinned(&self, max_points: usize) -> Ccdf {
        if self.x.len() <= max_points {
            return self.clone();
        }
        let (lp0, lp1) = (self.p[0].ln(), self.p[self.p.len() - 1].ln());
        let mut keep = Vec::with_capacity(max_points);
        let mut last = usize::MAX;
        for k in 0..max_points {
            let target = lp0 + (lp1 - lp0) * k as f64 / (max_points - 1) as f64;
            let idx = self
                .p
                .partition_point(|&v| v.ln() > target)
                .min(self.x.len() - 1);
            if idx != last {
                keep.push(idx);
                last = idx;
            }
        }
        Ccdf {
            x: keep.iter().map(|&i| self.x[i]).collect(),
            p: keep.iter().map(|&i| self.p[i]).collect(),
            n: self.n,
        }
    }
}

/// Builds the step CCDF of `samples`. With `exclude_max`, the single largest
/// sample is dropped as an outlier first.
pub fn empirical_ccdf(samples: &[f64], exclude_max: bool) -> Result<Ccdf, StatsError> {
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| !x.is_nan()).collect();
    xs.sort_by(f64::total_cmp);
    if exclude_max {
        xs.pop();
    }
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = xs.len();
    let mut x = Vec::new();
    let mut p = Vec::new();
    let mut i = 0;
    while i < n {
        x.push(xs[i]);
        p.push((n - i) as f64 / n as f64);
        let v = xs[i];
        while i < n && xs[i] == v {
            i += 1;
        }
    }
    Ok(Ccdf { x, p, n })
}
