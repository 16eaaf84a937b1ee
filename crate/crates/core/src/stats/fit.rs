use super::ccdf::{empirical_ccdf, Ccdf};
use super::moments::linear_regression;
use super::StatsError;

/// Inclusive abscissa window for a fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitRange {
    pub x_min: f64,
    pub x_max: f64,
}

impl FitRange {
    pub fn new(x_min: f64, x_max: f64) -> Self {
        Self { x_min, x_max }
    }

    /// Window between the points where the CCDF falls to `p_hi` and `p_lo`.
    pub fn by_probability(ccdf: &Ccdf, p_hi: f64, p_lo: f64) -> Self {
        Self {
            x_min: ccdf.quantile_x(p_hi),
            x_max: ccdf.quantile_x(p_lo),
        }
    }
}

/// Maximum number of CCDF points entering a shape diagnostic; points are
/// spread evenly in `log P` so the tail is not drowned by the bulk.
const FIT_POINTS: usize = 400;

/// Relative change of the local slope across the fit window above which a
/// curve is declared inconsistent with the fitted family.
pub const CURVATURE_TOLERANCE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialFit {
    pub kappa: f64,
    pub stderr: f64,
    pub n_points: usize,
    pub range: FitRange,
}

/// Least-squares slope of `log P(>= x)` against `x` over `range`, one point
/// per distinct sample; `kappa = -1 / slope`.
pub fn fit_exponential_decay(ccdf: &Ccdf, range: FitRange) -> Result<ExponentialFit, StatsError> {
    let pts: Vec<(f64, f64)> = ccdf.window(range.x_min, range.x_max).collect();
    if pts.len() < 5 {
        return Err(StatsError::TooFewPoints {
            needed: 5,
            got: pts.len(),
        });
    }
    if pts.iter().any(|(_, p)| *p <= 0.0) {
        return Err(StatsError::NonPositive);
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (_, slope, se) = linear_regression(&x, &y)
        .ok_or_else(|| StatsError::NonConvergence("degenerate abscissae".into()))?;
    if slope >= 0.0 {
        return Err(StatsError::NonConvergence(format!(
            "non-decaying CCDF (slope {slope})"
        )));
    }
    Ok(ExponentialFit {
        kappa: -1.0 / slope,
        stderr: se / (slope * slope),
        n_points: pts.len(),
        range,
    })
}

/// Shape diagnostic from a quadratic fit in the transformed coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curvature {
    /// `|slope(end) - slope(start)| / |mean slope|`.
    pub relative_slope_change: f64,
    pub consistent: bool,
}

fn solve3(mut a: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..4 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

fn curvature_of(u: &[f64], y: &[f64]) -> Option<Curvature> {
    if u.len() < 5 {
        return None;
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&ui, &yi) in u.iter().zip(y) {
        let v = ui - mu;
        let mut pw = 1.0;
        for k in 0..5 {
            s[k] += pw;
            if k < 3 {
                t[k] += pw * yi;
            }
            pw *= v;
        }
    }
    let b = solve3([
        [s[0], s[1], s[2], t[0]],
        [s[1], s[2], s[3], t[1]],
        [s[2], s[3], s[4], t[2]],
    ])?;
    let (lo, hi) = u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), &x| (a.min(x), c.max(x)));
    let slope_at = |x: f64| b[1] + 2.0 * b[2] * (x - mu);
    let (_, mean_slope, _) = linear_regression(u, y)?;
    let change = (slope_at(hi) - slope_at(lo)).abs() / mean_slope.abs();
    Some(Curvature {
        relative_slope_change: change,
        consistent: change < CURVATURE_TOLERANCE,
    })
}

fn window_points(ccdf: &Ccdf, range: FitRange) -> Vec<(f64, f64)> {
    ccdf.thinned(FIT_POINTS)
        .window(range.x_min, range.x_max)
        .filter(|(x, p)| *p > 0.0 && *x > 0.0)
        .collect()
}

/// Curvature of `log P` against `x`: an exponential tail is straight.
pub fn curvature_exponential(ccdf: &Ccdf, range: FitRange) -> Option<Curvature> {
    let pts = window_points(ccdf, range);
    let u: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    curvature_of(&u, &y)
}

/// Curvature of `log P` against `log x`: a power-law tail is straight.
pub fn curvature_powerlaw(ccdf: &Ccdf, range: FitRange) -> Option<Curvature> {
    let pts = window_points(ccdf, range);
    let u: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    curvature_of(&u, &y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    /// Log-log least-squares CCDF exponent.
    pub exponent: f64,
    pub stderr: f64,
    /// Maximum-likelihood (Hill) exponent over the same tail.
    pub hill: f64,
    pub hill_stderr: f64,
    pub n_tail: usize,
    pub curvature: Option<Curvature>,
}

impl PowerLawFit {
    /// Whether the tail is plausibly a power law.
    pub fn is_power_law(&self) -> bool {
        self.curvature.map(|c| c.consistent).unwrap_or(false)
    }
}

/// Minimum number of samples above `x_min`.
pub const MIN_TAIL_SAMPLES: usize = 500;

/// Tail exponent of samples above `x_min`. The CCDF fit stops where fewer
/// than thirty samples remain above a point.
pub fn fit_powerlaw_tail(samples: &[f64], x_min: f64) -> Result<PowerLawFit, StatsError> {
    let tail: Vec<f64> = samples.iter().copied().filter(|&x| x > x_min).collect();
    if tail.len() < MIN_TAIL_SAMPLES {
        return Err(StatsError::TooFewPoints {
            needed: MIN_TAIL_SAMPLES,
            got: tail.len(),
        });
    }
    let k = tail.len() as f64;
    let log_sum: f64 = tail.iter().map(|&x| (x / x_min).ln()).sum();
    let hill = k / log_sum;

    let ccdf = empirical_ccdf(&tail, false)?;
    let p_floor = 30.0 / k;
    let x_hi = ccdf.quantile_x(p_floor);
    let range = FitRange::new(ccdf.x[0], x_hi);
    let pts = window_points(&ccdf, range);
    if pts.len() < 5 {
        return Err(StatsError::TooFewPoints {
            needed: 5,
            got: pts.len(),
        });
    }
    let u: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (_, slope, se) = linear_regression(&u, &y)
        .ok_or_else(|| StatsError::NonConvergence("degenerate tail".into()))?;
    Ok(PowerLawFit {
        exponent: -slope,
        stderr: se,
        hill,
        hill_stderr: hill / k.sqrt(),
        n_tail: tail.len(),
        curvature: curvature_of(&u, &y),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhFitOptions {
    pub bin_width: f64,
    /// Bins with fewer samples are dropped.
    pub min_count: usize,
}

impl Default for TanhFitOptions {
    fn default() -> Self {
        Self {
            bin_width: 1.0,
            min_count: 100,
        }
    }
}

/// Conditional statistics of the response in one `dp` bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseBin {
    pub center: f64,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TanhFit {
    pub c_hat: f64,
    pub c_stderr: f64,
    pub dp_star_hat: f64,
    /// Square root of the pooled conditional variance.
    pub sigma_hat: f64,
    /// Largest `|std_bin / sigma_hat - 1|` over the retained bins.
    pub max_std_deviation: f64,
    /// Set when the saturation scale ran into the search boundary, i.e.
    /// the data do not determine it.
    pub dp_star_at_bound: bool,
    pub bins: Vec<ResponseBin>,
}

/// Fits `<dz | dp> = c tanh(dp / dp*)` to binned conditional means of
/// `(dp, dz)` pairs. Pairs with `dz == 0` are excluded.
pub fn fit_tanh_response(pairs: &[(f64, f64)], opts: TanhFitOptions) -> Result<TanhFit, StatsError> {
    let active: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|(x, y)| *y != 0.0 && x.is_finite() && y.is_finite())
        .collect();
    if active.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(opts.bin_width > 0.0) {
        return Err(StatsError::DegenerateBinning("bin width must be positive".into()));
    }
    let w = opts.bin_width;
    let lo = active.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = active.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    // Bins are centred on integer multiples of the width.
    let first = (lo / w).round() as i64;
    let last = (hi / w).round() as i64;
    let n_bins = (last - first + 1) as usize;
    if n_bins > 10_000_000 {
        return Err(StatsError::DegenerateBinning("too many bins".into()));
    }
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); n_bins];
    for &(x, y) in &active {
        let k = ((x / w).round() as i64 - first) as usize;
        let a = &mut acc[k];
        a.0 += 1;
        a.1 += y;
        a.2 += y * y;
    }
    let bins: Vec<ResponseBin> = acc
        .iter()
        .enumerate()
        .filter(|(_, a)| a.0 >= opts.min_count.max(2))
        .map(|(k, &(n, s, s2))| {
            let nf = n as f64;
            let mean = s / nf;
            let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
            ResponseBin {
                center: (first + k as i64) as f64 * w,
                count: n,
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    if bins.len() < 3 {
        return Err(StatsError::DegenerateBinning(format!(
            "{} bins with at least {} samples",
            bins.len(),
            opts.min_count
        )));
    }

    let x_abs_max = bins.iter().map(|b| b.center.abs()).fold(0.0, f64::max);
    if x_abs_max == 0.0 {
        return Err(StatsError::DegenerateBinning("all bins at dp = 0".into()));
    }
    // For fixed dp* the amplitude is linear least squares; profile it out and
    // search dp* on a log grid, then refine by golden section.
    let profile = |s: f64| -> (f64, f64) {
        let (mut sty, mut stt) = (0.0, 0.0);
        for b in &bins {
            let t = (b.center / s).tanh();
            sty += t * b.mean;
            stt += t * t;
        }
        let c = if stt > 0.0 { sty / stt } else { 0.0 };
        let rss: f64 = bins
            .iter()
            .map(|b| (b.mean - c * (b.center / s).tanh()).powi(2))
            .sum();
        (c, rss)
    };
    let (ls_lo, ls_hi) = ((w / 20.0).ln(), (1e3 * x_abs_max).ln());
    let grid = 400;
    let mut best = (f64::INFINITY, 0usize);
    for g in 0..=grid {
        let ls = ls_lo + (ls_hi - ls_lo) * g as f64 / grid as f64;
        let (_, rss) = profile(ls.exp());
        if !rss.is_finite() {
            return Err(StatsError::NonConvergence("non-finite residual".into()));
        }
        if rss < best.0 {
            best = (rss, g);
        }
    }
    let at_bound = best.1 == 0 || best.1 == grid;
    let step = (ls_hi - ls_lo) / grid as f64;
    let center = ls_lo + step * best.1 as f64;
    let (mut a, mut b) = ((center - step).max(ls_lo), (center + step).min(ls_hi));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c1 = b - phi * (b - a);
    let mut c2 = a + phi * (b - a);
    let mut f1 = profile(c1.exp()).1;
    let mut f2 = profile(c2.exp()).1;
    for _ in 0..100 {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - phi * (b - a);
            f1 = profile(c1.exp()).1;
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + phi * (b - a);
            f2 = profile(c2.exp()).1;
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let dp_star_hat = (0.5 * (a + b)).exp();
    let (c_hat, _) = profile(dp_star_hat);

    let (mut num, mut stt) = (0.0, 0.0);
    for bn in &bins {
        let t = (bn.center / dp_star_hat).tanh();
        num += t * t * bn.std * bn.std / bn.count as f64;
        stt += t * t;
    }
    let c_stderr = num.sqrt() / stt;

    let total: usize = bins.iter().map(|b| b.count).sum();
    let pooled = bins
        .iter()
        .map(|b| b.std * b.std * b.count as f64)
        .sum::<f64>()
        / total as f64;
    let sigma_hat = pooled.sqrt();
    let max_std_deviation = bins
        .iter()
        .map(|b| (b.std / sigma_hat - 1.0).abs())
        .fold(0.0, f64::max);

    Ok(TanhFit {
        c_hat,
        c_stderr,
        dp_star_hat,
        sigma_hat,
        max_std_deviation,
        dp_star_at_bound: at_bound,
        bins,
    })
}
