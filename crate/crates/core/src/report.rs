//! Plain-text tables written from completed analyses.
//!
//! Every table is tab-separated with one header line naming the columns and
//! their units. Rows come out in a fixed order and numbers use the shortest
//! round-trip formatting, so equal analyses give byte-identical files.

use std::fs;
use std::io;
use std::path::Path;

use crate::kinetics::{avg_orderbook_profile_mass, IntervalLaw};
use crate::recipe::Analyses;
use crate::stats::{moments, Ccdf};

/// CCDF tables are thinned to at most this many rows.
pub const CCDF_ROWS: usize = 2000;

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub quantity: String,
    pub value: f64,
    /// NaN when no uncertainty is attached.
    pub stderr: f64,
    pub unit: &'static str,
}

fn row(quantity: impl Into<String>, value: f64, stderr: f64, unit: &'static str) -> SummaryRow {
    SummaryRow {
        quantity: quantity.into(),
        value,
        stderr,
        unit,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Fitted and derived scalars of an analysis, in report order.
pub fn summary_rows(a: &Analyses) -> Vec<SummaryRow> {
    let nan = f64::NAN;
    let mut out = vec![
        row("replicas", a.replica_seeds.len() as f64, nan, "count"),
        row("ticks", a.n_ticks as f64, nan, "count"),
    ];
    if let Some(p) = &a.profile {
        for (h, d) in &p.frames {
            out.push(row(format!("profile_l1_{}", h.origin), *d, nan, "1"));
        }
        if let Some((h, _)) = p.frames.first() {
            out.push(row("profile_snapshots", h.n_snapshots as f64, nan, "count"));
        }
        out.push(row("profile_l_star", p.l_star, nan, "tpip"));
    }
    if let Some(i) = &a.intervals {
        let se = if a.interval_samples.len() > 1 {
            (moments(&a.interval_samples).variance / a.interval_samples.len() as f64).sqrt()
        } else {
            nan
        };
        out.push(row("interval_count", i.n as f64, nan, "count"));
        out.push(row("interval_mean", i.mean, se, "time"));
        if let (Some(t), Some(r), Some(ks)) = (i.tau_star, i.mean_ratio(), i.ks) {
            out.push(row("interval_tau_star", t, nan, "time"));
            out.push(row("interval_mean_ratio", r, se / t, "1"));
            out.push(row("interval_ks", ks, nan, "1"));
        }
    }
    if let Some(t) = &a.price_tail {
        let m = &t.moments;
        out.push(row("dp_mean", m.mean, (m.variance / m.n.max(1) as f64).sqrt(), "tpip"));
        out.push(row("dp_std", m.variance.sqrt(), nan, "tpip"));
        out.push(row("dp_skewness", m.skewness, nan, "1"));
        out.push(row("dp_excess_kurtosis", m.excess_kurtosis, nan, "1"));
        if let Some(f) = t.fit {
            out.push(row("kappa", f.kappa, f.stderr, "tpip"));
            out.push(row("kappa_fit_x_min", f.range.x_min, nan, "tpip"));
            out.push(row("kappa_fit_x_max", f.range.x_max, nan, "tpip"));
        }
        if let Some(k) = t.predicted_kappa {
            out.push(row("kappa_predicted", k, nan, "tpip"));
        }
        if let Some(e) = t.kappa_error() {
            out.push(row("kappa_relative_error", e, nan, "1"));
        }
        if let Some(c) = t.curvature {
            out.push(row("tail_slope_change", c.relative_slope_change, nan, "1"));
            out.push(row("tail_exponential_consistent", flag(c.consistent), nan, "bool"));
        }
    }
    if let Some(l) = &a.layered {
        out.push(row("layered_ticks", l.n_ticks as f64, nan, "count"));
        out.push(row("gamma_c", l.gamma_c.unwrap_or(nan), nan, "tpip"));
        out.push(row("inner_corr", l.inner_corr.unwrap_or(nan), nan, "1"));
        out.push(row("inner_slope", l.inner_slope.unwrap_or(nan), nan, "1"));
        let max_abs = l
            .c_minus
            .iter()
            .chain(&l.c_plus)
            .filter(|c| c.is_finite())
            .fold(0.0f64, |m, c| m.max(c.abs()));
        out.push(row("layered_max_abs_corr", max_abs, nan, "1"));
    }
    if let Some(f) = &a.response {
        out.push(row("tanh_c", f.c_hat, f.c_stderr, "tpip"));
        out.push(row("tanh_dp_star", f.dp_star_hat, nan, "tpip"));
        out.push(row("tanh_dp_star_at_bound", flag(f.dp_star_at_bound), nan, "bool"));
        out.push(row("response_sigma", f.sigma_hat, nan, "tpip"));
        out.push(row("response_max_std_deviation", f.max_std_deviation, nan, "1"));
    }
    if let Some(f) = &a.flow {
        out.push(row("book_volume", f.mean_volume, nan, "orders"));
        out.push(row("book_volume_predicted", f.predicted_volume, nan, "orders"));
        out.push(row("fill_ratio", f.fill_ratio, nan, "1"));
        out.push(row("fill_ratio_predicted", f.predicted_fill_ratio, nan, "1"));
        out.push(row("book_drains", f.drains as f64, nan, "count"));
    }
    if let Some(m) = &a.mixture {
        out.push(row("mixture_exponent", m.fit.exponent, m.fit.stderr, "1"));
        out.push(row("mixture_hill_exponent", m.fit.hill, m.fit.hill_stderr, "1"));
        out.push(row("mixture_exact_exponent", m.exact_exponent, nan, "1"));
        out.push(row("mixture_tail_samples", m.fit.n_tail as f64, nan, "count"));
        out.push(row("mixture_x_min", m.x_min, nan, "tpip"));
    }
    if let Some(checks) = &a.oracle {
        for c in checks {
            out.push(row(format!("oracle_{}", c.name), c.value, nan, "1"));
        }
    }
    if let Some(c) = &a.comparison {
        if let Some(k) = c.ks_interval {
            out.push(row("reference_ks_interval", k, nan, "1"));
        }
        if let Some(k) = c.ks_abs_dp {
            out.push(row("reference_ks_abs_dp", k, nan, "1"));
        }
        if let Some(r) = c.l1_improvement {
            out.push(row("reference_l1_improvement", r, nan, "1"));
        }
    }
    if let Some(s) = &a.dt_sensitivity {
        for (name, full, half) in &s.rows {
            out.push(row(format!("dt_half_{name}"), *half, nan, "1"));
            out.push(row(format!("dt_half_{name}_change"), half - full, nan, "1"));
        }
    }
    out
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == 0.0 || (1e-4..1e9).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join("\t");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    s
}

pub fn summary_table(a: &Analyses) -> String {
    table(
        &["quantity", "value", "stderr", "unit"],
        summary_rows(a)
            .into_iter()
            .map(|r| vec![r.quantity, num(r.value), num(r.stderr), r.unit.to_string()]),
    )
}

fn ccdf_table(x_col: &str, ccdf: &Ccdf, theory: Option<&dyn Fn(f64) -> f64>) -> String {
    let thin = ccdf.thinned(CCDF_ROWS);
    let pts = thin.x.iter().zip(&thin.p);
    match theory {
        Some(f) => table(
            &[x_col, "ccdf", "theory_ccdf"],
            pts.map(|(&x, &p)| vec![num(x), num(p), num(f(x))]),
        ),
        None => table(&[x_col, "ccdf"], pts.map(|(&x, &p)| vec![num(x), num(p)])),
    }
}

/// Writes every table the analysis supports into `dir`, recursing into
/// `dt_half/` and `reference/` for the companion runs.
pub fn emit_report(a: &Analyses, dir: &Path) -> io::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> io::Result<()> {
        fs::write(dir.join(name), body)?;
        written.push(name.to_string());
        Ok(())
    };

    put("summary.tsv", summary_table(a))?;

    if let Some(p) = &a.profile {
        for (h, _) in &p.frames {
            let w = h.bin_width;
            let rows = h
                .centers()
                .into_iter()
                .zip(h.density())
                .zip(h.stderr())
                .enumerate()
                .map(|(k, ((c, d), e))| {
                    let (lo, hi) = h.bin_edges(k);
                    let th = avg_orderbook_profile_mass(lo, hi, p.l_star).unwrap_or(f64::NAN) / w;
                    vec![num(c), num(d), num(e), num(th)]
                });
            put(
                &format!("profile_{}.tsv", h.origin),
                table(
                    &["r_tpip", "density_per_tpip", "stderr_per_tpip", "theory_per_tpip"],
                    rows,
                ),
            )?;
        }
    }
    if let Some(i) = &a.intervals {
        let law = i.tau_star.map(IntervalLaw::new);
        let f = law.map(|l| move |t: f64| l.ccdf(t));
        let body = match &f {
            Some(f) => ccdf_table("tau_time", &i.ccdf, Some(f)),
            None => ccdf_table("tau_time", &i.ccdf, None),
        };
        put("intervals_ccdf.tsv", body)?;
    }
    if let Some(t) = &a.price_tail {
        put("price_ccdf.tsv", ccdf_table("dp_abs_tpip", &t.ccdf, None))?;
    }
    if let Some(l) = &a.layered {
        let rows = l
            .depth
            .iter()
            .zip(&l.c_minus)
            .zip(&l.c_plus)
            .map(|((r, m), p)| vec![num(*r), num(*m), num(*p)]);
        put("layered.tsv", table(&["r_tpip", "C_minus", "C_plus"], rows))?;
    }
    if let Some(f) = &a.response {
        let rows = f.bins.iter().map(|b| {
            vec![
                num(b.center),
                b.count.to_string(),
                num(b.mean),
                num(b.std),
                num(f.c_hat * (b.center / f.dp_star_hat).tanh()),
            ]
        });
        put(
            "response.tsv",
            table(
                &["dp_tpip", "count", "mean_dz_tpip", "std_dz_tpip", "tanh_fit_tpip"],
                rows,
            ),
        )?;
    }
    if let Some(m) = &a.mixture {
        let mix = m.mixture;
        let exact = move |x: f64| mix.ccdf(x).unwrap_or(f64::NAN);
        put("mixture_ccdf.tsv", ccdf_table("dp_abs_tpip", &m.ccdf, Some(&exact)))?;
    }
    if let Some(checks) = &a.oracle {
        let rows = checks.iter().map(|c| {
            vec![
                c.name.to_string(),
                num(c.value),
                num(c.tolerance),
                u8::from(c.passed()).to_string(),
            ]
        });
        put(
            "oracle.tsv",
            table(&["check", "discrepancy", "tolerance", "passed"], rows),
        )?;
    }

    if let Some(h) = &a.halved {
        for f in emit_report(h, &dir.join("dt_half"))? {
            written.push(format!("dt_half/{f}"));
        }
    }
    if let Some(r) = &a.reference {
        for f in emit_report(r, &dir.join("reference"))? {
            written.push(format!("reference/{f}"));
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::{builtin_recipe, parse_recipe, run_recipe};

    fn small_run() -> Analyses {
        let text = builtin_recipe("tanh_response")
            .unwrap()
            .replace("n_transactions = 100000", "n_transactions = 3000");
        run_recipe(&parse_recipe(&text).unwrap(), None).unwrap()
    }

    #[test]
    fn reports_are_byte_identical() {
        let a = small_run();
        let b = small_run();
        let (da, db) = (tempdir("a"), tempdir("b"));
        let fa = emit_report(&a, &da).unwrap();
        let fb = emit_report(&b, &db).unwrap();
        assert_eq!(fa, fb);
        for f in &fa {
            assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f}");
        }
        fs::remove_dir_all(da).unwrap();
        fs::remove_dir_all(db).unwrap();
    }

    #[test]
    fn ccdf_table_descends() {
        let a = small_run();
        let dir = tempdir("ccdf");
        emit_report(&a, &dir).unwrap();
        let body = fs::read_to_string(dir.join("intervals_ccdf.tsv")).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next().unwrap(), "tau_time\tccdf\ttheory_ccdf");
        let p: Vec<f64> = lines
            .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(p.len() > 10);
        assert!(p.windows(2).all(|w| w[1] <= w[0]));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn summary_has_header_and_units() {
        let s = summary_table(&small_run());
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "quantity\tvalue\tstderr\tunit");
        assert!(s.contains("\ntanh_dp_star\t"));
        assert!(s.lines().all(|l| l.split('\t').count() == 4));
    }

    fn tempdir(tag: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("hftkin-report-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }
}
