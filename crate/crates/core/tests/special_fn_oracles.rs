//! Special functions against high-precision reference tables generated by
//! `tests/data/gen_oracles.py` (mpmath, 80 significant digits).

use ballot_audit::special_fn::{
    log_gamma, reg_inc_beta, student_t_cdf, student_t_quantile, student_t_sf,
};

fn table(name: &str) -> Vec<Vec<f64>> {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    let mut rdr = csv::Reader::from_path(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    rdr.records()
        .map(|r| r.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        ((a - b) / b).abs()
    }
}

#[test]
fn student_t_tails_match_reference() {
    let rows = table("student_t_oracle.csv");
    assert!(rows.len() > 250);
    let mut worst = (0.0, 0.0, 0.0);
    for r in &rows {
        let (t, nu, sf, cdf) = (r[0], r[1], r[2], r[3]);
        let got_sf = student_t_sf(t, nu).unwrap().value;
        let got_cdf = student_t_cdf(t, nu).unwrap();
        let e = rel(got_sf, sf).max(rel(got_cdf, cdf));
        if e > worst.0 {
            worst = (e, t, nu);
        }
    }
    assert!(
        worst.0 < 1e-12,
        "worst relative error {:e} at t = {}, nu = {}",
        worst.0,
        worst.1,
        worst.2
    );
}

#[test]
fn student_t_log_tail_matches_reference() {
    for r in table("student_t_oracle.csv") {
        let (t, nu, sf) = (r[0], r[1], r[2]);
        let got = student_t_sf(t, nu).unwrap().log_value;
        assert!(
            (got - sf.ln()).abs() < 1e-12 * sf.ln().abs().max(1.0),
            "t = {t}, nu = {nu}"
        );
    }
}

#[test]
fn student_t_quantiles_match_reference() {
    for r in table("student_t_quantile_oracle.csv") {
        let (p, nu, t) = (r[0], r[1], r[2]);
        let got = student_t_quantile(p, nu).unwrap();
        assert!(rel(got, t) < 1e-10, "p = {p}, nu = {nu}: {got} vs {t}");
    }
}

#[test]
fn log_gamma_matches_reference() {
    let mut worst = (0.0, 0.0);
    for r in table("log_gamma_oracle.csv") {
        let (x, lg) = (r[0], r[1]);
        let got = log_gamma(x).unwrap();
        // relative where |lgamma| is not near a zero (x = 1, 2), absolute otherwise
        let e = (got - lg).abs() / lg.abs().max(1.0);
        if e > worst.0 {
            worst = (e, x);
        }
    }
    assert!(
        worst.0 < 1e-13,
        "worst error {:e} at x = {}",
        worst.0,
        worst.1
    );
}

#[test]
fn inc_beta_matches_reference() {
    let mut worst = (0.0, 0.0, 0.0, 0.0);
    for r in table("inc_beta_oracle.csv") {
        let (x, a, b, v) = (r[0], r[1], r[2], r[3]);
        let got = reg_inc_beta(x, a, b).unwrap();
        let e = rel(got, v);
        if e > worst.0 {
            worst = (e, x, a, b);
        }
    }
    assert!(
        worst.0 < 1e-12,
        "worst error {:e} at x = {}, a = {}, b = {}",
        worst.0,
        worst.1,
        worst.2,
        worst.3
    );
}
