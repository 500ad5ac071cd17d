//! Special functions behind the Student-t tail probabilities.
//!
//! Everything here is evaluated in `f64`. Upper tails are computed directly
//! from the incomplete beta continued fraction instead of as `1 - cdf`, and
//! every tail carries its natural logarithm so probabilities far below
//! `f64::MIN_POSITIVE` still have a finite, meaningful companion.

#![allow(clippy::excessive_precision)]

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of continued-fraction steps before giving up.
pub const MAX_CF_ITERATIONS: usize = 500;

/// Relative step size at which the continued fraction is declared converged.
pub const CF_TOLERANCE: f64 = 1e-16;

const FPMIN: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialFnError {
    #[error("{function}: argument out of domain ({detail})")]
    Domain {
        function: &'static str,
        detail: String,
    },
    #[error("{function}: continued fraction did not converge in {iterations} iterations")]
    NoConvergence {
        function: &'static str,
        iterations: usize,
    },
}

fn domain(function: &'static str, detail: String) -> SpecialFnError {
    SpecialFnError::Domain { function, detail }
}

/// An upper-tail probability together with its natural logarithm.
///
/// `log_value` stays finite when `value` underflows to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProbability {
    pub value: f64,
    pub log_value: f64,
}

impl TailProbability {
    /// Builds a tail from its logarithm. `log_value` must be `<= 0`.
    pub fn from_log(log_value: f64) -> Self {
        let log_value = log_value.min(0.0);
        TailProbability {
            value: log_value.exp(),
            log_value,
        }
    }

    /// Builds a tail from a plain probability in `[0, 1]`.
    pub fn from_value(value: f64) -> Self {
        let value = value.clamp(0.0, 1.0);
        TailProbability {
            value,
            log_value: value.ln(),
        }
    }

    /// Base-10 logarithm of the probability.
    pub fn log10(&self) -> f64 {
        self.log_value / std::f64::consts::LN_10
    }
}

const EULER_GAMMA: f64 = 0.5772156649015328606065;

// (-1)^k zeta(k) / k for k = 2, 3, ...: Taylor coefficients of ln Γ(1 + z) + γz.
const LN_GAMMA_1P_SERIES: [f64; 29] = [
    0.822467033424113218236,
    -0.400685634386531428467,
    0.270580808427784547879,
    -0.207385551028673985266,
    0.169557176997408189952,
    -0.14404989676884611812,
    0.125509669524743042422,
    -0.111334265869564690491,
    0.100099457512781808534,
    -0.0909540171458290422326,
    0.0833538405461090040249,
    -0.0769325164113521914728,
    0.0714329462953613360592,
    -0.0666687058824204680329,
    0.062500955141213040742,
    -0.058823978658684582339,
    0.0555557676274036111022,
    -0.0526316793796166607336,
    0.0500000476981016936398,
    -0.0476190703301422279908,
    0.0454545562932046694424,
    -0.0434782660530402593614,
    0.0416666691503412104691,
    -0.0400000011921401405861,
    0.0384615390346751857063,
    -0.0370370373129893255495,
    0.0357142858473333580282,
    -0.0344827586849193008108,
    0.0333333333643775810807,
];

// ln Γ(3/2)
const LN_GAMMA_3_2: f64 = -0.1207822376352452223455184;
// ψ^(k-1)(3/2) / k! for k = 1, 2, ...: Taylor coefficients of ln Γ(3/2 + z).
const LN_GAMMA_3_2_SERIES: [f64; 23] = [
    0.03648997397857652055902,
    0.4674011002723396547086,
    -0.1381327740390533325994,
    0.05871212641676821818501,
    -0.02895208188889354325447,
    0.01543548417004930033577,
    -0.008622603929171286950613,
    0.004965728809475817695592,
    -0.002920970458667951946974,
    0.001745035575790129990032,
    -0.001054915693867631969416,
    0.0006437029830381485768835,
    -0.0003957715396465077726379,
    0.0002448711904829441244817,
    -0.0001523159381427008139659,
    0.00009517939662502587462953,
    -0.00005971362336233770370965,
    0.00003759490926961219402361,
    -0.0000237431854692093429426,
    0.00001503698340835921741995,
    -0.000009547151192148187223411,
    0.000006075406474484689603255,
    -0.000003874151830009770172344,
];

// B_{2k} / (2k (2k - 1)) for the Stirling tail.
const STIRLING_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
];
// ln(2π) / 2
const HALF_LN_2PI: f64 = 0.918938533204672741780329736405617639861397473637783;

/// `ln Γ(1 + z)` for `|z| <= 0.25` by its power series about 1.
fn ln_gamma_1p_small(z: f64) -> f64 {
    let mut sum = 0.0;
    for coeff in LN_GAMMA_1P_SERIES.iter().rev() {
        sum = sum * z + coeff;
    }
    z * (z * sum - EULER_GAMMA)
}

/// `ln Γ(3/2 + z)` for `|z| <= 0.25`.
fn ln_gamma_mid(z: f64) -> f64 {
    let mut sum = 0.0;
    for coeff in LN_GAMMA_3_2_SERIES.iter().rev() {
        sum = sum * z + coeff;
    }
    LN_GAMMA_3_2 + z * sum
}

/// `ln Γ(x) - [(x - ½) ln x - x + ½ ln 2π]` for `x >= 10`.
fn stirling_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut tail = 0.0;
    for coeff in STIRLING_COEFFS.iter().rev() {
        tail = tail * inv2 + coeff;
    }
    tail * inv
}

fn ln_gamma_stirling(x: f64) -> f64 {
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_correction(x)
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if (x - 1.0).abs() <= 0.25 {
        ln_gamma_1p_small(x - 1.0)
    } else if (x - 2.0).abs() <= 0.25 {
        let z = x - 2.0;
        ln_gamma_1p_small(z) + z.ln_1p()
    } else if x < 0.75 {
        // Γ(x) = Γ(x + 1) / x
        ln_gamma_unchecked(x + 1.0) - x.ln()
    } else if x >= 10.0 {
        ln_gamma_stirling(x)
    } else if x > 2.25 {
        // Γ(x) = (x-1)(x-2)...(x-n) Γ(x-n) with x - n in (1.25, 2.25]; the
        // product stays well inside f64 range and costs a few ulp at most.
        let mut y = x;
        let mut prod = 1.0;
        while y > 2.25 {
            y -= 1.0;
            prod *= y;
        }
        ln_gamma_unchecked(y) + prod.ln()
    } else {
        ln_gamma_mid(x - 1.5)
    }
}

/// Natural logarithm of the gamma function for positive finite `x`.
pub fn log_gamma(x: f64) -> Result<f64, SpecialFnError> {
    if !x.is_finite() || x <= 0.0 {
        return Err(domain("log_gamma", format!("x = {x}, need finite x > 0")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    if large >= 10.0 {
        ln_gamma_unchecked(small) + ln_gamma_ratio(large, small)
    } else {
        ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
    }
}

/// `ln Γ(a) - ln Γ(a + b)` for `a >= 10`, without subtracting two large
/// logarithms.
fn ln_gamma_ratio(a: f64, b: f64) -> f64 {
    let s = a + b;
    -(a - 0.5) * (b / a).ln_1p() - b * s.ln() + b + stirling_correction(a) - stirling_correction(s)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> Result<f64, SpecialFnError> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_CF_ITERATIONS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() < CF_TOLERANCE {
            return Ok(h);
        }
    }
    Err(SpecialFnError::NoConvergence {
        function: "reg_inc_beta",
        iterations: MAX_CF_ITERATIONS,
    })
}

/// `ln I_x(a, b)` evaluated straight from the continued fraction.
///
/// `y` must equal `1 - x`; passing it separately keeps it exact when it is
/// tiny. Only accurate on the branch `x < (a + 1) / (a + b + 2)`.
fn ln_inc_beta_direct(x: f64, y: f64, a: f64, b: f64) -> Result<f64, SpecialFnError> {
    let cf = beta_continued_fraction(x, a, b)?;
    Ok(ln_power_terms(x, y, a, b) - a.ln() + cf.ln())
}

/// `ln(x^a y^b / B(a, b))`.
///
/// For large `a` and `b` the three logarithms are each in the hundreds and
/// cancel, so the expression is expanded about `x0 = a / (a + b)` with the
/// Stirling corrections kept separate.
fn ln_power_terms(x: f64, y: f64, a: f64, b: f64) -> f64 {
    if a < 10.0 || b < 10.0 {
        return a * x.ln() + b * y.ln() - ln_beta(a, b);
    }
    let s = a + b;
    let (x0, y0) = (a / s, b / s);
    a * ((x - x0) / x0).ln_1p() + b * ((y - y0) / y0).ln_1p() + 0.5 * (a * b / s).ln()
        - HALF_LN_2PI
        - (stirling_correction(a) + stirling_correction(b) - stirling_correction(s))
}

fn use_direct_branch(x: f64, a: f64, b: f64) -> bool {
    x < (a + 1.0) / (a + b + 2.0)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64, SpecialFnError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("reg_inc_beta", format!("x = {x}, need 0 <= x <= 1")));
    }
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
        return Err(domain(
            "reg_inc_beta",
            format!("a = {a}, b = {b}, need finite a, b > 0"),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let y = 1.0 - x;
    if use_direct_branch(x, a, b) {
        Ok(ln_inc_beta_direct(x, y, a, b)?.exp())
    } else {
        Ok(1.0 - ln_inc_beta_direct(y, x, b, a)?.exp())
    }
}

fn check_dof(function: &'static str, nu: f64) -> Result<(), SpecialFnError> {
    if nu > 0.0 && !nu.is_nan() {
        Ok(())
    } else {
        Err(domain(function, format!("nu = {nu}, need nu > 0")))
    }
}

/// `P[T > t]` for `t >= 0`, as `(tail, complement)` where exactly one of the
/// two is carried in log space.
enum UpperTail {
    /// The tail itself is small; `ln P[T > t]`.
    Small(f64),
    /// `P[T > t] = (1 - j) / 2` with `j = I_{t²/(ν+t²)}(1/2, ν/2)`.
    Central(f64),
}

fn upper_tail_nonneg(t: f64, nu: f64) -> Result<UpperTail, SpecialFnError> {
    let a = 0.5 * nu;
    let b = 0.5;
    if t.is_infinite() {
        return Ok(UpperTail::Small(f64::NEG_INFINITY));
    }
    let t2 = t * t;
    // Avoid forming nu + t² when t² overflows or swamps nu.
    let (x, y) = if t2.is_finite() {
        let denom = nu + t2;
        (nu / denom, t2 / denom)
    } else {
        let r = nu / t;
        (r / t, 1.0)
    };
    if x == 0.0 {
        return Ok(UpperTail::Small(f64::NEG_INFINITY));
    }
    if y == 0.0 {
        return Ok(UpperTail::Central(0.0));
    }
    if use_direct_branch(x, a, b) {
        Ok(UpperTail::Small(ln_inc_beta_direct(x, y, a, b)? - LN_2))
    } else {
        Ok(UpperTail::Central(ln_inc_beta_direct(y, x, b, a)?.exp()))
    }
}

/// Survival function `P[T > t]` of Student's t with `nu` degrees of freedom.
pub fn student_t_sf(t: f64, nu: f64) -> Result<TailProbability, SpecialFnError> {
    check_dof("student_t_sf", nu)?;
    if t.is_nan() {
        return Err(domain("student_t_sf", "t is NaN".to_string()));
    }
    let tail = upper_tail_nonneg(t.abs(), nu)?;
    let out = match (t >= 0.0, tail) {
        (true, UpperTail::Small(ln)) => TailProbability::from_log(ln),
        (true, UpperTail::Central(j)) => TailProbability::from_value(0.5 * (1.0 - j)),
        // P[T > -s] = 1 - P[T > s]
        (false, UpperTail::Small(ln)) => {
            let upper = ln.exp();
            TailProbability {
                value: 1.0 - upper,
                log_value: (-upper).ln_1p(),
            }
        }
        (false, UpperTail::Central(j)) => TailProbability::from_value(0.5 * (1.0 + j)),
    };
    Ok(out)
}

/// Distribution function `P[T <= t]`, evaluated through the smaller tail.
pub fn student_t_cdf(t: f64, nu: f64) -> Result<f64, SpecialFnError> {
    check_dof("student_t_cdf", nu)?;
    if t.is_nan() {
        return Err(domain("student_t_cdf", "t is NaN".to_string()));
    }
    Ok(student_t_sf(-t, nu)?.value)
}

/// Natural log of the Student-t density.
pub fn student_t_ln_pdf(t: f64, nu: f64) -> Result<f64, SpecialFnError> {
    check_dof("student_t_ln_pdf", nu)?;
    Ok(ln_gamma_unchecked(0.5 * (nu + 1.0))
        - ln_gamma_unchecked(0.5 * nu)
        - 0.5 * (nu * PI).ln()
        - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p())
}

/// Quantile function: the `t` with `student_t_cdf(t, nu) == p`.
pub fn student_t_quantile(p: f64, nu: f64) -> Result<f64, SpecialFnError> {
    check_dof("student_t_quantile", nu)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(
            "student_t_quantile",
            format!("p = {p}, need 0 < p < 1"),
        ));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Solve P[T > s] = q for s >= 0, then restore the sign.
    let (q, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
    let ln_q = q.ln();
    let ln_sf = |s: f64| -> Result<f64, SpecialFnError> { Ok(student_t_sf(s, nu)?.log_value) };

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while ln_sf(hi)? > ln_q {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Ok(sign * f64::MAX);
        }
    }

    // Newton on ln SF, which is concave and decreasing for s >= 0;
    // fall back to bisection whenever a step leaves the bracket.
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = ln_sf(s)? - ln_q;
        if g > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let ln_sf_s = g + ln_q;
        let slope = -(student_t_ln_pdf(s, nu)? - ln_sf_s).exp();
        let mut next = s - g / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-15 * s.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            s = next;
            break;
        }
        s = next;
    }
    Ok(sign * s)
}
