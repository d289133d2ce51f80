//! Log-domain helpers shared by the detectors, the analysis engine and the
//! asymptotic bounds.

/// `log(sum(exp(xs)))`, returning `-inf` for an empty slice or when every
/// term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Natural log of a probability mass, with `ln(0) = -inf`.
#[inline]
pub fn ln_mass(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log of the Poisson kernel `exp(-n*mean) * mean^sigma` (the factorial is
/// dropped because it cancels in every likelihood ratio).
///
/// A zero mean is a point mass at zero: the kernel is `1` for `sigma == 0`
/// and `0` otherwise.
#[inline]
pub fn ln_poisson_kernel(mean: f64, sigma: u64, slots: f64) -> f64 {
    if mean > 0.0 {
        -slots * mean + sigma as f64 * mean.ln()
    } else if sigma == 0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Sum of per-sensor log-likelihood ratios.
///
/// Infinite entries act as sentinels. When both `+inf` and `-inf` occur the
/// observation is impossible under both hypotheses' approximations and the
/// evidence cancels to `0`.
pub fn sum_llr(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut finite = 0.0;
    let mut pos = false;
    let mut neg = false;
    for v in values {
        if v == f64::INFINITY {
            pos = true;
        } else if v == f64::NEG_INFINITY {
            neg = true;
        } else {
            finite += v;
        }
    }
    match (pos, neg) {
        (true, true) => 0.0,
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        (false, false) => finite,
    }
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
