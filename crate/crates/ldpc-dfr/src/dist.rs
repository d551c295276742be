//! Binomial and hypergeometric building blocks shared by every model.
//!
//! Binomial masses are produced as whole vectors: one value at the mode from
//! log-space, the rest by the term ratio walking outwards. Both `p` and
//! `q = 1 - p` are taken explicitly so that callers holding an accurately
//! computed complement (e.g. a non-flip probability near zero) never lose it
//! to cancellation.

use crate::real::{choose, Real};

/// Binomial masses `B(n, p, k)` for `k` in `lo..=hi` (clamped to `0..=n`).
pub fn binom_pmf_range<R: Real>(n: u64, p: &R, q: &R, lo: u64, hi: u64) -> Vec<R> {
    let hi = hi.min(n);
    if lo > hi {
        return Vec::new();
    }
    let len = (hi - lo + 1) as usize;
    let mut out = vec![R::zero(); len];
    if p.is_zero() {
        if lo == 0 {
            out[0] = R::one();
        }
        return out;
    }
    if q.is_zero() {
        if hi == n {
            out[len - 1] = R::one();
        }
        return out;
    }
    let pf = p.to_f64();
    let mode = (((n + 1) as f64 * pf).floor() as u64).min(n).clamp(lo, hi);
    let lnp = p.ln();
    let lnq = q.ln();
    let start = (R::ln_choose(n, mode) + R::from_u64(mode) * &lnp + R::from_u64(n - mode) * &lnq).exp();
    let odds = p.clone() / q;
    let inv_odds = q.clone() / p;
    let m = (mode - lo) as usize;
    out[m] = start;
    for k in mode..hi {
        let i = (k - lo) as usize;
        let ratio = R::from_u64(n - k) / R::from_u64(k + 1) * &odds;
        out[i + 1] = out[i].clone() * ratio;
    }
    for k in (lo + 1..=mode).rev() {
        let i = (k - lo) as usize;
        let ratio = R::from_u64(k) / R::from_u64(n - k + 1) * &inv_odds;
        out[i - 1] = out[i].clone() * ratio;
    }
    out
}

/// Binomial masses around the mode, extended in both directions while they
/// stay at or above `floor`. Returns the first index and the masses.
pub fn binom_pmf_window<R: Real>(n: u64, p: &R, q: &R, floor: &R) -> (u64, Vec<R>) {
    if p.is_zero() {
        return (0, vec![R::one()]);
    }
    if q.is_zero() {
        return (n, vec![R::one()]);
    }
    let pf = p.to_f64();
    let mode = (((n + 1) as f64 * pf).floor() as u64).min(n);
    let start = binom_mass(n, p, q, mode as i64);
    let odds = p.clone() / q;
    let inv_odds = q.clone() / p;
    let mut up = Vec::new();
    let mut cur = start.clone();
    for k in mode..n {
        cur *= R::from_u64(n - k) / R::from_u64(k + 1) * &odds;
        if cur < *floor {
            break;
        }
        up.push(cur.clone());
    }
    let mut down = Vec::new();
    let mut cur = start.clone();
    for k in (1..=mode).rev() {
        cur *= R::from_u64(k) / R::from_u64(n - k + 1) * &inv_odds;
        if cur < *floor {
            break;
        }
        down.push(cur.clone());
    }
    let lo = mode - down.len() as u64;
    down.reverse();
    down.push(start);
    down.extend(up);
    (lo, down)
}

/// Full binomial pmf over `0..=n`.
pub fn binom_pmf<R: Real>(n: u64, p: &R, q: &R) -> Vec<R> {
    binom_pmf_range(n, p, q, 0, n)
}

/// A single binomial mass `B(n, p, k)`; zero outside `0..=n`.
pub fn binom_mass<R: Real>(n: u64, p: &R, q: &R, k: i64) -> R {
    if k < 0 || k as u64 > n {
        return R::zero();
    }
    let k = k as u64;
    if p.is_zero() {
        return if k == 0 { R::one() } else { R::zero() };
    }
    if q.is_zero() {
        return if k == n { R::one() } else { R::zero() };
    }
    (R::ln_choose(n, k) + R::from_u64(k) * p.ln() + R::from_u64(n - k) * q.ln()).exp()
}

/// `Pr(X >= k)` and `Pr(X < k)` for `X ~ B(n, p)`, both summed directly.
pub fn binom_tails<R: Real>(n: u64, p: &R, q: &R, k: i64) -> (R, R) {
    let pmf = binom_pmf(n, p, q);
    split_at(&pmf, k)
}

/// Splits a pmf over `0..len` into (`sum_{i>=k}`, `sum_{i<k}`).
pub fn split_at<R: Real>(pmf: &[R], k: i64) -> (R, R) {
    let mut upper = R::zero();
    let mut lower = R::zero();
    for (i, v) in pmf.iter().enumerate() {
        if (i as i64) >= k {
            upper += v;
        } else {
            lower += v;
        }
    }
    (upper, lower)
}

/// Hypergeometric mass: `C(succ, k) C(total - succ, draws - k) / C(total, draws)`.
pub fn hypergeom<R: Real>(total: u64, succ: u64, draws: u64, k: u64) -> R {
    if k > succ || k > draws || draws - k > total - succ || draws > total {
        return R::zero();
    }
    let a = choose::<R>(succ, k);
    let b = choose::<R>(total - succ, draws - k);
    let c = choose::<R>(total, draws);
    if c.to_f64().is_finite() && a.to_f64().is_finite() && b.to_f64().is_finite() {
        a * b / c
    } else {
        (R::ln_choose(succ, k) + R::ln_choose(total - succ, draws - k) - R::ln_choose(total, draws)).exp()
    }
}

/// Sum of a slice.
pub fn sum<R: Real>(v: &[R]) -> R {
    let mut s = R::zero();
    for x in v {
        s += x;
    }
    s
}

/// `1 - prod_i (1 - p_i)^{c_i}` and `prod_i (1 - p_i)^{c_i}`, where each `p_i`
/// is the probability of a bad outcome; summed in log space so that tiny
/// failure probabilities survive.
pub fn failure_of_product<R: Real>(factors: &[(R, u64)]) -> (R, R) {
    let mut log_success = R::zero();
    for (p, c) in factors {
        if *c == 0 || p.is_zero() {
            continue;
        }
        if *p >= R::one() {
            return (R::one(), R::zero());
        }
        log_success += (-p.clone()).ln_1p() * R::from_u64(*c);
    }
    let fail = -log_success.exp_m1();
    let succ = log_success.exp();
    (fail.clamp_unit(), succ.clamp_unit())
}
