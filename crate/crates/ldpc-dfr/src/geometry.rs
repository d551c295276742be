//! Intersection weights of two rows (or two columns) of a random regular
//! parity-check matrix that already share one asserted position.

use crate::code::CodeParams;
use crate::error::{Error, Result};
use crate::pmf::{self, Pmf};
use crate::real::{choose, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Rows,
    Columns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    /// Product of conditional binomials `κ₁|₁(x)·κ₁|₀(·−1−x)`, normalised.
    Conditional,
    /// Independent uniformly drawn rows/columns: a hypergeometric law.
    #[default]
    Hypergeometric,
}

/// Distribution of the number of additional shared ones, over `0..=w-1`
/// (rows) or `0..=v-1` (columns).
#[derive(Clone, Debug)]
pub struct IntersectionModel<R: Real = f64> {
    pub kind: Kind,
    pub variant: Variant,
    pub pmf: Pmf<R>,
    /// `(ρ₁|₁, ρ₁|₀)` of the conditional variant.
    pub rho: Option<(R, R)>,
}

/// Row-pair intersection model.
pub fn row_intersection_pmf<R: Real>(params: &CodeParams, variant: Variant) -> Result<IntersectionModel<R>> {
    let CodeParams { n, r, v, w, .. } = *params;
    if w == 0 || n <= w {
        return Err(Error::param(format!("row model needs 1 <= w < n (n={n}, w={w})")));
    }
    intersection(Kind::Rows, variant, |variant| match variant {
        Variant::Hypergeometric => hyper::<R>(n as u64, w as u64),
        Variant::Conditional => {
            if r < 2 {
                return Err(Error::param("row model needs at least two parity checks"));
            }
            let rho11 = R::from_u64(v as u64 - 1) / R::from_u64(r as u64 - 1);
            let rho10 = R::from_u64(v as u64) / R::from_u64(r as u64 - 1);
            let (a, b) = ((w - 1) as u64, (n - w) as u64);
            let p = conditional(w - 1, |x| Some(binom_ln(a, &rho11, x)? + binom_ln(b, &rho10, a - x)?));
            Ok((p, Some((rho11, rho10))))
        }
    })
}

/// Column-pair intersection model.
pub fn column_intersection_pmf<R: Real>(params: &CodeParams, variant: Variant) -> Result<IntersectionModel<R>> {
    let CodeParams { n, r, v, w, .. } = *params;
    if v == 0 || r <= v {
        return Err(Error::param(format!("column model needs 1 <= v < r (r={r}, v={v})")));
    }
    intersection(Kind::Columns, variant, |variant| match variant {
        Variant::Hypergeometric => hyper::<R>(r as u64, v as u64),
        Variant::Conditional => {
            if n < 2 {
                return Err(Error::param("column model needs n >= 2"));
            }
            let rho11 = R::from_u64(w as u64 - 1) / R::from_u64(n as u64 - 1);
            let rho10 = R::from_u64(w as u64) / R::from_u64(n as u64 - 1);
            // κ₁|₁ runs over v trials here, as printed for the column case
            let (a, b) = (v as u64, (r - v) as u64);
            let p = conditional(v - 1, |x| Some(binom_ln(a, &rho11, x)? + binom_ln(b, &rho10, v as u64 - 1 - x)?));
            Ok((p, Some((rho11, rho10))))
        }
    })
}

type Built<R> = (Vec<R>, Option<(R, R)>);

fn intersection<R: Real>(
    kind: Kind,
    variant: Variant,
    build: impl FnOnce(Variant) -> Result<Built<R>>,
) -> Result<IntersectionModel<R>> {
    let (probs, rho) = build(variant)?;
    Ok(IntersectionModel { kind, variant, pmf: Pmf::new(0, probs), rho })
}

/// `C(k-1, x) C(total-k, k-1-x) / C(total-1, k-1)` for `x` in `0..k`.
fn hyper<R: Real>(total: u64, k: u64) -> Result<Built<R>> {
    let den = choose::<R>(total - 1, k - 1);
    let exact = den.to_f64().is_finite();
    let probs = (0..k)
        .map(|x| {
            if total - k < k - 1 - x {
                return R::zero();
            }
            if exact {
                choose::<R>(k - 1, x) * choose::<R>(total - k, k - 1 - x) / &den
            } else {
                (R::ln_choose(k - 1, x) + R::ln_choose(total - k, k - 1 - x) - R::ln_choose(total - 1, k - 1)).exp()
            }
        })
        .collect();
    Ok((probs, None))
}

/// `ln B(n, ρ, x)`, or `None` when the mass is zero.
fn binom_ln<R: Real>(n: u64, rho: &R, x: u64) -> Option<R> {
    if x > n {
        return None;
    }
    let q = R::one() - rho;
    let mut s = R::ln_choose(n, x);
    if x > 0 {
        if rho.is_zero() {
            return None;
        }
        s += R::from_u64(x) * rho.ln();
    }
    if n > x {
        if q.is_zero() {
            return None;
        }
        s += R::from_u64(n - x) * q.ln();
    }
    Some(s)
}

/// Normalises `exp(term(x))` over `x` in `0..=hi`, working relative to the largest term.
fn conditional<R: Real>(hi: usize, term: impl Fn(u64) -> Option<R>) -> Vec<R> {
    let logs: Vec<Option<R>> = (0..=hi as u64).map(term).collect();
    let top = logs.iter().flatten().cloned().reduce(R::max_of);
    let Some(top) = top else {
        return vec![R::zero(); hi + 1];
    };
    let mut probs: Vec<R> = logs.into_iter().map(|l| l.map_or_else(R::zero, |l| (l - &top).exp())).collect();
    let total = crate::dist::sum(&probs);
    for p in &mut probs {
        *p /= &total;
    }
    probs
}

/// `Σ_x min(p(x), q(x))`; the two pmfs must share their domain.
pub fn overlap_coefficient<R: Real>(p: &Pmf<R>, q: &Pmf<R>) -> Result<R> {
    pmf::overlap(p, q)
}

/// `max_x |p(x) - q(x)|` over a shared domain.
pub fn max_pointwise_gap<R: Real>(p: &Pmf<R>, q: &Pmf<R>) -> Result<R> {
    if p.lo() != q.lo() || p.hi() != q.hi() {
        return Err(Error::usage("pmfs have different domains"));
    }
    let mut m = R::zero();
    for (a, b) in p.probs().iter().zip(q.probs()) {
        let d = if a > b { a.clone() - b } else { b.clone() - a };
        m = m.max_of(d);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Float;

    fn params(n: usize, r: usize, v: usize, w: usize) -> CodeParams {
        CodeParams::regular(n, r, v, w).unwrap()
    }

    /// Counts, over all weight-`w` vectors containing position 0, how many
    /// further ones they share with the fixed vector `{0, …, w-1}`.
    fn enumerate_shared(n: usize, w: usize) -> Vec<u64> {
        let mut counts = vec![0u64; w];
        let rest = n - 1;
        for mask in 0u32..(1 << rest) {
            if mask.count_ones() as usize != w - 1 {
                continue;
            }
            let shared = (mask & ((1 << (w - 1)) - 1)).count_ones() as usize;
            counts[shared] += 1;
        }
        counts
    }

    #[test]
    fn hypergeometric_matches_enumeration_exactly() {
        for &(n, r, v, w) in &[(14, 7, 2, 4), (16, 8, 3, 6), (12, 6, 2, 4), (15, 10, 2, 3), (16, 12, 3, 4)] {
            let p = params(n, r, v, w);
            let rows = row_intersection_pmf::<f64>(&p, Variant::Hypergeometric).unwrap();
            let counts = enumerate_shared(n, w);
            let total: u64 = counts.iter().sum();
            for (x, &c) in counts.iter().enumerate() {
                // both integers are exact in f64, so the quotient is correctly rounded
                assert_eq!(rows.pmf.get(x as i64), c as f64 / total as f64, "n={n} w={w} x={x}");
            }
            let cols = column_intersection_pmf::<f64>(&p, Variant::Hypergeometric).unwrap();
            let counts = enumerate_shared(r, v);
            let total: u64 = counts.iter().sum();
            for (x, &c) in counts.iter().enumerate() {
                assert_eq!(cols.pmf.get(x as i64), c as f64 / total as f64);
            }
        }
        let p = params(14, 7, 2, 4);
        let m = row_intersection_pmf::<f64>(&p, Variant::Hypergeometric).unwrap();
        assert_eq!(m.pmf.get(0), 120.0 / 286.0);
    }

    #[test]
    fn degenerate_weights_are_point_masses() {
        let p = CodeParams::regular(10, 10, 1, 1).unwrap();
        for variant in [Variant::Hypergeometric, Variant::Conditional] {
            let rows = row_intersection_pmf::<f64>(&p, variant).unwrap();
            assert_eq!(rows.pmf.probs(), &[1.0]);
            let cols = column_intersection_pmf::<f64>(&p, variant).unwrap();
            assert_eq!(cols.pmf.probs(), &[1.0]);
        }
    }

    #[test]
    fn normalisation() {
        let p = params(4400, 2200, 11, 22);
        for variant in [Variant::Hypergeometric, Variant::Conditional] {
            let rows = row_intersection_pmf::<Float>(&p, variant).unwrap();
            let cols = column_intersection_pmf::<Float>(&p, variant).unwrap();
            assert!((rows.pmf.total().to_f64() - 1.0).abs() < 1e-30);
            assert!((cols.pmf.total().to_f64() - 1.0).abs() < 1e-30);
        }
    }

    /// Both row models share the factor `C(w-1,x) C(n-w,w-1-x)`; the conditional
    /// one carries an extra `c^x` with `c = ρ₁|₁(1-ρ₁|₀) / ((1-ρ₁|₁)ρ₁|₀)`.
    #[test]
    fn conditional_rows_are_a_tilted_hypergeometric() {
        let (n, r, v, w) = (4400usize, 2200usize, 11usize, 22usize);
        let p = params(n, r, v, w);
        let a = row_intersection_pmf::<Float>(&p, Variant::Conditional).unwrap();
        let b = row_intersection_pmf::<Float>(&p, Variant::Hypergeometric).unwrap();
        let (r11, r10) = ((v - 1) as f64 / (r - 1) as f64, v as f64 / (r - 1) as f64);
        let c = r11 * (1.0 - r10) / ((1.0 - r11) * r10);
        let z: f64 = (0..w).map(|x| b.pmf.get(x as i64).to_f64() * c.powi(x as i32)).sum();
        for x in 0..6 {
            let want = b.pmf.get(x).to_f64() * c.powi(x as i32) / z;
            let got = a.pmf.get(x).to_f64();
            assert!((got - want).abs() <= 1e-12 * want, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn overlap_values_are_pinned() {
        let p = params(4400, 2200, 11, 22);
        let rows = overlap_coefficient(
            &row_intersection_pmf::<Float>(&p, Variant::Conditional).unwrap().pmf,
            &row_intersection_pmf::<Float>(&p, Variant::Hypergeometric).unwrap().pmf,
        )
        .unwrap()
        .to_f64();
        let cols = overlap_coefficient(
            &column_intersection_pmf::<Float>(&p, Variant::Conditional).unwrap().pmf,
            &column_intersection_pmf::<Float>(&p, Variant::Hypergeometric).unwrap().pmf,
        )
        .unwrap()
        .to_f64();
        assert!((rows - 0.991_680_365_112_646_6).abs() < 1e-12, "{rows}");
        assert!((cols - 0.997_832_170_476_173_7).abs() < 1e-12, "{cols}");
    }

    #[test]
    fn overlap_bounds() {
        let p = Pmf::new(0, vec![1.0, 0.0]);
        let q = Pmf::new(0, vec![0.0, 1.0]);
        assert_eq!(overlap_coefficient(&p, &p).unwrap(), 1.0);
        assert_eq!(overlap_coefficient(&p, &q).unwrap(), 0.0);
        assert_eq!(max_pointwise_gap(&p, &q).unwrap(), 1.0);
        assert!(overlap_coefficient(&p, &Pmf::new(1, vec![1.0, 0.0])).is_err());
    }
}
