use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::real::{Precision, Real};

/// A probability mass function over the integer window `lo..=hi`.
#[derive(Clone, Debug)]
pub struct Pmf<R: Real = f64> {
    lo: i64,
    probs: Vec<R>,
    precision: Precision,
}

impl<R: Real> Pmf<R> {
    pub fn new(lo: i64, probs: Vec<R>) -> Self {
        Pmf { lo, probs, precision: R::precision() }
    }

    /// Point mass at `value`.
    pub fn point(value: i64) -> Self {
        Pmf::new(value, vec![R::one()])
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.probs.len() as i64 - 1
    }

    pub fn probs(&self) -> &[R] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<R> {
        self.probs
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Mass at `value` (zero outside the window).
    pub fn get(&self, value: i64) -> R {
        if value < self.lo || value > self.hi() {
            R::zero()
        } else {
            self.probs[(value - self.lo) as usize].clone()
        }
    }

    pub fn total(&self) -> R {
        crate::dist::sum(&self.probs)
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, p)| v as f64 * p.to_f64()).sum()
    }

    /// Value with the largest mass (smallest such value on ties).
    pub fn mode(&self) -> i64 {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        self.lo + best as i64
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &R)> {
        self.probs.iter().enumerate().map(move |(i, p)| (self.lo + i as i64, p))
    }

    /// Checks non-negativity and normalization against the backend tolerance.
    pub fn is_normalized(&self) -> bool {
        let tol = self.precision.normalization_tol();
        self.probs.iter().all(|p| *p >= R::zero())
            && (self.total() - R::one()).to_f64().abs() <= tol
    }

    /// Lossy conversion to a double-precision pmf.
    pub fn to_f64(&self) -> Pmf<f64> {
        Pmf::new(self.lo, self.probs.iter().map(|p| p.to_f64()).collect())
    }

    /// Drops leading and trailing zero entries.
    pub fn trimmed(mut self) -> Self {
        let first = self.probs.iter().position(|p| !p.is_zero());
        match first {
            None => Pmf::new(self.lo, Vec::new()),
            Some(f) => {
                let last = self.probs.iter().rposition(|p| !p.is_zero()).unwrap();
                self.probs.truncate(last + 1);
                self.probs.drain(..f);
                self.lo += f as i64;
                self
            }
        }
    }

    /// `Σ_i w_i·p_i` over the union of the windows.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (&'a R, &'a Pmf<R>)>) -> Self {
        let parts: Vec<_> = parts.into_iter().filter(|(_, p)| !p.probs.is_empty()).collect();
        let Some(lo) = parts.iter().map(|(_, p)| p.lo).min() else {
            return Pmf::new(0, Vec::new());
        };
        let hi = parts.iter().map(|(_, p)| p.hi()).max().unwrap();
        let mut probs = vec![R::zero(); (hi - lo + 1) as usize];
        for (w, p) in parts {
            let off = (p.lo - lo) as usize;
            for (i, x) in p.probs.iter().enumerate() {
                probs[off + i] += x.clone() * w;
            }
        }
        Pmf::new(lo, probs)
    }

    /// Two-column CSV (`value,prob`) preceded by a comment line.
    pub fn to_csv(&self, comment: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {comment}");
        s.push_str("value,prob\n");
        for (v, p) in self.iter() {
            let _ = writeln!(s, "{v},{}", p.to_decimal());
        }
        s
    }
}

impl Pmf<f64> {
    /// Builds a pmf from a `value,prob` CSV produced by [`Pmf::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("value") {
                continue;
            }
            let mut it = line.split(',');
            let v: i64 = it
                .next()
                .and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::parse(format!("bad pmf line `{line}`")))?;
            let p: f64 = it
                .next()
                .and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::parse(format!("bad pmf line `{line}`")))?;
            pairs.push((v, p));
        }
        Ok(from_pairs(&pairs))
    }

    /// Empirical pmf from a histogram of counts starting at `lo`.
    pub fn from_counts(lo: i64, counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let t = total.max(1) as f64;
        Pmf::new(lo, counts.iter().map(|&c| c as f64 / t).collect())
    }
}

fn from_pairs(pairs: &[(i64, f64)]) -> Pmf<f64> {
    if pairs.is_empty() {
        return Pmf::new(0, Vec::new());
    }
    let lo = pairs.iter().map(|p| p.0).min().unwrap();
    let hi = pairs.iter().map(|p| p.0).max().unwrap();
    let mut probs = vec![0.0; (hi - lo + 1) as usize];
    for &(v, p) in pairs {
        probs[(v - lo) as usize] += p;
    }
    Pmf::new(lo, probs)
}

/// Total-variation distance `½ Σ |p(x) - q(x)|` over the union of both windows.
pub fn tv_distance(p: &Pmf<f64>, q: &Pmf<f64>) -> f64 {
    let lo = p.lo().min(q.lo());
    let hi = p.hi().max(q.hi());
    let mut d = 0.0;
    for x in lo..=hi {
        d += (p.get(x) - q.get(x)).abs();
    }
    0.5 * d
}

/// Overlap coefficient `Σ min(p(x), q(x))`; both pmfs must share the same window.
pub fn overlap<R: Real>(p: &Pmf<R>, q: &Pmf<R>) -> Result<R> {
    if p.lo() != q.lo() || p.hi() != q.hi() {
        return Err(Error::usage(format!(
            "overlap needs identical domains, got [{}, {}] and [{}, {}]",
            p.lo(),
            p.hi(),
            q.lo(),
            q.hi()
        )));
    }
    let mut s = R::zero();
    for (a, b) in p.probs().iter().zip(q.probs()) {
        s += a.clone().min_of(b.clone());
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_extremes() {
        let a = Pmf::<f64>::point(0);
        let b = Pmf::<f64>::point(1);
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert_eq!(tv_distance(&a, &b), 1.0);
    }

    #[test]
    fn overlap_requires_same_domain() {
        let a = Pmf::<f64>::new(0, vec![1.0, 0.0]);
        let b = Pmf::<f64>::new(0, vec![0.0, 1.0]);
        assert_eq!(overlap(&a, &a).unwrap(), 1.0);
        assert_eq!(overlap(&a, &b).unwrap(), 0.0);
        assert!(overlap(&a, &Pmf::point(0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = Pmf::<f64>::new(3, vec![0.25, 0.5, 0.25]);
        let q = Pmf::from_csv(&p.to_csv("test")).unwrap();
        assert_eq!(q.lo(), 3);
        assert_eq!(q.probs(), p.probs());
    }

    #[test]
    fn trimming() {
        let p = Pmf::<f64>::new(0, vec![0.0, 0.5, 0.5, 0.0]).trimmed();
        assert_eq!((p.lo(), p.hi()), (1, 2));
        assert_eq!(p.mode(), 1);
    }
}
