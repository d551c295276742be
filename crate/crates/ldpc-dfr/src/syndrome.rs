//! Syndrome-weight distribution of a weight-`t` error and the per-bit flip
//! count conditioned on it.
//!
//! Adding one error column flips `k` syndrome bits (`k = v`, or `v-1` when one
//! of the column's bits is tracked separately). The weight chain moves from
//! `x` to `y = x - k + 2a`, where `a` bits are flipped up among the `B - x`
//! clear ones and `k - a` flipped down among the `x` set ones, with per-step
//! flip probabilities `π_up(l)`, `π_down(l)`.
//!
//! Transition rows are evaluated as unnormalised binomial products, walked out
//! from their mode by the term ratio and then divided by their sum, so the
//! normaliser `ω(x, l)` never needs binomial coefficients.

use rayon::prelude::*;

use crate::code::CodeParams;
use crate::dist;
use crate::error::{Error, Result};
use crate::pmf::Pmf;
use crate::real::{Precision, Real};

/// How `Pr(F_t = f | W_t = y)` is normalised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FlipNormalization {
    /// Divide the joint `φ(f,t)·Pr(W_t=y | F_t=f)` by `Pr(W_t = y)` from the
    /// main chain (plain Bayes).
    Marginal,
    /// Divide by `Σ_f φ(f,t)·Pr(W_t=y | F_t=f)`, giving an exactly normalised pmf.
    #[default]
    Joint,
}

/// Chain state over `0..=bits` stored as a window `[lo, lo + p.len())`.
#[derive(Clone, Debug)]
struct Window<R> {
    lo: usize,
    p: Vec<R>,
}

impl<R: Real> Window<R> {
    fn point(x: usize) -> Self {
        Window { lo: x, p: vec![R::one()] }
    }

    fn into_dense(self, len: usize) -> Vec<R> {
        let mut out = vec![R::zero(); len];
        for (i, v) in self.p.into_iter().enumerate() {
            if self.lo + i < len {
                out[self.lo + i] = v;
            }
        }
        out
    }
}

/// Normalised transition row from state `x`: masses for `y = y_lo, y_lo + 2, …`.
#[derive(Clone, Debug)]
struct Row<R> {
    y_lo: usize,
    probs: Vec<R>,
}

/// Shared tables for one `(params, t)` pair.
#[derive(Clone, Debug)]
pub struct ChainContext<R: Real = f64> {
    pub params: CodeParams,
    pub t: usize,
    memo: bool,
    prune: R,
    phi_tab: Vec<Vec<R>>,
    pi_tab: Vec<(R, R)>,
}

impl<R: Real> ChainContext<R> {
    /// Context with memoised `φ` and `π` tables and the backend's default prune floor.
    pub fn new(params: CodeParams, t: usize) -> Result<Self> {
        let prune = match R::precision() {
            Precision::Standard => f64::MIN_POSITIVE,
            Precision::Extended { .. } => 1e-315,
        };
        Self::with_options(params, t, true, R::from_f64(prune))
    }

    /// `memo = false` recomputes every `φ`/`π` value on demand; results are
    /// identical either way. States whose mass drops below `prune` are discarded.
    pub fn with_options(params: CodeParams, t: usize, memo: bool, prune: R) -> Result<Self> {
        if t > params.n {
            return Err(Error::param(format!("error weight {t} exceeds n={}", params.n)));
        }
        if params.v > params.r || params.w > params.n {
            return Err(Error::param("weights exceed matrix dimensions"));
        }
        let mut ctx = ChainContext { params, t, memo: false, prune, phi_tab: Vec::new(), pi_tab: Vec::new() };
        if memo {
            let phi_tab = (0..=t).map(|l| ctx.phi_row(l)).collect();
            ctx.phi_tab = phi_tab;
            ctx.memo = true;
            let pi_tab = (0..=t).map(|l| ctx.pi_pair(l)).collect();
            ctx.pi_tab = pi_tab;
        }
        Ok(ctx)
    }

    /// Mass below which chain states are dropped.
    pub fn prune(&self) -> &R {
        &self.prune
    }

    pub fn memoized(&self) -> bool {
        self.memo
    }

    fn phi_row(&self, l: usize) -> Vec<R> {
        let (n, w) = (self.params.n as u64, self.params.w as u64);
        let fmax = (l as u64).min(w);
        (0..=fmax).map(|f| dist::hypergeom::<R>(n, w, l as u64, f)).collect()
    }

    fn phi_at(&self, f: usize, l: usize) -> R {
        if self.memo {
            self.phi_tab[l].get(f).cloned().unwrap_or_else(R::zero)
        } else {
            let (n, w) = (self.params.n as u64, self.params.w as u64);
            dist::hypergeom::<R>(n, w, l as u64, f as u64)
        }
    }

    /// `Pr(F_l = f)`: hypergeometric count of error positions among a row's `w` ones.
    pub fn phi(&self, f: usize, l: usize) -> Result<R> {
        if l > self.t || f > l.min(self.params.w) {
            return Err(Error::domain(format!("φ({f}, {l}) outside 0 <= f <= min(w, l), l <= t")));
        }
        Ok(self.phi_at(f, l))
    }

    /// `(π_up(l), π_down(l))`; `π_down(1)` is reported as zero (no set bits yet).
    fn pi_pair(&self, l: usize) -> (R, R) {
        if l == 0 {
            return (R::zero(), R::zero());
        }
        let (n, w) = (self.params.n, self.params.w);
        let denom = R::from_u64((n - l) as u64);
        let fmax = (l - 1).min(w);
        let mut num = [R::zero(), R::zero()];
        let mut den = [R::zero(), R::zero()];
        for f in 0..=fmax {
            let ph = self.phi_at(f, l - 1);
            num[f & 1] += R::from_u64((w - f) as u64) / &denom * &ph;
            den[f & 1] += ph;
        }
        let [ne, no] = num;
        let [de, dd] = den;
        let up = if de.is_zero() { R::zero() } else { (ne / de).clamp_unit() };
        let down = if dd.is_zero() { R::zero() } else { (no / dd).clamp_unit() };
        (up, down)
    }

    fn pis(&self, l: usize) -> (R, R) {
        if self.memo {
            self.pi_tab[l].clone()
        } else {
            self.pi_pair(l)
        }
    }

    /// Probability that a clear syndrome bit is flipped at step `l`.
    pub fn pi_up(&self, l: usize) -> Result<R> {
        if l == 0 || l > self.t {
            return Err(Error::domain(format!("π_up({l}) needs 1 <= l <= t")));
        }
        if self.params.n == l {
            return Err(Error::domain("π_up undefined when l = n"));
        }
        Ok(self.pis(l).0)
    }

    /// Probability that a set syndrome bit is flipped at step `l` (`l >= 2`).
    pub fn pi_down(&self, l: usize) -> Result<R> {
        if l < 2 || l > self.t {
            return Err(Error::domain(format!("π_down({l}) needs 2 <= l <= t")));
        }
        Ok(self.pis(l).1)
    }

    /// One transition row of the chain over `bits` syndrome bits with `k`
    /// flips per step; `None` when no `a` is admissible (state unreachable).
    fn row(&self, bits: usize, k: usize, x: usize, l: usize) -> Option<Row<R>> {
        let m_up = bits - x;
        if x == 0 {
            // an empty syndrome can only gain weight; also covers π_down(1)
            return (k <= bits).then(|| Row { y_lo: k, probs: vec![R::one()] });
        }
        let (pu, pd) = self.pis(l);
        let mut a_lo = k.saturating_sub(x);
        let mut a_hi = m_up.min(k);
        if a_lo > a_hi {
            return None;
        }
        let one = R::one();
        // degenerate flip probabilities pin `a`
        if pu.is_zero() && m_up > 0 {
            a_hi = 0;
        }
        if pu >= one {
            a_lo = a_lo.max(m_up);
        }
        if pd.is_zero() {
            a_lo = a_lo.max(k);
        }
        if pd >= one {
            if x > k {
                return None;
            }
            a_lo = a_lo.max(k - x);
            a_hi = a_hi.min(k - x);
        }
        if a_lo > a_hi {
            return None;
        }
        let y_of = |a: usize| x + 2 * a - k;
        if a_lo == a_hi {
            return Some(Row { y_lo: y_of(a_lo), probs: vec![R::one()] });
        }
        // log-ratio walk in f64 to locate the mode
        let (pu_f, pd_f) = (pu.to_f64(), pd.to_f64());
        let lodds = (pu_f / (1.0 - pu_f)).ln() + ((1.0 - pd_f) / pd_f).ln();
        let log_ratio = |a: usize| {
            ((m_up - a) as f64).ln() - ((a + 1) as f64).ln() + ((k - a) as f64).ln()
                - ((x + a + 1 - k) as f64).ln()
                + lodds
        };
        let mut best = a_lo;
        let mut acc = 0.0f64;
        let mut best_val = 0.0f64;
        for a in a_lo..a_hi {
            acc += log_ratio(a);
            if acc > best_val {
                best_val = acc;
                best = a + 1;
            }
        }
        let odds = pu.clone() / (one.clone() - &pu) * ((one.clone() - &pd) / &pd);
        let len = a_hi - a_lo + 1;
        let mut probs = vec![R::zero(); len];
        let m = best - a_lo;
        probs[m] = R::one();
        for a in best..a_hi {
            let i = a - a_lo;
            let ratio = R::from_u64(((m_up - a) * (k - a)) as u64) / R::from_u64(((a + 1) * (x + a + 1 - k)) as u64) * &odds;
            probs[i + 1] = probs[i].clone() * ratio;
        }
        for a in (a_lo + 1..=best).rev() {
            let i = a - a_lo;
            let ratio = R::from_u64((a * (x + a - k)) as u64) / R::from_u64(((m_up - a + 1) * (k - a + 1)) as u64) / &odds;
            probs[i - 1] = probs[i].clone() * ratio;
        }
        let total = dist::sum(&probs);
        for p in probs.iter_mut() {
            *p /= &total;
        }
        Some(Row { y_lo: y_of(a_lo), probs })
    }

    /// Rows for every populated state of `states`, computed in parallel.
    fn rows_for(&self, bits: usize, k: usize, l: usize, xs: &[usize]) -> Vec<Option<Row<R>>> {
        xs.par_iter().map(|&x| self.row(bits, k, x, l)).collect()
    }

    fn advance(&self, state: &Window<R>, rows: &[(usize, Option<Row<R>>)], bits: usize, k: usize) -> Window<R> {
        let lo = state.lo.saturating_sub(k);
        let hi = (state.lo + state.p.len() - 1 + k).min(bits);
        let mut out = vec![R::zero(); hi - lo + 1];
        let mut ri = 0;
        for (i, px) in state.p.iter().enumerate() {
            if px.is_zero() {
                continue;
            }
            let x = state.lo + i;
            while rows[ri].0 != x {
                ri += 1;
            }
            match &rows[ri].1 {
                Some(row) => {
                    for (j, q) in row.probs.iter().enumerate() {
                        out[row.y_lo + 2 * j - lo] += px.clone() * q;
                    }
                }
                None => out[x - lo] += px,
            }
        }
        self.trim(Window { lo, p: out })
    }

    fn trim(&self, mut w: Window<R>) -> Window<R> {
        for v in w.p.iter_mut() {
            if *v < self.prune {
                *v = R::zero();
            }
        }
        let first = w.p.iter().position(|v| !v.is_zero()).unwrap_or(0);
        let last = w.p.iter().rposition(|v| !v.is_zero()).unwrap_or(0);
        w.p.truncate(last + 1);
        w.p.drain(..first);
        w.lo += first;
        if w.p.is_empty() {
            w.p.push(R::zero());
        }
        w
    }

    fn support(states: &[&Window<R>]) -> Vec<usize> {
        let mut xs: Vec<usize> = states
            .iter()
            .flat_map(|s| s.p.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(move |(i, _)| s.lo + i))
            .collect();
        xs.sort_unstable();
        xs.dedup();
        xs
    }

    fn step_all(&self, states: &mut [Window<R>], bits: usize, k: usize, l: usize) {
        if states.is_empty() {
            return;
        }
        let refs: Vec<&Window<R>> = states.iter().collect();
        let xs = Self::support(&refs);
        let rows: Vec<(usize, Option<Row<R>>)> = xs.iter().copied().zip(self.rows_for(bits, k, l, &xs)).collect();
        let next: Vec<Window<R>> = states.par_iter().map(|s| self.advance(s, &rows, bits, k)).collect();
        for (s, n) in states.iter_mut().zip(next) {
            *s = n;
        }
    }

    /// `p_{x,y,l}` of the weight chain over `r` bits.
    pub fn transition_prob(&self, x: usize, y: usize, l: usize) -> R {
        let (r, v) = (self.params.r, self.params.v);
        if x > r || y > r || l == 0 || l > self.t.max(1) {
            return R::zero();
        }
        if l == 1 && x != 0 {
            return R::zero();
        }
        match self.row(r, v, x, l) {
            None => if x == y { R::one() } else { R::zero() },
            Some(row) => {
                if y < row.y_lo || (y - row.y_lo) % 2 != 0 {
                    return R::zero();
                }
                row.probs.get((y - row.y_lo) / 2).cloned().unwrap_or_else(R::zero)
            }
        }
    }

    /// Whether state `x` at step `l` has at least one admissible transition.
    pub fn is_reachable_state(&self, x: usize, l: usize) -> bool {
        self.row(self.params.r, self.params.v, x, l).is_some()
    }

    /// `Pr(W_t = y)` for `y` in `0..=r`.
    pub fn syndrome_weight_distribution(&self) -> Pmf<R> {
        let (r, v) = (self.params.r, self.params.v);
        let mut st = vec![Window::point(0)];
        for l in 1..=self.t {
            self.step_all(&mut st, r, v, l);
        }
        let s = st.pop().unwrap();
        Pmf::new(0, s.into_dense(r + 1))
    }

    /// Joint table `φ(f,t)·Pr(W_t = y | F_t = f)` from the split chain over
    /// `r-1` bits: the `t-f` error bits outside the tracked row come first
    /// (`v` flips each), then the `f` inside it (`v-1` flips each).
    pub fn flip_table(&self) -> FlipTable<R> {
        let (r, v, w, t) = (self.params.r, self.params.v, self.params.w, self.t);
        let fmax = t.min(w);
        let bits = r - 1;
        let mut outer = vec![Window::point(0)];
        // phase-two chains indexed by f, created as the outer chain reaches step t-f
        let mut inner: Vec<Window<R>> = Vec::new();
        let mut inner_f: Vec<usize> = Vec::new();
        if fmax == t {
            inner.push(Window::point(0));
            inner_f.push(t);
        }
        for l in 1..=t {
            if !inner.is_empty() && v >= 1 {
                self.step_all(&mut inner, bits, v - 1, l);
            }
            self.step_all(&mut outer, bits, v, l);
            // outer now holds the state after l steps; start chain for f = t - l
            let f = t - l;
            if f >= 1 && f <= fmax {
                inner.push(outer[0].clone());
                inner_f.push(f);
            }
        }
        let mut cond: Vec<Vec<R>> = vec![Vec::new(); fmax + 1];
        let outer_dense = outer.pop().unwrap().into_dense(r);
        cond[0] = outer_dense;
        for (s, f) in inner.into_iter().zip(inner_f) {
            cond[f] = s.into_dense(r);
        }
        let mut joint = vec![vec![R::zero(); r + 1]; fmax + 1];
        for (f, c) in cond.iter().enumerate() {
            let ph = self.phi_at(f, t);
            let shift = f & 1;
            for (x, p) in c.iter().enumerate() {
                if !p.is_zero() {
                    joint[f][x + shift] = p.clone() * &ph;
                }
            }
        }
        let marginal = (0..=r)
            .map(|y| {
                let mut s = R::zero();
                for row in &joint {
                    s += &row[y];
                }
                s
            })
            .collect();
        FlipTable { fmax, joint, marginal }
    }
}

/// `φ(f,t)·Pr(W_t = y | F_t = f)` for `f` in `0..=min(t,w)` and `y` in `0..=r`.
#[derive(Clone, Debug)]
pub struct FlipTable<R: Real = f64> {
    pub fmax: usize,
    joint: Vec<Vec<R>>,
    marginal: Vec<R>,
}

impl<R: Real> FlipTable<R> {
    pub fn joint(&self, f: usize, y: usize) -> R {
        self.joint.get(f).and_then(|row| row.get(y)).cloned().unwrap_or_else(R::zero)
    }

    /// `Σ_f` of the joint table, i.e. the syndrome-weight law implied by the split chain.
    pub fn implied_marginal(&self) -> &[R] {
        &self.marginal
    }

    /// `Pr(F_t = f | W_t = y)` over `f` in `0..=min(t,w)`. `weight_y` is `Pr(W_t = y)`,
    /// used only with [`FlipNormalization::Marginal`].
    pub fn conditional(&self, y: usize, weight_y: &R, norm: FlipNormalization) -> Result<Pmf<R>> {
        let den = match norm {
            FlipNormalization::Joint => self.marginal.get(y).cloned().unwrap_or_else(R::zero),
            FlipNormalization::Marginal => weight_y.clone(),
        };
        if den.is_zero() {
            return Err(Error::domain(format!("syndrome weight {y} has zero probability")));
        }
        let probs = (0..=self.fmax).map(|f| (self.joint(f, y) / &den).clamp_unit()).collect();
        Ok(Pmf::new(0, probs))
    }
}

/// `Pr(W_t = y)` for the ensemble `(params, t)` in the backend `R`.
pub fn syndrome_weight_distribution<R: Real>(params: &CodeParams, t: usize) -> Result<Pmf<R>> {
    Ok(ChainContext::<R>::new(*params, t)?.syndrome_weight_distribution())
}

/// `Pr(F_t = f | W_t = y)` for one syndrome weight.
pub fn conditional_flip_pmf<R: Real>(params: &CodeParams, t: usize, y: usize, norm: FlipNormalization) -> Result<Pmf<R>> {
    let ctx = ChainContext::<R>::new(*params, t)?;
    let table = ctx.flip_table();
    let wy = ctx.syndrome_weight_distribution().get(y as i64);
    if wy.is_zero() {
        return Err(Error::domain(format!("syndrome weight {y} is unreachable")));
    }
    table.conditional(y, &wy, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Float;

    fn toy() -> CodeParams {
        CodeParams::regular(14, 7, 2, 4).unwrap()
    }

    #[test]
    fn phi_values() {
        let ctx = ChainContext::<f64>::new(toy(), 3).unwrap();
        assert!((ctx.phi(1, 1).unwrap() - 4.0 / 14.0).abs() < 1e-15);
        assert_eq!(ctx.phi(0, 0).unwrap(), 1.0);
        let s: f64 = (0..=3).map(|f| ctx.phi(f, 3).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!(ctx.phi(4, 3).is_err());
    }

    #[test]
    fn pi_up_first_step() {
        let ctx = ChainContext::<f64>::new(toy(), 3).unwrap();
        assert!((ctx.pi_up(1).unwrap() - 4.0 / 13.0).abs() < 1e-15);
        assert!(ctx.pi_down(1).is_err());
        assert!(ctx.pi_down(2).unwrap() > 0.0);
    }

    #[test]
    fn first_step_is_deterministic() {
        let p = CodeParams::regular(4400, 2200, 11, 22).unwrap();
        let ctx = ChainContext::<f64>::new(p, 18).unwrap();
        assert_eq!(ctx.transition_prob(0, 11, 1), 1.0);
        assert_eq!(ctx.transition_prob(20, 12, 3), 0.0);
        let d = ChainContext::<f64>::new(p, 1).unwrap().syndrome_weight_distribution();
        assert_eq!(d.get(11), 1.0);
    }

    #[test]
    fn backends_agree_on_toy() {
        let p = CodeParams::regular(400, 200, 5, 10).unwrap();
        let a = ChainContext::<f64>::new(p, 12).unwrap().syndrome_weight_distribution();
        let b = ChainContext::<Float>::new(p, 12).unwrap().syndrome_weight_distribution();
        for y in 0..=200i64 {
            let (x, z) = (a.get(y), b.get(y).to_f64());
            if z > 1e-200 {
                assert!((x - z).abs() <= 1e-10 * z, "y={y}: {x} vs {z}");
            }
        }
    }

    #[test]
    fn memo_is_transparent() {
        let p = CodeParams::regular(400, 200, 5, 10).unwrap();
        let a = ChainContext::<f64>::with_options(p, 10, true, 0.0).unwrap();
        let b = ChainContext::<f64>::with_options(p, 10, false, 0.0).unwrap();
        assert_eq!(a.syndrome_weight_distribution().probs(), b.syndrome_weight_distribution().probs());
    }
}
