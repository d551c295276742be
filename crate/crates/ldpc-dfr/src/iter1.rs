//! First decoder iteration: parity-check states seen by clear and asserted
//! bits, upc laws, flip probabilities and the discrepancy distribution.

use rayon::prelude::*;

use crate::code::CodeParams;
use crate::dist;
use crate::error::{Error, Result};
use crate::pmf::Pmf;
use crate::real::Real;
use crate::syndrome::{ChainContext, FlipNormalization, FlipTable};

/// Absolute floor below which binomial tails of `δ₊`/`δ₋` are not materialised.
pub const PMF_FLOOR: f64 = 1e-300;

/// Flip decisions of a bit whose `v` checks include one known-state check:
/// tails of `B(v-1, p_unsat|·, a)` at `th` (satisfied) and `th-1` (unsatisfied).
#[derive(Clone, Debug)]
pub struct OneEq<R: Real = f64> {
    /// `Σ_{a≥th} B(v-1, p_unsat|0, a)` and its complement.
    pub flip0_sat: R,
    pub noflip0_sat: R,
    /// `Σ_{a≥th-1} B(v-1, p_unsat|0, a)` and its complement.
    pub flip0_unsat: R,
    pub noflip0_unsat: R,
    /// `Σ_{a≤th-1} B(v-1, p_unsat|1, a)` and its complement.
    pub noflip1_sat: R,
    pub flip1_sat: R,
    /// `Σ_{a≤th-2} B(v-1, p_unsat|1, a)` and its complement.
    pub noflip1_unsat: R,
    pub flip1_unsat: R,
}

impl<R: Real> OneEq<R> {
    pub fn new(v: usize, th: u32, p_unsat0: &R, p_unsat1: &R) -> Self {
        let m = v.saturating_sub(1) as u64;
        let b0 = dist::binom_pmf(m, p_unsat0, &(R::one() - p_unsat0));
        let b1 = dist::binom_pmf(m, p_unsat1, &(R::one() - p_unsat1));
        let th = th as i64;
        let (flip0_sat, noflip0_sat) = dist::split_at(&b0, th);
        let (flip0_unsat, noflip0_unsat) = dist::split_at(&b0, th - 1);
        let (flip1_sat, noflip1_sat) = dist::split_at(&b1, th);
        let (flip1_unsat, noflip1_unsat) = dist::split_at(&b1, th - 1);
        OneEq {
            flip0_sat,
            noflip0_sat,
            flip0_unsat,
            noflip0_unsat,
            noflip1_sat,
            flip1_sat,
            noflip1_unsat,
            flip1_unsat,
        }
    }

    fn fields(&self) -> [&R; 8] {
        [
            &self.flip0_sat,
            &self.noflip0_sat,
            &self.flip0_unsat,
            &self.noflip0_unsat,
            &self.noflip1_sat,
            &self.flip1_sat,
            &self.noflip1_unsat,
            &self.flip1_unsat,
        ]
    }

    fn from_fields(f: [R; 8]) -> Self {
        let [a, b, c, d, e, g, h, i] = f;
        OneEq {
            flip0_sat: a,
            noflip0_sat: b,
            flip0_unsat: c,
            noflip0_unsat: d,
            noflip1_sat: e,
            flip1_sat: g,
            noflip1_unsat: h,
            flip1_unsat: i,
        }
    }
}

/// Everything the first iteration determines, for one syndrome weight or
/// averaged over the syndrome-weight law (`y == None`).
#[derive(Clone, Debug)]
pub struct Iter1Profile<R: Real = f64> {
    pub n: usize,
    pub t: usize,
    pub v: usize,
    pub w: usize,
    pub th1: u32,
    pub y: Option<usize>,
    pub p_unsat0: R,
    pub p_unsat1: R,
    /// `Pr(U_j = u | e_j = 0)` over `0..=v`.
    pub upc_clear: Pmf<R>,
    /// `Pr(U_j = u | e_j = 1)` over `0..=v`.
    pub upc_set: Pmf<R>,
    pub p_flip0: R,
    pub p_noflip0: R,
    pub p_flip1: R,
    pub p_noflip1: R,
    pub one_eq: OneEq<R>,
    /// `Pr(F_t = f | W_t = y)` over `0..=min(t, w)`.
    pub flips: Pmf<R>,
    /// Erroneous flips among the `n - t` clear bits.
    pub delta_plus: Pmf<R>,
    /// Correct flips among the `t` asserted bits.
    pub delta_minus: Pmf<R>,
    /// `1 - Pr(E₁ = 0)`.
    pub dfr1: R,
}

/// `(p_unsat|0, p_unsat|1)` from `Pr(F = f | y)`: a check is unsatisfied iff
/// it holds an odd number of error bits; a clear (asserted) term is one of
/// the `w - f` (`f`) positions of that kind.
pub fn punsat_from_flips<R: Real>(flips: &Pmf<R>, w: usize) -> (R, R) {
    let mut odd0 = R::zero();
    let mut all0 = R::zero();
    let mut odd1 = R::zero();
    let mut all1 = R::zero();
    for (f, p) in flips.iter() {
        let f = f as u64;
        let clear = p.clone() * R::from_u64(w as u64 - f.min(w as u64));
        let set = p.clone() * R::from_u64(f);
        if f % 2 == 1 {
            odd0 += &clear;
            odd1 += &set;
        }
        all0 += clear;
        all1 += set;
    }
    let ratio = |a: R, b: R| if b.is_zero() { R::zero() } else { (a / b).clamp_unit() };
    (ratio(odd0, all0), ratio(odd1, all1))
}

/// `(δ₊, δ₋)` for given flip probabilities, with complements passed explicitly.
pub fn delta_pmfs<R: Real>(n: usize, t: usize, pf0: &R, pnf0: &R, pf1: &R, pnf1: &R) -> (Pmf<R>, Pmf<R>) {
    let floor = R::from_f64(PMF_FLOOR);
    let (lo, p) = dist::binom_pmf_window((n - t) as u64, pf0, pnf0, &floor);
    let plus = Pmf::new(lo as i64, p);
    let (lo, p) = dist::binom_pmf_window(t as u64, pf1, pnf1, &floor);
    (plus, Pmf::new(lo as i64, p))
}

/// `Pr(E₁ = d)` with `d = t - d₋ + d₊`.
pub fn discrepancy_from<R: Real>(t: usize, plus: &Pmf<R>, minus: &Pmf<R>) -> Pmf<R> {
    if plus.probs().is_empty() || minus.probs().is_empty() {
        return Pmf::new(0, Vec::new());
    }
    let t = t as i64;
    let lo = t - minus.hi() + plus.lo();
    let hi = t - minus.lo() + plus.hi();
    let mut out = vec![R::zero(); (hi - lo + 1) as usize];
    for (dm, pm) in minus.iter() {
        for (dp, pp) in plus.iter() {
            out[(t - dm + dp - lo) as usize] += pp.clone() * pm;
        }
    }
    Pmf::new(lo, out)
}

impl<R: Real> Iter1Profile<R> {
    /// Profile for one syndrome weight, from its conditional flip-count law.
    pub fn from_flips(params: &CodeParams, t: usize, th1: u32, y: Option<usize>, flips: Pmf<R>) -> Self {
        let (n, v, w) = (params.n, params.v, params.w);
        let (pu0, pu1) = punsat_from_flips(&flips, w);
        let upc0 = dist::binom_pmf(v as u64, &pu0, &(R::one() - &pu0));
        let upc1 = dist::binom_pmf(v as u64, &pu1, &(R::one() - &pu1));
        let (pf0, pnf0) = dist::split_at(&upc0, th1 as i64);
        let (pf1, pnf1) = dist::split_at(&upc1, th1 as i64);
        let (plus, minus) = delta_pmfs(n, t, &pf0, &pnf0, &pf1, &pnf1);
        let (dfr1, _) = dist::failure_of_product(&[(pf0.clone(), (n - t) as u64), (pnf1.clone(), t as u64)]);
        Iter1Profile {
            n,
            t,
            v,
            w,
            th1,
            y,
            one_eq: OneEq::new(v, th1, &pu0, &pu1),
            p_unsat0: pu0,
            p_unsat1: pu1,
            upc_clear: Pmf::new(0, upc0),
            upc_set: Pmf::new(0, upc1),
            p_flip0: pf0,
            p_noflip0: pnf0,
            p_flip1: pf1,
            p_noflip1: pnf1,
            flips,
            delta_plus: plus,
            delta_minus: minus,
            dfr1,
        }
    }

    /// Weighted average of per-weight profiles; weights are renormalised.
    pub fn average(parts: &[(R, Iter1Profile<R>)]) -> Result<Self> {
        let first = &parts.first().ok_or_else(|| Error::domain("no syndrome weight to average over"))?.1;
        let total = parts.iter().fold(R::zero(), |acc, (wt, _)| acc + wt);
        if total.is_zero() {
            return Err(Error::domain("syndrome weights carry no mass"));
        }
        let ws: Vec<R> = parts.iter().map(|(wt, _)| wt.clone() / &total).collect();
        let scalar = |get: &dyn Fn(&Iter1Profile<R>) -> &R| {
            let mut s = R::zero();
            for (wt, (_, p)) in ws.iter().zip(parts) {
                s += get(p).clone() * wt;
            }
            s.clamp_unit()
        };
        let pmf = |get: &dyn Fn(&Iter1Profile<R>) -> &Pmf<R>| {
            Pmf::mixture(ws.iter().zip(parts).map(|(wt, (_, p))| (wt, get(p))))
        };
        let one_eq = OneEq::from_fields(std::array::from_fn(|i| scalar(&|p: &Iter1Profile<R>| p.one_eq.fields()[i])));
        Ok(Iter1Profile {
            n: first.n,
            t: first.t,
            v: first.v,
            w: first.w,
            th1: first.th1,
            y: None,
            p_unsat0: scalar(&|p| &p.p_unsat0),
            p_unsat1: scalar(&|p| &p.p_unsat1),
            upc_clear: pmf(&|p| &p.upc_clear),
            upc_set: pmf(&|p| &p.upc_set),
            p_flip0: scalar(&|p| &p.p_flip0),
            p_noflip0: scalar(&|p| &p.p_noflip0),
            p_flip1: scalar(&|p| &p.p_flip1),
            p_noflip1: scalar(&|p| &p.p_noflip1),
            one_eq,
            flips: pmf(&|p| &p.flips),
            delta_plus: pmf(&|p| &p.delta_plus),
            delta_minus: pmf(&|p| &p.delta_minus),
            dfr1: scalar(&|p| &p.dfr1),
        })
    }

    /// `Pr(E₁ = d)` for this profile. For an averaged profile this treats the
    /// averaged `δ₊`, `δ₋` as independent; see [`Iter1Model::discrepancy_pmf`]
    /// for the exact mixture.
    pub fn discrepancy_pmf(&self) -> Pmf<R> {
        discrepancy_from(self.t, &self.delta_plus, &self.delta_minus)
    }
}

/// Options for building an [`Iter1Model`].
#[derive(Clone, Copy, Debug)]
pub struct Iter1Options {
    pub normalization: FlipNormalization,
    /// Syndrome weights with smaller probability are skipped; `None` picks the
    /// backend default.
    pub weight_floor: Option<f64>,
    pub memo: bool,
}

impl Default for Iter1Options {
    fn default() -> Self {
        Iter1Options { normalization: FlipNormalization::Joint, weight_floor: None, memo: true }
    }
}

/// Syndrome-weight law and flip table for one `(params, t)`, from which
/// first-iteration profiles are derived for any threshold.
#[derive(Clone, Debug)]
pub struct Iter1Model<R: Real = f64> {
    pub params: CodeParams,
    pub t: usize,
    weights: Pmf<R>,
    table: FlipTable<R>,
    normalization: FlipNormalization,
    floor: R,
}

impl<R: Real> Iter1Model<R> {
    pub fn new(params: CodeParams, t: usize) -> Result<Self> {
        Self::with_options(params, t, Iter1Options::default())
    }

    pub fn with_options(params: CodeParams, t: usize, opts: Iter1Options) -> Result<Self> {
        let ctx = if opts.memo {
            ChainContext::<R>::new(params, t)?
        } else {
            let base = ChainContext::<R>::new(params, t)?;
            ChainContext::with_options(params, t, false, base.prune().clone())?
        };
        let weights = ctx.syndrome_weight_distribution();
        let table = ctx.flip_table();
        let floor = R::from_f64(opts.weight_floor.unwrap_or_else(|| R::precision().default_floor()));
        Ok(Iter1Model { params, t, weights, table, normalization: opts.normalization, floor })
    }

    /// `Pr(W_t = y)` over `0..=r`.
    pub fn syndrome_weights(&self) -> &Pmf<R> {
        &self.weights
    }

    pub fn flip_table(&self) -> &FlipTable<R> {
        &self.table
    }

    /// Syndrome weights whose probability reaches the floor.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .filter(|(_, p)| !p.is_zero() && **p >= self.floor)
            .map(|(y, _)| y as usize)
            .collect()
    }

    /// `Pr(F_t = f | W_t = y)`.
    pub fn flip_pmf(&self, y: usize) -> Result<Pmf<R>> {
        let wy = self.weights.get(y as i64);
        if wy.is_zero() {
            return Err(Error::domain(format!("syndrome weight {y} is unreachable")));
        }
        self.table.conditional(y, &wy, self.normalization)
    }

    /// `(p_unsat|0, p_unsat|1)` given `W_t = y`.
    pub fn punsat_probs(&self, y: usize) -> Result<(R, R)> {
        Ok(punsat_from_flips(&self.flip_pmf(y)?, self.params.w))
    }

    /// `((p_flip|0, p_¬flip|0), (p_flip|1, p_¬flip|1))` given `W_t = y`.
    pub fn flip_probs(&self, y: usize, th1: u32) -> Result<((R, R), (R, R))> {
        let p = self.profile(y, th1)?;
        Ok(((p.p_flip0, p.p_noflip0), (p.p_flip1, p.p_noflip1)))
    }

    pub fn profile(&self, y: usize, th1: u32) -> Result<Iter1Profile<R>> {
        Ok(Iter1Profile::from_flips(&self.params, self.t, th1, Some(y), self.flip_pmf(y)?))
    }

    /// Profiles for every supported weight, paired with `Pr(W_t = y)`.
    pub fn profiles(&self, th1: u32) -> Result<Vec<(R, Iter1Profile<R>)>> {
        let ys = self.support();
        ys.par_iter()
            .map(|&y| Ok((self.weights.get(y as i64), self.profile(y, th1)?)))
            .collect()
    }

    /// Profile averaged over the syndrome-weight law.
    pub fn averaged_profile(&self, th1: u32) -> Result<Iter1Profile<R>> {
        Iter1Profile::average(&self.profiles(th1)?)
    }

    /// `Pr(E₁ = d | W_t = y)`, or the total-probability mixture over `y` when `y` is `None`.
    pub fn discrepancy_pmf(&self, y: Option<usize>, th1: u32) -> Result<Pmf<R>> {
        match y {
            Some(y) => Ok(self.profile(y, th1)?.discrepancy_pmf()),
            None => {
                let parts: Vec<(R, Pmf<R>)> =
                    self.profiles(th1)?.into_iter().map(|(w, p)| (w, p.discrepancy_pmf())).collect();
                let total = parts.iter().fold(R::zero(), |a, (w, _)| a + w);
                let ws: Vec<R> = parts.iter().map(|(w, _)| w.clone() / &total).collect();
                Ok(Pmf::mixture(ws.iter().zip(parts.iter().map(|(_, p)| p))))
            }
        }
    }

    /// `DFR₁ = Σ_y Pr(W_t = y)·(1 - Pr(E₁ = 0 | W_t = y))`.
    pub fn dfr1(&self, th1: u32) -> Result<R> {
        if self.t == 0 {
            return Ok(R::zero());
        }
        Ok(self.averaged_profile(th1)?.dfr1)
    }
}
