//! Second decoder iteration: flip probabilities of the four position classes
//! `J_ab` (true bit `a`, discrepancy `b` after the first iteration) and the
//! resulting two-iteration failure rate.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;

use crate::code::CodeParams;
use crate::dist;
use crate::error::{Error, Result};
use crate::iter1::{Iter1Model, Iter1Options, Iter1Profile};
use crate::real::Real;

/// Position classes after the first iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    /// Clear bit, estimate correct.
    C00,
    /// Clear bit, wrongly flipped.
    C01,
    /// Asserted bit, correctly flipped.
    C10,
    /// Asserted bit, not flipped.
    C11,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::C00, Class::C01, Class::C10, Class::C11];

    pub fn index(self) -> usize {
        self as usize
    }

    /// True error bit of positions in the class.
    pub fn error_bit(self) -> bool {
        matches!(self, Class::C10 | Class::C11)
    }

    /// Whether the position is itself a discrepancy after the first iteration.
    pub fn discrepant(self) -> bool {
        matches!(self, Class::C01 | Class::C11)
    }

    /// Whether the first iteration flipped the position.
    pub fn flipped_first(self) -> bool {
        matches!(self, Class::C01 | Class::C10)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::C00 => "00",
            Class::C01 => "01",
            Class::C10 => "10",
            Class::C11 => "11",
        })
    }
}

/// `(p_flip0^Sat, p_flip0^Unsat, p_¬flip1^Sat, p_¬flip1^Unsat)`.
pub fn one_eq_conditionals<R: Real>(iter1: &Iter1Profile<R>) -> [R; 4] {
    let o = &iter1.one_eq;
    [o.flip0_sat.clone(), o.flip0_unsat.clone(), o.noflip1_sat.clone(), o.noflip1_unsat.clone()]
}

/// `γ = χ₁(1-χ₂) + (1-χ₁)χ₂` from `(odd, even)` shares, with its complement
/// `χ₁χ₂ + (1-χ₁)(1-χ₂)` formed directly.
pub fn gamma<R: Real>(chi1: &(R, R), chi2: &(R, R)) -> (R, R) {
    let g = chi1.0.clone() * &chi2.1 + chi1.1.clone() * &chi2.0;
    let c = chi1.0.clone() * &chi2.0 + chi1.1.clone() * &chi2.1;
    (g.clamp_unit(), c.clamp_unit())
}

/// `(Σ_{l odd} a_l b_{e-l}, Σ_{l even} a_l b_{e-l}) / Σ_l a_l b_{e-l}` over
/// `l ∈ [max(0, e - outside), min(e, a.len()-1)]`; `None` when the conditioning
/// event has no mass. `b` must cover `0..=e`.
fn odd_share<R: Real>(a: &[R], b: &[R], e: usize, outside: usize) -> Option<(R, R)> {
    let mut odd = R::zero();
    let mut even = R::zero();
    if a.is_empty() {
        return None;
    }
    let lo = e.saturating_sub(outside);
    let hi = e.min(a.len() - 1);
    for l in lo..=hi {
        let x = a[l].clone() * &b[e - l];
        if l % 2 == 1 {
            odd += x;
        } else {
            even += x;
        }
    }
    let total = odd.clone() + &even;
    if total.is_zero() {
        return None;
    }
    Some(((odd / &total).clamp_unit(), (even / total).clamp_unit()))
}

/// Which of the two placements a class uses for the `χ` quantities: the
/// examined position is either among the clear (asserted) terms of the check
/// and excluded from them, or not.
#[derive(Clone, Copy)]
enum Slot {
    Excluded = 0,
    Free = 1,
}

/// Binomial kernels for one `(slot, tc)` pair.
#[derive(Clone, Debug)]
struct Kernel<R: Real> {
    /// Masses of the in-check count, `0..=min(trials, cap)`; empty when the
    /// configuration cannot occur.
    inside: Vec<R>,
    outside_trials: usize,
    /// `(p, 1 - p)` of the out-of-check count.
    kout: (R, R),
    /// Cached `(odd, even)` shares for `ε` in `0..=cap`.
    shares: Vec<Option<(R, R)>>,
}

impl<R: Real> Kernel<R> {
    fn build(trials: Option<usize>, kin: (&R, &R), outside: Option<usize>, kout: (&R, &R), cap: usize) -> Self {
        let (Some(m), Some(o)) = (trials, outside) else {
            let kout = (kout.0.clone(), kout.1.clone());
            return Kernel { inside: Vec::new(), outside_trials: 0, kout, shares: vec![None; cap + 1] };
        };
        let inside = dist::binom_pmf_range(m as u64, kin.0, kin.1, 0, cap.min(m) as u64);
        let mut out = dist::binom_pmf_range(o as u64, kout.0, kout.1, 0, cap as u64);
        out.resize(cap + 1, R::zero());
        let shares = (0..=cap).map(|e| odd_share(&inside, &out, e, o)).collect();
        Kernel { inside, outside_trials: o, kout: (kout.0.clone(), kout.1.clone()), shares }
    }

    fn share(&self, e: usize) -> Option<(R, R)> {
        if e < self.shares.len() {
            return self.shares[e].clone();
        }
        None
    }
}

/// `(p_BecomeUnsat, p_StayUnsat)` with complements; `empty` marks a parity
/// class without posterior mass (the pair then defaults to `0`).
#[derive(Clone, Debug)]
pub struct BecomeStay<R: Real = f64> {
    pub become_unsat: (R, R),
    pub stay_unsat: (R, R),
    pub empty: bool,
}

/// Flip probabilities of the four classes at one `(ε₀₁, ε₁₁)`, with every
/// complement computed directly.
#[derive(Clone, Debug)]
pub struct ClassFlipProbs<R: Real = f64> {
    pub eps01: usize,
    pub eps11: usize,
    pub flip: [R; 4],
    pub noflip: [R; 4],
}

impl<R: Real> ClassFlipProbs<R> {
    /// Probability of the outcome that leaves a discrepancy in the class:
    /// flipping for `00`/`10`, not flipping for `01`/`11`.
    pub fn bad(&self, c: Class) -> &R {
        if c.discrepant() {
            &self.noflip[c.index()]
        } else {
            &self.flip[c.index()]
        }
    }
}

/// How per-point failures are combined into the failure probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Bound {
    /// `1 - Π (1 - p_bad)^count`.
    #[default]
    Exact,
    /// `min(1, E[E₂])` with `E[E₂] = Σ p_bad · count`.
    Expectation,
}

/// Whether the syndrome weight is averaged out before the second iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Averaging {
    /// One profile averaged over `Pr(W_t = y)`.
    #[default]
    Averaged,
    /// One full evaluation per syndrome weight, combined by total probability.
    PerWeight,
}

/// Second-iteration state for one first-iteration profile.
#[derive(Clone, Debug)]
pub struct Iter2Context<R: Real = f64> {
    pub iter1: Iter1Profile<R>,
    pub th2: u32,
    tc_max: usize,
    /// `[slot][tc]` for added discrepancies (`χ↕`).
    add: [Vec<Kernel<R>>; 2],
    /// `[slot][tc]` for kept discrepancies (`χ↔`).
    keep: [Vec<Kernel<R>>; 2],
    /// Unnormalised `Pr(F = tc | J_ab)` by class.
    posterior: [Vec<R>; 4],
}

impl<R: Real> Iter2Context<R> {
    /// Builds the `χ` tables for every `ε` the first-iteration windows allow.
    pub fn new(iter1: Iter1Profile<R>, th2: u32) -> Result<Self> {
        let cap01 = (iter1.delta_plus.hi().max(0) as usize).min(iter1.n - iter1.t);
        let cap11 = (iter1.t as i64 - iter1.delta_minus.lo()).clamp(0, iter1.t as i64) as usize;
        Self::with_caps(iter1, th2, cap01, cap11)
    }

    /// As [`Iter2Context::new`] with explicit table sizes for `ε₀₁` and `ε₁₁`.
    pub fn with_caps(iter1: Iter1Profile<R>, th2: u32, cap01: usize, cap11: usize) -> Result<Self> {
        let (n, t, w) = (iter1.n, iter1.t, iter1.w);
        if t > n || w == 0 || w > n {
            return Err(Error::param(format!("inconsistent profile: n={n}, t={t}, w={w}")));
        }
        let tc_max = t.min(w);
        let o = &iter1.one_eq;
        let clear_out = |tc: usize| (n - w).checked_sub(t - tc);
        let set_out = |tc: usize| Some(t - tc);
        let kernels = |slot: Slot, keep: bool| -> Vec<Kernel<R>> {
            (0..=tc_max)
                .into_par_iter()
                .map(|tc| {
                    let even = tc % 2 == 0;
                    if keep {
                        let trials = match slot {
                            Slot::Excluded => tc.checked_sub(1),
                            Slot::Free => Some(tc),
                        };
                        let kin = if even { (&o.noflip1_sat, &o.flip1_sat) } else { (&o.noflip1_unsat, &o.flip1_unsat) };
                        Kernel::build(trials, kin, set_out(tc), (&iter1.p_noflip1, &iter1.p_flip1), cap11)
                    } else {
                        let trials = match slot {
                            Slot::Excluded => (w - tc).checked_sub(1),
                            Slot::Free => Some(w - tc),
                        };
                        let kin = if even { (&o.flip0_sat, &o.noflip0_sat) } else { (&o.flip0_unsat, &o.noflip0_unsat) };
                        Kernel::build(trials, kin, clear_out(tc), (&iter1.p_flip0, &iter1.p_noflip0), cap01)
                    }
                })
                .collect()
        };
        let add = [kernels(Slot::Excluded, false), kernels(Slot::Free, false)];
        let keep = [kernels(Slot::Free, true), kernels(Slot::Excluded, true)];
        let posterior = Class::ALL.map(|c| {
            (0..=tc_max)
                .map(|tc| {
                    let even = tc % 2 == 0;
                    let f = iter1.flips.get(tc as i64);
                    let (share, cond) = match c {
                        Class::C00 | Class::C01 if tc < w => {
                            let k = match (c, even) {
                                (Class::C00, true) => &o.noflip0_sat,
                                (Class::C00, false) => &o.noflip0_unsat,
                                (_, true) => &o.flip0_sat,
                                (_, false) => &o.flip0_unsat,
                            };
                            (w - tc, k)
                        }
                        Class::C10 | Class::C11 if tc >= 1 => {
                            let k = match (c, even) {
                                (Class::C10, true) => &o.flip1_sat,
                                (Class::C10, false) => &o.flip1_unsat,
                                (_, true) => &o.noflip1_sat,
                                (_, false) => &o.noflip1_unsat,
                            };
                            (tc, k)
                        }
                        _ => return R::zero(),
                    };
                    f * R::from_u64(share as u64) / R::from_u64(w as u64) * cond
                })
                .collect()
        });
        Ok(Iter2Context { iter1, th2, tc_max, add, keep, posterior })
    }

    fn slots(c: Class) -> (usize, usize) {
        // clear-class positions sit among the clear terms of the check,
        // asserted-class positions among the asserted ones
        if c.error_bit() {
            (Slot::Free as usize, 1)
        } else {
            (Slot::Excluded as usize, 0)
        }
    }

    /// `ε` values the `χ` quantities see for class `c`: the examined position
    /// is one of the discrepancies of its own class.
    fn shifted(c: Class, eps01: usize, eps11: usize) -> (usize, usize) {
        match c {
            Class::C01 => (eps01.saturating_sub(1), eps11),
            Class::C11 => (eps01, eps11.saturating_sub(1)),
            _ => (eps01, eps11),
        }
    }

    fn kernel_share(table: &[Kernel<R>], tc: usize, e: usize) -> Option<(R, R)> {
        let k = table.get(tc)?;
        if let Some(s) = k.share(e) {
            return Some(s);
        }
        if k.inside.is_empty() || e < k.shares.len() {
            return None;
        }
        // beyond the cached range: rebuild the out-of-check masses up to `e`
        let mut out = dist::binom_pmf_range(k.outside_trials as u64, &k.kout.0, &k.kout.1, 0, e as u64);
        out.resize(e + 1, R::zero());
        odd_share(&k.inside, &out, e, k.outside_trials)
    }

    /// `χ↕odd(tc, ε₀₁)` as `(odd, even)` for the placement of class `c`;
    /// `None` when `ξ = 0`.
    pub fn chi_add_for(&self, c: Class, tc: usize, eps01: usize) -> Option<(R, R)> {
        Self::kernel_share(&self.add[Self::slots(c).0], tc, eps01)
    }

    /// `χ↔odd(tc, ε₁₁)` as `(odd, even)` for the placement of class `c`;
    /// `None` when `θ = 0`.
    pub fn chi_keep_for(&self, c: Class, tc: usize, eps11: usize) -> Option<(R, R)> {
        Self::kernel_share(&self.keep[Self::slots(c).1], tc, eps11)
    }

    /// `χ↕odd(tc, ε₀₁)` for a position of `J₀₀`; 0 on impossible conditioning.
    pub fn chi_add_odd(&self, tc: usize, eps01: usize) -> R {
        self.chi_add_for(Class::C00, tc, eps01).map_or_else(R::zero, |s| s.0)
    }

    /// `χ↔odd(tc, ε₁₁)` for a position of `J₀₀`; 0 on impossible conditioning.
    pub fn chi_keep_odd(&self, tc: usize, eps11: usize) -> R {
        self.chi_keep_for(Class::C00, tc, eps11).map_or_else(R::zero, |s| s.0)
    }

    /// Probability that a check holding a class-`c` position and `tc`
    /// asserted terms is unsatisfied after the first iteration, and its
    /// complement: `γ` for classes `00`/`10`, `1 - γ` for `01`/`11`.
    /// Impossible conditionings count as `χ = 0`.
    pub fn unsat_after(&self, c: Class, tc: usize, eps01: usize, eps11: usize) -> (R, R) {
        let (e01, e11) = Self::shifted(c, eps01, eps11);
        let none = || (R::zero(), R::one());
        let chi1 = self.chi_add_for(c, tc, e01).unwrap_or_else(none);
        let chi2 = self.chi_keep_for(c, tc, e11).unwrap_or_else(none);
        let (g, gc) = gamma(&chi1, &chi2);
        if c.discrepant() {
            (gc, g)
        } else {
            (g, gc)
        }
    }

    /// `γ_UnsatPostFlips(tc, ε₀₁, ε₁₁)` in the placement of class `c`.
    pub fn gamma_unsat_post_flips(&self, c: Class, tc: usize, eps01: usize, eps11: usize) -> R {
        let (u, uc) = self.unsat_after(c, tc, eps01, eps11);
        if c.discrepant() {
            uc
        } else {
            u
        }
    }

    /// `Pr(F = tc | J_c)`.
    pub fn class_tc_posterior(&self, c: Class, tc: usize) -> Result<R> {
        let w = &self.posterior[c.index()];
        let total = dist::sum(w);
        if total.is_zero() {
            return Err(Error::domain(format!("class {c} has no posterior mass over tc")));
        }
        Ok(w.get(tc).cloned().map_or_else(R::zero, |x| x / total))
    }

    /// Largest `tc` carried by the tables.
    pub fn tc_max(&self) -> usize {
        self.tc_max
    }

    /// `(p_c|BecomeUnsat, p_c|StayUnsat)` at `(ε₀₁, ε₁₁)`.
    pub fn become_stay_unsat(&self, c: Class, eps01: usize, eps11: usize) -> BecomeStay<R> {
        mix_by_parity(&self.posterior[c.index()], |tc| self.unsat_after(c, tc, eps01, eps11))
    }

    /// `(p_flip|c, p_¬flip|c)` at `(ε₀₁, ε₁₁)`, both summed directly.
    pub fn pflip_class(&self, c: Class, eps01: usize, eps11: usize) -> (R, R) {
        let bs = self.become_stay_unsat(c, eps01, eps11);
        let p = &self.iter1;
        let (upc, norm) = match c {
            Class::C00 => (&p.upc_clear, &p.p_noflip0),
            Class::C01 => (&p.upc_clear, &p.p_flip0),
            Class::C10 => (&p.upc_set, &p.p_flip1),
            Class::C11 => (&p.upc_set, &p.p_noflip1),
        };
        if norm.is_zero() {
            return (R::zero(), R::one());
        }
        let th1 = p.th1 as usize;
        let range = if c.flipped_first() { th1..p.v + 1 } else { 0..th1.min(p.v + 1) };
        let (mut flip, mut keep) = (R::zero(), R::zero());
        for a in range {
            let wa = upc.get(a as i64);
            if wa.is_zero() {
                continue;
            }
            let (up, low) = upc_tails(p.v, a, self.th2, &bs);
            flip += wa.clone() * up;
            keep += wa * low;
        }
        ((flip / norm).clamp_unit(), (keep / norm).clamp_unit())
    }

    /// All four class flip probabilities; classes with a zero count at this
    /// point are skipped (`flip = 0`, `noflip = 1`) when `skip_empty` is set.
    pub fn class_flip_probs(&self, eps01: usize, eps11: usize, skip_empty: bool) -> ClassFlipProbs<R> {
        let counts = self.counts(eps01, eps11);
        let mut flip: [R; 4] = std::array::from_fn(|_| R::zero());
        let mut noflip: [R; 4] = std::array::from_fn(|_| R::one());
        for c in Class::ALL {
            if skip_empty && counts[c.index()] == 0 {
                continue;
            }
            let (f, nf) = self.pflip_class(c, eps01, eps11);
            flip[c.index()] = f;
            noflip[c.index()] = nf;
        }
        ClassFlipProbs { eps01, eps11, flip, noflip }
    }

    /// Class sizes `(|J₀₀|, |J₀₁|, |J₁₀|, |J₁₁|)`.
    pub fn counts(&self, eps01: usize, eps11: usize) -> [u64; 4] {
        let (n, t) = (self.iter1.n as u64, self.iter1.t as u64);
        let (e01, e11) = (eps01 as u64, eps11 as u64);
        [n - t - e01.min(n - t), e01, t - e11.min(t), e11]
    }

    /// `(failure, success)` of the second iteration given `(ε₀₁, ε₁₁)`.
    pub fn success_prob_given_eps(&self, eps01: usize, eps11: usize, bound: Bound) -> (R, R) {
        let probs = self.class_flip_probs(eps01, eps11, true);
        failure_given(&probs, &self.counts(eps01, eps11), bound)
    }

    /// Sums `δ₊(ε₀₁)·δ₋(t-ε₁₁)·Pr(fail | ε₀₁, ε₁₁)` over the grid in
    /// descending weight order, stopping once the weight drops below
    /// `cutoff · S` where `S` is the failure mass accumulated so far.
    pub fn grid_failure(&self, opts: &DfrOptions) -> GridSum<R> {
        let t = self.iter1.t as i64;
        let mut pairs: Vec<(usize, usize, R)> = Vec::new();
        for (e01, pp) in self.iter1.delta_plus.iter() {
            for (dm, pm) in self.iter1.delta_minus.iter() {
                let wgt = pp.clone() * pm;
                if !wgt.is_zero() {
                    pairs.push((e01 as usize, (t - dm) as usize, wgt));
                }
            }
        }
        pairs.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then((a.0, a.1).cmp(&(b.0, b.1))));
        let chunk = opts.chunk.max(1);
        let mut fail = R::zero();
        let mut evaluated = 0u64;
        let mut idx = 0;
        let mut stop_at = pairs.len();
        while idx < pairs.len() {
            let end = (idx + chunk).min(pairs.len());
            let stop = match opts.cutoff {
                Some(c) if !fail.is_zero() => {
                    let thresh = fail.clone() * R::from_f64(c);
                    (idx..end).find(|&j| pairs[j].2 < thresh).unwrap_or(end)
                }
                _ => end,
            };
            let parts: Vec<R> = pairs[idx..stop]
                .par_iter()
                .map(|(e01, e11, wgt)| {
                    if e01 + e11 <= opts.tau {
                        return R::zero();
                    }
                    let (f, _) = self.success_prob_given_eps(*e01, *e11, opts.bound);
                    f * wgt
                })
                .collect();
            for x in parts {
                fail += x;
            }
            evaluated += (stop - idx) as u64;
            if stop < end {
                stop_at = stop;
                break;
            }
            idx = end;
        }
        let mut skip_mass = R::zero();
        for p in &pairs[stop_at..] {
            skip_mass += &p.2;
        }
        GridSum { fail: fail.clamp_unit(), evaluated, skipped: (pairs.len() - stop_at) as u64, skip_mass }
    }
}

/// Per-class rates averaged over the first-iteration outcome, each `(ε₀₁, ε₁₁)`
/// weighted by `δ₊·δ₋·|J_c|` so they compare with per-position tallies.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRates {
    pub flip: [f64; 4],
    pub become_unsat: [f64; 4],
    pub stay_unsat: [f64; 4],
    /// Expected class sizes.
    pub size: [f64; 4],
}

impl ClassRates {
    fn from_sums(acc: &[[f64; 4]; 4], mass: f64) -> Self {
        let ratio = |i: usize| std::array::from_fn(|k| if acc[0][k] > 0.0 { acc[i][k] / acc[0][k] } else { 0.0 });
        ClassRates {
            flip: ratio(1),
            become_unsat: ratio(2),
            stay_unsat: ratio(3),
            size: std::array::from_fn(|k| if mass > 0.0 { acc[0][k] / mass } else { 0.0 }),
        }
    }
}

impl<R: Real> Iter2Context<R> {
    /// [`ClassRates`] over grid pairs whose weight is at least `rel_floor`
    /// times the largest one.
    pub fn class_rates(&self, rel_floor: f64) -> ClassRates {
        let (acc, mass) = self.class_sums(rel_floor);
        ClassRates::from_sums(&acc, mass)
    }

    /// Unnormalised sums `[size, flip, become, stay][class]` and grid mass.
    fn class_sums(&self, rel_floor: f64) -> ([[f64; 4]; 4], f64) {
        let t = self.iter1.t as i64;
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for (e01, pp) in self.iter1.delta_plus.iter() {
            for (dm, pm) in self.iter1.delta_minus.iter() {
                pairs.push((e01 as usize, (t - dm) as usize, pp.to_f64() * pm.to_f64()));
            }
        }
        let top = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
        pairs.retain(|p| p.2 > 0.0 && p.2 >= top * rel_floor);
        let parts: Vec<[[f64; 4]; 4]> = pairs
            .par_iter()
            .map(|&(e01, e11, wgt)| {
                let counts = self.counts(e01, e11);
                let mut out = [[0.0; 4]; 4];
                for c in Class::ALL {
                    let k = c.index();
                    let m = wgt * counts[k] as f64;
                    if m == 0.0 {
                        continue;
                    }
                    let bs = self.become_stay_unsat(c, e01, e11);
                    out[0][k] = m;
                    out[1][k] = m * self.pflip_class(c, e01, e11).0.to_f64();
                    out[2][k] = m * bs.become_unsat.0.to_f64();
                    out[3][k] = m * bs.stay_unsat.0.to_f64();
                }
                out
            })
            .collect();
        let mut acc = [[0.0; 4]; 4];
        let mut mass = 0.0;
        for (p, (_, _, wgt)) in parts.iter().zip(&pairs) {
            mass += wgt;
            for i in 0..4 {
                for k in 0..4 {
                    acc[i][k] += p[i][k];
                }
            }
        }
        (acc, mass)
    }
}

/// Model [`ClassRates`] at `(th1, th2)`. Under [`Averaging::PerWeight`] the
/// grid sums are mixed over syndrome weights carrying at least `rel_floor`
/// of the largest weight's mass.
pub fn class_rates<R: Real>(
    model: &Iter1Model<R>,
    th1: u32,
    th2: u32,
    averaging: Averaging,
    rel_floor: f64,
) -> Result<ClassRates> {
    match averaging {
        Averaging::Averaged => Ok(Iter2Context::new(model.averaged_profile(th1)?, th2)?.class_rates(rel_floor)),
        Averaging::PerWeight => {
            let mut profiles = model.profiles(th1)?;
            let top = profiles.iter().map(|(w, _)| w.to_f64()).fold(0.0, f64::max);
            profiles.retain(|(w, _)| w.to_f64() >= top * rel_floor);
            let parts: Vec<(f64, [[f64; 4]; 4], f64)> = profiles
                .into_iter()
                .map(|(w, prof)| Ok((w.to_f64(), Iter2Context::new(prof, th2)?.class_sums(rel_floor))))
                .map(|r: Result<_>| r.map(|(w, (a, m))| (w, a, m)))
                .collect::<Result<_>>()?;
            let mut acc = [[0.0; 4]; 4];
            let mut mass = 0.0;
            for (w, a, m) in parts {
                if m == 0.0 {
                    continue;
                }
                // each profile's grid is a distribution; renormalise before mixing
                mass += w;
                for i in 0..4 {
                    for k in 0..4 {
                        acc[i][k] += w * a[i][k] / m;
                    }
                }
            }
            Ok(ClassRates::from_sums(&acc, mass))
        }
    }
}

/// Posterior-weighted averages of a per-`tc` pair over even and odd `tc`.
fn mix_by_parity<R: Real>(post: &[R], mut u: impl FnMut(usize) -> (R, R)) -> BecomeStay<R> {
    let mut acc: [(R, R, R); 2] = std::array::from_fn(|_| (R::zero(), R::zero(), R::zero()));
    for (tc, wt) in post.iter().enumerate() {
        if wt.is_zero() {
            continue;
        }
        let (g, gc) = u(tc);
        let a = &mut acc[tc % 2];
        a.0 += g * wt;
        a.1 += gc * wt;
        a.2 += wt;
    }
    let mut empty = false;
    let [even, odd] = acc.map(|(g, gc, tot)| {
        if tot.is_zero() {
            empty = true;
            (R::zero(), R::one())
        } else {
            ((g / &tot).clamp_unit(), (gc / tot).clamp_unit())
        }
    });
    BecomeStay { become_unsat: even, stay_unsat: odd, empty }
}

/// `Σ_nsat B(v-a, pB, nsat)·Pr(Y ≥ th2 - nsat)` and the `<` counterpart,
/// where `Y ~ B(a, pS)`.
fn upc_tails<R: Real>(v: usize, a: usize, th2: u32, bs: &BecomeStay<R>) -> (R, R) {
    let xs = dist::binom_pmf((v - a) as u64, &bs.become_unsat.0, &bs.become_unsat.1);
    let ys = dist::binom_pmf(a as u64, &bs.stay_unsat.0, &bs.stay_unsat.1);
    let mut upper = vec![R::zero(); a + 2];
    for k in (0..=a).rev() {
        upper[k] = upper[k + 1].clone() + &ys[k];
    }
    let mut lower = vec![R::zero(); a + 2];
    for k in 0..=a {
        lower[k + 1] = lower[k].clone() + &ys[k];
    }
    let (mut up, mut low) = (R::zero(), R::zero());
    for (x, px) in xs.iter().enumerate() {
        let need = th2 as i64 - x as i64;
        if need <= 0 {
            up += px;
        } else if need as usize > a {
            low += px;
        } else {
            up += upper[need as usize].clone() * px;
            low += lower[need as usize].clone() * px;
        }
    }
    (up, low)
}

/// `(failure, success)` from class probabilities and class sizes.
pub fn failure_given<R: Real>(probs: &ClassFlipProbs<R>, counts: &[u64; 4], bound: Bound) -> (R, R) {
    let bad: Vec<(R, u64)> = Class::ALL.iter().map(|&c| (probs.bad(c).clone(), counts[c.index()])).collect();
    match bound {
        Bound::Exact => dist::failure_of_product(&bad),
        Bound::Expectation => {
            let mut e = R::zero();
            for (p, k) in &bad {
                if *k > 0 {
                    e += p.clone() * R::from_u64(*k);
                }
            }
            let fail = e.clamp_unit();
            let succ = R::one() - &fail;
            (fail, succ)
        }
    }
}

/// Result of summing over the `(ε₀₁, ε₁₁)` grid.
#[derive(Clone, Debug)]
pub struct GridSum<R: Real = f64> {
    pub fail: R,
    pub evaluated: u64,
    pub skipped: u64,
    /// Total `δ₊δ₋` weight of skipped pairs; bounds the omitted failure mass.
    pub skip_mass: R,
}

/// Options of [`two_iteration_dfr`].
#[derive(Clone, Copy, Debug)]
pub struct DfrOptions {
    pub averaging: Averaging,
    pub bound: Bound,
    /// Relative cutoff on the grid weights; `None` evaluates every pair.
    pub cutoff: Option<f64>,
    /// First-iteration outcomes with `ε₀₁ + ε₁₁ ≤ tau` count as successes.
    pub tau: usize,
    pub iter1: Iter1Options,
    /// Grid pairs evaluated between cutoff checks; fixed so that results do
    /// not depend on the thread count.
    pub chunk: usize,
}

impl Default for DfrOptions {
    fn default() -> Self {
        DfrOptions {
            averaging: Averaging::Averaged,
            bound: Bound::Exact,
            cutoff: Some(1e-16),
            tau: 0,
            iter1: Iter1Options::default(),
            chunk: 64,
        }
    }
}

impl DfrOptions {
    /// Compact label used in the `mode` CSV column.
    pub fn label(&self) -> String {
        let mut s = String::from(match self.averaging {
            Averaging::Averaged => "averaged",
            Averaging::PerWeight => "per-y",
        });
        s.push_str(match self.bound {
            Bound::Exact => "+exact",
            Bound::Expectation => "+expectation",
        });
        match self.cutoff {
            Some(c) => s.push_str(&format!("+cutoff{c:e}")),
            None => s.push_str("+nocutoff"),
        }
        if self.tau > 0 {
            s.push_str(&format!("+tau{}", self.tau));
        }
        s
    }
}

/// Two-iteration model output.
#[derive(Clone, Debug)]
pub struct DfrReport<R: Real = f64> {
    pub params: CodeParams,
    pub t: usize,
    pub th1: u32,
    pub th2: u32,
    pub dfr: R,
    pub dfr1: R,
    pub options: DfrOptions,
    pub terms_eval: u64,
    pub terms_skip: u64,
    pub skip_mass: R,
}

impl<R: Real> DfrReport<R> {
    pub const CSV_HEADER: &'static str = "n,k,v,w,t,th1,th2,mode,dfr,log2_dfr,dfr1,terms_eval,terms_skip,skip_mass";

    pub fn log2_dfr(&self) -> f64 {
        self.dfr.log2()
    }

    pub fn csv_row(&self) -> String {
        let p = &self.params;
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6},{},{},{},{}",
            p.n,
            p.k,
            p.v,
            p.w,
            self.t,
            self.th1,
            self.th2,
            self.options.label(),
            self.dfr.to_decimal(),
            self.log2_dfr(),
            self.dfr1.to_decimal(),
            self.terms_eval,
            self.terms_skip,
            self.skip_mass.to_decimal()
        )
    }
}

/// Two-iteration DFR for `(params, t)` under thresholds `th1`, `th2`.
pub fn two_iteration_dfr<R: Real>(
    params: &CodeParams,
    t: usize,
    th1: u32,
    th2: u32,
    opts: &DfrOptions,
) -> Result<DfrReport<R>> {
    let model = Iter1Model::<R>::with_options(*params, t, opts.iter1)?;
    dfr_from_model(&model, th1, th2, opts)
}

/// As [`two_iteration_dfr`], reusing a first-iteration model (thresholds can vary).
pub fn dfr_from_model<R: Real>(model: &Iter1Model<R>, th1: u32, th2: u32, opts: &DfrOptions) -> Result<DfrReport<R>> {
    let v = model.params.v as u32;
    if th1 > v + 1 || th2 > v + 1 {
        return Err(Error::param(format!("thresholds ({th1}, {th2}) exceed v + 1 = {}", v + 1)));
    }
    let report = |dfr: R, dfr1: R, g: Option<GridSum<R>>| {
        let (terms_eval, terms_skip, skip_mass) = g.map_or((0, 0, R::zero()), |g| (g.evaluated, g.skipped, g.skip_mass));
        DfrReport {
            params: model.params,
            t: model.t,
            th1,
            th2,
            dfr,
            dfr1,
            options: *opts,
            terms_eval,
            terms_skip,
            skip_mass,
        }
    };
    if model.t == 0 {
        return Ok(report(R::zero(), R::zero(), None));
    }
    match opts.averaging {
        Averaging::Averaged => {
            let prof = model.averaged_profile(th1)?;
            let dfr1 = prof.dfr1.clone();
            let ctx = Iter2Context::new(prof, th2)?;
            let g = ctx.grid_failure(opts);
            Ok(report(g.fail.clone(), dfr1, Some(g)))
        }
        Averaging::PerWeight => {
            let profiles = model.profiles(th1)?;
            let total = profiles.iter().fold(R::zero(), |acc, (wt, _)| acc + wt);
            if total.is_zero() {
                return Err(Error::domain("syndrome weights carry no mass"));
            }
            let parts: Vec<(R, R, GridSum<R>)> = profiles
                .into_par_iter()
                .map(|(wt, prof)| {
                    let dfr1 = prof.dfr1.clone();
                    let g = Iter2Context::new(prof, th2)?.grid_failure(opts);
                    Ok((wt, dfr1, g))
                })
                .collect::<Result<_>>()?;
            let (mut dfr, mut dfr1, mut skip_mass) = (R::zero(), R::zero(), R::zero());
            let (mut ev, mut sk) = (0, 0);
            for (wt, d1, g) in parts {
                let wt = wt / &total;
                dfr += g.fail * &wt;
                dfr1 += d1 * &wt;
                skip_mass += g.skip_mass * wt;
                ev += g.evaluated;
                sk += g.skipped;
            }
            Ok(report(
                dfr.clamp_unit(),
                dfr1.clamp_unit(),
                Some(GridSum { fail: R::zero(), evaluated: ev, skipped: sk, skip_mass }),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iter1::Iter1Model;
    use rug::Float;

    fn toy() -> CodeParams {
        CodeParams::regular(2400, 1200, 11, 22).unwrap()
    }

    fn toy_ctx(th: u32) -> Iter2Context<f64> {
        let m = Iter1Model::<f64>::new(toy(), 18).unwrap();
        Iter2Context::new(m.averaged_profile(th).unwrap(), th).unwrap()
    }

    fn b(n: usize, p: f64, k: usize) -> f64 {
        dist::binom_mass(n as u64, &p, &(1.0 - p), k as i64)
    }

    #[test]
    fn gamma_edges() {
        assert_eq!(gamma(&(0.0, 1.0), &(0.0, 1.0)), (0.0, 1.0));
        assert_eq!(gamma(&(1.0, 0.0), &(0.0, 1.0)), (1.0, 0.0));
        let (a, b) = ((0.3, 0.7), (0.9, 0.1));
        assert_eq!(gamma(&a, &b).0, gamma(&b, &a).0);
    }

    #[test]
    fn no_discrepancies_no_odd_share() {
        let ctx = toy_ctx(7);
        for tc in 0..=ctx.tc_max() {
            assert_eq!(ctx.chi_add_odd(tc, 0), 0.0);
            assert_eq!(ctx.chi_keep_odd(tc, 0), 0.0);
        }
    }

    /// Exhaustive placement of discrepancies over independent Bernoulli
    /// positions, `inside` of which sit in the check.
    fn placements(inside: usize, p_in: f64, outside: usize, p_out: f64, total: usize) -> f64 {
        let m = inside + outside;
        let (mut odd, mut all) = (0.0, 0.0);
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != total {
                continue;
            }
            let mut pr = 1.0;
            for j in 0..m {
                let (p, set) = (if j < inside { p_in } else { p_out }, mask >> j & 1 == 1);
                pr *= if set { p } else { 1.0 - p };
            }
            let k = (mask & ((1 << inside) - 1)).count_ones();
            all += pr;
            if k % 2 == 1 {
                odd += pr;
            }
        }
        odd / all
    }

    #[test]
    fn chi_matches_placement_enumeration() {
        let p = CodeParams::regular(14, 7, 2, 4).unwrap();
        let m = Iter1Model::<f64>::new(p, 2).unwrap();
        let ctx = Iter2Context::with_caps(m.averaged_profile(2).unwrap(), 2, 4, 2).unwrap();
        let pr = &ctx.iter1;
        let o = &pr.one_eq;
        for tc in [0usize, 1] {
            let k0 = if tc == 0 { o.flip0_sat } else { o.flip0_unsat };
            let want = placements(4 - tc - 1, k0, 14 - 4 - (2 - tc), pr.p_flip0, 2);
            assert!((ctx.chi_add_odd(tc, 2) - want).abs() < 1e-9, "tc={tc}");
            let k1 = if tc == 0 { o.noflip1_sat } else { o.noflip1_unsat };
            let want = placements(tc, k1, 2 - tc, pr.p_noflip1, 1);
            assert!((ctx.chi_keep_odd(tc, 1) - want).abs() < 1e-9, "tc={tc}");
        }
    }

    #[test]
    fn posteriors_normalize() {
        let ctx = toy_ctx(7);
        for c in Class::ALL {
            let s: f64 = (0..=ctx.tc_max()).map(|tc| ctx.class_tc_posterior(c, tc).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9, "{c}");
        }
        let m = Iter1Model::<f64>::new(toy(), 0).unwrap();
        let ctx = Iter2Context::new(m.averaged_profile(7).unwrap(), 7).unwrap();
        assert_eq!(ctx.class_tc_posterior(Class::C00, 0).unwrap(), 1.0);
        assert!(ctx.class_tc_posterior(Class::C10, 0).is_err());
    }

    #[test]
    fn forced_gamma() {
        let post = [0.2, 0.3, 0.1, 0.4];
        let z = mix_by_parity(&post, |_| (0.0, 1.0));
        assert_eq!((z.become_unsat.0, z.stay_unsat.0), (0.0, 0.0));
        let o = mix_by_parity(&post, |_| (1.0, 0.0));
        assert_eq!((o.become_unsat.0, o.stay_unsat.0), (1.0, 1.0));
        let e = mix_by_parity(&[0.5, 0.0], |_| (1.0, 0.0));
        assert!(e.empty && e.stay_unsat == (0.0, 1.0));
    }

    #[test]
    fn zero_second_threshold_flips_everything() {
        let ctx = toy_ctx(7);
        let ctx = Iter2Context { th2: 0, ..ctx };
        for c in Class::ALL {
            let (f, nf) = ctx.pflip_class(c, 3, 2);
            assert!((f - 1.0).abs() < 1e-12 && nf == 0.0, "{c}: {f} {nf}");
        }
    }

    #[test]
    fn complements_sum_to_one() {
        let ctx = toy_ctx(7);
        for (e01, e11) in [(0, 0), (3, 1), (10, 5), (25, 0)] {
            for c in Class::ALL {
                let (f, nf) = ctx.pflip_class(c, e01, e11);
                assert!((f + nf - 1.0).abs() < 1e-12, "{c} {e01} {e11}");
            }
        }
    }

    /// `p_flip|00` written out loop by loop from the nested-sum definition.
    fn pflip00_direct(ctx: &Iter2Context<f64>, e01: usize, e11: usize) -> f64 {
        let p = &ctx.iter1;
        let (n, t, v, w) = (p.n, p.t, p.v, p.w);
        let o = &p.one_eq;
        let chi_up = |tc: usize| {
            let k = if tc % 2 == 0 { o.flip0_sat } else { o.flip0_unsat };
            let (mut num, mut den) = (0.0, 0.0);
            let rest = n - w - (t - tc);
            for l in e01.saturating_sub(rest)..=e01.min(w - tc - 1) {
                let x = b(w - tc - 1, k, l) * b(rest, p.p_flip0, e01 - l);
                den += x;
                if l % 2 == 1 {
                    num += x;
                }
            }
            if den == 0.0 { 0.0 } else { num / den }
        };
        let chi_keep = |tc: usize| {
            let k = if tc % 2 == 0 { o.noflip1_sat } else { o.noflip1_unsat };
            let (mut num, mut den) = (0.0, 0.0);
            for l in e11.saturating_sub(t - tc)..=e11.min(tc) {
                let x = b(tc, k, l) * b(t - tc, p.p_noflip1, e11 - l);
                den += x;
                if l % 2 == 1 {
                    num += x;
                }
            }
            if den == 0.0 { 0.0 } else { num / den }
        };
        let post = |tc: usize| {
            let k = if tc % 2 == 0 { 1.0 - o.flip0_sat } else { 1.0 - o.flip0_unsat };
            (w - tc) as f64 / w as f64 * k * p.flips.get(tc as i64)
        };
        let avg = |start: usize| {
            let (mut num, mut den) = (0.0, 0.0);
            let mut tc = start;
            while tc <= t.min(w - 1) {
                let (c1, c2) = (chi_up(tc), chi_keep(tc));
                num += post(tc) * (c1 * (1.0 - c2) + (1.0 - c1) * c2);
                den += post(tc);
                tc += 2;
            }
            num / den
        };
        let (become_unsat, stay) = (avg(0), avg(1));
        let mut total = 0.0;
        for a in 0..p.th1 as usize {
            let ua = b(v, p.p_unsat0, a) / p.p_noflip0;
            let mut inner = 0.0;
            for nsat in 0..=v - a {
                for nunsat in (ctx.th2 as usize).saturating_sub(nsat)..=a {
                    inner += b(v - a, become_unsat, nsat) * b(a, stay, nunsat);
                }
            }
            total += ua * inner;
        }
        total
    }

    #[test]
    fn pflip00_matches_direct_evaluation() {
        // a per-weight profile keeps the upc law binomial, as the direct form assumes
        let m = Iter1Model::<f64>::new(toy(), 18).unwrap();
        let y = m.syndrome_weights().mode() as usize;
        let ctx = Iter2Context::new(m.profile(y, 7).unwrap(), 7).unwrap();
        for (e01, e11) in [(0, 0), (1, 0), (0, 1), (4, 2), (12, 3), (30, 7)] {
            let got = ctx.pflip_class(Class::C00, e01, e11).0;
            let want = pflip00_direct(&ctx, e01, e11);
            assert!((got - want).abs() <= 1e-10 * want.max(1e-300), "({e01},{e11}): {got} vs {want}");
        }
    }

    #[test]
    fn success_edges() {
        let ctx = toy_ctx(7);
        let perfect = ClassFlipProbs { eps01: 3, eps11: 2, flip: [0.0, 1.0, 0.0, 1.0], noflip: [1.0, 0.0, 1.0, 0.0] };
        let counts = ctx.counts(3, 2);
        for bound in [Bound::Exact, Bound::Expectation] {
            assert_eq!(failure_given(&perfect, &counts, bound), (0.0, 1.0));
        }
        let inert = ClassFlipProbs { eps01: 2382, eps11: 18, flip: [0.0; 4], noflip: [1.0; 4] };
        let (f, s) = failure_given(&inert, &ctx.counts(2382, 18), Bound::Exact);
        assert_eq!((f, s), (1.0, 0.0));
    }

    #[test]
    fn expectation_bounds_exact_pointwise() {
        let ctx = toy_ctx(7);
        for e01 in [0, 2, 5, 20, 60] {
            for e11 in 0..=18 {
                let (fe, _) = ctx.success_prob_given_eps(e01, e11, Bound::Exact);
                let (fb, _) = ctx.success_prob_given_eps(e01, e11, Bound::Expectation);
                assert!(fb >= fe * (1.0 - 1e-12), "({e01},{e11}): {fb} < {fe}");
            }
        }
    }

    #[test]
    fn cutoff_agrees_with_full_sum() {
        for th in [6u32, 7, 8] {
            let cut = two_iteration_dfr::<f64>(&toy(), 18, th, th, &DfrOptions::default()).unwrap();
            let full = two_iteration_dfr::<f64>(&toy(), 18, th, th, &DfrOptions { cutoff: None, ..Default::default() })
                .unwrap();
            assert!((cut.dfr - full.dfr).abs() <= 1e-9 * full.dfr, "th={th}");
            assert!(cut.terms_skip > 0 && full.terms_skip == 0);
            assert!(cut.skip_mass <= 1e-12 * cut.dfr);
        }
    }

    #[test]
    fn toy_dfr_values() {
        let opts = DfrOptions::default();
        let r = two_iteration_dfr::<f64>(&toy(), 18, 7, 7, &opts).unwrap();
        assert!((r.dfr - 3.493_907_134_047_47e-4).abs() < 1e-9 * r.dfr, "{}", r.dfr);
        let ext = two_iteration_dfr::<Float>(&toy(), 18, 7, 7, &opts).unwrap();
        assert!((ext.dfr.to_f64() - r.dfr).abs() <= 1e-8 * r.dfr);
        let bound = two_iteration_dfr::<f64>(&toy(), 18, 7, 7, &DfrOptions { bound: Bound::Expectation, ..opts }).unwrap();
        assert!(bound.dfr >= r.dfr);
        let per_y = two_iteration_dfr::<f64>(&toy(), 18, 7, 7, &DfrOptions { averaging: Averaging::PerWeight, ..opts })
            .unwrap();
        let ratio = per_y.dfr / r.dfr;
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
        assert!(r.dfr1 > r.dfr);
    }

    #[test]
    fn tau_removes_small_outcomes() {
        let opts = DfrOptions { cutoff: None, ..Default::default() };
        let base = two_iteration_dfr::<f64>(&toy(), 18, 7, 7, &opts).unwrap();
        let tau = two_iteration_dfr::<f64>(&toy(), 18, 7, 7, &DfrOptions { tau: 4, ..opts }).unwrap();
        assert!(tau.dfr < base.dfr);
        let all = two_iteration_dfr::<f64>(&toy(), 18, 7, 7, &DfrOptions { tau: 2400, ..opts }).unwrap();
        assert_eq!(all.dfr, 0.0);
    }

    #[test]
    fn zero_weight_and_csv() {
        let r = two_iteration_dfr::<f64>(&toy(), 0, 7, 7, &DfrOptions::default()).unwrap();
        assert_eq!(r.dfr, 0.0);
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), DfrReport::<f64>::CSV_HEADER.split(',').count());
        assert!(row.starts_with("2400,1200,11,22,0,7,7,averaged+exact+cutoff1e-16,"));
    }
}
