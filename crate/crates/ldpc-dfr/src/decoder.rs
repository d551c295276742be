//! Parallel (out-of-place) bit-flipping decoder with per-iteration telemetry.

use crate::code::{ErrorVector, Syndrome, Tanner};
use crate::error::{Error, Result};

/// Fixed per-iteration flipping thresholds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdSchedule {
    per_iteration: Vec<u32>,
}

impl ThresholdSchedule {
    /// Thresholds must lie in `⌈(v+1)/2⌉ ..= v`.
    pub fn new(v: usize, per_iteration: Vec<u32>) -> Result<Self> {
        if per_iteration.is_empty() {
            return Err(Error::param("threshold schedule is empty"));
        }
        let lo = (v as u32 + 2) / 2;
        if let Some(&th) = per_iteration.iter().find(|&&th| th < lo || th > v as u32) {
            return Err(Error::param(format!("threshold {th} outside {lo}..={v}")));
        }
        Ok(ThresholdSchedule { per_iteration })
    }

    /// The same threshold in every iteration, without range checks.
    pub fn constant_unchecked(th: u32, iters: usize) -> Self {
        ThresholdSchedule { per_iteration: vec![th; iters.max(1)] }
    }

    /// Explicit per-iteration thresholds, without range checks.
    pub fn unchecked(per_iteration: Vec<u32>) -> Self {
        assert!(!per_iteration.is_empty(), "threshold schedule is empty");
        ThresholdSchedule { per_iteration }
    }

    /// Majority threshold `⌈(v+1)/2⌉` for `iters` iterations.
    pub fn majority(v: usize, iters: usize) -> Self {
        Self::constant_unchecked((v as u32 + 2) / 2, iters)
    }

    /// Threshold of iteration `iter` (0-based); the last entry repeats.
    pub fn get(&self, iter: usize) -> u32 {
        self.per_iteration[iter.min(self.per_iteration.len() - 1)]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.per_iteration
    }
}

/// Sizes of the classes `J_ab`: positions with true error bit `a` and
/// discrepancy `b = e_j ⊕ ē_j` after an iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ClassCounts {
    pub e00: usize,
    pub e01: usize,
    pub e10: usize,
    pub e11: usize,
}

/// Counts `J_00, J_01, J_10, J_11` for the true error `e` and the estimate `ebar`.
pub fn classify_positions(e: &ErrorVector, ebar: &ErrorVector) -> Result<ClassCounts> {
    if e.n != ebar.n {
        return Err(Error::usage("error and estimate lengths differ"));
    }
    let both = e.support().iter().filter(|&&j| ebar.contains(j as usize)).count();
    let t = e.weight();
    let e01 = ebar.weight() - both;
    Ok(ClassCounts { e00: e.n - t - e01, e01, e10: both, e11: t - both })
}

/// Telemetry of one decoder iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationRecord {
    pub threshold: u32,
    /// Syndrome weight on entry.
    pub syndrome_weight: usize,
    /// Unsatisfied parity-check counts, kept only on request.
    pub upc: Option<Vec<u32>>,
    /// Positions flipped in this iteration, ascending.
    pub flipped: Vec<u32>,
    /// Class sizes after the iteration (needs the true error).
    pub classes: Option<ClassCounts>,
    /// `|e ⊕ ē|` after the iteration (needs the true error).
    pub discrepancies: Option<usize>,
}

/// Result of [`decode`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeTrace {
    pub iterations: Vec<IterationRecord>,
    pub estimate: ErrorVector,
    pub final_syndrome: Syndrome,
    pub ok: bool,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DecodeOptions {
    pub keep_upc: bool,
}

/// `upc_j = |col_j ∩ supp(s)|`.
pub fn compute_upc<T: Tanner>(h: &T, s: &Syndrome) -> Result<Vec<u32>> {
    if s.len() != h.r() {
        return Err(Error::usage(format!("syndrome length {} does not match r={}", s.len(), h.r())));
    }
    Ok(upc_raw(h, s.bits()))
}

fn upc_raw<T: Tanner>(h: &T, s: &[u8]) -> Vec<u32> {
    (0..h.n())
        .map(|j| {
            let mut c = 0u32;
            h.for_each_in_col(j, |i| c += s[i] as u32);
            c
        })
        .collect()
}

/// Runs up to `iter_max` iterations. Each iteration computes every `upc`
/// against the entry syndrome, then flips all positions with `upc ≥ th`.
pub fn decode<T: Tanner>(
    h: &T,
    s: &Syndrome,
    sched: &ThresholdSchedule,
    iter_max: usize,
    truth: Option<&ErrorVector>,
    opts: DecodeOptions,
) -> Result<DecodeTrace> {
    if iter_max == 0 {
        return Err(Error::param("iter_max must be at least 1"));
    }
    if s.len() != h.r() {
        return Err(Error::usage(format!("syndrome length {} does not match r={}", s.len(), h.r())));
    }
    if truth.is_some_and(|e| e.n != h.n()) {
        return Err(Error::usage("true error length does not match n"));
    }
    let n = h.n();
    let mut syn = s.bits().to_vec();
    let mut est = vec![0u8; n];
    let mut iterations = Vec::new();
    let mut weight = syn.iter().filter(|&&b| b != 0).count();
    let mut iter = 0;
    while weight != 0 && iter < iter_max {
        let th = sched.get(iter);
        let upc = upc_raw(h, &syn);
        let flipped: Vec<u32> = upc.iter().enumerate().filter(|(_, &u)| u >= th).map(|(j, _)| j as u32).collect();
        for &j in &flipped {
            est[j as usize] ^= 1;
            h.for_each_in_col(j as usize, |i| syn[i] ^= 1);
        }
        let (classes, discrepancies) = match truth {
            Some(e) => {
                let ebar = ErrorVector::from_bits(&est);
                debug_assert!(consistent(h, e, &ebar, &syn), "working syndrome diverged from H(e ⊕ ē)");
                let c = classify_positions(e, &ebar)?;
                (Some(c), Some(c.e01 + c.e11))
            }
            None => (None, None),
        };
        iterations.push(IterationRecord {
            threshold: th,
            syndrome_weight: weight,
            upc: opts.keep_upc.then_some(upc),
            flipped,
            classes,
            discrepancies,
        });
        weight = syn.iter().filter(|&&b| b != 0).count();
        iter += 1;
    }
    Ok(DecodeTrace {
        iterations,
        estimate: ErrorVector::from_bits(&est),
        final_syndrome: Syndrome::from_bits(syn),
        ok: weight == 0,
    })
}

fn consistent<T: Tanner>(h: &T, e: &ErrorVector, ebar: &ErrorVector, syn: &[u8]) -> bool {
    let d = e.xor(ebar);
    let mut bits = vec![0u8; h.r()];
    for &j in d.support() {
        h.for_each_in_col(j as usize, |i| bits[i] ^= 1);
    }
    bits == syn
}
