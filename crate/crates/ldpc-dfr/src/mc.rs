//! Seeded Monte Carlo decoding campaigns.
//!
//! Every trial draws its matrix (unless pinned) and its error from a stream
//! keyed by `(master_seed, sweep_index, trial_index)`. Trials run in fixed-size
//! batches and are folded in index order, so early stopping and all counts are
//! independent of the number of worker threads.

use std::fmt::Write as _;

use rand::seq::index;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::code::{self, CodeParams, ParityCheckMatrix, QcMatrix, Tanner};
use crate::decoder::{decode, DecodeOptions, ThresholdSchedule};
use crate::error::{Error, Result};
use crate::pmf::{tv_distance, Pmf};
use crate::rng::{self, Rng};

/// Integer-valued histogram that grows to cover every observed value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Histogram {
    lo: i64,
    counts: Vec<u64>,
}

impl Histogram {
    /// Empty histogram pre-sized to `lo..=hi`.
    pub fn with_domain(lo: i64, hi: i64) -> Self {
        Histogram { lo, counts: vec![0; (hi - lo + 1).max(0) as usize] }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, x: i64) -> u64 {
        if x < self.lo {
            return 0;
        }
        self.counts.get((x - self.lo) as usize).copied().unwrap_or(0)
    }

    pub fn add(&mut self, x: i64, c: u64) {
        if self.counts.is_empty() {
            self.lo = x;
        }
        if x < self.lo {
            let grow = (self.lo - x) as usize;
            self.counts.splice(0..0, std::iter::repeat_n(0, grow));
            self.lo = x;
        }
        let i = (x - self.lo) as usize;
        if i >= self.counts.len() {
            self.counts.resize(i + 1, 0);
        }
        self.counts[i] += c;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (k, &c) in other.counts.iter().enumerate() {
            if c > 0 {
                self.add(other.lo + k as i64, c);
            }
        }
    }

    pub fn to_pmf(&self) -> Pmf<f64> {
        Pmf::from_counts(self.lo, &self.counts)
    }

    /// `value,count` lines after a `#` comment line.
    pub fn to_csv(&self, comment: &str) -> String {
        let mut s = format!("# {comment}\nvalue,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{}", self.lo + k as i64, c);
        }
        s
    }
}

/// Which telemetry a campaign records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct TelemetryFlags {
    /// Initial syndrome weight.
    pub syndrome_weight: bool,
    /// `d₊`, `d₋` after the first iteration.
    pub discrepancies: bool,
    /// Second-iteration flips per first-iteration class.
    pub class_flips: bool,
    /// Check-state transitions over the first iteration, per class, and the
    /// number of asserted terms in checks around `J₀₀` positions.
    pub transitions: bool,
    /// First-iteration flip decisions next to a check of known state.
    pub one_eq: bool,
}

impl TelemetryFlags {
    pub fn all() -> Self {
        TelemetryFlags { syndrome_weight: true, discrepancies: true, class_flips: true, transitions: true, one_eq: true }
    }

    fn needs_upc(&self) -> bool {
        self.one_eq
    }
}

/// One sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlanPoint {
    pub params: CodeParams,
    pub t: usize,
    pub th1: u32,
    pub th2: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExperimentPlan {
    pub points: Vec<PlanPoint>,
    /// Decoder iteration budget.
    pub iterations: usize,
    pub trials_max: u64,
    /// Stop a point as soon as this many failures are seen.
    pub failures_target: u64,
    pub master_seed: u64,
    pub telemetry: TelemetryFlags,
    /// Pin one matrix per sweep point instead of drawing one per trial.
    pub fixed_matrix: bool,
    /// Trials per batch between early-stop checks.
    pub batch: u64,
}

impl ExperimentPlan {
    pub fn new(points: Vec<PlanPoint>, trials_max: u64, failures_target: u64, master_seed: u64) -> Self {
        ExperimentPlan {
            points,
            iterations: 2,
            trials_max,
            failures_target,
            master_seed,
            telemetry: TelemetryFlags::default(),
            fixed_matrix: false,
            batch: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_max < 1 || self.failures_target < 1 {
            return Err(Error::param("trials_max and failures_target must be at least 1"));
        }
        if self.iterations < 1 {
            return Err(Error::param("at least one decoder iteration is needed"));
        }
        for p in &self.points {
            p.params.validate()?;
            if p.t > p.params.n {
                return Err(Error::param(format!("error weight {} exceeds n={}", p.t, p.params.n)));
            }
        }
        Ok(())
    }

    /// Short hex digest identifying the plan in output headers.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(format!("{self:?}").as_bytes());
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-point telemetry; every count is a plain sum over trials.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Telemetry {
    pub syndrome_weight: Histogram,
    pub d_plus: Histogram,
    pub d_minus: Histogram,
    /// Positions per class `00, 01, 10, 11` (summed over trials).
    pub class_positions: [u64; 4],
    /// Second-iteration flips per class.
    pub class_flips: [u64; 4],
    /// `[class][state before][state after]` over (position, check) incidences.
    pub transitions: [[[u64; 2]; 2]; 4],
    /// Asserted terms of the checks around `J₀₀` positions.
    pub tc_j00: Histogram,
    /// `[clear/sat, clear/unsat, asserted/sat, asserted/unsat]` as
    /// `(incidences, flipped)`.
    pub one_eq: [(u64, u64); 4],
}

impl Telemetry {
    fn merge(&mut self, o: &Telemetry) {
        self.syndrome_weight.merge(&o.syndrome_weight);
        self.d_plus.merge(&o.d_plus);
        self.d_minus.merge(&o.d_minus);
        self.tc_j00.merge(&o.tc_j00);
        for c in 0..4 {
            self.class_positions[c] += o.class_positions[c];
            self.class_flips[c] += o.class_flips[c];
            for a in 0..2 {
                for b in 0..2 {
                    self.transitions[c][a][b] += o.transitions[c][a][b];
                }
            }
            self.one_eq[c].0 += o.one_eq[c].0;
            self.one_eq[c].1 += o.one_eq[c].1;
        }
    }

    /// Empirical second-iteration flip rate of a class.
    pub fn class_flip_rate(&self, class: usize) -> Option<f64> {
        let n = self.class_positions[class];
        (n > 0).then(|| self.class_flips[class] as f64 / n as f64)
    }

    /// Empirical `(BecomeUnsat, StayUnsat)` rates of a class.
    pub fn transition_rates(&self, class: usize) -> (Option<f64>, Option<f64>) {
        let t = &self.transitions[class];
        let rate = |row: [u64; 2]| {
            let n = row[0] + row[1];
            (n > 0).then(|| row[1] as f64 / n as f64)
        };
        (rate(t[0]), rate(t[1]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointReport {
    pub point: PlanPoint,
    pub trials: u64,
    pub failures: u64,
    pub dfr: f64,
    /// 95 % Clopper–Pearson interval.
    pub ci: (f64, f64),
    pub telemetry: Telemetry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub plan_hash: String,
    pub master_seed: u64,
    pub points: Vec<PointReport>,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "n,p,v,w,t,th1,th2,trials,failures,dfr,ci_lo,ci_hi";

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# ldpc-dfr {} plan={} seed={}\n{}\n",
            env!("CARGO_PKG_VERSION"),
            self.plan_hash,
            self.master_seed,
            Self::CSV_HEADER
        );
        for r in &self.points {
            let p = &r.point.params;
            let qp = p.qc.map(|q| q.p.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{:e},{:e},{:e}",
                p.n, qp, p.v, p.w, r.point.t, r.point.th1, r.point.th2, r.trials, r.failures, r.dfr, r.ci.0, r.ci.1
            );
        }
        s
    }
}

/// Exact binomial (Clopper–Pearson) interval at confidence `1 - alpha`.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 { 0.0 } else { Beta::new(kf, nf - kf + 1.0).unwrap().inverse_cdf(alpha / 2.0) };
    let hi = if k == n { 1.0 } else { Beta::new(kf + 1.0, nf - kf).unwrap().inverse_cdf(1.0 - alpha / 2.0) };
    (lo, hi)
}

enum Matrix {
    Explicit(ParityCheckMatrix),
    Qc(QcMatrix),
}

impl Matrix {
    fn draw(params: &CodeParams, rng: &mut Rng) -> Result<Matrix> {
        Ok(match params.qc {
            Some(_) => Matrix::Qc(code::qc_from_rng(params, rng)),
            None => Matrix::Explicit(code::regular_from_rng(params, rng)?),
        })
    }
}

struct Outcome {
    failed: bool,
    tel: Telemetry,
}

fn trial<T: Tanner>(h: &T, pt: &PlanPoint, plan: &ExperimentPlan, rng: &mut Rng) -> Result<Outcome> {
    let n = h.n();
    let e = code::error_from_rng(n, pt.t, rng);
    let s0 = code::syndrome(h, &e)?;
    let sched = ThresholdSchedule::unchecked(vec![pt.th1, pt.th2]);
    let flags = plan.telemetry;
    let tr = decode(h, &s0, &sched, plan.iterations, Some(&e), DecodeOptions { keep_upc: flags.needs_upc() })?;
    let failed = tr.estimate != e;
    let mut tel = Telemetry::default();
    if flags.syndrome_weight {
        tel.syndrome_weight.add(s0.weight() as i64, 1);
    }
    let wants_classes = flags.discrepancies || flags.class_flips || flags.transitions || flags.one_eq;
    if !wants_classes {
        return Ok(Outcome { failed, tel });
    }
    let err = e.to_bits();
    let mut f1 = vec![0u8; n];
    if let Some(it) = tr.iterations.first() {
        for &j in &it.flipped {
            f1[j as usize] = 1;
        }
    }
    // class ab: a = e_j, b = e_j ⊕ ē_j after the first iteration
    let cls: Vec<u8> = (0..n).map(|j| 2 * err[j] + (err[j] ^ f1[j])).collect();
    let mut counts = [0u64; 4];
    for &c in &cls {
        counts[c as usize] += 1;
    }
    if flags.discrepancies {
        // d₊ = |J₀₁|, d₋ = |J₁₀|
        tel.d_plus.add(counts[1] as i64, 1);
        tel.d_minus.add(counts[2] as i64, 1);
    }
    if flags.class_flips {
        tel.class_positions = counts;
        if let Some(it) = tr.iterations.get(1) {
            for &j in &it.flipped {
                tel.class_flips[cls[j as usize] as usize] += 1;
            }
        }
    }
    if flags.transitions {
        let mut s1 = s0.bits().to_vec();
        for j in (0..n).filter(|&j| f1[j] == 1) {
            h.for_each_in_col(j, |i| s1[i] ^= 1);
        }
        let mut tc = vec![0u32; h.r()];
        for &j in e.support() {
            h.for_each_in_col(j as usize, |i| tc[i] += 1);
        }
        let s0b = s0.bits();
        let mut tc_counts: Vec<u64> = Vec::new();
        for j in 0..n {
            let c = cls[j] as usize;
            h.for_each_in_col(j, |i| {
                tel.transitions[c][s0b[i] as usize][s1[i] as usize] += 1;
                if c == 0 {
                    let k = tc[i] as usize;
                    if k >= tc_counts.len() {
                        tc_counts.resize(k + 1, 0);
                    }
                    tc_counts[k] += 1;
                }
            });
        }
        for (k, c) in tc_counts.into_iter().enumerate() {
            if c > 0 {
                tel.tc_j00.add(k as i64, c);
            }
        }
    }
    if flags.one_eq {
        if let Some(upc) = tr.iterations.first().and_then(|it| it.upc.as_ref()) {
            let s0b = s0.bits();
            for j in 0..n {
                let asserted = err[j] == 1;
                let flip = upc[j] >= pt.th1;
                h.for_each_in_col(j, |i| {
                    let k = 2 * asserted as usize + s0b[i] as usize;
                    tel.one_eq[k].0 += 1;
                    tel.one_eq[k].1 += flip as u64;
                });
            }
        }
    }
    Ok(Outcome { failed, tel })
}

fn run_point(plan: &ExperimentPlan, sweep: usize) -> Result<PointReport> {
    let pt = plan.points[sweep];
    let master = plan.master_seed;
    let pinned = if plan.fixed_matrix {
        Some(Matrix::draw(&pt.params, &mut rng::stream(master, "matrix", &[sweep as u64]))?)
    } else {
        None
    };
    let run = |k: u64| -> Result<Outcome> {
        let mut r = rng::stream(master, "trial", &[sweep as u64, k]);
        let m;
        let h = match &pinned {
            Some(h) => h,
            None => {
                m = Matrix::draw(&pt.params, &mut r)?;
                &m
            }
        };
        match h {
            Matrix::Explicit(h) => trial(h, &pt, plan, &mut r),
            Matrix::Qc(h) => trial(h, &pt, plan, &mut r),
        }
    };
    let mut tel = Telemetry::default();
    let (mut trials, mut failures) = (0u64, 0u64);
    let batch = plan.batch.max(1);
    'outer: while trials < plan.trials_max {
        let end = (trials + batch).min(plan.trials_max);
        let outs: Vec<Outcome> = (trials..end).into_par_iter().map(run).collect::<Result<_>>()?;
        for o in outs {
            trials += 1;
            tel.merge(&o.tel);
            if o.failed {
                failures += 1;
                if failures >= plan.failures_target {
                    break 'outer;
                }
            }
        }
    }
    Ok(PointReport {
        point: pt,
        trials,
        failures,
        dfr: if trials > 0 { failures as f64 / trials as f64 } else { 0.0 },
        ci: clopper_pearson(failures, trials, 0.05),
        telemetry: tel,
    })
}

/// Runs every sweep point of the plan.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let points = (0..plan.points.len()).map(|i| run_point(plan, i)).collect::<Result<_>>()?;
    Ok(ExperimentReport { plan_hash: plan.hash(), master_seed: plan.master_seed, points })
}

/// Histogram of `wt(H eᵀ)` over `samples` fresh (matrix, error) draws. For
/// layered regular and quasi-cyclic ensembles only the `t` erroneous columns
/// are drawn, which has the same law as drawing the whole matrix.
pub fn sample_syndrome_weights(params: &CodeParams, t: usize, samples: u64, seed: u64) -> Result<Histogram> {
    params.validate()?;
    let (n, r, v, w) = (params.n, params.r, params.v, params.w);
    if t > n {
        return Err(Error::param(format!("error weight {t} exceeds length {n}")));
    }
    let layered = params.qc.is_none() && n % w == 0 && r % v == 0 && n / w == r / v;
    let one = |k: u64| -> Result<usize> {
        let mut rng = rng::stream(seed, "syndrome-weight", &[k]);
        let mut bits = vec![0u8; r];
        if layered {
            // each layer places the t columns on t distinct sockets of its n/w rows
            let m = n / w;
            for layer in 0..v {
                for s in index::sample(&mut rng, n, t) {
                    bits[layer * m + s / w] ^= 1;
                }
            }
        } else if let Some(q) = params.qc {
            let h = code::qc_from_rng(params, &mut rng);
            let e = code::error_from_rng(n, t, &mut rng);
            for &j in e.support() {
                let (b, jj) = (j as usize / q.p, j as usize % q.p);
                for &o in &h.offsets()[b] {
                    bits[(o as usize + jj) % q.p] ^= 1;
                }
            }
        } else {
            let h = code::regular_from_rng(params, &mut rng)?;
            let e = code::error_from_rng(n, t, &mut rng);
            return Ok(code::syndrome(&h, &e)?.weight());
        }
        Ok(bits.iter().filter(|&&b| b == 1).count())
    };
    const CHUNK: u64 = 4096;
    let mut hist = Histogram::default();
    let mut k = 0;
    while k < samples {
        let end = (k + CHUNK).min(samples);
        let ws: Vec<usize> = (k..end).into_par_iter().map(one).collect::<Result<_>>()?;
        for y in ws {
            hist.add(y as i64, 1);
        }
        k = end;
    }
    Ok(hist)
}

/// One row of a model-versus-simulation comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub quantity: String,
    pub model: f64,
    pub empirical: f64,
    /// Total-variation distance for distributions; `None` for scalar rates.
    pub tv: Option<f64>,
    /// `model / empirical` for scalar rates.
    pub ratio: Option<f64>,
    /// Clopper–Pearson interval of the empirical rate.
    pub ci: Option<(f64, f64)>,
    /// Whether the model value falls inside `ci`.
    pub covered: Option<bool>,
}

impl Comparison {
    pub const CSV_HEADER: &'static str = "quantity,model,empirical,tv,ratio,ci_lo,ci_hi,covered";

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        format!(
            "{},{:e},{:e},{},{},{},{},{}",
            self.quantity,
            self.model,
            self.empirical,
            opt(self.tv),
            opt(self.ratio),
            opt(self.ci.map(|c| c.0)),
            opt(self.ci.map(|c| c.1)),
            self.covered.map(|b| b.to_string()).unwrap_or_default()
        )
    }
}

/// Compares a model pmf against an observed histogram.
pub fn compare_pmf(quantity: &str, model: &Pmf<f64>, observed: &Histogram) -> Result<Comparison> {
    if observed.total() == 0 {
        return Err(Error::usage(format!("no observations for {quantity}")));
    }
    let emp = observed.to_pmf();
    Ok(Comparison {
        quantity: quantity.to_string(),
        model: model.mean(),
        empirical: emp.mean(),
        tv: Some(tv_distance(model, &emp)),
        ratio: None,
        ci: None,
        covered: None,
    })
}

/// Compares a model probability with `hits` out of `trials` observations.
pub fn compare_rate(quantity: &str, model: f64, hits: u64, trials: u64) -> Result<Comparison> {
    if trials == 0 {
        return Err(Error::usage(format!("no trials for {quantity}")));
    }
    let emp = hits as f64 / trials as f64;
    let ci = clopper_pearson(hits, trials, 0.05);
    Ok(Comparison {
        quantity: quantity.to_string(),
        model,
        empirical: emp,
        tv: None,
        ratio: (emp > 0.0).then(|| model / emp),
        ci: Some(ci),
        covered: Some(model >= ci.0 && model <= ci.1),
    })
}
