//! The `dfr` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rug::Float;
use sha2::{Digest, Sha256};

use crate::code::CodeParams;
use crate::config;
use crate::error::{Error, Result};
use crate::iter1::{Iter1Model, Iter1Options};
use crate::iter2::{dfr_from_model, Averaging, Bound, DfrOptions, DfrReport};
use crate::mc::{self, compare_pmf, compare_rate, Comparison, ExperimentPlan, Histogram, PlanPoint, TelemetryFlags};
use crate::pmf::Pmf;
use crate::real::{set_extended_bits, Precision, Real};
use crate::syndrome::FlipNormalization;

/// One category-1 row of the LEDAcrypt parameter table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Table1Row {
    pub n0: usize,
    pub p: usize,
    pub v: usize,
    pub t: usize,
    /// Thresholds minimising the model DFR over a scan of
    /// `⌈(v+1)/2⌉ ..= ⌈(v+1)/2⌉ + 10`; the published schedules are not known.
    pub th1: u32,
    pub th2: u32,
    /// Published two-iteration estimate, `log₂ DFR`.
    pub published_log2: f64,
}

pub const TABLE1_ROWS: [Table1Row; 6] = [
    Table1Row { n0: 2, p: 23371, v: 71, t: 130, th1: 39, th2: 36, published_log2: -140.0 },
    Table1Row { n0: 3, p: 16067, v: 79, t: 83, th1: 43, th2: 40, published_log2: -135.0 },
    Table1Row { n0: 4, p: 13397, v: 83, t: 66, th1: 45, th2: 43, published_log2: -131.0 },
    Table1Row { n0: 2, p: 28277, v: 69, t: 129, th1: 38, th2: 35, published_log2: -169.0 },
    Table1Row { n0: 3, p: 19709, v: 79, t: 82, th1: 43, th2: 40, published_log2: -170.0 },
    Table1Row { n0: 4, p: 16229, v: 83, t: 65, th1: 45, th2: 42, published_log2: -166.0 },
];

#[derive(Debug, Parser)]
#[command(name = "dfr", version, about = "Two-iteration bit-flipping DFR model and Monte Carlo simulator")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `standard` (f64) or `extended[:bits]`.
    #[arg(long, global = true)]
    pub precision: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Configuration file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the closed-form model.
    #[command(args_override_self = true)]
    Model(ModelArgs),
    /// Run a Monte Carlo campaign.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Compare model output with simulation output.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
    /// Evaluate the category-1 LEDAcrypt parameter sets.
    #[command(args_override_self = true)]
    Table1(Table1Args),
}

#[derive(Debug, Args, Clone)]
pub struct CodeArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long)]
    pub w: Option<usize>,
    /// Circulant blocks (quasi-cyclic codes).
    #[arg(long, requires = "p", conflicts_with_all = ["n", "r", "k", "w", "sweep_n"])]
    pub n0: Option<usize>,
    /// Circulant size (quasi-cyclic codes).
    #[arg(long, requires = "n0")]
    pub p: Option<usize>,
    /// Error weight.
    #[arg(long, conflicts_with = "sweep_t")]
    pub t: Option<usize>,
    /// Error weights `a:b[:step]`.
    #[arg(long)]
    pub sweep_t: Option<String>,
    /// Code lengths `a:b[:step]` at rate `1 - v/w`.
    #[arg(long, conflicts_with_all = ["n", "r", "k"])]
    pub sweep_n: Option<String>,
    /// First-iteration threshold (default: majority).
    #[arg(long)]
    pub th1: Option<u32>,
    /// Second-iteration threshold (default: majority).
    #[arg(long)]
    pub th2: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AveragingArg {
    Averaged,
    PerY,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Exact,
    Expectation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    Joint,
    Marginal,
}

#[derive(Debug, Args, Clone)]
pub struct ModeArgs {
    #[arg(long, value_enum, default_value = "averaged")]
    pub averaging: AveragingArg,
    #[arg(long, value_enum, default_value = "exact")]
    pub bound: BoundArg,
    /// Relative cutoff of the discrepancy grid.
    #[arg(long, default_value_t = 1e-16, conflicts_with = "no_cutoff")]
    pub cutoff: f64,
    /// Evaluate the whole discrepancy grid.
    #[arg(long)]
    pub no_cutoff: bool,
    /// Outcomes with at most this many discrepancies count as corrected.
    #[arg(long, default_value_t = 0)]
    pub tau: usize,
    #[arg(long, value_enum, default_value = "joint")]
    pub normalization: NormalizationArg,
    /// Skip syndrome weights below this probability.
    #[arg(long)]
    pub weight_floor: Option<f64>,
    /// Disable memoisation of the syndrome-weight recursion.
    #[arg(long)]
    pub no_memo: bool,
}

impl ModeArgs {
    pub fn options(&self) -> DfrOptions {
        DfrOptions {
            averaging: match self.averaging {
                AveragingArg::Averaged => Averaging::Averaged,
                AveragingArg::PerY => Averaging::PerWeight,
            },
            bound: match self.bound {
                BoundArg::Exact => Bound::Exact,
                BoundArg::Expectation => Bound::Expectation,
            },
            cutoff: (!self.no_cutoff).then_some(self.cutoff),
            tau: self.tau,
            iter1: Iter1Options {
                normalization: match self.normalization {
                    NormalizationArg::Joint => FlipNormalization::Joint,
                    NormalizationArg::Marginal => FlipNormalization::Marginal,
                },
                weight_floor: self.weight_floor,
                memo: !self.no_memo,
            },
            ..DfrOptions::default()
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    /// Also write syndrome-weight and discrepancy pmfs per point.
    #[arg(long)]
    pub pmfs: bool,
}

#[derive(Debug, Args, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    /// Trial budget per point (`1e5` accepted).
    #[arg(long, value_parser = parse_count, default_value = "10000")]
    pub trials: u64,
    /// Stop a point after this many failures.
    #[arg(long, value_parser = parse_count, default_value = "100")]
    pub failures: u64,
    #[arg(long, default_value_t = 2)]
    pub iterations: usize,
    /// Use one matrix per point instead of a fresh one per trial.
    #[arg(long)]
    pub fixed_matrix: bool,
    /// Comma list of `syndrome-weight`, `discrepancies`, `class-flips`,
    /// `transitions`, `one-eq`, or `all`.
    #[arg(long)]
    pub telemetry: Option<String>,
    /// Trials between early-stop checks.
    #[arg(long, default_value_t = 256)]
    pub batch: u64,
}

#[derive(Debug, Args, Clone)]
pub struct CompareArgs {
    /// Model output: a `model` CSV or a `value,prob` pmf.
    #[arg(long)]
    pub model: PathBuf,
    /// Simulation output: a `simulate` CSV or a `value,count` histogram.
    #[arg(long)]
    pub sim: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct Table1Args {
    /// 1-based rows, e.g. `1,3`.
    #[arg(long)]
    pub rows: Option<String>,
    #[arg(long)]
    pub th1: Option<u32>,
    #[arg(long)]
    pub th2: Option<u32>,
    #[command(flatten)]
    pub mode: ModeArgs,
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 => Ok(x as u64),
        _ => Err(format!("`{s}` is not a non-negative integer")),
    }
}

fn parse_range(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| Error::param(format!("bad range `{s}`")));
    let (a, b, step) = match parts.as_slice() {
        [a, b] => (num(a)?, num(b)?, 1),
        [a, b, c] => (num(a)?, num(b)?, num(c)?),
        _ => return Err(Error::param(format!("range `{s}` must be a:b or a:b:step"))),
    };
    if step == 0 || a > b {
        return Err(Error::param(format!("empty range `{s}`")));
    }
    Ok((a..=b).step_by(step).collect())
}

impl CodeArgs {
    /// `(params, t, th1, th2)` for every requested point.
    pub fn points(&self) -> Result<Vec<PlanPoint>> {
        let v = self.v.ok_or_else(|| Error::param("--v is required"))?;
        let ts = match (&self.t, &self.sweep_t) {
            (Some(t), None) => vec![*t],
            (None, Some(s)) => parse_range(s)?,
            _ => return Err(Error::param("give --t or --sweep-t")),
        };
        let codes = if let (Some(n0), Some(p)) = (self.n0, self.p) {
            vec![CodeParams::qc(n0, p, v)?]
        } else {
            let w = self.w.ok_or_else(|| Error::param("--w is required for non-QC codes"))?;
            let ns = match (&self.n, &self.sweep_n) {
                (Some(n), None) => vec![*n],
                (None, Some(s)) => parse_range(s)?,
                _ => return Err(Error::param("give --n or --sweep-n")),
            };
            ns.into_iter()
                .map(|n| {
                    let r = match (self.r, self.k) {
                        (Some(r), _) => r,
                        (None, Some(k)) => n.checked_sub(k).ok_or_else(|| Error::param("k exceeds n"))?,
                        (None, None) => {
                            if (n * v) % w != 0 {
                                return Err(Error::param(format!("n·v/w is not an integer for n={n}")));
                            }
                            n * v / w
                        }
                    };
                    CodeParams::regular(n, r, v, w)
                })
                .collect::<Result<Vec<_>>>()?
        };
        let mut out = Vec::new();
        for params in codes {
            let maj = params.majority_threshold();
            for &t in &ts {
                out.push(PlanPoint { params, t, th1: self.th1.unwrap_or(maj), th2: self.th2.unwrap_or(maj) });
            }
        }
        Ok(out)
    }
}

fn telemetry_flags(s: Option<&str>) -> Result<TelemetryFlags> {
    let mut f = TelemetryFlags::default();
    let Some(s) = s else { return Ok(f) };
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        match item {
            "all" => f = TelemetryFlags::all(),
            "syndrome-weight" => f.syndrome_weight = true,
            "discrepancies" => f.discrepancies = true,
            "class-flips" => f.class_flips = true,
            "transitions" => f.transitions = true,
            "one-eq" => f.one_eq = true,
            _ => return Err(Error::param(format!("unknown telemetry `{item}`"))),
        }
    }
    Ok(f)
}

/// Provenance line. The hash covers everything that can change results but
/// not the thread count or the output directory.
fn header(command: &str, seed: u64, fingerprint: &str) -> String {
    let h = Sha256::digest(fingerprint.as_bytes());
    let hex: String = h[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("# ldpc-dfr {} command={command} seed={seed} config={hex}", env!("CARGO_PKG_VERSION"))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    Ok(())
}

fn precision(common: &Common, default: Precision) -> Result<Precision> {
    let p = match &common.precision {
        Some(s) => s.parse()?,
        None => default,
    };
    if let Precision::Extended { bits } = p {
        set_extended_bits(bits);
    }
    Ok(p)
}

fn model_rows<R: Real>(pts: &[PlanPoint], opts: &DfrOptions, pmfs: bool) -> Result<(Vec<DfrReport<R>>, Vec<(String, String)>)> {
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for (i, pt) in pts.iter().enumerate() {
        let m = Iter1Model::<R>::with_options(pt.params, pt.t, opts.iter1)?;
        reports.push(dfr_from_model(&m, pt.th1, pt.th2, opts)?);
        if pmfs {
            let tag = format!("n={} t={} th1={}", pt.params.n, pt.t, pt.th1);
            files.push((format!("pmf_syndrome_weight_{i}.csv"), m.syndrome_weights().to_csv(&tag)));
            if pt.t > 0 {
                let prof = m.averaged_profile(pt.th1)?;
                files.push((format!("pmf_d_plus_{i}.csv"), prof.delta_plus.to_csv(&tag)));
                files.push((format!("pmf_d_minus_{i}.csv"), prof.delta_minus.to_csv(&tag)));
                files.push((format!("pmf_discrepancies_{i}.csv"), prof.discrepancy_pmf().to_csv(&tag)));
            }
        }
    }
    Ok((reports, files))
}

fn csv_body<R: Real>(head: &str, reports: &[DfrReport<R>]) -> String {
    let mut s = format!("{head}\n{}\n", DfrReport::<R>::CSV_HEADER);
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn cmd_model(common: &Common, a: &ModelArgs) -> Result<()> {
    let prec = precision(common, Precision::Standard)?;
    let pts = a.code.points()?;
    let opts = a.mode.options();
    let head = header("model", common.seed, &format!("{pts:?}{opts:?}{prec}{}", a.pmfs));
    let (body, files) = match prec {
        Precision::Standard => {
            let (r, f) = model_rows::<f64>(&pts, &opts, a.pmfs)?;
            (csv_body(&head, &r), f)
        }
        Precision::Extended { .. } => {
            let (r, f) = model_rows::<Float>(&pts, &opts, a.pmfs)?;
            (csv_body(&head, &r), f)
        }
    };
    write(&common.out, "model.csv", &body)?;
    for (name, text) in files {
        write(&common.out, &name, &text)?;
    }
    eprintln!("wrote {} model row(s) to {}", pts.len(), common.out.join("model.csv").display());
    Ok(())
}

fn cmd_simulate(common: &Common, a: &SimulateArgs) -> Result<()> {
    let pts = a.code.points()?;
    let mut plan = ExperimentPlan::new(pts, a.trials, a.failures, common.seed);
    plan.iterations = a.iterations;
    plan.fixed_matrix = a.fixed_matrix;
    plan.telemetry = telemetry_flags(a.telemetry.as_deref())?;
    plan.batch = a.batch;
    let rep = mc::run_experiment(&plan)?;
    let matrices = if plan.fixed_matrix { "fixed" } else { "fresh" };
    let head = format!("{} plan={} matrices={matrices}", header("simulate", common.seed, &format!("{plan:?}")), rep.plan_hash);
    let mut body = format!("{head}\n{}\n", mc::ExperimentReport::CSV_HEADER);
    body.extend(rep.to_csv().lines().skip(2).map(|l| format!("{l}\n")));
    write(&common.out, "simulate.csv", &body)?;
    let f = plan.telemetry;
    let mut classes = format!("{head}\npoint,class,positions,flips2,sat_sat,sat_unsat,unsat_sat,unsat_unsat\n");
    let mut one_eq = format!("{head}\npoint,error_bit,check_unsat,incidences,flipped1\n");
    for (i, r) in rep.points.iter().enumerate() {
        let tel = &r.telemetry;
        let hist = |name: &str, h: &Histogram| -> Result<()> {
            write(&common.out, &format!("hist_{name}_{i}.csv"), &h.to_csv(&format!("{head} point={i}")))
        };
        if f.syndrome_weight {
            hist("syndrome_weight", &tel.syndrome_weight)?;
        }
        if f.discrepancies {
            hist("d_plus", &tel.d_plus)?;
            hist("d_minus", &tel.d_minus)?;
        }
        if f.transitions {
            hist("tc_j00", &tel.tc_j00)?;
        }
        for c in 0..4 {
            let t = &tel.transitions[c];
            let _ = writeln!(
                classes,
                "{i},{}{},{},{},{},{},{},{}",
                c / 2,
                c % 2,
                tel.class_positions[c],
                tel.class_flips[c],
                t[0][0],
                t[0][1],
                t[1][0],
                t[1][1]
            );
            let _ = writeln!(one_eq, "{i},{},{},{},{}", c / 2, c % 2, tel.one_eq[c].0, tel.one_eq[c].1);
        }
    }
    if f.class_flips || f.transitions {
        write(&common.out, "classes.csv", &classes)?;
    }
    if f.one_eq {
        write(&common.out, "one_eq.csv", &one_eq)?;
    }
    for r in &rep.points {
        eprintln!(
            "n={} t={} th=({},{}): {} failures / {} trials, dfr {:e}",
            r.point.params.n, r.point.t, r.point.th1, r.point.th2, r.failures, r.trials, r.dfr
        );
    }
    Ok(())
}

/// A parsed CSV: header names and rows of raw fields.
struct Table {
    cols: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let cols: Vec<String> =
            lines.next().ok_or_else(|| Error::parse("empty CSV"))?.split(',').map(|s| s.trim().to_string()).collect();
        let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
        if rows.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::parse("ragged CSV row"));
        }
        Ok(Table { cols, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.cols.iter().position(|c| c == name)
    }

    fn get<T: std::str::FromStr>(&self, row: &[String], name: &str) -> Result<T> {
        let i = self.col(name).ok_or_else(|| Error::parse(format!("missing column `{name}`")))?;
        row[i].parse().map_err(|_| Error::parse(format!("bad `{name}` value `{}`", row[i])))
    }
}

fn as_pmf(t: &Table) -> Result<Option<Pmf<f64>>> {
    if t.cols.len() != 2 || t.cols[0] != "value" {
        return Ok(None);
    }
    let pairs = t
        .rows
        .iter()
        .map(|r| Ok((t.get::<i64>(r, "value")?, t.get::<f64>(r, &t.cols[1])?)))
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::usage("pmf file has no rows"));
    }
    let lo = pairs.iter().map(|p| p.0).min().unwrap();
    let hi = pairs.iter().map(|p| p.0).max().unwrap();
    let mut probs = vec![0.0; (hi - lo + 1) as usize];
    for (v, p) in pairs {
        probs[(v - lo) as usize] += p;
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::usage("pmf file carries no mass"));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(Some(Pmf::new(lo, probs)))
}

fn cmd_compare(common: &Common, a: &CompareArgs) -> Result<()> {
    let mtext = fs::read_to_string(&a.model)?;
    let stext = fs::read_to_string(&a.sim)?;
    let (mt, st) = (Table::parse(&mtext)?, Table::parse(&stext)?);
    let head = header("compare", common.seed, &format!("{mtext}{stext}"));
    let mut rows: Vec<Comparison> = Vec::new();
    let mut long = format!("{head}\nquantity,x,source,value\n");
    if let (Some(mp), Some(_)) = (as_pmf(&mt)?, as_pmf(&st)?) {
        let mut hist = Histogram::default();
        let counts = st.cols[1] == "count";
        for r in &st.rows {
            let v: i64 = st.get(r, "value")?;
            let c = if counts { st.get::<u64>(r, "count")? } else { (st.get::<f64>(r, &st.cols[1])? * 1e12).round() as u64 };
            hist.add(v, c);
        }
        let name = a.sim.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "pmf".into());
        rows.push(compare_pmf(&name, &mp, &hist)?);
        for (x, p) in mp.iter() {
            let _ = writeln!(long, "{name},{x},model,{p:e}");
        }
        for (x, p) in hist.to_pmf().iter() {
            let _ = writeln!(long, "{name},{x},sim,{p:e}");
        }
    } else if mt.col("dfr").is_some() && st.col("failures").is_some() {
        for sr in &st.rows {
            let key: Vec<String> = ["n", "v", "w", "t", "th1", "th2"]
                .iter()
                .map(|c| st.get::<String>(sr, c))
                .collect::<Result<_>>()?;
            let Some(mr) = mt.rows.iter().find(|mr| {
                ["n", "v", "w", "t", "th1", "th2"].iter().zip(&key).all(|(c, k)| mt.get::<String>(mr, c).ok().as_ref() == Some(k))
            }) else {
                continue;
            };
            let label = format!("dfr[n={};t={};th={}/{}]", key[0], key[3], key[4], key[5]);
            let model: f64 = mt.get(mr, "dfr")?;
            let c = compare_rate(&label, model, st.get(sr, "failures")?, st.get(sr, "trials")?)?;
            let x = format!("{}:{}", key[0], key[3]);
            let _ = writeln!(long, "dfr,{x},model,{:e}", c.model);
            let _ = writeln!(long, "dfr,{x},sim,{:e}", c.empirical);
            rows.push(c);
        }
        if rows.is_empty() {
            return Err(Error::usage("no simulated point matches a model row"));
        }
    } else {
        return Err(Error::usage("inputs must be two pmf/histogram files or a model CSV and a simulate CSV"));
    }
    let mut body = format!("{head}\n{}\n", Comparison::CSV_HEADER);
    for r in &rows {
        body.push_str(&r.csv_row());
        body.push('\n');
    }
    write(&common.out, "compare.csv", &body)?;
    write(&common.out, "compare_long.csv", &long)?;
    for r in &rows {
        eprintln!("{}", r.csv_row());
    }
    Ok(())
}

/// Model `log₂ DFR` for a Table I row.
pub fn table1_row<R: Real>(row: &Table1Row, th1: u32, th2: u32, opts: &DfrOptions) -> Result<DfrReport<R>> {
    let params = CodeParams::qc(row.n0, row.p, row.v)?;
    let m = Iter1Model::<R>::with_options(params, row.t, opts.iter1)?;
    dfr_from_model(&m, th1, th2, opts)
}

fn cmd_table1(common: &Common, a: &Table1Args) -> Result<()> {
    let prec = precision(common, Precision::Extended { bits: crate::real::extended_bits() })?;
    let idx: Vec<usize> = match &a.rows {
        None => (1..=TABLE1_ROWS.len()).collect(),
        Some(s) => s
            .split(',')
            .map(|x| match x.trim().parse::<usize>() {
                Ok(i) if (1..=TABLE1_ROWS.len()).contains(&i) => Ok(i),
                _ => Err(Error::param(format!("row `{x}` is not in 1..={}", TABLE1_ROWS.len()))),
            })
            .collect::<Result<_>>()?,
    };
    if a.th1.is_none() && a.th2.is_none() {
        eprintln!(
            "warning: the published threshold schedules are unknown; using thresholds that minimise the model DFR (override with --th1/--th2)"
        );
    }
    let opts = a.mode.options();
    let head = header("table1", common.seed, &format!("{idx:?}{:?}{:?}{opts:?}{prec}", a.th1, a.th2));
    let mut body = format!("{head}\nrow,n0,p,v,t,th1,th2,mode,dfr,log2_dfr,published_log2_dfr,difference\n");
    for i in idx {
        let row = &TABLE1_ROWS[i - 1];
        let (th1, th2) = (a.th1.unwrap_or(row.th1), a.th2.unwrap_or(row.th2));
        let (dfr, l2) = match prec {
            Precision::Standard => {
                let r = table1_row::<f64>(row, th1, th2, &opts)?;
                (r.dfr.to_decimal(), r.log2_dfr())
            }
            Precision::Extended { .. } => {
                let r = table1_row::<Float>(row, th1, th2, &opts)?;
                (r.dfr.to_decimal(), r.log2_dfr())
            }
        };
        let line = format!(
            "{i},{},{},{},{},{th1},{th2},{},{dfr},{l2:.3},{},{:.3}",
            row.n0,
            row.p,
            row.v,
            row.t,
            opts.label(),
            row.published_log2,
            l2 - row.published_log2
        );
        eprintln!("{line}");
        body.push_str(&line);
        body.push('\n');
    }
    write(&common.out, "table1.csv", &body)
}

/// Splices configuration-file flags in right after the subcommand so that
/// explicit flags, which come later, win.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let subs = ["model", "simulate", "compare", "table1"];
    let Some(pos) = args.iter().position(|a| subs.contains(&a.as_str())) else { return Ok(args) };
    let entries = config::parse(&fs::read_to_string(&path)?)?;
    let extra = config::to_args(&entries, &args[pos])?;
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 3,
        Error::Domain(_) => 1,
        _ => 2,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Model(a) => cmd_model(&cli.common, a),
        Command::Simulate(a) => cmd_simulate(&cli.common, a),
        Command::Compare(a) => cmd_compare(&cli.common, a),
        Command::Table1(a) => cmd_table1(&cli.common, a),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let res = match cli.common.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::param(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
