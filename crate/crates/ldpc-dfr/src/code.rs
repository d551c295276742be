//! Code parameters, parity-check matrices, error vectors and syndromes.

use std::fmt;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Quasi-cyclic shape: `n0` circulant blocks of size `p × p` side by side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QcShape {
    pub n0: usize,
    pub p: usize,
}

/// Parameters of a `(v, w)`-regular code ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CodeParams {
    /// Code length.
    pub n: usize,
    /// Dimension.
    pub k: usize,
    /// Redundancy `n - k`, i.e. the number of parity-check rows.
    pub r: usize,
    /// Column weight.
    pub v: usize,
    /// Row weight.
    pub w: usize,
    pub qc: Option<QcShape>,
}

impl CodeParams {
    /// A `(v, w)`-regular ensemble of length `n` with `r` parity checks
    /// (`v·n = w·r`).
    pub fn regular(n: usize, r: usize, v: usize, w: usize) -> Result<Self> {
        let p = CodeParams { n, k: n.wrapping_sub(r), r, v, w, qc: None };
        p.validate()?;
        Ok(p)
    }

    /// Quasi-cyclic `[n0·p, (n0-1)·p]` code, hence `(v, n0·v)`-regular.
    pub fn qc(n0: usize, p: usize, v: usize) -> Result<Self> {
        if n0 < 1 || p < 1 {
            return Err(Error::param("n0 and p must be positive"));
        }
        let c = CodeParams {
            n: n0 * p,
            k: (n0 - 1) * p,
            r: p,
            v,
            w: n0 * v,
            qc: Some(QcShape { n0, p }),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let CodeParams { n, k, r, v, w, qc } = *self;
        if v == 0 || w == 0 {
            return Err(Error::param("column and row weights must be positive"));
        }
        if r == 0 || r > n || k + r != n {
            return Err(Error::param(format!("need 0 < r <= n with k = n - r (n={n}, r={r})")));
        }
        if v * n != w * r {
            return Err(Error::param(format!("v·n must equal w·r (v={v}, n={n}, w={w}, r={r})")));
        }
        match qc {
            Some(QcShape { n0, p }) => {
                if n != n0 * p || r != p || w != n0 * v {
                    return Err(Error::param("inconsistent quasi-cyclic shape"));
                }
                if v >= p {
                    return Err(Error::param(format!("circulant weight v={v} must be below p={p}")));
                }
            }
            None => {
                if v > r || w > n {
                    return Err(Error::param(format!("weights exceed dimensions (n={n}, r={r}, v={v}, w={w})")));
                }
            }
        }
        Ok(())
    }

    /// Majority threshold `⌈(v+1)/2⌉`.
    pub fn majority_threshold(&self) -> u32 {
        (self.v as u32 + 2) / 2
    }
}

impl fmt::Display for CodeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qc {
            Some(q) => write!(f, "QC n0={} p={} v={} (n={}, w={})", q.n0, q.p, self.v, self.n, self.w),
            None => write!(f, "n={} r={} v={} w={}", self.n, self.r, self.v, self.w),
        }
    }
}

/// Read-only sparse access used by the decoder, implemented by explicit and
/// implicit (circulant) matrices.
pub trait Tanner: Sync {
    fn n(&self) -> usize;
    fn r(&self) -> usize;
    /// Row indices of the ones in column `j`.
    fn for_each_in_col<F: FnMut(usize)>(&self, j: usize, f: F);
    /// Column indices of the ones in row `i`.
    fn for_each_in_row<F: FnMut(usize)>(&self, i: usize, f: F);
}

/// Sparse binary `r × n` matrix stored as row and column supports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    pub params: CodeParams,
    row_supports: Vec<Vec<u32>>,
    col_supports: Vec<Vec<u32>>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from row supports, checking regularity and deriving columns.
    pub fn from_rows(params: CodeParams, mut rows: Vec<Vec<u32>>) -> Result<Self> {
        if rows.len() != params.r {
            return Err(Error::usage(format!("expected {} rows, got {}", params.r, rows.len())));
        }
        let mut cols = vec![Vec::with_capacity(params.v); params.n];
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::param(format!("row {i} repeats a column index")));
            }
            if row.len() != params.w {
                return Err(Error::param(format!("row {i} has weight {} instead of {}", row.len(), params.w)));
            }
            for &j in row.iter() {
                let j = j as usize;
                if j >= params.n {
                    return Err(Error::param(format!("row {i} references column {j} >= n")));
                }
                cols[j].push(i as u32);
            }
        }
        for (j, c) in cols.iter().enumerate() {
            if c.len() != params.v {
                return Err(Error::param(format!("column {j} has weight {} instead of {}", c.len(), params.v)));
            }
        }
        Ok(ParityCheckMatrix { params, row_supports: rows, col_supports: cols })
    }

    pub fn row_supports(&self) -> &[Vec<u32>] {
        &self.row_supports
    }

    pub fn col_supports(&self) -> &[Vec<u32>] {
        &self.col_supports
    }

    /// Whether the row and column supports describe the same matrix.
    pub fn is_transpose_consistent(&self) -> bool {
        let mut count = 0usize;
        for (i, row) in self.row_supports.iter().enumerate() {
            for &j in row {
                if self.col_supports[j as usize].binary_search(&(i as u32)).is_err() {
                    return false;
                }
                count += 1;
            }
        }
        count == self.col_supports.iter().map(|c| c.len()).sum::<usize>()
    }

    /// Line-oriented text export: header `n r v w`, then one row per line.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = format!("{} {} {} {}\n", p.n, p.r, p.v, p.w);
        for row in &self.row_supports {
            let mut first = true;
            for j in row {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{j}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses the format written by [`ParityCheckMatrix::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::parse("empty matrix file"))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| Error::parse(format!("bad header `{header}`"))))
            .collect::<Result<_>>()?;
        if nums.len() != 4 {
            return Err(Error::parse("header must be `n r v w`"));
        }
        let params = CodeParams { n: nums[0], k: nums[0] - nums[1], r: nums[1], v: nums[2], w: nums[3], qc: None };
        let rows = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|x| x.parse::<u32>().map_err(|_| Error::parse(format!("bad index `{x}`"))))
                    .collect::<Result<Vec<u32>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ParityCheckMatrix::from_rows(params, rows)
    }

    /// Dense 0/1 rendering, for tiny matrices and oracles.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut d = vec![vec![0u8; self.params.n]; self.params.r];
        for (i, row) in self.row_supports.iter().enumerate() {
            for &j in row {
                d[i][j as usize] = 1;
            }
        }
        d
    }
}

impl Tanner for ParityCheckMatrix {
    fn n(&self) -> usize {
        self.params.n
    }
    fn r(&self) -> usize {
        self.params.r
    }
    fn for_each_in_col<F: FnMut(usize)>(&self, j: usize, mut f: F) {
        for &i in &self.col_supports[j] {
            f(i as usize);
        }
    }
    fn for_each_in_row<F: FnMut(usize)>(&self, i: usize, mut f: F) {
        for &j in &self.row_supports[i] {
            f(j as usize);
        }
    }
}

/// Quasi-cyclic matrix kept in circulant form: block `b` is described by the
/// row offsets of its first column; column `j` of the block has ones in rows
/// `(o + j) mod p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QcMatrix {
    pub params: CodeParams,
    p: usize,
    offsets: Vec<Vec<u32>>,
}

impl QcMatrix {
    pub fn new(params: CodeParams, offsets: Vec<Vec<u32>>) -> Result<Self> {
        let shape = params.qc.ok_or_else(|| Error::param("quasi-cyclic matrix needs a QC shape"))?;
        if offsets.len() != shape.n0 || offsets.iter().any(|o| o.len() != params.v) {
            return Err(Error::param("each circulant block needs exactly v offsets"));
        }
        let mut offsets = offsets;
        for o in offsets.iter_mut() {
            o.sort_unstable();
            if o.windows(2).any(|w| w[0] == w[1]) || o.iter().any(|&x| x as usize >= shape.p) {
                return Err(Error::param("circulant offsets must be distinct and below p"));
            }
        }
        Ok(QcMatrix { params, p: shape.p, offsets })
    }

    pub fn offsets(&self) -> &[Vec<u32>] {
        &self.offsets
    }

    /// Explicit form.
    pub fn to_explicit(&self) -> ParityCheckMatrix {
        let mut rows = vec![Vec::with_capacity(self.params.w); self.params.r];
        for (i, row) in rows.iter_mut().enumerate() {
            self.for_each_in_row(i, |j| row.push(j as u32));
        }
        ParityCheckMatrix::from_rows(self.params, rows).expect("circulant construction is regular")
    }
}

impl Tanner for QcMatrix {
    fn n(&self) -> usize {
        self.params.n
    }
    fn r(&self) -> usize {
        self.params.r
    }
    fn for_each_in_col<F: FnMut(usize)>(&self, j: usize, mut f: F) {
        let (b, jj) = (j / self.p, j % self.p);
        for &o in &self.offsets[b] {
            let i = o as usize + jj;
            f(if i >= self.p { i - self.p } else { i });
        }
    }
    fn for_each_in_row<F: FnMut(usize)>(&self, i: usize, mut f: F) {
        for (b, offs) in self.offsets.iter().enumerate() {
            let base = b * self.p;
            for &o in offs {
                let o = o as usize;
                f(base + if i >= o { i - o } else { i + self.p - o });
            }
        }
    }
}

/// Samples a `(v, w)`-regular matrix: `v` layers, each a uniform column
/// permutation of `m = n/w` rows of `w` consecutive ones, stacked and then
/// row-permuted.
pub fn generate_regular_pcm(params: &CodeParams, seed: u64) -> Result<ParityCheckMatrix> {
    if params.qc.is_some() {
        return Err(Error::param("use generate_qc_pcm for quasi-cyclic parameters"));
    }
    params.validate()?;
    let mut rng = rng::stream(seed, "regular-pcm", &[]);
    regular_from_rng(params, &mut rng)
}

pub(crate) fn regular_from_rng(params: &CodeParams, rng: &mut Rng) -> Result<ParityCheckMatrix> {
    let (n, r, v, w) = (params.n, params.r, params.v, params.w);
    let cols = if n % w == 0 && r % v == 0 && n / w == r / v {
        layered(n, v, w, rng)
    } else {
        socket_matching(n, r, v, w, rng)?
    };
    let mut row_perm: Vec<u32> = (0..r as u32).collect();
    shuffle(&mut row_perm, rng);
    let mut rows = vec![Vec::with_capacity(w); r];
    for (j, c) in cols.iter().enumerate() {
        for &i in c {
            rows[row_perm[i as usize] as usize].push(j as u32);
        }
    }
    ParityCheckMatrix::from_rows(*params, rows)
}

fn shuffle(xs: &mut [u32], rng: &mut Rng) {
    // Fisher–Yates
    for i in (1..xs.len()).rev() {
        let k = rng.gen_range(0..=i);
        xs.swap(i, k);
    }
}

/// `v` layers, each a column permutation of `n/w` rows of `w` consecutive ones.
fn layered(n: usize, v: usize, w: usize, rng: &mut Rng) -> Vec<Vec<u32>> {
    let m = n / w;
    let mut perm: Vec<u32> = (0..n as u32).collect();
    let mut cols: Vec<Vec<u32>> = vec![Vec::with_capacity(v); n];
    for layer in 0..v {
        shuffle(&mut perm, rng);
        for (j, &src) in perm.iter().enumerate() {
            cols[j].push((layer * m + src as usize / w) as u32);
        }
    }
    cols
}

/// Random matching of `v·n` column sockets to `w·r` row sockets. A column
/// meeting a row twice has the repeated socket swapped with a random socket of
/// another column, chosen so that neither column gains a repeat.
fn socket_matching(n: usize, r: usize, v: usize, w: usize, rng: &mut Rng) -> Result<Vec<Vec<u32>>> {
    const ROUNDS: usize = 100;
    const DRAWS: usize = 10_000;
    let mut sockets: Vec<u32> = (0..r).flat_map(|i| std::iter::repeat_n(i as u32, w)).collect();
    shuffle(&mut sockets, rng);
    let col = |s: &[u32], j: usize| s[j * v..(j + 1) * v].to_vec();
    for _ in 0..ROUNDS {
        let bad: Vec<usize> = (0..n)
            .flat_map(|j| {
                let c = &sockets[j * v..(j + 1) * v];
                (0..v).filter(move |&a| c[..a].contains(&c[a])).map(move |a| j * v + a)
            })
            .collect();
        if bad.is_empty() {
            return Ok((0..n)
                .map(|j| {
                    let mut c = col(&sockets, j);
                    c.sort_unstable();
                    c
                })
                .collect());
        }
        for a in bad {
            let ja = a / v;
            for _ in 0..DRAWS {
                let b = rng.gen_range(0..sockets.len());
                let jb = b / v;
                if jb == ja {
                    continue;
                }
                let (ra, rb) = (sockets[a], sockets[b]);
                let ca = &sockets[ja * v..(ja + 1) * v];
                let cb = &sockets[jb * v..(jb + 1) * v];
                if !ca.contains(&rb) && !cb.contains(&ra) {
                    sockets.swap(a, b);
                    break;
                }
            }
        }
    }
    Err(Error::param(format!("no simple ({v}, {w})-regular matrix found with n={n}, r={r}")))
}

/// Samples a quasi-cyclic matrix with uniformly random distinct offsets per block.
pub fn generate_qc_pcm(params: &CodeParams, seed: u64) -> Result<ParityCheckMatrix> {
    Ok(generate_qc(params, seed)?.to_explicit())
}

/// Circulant-form variant of [`generate_qc_pcm`] (same matrix for the same seed).
pub fn generate_qc(params: &CodeParams, seed: u64) -> Result<QcMatrix> {
    params.validate()?;
    if params.qc.is_none() {
        return Err(Error::param("quasi-cyclic generation needs n0 and p"));
    }
    let mut rng = rng::stream(seed, "qc-pcm", &[]);
    Ok(qc_from_rng(params, &mut rng))
}

pub(crate) fn qc_from_rng(params: &CodeParams, rng: &mut Rng) -> QcMatrix {
    let shape = params.qc.unwrap();
    let offsets = (0..shape.n0)
        .map(|_| index::sample(rng, shape.p, params.v).into_iter().map(|x| x as u32).collect())
        .collect();
    QcMatrix::new(*params, offsets).expect("sampled offsets are valid")
}

/// Error vector given by its sorted support.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ErrorVector {
    pub n: usize,
    support: Vec<u32>,
}

impl ErrorVector {
    pub fn new(n: usize, mut support: Vec<u32>) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        if support.last().is_some_and(|&j| j as usize >= n) {
            return Err(Error::usage("error support index out of range"));
        }
        Ok(ErrorVector { n, support })
    }

    pub fn zero(n: usize) -> Self {
        ErrorVector { n, support: Vec::new() }
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn weight(&self) -> usize {
        self.support.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.support.binary_search(&(j as u32)).is_ok()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        let mut b = vec![0u8; self.n];
        for &j in &self.support {
            b[j as usize] = 1;
        }
        b
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let support = bits.iter().enumerate().filter(|(_, &b)| b != 0).map(|(j, _)| j as u32).collect();
        ErrorVector { n: bits.len(), support }
    }

    /// Symmetric difference.
    pub fn xor(&self, other: &ErrorVector) -> ErrorVector {
        let mut out = Vec::new();
        let (a, b) = (&self.support, &other.support);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i] < b[j]) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j] < a[i] {
                out.push(b[j]);
                j += 1;
            } else {
                i += 1;
                j += 1;
            }
        }
        ErrorVector { n: self.n, support: out }
    }
}

/// Uniformly random weight-`t` error of length `n`.
pub fn sample_error(n: usize, t: usize, seed: u64) -> Result<ErrorVector> {
    if t > n {
        return Err(Error::param(format!("error weight {t} exceeds length {n}")));
    }
    let mut rng = rng::stream(seed, "error", &[]);
    Ok(error_from_rng(n, t, &mut rng))
}

pub(crate) fn error_from_rng(n: usize, t: usize, rng: &mut Rng) -> ErrorVector {
    let mut support: Vec<u32> = index::sample(rng, n, t).into_iter().map(|x| x as u32).collect();
    support.sort_unstable();
    ErrorVector { n, support }
}

/// Syndrome bits, one byte per parity check.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Syndrome {
    bits: Vec<u8>,
}

impl Syndrome {
    pub fn from_bits(bits: Vec<u8>) -> Self {
        Syndrome { bits: bits.into_iter().map(|b| b & 1).collect() }
    }

    pub fn zero(r: usize) -> Self {
        Syndrome { bits: vec![0; r] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn xor(&self, other: &Syndrome) -> Syndrome {
        Syndrome { bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect() }
    }
}

/// `s = H eᵀ` over GF(2).
pub fn syndrome<T: Tanner>(h: &T, e: &ErrorVector) -> Result<Syndrome> {
    if e.n != h.n() {
        return Err(Error::usage(format!("error length {} does not match n={}", e.n, h.n())));
    }
    let mut bits = vec![0u8; h.r()];
    for &j in e.support() {
        h.for_each_in_col(j as usize, |i| bits[i] ^= 1);
    }
    Ok(Syndrome { bits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(CodeParams::regular(14, 7, 2, 4).is_ok());
        assert!(CodeParams::regular(15, 7, 2, 4).is_err());
        assert!(CodeParams::regular(100, 50, 5, 10).is_ok());
        assert!(CodeParams::qc(2, 4801, 45).is_ok());
        assert!(CodeParams::qc(2, 5, 5).is_err());
        assert_eq!(CodeParams::regular(14, 7, 2, 4).unwrap().majority_threshold(), 2);
        assert_eq!(CodeParams::qc(2, 4801, 45).unwrap().majority_threshold(), 23);
    }

    #[test]
    fn regular_generation_is_regular_and_deterministic() {
        let p = CodeParams::regular(100, 50, 5, 10).unwrap();
        let a = generate_regular_pcm(&p, 3).unwrap();
        let b = generate_regular_pcm(&p, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.is_transpose_consistent());
        assert!(a.row_supports().iter().all(|r| r.len() == 10));
        assert!(a.col_supports().iter().all(|c| c.len() == 5));
        assert_ne!(a, generate_regular_pcm(&p, 4).unwrap());
    }

    #[test]
    fn permutation_matrix_case() {
        let params = CodeParams::regular(6, 6, 1, 1).unwrap();
        assert_eq!(params.k, 0);
        let h = generate_regular_pcm(&params, 1).unwrap();
        assert!(h.row_supports().iter().all(|r| r.len() == 1));
        assert!(h.col_supports().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn qc_blocks_are_circulant() {
        let p = CodeParams::qc(2, 31, 3).unwrap();
        let h = generate_qc_pcm(&p, 11).unwrap();
        for b in 0..2u32 {
            let row0: Vec<u32> = h.row_supports()[0].iter().copied().filter(|j| j / 31 == b).collect();
            for i in 0..31u32 {
                let mut expect: Vec<u32> = row0.iter().map(|&j| b * 31 + (j % 31 + i) % 31).collect();
                expect.sort_unstable();
                let got: Vec<u32> = h.row_supports()[i as usize].iter().copied().filter(|j| j / 31 == b).collect();
                assert_eq!(got, expect);
            }
        }
        assert!(h.row_supports().iter().all(|r| r.len() == 6));
        assert!(h.col_supports().iter().all(|c| c.len() == 3));
        let cyc = generate_qc_pcm(&CodeParams::qc(1, 5, 1).unwrap_or(CodeParams { n: 5, k: 0, r: 5, v: 1, w: 1, qc: Some(QcShape { n0: 1, p: 5 }) }), 0);
        let _ = cyc;
    }

    #[test]
    fn implicit_and_explicit_qc_agree() {
        let p = CodeParams::qc(3, 17, 4).unwrap();
        let q = generate_qc(&p, 5).unwrap();
        let h = q.to_explicit();
        for j in 0..p.n {
            let mut a = Vec::new();
            q.for_each_in_col(j, |i| a.push(i as u32));
            a.sort_unstable();
            assert_eq!(a, h.col_supports()[j]);
        }
    }

    #[test]
    fn text_round_trip() {
        let p = CodeParams::regular(28, 14, 3, 6).unwrap();
        let h = generate_regular_pcm(&p, 1).unwrap();
        let back = ParityCheckMatrix::from_text(&h.to_text()).unwrap();
        assert_eq!(back.row_supports(), h.row_supports());
    }

    #[test]
    fn error_edges() {
        assert_eq!(sample_error(14, 0, 1).unwrap().weight(), 0);
        assert_eq!(sample_error(14, 14, 1).unwrap().support(), (0..14).collect::<Vec<u32>>().as_slice());
        assert!(sample_error(14, 15, 1).is_err());
    }
}
