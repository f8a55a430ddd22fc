//! Reduction cohomology on finite graded slices.
//!
//! A slice `C^n_m` is the span of the genus-0/1 n-point functions whose
//! insertions are Fock basis states of positive weight with total weight `m`,
//! placed at canonical points `z_n, ..., z_1` (outermost first). Functions are
//! vectorized over their monomials inside a fixed window, so every dimension
//! reported here is "certified within the window".
//!
//! The coboundary `δ^n` in a direction `v` is the reduction step
//! `F(x_n) ↦ H(v@z_{n+1}) F(x_n)`; it maps `C^n_m` to `C^{n+1}_{m + wt v}`,
//! so `m - n·wt v` is preserved and labels a line of the complex.
//!
//! The chain condition `δ^{n+1} δ^n = 0` does not hold in general. The
//! Euler–Poincaré ledger is therefore taken on the restricted complex
//! `S^n = ker(δ^{n+1} δ^n) ⊂ C^n` (with the top map closed to zero), which is a
//! genuine complex; the raw chain defects are reported alongside.
//!
//! The module also provides the cluster seed mutation and its involution check.

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::reduction::{
    genus0_direct, genus1_direct, reduce, unwind_to_partition, CorrelationFn, Genus, Insertion,
};
use crate::scalar::{rat_str, Rational};
use crate::series::MultiSeries;
use crate::voa::{partitions, square_bracket_mode, FockState, GradedVector};

type RMatrix = Matrix<Rational>;

/// Canonical label of the `i`-th point (`z1` is innermost).
pub fn point_label(i: usize) -> String {
    format!("z{i}")
}

fn point_window(genus: Genus, order: i64) -> (i64, i64) {
    match genus {
        Genus::Zero => (-order, order),
        // Cyclic partial sums of the weight changes stay within [-M, M] on V_M.
        Genus::One => (-2 * order, 2 * order),
    }
}

/// Weight vectors `(w_1, ..., w_n)` with `w_i >= 1` summing to `m`, largest first entry first.
fn compositions(n: usize, m: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, m: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 0 {
            if m == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if m < n as u32 {
            return;
        }
        for w in (1..=m - (n as u32 - 1)).rev() {
            prefix.push(w);
            rec(n - 1, m - w, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::new(), &mut out);
    out
}

/// A graded slice of n-point functions of total weight `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedSlice {
    pub genus: Genus,
    pub n: usize,
    pub m: u32,
    /// Half-width of the z-window at genus zero; q-order at genus one.
    pub order: i64,
    /// Basis tuples of Fock states, outermost first.
    pub basis: Vec<Vec<FockState>>,
}

impl GradedSlice {
    pub fn new(genus: Genus, n: usize, m: u32, order: i64) -> Result<Self> {
        if order < 0 || (genus == Genus::Zero && order == 0) {
            return Err(Error::InvalidArgument(format!(
                "slice order must be positive, got {order}"
            )));
        }
        let mut basis = Vec::new();
        for weights in compositions(n, m) {
            let mut tuples: Vec<Vec<FockState>> = vec![Vec::new()];
            for w in weights {
                let parts = partitions(w);
                tuples = tuples
                    .iter()
                    .flat_map(|t| {
                        parts.iter().map(move |p| {
                            let mut t = t.clone();
                            t.push(p.clone());
                            t
                        })
                    })
                    .collect();
            }
            basis.extend(tuples);
        }
        Ok(GradedSlice {
            genus,
            n,
            m,
            order,
            basis,
        })
    }

    /// Point labels, outermost first.
    pub fn points(&self) -> Vec<String> {
        (1..=self.n).rev().map(point_label).collect()
    }

    pub fn point_window(&self) -> (i64, i64) {
        point_window(self.genus, self.order)
    }

    pub fn windows(&self) -> Vec<(i64, i64)> {
        vec![self.point_window(); self.n]
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn insertions(&self, idx: usize) -> Vec<Insertion> {
        self.basis[idx]
            .iter()
            .zip(self.points())
            .map(|(s, p)| Insertion::new(GradedVector::basis(s.clone()), &p))
            .collect()
    }

    /// The slice reached by a coboundary of weight `weight`.
    pub fn successor(&self, weight: u32) -> Result<Self> {
        GradedSlice::new(self.genus, self.n + 1, self.m + weight, self.order)
    }

    /// The basis function for tuple `idx`: built by the reduction recursion at
    /// genus zero (much cheaper than the mode sums on large weight spaces) and
    /// by the trace oracle at genus one.
    pub fn function(&self, idx: usize) -> Result<CorrelationFn> {
        let insertions = self.insertions(idx);
        match self.genus {
            Genus::Zero => {
                let steps: Vec<(Insertion, (i64, i64))> = insertions
                    .into_iter()
                    .rev()
                    .map(|i| (i, self.point_window()))
                    .collect();
                Ok(unwind_to_partition(Genus::Zero, &steps, 0)?.function)
            }
            Genus::One => oracle(self.genus, &insertions, self.order),
        }
    }

    pub fn functions(&self) -> Result<Vec<CorrelationFn>> {
        (0..self.len())
            .into_par_iter()
            .map(|i| self.function(i))
            .collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "genus": self.genus.as_u8(),
            "n": self.n,
            "m": self.m,
            "order": self.order,
            "point_window": [self.point_window().0, self.point_window().1],
            "basis": self.basis.iter().map(|t| t.iter().map(FockState::literal).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

fn oracle(genus: Genus, insertions: &[Insertion], order: i64) -> Result<CorrelationFn> {
    let windows = vec![point_window(genus, order); insertions.len()];
    match genus {
        Genus::Zero => {
            let vac = GradedVector::vacuum();
            genus0_direct(insertions, (&vac, &vac), &windows)
        }
        Genus::One => genus1_direct(insertions, order, &windows),
    }
}

// ---------------------------------------------------------------------------
// Vectorization
// ---------------------------------------------------------------------------

fn monomial_index<'a, I: IntoIterator<Item = &'a MultiSeries<Rational>>>(
    series: I,
) -> Vec<Vec<i64>> {
    let mut set = BTreeSet::new();
    for s in series {
        set.extend(s.terms().map(|(e, _)| e.clone()));
    }
    set.into_iter().collect()
}

fn vectorize(index: &[Vec<i64>], series: &[&MultiSeries<Rational>]) -> Result<RMatrix> {
    let cols: Vec<Vec<Rational>> = series
        .iter()
        .map(|s| index.iter().map(|e| s.coeff(e)).collect())
        .collect();
    Matrix::from_columns(index.len(), &cols)
}

/// Solves `A X = B` for a matrix `A` with independent columns; `None` if some
/// column of `B` is not in the column space of `A`.
fn solve_many(a: &RMatrix, b: &RMatrix) -> Result<Option<RMatrix>> {
    let k = a.cols();
    let mut rows = Vec::with_capacity(a.rows());
    for i in 0..a.rows() {
        let mut r = a.row(i).to_vec();
        r.extend_from_slice(b.row(i));
        rows.push(r);
    }
    if rows.is_empty() || k + b.cols() == 0 {
        // No monomials: every column of B is zero.
        return Ok(Some(Matrix::zeros(k, b.cols())));
    }
    let (r, pivots) = Matrix::from_rows(rows)?.rref();
    if pivots.iter().any(|&p| p >= k) {
        return Ok(None);
    }
    if pivots.len() != k {
        return Err(Error::InvalidArgument("basis columns are dependent".into()));
    }
    let mut x = Matrix::zeros(k, b.cols());
    for i in 0..k {
        for j in 0..b.cols() {
            x.set(i, j, r.get(i, k + j).clone());
        }
    }
    Ok(Some(x))
}

fn hstack(blocks: &[RMatrix], rows: usize) -> Result<RMatrix> {
    let mut cols = Vec::new();
    for b in blocks {
        for j in 0..b.cols() {
            cols.push(b.column(j));
        }
    }
    Matrix::from_columns(rows, &cols)
}

fn vstack_all(blocks: &[RMatrix], cols: usize) -> Result<RMatrix> {
    let mut out = Matrix::zeros(0, cols);
    for b in blocks {
        out = out.vstack(b)?;
    }
    Ok(out)
}

fn rank_of(m: &RMatrix) -> usize {
    if m.rows() == 0 || m.cols() == 0 {
        0
    } else {
        m.rank()
    }
}

fn kernel_of(m: &RMatrix) -> Vec<Vec<Rational>> {
    if m.rows() == 0 {
        return (0..m.cols())
            .map(|i| {
                (0..m.cols())
                    .map(|j| {
                        if i == j {
                            Rational::one()
                        } else {
                            Rational::zero()
                        }
                    })
                    .collect()
            })
            .collect();
    }
    m.kernel()
}

// ---------------------------------------------------------------------------
// Coboundaries
// ---------------------------------------------------------------------------

/// How the unspecified direction `x_{n+1}` of `δ^n` is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum DirectionFamily {
    /// One fixed direction.
    Single(GradedVector),
    /// `δ = Σ_i H(v_i@z)`; all members must have the same weight.
    Sum(Vec<GradedVector>),
    /// All directions at once: the kernel is the intersection of the kernels and
    /// the incoming image is the sum of the images.
    Stack(Vec<GradedVector>),
}

impl DirectionFamily {
    /// Parses `state[@point]` items separated by `,`; the point label is a
    /// placeholder (the canonical label `z_{n+1}` is always used).
    pub fn parse(spec: &str, mode: &str) -> Result<Self> {
        let states: Vec<GradedVector> = spec
            .split(',')
            .map(|item| {
                let s = item.rsplit_once('@').map_or(item, |(s, _)| s);
                GradedVector::parse(s.trim())
            })
            .collect::<Result<_>>()?;
        if states.is_empty() {
            return Err(Error::Parse("empty direction family".into()));
        }
        match mode {
            "single" if states.len() == 1 => Ok(DirectionFamily::Single(states[0].clone())),
            "single" => Err(Error::InvalidArgument(
                "mode `single` takes exactly one direction".into(),
            )),
            "sum" => Ok(DirectionFamily::Sum(states)),
            "stack" => Ok(DirectionFamily::Stack(states)),
            other => Err(Error::Parse(format!("unknown direction mode `{other}`"))),
        }
    }

    pub fn members(&self) -> &[GradedVector] {
        match self {
            DirectionFamily::Single(v) => std::slice::from_ref(v),
            DirectionFamily::Sum(v) | DirectionFamily::Stack(v) => v,
        }
    }

    pub fn label(&self) -> String {
        let lits: Vec<String> = self.members().iter().map(GradedVector::literal).collect();
        match self {
            DirectionFamily::Single(v) => v.literal(),
            DirectionFamily::Sum(_) => format!("sum({})", lits.join(",")),
            DirectionFamily::Stack(_) => format!("stack({})", lits.join(",")),
        }
    }

    /// The summed operator as a list of maps (one map for `Single`/`Sum`, one
    /// per member for `Stack`), each with its weight.
    fn operators(&self) -> Result<Vec<(Vec<GradedVector>, u32)>> {
        let mut weights = Vec::new();
        for v in self.members() {
            weights.push(v.weight()?);
        }
        match self {
            DirectionFamily::Single(v) => Ok(vec![(vec![v.clone()], weights[0])]),
            DirectionFamily::Sum(v) => {
                if weights.iter().any(|w| *w != weights[0]) {
                    return Err(Error::InvalidArgument(
                        "summed directions must share one weight".into(),
                    ));
                }
                Ok(vec![(v.clone(), weights[0])])
            }
            DirectionFamily::Stack(v) => {
                Ok(v.iter().cloned().map(|s| vec![s]).zip(weights).collect())
            }
        }
    }
}

/// `Σ_i H(v_i@z_{n+1}) F` on the slice window.
fn image(
    members: &[GradedVector],
    window: (i64, i64),
    point: &str,
    f: &CorrelationFn,
) -> Result<MultiSeries<Rational>> {
    let mut total: Option<MultiSeries<Rational>> = None;
    for v in members {
        let value = reduce(&Insertion::new(v.clone(), point), window, f)?.value;
        total = Some(match total {
            None => value,
            Some(t) => t.add(&value)?,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("empty direction family".into()))
}

/// `δ^n` on a slice: column `j` is `H(v@z_{n+1})` applied to basis function `j`,
/// vectorized over `monomials` (the union of the images' supports).
#[derive(Clone, Debug)]
pub struct CoboundaryMatrix {
    pub direction: String,
    pub source: GradedSlice,
    pub target: GradedSlice,
    pub monomials: Vec<Vec<i64>>,
    pub matrix: RMatrix,
}

impl CoboundaryMatrix {
    pub fn to_json(&self) -> Value {
        json!({
            "direction": self.direction,
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "monomials": self.monomials,
            "matrix": matrix_json(&self.matrix),
        })
    }
}

pub fn matrix_json(m: &RMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| json!(m.row(i).iter().map(rat_str).collect::<Vec<_>>()))
            .collect(),
    )
}

fn image_values(
    members: &[GradedVector],
    slice: &GradedSlice,
    fns: &[CorrelationFn],
) -> Result<Vec<MultiSeries<Rational>>> {
    let point = point_label(slice.n + 1);
    let window = slice.point_window();
    fns.par_iter()
        .map(|f| image(members, window, &point, f))
        .collect()
}

/// Builds the exact matrix of `H(direction@z_{n+1})` on `slice`.
pub fn build_coboundary(direction: &GradedVector, slice: &GradedSlice) -> Result<CoboundaryMatrix> {
    let weight = direction.weight()?;
    let fns = slice.functions()?;
    let images = image_values(std::slice::from_ref(direction), slice, &fns)?;
    let monomials = monomial_index(&images);
    let matrix = vectorize(&monomials, &images.iter().collect::<Vec<_>>())?;
    Ok(CoboundaryMatrix {
        direction: direction.literal(),
        source: slice.clone(),
        target: slice.successor(weight)?,
        monomials,
        matrix,
    })
}

/// A slice with its basis functions and a basis of `C^n` chosen by first
/// non-zero pivoting over the tuples.
struct Level {
    slice: GradedSlice,
    fns: Vec<CorrelationFn>,
    pivots: Vec<usize>,
}

impl Level {
    fn new(slice: GradedSlice) -> Result<Self> {
        let fns = slice.functions()?;
        let values: Vec<&MultiSeries<Rational>> = fns.iter().map(|f| &f.value).collect();
        let index = monomial_index(values.iter().copied());
        let pivots = if index.is_empty() {
            Vec::new()
        } else {
            vectorize(&index, &values)?.rref().1
        };
        Ok(Level { slice, fns, pivots })
    }

    fn dim(&self) -> usize {
        self.pivots.len()
    }

    fn pivot_values(&self) -> Vec<&MultiSeries<Rational>> {
        self.pivots.iter().map(|&i| &self.fns[i].value).collect()
    }
}

/// `δ^n : C^n -> C^{n+1}` in the pivot bases, plus the definedness defect
/// `rank [V_n; W_n] - rank V_n` (non-zero iff the tuple-level map does not
/// descend to the span of the functions within the window).
struct Coboundary {
    matrix: RMatrix,
    defect: usize,
}

fn coboundary(members: &[GradedVector], source: &Level, target: &Level) -> Result<Coboundary> {
    let images = image_values(members, &source.slice, &source.fns)?;
    let tgt = target.pivot_values();
    let index = monomial_index(tgt.iter().copied().chain(images.iter()));
    let a = vectorize(&index, &tgt)?;
    let piv_images: Vec<&MultiSeries<Rational>> =
        source.pivots.iter().map(|&i| &images[i]).collect();
    let b = vectorize(&index, &piv_images)?;
    let matrix = solve_many(&a, &b)?.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "the coboundary image leaves C^{}_{} within the window",
            target.slice.n, target.slice.m
        ))
    })?;
    // Definedness defect over all tuples.
    let src_values: Vec<&MultiSeries<Rational>> = source.fns.iter().map(|f| &f.value).collect();
    let src_index = monomial_index(src_values.iter().copied());
    let img_index = monomial_index(images.iter());
    let v = vectorize(&src_index, &src_values)?;
    let w = vectorize(&img_index, &images.iter().collect::<Vec<_>>())?;
    let defect = rank_of(&v.vstack(&w)?) - rank_of(&v);
    Ok(Coboundary { matrix, defect })
}

// ---------------------------------------------------------------------------
// Chain condition
// ---------------------------------------------------------------------------

/// `H(x_{n+2}) H(x_{n+1})` on a slice.
#[derive(Clone, Debug)]
pub struct ChainReport {
    pub source_dim: usize,
    /// Dimension of the span of the intermediate images `H(x_{n+1}) F`.
    pub intermediate_dim: usize,
    /// Rows: monomials of the composite images; columns: the pivot basis of `C^n`.
    pub composite: RMatrix,
    pub composite_rank: usize,
    /// Basis of the certified part of the degenerate set (pivot coordinates).
    pub kernel: Vec<Vec<Rational>>,
    /// The same kernel as combinations of all basis tuples.
    pub kernel_tuples: Vec<Vec<Rational>>,
}

impl ChainReport {
    pub fn to_json(&self) -> Value {
        let vecs = |k: &[Vec<Rational>]| -> Value {
            Value::Array(
                k.iter()
                    .map(|v| json!(v.iter().map(rat_str).collect::<Vec<_>>()))
                    .collect(),
            )
        };
        json!({
            "source_dim": self.source_dim,
            "intermediate_dim": self.intermediate_dim,
            "composite_rank": self.composite_rank,
            "kernel_dim": self.kernel.len(),
            "kernel": vecs(&self.kernel),
            "kernel_tuples": vecs(&self.kernel_tuples),
        })
    }
}

/// The composite acts on functions: `H(x_{n+1}) F` is expressed in a pivot
/// basis of the span of the intermediate images, and `H(x_{n+2})` is applied to
/// those basis functions. In particular a function annihilated by the first
/// step is annihilated by the composite.
pub fn chain_condition_check(
    dir2: &GradedVector,
    dir1: &GradedVector,
    slice: &GradedSlice,
) -> Result<ChainReport> {
    let level = Level::new(slice.clone())?;
    let window = slice.point_window();
    let p1 = point_label(slice.n + 1);
    let p2 = point_label(slice.n + 2);
    let first: Vec<CorrelationFn> = level
        .pivots
        .par_iter()
        .map(|&i| reduce(&Insertion::new(dir1.clone(), &p1), window, &level.fns[i]))
        .collect::<Result<_>>()?;
    let values: Vec<&MultiSeries<Rational>> = first.iter().map(|g| &g.value).collect();
    let index = monomial_index(values.iter().copied());
    let v1 = vectorize(&index, &values)?;
    let mid = if index.is_empty() {
        Vec::new()
    } else {
        v1.rref().1
    };
    let basis = Matrix::from_columns(
        v1.rows(),
        &mid.iter().map(|&j| v1.column(j)).collect::<Vec<_>>(),
    )?;
    let coords = solve_many(&basis, &v1)?
        .ok_or_else(|| Error::InvalidArgument("intermediate basis".into()))?;
    let second: Vec<MultiSeries<Rational>> = mid
        .par_iter()
        .map(|&j| Ok(reduce(&Insertion::new(dir2.clone(), &p2), window, &first[j])?.value))
        .collect::<Result<_>>()?;
    let index2 = monomial_index(&second);
    let s2 = vectorize(&index2, &second.iter().collect::<Vec<_>>())?;
    let composite = if mid.is_empty() {
        Matrix::zeros(0, level.dim())
    } else {
        s2.mul(&coords)?
    };
    let kernel = kernel_of(&composite);
    let kernel_tuples = kernel
        .iter()
        .map(|v| {
            let mut t = vec![Rational::zero(); slice.len()];
            for (c, &p) in v.iter().zip(&level.pivots) {
                t[p] = c.clone();
            }
            t
        })
        .collect();
    Ok(ChainReport {
        source_dim: level.dim(),
        intermediate_dim: mid.len(),
        composite_rank: rank_of(&composite),
        composite,
        kernel,
        kernel_tuples,
    })
}

// ---------------------------------------------------------------------------
// Ranks
// ---------------------------------------------------------------------------

/// Dimensions on one slice. `p = dim ker δ^n - dim(im δ^{n-1} ∩ ker δ^n)`,
/// which equals `dim ker δ^n - rank δ^{n-1}` whenever the chain condition holds
/// (`chain_defect = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub genus: Genus,
    pub n: usize,
    pub m: u32,
    pub direction: String,
    pub point_window: (i64, i64),
    pub q_order: Option<i64>,
    /// `q_{n,m} = dim C^n_m` within the window.
    pub q: usize,
    /// `p_{n,m}`: dimension of the cohomology slice.
    pub p: usize,
    pub kernel_rank: usize,
    /// Rank of the outgoing map `δ^n`.
    pub image_rank: usize,
    /// Rank of the incoming map(s) `δ^{n-1}`.
    pub incoming_rank: usize,
    /// `rank(δ^n δ^{n-1})`: zero iff the incoming image lies in the kernel.
    pub chain_defect: usize,
    pub definedness_defect: usize,
}

impl RankReport {
    pub fn to_json(&self) -> Value {
        json!({
            "genus": self.genus.as_u8(),
            "n": self.n,
            "m": self.m,
            "direction": self.direction,
            "window": {"points": [self.point_window.0, self.point_window.1], "q_order": self.q_order},
            "q": self.q,
            "p": self.p,
            "kernel_rank": self.kernel_rank,
            "image_rank": self.image_rank,
            "incoming_rank": self.incoming_rank,
            "chain_defect": self.chain_defect,
            "definedness_defect": self.definedness_defect,
        })
    }
}

pub fn cohomology_rank(
    genus: Genus,
    n: usize,
    m: u32,
    family: &DirectionFamily,
    order: i64,
) -> Result<RankReport> {
    let ops = family.operators()?;
    let level = Level::new(GradedSlice::new(genus, n, m, order)?)?;
    let q_n = level.dim();
    let mut outgoing = Vec::new();
    let mut incoming = Vec::new();
    let mut defect = 0;
    for (members, w) in &ops {
        let next = Level::new(level.slice.successor(*w)?)?;
        let d = coboundary(members, &level, &next)?;
        defect = defect.max(d.defect);
        outgoing.push(d.matrix);
        if n > 0 && *w <= m {
            let prev = Level::new(GradedSlice::new(genus, n - 1, m - w, order)?)?;
            incoming.push(coboundary(members, &prev, &level)?.matrix);
        }
    }
    let out = vstack_all(&outgoing, q_n)?;
    let inc = hstack(&incoming, q_n)?;
    let image_rank = rank_of(&out);
    let kernel_rank = q_n - image_rank;
    let incoming_rank = rank_of(&inc);
    let chain_defect = if inc.cols() == 0 {
        0
    } else {
        rank_of(&out.mul(&inc)?)
    };
    let p = kernel_rank - (incoming_rank - chain_defect);
    Ok(RankReport {
        genus,
        n,
        m,
        direction: family.label(),
        point_window: level.slice.point_window(),
        q_order: (genus == Genus::One).then_some(order),
        q: q_n,
        p,
        kernel_rank,
        image_rank,
        incoming_rank,
        chain_defect,
        definedness_defect: defect,
    })
}

// ---------------------------------------------------------------------------
// Euler–Poincaré
// ---------------------------------------------------------------------------

/// One row of the Euler–Poincaré ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry {
    pub n: usize,
    /// Weight of the slice `C^n` on this line of the complex.
    pub weight: u32,
    /// `dim C^n`.
    pub q: usize,
    /// `dim S^n` of the restricted complex.
    pub restricted_dim: usize,
    /// `dim ker δ^n` (on `C^n`; it lies inside `S^n`).
    pub kernel: usize,
    /// Rank of `δ^n` on `S^n` (0 at the closed top level).
    pub image_out: usize,
    /// Rank of `δ^{n-1}` on `S^{n-1}`.
    pub image_in: usize,
    /// `p_n = kernel - image_in` on the restricted complex.
    pub p: usize,
    /// `rank(δ^{n+1} δ^n)` on `C^n` (0 where the top map is closed).
    pub chain_defect: usize,
    pub definedness_defect: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EulerReport {
    pub genus: Genus,
    pub m: u32,
    pub top: usize,
    pub direction: String,
    pub point_window: (i64, i64),
    pub q_order: Option<i64>,
    pub ledger: Vec<LedgerEntry>,
    /// `Σ (-1)^n (dim S^n - p_n)`.
    pub alternating_sum: i64,
    /// Each row satisfies `dim S^n - p_n = image_out + image_in` and the
    /// alternating sum of those telescopes to zero.
    pub telescoped: bool,
}

impl EulerReport {
    pub fn to_json(&self) -> Value {
        json!({
            "genus": self.genus.as_u8(),
            "m": self.m,
            "N": self.top,
            "direction": self.direction,
            "window": {"points": [self.point_window.0, self.point_window.1], "q_order": self.q_order},
            "alternating_sum": self.alternating_sum,
            "telescoped": self.telescoped,
            "ledger": self.ledger.iter().map(|e| json!({
                "n": e.n,
                "weight": e.weight,
                "q": e.q,
                "restricted_dim": e.restricted_dim,
                "kernel": e.kernel,
                "image_out": e.image_out,
                "image_in": e.image_in,
                "p": e.p,
                "chain_defect": e.chain_defect,
                "definedness_defect": e.definedness_defect,
            })).collect::<Vec<_>>(),
        })
    }
}

fn sign_of(n: usize) -> i64 {
    if n.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// The Euler–Poincaré ledger of the line `C^n = C^n_{m + n·wt}` for
/// `n = 0..=top`, with `δ^{top}` closed to zero.
pub fn euler_poincare(
    genus: Genus,
    m: u32,
    top: usize,
    family: &DirectionFamily,
    order: i64,
) -> Result<EulerReport> {
    let ops = family.operators()?;
    if matches!(family, DirectionFamily::Stack(_)) {
        return Err(Error::InvalidArgument(
            "a stacked family has no single target space; use `single` or `sum` for the ledger"
                .into(),
        ));
    }
    let (members, w) = &ops[0];
    let levels: Vec<Level> = (0..=top)
        .map(|n| Level::new(GradedSlice::new(genus, n, m + n as u32 * w, order)?))
        .collect::<Result<_>>()?;
    let mut maps = Vec::new();
    for n in 0..top {
        maps.push(coboundary(members, &levels[n], &levels[n + 1])?);
    }
    let dims: Vec<usize> = levels.iter().map(Level::dim).collect();
    let d = |n: usize| -> RMatrix {
        if n < top {
            maps[n].matrix.clone()
        } else {
            Matrix::zeros(0, dims[n])
        }
    };
    let mut ledger = Vec::new();
    let mut previous_out = 0usize;
    for n in 0..=top {
        let dn = d(n);
        let composite = if n < top {
            d(n + 1).mul(&dn)?
        } else {
            Matrix::zeros(0, dims[n])
        };
        // S^n = ker(δ^{n+1} δ^n)
        let s_basis = kernel_of(&composite);
        let restricted_dim = s_basis.len();
        let kernel = dims[n] - rank_of(&dn);
        let image_out = if s_basis.is_empty() {
            0
        } else {
            rank_of(&dn.mul(&Matrix::from_columns(dims[n], &s_basis)?)?)
        };
        debug_assert_eq!(image_out + kernel, restricted_dim);
        let image_in = previous_out;
        ledger.push(LedgerEntry {
            n,
            weight: m + n as u32 * w,
            q: dims[n],
            restricted_dim,
            kernel,
            image_out,
            image_in,
            p: kernel - image_in,
            chain_defect: rank_of(&composite),
            definedness_defect: if n < top { maps[n].defect } else { 0 },
        });
        previous_out = image_out;
    }
    let alternating_sum: i64 = ledger
        .iter()
        .map(|e| sign_of(e.n) * (e.restricted_dim as i64 - e.p as i64))
        .sum();
    let rows_ok = ledger
        .iter()
        .all(|e| e.restricted_dim - e.p == e.image_out + e.image_in);
    let telescope: i64 = ledger
        .iter()
        .map(|e| sign_of(e.n) * (e.image_out + e.image_in) as i64)
        .sum();
    let top_closed = ledger.last().is_some_and(|e| e.image_out == 0);
    let level0 = &levels[0].slice;
    Ok(EulerReport {
        genus,
        m,
        top,
        direction: family.label(),
        point_window: level0.point_window(),
        q_order: (genus == Genus::One).then_some(order),
        ledger,
        alternating_sum,
        telescoped: rows_ok && top_closed && telescope == 0,
    })
}

// ---------------------------------------------------------------------------
// Cluster mutation
// ---------------------------------------------------------------------------

/// A cluster seed `(v_n, Y(x_n), F_n(x_n))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub genus: Genus,
    pub order: i64,
    pub states: Vec<GradedVector>,
    /// The vertex-operator tuple, as insertions (outermost first).
    pub vertex_ops: Vec<Insertion>,
    pub function: CorrelationFn,
}

impl Seed {
    /// A seed whose states and vertex operators coincide, with the function
    /// from the brute-force oracle.
    pub fn new(genus: Genus, insertions: Vec<Insertion>, order: i64) -> Result<Self> {
        let function = oracle(genus, &insertions, order)?;
        Ok(Seed {
            genus,
            order,
            states: insertions.iter().map(|i| i.state.clone()).collect(),
            vertex_ops: insertions,
            function,
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "genus": self.genus.as_u8(),
            "states": self.states.iter().map(GradedVector::literal).collect::<Vec<_>>(),
            "vertex_ops": self.vertex_ops.iter().map(Insertion::spec).collect::<Vec<_>>(),
            "function": self.function.value.to_json(),
        })
    }
}

/// The data `(u, m, ξ)` of a mutation: `F_k(u(m)).v = G_k(u(m)).v = ξ u[m].v`.
#[derive(Clone, Debug, PartialEq)]
pub struct MutationRule {
    pub u: GradedVector,
    pub m: i64,
    pub xi: Rational,
}

impl MutationRule {
    /// The involutive setting: `u = 1`, `m = -1`, `ξ = ±1`.
    pub fn unit(xi: Rational) -> Self {
        MutationRule {
            u: GradedVector::vacuum(),
            m: -1,
            xi,
        }
    }
}

const AUX_POINT: &str = "w";

/// Drops the first variable, keeping its exponent-zero part.
fn constant_in_first(s: &MultiSeries<Rational>) -> Result<MultiSeries<Rational>> {
    let mut out = MultiSeries::new(&s.vars()[1..], &s.window()[1..])?;
    for (e, c) in s.terms() {
        if e[0] == 0 {
            out.accumulate(&e[1..], c.clone());
        }
    }
    Ok(out)
}

/// Mutation in direction `k` (1-based, outermost first):
/// `v_k -> ξ u[m] v_k` in both the state tuple and the vertex-operator tuple,
/// and `F -> ξ [H(u@w) F]_{w^0}` for the function.
pub fn cluster_mutate(seed: &Seed, k: usize, rule: &MutationRule) -> Result<Seed> {
    let n = seed.states.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "mutation direction {k} outside 1..={n}"
        )));
    }
    if seed.vertex_ops.iter().any(|i| i.point == AUX_POINT) {
        return Err(Error::InvalidArgument(format!(
            "point label `{AUX_POINT}` is reserved"
        )));
    }
    let mutate = |v: &GradedVector| square_bracket_mode(&rule.u, rule.m, v).scale(&rule.xi);
    let mut states = seed.states.clone();
    states[k - 1] = mutate(&states[k - 1]);
    let mut vertex_ops = seed.vertex_ops.clone();
    vertex_ops[k - 1].state = mutate(&vertex_ops[k - 1].state);
    let lifted = reduce(
        &Insertion::new(rule.u.clone(), AUX_POINT),
        (0, 0),
        &seed.function,
    )?;
    let mut function = seed.function.clone();
    function.insertions = vertex_ops.clone();
    function.value = constant_in_first(&lifted.value)?.scale(&rule.xi);
    Ok(Seed {
        genus: seed.genus,
        order: seed.order,
        states,
        vertex_ops,
        function,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvolutionReport {
    pub direction: usize,
    pub xi: Rational,
    pub states_restored: bool,
    pub vertex_ops_restored: bool,
    pub function_restored: bool,
    /// Whether the seed function is non-zero on its window.
    pub function_nonzero: bool,
    /// The mutated function equals the oracle at the mutated vertex operators.
    pub consistent: bool,
}

impl InvolutionReport {
    pub fn involutive(&self) -> bool {
        self.states_restored && self.vertex_ops_restored && self.function_restored
    }

    pub fn to_json(&self) -> Value {
        json!({
            "direction": self.direction,
            "xi": rat_str(&self.xi),
            "states_restored": self.states_restored,
            "vertex_ops_restored": self.vertex_ops_restored,
            "function_restored": self.function_restored,
            "function_nonzero": self.function_nonzero,
            "consistent": self.consistent,
            "involutive": self.involutive(),
        })
    }
}

/// Applies the mutation twice and compares with the seed componentwise.
pub fn involution_check(seed: &Seed, k: usize, rule: &MutationRule) -> Result<InvolutionReport> {
    let once = cluster_mutate(seed, k, rule)?;
    let twice = cluster_mutate(&once, k, rule)?;
    let direct = oracle(seed.genus, &once.vertex_ops, seed.order)?;
    Ok(InvolutionReport {
        direction: k,
        xi: rule.xi.clone(),
        states_restored: twice.states == seed.states,
        vertex_ops_restored: twice.vertex_ops == seed.vertex_ops,
        function_restored: twice.function.value == seed.function.value,
        function_nonzero: !seed.function.value.is_zero(),
        consistent: direct.value == once.function.value,
    })
}

/// Reproducible random seeds: genus 0 or 1, one to three Fock basis states of
/// weight one to three, a mutation direction and a sign `ξ = ±1`.
pub fn random_seeds(count: usize, rng_seed: u64) -> Result<Vec<(Seed, usize, Rational)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let genus = if rng.gen_bool(0.5) {
            Genus::Zero
        } else {
            Genus::One
        };
        let n = rng.gen_range(1..=3usize);
        let insertions: Vec<Insertion> = (0..n)
            .map(|i| {
                let parts = partitions(rng.gen_range(1..=3u32));
                let s = parts[rng.gen_range(0..parts.len())].clone();
                Insertion::new(GradedVector::basis(s), &point_label(n - i))
            })
            .collect();
        let k = rng.gen_range(1..=n);
        let xi = if rng.gen_bool(0.5) {
            Rational::one()
        } else {
            -Rational::one()
        };
        specs.push((genus, insertions, k, xi));
    }
    specs
        .into_par_iter()
        .map(|(genus, insertions, k, xi)| {
            let order = match genus {
                Genus::Zero => 6,
                Genus::One => 2,
            };
            Ok((Seed::new(genus, insertions, order)?, k, xi))
        })
        .collect()
}

/// Runs the involution check on `count` random seeds.
pub fn cluster_check(
    count: usize,
    rng_seed: u64,
    xi_override: Option<Rational>,
) -> Result<Vec<InvolutionReport>> {
    let seeds = random_seeds(count, rng_seed)?;
    seeds
        .par_iter()
        .map(|(seed, k, xi)| {
            let xi = xi_override.clone().unwrap_or_else(|| xi.clone());
            involution_check(seed, *k, &MutationRule::unit(xi))
        })
        .collect()
}
