//! The genus-g Schottky kernel layer: `ψ_p^{(0)}`, the `p`/`q` vectors, the
//! moment matrix `R` and its Neumann inverse, `ψ_p`, `χ_a`, `θ_a`, the sewn
//! genus-g n-point sums and one genus-g reduction step.
//!
//! The Schottky points `w_{±a}` and all insertion points are exact rationals,
//! so every kernel is a series in the multipliers only. Internally the
//! variables are `s_a = ρ_a^{1/2}` (exponents doubled); exported series are
//! checked to carry integer powers of `ρ_a`.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::reduction::genus0_wick;
use crate::scalar::{binomial, pow_i, q, sign, Rational};
use crate::series::MultiSeries;
use crate::voa::{dual_basis, is_quasi_primary, vertex_mode, Bracket, GradedVector};

/// A Laurent polynomial `Σ c_k x^k`.
pub type LaurentPoly = BTreeMap<i64, Rational>;

/// Internal series type in `(s_1, ..., s_g)`, `s_a = ρ_a^{1/2}`.
pub type SSeries = MultiSeries<Rational>;

fn laurent_divided_derivative(f: &LaurentPoly, m: i64, x: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for (&k, c) in f {
        let b = binomial(k, m);
        if !b.is_zero() {
            acc += c * b * pow_i(x, k - m);
        }
    }
    acc
}

/// Parses a Laurent polynomial such as `1/x + 2 - 3x^2` (variable `x`).
pub fn parse_laurent(s: &str) -> Result<LaurentPoly> {
    let mut out = LaurentPoly::new();
    let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    // split before every sign that is not part of an exponent
    let mut terms = vec![String::new()];
    let mut prev = '^';
    for ch in cleaned.chars() {
        if (ch == '+' || ch == '-') && prev != '^' {
            terms.push(String::new());
        }
        if ch != '+' {
            terms.last_mut().expect("non-empty").push(ch);
        }
        prev = ch;
    }
    for term in terms.iter().filter(|t| !t.is_empty()) {
        let (coeff, exp) = if let Some(den) = term
            .strip_suffix("/x")
            .or_else(|| term.strip_suffix("/x^1"))
        {
            (den.to_string(), -1)
        } else if let Some((num, e)) = term.split_once("/x^") {
            (
                num.to_string(),
                -e.parse::<i64>().map_err(|_| Error::Parse(term.into()))?,
            )
        } else if let Some((c, e)) = term.split_once("x^") {
            (
                c.trim_end_matches('*').to_string(),
                e.parse::<i64>().map_err(|_| Error::Parse(term.into()))?,
            )
        } else if let Some(c) = term.strip_suffix('x') {
            (c.trim_end_matches('*').to_string(), 1)
        } else {
            (term.to_string(), 0)
        };
        let c = match coeff.as_str() {
            "" => Rational::one(),
            "-" => -Rational::one(),
            other => crate::scalar::parse_rat(other)
                .ok_or_else(|| Error::Parse(format!("bad coefficient in `{term}`")))?,
        };
        *out.entry(exp).or_insert_with(Rational::zero) += c;
    }
    out.retain(|_, c| !c.is_zero());
    Ok(out)
}

/// Genus-g Schottky data at exact rational points.
#[derive(Clone, Debug, PartialEq)]
pub struct SchottkyData {
    pub genus: usize,
    /// `w_a` for `a = 1..g`.
    pub w_plus: Vec<Rational>,
    /// `w_{-a}` for `a = 1..g`.
    pub w_minus: Vec<Rational>,
    /// `K`: results are exact through `ρ_a^K` in every multiplier.
    pub rho_order: i64,
    /// Moment indices run over `0..=N`.
    pub matrix_cutoff: usize,
    /// `f_ℓ`, `ℓ = 0..`; missing entries are zero.
    pub f: Vec<LaurentPoly>,
}

impl SchottkyData {
    /// Validates distinct points and `N >= 2K`.
    pub fn new(
        w_plus: Vec<Rational>,
        w_minus: Vec<Rational>,
        rho_order: i64,
        matrix_cutoff: usize,
    ) -> Result<Self> {
        if w_plus.len() != w_minus.len() {
            return Err(Error::DimensionMismatch(
                "need one w_{-a} for each w_a".into(),
            ));
        }
        if rho_order < 0 || (matrix_cutoff as i64) < 2 * rho_order {
            return Err(Error::InvalidArgument(format!(
                "need rho order K >= 0 and matrix cutoff N >= 2K (K = {rho_order}, N = {matrix_cutoff})"
            )));
        }
        let all: Vec<&Rational> = w_plus.iter().chain(&w_minus).collect();
        for (i, a) in all.iter().enumerate() {
            if all[..i].contains(a) {
                return Err(Error::InvalidArgument(format!(
                    "Schottky point {a} repeated"
                )));
            }
        }
        Ok(SchottkyData {
            genus: w_plus.len(),
            w_plus,
            w_minus,
            rho_order,
            matrix_cutoff,
            f: Vec::new(),
        })
    }

    /// Default points `w_a = 2a + 1`, `w_{-a} = -(2a + 1) + 1/2` and `N = 2K`.
    pub fn standard(genus: usize, rho_order: i64) -> Result<Self> {
        let w_plus = (1..=genus as i64).map(|a| q(2 * a + 1)).collect();
        let w_minus = (1..=genus as i64)
            .map(|a| q(-(2 * a + 1)) + Rational::new(1.into(), 2.into()))
            .collect();
        Self::new(w_plus, w_minus, rho_order, (2 * rho_order).max(1) as usize)
    }

    pub fn with_f(mut self, f: Vec<LaurentPoly>) -> Self {
        self.f = f;
        self
    }

    fn widened(&self, extra: i64) -> Self {
        let k = self.rho_order + extra;
        SchottkyData {
            rho_order: k,
            matrix_cutoff: self.matrix_cutoff.max(2 * k as usize),
            ..self.clone()
        }
    }

    /// `w_a` for `a ∈ {±1, ..., ±g}`.
    pub fn w(&self, a: i64) -> &Rational {
        let i = (a.unsigned_abs() - 1) as usize;
        if a > 0 {
            &self.w_plus[i]
        } else {
            &self.w_minus[i]
        }
    }

    /// Is `x` one of the Schottky points?
    pub fn is_schottky_point(&self, x: &Rational) -> bool {
        self.w_plus.contains(x) || self.w_minus.contains(x)
    }

    fn s_vars(&self) -> Vec<String> {
        (1..=self.genus).map(|a| format!("s{a}")).collect()
    }

    /// Exported variable names `rho1, ..., rhog`.
    pub fn rho_vars(&self) -> Vec<String> {
        (1..=self.genus).map(|a| format!("rho{a}")).collect()
    }

    /// The zero series.
    pub fn zero(&self) -> SSeries {
        MultiSeries::new(&self.s_vars(), &vec![(0, 2 * self.rho_order); self.genus])
            .expect("valid window")
    }

    /// `c s_a^e` (for `a = 0` the constant `c`).
    fn monomial(&self, a: usize, e: i64, c: Rational) -> SSeries {
        let mut out = self.zero();
        let mut ex = vec![0; self.genus];
        if a > 0 {
            ex[a - 1] = e;
        }
        out.accumulate(&ex, c);
        out
    }

    fn constant(&self, c: Rational) -> SSeries {
        self.monomial(0, 0, c)
    }

    /// Re-expresses a series in `s_a` as one in `ρ_a`.
    pub fn export(&self, v: &SSeries) -> Result<MultiSeries<Rational>> {
        let window: Vec<(i64, i64)> = v
            .window()
            .iter()
            .map(|&(lo, hi)| (-((-lo).div_euclid(2)), hi.div_euclid(2)))
            .collect();
        let mut out = MultiSeries::new(&self.rho_vars(), &window)?;
        for (e, c) in v.terms() {
            if e.iter().any(|x| x % 2 != 0) {
                return Err(Error::HalfIntegerExponent(format!("rho^({:?}/2)", e)));
            }
            out.accumulate(&e.iter().map(|x| x / 2).collect::<Vec<_>>(), c.clone());
        }
        Ok(out)
    }
}

/// `∂_x^{(m)} ∂_y^{(n)} ψ_p^{(0)}(x, y)` at exact points (divided derivatives),
/// `ψ_p^{(0)}(x, y) = 1/(x - y) + Σ_ℓ f_ℓ(x) y^ℓ`. With `singular = false` the
/// `1/(x - y)` part is omitted (this is `𝔈_m^n(y)` at `x = y`).
pub fn psi0_derivative(
    m: i64,
    n: i64,
    f: &[LaurentPoly],
    x: &Rational,
    y: &Rational,
    singular: bool,
) -> Rational {
    let mut acc = Rational::zero();
    if singular {
        acc += sign(m) * binomial(m + n, m) * pow_i(&(x - y), -m - n - 1);
    }
    for (l, fl) in f.iter().enumerate() {
        let b = binomial(l as i64, n);
        if !b.is_zero() {
            acc += laurent_divided_derivative(fl, m, x) * b * pow_i(y, l as i64 - n);
        }
    }
    acc
}

/// `𝔈_m^n(y) = Σ_ℓ ∂^{(m)} f_ℓ(y) ∂^{(n)} y^ℓ`.
pub fn frak_e(m: i64, n: i64, f: &[LaurentPoly], y: &Rational) -> Rational {
    psi0_derivative(m, n, f, y, y, false)
}

fn check_f(p: i64, f: &[LaurentPoly]) -> Result<()> {
    if p < 1 {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    if f.len() as i64 > 2 * p - 1 {
        return Err(Error::InvalidArgument(format!(
            "at most 2p - 1 = {} functions f_l",
            2 * p - 1
        )));
    }
    Ok(())
}

/// `ψ_p^{(0)}(x, y)` expanded for `|x| > |y|` in the window `[(x_lo, x_hi), (0, y_hi)]`.
pub fn psi0(p: i64, f: &[LaurentPoly], window: [(i64, i64); 2]) -> Result<MultiSeries<Rational>> {
    check_f(p, f)?;
    let mut out = MultiSeries::new(&["x", "y"], &window)?;
    for i in 0..=window[1].1 {
        out.accumulate(&[-1 - i, i], Rational::one());
    }
    for (l, fl) in f.iter().enumerate() {
        for (&k, c) in fl {
            out.accumulate(&[k, l as i64], c.clone());
        }
    }
    Ok(out)
}

/// Square matrix over the index set `(a, m)`, `a ∈ {1, -1, 2, -2, ...}`,
/// `m ∈ 0..=N`.
#[derive(Clone, Debug, PartialEq)]
struct IndexedMatrix {
    dim: usize,
    entries: Vec<SSeries>,
}

impl IndexedMatrix {
    fn get(&self, i: usize, j: usize) -> &SSeries {
        &self.entries[i * self.dim + j]
    }

    fn mul(&self, other: &Self, data: &SchottkyData) -> Result<Self> {
        let d = self.dim;
        let entries = (0..d * d)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / d, k % d);
                let mut acc = data.zero();
                for l in 0..d {
                    let (a, b) = (self.get(i, l), other.get(l, j));
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc.add(&a.mul(b)?)?;
                    }
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexedMatrix { dim: d, entries })
    }

    fn add(&self, other: &Self) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(IndexedMatrix {
            dim: self.dim,
            entries,
        })
    }

    fn is_zero(&self) -> bool {
        self.entries.iter().all(MultiSeries::is_zero)
    }

    fn identity(dim: usize, data: &SchottkyData) -> Self {
        let mut entries = vec![data.zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = data.constant(Rational::one());
        }
        IndexedMatrix { dim, entries }
    }
}

/// The kernel system for a fixed weight `p` and Schottky data.
#[derive(Clone, Debug)]
pub struct SchottkyKernel {
    p: i64,
    data: SchottkyData,
    r: IndexedMatrix,
    r_tilde: IndexedMatrix,
    neumann: IndexedMatrix,
}

impl SchottkyKernel {
    pub fn new(p: i64, data: &SchottkyData) -> Result<Self> {
        check_f(p, &data.f)?;
        let data = data.clone();
        let n1 = data.matrix_cutoff + 1;
        let dim = 2 * data.genus * n1;
        let shift = (2 * p - 1) as usize;
        let build = |col_shift: usize| -> Result<IndexedMatrix> {
            let entries = (0..dim * dim)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k / dim, k % dim);
                    let (a, m) = Self::unindex(i, n1);
                    let (b, n) = Self::unindex(j, n1);
                    Self::r_entry(p, &data, a, m, b, n + col_shift as i64)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(IndexedMatrix { dim, entries })
        };
        let r = build(0)?;
        let r_tilde = build(shift)?;
        if r_tilde
            .entries
            .iter()
            .any(|e| e.terms().any(|(ex, _)| ex.iter().sum::<i64>() <= 0))
        {
            return Err(Error::NeumannDivergent);
        }
        let mut neumann = IndexedMatrix::identity(dim, &data);
        let mut power = r_tilde.clone();
        for _ in 0..=(2 * data.rho_order * data.genus as i64) {
            if power.is_zero() {
                break;
            }
            neumann = neumann.add(&power)?;
            power = power.mul(&r_tilde, &data)?;
        }
        Ok(SchottkyKernel {
            p,
            data,
            r,
            r_tilde,
            neumann,
        })
    }

    pub fn p(&self) -> i64 {
        self.p
    }

    pub fn data(&self) -> &SchottkyData {
        &self.data
    }

    /// Handle labels in index order: `1, -1, 2, -2, ...`.
    fn label(pos: usize) -> i64 {
        let h = (pos / 2 + 1) as i64;
        if pos.is_multiple_of(2) {
            h
        } else {
            -h
        }
    }

    fn unindex(i: usize, n1: usize) -> (i64, i64) {
        (Self::label(i / n1), (i % n1) as i64)
    }

    fn index(&self, a: i64, m: i64) -> usize {
        let pos = 2 * (a.unsigned_abs() as usize - 1) + usize::from(a < 0);
        pos * (self.data.matrix_cutoff + 1) + m as usize
    }

    fn dim(&self) -> usize {
        self.r.dim
    }

    /// `R_{ab}(m, n)` for any `m, n >= 0`.
    fn r_entry(p: i64, data: &SchottkyData, a: i64, m: i64, b: i64, n: i64) -> Result<SSeries> {
        let (ha, hb) = (a.unsigned_abs() as usize, b.unsigned_abs() as usize);
        let val = if a == -b {
            sign(p) * frak_e(m, n, &data.f, data.w(-a))
        } else {
            sign(p) * psi0_derivative(m, n, &data.f, data.w(-a), data.w(b), true)
        };
        let mut out = data.zero();
        let mut e = vec![0; data.genus];
        e[ha - 1] += m + 1;
        e[hb - 1] += n;
        out.accumulate(&e, val);
        Ok(out)
    }

    /// `R_{ab}(m, n)` (`m, n <= N`).
    pub fn r(&self, a: i64, m: i64, b: i64, n: i64) -> &SSeries {
        self.r.get(self.index(a, m), self.index(b, n))
    }

    /// `R̃_{ab}(m, n) = R_{ab}(m, n + 2p - 1)`.
    pub fn r_tilde(&self, a: i64, m: i64, b: i64, n: i64) -> &SSeries {
        self.r_tilde.get(self.index(a, m), self.index(b, n))
    }

    /// `(I - R̃) Σ_k R̃^k`, which must be the identity to the truncation order.
    pub fn neumann_check(&self) -> Result<bool> {
        let id = IndexedMatrix::identity(self.dim(), &self.data);
        let minus = IndexedMatrix {
            dim: self.dim(),
            entries: self.r_tilde.entries.iter().map(MultiSeries::neg).collect(),
        };
        let left = id.add(&minus)?.mul(&self.neumann, &self.data)?;
        let right = self.neumann.mul(&id.add(&minus)?, &self.data)?;
        Ok(left == id && right == id)
    }

    /// `p_a(x, m) = ρ_a^{m/2} ∂^{(0,m)} ψ^{(0)}(x, w_a)`.
    fn p_entry(&self, x: &Rational, a: i64, m: i64) -> SSeries {
        let v = psi0_derivative(0, m, &self.data.f, x, self.data.w(a), true);
        self.data.monomial(a.unsigned_abs() as usize, m, v)
    }

    /// `p̃(x) = p(x) Δ`, i.e. `p̃_a(x, m) = p_a(x, m + 2p - 1)`.
    fn p_tilde(&self, x: &Rational) -> Vec<SSeries> {
        (0..self.dim())
            .map(|i| {
                let (a, m) = Self::unindex(i, self.data.matrix_cutoff + 1);
                self.p_entry(x, a, m + 2 * self.p - 1)
            })
            .collect()
    }

    /// `∂_y^{(j)} q_a(y; m) = (-1)^p ρ_a^{(m+1)/2} ∂^{(m,j)} ψ^{(0)}(w_{-a}, y)`.
    fn q_column(&self, y: &Rational, j: i64) -> Vec<SSeries> {
        (0..self.dim())
            .map(|i| {
                let (a, m) = Self::unindex(i, self.data.matrix_cutoff + 1);
                let v =
                    sign(self.p) * psi0_derivative(m, j, &self.data.f, self.data.w(-a), y, true);
                self.data.monomial(a.unsigned_abs() as usize, m + 1, v)
            })
            .collect()
    }

    fn row_times(&self, v: &[SSeries], m: &IndexedMatrix) -> Result<Vec<SSeries>> {
        (0..m.dim)
            .into_par_iter()
            .map(|j| {
                let mut acc = self.data.zero();
                for (i, x) in v.iter().enumerate() {
                    let e = m.get(i, j);
                    if !x.is_zero() && !e.is_zero() {
                        acc = acc.add(&x.mul(e)?)?;
                    }
                }
                Ok(acc)
            })
            .collect()
    }

    fn dot(&self, v: &[SSeries], w: &[SSeries]) -> Result<SSeries> {
        let mut acc = self.data.zero();
        for (a, b) in v.iter().zip(w) {
            if !a.is_zero() && !b.is_zero() {
                acc = acc.add(&a.mul(b)?)?;
            }
        }
        Ok(acc)
    }

    /// `∂_y^{(j)} ψ_p(x, y)` with `ψ_p = ψ^{(0)} + p̃(x)(I - R̃)^{-1} q(y)`.
    pub fn psi_dy(&self, j: i64, x: &Rational, y: &Rational) -> Result<SSeries> {
        let base = self
            .data
            .constant(psi0_derivative(0, j, &self.data.f, x, y, true));
        let pn = self.row_times(&self.p_tilde(x), &self.neumann)?;
        base.add(&self.dot(&pn, &self.q_column(y, j))?)
    }

    /// `ψ_p(x, y)`.
    pub fn psi(&self, x: &Rational, y: &Rational) -> Result<SSeries> {
        self.psi_dy(0, x, y)
    }

    /// `χ_a(x; ℓ) = ρ_a^{-ℓ/2} (p(x) + p̃(x)(I - R̃)^{-1} R)_a(ℓ)` for `ℓ = 0..=2p-2`.
    pub fn chi(&self, a: i64, x: &Rational) -> Result<Vec<SSeries>> {
        let pnr = self.row_times(&self.row_times(&self.p_tilde(x), &self.neumann)?, &self.r)?;
        let h = a.unsigned_abs() as usize;
        (0..=(2 * self.p - 2))
            .map(|l| {
                let mut shift = vec![0; self.data.genus];
                shift[h - 1] = -l;
                Ok(self
                    .p_entry(x, a, l)
                    .add(&pnr[self.index(a, l)])?
                    .shift(&shift))
            })
            .collect()
    }

    /// `θ_a(x; ℓ) = χ_a(x; ℓ) + (-1)^p ρ_a^{p-1-ℓ} χ_{-a}(x; 2p-2-ℓ)` for `a = 1..g`.
    pub fn theta(&self, a: i64, x: &Rational) -> Result<Vec<SSeries>> {
        if a < 1 || a as usize > self.data.genus {
            return Err(Error::InvalidArgument(format!(
                "theta needs 1 <= a <= g, got {a}"
            )));
        }
        let plus = self.chi(a, x)?;
        let minus = self.chi(-a, x)?;
        let top = 2 * self.p - 2;
        (0..=top)
            .map(|l| {
                let mut shift = vec![0; self.data.genus];
                shift[a as usize - 1] = 2 * (self.p - 1 - l);
                plus[l as usize].add(&minus[(top - l) as usize].shift(&shift).scale(&sign(self.p)))
            })
            .collect()
    }
}

/// Replaces the state at one sewing point `w_h` by `modify(b_h)`.
type StateModifier<'a> = (usize, &'a (dyn Fn(&GradedVector) -> GradedVector + Sync));
/// A sewn-basis choice: one `(dual, state)` pair per handle.
type HandleStates = Vec<(GradedVector, GradedVector)>;

/// A genus-g sewn sum `Σ_{b+} Π_a ρ_a^{wt b_a} Z^{(0)}(v, y; b̄_a@w_{-a}, b_a@w_a)`,
/// optionally with the state at `w_h` replaced by `modify(b_h)`.
fn sewn_sum(
    data: &SchottkyData,
    insertions: &[(GradedVector, Rational)],
    modify: Option<StateModifier<'_>>,
) -> Result<SSeries> {
    for (_, y) in insertions {
        if data.is_schottky_point(y) {
            return Err(Error::InvalidArgument(format!(
                "insertion point {y} coincides with a Schottky point"
            )));
        }
    }
    let k = data.rho_order;
    let mut bases = Vec::new();
    for r in 0..=k {
        bases.push(dual_basis(r as u32, &Rational::one(), Bracket::Round)?);
    }
    // all weight tuples (k_1, ..., k_g)
    let mut tuples: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..data.genus {
        tuples = tuples
            .into_iter()
            .flat_map(|t| {
                (0..=k).map(move |r| {
                    let mut t = t.clone();
                    t.push(r);
                    t
                })
            })
            .collect();
    }
    let mut jobs: Vec<(Vec<i64>, HandleStates)> = Vec::new();
    for t in tuples {
        let mut choices: Vec<HandleStates> = vec![Vec::new()];
        for &r in &t {
            let mut next = Vec::new();
            for c in &choices {
                for pair in &bases[r as usize] {
                    let mut c = c.clone();
                    c.push(pair.clone());
                    next.push(c);
                }
            }
            choices = next;
        }
        jobs.extend(choices.into_iter().map(|c| (t.clone(), c)));
    }
    let rows = jobs
        .par_iter()
        .map(|(t, pairs)| {
            let mut ins = insertions.to_vec();
            for (h, (b, bbar)) in pairs.iter().enumerate() {
                let b = match modify {
                    Some((mh, f)) if mh == h + 1 => f(b),
                    _ => b.clone(),
                };
                if b.is_zero() {
                    return Ok(None);
                }
                ins.push((bbar.clone(), data.w_minus[h].clone()));
                ins.push((b, data.w_plus[h].clone()));
            }
            let v = genus0_wick(&ins)?;
            Ok((!v.is_zero()).then(|| (t.iter().map(|r| 2 * r).collect::<Vec<_>>(), v)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = data.zero();
    for (e, v) in rows.into_iter().flatten() {
        out.accumulate(&e, v);
    }
    Ok(out)
}

/// The genus-g formal n-point function `Z^{(g)}(v, y)` through `ρ_a^K`, in `(s_a)`.
pub fn genus_g_npoint_s(
    insertions: &[(GradedVector, Rational)],
    data: &SchottkyData,
) -> Result<SSeries> {
    sewn_sum(data, insertions, None)
}

/// The genus-g formal n-point function `Z^{(g)}(v, y)` through `ρ_a^K`, in `(ρ_a)`.
pub fn genus_g_npoint(
    insertions: &[(GradedVector, Rational)],
    data: &SchottkyData,
) -> Result<MultiSeries<Rational>> {
    data.export(&genus_g_npoint_s(insertions, data)?)
}

/// The genus-g partition function (zero-point function).
pub fn genus_g_partition(data: &SchottkyData) -> Result<MultiSeries<Rational>> {
    genus_g_npoint(&[], data)
}

/// The two parts of one genus-g reduction step.
#[derive(Clone, Debug, PartialEq)]
pub struct GenusGReduction {
    /// `Σ_a Σ_ℓ θ_a(x; ℓ) o_a(ℓ)`.
    pub h1: MultiSeries<Rational>,
    /// `Σ_k Σ_j ∂_y^{(j)} ψ_p(x, y_k) Z^{(g)}(.. u(j)v_k ..)`.
    pub h2: MultiSeries<Rational>,
    /// `h1 + h2`: the (n+1)-point function predicted by the recursion.
    pub total: MultiSeries<Rational>,
}

/// One genus-g reduction step: the (n+1)-point function with the
/// quasi-primary `direction = (u, x)` added, expressed through n-point
/// functions. A weight-zero direction returns the n-point function itself.
pub fn genus_g_reduce(
    direction: &(GradedVector, Rational),
    insertions: &[(GradedVector, Rational)],
    data: &SchottkyData,
) -> Result<GenusGReduction> {
    let (u, x) = direction;
    let p = i64::from(u.weight()?);
    if !is_quasi_primary(u) {
        return Err(Error::NotQuasiPrimary(u.literal()));
    }
    if insertions.iter().any(|(_, y)| y == x) || data.is_schottky_point(x) {
        return Err(Error::InvalidArgument(format!(
            "direction point {x} is not distinct"
        )));
    }
    if p == 0 {
        let c = u.vacuum_coeff();
        let z = genus_g_npoint(insertions, data)?.scale(&c);
        let zero = MultiSeries::new(z.vars(), z.window())?;
        return Ok(GenusGReduction {
            h1: zero,
            h2: z.clone(),
            total: z,
        });
    }
    // θ has poles down to ρ^{-(p-1)}: work with p - 1 extra orders.
    let wide = data.widened(p - 1);
    let kernel = SchottkyKernel::new(p, &wide)?;
    let mut h1 = wide.zero();
    let mut w = h1.window().to_vec();
    for win in w.iter_mut() {
        win.0 = -2 * (p - 1);
    }
    h1 = MultiSeries::new(h1.vars(), &w)?;
    for a in 1..=data.genus {
        let theta = kernel.theta(a as i64, x)?;
        for (l, th) in theta.iter().enumerate() {
            let act = move |b: &GradedVector| vertex_mode(u, l as i64, b);
            let o = sewn_sum(&wide, insertions, Some((a, &act)))?;
            if !o.is_zero() {
                h1 = h1.add(&th.mul(&o)?)?;
            }
        }
    }
    let mut h2 = wide.zero();
    for (k, (v, y)) in insertions.iter().enumerate() {
        let top = i64::from(u.max_weight()) + i64::from(v.max_weight());
        for j in 0..=top {
            let uv = vertex_mode(u, j, v);
            if uv.is_zero() {
                continue;
            }
            let mut ins = insertions.to_vec();
            ins[k].0 = uv;
            let z = sewn_sum(&wide, &ins, None)?;
            if !z.is_zero() {
                h2 = h2.add(&kernel.psi_dy(j, x, y)?.mul(&z)?)?;
            }
        }
    }
    let clip = |s: &SSeries| -> Result<MultiSeries<Rational>> {
        if s.terms().any(|(e, _)| e.iter().any(|&x| x < 0)) {
            return Err(Error::InsufficientOrder(
                "negative powers of rho survived the reduction".into(),
            ));
        }
        data.export(&s.restrict(&vec![(0, 2 * data.rho_order); data.genus])?)
    };
    let (h1, h2) = (clip(&h1)?, clip(&h2)?);
    let total = h1.add(&h2)?;
    Ok(GenusGReduction { h1, h2, total })
}

/// JSON for a kernel value: series in the multipliers plus the form-weight tag.
pub fn kernel_json(value: &MultiSeries<Rational>, form: &str) -> Value {
    json!({"form": form, "value": value.to_json()})
}
