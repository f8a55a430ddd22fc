//! Genus-two ε-sewing of two tori: the partition function, the truncated
//! infinite-matrix kernels (Λ, Γ, Δ, Π, ℝ, ℚ, ℙ), the generalized
//! Weierstrass functions `𝒫_{j+1}(p; x, y)` and one genus-two reduction step.
//!
//! Internally every quantity is a [`MultiSeries`] in `(x, y, s, q1, q2)` with
//! `s = ε^{1/2}`; exported results are checked to carry only even powers of
//! `s` and are re-expressed in `eps`. Variables a series does not depend on
//! carry the window `[0, EXACT]`, so they never limit the precision of a
//! product.

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::elliptic::{eisenstein, weierstrass_p};
use crate::error::{Error, Result};
use crate::reduction::{central_shift, mode_trace, Insertion};
use crate::scalar::{binomial, q, sign, Rational};
use crate::series::{MultiSeries, Series};
use crate::voa::{dual_basis, dual_of_basis, square_bracket_mode, Bracket, GradedVector};

/// Window upper end for variables a series is exactly independent of.
pub const EXACT: i64 = 1 << 40;

const VARS: [&str; 5] = ["x", "y", "s", "q1", "q2"];
const X: usize = 0;
const Y: usize = 1;
const S: usize = 2;

/// Internal series type in `(x, y, s = ε^{1/2}, q1, q2)`.
pub type G2Series = MultiSeries<Rational>;

/// One of the two sewn tori.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chart {
    One,
    Two,
}

impl Chart {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Chart::One),
            2 => Ok(Chart::Two),
            _ => Err(Error::InvalidArgument(format!(
                "chart must be 1 or 2, got {i}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Chart::One => 1,
            Chart::Two => 2,
        }
    }

    /// The other torus `ā`.
    pub fn other(self) -> Self {
        match self {
            Chart::One => Chart::Two,
            Chart::Two => Chart::One,
        }
    }

    fn q_var(self) -> usize {
        match self {
            Chart::One => 3,
            Chart::Two => 4,
        }
    }
}

/// Truncation data for the sewing `(τ1, τ2, ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SewingModuli {
    pub q1_order: i64,
    pub q2_order: i64,
    /// `R`: results are exact through `ε^R`.
    pub eps_order: i64,
    /// `N`: infinite matrices are truncated to indices `1..=N`.
    pub matrix_cutoff: usize,
}

impl SewingModuli {
    /// Validates `N >= 2R`, which guarantees that no matrix entry beyond the
    /// cutoff can contribute at `ε^{<=R}` (entries carry `ε^{(m+n)/2}`).
    pub fn new(q1_order: i64, q2_order: i64, eps_order: i64, matrix_cutoff: usize) -> Result<Self> {
        if q1_order < 0 || q2_order < 0 || eps_order < 0 {
            return Err(Error::InvalidArgument(
                "sewing orders must be non-negative".into(),
            ));
        }
        if (matrix_cutoff as i64) < 2 * eps_order || matrix_cutoff == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix cutoff N = {matrix_cutoff} must be at least 2R = {} and positive",
                2 * eps_order
            )));
        }
        Ok(SewingModuli {
            q1_order,
            q2_order,
            eps_order,
            matrix_cutoff,
        })
    }

    pub fn q_order(&self, a: Chart) -> i64 {
        match a {
            Chart::One => self.q1_order,
            Chart::Two => self.q2_order,
        }
    }

    fn s_order(&self) -> i64 {
        2 * self.eps_order
    }

    fn const_window(&self) -> Vec<(i64, i64)> {
        vec![
            (0, EXACT),
            (0, EXACT),
            (0, self.s_order()),
            (0, self.q1_order),
            (0, self.q2_order),
        ]
    }

    /// The zero series of this truncation.
    pub fn zero(&self) -> G2Series {
        MultiSeries::new(&VARS, &self.const_window()).expect("valid window")
    }

    /// The constant `c`.
    pub fn constant(&self, c: Rational) -> G2Series {
        let mut z = self.zero();
        z.accumulate(&[0; 5], c);
        z
    }

    /// The same truncation with `R` raised by `extra` (and `N` raised to match).
    fn widened(&self, extra: i64) -> Self {
        let r = self.eps_order + extra;
        SewingModuli {
            eps_order: r,
            matrix_cutoff: self.matrix_cutoff.max(2 * r as usize),
            ..*self
        }
    }

    /// A q-series placed on torus `a` at `s^s_exp`.
    fn q_series(&self, f: &Series<Rational>, a: Chart, s_exp: i64) -> G2Series {
        let mut out = self.zero();
        let mut e = [0i64; 5];
        e[S] = s_exp;
        for (k, c) in f.terms() {
            e[a.q_var()] = k;
            out.accumulate(&e, c.clone());
        }
        out
    }

    /// `s^s_exp E_k(τ_a)`, with `E_k = 0` for odd `k` (including `k = 1`).
    fn eisenstein(&self, k: i64, a: Chart, s_exp: i64) -> Result<G2Series> {
        if k < 2 || k % 2 == 1 {
            return Ok(self.zero());
        }
        Ok(self.q_series(&eisenstein(k, self.q_order(a))?, a, s_exp))
    }

    /// `P_m(·, τ_a)` in variable `var` (`X` or `Y`) with upper order `order`,
    /// multiplied by `s^s_exp`.
    fn weierstrass(
        &self,
        m: i64,
        a: Chart,
        var: usize,
        order: i64,
        s_exp: i64,
    ) -> Result<G2Series> {
        let p = weierstrass_p(m, order, self.q_order(a))?.expansion;
        let mut window = self.const_window();
        window[var] = (-m, order);
        let mut out = MultiSeries::new(&VARS, &window)?;
        let mut e = [0i64; 5];
        e[S] = s_exp;
        for (k, c) in p.terms() {
            e[var] = k[0];
            e[a.q_var()] = k[1];
            out.accumulate(&e, c.clone());
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// A truncated infinite matrix with indices `1..=rows`, `1..=cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<G2Series>,
}

impl KernelMatrix {
    pub fn zeros(rows: usize, cols: usize, moduli: &SewingModuli) -> Self {
        KernelMatrix {
            rows,
            cols,
            entries: vec![moduli.zero(); rows * cols],
        }
    }

    pub fn identity(n: usize, moduli: &SewingModuli) -> Self {
        let mut m = Self::zeros(n, n, moduli);
        for i in 1..=n {
            m.set(i, i, moduli.constant(Rational::one()));
        }
        m
    }

    fn from_fn<F>(rows: usize, cols: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<G2Series> + Sync,
    {
        let entries = (0..rows * cols)
            .into_par_iter()
            .map(|k| f(k / cols + 1, k % cols + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry `(m, n)`, 1-based.
    pub fn get(&self, m: usize, n: usize) -> &G2Series {
        &self.entries[(m - 1) * self.cols + (n - 1)]
    }

    pub fn set(&mut self, m: usize, n: usize, x: G2Series) {
        self.entries[(m - 1) * self.cols + (n - 1)] = x;
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Self::from_fn(self.rows, other.cols, |m, n| {
            let mut acc: Option<G2Series> = None;
            for l in 1..=self.cols {
                let (a, b) = (self.get(m, l), other.get(l, n));
                if a.is_zero() || b.is_zero() {
                    continue;
                }
                let t = a.mul(b)?;
                acc = Some(match acc {
                    Some(x) => x.add(&t)?,
                    None => t,
                });
            }
            Ok(acc.unwrap_or_else(|| zero_like(self.get(m, 1))))
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.sub(b))
    }

    fn zip<F: Fn(&G2Series, &G2Series) -> Result<G2Series>>(
        &self,
        other: &Self,
        f: F,
    ) -> Result<Self> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch("matrix shapes differ".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| f(a, b))
            .collect::<Result<_>>()?;
        Ok(KernelMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(MultiSeries::is_zero)
    }

    /// Drops powers of `s` beyond the truncation order.
    fn clip(&self, moduli: &SewingModuli) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|e| e.restrict(&clip_s(e.window(), moduli)))
            .collect::<Result<_>>()?;
        Ok(KernelMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    /// Smallest power of `s = ε^{1/2}` over all entries (`None` if zero).
    pub fn min_s_order(&self) -> Option<i64> {
        self.entries
            .iter()
            .flat_map(|e| e.terms().map(|(k, _)| k[S]))
            .min()
    }

    /// `Σ_m M(m, m)`.
    pub fn trace(&self) -> Result<G2Series> {
        let mut acc = zero_like(&self.entries[0]);
        for i in 1..=self.rows.min(self.cols) {
            acc = acc.add(self.get(i, i))?;
        }
        Ok(acc)
    }

    /// JSON: `{"rows": N, "cols": N, "entries": {"m,n": series}}` (non-zero entries only).
    pub fn to_json(&self) -> Result<Value> {
        let mut map = serde_json::Map::new();
        for m in 1..=self.rows {
            for n in 1..=self.cols {
                let e = self.get(m, n);
                if !e.is_zero() {
                    map.insert(format!("{m},{n}"), export_eps(e, false, false)?.to_json());
                }
            }
        }
        Ok(json!({"rows": self.rows, "cols": self.cols, "entries": Value::Object(map)}))
    }
}

fn zero_like(s: &G2Series) -> G2Series {
    MultiSeries::new(s.vars(), s.window()).expect("window of an existing series")
}

/// Row vector times matrix.
fn row_times(v: &[G2Series], m: &KernelMatrix) -> Result<Vec<G2Series>> {
    if v.len() != m.rows {
        return Err(Error::DimensionMismatch("row vector length".into()));
    }
    (1..=m.cols)
        .into_par_iter()
        .map(|n| {
            let mut acc = zero_like(&v[0]);
            for (l, x) in v.iter().enumerate() {
                let e = m.get(l + 1, n);
                if x.is_zero() || e.is_zero() {
                    continue;
                }
                acc = acc.add(&x.mul(e)?)?;
            }
            Ok(acc)
        })
        .collect()
}

/// Row vector times column vector.
fn dot(v: &[G2Series], w: &[G2Series]) -> Result<G2Series> {
    let mut acc: Option<G2Series> = None;
    for (a, b) in v.iter().zip(w) {
        let t = a.mul(b)?;
        acc = Some(match acc {
            Some(x) => x.add(&t)?,
            None => t,
        });
    }
    acc.ok_or_else(|| Error::DimensionMismatch("empty vectors".into()))
}

/// `Λ_a(m, n) = ε^{(m+n)/2} (-1)^{n+1} C(m+n-1, n) E_{m+n}(τ_a)` for any `m, n >= 1`.
pub fn lambda_entry(a: Chart, m: usize, n: usize, moduli: &SewingModuli) -> Result<G2Series> {
    let k = (m + n) as i64;
    if k > moduli.s_order() || k % 2 == 1 {
        return Ok(moduli.zero());
    }
    let c = sign(n as i64 + 1) * binomial(k - 1, n as i64);
    Ok(moduli.eisenstein(k, a, k)?.scale(&c))
}

/// `(S A_a S^{-1})(m, n) = √m A_a(m, n) / √n`, where
/// `A_a(m, n) √(mn) = (-1)^{m+1} ε^{(m+n)/2} (m+n-1)!/((m-1)!(n-1)!) E_{m+n}(τ_a)`:
/// the square roots cancel to the rational factor `1/n`.
pub fn conjugated_a_entry(a: Chart, m: usize, n: usize, moduli: &SewingModuli) -> Result<G2Series> {
    let k = (m + n) as i64;
    if k > moduli.s_order() {
        return Ok(moduli.zero());
    }
    let (mi, ni) = (m as i64, n as i64);
    let c = sign(mi + 1) * crate::scalar::factorial(k as u64 - 1)
        / (crate::scalar::factorial(m as u64 - 1) * crate::scalar::factorial(n as u64 - 1))
        / q(ni);
    Ok(moduli.eisenstein(k, a, k)?.scale(&c))
}

/// The `N × N` truncation of `Λ_a`.
pub fn lambda_matrix(a: Chart, moduli: &SewingModuli) -> Result<KernelMatrix> {
    let n = moduli.matrix_cutoff;
    KernelMatrix::from_fn(n, n, |i, j| lambda_entry(a, i, j, moduli))
}

/// `Λ̃_a = Λ_a Δ`, i.e. `Λ̃_a(m, n) = Λ_a(m, n + 2p - 2)`.
pub fn lambda_tilde(a: Chart, p: i64, moduli: &SewingModuli) -> Result<KernelMatrix> {
    let n = moduli.matrix_cutoff;
    let shift = (2 * p - 2) as usize;
    KernelMatrix::from_fn(n, n, |i, j| lambda_entry(a, i, j + shift, moduli))
}

/// `Γ(m, n) = δ_{m, 2p-2-n}`.
pub fn gamma_matrix(p: i64, moduli: &SewingModuli) -> KernelMatrix {
    let n = moduli.matrix_cutoff;
    let mut g = KernelMatrix::zeros(n, n, moduli);
    for j in 1..=n {
        let i = 2 * p - 2 - j as i64;
        if i >= 1 && i as usize <= n {
            g.set(i as usize, j, moduli.constant(Rational::one()));
        }
    }
    g
}

/// `Π = Γ² = diag(1_{2p-3}, 0, ...)`.
pub fn pi_matrix(p: i64, moduli: &SewingModuli) -> KernelMatrix {
    let n = moduli.matrix_cutoff;
    let mut m = KernelMatrix::zeros(n, n, moduli);
    for i in 1..=n.min((2 * p - 3).max(0) as usize) {
        m.set(i, i, moduli.constant(Rational::one()));
    }
    m
}

/// `Σ_{k>=0} M^k`, exact to the truncation order. Every entry of `M` must be
/// of strictly positive order in `ε^{1/2}`.
pub fn neumann_inverse(m: &KernelMatrix, moduli: &SewingModuli) -> Result<KernelMatrix> {
    if m.rows != m.cols {
        return Err(Error::DimensionMismatch(
            "Neumann inverse needs a square matrix".into(),
        ));
    }
    if m.min_s_order().is_some_and(|o| o <= 0) {
        return Err(Error::NeumannDivergent);
    }
    // each factor raises the order in s by at least one
    let mut sum = KernelMatrix::identity(m.rows, moduli);
    let mut power = m.clip(moduli)?;
    for _ in 0..moduli.s_order() {
        if power.is_zero() {
            break;
        }
        sum = sum.add(&power)?;
        power = power.mul(m)?.clip(moduli)?;
    }
    Ok(sum)
}

/// `ℝ(x; m) = ε^{m/2} P_{m+1}(x, τ_a)` for `m = 1..=len`.
fn r_vector(
    a: Chart,
    len: usize,
    offset: usize,
    x_order: i64,
    moduli: &SewingModuli,
) -> Result<Vec<G2Series>> {
    (1..=len)
        .into_par_iter()
        .map(|m| {
            let m = (m + offset) as i64;
            moduli.weierstrass(m + 1, a, X, x_order, m)
        })
        .collect()
}

/// `ℚ(p; x) = ℝ(x) Δ (1 - Λ̃_ā Λ̃_a)^{-1}` for `x` on torus `a`.
pub fn q_vector(p: i64, a: Chart, x_order: i64, moduli: &SewingModuli) -> Result<Vec<G2Series>> {
    let n = moduli.matrix_cutoff;
    let r_delta = r_vector(a, n, (2 * p - 2) as usize, x_order, moduli)?;
    let m = lambda_tilde(a.other(), p, moduli)?.mul(&lambda_tilde(a, p, moduli)?)?;
    row_times(&r_delta, &neumann_inverse(&m, moduli)?)
}

/// `ℙ_{j+1}(y; m) = ε^{m/2} C(m+j-1, j) (P_{j+m}(y, τ_a) - δ_{j0} E_m(τ_a))`.
pub fn p_column(j: i64, a: Chart, y_order: i64, moduli: &SewingModuli) -> Result<Vec<G2Series>> {
    (1..=moduli.matrix_cutoff as i64)
        .into_par_iter()
        .map(|m| {
            let mut v = moduli.weierstrass(j + m, a, Y, y_order, m)?;
            if j == 0 {
                v = v.sub(&moduli.eisenstein(m, a, m)?)?;
            }
            Ok(v.scale(&binomial(m + j - 1, j)))
        })
        .collect()
}

/// `P_m(x - y, τ_a)` expanded for `|x| > |y|`, with `y` in `[0, y_order]` and
/// `x` up to `x_order`.
fn p_of_difference(
    m: i64,
    a: Chart,
    x_order: i64,
    y_order: i64,
    moduli: &SewingModuli,
) -> Result<G2Series> {
    let p = weierstrass_p(m, x_order + y_order, moduli.q_order(a))?.expansion;
    let mut window = moduli.const_window();
    window[X] = (-m - y_order, x_order);
    window[Y] = (0, y_order);
    let mut out = MultiSeries::new(&VARS, &window)?;
    let mut e = [0i64; 5];
    for (k, c) in p.terms() {
        let (zk, qk) = (k[0], k[1]);
        e[a.q_var()] = qk;
        // (x - y)^zk = sum_i C(zk, i) x^{zk-i} (-y)^i, finite for zk >= 0
        let top = if zk >= 0 { zk.min(y_order) } else { y_order };
        for i in 0..=top {
            e[X] = zk - i;
            e[Y] = i;
            out.accumulate(&e, c * binomial(zk, i) * sign(i));
        }
    }
    Ok(out)
}

/// Converts a series in `(x, y, s, q1, q2)` to one in `(x?, y?, eps, q1, q2)`,
/// dropping `x` and/or `y` unless kept, replacing `s^{2r}` by `eps^r`.
/// Fails if an odd power of `s` is present or an omitted variable occurs.
fn export_eps(v: &G2Series, keep_x: bool, keep_y: bool) -> Result<MultiSeries<Rational>> {
    let mut vars = Vec::new();
    if keep_x {
        vars.push("x");
    }
    if keep_y {
        vars.push("y");
    }
    vars.extend(["eps", "q1", "q2"]);
    let w = v.window();
    let mut window = Vec::new();
    if keep_x {
        window.push(w[X]);
    }
    if keep_y {
        window.push(w[Y]);
    }
    window.push((
        w[S].0.div_euclid(2) + w[S].0.rem_euclid(2),
        w[S].1.div_euclid(2),
    ));
    window.push(w[3]);
    window.push(w[4]);
    let mut out = MultiSeries::new(&vars, &window)?;
    for (e, c) in v.terms() {
        if e[S] % 2 != 0 {
            return Err(Error::HalfIntegerExponent(format!("eps^({}/2)", e[S])));
        }
        if (!keep_x && e[X] != 0) || (!keep_y && e[Y] != 0) {
            return Err(Error::DimensionMismatch(
                "dropped variable has a non-zero exponent".into(),
            ));
        }
        let mut f = Vec::new();
        if keep_x {
            f.push(e[X]);
        }
        if keep_y {
            f.push(e[Y]);
        }
        f.extend([e[S] / 2, e[3], e[4]]);
        out.accumulate(&f, c.clone());
    }
    Ok(out)
}

/// The generalized Weierstrass function `𝒫_{j+1}(p; x, y)` for `x` on torus
/// `x_chart` and `y` on torus `y_chart`, as a series in
/// `(x, y, eps, q1, q2)` with `x` and `y` truncated above at `xy_order`.
///
/// `𝒫_1` is assembled from its two chart cases; `𝒫_{j+1}` is defined as
/// `(1/j!) ∂_y^j 𝒫_1`, which gives
/// `P_{j+1}(x-y) - (-1)^j ℚ Λ̃_ā ℙ_{j+1}(y)` on one torus and
/// `(-1)^{p+1} (-1)^j ℚ ℙ_{j+1}(y)` across tori.
pub fn gen_weierstrass(
    p: i64,
    j: i64,
    x_chart: Chart,
    y_chart: Chart,
    xy_order: i64,
    moduli: &SewingModuli,
) -> Result<MultiSeries<Rational>> {
    if !(1..=2).contains(&p) {
        return Err(Error::InvalidArgument(format!("p must be 1 or 2, got {p}")));
    }
    if j < 0 || xy_order < 0 {
        return Err(Error::InvalidArgument(
            "j and the x/y order must be non-negative".into(),
        ));
    }
    let a = x_chart;
    let qv = q_vector(p, a, xy_order, moduli)?;
    let col = p_column(j, y_chart, xy_order, moduli)?;
    let pp = (2 * p - 2) as usize;
    let jsign = sign(j);
    let value = if x_chart == y_chart {
        let lt = lambda_tilde(a.other(), p, moduli)?;
        let ql = row_times(&qv, &lt)?;
        let mut v = p_of_difference(j + 1, a, xy_order, xy_order, moduli)?
            .sub(&dot(&ql, &col)?.scale(&jsign))?;
        if j == 0 {
            v = v.sub(&moduli.weierstrass(1, a, X, xy_order, 0)?)?;
            if p > 1 {
                let qla = row_times(&qv, &lambda_matrix(a.other(), moduli)?)?;
                v = v.sub(&qla[pp - 1])?;
            }
        }
        v
    } else {
        let mut v = dot(&qv, &col)?;
        if j == 0 && p > 1 {
            v = v.add(&moduli.weierstrass(2 * p - 1, a, X, xy_order, 2 * p - 2)?)?;
            let m = lambda_tilde(a.other(), p, moduli)?.mul(&lambda_matrix(a, moduli)?)?;
            v = v.add(&row_times(&qv, &m)?[pp - 1])?;
        }
        v.scale(&(sign(p + 1) * jsign))
    };
    let value = value.restrict(&clip_s(value.window(), moduli))?;
    export_eps(&value, true, true)
}

fn clip_s(window: &[(i64, i64)], moduli: &SewingModuli) -> Vec<(i64, i64)> {
    let mut w = window.to_vec();
    w[S].1 = w[S].1.min(moduli.s_order());
    w
}

// ---------------------------------------------------------------------------
// Partition function and reduction
// ---------------------------------------------------------------------------

/// Genus-two correlation data: insertions with their tori, and the value in
/// `(points.., eps, q1, q2)`. Both `q_a` carry the symbolic tag
/// `q_a^{-1/24}`, which is not stored in the exponents.
#[derive(Clone, Debug, PartialEq)]
pub struct Genus2Function {
    pub insertions: Vec<(Insertion, Chart)>,
    pub value: MultiSeries<Rational>,
    pub q_shift: Rational,
}

impl Genus2Function {
    pub fn to_json(&self) -> Value {
        json!({
            "genus": 2,
            "insertions": self
                .insertions
                .iter()
                .map(|(i, c)| json!({"insertion": i.spec(), "chart": c.index()}))
                .collect::<Vec<_>>(),
            "q_shift": [self.q_shift.to_string(), self.q_shift.to_string()],
            "value": self.value.to_json(),
        })
    }
}

/// `Σ_M Tr_{V_M} o(v_1) ... o(v_k) q^M` for `M <= q_order` (no tag).
/// States may be inhomogeneous; each Fock component contributes its own zero mode.
pub fn zero_mode_trace_series(states: &[&GradedVector], q_order: i64) -> Result<Series<Rational>> {
    let mut combos: Vec<(Vec<crate::voa::FockState>, Rational)> =
        vec![(Vec::new(), Rational::one())];
    for v in states {
        let mut next = Vec::new();
        for (prefix, c) in &combos {
            for (s, d) in v.terms() {
                let mut p = prefix.clone();
                p.push(s.clone());
                next.push((p, c * d));
            }
        }
        combos = next;
    }
    let mut out = Series::new("q", 0, q_order)?;
    for m in 0..=q_order {
        let mut acc = Rational::zero();
        for (fs, c) in &combos {
            let factors: Vec<_> = fs.iter().map(|s| (s.clone(), 0i64)).collect();
            acc += c * mode_trace(&factors, m);
        }
        out.accumulate(m, acc);
    }
    Ok(out)
}

/// Dual pairs `(u, ū)` of each `V_[r]`.
type DualBases<'a> = &'a (dyn Fn(u32) -> Result<Vec<(GradedVector, GradedVector)>> + Sync);

/// `Σ_{r<=R} s^{2r + s_shift} Σ_{u ∈ V_[r]} F(u; τ1) G(ū; τ2)` where `term`
/// returns the two q-series for a dual pair `(u, ū)` (or `None` for zero).
fn sew<F>(moduli: &SewingModuli, bases: DualBases, s_shift: i64, term: F) -> Result<G2Series>
where
    F: Fn(&GradedVector, &GradedVector) -> Result<Option<(Series<Rational>, Series<Rational>)>>
        + Sync,
{
    let mut window = moduli.const_window();
    window[S].0 = s_shift.min(0);
    let mut acc = MultiSeries::new(&VARS, &window)?;
    for r in 0..=moduli.eps_order {
        let pairs = bases(r as u32)?;
        let parts = pairs
            .par_iter()
            .map(|(u, ub)| term(u, ub))
            .collect::<Result<Vec<_>>>()?;
        let mut e = [0i64; 5];
        e[S] = 2 * r + s_shift;
        for (f1, f2) in parts.into_iter().flatten() {
            for (i, c1) in f1.terms() {
                for (j, c2) in f2.terms() {
                    e[3] = i;
                    e[4] = j;
                    acc.accumulate(&e, c1 * c2);
                }
            }
        }
    }
    Ok(acc)
}

fn square_dual_basis(r: u32) -> Result<Vec<(GradedVector, GradedVector)>> {
    dual_basis(r, &Rational::one(), Bracket::Square)
}

fn partition_in(moduli: &SewingModuli, bases: DualBases) -> Result<Genus2Function> {
    let z = sew(moduli, bases, 0, |u, ub| {
        Ok(Some((
            zero_mode_trace_series(&[u], moduli.q1_order)?,
            zero_mode_trace_series(&[ub], moduli.q2_order)?,
        )))
    })?;
    Ok(Genus2Function {
        insertions: Vec::new(),
        value: export_eps(&z, false, false)?,
        q_shift: central_shift(),
    })
}

/// `Z^{(2)} = Σ_r ε^r Σ_{u ∈ V_[r]} F^{(1)}(u; τ1) F^{(1)}(ū; τ2)` with `ū` the
/// dual of `u` for the square-bracket form (normalized by `⟨1, 1⟩ = 1`).
pub fn z2_partition(moduli: &SewingModuli) -> Result<Genus2Function> {
    partition_in(moduli, &square_dual_basis)
}

/// [`z2_partition`] computed in a caller-supplied basis of each `V_[r]`; the
/// duals are obtained from the square-bracket Gram matrix.
pub fn z2_partition_in_basis<B>(moduli: &SewingModuli, basis: B) -> Result<Genus2Function>
where
    B: Fn(u32) -> Vec<GradedVector> + Sync,
{
    let duals = |r: u32| -> Result<Vec<(GradedVector, GradedVector)>> {
        dual_of_basis(&basis(r), &Rational::one(), Bracket::Square, r)
    };
    partition_in(moduli, &duals)
}

/// Square-bracket weight `p` of `v` (`L[0] v = p v`), or an error.
fn square_weight(v: &GradedVector) -> Result<i64> {
    let l0 = square_bracket_mode(&GradedVector::omega(), 1, v);
    for p in 0..=v.max_weight() {
        if l0 == v.scale(&q(i64::from(p))) {
            return Ok(i64::from(p));
        }
    }
    Err(Error::NotHomogeneous(format!(
        "{} is not an L[0] eigenvector",
        v.literal()
    )))
}

/// One genus-two reduction step on the partition function: the one-point
/// function of a quasi-primary `v` of square-bracket weight `p` inserted at
/// `z` on torus 1, `Σ_{l=1}^3 f_l(p; z) F_l`, as a series in
/// `(z, eps, q1, q2)` with `z` truncated above at `z_order`.
///
/// Only the zero-point input is supported (`f` must have no insertions). A
/// weight-zero direction (a multiple of the vacuum) returns `f` unchanged.
pub fn genus2_reduce(
    direction: &Insertion,
    z_order: i64,
    f: &Genus2Function,
    moduli: &SewingModuli,
) -> Result<Genus2Function> {
    if !f.insertions.is_empty() {
        return Err(Error::InvalidArgument(
            "genus-two reduction is implemented for the zero-point function only".into(),
        ));
    }
    let v = &direction.state;
    let p = square_weight(v)?;
    if !square_bracket_mode(&GradedVector::omega(), 2, v).is_zero() {
        return Err(Error::NotQuasiPrimary(v.literal()));
    }
    if p == 0 {
        return Ok(f.clone());
    }
    // Half-integer powers of ε appear in 𝕏 with negative exponent; compute
    // with p extra orders and clip at the end.
    let wide = moduli.widened(p);
    let nn = wide.matrix_cutoff;
    let a = Chart::One;

    let f01 = sew(&wide, &square_dual_basis, 0, |u, ub| {
        Ok(Some((
            zero_mode_trace_series(&[v, u], wide.q1_order)?,
            zero_mode_trace_series(&[ub], wide.q2_order)?,
        )))
    })?;
    let f02 = sew(&wide, &square_dual_basis, 0, |u, ub| {
        Ok(Some((
            zero_mode_trace_series(&[u], wide.q1_order)?,
            zero_mode_trace_series(&[v, ub], wide.q2_order)?,
        )))
    })?;

    let qv = q_vector(p, a, z_order, &wide)?;
    let lt_bar = lambda_tilde(a.other(), p, &wide)?;
    let f1 = wide
        .constant(Rational::one())
        .add(&row_times(&qv, &lt_bar)?[0].shift(&[0, 0, 1, 0, 0]))?;
    let f2 = qv[0].shift(&[0, 0, 1, 0, 0]).scale(&sign(p));
    let mut total = f1.mul(&f01)?.add(&f2.mul(&f02)?)?;

    let pi_len = (2 * p - 3).max(0) as usize;
    if pi_len > 0 {
        let r = r_vector(a, nn, 0, z_order, &wide)?;
        let inner = lt_bar
            .mul(&lambda_matrix(a, &wide)?)?
            .add(&lambda_matrix(a.other(), &wide)?.mul(&gamma_matrix(p, &wide))?)?;
        let qi = row_times(&qv, &inner)?;
        for m in 1..=pi_len {
            let f3 = r[m - 1].add(&qi[m - 1])?;
            let x1 = sew(&wide, &square_dual_basis, -(m as i64), |u, ub| {
                let vu = square_bracket_mode(v, m as i64, u);
                if vu.is_zero() {
                    return Ok(None);
                }
                Ok(Some((
                    zero_mode_trace_series(&[&vu], wide.q1_order)?,
                    zero_mode_trace_series(&[ub], wide.q2_order)?,
                )))
            })?;
            total = total.add(&f3.mul(&x1)?)?;
        }
    }
    if total.terms().any(|(e, _)| e[S] < 0) {
        return Err(Error::InsufficientOrder(
            "negative power of eps in the one-point function".into(),
        ));
    }
    let mut w = total.window().to_vec();
    w[S] = (0, moduli.s_order());
    w[3].1 = moduli.q1_order;
    w[4].1 = moduli.q2_order;
    let total = total.restrict(&w)?;
    let out =
        export_eps(&total, true, false)?.rename(&[direction.point.as_str(), "eps", "q1", "q2"])?;
    Ok(Genus2Function {
        insertions: vec![(direction.clone(), Chart::One)],
        value: out,
        q_shift: f.q_shift.clone(),
    })
}
