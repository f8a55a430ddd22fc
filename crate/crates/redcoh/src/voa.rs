//! The rank-one Heisenberg vertex operator algebra.
//!
//! The Fock space is realized as the polynomial ring in `x_1, x_2, ...`:
//! `a(-n)` multiplies by `x_n`, `a(n)` acts as `n d/dx_n` for `n > 0`, and
//! `a(0)` vanishes on the charge-zero module. A basis state is a partition
//! `lambda = (lambda_1 >= lambda_2 >= ...)`, standing for
//! `a(-lambda_1) ... a(-lambda_k) 1`, of weight `|lambda|`.
//!
//! General vertex operators are built by normal-ordered reconstruction:
//! `Y(a(-n_1)...a(-n_r) 1, z) = :prod_i d^{(n_i - 1)} a(z):` with the divided
//! derivative `d^{(n-1)} a(z) = sum_k C(-k-1, n-1) a(k) z^{-k-n}`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{One, Signed, Zero};
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{binomial, factorial, parse_rat, pow_i, q, qf, Rational};
use crate::series::{exp_minus_one_over_z, exp_series};

/// A Fock basis state: a partition with parts in non-increasing order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FockState(Vec<u32>);

impl FockState {
    /// The vacuum (empty partition).
    pub fn vacuum() -> Self {
        FockState(Vec::new())
    }

    /// Builds a state from parts in any order; zero parts are rejected.
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.contains(&0) {
            return Err(Error::InvalidArgument(
                "partition parts must be positive".into(),
            ));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(FockState(parts))
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_vacuum(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of parts equal to `n`.
    pub fn multiplicity(&self, n: u32) -> u32 {
        self.0.iter().filter(|&&p| p == n).count() as u32
    }

    fn with_part(&self, n: u32) -> Self {
        let pos = self.0.iter().position(|&p| p < n).unwrap_or(self.0.len());
        let mut parts = self.0.clone();
        parts.insert(pos, n);
        FockState(parts)
    }

    fn without_part(&self, n: u32) -> Option<Self> {
        let pos = self.0.iter().position(|&p| p == n)?;
        let mut parts = self.0.clone();
        parts.remove(pos);
        Some(FockState(parts))
    }

    /// Multiplies in all parts of `other`.
    fn merged(&self, other: &[u32]) -> Self {
        let mut parts = self.0.clone();
        parts.extend_from_slice(other);
        parts.sort_unstable_by(|a, b| b.cmp(a));
        FockState(parts)
    }

    /// Literal form such as `a[-2]a[-1]^2|1`, or `1` for the vacuum.
    pub fn literal(&self) -> String {
        if self.0.is_empty() {
            return "1".into();
        }
        let mut out = String::new();
        let mut i = 0;
        while i < self.0.len() {
            let p = self.0[i];
            let k = self.multiplicity(p) as usize;
            out.push_str(&format!("a[-{p}]"));
            if k > 1 {
                out.push_str(&format!("^{k}"));
            }
            i += k;
        }
        out.push_str("|1");
        out
    }
}

/// All partitions of `n`, in reverse lexicographic order (`[n]` first).
pub fn partitions(n: u32) -> Vec<FockState> {
    fn rec(n: u32, max: u32, prefix: &mut Vec<u32>, out: &mut Vec<FockState>) {
        if n == 0 {
            out.push(FockState(prefix.clone()));
            return;
        }
        for p in (1..=n.min(max)).rev() {
            prefix.push(p);
            rec(n - p, p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

/// Dimension of the weight-`n` space (the partition count `p(n)`).
pub fn weight_space_dim(n: u32) -> usize {
    partitions(n).len()
}

/// A finite rational combination of Fock basis states.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GradedVector {
    terms: BTreeMap<FockState, Rational>,
}

impl GradedVector {
    pub fn zero() -> Self {
        GradedVector::default()
    }

    pub fn vacuum() -> Self {
        Self::basis(FockState::vacuum())
    }

    pub fn basis(s: FockState) -> Self {
        let mut v = Self::zero();
        v.add_term(s, Rational::one());
        v
    }

    /// The state `a = a(-1) 1`.
    pub fn a() -> Self {
        Self::basis(FockState(vec![1]))
    }

    /// The conformal vector `omega = 1/2 a(-1)^2 1` (central charge 1).
    pub fn omega() -> Self {
        let mut v = Self::zero();
        v.add_term(FockState(vec![1, 1]), qf(1, 2));
        v
    }

    /// `omega - 1/24 * 1`, the conformal vector of the square-bracket algebra.
    pub fn omega_tilde() -> Self {
        Self::omega().add(&Self::vacuum().scale(&qf(-1, 24)))
    }

    pub fn from_terms<I: IntoIterator<Item = (FockState, Rational)>>(terms: I) -> Self {
        let mut v = Self::zero();
        for (s, c) in terms {
            v.add_term(s, c);
        }
        v
    }

    pub fn add_term(&mut self, s: FockState, c: Rational) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(s.clone()).or_insert_with(Rational::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&s);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FockState, &Rational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, s: &FockState) -> Rational {
        self.terms.get(s).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (s, c) in other.terms() {
            self.add_term(s.clone(), c.clone());
        }
    }

    pub fn add_scaled(&mut self, other: &Self, c: &Rational) {
        if c.is_zero() {
            return;
        }
        for (s, x) in other.terms() {
            self.add_term(s.clone(), x * c);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        GradedVector {
            terms: self.terms.iter().map(|(s, x)| (s.clone(), x * c)).collect(),
        }
    }

    /// Coefficient of the vacuum.
    pub fn vacuum_coeff(&self) -> Rational {
        self.coeff(&FockState::vacuum())
    }

    /// Decomposition into homogeneous components, keyed by weight.
    pub fn components(&self) -> BTreeMap<u32, GradedVector> {
        let mut out: BTreeMap<u32, GradedVector> = BTreeMap::new();
        for (s, c) in self.terms() {
            out.entry(s.weight())
                .or_default()
                .add_term(s.clone(), c.clone());
        }
        out
    }

    /// The weight if the vector is nonzero and homogeneous.
    pub fn homogeneous_weight(&self) -> Option<u32> {
        let mut ws = self.terms.keys().map(FockState::weight);
        let w = ws.next()?;
        ws.all(|x| x == w).then_some(w)
    }

    /// Weight of a homogeneous vector, or an error naming the vector.
    pub fn weight(&self) -> Result<u32> {
        if self.is_zero() {
            return Ok(0);
        }
        self.homogeneous_weight()
            .ok_or_else(|| Error::NotHomogeneous(self.literal()))
    }

    /// Largest weight present (0 for the zero vector).
    pub fn max_weight(&self) -> u32 {
        self.terms.keys().map(FockState::weight).max().unwrap_or(0)
    }

    /// Literal form, e.g. `1/2*a[-1]^2|1 - 1/24*1`.
    pub fn literal(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut out = String::new();
        for (s, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let mag = c.abs();
            if out.is_empty() {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            if mag.is_one() {
                out.push_str(&s.literal());
            } else {
                out.push_str(&format!("{mag}*{}", s.literal()));
            }
        }
        out
    }

    /// Parses a literal: a signed sum of terms `[coef*]monomial`, where a
    /// monomial is `a[-n]^k...|1`, `a(-n)...|1`, `1`, or one of the names
    /// `a`, `omega`, `omegat` (= omega - 1/24).
    pub fn parse(s: &str) -> Result<Self> {
        let err = |m: &str| Error::Parse(format!("state literal `{s}`: {m}"));
        let text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if text.is_empty() {
            return Err(err("empty"));
        }
        // Split into signed terms at top-level '+'/'-' (not inside brackets).
        let mut pieces: Vec<(bool, String)> = Vec::new();
        let mut depth = 0i32;
        let mut cur = String::new();
        let mut neg = false;
        for ch in text.chars() {
            match ch {
                '[' | '(' => depth += 1,
                ']' | ')' => depth -= 1,
                _ => {}
            }
            if depth == 0 && (ch == '+' || ch == '-') && !cur.is_empty() && !cur.ends_with('*') {
                pieces.push((neg, std::mem::take(&mut cur)));
                neg = ch == '-';
                continue;
            }
            if depth == 0 && cur.is_empty() && (ch == '+' || ch == '-') {
                neg ^= ch == '-';
                continue;
            }
            cur.push(ch);
        }
        if depth != 0 {
            return Err(err("unbalanced brackets"));
        }
        if cur.is_empty() {
            return Err(err("dangling sign"));
        }
        pieces.push((neg, cur));

        let mut out = GradedVector::zero();
        for (neg, piece) in pieces {
            let (coef, mono) = match piece.rsplit_once('*') {
                Some((c, m)) => (
                    parse_rat(c).ok_or_else(|| err("bad coefficient"))?,
                    m.to_string(),
                ),
                None => match parse_rat(&piece) {
                    Some(c) if piece != "1" => (c, "1".to_string()),
                    _ => (Rational::one(), piece.clone()),
                },
            };
            let coef = if neg { -coef } else { coef };
            let v = parse_monomial(&mono).map_err(|m| err(&m))?;
            out.add_scaled(&v, &coef);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (s, c) in self.terms() {
            m.insert(s.literal(), Value::String(c.to_string()));
        }
        json!({ "terms": Value::Object(m) })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v["terms"]
            .as_object()
            .ok_or_else(|| Error::Parse("graded vector json".into()))?;
        let mut out = GradedVector::zero();
        for (k, c) in obj {
            let s = GradedVector::parse(k)?;
            let c = c
                .as_str()
                .and_then(parse_rat)
                .ok_or_else(|| Error::Parse(format!("coefficient of {k}")))?;
            out.add_scaled(&s, &c);
        }
        Ok(out)
    }
}

impl fmt::Display for GradedVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

fn parse_monomial(m: &str) -> std::result::Result<GradedVector, String> {
    match m {
        "1" | "vac" => return Ok(GradedVector::vacuum()),
        "a" => return Ok(GradedVector::a()),
        "omega" | "w" => return Ok(GradedVector::omega()),
        "omegat" => return Ok(GradedVector::omega_tilde()),
        _ => {}
    }
    let body = m.strip_suffix("|1").ok_or("monomial must end in `|1`")?;
    let mut parts = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        let r = rest.strip_prefix('a').ok_or("expected `a`")?;
        let (open, close) = match r.chars().next() {
            Some('[') => ('[', ']'),
            Some('(') => ('(', ')'),
            _ => return Err("expected `[` or `(` after `a`".into()),
        };
        let r = &r[1..];
        let end = r.find(close).ok_or("unclosed mode bracket")?;
        let idx: i64 = r[..end].parse().map_err(|_| "bad mode index")?;
        if idx >= 0 {
            return Err(format!(
                "creation modes need negative index, got {idx} ({open})"
            ));
        }
        let mut r = &r[end + 1..];
        let mut power = 1usize;
        if let Some(p) = r.strip_prefix('^') {
            let digits: String = p.chars().take_while(char::is_ascii_digit).collect();
            power = digits.parse().map_err(|_| "bad power")?;
            r = &p[digits.len()..];
        }
        for _ in 0..power {
            parts.push((-idx) as u32);
        }
        rest = r;
    }
    FockState::new(parts)
        .map(GradedVector::basis)
        .map_err(|e| e.to_string())
}

/// Heisenberg mode `a(m)` applied to `v`.
pub fn heisenberg_mode(m: i64, v: &GradedVector) -> GradedVector {
    let mut out = GradedVector::zero();
    match m.signum() {
        0 => {}
        -1 => {
            for (s, c) in v.terms() {
                out.add_term(s.with_part((-m) as u32), c.clone());
            }
        }
        _ => {
            let n = m as u32;
            for (s, c) in v.terms() {
                let k = s.multiplicity(n);
                if k > 0 {
                    let t = s.without_part(n).expect("part present");
                    out.add_term(t, c * q(i64::from(n) * i64::from(k)));
                }
            }
        }
    }
    out
}

type ModeKey = (FockState, i64, FockState);

static MODE_CACHE: Lazy<RwLock<HashMap<ModeKey, GradedVector>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// The mode `u(k)` of a basis state `u`, applied to a basis state `v`.
fn basis_mode(u: &FockState, k: i64, v: &FockState) -> GradedVector {
    let key = (u.clone(), k, v.clone());
    if let Some(hit) = MODE_CACHE.read().get(&key) {
        return hit.clone();
    }
    let out = basis_mode_uncached(u, k, v);
    MODE_CACHE.write().insert(key, out.clone());
    out
}

fn basis_mode_uncached(u: &FockState, k: i64, v: &FockState) -> GradedVector {
    let parts = u.parts();
    if parts.is_empty() {
        return if k == -1 {
            GradedVector::basis(v.clone())
        } else {
            GradedVector::zero()
        };
    }
    let wt_u = i64::from(u.weight());
    let target = k + 1 - wt_u;
    let budget = i64::from(v.weight());
    let mut out = GradedVector::zero();
    let start = GradedVector::basis(v.clone());
    let mut creators = Vec::new();
    normal_ordered(
        parts,
        0,
        target,
        budget,
        &start,
        &mut creators,
        &Rational::one(),
        &mut out,
    );
    out
}

/// Largest total that `r` further nonzero modes can reach when the
/// annihilators among them may remove at most `budget` weight.
fn max_remaining(r: i64, budget: i64) -> i64 {
    if r == 0 {
        0
    } else {
        budget - r + r.min(budget)
    }
}

#[allow(clippy::too_many_arguments)]
fn normal_ordered(
    parts: &[u32],
    i: usize,
    remaining: i64,
    budget: i64,
    annihilated: &GradedVector,
    creators: &mut Vec<u32>,
    coef: &Rational,
    out: &mut GradedVector,
) {
    if annihilated.is_zero() {
        return;
    }
    let r = parts.len() - i;
    if r == 0 {
        if remaining == 0 {
            for (s, c) in annihilated.terms() {
                out.add_term(s.merged(creators), c * coef);
            }
        }
        return;
    }
    let n = i64::from(parts[i]);
    let rest = (r - 1) as i64;
    let (k_lo, k_hi) = if r == 1 {
        (remaining, remaining)
    } else {
        (remaining - max_remaining(rest, budget), budget)
    };
    for kk in k_lo..=k_hi {
        if kk == 0 || kk > budget {
            continue;
        }
        let c = binomial(-kk - 1, n - 1);
        if c.is_zero() {
            continue;
        }
        let c = coef * c;
        if kk > 0 {
            let next = heisenberg_mode(kk, annihilated);
            normal_ordered(
                parts,
                i + 1,
                remaining - kk,
                budget - kk,
                &next,
                creators,
                &c,
                out,
            );
        } else {
            creators.push((-kk) as u32);
            normal_ordered(
                parts,
                i + 1,
                remaining - kk,
                budget,
                annihilated,
                creators,
                &c,
                out,
            );
            creators.pop();
        }
    }
}

/// The coefficient `u(k) v` of `Y(u, z) v = sum_k u(k) v z^{-k-1}`.
pub fn vertex_mode(u: &GradedVector, k: i64, v: &GradedVector) -> GradedVector {
    let mut out = GradedVector::zero();
    for (us, uc) in u.terms() {
        for (vs, vc) in v.terms() {
            let r = basis_mode(us, k, vs);
            out.add_scaled(&r, &(uc * vc));
        }
    }
    out
}

/// The zero-mode operator `o(v) = v(wt v - 1)`, extended additively over the
/// homogeneous components of `v`.
#[derive(Clone, Debug)]
pub struct ZeroMode {
    components: Vec<(u32, GradedVector)>,
}

impl ZeroMode {
    pub fn apply(&self, w: &GradedVector) -> GradedVector {
        let mut out = GradedVector::zero();
        for (wt, c) in &self.components {
            out.add_assign(&vertex_mode(c, i64::from(*wt) - 1, w));
        }
        out
    }
}

pub fn zero_mode(v: &GradedVector) -> ZeroMode {
    ZeroMode {
        components: v.components().into_iter().collect(),
    }
}

/// `L(n) = omega(n + 1)`.
pub fn virasoro(n: i64, v: &GradedVector) -> GradedVector {
    vertex_mode(&GradedVector::omega(), n + 1, v)
}

/// Whether `L(1) v = 0`.
pub fn is_quasi_primary(v: &GradedVector) -> bool {
    virasoro(1, v).is_zero()
}

type CoeffCache = Lazy<RwLock<HashMap<(u32, i64, i64), Rational>>>;

static BRACKET_COEFF: CoeffCache = Lazy::new(|| RwLock::new(HashMap::new()));

/// Coefficient `d(N, i, m)` in `v[m] = sum_{i >= m} d(N, i, m) v(i)` for a
/// state of weight `N`: the coefficient of `z^{-m-1}` in
/// `e^{N z} (e^z - 1)^{-i-1}`.
pub fn bracket_coefficient(wt: u32, i: i64, m: i64) -> Rational {
    if i < m {
        return Rational::zero();
    }
    let key = (wt, i, m);
    if let Some(hit) = BRACKET_COEFF.read().get(&key) {
        return hit.clone();
    }
    // (e^z - 1)^{-i-1} = z^{-i-1} g(z)^{-i-1}, so we need [z^{i-m}] e^{Nz} g^{-i-1}.
    let order = i - m;
    let g = exp_minus_one_over_z("z", order).expect("valid window");
    let gp = g.pow(-i - 1).expect("g(0) = 1 is invertible");
    let e = exp_series("z", &q(i64::from(wt)), order).expect("valid window");
    let prod = e
        .mul(&gp.restrict(0, order).expect("order available"))
        .expect("same variable");
    let c = prod.coeff(order);
    BRACKET_COEFF.write().insert(key, c.clone());
    c
}

/// The printed coefficient `c(wt, i, m)` defined by
/// `sum_m c(wt, i, m) x^m = C(wt - 1 + x, i)`.
pub fn printed_bracket_c(wt: u32, i: i64, m: i64) -> Rational {
    if i < 0 || m < 0 || m > i {
        return Rational::zero();
    }
    // Expand prod_{t=0}^{i-1} (wt - 1 - t + x) / i!.
    let mut poly = vec![Rational::one()];
    for t in 0..i {
        let c0 = q(i64::from(wt) - 1 - t);
        let mut next = vec![Rational::zero(); poly.len() + 1];
        for (d, a) in poly.iter().enumerate() {
            next[d] += a * &c0;
            next[d + 1] += a;
        }
        poly = next;
    }
    poly.get(m as usize).cloned().unwrap_or_else(Rational::zero) / factorial(i as u64)
}

/// Square-bracket mode `v[m]` applied to `w`, by linearity over the
/// homogeneous components of `v`. Valid for every integer `m`.
pub fn square_bracket_mode(v: &GradedVector, m: i64, w: &GradedVector) -> GradedVector {
    let mut out = GradedVector::zero();
    let wmax = i64::from(w.max_weight());
    for (wt, comp) in v.components() {
        let top = i64::from(wt) + wmax - 1;
        for i in m..=top {
            let d = bracket_coefficient(wt, i, m);
            if d.is_zero() {
                continue;
            }
            out.add_scaled(&vertex_mode(&comp, i, w), &d);
        }
    }
    out
}

/// Which grading and mode family a bilinear form or dual basis refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bracket {
    /// Round modes `a(n)` and the `L(0)` grading.
    Round,
    /// Square-bracket modes `a[n]` and the `L[0]` grading.
    Square,
}

static SQUARE_BASIS: Lazy<RwLock<HashMap<FockState, GradedVector>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// The square-bracket Fock state `a[-lambda_1] ... a[-lambda_k] 1`, expanded in
/// the round basis.
pub fn square_basis_state(s: &FockState) -> GradedVector {
    if let Some(hit) = SQUARE_BASIS.read().get(s) {
        return hit.clone();
    }
    let mut v = GradedVector::vacuum();
    for &p in s.parts().iter().rev() {
        v = square_bracket_mode(&GradedVector::a(), -i64::from(p), &v);
    }
    SQUARE_BASIS.write().insert(s.clone(), v.clone());
    v
}

/// Coordinates of `v` in the basis of states of the given bracket family.
/// For [`Bracket::Round`] this is the identity.
pub fn to_basis(v: &GradedVector, bracket: Bracket) -> BTreeMap<FockState, Rational> {
    match bracket {
        Bracket::Round => v.terms().map(|(s, c)| (s.clone(), c.clone())).collect(),
        Bracket::Square => {
            // The square state of a partition equals the round state plus
            // terms of strictly lower round weight: peel off the top weight.
            let mut rest = v.clone();
            let mut coords = BTreeMap::new();
            while !rest.is_zero() {
                let top = rest.max_weight();
                let leading: Vec<(FockState, Rational)> = rest
                    .terms()
                    .filter(|(s, _)| s.weight() == top)
                    .map(|(s, c)| (s.clone(), c.clone()))
                    .collect();
                for (s, c) in leading {
                    rest.add_scaled(&square_basis_state(&s), &-c.clone());
                    *coords.entry(s).or_insert_with(Rational::zero) += c;
                }
            }
            coords.retain(|_, c: &mut Rational| !c.is_zero());
            coords
        }
    }
}

fn family_mode(bracket: Bracket, n: i64, v: &GradedVector) -> GradedVector {
    match bracket {
        Bracket::Round => heisenberg_mode(n, v),
        Bracket::Square => square_bracket_mode(&GradedVector::a(), n, v),
    }
}

/// The invariant bilinear form `<x, y>` with parameter `alpha`, normalized by
/// `<1, 1> = 1`.
///
/// Computed by the adjoint construction: writing `x` in the Fock basis of the
/// chosen mode family, `<a(-n) x', y> = <x', a(-n)^dagger y>` with
/// `a(-n)^dagger = -alpha^{-n} a(n)`, down to the vacuum. The square-bracket
/// form runs the same construction with the modes `a[n]`.
pub fn bilinear_form(
    x: &GradedVector,
    y: &GradedVector,
    alpha: &Rational,
    bracket: Bracket,
) -> Rational {
    let mut total = Rational::zero();
    for (s, c) in to_basis(x, bracket) {
        total += c * basis_pairing(&s, y, alpha, bracket);
    }
    total
}

fn basis_pairing(s: &FockState, y: &GradedVector, alpha: &Rational, bracket: Bracket) -> Rational {
    let mut cur = y.clone();
    let mut factor = Rational::one();
    for &p in s.parts() {
        let n = i64::from(p);
        factor *= -pow_i(alpha, -n);
        cur = family_mode(bracket, n, &cur);
        if cur.is_zero() {
            return Rational::zero();
        }
    }
    let vac = match bracket {
        Bracket::Round => cur.vacuum_coeff(),
        Bracket::Square => to_basis(&cur, Bracket::Square)
            .get(&FockState::vacuum())
            .cloned()
            .unwrap_or_else(Rational::zero),
    };
    factor * vac
}

/// Basis of the weight-`r` space of the given family.
pub fn weight_basis(r: u32, bracket: Bracket) -> Vec<GradedVector> {
    partitions(r)
        .into_iter()
        .map(|s| match bracket {
            Bracket::Round => GradedVector::basis(s),
            Bracket::Square => square_basis_state(&s),
        })
        .collect()
}

/// Gram matrix of the form on a list of vectors.
pub fn gram_matrix(basis: &[GradedVector], alpha: &Rational, bracket: Bracket) -> Matrix<Rational> {
    let n = basis.len();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g.set(i, j, bilinear_form(&basis[i], &basis[j], alpha, bracket));
        }
    }
    g
}

/// Dual pairs `(u, u_bar)` for an arbitrary basis, with `<u_bar_a, u_b> = delta_ab`.
pub fn dual_of_basis(
    basis: &[GradedVector],
    alpha: &Rational,
    bracket: Bracket,
    weight: u32,
) -> Result<Vec<(GradedVector, GradedVector)>> {
    let g = gram_matrix(basis, alpha, bracket);
    let inv = g.inverse().map_err(|_| Error::SingularGram { weight })?;
    // u_bar_a = sum_c X_{ca} u_c with X^T G = 1, i.e. X = (G^{-1})^T.
    let x = inv.transpose();
    Ok(basis
        .iter()
        .enumerate()
        .map(|(a, u)| {
            let mut bar = GradedVector::zero();
            for (c, uc) in basis.iter().enumerate() {
                bar.add_scaled(uc, x.get(c, a));
            }
            (u.clone(), bar)
        })
        .collect())
}

/// Dual basis of the weight-`r` space (Fock basis of the given family).
pub fn dual_basis(
    r: u32,
    alpha: &Rational,
    bracket: Bracket,
) -> Result<Vec<(GradedVector, GradedVector)>> {
    dual_of_basis(&weight_basis(r, bracket), alpha, bracket, r)
}

/// Adjoint `u^dagger(n) = (-1)^{wt u} alpha^{n + 1 - wt u} u(2 wt u - n - 2)` of a
/// homogeneous quasi-primary `u`, applied to `b`.
pub fn adjoint_mode(
    u: &GradedVector,
    n: i64,
    b: &GradedVector,
    alpha: &Rational,
) -> Result<GradedVector> {
    let w = i64::from(u.weight()?);
    let c = crate::scalar::sign(w) * pow_i(alpha, n + 1 - w);
    Ok(vertex_mode(u, 2 * w - n - 2, b).scale(&c))
}

/// Outcome of a windowed commutator-formula check.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiReport {
    pub ok: bool,
    pub checked: usize,
    /// First failing mode index `n`, if any.
    pub counterexample: Option<i64>,
}

/// Checks `[u(k), v(n)] w = sum_{j>=0} C(k, j) (u(j) v)(k + n - j) w` for all
/// `n` in `n_window`.
pub fn jacobi_check(
    u: &GradedVector,
    v: &GradedVector,
    w: &GradedVector,
    k: i64,
    n_window: (i64, i64),
) -> JacobiReport {
    let jmax = i64::from(u.max_weight() + v.max_weight());
    let products: Vec<(i64, GradedVector)> = (0..=jmax)
        .map(|j| (j, vertex_mode(u, j, v)))
        .filter(|(_, s)| !s.is_zero())
        .collect();
    let mut checked = 0;
    for n in n_window.0..=n_window.1 {
        let lhs =
            vertex_mode(u, k, &vertex_mode(v, n, w)).sub(&vertex_mode(v, n, &vertex_mode(u, k, w)));
        let mut rhs = GradedVector::zero();
        for (j, s) in &products {
            rhs.add_scaled(&vertex_mode(s, k + n - j, w), &binomial(k, *j));
        }
        checked += 1;
        if lhs != rhs {
            return JacobiReport {
                ok: false,
                checked,
                counterexample: Some(n),
            };
        }
    }
    JacobiReport {
        ok: true,
        checked,
        counterexample: None,
    }
}

/// All basis states of weight at most `w`, ordered by weight.
pub fn basis_up_to(w: u32) -> Vec<FockState> {
    (0..=w).flat_map(partitions).collect()
}
