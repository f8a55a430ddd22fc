//! Genus-zero and genus-one correlation functions: brute-force mode-sum
//! oracles, the Zhu-type reduction recursions `F_{n+1} = (H_1 + H_2) F_n`,
//! cocycle residuals and the unwinding of a reduction word down to the
//! partition function.
//!
//! Conventions:
//! * Insertions are listed outermost first: `F(x_1, ..., x_n)` stands for
//!   `<u', Y(v_1, z_1) ... Y(v_n, z_n) u>` at genus zero (expanded in
//!   `|z_1| > ... > |z_n|`) and for `Tr Y(q_1^{L(0)} v_1, q_1) ... q^{L(0) - 1/24}`
//!   at genus one. A reduction step adds the new insertion in front.
//! * Genus-zero series use the point labels as variables.
//! * Genus-one series use the point labels for the variables `q_{z_i} = e^{z_i}`
//!   followed by `q`; the factor `q^{-1/24}` is carried as the exact tag
//!   [`CorrelationFn::q_shift`].
//! * Boundary states pair through the canonical Fock pairing
//!   `<u', w> = sum_lambda u'_lambda w_lambda`.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::elliptic::weierstrass_p_qz_coeff;
use crate::error::{Error, Result};
use crate::scalar::{binomial, pow_i, q, qf, sign, Rational};
use crate::series::MultiSeries;
use crate::voa::{
    partitions, square_bracket_mode, vertex_mode, weight_space_dim, zero_mode, FockState,
    GradedVector,
};

/// A state inserted at a labelled point: the pair `x = (v, z)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Insertion {
    pub state: GradedVector,
    pub point: String,
}

impl Insertion {
    pub fn new(state: GradedVector, point: &str) -> Self {
        Insertion {
            state,
            point: point.to_string(),
        }
    }

    /// Parses `state@point`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (s, p) = spec.rsplit_once('@').ok_or_else(|| {
            Error::Parse(format!("insertion `{spec}` must have the form state@point"))
        })?;
        let p = p.trim();
        if p.is_empty() || !p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') || p == "q" {
            return Err(Error::Parse(format!("bad point label `{p}`")));
        }
        Ok(Insertion::new(GradedVector::parse(s)?, p))
    }

    pub fn spec(&self) -> String {
        format!("{}@{}", self.state.literal(), self.point)
    }
}

/// Parses a comma-separated list of insertions (`a@z1,a@z2`).
pub fn parse_insertions(spec: &str) -> Result<Vec<Insertion>> {
    if spec.trim().is_empty() {
        return Ok(Vec::new());
    }
    spec.split(',').map(Insertion::parse).collect()
}

fn check_points(ins: &[Insertion]) -> Result<()> {
    for (i, a) in ins.iter().enumerate() {
        if ins[..i].iter().any(|b| b.point == a.point) {
            return Err(Error::InvalidArgument(format!(
                "point `{}` used twice",
                a.point
            )));
        }
    }
    Ok(())
}

/// Surface genus of a correlation function handled by this module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Genus {
    Zero,
    One,
}

impl Genus {
    pub fn as_u8(self) -> u8 {
        match self {
            Genus::Zero => 0,
            Genus::One => 1,
        }
    }
}

/// An n-point function together with the data that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationFn {
    pub genus: Genus,
    /// Outermost first.
    pub insertions: Vec<Insertion>,
    /// `(u', u)` at genus zero; `(1, 1)` at genus one.
    pub boundary: (GradedVector, GradedVector),
    pub value: MultiSeries<Rational>,
    /// Exponent shift of `q` carried symbolically (`-c/24` at genus one).
    pub q_shift: Rational,
}

impl CorrelationFn {
    pub fn n(&self) -> usize {
        self.insertions.len()
    }

    pub fn point_windows(&self) -> Vec<(i64, i64)> {
        self.value.window()[..self.n()].to_vec()
    }

    /// The q-order at genus one (0 at genus zero).
    pub fn q_order(&self) -> i64 {
        match self.genus {
            Genus::Zero => 0,
            Genus::One => self.value.window()[self.n()].1,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "genus": self.genus.as_u8(),
            "insertions": self.insertions.iter().map(Insertion::spec).collect::<Vec<_>>(),
            "boundary": [self.boundary.0.literal(), self.boundary.1.literal()],
            "q_shift": self.q_shift.to_string(),
            "value": self.value.to_json(),
        })
    }
}

/// Canonical pairing `<u', w>` in the Fock basis.
pub fn fock_pairing(u_dual: &GradedVector, w: &GradedVector) -> Rational {
    u_dual.terms().map(|(s, c)| c * w.coeff(s)).sum()
}

/// All tuples of basis terms of the given states, with the product coefficient.
fn basis_combos(states: &[GradedVector]) -> Vec<(Vec<FockState>, Rational)> {
    let mut out = vec![(Vec::new(), Rational::one())];
    for s in states {
        let mut next = Vec::new();
        for (prefix, c) in &out {
            for (b, x) in s.terms() {
                let mut p = prefix.clone();
                p.push(b.clone());
                next.push((p, c * x));
            }
        }
        out = next;
    }
    out
}

/// Exponent tuples in the box `windows` whose sum is `total`.
fn tuples_with_sum(windows: &[(i64, i64)], total: i64) -> Vec<Vec<i64>> {
    fn rec(w: &[(i64, i64)], total: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if w.len() == 1 {
            if w[0].0 <= total && total <= w[0].1 {
                prefix.push(total);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        let rest_lo: i64 = w[1..].iter().map(|x| x.0).sum();
        let rest_hi: i64 = w[1..].iter().map(|x| x.1).sum();
        for e in w[0].0..=w[0].1 {
            let r = total - e;
            if r < rest_lo || r > rest_hi {
                continue;
            }
            prefix.push(e);
            rec(&w[1..], r, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if windows.is_empty() {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(windows, total, &mut Vec::new(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Genus zero
// ---------------------------------------------------------------------------

fn genus0_vars(ins: &[Insertion]) -> Vec<String> {
    ins.iter().map(|i| i.point.clone()).collect()
}

/// Brute-force oracle: `<u', v_1(k_1) ... v_n(k_n) u>` with `k_i = -e_i - 1`
/// for every exponent tuple in the box `windows` (one range per insertion).
pub fn genus0_direct(
    insertions: &[Insertion],
    boundary: (&GradedVector, &GradedVector),
    windows: &[(i64, i64)],
) -> Result<CorrelationFn> {
    check_points(insertions)?;
    if windows.len() != insertions.len() {
        return Err(Error::DimensionMismatch("one window per insertion".into()));
    }
    let vars = genus0_vars(insertions);
    let mut value = MultiSeries::new(&vars, windows)?;
    let (u_dual, u) = boundary;
    // Innermost first: map from exponent suffix to the partial vector.
    let mut partial: Vec<(Vec<i64>, GradedVector)> = vec![(Vec::new(), u.clone())];
    for (i, ins) in insertions.iter().enumerate().rev() {
        let next: Vec<(Vec<i64>, GradedVector)> = partial
            .par_iter()
            .flat_map_iter(|(suffix, vec)| {
                (windows[i].0..=windows[i].1).filter_map(move |e| {
                    let w = vertex_mode(&ins.state, -e - 1, vec);
                    if w.is_zero() {
                        return None;
                    }
                    let mut s = vec![e];
                    s.extend_from_slice(suffix);
                    Some((s, w))
                })
            })
            .collect();
        partial = next;
    }
    for (exps, vec) in partial {
        value.accumulate(&exps, fock_pairing(u_dual, &vec));
    }
    Ok(CorrelationFn {
        genus: Genus::Zero,
        insertions: insertions.to_vec(),
        boundary: (u_dual.clone(), u.clone()),
        value,
        q_shift: Rational::zero(),
    })
}

/// The genus-zero partition function `F_0 = <u', u>`.
pub fn genus0_partition(u_dual: &GradedVector, u: &GradedVector) -> Result<CorrelationFn> {
    genus0_direct(&[], (u_dual, u), &[])
}

type G0Key = (Vec<FockState>, Vec<i64>);
static G0_CACHE: Lazy<RwLock<HashMap<G0Key, Rational>>> = Lazy::new(|| RwLock::new(HashMap::new()));

/// Recursive coefficient of `<1', Y(s_0, z_0) ... Y(s_n, z_n) 1>` at
/// `prod z_i^{e_i}`, built by repeatedly peeling off the outermost insertion:
/// `F(x_0, x) = z_0^{-N} o(s_0)|_{V_0} F(x) + sum_k sum_m f_{N,m}(z_0, z_k) F(.., s_0(m) s_k, ..)`
/// with `f_{N,m}(z, w) = sum_j C(N+j, m) z^{-N-j-1} w^{N+j-m}`.
fn g0_coeff(states: &[FockState], exps: &[i64]) -> Rational {
    if states.is_empty() {
        return Rational::one();
    }
    let total_wt: i64 = states.iter().map(|s| i64::from(s.weight())).sum();
    if exps.iter().sum::<i64>() + total_wt != 0 {
        return Rational::zero();
    }
    let key = (states.to_vec(), exps.to_vec());
    if let Some(hit) = G0_CACHE.read().get(&key) {
        return hit.clone();
    }
    let v = GradedVector::basis(states[0].clone());
    let n_wt = i64::from(states[0].weight());
    let e0 = exps[0];
    let mut res = Rational::zero();
    // First term: the zero mode restricted to the vacuum line.
    if e0 == -n_wt {
        let scalar = zero_mode(&v).apply(&GradedVector::vacuum()).vacuum_coeff();
        if !scalar.is_zero() {
            res += scalar * g0_coeff(&states[1..], &exps[1..]);
        }
    }
    // Second term: the kernel sums.
    let j = -e0 - n_wt - 1;
    if j >= 0 {
        for k in 1..states.len() {
            let sk = GradedVector::basis(states[k].clone());
            let top = n_wt + i64::from(states[k].weight()) - 1;
            for m in 0..=top {
                let c = binomial(n_wt + j, m);
                if c.is_zero() {
                    continue;
                }
                let w = vertex_mode(&v, m, &sk);
                for (t, ct) in w.terms() {
                    let mut ns = states[1..].to_vec();
                    ns[k - 1] = t.clone();
                    let mut ne = exps[1..].to_vec();
                    ne[k - 1] -= n_wt + j - m;
                    res += &c * ct * g0_coeff(&ns, &ne);
                }
            }
        }
    }
    G0_CACHE.write().insert(key, res.clone());
    res
}

fn require_vacuum_line(v: &GradedVector, what: &str) -> Result<()> {
    if v.terms().any(|(s, _)| !s.is_vacuum()) {
        return Err(Error::BoundaryNotVacuum(format!("{what} = {v}")));
    }
    Ok(())
}

/// One genus-zero reduction step: returns `F_{n+1}(x_{n+1}, x_n)` with the new
/// insertion outermost, over the box `window x F.window`.
///
/// The first term reads the values of `f` directly; the kernel sums need
/// `F_n` at modified states and are evaluated by the same recursion down to
/// `F_0 = <u', u>`. Both boundary states must lie in `V_0`.
pub fn genus0_reduce(
    direction: &Insertion,
    window: (i64, i64),
    f: &CorrelationFn,
) -> Result<CorrelationFn> {
    if f.genus != Genus::Zero {
        return Err(Error::InvalidArgument(
            "genus0_reduce needs a genus-zero function".into(),
        ));
    }
    require_vacuum_line(&f.boundary.0, "u'")?;
    require_vacuum_line(&f.boundary.1, "u")?;
    let n_wt = i64::from(direction.state.weight()?);
    let mut insertions = vec![direction.clone()];
    insertions.extend(f.insertions.iter().cloned());
    check_points(&insertions)?;
    let mut windows = vec![window];
    windows.extend(f.point_windows());
    let scale = f.boundary.0.vacuum_coeff() * f.boundary.1.vacuum_coeff();
    let vac_scalar = zero_mode(&direction.state)
        .apply(&GradedVector::vacuum())
        .vacuum_coeff();

    let mut value = MultiSeries::new(&genus0_vars(&insertions), &windows)?;
    let states: Vec<GradedVector> = insertions.iter().map(|i| i.state.clone()).collect();
    let mut contributions: Vec<(Vec<i64>, Rational)> = Vec::new();
    // First term: z^{-N} o(v)|_{V_0} F_n, read off the given function.
    if window.0 <= -n_wt && -n_wt <= window.1 && !vac_scalar.is_zero() {
        for (e, c) in f.value.terms() {
            let mut ex = vec![-n_wt];
            ex.extend_from_slice(e);
            contributions.push((ex, &vac_scalar * c));
        }
    }
    // Kernel sums, coefficient by coefficient.
    let mut jobs = Vec::new();
    for (combo, c) in basis_combos(&states) {
        let wt: i64 = combo.iter().map(|s| i64::from(s.weight())).sum();
        for ex in tuples_with_sum(&windows, -wt) {
            jobs.push((combo.clone(), c.clone(), ex));
        }
    }
    let kernel: Vec<(Vec<i64>, Rational)> = jobs
        .par_iter()
        .filter_map(|(combo, c, ex)| {
            let x = kernel_term_g0(combo, ex);
            (!x.is_zero()).then(|| (ex.clone(), c * x * &scale))
        })
        .collect();
    contributions.extend(kernel);
    for (e, c) in contributions {
        value.accumulate(&e, c);
    }
    Ok(CorrelationFn {
        genus: Genus::Zero,
        insertions,
        boundary: f.boundary.clone(),
        value,
        q_shift: Rational::zero(),
    })
}

/// The kernel-sum part of [`g0_coeff`] for the outermost insertion.
fn kernel_term_g0(states: &[FockState], exps: &[i64]) -> Rational {
    let n_wt = i64::from(states[0].weight());
    if exps[0] == -n_wt {
        // Only the zero-mode term lives at this exponent.
        return Rational::zero();
    }
    g0_coeff(states, exps)
}

/// Evaluates `<1', Y(v_1, x_1) ... Y(v_n, x_n) 1>` at exact rational points by
/// Wick contraction of the free-field factors: a state `a(-n_1)...a(-n_r)1`
/// contributes the normal-ordered product of `d^{(n_i - 1)} a(x)`, and two
/// factors of orders `m` (at `x`) and `n` (at `y`) contract to
/// `(-1)^{m-1} n C(m+n-1, m-1) / (x - y)^{m+n}`.
pub fn genus0_wick(insertions: &[(GradedVector, Rational)]) -> Result<Rational> {
    for (i, a) in insertions.iter().enumerate() {
        if insertions[..i].iter().any(|b| b.1 == a.1) {
            return Err(Error::InvalidArgument(
                "Wick evaluation needs distinct points".into(),
            ));
        }
    }
    let points: Vec<Rational> = insertions.iter().map(|x| x.1.clone()).collect();
    let states: Vec<GradedVector> = insertions.iter().map(|x| x.0.clone()).collect();
    let mut memo = HashMap::new();
    let mut total = Rational::zero();
    for (combo, c) in basis_combos(&states) {
        total += c * wick_rec(&combo, &points, &mut memo);
    }
    Ok(total)
}

/// Contraction of a factor of order `m` at `x` with one of order `n` at `y`.
pub fn wick_propagator(m: i64, x: &Rational, n: i64, y: &Rational) -> Rational {
    sign(m - 1) * q(n) * binomial(m + n - 1, m - 1) * pow_i(&(x - y), -(m + n))
}

fn wick_rec(
    parts: &[FockState],
    points: &[Rational],
    memo: &mut HashMap<Vec<FockState>, Rational>,
) -> Rational {
    let Some(i) = parts.iter().position(|p| !p.is_vacuum()) else {
        return Rational::one();
    };
    if let Some(hit) = memo.get(parts) {
        return hit.clone();
    }
    let m = parts[i].parts()[0];
    let mut rest = parts.to_vec();
    rest[i] = FockState::new(parts[i].parts()[1..].to_vec()).expect("positive parts");
    let mut total = Rational::zero();
    for j in 0..parts.len() {
        if j == i {
            continue;
        }
        let mut seen = Vec::new();
        for &n in parts[j].parts() {
            if seen.contains(&n) {
                continue;
            }
            seen.push(n);
            let mult = q(i64::from(parts[j].multiplicity(n)));
            let mut next = rest.clone();
            let mut pj = parts[j].parts().to_vec();
            let pos = pj.iter().position(|&x| x == n).expect("part present");
            pj.remove(pos);
            next[j] = FockState::new(pj).expect("positive parts");
            let prop = wick_propagator(i64::from(m), &points[i], i64::from(n), &points[j]);
            total += mult * prop * wick_rec(&next, points, memo);
        }
    }
    memo.insert(parts.to_vec(), total.clone());
    total
}

// ---------------------------------------------------------------------------
// Genus one
// ---------------------------------------------------------------------------

/// The `q^{-c/24}` tag of the Heisenberg trace (`c = 1`).
pub fn central_shift() -> Rational {
    qf(-1, 24)
}

fn genus1_vars(ins: &[Insertion]) -> Vec<String> {
    let mut v: Vec<String> = ins.iter().map(|i| i.point.clone()).collect();
    v.push("q".into());
    v
}

/// The genus-one partition function `sum_M dim V_M q^M` (times the tag `q^{-1/24}`).
pub fn genus1_partition(q_order: i64) -> Result<CorrelationFn> {
    genus1_direct(&[], q_order, &[])
}

/// Brute-force oracle: `Tr_{V_M} v_1(k_1) ... v_n(k_n)` with
/// `k_i = wt v_i - 1 - e_i`, for `M <= q_order` and the exponent box
/// `windows`, computed state by state over the Fock basis of `V_M`.
/// Every state must be homogeneous.
pub fn genus1_direct(
    insertions: &[Insertion],
    q_order: i64,
    windows: &[(i64, i64)],
) -> Result<CorrelationFn> {
    check_points(insertions)?;
    if windows.len() != insertions.len() {
        return Err(Error::DimensionMismatch("one window per insertion".into()));
    }
    if q_order < 0 {
        return Err(Error::InvalidWindow {
            var: "q".into(),
            lo: 0,
            hi: q_order,
        });
    }
    let weights: Vec<i64> = insertions
        .iter()
        .map(|i| i.state.weight().map(i64::from))
        .collect::<Result<_>>()?;
    let mut win = windows.to_vec();
    win.push((0, q_order));
    let mut value = MultiSeries::new(&genus1_vars(insertions), &win)?;
    let n = insertions.len();
    let rows: Vec<(Vec<i64>, Rational)> = (0..=q_order)
        .into_par_iter()
        .flat_map_iter(|m_wt| {
            let mut out = Vec::new();
            for s in partitions(m_wt as u32) {
                let mut partial: Vec<(Vec<i64>, GradedVector)> =
                    vec![(Vec::new(), GradedVector::basis(s.clone()))];
                for i in (0..n).rev() {
                    let mut next = Vec::new();
                    for (suffix, vec) in &partial {
                        let cur_wt = m_wt + suffix.iter().sum::<i64>();
                        for e in windows[i].0..=windows[i].1 {
                            // Intermediate weights stay nonnegative; the outermost closes the trace.
                            if cur_wt + e < 0 || (i == 0 && cur_wt + e != m_wt) {
                                continue;
                            }
                            let w = vertex_mode(&insertions[i].state, weights[i] - 1 - e, vec);
                            if w.is_zero() {
                                continue;
                            }
                            let mut sfx = vec![e];
                            sfx.extend_from_slice(suffix);
                            next.push((sfx, w));
                        }
                    }
                    partial = next;
                }
                for (mut exps, vec) in partial {
                    let c = vec.coeff(&s);
                    if !c.is_zero() {
                        exps.push(m_wt);
                        out.push((exps, c));
                    }
                }
            }
            out
        })
        .collect();
    for (e, c) in rows {
        value.accumulate(&e, c);
    }
    Ok(CorrelationFn {
        genus: Genus::One,
        insertions: insertions.to_vec(),
        boundary: (GradedVector::vacuum(), GradedVector::vacuum()),
        value,
        q_shift: central_shift(),
    })
}

/// A mode `v(k)` of a basis state, recorded by the weight it adds,
/// `j = wt v - k - 1`.
type ModeFactor = (FockState, i64);

/// Memo table keyed by a product of factors and a weight.
type TraceCache<K> = Lazy<RwLock<HashMap<(Vec<K>, i64), Rational>>>;

static TRACE_CACHE: TraceCache<ModeFactor> = Lazy::new(|| RwLock::new(HashMap::new()));
static ZERO_TRACE_CACHE: TraceCache<FockState> = Lazy::new(|| RwLock::new(HashMap::new()));

/// `Tr_{V_M} o(u_1) ... o(u_r)` for a product of zero modes, computed on the
/// Fock basis.
fn zero_mode_trace(states: &[FockState], m_wt: i64) -> Rational {
    if m_wt < 0 {
        return Rational::zero();
    }
    if states.is_empty() {
        return q(weight_space_dim(m_wt as u32) as i64);
    }
    let key = (states.to_vec(), m_wt);
    if let Some(hit) = ZERO_TRACE_CACHE.read().get(&key) {
        return hit.clone();
    }
    let ops: Vec<_> = states
        .iter()
        .map(|s| zero_mode(&GradedVector::basis(s.clone())))
        .collect();
    let mut total = Rational::zero();
    for s in partitions(m_wt as u32) {
        let mut v = GradedVector::basis(s.clone());
        for op in ops.iter().rev() {
            v = op.apply(&v);
            if v.is_zero() {
                break;
            }
        }
        total += v.coeff(&s);
    }
    ZERO_TRACE_CACHE.write().insert(key, total.clone());
    total
}

/// Terms `(shift, c)` of the q-expansion of `-1/(1 - q^j)` up to `q^max`.
fn minus_geometric(j: i64, max: i64) -> Vec<(i64, Rational)> {
    let step = j.abs();
    let (start, c) = if j > 0 {
        (0, -Rational::one())
    } else {
        (1, Rational::one())
    };
    (start..)
        .map(|r| r * step)
        .take_while(|&s| s <= max)
        .map(|s| (s, c.clone()))
        .collect()
}

/// Commutator `[v(k), w(l)] = sum_m C(k, m) (v(m) w)(k + l - m)`, returned as
/// mode factors (the weight added is additive).
fn commutator(v: &ModeFactor, w: &ModeFactor) -> Vec<(ModeFactor, Rational)> {
    let (vs, vj) = v;
    let (ws, wj) = w;
    let vwt = i64::from(vs.weight());
    let k = vwt - 1 - vj;
    let vg = GradedVector::basis(vs.clone());
    let wg = GradedVector::basis(ws.clone());
    let mut acc: BTreeMap<FockState, Rational> = BTreeMap::new();
    for m in 0..=(vwt + i64::from(ws.weight()) - 1) {
        let c = binomial(k, m);
        if c.is_zero() {
            continue;
        }
        for (t, ct) in vertex_mode(&vg, m, &wg).terms() {
            *acc.entry(t.clone()).or_insert_with(Rational::zero) += &c * ct;
        }
    }
    acc.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(t, c)| ((t, vj + wj), c))
        .collect()
}

/// `Tr_{V_M} f_1 ... f_p` for a product of modes, by the cyclic-commutator
/// recursion: for the first factor `v(k)` that shifts weight by `j != 0`,
/// with zero modes `A` before it and the rest `B` after,
/// `Tr(A v(k) B q^L) (1 - q^j) = -q^j Tr(A [v(k), B] q^L) - Tr([v(k), A] B q^L)`.
/// Products of zero modes are traced on the Fock basis.
pub fn mode_trace(factors: &[(FockState, i64)], m_wt: i64) -> Rational {
    if m_wt < 0 || factors.iter().map(|f| f.1).sum::<i64>() != 0 {
        return Rational::zero();
    }
    let Some(t) = factors.iter().position(|f| f.1 != 0) else {
        let states: Vec<FockState> = factors.iter().map(|f| f.0.clone()).collect();
        return zero_mode_trace(&states, m_wt);
    };
    let key = (factors.to_vec(), m_wt);
    if let Some(hit) = TRACE_CACHE.read().get(&key) {
        return hit.clone();
    }
    let v = &factors[t];
    let j = v.1;
    // Reduced products, one per commutator term: (list, coefficient, extra q-shift).
    let mut reduced: Vec<(Vec<ModeFactor>, Rational, i64)> = Vec::new();
    for b in 0..factors.len() {
        if b == t {
            continue;
        }
        let extra = if b > t { j } else { 0 };
        for (nf, c) in commutator(v, &factors[b]) {
            let mut list: Vec<ModeFactor> = Vec::with_capacity(factors.len() - 1);
            for (i, f) in factors.iter().enumerate() {
                if i == t {
                    continue;
                }
                list.push(if i == b { nf.clone() } else { f.clone() });
            }
            reduced.push((list, c, extra));
        }
    }
    let mut total = Rational::zero();
    for (shift, g) in minus_geometric(j, m_wt + j.abs()) {
        for (list, c, extra) in &reduced {
            let target = m_wt - shift - extra;
            if target < 0 {
                continue;
            }
            let x = mode_trace(list, target);
            if !x.is_zero() {
                total += &g * c * x;
            }
        }
    }
    TRACE_CACHE.write().insert(key, total.clone());
    total
}

type G1Key = (Vec<FockState>, Vec<i64>, i64);
static G1_CACHE: Lazy<RwLock<HashMap<G1Key, Rational>>> = Lazy::new(|| RwLock::new(HashMap::new()));

/// Recursive genus-one coefficient at `prod q_{z_i}^{e_i} q^M`, peeling off the
/// outermost insertion `v = s_0` of weight `N` with `j = e_0`:
/// * `j = 0`: the first term, the trace with `o(v)` inserted;
/// * `j != 0`: `sum_k sum_m P_{m+1}(z_0 - z_k) F(.., v[m] s_k, ..)`, where the
///   coefficient of `(q_{z_0}/q_{z_k})^j` in `P_{m+1}(z_0 - z_k)` is read off the
///   q_z-expansion of `P_{m+1}` in the variable `q_{z_k}/q_{z_0}`.
fn g1_coeff(states: &[FockState], exps: &[i64], m_wt: i64) -> Rational {
    if m_wt < 0 || exps.iter().sum::<i64>() != 0 {
        return Rational::zero();
    }
    if states.is_empty() {
        return q(weight_space_dim(m_wt as u32) as i64);
    }
    let key = (states.to_vec(), exps.to_vec(), m_wt);
    if let Some(hit) = G1_CACHE.read().get(&key) {
        return hit.clone();
    }
    let j = exps[0];
    let res = if j == 0 {
        let factors: Vec<ModeFactor> = states.iter().cloned().zip(exps.iter().copied()).collect();
        mode_trace(&factors, m_wt)
    } else {
        g1_kernel_term(states, exps, m_wt)
    };
    G1_CACHE.write().insert(key, res.clone());
    res
}

fn g1_kernel_term(states: &[FockState], exps: &[i64], m_wt: i64) -> Rational {
    let j = exps[0];
    let v = GradedVector::basis(states[0].clone());
    let n_wt = i64::from(states[0].weight());
    let mut res = Rational::zero();
    for k in 1..states.len() {
        let sk = GradedVector::basis(states[k].clone());
        for m in 0..=(n_wt + i64::from(states[k].weight()) - 1) {
            let w = square_bracket_mode(&v, m, &sk);
            if w.is_zero() {
                continue;
            }
            for s in (0..=m_wt).step_by(j.unsigned_abs() as usize) {
                // P_{m+1}(z_0 - z_k) = (-1)^{m+1} P_{m+1}(z_k - z_0).
                let p = sign(m + 1) * weierstrass_p_qz_coeff(m + 1, -j, s);
                if p.is_zero() {
                    continue;
                }
                for (t, ct) in w.terms() {
                    let mut ns = states[1..].to_vec();
                    ns[k - 1] = t.clone();
                    let mut ne = exps[1..].to_vec();
                    ne[k - 1] += j;
                    let x = g1_coeff(&ns, &ne, m_wt - s);
                    if !x.is_zero() {
                        res += &p * ct * x;
                    }
                }
            }
        }
    }
    res
}

/// One genus-one reduction step, adding `direction` as the outermost
/// insertion with q_z-window `window`; the q-order is that of `f`.
pub fn genus1_reduce(
    direction: &Insertion,
    window: (i64, i64),
    f: &CorrelationFn,
) -> Result<CorrelationFn> {
    if f.genus != Genus::One {
        return Err(Error::InvalidArgument(
            "genus1_reduce needs a genus-one function".into(),
        ));
    }
    direction.state.weight()?;
    let mut insertions = vec![direction.clone()];
    insertions.extend(f.insertions.iter().cloned());
    check_points(&insertions)?;
    let q_order = f.q_order();
    let mut windows = vec![window];
    windows.extend(f.point_windows());
    let mut full = windows.clone();
    full.push((0, q_order));
    let mut value = MultiSeries::new(&genus1_vars(&insertions), &full)?;
    let states: Vec<GradedVector> = insertions.iter().map(|i| i.state.clone()).collect();
    let mut jobs = Vec::new();
    for (combo, c) in basis_combos(&states) {
        for ex in tuples_with_sum(&windows, 0) {
            for m_wt in 0..=q_order {
                jobs.push((combo.clone(), c.clone(), ex.clone(), m_wt));
            }
        }
    }
    let rows: Vec<(Vec<i64>, Rational)> = jobs
        .par_iter()
        .filter_map(|(combo, c, ex, m_wt)| {
            let x = g1_coeff(combo, ex, *m_wt);
            if x.is_zero() {
                return None;
            }
            let mut e = ex.clone();
            e.push(*m_wt);
            Some((e, c * x))
        })
        .collect();
    for (e, c) in rows {
        value.accumulate(&e, c);
    }
    Ok(CorrelationFn {
        genus: Genus::One,
        insertions,
        boundary: f.boundary.clone(),
        value,
        q_shift: f.q_shift.clone(),
    })
}

/// Dispatches a reduction step by genus.
pub fn reduce(
    direction: &Insertion,
    window: (i64, i64),
    f: &CorrelationFn,
) -> Result<CorrelationFn> {
    match f.genus {
        Genus::Zero => genus0_reduce(direction, window, f),
        Genus::One => genus1_reduce(direction, window, f),
    }
}

/// `H(x_{n+1}) F`: `F` is a cocycle in this direction iff the result vanishes
/// identically on the window.
pub fn cocycle_residual(
    direction: &Insertion,
    window: (i64, i64),
    f: &CorrelationFn,
) -> Result<MultiSeries<Rational>> {
    Ok(reduce(direction, window, f)?.value)
}

/// Result of applying a word of reduction operators to the partition function.
#[derive(Clone, Debug)]
pub struct Unwound {
    pub function: CorrelationFn,
    /// The operator word, e.g. `H(a@z2) H(a@z1) F_0`.
    pub word: String,
    /// Steps (1-based) after which the function vanished identically on its window.
    pub zero_steps: Vec<usize>,
}

/// Applies `directions` in order to the partition function (`F_0 = <1, 1>`
/// at genus zero, `Z` to `q_order` at genus one). Each step puts its insertion
/// outermost.
pub fn unwind_to_partition(
    genus: Genus,
    directions: &[(Insertion, (i64, i64))],
    q_order: i64,
) -> Result<Unwound> {
    let mut f = match genus {
        Genus::Zero => genus0_partition(&GradedVector::vacuum(), &GradedVector::vacuum())?,
        Genus::One => genus1_partition(q_order)?,
    };
    let mut word = String::from("F_0");
    let mut zero_steps = Vec::new();
    for (i, (d, w)) in directions.iter().enumerate() {
        f = reduce(d, *w, &f)?;
        word = format!("H({}) {word}", d.spec());
        if f.value.is_zero() {
            zero_steps.push(i + 1);
        }
    }
    Ok(Unwound {
        function: f,
        word,
        zero_steps,
    })
}
