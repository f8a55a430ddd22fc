//! Eisenstein series, the higher Weierstrass functions `P_m` in their two
//! formal expansions, and the genus-zero rational kernels `f_{n,m}(z, w)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::{binomial, factorial, q, sigma, sign, Rational};
use crate::series::{MultiSeries, Series};

static BERNOULLI: Lazy<RwLock<Vec<Rational>>> = Lazy::new(|| RwLock::new(vec![Rational::one()]));

/// Bernoulli number `B_n` (with `B_1 = -1/2`), from the recurrence
/// `sum_{k=0}^{n} C(n+1, k) B_k = 0`; cached.
pub fn bernoulli(n: usize) -> Rational {
    if let Some(b) = BERNOULLI.read().get(n) {
        return b.clone();
    }
    let mut table = BERNOULLI.write();
    while table.len() <= n {
        let m = table.len();
        let mut acc = Rational::zero();
        for (k, b) in table.iter().enumerate() {
            acc += binomial(m as i64 + 1, k as i64) * b;
        }
        table.push(-acc / q(m as i64 + 1));
    }
    table[n].clone()
}

/// `E_k(q) = -B_k/k! + 2/(k-1)! sum_{n>=1} sigma_{k-1}(n) q^n` for even `k`,
/// and zero for odd `k`, truncated at `q^order`.
pub fn eisenstein(k: i64, order: i64) -> Result<Series<Rational>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "Eisenstein weight k = {k} must be >= 2"
        )));
    }
    let mut s = Series::new("q", 0, order)?;
    if k % 2 != 0 {
        return Ok(s);
    }
    s.accumulate(0, -bernoulli(k as usize) / factorial(k as u64));
    let pref = q(2) / factorial(k as u64 - 1);
    for n in 1..=order {
        let sg = Rational::from_integer(sigma(k as u32 - 1, n as u64));
        s.accumulate(n, &pref * sg);
    }
    Ok(s)
}

/// A table of Eisenstein series `E_2 .. E_{max_k}` to a common q-order.
#[derive(Clone, Debug)]
pub struct EisensteinTable {
    max_k: i64,
    q_order: i64,
    table: BTreeMap<i64, Series<Rational>>,
}

impl EisensteinTable {
    pub fn new(max_k: i64, q_order: i64) -> Result<Self> {
        let mut table = BTreeMap::new();
        for k in 2..=max_k.max(2) {
            table.insert(k, eisenstein(k, q_order)?);
        }
        Ok(EisensteinTable {
            max_k,
            q_order,
            table,
        })
    }

    pub fn max_k(&self) -> i64 {
        self.max_k
    }

    pub fn q_order(&self) -> i64 {
        self.q_order
    }

    /// `E_k`, or an error if `k` is outside the table.
    pub fn get(&self, k: i64) -> Result<&Series<Rational>> {
        self.table.get(&k).ok_or_else(|| {
            Error::InsufficientOrder(format!("E_{k} not in table (max {})", self.max_k))
        })
    }
}

/// A higher Weierstrass function `P_m` expanded in `(z, q)`.
#[derive(Clone, Debug)]
pub struct WeierstrassP {
    pub m: i64,
    pub expansion: MultiSeries<Rational>,
}

/// `P_1(z) = 1/z - sum_{k>=2} E_k(q) z^{k-1}` and
/// `P_m = (-1)^{m-1}/(m-1)! d^{m-1}/dz^{m-1} P_1`, as a series in `(z, q)` with
/// z-window `[-m, z_order]` and q-window `[0, q_order]`.
pub fn weierstrass_p(m: i64, z_order: i64, q_order: i64) -> Result<WeierstrassP> {
    if m < 1 {
        return Err(Error::InvalidArgument(format!("P_m needs m >= 1, got {m}")));
    }
    if z_order < -m {
        return Err(Error::InvalidWindow {
            var: "z".into(),
            lo: -m,
            hi: z_order,
        });
    }
    let p1_order = z_order + m - 1;
    let mut p1 = MultiSeries::new(&["z", "q"], &[(-1, p1_order), (0, q_order)])?;
    p1.accumulate(&[-1, 0], Rational::one());
    for k in 2..=(p1_order + 1) {
        for (e, c) in eisenstein(k, q_order)?.terms() {
            p1.accumulate(&[k - 1, e], -c.clone());
        }
    }
    let mut pm = p1;
    for _ in 1..m {
        pm = pm.derivative(0);
    }
    let expansion = pm
        .scale(&(sign(m - 1) / factorial(m as u64 - 1)))
        .restrict(&[(-m, z_order), (0, q_order)])?;
    Ok(WeierstrassP { m, expansion })
}

/// `P_m = (-1)^m/(m-1)! sum_{n != 0} n^{m-1} q_z^n / (1 - q^n)` as a series in
/// `(qz, q)`, expanded for `|q| < |q_z| < 1`: `1/(1-q^n)` is expanded in `q`,
/// and for `n < 0` the term is rewritten as `-q_z^n sum_{r>=1} q^{|n| r}`.
/// The q_z-window is `[-q_order, qz_order]`.
pub fn weierstrass_p_qz(m: i64, qz_order: i64, q_order: i64) -> Result<MultiSeries<Rational>> {
    if m < 1 {
        return Err(Error::InvalidArgument(format!("P_m needs m >= 1, got {m}")));
    }
    let mut out = MultiSeries::new(&["qz", "q"], &[(-q_order.max(0), qz_order), (0, q_order)])?;
    for n in -q_order..=qz_order {
        if n == 0 {
            continue;
        }
        for s in 0..=q_order {
            out.accumulate(&[n, s], weierstrass_p_qz_coeff(m, n, s));
        }
    }
    Ok(out)
}

/// Coefficient of `q_z^n q^s` in the q_z-expansion of `P_m` (see
/// [`weierstrass_p_qz`]).
pub fn weierstrass_p_qz_coeff(m: i64, n: i64, s: i64) -> Rational {
    if m < 1 || n == 0 || s < 0 || s % n.abs() != 0 || (n < 0 && s == 0) {
        return Rational::zero();
    }
    let c = sign(m) / factorial(m as u64 - 1)
        * Rational::from_integer(BigInt::from(n).pow(m as u32 - 1));
    if n > 0 {
        c
    } else {
        -c
    }
}

/// Bivariate polynomial in `(z, w)` with nonnegative exponents.
pub type Poly2 = BTreeMap<(i64, i64), Rational>;

/// The normalized rational function `N(z, w) / (z^a (z - w)^b)`: no power of `z`
/// divides `N`, and `N` is not divisible by `z - w` unless `b = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalForm {
    pub numerator: Poly2,
    pub z_power: i64,
    pub zw_power: i64,
}

fn poly_add(p: &mut Poly2, e: (i64, i64), c: Rational) {
    if c.is_zero() {
        return;
    }
    let x = p.entry(e).or_insert_with(Rational::zero);
    *x += c;
    if x.is_zero() {
        p.remove(&e);
    }
}

fn poly_mul(a: &Poly2, b: &Poly2) -> Poly2 {
    let mut out = Poly2::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            poly_add(&mut out, (ea.0 + eb.0, ea.1 + eb.1), ca * cb);
        }
    }
    out
}

/// `(z - w)^k` for `k >= 0`.
fn zw_pow(k: i64) -> Poly2 {
    let mut p = Poly2::new();
    for i in 0..=k {
        poly_add(&mut p, (k - i, i), binomial(k, i) * sign(i));
    }
    p
}

impl RationalForm {
    pub fn new(numerator: Poly2, z_power: i64, zw_power: i64) -> Self {
        let mut f = RationalForm {
            numerator,
            z_power,
            zw_power,
        };
        f.normalize();
        f
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_empty()
    }

    fn normalize(&mut self) {
        self.numerator.retain(|_, c| !c.is_zero());
        if self.numerator.is_empty() {
            self.z_power = 0;
            self.zw_power = 0;
            return;
        }
        let zmin = self.numerator.keys().map(|e| e.0).min().unwrap_or(0);
        if zmin != 0 {
            self.numerator = self
                .numerator
                .iter()
                .map(|(e, c)| ((e.0 - zmin, e.1), c.clone()))
                .collect();
            self.z_power -= zmin;
        }
        while self.zw_power > 0 {
            match divide_by_z_minus_w(&self.numerator) {
                Some(qt) => {
                    self.numerator = qt;
                    self.zw_power -= 1;
                }
                None => break,
            }
        }
    }

    /// Exact equality of the rational functions, by cross-multiplication.
    pub fn equals(&self, other: &RationalForm) -> bool {
        let za = self.z_power.max(other.z_power);
        let zb = self.zw_power.max(other.zw_power);
        let lift = |f: &RationalForm| {
            let mut p = poly_mul(&f.numerator, &zw_pow(zb - f.zw_power));
            p = p
                .into_iter()
                .map(|(e, c)| ((e.0 + za - f.z_power, e.1), c))
                .collect();
            p
        };
        lift(self) == lift(other)
    }

    /// Partial derivative in `w`.
    pub fn d_w(&self) -> RationalForm {
        // d/dw [N / (z^a (z-w)^b)] = (N_w (z - w) + b N) / (z^a (z-w)^{b+1}).
        let mut nw = Poly2::new();
        for (e, c) in &self.numerator {
            if e.1 > 0 {
                poly_add(&mut nw, (e.0, e.1 - 1), c * q(e.1));
            }
        }
        let mut num = poly_mul(&nw, &zw_pow(1));
        for (e, c) in &self.numerator {
            poly_add(&mut num, *e, c * q(self.zw_power));
        }
        RationalForm::new(num, self.z_power, self.zw_power + 1)
    }

    pub fn scale(&self, c: &Rational) -> RationalForm {
        RationalForm::new(
            self.numerator.iter().map(|(e, x)| (*e, x * c)).collect(),
            self.z_power,
            self.zw_power,
        )
    }

    /// Expansion in the region `|z| > |w|`, truncated to the box `window`.
    pub fn iota(
        &self,
        outer: &str,
        inner: &str,
        window: [(i64, i64); 2],
    ) -> Result<MultiSeries<Rational>> {
        // (z - w)^{-b} = z^{-b} sum_j C(b + j - 1, j) (w/z)^j.
        let mut out = MultiSeries::new(&[outer, inner], &window)?;
        let b = self.zw_power;
        for (e, c) in &self.numerator {
            for j in 0.. {
                let we = e.1 + j;
                if we > window[1].1 {
                    break;
                }
                let ze = e.0 - self.z_power - b - j;
                if ze < window[0].0 {
                    break;
                }
                let coef = if b == 0 {
                    if j == 0 {
                        Rational::one()
                    } else {
                        break;
                    }
                } else {
                    binomial(b + j - 1, j)
                };
                out.accumulate(&[ze, we], c * coef);
            }
        }
        Ok(out)
    }
}

/// Exact quotient of `p` by `(z - w)`, if it divides.
fn divide_by_z_minus_w(p: &Poly2) -> Option<Poly2> {
    // Treat p as a polynomial in z with coefficients in Q[w]; synthetic division by (z - w).
    let zdeg = p.keys().map(|e| e.0).max()?;
    let mut coeffs: Vec<BTreeMap<i64, Rational>> = vec![BTreeMap::new(); zdeg as usize + 1];
    for (e, c) in p {
        coeffs[e.0 as usize].insert(e.1, c.clone());
    }
    let mut quot = Poly2::new();
    let mut carry: BTreeMap<i64, Rational> = BTreeMap::new();
    for d in (0..=zdeg).rev() {
        let mut cur = coeffs[d as usize].clone();
        for (we, c) in &carry {
            let x = cur.entry(we + 1).or_insert_with(Rational::zero);
            *x += c;
        }
        cur.retain(|_, c| !c.is_zero());
        if d == 0 {
            return cur.is_empty().then_some(quot);
        }
        for (we, c) in &cur {
            poly_add(&mut quot, (d - 1, *we), c.clone());
        }
        carry = cur;
    }
    Some(quot)
}

/// The genus-zero kernel `f_{n,m}(z, w) = z^{-n}/m! (d/dw)^m (w^n/(z - w))`.
#[derive(Clone, Debug)]
pub struct Genus0Kernel {
    pub n: i64,
    pub m: i64,
    pub form: RationalForm,
}

impl Genus0Kernel {
    /// Expansion in `|z| > |w|` over the given box.
    pub fn expansion(
        &self,
        outer: &str,
        inner: &str,
        window: [(i64, i64); 2],
    ) -> Result<MultiSeries<Rational>> {
        self.form.iota(outer, inner, window)
    }
}

impl fmt::Display for RationalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut num = String::new();
        for ((a, b), c) in self.numerator.iter().rev() {
            if !num.is_empty() {
                num.push_str(" + ");
            }
            num.push_str(&format!("{c}*z^{a}*w^{b}"));
        }
        if num.is_empty() {
            num.push('0');
        }
        write!(f, "({num}) / (z^{} (z-w)^{})", self.z_power, self.zw_power)
    }
}

impl RationalForm {
    pub fn to_json(&self) -> Value {
        let num: serde_json::Map<String, Value> = self
            .numerator
            .iter()
            .map(|((a, b), c)| (format!("{a},{b}"), Value::String(c.to_string())))
            .collect();
        json!({ "numerator": num, "z_power": self.z_power, "zw_power": self.zw_power })
    }
}

static KERNELS: Lazy<RwLock<HashMap<(i64, i64), RationalForm>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// Builds `f_{n,m}` in closed form (requires `n >= 0`, `m >= 0`).
pub fn genus0_kernel(n: i64, m: i64) -> Result<Genus0Kernel> {
    if n < 0 || m < 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel f_{{{n},{m}}} needs n, m >= 0"
        )));
    }
    if let Some(form) = KERNELS.read().get(&(n, m)) {
        return Ok(Genus0Kernel {
            n,
            m,
            form: form.clone(),
        });
    }
    // Leibniz: d^m (w^n (z-w)^{-1}) = sum_i C(m,i) [d^{m-i} w^n] [i! (z-w)^{-i-1}],
    // put over (z - w)^{m+1}.
    let mut num = Poly2::new();
    for i in 0..=m {
        let k = m - i;
        if k > n {
            continue;
        }
        let ff = factorial(n as u64) / factorial((n - k) as u64);
        let c = binomial(m, i) * ff * factorial(i as u64) / factorial(m as u64);
        let part = poly_mul(&BTreeMap::from([((0, n - k), c)]), &zw_pow(m - i));
        for (e, x) in part {
            poly_add(&mut num, e, x);
        }
    }
    let form = RationalForm::new(num, n, m + 1);
    KERNELS.write().insert((n, m), form.clone());
    Ok(Genus0Kernel { n, m, form })
}
