//! Truncated Laurent series in one or several formal variables.
//!
//! A series carries an explicit inclusive exponent window per variable. The
//! lower end is a bound on the support; the upper end is the truncation order:
//! coefficients above it are unknown, never zero by assumption. Arithmetic
//! only reports coefficients that are fully determined by its inputs.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::scalar::{binomial, Rational, Scalar};

fn check_window(var: &str, lo: i64, hi: i64) -> Result<()> {
    if lo > hi {
        return Err(Error::InvalidWindow {
            var: var.to_string(),
            lo,
            hi,
        });
    }
    Ok(())
}

/// Laurent series in a single variable, truncated to `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series<T> {
    var: String,
    lo: i64,
    hi: i64,
    coeffs: BTreeMap<i64, T>,
}

impl<T: Scalar> Series<T> {
    /// The zero series on the window `[lo, hi]`.
    pub fn new(var: &str, lo: i64, hi: i64) -> Result<Self> {
        check_window(var, lo, hi)?;
        Ok(Series {
            var: var.to_string(),
            lo,
            hi,
            coeffs: BTreeMap::new(),
        })
    }

    /// Builds a series from `(exponent, coefficient)` pairs; every exponent
    /// must lie in the window.
    pub fn from_terms<I>(var: &str, lo: i64, hi: i64, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, T)>,
    {
        let mut s = Self::new(var, lo, hi)?;
        for (e, c) in terms {
            if e < lo || e > hi {
                return Err(Error::InvalidArgument(format!(
                    "exponent {e} outside window [{lo}, {hi}] of `{var}`"
                )));
            }
            s.accumulate(e, c);
        }
        Ok(s)
    }

    /// The constant `c` known up to order `hi` (`hi >= 0`).
    pub fn constant(var: &str, c: T, hi: i64) -> Result<Self> {
        Self::from_terms(var, 0, hi, [(0, c)])
    }

    /// The monomial `c * var^e` known up to order `hi`.
    pub fn monomial(var: &str, e: i64, c: T, hi: i64) -> Result<Self> {
        Self::from_terms(var, e, hi, [(e, c)])
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Coefficient of `var^e` (zero when absent; meaningless above `hi`).
    pub fn coeff(&self, e: i64) -> T {
        self.coeffs.get(&e).cloned().unwrap_or_else(T::zero)
    }

    /// Nonzero terms in increasing exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (i64, &T)> {
        self.coeffs.iter().map(|(e, c)| (*e, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Adds `c` to the coefficient of `var^e`, dropping terms outside the
    /// window (truncation).
    pub fn accumulate(&mut self, e: i64, c: T) {
        if e < self.lo || e > self.hi || c.is_negligible() {
            return;
        }
        let entry = self.coeffs.entry(e).or_insert_with(T::zero);
        *entry = entry.clone() + c;
        if entry.is_negligible() {
            self.coeffs.remove(&e);
        }
    }

    fn same_var(&self, other: &Self) -> Result<()> {
        if self.var != other.var {
            return Err(Error::VariableMismatch {
                expected: self.var.clone(),
                found: other.var.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_var(other)?;
        let mut out = Self::new(&self.var, self.lo.min(other.lo), self.hi.min(other.hi))?;
        for (e, c) in self.terms().chain(other.terms()) {
            out.accumulate(e, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-T::one())
    }

    pub fn scale(&self, c: &T) -> Self {
        let mut out = Series {
            coeffs: BTreeMap::new(),
            ..self.clone()
        };
        for (e, x) in self.terms() {
            out.accumulate(e, x.clone() * c.clone());
        }
        out
    }

    /// Exact product. The result is known on `[lo_a + lo_b, min(hi_a + lo_b,
    /// hi_b + lo_a)]`, which for power series is `min(hi_a, hi_b)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_var(other)?;
        let lo = self.lo + other.lo;
        let hi = (self.hi + other.lo).min(other.hi + self.lo);
        let mut out = Self::new(&self.var, lo, hi.max(lo))?;
        if hi < lo {
            return Err(Error::InsufficientOrder(format!(
                "product of `{}` series has empty window",
                self.var
            )));
        }
        for (ea, ca) in self.terms() {
            for (eb, cb) in other.terms() {
                if ea + eb > hi {
                    break;
                }
                out.accumulate(ea + eb, ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    /// Keeps only the exponents in `[lo, hi]`; `hi` may not exceed the known
    /// order.
    pub fn restrict(&self, lo: i64, hi: i64) -> Result<Self> {
        if hi > self.hi {
            return Err(Error::InsufficientOrder(format!(
                "cannot restrict `{}` to order {hi} beyond known order {}",
                self.var, self.hi
            )));
        }
        let mut out = Self::new(&self.var, lo, hi)?;
        for (e, c) in self.terms() {
            out.accumulate(e, c.clone());
        }
        Ok(out)
    }

    /// Lowest exponent with a nonzero coefficient.
    pub fn valuation(&self) -> Option<i64> {
        self.coeffs.keys().next().copied()
    }

    /// Multiplicative inverse of a series with nonzero leading coefficient.
    pub fn inverse(&self) -> Result<Self> {
        let v = self
            .valuation()
            .ok_or_else(|| Error::NotInvertible(format!("zero series in `{}`", self.var)))?;
        let n = self.hi - v;
        let a0 = self.coeff(v);
        let mut b: Vec<T> = Vec::with_capacity(n as usize + 1);
        b.push(T::one() / a0.clone());
        for k in 1..=n {
            let mut acc = T::zero();
            for i in 1..=k {
                let ai = self.coeff(v + i);
                if !ai.is_zero() {
                    acc = acc + ai * b[(k - i) as usize].clone();
                }
            }
            b.push(-acc / a0.clone());
        }
        Self::from_terms(
            &self.var,
            -v,
            -v + n,
            b.into_iter().enumerate().map(|(k, c)| (k as i64 - v, c)),
        )
    }

    /// Integer power (negative powers go through [`Series::inverse`]).
    pub fn pow(&self, k: i64) -> Result<Self> {
        if k == 0 {
            return Self::constant(&self.var, T::one(), (self.hi - self.lo).max(0));
        }
        let base = if k < 0 { self.inverse()? } else { self.clone() };
        let mut acc = base.clone();
        for _ in 1..k.abs() {
            acc = acc.mul(&base)?;
        }
        Ok(acc)
    }

    /// Formal derivative `d/dvar`.
    pub fn derivative(&self) -> Self {
        let lo = if self.lo == 0 { 0 } else { self.lo - 1 };
        let mut out = Series {
            var: self.var.clone(),
            lo: lo.min(self.hi - 1),
            hi: self.hi - 1,
            coeffs: BTreeMap::new(),
        };
        for (e, c) in self.terms() {
            if e != 0 {
                out.accumulate(e - 1, c.clone() * T::from_int(e));
            }
        }
        out
    }

    /// Renames the variable.
    pub fn rename(&self, var: &str) -> Self {
        Series {
            var: var.to_string(),
            ..self.clone()
        }
    }

    /// Views the series as a one-variable [`MultiSeries`].
    pub fn to_multi(&self) -> MultiSeries<T> {
        let mut m = MultiSeries::new(&[&self.var], &[(self.lo, self.hi)]).expect("window checked");
        for (e, c) in self.terms() {
            m.accumulate(&[e], c.clone());
        }
        m
    }

    /// JSON form `{"var": .., "window": [lo, hi], "coeffs": {"<exp>": "<rational>"}}`.
    pub fn to_json(&self) -> Value {
        let mut coeffs = Map::new();
        for (e, c) in self.terms() {
            coeffs.insert(e.to_string(), Value::String(c.to_string()));
        }
        json!({ "var": self.var, "window": [self.lo, self.hi], "coeffs": Value::Object(coeffs) })
    }
}

impl Series<Rational> {
    /// Substitutes `var = e^z - 1` (so that `1 + var` plays the role of
    /// `q_z = e^z`) and returns the expansion in `z` up to order `z_order`.
    ///
    /// Every input coefficient up to `var^z_order` is needed, since
    /// `e^z - 1 = z + O(z^2)`.
    pub fn compose_exp(&self, z_var: &str, z_order: i64) -> Result<Series<Rational>> {
        if self.hi < z_order {
            return Err(Error::InsufficientOrder(format!(
                "substituting into `{}` known to order {} cannot determine z^{z_order}",
                self.var, self.hi
            )));
        }
        let lo = self.lo.min(0);
        let span = z_order - lo;
        // e^z - 1 = z * g(z) with g(0) = 1.
        let g = exp_minus_one_over_z(z_var, span.max(0))?;
        let mut out = Series::new(z_var, lo, z_order.max(lo))?;
        for (k, c) in self.terms() {
            if k > z_order {
                break;
            }
            // (e^z - 1)^k = z^k g^k, needed to z-order z_order.
            let gk = g.restrict(0, (z_order - k).max(0))?.pow(k)?;
            for (e, x) in gk.terms() {
                out.accumulate(e + k, c.clone() * x.clone());
            }
        }
        Ok(out)
    }

    /// Human-readable form such as `-1/12 + 2q + 6q^2`.
    pub fn pretty(&self) -> String {
        pretty_terms(&self.var, self.terms().map(|(e, c)| (e, c.clone())))
    }
}

/// `(e^z - 1)/z = sum_{k>=0} z^k/(k+1)!` up to `z^order`.
pub fn exp_minus_one_over_z(var: &str, order: i64) -> Result<Series<Rational>> {
    let mut s = Series::new(var, 0, order)?;
    let mut fact = Rational::one();
    for k in 0..=order {
        fact *= Rational::from_int(k + 1);
        s.accumulate(k, fact.recip());
    }
    Ok(s)
}

/// `e^{a z}` up to `z^order`.
pub fn exp_series(var: &str, a: &Rational, order: i64) -> Result<Series<Rational>> {
    let mut s = Series::new(var, 0, order)?;
    let mut term = Rational::one();
    for k in 0..=order {
        s.accumulate(k, term.clone());
        term = term * a / Rational::from_int(k + 1);
    }
    Ok(s)
}

pub(crate) fn pretty_terms<I: Iterator<Item = (i64, Rational)>>(var: &str, terms: I) -> String {
    let mut out = String::new();
    for (e, c) in terms {
        let neg = c < Rational::zero();
        let mag = if neg { -c.clone() } else { c.clone() };
        if out.is_empty() {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let mono = match e {
            0 => String::new(),
            1 => var.to_string(),
            _ => format!("{var}^{e}"),
        };
        if mono.is_empty() {
            out.push_str(&mag.to_string());
        } else if mag.is_one() {
            out.push_str(&mono);
        } else if mag.is_integer() {
            out.push_str(&format!("{mag}{mono}"));
        } else {
            out.push_str(&format!("({mag}){mono}"));
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

impl fmt::Display for Series<Rational> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + O({}^{})", self.pretty(), self.var, self.hi + 1)
    }
}

/// Laurent series in several variables with a box window.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiSeries<T> {
    vars: Vec<String>,
    window: Vec<(i64, i64)>,
    coeffs: BTreeMap<Vec<i64>, T>,
}

impl<T: Scalar> MultiSeries<T> {
    /// The zero series with the given variables and per-variable windows.
    pub fn new<S: AsRef<str>>(vars: &[S], window: &[(i64, i64)]) -> Result<Self> {
        if vars.len() != window.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} variables but {} window ranges",
                vars.len(),
                window.len()
            )));
        }
        for (v, &(lo, hi)) in vars.iter().zip(window) {
            check_window(v.as_ref(), lo, hi)?;
        }
        Ok(MultiSeries {
            vars: vars.iter().map(|v| v.as_ref().to_string()).collect(),
            window: window.to_vec(),
            coeffs: BTreeMap::new(),
        })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn window(&self) -> &[(i64, i64)] {
        &self.window
    }

    /// Index of a variable by name.
    pub fn var_index(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    pub fn in_window(&self, exps: &[i64]) -> bool {
        exps.len() == self.window.len()
            && exps
                .iter()
                .zip(&self.window)
                .all(|(e, (lo, hi))| lo <= e && e <= hi)
    }

    pub fn coeff(&self, exps: &[i64]) -> T {
        self.coeffs.get(exps).cloned().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &T)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Adds `c` at `exps`, silently dropping terms outside the window.
    pub fn accumulate(&mut self, exps: &[i64], c: T) {
        if !self.in_window(exps) || c.is_negligible() {
            return;
        }
        match self.coeffs.get_mut(exps) {
            Some(x) => {
                *x = x.clone() + c;
                if x.is_negligible() {
                    self.coeffs.remove(exps);
                }
            }
            None => {
                self.coeffs.insert(exps.to_vec(), c);
            }
        }
    }

    fn same_vars(&self, other: &Self) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::VariableMismatch {
                expected: self.vars.join(","),
                found: other.vars.join(","),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_vars(other)?;
        let window: Vec<(i64, i64)> = self
            .window
            .iter()
            .zip(&other.window)
            .map(|(a, b)| (a.0.min(b.0), a.1.min(b.1)))
            .collect();
        let mut out = Self::new(&self.vars, &window)?;
        for (e, c) in self.terms().chain(other.terms()) {
            out.accumulate(e, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-T::one())
    }

    pub fn scale(&self, c: &T) -> Self {
        let mut out = MultiSeries {
            coeffs: BTreeMap::new(),
            ..self.clone()
        };
        for (e, x) in self.terms() {
            out.accumulate(e, x.clone() * c.clone());
        }
        out
    }

    /// Exact product with per-variable windows as in [`Series::mul`].
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_vars(other)?;
        let mut window = Vec::with_capacity(self.window.len());
        for (i, (a, b)) in self.window.iter().zip(&other.window).enumerate() {
            let lo = a.0 + b.0;
            let hi = (a.1 + b.0).min(b.1 + a.0);
            if hi < lo {
                return Err(Error::InsufficientOrder(format!(
                    "product has empty window in `{}`",
                    self.vars[i]
                )));
            }
            window.push((lo, hi));
        }
        let mut out = Self::new(&self.vars, &window)?;
        let mut buf = vec![0i64; window.len()];
        for (ea, ca) in self.terms() {
            for (eb, cb) in other.terms() {
                for (k, slot) in buf.iter_mut().enumerate() {
                    *slot = ea[k] + eb[k];
                }
                if out.in_window(&buf) {
                    out.accumulate(&buf, ca.clone() * cb.clone());
                }
            }
        }
        Ok(out)
    }

    /// Keeps only exponents inside `window`; upper ends may not exceed the
    /// known orders.
    pub fn restrict(&self, window: &[(i64, i64)]) -> Result<Self> {
        for (i, (w, own)) in window.iter().zip(&self.window).enumerate() {
            if w.1 > own.1 {
                return Err(Error::InsufficientOrder(format!(
                    "cannot restrict `{}` to order {} beyond known order {}",
                    self.vars[i], w.1, own.1
                )));
            }
        }
        let mut out = Self::new(&self.vars, window)?;
        for (e, c) in self.terms() {
            out.accumulate(e, c.clone());
        }
        Ok(out)
    }

    /// Divided-power derivative `(1/j!) d^j/dvar^j` in variable `idx`.
    pub fn divided_derivative(&self, idx: usize, j: i64) -> Self {
        let (lo, hi) = self.window[idx];
        let mut window = self.window.clone();
        window[idx] = ((lo - j).min(hi - j), hi - j);
        let mut out = MultiSeries {
            vars: self.vars.clone(),
            window,
            coeffs: BTreeMap::new(),
        };
        for (e, c) in self.terms() {
            let b = binomial(e[idx], j);
            if b.is_zero() {
                continue;
            }
            let mut f = e.clone();
            f[idx] -= j;
            out.accumulate(&f, c.clone() * rational_to_scalar::<T>(&b));
        }
        out
    }

    /// Plain derivative `d/dvar` in variable `idx`.
    pub fn derivative(&self, idx: usize) -> Self {
        self.divided_derivative(idx, 1)
    }

    /// Multiplies by the monomial with exponent vector `shift` (windows move
    /// along).
    pub fn shift(&self, shift: &[i64]) -> Self {
        let window = self
            .window
            .iter()
            .zip(shift)
            .map(|(w, s)| (w.0 + s, w.1 + s))
            .collect();
        let coeffs = self
            .coeffs
            .iter()
            .map(|(e, c)| (e.iter().zip(shift).map(|(a, b)| a + b).collect(), c.clone()))
            .collect();
        MultiSeries {
            vars: self.vars.clone(),
            window,
            coeffs,
        }
    }

    /// Renames all variables (same arity).
    pub fn rename<S: AsRef<str>>(&self, vars: &[S]) -> Result<Self> {
        if vars.len() != self.vars.len() {
            return Err(Error::DimensionMismatch("rename arity".into()));
        }
        Ok(MultiSeries {
            vars: vars.iter().map(|v| v.as_ref().to_string()).collect(),
            ..self.clone()
        })
    }

    /// Coefficient-wise comparison restricted to `window`.
    pub fn agrees_on(&self, other: &Self, window: &[(i64, i64)]) -> bool {
        let inside = |e: &Vec<i64>| e.iter().zip(window).all(|(x, (lo, hi))| lo <= x && x <= hi);
        self.terms()
            .filter(|(e, _)| inside(e))
            .all(|(e, c)| other.coeff(e) == *c)
            && other
                .terms()
                .filter(|(e, _)| inside(e))
                .all(|(e, c)| self.coeff(e) == *c)
    }

    /// Embeds the series into a larger variable list (missing variables get
    /// exponent zero and window `[0, 0]` unless present in `window_for_new`).
    pub fn embed<S: AsRef<str>>(&self, vars: &[S], windows: &[(i64, i64)]) -> Result<Self> {
        let mut out = Self::new(vars, windows)?;
        let map: Vec<Option<usize>> = out
            .vars
            .iter()
            .map(|v| self.vars.iter().position(|w| w == v))
            .collect();
        for v in &self.vars {
            if !out.vars.contains(v) {
                return Err(Error::VariableMismatch {
                    expected: out.vars.join(","),
                    found: v.clone(),
                });
            }
        }
        for (e, c) in self.terms() {
            let f: Vec<i64> = map.iter().map(|m| m.map(|i| e[i]).unwrap_or(0)).collect();
            out.accumulate(&f, c.clone());
        }
        Ok(out)
    }

    /// JSON form `{"vars": [..], "window": [[lo, hi], ..], "coeffs": {"e1,e2,..": "<rational>"}}`.
    pub fn to_json(&self) -> Value {
        let mut coeffs = Map::new();
        for (e, c) in self.terms() {
            let key = e
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",");
            coeffs.insert(key, Value::String(c.to_string()));
        }
        json!({
            "vars": self.vars,
            "window": self.window.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
            "coeffs": Value::Object(coeffs),
        })
    }
}

impl MultiSeries<Rational> {
    /// Parses the JSON form produced by [`MultiSeries::to_json`].
    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("multiseries json: {m}"));
        let vars: Vec<String> = v["vars"]
            .as_array()
            .ok_or_else(|| bad("vars"))?
            .iter()
            .map(|x| {
                x.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| bad("var name"))
            })
            .collect::<Result<_>>()?;
        let window: Vec<(i64, i64)> = v["window"]
            .as_array()
            .ok_or_else(|| bad("window"))?
            .iter()
            .map(|w| match (w[0].as_i64(), w[1].as_i64()) {
                (Some(a), Some(b)) => Ok((a, b)),
                _ => Err(bad("window entry")),
            })
            .collect::<Result<_>>()?;
        let mut out = Self::new(&vars, &window)?;
        for (k, c) in v["coeffs"].as_object().ok_or_else(|| bad("coeffs"))? {
            let e: Vec<i64> = k
                .split(',')
                .map(|x| x.parse::<i64>().map_err(|_| bad("exponent")))
                .collect::<Result<_>>()?;
            let c = crate::scalar::parse_rat(c.as_str().ok_or_else(|| bad("coefficient"))?)
                .ok_or_else(|| bad("rational"))?;
            out.accumulate(&e, c);
        }
        Ok(out)
    }
}

fn rational_to_scalar<T: Scalar>(x: &Rational) -> T {
    use num_traits::ToPrimitive;
    let n = x.numer().to_i64().expect("small binomial numerator");
    let d = x.denom().to_i64().expect("small binomial denominator");
    T::from_frac(n, d)
}

/// Which exponent pattern [`iota_expand`] uses for the inner variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IotaExponent {
    /// `w^{n+j-1}`, the pattern as it is usually printed.
    Printed,
    /// `w^{n+j-m}`, the pattern obtained by expanding the closed rational form.
    ClosedForm,
}

/// Binomial expansion `sum_{j>=0} C(n+j, m) z^{-n-j-1} w^{e(j)}` in the region
/// `|z| > |w|`, truncated to the box `window = [(z_lo, z_hi), (w_lo, w_hi)]`.
///
/// With [`IotaExponent::ClosedForm`] this is the expansion of
/// `z^{-n}/m! * (d/dw)^m (w^n/(z-w))`; the [`IotaExponent::Printed`] pattern
/// agrees with it only for `m = 1`.
pub fn iota_expand(
    n: i64,
    m: i64,
    outer: &str,
    inner: &str,
    window: [(i64, i64); 2],
    pattern: IotaExponent,
) -> Result<MultiSeries<Rational>> {
    if m < 0 {
        return Err(Error::InvalidArgument(format!(
            "derivative order m = {m} must be >= 0"
        )));
    }
    let mut out = MultiSeries::new(&[outer, inner], &window)?;
    let (z_lo, z_hi) = window[0];
    // z exponent -n-j-1 in [z_lo, z_hi]  <=>  j in [-z_hi-n-1, -z_lo-n-1].
    let j_lo = (-z_hi - n - 1).max(0);
    let j_hi = -z_lo - n - 1;
    for j in j_lo..=j_hi {
        let c = binomial(n + j, m);
        if c.is_zero() {
            continue;
        }
        let we = match pattern {
            IotaExponent::Printed => n + j - 1,
            IotaExponent::ClosedForm => n + j - m,
        };
        out.accumulate(&[-n - j - 1, we], c);
    }
    Ok(out)
}
