//! Acceptance suite: one PASS/FAIL line per criterion. Every check compares
//! the engine against an independent oracle (closed forms, brute-force mode
//! sums, hand-coded tables) or against a second method inside the engine.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redcoh::cohomology::{
    build_coboundary, cluster_check, euler_poincare, DirectionFamily, GradedSlice,
};
use redcoh::elliptic::{eisenstein, genus0_kernel, weierstrass_p, weierstrass_p_qz};
use redcoh::genus2::{
    gen_weierstrass, lambda_tilde, neumann_inverse, z2_partition, z2_partition_in_basis, Chart,
    KernelMatrix, SewingModuli,
};
use redcoh::linalg::Matrix;
use redcoh::reduction::{
    genus0_direct, genus1_direct, genus1_partition, unwind_to_partition, Genus, Insertion,
};
use redcoh::scalar::{binomial, factorial, pow_i, q, qf, sign};
use redcoh::schottky::{
    genus_g_npoint, genus_g_reduce, psi0_derivative, SchottkyData, SchottkyKernel,
};
use redcoh::series::{iota_expand, IotaExponent, MultiSeries};
use redcoh::voa::{
    adjoint_mode, basis_up_to, bilinear_form, is_quasi_primary, jacobi_check, partitions,
    square_basis_state, vertex_mode, virasoro, Bracket, FockState, GradedVector,
};
use redcoh::Rational;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Partition numbers by the coin-change recursion.
fn partition_counts(n: usize) -> Vec<i64> {
    let mut p = vec![0i64; n + 1];
    p[0] = 1;
    for part in 1..=n {
        for t in part..=n {
            p[t] += p[t - part];
        }
    }
    p
}

fn int(n: i64) -> Rational {
    q(n)
}

/// Ordered tuples of basis states (outermost first) with `1 <= n <= 3` and
/// total weight at most `max_weight`.
fn tuples(max_weight: u32, with_vacuum: bool) -> Vec<Vec<FockState>> {
    let states: Vec<FockState> = basis_up_to(max_weight)
        .into_iter()
        .filter(|s| with_vacuum || s.weight() > 0)
        .collect();
    let mut out = Vec::new();
    for a in &states {
        out.push(vec![a.clone()]);
        for b in &states {
            if a.weight() + b.weight() > max_weight {
                continue;
            }
            out.push(vec![a.clone(), b.clone()]);
            for c in &states {
                if a.weight() + b.weight() + c.weight() <= max_weight {
                    out.push(vec![a.clone(), b.clone(), c.clone()]);
                }
            }
        }
    }
    out
}

fn insertions(tuple: &[FockState]) -> Vec<Insertion> {
    tuple
        .iter()
        .enumerate()
        .map(|(i, s)| Insertion::new(GradedVector::basis(s.clone()), &format!("z{}", i + 1)))
        .collect()
}

/// Iterated reduction from the partition function, innermost insertion first.
fn iterated(
    genus: Genus,
    ins: &[Insertion],
    windows: &[(i64, i64)],
    q_order: i64,
) -> MultiSeries<Rational> {
    let steps: Vec<(Insertion, (i64, i64))> = ins
        .iter()
        .cloned()
        .zip(windows.iter().copied())
        .rev()
        .collect();
    unwind_to_partition(genus, &steps, q_order)
        .unwrap()
        .function
        .value
}

fn genus0_equivalence() -> Outcome {
    let start = Instant::now();
    let vac = GradedVector::vacuum();
    let (mut cases, mut nonzero) = (0, 0);
    for t in tuples(6, true) {
        let ins = insertions(&t);
        let windows = vec![(-6, 6); ins.len()];
        let direct = genus0_direct(&ins, (&vac, &vac), &windows).unwrap().value;
        let reduced = iterated(Genus::Zero, &ins, &windows, 0);
        ensure(direct == reduced, || format!("mismatch at {t:?}"))?;
        cases += 1;
        nonzero += usize::from(!direct.is_zero());
    }
    let elapsed = start.elapsed();
    ensure(cases >= 200, || format!("only {cases} cases"))?;
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{cases} tuples ({nonzero} non-zero) agree exactly in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn genus1_equivalence() -> Outcome {
    let q_order = 8;
    let mut cases = 0;
    for t in tuples(6, true) {
        let ins = insertions(&t);
        let windows = vec![(-4, 4); ins.len()];
        let direct = genus1_direct(&ins, q_order, &windows).unwrap().value;
        ensure(
            direct == iterated(Genus::One, &ins, &windows, q_order),
            || format!("mismatch at {t:?}"),
        )?;
        cases += 1;
    }
    // F(a@z1, a@z2) = P_2(z1 - z2) Z, with P_2 in its q_z form, q_z = q_{z2}/q_{z1}.
    let w = 2 * q_order;
    let counts = partition_counts(q_order as usize);
    let mut expect =
        MultiSeries::new(&["z1", "z2", "q"], &[(-w, w), (-w, w), (0, q_order)]).unwrap();
    for (e, c) in weierstrass_p_qz(2, w, q_order).unwrap().terms() {
        for m in 0..=q_order - e[1] {
            expect.accumulate(&[-e[0], e[0], e[1] + m], c * int(counts[m as usize]));
        }
    }
    let aa = insertions(&[
        FockState::new(vec![1]).unwrap(),
        FockState::new(vec![1]).unwrap(),
    ]);
    let windows = [(-w, w), (-w, w)];
    ensure(
        genus1_direct(&aa, q_order, &windows).unwrap().value == expect,
        || "F2(a,a) != P2 Z (direct)".into(),
    )?;
    ensure(
        iterated(Genus::One, &aa, &windows, q_order) == expect,
        || "F2(a,a) != P2 Z (reduced)".into(),
    )?;
    Ok(format!(
        "{cases} tuples agree to q^{q_order}; F2(a,a) = P2 Z"
    ))
}

fn graded_dimension() -> Outcome {
    let z = genus1_partition(6).unwrap();
    let expected = [1, 1, 2, 3, 5, 7, 11];
    for (m, p) in expected.iter().enumerate() {
        ensure(z.value.coeff(&[m as i64]) == int(*p), || {
            format!("coefficient of q^{m}")
        })?;
    }
    Ok("1, 1, 2, 3, 5, 7, 11".into())
}

/// Quasi-primary basis of the weight-`r` space (`r >= 1`): the kernel of `L(1)`.
fn quasi_primaries(r: u32) -> Vec<GradedVector> {
    let basis = partitions(r);
    let target = partitions(r - 1);
    let cols: Vec<Vec<Rational>> = basis
        .iter()
        .map(|s| {
            let img = virasoro(1, &GradedVector::basis(s.clone()));
            target.iter().map(|t| img.coeff(t)).collect()
        })
        .collect();
    Matrix::from_columns(target.len(), &cols)
        .unwrap()
        .kernel()
        .into_iter()
        .map(|v| GradedVector::from_terms(basis.iter().cloned().zip(v)))
        .collect()
}

fn voa_axioms() -> Outcome {
    let states: Vec<GradedVector> = basis_up_to(6)
        .into_iter()
        .map(GradedVector::basis)
        .collect();
    let vac = GradedVector::vacuum();
    let mut checks = 0usize;
    for u in &states {
        let wu = i64::from(u.max_weight());
        // creativity: Y(u, z)1 = u + O(z)
        ensure(vertex_mode(u, -1, &vac) == *u, || {
            format!("creativity {}", u.literal())
        })?;
        for k in 0..=3 {
            ensure(vertex_mode(u, k, &vac).is_zero(), || {
                format!("vacuum annihilation {}", u.literal())
            })?;
        }
        for v in &states {
            let wv = i64::from(v.max_weight());
            for k in -2..=(wu + wv + 1) {
                let r = vertex_mode(u, k, v);
                checks += 1;
                if k > wu + wv - 1 {
                    ensure(r.is_zero(), || {
                        format!("lower truncation {} {k} {}", u.literal(), v.literal())
                    })?;
                } else if !r.is_zero() {
                    ensure(
                        r.weight().ok().map(i64::from) == Some(wu + wv - k - 1),
                        || format!("grading {} {k} {}", u.literal(), v.literal()),
                    )?;
                }
            }
        }
    }
    let small: Vec<GradedVector> = basis_up_to(2)
        .into_iter()
        .map(GradedVector::basis)
        .collect();
    let (a, omega) = (GradedVector::a(), GradedVector::omega());
    for s in &states {
        let mut pairs = vec![
            (s.clone(), a.clone()),
            (a.clone(), s.clone()),
            (s.clone(), omega.clone()),
            (omega.clone(), s.clone()),
        ];
        pairs.extend(
            states
                .iter()
                .filter(|t| s.max_weight() + t.max_weight() <= 6)
                .map(|t| (s.clone(), t.clone())),
        );
        for (u, v) in &pairs {
            for w in &small {
                for k in -1..=1 {
                    let r = jacobi_check(u, v, w, k, (-2, 2));
                    ensure(r.ok, || {
                        format!(
                            "commutator [{}({k}), {}(n)] on {}",
                            u.literal(),
                            v.literal(),
                            w.literal()
                        )
                    })?;
                    checks += r.checked;
                }
            }
        }
    }
    // invariance of the form for every quasi-primary of weight <= 4
    let low: Vec<GradedVector> = basis_up_to(4)
        .into_iter()
        .map(GradedVector::basis)
        .collect();
    let mut qps = 0;
    for r in 1..=4 {
        for u in quasi_primaries(r) {
            ensure(is_quasi_primary(&u), || {
                format!("{} is not quasi-primary", u.literal())
            })?;
            qps += 1;
            for alpha in [q(1), qf(3, 2)] {
                for x in &low {
                    for y in &low {
                        for n in -2..=(2 * i64::from(r)) {
                            let lhs =
                                bilinear_form(&vertex_mode(&u, n, x), y, &alpha, Bracket::Round);
                            let rhs = bilinear_form(
                                x,
                                &adjoint_mode(&u, n, y, &alpha).unwrap(),
                                &alpha,
                                Bracket::Round,
                            );
                            ensure(lhs == rhs, || format!("invariance {} n={n}", u.literal()))?;
                            checks += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "{} states, {checks} identities, invariance for {qps} quasi-primaries",
        states.len()
    ))
}

fn sigma(k: u32, n: i64) -> Rational {
    (1..=n)
        .filter(|d| n % d == 0)
        .map(|d| pow_i(&int(d), i64::from(k)))
        .sum()
}

/// Long-division oracle for `z^{-n}/m! ∂_w^m (w^n/(z - w))` in `|z| > |w|`.
fn long_division(n: i64, m: i64, window: [(i64, i64); 2]) -> MultiSeries<Rational> {
    let wide = [(window[0].0 - 2 * m - 2, window[0].1), (0, window[1].1 + m)];
    let mut g = MultiSeries::new(&["z", "w"], &wide).unwrap();
    let (mut rem_w, mut rem_z) = (n, 0);
    while rem_w <= wide[1].1 {
        g.accumulate(&[rem_z - 1 - n, rem_w], q(1));
        rem_w += 1;
        rem_z -= 1;
    }
    let d = g.divided_derivative(1, m);
    let mut out = MultiSeries::new(&["z", "w"], &window).unwrap();
    for (e, c) in d.terms() {
        out.accumulate(e, c.clone());
    }
    out
}

fn elliptic_layer() -> Outcome {
    for (k, bk) in [(2i64, qf(1, 6)), (4, qf(-1, 30)), (6, qf(1, 42))] {
        let e = eisenstein(k, 20).unwrap();
        ensure(e.coeff(0) == -bk / factorial(k as u64), || {
            format!("E{k} constant term")
        })?;
        for n in 1..=20 {
            let expect = q(2) * sigma(k as u32 - 1, n) / factorial(k as u64 - 1);
            ensure(e.coeff(n) == expect, || {
                format!("E{k} coefficient of q^{n}")
            })?;
        }
    }
    for m in 1..=4 {
        let pm = weierstrass_p(m, 6, 5).unwrap().expansion;
        let next = weierstrass_p(m + 1, 5, 5).unwrap().expansion;
        ensure(
            pm.derivative(0)
                .agrees_on(&next.scale(&q(-m)), &[(-m - 1, 5), (0, 5)]),
            || format!("d P_{m}"),
        )?;
    }
    let window = [(-12, 0), (0, 8)];
    for n in 0..=4 {
        for m in 0..=4 {
            let closed = genus0_kernel(n, m)
                .unwrap()
                .expansion("z", "w", window)
                .unwrap();
            ensure(closed == long_division(n, m, window), || {
                format!("kernel f_{n},{m} vs long division")
            })?;
            let iota = iota_expand(n, m, "z", "w", window, IotaExponent::ClosedForm).unwrap();
            ensure(closed == iota, || format!("iota expansion n={n} m={m}"))?;
        }
    }
    Ok("E2/E4/E6 to q^20, dP_m = -m P_{m+1} (m <= 4), iota expansions to degree 8".into())
}

/// `P_1(x - y) - P_1(x)` for `|x| > |y|` in the variables `(x, y, eps, q1, q2)`.
fn degenerate_p1(order: i64, q_order: i64, chart: Chart) -> BTreeMap<Vec<i64>, Rational> {
    let p1 = weierstrass_p(1, 2 * order, q_order).unwrap().expansion;
    let qi = if chart == Chart::One { 3 } else { 4 };
    let mut out: BTreeMap<Vec<i64>, Rational> = BTreeMap::new();
    for (e, c) in p1.terms() {
        let k = e[0];
        let top = if k >= 0 { k.min(order) } else { order };
        for i in 0..=top {
            let mut key = vec![k - i, i, 0, 0, 0];
            key[qi] = e[1];
            if key[0] <= order {
                *out.entry(key).or_insert_with(|| q(0)) += c * binomial(k, i) * sign(i);
            }
        }
        if k <= order {
            let mut key = vec![k, 0, 0, 0, 0];
            key[qi] = e[1];
            *out.entry(key).or_insert_with(|| q(0)) -= c;
        }
    }
    out.retain(|_, c| *c != q(0));
    out
}

/// A random invertible rational change of basis of each weight space.
fn random_basis(seed: u64) -> impl Fn(u32) -> Vec<GradedVector> {
    move |r| {
        let base: Vec<GradedVector> = partitions(r).iter().map(square_basis_state).collect();
        let n = base.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 100 + u64::from(r));
        // unit lower triangular times upper triangular with non-zero diagonal
        let mut lower = vec![vec![q(0); n]; n];
        let mut upper = vec![vec![q(0); n]; n];
        for i in 0..n {
            lower[i][i] = q(1);
            upper[i][i] = qf(rng.gen_range(1..6), rng.gen_range(1..4)) * sign(rng.gen_range(0..2));
            for j in 0..i {
                lower[i][j] = qf(rng.gen_range(-5..6), rng.gen_range(1..4));
                upper[j][i] = qf(rng.gen_range(-5..6), rng.gen_range(1..4));
            }
        }
        (0..n)
            .map(|i| {
                let mut v = GradedVector::zero();
                for (j, b) in base.iter().enumerate() {
                    let t: Rational = (0..n).map(|k| &lower[i][k] * &upper[k][j]).sum();
                    v.add_scaled(b, &t);
                }
                v
            })
            .collect()
    }
}

fn genus_two() -> Outcome {
    let moduli = SewingModuli::new(6, 6, 4, 8).unwrap();
    let z = z2_partition(&moduli).unwrap();
    let p = partition_counts(6);
    for i in 0..=6 {
        for j in 0..=6 {
            ensure(
                z.value.coeff(&[0, i, j]) == int(p[i as usize] * p[j as usize]),
                || format!("eps^0 q1^{i} q2^{j}"),
            )?;
            ensure(z.value.coeff(&[1, i, j]) == q(0), || {
                format!("eps^1 q1^{i} q2^{j}")
            })?;
        }
    }
    let small = SewingModuli::new(4, 4, 2, 4).unwrap();
    let eps2 = |s: &MultiSeries<Rational>| -> BTreeMap<Vec<i64>, Rational> {
        s.terms()
            .filter(|(e, _)| e[0] == 2)
            .map(|(e, c)| (e.clone(), c.clone()))
            .collect()
    };
    let reference = z2_partition(&small).unwrap();
    ensure(!eps2(&reference.value).is_empty(), || {
        "vanishing eps^2 term".into()
    })?;
    for seed in 0..3u64 {
        let rotated = z2_partition_in_basis(&small, random_basis(seed)).unwrap();
        ensure(eps2(&rotated.value) == eps2(&reference.value), || {
            format!("eps^2 term changes under basis {seed}")
        })?;
    }
    let nm = SewingModuli::new(3, 3, 4, 8).unwrap();
    for p in 1..=2 {
        for a in [Chart::One, Chart::Two] {
            let mm = lambda_tilde(a.other(), p, &nm)
                .unwrap()
                .mul(&lambda_tilde(a, p, &nm).unwrap())
                .unwrap();
            let inv = neumann_inverse(&mm, &nm).unwrap();
            let id = KernelMatrix::identity(8, &nm);
            let left = id.sub(&mm).unwrap().mul(&inv).unwrap();
            let right = inv.mul(&id.sub(&mm).unwrap()).unwrap();
            ensure(left == id && right == id, || {
                format!("Neumann identity p={p} chart {a:?}")
            })?;
        }
    }
    let wm = SewingModuli::new(2, 2, 2, 4).unwrap();
    for p in 1..=2 {
        for a in [Chart::One, Chart::Two] {
            let same = gen_weierstrass(p, 0, a, a, 4, &wm).unwrap();
            let eps0: BTreeMap<Vec<i64>, Rational> = same
                .terms()
                .filter(|(e, _)| e[2] == 0)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect();
            ensure(eps0 == degenerate_p1(4, 2, a), || {
                format!("P1 degeneration p={p} chart {a:?}")
            })?;
        }
    }
    Ok("eps^0 factorizes, eps^1 = 0, eps^2 basis-independent, Neumann exact (eps^4, N = 8), P1 degenerates".into())
}

fn schottky_layer() -> Outcome {
    let (x, y) = (qf(1, 2), qf(1, 3));
    let mut consistent = 0;
    for g in 1..=2 {
        for k in 1..=2 {
            let data = SchottkyData::standard(g, k).unwrap();
            for p in 1..=3 {
                let kernel = SchottkyKernel::new(p, &data).unwrap();
                ensure(kernel.neumann_check().unwrap(), || {
                    format!("Neumann g={g} K={k} p={p}")
                })?;
                let psi = kernel.psi(&x, &y).unwrap();
                ensure(
                    psi.coeff(&vec![0; g]) == psi0_derivative(0, 0, &[], &x, &y, true),
                    || format!("psi at rho = 0, g={g} K={k} p={p}"),
                )?;
            }
            let a = GradedVector::a();
            let a2 = GradedVector::parse("a[-2]|1").unwrap();
            let aa = GradedVector::parse("a[-1]^2|1").unwrap();
            let a3 = GradedVector::parse("a[-1]^3|1").unwrap();
            let insertion_sets: Vec<Vec<(GradedVector, Rational)>> = vec![
                vec![],
                vec![(a.clone(), qf(1, 5))],
                vec![(aa.clone(), qf(1, 5))],
                vec![(a2.clone(), qf(1, 5)), (aa.clone(), qf(-1, 7))],
                vec![(a3.clone(), qf(1, 5)), (a.clone(), qf(-1, 7))],
            ];
            for u in [a.clone(), GradedVector::omega(), a3.clone()] {
                for ins in &insertion_sets {
                    let mut all = vec![(u.clone(), x.clone())];
                    all.extend(ins.iter().cloned());
                    let lhs = genus_g_npoint(&all, &data).unwrap();
                    let rhs = genus_g_reduce(&(u.clone(), x.clone()), ins, &data)
                        .unwrap()
                        .total;
                    ensure(lhs == rhs, || {
                        format!(
                            "self-consistency g={g} K={k} u={} n={}",
                            u.literal(),
                            ins.len()
                        )
                    })?;
                    consistent += usize::from(!lhs.is_zero());
                }
            }
        }
    }
    ensure(consistent >= 20, || {
        format!("only {consistent} non-vacuous cases")
    })?;
    Ok(format!(
        "Neumann exact, psi_p -> psi_p^(0), {consistent} non-vacuous self-consistent cases"
    ))
}

fn cohomology_layer() -> Outcome {
    let mut ledgers = 0;
    for (genus, order) in [(Genus::Zero, 6), (Genus::One, 1)] {
        for dir in ["a", "omega"] {
            let family = DirectionFamily::Single(GradedVector::parse(dir).unwrap());
            for m in 0..=3 {
                for top in 0..=3 {
                    let rep = euler_poincare(genus, m, top, &family, order).unwrap();
                    ensure(rep.alternating_sum == 0 && rep.telescoped, || {
                        format!("ledger genus {genus:?} m={m} N={top} {dir}")
                    })?;
                    ledgers += 1;
                }
            }
        }
    }
    // Z is a cocycle in direction (a, z): the coboundary column vanishes, and
    // so does the trace oracle Tr a(k) q^{L(0)}.
    let slice = GradedSlice::new(Genus::One, 0, 0, 8).unwrap();
    let d = build_coboundary(&GradedVector::a(), &slice).unwrap();
    ensure(d.matrix.cols() == 1 && d.matrix.is_zero(), || {
        "coboundary of Z".into()
    })?;
    let direct = genus1_direct(&[Insertion::parse("a@z").unwrap()], 8, &[(-16, 16)]).unwrap();
    ensure(direct.value.is_zero(), || "trace oracle for H(a) Z".into())?;
    let reports = cluster_check(50, 2024, None).unwrap();
    let nonzero = reports.iter().filter(|r| r.function_nonzero).count();
    ensure(
        reports.len() == 50 && reports.iter().all(|r| r.involutive() && r.consistent),
        || "cluster involution".into(),
    )?;
    Ok(format!("{ledgers} ledgers close, Z is a cocycle, mu∘mu = Id on 50 seeds ({nonzero} non-zero functions)"))
}

fn determinism() -> Outcome {
    for (name, args) in common::GOLDEN_CASES {
        common::check_golden(name, args)?;
    }
    Ok(format!(
        "{} golden files byte-stable across two runs",
        common::GOLDEN_CASES.len()
    ))
}

/// Writes to the raw stderr handle, which the test harness does not capture,
/// so the verdict lines appear in every `cargo test` log.
fn report(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("genus-0 oracle equivalence", genus0_equivalence),
        ("genus-1 oracle equivalence", genus1_equivalence),
        ("graded dimension", graded_dimension),
        ("VOA axioms", voa_axioms),
        ("elliptic layer", elliptic_layer),
        ("genus two", genus_two),
        ("Schottky", schottky_layer),
        ("cohomology", cohomology_layer),
        ("determinism", determinism),
    ];
    // Sequential on purpose: criterion 1 carries its own wall-clock target.
    let results: Vec<Outcome> = criteria
        .iter()
        .map(|(_, f)| {
            catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Err(format!("panicked: {}", msg.unwrap_or_default()))
            })
        })
        .collect();
    let mut failed = Vec::new();
    for (i, ((name, _), r)) in criteria.iter().zip(&results).enumerate() {
        match r {
            Ok(detail) => report(&format!("criterion {}: PASS  {name}: {detail}", i + 1)),
            Err(detail) => {
                report(&format!("criterion {}: FAIL  {name}: {detail}", i + 1));
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
