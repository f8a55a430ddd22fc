use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redcoh::elliptic::{eisenstein, weierstrass_p};
use redcoh::genus2::*;
use redcoh::reduction::{genus1_partition, genus1_reduce, Insertion};
use redcoh::scalar::{binomial, factorial, pow_i, q, qf, sign};
use redcoh::series::MultiSeries;
use redcoh::voa::{partitions, square_basis_state, zero_mode, FockState, GradedVector};
use redcoh::Rational;

fn moduli(q1: i64, q2: i64, r: i64, n: usize) -> SewingModuli {
    SewingModuli::new(q1, q2, r, n).unwrap()
}

/// Partition numbers from the Euler product `prod (1 - q^n)^{-1}`, by the
/// standard coin-change recursion.
fn partition_numbers(order: usize) -> Vec<Rational> {
    let mut p = vec![0i64; order + 1];
    p[0] = 1;
    for part in 1..=order {
        for n in part..=order {
            p[n] += p[n - part];
        }
    }
    p.into_iter().map(q).collect()
}

/// `Σ_M Tr_{V_M} o(u) q^M` by acting with the zero mode on every Fock state.
fn direct_trace(u: &GradedVector, order: i64) -> Vec<Rational> {
    let o = zero_mode(u);
    (0..=order)
        .map(|m| {
            let mut acc = Rational::zero();
            for s in partitions(m as u32) {
                acc += o.apply(&GradedVector::basis(s.clone())).coeff(&s);
            }
            acc
        })
        .collect()
}

/// Closed-form square norm at `alpha = 1`: `prod_n (-n)^{m_n} m_n!`.
fn closed_norm(s: &FockState) -> Rational {
    let mut acc = Rational::one();
    let mut seen = Vec::new();
    for &p in s.parts() {
        if seen.contains(&p) {
            continue;
        }
        seen.push(p);
        let m = s.multiplicity(p);
        acc *= pow_i(&q(-i64::from(p)), i64::from(m)) * factorial(u64::from(m));
    }
    acc
}

fn eps_coeffs(s: &MultiSeries<Rational>) -> BTreeMap<Vec<i64>, Rational> {
    s.terms().map(|(e, c)| (e.clone(), c.clone())).collect()
}

#[test]
fn moduli_validation() {
    assert!(SewingModuli::new(2, 2, 4, 7).is_err());
    assert!(SewingModuli::new(2, 2, 4, 8).is_ok());
    assert!(SewingModuli::new(-1, 2, 1, 2).is_err());
    assert_eq!(Chart::from_index(2).unwrap().other(), Chart::One);
    assert!(Chart::from_index(3).is_err());
}

#[test]
fn lambda_examples_and_parity() {
    let m = moduli(4, 3, 4, 8);
    for a in [Chart::One, Chart::Two] {
        let lam = lambda_matrix(a, &m).unwrap();
        let order = m.q_order(a);
        let e2 = eisenstein(2, order).unwrap();
        let qi = if a == Chart::One { 3 } else { 4 };
        let entry = lam.get(1, 1);
        assert_eq!(entry.len(), e2.terms().count());
        for (k, c) in e2.terms() {
            let mut e = vec![0, 0, 2, 0, 0];
            e[qi] = k;
            assert_eq!(&entry.coeff(&e), c);
        }
        assert!(lam.get(1, 2).is_zero());
        for i in 1..=8 {
            for j in 1..=8 {
                if (i + j) % 2 == 1 {
                    assert!(lam.get(i, j).is_zero());
                }
                assert_eq!(
                    lam.get(i, j),
                    &conjugated_a_entry(a, i, j, &m).unwrap(),
                    "({i},{j})"
                );
                // minimal order (m + n)/2 in ε, i.e. m + n in s = ε^{1/2}
                assert!(lam.get(i, j).terms().all(|(e, _)| e[2] == (i + j) as i64));
            }
        }
    }
    // Λ(2,2) = ε^2 (-1)^3 C(3,2) E_4 = -3 ε^2 E_4
    let lam = lambda_matrix(Chart::One, &m).unwrap();
    assert_eq!(lam.get(2, 2).coeff(&[0, 0, 4, 0, 0]), q(-3) / q(720));
}

#[test]
fn neumann_inverse_examples() {
    let m = moduli(2, 2, 2, 4);
    let zero = KernelMatrix::zeros(4, 4, &m);
    assert_eq!(
        neumann_inverse(&zero, &m).unwrap(),
        KernelMatrix::identity(4, &m)
    );
    let id = KernelMatrix::identity(4, &m);
    assert!(matches!(
        neumann_inverse(&id, &m),
        Err(redcoh::Error::NeumannDivergent)
    ));
    // an order-1 matrix: 1 + M + M^2 + M^3 + M^4 clipped at s^4
    let mut one = KernelMatrix::zeros(4, 4, &m);
    let mut s1 = m.zero();
    s1.accumulate(&[0, 0, 1, 0, 0], q(1));
    one.set(1, 2, s1.clone());
    one.set(2, 1, s1);
    let inv = neumann_inverse(&one, &m).unwrap();
    assert_eq!(inv.get(1, 1).coeff(&[0, 0, 2, 0, 0]), q(1));
    assert_eq!(inv.get(1, 1).coeff(&[0, 0, 4, 0, 0]), q(1));
    assert_eq!(inv.get(1, 2).coeff(&[0, 0, 3, 0, 0]), q(1));
}

#[test]
fn neumann_identity_at_eps_order_4() {
    let m = moduli(3, 3, 4, 8);
    for p in 1..=2 {
        for a in [Chart::One, Chart::Two] {
            let mm = lambda_tilde(a.other(), p, &m)
                .unwrap()
                .mul(&lambda_tilde(a, p, &m).unwrap())
                .unwrap();
            let inv = neumann_inverse(&mm, &m).unwrap();
            let id = KernelMatrix::identity(8, &m);
            let prod = id.sub(&mm).unwrap().mul(&inv).unwrap();
            assert_eq!(prod, id, "p={p}");
            let prod = inv.mul(&id.sub(&mm).unwrap()).unwrap();
            assert_eq!(prod, id, "p={p}");
        }
    }
}

#[test]
fn partition_function_low_orders() {
    let m = moduli(6, 6, 4, 8);
    let z = z2_partition(&m).unwrap();
    assert_eq!(z.value.vars(), &["eps", "q1", "q2"]);
    assert_eq!(z.q_shift, qf(-1, 24));
    let p = partition_numbers(6);
    for i in 0..=6 {
        for j in 0..=6 {
            assert_eq!(z.value.coeff(&[0, i, j]), &p[i as usize] * &p[j as usize]);
            assert!(z.value.coeff(&[1, i, j]).is_zero());
        }
    }
}

#[test]
fn partition_matches_double_trace_oracle() {
    let m = moduli(4, 4, 3, 6);
    let z = z2_partition(&m).unwrap();
    let mut expect = BTreeMap::new();
    for r in 0..=3u32 {
        for lam in partitions(r) {
            let u = square_basis_state(&lam);
            let f1 = direct_trace(&u, 4);
            let norm = closed_norm(&lam);
            for (i, a) in f1.iter().enumerate() {
                for (j, b) in f1.iter().enumerate() {
                    let c = a * b / &norm;
                    if !c.is_zero() {
                        *expect
                            .entry(vec![i64::from(r), i as i64, j as i64])
                            .or_insert_with(Rational::zero) += c;
                    }
                }
            }
        }
    }
    expect.retain(|_, c| !c.is_zero());
    assert_eq!(eps_coeffs(&z.value), expect);
    // ε^2: (1/2) E2(τ1) E2(τ2) Z(τ1) Z(τ2)
    let e2 = eisenstein(2, 4).unwrap();
    let pn = partition_numbers(4);
    let mut ez = vec![Rational::zero(); 5];
    for i in 0..=4usize {
        for k in 0..=i {
            ez[i] += e2.coeff(k as i64) * &pn[i - k];
        }
    }
    for i in 0..=4 {
        for j in 0..=4 {
            assert_eq!(
                z.value.coeff(&[2, i as i64, j as i64]),
                &ez[i] * &ez[j] / q(2)
            );
        }
    }
}

#[test]
fn partition_matches_determinant_formula() {
    // Z2 = Z(τ1) Z(τ2) exp(1/2 Σ_k tr((Λ1 Λ2)^k)/k), the bosonic determinant
    let m = moduli(3, 3, 4, 8);
    let lam = lambda_matrix(Chart::One, &m)
        .unwrap()
        .mul(&lambda_matrix(Chart::Two, &m).unwrap())
        .unwrap();
    let mut log = m.zero();
    let mut power = lam.clone();
    let mut k = 1;
    while !power.is_zero() {
        log = log
            .add(&power.trace().unwrap().scale(&qf(1, 2 * k)))
            .unwrap();
        power = power.mul(&lam).unwrap();
        k += 1;
    }
    let mut exp = m.constant(q(1));
    let mut term = m.constant(q(1));
    for j in 1..10 {
        term = term.mul(&log).unwrap().scale(&qf(1, j));
        exp = exp.add(&term).unwrap();
    }
    let pn = partition_numbers(3);
    let mut zz = m.zero();
    for i in 0..=3 {
        for j in 0..=3 {
            zz.accumulate(&[0, 0, 0, i as i64, j as i64], &pn[i] * &pn[j]);
        }
    }
    let expect = exp.mul(&zz).unwrap();
    let z = z2_partition(&m).unwrap();
    let mut converted = BTreeMap::new();
    for (e, c) in expect.terms() {
        assert_eq!(e[2] % 2, 0);
        converted.insert(vec![e[2] / 2, e[3], e[4]], c.clone());
    }
    assert_eq!(eps_coeffs(&z.value), converted);
}

#[test]
fn partition_is_basis_independent() {
    let m = moduli(4, 4, 4, 8);
    let reference = z2_partition(&m).unwrap();
    for seed in 0..3u64 {
        let rotated = z2_partition_in_basis(&m, |r| {
            let base: Vec<GradedVector> = partitions(r).iter().map(square_basis_state).collect();
            let n = base.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 100 + u64::from(r));
            // unit lower triangular times upper triangular with non-zero diagonal: invertible
            let mut lower = vec![vec![Rational::zero(); n]; n];
            let mut upper = vec![vec![Rational::zero(); n]; n];
            for i in 0..n {
                lower[i][i] = q(1);
                upper[i][i] =
                    qf(rng.gen_range(1..6), rng.gen_range(1..4)) * sign(rng.gen_range(0..2));
                for j in 0..i {
                    lower[i][j] = qf(rng.gen_range(-5..6), rng.gen_range(1..4));
                    upper[j][i] = qf(rng.gen_range(-5..6), rng.gen_range(1..4));
                }
            }
            (0..n)
                .map(|i| {
                    let mut v = GradedVector::zero();
                    for (j, b) in base.iter().enumerate() {
                        let mut t = Rational::zero();
                        for k in 0..n {
                            t += &lower[i][k] * &upper[k][j];
                        }
                        v.add_scaled(b, &t);
                    }
                    v
                })
                .collect()
        })
        .unwrap();
        assert_eq!(rotated.value, reference.value, "seed {seed}");
    }
}

/// `P_1(x - y) - P_1(x)` for `|x| > |y|`, built from the one-variable expansion.
fn degenerate_p1(order: i64, q_order: i64, a: Chart) -> BTreeMap<Vec<i64>, Rational> {
    let p1 = weierstrass_p(1, 2 * order, q_order).unwrap().expansion;
    let qi = if a == Chart::One { 3 } else { 4 };
    let mut out: BTreeMap<Vec<i64>, Rational> = BTreeMap::new();
    for (e, c) in p1.terms() {
        let k = e[0];
        let top = if k >= 0 { k.min(order) } else { order };
        for i in 0..=top {
            let mut key = vec![k - i, i, 0, 0, 0];
            key[qi] = e[1];
            if key[0] <= order {
                *out.entry(key).or_insert_with(Rational::zero) += c * binomial(k, i) * sign(i);
            }
        }
        if k <= order {
            let mut key = vec![k, 0, 0, 0, 0];
            key[qi] = e[1];
            *out.entry(key).or_insert_with(Rational::zero) -= c;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

#[test]
fn weierstrass_degenerates_at_eps_zero() {
    let m = moduli(2, 2, 2, 4);
    for p in 1..=2 {
        for a in [Chart::One, Chart::Two] {
            let same = gen_weierstrass(p, 0, a, a, 4, &m).unwrap();
            let eps0: BTreeMap<Vec<i64>, Rational> = same
                .terms()
                .filter(|(e, _)| e[2] == 0)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect();
            assert_eq!(eps0, degenerate_p1(4, 2, a), "p={p}");
            let cross = gen_weierstrass(p, 0, a, a.other(), 4, &m).unwrap();
            assert!(cross.terms().all(|(e, _)| e[2] > 0), "p={p}");
        }
    }
    assert!(gen_weierstrass(3, 0, Chart::One, Chart::One, 2, &m).is_err());
}

#[test]
fn weierstrass_derivative_rule() {
    let m = moduli(2, 2, 2, 4);
    let order = 4;
    for p in 1..=2 {
        for (a, b) in [
            (Chart::One, Chart::One),
            (Chart::One, Chart::Two),
            (Chart::Two, Chart::One),
        ] {
            let p1 = gen_weierstrass(p, 0, a, b, order, &m).unwrap();
            for j in 1..=3 {
                let pj = gen_weierstrass(p, j, a, b, order, &m).unwrap();
                let d = p1.divided_derivative(1, j);
                let window = [(-100, order), (-100, order - j), (0, 2), (0, 2), (0, 2)];
                assert!(d.agrees_on(&pj, &window), "p={p} j={j} charts {a:?} {b:?}");
                assert!(!pj.is_zero());
            }
        }
    }
}

#[test]
fn cross_chart_p1_leading_term() {
    // For p = 1 the correction terms vanish: at ε^1 only ℚ(1) ℙ_1(1) survives,
    // i.e. ε P_2(x, τ_a) (P_1(y, τ_ā) - E_1) with E_1 = 0.
    let m = moduli(1, 1, 1, 2);
    let v = gen_weierstrass(1, 0, Chart::One, Chart::Two, 3, &m).unwrap();
    let p2 = weierstrass_p(2, 3, 1).unwrap().expansion;
    let p1 = weierstrass_p(1, 3, 1).unwrap().expansion;
    for (ex, cx) in p2.terms() {
        for (ey, cy) in p1.terms() {
            assert_eq!(v.coeff(&[ex[0], ey[0], 1, ex[1], ey[1]]), cx * cy);
        }
    }
}

fn omega_tilde_trace(order: i64) -> Vec<Rational> {
    direct_trace(&GradedVector::omega_tilde(), order)
}

#[test]
fn reduce_examples() {
    let m = moduli(3, 3, 2, 4);
    let z = z2_partition(&m).unwrap();
    let vac = Insertion::new(GradedVector::vacuum(), "z");
    assert_eq!(genus2_reduce(&vac, 3, &z, &m).unwrap(), z);

    let a = Insertion::new(GradedVector::a(), "z");
    let r = genus2_reduce(&a, 3, &z, &m).unwrap();
    assert!(r.value.is_zero());
    assert_eq!(r.value.vars(), &["z", "eps", "q1", "q2"]);

    let bad = Insertion::new(square_basis_state(&FockState::new(vec![2]).unwrap()), "z");
    assert!(matches!(
        genus2_reduce(&bad, 3, &z, &m),
        Err(redcoh::Error::NotQuasiPrimary(_))
    ));
    let inhom = Insertion::new(GradedVector::parse("a[-1]|1 + a[-2]|1").unwrap(), "z");
    assert!(genus2_reduce(&inhom, 3, &z, &m).is_err());
    let one = genus2_reduce(&a, 3, &z, &m).unwrap();
    assert!(genus2_reduce(&a, 3, &one, &m).is_err());
}

#[test]
fn omega_tilde_one_point_factorizes_at_eps_zero() {
    let m = moduli(3, 3, 2, 4);
    let z = z2_partition(&m).unwrap();
    let w = Insertion::new(GradedVector::omega_tilde(), "z");
    let r = genus2_reduce(&w, 3, &z, &m).unwrap();
    // genus-one Zhu recursion on torus 1 for ω, minus Z/24 for the vacuum part
    let g1 = genus1_reduce(
        &Insertion::new(GradedVector::omega(), "z"),
        (-2, 2),
        &genus1_partition(3).unwrap(),
    )
    .unwrap();
    let pn = partition_numbers(3);
    for i in 0..=3 {
        let f1 = g1.value.coeff(&[0, i]) - &pn[i as usize] / q(24);
        assert_eq!(f1, omega_tilde_trace(3)[i as usize]);
        for j in 0..=3 {
            assert_eq!(
                r.value.coeff(&[0, 0, i, j]),
                &f1 * &pn[j as usize],
                "q1^{i} q2^{j}"
            );
        }
    }
    for (e, _) in r.value.terms() {
        if e[1] == 0 {
            assert_eq!(e[0], 0, "ε^0 part is z-independent");
        }
    }
    // higher orders are non-trivial and integral in ε
    assert!(r.value.terms().any(|(e, _)| e[1] == 2));
}
