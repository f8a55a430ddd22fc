use num_traits::{One, Zero};
use redcoh::scalar::{q, qf};
use redcoh::schottky::*;
use redcoh::series::MultiSeries;
use redcoh::voa::GradedVector;
use redcoh::Rational;

fn st(s: &str) -> GradedVector {
    GradedVector::parse(s).unwrap()
}

fn laurent(s: &str) -> LaurentPoly {
    parse_laurent(s).unwrap()
}

fn genus_data(g: usize, k: i64) -> SchottkyData {
    let w_plus = vec![q(3), qf(7, 2)][..g].to_vec();
    let w_minus = vec![q(-2), qf(-9, 2)][..g].to_vec();
    SchottkyData::new(w_plus, w_minus, k, 2 * k as usize).unwrap()
}

#[test]
fn laurent_parsing() {
    let f = laurent("1/x + 2 - 3x^2 + 1/2*x");
    assert_eq!(f.get(&-1), Some(&q(1)));
    assert_eq!(f.get(&0), Some(&q(2)));
    assert_eq!(f.get(&2), Some(&q(-3)));
    assert_eq!(f.get(&1), Some(&qf(1, 2)));
    assert_eq!(laurent("x^-2 - 2/x^3").get(&-3), Some(&q(-2)));
    assert!(parse_laurent("1/y").is_err());
}

#[test]
fn psi0_examples() {
    let s = psi0(1, &[], [(-6, 0), (0, 5)]).unwrap();
    for i in 0..=5 {
        assert_eq!(s.coeff(&[-1 - i, i]), q(1));
    }
    assert_eq!(s.len(), 6);
    let f = vec![laurent("1/x")];
    let s = psi0(1, &f, [(-6, 0), (0, 5)]).unwrap();
    assert_eq!(s.coeff(&[-1, 0]), q(2));
    assert_eq!(s.coeff(&[-2, 1]), q(1));
    assert!(psi0(1, &[laurent("1"), laurent("1")], [(-2, 0), (0, 2)]).is_err());
    // exact value: 1/(x - y) + 1/x at x = 2, y = 1/2
    assert_eq!(
        psi0_derivative(0, 0, &f, &q(2), &qf(1, 2), true),
        qf(2, 3) + qf(1, 2)
    );
    // divided derivatives of 1/(x - y)
    assert_eq!(psi0_derivative(1, 1, &[], &q(3), &q(1), true), q(-2) / q(8));
    for m in 0..4 {
        for n in 0..4 {
            assert!(frak_e(m, n, &[], &q(5)).is_zero());
        }
    }
    // 𝔈 with f_1 = x^2: ∂^{(m)} y^2 ∂^{(n)} y
    let f = vec![LaurentPoly::new(), laurent("x^2")];
    assert_eq!(frak_e(1, 0, &f, &q(3)), q(18));
    assert_eq!(frak_e(2, 1, &f, &q(3)), q(1));
}

#[test]
fn r_matrix_and_neumann() {
    for g in 1..=2 {
        let data = genus_data(g, 2);
        for p in 1..=3 {
            let kernel = SchottkyKernel::new(p, &data).unwrap();
            assert!(kernel.neumann_check().unwrap(), "g={g} p={p}");
            // f ≡ 0: the a = -b entries vanish
            for m in 0..=2 {
                for n in 0..=2 {
                    assert!(kernel.r(1, m, -1, n).is_zero());
                }
            }
            let r = kernel.r(1, 0, 1, 1);
            // (-1)^p ρ^{1/2} ρ^{1/2} ∂^{(0,1)}(1/(x-y)) at (w_{-1}, w_1) = (-1)^p / (w_{-1} - w_1)^2
            let mut e = vec![0; g];
            e[0] = 2;
            let expect = redcoh::scalar::sign(p) / q(25);
            assert_eq!(r.coeff(&e), expect);
        }
        let f = vec![laurent("1/x"), laurent("x + 2"), laurent("x^-2")];
        let kernel = SchottkyKernel::new(2, &data.clone().with_f(f)).unwrap();
        assert!(kernel.neumann_check().unwrap());
        assert!(!kernel.r(1, 0, -1, 1).is_zero());
        assert!(
            SchottkyKernel::new(1, &data.clone().with_f(vec![laurent("1"), laurent("1")])).is_err()
        );
    }
    assert!(SchottkyData::new(vec![q(1)], vec![q(1)], 1, 2).is_err());
    assert!(SchottkyData::new(vec![q(1)], vec![q(2)], 2, 3).is_err());
}

#[test]
fn kernels_at_rho_zero() {
    let x = qf(1, 2);
    let y = qf(1, 3);
    for g in 1..=2 {
        for f in [vec![], vec![laurent("1/x"), laurent("x"), laurent("3")]] {
            let data = genus_data(g, 2).with_f(f.clone());
            for p in 1..=2 {
                if f.len() as i64 > 2 * p - 1 {
                    continue;
                }
                let kernel = SchottkyKernel::new(p, &data).unwrap();
                let psi = kernel.psi(&x, &y).unwrap();
                assert_eq!(
                    psi.coeff(&vec![0; g]),
                    psi0_derivative(0, 0, &f, &x, &y, true)
                );
                // the correction carries positive order
                let constant_only: MultiSeries<Rational> = {
                    let mut c = MultiSeries::new(psi.vars(), psi.window()).unwrap();
                    c.accumulate(&vec![0; g], psi0_derivative(0, 0, &f, &x, &y, true));
                    c
                };
                assert_ne!(psi, constant_only, "ψ_p must have ρ-corrections");
                for a in [1i64, -1] {
                    let chi = kernel.chi(a, &x).unwrap();
                    for (l, c) in chi.iter().enumerate() {
                        let w = if a > 0 {
                            &data.w_plus[0]
                        } else {
                            &data.w_minus[0]
                        };
                        assert_eq!(
                            c.coeff(&vec![0; g]),
                            psi0_derivative(0, l as i64, &f, &x, w, true)
                        );
                    }
                }
                // θ_a - χ_a = (-1)^p ρ_a^{p-1-ℓ} χ_{-a}(2p-2-ℓ)
                let theta = kernel.theta(1, &x).unwrap();
                let chi = kernel.chi(1, &x).unwrap();
                let chim = kernel.chi(-1, &x).unwrap();
                for l in 0..=(2 * p - 2) {
                    let mut shift = vec![0; g];
                    shift[0] = 2 * (p - 1 - l);
                    let expect = chim[(2 * p - 2 - l) as usize]
                        .shift(&shift)
                        .scale(&redcoh::scalar::sign(p));
                    assert_eq!(theta[l as usize].sub(&chi[l as usize]).unwrap(), expect);
                }
            }
        }
    }
}

/// The multiplier `q` with `q + 2 + 1/q = -D/ρ`, i.e. `q = -t (1 + q)^2` with
/// `t = ρ/D`, as coefficients in `ρ` by fixed-point iteration.
fn multiplier(d: &Rational, order: usize) -> Vec<Rational> {
    let t = Rational::one() / d;
    let mut qs = vec![Rational::zero(); order + 1];
    for _ in 0..=order {
        // (1 + q)^2
        let mut one_plus = qs.clone();
        one_plus[0] += Rational::one();
        let mut sq = vec![Rational::zero(); order + 1];
        for i in 0..=order {
            for j in 0..=(order - i) {
                sq[i + j] += &one_plus[i] * &one_plus[j];
            }
        }
        let mut next = vec![Rational::zero(); order + 1];
        for i in 0..order {
            next[i + 1] = -&t * &sq[i];
        }
        qs = next;
    }
    qs
}

#[test]
fn genus_one_dictionary() {
    // Z = Σ_n p(n) q^n with the multiplier q(ρ)
    let order = 4usize;
    let data = SchottkyData::new(vec![q(2)], vec![qf(-1, 3)], order as i64, 2 * order).unwrap();
    let z = genus_g_partition(&data).unwrap();
    let d = (qf(-1, 3) - q(2)) * (qf(-1, 3) - q(2));
    let qs = multiplier(&d, order);
    let partitions = [1i64, 1, 2, 3, 5];
    let mut expect = vec![Rational::zero(); order + 1];
    let mut power = vec![Rational::zero(); order + 1];
    power[0] = Rational::one();
    for pn in partitions {
        for i in 0..=order {
            expect[i] += q(pn) * &power[i];
        }
        let mut next = vec![Rational::zero(); order + 1];
        for i in 0..=order {
            for j in 0..=(order - i) {
                next[i + j] += &power[i] * &qs[j];
            }
        }
        power = next;
    }
    for (i, e) in expect.iter().enumerate() {
        assert_eq!(z.coeff(&[i as i64]), *e, "rho^{i}");
    }
}

#[test]
fn partition_leading_terms() {
    let data = genus_data(2, 2);
    let z = genus_g_partition(&data).unwrap();
    assert_eq!(z.vars(), &["rho1", "rho2"]);
    assert_eq!(z.coeff(&[0, 0]), q(1));
    // weight one on handle 1: <-a@w_{-1}, a@w_1> = -1/(w_{-1} - w_1)^2
    assert_eq!(z.coeff(&[1, 0]), q(-1) / q(25));
    assert_eq!(z.coeff(&[0, 1]), q(-1) / q(64));
}

fn self_consistent(
    g: usize,
    k: i64,
    u: &GradedVector,
    ins: &[(GradedVector, Rational)],
    f: Vec<LaurentPoly>,
) {
    let data = genus_data(g, k).with_f(f);
    let x = qf(1, 2);
    let mut all = vec![(u.clone(), x.clone())];
    all.extend(ins.iter().cloned());
    let lhs = genus_g_npoint(&all, &data).unwrap();
    let rhs = genus_g_reduce(&(u.clone(), x), ins, &data).unwrap();
    assert!(!lhs.is_zero(), "vacuous case");
    assert_eq!(
        lhs,
        rhs.total,
        "g={g} K={k} u={} n={}",
        u.literal(),
        ins.len()
    );
}

#[test]
fn recursion_self_consistency_weight_one() {
    let a = GradedVector::a();
    let y1 = qf(1, 5);
    let y2 = qf(-1, 7);
    for g in 1..=2 {
        self_consistent(g, 2, &a, &[(a.clone(), y1.clone())], vec![]);
        self_consistent(
            g,
            2,
            &a,
            &[(st("a[-2]|1"), y1.clone()), (st("a[-1]^2|1"), y2.clone())],
            vec![],
        );
        self_consistent(
            g,
            2,
            &a,
            &[(a.clone(), y1.clone())],
            vec![laurent("1/x + 1")],
        );
    }
    // odd number of free fields: both sides vanish
    let data = genus_data(1, 2);
    assert!(genus_g_reduce(&(a.clone(), qf(1, 2)), &[], &data)
        .unwrap()
        .total
        .is_zero());
}

#[test]
fn recursion_self_consistency_weight_two() {
    let w = GradedVector::omega();
    let y1 = qf(1, 5);
    for g in 1..=2 {
        self_consistent(g, 2, &w, &[], vec![]);
        self_consistent(
            g,
            2,
            &w,
            &[(GradedVector::a(), y1.clone()), (st("a[-2]|1"), qf(-1, 7))],
            vec![],
        );
        self_consistent(
            g,
            1,
            &w,
            &[(st("a[-1]^2|1"), y1.clone())],
            vec![laurent("x^-1"), laurent("2"), laurent("x")],
        );
    }
}

#[test]
fn recursion_self_consistency_weight_three() {
    let u = st("a[-1]^3|1");
    let y1 = qf(1, 5);
    for g in 1..=2 {
        self_consistent(g, 2, &u, &[(GradedVector::a(), y1.clone())], vec![]);
    }
    self_consistent(
        1,
        2,
        &u,
        &[(st("a[-1]^2|1"), y1.clone()), (st("a[-2]|1"), qf(-1, 7))],
        vec![laurent("x^2")],
    );
}

#[test]
fn reduction_edge_cases() {
    let data = genus_data(1, 1);
    let ins = vec![(GradedVector::a(), qf(1, 5))];
    let vac = genus_g_reduce(&(GradedVector::vacuum(), qf(1, 2)), &ins, &data).unwrap();
    assert_eq!(vac.total, genus_g_npoint(&ins, &data).unwrap());
    assert!(vac.h1.is_zero());
    assert!(matches!(
        genus_g_reduce(&(st("a[-2]|1"), qf(1, 2)), &ins, &data),
        Err(redcoh::Error::NotQuasiPrimary(_))
    ));
    assert!(genus_g_reduce(&(GradedVector::a(), qf(1, 5)), &ins, &data).is_err());
    assert!(genus_g_npoint(&[(GradedVector::a(), q(3))], &data).is_err());
}
