use mwad_core::adkernel::{apply, bdef_entry, compose, smoothness_lift, verify_ad, AdKernel, AdParams};
use mwad_core::linalg::{self, C64};
use mwad_core::seqspace::{norm, CoeffSequence, Exponent, Family, SpaceParams, WeightMode};
use mwad_core::thresholds::{
    classify, compare_rules, regime, tau_hat_scaled, tau_hat_shifted, Regime,
};
use mwad_core::weights::WeightModel;
use mwad_core::{distance_factor, DyadicCube, Window};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![
        1 => Just(Exponent::Infinite),
        4 => (0.1f64..10.0).prop_map(Exponent::Finite),
    ]
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::B), Just(Family::F)]
}

fn cube(n: usize, j: std::ops::Range<i32>, k: i64) -> impl Strategy<Value = DyadicCube> {
    (j, prop::collection::vec(-k..k, n)).prop_map(|(j, k)| DyadicCube::new(j, &k))
}

fn seq_in(window: Window, max_len: usize) -> impl Strategy<Value = CoeffSequence> {
    let h = window.k as i64;
    prop::collection::vec(
        (window.j_min..=window.j_max, any::<u32>(), -1.0f64..1.0, -1.0f64..1.0),
        1..max_len,
    )
    .prop_map(move |rows| {
        let mut t = CoeffSequence::new(1, 1);
        for (j, u, re, im) in rows {
            let span = 2 * (h << (j - window.j_min));
            let k = (u as i64).rem_euclid(span) - span / 2;
            t.insert(DyadicCube::new(j, &[k]), vec![C64::new(re, im)]).unwrap();
        }
        t
    })
}

fn max_diff(a: &CoeffSequence, b: &CoeffSequence, window: &Window) -> f64 {
    let zero = vec![C64::new(0.0, 0.0)];
    window
        .enumerate()
        .unwrap()
        .iter()
        .map(|q| (a.get(q).unwrap_or(&zero)[0] - b.get(q).unwrap_or(&zero)[0]).norm())
        .fold(0.0, f64::max)
}

#[test]
fn tau_hat_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100_000 {
        let n = rng.gen_range(1..=4);
        let p = 10f64.powf(rng.gen_range(-1.0..1.0));
        let tau = rng.gen_range(0.0..3.0 / p);
        let d = rng.gen_range(0.0..n as f64);
        let (a, b) = (tau_hat_shifted(n, tau, p, d), tau_hat_scaled(n, tau, p, d));
        assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()), "{n} {p} {tau} {d}: {a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn one_regime_per_draw(fam in family(), p in 0.1f64..10.0, q in exponent(), at_crit in any::<bool>(), tau in 0.0f64..5.0) {
        let tau = if at_crit { 1.0 / p } else { tau };
        let r = regime(fam, tau, p, q);
        let crit = 1.0 / p;
        prop_assert_eq!(r == Regime::Critical, fam == Family::F && tau == crit && !q.is_infinite());
        if fam == Family::B && tau == crit && !q.is_infinite() {
            prop_assert_eq!(r, Regime::Subcritical);
        }
        prop_assert_eq!(r == Regime::Supercritical, tau > crit || (tau == crit && q.is_infinite()));
    }

    #[test]
    fn report_invariants(
        n in 1usize..4,
        fam in family(),
        s in -3.0f64..3.0,
        p in 0.1f64..10.0,
        q in exponent(),
        tau_scale in 0.0f64..3.0,
        d_frac in 0.0f64..1.0,
        dt_frac in 0.0f64..1.0,
    ) {
        let nf = n as f64;
        let tau = tau_scale / p;
        let (d, dt) = (d_frac * nf * 0.999, if p <= 1.0 { 0.0 } else { dt_frac * nf * 0.999 });
        let rep = classify(n, fam, s, tau, p, q, d, dt).unwrap();
        prop_assert!(rep.r_tilde > 0.0 && rep.r_tilde <= 1.0);
        prop_assert!(rep.j_tilde >= nf);
        if tau >= 1.0 / p {
            let direct = nf * (tau - 1.0 / p) + d / p;
            prop_assert!((nf * rep.tau_hat - direct).abs() <= 1e-12 * (1.0 + direct));
        }
        for fact in compare_rules(&rep).facts {
            prop_assert!(fact.holds, "{}", fact.description);
        }
    }

    #[test]
    fn bdef_is_symmetric_when_e_equals_f(q in cube(2, -4..4, 8), r in cube(2, -4..4, 8), d in 0.0f64..5.0, e in -2.0f64..4.0) {
        let params = AdParams::new(d, e, e);
        prop_assert_eq!(bdef_entry(&q, &r, &params), bdef_entry(&r, &q, &params));
        prop_assert_eq!(distance_factor(&q, &r), distance_factor(&r, &q));
    }

    #[test]
    fn interior_points_are_comparable(q in cube(2, -3..3, 6), r in cube(2, -3..3, 6), u in prop::array::uniform4(0.0f64..1.0)) {
        let (cq, cr) = (q.corner(), r.corner());
        let x: Vec<f64> = cq.iter().zip(&u[..2]).map(|(c, t)| c + t * q.edge()).collect();
        let y: Vec<f64> = cr.iter().zip(&u[2..]).map(|(c, t)| c + t * r.edge()).collect();
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ratio = (1.0 + dist / q.edge().max(r.edge())) / distance_factor(&q, &r);
        let c = 1.0 + 2.0 * 2f64.sqrt();
        prop_assert!(ratio >= 1.0 / c && ratio <= c);
    }

    #[test]
    fn rescale_is_additive(q in cube(1, -3..3, 8), r in cube(1, -3..3, 8), s1 in -2.0f64..2.0, s2 in -2.0f64..2.0) {
        let b = AdKernel::analytic(AdParams::new(2.0, 1.5, 1.0));
        let two = b.rescale(s1).rescale(s2).entry(&q, &r).unwrap();
        let one = b.rescale(s1 + s2).entry(&q, &r).unwrap();
        prop_assert!((two - one).norm() <= 1e-12 * one.norm());
        let direct = b.entry(&q, &r).unwrap() * (r.edge() / q.edge()).powf(s1 + s2);
        prop_assert!((one - direct).norm() <= 1e-12 * direct.norm());
    }

    #[test]
    fn analytic_kernel_verifies_against_itself(d in 0.0f64..4.0, e in -1.0f64..3.0, f in -1.0f64..3.0) {
        let params = AdParams::new(d, e, f);
        let w = Window::new(-1, 1, 2, 1).unwrap();
        let c = verify_ad(&AdKernel::analytic(params), &params, &w).unwrap().c;
        prop_assert!((c - 1.0).abs() <= 1e-14, "{c}");
    }

    #[test]
    fn weight_root_recomposes(x in prop::collection::vec(0.1f64..5.0, 2), p in 0.3f64..4.0, d1 in 0.0f64..0.9, d2 in 0.0f64..0.9) {
        let w = WeightModel::diagonal_power(&[d1, d2], 2).unwrap();
        let root = w.root(&x, p).unwrap();
        let back = linalg::hermitian_power(&root, p).unwrap();
        let full = w.weight(&x).unwrap();
        prop_assert!((back - &full).norm() <= 1e-10 * full.norm());
    }

    #[test]
    fn rho_is_homogeneous(k in -6i64..6, j in -2i32..3, re in -3.0f64..3.0, im in -3.0f64..3.0, p in 0.5f64..3.0) {
        let w = WeightModel::scalar_power(0.5, 1, 1).unwrap();
        let q = DyadicCube::new(j, &[k]);
        let lambda = C64::new(re, im);
        let e = [C64::new(1.0, 0.0)];
        let a = w.rho(&q, p, &[lambda]).unwrap();
        let b = lambda.norm() * w.rho(&q, p, &e).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apply_is_linear(
        t in seq_in(Window::new(-1, 2, 2, 1).unwrap(), 8),
        u in seq_in(Window::new(-1, 2, 2, 1).unwrap(), 8),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let window = Window::new(-1, 2, 2, 1).unwrap();
        let k = AdKernel::analytic(AdParams::new(2.5, 1.5, 1.2));
        let (a, b) = (C64::new(a, 0.3), C64::new(b, -0.7));
        let lhs = apply(&k, &t.scaled(a).add(&u.scaled(b)).unwrap(), &window).unwrap().output;
        let rhs = apply(&k, &t, &window).unwrap().output.scaled(a).add(&apply(&k, &u, &window).unwrap().output.scaled(b)).unwrap();
        prop_assert!(max_diff(&lhs, &rhs, &window) <= 1e-12);
    }

    #[test]
    fn lift_is_an_isometry(t in seq_in(Window::new(-2, 2, 2, 1).unwrap(), 10), fam in family(), s in -2.0f64..2.0, p in 0.3f64..4.0, q in exponent(), tau in 0.0f64..1.5) {
        let window = Window::new(-2, 2, 2, 1).unwrap();
        let at_s = SpaceParams::new(fam, s, tau, p, q).unwrap();
        let at_0 = SpaceParams::new(fam, 0.0, tau, p, q).unwrap();
        let a = norm(&t, &at_s, WeightMode::Unweighted, &window).unwrap().value;
        let b = norm(&smoothness_lift(&t, s), &at_0, WeightMode::Unweighted, &window).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn larger_window_never_lowers_the_sup(t in seq_in(Window::new(-1, 1, 2, 1).unwrap(), 10), fam in family(), p in 0.3f64..4.0, q in exponent(), tau in 0.01f64..1.5) {
        let small = Window::new(-1, 1, 2, 1).unwrap();
        let big = Window::new(-3, 2, 1, 1).unwrap();
        let sp = SpaceParams::new(fam, 0.0, tau, p, q).unwrap();
        let a = norm(&t, &sp, WeightMode::Unweighted, &small).unwrap().value;
        let b = norm(&t, &sp, WeightMode::Unweighted, &big).unwrap().value;
        prop_assert!(b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn one_fits_all(pairs in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..20), qi in 0usize..4) {
        let q = [0.3, 1.0, 2.0, f64::INFINITY][qi];
        let lhs: f64 = pairs.iter().map(|(a, b)| a * b).sum();
        let sum_a: f64 = pairs.iter().map(|(a, _)| a).sum();
        let rhs = if q.is_infinite() {
            sum_a * pairs.iter().map(|(_, b)| *b).fold(0.0, f64::max)
        } else {
            let outer = (1.0 - 1.0 / q).max(0.0);
            sum_a.powf(outer) * pairs.iter().map(|(a, b)| a.powf(q.min(1.0)) * b.powf(q)).sum::<f64>().powf(1.0 / q)
        };
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn compose_is_associative(d in 2.5f64..4.0, e in 1.0f64..3.0, f in 1.0f64..3.0) {
        let window = Window::new(-1, 1, 1, 1).unwrap();
        let a = AdKernel::analytic(AdParams::new(d, e, f));
        let b = AdKernel::analytic(AdParams::new(d + 0.5, f, e));
        let c = AdKernel::analytic(AdParams::new(3.0, 2.0, 2.0));
        let left = compose(&compose(&a, &b, &window).unwrap(), &c, &window).unwrap();
        let right = compose(&a, &compose(&b, &c, &window).unwrap(), &window).unwrap();
        for q in window.enumerate().unwrap() {
            for r in window.enumerate().unwrap() {
                let (x, y) = (left.entry(&q, &r).unwrap(), right.entry(&q, &r).unwrap());
                prop_assert!((x - y).norm() <= 1e-10);
            }
        }
    }
}
