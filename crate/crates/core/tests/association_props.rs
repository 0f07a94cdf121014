use impression_core::association::{model_human_similarity, pole_association, AssociationVector};
use proptest::prelude::*;

fn vec3(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    let v = || proptest::collection::vec(-10.0f64..10.0, dim);
    (v(), v(), v())
}

fn nonzero(v: &[f64]) -> bool {
    v.iter().map(|x| x * x).sum::<f64>() > 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pole_swap_antisymmetry_and_scale_invariance(
        (i, p, n) in (1usize..64).prop_flat_map(vec3),
        log_c in -6.0f64..6.0,
    ) {
        prop_assume!(nonzero(&i) && nonzero(&p) && nonzero(&n));
        let a = pole_association(&i, &p, &n).unwrap();
        let b = pole_association(&i, &n, &p).unwrap();
        prop_assert!((a + b).abs() <= 1e-12);
        prop_assert!(a.abs() <= 2.0 + 1e-12);
        let c = log_c.exp();
        let scaled: Vec<f64> = i.iter().map(|x| c * x).collect();
        let s = pole_association(&scaled, &p, &n).unwrap();
        prop_assert!((s - a).abs() <= 1e-12, "c={} {} vs {}", c, s, a);
    }
}

fn assoc(scores: Vec<f64>) -> AssociationVector {
    AssociationVector {
        model_id: "m".into(),
        attribute: "a".into(),
        scores,
    }
}

proptest! {
    #[test]
    fn similarity_is_rank_based(
        pairs in proptest::collection::vec((-2.0f64..2.0, 0.0f64..100.0), 3..60)
    ) {
        let (m, h): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(m.iter().any(|&x| x != m[0]) && h.iter().any(|&x| x != h[0]));
        let base = model_human_similarity(&assoc(m.clone()), &h).unwrap();
        prop_assert!(base.rho.abs() <= 1.0);
        let tm: Vec<f64> = m.iter().map(|x| (3.0 * x).exp()).collect();
        let th: Vec<f64> = h.iter().map(|x| x.sqrt() * 10.0 - 4.0).collect();
        let t = model_human_similarity(&assoc(tm), &th).unwrap();
        prop_assert!((t.rho - base.rho).abs() < 1e-12);
        prop_assert!((t.p_value - base.p_value).abs() < 1e-12);
        let own = model_human_similarity(&assoc(m.clone()), &m).unwrap();
        prop_assert!((own.rho - 1.0).abs() < 1e-12);
    }
}
