use std::collections::BTreeMap;

use proptest::prelude::*;
use towerforge::stats::fiber_hit_coverage;
use towerforge::symbolic::cylinder_measure;
use towerforge::*;

fn hk(depth: usize) -> RankOneSystem {
    RankOneSystem::new(RankOneSpec::hajian_kakutani(12), depth).unwrap()
}

fn unit() -> IntervalSet {
    IntervalSet::from_fracs(&[(0, 1, 1, 1)]).unwrap()
}

/// Unions of intervals with endpoints on the `1/16` grid inside `[0, 1)`.
fn dyadic_set() -> impl Strategy<Value = IntervalSet> {
    proptest::collection::vec((0i64..16, 1i64..=4), 1..4).prop_map(|parts| {
        let pairs: Vec<_> = parts.into_iter().map(|(a, w)| (a, 16, (a + w).min(16), 16)).collect();
        IntervalSet::from_fracs(&pairs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inclusion_exclusion(a in dyadic_set(), b in dyadic_set(), shift in 0i64..8) {
        prop_assert_eq!(a.union(&b).measure() + a.intersect(&b).measure(), a.measure() + b.measure());
        prop_assert_eq!(a.translate(&rat(shift, 3)).unwrap().measure(), a.measure());
    }

    #[test]
    fn k_standard_towers(k in dyadic_set(), n in 1usize..7) {
        let sys = hk(7);
        let t = build_k_standard(&sys, &k, n, 7).unwrap();
        prop_assert!(t.heights().iter().all(|&h| h == n || h == n + 1));
        prop_assert!(is_k_standard(&t, &k).ok);
        for c in &t.columns {
            for l in &c.level_sets {
                prop_assert!(l.is_subset(&k) || l.is_disjoint(&k));
            }
        }
        let coverage: Vec<_> = (0..=n + 2)
            .map(|m| fiber_hit_coverage(&t, &k, m).unwrap().finite().cloned().unwrap())
            .collect();
        prop_assert_eq!(&coverage[0], &k.measure());
        prop_assert!(coverage.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn refined_towers_refine(n1 in 1usize..5, extra in 0usize..12) {
        let sys = hk(7);
        let t1 = build_k_standard(&sys, &unit(), n1, 7).unwrap();
        let n = t1.max_height() + extra;
        let t2 = refine_k_standard(&sys, &t1, &unit(), n, 7).unwrap();
        let r = refines(&t2, &t1);
        prop_assert!(r.base_inclusion && r.levelwise, "{:?}", r);
        prop_assert!(t2.heights().iter().all(|&h| h >= n));
    }

    #[test]
    fn wider_windows_refine_narrower(atom in dyadic_set(), m in 0i64..3, n in 0i64..3) {
        let sys = hk(8);
        let alpha = Partition::new(vec![atom]).unwrap();
        let wide = iterated_join(&sys, &alpha, -m - 1, n + 1, 8).unwrap();
        let narrow = iterated_join(&sys, &alpha, -m, n, 8).unwrap();
        let inner = 1..(m + n + 2) as usize;
        let mut sums: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for at in &wide.atoms {
            let u = at.word[inner.clone()].to_vec();
            if u.iter().any(|&s| s != 1) {
                *sums.entry(u).or_default() += &at.measure;
            }
            let coarse = narrow.get(&at.word[inner.clone()]).and_then(|x| x.realized.as_ref());
            if let (Some(r), Some(c)) = (&at.realized, coarse) {
                prop_assert!(r.is_subset(c));
            }
        }
        sums.retain(|_, v| *v != Rational::default());
        let mut want = narrow.measures();
        want.retain(|_, v| *v != Rational::default());
        prop_assert_eq!(sums, want);
    }

    #[test]
    fn shifted_cylinders_agree(u in proptest::collection::vec(1u32..3, 0..3), v in proptest::collection::vec(1u32..3, 1..3)) {
        let sys = hk(8);
        let alpha = Partition::new(vec![unit()]).unwrap();
        let model = build_subshift(&sys, &alpha, 6, 8).unwrap();
        let joined: Vec<u32> = u.iter().chain(&v).copied().collect();
        prop_assert_eq!(cylinder_measure(&model, &u, &v).unwrap(), model.measure(&joined).unwrap());
    }

    #[test]
    fn periodic_walk_inequalities(pattern in proptest::collection::vec(1u32..4, 2..9), lo in -3i64..1) {
        prop_assume!(pattern.iter().any(|&s| s != 1));
        let walk = SymbolWalk::periodic(&pattern, 40).unwrap();
        let k = CompactOpen::non_one_at_zero(3).unwrap();
        let a = CompactOpen::cylinder(lo, pattern[..2].to_vec());
        prop_assume!(a.is_ok());
        let audit = inequality_audit(std::slice::from_ref(&walk), &a.unwrap(), &k, 60).unwrap();
        prop_assert!(audit.clean());
        let est = radon_estimate(&walk, &k, &k, &[5, 17, 60]).unwrap();
        prop_assert!(est.iter().all(|s| s.estimate == Some(int(1))));
    }
}

#[test]
fn subshift_language_is_closed() {
    let sys = hk(9);
    let alpha = Partition::new(vec![
        IntervalSet::from_fracs(&[(0, 1, 1, 2)]).unwrap(),
        IntervalSet::from_fracs(&[(1, 2, 3, 2)]).unwrap(),
    ])
    .unwrap();
    let model = build_subshift(&sys, &alpha, 6, 9).unwrap();
    let audit = model.audit();
    assert!(audit.ok(), "{audit:?}");
    for len in 1..=6 {
        assert!(model.is_admissible(&vec![1; len]));
        assert_eq!(model.measure(&vec![1; len]).unwrap(), MeasureValue::Infinite);
    }
}

#[test]
fn uniformizer_runs_on_a_spacer_atom() {
    let depth = 9;
    let sys = hk(depth);
    let alpha0 = Partition::new(vec![
        unit(),
        IntervalSet::from_fracs(&[(1, 1, 3, 2)]).unwrap(),
    ])
    .unwrap();
    let eps = rat(1, 4);
    let params = UniformizerParams::new(eps.clone(), 2, 3).unwrap();
    let run = uniformize(&sys, &alpha0, &params, &UniformizeMode::Initial, depth).unwrap();
    assert!(run.telescopes(&eps));
    assert!(run.alpha.k_set().is_subset(&alpha0.k_set()));
    assert_eq!(run.logs.len(), 2);
    assert!(run.logs.iter().all(|l| l.d_increment <= l.delta));
}

#[test]
fn reports_are_deterministic() {
    let sys = hk(8);
    let samples = sample_points(&unit(), 12);
    let c = IntervalSet::from_fracs(&[(0, 1, 1, 4)]).unwrap();
    let run = || {
        hopf_ratio_scan(&sys, &c, &unit(), &samples, &HorizonPlan::Fixed(vec![8, 64]), 8)
            .unwrap()
            .to_json()
    };
    assert_eq!(run(), run());
}
