use itl_core::alexandroff::{
    evaluate, find_countermodel, is_valid_on_system, random_open_set, random_system,
    enumerate_systems, EnumerateOptions, MAX_EVALUATIONS,
};
use itl_core::formula::random_formula;
use itl_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sensibility read off the formulas themselves rather than Σ indices.
fn sensible_by_formulas(s: &SigmaContext, now: TypeSet, next: TypeSet) -> bool {
    let holds = |t: TypeSet, g: &Formula| t.contains(s.index_of(g).unwrap());
    s.formulas().iter().all(|g| match g {
        Formula::Next(a) => holds(now, g) == holds(next, a),
        Formula::Eventually(a) => holds(now, g) == (holds(now, a) || holds(next, g)),
        Formula::Forall(_) => holds(now, g) == holds(next, g),
        _ => true,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printing_round_trips(seed in any::<u64>()) {
        let phi = random_formula(&mut rng(seed), 6, &["p", "q", "r1"], Fragment::full());
        let text = phi.to_string();
        prop_assert_eq!(Formula::parse(&text).unwrap(), phi, "{}", text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sensible_pairs_match_the_formula_reading(seed in any::<u64>()) {
        let phi = random_formula(&mut rng(seed), 3, &["p", "q"], Fragment::decidable());
        let s = SigmaContext::new(&phi).unwrap();
        let types = s.enumerate_types();
        prop_assume!(types.len() <= 64);
        for &a in &types {
            prop_assert!(s.is_type(a));
            for &b in &types {
                prop_assert_eq!(s.sensible_pair(a, b), sensible_by_formulas(&s, a, b));
            }
        }
    }

    #[test]
    fn extension_laws_hold_on_random_systems(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let x = random_system(n, seed);
        let p = x.poset();
        let val: Valuation = [
            ("p".to_string(), random_open_set(p, &mut r)),
            ("q".to_string(), random_open_set(p, &mut r)),
        ].into();
        let psi = random_formula(&mut r, 3, &["p", "q"], Fragment::full());
        let s = evaluate(&x, &val, &psi).unwrap();
        prop_assert!(p.is_open(s), "truth set of {} is not open", psi);
        let dn = evaluate(&x, &val, &Formula::not(Formula::not(psi.clone()))).unwrap();
        prop_assert_eq!(dn, p.interior(p.closure(s)));
    }
}

#[test]
fn reduction_is_idempotent_and_irreducible() {
    for text in ["p -> q", "<>p", "Xp -> p"] {
        let s = SigmaContext::new(&Formula::parse(text).unwrap()).unwrap();
        let types = s.enumerate_types();
        let mut r = rng(11);
        let mut tested = 0;
        for _ in 0..4000 {
            let m = random_tree(&mut r, &types, TypeSet::EMPTY, 3);
            if m.check(&s).is_err() {
                continue;
            }
            tested += 1;
            let red = m.reduce();
            assert!(red.is_irreducible(), "{text}: {m:?}");
            assert_eq!(red.reduce(), red);
            assert_eq!(red.label(), m.label());
            assert!(red.size() <= m.size());
            assert!(red.check(&s).is_ok());
        }
        assert!(tested > 50, "{text}: only {tested} random moments");
    }
}

fn random_tree(r: &mut ChaCha8Rng, types: &[TypeSet], floor: TypeSet, depth: usize) -> Moment {
    use rand::Rng;
    let above: Vec<TypeSet> = types.iter().copied().filter(|t| floor.is_subset(*t)).collect();
    let label = above[r.gen_range(0..above.len())];
    let kids = if depth == 0 { 0 } else { r.gen_range(0..=3) };
    let children = (0..kids)
        .map(|_| random_tree(r, types, label, depth - 1))
        .collect();
    Moment::new(label, children)
}

/// A finite countermodel rules out VALID, and VALID formulas hold on every
/// small system.
#[test]
fn decision_agrees_with_small_models() {
    let mut r = rng(5);
    let small: Vec<FiniteSystem> = (1..=2)
        .flat_map(|n| enumerate_systems(n, &EnumerateOptions::default()).unwrap())
        .collect();
    let mut valid = 0;
    for _ in 0..150 {
        let phi = random_formula(&mut r, 3, &["p", "q"], Fragment::decidable());
        let d = decide(&phi, &DecideOptions::default()).unwrap();
        match &d.verdict {
            Verdict::Valid => {
                valid += 1;
                for x in &small {
                    assert!(is_valid_on_system(x, &phi, MAX_EVALUATIONS).unwrap(), "{phi}");
                }
            }
            Verdict::Falsifiable(cert) => verify_certificate(cert, &phi).unwrap(),
            Verdict::ResourceLimit(_) => {}
        }
        if let Some(_cm) = find_countermodel(&phi, 2, MAX_EVALUATIONS).unwrap() {
            assert!(!matches!(d.verdict, Verdict::Valid), "{phi}");
        }
    }
    assert!(valid > 0);
}
