use proptest::prelude::*;

use coco::formula::{compile, evaluate_raw, parse_formula, to_dnf, PropFormula};
use coco::Confidence;

fn formula(vars: usize) -> impl Strategy<Value = PropFormula> {
    let leaf = (0..vars).prop_map(PropFormula::var);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(PropFormula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| PropFormula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| PropFormula::or(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| PropFormula::implies(a, b)),
        ]
    })
}

fn assignments(vars: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1usize << vars).map(move |k| (0..vars).map(|i| k & (1 << i) != 0).collect())
}

proptest! {
    #[test]
    fn dnf_keeps_the_truth_table(f in formula(4)) {
        let d = to_dnf(&f);
        for a in assignments(4) {
            prop_assert_eq!(f.eval(&a), d.eval(&a));
        }
    }

    #[test]
    fn display_parses_back_to_an_equivalent_formula(f in formula(3)) {
        let back = parse_formula(&f.to_string()).unwrap();
        for a in assignments(3) {
            prop_assert_eq!(f.eval(&a), back.eval(&a));
        }
    }

    /// With independent assumptions and a product conjunction, the compiled
    /// expression is the exact probability of the formula.
    #[test]
    fn compiled_formula_is_exact_under_independence(
        f in formula(4),
        ps in proptest::collection::vec(0.0f64..=1.0, 4),
    ) {
        let truth: f64 = assignments(4)
            .filter(|a| f.eval(a))
            .map(|a| a.iter().zip(&ps).map(|(&x, &p)| if x { p } else { 1.0 - p }).product::<f64>())
            .sum();
        let ms: Vec<Confidence> = ps.iter().map(|&p| Confidence::clamped(p)).collect();
        let conj = |_: &[usize], v: &[f64]| v.iter().product::<f64>();
        let value = evaluate_raw(&compile(&f).unwrap(), &ms, &conj).unwrap();
        prop_assert!((value - truth).abs() < 1e-9, "{} vs {}", value, truth);
    }
}
