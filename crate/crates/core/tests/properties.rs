mod common;

use std::sync::Arc;

use coalition_attrib::diagnostics::{
    dummy_features, symmetric_pairs, validate_properties, PropertyOptions, PropertyStatus,
};
use coalition_attrib::engine::{combine_by_cardinality, combine_weighted, ValueTable};
use coalition_attrib::expr::{BinOp, CmpOp, Extremum, Node};
use coalition_attrib::{
    exact_shapley, parse_model, Backend, ExactOptions, FeatureSchema, Mode, ModelExpr,
};
use proptest::prelude::*;

use common::*;

fn schema6() -> Arc<FeatureSchema> {
    continuous(&["a", "b", "c", "d", "e", "f"])
}

fn arb_node() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (0usize..6).prop_map(Node::Var),
        prop_oneof![
            (0u32..1000).prop_map(|k| f64::from(k) / 8.0),
            (1e-9f64..1e9),
        ]
        .prop_map(Node::Const),
    ];
    leaf.prop_recursive(6, 64, 2, |inner| {
        let bin = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div)
        ];
        let cmp = prop_oneof![
            Just(CmpOp::Gt),
            Just(CmpOp::Ge),
            Just(CmpOp::Lt),
            Just(CmpOp::Le),
            Just(CmpOp::Eq)
        ];
        prop_oneof![
            (bin, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Node::binary(op, a, b)),
            (cmp.clone(), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Node::compare(op, a, b)),
            (cmp, inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Node::Indicator(Box::new(Node::compare(op, a, b)))),
            inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
            (any::<bool>(), inner.clone(), inner.clone()).prop_map(|(min, a, b)| Node::Extremum {
                kind: if min { Extremum::Min } else { Extremum::Max },
                lhs: Box::new(a),
                rhs: Box::new(b),
            }),
            (inner, -4i32..=4).prop_map(|(a, e)| Node::Pow {
                base: Box::new(a),
                exponent: e,
            }),
        ]
    })
}

fn depth(n: &Node) -> usize {
    match n {
        Node::Const(_) | Node::Var(_) => 0,
        Node::Neg(e) | Node::Indicator(e) => 1 + depth(e),
        Node::Pow { base, .. } => 1 + depth(base),
        Node::Binary { lhs, rhs, .. }
        | Node::Compare { lhs, rhs, .. }
        | Node::Extremum { lhs, rhs, .. } => 1 + depth(lhs).max(depth(rhs)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_then_parse_is_identity(node in arb_node()) {
        prop_assume!(depth(&node) <= 6);
        let schema = schema6();
        let expr = ModelExpr::from_node(node, schema.clone()).unwrap();
        let printed = expr.to_string();
        let reparsed = parse_model(&printed, &schema).unwrap();
        prop_assert_eq!(reparsed.root(), expr.root(), "{}", printed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn unreferenced_coordinates_do_not_move_the_output(
        node in arb_node(),
        x in proptest::collection::vec(-3.0f64..3.0, 6),
        shift in -5.0f64..5.0,
    ) {
        let expr = ModelExpr::from_node(node, schema6()).unwrap();
        let used = expr.referenced_indices();
        let base = expr.eval(&x);
        for j in (0..6).filter(|j| !used.contains(j)) {
            let mut y = x.clone();
            y[j] += shift;
            let moved = expr.eval(&y);
            match (&base, &moved) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false, "evaluation outcome changed with an unused feature"),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shapley_axioms_on_random_settings(seed in any::<u64>()) {
        let t = random_triple(seed);
        let opts = PropertyOptions { tolerance: 1e-9, seed, exact: t.exact };
        let report = validate_properties(&t.model, &t.reference, std::slice::from_ref(&t.instance), &opts)
            .unwrap_or_else(|e| panic!("{}: {e}", t.description));
        for p in &report.properties {
            prop_assert!(p.status != PropertyStatus::Fail, "{}: {}", t.description, report.to_text());
        }
        prop_assert_eq!(report.get("efficiency").unwrap().status, PropertyStatus::Pass);
        prop_assert_eq!(report.get("linearity").unwrap().status, PropertyStatus::Pass);
        if t.symmetric {
            prop_assert!(symmetric_pairs(&t.model, &t.reference, &t.instance).contains(&(0, 1)), "{}", t.description);
            prop_assert_eq!(report.get("symmetry").unwrap().status, PropertyStatus::Pass);
        }
        let dummy = report.get("dummy").unwrap();
        if t.reference.mode() == Mode::ConditionalEmpirical || t.reference.mode() == Mode::ConditionalGaussian {
            prop_assert_eq!(dummy.status, PropertyStatus::NotApplicable);
        }
    }

    #[test]
    fn subset_and_weighted_formulations_agree(seed in any::<u64>()) {
        let t = random_triple(seed);
        let opts = t.exact;
        let table = ValueTable::compute(&t.model, &t.reference, &t.instance, &Backend::Exact(opts.config), None).unwrap();
        let a = combine_weighted(&table);
        let b = combine_by_cardinality(&table);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()), "{}: {p} vs {q}", t.description);
        }
    }
}

#[test]
fn dummy_is_zero_in_marginal_and_interventional_modes() {
    let mut seen = 0;
    for seed in 0..400u64 {
        let t = random_triple(seed);
        if t.reference.is_conditional() {
            continue;
        }
        let r = exact_shapley(&t.model, &t.reference, &t.instance, &t.exact).unwrap();
        for j in dummy_features(&t.model, &t.reference) {
            assert!(
                r.phi[j].abs() <= 1e-9,
                "{}: phi[{j}] = {}",
                t.description,
                r.phi[j]
            );
            seen += 1;
        }
    }
    assert!(seen > 50, "too few dummy features exercised: {seen}");
}

#[test]
fn constant_model_has_zero_attributions() {
    let spec = uniform_pair();
    let m = parse_model("7", spec.schema_arc()).unwrap();
    let r = exact_shapley(&m, &marginal(spec), &[0.3, 2.0], &ExactOptions::default()).unwrap();
    assert_eq!(r.base, 7.0);
    assert!(r.phi.iter().all(|p| *p == 0.0));
}

#[test]
fn causal_root_of_a_read_feature_is_not_a_dummy() {
    // x0 -> x1 with x1 = x0 in the data; f reads only x1
    let ds = coalition_attrib::Dataset::new(
        binary(&["x0", "x1"]),
        vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        None,
    )
    .unwrap();
    let g = coalition_attrib::CausalGraph::from_edges(2, &[(0, 1)]).unwrap();
    let r = coalition_attrib::ReferenceDistribution::interventional(
        coalition_attrib::Source::Dataset(ds),
        g,
        Default::default(),
    )
    .unwrap();
    let m = parse_model("x1", r.source().schema_arc()).unwrap();
    assert!(dummy_features(&m, &r).is_empty());
    let rep = exact_shapley(&m, &r, &[1.0, 1.0], &ExactOptions::default()).unwrap();
    assert!(
        (rep.phi[0] - 0.25).abs() < 1e-12 && (rep.phi[1] - 0.25).abs() < 1e-12,
        "{:?}",
        rep.phi
    );
}
