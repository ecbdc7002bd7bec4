use std::collections::BTreeSet;

use proptest::prelude::*;
use qepnl::poem::{load_store, save_store, Attribute, NewOperator, OpType, PoemStore, Predicate, Value};

const SOURCES: [&str; 2] = ["pg", "mysql"];
const NAMES: [&str; 5] = ["hash", "hashjoin", "sort", "scan", "limit"];

#[derive(Debug, Clone)]
enum Op {
    Create { source: usize, name: usize, target: Option<usize>, desc: String },
    SetTarget { source: usize, name: usize, target: Option<usize> },
    SetDesc { source: usize, pattern: String, desc: String },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..2usize, 0..5usize, prop::option::of(0..5usize), "[ -~]{0,20}")
            .prop_map(|(source, name, target, desc)| Op::Create { source, name, target, desc }),
        (0..2usize, 0..5usize, prop::option::of(0..5usize))
            .prop_map(|(source, name, target)| Op::SetTarget { source, name, target }),
        (0..2usize, "%?[a-z]{0,3}%?", "[ -~]{0,20}").prop_map(|(source, pattern, desc)| Op::SetDesc {
            source,
            pattern,
            desc
        }),
    ]
}

fn apply(store: &mut PoemStore, op: &Op) {
    let before = store.clone();
    let result = match op {
        Op::Create { source, name, target, desc } => {
            let mut spec = NewOperator::new(SOURCES[*source], NAMES[*name], OpType::Unary, desc);
            if let Some(t) = target {
                spec = spec.target(NAMES[*t]);
            }
            store.create_operator(spec).map(|_| ())
        }
        Op::SetTarget { source, name, target } => {
            let value = target.map_or(Value::Null, |t| Value::Text(NAMES[t].to_string()));
            store
                .update_operators(
                    SOURCES[*source],
                    &[(Attribute::Target, value)],
                    &Predicate::Eq(Attribute::Name, NAMES[*name].to_string()),
                )
                .map(|_| ())
        }
        Op::SetDesc { source, pattern, desc } => store
            .update_operators(
                SOURCES[*source],
                &[(Attribute::Desc, Value::Text(desc.clone()))],
                &Predicate::Like(Attribute::Name, pattern.clone()),
            )
            .map(|_| ()),
    };
    if result.is_err() {
        assert_eq!(*store, before, "a failed operation must leave the store untouched");
    }
}

fn check_invariants(store: &PoemStore) {
    store.validate().unwrap();
    for source in store.sources() {
        let ops: Vec<_> = store.operators(source).collect();
        let names: BTreeSet<&str> = ops.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(names.len(), ops.len(), "names unique within {source}");
        let mut pairs = BTreeSet::new();
        for o in &ops {
            for t in &o.targets {
                assert!(names.contains(t.as_str()), "dangling target {t} in {source}");
                pairs.insert((o.name.clone(), t.clone()));
            }
        }
        assert_eq!(store.auxiliary_pairs(source), pairs);
    }
}

proptest! {
    #[test]
    fn random_operation_sequences_keep_invariants(ops in prop::collection::vec(op(), 0..40)) {
        let mut store = PoemStore::new();
        for op in &ops {
            apply(&mut store, op);
            check_invariants(&store);
        }
        let back = PoemStore::from_json(&store.to_json()).unwrap();
        prop_assert_eq!(&back, &store);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        save_store(&store, &path).unwrap();
        let loaded = load_store(&path).unwrap();
        for source in store.sources() {
            let a: Vec<_> = store.operators(source).map(|o| o.descriptions.clone()).collect();
            let b: Vec<_> = loaded.operators(source).map(|o| o.descriptions.clone()).collect();
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(loaded, store);
    }
}

#[test]
fn seeded_catalog_survives_persistence() {
    let store = PoemStore::seeded();
    check_invariants(&store);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.json");
    save_store(&store, &path).unwrap();
    assert_eq!(load_store(&path).unwrap(), store);
}
