use std::collections::BTreeSet;

use proptest::prelude::*;
use qepnl::plan::{generate_random_tree, SchemaSpec};
use qepnl::poem::PoemStore;
use qepnl::rules::{prepare, translate, translate_tree};
use regex::Regex;

fn toy_schema() -> SchemaSpec {
    SchemaSpec::from_json(include_str!("../fixtures/toy_schema.json")).unwrap()
}

const FINAL: &str = "to get the final results.";

proptest! {
    #[test]
    fn narrative_invariants(seed in any::<u64>(), budget in 1usize..80) {
        let store = PoemStore::seeded();
        let tree = generate_random_tree(&toy_schema(), seed, budget).unwrap();
        let (lot, clusters) = prepare(&tree, &store).unwrap();
        let narrative = translate(&lot, &clusters);

        prop_assert_eq!(lot.len(), tree.node_count());
        prop_assert_eq!(narrative.steps.len(), tree.node_count() - clusters.len());
        prop_assert_eq!(narrative.steps.iter().filter(|s| s.ends_with(FINAL)).count(), 1);
        prop_assert!(narrative.steps.last().unwrap().ends_with(FINAL));

        let ident = Regex::new(r"\bT(\d+)\b").unwrap();
        let produced = Regex::new(r"to get the intermediate relation (T\d+)\.$").unwrap();
        let mut introduced = BTreeSet::new();
        for step in &narrative.steps {
            let own = produced.captures(step).map(|c| c[1].to_string());
            for m in ident.find_iter(step) {
                if Some(m.as_str()) != own.as_deref() {
                    prop_assert!(introduced.contains(m.as_str()), "forward reference {} in {:?}", m.as_str(), step);
                }
            }
            if let Some(t) = own {
                prop_assert!(introduced.insert(t), "identifier produced twice");
            }
        }

        prop_assert_eq!(translate_tree(&tree, &store).unwrap(), narrative);
    }
}
