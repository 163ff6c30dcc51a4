use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use prada::{
    eligible_nodes, node_is_eligible, parse, render, CapabilityStore, DhrRegistry, DhrRequest, DhrType,
    NodeCapabilities, NodeId, Property,
};

const TYPES: usize = 8;
const PROPS: u64 = 8;

/// Types t0-t3 compare by equality over labels p0-p7, t4-t7 by threshold
/// over levels 1-8.
fn registry() -> DhrRegistry {
    DhrRegistry::from_types((0..TYPES).map(|t| {
        if t < TYPES / 2 {
            DhrType::equality(&format!("t{t}"), (0..PROPS).map(|p| format!("p{p}"))).unwrap()
        } else {
            DhrType::threshold(&format!("t{t}"), 1..=PROPS).unwrap()
        }
    }))
    .unwrap()
}

fn prop_of(t: usize, p: u64) -> Property {
    if t < TYPES / 2 {
        Property::label(format!("p{p}"))
    } else {
        Property::Level(p + 1)
    }
}

/// (type, property index) pairs.
fn pairs() -> impl Strategy<Value = BTreeMap<usize, BTreeSet<u64>>> {
    proptest::collection::btree_map(0..TYPES, proptest::collection::btree_set(0..PROPS, 1..4), 0..5)
}

fn request(m: &BTreeMap<usize, BTreeSet<u64>>) -> DhrRequest {
    m.iter().fold(DhrRequest::new(), |r, (&t, ps)| r.with(&format!("t{t}"), ps.iter().map(|&p| prop_of(t, p))))
}

/// Threshold capabilities hold a single maximum level.
fn caps(id: u32, m: &BTreeMap<usize, BTreeSet<u64>>) -> NodeCapabilities {
    m.iter().fold(NodeCapabilities::new(NodeId(id)), |c, (&t, ps)| {
        if t < TYPES / 2 {
            c.with(&format!("t{t}"), ps.iter().map(|&p| prop_of(t, p)))
        } else {
            c.with(&format!("t{t}"), [prop_of(t, *ps.iter().max().unwrap())])
        }
    })
}

/// AND over demanded types, OR over offered x demanded properties.
fn cnf(offered: &BTreeMap<usize, BTreeSet<u64>>, demanded: &BTreeMap<usize, BTreeSet<u64>>) -> bool {
    demanded.iter().all(|(t, ds)| {
        let Some(os) = offered.get(t) else { return false };
        if *t < TYPES / 2 {
            ds.iter().any(|d| os.contains(d))
        } else {
            let top = *os.iter().max().unwrap();
            ds.iter().any(|&d| top >= d)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn eligibility_matches_cnf(offered in pairs(), demanded in pairs()) {
        let reg = registry();
        prop_assert_eq!(node_is_eligible(&caps(0, &offered), &request(&demanded), &reg), cnf(&offered, &demanded));
    }

    #[test]
    fn eligibility_is_monotone(
        nodes in proptest::collection::vec(pairs(), 1..12),
        demanded in pairs(),
        extra_type in 0..TYPES,
        extra_props in proptest::collection::btree_set(0..PROPS, 1..3),
    ) {
        let reg = registry();
        let store = CapabilityStore::from_caps(nodes.iter().enumerate().map(|(i, m)| caps(i as u32, m)));
        let base = eligible_nodes(&store, &request(&demanded), &reg);
        prop_assert_eq!(&base, &eligible_nodes(&store, &request(&demanded), &reg));

        let mut wider = demanded.clone();
        if let Some(set) = wider.get_mut(&extra_type) {
            set.extend(&extra_props);
            let grown = eligible_nodes(&store, &request(&wider), &reg);
            prop_assert!(base.iter().all(|n| grown.contains(n)), "enlarging a set dropped nodes");
        } else {
            wider.insert(extra_type, extra_props);
            let narrowed = eligible_nodes(&store, &request(&wider), &reg);
            prop_assert!(narrowed.iter().all(|n| base.contains(n)), "a new type added nodes");
        }
    }

    #[test]
    fn parse_errors_point_inside_input(text in "[ -~]{0,80}") {
        let reg = registry();
        if let Err(e) = parse(&text, &reg) {
            prop_assert!(e.position() <= text.len());
        }
    }

    #[test]
    fn truncated_statements_fail_inside_input(demanded in pairs(), cut in 0usize..200) {
        let reg = registry();
        let stmt = prada::Statement::Insert {
            key: b"k".to_vec(),
            columns: [("c1".to_string(), b"v".to_vec())].into(),
            dhr: request(&demanded),
        };
        let text = render(&stmt);
        prop_assert_eq!(parse(&text, &reg).unwrap(), stmt);
        let cut = cut.min(text.len());
        if text.is_char_boundary(cut) {
            if let Err(e) = parse(&text[..cut], &reg) {
                prop_assert!(e.position() <= cut);
            }
        }
    }
}
