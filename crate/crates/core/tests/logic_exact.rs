use std::collections::BTreeSet;

use breakprobe_core::covering::{generate_ipog, CoveringArray, Strength};
use breakprobe_core::harness::simulate_tuples;
use breakprobe_core::logic::{analyze, build_table, minimize};
use breakprobe_core::model::{Guide, RuleId};
use breakprobe_core::oracle::{brute_force_maximal_sets, check_exclusion, BreakingSetDnf, Classification, Clause};
use proptest::prelude::*;

fn full_factorial(g: &Guide) -> CoveringArray {
    let n = g.len();
    let rows = (0..1usize << n).map(|m| (0..n).map(|c| m >> c & 1 == 1).collect()).collect();
    CoveringArray::new(g.id(), Strength::new(2).unwrap(), "full", g.rules().to_vec(), rows).unwrap()
}

fn dnf(g: &Guide, clauses: Vec<BTreeSet<usize>>) -> BreakingSetDnf {
    let clauses = clauses
        .into_iter()
        .map(|c| Clause::new(c.into_iter().map(|i| g.rules()[i].clone())).unwrap())
        .collect();
    BreakingSetDnf::new("p", clauses)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_table_gives_a_maximal_set(
        n in 2usize..=10,
        raw in proptest::collection::vec(proptest::collection::btree_set(0usize..10, 1..=4), 1..4),
    ) {
        let g = Guide::synthetic("g", n);
        let clauses: Vec<BTreeSet<usize>> = raw
            .into_iter()
            .map(|c| c.into_iter().filter(|&i| i < n).collect::<BTreeSet<_>>())
            .filter(|c| !c.is_empty())
            .collect();
        prop_assume!(!clauses.is_empty());
        let d = dnf(&g, clauses);
        let results = simulate_tuples(&d, &g, &full_factorial(&g)).unwrap();
        let (table, cover, solution) = analyze(&results, &g).unwrap();

        // The cover is consistent with the table.
        for row in &table.on_rows {
            prop_assert!(cover.iter().any(|i| i.covers(&table.variables, row)));
        }
        for row in &table.off_rows {
            prop_assert!(!cover.iter().any(|i| i.covers(&table.variables, row)));
        }
        let kept: BTreeSet<RuleId> = solution.candidate(&g).into_iter().collect();
        prop_assert!(brute_force_maximal_sets(&g, &d).unwrap().contains(&kept));
    }

    /// With clause size below the strength, coverage rules out every other
    /// explanation of the same size or smaller.
    #[test]
    fn clause_below_strength_is_found_exactly(k in 1usize..=2, picks in proptest::collection::btree_set(0usize..30, 3), seed in 0u64..500) {
        let g = Guide::synthetic("g", 30);
        let clause: BTreeSet<usize> = picks.into_iter().take(k).collect();
        let d = dnf(&g, vec![clause]);
        let array = generate_ipog(&g, Strength::new(3).unwrap(), seed).unwrap();
        let results = simulate_tuples(&d, &g, &array).unwrap();
        let (_, _, solution) = analyze(&results, &g).unwrap();
        prop_assert_eq!(check_exclusion(&g, &d, &solution.excluded).classification, Classification::Exact);
    }
}

#[test]
fn pruning_keeps_only_relevant_columns() {
    let g = Guide::synthetic("g", 40);
    let d = BreakingSetDnf::from_ids("d", &[&["R7", "R21"]]).unwrap();
    let array = generate_ipog(&g, Strength::new(3).unwrap(), 3).unwrap();
    let results = simulate_tuples(&d, &g, &array).unwrap();
    let table = build_table(&results, &g).unwrap();
    assert!(table.variables.len() <= 20);
    let cover = minimize(&table).unwrap();
    let literals: BTreeSet<&RuleId> = cover.iter().flat_map(|i| i.positive()).collect();
    let expected = [RuleId::new("R7").unwrap(), RuleId::new("R21").unwrap()];
    assert_eq!(literals, expected.iter().collect());
}
