use std::collections::BTreeSet;

use breakprobe_core::covering::{generate_ipog, Strength};
use breakprobe_core::dtree::{find_solution, train_tree, weighted_paths, DTreeNode, TreeParams};
use breakprobe_core::harness::simulate_tuples;
use breakprobe_core::model::{Guide, RuleId, Strategy};
use breakprobe_core::oracle::{BreakingSetDnf, Clause};
use proptest::prelude::*;

/// (excluded rules, cost, breaking, pass count) for every leaf, by plain DFS.
fn dfs_paths(node: &DTreeNode, excluded: &mut Vec<RuleId>, cost: usize, out: &mut Vec<(BTreeSet<RuleId>, usize, bool, usize)>) {
    match node {
        DTreeNode::Leaf { breaking, samples_pass, .. } => {
            out.push((excluded.iter().cloned().collect(), cost, *breaking, *samples_pass));
        }
        DTreeNode::Split { rule, left, right } => {
            excluded.push(rule.clone());
            dfs_paths(left, excluded, cost + 1, out);
            excluded.pop();
            dfs_paths(right, excluded, cost, out);
        }
    }
}

fn random_dnf(g: &Guide, clauses: Vec<BTreeSet<usize>>) -> BreakingSetDnf {
    let clauses = clauses
        .into_iter()
        .map(|c| Clause::new(c.into_iter().map(|i| g.rules()[i].clone())).unwrap())
        .collect();
    BreakingSetDnf::new("p", clauses)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dijkstra_costs_match_dfs(
        clauses in proptest::collection::vec(proptest::collection::btree_set(0usize..14, 1..=3), 1..4),
        seed in 0u64..1000,
    ) {
        let g = Guide::synthetic("g", 14);
        let dnf = random_dnf(&g, clauses);
        let array = generate_ipog(&g, Strength::new(3).unwrap(), seed).unwrap();
        let results = simulate_tuples(&dnf, &g, &array).unwrap();
        let Ok(tree) = train_tree(&results, &g, TreeParams::default()) else {
            return Ok(());
        };

        let mut expected = Vec::new();
        dfs_paths(&tree, &mut Vec::new(), 0, &mut expected);
        let found: Vec<_> = weighted_paths(&tree)
            .into_iter()
            .map(|p| (p.excluded_on_path, p.cost, p.breaking, p.samples_pass))
            .collect();
        let mut a = expected.clone();
        let mut b = found.clone();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);

        // The tree reproduces every training label when rows are distinct.
        for r in results.tuple_records() {
            prop_assert_eq!(tree.predict(&r.applied), !r.passed);
        }

        // Shortest path picks a non-breaking leaf of minimum cost.
        if let Ok(sol) = find_solution(&tree, Strategy::DtreeShortestPath) {
            let best = expected.iter().filter(|p| !p.2).map(|p| p.1).min().unwrap();
            prop_assert_eq!(sol.excluded.len(), best);
            prop_assert!(expected.iter().any(|p| !p.2 && p.0 == sol.excluded));
        }
        // Max partition picks a non-breaking leaf with the most passing rows.
        if let Ok(sol) = find_solution(&tree, Strategy::DtreeMaxPartition) {
            let most = expected.iter().filter(|p| !p.2).map(|p| p.3).max().unwrap();
            prop_assert!(expected.iter().any(|p| !p.2 && p.0 == sol.excluded && p.3 == most));
        }
    }
}

#[test]
fn max_depth_limits_the_tree() {
    let g = Guide::synthetic("g", 10);
    let dnf = BreakingSetDnf::from_ids("d", &[&["R1", "R2"], &["R3", "R4"]]).unwrap();
    let array = generate_ipog(&g, Strength::new(2).unwrap(), 0).unwrap();
    let results = simulate_tuples(&dnf, &g, &array).unwrap();
    let params = TreeParams { max_depth: Some(1), ..TreeParams::default() };
    let tree = train_tree(&results, &g, params).unwrap();
    assert!(tree.num_splits() <= 1);
}
