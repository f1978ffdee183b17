//! Parametric corpus of breaking sets for simulation studies.
//!
//! One base set per grid cell (number of clauses × rules per clause), the
//! empty set, and seeded relabelled variants of every base.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BreakingSetDnf, Clause};
use crate::error::{Error, Result};
use crate::model::{Guide, RuleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub max_clauses: usize,
    pub max_rules_per_clause: usize,
    pub variants_per_base: usize,
    pub seed: u64,
    pub disjoint_clauses: bool,
}

/// A corpus member together with the grid cell it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub dnf: BreakingSetDnf,
    /// `(clauses, rules per clause)`; `None` for the empty set.
    pub cell: Option<(usize, usize)>,
}

/// How many times to retry drawing a clause that duplicates an earlier one.
const MAX_REDRAWS: usize = 1000;

pub fn gen_corpus(guide: &Guide, spec: &CorpusSpec) -> Result<Vec<CorpusEntry>> {
    if spec.max_clauses == 0 || spec.max_rules_per_clause == 0 {
        return Err(Error::Validation(
            "corpus grid needs at least one clause and one rule per clause".into(),
        ));
    }
    let n = guide.len();
    let mut corpus = vec![CorpusEntry {
        dnf: BreakingSetDnf::empty("empty"),
        cell: None,
    }];
    for clauses in 1..=spec.max_clauses {
        for k in 1..=spec.max_rules_per_clause {
            let needed = if spec.disjoint_clauses { clauses * k } else { k };
            if needed > n {
                return Err(Error::CorpusInfeasible {
                    clauses,
                    rules_per_clause: k,
                    available: n,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(spec.seed, clauses, k));
            let base = base_set(guide, clauses, k, spec.disjoint_clauses, &mut rng)?;
            let cell = Some((clauses, k));
            corpus.push(CorpusEntry {
                dnf: base.renamed(format!("{clauses}_{k}_0")),
                cell,
            });
            for variant in 1..=spec.variants_per_base {
                corpus.push(CorpusEntry {
                    dnf: relabel(guide, &base, &mut rng).renamed(format!("{clauses}_{k}_{variant}")),
                    cell,
                });
            }
        }
    }
    Ok(corpus)
}

fn cell_seed(seed: u64, clauses: usize, k: usize) -> u64 {
    seed ^ ((clauses as u64) << 40 | (k as u64) << 20).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn base_set(
    guide: &Guide,
    clauses: usize,
    k: usize,
    disjoint: bool,
    rng: &mut ChaCha8Rng,
) -> Result<BreakingSetDnf> {
    let rules = guide.rules();
    let n = rules.len();
    let pick = |idx: &[usize]| Clause::new(idx.iter().map(|&i| rules[i].clone()));

    let mut out: Vec<Clause> = Vec::with_capacity(clauses);
    if disjoint {
        let idx = sample(rng, n, clauses * k).into_vec();
        for chunk in idx.chunks(k) {
            out.push(pick(chunk)?);
        }
    } else {
        while out.len() < clauses {
            let mut drawn = None;
            for _ in 0..MAX_REDRAWS {
                let clause = pick(&sample(rng, n, k).into_vec())?;
                if !out.contains(&clause) {
                    drawn = Some(clause);
                    break;
                }
            }
            out.push(drawn.ok_or(Error::CorpusInfeasible {
                clauses,
                rules_per_clause: k,
                available: n,
            })?);
        }
    }
    Ok(BreakingSetDnf::new("base", out))
}

/// Seeded relabelling of `base` onto `guide`, keeping its name.
pub fn relabel_variant(guide: &Guide, base: &BreakingSetDnf, seed: u64) -> Result<BreakingSetDnf> {
    let distinct = base
        .clauses()
        .iter()
        .flat_map(|c| c.rules())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    if distinct > guide.len() {
        return Err(Error::Validation(format!(
            "cannot relabel {distinct} rules onto a guide of {}",
            guide.len()
        )));
    }
    Ok(relabel(guide, base, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Maps every rule of `base` to a distinct, uniformly drawn guide rule,
/// keeping the clause structure.
fn relabel(guide: &Guide, base: &BreakingSetDnf, rng: &mut ChaCha8Rng) -> BreakingSetDnf {
    let mut used: Vec<&RuleId> = base.clauses().iter().flat_map(|c| c.rules()).collect();
    used.sort();
    used.dedup();
    let targets = sample(rng, guide.len(), used.len()).into_vec();
    let map = |r: &RuleId| {
        let i = used.binary_search(&r).expect("rule comes from the base set");
        guide.rules()[targets[i]].clone()
    };
    let clauses = base
        .clauses()
        .iter()
        .map(|c| Clause::new(c.rules().iter().map(map)).expect("relabelling keeps clauses non-empty"))
        .collect();
    BreakingSetDnf::new(base.name(), clauses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c: usize, k: usize, variants: usize, seed: u64) -> CorpusSpec {
        CorpusSpec {
            max_clauses: c,
            max_rules_per_clause: k,
            variants_per_base: variants,
            seed,
            disjoint_clauses: true,
        }
    }

    #[test]
    fn smallest_grid_has_empty_and_one_singleton() {
        let guide = Guide::synthetic("g", 5);
        let corpus = gen_corpus(&guide, &spec(1, 1, 0, 1)).unwrap();
        assert_eq!(corpus.len(), 2);
        assert!(corpus[0].dnf.is_empty());
        assert_eq!(corpus[1].dnf.clauses().len(), 1);
        assert_eq!(corpus[1].dnf.clauses()[0].len(), 1);
    }

    #[test]
    fn paper_scale_corpus_has_201_sets() {
        let guide = Guide::synthetic("g", 507);
        let corpus = gen_corpus(&guide, &spec(5, 10, 3, 9)).unwrap();
        assert_eq!(corpus.len(), 201);
        for entry in &corpus[1..] {
            let (c, k) = entry.cell.unwrap();
            assert_eq!(entry.dnf.clauses().len(), c, "{}", entry.dnf.name());
            assert!(entry.dnf.clauses().iter().all(|cl| cl.len() == k));
            let mut rules: Vec<_> = entry.dnf.clauses().iter().flat_map(|cl| cl.rules()).collect();
            let total = rules.len();
            rules.sort();
            rules.dedup();
            assert_eq!(rules.len(), total, "disjoint clauses share a rule");
        }
    }

    #[test]
    fn corpus_is_deterministic_per_seed() {
        let guide = Guide::synthetic("g", 60);
        let a = gen_corpus(&guide, &spec(3, 4, 2, 17)).unwrap();
        let b = gen_corpus(&guide, &spec(3, 4, 2, 17)).unwrap();
        let c = gen_corpus(&guide, &spec(3, 4, 2, 18)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn variants_follow_their_base() {
        let guide = Guide::synthetic("g", 40);
        let corpus = gen_corpus(&guide, &spec(2, 2, 3, 4)).unwrap();
        let names: Vec<&str> = corpus.iter().map(|e| e.dnf.name()).collect();
        assert_eq!(&names[..5], &["empty", "1_1_0", "1_1_1", "1_1_2", "1_1_3"]);
    }

    #[test]
    fn infeasible_cells_are_rejected() {
        let guide = Guide::synthetic("g", 5);
        assert!(matches!(
            gen_corpus(&guide, &spec(2, 3, 0, 1)),
            Err(Error::CorpusInfeasible { clauses: 2, rules_per_clause: 3, available: 5 })
        ));
        let overlapping = CorpusSpec {
            disjoint_clauses: false,
            ..spec(2, 3, 0, 1)
        };
        assert_eq!(gen_corpus(&guide, &overlapping).unwrap().len(), 7);
    }
}
