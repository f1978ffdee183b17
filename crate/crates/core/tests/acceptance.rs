//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use breakprobe_core::analysis::{analyze, gate_with_confirmation, gate_with_oracle};
use breakprobe_core::covering::{
    generate_ipog, generate_ipog_with, verify_coverage, CoveringArray, IpogOptions, Strength, VerifyMode,
};
use breakprobe_core::dtree::TreeParams;
use breakprobe_core::evaluation::{effort_estimate, run_study, EffortParams, StudyClass};
use breakprobe_core::harness::{run_pipeline, simulate_tuples, EvaluatorConfig, RunOptions};
use breakprobe_core::logic;
use breakprobe_core::model::{load_guide, to_json_string, Guide, RuleId, Strategy, Verdict};
use breakprobe_core::oracle::{
    brute_force_maximal_sets, check_exclusion, gen_corpus, load_dnf, relabel_variant, BreakingSetDnf, Classification,
    Clause, CorpusEntry, CorpusSpec,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// 507 rules named like a three-level numbered benchmark: R1_1_1 .. R6_1_7.
fn guide_507() -> Guide {
    Guide::from_ids(
        "bench-507",
        (0..507).map(|i| format!("R{}_{}_{}", 1 + i / 100, 1 + (i / 10) % 10, 1 + i % 10)),
    )
    .unwrap()
}

fn rule(id: &str) -> RuleId {
    RuleId::new(id).unwrap()
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Arrays {
    guide: Guide,
    by_strength: Vec<CoveringArray>,
    gen_times: Vec<Duration>,
}

fn build_arrays() -> Arrays {
    let guide = guide_507();
    let mut by_strength = Vec::new();
    let mut gen_times = Vec::new();
    for t in 2..=4 {
        let start = Instant::now();
        by_strength.push(generate_ipog(&guide, Strength::new(t).unwrap(), 1).unwrap());
        gen_times.push(start.elapsed());
    }
    Arrays { guide, by_strength, gen_times }
}

fn criterion_1(arrays: &Arrays) -> Outcome {
    let bounds = [(30, Duration::from_secs(10)), (105, Duration::from_secs(300)), (314, Duration::from_secs(1800))];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, array) in arrays.by_strength.iter().enumerate() {
        let t = i + 2;
        let mode = if t <= 3 {
            VerifyMode::Exhaustive
        } else {
            VerifyMode::Sampled { samples: 1_000_000, seed: 7 }
        };
        let start = Instant::now();
        let report = verify_coverage(array, mode);
        let verify_time = start.elapsed();
        let (max_rows, max_time) = bounds[i];
        let ok = array.num_rows() <= max_rows && report.covered && arrays.gen_times[i] < max_time;
        pass &= ok;
        parts.push(format!(
            "t={t}: {} rows (<= {max_rows}), covered={}, gen {:.1?}, verify {:.1?}",
            array.num_rows(),
            report.covered,
            arrays.gen_times[i],
            verify_time
        ));
    }
    outcome(pass, parts.join("; "))
}

/// Random DNF with 1..=3 clauses of 1..=n rules each.
fn random_dnf(guide: &Guide, rng: &mut ChaCha8Rng, name: String) -> BreakingSetDnf {
    let n = guide.len();
    let clauses = (0..rng.gen_range(1..=3))
        .map(|_| {
            let k = rng.gen_range(1..=n.min(4));
            Clause::new(sample(rng, n, k).into_iter().map(|i| guide.rules()[i].clone())).unwrap()
        })
        .collect();
    BreakingSetDnf::new(name, clauses)
}

fn full_factorial(guide: &Guide) -> CoveringArray {
    let n = guide.len();
    let rows = (0..1usize << n)
        .map(|code| (0..n).map(|c| code >> c & 1 == 1).collect())
        .collect();
    CoveringArray::new(guide.id(), Strength::new(2).unwrap(), "full", guide.rules().to_vec(), rows).unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hits = 0;
    let mut failures = Vec::new();
    for case in 0..200 {
        let n = rng.gen_range(2..=12);
        let guide = Guide::synthetic(format!("g{case}"), n);
        let dnf = random_dnf(&guide, &mut rng, format!("dnf{case}"));
        let results = simulate_tuples(&dnf, &guide, &full_factorial(&guide)).unwrap();
        let maximal = brute_force_maximal_sets(&guide, &dnf).unwrap();
        match logic::analyze(&results, &guide) {
            Ok((_, _, solution)) if maximal.contains(&solution.candidate(&guide).into_iter().collect()) => hits += 1,
            Ok((_, _, solution)) => failures.push(format!("case {case}: {:?}", solution.excluded)),
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    let mut detail = format!("{hits}/200 maximal, {elapsed:.1?}");
    if let Some(first) = failures.first() {
        detail.push_str(&format!(", first failure {first}"));
    }
    outcome(hits == 200 && elapsed < Duration::from_secs(60), detail)
}

fn criterion_3(arrays: &Arrays) -> Outcome {
    const PER_SIZE: usize = 10;
    let guide = &arrays.guide;
    let mut cases = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, array) in arrays.by_strength.iter().enumerate() {
        let t = i + 2;
        for k in 1..=t {
            for _ in 0..PER_SIZE {
                let idx = sample(&mut rng, guide.len(), k).into_vec();
                let clause = Clause::new(idx.iter().map(|&j| guide.rules()[j].clone())).unwrap();
                cases.push((array, k == t, BreakingSetDnf::new(format!("t{t}k{k}"), vec![clause])));
            }
        }
    }
    let strategies = [Strategy::DtreeShortestPath, Strategy::LogicMin, Strategy::DtreeMaxPartition];
    // Per strategy: (verified non-breaking, exact).
    let tallies: Vec<(bool, [(usize, usize); 3])> = cases
        .par_iter()
        .map(|(array, full_width, dnf)| {
            let results = simulate_tuples(dnf, guide, array).unwrap();
            let mut row = [(0, 0); 3];
            for (s, &strategy) in strategies.iter().enumerate() {
                if let Ok(solution) = analyze(&results, guide, strategy, TreeParams::default()) {
                    let solution = gate_with_oracle(guide, dnf, solution);
                    row[s].0 += usize::from(solution.verified_non_breaking == Verdict::True);
                    row[s].1 += usize::from(
                        check_exclusion(guide, dnf, &solution.excluded).classification == Classification::Exact,
                    );
                }
            }
            (*full_width, row)
        })
        .collect();
    let count = |full_width: Option<bool>, s: usize| {
        tallies
            .iter()
            .filter(|(w, _)| full_width.map_or(true, |f| f == *w))
            .fold((0, 0, 0), |acc, (_, row)| (acc.0 + row[s].0, acc.1 + row[s].1, acc.2 + 1))
    };
    let (sp, lm, mp) = (count(None, 0), count(None, 1), count(None, 2));
    let total = sp.2;
    let (sp_lt, lm_lt) = (count(Some(false), 0), count(Some(false), 1));
    let (sp_eq, lm_eq) = (count(Some(true), 0), count(Some(true), 1));
    let pass = sp.0 == total && lm.0 == total && lm.1 == total;
    outcome(
        pass,
        format!(
            "{total} cases; non-breaking: shortest_path {}/{total}, logic_min {}/{total}; exact: logic_min {}/{total}; \
             k<t: shortest_path {}/{n_lt} non-breaking, logic_min {}/{n_lt} exact; \
             k=t: shortest_path {}/{n_eq} non-breaking, logic_min {}/{n_eq} exact; \
             max_partition (info) {}/{total} non-breaking",
            sp.0,
            lm.0,
            lm.1,
            sp_lt.0,
            lm_lt.1,
            sp_eq.0,
            lm_eq.1,
            mp.0,
            n_lt = sp_lt.2,
            n_eq = sp_eq.2,
        ),
    )
}

fn criterion_4(arrays: &Arrays) -> Outcome {
    let start = Instant::now();
    let guide = &arrays.guide;
    let array = &arrays.by_strength[2];
    let target = rule("R1_1_4");
    let dnf = BreakingSetDnf::from_ids("singleton", &[&["R1_1_4"]]).unwrap();
    let evaluator = EvaluatorConfig::Simulated(dnf).build().unwrap();
    let run = run_pipeline(evaluator.as_ref(), guide, array, 4, RunOptions::default(), None).unwrap();
    let tuples: Vec<_> = run.results.tuple_records().collect();
    let failing = tuples.iter().filter(|r| !r.passed).count();
    let partition = tuples.len() == array.num_rows()
        && tuples.iter().all(|r| r.passed != r.applied.contains(&target));
    let solution = analyze(&run.results, guide, Strategy::DtreeShortestPath, TreeParams::default()).unwrap();
    let exact = solution.excluded == BTreeSet::from([target]);
    let confirmed = gate_with_confirmation(evaluator.as_ref(), guide, solution).unwrap();
    let confirmed = confirmed.verified_non_breaking == Verdict::True;
    let elapsed = start.elapsed();
    outcome(
        partition && exact && confirmed && elapsed < Duration::from_secs(30),
        format!(
            "{failing} failing / {} passing rows, partition={partition}, excludes only R1_1_4={exact}, \
             confirmation={confirmed}, {elapsed:.1?}",
            tuples.len() - failing
        ),
    )
}

fn criterion_5() -> Outcome {
    let guide = load_guide(&fixture("guide_50.json")).unwrap();
    let base = load_dnf(&fixture("disjoint_3x3.json")).unwrap();
    let opts = IpogOptions { seed: 5, force: true };
    let array = generate_ipog_with(&guide, Strength::new(5).unwrap(), opts).unwrap();
    let corpus: Vec<CorpusEntry> = (1..=20u64)
        .map(|seed| CorpusEntry {
            dnf: relabel_variant(&guide, &base, seed).unwrap().renamed(format!("variant_{seed}")),
            cell: Some((3, 3)),
        })
        .collect();
    let strategies = [Strategy::DtreeShortestPath, Strategy::DtreeMaxPartition, Strategy::LogicMin];
    let report = run_study(&guide, &corpus, &array, &strategies, TreeParams::default()).unwrap();

    // Soundness: a solution flagged as verified must really be non-breaking.
    let unsound = report
        .records
        .iter()
        .filter(|r| {
            r.verified_non_breaking == Verdict::True
                && (r.classification == StudyClass::Wrong || r.classification == StudyClass::None)
        })
        .count();
    let exact_of = |strategy: Strategy, name: &str| {
        report
            .records
            .iter()
            .any(|r| r.strategy == strategy && r.set_name == name && r.classification == StudyClass::Exact)
    };
    let mut dominated = 0;
    let (mut sp_exact, mut mp_exact) = (0, 0);
    for entry in &corpus {
        let sp = exact_of(Strategy::DtreeShortestPath, entry.dnf.name());
        let mp = exact_of(Strategy::DtreeMaxPartition, entry.dnf.name());
        sp_exact += usize::from(sp);
        mp_exact += usize::from(mp);
        dominated += usize::from(mp || !sp);
    }
    let recorded = strategies
        .iter()
        .all(|&s| report.records.iter().filter(|r| r.strategy == s).count() == corpus.len());
    outcome(
        unsound == 0 && recorded && dominated >= 15,
        format!(
            "{} rows at t=5, unsound verdicts {unsound}, exact: shortest_path {sp_exact}/20, max_partition {mp_exact}/20, \
             max_partition >= shortest_path in {dominated}/20",
            array.num_rows()
        ),
    )
}

fn criterion_6() -> Outcome {
    let example = EffortParams {
        n_tuples: 330,
        n_vms: 30,
        t_vm: 60.0,
        t_sw: 300.0,
        t_a: 120.0,
        t_t: 120.0,
        t_sr: 120.0,
        t_ana: 60.0,
    };
    let value = effort_estimate(&example).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    for _ in 0..1000 {
        let mut t = || rng.gen_range(0.0..1000.0);
        let p = EffortParams {
            n_tuples: 0,
            n_vms: 0,
            t_vm: t(),
            t_sw: t(),
            t_a: t(),
            t_t: t(),
            t_sr: t(),
            t_ana: t(),
        };
        let p = EffortParams { n_tuples: rng.gen_range(0..5000), n_vms: rng.gen_range(1..100), ..p };
        let bump: f64 = rng.gen_range(0.0..500.0);
        let mut q = p;
        match rng.gen_range(0..7) {
            0 => q.n_tuples += bump as u64,
            1 => q.t_vm += bump,
            2 => q.t_sw += bump,
            3 => q.t_a += bump,
            4 => q.t_t += bump,
            5 => q.t_sr += bump,
            _ => q.t_ana += bump,
        }
        if effort_estimate(&q).unwrap() < effort_estimate(&p).unwrap() {
            violations += 1;
        }
    }
    outcome(
        value == 6120.0 && violations == 0,
        format!("example {value} s, {violations}/1000 monotonicity violations"),
    )
}

/// Everything a simulated run produces, serialised.
fn pipeline_bytes(seed: u64, n_workers: usize) -> String {
    let guide = Guide::synthetic("det", 60);
    let array = generate_ipog(&guide, Strength::new(3).unwrap(), seed).unwrap();
    let spec = CorpusSpec {
        max_clauses: 2,
        max_rules_per_clause: 2,
        variants_per_base: 1,
        seed,
        disjoint_clauses: true,
    };
    let corpus = gen_corpus(&guide, &spec).unwrap();
    let mut out = to_json_string(&array);
    for entry in &corpus {
        let evaluator = EvaluatorConfig::Simulated(entry.dnf.clone()).build().unwrap();
        let run = run_pipeline(evaluator.as_ref(), &guide, &array, n_workers, RunOptions::default(), None).unwrap();
        out.push_str(&to_json_string(&run.report));
        out.push_str(&to_json_string(&run.results));
        if run.short_circuit.is_some() {
            continue;
        }
        for strategy in Strategy::ALL {
            match analyze(&run.results, &guide, strategy, TreeParams::default()) {
                Ok(solution) => out.push_str(&to_json_string(&gate_with_oracle(&guide, &entry.dnf, solution))),
                Err(e) => out.push_str(&e.to_string()),
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let reference = pipeline_bytes(11, 1);
    let workers_equal = [2, 8].iter().all(|&w| pipeline_bytes(11, w) == reference);
    let rerun_equal = pipeline_bytes(11, 1) == reference;
    let seed_matters = pipeline_bytes(12, 1) != reference;
    let stage_count = reference.matches("\"baseline\"").count();
    outcome(
        workers_equal && rerun_equal,
        format!(
            "{} bytes, identical over workers 1/2/8={workers_equal}, identical rerun={rerun_equal}, \
             other seed differs={seed_matters}, {stage_count} pipelines",
            reference.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |n: usize, o: Outcome| {
        all_pass &= o.pass;
        println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    let arrays = build_arrays();
    report(1, criterion_1(&arrays));
    report(2, criterion_2());
    report(3, criterion_3(&arrays));
    report(4, criterion_4(&arrays));
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
