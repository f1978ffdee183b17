use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use breakprobe_core::analysis::{analyze, gate_with_confirmation, gate_with_oracle};
use breakprobe_core::covering::{
    estimate_memory_bytes, export_acts_input, generate_ipog_with, import_acts_export, load_array, save_array,
    verify_coverage, IpogOptions, Strength, VerifyMode,
};
use breakprobe_core::dtree::{export_tree_dot, train_tree, TreeParams};
use breakprobe_core::evaluation::{effort_estimate, emit_cluster_csv, run_study, EffortParams};
use breakprobe_core::harness::{
    run_pipeline, EvaluatorConfig, ExternalConfig, ResetPolicy, RunOptions, SimulatedEvaluator,
};
use breakprobe_core::model::{
    load_guide, load_results, save_results, save_solution, to_json_string, write_json, Strategy,
};
use breakprobe_core::oracle::{gen_corpus, load_dnf, CorpusSpec};
use breakprobe_core::Error;

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "breakprobe", version, about = "Find hardening rules that break system functionality")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a covering array over the guide's rules.
    Generate {
        #[arg(long)]
        guide: PathBuf,
        #[arg(long)]
        strength: usize,
        #[arg(long, value_enum, default_value_t = Algorithm::Ipog)]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Allow strengths above 4 on guides with more than 100 rules.
        #[arg(long)]
        force: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check that an array covers every t-way combination.
    Verify {
        #[arg(long)]
        array: PathBuf,
        /// Check this many random column subsets instead of all of them.
        #[arg(long)]
        sample: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report as JSON.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Read an array exported by ACTS.
    ImportActs {
        #[arg(long)]
        guide: PathBuf,
        #[arg(long)]
        strength: usize,
        /// ACTS export file.
        #[arg(long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write the ACTS system definition for a guide.
    ExportActsInput {
        #[arg(long)]
        guide: PathBuf,
        /// Defaults to standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the test procedure over every tuple of an array.
    Run(RunArgs),
    /// Compute the excluded rules from test results.
    Analyze(AnalyzeArgs),
    /// Simulation study over a generated corpus of breaking sets.
    Evaluate(EvaluateArgs),
    /// Estimate the wall-clock time of a testing campaign.
    Effort(EffortArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Ipog,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResetArg {
    Soft,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Dtree,
    DtreeMaxPartition,
    Logic,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Dtree => Strategy::DtreeShortestPath,
            StrategyArg::DtreeMaxPartition => Strategy::DtreeMaxPartition,
            StrategyArg::Logic => Strategy::LogicMin,
        }
    }
}

#[derive(Args)]
struct EvaluatorArgs {
    /// Breaking-set file for a simulated system.
    #[arg(long, conflicts_with_all = ["apply_cmd", "test_cmd", "revert_cmd"])]
    oracle: Option<PathBuf>,
    #[arg(long)]
    apply_cmd: Option<String>,
    #[arg(long)]
    test_cmd: Option<String>,
    #[arg(long)]
    revert_cmd: Option<String>,
    #[arg(long)]
    compliance_cmd: Option<String>,
    /// Recreates the instance between tuples under `--reset hard`.
    #[arg(long)]
    recreate_cmd: Option<String>,
    /// Per-command timeout in seconds.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
}

impl EvaluatorArgs {
    fn config(&self) -> Result<Option<EvaluatorConfig>> {
        if let Some(path) = &self.oracle {
            return Ok(Some(EvaluatorConfig::Simulated(load_dnf(path)?)));
        }
        match (&self.apply_cmd, &self.test_cmd, &self.revert_cmd) {
            (None, None, None) => Ok(None),
            (Some(apply), Some(test), Some(revert)) => Ok(Some(EvaluatorConfig::External(ExternalConfig {
                apply_cmd: apply.clone(),
                test_cmd: test.clone(),
                revert_cmd: revert.clone(),
                compliance_cmd: self.compliance_cmd.clone(),
                recreate_cmd: self.recreate_cmd.clone(),
                timeout_s: self.timeout,
            }))),
            _ => bail!(UsageError("--apply-cmd, --test-cmd and --revert-cmd must be given together".into())),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    guide: PathBuf,
    #[arg(long)]
    array: PathBuf,
    #[command(flatten)]
    evaluator: EvaluatorArgs,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = ResetArg::Soft)]
    reset: ResetArg,
    /// Extra attempts for a failing apply or test command.
    #[arg(long, default_value_t = 0)]
    retries: u32,
    /// Append each finished tuple to this file as it completes.
    #[arg(long)]
    journal: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    guide: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Verify the solution against a breaking-set file.
    #[command(flatten)]
    evaluator: EvaluatorArgs,
    /// Run one confirmation test applying exactly the candidate set, using
    /// the external commands.
    #[arg(long)]
    confirm: bool,
    /// Write the decision tree in Graphviz format.
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    min_split: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    guide: PathBuf,
    /// Array to simulate on; generated from --strength and --seed if absent.
    #[arg(long)]
    array: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    strength: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clauses x rules per clause, e.g. 5x10.
    #[arg(long, default_value = "5x10")]
    grid: String,
    #[arg(long, default_value_t = 3)]
    variants: usize,
    /// Let clauses share rules.
    #[arg(long)]
    overlapping: bool,
    #[arg(long)]
    force: bool,
    /// Output directory for study.json and the cluster CSV files.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EffortArgs {
    #[arg(long)]
    n_tuples: u64,
    #[arg(long)]
    n_vms: u64,
    #[arg(long, default_value_t = 0.0)]
    t_vm: f64,
    #[arg(long, default_value_t = 0.0)]
    t_sw: f64,
    #[arg(long, default_value_t = 0.0)]
    t_a: f64,
    #[arg(long, default_value_t = 0.0)]
    t_t: f64,
    #[arg(long, default_value_t = 0.0)]
    t_sr: f64,
    #[arg(long, default_value_t = 0.0)]
    t_ana: f64,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .init();

    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::BaselineFailed) => 2,
        Some(Error::RevertFailed) => 3,
        _ => 1,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Generate {
            guide,
            strength,
            algorithm: Algorithm::Ipog,
            seed,
            force,
            out,
        } => {
            let guide = load_guide(&guide)?;
            let strength = Strength::new(strength)?;
            if strength.get() > 4 {
                let mib = estimate_memory_bytes(guide.len(), strength) >> 20;
                println!("estimated peak memory for strength {}: {mib} MiB", strength.get());
            }
            let array = generate_ipog_with(&guide, strength, IpogOptions { seed, force })?;
            save_array(&out, &array)?;
            println!("{} rows, strength {}, {} rules", array.num_rows(), strength.get(), guide.len());
            Ok(0)
        }
        Command::Verify {
            array,
            sample,
            seed,
            out,
        } => {
            let array = load_array(&array)?;
            let mode = match sample {
                Some(samples) => VerifyMode::Sampled { samples, seed },
                None => VerifyMode::Exhaustive,
            };
            let report = verify_coverage(&array, mode);
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            println!(
                "covered={} subsets_checked={} missing={}",
                report.covered, report.subsets_checked, report.missing_total
            );
            Ok(if report.covered { 0 } else { 1 })
        }
        Command::ImportActs {
            guide,
            strength,
            input,
            out,
        } => {
            let guide = load_guide(&guide)?;
            let array = import_acts_export(&input, &guide, Strength::new(strength)?)?;
            save_array(&out, &array)?;
            println!("imported {} rows; run `verify` to check coverage", array.num_rows());
            Ok(0)
        }
        Command::ExportActsInput { guide, out } => {
            let text = export_acts_input(&load_guide(&guide)?);
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Effort(args) => {
            let seconds = effort_estimate(&EffortParams {
                n_tuples: args.n_tuples,
                n_vms: args.n_vms,
                t_vm: args.t_vm,
                t_sw: args.t_sw,
                t_a: args.t_a,
                t_t: args.t_t,
                t_sr: args.t_sr,
                t_ana: args.t_ana,
            })?;
            println!("{seconds} s ({:.2} h)", seconds / 3600.0);
            Ok(0)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let guide = load_guide(&args.guide)?;
    let array = load_array(&args.array)?;
    let Some(config) = args.evaluator.config()? else {
        bail!(UsageError("run needs --oracle or the external command flags".into()));
    };
    let evaluator = config.build()?;
    let options = RunOptions {
        reset: match args.reset {
            ResetArg::Soft => ResetPolicy::Soft,
            ResetArg::Hard => ResetPolicy::Hard,
        },
        retries: args.retries,
    };
    let outcome = run_pipeline(
        evaluator.as_ref(),
        &guide,
        &array,
        args.workers,
        options,
        args.journal.as_deref(),
    )?;
    save_results(&args.out, &outcome.results)?;
    if let Some(rules) = &outcome.report.noncompliant_rules {
        println!("{} rule(s) not in effect after applying the full guide", rules.len());
    }
    if outcome.short_circuit.is_some() {
        println!("the full guide passes all tests; nothing needs to be excluded");
        return Ok(0);
    }
    let records: Vec<_> = outcome.results.tuple_records().collect();
    let failing = records.iter().filter(|r| !r.passed).count();
    println!(
        "{} tuples: {} failing, {} passing, {} untested",
        array.num_rows(),
        failing,
        records.len() - failing,
        outcome.results.untested.len()
    );
    Ok(outcome.exit_code() as u8)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<u8> {
    let guide = load_guide(&args.guide)?;
    let results = load_results(&args.results)?;
    let strategy: Strategy = args.strategy.into();
    let mut params = TreeParams::default();
    if let Some(m) = args.min_split {
        params.min_split = m;
    }
    params.max_depth = args.max_depth;

    if let Some(dot) = &args.dot {
        match train_tree(&results, &guide, params) {
            Ok(tree) => write_text(dot, &export_tree_dot(&tree, true))?,
            Err(e) => tracing::warn!(error = %e, "no decision tree to export"),
        }
    }

    let solution = analyze(&results, &guide, strategy, params)?;
    let config = args.evaluator.config()?;
    let solution = match (config, args.confirm) {
        (Some(EvaluatorConfig::Simulated(dnf)), confirm) => {
            let gated = gate_with_oracle(&guide, &dnf, solution);
            if confirm {
                let sim = SimulatedEvaluator::new(dnf);
                let confirmed = gate_with_confirmation(&sim, &guide, gated.clone())?;
                println!("confirmation run: {}", pass_fail(confirmed.verified_non_breaking));
            }
            gated
        }
        (Some(EvaluatorConfig::External(cfg)), true) => {
            let evaluator = EvaluatorConfig::External(cfg).build()?;
            let confirmed = gate_with_confirmation(evaluator.as_ref(), &guide, solution)?;
            println!("confirmation run: {}", pass_fail(confirmed.verified_non_breaking));
            confirmed
        }
        (Some(EvaluatorConfig::External(_)), false) => {
            println!("external commands given without --confirm; the solution stays unverified");
            solution
        }
        (None, true) => bail!(UsageError("--confirm needs --oracle or the external command flags".into())),
        (None, false) => solution,
    };
    save_solution(&args.out, &solution)?;
    let excluded: Vec<&str> = solution.excluded.iter().map(|r| r.as_str()).collect();
    println!(
        "{}: exclude {} rule(s): {}",
        strategy,
        excluded.len(),
        if excluded.is_empty() { "-".to_string() } else { excluded.join(", ") }
    );
    println!(
        "verified_non_breaking={} verified_maximal={}",
        verdict(solution.verified_non_breaking),
        verdict(solution.verified_maximal)
    );
    Ok(0)
}

fn pass_fail(v: breakprobe_core::model::Verdict) -> &'static str {
    match v {
        breakprobe_core::model::Verdict::True => "passed",
        _ => "failed",
    }
}

fn verdict(v: breakprobe_core::model::Verdict) -> &'static str {
    match v {
        breakprobe_core::model::Verdict::True => "true",
        breakprobe_core::model::Verdict::False => "false",
        breakprobe_core::model::Verdict::Unknown => "unknown",
    }
}

fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let parsed = text
        .split_once(['x', 'X'])
        .and_then(|(c, r)| Some((c.trim().parse().ok()?, r.trim().parse().ok()?)));
    match parsed {
        Some(grid) => Ok(grid),
        None => bail!(UsageError(format!("--grid expects CxR, e.g. 5x10, not {text:?}"))),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<u8> {
    let guide = load_guide(&args.guide)?;
    let (max_clauses, max_rules) = parse_grid(&args.grid)?;
    let array = match &args.array {
        Some(path) => load_array(path)?,
        None => generate_ipog_with(
            &guide,
            Strength::new(args.strength)?,
            IpogOptions {
                seed: args.seed,
                force: args.force,
            },
        )?,
    };
    let corpus = gen_corpus(
        &guide,
        &CorpusSpec {
            max_clauses,
            max_rules_per_clause: max_rules,
            variants_per_base: args.variants,
            seed: args.seed,
            disjoint_clauses: !args.overlapping,
        },
    )?;
    let report = run_study(&guide, &corpus, &array, &Strategy::ALL, TreeParams::default())?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_text(&args.out.join("study.json"), &to_json_string(&report))?;
    for (strategy, grid) in &report.grids {
        write_text(&args.out.join(format!("clusters_{strategy}.csv")), &emit_cluster_csv(grid))?;
    }
    println!(
        "{} breaking sets on a {}-row strength-{} array",
        corpus.len(),
        array.num_rows(),
        array.strength().get()
    );
    for (strategy, s) in &report.summary {
        println!(
            "{strategy:>20}: exact {:>4}  subset {:>4}  wrong {:>4}  none {:>4}  ({:.1}% exact)",
            s.exact, s.subset_of_correct, s.wrong, s.none, s.exact_percent
        );
    }
    Ok(0)
}
