mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use kimura_core::group::enumerate_flows;
use kimura_core::hilbert::{self, HilbertRecord, SeriesData, SumsetBudget};
use kimura_core::markov::{self, CensusOptions};
use kimura_core::moves::{FiberCache, MoveTrace};
use kimura_core::reducer::{self, GapReport, ReduceError, ReduceOptions, RuleRegistry};
use kimura_core::{corpus, Error, FaceSpec, Table};

use report::{emit, read_json, Budgets, JobConfig};

#[derive(Parser, Debug)]
#[command(
    name = "kimura",
    version,
    about = "Kimura 3-parameter toric ideals on claw trees"
)]
struct Cli {
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Memory budget for censuses, in GiB.
    #[arg(long, global = true, default_value_t = 2.0)]
    mem_budget_gb: f64,
    /// Write the JSON report here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the summary line.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// List or count the flows of a claw tree, optionally on a face.
    Flows(FlowsArgs),
    /// Connect a compatible pair of tables by bounded-degree moves.
    Reduce(ReduceArgs),
    /// Count minimal generators per degree.
    Census(CensusArgs),
    /// Check that every fiber up to a table degree is connected.
    Connectivity(ConnectivityArgs),
    /// Enumerate Hilbert function values and derive the h-vector.
    Hilbert(HilbertArgs),
    /// Expand a Hilbert series N(t)/(1-t)^e.
    Series(SeriesArgs),
    /// Check the bundled (or a given) move corpus.
    VerifyMoves(VerifyArgs),
    /// Reduce seeded random pairs and report gaps.
    Fuzz(FuzzArgs),
}

#[derive(Args, Debug)]
struct FlowsArgs {
    #[arg(long)]
    leaves: usize,
    /// Forbidden entries, e.g. "5:c,6:c", or one of P1, P2, P3, Pt, Ptp.
    #[arg(long, default_value = "")]
    face: String,
    #[arg(long)]
    count_only: bool,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// JSON object {"t0": [...], "t1": [...]} of flow strings.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_degree: usize,
    /// Search nodes the fallback may expand.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long)]
    time_limit_s: Option<f64>,
    /// Write the move trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Stream case events to stderr as JSON lines.
    #[arg(long)]
    log_cases: bool,
    /// Validate this trace against the input instead of reducing.
    #[arg(long)]
    verify_trace: Option<PathBuf>,
    /// Comma-separated rule names, in order.
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct CensusArgs {
    #[arg(long)]
    leaves: usize,
    #[arg(long)]
    max_degree: usize,
    #[arg(long, default_value = "")]
    face: String,
    #[arg(long, default_value_t = 1)]
    shards: usize,
    #[arg(long)]
    time_budget_s: Option<f64>,
}

#[derive(Args, Debug)]
struct ConnectivityArgs {
    #[arg(long)]
    leaves: usize,
    #[arg(long)]
    max_table_degree: usize,
    #[arg(long, default_value_t = 4)]
    move_degree: usize,
    #[arg(long, default_value = "")]
    face: String,
    #[arg(long, default_value_t = 1)]
    shards: usize,
}

#[derive(Args, Debug)]
struct HilbertArgs {
    #[arg(long)]
    leaves: usize,
    #[arg(long)]
    max_dilation: usize,
    #[arg(long, default_value = "")]
    face: String,
    /// Largest sumset layer before giving up.
    #[arg(long, default_value_t = 60_000_000)]
    max_layer: usize,
    #[arg(long)]
    time_budget_s: Option<f64>,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    /// JSON array of numerator coefficients, constant term first.
    #[arg(long, conflicts_with = "builtin")]
    numerator_file: Option<PathBuf>,
    /// A bundled series: P, Pt or Ptp.
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long)]
    denom_exp: Option<usize>,
    /// Highest coefficient to print.
    #[arg(long, default_value_t = 5)]
    expand: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// A JSON-lines corpus; defaults to the bundled one.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FuzzArgs {
    #[arg(long, default_value_t = 7)]
    leaves: usize,
    /// Table degree of each random pair.
    #[arg(long, default_value_t = 6)]
    degree: usize,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    max_degree: usize,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<String>>,
}

/// How a successful run ended.
enum Status {
    Done,
    BudgetExhausted,
}

#[derive(Deserialize)]
struct PairFile {
    t0: Table,
    t1: Table,
}

fn parse_face(s: &str) -> anyhow::Result<FaceSpec> {
    s.parse().map_err(|e: Error| anyhow::anyhow!(e))
}

fn base_config(cli: &Cli, sub: &str) -> JobConfig {
    JobConfig {
        subcommand: sub.to_string(),
        budgets: Budgets {
            mem_budget_gb: cli.mem_budget_gb,
            threads: rayon::current_num_threads(),
            ..Default::default()
        },
        outputs: cli.out.iter().cloned().collect(),
        ..Default::default()
    }
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("KIMURA_CACHE_DIR").map(PathBuf::from)
}

fn load_cache() -> anyhow::Result<FiberCache> {
    match cache_dir() {
        Some(d) => {
            FiberCache::load(&d).with_context(|| format!("loading cache from {}", d.display()))
        }
        None => Ok(FiberCache::new()),
    }
}

fn spill_cache(cache: &FiberCache) -> anyhow::Result<()> {
    if let Some(d) = cache_dir() {
        cache
            .spill(&d)
            .with_context(|| format!("spilling cache to {}", d.display()))?;
    }
    Ok(())
}

fn summary(cli: &Cli, line: impl AsRef<str>) {
    if !cli.json {
        println!("{}", line.as_ref());
    }
}

fn mem_bytes(cli: &Cli) -> u64 {
    (cli.mem_budget_gb * (1u64 << 30) as f64) as u64
}

fn flows(cli: &Cli, a: &FlowsArgs) -> anyhow::Result<Status> {
    let face = parse_face(&a.face)?;
    let mut cfg = base_config(cli, "flows");
    cfg.n_leaves = Some(a.leaves);
    cfg.face = Some(face.to_string());
    let list = enumerate_flows(a.leaves, &face)?;
    #[derive(Serialize)]
    struct Out {
        count: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        flows: Option<Vec<String>>,
    }
    let names: Vec<String> = list.iter().map(|f| f.to_string()).collect();
    if a.count_only {
        summary(cli, list.len().to_string());
    } else if !cli.json {
        for f in &names {
            println!("{f}");
        }
    }
    let out = Out {
        count: list.len(),
        flows: (!a.count_only).then_some(names),
    };
    emit(&cfg, out, cli.out.as_deref(), cli.json)?;
    Ok(Status::Done)
}

fn write_trace(path: &Path, trace: &MoveTrace) -> anyhow::Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    trace.write_jsonl(std::io::BufWriter::new(f))?;
    Ok(())
}

fn reduce(cli: &Cli, a: &ReduceArgs) -> anyhow::Result<Status> {
    let pair: PairFile = read_json(&a.input)?;
    let mut cfg = base_config(cli, "reduce");
    cfg.n_leaves = Some(pair.t0.n());
    cfg.max_degree = Some(a.max_degree);
    cfg.budgets.nodes = Some(a.budget);
    cfg.budgets.wall_clock_s = a.time_limit_s;
    cfg.inputs.push(a.input.clone());

    if let Some(tp) = &a.verify_trace {
        cfg.inputs.push(tp.clone());
        let f = std::fs::File::open(tp).with_context(|| format!("opening {}", tp.display()))?;
        let trace = MoveTrace::read_jsonl(std::io::BufReader::new(f))?;
        #[derive(Serialize)]
        struct Out {
            valid: bool,
            steps: usize,
            max_degree: usize,
            error: Option<String>,
        }
        let err = trace.validate(&pair.t0, &pair.t1, a.max_degree).err();
        let valid = err.is_none();
        summary(
            cli,
            match &err {
                None => format!(
                    "trace valid: {} steps, max degree {}",
                    trace.len(),
                    trace.max_degree()
                ),
                Some(e) => format!("trace invalid: {e}"),
            },
        );
        let out = Out {
            valid,
            steps: trace.len(),
            max_degree: trace.max_degree(),
            error: err.map(|e| e.to_string()),
        };
        emit(&cfg, out, cli.out.as_deref(), cli.json)?;
        if !valid {
            bail!(
                "trace does not connect the pair within degree {}",
                a.max_degree
            );
        }
        return Ok(Status::Done);
    }

    let opts = ReduceOptions {
        max_degree: a.max_degree,
        budget: a.budget,
        time_limit_s: a.time_limit_s,
        rules: a.rules.clone().unwrap_or_else(|| {
            RuleRegistry::available()
                .iter()
                .map(|s| s.to_string())
                .collect()
        }),
    };
    cfg.extra.push(("rules".into(), opts.rules.join(",")));
    cfg.outputs.extend(a.trace.iter().cloned());
    let registry = RuleRegistry::from_names(&opts.rules)?;
    let cache = load_cache()?;
    let start = Instant::now();
    let result = reducer::reduce_pair_with(&pair.t0, &pair.t1, &opts, &registry, &cache);
    let elapsed = start.elapsed().as_secs_f64();
    spill_cache(&cache)?;

    #[derive(Serialize)]
    struct Out<'a> {
        reduced: bool,
        steps: usize,
        max_degree: usize,
        nodes: usize,
        gaps: GapReport,
        events: &'a [reducer::CaseEvent],
        diagnostic: Option<String>,
        elapsed_s: f64,
    }
    let (trace, events, nodes, diagnostic) = match result {
        Ok(r) => (r.trace, r.events, r.nodes, None),
        Err(ReduceError::Budget {
            partial,
            diagnostic,
            events,
        }) => (partial, events, 0, Some(diagnostic)),
        Err(ReduceError::Invalid(e)) => return Err(e.into()),
    };
    if a.log_cases {
        for e in &events {
            eprintln!("{}", serde_json::to_string(e)?);
        }
    }
    if let Some(p) = &a.trace {
        write_trace(p, &trace)?;
    }
    let reduced = diagnostic.is_none();
    summary(
        cli,
        match &diagnostic {
            None => format!(
                "reduced in {} steps (max degree {}, {} fallback searches)",
                trace.len(),
                trace.max_degree(),
                GapReport::from_events(&events).fallback_escapes
            ),
            Some(d) => format!("budget exhausted: {d}"),
        },
    );
    let out = Out {
        reduced,
        steps: trace.len(),
        max_degree: trace.max_degree(),
        nodes,
        gaps: GapReport::from_events(&events),
        events: &events,
        diagnostic,
        elapsed_s: elapsed,
    };
    emit(&cfg, out, cli.out.as_deref(), cli.json)?;
    Ok(if reduced {
        Status::Done
    } else {
        Status::BudgetExhausted
    })
}

fn census(cli: &Cli, a: &CensusArgs) -> anyhow::Result<Status> {
    let face = parse_face(&a.face)?;
    let mut cfg = base_config(cli, "census");
    cfg.n_leaves = Some(a.leaves);
    cfg.face = Some(face.to_string());
    cfg.max_degree = Some(a.max_degree);
    cfg.budgets.shards = Some(a.shards);
    cfg.budgets.wall_clock_s = a.time_budget_s;
    let opts = CensusOptions {
        shards: a.shards,
        mem_budget_bytes: mem_bytes(cli),
        time_budget_s: a.time_budget_s,
    };
    let rep = markov::minimal_generator_census(a.leaves, a.max_degree, &face, &opts)?;
    let counts: Vec<String> = rep
        .degrees
        .iter()
        .map(|d| format!("deg {}: {}", d.degree, d.generators))
        .collect();
    summary(
        cli,
        format!("{} vertices; {}", rep.vertices, counts.join(", ")),
    );
    let status = if rep.incomplete.is_some() {
        Status::BudgetExhausted
    } else {
        Status::Done
    };
    emit(&cfg, &rep, cli.out.as_deref(), cli.json)?;
    Ok(status)
}

fn connectivity(cli: &Cli, a: &ConnectivityArgs) -> anyhow::Result<Status> {
    let face = parse_face(&a.face)?;
    let mut cfg = base_config(cli, "connectivity");
    cfg.n_leaves = Some(a.leaves);
    cfg.face = Some(face.to_string());
    cfg.table_degree = Some(a.max_table_degree);
    cfg.move_degree = Some(a.move_degree);
    cfg.budgets.shards = Some(a.shards);
    let opts = CensusOptions {
        shards: a.shards,
        mem_budget_bytes: mem_bytes(cli),
        time_budget_s: None,
    };
    let rep =
        markov::connectivity_check(a.leaves, a.max_table_degree, a.move_degree, &face, &opts)?;
    summary(
        cli,
        if rep.connected {
            format!(
                "connected: all fibers of degree ≤ {} under moves of degree ≤ {}",
                a.max_table_degree, a.move_degree
            )
        } else {
            let w = rep
                .witness
                .as_ref()
                .map(|w| format!(" (witness at degree {}: {} vs {})", w.degree, w.t0, w.t1));
            format!("disconnected{}", w.unwrap_or_default())
        },
    );
    emit(&cfg, &rep, cli.out.as_deref(), cli.json)?;
    Ok(Status::Done)
}

fn hilbert_cmd(cli: &Cli, a: &HilbertArgs) -> anyhow::Result<Status> {
    let face = parse_face(&a.face)?;
    let mut cfg = base_config(cli, "hilbert");
    cfg.n_leaves = Some(a.leaves);
    cfg.face = Some(face.to_string());
    cfg.max_degree = Some(a.max_dilation);
    cfg.budgets.wall_clock_s = a.time_budget_s;
    cfg.extra
        .push(("max_layer".into(), a.max_layer.to_string()));
    let budget = SumsetBudget {
        max_layer: a.max_layer,
        time_budget_s: a.time_budget_s,
    };
    let rec: HilbertRecord = match hilbert::hilbert_record(a.leaves, &face, a.max_dilation, &budget)
    {
        Ok(r) => r,
        Err(Error::Budget(why)) => {
            summary(cli, format!("budget exhausted: {why}"));
            return Ok(Status::BudgetExhausted);
        }
        Err(e) => return Err(e.into()),
    };
    summary(
        cli,
        format!(
            "dim {}, deg h {}, a-invariant {}, regularity bound {}, normalized volume {}",
            rec.dim,
            rec.h_numerator.len() - 1,
            rec.a_invariant,
            rec.regularity_bound,
            rec.normalized_volume
        ),
    );
    emit(&cfg, &rec, cli.out.as_deref(), cli.json)?;
    Ok(Status::Done)
}

/// Integers given as JSON numbers or decimal strings.
fn parse_coefficients(v: &serde_json::Value) -> anyhow::Result<Vec<BigInt>> {
    let arr = v.as_array().context("numerator must be a JSON array")?;
    arr.iter()
        .map(|x| match x {
            serde_json::Value::Number(n) => {
                n.to_string().parse::<BigInt>().context("not an integer")
            }
            serde_json::Value::String(s) => s.trim().parse::<BigInt>().context("not an integer"),
            _ => bail!("coefficients must be integers"),
        })
        .collect()
}

fn series(cli: &Cli, a: &SeriesArgs) -> anyhow::Result<Status> {
    let mut cfg = base_config(cli, "series");
    cfg.max_degree = Some(a.expand);
    let data = match (&a.numerator_file, &a.builtin) {
        (Some(p), _) => {
            cfg.inputs.push(p.clone());
            let v: serde_json::Value = read_json(p)?;
            let e = a
                .denom_exp
                .context("--denom-exp is required with --numerator-file")?;
            SeriesData {
                numerator: parse_coefficients(&v)?,
                denom_exp: e,
            }
        }
        (None, Some(name)) => {
            cfg.extra.push(("builtin".into(), name.clone()));
            let s = hilbert::series_fixture()
                .series
                .into_iter()
                .find(|s| &s.name == name)
                .with_context(|| format!("no bundled series {name:?}"))?;
            let mut d = s.data();
            if let Some(e) = a.denom_exp {
                d.denom_exp = e;
            }
            d
        }
        (None, None) => bail!("give --numerator-file or --builtin"),
    };
    cfg.extra
        .push(("denom_exp".into(), data.denom_exp.to_string()));
    let coeffs = hilbert::expand_series(&data, a.expand);
    #[derive(Serialize)]
    struct Out {
        denom_exp: usize,
        numerator_degree: usize,
        regularity_bound: usize,
        numerator_at_one: String,
        coefficients: Vec<String>,
    }
    let strs: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
    summary(cli, strs.join(" "));
    let out = Out {
        denom_exp: data.denom_exp,
        numerator_degree: data.numerator.len().saturating_sub(1),
        regularity_bound: data.numerator.len(),
        numerator_at_one: hilbert::numerator_at_one(&data).to_string(),
        coefficients: strs,
    };
    emit(&cfg, out, cli.out.as_deref(), cli.json)?;
    Ok(Status::Done)
}

fn verify_moves(cli: &Cli, a: &VerifyArgs) -> anyhow::Result<Status> {
    let mut cfg = base_config(cli, "verify-moves");
    let rep = match &a.corpus {
        Some(p) => {
            cfg.inputs.push(p.clone());
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            corpus::verify_records(&corpus::load_records(&text)?)
        }
        None => corpus::verify_corpus(),
    };
    let bad: Vec<&str> = rep
        .entries
        .iter()
        .filter(|e| !e.ok)
        .map(|e| e.reference.as_str())
        .collect();
    summary(
        cli,
        format!(
            "{} identities, {} instances checked; {} errata rejected; {} unexpected",
            rep.identities(),
            rep.passing_instances(),
            rep.entries.len() - rep.identities(),
            bad.len()
        ),
    );
    emit(&cfg, &rep, cli.out.as_deref(), cli.json)?;
    if !bad.is_empty() {
        bail!("corpus entries behaved unexpectedly: {}", bad.join("; "));
    }
    Ok(Status::Done)
}

fn fuzz(cli: &Cli, a: &FuzzArgs) -> anyhow::Result<Status> {
    let mut cfg = base_config(cli, "fuzz");
    cfg.n_leaves = Some(a.leaves);
    cfg.max_degree = Some(a.max_degree);
    cfg.table_degree = Some(a.degree);
    cfg.budgets.nodes = Some(a.budget);
    cfg.seed = Some(a.seed);
    cfg.extra.push(("count".into(), a.count.to_string()));
    let opts = ReduceOptions {
        max_degree: a.max_degree,
        budget: a.budget,
        time_limit_s: None,
        rules: a.rules.clone().unwrap_or_else(|| {
            RuleRegistry::available()
                .iter()
                .map(|s| s.to_string())
                .collect()
        }),
    };
    cfg.extra.push(("rules".into(), opts.rules.join(",")));
    let registry = RuleRegistry::from_names(&opts.rules)?;
    // Pairs are drawn in order from one stream so the set is independent of
    // the thread count.
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let pairs = (0..a.count)
        .map(|_| reducer::random_pair(a.leaves, a.degree, &mut rng))
        .collect::<kimura_core::Result<Vec<_>>>()?;
    let cache = load_cache()?;
    let start = Instant::now();
    let results: Vec<Result<reducer::Reduction, ReduceError>> = pairs
        .par_iter()
        .map(|(t0, t1)| reducer::reduce_pair_with(t0, t1, &opts, &registry, &cache))
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    spill_cache(&cache)?;

    #[derive(Serialize)]
    struct Failure {
        index: usize,
        t0: Table,
        t1: Table,
        error: String,
    }
    #[derive(Serialize)]
    struct Out {
        pairs: usize,
        validated: usize,
        steps: usize,
        max_degree: usize,
        gaps: GapReport,
        failures: Vec<Failure>,
        elapsed_s: f64,
    }
    let mut out = Out {
        pairs: a.count,
        validated: 0,
        steps: 0,
        max_degree: 0,
        gaps: GapReport::default(),
        failures: Vec::new(),
        elapsed_s: elapsed,
    };
    let mut invalid = false;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => {
                out.validated += 1;
                out.steps += r.trace.len();
                out.max_degree = out.max_degree.max(r.trace.max_degree());
                out.gaps.absorb(&r.events);
            }
            Err(e) => {
                invalid |= matches!(e, ReduceError::Invalid(_));
                if let ReduceError::Budget { events, .. } = &e {
                    out.gaps.absorb(events);
                }
                out.failures.push(Failure {
                    index: i,
                    t0: pairs[i].0.clone(),
                    t1: pairs[i].1.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    summary(
        cli,
        format!(
            "{}/{} pairs reduced and validated in {:.1}s; {} dead ends, {} fallback searches",
            out.validated,
            out.pairs,
            elapsed,
            out.gaps.total_dead_ends(),
            out.gaps.fallback_escapes
        ),
    );
    let failed = !out.failures.is_empty();
    emit(&cfg, out, cli.out.as_deref(), cli.json)?;
    if invalid {
        bail!("a reduction produced an invalid result");
    }
    Ok(if failed {
        Status::BudgetExhausted
    } else {
        Status::Done
    })
}

fn run(cli: &Cli) -> anyhow::Result<Status> {
    match &cli.cmd {
        Cmd::Flows(a) => flows(cli, a),
        Cmd::Reduce(a) => reduce(cli, a),
        Cmd::Census(a) => census(cli, a),
        Cmd::Connectivity(a) => connectivity(cli, a),
        Cmd::Hilbert(a) => hilbert_cmd(cli, a),
        Cmd::Series(a) => series(cli, a),
        Cmd::VerifyMoves(a) => verify_moves(cli, a),
        Cmd::Fuzz(a) => fuzz(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::BudgetExhausted) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
