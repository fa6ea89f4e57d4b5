use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use entropic::dist::parse_rational;
use entropic::extractor::{condense_exact, condense_sampled, plan};
use entropic::flat::{decompose_flat, decompose_flat_default};
use entropic::incidence::{count_incidences, energy_product_sum, energy_rnr, expander_size, read_tuples, PlaneSet3, PointSet3};
use entropic::progression::SetOfScalars;
use entropic::search::{search, search_support, Method, Objective64, ObjectiveKind, SearchConfig};
use entropic::seeding::substream;
use entropic::verifier::{default_corpus, run_suite, CorpusSpec, Structure, SuiteOptions, Window};
use entropic::{entropy_of, parse_query, Bindings, Budget, Dist, Error, ErrorKind, FieldSpec, Scalar};

#[derive(Parser)]
#[command(name = "entropic", version, about = "Exact entropy inequalities for sums and products")]
struct Cli {
    /// Maximum number of joint points any single enumeration may visit.
    #[arg(long, global = true, default_value_t = Budget::default().max_points)]
    budget: u64,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print progress notes to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate entropy queries such as `H[X*(Y+Z)]` or `dR[X, Y]`.
    Entropy(EntropyArgs),
    /// Run a verification suite and write its report.
    Verify(VerifyArgs),
    /// Count point-plane incidences or product-sum energies.
    Incidence(IncidenceArgs),
    /// Decompose a law into a mixture of flat laws.
    Decompose(DecomposeArgs),
    /// Run the `X(Y+Z)` condenser.
    Extract(ExtractArgs),
    /// Search for laws minimizing a doubling objective.
    Search(SearchArgs),
    /// Generate seeded distributions.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Args)]
struct EntropyArgs {
    /// Field of every binding, `p=<prime>` or `Q`.
    #[arg(long)]
    field: Option<FieldSpec>,
    /// `NAME=path.tsv`; repeat a path under several names for independent copies.
    #[arg(long = "bind", value_name = "NAME=PATH")]
    binds: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(required = true)]
    queries: Vec<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    suite: String,
    /// Trials per field.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated fields, e.g. `p=13,Q`.
    #[arg(long, value_delimiter = ',')]
    fields: Option<Vec<FieldSpec>>,
    #[arg(long)]
    structure: Option<Structure>,
    #[arg(long)]
    support_min: Option<usize>,
    #[arg(long)]
    support_max: Option<usize>,
    #[arg(long)]
    weight_bits: Option<u32>,
    #[arg(long)]
    rational_bits: Option<u32>,
    #[arg(long)]
    margin_bits: Option<f64>,
    #[arg(long)]
    window_lo: Option<f64>,
    #[arg(long)]
    window_hi: Option<f64>,
    #[arg(long)]
    doubling_filter: Option<f64>,
    #[arg(long)]
    delta_bits: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IncidenceArgs {
    /// Points in 3-space, one `x y z` tuple per line.
    #[arg(long, requires = "planes")]
    points: Option<PathBuf>,
    /// Planes `α β γ δ` for `αx + βy + γz = δ`.
    #[arg(long)]
    planes: Option<PathBuf>,
    /// Three one-column set files `A,B,C` for `|{a(b+c) = a'(b'+c')}|`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    sets: Option<Vec<PathBuf>>,
    /// Planar points for the `(a−b)(c−d)` energy.
    #[arg(long)]
    rnr: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    source: PathBuf,
    /// Flat part size `2^m`; defaults to `⌊Ηmin⌋`.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    p: u64,
    #[arg(long, default_value = "1/4")]
    delta: String,
    #[arg(long, default_value = "exact")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    #[arg(long, default_value_t = entropic::extractor::MIN_TRIALS)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value = "maxdoubling")]
    objective: ObjectiveKind,
    /// Fixed support (a distribution or one-column scalar file).
    #[arg(long, conflicts_with_all = ["p", "k"])]
    support: Option<PathBuf>,
    /// Search supports of size `k` in `F_p` instead.
    #[arg(long, requires = "k")]
    p: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    outer: usize,
    #[arg(long, default_value = "pg")]
    method: Method,
    #[arg(long, default_value_t = SearchConfig::default().iters)]
    iters: usize,
    #[arg(long, default_value_t = SearchConfig::default().step)]
    step: f64,
    #[arg(long, default_value_t = SearchConfig::default().floor)]
    floor: f64,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenCommand {
    /// One law from a verifier corpus.
    Corpus {
        #[arg(long, default_value = "Q")]
        field: FieldSpec,
        #[arg(long, default_value = "random")]
        structure: Structure,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trial index within the corpus.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 1)]
        support_min: usize,
        #[arg(long, default_value_t = 12)]
        support_max: usize,
        #[arg(long, default_value_t = 10)]
        weight_bits: u32,
        #[arg(long, default_value_t = 6)]
        rational_bits: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Binomial(n, 1/2) on `0..=n` in ℚ or reduced into `F_p`.
    Binomial {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value = "Q")]
        field: FieldSpec,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform law on listed values, or on `k` seeded random values.
    Uniform {
        #[arg(long)]
        field: FieldSpec,
        #[arg(long, value_delimiter = ',', conflicts_with = "k")]
        values: Option<Vec<String>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Resource => 3,
            ErrorKind::Usage | ErrorKind::Domain | ErrorKind::Precondition | ErrorKind::Io => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let budget = Budget::new(cli.budget);
    let result = match cli.command {
        Command::Entropy(a) => entropy(a, budget),
        Command::Verify(a) => verify(a, budget, cli.verbose),
        Command::Incidence(a) => incidence(a, budget),
        Command::Decompose(a) => decompose(a),
        Command::Extract(a) => extract(a, budget),
        Command::Search(a) => run_search(a),
        Command::Gen(g) => generate(g),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_dist(path: &Path) -> Result<Dist, Failure> {
    Dist::read_tsv(open(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_json(out: Option<&Path>, v: &Value) -> Result<(), Failure> {
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(v).expect("JSON value serializes");
        std::fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| usage(e.to_string())),
    }
}

fn entropy(a: EntropyArgs, budget: Budget) -> Outcome {
    let mut loaded: BTreeMap<String, (String, Dist)> = BTreeMap::new();
    for b in &a.binds {
        let (name, path) = b.split_once('=').ok_or_else(|| usage(format!("--bind expects NAME=PATH, got `{b}`")))?;
        loaded.insert(name.to_string(), (path.to_string(), read_dist(Path::new(path))?));
    }
    let field = match (a.field, loaded.values().next()) {
        (Some(f), _) => f,
        (None, Some((_, d))) => d.field(),
        (None, None) => return Err(usage("no bindings and no --field")),
    };
    let mut bindings = Bindings::new(field);
    for (name, (path, d)) in &loaded {
        if d.field() != field {
            return Err(usage(format!("{path} is over {}, expected {field}", d.field())));
        }
        bindings.bind(name, d.clone())?;
    }
    let mut rows = Vec::new();
    for q in &a.queries {
        let ast = parse_query(q)?;
        let v = entropy_of(&ast, &bindings, budget)?;
        let exact = v.exact.as_ref().map(entropic::dist::rational_text);
        match &exact {
            Some(e) => println!("{q}\t{}\t{e}", v.bits),
            None => println!("{q}\t{}", v.bits),
        }
        rows.push(json!({ "query": q, "bits": v.bits, "exact": exact }));
    }
    let binds: BTreeMap<&str, &str> = loaded.iter().map(|(n, (p, _))| (n.as_str(), p.as_str())).collect();
    write_json(a.out.as_deref(), &json!({ "field": field.to_string(), "bindings": binds, "results": rows }))?;
    Ok(0)
}

fn verify(a: VerifyArgs, budget: Budget, verbose: bool) -> Outcome {
    let base = default_corpus(&a.suite)?;
    let corpus = CorpusSpec {
        fields: a.fields.unwrap_or(base.fields),
        support_min: a.support_min.unwrap_or(base.support_min),
        support_max: a.support_max.unwrap_or(base.support_max),
        weight_bits: a.weight_bits.unwrap_or(base.weight_bits),
        rational_bits: a.rational_bits.unwrap_or(base.rational_bits),
        structure: a.structure.unwrap_or(base.structure),
        trials: a.trials.unwrap_or(base.trials),
        seed: a.seed.unwrap_or(base.seed),
    };
    let d = SuiteOptions::default();
    let opts = SuiteOptions {
        max_points: budget.max_points,
        margin_bits: a.margin_bits.unwrap_or(d.margin_bits),
        window: Window { lo: a.window_lo.unwrap_or(d.window.lo), hi: a.window_hi.unwrap_or(d.window.hi) },
        doubling_filter: a.doubling_filter.unwrap_or(d.doubling_filter),
        delta_bits: a.delta_bits.unwrap_or(d.delta_bits),
        sizes: a.sizes.unwrap_or(d.sizes),
        rounds: a.rounds.unwrap_or(d.rounds),
        ..d
    };
    if verbose {
        eprintln!("running {} over {} field(s), {} trials each", a.suite, corpus.fields.len(), corpus.trials);
    }
    let report = run_suite(&a.suite, &corpus, &opts)?;
    let s = &report.summary;
    println!("suite\t{}", report.suite);
    println!("trials\t{}", s.trials);
    println!("violations\t{}", s.violations);
    println!("skipped\t{}", s.skipped);
    if let (Some(lo), Some(hi), Some(mean)) = (s.deficit_min, s.deficit_max, s.deficit_mean) {
        println!("deficit_min\t{lo}");
        println!("deficit_max\t{hi}");
        println!("deficit_mean\t{mean}");
    }
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.out {
        std::fs::write(path, report.to_json() + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn read_set(path: &Path) -> Result<SetOfScalars, Failure> {
    let (field, rows) = read_tuples(open(path)?, 1)?;
    Ok(SetOfScalars::new(field, rows.into_iter().map(|r| r[0].clone()))?)
}

fn incidence(a: IncidenceArgs, budget: Budget) -> Outcome {
    let mut result = serde_json::Map::new();
    if let (Some(p), Some(q)) = (&a.points, &a.planes) {
        let points = PointSet3::read_tsv(open(p)?)?;
        let planes = PlaneSet3::read_tsv(open(q)?)?;
        let i = count_incidences(&points, &planes, budget)?;
        println!("incidences\t{i}");
        result.insert("incidences".into(), json!(i));
    }
    if let Some(paths) = &a.sets {
        let sets = paths.iter().map(|p| read_set(p)).collect::<Result<Vec<_>, _>>()?;
        let n = energy_product_sum(&sets[0], &sets[1], &sets[2], budget)?;
        let size = expander_size(&sets[0], &sets[1], &sets[2], budget)?;
        println!("energy\t{n}");
        println!("expander_size\t{size}");
        result.insert("energy".into(), json!(n.to_string()));
        result.insert("expander_size".into(), json!(size));
    }
    if let Some(p) = &a.rnr {
        let (_, rows) = read_tuples(open(p)?, 2)?;
        let pts: Vec<(Scalar, Scalar)> = rows.into_iter().map(|r| (r[0].clone(), r[1].clone())).collect();
        let n = energy_rnr(&pts, budget)?;
        println!("rnr_energy\t{n}");
        result.insert("rnr_energy".into(), json!(n.to_string()));
    }
    if result.is_empty() {
        return Err(usage("give --points with --planes, --sets A,B,C, or --rnr"));
    }
    write_json(a.out.as_deref(), &Value::Object(result))?;
    Ok(0)
}

fn decompose(a: DecomposeArgs) -> Outcome {
    let x = read_dist(&a.source)?;
    let mix = match a.m {
        Some(m) => decompose_flat(&x, m)?,
        None => decompose_flat_default(&x)?,
    };
    mix.validate(&x)?;
    eprintln!("m = {}, {} parts", mix.m, mix.parts.len());
    write_text(a.out.as_deref(), &(mix.to_json() + "\n"))?;
    Ok(0)
}

fn extract(a: ExtractArgs, budget: Budget) -> Outcome {
    let source = read_dist(&a.source)?;
    if source.field() != FieldSpec::prime(a.p)? {
        return Err(usage(format!("source is over {}, expected p={}", source.field(), a.p)));
    }
    let delta = parse_rational(&a.delta)?;
    let plan = plan(a.p, &delta)?;
    let report = match a.mode.as_str() {
        "exact" => {
            let trace = condense_exact(&source, a.rounds, budget)?;
            for l in &trace.levels {
                println!("level {}\tHmin {}\tH {}\tsupport {}", l.level, l.min_entropy.bits, l.shannon, l.support);
            }
            json!({ "mode": "exact", "plan": plan, "trace": trace, "gains": trace.gains() })
        }
        "sampled" => {
            let trace = condense_sampled(&source, &plan, a.trials, a.seed)?;
            for l in &trace.levels {
                println!("level {}\tH2 {}\tse {}\tP(0) {}", l.level, l.collision_entropy, l.collision_entropy_se, l.prob_zero);
            }
            for t in &trace.battery {
                println!("{}\tchi2 {}\tdof {}\tp {}\treject {}", t.name, t.statistic, t.dof, t.p_value, t.reject);
            }
            json!({ "mode": "sampled", "plan": plan, "trace": trace, "rejected": trace.rejected() })
        }
        m => return Err(usage(format!("unknown mode `{m}` (expected exact or sampled)"))),
    };
    write_json(a.out.as_deref(), &report)?;
    Ok(0)
}

fn read_support(path: &Path) -> Result<(FieldSpec, Vec<Scalar>), Failure> {
    if let Ok(d) = Dist::read_tsv(open(path)?) {
        return Ok((d.field(), d.support()));
    }
    let (field, rows) = read_tuples(open(path)?, 1)?;
    Ok((field, rows.into_iter().map(|r| r[0].clone()).collect()))
}

fn run_search(a: SearchArgs) -> Outcome {
    let cfg = SearchConfig { method: a.method, iters: a.iters, step: a.step, floor: a.floor, seed: a.seed, restarts: a.restarts };
    let result = if let Some(path) = &a.support {
        let (field, support) = read_support(path)?;
        let o = Objective64::new(a.objective, field, support)?;
        let r = search(&o, &cfg)?;
        println!("value\t{}\naudit\t{}\nraw_value\t{}", r.value, r.audit, r.raw_value);
        serde_json::to_value(&r).expect("result serializes")
    } else {
        let (Some(p), Some(k)) = (a.p, a.k) else {
            return Err(usage("give --support or both --p and --k"));
        };
        let r = search_support(a.objective, p, k, a.outer, &cfg)?;
        println!("value\t{}\naudit\t{}\nraw_value\t{}", r.best.value, r.best.audit, r.best.raw_value);
        serde_json::to_value(&r).expect("result serializes")
    };
    write_json(a.out.as_deref(), &result)?;
    Ok(0)
}

fn generate(g: GenCommand) -> Outcome {
    let (dist, out) = match g {
        GenCommand::Corpus { field, structure, seed, index, support_min, support_max, weight_bits, rational_bits, out } => {
            let spec = CorpusSpec {
                fields: vec![field],
                support_min,
                support_max,
                weight_bits,
                rational_bits,
                structure,
                trials: index + 1,
                seed,
            };
            (spec.draw(field, index, 1)?.remove(0).x, out)
        }
        GenCommand::Binomial { n, field, out } => {
            let b = Dist::binomial(n);
            let d = match field {
                FieldSpec::Rationals => b,
                f => Dist::from_law(f, b.law().map(|s| f.from_bigint(&s.as_rational().expect("ℚ").to_integer())))?,
            };
            (d, out)
        }
        GenCommand::Uniform { field, values, k, seed, out } => {
            let support: Vec<Scalar> = match (values, k) {
                (Some(vs), _) => vs.iter().map(|v| field.parse_scalar(v)).collect::<Result<_, _>>()?,
                (None, Some(k)) => {
                    let spec = CorpusSpec { fields: vec![field], ..Default::default() };
                    spec.random_set(field, &mut substream(seed, "gen/uniform", 0), k)
                }
                (None, None) => return Err(usage("give --values or --k")),
            };
            (Dist::uniform(field, support)?, out)
        }
    };
    write_text(out.as_deref(), &dist.to_tsv_string())?;
    Ok(0)
}
