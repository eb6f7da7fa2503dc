//! `diocap`: batch front end emitting JSON or CSV.

mod input;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::{json, Value};

use diocap::capacity::{self, CapacityOptions, DiagonalMode, NodeSet};
use diocap::constructions::{self, GrowthRule};
use diocap::contfrac::{self, ConvergentTable, ExpandOptions};
use diocap::kernels::{kernel_eval_bounds, GaugeFamily, GaugeSpec, KernelFamily, KernelSpec};
use diocap::measures::{self, AtomicMeasure, Target};
use diocap::sums::{self, DenominatorTable, SeriesReport};
use diocap::Error;

use input::{parse_real, parse_rule, RealInput};
use output::{num, tower, Format};

#[derive(Parser)]
#[command(
    name = "diocap",
    version,
    about = "Continued fractions, arithmetic series and logarithmic capacities"
)]
struct Cli {
    /// Worker threads; DIOCAP_THREADS is used when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write machine output here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continued-fraction digits and convergents of a real.
    Expand(ExpandArgs),
    /// Log-space denominator table of a growth-rule witness.
    Construct(ConstructArgs),
    /// Partial sums of an arithmetic series with growth diagnostics.
    Series(SeriesArgs),
    /// Tabulate a capacity kernel with certified bounds.
    Kernel(KernelArgs),
    /// Tabulate a Hausdorff gauge.
    Gauge(GaugeArgs),
    /// Build the atomic measure on rationals and report its mass.
    Measure(MeasureArgs),
    /// Potential of the atomic measure at a point, swept over the layer cap.
    Potential(PotentialArgs),
    /// Discrete capacity of node grids, with property checks for families.
    Capacity(CapacityArgs),
    /// Greedy Hausdorff cover of a grid.
    Cover(CoverArgs),
}

#[derive(Args)]
struct ExpandArgs {
    /// pi, e, golden, pi-frac, e-frac, p/q or a decimal literal.
    #[arg(long)]
    value: String,
    #[arg(long, default_value_t = 10)]
    terms: usize,
    /// Starting precision of the enclosure; doubled as needed.
    #[arg(long, default_value_t = 128)]
    precision_bits: u32,
}

#[derive(Args)]
struct RuleArgs {
    /// golden, nonbrjuno-exp, nonpm-expexp, constant:C, poly:D, exp-of-q, exp-exp-of-q.
    #[arg(long)]
    rule: String,
    /// Leading digits a1,a2,... before the rule takes over.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
}

#[derive(Args)]
struct ConstructArgs {
    #[command(flatten)]
    rule: RuleArgs,
    #[arg(long, default_value_t = 20)]
    terms: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeriesChoice {
    Brjuno,
    Pm,
    Lemma1,
    Lemma2,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long, value_enum)]
    kind: SeriesChoice,
    #[arg(long, conflicts_with = "value", required_unless_present = "value")]
    rule: Option<String>,
    #[arg(long, value_delimiter = ',', requires = "rule")]
    seed: Option<Vec<u64>>,
    /// A real whose convergents feed the series instead of a rule.
    #[arg(long)]
    value: Option<String>,
    #[arg(long = "N", default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = sums::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Cauchy tolerance of the growth classification.
    #[arg(long, default_value_t = sums::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 128)]
    precision_bits: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelChoice {
    #[value(name = "K1", alias = "k1")]
    K1,
    #[value(name = "K2", alias = "k2")]
    K2,
}

impl KernelChoice {
    fn spec(self, sigma: f64) -> diocap::Result<KernelSpec> {
        let family = match self {
            KernelChoice::K1 => KernelFamily::K1,
            KernelChoice::K2 => KernelFamily::K2,
        };
        KernelSpec::new(family, sigma)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GaugeChoice {
    #[value(name = "H1", alias = "h1")]
    H1,
    #[value(name = "H2", alias = "h2")]
    H2,
    Identity,
}

impl GaugeChoice {
    fn spec(self, sigma: Option<f64>) -> Result<GaugeSpec, Failure> {
        let family = match self {
            GaugeChoice::H1 => GaugeFamily::H1,
            GaugeChoice::H2 => GaugeFamily::H2,
            GaugeChoice::Identity => return Ok(GaugeSpec::identity()),
        };
        let sigma =
            sigma.ok_or_else(|| Failure::Usage("--sigma is required for H1 and H2".into()))?;
        Ok(GaugeSpec::new(family, sigma)?)
    }
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_enum)]
    family: KernelChoice,
    #[arg(long)]
    sigma: f64,
    /// Distances: a:b:n grid or comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    d: String,
}

#[derive(Args)]
struct GaugeArgs {
    #[arg(long, value_enum)]
    family: GaugeChoice,
    #[arg(long)]
    sigma: Option<f64>,
    /// Arguments: a:b:n grid or comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    t: String,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    qmax: u64,
    #[arg(long, default_value_t = sums::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Keep only reduced fractions p/q.
    #[arg(long)]
    reduced: bool,
    /// Emit every atom instead of a summary.
    #[arg(long)]
    atoms: bool,
}

#[derive(Args)]
struct PotentialArgs {
    /// A real (pi, e, golden, pi-frac, e-frac, p/q, decimal) or a growth rule.
    #[arg(long)]
    alpha: String,
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// start:stop:xF or start:stop:+S.
    #[arg(long, conflicts_with = "qmax", required_unless_present = "qmax")]
    qmax_sweep: Option<String>,
    #[arg(long)]
    qmax: Option<u64>,
    #[arg(long, value_enum, default_value_t = KernelChoice::K1)]
    kernel: KernelChoice,
    #[arg(long, default_value_t = 2.4)]
    sigma: f64,
    #[arg(long, default_value_t = sums::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    reduced: bool,
    /// Width the potential enclosure must reach.
    #[arg(long, default_value_t = measures::DEFAULT_POTENTIAL_TOL)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagonalChoice {
    Clamp,
    Exclude,
}

#[derive(Args)]
struct CapacityArgs {
    /// a:b:n node grid; repeat for a family.
    #[arg(long, required = true)]
    grid: Vec<String>,
    #[arg(long, value_enum, default_value_t = KernelChoice::K1)]
    kernel: KernelChoice,
    #[arg(long, default_value_t = 2.4)]
    sigma: f64,
    /// Distance substituted on the diagonal; half the smallest gap by default.
    #[arg(long)]
    clamp: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = DiagonalChoice::Clamp)]
    diagonal: DiagonalChoice,
    /// Slack allowed in monotonicity and subadditivity checks.
    #[arg(long, default_value_t = 1e-6)]
    property_tol: f64,
}

#[derive(Args)]
struct CoverArgs {
    /// a:b:n sample grid.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_enum)]
    gauge: GaugeChoice,
    #[arg(long)]
    sigma: Option<f64>,
    /// Halve the scale this many times and report each cover.
    #[arg(long, default_value_t = 1)]
    levels: usize,
}

enum Failure {
    Usage(String),
    Compute(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(msg) => Failure::Usage(msg),
            other => Failure::Compute(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(Error::NonConvergence { .. }) => 4,
            Failure::Compute(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    fn report(&self) -> ExitCode {
        match self {
            Failure::Usage(msg) => eprintln!("diocap: {msg}"),
            Failure::Compute(e) => eprintln!("diocap: {e}"),
            Failure::Io(e) => eprintln!("diocap: {e}"),
        }
        ExitCode::from(self.code())
    }
}

fn usage<T>(r: Result<T, String>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn thread_count(flag: Option<usize>, env: Option<String>) -> Result<Option<usize>, Failure> {
    let n = match (flag, env) {
        (Some(n), _) => n,
        (None, Some(s)) => s.trim().parse().map_err(|_| {
            Failure::Usage(format!(
                "DIOCAP_THREADS must be a positive integer, got '{s}'"
            ))
        })?,
        (None, None) => return Ok(None),
    };
    if n == 0 {
        return Err(Failure::Usage("thread count must be positive".into()));
    }
    Ok(Some(n))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let output = cli.output.clone();
    let rendered = render(cli, std::env::var("DIOCAP_THREADS").ok())?;
    let mut out = output::sink(output.as_ref())?;
    out.write_all(&rendered)?;
    out.flush()?;
    Ok(())
}

/// Machine output of a command, rendered in memory so a failure leaves none.
fn render(cli: Cli, env_threads: Option<String>) -> Result<Vec<u8>, Failure> {
    let threads = thread_count(cli.threads, env_threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let format = cli.format;
    pool.install(|| match cli.command {
        Command::Expand(a) => expand(a, format),
        Command::Construct(a) => construct(a, format),
        Command::Series(a) => series(a, format),
        Command::Kernel(a) => kernel(a, format),
        Command::Gauge(a) => gauge(a, format),
        Command::Measure(a) => measure(a, format),
        Command::Potential(a) => potential(a, format),
        Command::Capacity(a) => capacity(a, format),
        Command::Cover(a) => cover(a, format),
    })
}

fn json_line(s: String) -> Vec<u8> {
    let mut v = s.into_bytes();
    v.push(b'\n');
    v
}

fn csv_bytes(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    output::write_csv(&mut buf, header, rows)?;
    Ok(buf)
}

/// Finite floats as JSON numbers, the rest as strings.
fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(num(x))
    }
}

fn check_positive(name: &str, x: f64) -> Result<(), Failure> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--{name} must be positive and finite, got {x}"
        )))
    }
}

fn expand_real(
    value: &RealInput,
    terms: usize,
    bits: u32,
) -> Result<(contfrac::PartialQuotients, ConvergentTable), Failure> {
    let x = value.certified(bits);
    let opts = ExpandOptions {
        start_bits: bits,
        ..ExpandOptions::default()
    };
    let pq = contfrac::expand_with(&x, terms, opts)?;
    let table = contfrac::convergents(&pq, terms)?;
    Ok((pq, table))
}

fn expand(a: ExpandArgs, format: Format) -> Result<Vec<u8>, Failure> {
    let value = usage(parse_real(&a.value))?;
    if a.precision_bits == 0 {
        return Err(Failure::Usage("--precision-bits must be positive".into()));
    }
    let (pq, table) = expand_real(&value, a.terms, a.precision_bits)?;
    match format {
        Format::Json => Ok(json_line(contfrac::to_json(&pq, Some(&table)))),
        Format::Csv => {
            let rows = table.entries().iter().map(|c| {
                let digit = if c.n == 0 {
                    pq.a0().to_string()
                } else {
                    pq.digits()[c.n - 1].to_string()
                };
                vec![c.n.to_string(), digit, c.p.to_string(), c.q.to_string()]
            });
            csv_bytes(&["n", "a", "P", "Q"], rows)
        }
    }
}

fn rule_of(r: &RuleArgs) -> Result<GrowthRule, Failure> {
    usage(parse_rule(&r.rule, r.seed.as_deref()))
}

fn construct(a: ConstructArgs, format: Format) -> Result<Vec<u8>, Failure> {
    let rule = rule_of(&a.rule)?;
    let w = constructions::build(&rule, a.terms)?;
    match format {
        Format::Json => Ok(json_line(w.log.to_json())),
        Format::Csv => {
            let rows = w.log.entries().iter().map(|e| {
                vec![
                    e.n.to_string(),
                    tower(e.ln_q),
                    tower(e.ln_q.ln()),
                    num(e.rel_err),
                ]
            });
            csv_bytes(&["n", "lnQ", "lnlnQ", "rel_err"], rows)
        }
    }
}

fn series(a: SeriesArgs, format: Format) -> Result<Vec<u8>, Failure> {
    check_positive("epsilon", a.epsilon)?;
    check_positive("tol", a.tol)?;
    // Every series reads Q up to index N + 1.
    let need = a.n + 1;
    let table: Box<dyn DenominatorTable> = match (&a.rule, &a.value) {
        (Some(rule), _) => {
            let rule = usage(parse_rule(rule, a.seed.as_deref()))?;
            Box::new(constructions::build(&rule, need)?)
        }
        (None, Some(value)) => {
            let value = usage(parse_real(value))?;
            Box::new(expand_real(&value, need, a.precision_bits)?.1)
        }
        (None, None) => unreachable!("clap requires --rule or --value"),
    };
    let table = table.as_ref();
    let report: SeriesReport = match a.kind {
        SeriesChoice::Brjuno => sums::brjuno_series(table, a.n)?,
        SeriesChoice::Pm => sums::pm_series(table, a.n)?,
        SeriesChoice::Lemma1 => sums::lemma1_series(table, a.n, a.epsilon)?,
        SeriesChoice::Lemma2 => sums::lemma2_series(table, a.n, a.epsilon)?,
    }
    .with_tol(a.tol);
    match format {
        Format::Json => Ok(json_line(
            serde_json::to_string(&report).expect("serializable"),
        )),
        Format::Csv => {
            let rows = report.terms.iter().map(|t| {
                let split = match t.in_split {
                    Some(b) => b.to_string(),
                    None => String::new(),
                };
                vec![
                    t.n.to_string(),
                    tower(t.value),
                    tower(report.partial_sum(t.n)),
                    split,
                ]
            });
            csv_bytes(&["n", "term", "partial_sum", "in_N_split"], rows)
        }
    }
}

fn kernel(a: KernelArgs, format: Format) -> Result<Vec<u8>, Failure> {
    let spec = a.family.spec(a.sigma)?;
    let ds = usage(input::parse_f64_points(&a.d))?;
    if let Some(d) = ds.iter().find(|d| !(**d >= 0.0 && **d < 1.0)) {
        return Err(Failure::Compute(Error::Domain(format!(
            "kernel distance {d} outside [0, 1)"
        ))));
    }
    let rows: Vec<(f64, f64, f64, f64)> = ds
        .iter()
        .map(|&d| {
            let b = kernel_eval_bounds(&spec, d);
            (d, spec.eval(d), b.lo, b.hi)
        })
        .collect();
    match format {
        Format::Json => {
            let values: Vec<Value> = rows
                .iter()
                .map(|&(d, v, lo, hi)| json!({"d": jnum(d), "value": jnum(v), "lower": jnum(lo), "upper": jnum(hi)}))
                .collect();
            let doc = json!({
                "family": spec.family,
                "sigma": spec.sigma,
                "theorem_grade": spec.theorem_grade(),
                "values": values,
            });
            Ok(json_line(doc.to_string()))
        }
        Format::Csv => csv_bytes(
            &["d", "value", "lower", "upper"],
            rows.iter()
                .map(|&(d, v, lo, hi)| vec![num(d), num(v), num(lo), num(hi)]),
        ),
    }
}

fn gauge(a: GaugeArgs, format: Format) -> Result<Vec<u8>, Failure> {
    let spec = a.family.spec(a.sigma)?;
    let ts = usage(input::parse_f64_points(&a.t))?;
    let rows = ts
        .iter()
        .map(|&t| Ok((t, spec.eval(t)?)))
        .collect::<diocap::Result<Vec<_>>>()?;
    match format {
        Format::Json => {
            let values: Vec<Value> = rows
                .iter()
                .map(|&(t, v)| json!({"t": jnum(t), "value": jnum(v)}))
                .collect();
            let doc = json!({
                "family": spec.family,
                "sigma": spec.sigma,
                "domain_max": spec.domain_max,
                "values": values,
            });
            Ok(json_line(doc.to_string()))
        }
        Format::Csv => csv_bytes(
            &["t", "value"],
            rows.iter().map(|&(t, v)| vec![num(t), num(v)]),
        ),
    }
}

fn paper_measure(q_max: u64, epsilon: f64, reduced: bool) -> diocap::Result<AtomicMeasure> {
    if reduced {
        AtomicMeasure::paper_reduced(q_max, epsilon)
    } else {
        AtomicMeasure::paper(q_max, epsilon)
    }
}

fn measure(a: MeasureArgs, format: Format) -> Result<Vec<u8>, Failure> {
    check_positive("epsilon", a.epsilon)?;
    let m = paper_measure(a.qmax, a.epsilon, a.reduced)?;
    match (a.atoms, format) {
        (true, Format::Json) => {
            let mut buf = Vec::new();
            m.write_json(&mut buf)?;
            buf.push(b'\n');
            Ok(buf)
        }
        (true, Format::Csv) => csv_bytes(
            &["num", "den", "weight"],
            m.atoms()
                .map(|at| vec![at.num.to_string(), at.den.to_string(), num(at.weight)]),
        ),
        (false, _) => {
            let mass = m.total_mass();
            let bound = measures::mass_bound(a.qmax, a.epsilon);
            match format {
                Format::Json => {
                    let doc = json!({
                        "q_max": a.qmax,
                        "epsilon": a.epsilon,
                        "reduced": a.reduced,
                        "atoms": m.len(),
                        "mass": jnum(mass),
                        "mass_bound": jnum(bound),
                    });
                    Ok(json_line(doc.to_string()))
                }
                Format::Csv => csv_bytes(
                    &["q_max", "epsilon", "reduced", "atoms", "mass", "mass_bound"],
                    [vec![
                        a.qmax.to_string(),
                        num(a.epsilon),
                        a.reduced.to_string(),
                        m.len().to_string(),
                        num(mass),
                        num(bound),
                    ]],
                ),
            }
        }
    }
}

fn target_of(alpha: &str, seed: Option<&[u64]>) -> Result<Target, Failure> {
    if let Ok(value) = parse_real(alpha) {
        if seed.is_some() {
            return Err(Failure::Usage("--seed applies to growth rules only".into()));
        }
        return Ok(match value {
            RealInput::Exact(r) => Target::Rational(r),
            named => Target::Real(named.certified(128)),
        });
    }
    let rule = usage(parse_rule(alpha, seed))?;
    // A short exact prefix already pins the target far below any layer spacing.
    let w = constructions::build(&rule, 4)?;
    Ok(Target::Digits(w.digits))
}

fn potential(a: PotentialArgs, format: Format) -> Result<Vec<u8>, Failure> {
    check_positive("epsilon", a.epsilon)?;
    check_positive("tol", a.tol)?;
    let spec = a.kernel.spec(a.sigma)?;
    let q_maxes = match (&a.qmax_sweep, a.qmax) {
        (Some(s), _) => usage(input::parse_int_sweep(s))?,
        (None, Some(q)) => vec![q],
        (None, None) => unreachable!("clap requires --qmax or --qmax-sweep"),
    };
    if q_maxes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Usage("q_max values must increase".into()));
    }
    let target = target_of(&a.alpha, a.seed.as_deref())?;
    let m = paper_measure(*q_maxes.last().unwrap(), a.epsilon, a.reduced)?;
    let values = measures::potential_sweep_with_tol(&m, &spec, &target, &q_maxes, a.tol)?;
    match format {
        Format::Csv => Ok(measures::sweep_csv(&q_maxes, &values).into_bytes()),
        Format::Json => {
            let rows: Vec<Value> = q_maxes
                .iter()
                .zip(&values)
                .map(|(q, v)| {
                    json!({
                        "q_max": q,
                        "potential": jnum(v.value),
                        "lower": jnum(v.lower),
                        "upper": jnum(v.upper),
                        "tail_bound": v.truncation_tail_bound.map(jnum),
                        "target_kind": v.target_kind,
                    })
                })
                .collect();
            Ok(json_line(Value::Array(rows).to_string()))
        }
    }
}

fn capacity(a: CapacityArgs, format: Format) -> Result<Vec<u8>, Failure> {
    check_positive("tol", a.tol)?;
    if a.max_iter == 0 {
        return Err(Failure::Usage("--max-iter must be positive".into()));
    }
    let spec = a.kernel.spec(a.sigma)?;
    let grids = a
        .grid
        .iter()
        .map(|g| usage(input::parse_grid(g)))
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<Vec<BigRational>> = grids
        .iter()
        .map(|(lo, hi, n)| input::grid_points(lo, hi, *n))
        .collect();
    let clamp = match a.clamp {
        Some(c) => c,
        None => {
            let gap = points
                .iter()
                .filter_map(|p| NodeSet::new(p.clone(), f64::MIN_POSITIVE).ok()?.min_gap())
                .fold(f64::INFINITY, f64::min);
            if gap.is_finite() {
                gap / 2.0
            } else {
                0.25
            }
        }
    };
    let sets = points
        .into_iter()
        .map(|p| NodeSet::new(p, clamp))
        .collect::<diocap::Result<Vec<_>>>()?;
    let opts = CapacityOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        diagonal: match a.diagonal {
            DiagonalChoice::Clamp => DiagonalMode::Clamp,
            DiagonalChoice::Exclude => DiagonalMode::Exclude,
        },
        record_trace: false,
    };
    if sets.len() == 1 {
        let est = capacity::discrete_capacity(&sets[0], &spec, &opts)?;
        return match format {
            Format::Json => Ok(json_line(est.to_json())),
            Format::Csv => csv_bytes(
                &["node", "weight"],
                sets[0]
                    .nodes()
                    .iter()
                    .zip(&est.weights)
                    .map(|(x, w)| vec![x.to_string(), num(*w)]),
            ),
        };
    }
    let report = capacity::check_capacity_properties(&sets, &spec, &opts, a.property_tol)?;
    match format {
        Format::Json => Ok(json_line(
            serde_json::to_string(&report).expect("serializable"),
        )),
        Format::Csv => csv_bytes(
            &["set", "C"],
            report
                .capacities
                .iter()
                .enumerate()
                .map(|(i, c)| vec![i.to_string(), num(*c)]),
        ),
    }
}

fn cover(a: CoverArgs, format: Format) -> Result<Vec<u8>, Failure> {
    check_positive("epsilon", a.epsilon)?;
    if a.levels == 0 {
        return Err(Failure::Usage("--levels must be positive".into()));
    }
    let gauge = a.gauge.spec(a.sigma)?;
    let (lo, hi, n) = usage(input::parse_grid(&a.grid))?;
    let samples = input::grid_points(&lo, &hi, n);
    if a.levels == 1 {
        let c = capacity::greedy_cover(&samples, a.epsilon, &gauge)?;
        return match format {
            Format::Json => Ok(json_line(c.to_json())),
            Format::Csv => csv_bytes(
                &["center", "radius"],
                c.intervals
                    .iter()
                    .map(|i| vec![i.center.to_string(), num(i.radius)]),
            ),
        };
    }
    let r = capacity::refinement_report(&samples, a.epsilon, &gauge, a.levels, 1e-12)?;
    match format {
        Format::Json => Ok(json_line(serde_json::to_string(&r).expect("serializable"))),
        Format::Csv => csv_bytes(
            &["scale", "count", "gauge_sum"],
            r.levels
                .iter()
                .map(|l| vec![num(l.scale), l.count.to_string(), num(l.gauge_sum)]),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(args: &[&str]) -> Result<Cli, u8> {
        Cli::try_parse_from(std::iter::once("diocap").chain(args.iter().copied())).map_err(|_| 2)
    }

    fn invoke(args: &[&str]) -> Result<String, u8> {
        let cli = parse(args)?;
        render(cli, None)
            .map(|b| String::from_utf8(b).unwrap())
            .map_err(|f| f.code())
    }

    fn ok(args: &[&str]) -> String {
        invoke(args).unwrap_or_else(|code| panic!("{args:?} failed with {code}"))
    }

    fn doc(args: &[&str]) -> Value {
        serde_json::from_str(&ok(args)).unwrap()
    }

    #[test]
    fn expand_pi() {
        let d = doc(&[
            "expand", "--value", "pi", "--terms", "5", "--format", "json",
        ]);
        assert_eq!(d["a0"], 3);
        assert_eq!(d["digits"], json!([7, 15, 1, 292, 1]));
        assert_eq!(d["convergents"][4], json!([4, "103993", "33102"]));
    }

    #[test]
    fn expand_csv_rows() {
        let csv = ok(&[
            "expand", "--value", "golden", "--terms", "3", "--format", "csv",
        ]);
        assert_eq!(csv, "n,a,P,Q\n0,0,0,1\n1,1,1,1\n2,1,1,2\n3,1,2,3\n");
    }

    #[test]
    fn empty_brjuno_sum() {
        let d = doc(&["series", "--kind", "brjuno", "--rule", "golden", "--N", "0"]);
        assert_eq!(d["partial_sums"], json!([[0, 0.0]]));
        assert_eq!(d["terms"], json!([]));
    }

    #[test]
    fn golden_potential_sweep_nondecreasing() {
        let csv = ok(&[
            "potential",
            "--alpha",
            "golden",
            "--qmax-sweep",
            "128:1024:x2",
            "--sigma",
            "2.4",
            "--epsilon",
            "0.1",
            "--format",
            "csv",
        ]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("q_max,potential,tail_bound"));
        let values: Vec<f64> = lines
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(values.len(), 4);
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn construct_reports_towers_past_float_range() {
        let csv = ok(&[
            "construct",
            "--rule",
            "nonpm-expexp",
            "--terms",
            "4",
            "--format",
            "csv",
        ]);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "n,lnQ,lnlnQ,rel_err");
        assert!(rows[4].starts_with("3,exp^1(3239),3239.0,"));
        assert!(rows[5].starts_with("4,exp^3(3239),exp^2(3239),"));
    }

    #[test]
    fn measure_summary() {
        let d = doc(&["measure", "--qmax", "100"]);
        assert_eq!(d["atoms"], (10..=100).map(|q| q - 1).sum::<u64>());
        assert!(d["mass"].as_f64().unwrap() < d["mass_bound"].as_f64().unwrap());
    }

    #[test]
    fn capacity_two_nodes() {
        let d = doc(&["capacity", "--grid", "1/10:3/10:2"]);
        assert_eq!(d["weights"], json!([0.5, 0.5]));
    }

    #[test]
    fn output_file_written_only_on_success() {
        let dir = std::env::temp_dir().join(format!("diocap-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let good = dir.join("k.csv");
        let args = [
            "kernel", "--family", "K1", "--sigma", "2.4", "--d", "0.5", "--format", "csv",
            "--output",
        ];
        let mut argv = args.to_vec();
        argv.push(good.to_str().unwrap());
        assert!(run(parse(&argv).unwrap()).is_ok());
        let text = std::fs::read_to_string(&good).unwrap();
        assert!(text.starts_with("d,value,lower,upper\n0.5,"));

        let bad = dir.join("g.json");
        let argv = [
            "gauge",
            "--family",
            "H1",
            "--sigma",
            "3",
            "--t",
            "0.5",
            "--output",
            bad.to_str().unwrap(),
        ];
        assert_eq!(run(parse(&argv).unwrap()).map_err(|f| f.code()), Err(3));
        assert!(!bad.exists());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn thread_precedence() {
        assert_eq!(thread_count(Some(2), Some("5".into())).ok(), Some(Some(2)));
        assert_eq!(thread_count(None, Some(" 5 ".into())).ok(), Some(Some(5)));
        assert_eq!(thread_count(None, None).ok(), Some(None));
        assert_eq!(
            thread_count(None, Some("many".into()))
                .map_err(|f| f.code())
                .err(),
            Some(2)
        );
        assert_eq!(
            thread_count(None, Some("0".into()))
                .map_err(|f| f.code())
                .err(),
            Some(2)
        );
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let args = [
            "series",
            "--kind",
            "lemma1",
            "--rule",
            "nonbrjuno-exp",
            "--N",
            "30",
        ];
        let one = render(parse(&args).unwrap(), Some("1".into()))
            .ok()
            .unwrap();
        let three = render(parse(&args).unwrap(), Some("3".into()))
            .ok()
            .unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn usage_errors_exit_2() {
        for args in [
            &["frobnicate"][..],
            &["expand", "--terms", "5"],
            &["expand", "--value", "not-a-number"],
            &[
                "series", "--kind", "brjuno", "--rule", "golden", "--value", "pi",
            ],
            &["construct", "--rule", "constant:0"],
            &[
                "potential",
                "--alpha",
                "golden",
                "--qmax-sweep",
                "100:10:x2",
            ],
            &["gauge", "--family", "H2", "--t", "0.001"],
            &["--threads", "0", "measure", "--qmax", "20"],
            &["capacity", "--grid", "1/2:1/4:5"],
        ] {
            assert_eq!(invoke(args).err(), Some(2), "{args:?}");
        }
    }

    #[test]
    fn computational_errors_exit_3() {
        for args in [
            &["kernel", "--family", "K1", "--sigma=-1", "--d", "0.1"][..],
            &["kernel", "--family", "K1", "--sigma", "2.4", "--d", "1.5"],
            &["gauge", "--family", "H1", "--sigma", "2", "--t", "0.01"],
            &["gauge", "--family", "H1", "--sigma", "3", "--t", "0.5"],
            &["capacity", "--grid", "0:1:5"],
            &["expand", "--value", "22/7", "--terms", "5"],
        ] {
            assert_eq!(invoke(args).err(), Some(3), "{args:?}");
        }
    }

    #[test]
    fn nonconvergence_exits_4() {
        assert_eq!(
            invoke(&["capacity", "--grid", "0:1/2:64", "--max-iter", "3"]).err(),
            Some(4)
        );
    }
}
