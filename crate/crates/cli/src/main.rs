//! `nsbox` — command-line laboratory for exact non-signalling box systems:
//! constraint checks, hash-bit attacks, family implications, identity
//! suites and optimal-attack linear programs, all in exact rational
//! arithmetic with machine-readable reports.
//!
//! Exit codes: `0` all checks pass / bounds hold, `2` usage or domain
//! error, `3` the run finished and found violations or bound failures.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nsbox::attack::{
    best_attack, bound_holds, c_factor, classify_rows, lemma_suite, scan_all_f, scan_summary,
    Attack, HashFn, Strategy,
};
use nsbox::bits::BitString;
use nsbox::boxes::{self, chsh_value, BoxSystem};
use nsbox::constraints::{
    self, check_family, dedupe, generate, verify_certificate, Certificate, FamilyKind,
    Implication, LinearConstraint, RowRef,
};
use nsbox::lp::{lp_text, AttackLp};
use nsbox::rational::{parse_rational, rat, to_frac_string, Rational};
use nsbox::Error;

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "nsbox",
    version,
    about = "Exact-arithmetic laboratory for non-signalling boxes and hash-bit attacks",
    after_help = "Every probability is an exact rational; reports are \
                  byte-deterministic for a fixed command line and tool \
                  version, regardless of worker count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write the report to this path instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for scans (default: the NSBOX_JOBS variable, else all
    /// cores). Never changes a single report byte.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a box system against one constraint family.
    Check(CheckArgs),
    /// Build the two-element attack partition for one hash function.
    Attack(AttackArgs),
    /// Attack every hash function on n bits and tabulate the advantages.
    Scan(ScanArgs),
    /// Decide whether one constraint family list implies another.
    Implication(ImplicationArgs),
    /// Run the exhaustive identity suite behind the attack construction.
    VerifyLemmas(VerifyLemmasArgs),
    /// Solve the optimal-attack linear program exactly.
    Lp(LpArgs),
    /// CHSH value of a single-pair system, against the local bound 3/4.
    Chsh(ChshArgs),
}

/// Shared help text for `--system`.
const SYSTEM_HELP: &str = "Built-in system (product, pr, noisy-pr, \
almost-backward-example, not-full-ns-example) or a path to a system JSON file";

#[derive(Args)]
struct CheckArgs {
    #[arg(long, help = SYSTEM_HELP)]
    system: String,
    /// Constraint family: full | ab | backward | almost-backward |
    /// pairwise-box | per-party.
    #[arg(long)]
    family: String,
    /// Noise rate for the built-in noisy systems, exact (`1/10` or `0.1`).
    #[arg(long)]
    eps: Option<String>,
    /// Number of box pairs for the built-in product system.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct AttackArgs {
    /// Noise rate, exact (`1/10` or `0.1`); also the bound parameter.
    #[arg(long)]
    eps: String,
    /// Number of box pairs.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Hash function: identity | xor | and | const0 | const1 | hex table.
    #[arg(long, default_value = "identity")]
    f: String,
    /// Attacked input on the first side, e.g. `01` (default all zeros).
    #[arg(long)]
    u: Option<String>,
    /// Attacked input on the second side (default all zeros).
    #[arg(long)]
    v: Option<String>,
    /// Family the partition elements must satisfy (the two-party marginal
    /// conditions are always included).
    #[arg(long, default_value = "pairwise-box")]
    family: String,
    #[arg(long, help = SYSTEM_HELP, default_value = "product")]
    system: String,
    /// Also solve the optimal-attack LP at the same instance.
    #[arg(long)]
    lp: bool,
    /// Override the size cap of the LP solver.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScanArgs {
    /// Noise rate, exact (`1/10` or `0.1`); also the bound parameter.
    #[arg(long)]
    eps: String,
    /// Number of box pairs (2^(2^n) hash functions are scanned).
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Attacked input on the first side (default all zeros).
    #[arg(long)]
    u: Option<String>,
    /// Attacked input on the second side (default all zeros).
    #[arg(long)]
    v: Option<String>,
    /// Family the partition elements must satisfy (the two-party marginal
    /// conditions are always included).
    #[arg(long, default_value = "pairwise-box")]
    family: String,
    #[arg(long, help = SYSTEM_HELP, default_value = "product")]
    system: String,
    /// Scan past the size cap (n > 3).
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ImplicationArgs {
    /// Antecedent families, comma-separated (e.g. `pairwise-box,ab`).
    #[arg(long)]
    from: String,
    /// Target family.
    #[arg(long)]
    to: String,
    /// Number of box pairs.
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct VerifyLemmasArgs {
    /// Noise rate of the product source, exact, strictly inside (0, 1/2).
    #[arg(long)]
    eps: String,
    /// Number of box pairs (the suite runs over every hash function).
    #[arg(long, default_value_t = 2)]
    n: usize,
}

#[derive(Args)]
struct LpArgs {
    /// Noise rate for the built-in product source and the bound column.
    #[arg(long)]
    eps: Option<String>,
    /// Number of box pairs.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Hash function: identity | xor | and | const0 | const1 | hex table.
    #[arg(long, default_value = "identity")]
    f: String,
    /// Attacked input on the first side (default all zeros).
    #[arg(long)]
    u: Option<String>,
    /// Attacked input on the second side (default all zeros).
    #[arg(long)]
    v: Option<String>,
    /// Family the element must satisfy (the two-party marginal conditions
    /// are always included).
    #[arg(long, default_value = "pairwise-box")]
    family: String,
    #[arg(long, help = SYSTEM_HELP, default_value = "product")]
    system: String,
    /// Mixture weight of the optimized element, exact in (0, 1).
    #[arg(long, default_value = "1/2")]
    p: String,
    /// Sweep these mixture weights instead (comma-separated, reported
    /// without any bound assertion).
    #[arg(long)]
    p_grid: Option<String>,
    /// Write the LP instance in text form to this path.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Override the size cap of the LP solver (n > 2).
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ChshArgs {
    #[arg(long, help = SYSTEM_HELP, default_value = "pr")]
    system: String,
    /// Noise rate for the built-in noisy systems.
    #[arg(long)]
    eps: Option<String>,
}

// ---------------------------------------------------------------------------
// Report: one deterministic structure, two renderings
// ---------------------------------------------------------------------------

/// A report value; typed so JSON keeps booleans and counts native.
#[derive(Clone)]
enum Val {
    Str(String),
    Bool(bool),
    Int(u64),
}

impl Val {
    fn frac(r: &Rational) -> Val {
        Val::Str(to_frac_string(r))
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Val::Str(s) => serde_json::Value::String(s.clone()),
            Val::Bool(b) => serde_json::Value::Bool(*b),
            Val::Int(n) => serde_json::Value::Number((*n).into()),
        }
    }

    fn to_csv(&self) -> String {
        match self {
            Val::Str(s) => csv_escape(s),
            Val::Bool(b) => b.to_string(),
            Val::Int(n) => n.to_string(),
        }
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

type Row = Vec<(&'static str, Val)>;

/// Everything a command produces. `config` echoes the effective run
/// parameters, `items` are the per-result rows (fixed column order for
/// CSV), `summary` the headline values, `extra` JSON-only structured
/// attachments (cell tables, certificates). `failed` drives exit code 3.
struct Report {
    command: &'static str,
    config: Row,
    columns: Vec<&'static str>,
    items: Vec<Row>,
    summary: Row,
    extra: Vec<(&'static str, serde_json::Value)>,
    failed: bool,
}

impl Report {
    fn new(command: &'static str) -> Self {
        Report {
            command,
            config: Vec::new(),
            columns: Vec::new(),
            items: Vec::new(),
            summary: Vec::new(),
            extra: Vec::new(),
            failed: false,
        }
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    fn to_json(&self) -> String {
        fn obj(row: &Row) -> serde_json::Value {
            let mut map = serde_json::Map::new();
            for (k, v) in row {
                map.insert((*k).into(), v.to_json());
            }
            serde_json::Value::Object(map)
        }
        let mut root = serde_json::Map::new();
        root.insert("command".into(), self.command.into());
        root.insert("config".into(), obj(&self.config));
        root.insert(
            "items".into(),
            serde_json::Value::Array(self.items.iter().map(obj).collect()),
        );
        root.insert("summary".into(), obj(&self.summary));
        for (k, v) in &self.extra {
            root.insert((*k).into(), v.clone());
        }
        root.insert("passed".into(), (!self.failed).into());
        root.insert("tool".into(), "nsbox".into());
        root.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(root))
            .expect("report serialization cannot fail");
        text.push('\n');
        text
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nsbox {} {}", env!("CARGO_PKG_VERSION"), self.command);
        for (k, v) in &self.config {
            let _ = writeln!(out, "# config {}={}", k, v.to_csv());
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for item in &self.items {
            let fields: Vec<String> = self
                .columns
                .iter()
                .map(|col| {
                    item.iter()
                        .find(|(k, _)| k == col)
                        .map(|(_, v)| v.to_csv())
                        .unwrap_or_default()
                })
                .collect();
            let _ = writeln!(out, "{}", fields.join(","));
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "# summary {}={}", k, v.to_csv());
        }
        let _ = writeln!(out, "# passed {}", !self.failed);
        out
    }
}

/// A box system as a JSON value in the interchange layout (`n` plus
/// nested `cells` maps keyed `"u,v"` then `"x,y"`).
fn system_json(sys: &BoxSystem) -> serde_json::Value {
    serde_json::from_str(&boxes::to_json_string(sys)).expect("interchange JSON is valid")
}

// ---------------------------------------------------------------------------
// Shared parsing helpers
// ---------------------------------------------------------------------------

fn parse_family(name: &str) -> Result<FamilyKind, Error> {
    FamilyKind::parse(name)
}

fn parse_eps(text: &str) -> Result<Rational, Error> {
    parse_rational(text)
}

fn parse_input(opt: &Option<String>, n: usize, side: &str) -> Result<BitString, Error> {
    match opt {
        None => Ok(BitString::zeros(n)),
        Some(text) => {
            let bits = BitString::parse(text)?;
            if bits.len() != n {
                return Err(Error::Parse(format!(
                    "input {side} = `{text}` has {} bits, the system has n = {n}",
                    bits.len()
                )));
            }
            Ok(bits)
        }
    }
}

/// Resolves `--system`: a built-in constructor name or a JSON file path.
fn load_system(spec: &str, eps: Option<&Rational>, n: Option<usize>) -> Result<BoxSystem, Error> {
    let need_eps =
        || Error::Domain(format!("built-in system `{spec}` needs --eps (e.g. --eps 1/10)"));
    let sys = match spec {
        "product" => BoxSystem::product_system(eps.ok_or_else(need_eps)?, n.unwrap_or(1))?,
        "noisy-pr" => BoxSystem::noisy_pr_box(eps.ok_or_else(need_eps)?)?,
        "pr" => BoxSystem::pr_box(),
        "almost-backward-example" => BoxSystem::example_almost_backward(),
        "not-full-ns-example" => BoxSystem::example_not_full_ns(),
        path => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Parse(format!(
                    "`{path}` is not a built-in system name and cannot be read as a file: {e}"
                ))
            })?;
            boxes::from_json_str(&text)?
        }
    };
    if let Some(n) = n {
        if n != sys.n() {
            return Err(Error::SizeMismatch { expected: n, got: sys.n() });
        }
    }
    Ok(sys)
}

fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Trivial => "trivial",
        Strategy::Construction => "construction",
    }
}

fn in_word_label(n: usize, in_word: u32) -> String {
    let u = BitString::new(n, in_word >> n);
    let v = BitString::new(n, in_word & ((1 << n) - 1));
    format!("{u},{v}")
}

fn push_frac(row: &mut Row, num_key: &'static str, den_key: &'static str, r: &Rational) {
    row.push((num_key, Val::Str(r.numer().to_string())));
    row.push((den_key, Val::Str(r.denom().to_string())));
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Violations listed in a report are capped; the counts stay exact.
const MAX_LISTED_VIOLATIONS: usize = 1000;

fn cmd_check(args: &CheckArgs) -> Result<Report, Error> {
    let kind = parse_family(&args.family)?;
    let eps = args.eps.as_deref().map(parse_eps).transpose()?;
    let sys = load_system(&args.system, eps.as_ref(), args.n)?;
    let outcome = check_family(&sys, kind)?;

    let mut report = Report::new("check");
    report.config.push(("system", Val::Str(args.system.clone())));
    report.config.push(("family", Val::Str(kind.cli_name().into())));
    if let Some(eps) = &eps {
        report.config.push(("eps", Val::frac(eps)));
    }
    report.config.push(("n", Val::Int(sys.n() as u64)));
    report.columns = vec!["index", "constraint", "left", "right"];
    for violation in outcome.violations.iter().take(MAX_LISTED_VIOLATIONS) {
        report.items.push(vec![
            ("index", Val::Int(violation.index as u64)),
            ("constraint", Val::Str(violation.label.clone())),
            ("left", Val::frac(&violation.left)),
            ("right", Val::frac(&violation.right)),
        ]);
    }
    report.summary.push(("constraints", Val::Int(outcome.total as u64)));
    report
        .summary
        .push(("violations", Val::Int(outcome.violations.len() as u64)));
    if outcome.violations.len() > MAX_LISTED_VIOLATIONS {
        report.summary.push(("violations_listed", Val::Int(MAX_LISTED_VIOLATIONS as u64)));
    }
    report.failed = !outcome.passed();
    Ok(report)
}

/// The per-cell scaling factors of the row-shift element, one map per
/// input block, in the interchange key layout.
fn c_table_json(sys: &BoxSystem, f: &HashFn) -> serde_json::Value {
    let n = sys.n();
    let mut blocks = serde_json::Map::new();
    for in_word in 0..1u32 << (2 * n) {
        let rows = classify_rows(sys, f, in_word);
        let mut cells = serde_json::Map::new();
        for x in 0..1u32 << n {
            for y in 0..1u32 << n {
                let (s0, s1, class) = &rows[y as usize];
                let factor = c_factor(f.eval(x), s0, s1, *class);
                let key = format!("{},{}", BitString::new(n, x), BitString::new(n, y));
                cells.insert(key, to_frac_string(&factor).into());
            }
        }
        blocks.insert(in_word_label(n, in_word), serde_json::Value::Object(cells));
    }
    serde_json::Value::Object(blocks)
}

fn attack_row(attack: &Attack, holds: bool) -> Row {
    let mut row: Row = vec![
        ("f_hex", Val::Str(format!("0x{}", attack.f.to_hex()))),
        ("strategy", Val::Str(strategy_name(attack.strategy).into())),
    ];
    push_frac(&mut row, "d_num", "d_den", &attack.d);
    row.push(("bound_holds", Val::Bool(holds)));
    row
}

fn cmd_attack(args: &AttackArgs) -> Result<Report, Error> {
    let eps = parse_eps(&args.eps)?;
    let family = parse_family(&args.family)?;
    let sys = load_system(&args.system, Some(&eps), Some(args.n))?;
    let n = sys.n();
    let f = HashFn::parse(&args.f, n)?;
    let u = parse_input(&args.u, n, "u")?;
    let v = parse_input(&args.v, n, "v")?;

    let attack = best_attack(&sys, &f, u, v, family)?;
    let holds = bound_holds(&attack.d, &eps)?;

    let mut report = Report::new("attack");
    report.config.push(("system", Val::Str(args.system.clone())));
    report.config.push(("eps", Val::frac(&eps)));
    report.config.push(("n", Val::Int(n as u64)));
    report.config.push(("f", Val::Str(format!("0x{}", f.to_hex()))));
    report.config.push(("u", Val::Str(u.to_string())));
    report.config.push(("v", Val::Str(v.to_string())));
    report.config.push(("family", Val::Str(family.cli_name().into())));

    report.columns = vec!["f_hex", "strategy", "d_num", "d_den", "bound_holds"];
    let mut row = attack_row(&attack, holds);

    report.summary.push(("d", Val::frac(&attack.d)));
    report
        .summary
        .push(("strategy", Val::Str(strategy_name(attack.strategy).into())));
    report.summary.push(("bound_holds", Val::Bool(holds)));
    if let Some(note) = &attack.note {
        report.summary.push(("note", Val::Str(note.clone())));
    }

    if args.lp {
        let mut context = AttackLp::new(&sys, family, &rat(1, 2), args.force)?;
        let optimal = context.optimize(&f, u, v)?;
        report.columns.extend(["d_opt_num", "d_opt_den"]);
        push_frac(&mut row, "d_opt_num", "d_opt_den", &optimal.d);
        report.summary.push(("d_opt", Val::frac(&optimal.d)));
    }
    report.items.push(row);

    report.extra.push(("element", system_json(&attack.partition.pz0)));
    report
        .extra
        .push(("complement", system_json(&attack.partition.pz1)));
    if attack.strategy == Strategy::Construction {
        report.extra.push(("c_table", c_table_json(&sys, &f)));
    }
    report.failed = !holds;
    Ok(report)
}

fn cmd_scan(args: &ScanArgs) -> Result<Report, Error> {
    let eps = parse_eps(&args.eps)?;
    let family = parse_family(&args.family)?;
    let sys = load_system(&args.system, Some(&eps), Some(args.n))?;
    let n = sys.n();
    let u = parse_input(&args.u, n, "u")?;
    let v = parse_input(&args.v, n, "v")?;

    let rows = scan_all_f(&sys, &eps, u, v, family, args.force)?;

    let mut report = Report::new("scan");
    report.config.push(("system", Val::Str(args.system.clone())));
    report.config.push(("eps", Val::frac(&eps)));
    report.config.push(("n", Val::Int(n as u64)));
    report.config.push(("u", Val::Str(u.to_string())));
    report.config.push(("v", Val::Str(v.to_string())));
    report.config.push(("family", Val::Str(family.cli_name().into())));

    report.columns = vec!["f_hex", "strategy", "d_num", "d_den", "bound_holds"];
    let mut all_hold = true;
    for row in &rows {
        all_hold &= row.bound_holds;
        let mut item: Row = vec![
            ("f_hex", Val::Str(format!("0x{}", row.f.to_hex()))),
            ("strategy", Val::Str(strategy_name(row.strategy).into())),
        ];
        push_frac(&mut item, "d_num", "d_den", &row.d);
        item.push(("bound_holds", Val::Bool(row.bound_holds)));
        report.items.push(item);
    }

    report.summary.push(("functions", Val::Int(rows.len() as u64)));
    if let Some(min) = scan_summary(&rows) {
        report.summary.push(("min_d", Val::frac(&min.d)));
        report
            .summary
            .push(("min_d_f", Val::Str(format!("0x{}", min.f.to_hex()))));
    }
    if let Some(max) = rows.iter().max_by(|a, b| a.d.cmp(&b.d)) {
        report.summary.push(("max_d", Val::frac(&max.d)));
        report
            .summary
            .push(("max_d_f", Val::Str(format!("0x{}", max.f.to_hex()))));
    }
    report.summary.push(("all_bounds_hold", Val::Bool(all_hold)));
    report.failed = !all_hold;
    Ok(report)
}

fn certificate_json(
    antecedents: &[LinearConstraint],
    target: &LinearConstraint,
    cert: &Certificate,
    n: usize,
    verified: bool,
) -> serde_json::Value {
    let combo: Vec<serde_json::Value> = cert
        .combo
        .iter()
        .map(|(row, coeff)| {
            let row_label = match row {
                RowRef::Constraint(i) => antecedents[*i].label().to_string(),
                RowRef::Normalization(in_word) => {
                    format!("normalization[{}]", in_word_label(n, *in_word))
                }
            };
            let mut map = serde_json::Map::new();
            map.insert("row".into(), row_label.into());
            map.insert("coefficient".into(), to_frac_string(coeff).into());
            serde_json::Value::Object(map)
        })
        .collect();
    let mut map = serde_json::Map::new();
    map.insert("target".into(), target.label().into());
    map.insert("verified".into(), verified.into());
    map.insert("combination".into(), serde_json::Value::Array(combo));
    serde_json::Value::Object(map)
}

fn cmd_implication(args: &ImplicationArgs) -> Result<Report, Error> {
    let from_kinds: Vec<FamilyKind> = args
        .from
        .split(',')
        .map(|name| parse_family(name.trim()))
        .collect::<Result<_, _>>()?;
    if from_kinds.is_empty() {
        return Err(Error::Parse("--from needs at least one family".into()));
    }
    let to_kind = parse_family(&args.to)?;
    let n = args.n;

    let mut antecedents = Vec::new();
    for kind in &from_kinds {
        antecedents.extend(generate(*kind, n)?);
    }
    let antecedents = dedupe(antecedents);
    let targets = generate(to_kind, n)?;
    let outcome = constraints::implies(&antecedents, &targets, n)?;

    let from_names: Vec<&str> = from_kinds.iter().map(|k| k.cli_name()).collect();
    let mut report = Report::new("implication");
    report.config.push(("from", Val::Str(from_names.join(","))));
    report.config.push(("to", Val::Str(to_kind.cli_name().into())));
    report.config.push(("n", Val::Int(n as u64)));

    report.columns = vec!["holds", "targets", "witness"];
    match &outcome {
        Implication::Holds(span) => {
            report.items.push(vec![
                ("holds", Val::Bool(true)),
                ("targets", Val::Int(span.targets() as u64)),
                ("witness", Val::Str("-".into())),
            ]);
            report.summary.push(("holds", Val::Bool(true)));
            report
                .summary
                .push(("antecedents", Val::Int(antecedents.len() as u64)));
            report.summary.push(("targets", Val::Int(span.targets() as u64)));
            if span.targets() > 0 {
                let cert = span.certificate(0);
                let verified = verify_certificate(&antecedents, &targets[0], &cert, n);
                report.extra.push((
                    "certificate",
                    certificate_json(&antecedents, &targets[0], &cert, n, verified),
                ));
            }
        }
        Implication::Fails(witness) => {
            report.items.push(vec![
                ("holds", Val::Bool(false)),
                ("targets", Val::Int(targets.len() as u64)),
                ("witness", Val::Str(witness.witness_label.clone())),
            ]);
            report.summary.push(("holds", Val::Bool(false)));
            report
                .summary
                .push(("antecedents", Val::Int(antecedents.len() as u64)));
            report
                .summary
                .push(("witness", Val::Str(witness.witness_label.clone())));
            report.summary.push(("detail", Val::Str(witness.detail.clone())));
            report.failed = true;
        }
    }
    Ok(report)
}

fn cmd_verify_lemmas(args: &VerifyLemmasArgs) -> Result<Report, Error> {
    let eps = parse_eps(&args.eps)?;
    let suite = lemma_suite(&eps, args.n)?;

    let mut report = Report::new("verify-lemmas");
    report.config.push(("eps", Val::frac(&suite.eps)));
    report.config.push(("n", Val::Int(suite.n as u64)));

    report.columns = vec!["identity", "checked", "failures", "first_failure"];
    for check in &suite.checks {
        report.items.push(vec![
            ("identity", Val::Str(check.name.into())),
            ("checked", Val::Int(check.checked)),
            ("failures", Val::Int(check.failures)),
            (
                "first_failure",
                Val::Str(check.first_failure.clone().unwrap_or_else(|| "-".into())),
            ),
        ]);
    }
    report.summary.push(("functions", Val::Int(suite.functions)));
    report
        .summary
        .push(("identities", Val::Int(suite.checks.len() as u64)));
    report.summary.push(("all_hold", Val::Bool(suite.passed())));
    report.failed = !suite.passed();
    Ok(report)
}

fn cmd_lp(args: &LpArgs) -> Result<Report, Error> {
    let eps = args.eps.as_deref().map(parse_eps).transpose()?;
    let family = parse_family(&args.family)?;
    let sys = load_system(&args.system, eps.as_ref(), Some(args.n))?;
    let n = sys.n();
    let f = HashFn::parse(&args.f, n)?;
    let u = parse_input(&args.u, n, "u")?;
    let v = parse_input(&args.v, n, "v")?;

    let weights: Vec<Rational> = match &args.p_grid {
        Some(grid) => grid
            .split(',')
            .map(|w| parse_rational(w.trim()))
            .collect::<Result<_, _>>()?,
        None => vec![parse_rational(&args.p)?],
    };
    if weights.is_empty() {
        return Err(Error::Parse("--p-grid needs at least one weight".into()));
    }

    let mut report = Report::new("lp");
    report.config.push(("system", Val::Str(args.system.clone())));
    if let Some(eps) = &eps {
        report.config.push(("eps", Val::frac(eps)));
    }
    report.config.push(("n", Val::Int(n as u64)));
    report.config.push(("f", Val::Str(format!("0x{}", f.to_hex()))));
    report.config.push(("u", Val::Str(u.to_string())));
    report.config.push(("v", Val::Str(v.to_string())));
    report.config.push(("family", Val::Str(family.cli_name().into())));

    report.columns = vec![
        "p",
        "f_hex",
        "d_opt_num",
        "d_opt_den",
        "bias_low",
        "bias_high",
        "bound_holds",
    ];

    let mut any_bound_failed = false;
    for (index, p) in weights.iter().enumerate() {
        let mut context = AttackLp::new(&sys, family, p, args.force)?;
        if index == 0 {
            if let Some(path) = &args.export {
                let title = format!(
                    "attack n={n} family={} p={} f=0x{}",
                    family.cli_name(),
                    to_frac_string(p),
                    f.to_hex()
                );
                fs::write(path, lp_text(context.program(), &title)).map_err(|e| {
                    Error::Parse(format!("cannot write LP export `{}`: {e}", path.display()))
                })?;
            }
        }
        let optimal = context.optimize(&f, u, v)?;
        let mut item: Row = vec![
            ("p", Val::frac(p)),
            ("f_hex", Val::Str(format!("0x{}", f.to_hex()))),
        ];
        push_frac(&mut item, "d_opt_num", "d_opt_den", &optimal.d);
        item.push(("bias_low", Val::frac(&optimal.bias_low)));
        item.push(("bias_high", Val::frac(&optimal.bias_high)));
        match &eps {
            Some(eps) => {
                let holds = bound_holds(&optimal.d, eps)?;
                any_bound_failed |= !holds;
                item.push(("bound_holds", Val::Bool(holds)));
            }
            None => item.push(("bound_holds", Val::Str("-".into()))),
        }
        report.items.push(item);
    }

    let construction = best_attack(&sys, &f, u, v, family)?;
    report
        .summary
        .push(("construction_d", Val::frac(&construction.d)));
    report.summary.push((
        "construction_strategy",
        Val::Str(strategy_name(construction.strategy).into()),
    ));
    report.summary.push(("weights", Val::Int(weights.len() as u64)));
    report.failed = any_bound_failed;
    Ok(report)
}

fn cmd_chsh(args: &ChshArgs) -> Result<Report, Error> {
    let eps = args.eps.as_deref().map(parse_eps).transpose()?;
    let sys = load_system(&args.system, eps.as_ref(), None)?;
    let value = chsh_value(&sys)?;
    let local_max = rat(3, 4);

    let mut report = Report::new("chsh");
    report.config.push(("system", Val::Str(args.system.clone())));
    if let Some(eps) = &eps {
        report.config.push(("eps", Val::frac(eps)));
    }

    report.columns = vec!["system", "value_num", "value_den", "exceeds_local"];
    let mut row: Row = vec![("system", Val::Str(args.system.clone()))];
    push_frac(&mut row, "value_num", "value_den", &value);
    row.push(("exceeds_local", Val::Bool(value > local_max)));
    report.items.push(row);

    report.summary.push(("value", Val::frac(&value)));
    report.summary.push(("local_max", Val::frac(&local_max)));
    report
        .summary
        .push(("exceeds_local", Val::Bool(value > local_max)));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> Result<Report, Error> {
    match &cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Implication(args) => cmd_implication(args),
        Command::VerifyLemmas(args) => cmd_verify_lemmas(args),
        Command::Lp(args) => cmd_lp(args),
        Command::Chsh(args) => cmd_chsh(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    // Worker count for parallel scans: flag, then NSBOX_JOBS, then all
    // cores. Aggregation in the core is order-canonical, so this cannot
    // change a report byte (and the count is deliberately not echoed).
    let jobs = cli.jobs.or_else(|| {
        std::env::var("NSBOX_JOBS")
            .ok()
            .and_then(|text| text.parse().ok())
    });
    let outcome = match jobs {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Domain(format!("cannot build a {threads}-thread pool: {e}")))
            .and_then(|pool| pool.install(|| run(&cli))),
        None => run(&cli),
    };

    let report = match outcome {
        Ok(report) => report,
        Err(error) => {
            eprintln!("error: {error}");
            return ExitCode::from(2);
        }
    };

    let text = report.render(cli.format.unwrap_or(Format::Json));
    if let Some(path) = &cli.out {
        if let Err(error) = fs::write(path, &text) {
            eprintln!("error: cannot write report to `{}`: {error}", path.display());
            return ExitCode::from(2);
        }
    } else {
        print!("{text}");
    }
    if report.failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}
