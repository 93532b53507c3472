use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use goalcov::instrument::WarningKind;
use goalcov::minijvm::parse_suite;
use goalcov::minimize::{parse_traces, traces_to_json};
use goalcov::{
    assign_uids, generate_report, greedy_minimize, instrument_class, minimize_against_existing, parse_class,
    parse_goals, run_suite, uncovered, CoverageReport, HitCountDb, DB_ENV_VAR, DEFAULT_DB_FILE,
};

#[derive(Parser)]
#[command(name = "goalcov", version, about = "Goal-based coverage measurement for JVM class files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DbArg {
    /// Hit-count database
    #[arg(long, env = DB_ENV_VAR, default_value = DEFAULT_DB_FILE)]
    db: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Register goals in the database and write instrumented class files
    Instrument {
        /// Coverage goals JSON
        #[arg(long)]
        goals: PathBuf,
        /// Class files to instrument
        #[arg(long = "classes", required = true, num_args = 1..)]
        classes: Vec<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        db: DbArg,
    },
    /// Run a test suite on (instrumented) classes and merge hits into the database
    Run {
        #[arg(long = "classes", required = true, num_args = 1..)]
        classes: Vec<PathBuf>,
        /// Test suite JSON
        #[arg(long)]
        suite: PathBuf,
        #[command(flatten)]
        db: DbArg,
        /// Count each goal at most once
        #[arg(long)]
        first_hit: bool,
    },
    /// Hit count of every registered goal
    Report {
        #[command(flatten)]
        db: DbArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Names of goals never hit
    Uncovered {
        #[command(flatten)]
        db: DbArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick a small set of traces covering all their goals
    Minimize {
        /// Traces JSON: [{"id": ..., "goals": [...]}]
        #[arg(long)]
        traces: PathBuf,
        /// Report whose covered goals need no new trace
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

fn fail(kind: &'static str, message: impl Into<String>) -> Failure {
    Failure { kind, message: message.into() }
}

impl From<goalcov::Error> for Failure {
    fn from(e: goalcov::Error) -> Self {
        fail(e.kind(), e.to_string())
    }
}

fn core<E: Into<goalcov::Error>>(e: E) -> Failure {
    Failure::from(e.into())
}

enum Done {
    Ok,
    TestsFailed,
}

fn read(path: &Path, what: &str) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => fail("not_found", format!("{what} not found")),
        _ => fail("io", format!("cannot read {what} {}: {e}", path.display())),
    })
}

fn read_text(path: &Path, what: &str) -> Result<String, Failure> {
    String::from_utf8(read(path, what)?).map_err(|_| fail("io", format!("{what} {} is not UTF-8", path.display())))
}

fn write(path: &Path, data: &[u8]) -> Result<(), Failure> {
    fs::write(path, data).map_err(|e| fail("io", format!("cannot write {}: {e}", path.display())))
}

/// Prints `doc` or writes it to `out`.
fn emit(doc: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => {
            write(p, format!("{doc}\n").as_bytes())?;
            println!("{}", json!({ "written": p }));
        }
        None => println!("{doc}"),
    }
    Ok(())
}

fn load_db(path: &Path) -> Result<HitCountDb, Failure> {
    HitCountDb::load(path).map_err(|e| if e.is_not_found() { fail("db_io", "database not found") } else { core(e) })
}

fn instrument(goals_path: &Path, classes: &[PathBuf], out: &Path, db_path: &Path) -> Result<Done, Failure> {
    let goals = parse_goals(&read_text(goals_path, "goals file")?).map_err(core)?;
    let inputs = classes
        .iter()
        .map(|p| Ok((p, read(p, "class file")?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let mut names = HashSet::new();
    for (p, _) in &inputs {
        let name = p.file_name().ok_or_else(|| fail("io", format!("{} has no file name", p.display())))?;
        if !names.insert(name.to_owned()) {
            return Err(fail("io", format!("two inputs named {}", name.to_string_lossy())));
        }
    }
    let mut db = HitCountDb::load_or_default(db_path).map_err(core)?;
    let uids = assign_uids(&goals, &mut db);

    // Everything is computed before the first write.
    let mut results = Vec::new();
    let mut touched_classes = HashSet::new();
    for (path, bytes) in &inputs {
        let done = instrument_class(bytes, &goals, &uids).map_err(core)?;
        touched_classes.insert(done.class_name.clone());
        results.push((path, done));
    }
    let mut warnings: Vec<Value> = Vec::new();
    for (path, done) in &results {
        for w in done.plan.warnings.iter().filter(|w| w.kind != WarningKind::OtherClass) {
            log::warn!("{}: {}", path.display(), w.message);
            warnings.push(json!({ "goal": w.goal, "message": w.message }));
        }
    }
    for g in &goals {
        let class = g.signature().map_err(core)?.class_name;
        if !touched_classes.contains(&class) {
            let message = format!("class {class} is not among the inputs");
            log::warn!("goal {}: {message}", g.name);
            warnings.push(json!({ "goal": g.name, "message": message }));
        }
    }

    fs::create_dir_all(out).map_err(|e| fail("io", format!("cannot create {}: {e}", out.display())))?;
    let mut summary = Vec::new();
    for (path, done) in &results {
        let target = out.join(path.file_name().expect("checked above"));
        write(&target, &done.bytes)?;
        summary.push(json!({
            "class": done.class_name,
            "input": path,
            "output": target,
            "sites": done.uids.len(),
            "uids": done.uids,
        }));
    }
    db.save(db_path).map_err(core)?;
    let sites: usize = results.iter().map(|(_, d)| d.uids.len()).sum();
    let doc = json!({
        "db": db_path,
        "goals": goals.len(),
        "classes": summary,
        "sites": sites,
        "warnings": warnings,
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("JSON values serialize"));
    Ok(Done::Ok)
}

fn run(classes: &[PathBuf], suite: &Path, db_path: &Path, first_hit: bool) -> Result<Done, Failure> {
    let tests = parse_suite(&read_text(suite, "suite file")?).map_err(core)?;
    let models = classes
        .iter()
        .map(|p| parse_class(&read(p, "class file")?).map_err(core))
        .collect::<Result<Vec<_>, Failure>>()?;
    // A corrupt database is reported before any test runs.
    HitCountDb::load_or_default(db_path).map_err(core)?;
    let report = run_suite(models, &tests, db_path, first_hit).map_err(core)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(if report.all_passed() { Done::Ok } else { Done::TestsFailed })
}

fn minimize(traces: &Path, report: Option<&Path>, out: Option<&Path>) -> Result<Done, Failure> {
    let traces =
        parse_traces(&read_text(traces, "traces file")?).map_err(|e| fail("traces", format!("malformed traces: {e}")))?;
    let kept = match report {
        Some(p) => {
            let report = CoverageReport::from_json(&read_text(p, "report file")?)
                .map_err(|e| fail("report", format!("malformed report: {e}")))?;
            let covered: BTreeSet<String> =
                report.entries.into_iter().filter(|e| e.hit_count > 0).map(|e| e.name).collect();
            minimize_against_existing(&traces, &covered)
        }
        None => greedy_minimize(&traces),
    };
    log::info!("kept {} of {} traces", kept.len(), traces.len());
    emit(&traces_to_json(&kept), out)?;
    Ok(Done::Ok)
}

fn dispatch(command: Command) -> Result<Done, Failure> {
    match command {
        Command::Instrument { goals, classes, out, db } => instrument(&goals, &classes, &out, &db.db),
        Command::Run { classes, suite, db, first_hit } => run(&classes, &suite, &db.db, first_hit),
        Command::Report { db, out } => {
            let report = generate_report(&load_db(&db.db)?);
            emit(&report.to_json(), out.as_deref())?;
            Ok(Done::Ok)
        }
        Command::Uncovered { db, out } => {
            let names = uncovered(&generate_report(&load_db(&db.db)?));
            emit(&serde_json::to_string_pretty(&names).expect("names serialize"), out.as_deref())?;
            Ok(Done::Ok)
        }
        Command::Minimize { traces, report, out } => minimize(&traces, report.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::TestsFailed) => ExitCode::from(1),
        Err(f) => {
            log::error!("{}", f.message);
            println!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
            ExitCode::from(2)
        }
    }
}
