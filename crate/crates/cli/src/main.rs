//! `doe`: campaign lifecycle, exports, batch simulation and the HTTP service.
//!
//! Exit codes: 0 success, 1 domain error (one `code: message` line on
//! stderr), 2 usage error.

use std::fmt::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use doe_core::campaign::oracle_seed;
use doe_core::oracle::DEFAULT_NOISE_SD;
use doe_core::report::{compare, report_single};
use doe_core::{
    export_csv, init_campaign, AlConfig, BeadGeometry, CampaignState, DesignPoint, DesignSpace,
    Error, ExportKind, FileLock, InitOptions, OracleSpec, Status, Strategy, Suggestion,
};

const DATA_DIR_ENV: &str = "DOE_DATA_DIR";

#[derive(Parser)]
#[command(name = "doe", version, about = "Taguchi vs GPR active-learning experiment campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a campaign file.
    Init(InitArgs),
    /// Produce the next suggestion (synthetic oracles run it immediately).
    Suggest(SuggestArgs),
    /// Record a measured geometry for a suggested run or a test point.
    Record(RecordArgs),
    /// Print test-set RMSE and R².
    Evaluate(EvaluateArgs),
    /// Write one of the CSV exports.
    Export(ExportArgs),
    /// Paired Taguchi and GPR-AL campaigns over a range of seeds.
    Simulate(SimulateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct AlFlags {
    #[arg(long, default_value_t = 5)]
    init_samples: usize,
    #[arg(long, default_value_t = 15)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1)]
    reoptimize_every: usize,
}

impl AlFlags {
    fn config(&self) -> AlConfig {
        AlConfig {
            init_samples: self.init_samples,
            max_iterations: self.max_iterations,
            reoptimize_every: self.reoptimize_every,
            ..AlConfig::default()
        }
    }
}

#[derive(Args)]
struct InitArgs {
    /// taguchi or gpr-al
    #[arg(long)]
    strategy: String,
    /// manual or synthetic:<surface-id>
    #[arg(long, default_value = "synthetic:waam-like-v1")]
    oracle: String,
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    noise_sd: f64,
    /// Measure synthetic test points with noise too.
    #[arg(long)]
    noisy_test: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "waam-default", conflicts_with = "space_file")]
    space_preset: String,
    /// JSON design space ({"factors": [{"name", "unit", "levels"}]}).
    #[arg(long)]
    space_file: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value_t = doe_core::campaign::DEFAULT_TEST_SIZE)]
    test_size: usize,
    #[command(flatten)]
    al: AlFlags,
    /// Output file; defaults to `<id>.json` in the data directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SuggestArgs {
    campaign: PathBuf,
    /// Keep going until the campaign completes (synthetic oracles only).
    #[arg(long)]
    until_complete: bool,
}

#[derive(Args)]
struct RecordArgs {
    campaign: PathBuf,
    /// Level indices, e.g. 0,3,2
    #[arg(long)]
    point: String,
    #[arg(long, allow_negative_numbers = true)]
    d: f64,
    #[arg(long, allow_negative_numbers = true)]
    w: f64,
    #[arg(long, allow_negative_numbers = true)]
    h: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    campaign: PathBuf,
    /// Score on every grid point not used for training instead of the test set.
    #[arg(long)]
    remaining: bool,
}

#[derive(Args)]
struct ExportArgs {
    campaign: PathBuf,
    /// parity, learning_curve, error_distribution or mean_of_means
    #[arg(long)]
    kind: String,
    /// Second campaign for a side-by-side report.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 30)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value = "synthetic:waam-like-v1")]
    oracle: String,
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    noise_sd: f64,
    #[command(flatten)]
    al: AlFlags,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Persist campaigns here (defaults to $DOE_DATA_DIR when set).
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(Error::Io(e))
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Init(a) => cmd_init(a),
        Command::Suggest(a) => cmd_suggest(a),
        Command::Record(a) => cmd_record(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Export(a) => cmd_export(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            let msg = e.to_string();
            let prefix = format!("{}: ", e.code());
            eprintln!("{prefix}{}", one_line(msg.strip_prefix(&prefix).unwrap_or(&msg)));
            ExitCode::from(1)
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Relative paths resolve against `$DOE_DATA_DIR` when it is set.
fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> doe_core::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    doe_core::campaign::write_atomic(path, bytes)
}

fn describe(space: &DesignSpace, p: &DesignPoint) -> String {
    let mut out = p.to_string();
    if let Ok(real) = space.to_real(p) {
        for (f, v) in space.factors.iter().zip(real.0) {
            let _ = write!(out, "  {}={} {}", f.name, v, f.unit);
        }
    }
    out
}

fn cmd_init(a: InitArgs) -> CliResult {
    let strategy: Strategy = a.strategy.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let space = match &a.space_file {
        Some(p) => {
            let space: DesignSpace = serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(Error::from)?;
            space.validate()?;
            space
        }
        None => DesignSpace::preset(&a.space_preset)?,
    };
    let mut oracle = OracleSpec::from_flag(&a.oracle, a.noise_sd, oracle_seed(a.seed))?;
    if let OracleSpec::Synthetic(s) = &mut oracle {
        s.noisy_test = a.noisy_test;
    }
    let options = InitOptions {
        id: a.id.clone(),
        test_size: a.test_size,
    };
    let state = init_campaign(space, strategy, oracle, a.al.config(), a.seed, options)?;
    let out = resolve(&a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.json", state.id))));
    let _lock = FileLock::try_acquire(&out)?;
    if out.exists() && !a.force {
        return Err(Failure::Usage(format!(
            "{} already exists (pass --force to overwrite)",
            out.display()
        )));
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    state.save(&out)?;

    let mut text = String::new();
    let _ = writeln!(text, "created {} ({}, seed {})", out.display(), state.strategy, state.seed);
    let _ = writeln!(text, "test set ({} points):", state.test_set.len());
    for c in &state.test_set {
        let _ = writeln!(text, "  {}", describe(&state.space, &c.point));
    }
    let _ = writeln!(text, "planned runs ({}):", state.plan.len());
    for p in &state.plan {
        let _ = writeln!(text, "  {}", describe(&state.space, p));
    }
    if let Some(first) = state.plan.first() {
        let _ = writeln!(text, "first suggestion: {first}");
    }
    print!("{text}");
    Ok(())
}

fn with_campaign<T>(
    path: &Path,
    f: impl FnOnce(&mut CampaignState) -> doe_core::Result<T>,
) -> Result<T, Failure> {
    let path = resolve(path);
    let _lock = FileLock::try_acquire(&path)?;
    let mut state = CampaignState::load(&path)?;
    let before = state.clone();
    let out = f(&mut state)?;
    if state != before {
        state.save(&path)?;
    }
    Ok(out)
}

fn print_suggestion(state: &CampaignState, s: &Suggestion) {
    match s {
        Suggestion::Complete => println!("complete"),
        Suggestion::Point(p) => {
            println!("suggestion: {}", describe(&state.space, p));
            if state.status == Status::AwaitingMeasurement {
                println!("awaiting measurement");
            } else if let Some(r) = state.runs.iter().rev().find(|r| &r.point == p) {
                println!(
                    "measured: d={} w={} h={} y={}",
                    r.geometry.depth_d, r.geometry.width_w, r.geometry.height_h, r.y
                );
            }
        }
    }
}

fn cmd_suggest(a: SuggestArgs) -> CliResult {
    with_campaign(&a.campaign, |state| {
        if a.until_complete {
            state.run_to_completion()?;
            println!("complete after {} runs", state.runs.len());
            return Ok(());
        }
        let s = state.suggest()?;
        print_suggestion(state, &s);
        Ok(())
    })
}

fn cmd_record(a: RecordArgs) -> CliResult {
    let point: DesignPoint = a.point.parse()?;
    with_campaign(&a.campaign, |state| {
        let g = BeadGeometry::new(a.d, a.w, a.h)?;
        state.record_result(&point, g)?;
        let y = doe_core::composite_response(&g)?.value();
        println!("recorded {point}: y={y} ({} runs, {})", state.runs.len(), state.status);
        Ok(())
    })
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let state = CampaignState::load(&resolve(&a.campaign))?;
    let m = if a.remaining {
        state.evaluate_remaining()?
    } else {
        state.evaluate()?
    };
    println!("rmse: {}", m.rmse);
    println!("r2: {}", m.r2);
    Ok(())
}

fn cmd_export(a: ExportArgs) -> CliResult {
    let kind: ExportKind = a.kind.parse()?;
    let first = CampaignState::load(&resolve(&a.campaign))?;
    let report = match &a.compare {
        Some(other) => compare(&first, &CampaignState::load(&resolve(other))?)?,
        None => report_single(&first)?,
    };
    let csv = export_csv(&report, kind)?;
    match a.out {
        Some(out) => write_atomic(&resolve(&out), csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn finished(strategy: Strategy, seed: u64, a: &SimulateArgs) -> doe_core::Result<CampaignState> {
    let oracle = OracleSpec::from_flag(&a.oracle, a.noise_sd, oracle_seed(seed))?;
    let mut s = init_campaign(
        DesignSpace::waam_default(),
        strategy,
        oracle,
        a.al.config(),
        seed,
        InitOptions::default(),
    )?;
    s.run_to_completion()?;
    Ok(s)
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    if a.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    if OracleSpec::from_flag(&a.oracle, a.noise_sd, 0)?.is_manual() {
        return Err(Error::Unsupported("simulate needs a synthetic oracle".into()).into());
    }
    let out_dir = resolve(&a.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let mut rows = csv::Writer::from_writer(Vec::new());
    rows.write_record([
        "seed",
        "taguchi_rmse",
        "taguchi_r2",
        "gpr_rmse",
        "gpr_r2",
        "crossover_size",
        "gpr_wins",
    ])
    .map_err(Error::from)?;
    let mut wins = 0u64;
    let mut crossovers = Vec::new();
    for seed in a.first_seed..a.first_seed + a.seeds {
        let t = finished(Strategy::Taguchi, seed, &a)?;
        let g = finished(Strategy::GprAl, seed, &a)?;
        let report = compare(&t, &g)?;
        let dir = out_dir.join(format!("seed-{seed}"));
        for kind in ExportKind::ALL {
            write_atomic(&dir.join(format!("{kind}.csv")), export_csv(&report, kind)?.as_bytes())?;
        }
        let tm = report.section(Strategy::Taguchi).map(|s| s.metrics);
        let gm = report.section(Strategy::GprAl).map(|s| s.metrics);
        let (Some(tm), Some(gm)) = (tm, gm) else {
            unreachable!("compare returns both sections")
        };
        let win = gm.rmse < tm.rmse;
        wins += u64::from(win);
        crossovers.push(report.crossover_size);
        rows.write_record([
            seed.to_string(),
            tm.rmse.to_string(),
            tm.r2.to_string(),
            gm.rmse.to_string(),
            gm.r2.to_string(),
            report.crossover_size.map(|c| c.to_string()).unwrap_or_default(),
            win.to_string(),
        ])
        .map_err(Error::from)?;
    }
    let bytes = rows.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&out_dir.join("seeds.csv"), &bytes)?;

    let win_rate = wins as f64 / a.seeds as f64;
    let median = median_crossover(&crossovers);
    let median_txt = median.map(|m| m.to_string()).unwrap_or_default();
    let summary = format!(
        "seeds,gpr_wins,win_rate,median_crossover_size\n{},{},{},{}\n",
        a.seeds, wins, win_rate, median_txt
    );
    write_atomic(&out_dir.join("summary.csv"), summary.as_bytes())?;
    println!(
        "seeds: {}  gpr wins: {}  win rate: {}  median crossover: {}",
        a.seeds,
        wins,
        win_rate,
        if median_txt.is_empty() { "none" } else { &median_txt }
    );
    Ok(())
}

/// Median with missing crossovers ordered last; `None` if the median itself is missing.
fn median_crossover(values: &[Option<usize>]) -> Option<f64> {
    let mut v: Vec<Option<usize>> = values.to_vec();
    v.sort_by_key(|c| c.unwrap_or(usize::MAX));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2].map(|c| c as f64)
    } else {
        Some((v[n / 2 - 1]? as f64 + v[n / 2]? as f64) / 2.0)
    }
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let state = match &a.data_dir {
        Some(dir) => doe_service::AppState::with_data_dir(dir)?,
        None => doe_service::AppState::new(),
    };
    let addr = SocketAddr::new(a.bind, a.port);
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(doe_service::serve(addr, state))?;
    Ok(())
}
