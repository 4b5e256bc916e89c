use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polya_urn::formulas::{moment_report, w_asymptote, MomentReport};
use polya_urn::model::format_rational;
use polya_urn::sim::{log_checkpoints, simulate, simulate_checkpointed};
use polya_urn::verify::{run_suite, to_json_lines, CheckKind, Scale};
use polya_urn::{RandomStream, Regime, UrnModel};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "polya", version, about = "Simulate balanced Pólya urns and check their limit laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write it as CSV (n,X,Y) or JSON.
    Simulate(SimulateArgs),
    /// Evaluate the closed-form quantities at horizon n.
    Moments(MomentsArgs),
    /// Print the regime and the growth constant of w_n.
    Regime(ModelArgs),
    /// Run statistical checks and write JSON lines.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Replacement matrix, row-major: a,b,c,d
    #[arg(long, value_name = "A,B,C,D")]
    model: String,
    /// Initial composition: alpha,beta
    #[arg(long, value_name = "ALPHA,BETA")]
    init: String,
}

#[derive(Args)]
struct SeedArg {
    /// Master seed [default: 42, or $POLYA_SEED]
    #[arg(long, env = "POLYA_SEED")]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> u64 {
        let (seed, origin) = match self.seed {
            Some(s) => (s, "given"),
            None => (DEFAULT_SEED, "default"),
        };
        eprintln!("seed {seed} ({origin})");
        seed
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of draws
    #[arg(short = 'n', long)]
    horizon: u64,
    #[command(flatten)]
    seed: SeedArg,
    /// Random stream index under the master seed
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Keep only about this many log-spaced states per decade
    #[arg(long, value_name = "K")]
    per_decade: Option<u32>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file [default: stdout]
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(short = 'n', long)]
    horizon: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run every check
    #[arg(long)]
    all: bool,
    /// Checks to run (repeatable)
    #[arg(long = "check", value_name = "NAME", value_parser = parse_check)]
    checks: Vec<CheckKind>,
    /// Smaller horizons and replicate counts
    #[arg(long)]
    quick: bool,
    #[command(flatten)]
    seed: SeedArg,
    /// JSON-lines output file [default: stdout]
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_check(s: &str) -> Result<CheckKind, String> {
    s.parse::<CheckKind>().map_err(|e| {
        let names: Vec<_> = CheckKind::ALL.iter().map(|k| k.name()).collect();
        format!("{e}; expected one of {}", names.join(", "))
    })
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Usage(String),
    Checks(usize),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("I/O error: {e}"))
    }
}

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn model_of(args: &ModelArgs) -> Result<UrnModel, Failure> {
    UrnModel::parse(&args.model, &args.init).map_err(domain)
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let model = model_of(&args.model)?;
    let seed = args.seed.resolve();
    let mut rng = RandomStream::new(seed, args.stream);
    let traj = match args.per_decade {
        Some(k) => {
            let cps = log_checkpoints(args.horizon, k);
            simulate_checkpointed(&model, args.horizon, &mut rng, &cps)
        }
        None => simulate(&model, args.horizon, &mut rng),
    }
    .map_err(domain)?;
    let mut out = sink(&args.output)?;
    match args.format {
        Format::Csv => traj.write_csv(&mut out)?,
        Format::Json => {
            let states: Vec<[u64; 3]> = traj.states().iter().map(|s| [s.n, s.x, s.y]).collect();
            let doc = serde_json::json!({
                "model": model.label(),
                "seed": seed,
                "stream": args.stream,
                "horizon": args.horizon,
                "states": states,
            });
            writeln!(out, "{doc}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn moments_csv(r: &MomentReport) -> String {
    let mut rows = vec![
        ("sigma_n".to_string(), r.sigma_n),
        ("w_n".to_string(), r.w_n),
        ("mean_x".to_string(), r.mean_un[0]),
        ("mean_y".to_string(), r.mean_un[1]),
        ("lambda".to_string(), r.lambda),
    ];
    if let Some(g) = r.gamma_cov {
        rows.push(("gamma".into(), g[0][0]));
    }
    for (k, v) in [("EW", r.ew), ("EW2", r.ew2), ("EM2", r.em2), ("regime_asymptote", r.regime_asymptote)] {
        if let Some(v) = v {
            rows.push((k.into(), v));
        }
    }
    let mut s = String::from("quantity,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

fn cmd_moments(args: MomentsArgs) -> Result<(), Failure> {
    let model = model_of(&args.model)?;
    let report = moment_report(&model, args.horizon).map_err(domain)?;
    let mut out = sink(&args.output)?;
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serialises"))?,
        Format::Csv => write!(out, "{}", moments_csv(&report))?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_regime(args: ModelArgs) -> Result<(), Failure> {
    let model = model_of(&args)?;
    println!("{} (σ = {})", model.regime(), format_rational(model.sigma()));
    let growth = match model.regime() {
        Regime::Small => "w_n / n^(1-2σ)",
        Regime::Critical => "w_n / ln n",
        Regime::Large | Regime::Traditional => "w_n",
    };
    match w_asymptote(&model) {
        Ok(v) => println!("{growth} -> {v}"),
        Err(e) => println!("{growth}: {e}"),
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let kinds: Vec<CheckKind> = if args.all {
        CheckKind::ALL.to_vec()
    } else {
        args.checks.clone()
    };
    if kinds.is_empty() {
        return Err(Failure::Usage("select checks with --all or --check NAME".into()));
    }
    let seed = args.seed.resolve();
    let scale = if args.quick { Scale::QUICK } else { Scale::FULL };
    let reports = run_suite(&kinds, scale, seed).map_err(domain)?;
    let mut out = sink(&args.output)?;
    out.write_all(to_json_lines(&reports).as_bytes())?;
    out.flush()?;
    for r in &reports {
        eprintln!("{r}");
    }
    let failed = reports.iter().filter(|r| r.failed()).count();
    let gating = reports.iter().filter(|r| r.is_gating()).count();
    eprintln!("{} of {gating} gating checks passed", gating - failed);
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Moments(a) => cmd_moments(a),
        Command::Regime(a) => cmd_regime(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(n)) => {
            eprintln!("{n} gating check(s) failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("hint: run `polya --help` for usage");
            ExitCode::from(2)
        }
    }
}
