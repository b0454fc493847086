use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lagboard_core::orchestrator::{
    generate_schedule, load_run, pair_seed, rating_rows, ExperimentConfig, RelayOptions,
};
use lagboard_core::ratings::{write_ratings_csv, GroupBy};
use lagboard_core::session::{Mode, Platform, TemplateSet};
use lagboard_core::sim::{BotScript, RatingPolicy, SlotPolicy};
use lagboard_core::PairId;
use lagboard_cli::analyze::{analyze, read_records, AnalyzeOptions, Stat};
use lagboard_cli::netbot::run_bot;
use lagboard_cli::server::{ServeOptions, Server};
use lagboard_cli::simulate::{simulate, write_report, SimulateOptions};

#[derive(Parser)]
#[command(name = "lagboard", version, about = "Latency-controlled collaborative whiteboard testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the relay service.
    Serve(ServeArgs),
    /// Print the condition schedule for a pair.
    Schedule(ScheduleArgs),
    /// Write the ratings CSV of an exported run.
    Export(ExportArgs),
    /// Grouped statistics over a ratings CSV.
    Analyze(AnalyzeArgs),
    /// Play bots against an in-process relay.
    Simulate(SimulateArgs),
    /// Connect a scripted bot to a running relay.
    Bot(BotArgs),
}

#[derive(Args)]
struct InjectorArgs {
    /// Run every condition at this end-to-end latency.
    #[arg(long)]
    target_latency_ms: Option<u64>,
    /// Inherent latency for every platform.
    #[arg(long, conflicts_with = "calibrate")]
    inherent_latency_ms: Option<u64>,
    /// Estimate inherent latency from clock probes before the first condition.
    #[arg(long)]
    calibrate: bool,
    #[arg(long)]
    tick_rate: Option<u32>,
}

impl InjectorArgs {
    fn apply(&self, config: &mut ExperimentConfig) -> RelayOptions {
        if let Some(t) = self.target_latency_ms {
            config.latency_levels = vec![t];
        }
        if let Some(r) = self.tick_rate {
            config.tick_rate = r;
        }
        let mut options = RelayOptions {
            calibrate: self.calibrate,
            inherent_override: None,
        };
        if let Some(i) = self.inherent_latency_ms {
            for v in config.inherent_latency_ms.values_mut() {
                *v = i;
            }
            options.inherent_override = Some(Duration::from_millis(i));
        }
        options
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs")]
    log_dir: PathBuf,
    /// Template set JSON; defaults to the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Advance relay time in whole ticks (test mode).
    #[arg(long)]
    virtual_clock: bool,
    #[command(flatten)]
    injector: InjectorArgs,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Derive the pair's own seed from `--seed`, as the service does.
    #[arg(long)]
    pair: Option<String>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    ratings: PathBuf,
    /// Comma-separated subset of platform, mode, latency, dimension.
    #[arg(long, default_value = "platform,mode,latency")]
    group_by: GroupBy,
    #[arg(long, default_value = "mos")]
    stat: Stat,
    /// Lowest score counted as a hit for `h`.
    #[arg(long, default_value_t = 3)]
    threshold: u8,
    /// Reference proportion for `h`.
    #[arg(long, default_value_t = 0.5)]
    baseline: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "sc")]
    mode: Mode,
    #[arg(long, default_value = "vr")]
    platform: Platform,
    #[arg(long, alias = "target-latency-ms", default_value_t = 600)]
    latency_ms: u64,
    #[arg(long, alias = "inherent-latency-ms", default_value_t = 80)]
    inherent_ms: u64,
    /// Total number of slots; the built-in templates when omitted.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long, default_value_t = 500)]
    stroke_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Jump between events instead of sleeping.
    #[arg(long)]
    virtual_clock: bool,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for ratings, log and run record.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Play the whole randomized schedule.
    #[arg(long)]
    full: bool,
    #[arg(long, requires = "full")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BotArgs {
    #[arg(long, default_value = "ws://127.0.0.1:8080")]
    url: String,
    #[arg(long)]
    pair: String,
    #[arg(long)]
    id: String,
    #[arg(long, default_value_t = 500)]
    stroke_ms: u64,
    /// in-order, reverse, random or adversarial.
    #[arg(long, default_value = "in-order")]
    policy: String,
    /// Fixed score for every rating; random when omitted.
    #[arg(long)]
    score: Option<u8>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    templates: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_templates(path: Option<&Path>) -> Result<TemplateSet> {
    match path {
        Some(p) => TemplateSet::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(TemplateSet::default_set()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    let relay = args.injector.apply(&mut config);
    config.validate()?;
    let opts = ServeOptions {
        addr: SocketAddr::new(args.host, args.port),
        config,
        seed: args.seed,
        log_dir: args.log_dir,
        templates: load_templates(args.templates.as_deref())?,
        relay,
        virtual_clock: args.virtual_clock,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let server = Server::bind(opts).await?;
        println!("listening on {}", server.local_addr()?);
        std::io::stdout().flush()?;
        server.run().await
    })
}

fn schedule(args: ScheduleArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let (pair, seed) = match args.pair {
        Some(p) => {
            let pair = PairId::new(p);
            let seed = pair_seed(args.seed, &pair);
            (pair, seed)
        }
        None => (PairId::new("schedule"), args.seed),
    };
    let s = generate_schedule(pair, &config, seed)?;
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&s)?)?;
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let (run, _) = load_run(&args.run_dir).with_context(|| format!("reading {}", args.run_dir.display()))?;
    let rows = rating_rows(&run);
    write_ratings_csv(&rows, create(&args.out)?)?;
    eprintln!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

fn run_analyze(args: AnalyzeArgs) -> Result<()> {
    let file = File::open(&args.ratings).with_context(|| format!("opening {}", args.ratings.display()))?;
    let records = read_records(BufReader::new(file))?;
    let mut opts = AnalyzeOptions::new(args.group_by, args.stat);
    opts.threshold = args.threshold;
    opts.baseline = args.baseline;
    let n = match &args.out {
        Some(path) => analyze(&records, opts, create(path)?)?,
        None => analyze(&records, opts, std::io::stdout().lock())?,
    };
    eprintln!("{n} rows from {} ratings", records.len());
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let full = if args.full {
        Some(load_config(args.config.as_deref())?)
    } else {
        None
    };
    let out_dir = match (&args.out, &args.report) {
        (Some(o), _) => o.clone(),
        (None, Some(r)) => r.with_extension("run"),
        (None, None) => PathBuf::from("sim-run"),
    };
    let opts = SimulateOptions {
        mode: args.mode,
        platform: args.platform,
        latency_ms: args.latency_ms,
        inherent_ms: args.inherent_ms,
        slots: args.slots,
        stroke_ms: args.stroke_ms,
        seed: args.seed,
        virtual_clock: args.virtual_clock,
        out_dir,
        full,
    };
    let report = simulate(&opts)?;
    match &args.report {
        Some(path) => write_report(&report, path)?,
        None => writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&report)?)?,
    }
    let d = &report.delay;
    eprintln!(
        "{} releases, delay {:.3}..{:.3} ms (hold {:.3}), {} violations, {} inversions",
        d.count, d.min_ms, d.max_ms, d.hold_ms, d.violations, d.fifo_inversions
    );
    eprintln!("log: {}", report.log_path.display());
    eprintln!("ratings: {}", report.ratings_path.display());
    Ok(())
}

fn bot(args: BotArgs) -> Result<()> {
    let policy = match args.policy.as_str() {
        "in-order" => SlotPolicy::InOrder,
        "reverse" => SlotPolicy::Reverse,
        "random" => SlotPolicy::Random(args.seed),
        "adversarial" => SlotPolicy::AdversarialSameSlot,
        other => bail!("unknown policy `{other}`"),
    };
    let mut script = BotScript::new(args.id.as_str())
        .with_stroke_ms(args.stroke_ms)
        .with_policy(policy);
    script.rating_policy = match args.score {
        Some(s) => RatingPolicy::Fixed(s),
        None => RatingPolicy::Random(args.seed),
    };
    let templates = load_templates(args.templates.as_deref())?;
    let rt = tokio::runtime::Runtime::new()?;
    let bot = rt.block_on(run_bot(&args.url, PairId::new(args.pair), script, templates))?;
    let accepted = bot.verdicts().iter().filter(|v| v.is_accepted()).count();
    eprintln!("{}: session complete, {accepted}/{} actions accepted", args.id, bot.verdicts().len());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve(a) => serve(a),
        Command::Schedule(a) => schedule(a),
        Command::Export(a) => export(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Bot(a) => bot(a),
    }
}
