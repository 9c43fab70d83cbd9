//! Command-line front end: load a scenario, run the simulation, and write
//! metrics/trades/final-state files plus optional trace logs.
//!
//! `run` executes one mode, `compare` runs both trading modes on the same
//! scenario and seed side by side, `validate` checks a scenario file and
//! reports every violation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use invsim_core::engine::{run_simulation, RunArtifacts, RunConfig, TraceFlags};
use invsim_core::market::{Scenario, ScenarioError, TradingMode};
use invsim_core::metrics::MetricsAccumulator;

/// Scenarios shipped with the binary, addressable by bare name.
const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    (
        "paper-default",
        include_str!("../../../scenarios/paper-default.toml"),
    ),
    (
        "abundance",
        include_str!("../../../scenarios/abundance.toml"),
    ),
];

#[derive(Parser)]
#[command(
    name = "invsim",
    version,
    about = "Retail chain inventory trading simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its output files.
    Run(RunArgs),
    /// Load and validate a scenario, reporting every violation.
    Validate {
        /// Scenario file path or bundled scenario name.
        #[arg(long)]
        scenario: String,
    },
    /// Run both trading modes on the same scenario and seed.
    Compare(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file path or bundled scenario name
    /// (paper-default, abundance).
    #[arg(long)]
    scenario: String,

    /// Trading mode override: external-only or internal-external.
    #[arg(long, value_parser = TradingMode::from_str)]
    mode: Option<TradingMode>,

    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Tick count override.
    #[arg(long)]
    ticks: Option<u64>,

    /// Auction round limit override.
    #[arg(long)]
    auction_max_rounds: Option<u32>,

    /// Per-tick virtual sales cap override.
    #[arg(long)]
    sales_max: Option<u32>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Log every message dispatch to trace_messages.csv.
    #[arg(long)]
    trace_messages: bool,

    /// Log intention stack events to trace_intentions.csv.
    #[arg(long)]
    trace_intentions: bool,

    /// Log auction events to trace_auctions.csv.
    #[arg(long)]
    trace_auctions: bool,
}

impl RunArgs {
    fn config(&self, scenario: &Scenario) -> RunConfig {
        let mut config = RunConfig::from_scenario(scenario);
        if let Some(mode) = self.mode {
            config.mode = mode;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(ticks) = self.ticks {
            config.max_ticks = ticks;
        }
        if let Some(rounds) = self.auction_max_rounds {
            config.auction_max_rounds = rounds;
        }
        if let Some(sales_max) = self.sales_max {
            config.sales_max_per_tick = sales_max;
        }
        config.trace = TraceFlags {
            messages: self.trace_messages,
            intentions: self.trace_intentions,
            auctions: self.trace_auctions,
        };
        config
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {:#}", err);
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Compare(args) => cmd_compare(&args),
    }
}

fn load_scenario(reference: &str) -> Result<Scenario> {
    if Path::new(reference).exists() {
        return report_load(Scenario::load(reference));
    }
    if let Some((_, text)) = BUNDLED_SCENARIOS
        .iter()
        .find(|(name, _)| *name == reference)
    {
        return report_load(Scenario::from_toml_str(text));
    }
    bail!(
        "scenario {:?} is neither a file nor a bundled scenario (available: {})",
        reference,
        BUNDLED_SCENARIOS
            .iter()
            .map(|(n, _)| *n)
            .collect::<Vec<_>>()
            .join(", ")
    );
}

fn report_load(result: std::result::Result<Scenario, ScenarioError>) -> Result<Scenario> {
    match result {
        Ok(scenario) => Ok(scenario),
        Err(err) => {
            for violation in err.violations() {
                eprintln!("violation: {}", violation);
            }
            Err(err.into())
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let scenario = load_scenario(&args.scenario)?;
    let config = args.config(&scenario);
    let artifacts = run_simulation(&scenario, config)?;
    write_run_outputs(&args.out, &scenario, config, &artifacts)?;
    println!("{}", summary_line(config, &artifacts));
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(reference: &str) -> Result<ExitCode> {
    let scenario = load_scenario(reference)?;
    println!(
        "scenario valid: {} items, {} client templates, {} seller templates, {} clients, {} sellers",
        scenario.items.len(),
        scenario.client_templates.len(),
        scenario.seller_templates.len(),
        scenario.clients,
        scenario.sellers
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: &RunArgs) -> Result<ExitCode> {
    let scenario = load_scenario(&args.scenario)?;
    let base = args.config(&scenario);
    let modes = [TradingMode::ExternalOnly, TradingMode::InternalExternal];

    let mut runs = Vec::new();
    for mode in modes {
        let mut config = base;
        config.mode = mode;
        let artifacts = run_simulation(&scenario, config)?;
        write_run_outputs(&args.out.join(mode.as_str()), &scenario, config, &artifacts)?;
        println!("{}", summary_line(config, &artifacts));
        runs.push((config, artifacts));
    }

    let report = comparison_report(&scenario, &runs[0], &runs[1]);
    write_atomic(&args.out.join("comparison.csv"), &report)?;
    Ok(ExitCode::SUCCESS)
}

/// One-line run summary: `mode,ticks,trades,AIP,AITT,ITR`.
fn summary_line(config: RunConfig, artifacts: &RunArtifacts) -> String {
    let metrics = &artifacts.metrics;
    format!(
        "{},{},{},{},{},{}",
        config.mode,
        config.max_ticks,
        metrics.trade_count(),
        fmt_metric(metrics.aip()),
        fmt_metric(metrics.aitt()),
        fmt_metric(metrics.itr())
    )
}

fn fmt_metric(value: Option<f64>) -> String {
    value.map(|v| format!("{:.6}", v)).unwrap_or_default()
}

fn write_run_outputs(
    dir: &Path,
    scenario: &Scenario,
    config: RunConfig,
    artifacts: &RunArtifacts,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let mut metrics_csv = artifacts.metrics.metrics_csv_header();
    metrics_csv.push('\n');
    for row in &artifacts.snapshots {
        metrics_csv.push_str(&row.to_csv_line());
        metrics_csv.push('\n');
    }
    write_atomic(&dir.join("metrics.csv"), &metrics_csv)?;

    let mut trades_csv = String::from(MetricsAccumulator::TRADES_CSV_HEADER);
    trades_csv.push('\n');
    for trade in artifacts.metrics.trades() {
        trades_csv.push_str(&MetricsAccumulator::trade_csv_line(trade));
        trades_csv.push('\n');
    }
    write_atomic(&dir.join("trades.csv"), &trades_csv)?;

    write_atomic(
        &dir.join("final_state.txt"),
        &final_state_dump(scenario, artifacts),
    )?;

    if config.trace.messages {
        write_trace(
            &dir.join("trace_messages.csv"),
            "tick,sender,performative,receivers,fields",
            &artifacts.message_trace,
        )?;
    }
    if config.trace.intentions {
        write_trace(
            &dir.join("trace_intentions.csv"),
            "tick,agent,action,done_condition,event",
            &artifacts.intention_trace,
        )?;
    }
    if config.trace.auctions {
        write_trace(
            &dir.join("trace_auctions.csv"),
            "tick,auction_id,item,round,event,agent,price",
            &artifacts.auction_trace,
        )?;
    }
    Ok(())
}

/// Per-agent closing tables: client rows `item,stock,min_stock,max_stock,
/// buy_price`, seller rows `item,price,min_price,max_price`.
fn final_state_dump(scenario: &Scenario, artifacts: &RunArtifacts) -> String {
    let mut out = String::new();
    for client in &artifacts.clients {
        writeln!(out, "# client {}", client.id).unwrap();
        writeln!(out, "item,stock,min_stock,max_stock,buy_price").unwrap();
        for item in &scenario.items {
            let rec = client.item(item).expect("catalog item");
            writeln!(
                out,
                "{},{},{},{},{}",
                rec.item, rec.stock, rec.min_stock, rec.max_stock, rec.buy_price
            )
            .unwrap();
        }
        out.push('\n');
    }
    for seller in &artifacts.sellers {
        writeln!(out, "# seller {}", seller.id).unwrap();
        writeln!(out, "item,price,min_price,max_price").unwrap();
        for item in &scenario.items {
            let rec = seller.item(item).expect("catalog item");
            writeln!(
                out,
                "{},{},{},{}",
                rec.item, rec.price, rec.min_price, rec.max_price
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

/// Side-by-side metric rows followed by per-item latest trade prices with
/// the internal-external minus external-only delta in cents.
fn comparison_report(
    scenario: &Scenario,
    external: &(RunConfig, RunArtifacts),
    mixed: &(RunConfig, RunArtifacts),
) -> String {
    let mut out = String::from("row,external-only,internal-external,delta\n");
    let (em, mm) = (&external.1.metrics, &mixed.1.metrics);
    writeln!(out, "trades,{},{},", em.trade_count(), mm.trade_count()).unwrap();
    writeln!(
        out,
        "internal,{},{},",
        em.internal_count(),
        mm.internal_count()
    )
    .unwrap();
    writeln!(
        out,
        "external,{},{},",
        em.external_count(),
        mm.external_count()
    )
    .unwrap();
    writeln!(
        out,
        "aip,{},{},",
        fmt_metric(em.aip()),
        fmt_metric(mm.aip())
    )
    .unwrap();
    writeln!(
        out,
        "aitt,{},{},",
        fmt_metric(em.aitt()),
        fmt_metric(mm.aitt())
    )
    .unwrap();
    writeln!(
        out,
        "itr,{},{},",
        fmt_metric(em.itr()),
        fmt_metric(mm.itr())
    )
    .unwrap();

    let latest = |artifacts: &RunArtifacts, idx: usize| {
        artifacts
            .snapshots
            .last()
            .and_then(|row| row.latest_price[idx])
    };
    for (idx, item) in scenario.items.iter().enumerate() {
        let a = latest(&external.1, idx);
        let b = latest(&mixed.1, idx);
        let delta = match (a, b) {
            (Some(a), Some(b)) => format!("{:+}", b.cents() - a.cents()),
            _ => String::new(),
        };
        writeln!(
            out,
            "price:{},{},{},{}",
            item,
            a.map(|m| m.to_string()).unwrap_or_default(),
            b.map(|m| m.to_string()).unwrap_or_default(),
            delta
        )
        .unwrap();
    }
    out
}

fn write_trace(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    let mut content = String::from(header);
    content.push('\n');
    for line in lines {
        content.push_str(line);
        content.push('\n');
    }
    write_atomic(path, &content)
}

/// Temp-file-plus-rename so a crashed run never leaves a truncated file
/// behind.
fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot rename into {}", path.display()))?;
    Ok(())
}
