use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use seer_core::citysim::{self, CityGenConfig};
use seer_core::control::EvalConfig;
use seer_core::knowstore;
use seer_core::pipeline::PipelineConfig;
use seer_core::run::{self, RunConfig, SimParams};

#[derive(Parser)]
#[command(name = "seer", version, about = "Mobility knowledge pipeline for SDN Wi-Fi")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city (pois.jsonl and aps.jsonl).
    GenCity {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 220)]
        aps: usize,
        #[arg(long, default_value_t = 6)]
        zones: usize,
        #[arg(long, default_value_t = 6000.0)]
        extent: f64,
    },
    /// Simulate citizens and write raw association events.
    Simulate {
        #[arg(long)]
        pois: PathBuf,
        #[arg(long)]
        aps: PathBuf,
        #[arg(long, default_value_t = 100)]
        citizens: usize,
        #[arg(long, default_value_t = 7)]
        days: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = citysim::DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        #[arg(long, default_value_t = 1.0)]
        speed_min: f64,
        #[arg(long, default_value_t = 2.0)]
        speed_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the POI density grid as CSV.
    Density {
        #[arg(long)]
        pois: PathBuf,
        #[arg(long, default_value_t = citysim::DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        #[arg(long, default_value_t = citysim::DEFAULT_CELL_SIZE)]
        cell: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Anonymize raw events into wire-format handover events.
    Anonymize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master key; derived from --seed when absent.
        #[arg(long)]
        key: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Split handover events into training weeks and one test week.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        /// 1-based test week; earlier weeks become training data.
        #[arg(long)]
        week: u64,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Build a Markov snapshot from handover events.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 300)]
        t_gap: u64,
        #[arg(long, default_value_t = 3)]
        orders: usize,
        #[arg(long, default_value_t = 1)]
        batch: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve predictions over HTTP, reloading the snapshot when it changes.
    Serve {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Score predictive pre-allocation on a test trace.
    Evaluate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 3)]
        orders: usize,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[arg(long, default_value_t = 300)]
        t_gap: u64,
        /// Defaults to --t-gap.
        #[arg(long)]
        ttl: Option<u64>,
        #[arg(long, default_value_t = 64)]
        capacity: usize,
        #[arg(long, default_value_t = 5.0)]
        l_hit: f64,
        #[arg(long, default_value_t = 50.0)]
        l_miss: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run simulate, anonymize, analyze and evaluate end to end.
    RunAll {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Box<Overrides>,
    },
}

/// Per-key overrides of the run config.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    pois: Option<String>,
    #[arg(long)]
    aps: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    citizens: Option<String>,
    #[arg(long)]
    weeks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
    #[arg(long)]
    speed_min: Option<String>,
    #[arg(long)]
    speed_max: Option<String>,
    #[arg(long)]
    master_key: Option<String>,
    #[arg(long)]
    t_gap: Option<String>,
    #[arg(long)]
    orders: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
    #[arg(long)]
    l_hit: Option<String>,
    #[arg(long)]
    l_miss: Option<String>,
    #[arg(long)]
    ttl: Option<String>,
    #[arg(long)]
    capacity: Option<String>,
    #[arg(long)]
    port: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        [
            ("pois", &self.pois),
            ("aps", &self.aps),
            ("out", &self.out),
            ("citizens", &self.citizens),
            ("weeks", &self.weeks),
            ("seed", &self.seed),
            ("bandwidth", &self.bandwidth),
            ("speed_min", &self.speed_min),
            ("speed_max", &self.speed_max),
            ("master_key", &self.master_key),
            ("t_gap", &self.t_gap),
            ("orders", &self.orders),
            ("batch", &self.batch),
            ("top_k", &self.top_k),
            ("l_hit", &self.l_hit),
            ("l_miss", &self.l_miss),
            ("ttl", &self.ttl),
            ("capacity", &self.capacity),
            ("port", &self.port),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenCity {
            out,
            seed,
            aps,
            zones,
            extent,
        } => {
            let cfg = CityGenConfig {
                seed,
                aps,
                zones,
                extent,
                ..CityGenConfig::default()
            };
            let (p, a) = run::gen_city(&cfg, &out)?;
            println!("wrote {} and {}", p.display(), a.display());
        }
        Command::Simulate {
            pois,
            aps,
            citizens,
            days,
            seed,
            bandwidth,
            speed_min,
            speed_max,
            out,
        } => {
            let params = SimParams {
                citizens,
                days,
                seed,
                bandwidth,
                speed: (speed_min, speed_max),
            };
            if !(speed_max > speed_min && speed_min > 0.0) {
                bail!("speed range must satisfy 0 < speed-min < speed-max");
            }
            let events = run::simulate_city(&pois, &aps, &params)?;
            citysim::write_raw_events(&out, &events).context("citysim")?;
            println!("wrote {} raw events to {}", events.len(), out.display());
        }
        Command::Density {
            pois,
            bandwidth,
            cell,
            out,
        } => {
            run::write_density_csv(&pois, bandwidth, cell, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Anonymize { input, out, key, seed } => {
            let raw =
                citysim::read_raw_events(&input).with_context(|| format!("citysim: reading {}", input.display()))?;
            let key = key
                .map(String::into_bytes)
                .unwrap_or_else(|| run::default_master_key(seed));
            let (events, dropped) = run::anonymize_events(&raw, &key)?;
            run::write_events(&out, &events)?;
            println!("wrote {} events to {} ({dropped} dropped)", events.len(), out.display());
        }
        Command::Split {
            input,
            week,
            train,
            test,
        } => {
            if week == 0 {
                bail!("week is 1-based");
            }
            let events = run::read_events(&input)?;
            let (tr, te) = run::split_by_week(&events, week);
            run::write_events(&train, &tr)?;
            run::write_events(&test, &te)?;
            println!("{} training events, {} test events", tr.len(), te.len());
        }
        Command::Analyze {
            input,
            t_gap,
            orders,
            batch,
            out,
        } => {
            let events = run::read_events(&input)?;
            let cfg = PipelineConfig {
                t_gap,
                max_order: orders,
                batch_interval: batch,
            };
            let (model, report) = run::analyze_to_snapshot(events, &cfg, &out)?;
            println!(
                "{} events, {} sessions, {} transitions; states per order {:?}; wrote {}",
                report.events,
                report.sessions,
                report.transitions,
                model.state_counts(),
                out.display()
            );
        }
        Command::Serve { snapshot, port, host } => {
            let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
            runtime
                .block_on(seer_core::disseminate::serve(snapshot, SocketAddr::new(host, port)))
                .context("disseminate")?;
        }
        Command::Evaluate {
            snapshot,
            test,
            orders,
            top_k,
            t_gap,
            ttl,
            capacity,
            l_hit,
            l_miss,
            out,
        } => {
            let model = knowstore::restore(&snapshot).context("knowstore")?;
            let events = run::read_events(&test)?;
            let cfg = EvalConfig {
                max_order: orders,
                top_k,
                latency_hit_ms: l_hit,
                latency_miss_ms: l_miss,
                ttl: ttl.unwrap_or(t_gap),
                capacity,
                t_gap,
            };
            let metrics = run::evaluate_to_file(&model, &events, &cfg, &out)?;
            print!("{}", run::summary_table(&metrics));
        }
        Command::RunAll { config, overrides } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            for (key, value) in overrides.pairs() {
                cfg.set(key, value)?;
            }
            let summary = run::run_all(&cfg)?;
            println!(
                "{} raw events, {} dropped, {} train / {} test handovers, {} modeled sessions",
                summary.raw_events,
                summary.dropped,
                summary.train_events,
                summary.test_events,
                summary.analysis.modeled_sessions
            );
            print!("{}", run::summary_table(&summary.metrics));
            println!("outputs in {}", cfg.out.display());
        }
    }
    Ok(())
}
