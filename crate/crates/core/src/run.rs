//! End-to-end orchestration: config file handling and the file-to-file
//! stages behind each CLI subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::citysim::{
    self, build_density, generate_citizens, load_aps, load_pois, Bounds, CityGenConfig, CitySimError, GridSpec,
    RawEvent, Simulator, Venues,
};
use crate::control::{self, ControlError, EvalConfig, EvalMetrics};
use crate::knowlet::{self, decode_event, encode_event, HandoverEvent, KnowletError, SECONDS_PER_DAY};
use crate::knowstore::{self, MarkovModel, StoreError};
use crate::pipeline::{analyze_stream, AnalysisReport, PipelineConfig, PipelineError};

pub const SECONDS_PER_WEEK: u64 = 7 * SECONDS_PER_DAY;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("citysim: {0}")]
    CitySim(#[from] CitySimError),
    #[error("knowlet: {0}")]
    Knowlet(#[from] KnowletError),
    #[error("pipeline: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("knowstore: {0}")]
    Store(#[from] StoreError),
    #[error("control: {0}")]
    Control(#[from] ControlError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

/// Every setting of an end-to-end run. Keys in the config file and CLI
/// overrides share one namespace (`t_gap` and `t-gap` are the same key).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pois: PathBuf,
    pub aps: PathBuf,
    pub out: PathBuf,
    pub citizens: usize,
    pub weeks: u64,
    pub seed: u64,
    pub bandwidth: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub master_key: Option<String>,
    pub t_gap: u64,
    pub orders: usize,
    pub batch: u64,
    pub top_k: usize,
    pub l_hit: f64,
    pub l_miss: f64,
    /// Defaults to `t_gap` when unset.
    pub ttl: Option<u64>,
    pub capacity: usize,
    pub port: u16,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pois: PathBuf::from("city/pois.jsonl"),
            aps: PathBuf::from("city/aps.jsonl"),
            out: PathBuf::from("out"),
            citizens: 100,
            weeks: 2,
            seed: 42,
            bandwidth: citysim::DEFAULT_BANDWIDTH,
            speed_min: 1.0,
            speed_max: 2.0,
            master_key: None,
            t_gap: 300,
            orders: 3,
            batch: 1,
            top_k: 1,
            l_hit: 5.0,
            l_miss: 50.0,
            ttl: None,
            capacity: 64,
            port: 8080,
        }
    }
}

/// `(section, key)` pairs accepted in the config file.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("paths", "pois"),
    ("paths", "aps"),
    ("paths", "out"),
    ("sim", "citizens"),
    ("sim", "weeks"),
    ("sim", "seed"),
    ("sim", "bandwidth"),
    ("sim", "speed_min"),
    ("sim", "speed_max"),
    ("sim", "master_key"),
    ("pipeline", "t_gap"),
    ("pipeline", "orders"),
    ("pipeline", "batch"),
    ("control", "top_k"),
    ("control", "l_hit"),
    ("control", "l_miss"),
    ("control", "ttl"),
    ("control", "capacity"),
    ("serve", "port"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, RunError> {
    value
        .trim()
        .parse()
        .map_err(|_| RunError::Config(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    /// Sets one key; dashes in `key` are read as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "pois" => self.pois = PathBuf::from(value),
            "aps" => self.aps = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "citizens" => self.citizens = parse(&key, value)?,
            "weeks" => self.weeks = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "bandwidth" => self.bandwidth = parse(&key, value)?,
            "speed_min" => self.speed_min = parse(&key, value)?,
            "speed_max" => self.speed_max = parse(&key, value)?,
            "master_key" => self.master_key = Some(value.to_string()),
            "t_gap" => self.t_gap = parse(&key, value)?,
            "orders" => self.orders = parse(&key, value)?,
            "batch" => self.batch = parse(&key, value)?,
            "top_k" => self.top_k = parse(&key, value)?,
            "l_hit" => self.l_hit = parse(&key, value)?,
            "l_miss" => self.l_miss = parse(&key, value)?,
            "ttl" => self.ttl = Some(parse(&key, value)?),
            "capacity" => self.capacity = parse(&key, value)?,
            "port" => self.port = parse(&key, value)?,
            _ => return Err(RunError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `[section]` / `key = value` text on top of the defaults.
    pub fn from_ini_str(text: &str) -> Result<Self, RunError> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        let mut cfg = RunConfig::default();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let norm = key.replace('-', "_");
                let Some(section) = section else {
                    return Err(RunError::Config(format!("key {key:?} outside of a section")));
                };
                if !CONFIG_KEYS.contains(&(section, norm.as_str())) {
                    return Err(RunError::Config(format!("unknown key {key:?} in [{section}]")));
                }
                cfg.set(&norm, value)?;
            }
        }
        Ok(cfg)
    }

    /// Loads a config file; relative paths in it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let mut cfg = Self::from_ini_str(&text)?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.pois, &mut cfg.aps, &mut cfg.out] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_ini_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "[paths]\npois = {}\naps = {}\nout = {}\n",
            self.pois.display(),
            self.aps.display(),
            self.out.display()
        );
        let _ = writeln!(
            s,
            "[sim]\ncitizens = {}\nweeks = {}\nseed = {}\nbandwidth = {}\nspeed_min = {}\nspeed_max = {}",
            self.citizens, self.weeks, self.seed, self.bandwidth, self.speed_min, self.speed_max
        );
        if let Some(k) = &self.master_key {
            let _ = writeln!(s, "master_key = {k}");
        }
        let _ = writeln!(
            s,
            "\n[pipeline]\nt_gap = {}\norders = {}\nbatch = {}\n",
            self.t_gap, self.orders, self.batch
        );
        let _ = writeln!(
            s,
            "[control]\ntop_k = {}\nl_hit = {}\nl_miss = {}\ncapacity = {}",
            self.top_k, self.l_hit, self.l_miss, self.capacity
        );
        if let Some(ttl) = self.ttl {
            let _ = writeln!(s, "ttl = {ttl}");
        }
        let _ = writeln!(s, "\n[serve]\nport = {}", self.port);
        s
    }

    pub fn validate(&self) -> Result<(), RunError> {
        for (name, p) in [("pois", &self.pois), ("aps", &self.aps)] {
            if !p.is_file() {
                return Err(RunError::Config(format!("{name} file {} does not exist", p.display())));
            }
        }
        if self.weeks < 2 {
            return Err(RunError::Config(
                "weeks must be at least 2 (train on 1..W-1, test on W)".into(),
            ));
        }
        let positive = [
            ("citizens", self.citizens as f64),
            ("bandwidth", self.bandwidth),
            ("speed_min", self.speed_min),
            ("t_gap", self.t_gap as f64),
            ("orders", self.orders as f64),
            ("batch", self.batch as f64),
            ("top_k", self.top_k as f64),
            ("capacity", self.capacity as f64),
            ("ttl", self.ttl.unwrap_or(1) as f64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| v.is_nan() || *v <= 0.0) {
            return Err(RunError::Config(format!("{name} must be positive")));
        }
        if self.speed_max.is_nan() || self.speed_max <= self.speed_min {
            return Err(RunError::Config("speed_max must exceed speed_min".into()));
        }
        if self.l_hit < 0.0 || self.l_miss < 0.0 {
            return Err(RunError::Config("latencies must be non-negative".into()));
        }
        Ok(())
    }

    pub fn master_key(&self) -> Vec<u8> {
        match &self.master_key {
            Some(k) => k.as_bytes().to_vec(),
            None => default_master_key(self.seed),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            t_gap: self.t_gap,
            max_order: self.orders,
            batch_interval: self.batch,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            max_order: self.orders,
            top_k: self.top_k,
            latency_hit_ms: self.l_hit,
            latency_miss_ms: self.l_miss,
            ttl: self.ttl.unwrap_or(self.t_gap),
            capacity: self.capacity,
            t_gap: self.t_gap,
        }
    }
}

pub fn default_master_key(seed: u64) -> Vec<u8> {
    format!("seer-master-{seed}").into_bytes()
}

/// Parameters of the `simulate` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub citizens: usize,
    pub days: u64,
    pub seed: u64,
    pub bandwidth: f64,
    pub speed: (f64, f64),
}

/// City bounds used by every stage: the POI/AP extent plus two bandwidths.
pub fn city_bounds(pois: &[citysim::Poi], aps: &[citysim::AccessPoint], bandwidth: f64) -> Result<Bounds, RunError> {
    Bounds::enclosing(pois, aps, 2.0 * bandwidth).ok_or(RunError::CitySim(CitySimError::EmptyInput))
}

pub fn simulate_city(pois_path: &Path, aps_path: &Path, params: &SimParams) -> Result<Vec<RawEvent>, RunError> {
    let pois = load_pois(pois_path)?;
    let aps = load_aps(aps_path)?;
    if pois.is_empty() {
        return Err(CitySimError::EmptyInput.into());
    }
    if params.days == 0 {
        return Err(RunError::Config("days must be positive".into()));
    }
    let bounds = city_bounds(&pois, &aps, params.bandwidth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let citizens = generate_citizens(
        params.citizens,
        &pois,
        params.bandwidth,
        &bounds,
        &mut rng,
        params.speed.0..params.speed.1,
    )?;
    let venues = Venues::new(&pois, params.bandwidth, bounds)?;
    let sim = Simulator::new(aps, venues)?;
    Ok(sim.run(&citizens, 0, params.days * SECONDS_PER_DAY, &mut rng)?)
}

pub fn write_density_csv(pois_path: &Path, bandwidth: f64, cell_size: f64, out: &Path) -> Result<(), RunError> {
    let pois = load_pois(pois_path)?;
    let bounds = city_bounds(&pois, &[], bandwidth)?;
    let grid = build_density(&pois, bandwidth, &GridSpec::covering(&bounds, cell_size))?;
    let f = File::create(out).map_err(io_err(format!("creating {}", out.display())))?;
    grid.write_csv(BufWriter::new(f)).map_err(io_err("writing density"))?;
    Ok(())
}

pub fn write_events(path: &Path, events: &[HandoverEvent]) -> Result<(), RunError> {
    let ctx = || format!("writing {}", path.display());
    let mut out = BufWriter::new(File::create(path).map_err(io_err(ctx()))?);
    for e in events {
        out.write_all(&encode_event(e)).map_err(io_err(ctx()))?;
    }
    out.flush().map_err(io_err(ctx()))
}

/// Reads a wire-format file; decode errors name the line.
pub fn read_events(path: &Path) -> Result<Vec<HandoverEvent>, RunError> {
    let ctx = || format!("reading {}", path.display());
    let reader = BufReader::new(File::open(path).map_err(io_err(ctx()))?);
    let mut events = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line = line.map_err(io_err(ctx()))?;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let e = decode_event(&line).map_err(|e| match e {
            KnowletError::Decode { offset, message } => RunError::Knowlet(KnowletError::Decode {
                offset,
                message: format!("line {}: {message}", i + 1),
            }),
            other => other.into(),
        })?;
        events.push(e);
    }
    Ok(events)
}

/// Anonymized events plus the number of raw events rejected.
pub fn anonymize_events(raw: &[RawEvent], master_key: &[u8]) -> Result<(Vec<HandoverEvent>, u64), RunError> {
    let out = knowlet::anonymize_stream(raw, master_key)?;
    Ok((out.events, out.dropped))
}

/// Splits at the start of week `test_week` (1-based): earlier events train,
/// events of that week test, anything later is discarded.
pub fn split_by_week(events: &[HandoverEvent], test_week: u64) -> (Vec<HandoverEvent>, Vec<HandoverEvent>) {
    let start = (test_week - 1) * SECONDS_PER_WEEK;
    let end = test_week * SECONDS_PER_WEEK;
    let train = events.iter().filter(|e| e.ts < start).cloned().collect();
    let test = events.iter().filter(|e| e.ts >= start && e.ts < end).cloned().collect();
    (train, test)
}

pub fn analyze_to_snapshot(
    events: Vec<HandoverEvent>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<(MarkovModel, AnalysisReport), RunError> {
    let (model, report) = analyze_stream(events, config)?;
    knowstore::persist(&model, out)?;
    Ok((model, report))
}

pub fn evaluate_to_file(
    model: &MarkovModel,
    test: &[HandoverEvent],
    config: &EvalConfig,
    out: &Path,
) -> Result<BTreeMap<usize, EvalMetrics>, RunError> {
    let metrics = control::evaluate(model, test, config)?;
    control::write_metrics(out, &metrics)?;
    Ok(metrics)
}

pub fn gen_city(config: &CityGenConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf), RunError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(format!("creating {}", out_dir.display())))?;
    let (pois, aps) = citysim::generate_city(config)?;
    let pois_path = out_dir.join("pois.jsonl");
    let aps_path = out_dir.join("aps.jsonl");
    citysim::write_pois(&pois_path, &pois)?;
    citysim::write_aps(&aps_path, &aps)?;
    Ok((pois_path, aps_path))
}

/// Files written by [`run_all`] inside the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub raw: PathBuf,
    pub events: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    pub snapshot: PathBuf,
    pub metrics: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path, weeks: u64) -> Self {
        RunArtifacts {
            raw: dir.join("raw.jsonl"),
            events: dir.join("events.jsonl"),
            train: dir.join("events_train.jsonl"),
            test: dir.join(format!("events_week_{weeks}.jsonl")),
            snapshot: dir.join("model.snapshot"),
            metrics: dir.join("metrics.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub artifacts: RunArtifacts,
    pub raw_events: usize,
    pub dropped: u64,
    pub train_events: usize,
    pub test_events: usize,
    pub analysis: AnalysisReport,
    pub state_counts: Vec<usize>,
    pub metrics: BTreeMap<usize, EvalMetrics>,
}

/// simulate -> anonymize -> analyze -> persist -> evaluate, writing every
/// intermediate file to `config.out`.
pub fn run_all(config: &RunConfig) -> Result<RunSummary, RunError> {
    config.validate()?;
    std::fs::create_dir_all(&config.out).map_err(io_err(format!("creating {}", config.out.display())))?;
    let artifacts = RunArtifacts::in_dir(&config.out, config.weeks);

    let params = SimParams {
        citizens: config.citizens,
        days: config.weeks * 7,
        seed: config.seed,
        bandwidth: config.bandwidth,
        speed: (config.speed_min, config.speed_max),
    };
    let raw = simulate_city(&config.pois, &config.aps, &params)?;
    citysim::write_raw_events(&artifacts.raw, &raw)?;

    let (events, dropped) = anonymize_events(&raw, &config.master_key())?;
    write_events(&artifacts.events, &events)?;
    let (train, test) = split_by_week(&events, config.weeks);
    write_events(&artifacts.train, &train)?;
    write_events(&artifacts.test, &test)?;

    let (train_events, test_events) = (train.len(), test.len());
    let (model, analysis) = analyze_to_snapshot(train, &config.pipeline(), &artifacts.snapshot)?;
    let metrics = evaluate_to_file(&model, &test, &config.eval(), &artifacts.metrics)?;

    Ok(RunSummary {
        artifacts,
        raw_events: raw.len(),
        dropped,
        train_events,
        test_events,
        analysis,
        state_counts: model.state_counts(),
        metrics,
    })
}

/// Fixed-width per-order table of evaluation results.
pub fn summary_table(metrics: &BTreeMap<usize, EvalMetrics>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>5} {:>8} {:>8} {:>8} {:>9} {:>12} {:>8}",
        "order", "hits", "misses", "colds", "hit_rate", "latency_ms", "states"
    );
    for (order, m) in metrics {
        let _ = writeln!(
            s,
            "{:>5} {:>8} {:>8} {:>8} {:>9.4} {:>12.3} {:>8}",
            order, m.hits, m.misses, m.colds, m.hit_rate, m.mean_latency_ms, m.states
        );
    }
    s
}
