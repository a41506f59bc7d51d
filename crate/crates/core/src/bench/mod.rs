//! Experiment harness: data generation, training, evaluation and reports.
//!
//! A run directory is self-describing:
//!
//! ```text
//! <out>/spec.json
//! <out>/data/{feeder.toml, loads.csv, offline.csv, offline.json}
//! <out>/seed_<s>/{metrics.csv, switching.csv, checkpoint.json, eval.csv}
//! <out>/report/{reward_delta.csv, reward_delta.dat, max_violation.csv, max_violation.dat, summary.csv}
//! ```

mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{self, Checkpoint, DqnAgent, DqnConfig, StepMetrics};
use crate::env::{self, generate_offline_dataset, read_offline_dataset, ActionVector, EnvConfig, VvcEnv};
use crate::feeder::{load_feeder, resolve_feeder, write_feeder, Feeder, SYNTHETIC_LARGE_NAME};
use crate::loads::{
    build_load_series, generate_synthetic, impute, read_load_series, select_customers, write_load_series, ImputeConfig,
    LoadSeries,
};
use crate::powerflow::SolverConfig;
use crate::{Error, Result};

pub use report::{moving_average, report, SeedSummary, SMOOTHING_WINDOW, SUMMARY_TAIL};

pub const ALGORITHMS: &[&str] = &["dqn", "default"];

/// Load-synthesis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub seed: u64,
    /// Customers aggregated per load point; `None` picks by feeder.
    pub customers_per_load: Option<usize>,
    pub max_missing_frac: f64,
    /// Fixed power factor for reactive load; `None` scales the snapshot q.
    pub power_factor: Option<f64>,
    pub meter_group_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { seed: 2021, customers_per_load: None, max_missing_frac: 0.1, power_factor: None, meter_group_size: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub feeder: String,
    pub state_option: u8,
    pub reward_option: u8,
    pub algorithm: String,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub horizon: usize,
    /// Run directory; not recorded so that runs in different places match.
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub impute: ImputeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub agent: DqnConfig,
}

impl ExperimentSpec {
    /// The benchmark configuration: state option 2, reward option 1.
    pub fn new(feeder: &str, out: impl Into<PathBuf>) -> Self {
        Self {
            feeder: feeder.into(),
            state_option: 2,
            reward_option: 1,
            algorithm: "dqn".into(),
            seeds: vec![0, 1, 2],
            steps: 3000,
            horizon: 4032,
            out: out.into(),
            data: DataConfig::default(),
            impute: ImputeConfig::default(),
            solver: SolverConfig::default(),
            agent: DqnConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        if self.seeds.is_empty() {
            return Err(Error::Argument("at least one seed is required".into()));
        }
        if !ALGORITHMS.contains(&self.algorithm.as_str()) {
            return Err(Error::Argument(format!(
                "unknown algorithm {:?}; expected one of {ALGORITHMS:?}",
                self.algorithm
            )));
        }
        if self.steps > self.horizon {
            return Err(Error::Argument(format!("steps {} exceed horizon {}", self.steps, self.horizon)));
        }
        self.env_config().validate()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            state_option: self.state_option,
            reward_option: self.reward_option,
            horizon: self.horizon,
            meter_group_size: self.data.meter_group_size,
            solver: self.solver.clone(),
            ..EnvConfig::default()
        }
    }

    /// Applies a TOML override file with optional `[solver]`, `[agent]`,
    /// `[impute]` and `[data]` tables.
    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse =
            |e: toml::de::Error| Error::Parse { source_name: path.display().to_string(), message: e.to_string() };
        let table: toml::Table = text.parse().map_err(parse)?;
        for key in table.keys() {
            if !["solver", "agent", "impute", "data"].contains(&key.as_str()) {
                return Err(Error::Parse {
                    source_name: path.display().to_string(),
                    message: format!("unknown table [{key}]"),
                });
            }
        }
        // merge each table over the current values
        fn merge<T: Clone + Serialize + for<'de> Deserialize<'de>>(
            current: &T,
            over: Option<&toml::Value>,
            parse: impl Fn(toml::de::Error) -> Error,
        ) -> Result<T> {
            let Some(over) = over else {
                return Ok(current.clone());
            };
            let mut base = toml::Value::try_from(current).map_err(|e| Error::Argument(e.to_string()))?;
            if let (Some(b), Some(o)) = (base.as_table_mut(), over.as_table()) {
                for (k, v) in o {
                    b.insert(k.clone(), v.clone());
                }
            }
            base.try_into().map_err(parse)
        }
        self.solver = merge(&self.solver, table.get("solver"), parse)?;
        self.agent = merge(&self.agent, table.get("agent"), parse)?;
        self.impute = merge(&self.impute, table.get("impute"), parse)?;
        self.data = merge(&self.data, table.get("data"), parse)?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}"))
    }

    fn customers_per_load(&self) -> usize {
        self.data.customers_per_load.unwrap_or(if self.feeder == SYNTHETIC_LARGE_NAME { 1 } else { 5 })
    }

    fn power_factor(&self) -> Option<f64> {
        self.data.power_factor.or((self.feeder == SYNTHETIC_LARGE_NAME).then_some(0.95))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub spec: PathBuf,
    pub feeder: PathBuf,
    pub loads: PathBuf,
    pub offline: PathBuf,
    pub offline_meta: PathBuf,
}

impl DataPaths {
    pub fn of(spec: &ExperimentSpec) -> Self {
        let d = spec.data_dir();
        Self {
            spec: spec.out.join("spec.json"),
            feeder: d.join("feeder.toml"),
            loads: d.join("loads.csv"),
            offline: d.join("offline.csv"),
            offline_meta: env::sidecar_path(&d.join("offline.csv")),
        }
    }
}

#[derive(Serialize)]
struct SpecRecord<'a> {
    version: &'static str,
    spec: &'a ExperimentSpec,
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn write_spec(spec: &ExperimentSpec) -> Result<PathBuf> {
    mkdir(&spec.out)?;
    let path = DataPaths::of(spec).spec;
    let text = serde_json::to_string_pretty(&SpecRecord { version: env!("CARGO_PKG_VERSION"), spec })? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_spec(run_dir: &Path) -> Result<ExperimentSpec> {
    #[derive(Deserialize)]
    struct Record {
        spec: ExperimentSpec,
    }
    let path = run_dir.join("spec.json");
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact { what: "spec.json", path: path.clone() },
        _ => Error::io(&path, e),
    })?;
    let mut spec = serde_json::from_str::<Record>(&text)?.spec;
    spec.out = run_dir.to_path_buf();
    Ok(spec)
}

/// Synthetic meters → selection → imputation → per-load series, AMI-rounded.
pub fn synthesize_loads(spec: &ExperimentSpec, feeder: &Feeder) -> Result<LoadSeries> {
    let cpl = spec.customers_per_load();
    let needed = feeder.loads().len() * cpl;
    let n_steps = spec.horizon.max(crate::loads::STEPS_PER_DAY);
    let meters = generate_synthetic(needed + needed / 10 + 5, n_steps, spec.data.seed);
    let kept = select_customers(&meters, spec.data.max_missing_frac)?;
    let filled = impute(&kept, &ImputeConfig { seed: spec.data.seed, ..spec.impute.clone() })?;
    let mut series = build_load_series(feeder, &filled, cpl, spec.power_factor(), spec.data.seed)?;
    series.quantize_ami(feeder.meta().mva_base);
    Ok(series)
}

/// Writes the feeder, load series and offline transition log.
pub fn generate_data(spec: &ExperimentSpec) -> Result<DataPaths> {
    spec.validate()?;
    let paths = DataPaths::of(spec);
    mkdir(&spec.data_dir())?;
    write_spec(spec)?;
    let feeder = resolve_feeder(&spec.feeder)?;
    write_feeder(&feeder, &paths.feeder)?;
    let series = synthesize_loads(spec, &feeder)?;
    write_load_series(&series, &paths.loads)?;
    // reload what was written so later stages see identical inputs
    let feeder = Arc::new(load_feeder(&paths.feeder)?);
    let series = Arc::new(read_load_series(&paths.loads)?);
    generate_offline_dataset(feeder, series, &spec.env_config(), &paths.offline)?;
    Ok(paths)
}

fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { what, path: path.to_path_buf() })
    }
}

/// Environment rebuilt from the run directory's data.
pub fn load_env(spec: &ExperimentSpec) -> Result<VvcEnv> {
    let paths = DataPaths::of(spec);
    require(&paths.feeder, "feeder")?;
    require(&paths.loads, "load series")?;
    let feeder = Arc::new(load_feeder(&paths.feeder)?);
    let series = Arc::new(read_load_series(&paths.loads)?);
    VvcEnv::new(feeder, series, spec.env_config())
}

pub const METRICS_HEADER: &str = "step,reward,reward_default_delta,max_violation,epsilon,loss";
pub const SWITCHING_HEADER: &str = "step,switches,default_switches";

pub fn write_metrics(dir: &Path, metrics: &[StepMetrics], file: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    let mut s = String::with_capacity(metrics.len() * 64);
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for m in metrics {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.step, m.reward, m.reward_default_delta, m.max_violation, m.epsilon, m.loss
        ));
    }
    fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_switching(dir: &Path, metrics: &[StepMetrics]) -> Result<()> {
    let path = dir.join("switching.csv");
    let mut f = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    let io = |e| Error::io(&path, e);
    writeln!(f, "{SWITCHING_HEADER}").map_err(io)?;
    for m in metrics {
        writeln!(f, "{},{},{}", m.step, m.switches, m.default_switches).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Replays the default policy through the environment.
pub fn run_default_policy(env: &mut VvcEnv, steps: usize) -> Result<Vec<StepMetrics>> {
    let baseline = env.baseline().clone();
    env.reset();
    (0..steps)
        .map(|step| {
            let a: ActionVector = env.default_action()?;
            let out = env.step(&a)?;
            let base = &baseline.rewards[step];
            Ok(StepMetrics {
                step,
                reward: out.reward,
                reward_default_delta: out.reward - base.total,
                max_violation: out.info.reward.max_violation,
                epsilon: 0.0,
                loss: f64::NAN,
                switches: out.info.reward.switch_term,
                default_switches: base.switch_term,
                default_max_violation: base.max_violation,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<StepMetrics>,
}

/// One training run per seed; seeds run on separate threads.
pub fn train(spec: &ExperimentSpec) -> Result<Vec<SeedRun>> {
    spec.validate()?;
    let paths = DataPaths::of(spec);
    require(&paths.offline, "offline dataset")?;
    require(&paths.offline_meta, "offline dataset descriptor")?;
    let (meta, offline) = read_offline_dataset(&paths.offline)?;
    if meta.state_option != spec.state_option || meta.reward_option != spec.reward_option {
        return Err(Error::LayoutMismatch(format!(
            "offline dataset was generated for state option {} / reward option {}; rerun `generate-data`",
            meta.state_option, meta.reward_option
        )));
    }
    let env = load_env(spec)?;
    if &meta.layout != env.layout() {
        return Err(Error::LayoutMismatch("offline observation layout differs from the environment".into()));
    }
    write_spec(spec)?;

    let results: Vec<Result<SeedRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = spec
            .seeds
            .iter()
            .map(|&seed| {
                let mut env = env.clone();
                let offline = &offline;
                scope.spawn(move || train_seed(spec, &mut env, offline, seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    results.into_iter().collect()
}

fn train_seed(spec: &ExperimentSpec, env: &mut VvcEnv, offline: &[env::Transition], seed: u64) -> Result<SeedRun> {
    let dir = spec.seed_dir(seed);
    mkdir(&dir)?;
    let metrics = match spec.algorithm.as_str() {
        "default" => run_default_policy(env, spec.steps)?,
        _ => {
            let mut agent = DqnAgent::new(env.layout().dim(), &env.action_sizes(), spec.agent.clone(), seed);
            match agent::train(&mut agent, env, offline, spec.steps, |_| {}) {
                Ok(m) => {
                    agent.checkpoint().save(&dir.join("checkpoint.json"))?;
                    m
                }
                Err(e) => {
                    // keep the state that produced the failure for inspection
                    agent.checkpoint().save(&dir.join("checkpoint_failed.json"))?;
                    return Err(e);
                }
            }
        }
    };
    write_metrics(&dir, &metrics, "metrics.csv")?;
    write_switching(&dir, &metrics)?;
    Ok(SeedRun { seed, metrics })
}

/// Greedy rollout of each seed's checkpoint over `spec.steps`.
pub fn evaluate(spec: &ExperimentSpec) -> Result<Vec<SeedRun>> {
    spec.validate()?;
    let env = load_env(spec)?;
    spec.seeds
        .iter()
        .map(|&seed| {
            let dir = spec.seed_dir(seed);
            let mut env = env.clone();
            let metrics = match spec.algorithm.as_str() {
                "default" => run_default_policy(&mut env, spec.steps)?,
                _ => {
                    let ck_path = dir.join("checkpoint.json");
                    require(&ck_path, "checkpoint")?;
                    let ck = Checkpoint::load(&ck_path)?;
                    agent::evaluate(&ck.net, &mut env, spec.steps)?
                }
            };
            mkdir(&dir)?;
            write_metrics(&dir, &metrics, "eval.csv")?;
            Ok(SeedRun { seed, metrics })
        })
        .collect()
}
