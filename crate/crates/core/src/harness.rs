//! Experiment orchestration: configuration profiles, per-repetition seeds,
//! the sweep drivers behind each CLI command, and CSV output.
//!
//! Every repetition is a self-contained simulation with its own RNG streams,
//! so repetitions run on a rayon pool and are merged back in index order.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{DeliveryOrder, DeliveryPolicy, Deployment};
use crate::error::HarnessError;
use crate::faults::{apply_faults, FaultPhase, FaultPlan, Rounding, VictimOrder};
use crate::learning::{equilibrate, train, write_training_log, TrainingConfig, TrainingResult};
use crate::metrics::{
    evaluate, mean_std, quantile, weight_histogram, write_histograms, Histogram, Stage,
};
use crate::model::{
    build_network, format_bits, parse_bits, random_patterns, LayerPair, NetworkSpec,
    NetworkTopology, Pattern, WeightMatrix,
};
use crate::persist::{load_weights, save_weights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    /// 500 neurons, 100 repetitions.
    #[default]
    Desk,
    /// 2000 neurons, 1000 repetitions.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(HarnessError::Config(format!(
                "unknown profile `{other}` (expected desk|paper)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub reps: usize,
    pub slaves: usize,
    pub patterns: usize,
    /// Differing output bits still counted as a correct answer.
    pub tolerance: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            seed: 0,
            reps: 100,
            slaves: 8,
            patterns: 20,
            tolerance: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub n_input: usize,
    pub n_hidden: usize,
    pub n_output: usize,
    pub connectivity: f64,
    pub threshold: f64,
    pub weight_sigma: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            n_input: 10,
            n_hidden: 485,
            n_output: 5,
            connectivity: 0.9,
            threshold: 0.5,
            weight_sigma: 1.0,
        }
    }
}

impl NetworkSection {
    pub fn spec(&self, init_seed: u64) -> NetworkSpec {
        NetworkSpec {
            n_input: self.n_input,
            n_hidden: self.n_hidden,
            n_output: self.n_output,
            connectivity: self.connectivity,
            threshold: self.threshold,
            weight_sigma: self.weight_sigma,
            init_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeliverySection {
    /// `fifo` or `random`.
    pub order: String,
    pub drop_probability: f64,
    pub max_delay: u64,
}

impl Default for DeliverySection {
    fn default() -> Self {
        DeliverySection {
            order: "fifo".into(),
            drop_probability: 0.0,
            max_delay: 0,
        }
    }
}

impl DeliverySection {
    pub fn policy(&self, seed: u64) -> Result<DeliveryPolicy, HarnessError> {
        let order: DeliveryOrder = self.order.parse()?;
        let policy = DeliveryPolicy {
            order,
            drop_probability: self.drop_probability,
            max_delay: self.max_delay,
            seed,
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    Node,
    Synapse,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::Node => "node",
            FaultKind::Synapse => "synapse",
        }
    }

    pub fn plan(self, percent: f64, seed: u64, faults: &FaultSection, u: f64) -> FaultPlan {
        let (node_percent, synapse_percent) = match self {
            FaultKind::Node => (percent, 0.0),
            FaultKind::Synapse => (0.0, percent),
        };
        FaultPlan {
            phase: FaultPhase::Learning,
            node_percent,
            synapse_percent,
            seed,
            include_inputs: faults.include_inputs,
            rounding: match faults.rounding {
                RoundingMode::Floor => Rounding::Floor,
                RoundingMode::Dither => Rounding::Dither(u),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMode {
    #[default]
    Floor,
    /// One uniform offset per repetition, shared by every fraction.
    Dither,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSection {
    pub include_inputs: bool,
    pub rounding: RoundingMode,
}

/// A fault sweep: percentages per kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub kinds: Vec<FaultKind>,
    pub fractions: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            kinds: vec![FaultKind::Node, FaultKind::Synapse],
            fractions: vec![0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibrationSweepSection {
    pub steps: Vec<usize>,
}

impl Default for EquilibrationSweepSection {
    fn default() -> Self {
        EquilibrationSweepSection {
            steps: vec![0, 10_000],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSection {
    pub bins: usize,
    /// Equilibration presentations between the first two stages.
    pub equilibration_steps: usize,
}

impl Default for HistogramSection {
    fn default() -> Self {
        HistogramSection {
            bins: crate::metrics::DEFAULT_BINS,
            equilibration_steps: 10_000,
        }
    }
}

/// Everything that determines an experiment's output bytes.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub network: NetworkSection,
    /// `training.seed` is replaced by a per-repetition seed.
    pub training: TrainingConfig,
    pub delivery: DeliverySection,
    pub faults: FaultSection,
    pub operate: SweepSection,
    pub learn_faults: SweepSection,
    pub equil_sweep: EquilibrationSweepSection,
    pub hist: HistogramSection,
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let mut cfg = ExperimentConfig {
            operate: SweepSection {
                kinds: vec![FaultKind::Node, FaultKind::Synapse],
                fractions: vec![0.0, 1.0, 2.0, 5.0, 10.0, 15.0],
            },
            learn_faults: SweepSection {
                kinds: vec![FaultKind::Node, FaultKind::Synapse],
                fractions: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            },
            ..ExperimentConfig::default()
        };
        if profile == Profile::Paper {
            cfg.experiment.reps = 1000;
            cfg.experiment.slaves = 16;
            cfg.network.n_hidden = 1980;
            cfg.network.n_output = 10;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.experiment.reps == 0 {
            return bad("experiment.reps must be at least 1".into());
        }
        if self.experiment.patterns == 0 {
            return bad("experiment.patterns must be at least 1".into());
        }
        if self.experiment.slaves == 0 {
            return bad("experiment.slaves must be at least 1".into());
        }
        self.network.spec(0).validate()?;
        self.training.validate()?;
        self.delivery.policy(0)?;
        for (name, sweep) in [("operate", &self.operate), ("learn_faults", &self.learn_faults)] {
            if sweep.kinds.is_empty() {
                return bad(format!("{name}.kinds is empty"));
            }
            if sweep.fractions.is_empty() {
                return bad(format!("{name}.fractions is empty"));
            }
            if !sweep.fractions.windows(2).all(|w| w[0] < w[1]) {
                return bad(format!("{name}.fractions must be strictly increasing"));
            }
            if let Some(f) = sweep.fractions.iter().find(|f| !(0.0..100.0).contains(*f)) {
                return bad(format!("{name}.fractions: {f} outside [0, 100)"));
            }
        }
        let steps = &self.equil_sweep.steps;
        if steps.is_empty() || !steps.windows(2).all(|w| w[0] < w[1]) {
            return bad("equil_sweep.steps must be non-empty and strictly increasing".into());
        }
        if self.hist.bins == 0 {
            return bad("hist.bins must be at least 1".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Profile defaults overlaid with the keys present in `text`.
pub fn parse_config(text: &str, profile: Profile) -> Result<ExperimentConfig, HarnessError> {
    let overlay: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    let mut base: toml::Table = toml::Table::try_from(ExperimentConfig::profile(profile))
        .expect("config serializes to a table");
    merge(&mut base, overlay);
    let cfg: ExperimentConfig = toml::Value::Table(base)
        .try_into()
        .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, profile: Profile) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            parse_config(&text, profile)
        }
        None => {
            let cfg = ExperimentConfig::profile(profile);
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Stable 64-bit hash of `(seed, label, index)`.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed of repetition `r`: the base seed xor a hash of `r`. It does not
/// depend on the sweep point, so every fraction of a sweep sees the same
/// network, patterns and victim order in repetition `r`.
pub fn rep_seed(base: u64, r: usize) -> u64 {
    base ^ derive_seed(0, "repetition", r as u64)
}

/// Independent streams of one repetition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepSeeds {
    pub rep: u64,
    pub network: u64,
    pub patterns: u64,
    pub training: u64,
    pub equilibration: u64,
    pub faults: u64,
    pub delivery: u64,
    pub dither: u64,
}

impl RepSeeds {
    pub fn new(base: u64, r: usize) -> Self {
        let rep = rep_seed(base, r);
        let d = |label| derive_seed(rep, label, 0);
        RepSeeds {
            rep,
            network: d("network"),
            patterns: d("patterns"),
            training: d("training"),
            equilibration: d("equilibration"),
            faults: d("faults"),
            delivery: d("delivery"),
            dither: d("dither"),
        }
    }

    pub fn dither_offset(&self) -> f64 {
        ChaCha8Rng::seed_from_u64(self.dither).random::<f64>()
    }
}

/// One simulation of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rep: usize,
    pub seed: u64,
    pub kind: Option<FaultKind>,
    pub fraction: f64,
    pub equilibration_steps: usize,
    pub phase: FaultPhase,
    pub converged: bool,
    pub cycles_used: usize,
    pub global_error: f64,
    pub quality: f64,
    pub wall_time: Duration,
}

/// Network, patterns and weights after one training run.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub topology: Arc<NetworkTopology>,
    pub patterns: Vec<Pattern>,
    pub initial: WeightMatrix,
    pub equilibrated: WeightMatrix,
    /// Final weights including the fault mask.
    pub weights: WeightMatrix,
    pub result: TrainingResult,
}

/// Builds repetition `rep`, equilibrates for `steps`, injects the learning
/// fault (if any) and trains.
pub fn run_training(
    cfg: &ExperimentConfig,
    rep: usize,
    steps: usize,
    fault: Option<(FaultKind, f64)>,
) -> Result<TrainedRun, HarnessError> {
    let started = Instant::now();
    let seeds = RepSeeds::new(cfg.experiment.seed, rep);
    let (topology, initial) = build_network(&cfg.network.spec(seeds.network))?;
    let topology = Arc::new(topology);
    let patterns = random_patterns(
        cfg.network.n_input,
        cfg.network.n_output,
        cfg.experiment.patterns,
        seeds.patterns,
    )?;
    let training = TrainingConfig {
        seed: seeds.training,
        ..cfg.training.clone()
    };
    let mut deployment = Deployment::new(
        topology.clone(),
        &initial,
        cfg.experiment.slaves,
        cfg.delivery.policy(seeds.delivery)?,
    )?;
    equilibrate(&mut deployment, steps, &training, seeds.equilibration)?;
    let equilibrated = deployment.weights();
    let fault_set = match fault {
        Some((kind, f)) if f > 0.0 => {
            let plan = kind.plan(f, seeds.faults, &cfg.faults, seeds.dither_offset());
            let order = VictimOrder::new(&topology, seeds.faults, cfg.faults.include_inputs);
            Some(order.take(&plan)?)
        }
        _ => None,
    };
    let result = train(&mut deployment, &patterns, &training, fault_set.as_ref())?;
    let weights = deployment.weights();
    let report = evaluate(&topology, &weights, &patterns, cfg.experiment.tolerance)?;
    let record = RunRecord {
        rep,
        seed: seeds.rep,
        kind: fault.map(|(k, _)| k),
        fraction: fault.map_or(0.0, |(_, f)| f),
        equilibration_steps: steps,
        phase: FaultPhase::Learning,
        converged: result.converged,
        cycles_used: result.cycles_used,
        global_error: report.global,
        quality: report.quality,
        wall_time: started.elapsed(),
    };
    Ok(TrainedRun {
        record,
        topology,
        patterns,
        initial,
        equilibrated,
        weights,
        result,
    })
}

fn collect<T: Send>(
    jobs: Vec<usize>,
    f: impl Fn(usize) -> Result<T, HarnessError> + Sync + Send,
) -> Result<Vec<T>, HarnessError> {
    jobs.into_par_iter().map(f).collect()
}

/// `fraction,kind,mean_quality,mean_global_error,stddev,R` row.
#[derive(Clone, Debug, PartialEq)]
pub struct OperateRow {
    pub fraction: f64,
    pub kind: FaultKind,
    pub mean_quality: f64,
    pub mean_global_error: f64,
    /// Standard deviation of quality across repetitions.
    pub stddev: f64,
    pub reps: usize,
}

/// Operation-phase sweep over fault-free trained weights: every repetition
/// draws a fresh victim order and evaluates each fraction on its prefix.
pub fn operate_sweep(
    cfg: &ExperimentConfig,
    topology: &Arc<NetworkTopology>,
    weights: &WeightMatrix,
    patterns: &[Pattern],
) -> Result<Vec<OperateRow>, HarnessError> {
    let sweep = &cfg.operate;
    let reps = cfg.experiment.reps;
    // per repetition: (quality, global error) for every (kind, fraction)
    let per_rep = collect((0..reps).collect(), |r| {
        let seeds = RepSeeds::new(cfg.experiment.seed, r);
        let order = VictimOrder::new(topology, seeds.faults, cfg.faults.include_inputs);
        let u = seeds.dither_offset();
        let mut out = Vec::new();
        for &kind in &sweep.kinds {
            for &f in &sweep.fractions {
                let mut plan = kind.plan(f, seeds.faults, &cfg.faults, u);
                plan.phase = FaultPhase::Operation;
                let faulted = apply_faults(weights, topology, &order.take(&plan)?)?;
                let mut d = Deployment::new(
                    topology.clone(),
                    &faulted,
                    cfg.experiment.slaves,
                    cfg.delivery.policy(seeds.delivery)?,
                )?;
                let mut pairs = Vec::with_capacity(patterns.len());
                for p in patterns {
                    pairs.push((p.target.clone(), d.run_cycle(&p.input)?.output));
                }
                out.push((
                    crate::metrics::quality_of_output(&pairs, cfg.experiment.tolerance),
                    crate::metrics::global_error(&pairs)?,
                ));
            }
        }
        Ok(out)
    })?;
    let mut rows = Vec::new();
    let mut i = 0;
    for &kind in &sweep.kinds {
        for &fraction in &sweep.fractions {
            let q: Vec<f64> = per_rep.iter().map(|v| v[i].0).collect();
            let g: Vec<f64> = per_rep.iter().map(|v| v[i].1).collect();
            let (mean_quality, stddev) = mean_std(&q);
            rows.push(OperateRow {
                fraction,
                kind,
                mean_quality,
                mean_global_error: mean_std(&g).0,
                stddev,
                reps,
            });
            i += 1;
        }
    }
    Ok(rows)
}

/// Training runs for every (kind, fraction, repetition) of the learn-faults
/// sweep, in that order. The fault-free point is trained once per
/// repetition and shared by all kinds.
pub fn learn_under_faults(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    let sweep = &cfg.learn_faults;
    let reps = cfg.experiment.reps;
    let steps = cfg.training.equilibration_steps;
    let mut jobs: Vec<Option<(FaultKind, f64)>> = Vec::new();
    if sweep.fractions.contains(&0.0) {
        jobs.push(None);
    }
    for &kind in &sweep.kinds {
        for &f in sweep.fractions.iter().filter(|f| **f > 0.0) {
            jobs.push(Some((kind, f)));
        }
    }
    let flat: Vec<usize> = (0..jobs.len() * reps).collect();
    let runs = collect(flat, |i| {
        Ok(run_training(cfg, i % reps, steps, jobs[i / reps])?.record)
    })?;
    let mut out = Vec::new();
    for &kind in &sweep.kinds {
        for &f in &sweep.fractions {
            let j = jobs
                .iter()
                .position(|job| match job {
                    None => f == 0.0,
                    Some((k, g)) => *k == kind && *g == f,
                })
                .expect("every sweep point has a job");
            for r in 0..reps {
                let mut rec = runs[j * reps + r].clone();
                rec.kind = Some(kind);
                rec.fraction = f;
                out.push(rec);
            }
        }
    }
    Ok(out)
}

/// Training runs for every (steps, repetition) of the equilibration sweep.
pub fn equilibration_sweep(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    let reps = cfg.experiment.reps;
    let steps = &cfg.equil_sweep.steps;
    collect((0..steps.len() * reps).collect(), |i| {
        Ok(run_training(cfg, i % reps, steps[i / reps], None)?.record)
    })
}

/// Median and quartiles of `cycles_used` over a group of runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub converged: usize,
    pub reps: usize,
}

impl CostSummary {
    pub fn of(runs: &[&RunRecord]) -> Self {
        let cycles: Vec<f64> = runs.iter().map(|r| r.cycles_used as f64).collect();
        CostSummary {
            median: quantile(&cycles, 0.5),
            q1: quantile(&cycles, 0.25),
            q3: quantile(&cycles, 0.75),
            converged: runs.iter().filter(|r| r.converged).count(),
            reps: runs.len(),
        }
    }
}

/// Histograms of both layer pairs at the three stages of repetition `rep`.
pub fn stage_histograms(
    cfg: &ExperimentConfig,
    rep: usize,
) -> Result<(Vec<Histogram>, TrainedRun), HarnessError> {
    let run = run_training(cfg, rep, cfg.hist.equilibration_steps, None)?;
    let mut hists = Vec::new();
    for pair in [LayerPair::IH, LayerPair::HO] {
        for (stage, w) in [
            (Stage::Initial, &run.initial),
            (Stage::PostEquilibration, &run.equilibrated),
            (Stage::PostLearning, &run.weights),
        ] {
            hists.push(weight_histogram(w, &run.topology, pair, stage, cfg.hist.bins)?);
        }
    }
    Ok((hists, run))
}

/// Standard deviation at `stage` over the initial standard deviation.
pub fn spread_ratio(hists: &[Histogram], pair: LayerPair, stage: Stage) -> f64 {
    let std_of = |s: Stage| {
        hists
            .iter()
            .find(|h| h.layer_pair == pair && h.stage == s)
            .map_or(f64::NAN, |h| h.std_dev)
    };
    std_of(stage) / std_of(Stage::Initial)
}

/// Opens a CSV file and writes the config comment line.
fn csv_file(path: &Path, cfg: &ExperimentConfig) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "# config sha256={}", cfg.hash()).map_err(|e| io_err(path, e))?;
    Ok(out)
}

fn write_csv(
    path: &Path,
    cfg: &ExperimentConfig,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), HarnessError> {
    let mut out = csv_file(path, cfg)?;
    body(&mut out).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

pub const PATTERN_CSV_HEADER: &str = "id,input,target";

pub fn write_patterns<W: Write + ?Sized>(out: &mut W, patterns: &[Pattern]) -> std::io::Result<()> {
    writeln!(out, "{PATTERN_CSV_HEADER}")?;
    for p in patterns {
        writeln!(out, "{},{},{}", p.id, format_bits(&p.input), format_bits(&p.target))?;
    }
    Ok(())
}

/// Reads `id,input,target` rows; `#` lines and the header are skipped.
pub fn read_patterns<R: BufRead>(input: R) -> Result<Vec<Pattern>, HarnessError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| HarnessError::Config(e.to_string()))?;
        if line.starts_with('#') || line.trim().is_empty() || line == PATTERN_CSV_HEADER {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let [id, x, d] = cols.as_slice() else {
            return Err(HarnessError::Config(format!("bad pattern row `{line}`")));
        };
        let id = id
            .parse()
            .map_err(|_| HarnessError::Config(format!("bad pattern id `{id}`")))?;
        out.push(Pattern::new(id, parse_bits(x)?, parse_bits(d)?));
    }
    Ok(out)
}

pub const RUNS_CSV_HEADER: &str =
    "rep,seed,kind,fraction,equilibration_steps,phase,converged,cycles_used,global_error,quality";

fn write_runs(out: &mut dyn Write, runs: &[RunRecord]) -> std::io::Result<()> {
    writeln!(out, "{RUNS_CSV_HEADER}")?;
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.seed,
            r.kind.map_or("none", FaultKind::as_str),
            r.fraction,
            r.equilibration_steps,
            match r.phase {
                FaultPhase::Learning => "learning",
                FaultPhase::Operation => "operation",
            },
            r.converged,
            r.cycles_used,
            r.global_error,
            r.quality
        )?;
    }
    Ok(())
}

fn wall_summary(label: &str, runs: &[RunRecord]) {
    let total: Duration = runs.iter().map(|r| r.wall_time).sum();
    eprintln!(
        "{label}: {} runs, {:.2}s simulated wall time",
        runs.len(),
        total.as_secs_f64()
    );
}

fn ensure_dir(out: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

/// Trains repetition 0 and writes `weights.txt`, `patterns.csv`,
/// `training_log.csv` and `train.csv`. Returns whether training converged.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<bool, HarnessError> {
    ensure_dir(out)?;
    let run = run_training(cfg, 0, cfg.training.equilibration_steps, None)?;
    let weights_path = out.join("weights.txt");
    save_weights(&weights_path, &run.topology, &run.weights).map_err(|e| io_err(&weights_path, e))?;
    write_csv(&out.join("patterns.csv"), cfg, |o| write_patterns(o, &run.patterns))?;
    write_csv(&out.join("training_log.csv"), cfg, |o| {
        write_training_log(o, &run.result.log)
    })?;
    write_csv(&out.join("train.csv"), cfg, |o| {
        write_runs(o, std::slice::from_ref(&run.record))
    })?;
    wall_summary("train", std::slice::from_ref(&run.record));
    Ok(run.record.converged)
}

pub const OPERATE_CSV_HEADER: &str = "fraction,kind,mean_quality,mean_global_error,stddev,R";

/// Operation-phase degradation sweep over a trained weight file.
pub fn cmd_operate(
    cfg: &ExperimentConfig,
    weights: &Path,
    patterns: &Path,
    out: &Path,
) -> Result<Vec<OperateRow>, HarnessError> {
    let (topology, w) = load_weights(weights).map_err(|e| match e {
        crate::error::ModelError::Io(source) => io_err(weights, source),
        other => other.into(),
    })?;
    let file = std::fs::File::open(patterns).map_err(|e| io_err(patterns, e))?;
    let patterns = read_patterns(std::io::BufReader::new(file))?;
    ensure_dir(out)?;
    let rows = operate_sweep(cfg, &Arc::new(topology), &w, &patterns)?;
    write_csv(&out.join("operate.csv"), cfg, |o| {
        writeln!(o, "{OPERATE_CSV_HEADER}")?;
        for r in &rows {
            writeln!(
                o,
                "{},{},{},{},{},{}",
                r.fraction,
                r.kind.as_str(),
                r.mean_quality,
                r.mean_global_error,
                r.stddev,
                r.reps
            )?;
        }
        Ok(())
    })?;
    Ok(rows)
}

pub const COST_CSV_HEADER: &str =
    "fraction,kind,median_cycles,q1_cycles,q3_cycles,converged,R";

pub fn cmd_learn_faults(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    ensure_dir(out)?;
    let runs = learn_under_faults(cfg)?;
    write_csv(&out.join("learn_faults.csv"), cfg, |o| {
        writeln!(o, "{COST_CSV_HEADER}")?;
        for &kind in &cfg.learn_faults.kinds {
            for &f in &cfg.learn_faults.fractions {
                let group: Vec<&RunRecord> = runs
                    .iter()
                    .filter(|r| r.kind == Some(kind) && r.fraction == f)
                    .collect();
                let s = CostSummary::of(&group);
                writeln!(
                    o,
                    "{},{},{},{},{},{},{}",
                    f,
                    kind.as_str(),
                    s.median,
                    s.q1,
                    s.q3,
                    s.converged,
                    s.reps
                )?;
            }
        }
        Ok(())
    })?;
    write_csv(&out.join("learn_faults_runs.csv"), cfg, |o| write_runs(o, &runs))?;
    wall_summary("learn-faults", &runs);
    Ok(runs)
}

pub const EQUIL_CSV_HEADER: &str = "steps,median_cycles,q1_cycles,q3_cycles,converged,R";

pub fn cmd_equil_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    ensure_dir(out)?;
    let runs = equilibration_sweep(cfg)?;
    write_csv(&out.join("equil_sweep.csv"), cfg, |o| {
        writeln!(o, "{EQUIL_CSV_HEADER}")?;
        for &steps in &cfg.equil_sweep.steps {
            let group: Vec<&RunRecord> =
                runs.iter().filter(|r| r.equilibration_steps == steps).collect();
            let s = CostSummary::of(&group);
            writeln!(o, "{},{},{},{},{},{}", steps, s.median, s.q1, s.q3, s.converged, s.reps)?;
        }
        Ok(())
    })?;
    write_csv(&out.join("equil_sweep_runs.csv"), cfg, |o| write_runs(o, &runs))?;
    wall_summary("equil-sweep", &runs);
    Ok(runs)
}

pub const SPREAD_CSV_HEADER: &str = "layer_pair,stage,mean,std_dev,spread_ratio";

pub fn cmd_hist(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Histogram>, HarnessError> {
    ensure_dir(out)?;
    let (hists, run) = stage_histograms(cfg, 0)?;
    write_csv(&out.join("histograms.csv"), cfg, |o| write_histograms(o, &hists))?;
    write_csv(&out.join("spread.csv"), cfg, |o| {
        writeln!(o, "{SPREAD_CSV_HEADER}")?;
        for h in &hists {
            writeln!(
                o,
                "{},{},{},{},{}",
                h.layer_pair,
                h.stage.as_str(),
                h.mean,
                h.std_dev,
                spread_ratio(&hists, h.layer_pair, h.stage)
            )?;
        }
        Ok(())
    })?;
    wall_summary("hist", std::slice::from_ref(&run.record));
    Ok(hists)
}

#[cfg(test)]
mod tests;
