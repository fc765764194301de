//! Feedback-driven training: reinforcement and deinforcement of the synapses
//! recorded during a cycle, equilibration, pattern shuffling and convergence.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ActivationRecords, Deployment, FeedbackPayload};
use crate::error::LearningError;
use crate::faults::{FaultPhase, FaultSet};
use crate::metrics::{error_per_pattern, global_error_of};
use crate::model::{
    forward_reference, permute, random_bits, NetworkTopology, NeuronId, Pattern, WeightMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Success,
    Failure,
}

impl Verdict {
    pub fn from_match(ok: bool) -> Self {
        if ok {
            Verdict::Success
        } else {
            Verdict::Failure
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Verdict::Success => 'S',
            Verdict::Failure => 'F',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Success => "success",
            Verdict::Failure => "failure",
        }
    }
}

/// How a proportional step is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateForm {
    /// `w·(1 ± eta)`: scales the magnitude, so deinforcing a negative weight
    /// raises it.
    Scale,
    /// `w ± eta·|w|`: moves the contribution in the direction of the verdict
    /// whatever the sign.
    #[default]
    Signed,
}

impl std::str::FromStr for UpdateForm {
    type Err = LearningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scale" => Ok(UpdateForm::Scale),
            "signed" => Ok(UpdateForm::Signed),
            other => Err(LearningError::InvalidConfig(format!(
                "unknown update form `{other}` (expected scale|signed)"
            ))),
        }
    }
}

/// Update proportions applied by one neuron to its incoming synapses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub form: UpdateForm,
    pub reinforce: f64,
    pub deinforce: f64,
    /// Proportional push `w + explore·|w|` on synapses that reached a silent
    /// neuron whose verdict is failure. Zero disables it.
    pub explore: f64,
    /// Upper bound on `|w|` after an increase.
    pub cap: f64,
}

impl Rates {
    /// Plain `w·(1 ± eta)` with no exploration and no cap.
    pub fn multiplicative(reinforce: f64, deinforce: f64) -> Self {
        Rates {
            form: UpdateForm::Scale,
            reinforce,
            deinforce,
            explore: 0.0,
            cap: f64::INFINITY,
        }
    }

    fn scale_of(&self, w: f64) -> f64 {
        match self.form {
            UpdateForm::Scale => w,
            UpdateForm::Signed => w.abs(),
        }
    }

    fn clip(&self, w: f64) -> f64 {
        w.clamp(-self.cap, self.cap)
    }

    /// New weight of a synapse credited with exciting a fired neuron.
    pub fn credited(&self, w: f64, verdict: Verdict) -> f64 {
        match verdict {
            Verdict::Success => self.clip(w + self.reinforce * self.scale_of(w)),
            Verdict::Failure => self.clip(w - self.deinforce * self.scale_of(w)),
        }
    }

    /// New weight of a synapse that delivered a spike to a neuron that stayed silent.
    pub fn silent(&self, w: f64, verdict: Verdict) -> f64 {
        match verdict {
            Verdict::Failure if self.explore > 0.0 => self.clip(w + self.explore * w.abs()),
            _ => w,
        }
    }
}

/// Who receives which verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    /// One verdict per pattern for every neuron.
    Pattern,
    /// Output neurons are judged on their own bit; hidden neurons on the pattern.
    #[default]
    Neuron,
}

impl std::str::FromStr for FeedbackMode {
    type Err = LearningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pattern" => Ok(FeedbackMode::Pattern),
            "neuron" => Ok(FeedbackMode::Neuron),
            other => Err(LearningError::InvalidConfig(format!(
                "unknown feedback mode `{other}` (expected pattern|neuron)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Output-layer rates (all layers in `pattern` mode).
    pub eta_reinforce: f64,
    pub eta_deinforce: f64,
    pub eta_explore: f64,
    /// Hidden-layer rates in `neuron` mode.
    pub hidden_eta_reinforce: f64,
    pub hidden_eta_deinforce: f64,
    pub hidden_eta_explore: f64,
    /// Deinforcement proportion used by equilibration, all layers.
    pub eta_equilibrate: f64,
    pub weight_cap: f64,
    /// Update form of the output layer (all layers in `pattern` mode).
    pub form: UpdateForm,
    /// Update form of the hidden layer in `neuron` mode.
    pub hidden_form: UpdateForm,
    pub feedback: FeedbackMode,
    pub max_cycles: usize,
    /// Minimum cycles between reshuffles of the pattern order; 0 never reshuffles.
    pub shuffle_period: usize,
    pub equilibration_steps: usize,
    /// Keep a copy of the weights every this many cycles; 0 keeps none.
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            eta_reinforce: 0.001,
            eta_deinforce: 0.2,
            eta_explore: 0.2,
            hidden_eta_reinforce: 0.0005,
            hidden_eta_deinforce: 0.01,
            hidden_eta_explore: 0.001,
            eta_equilibrate: 0.0003,
            weight_cap: 4.0,
            form: UpdateForm::Signed,
            hidden_form: UpdateForm::Signed,
            feedback: FeedbackMode::Neuron,
            max_cycles: 20_000,
            shuffle_period: 1,
            equilibration_steps: 0,
            snapshot_every: 0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// The bare rule: every recorded synapse scaled by `1 ± eta` on the
    /// pattern verdict, nothing else.
    pub fn multiplicative(eta_reinforce: f64, eta_deinforce: f64) -> Self {
        TrainingConfig {
            eta_reinforce,
            eta_deinforce,
            eta_explore: 0.0,
            hidden_eta_reinforce: eta_reinforce,
            hidden_eta_deinforce: eta_deinforce,
            hidden_eta_explore: 0.0,
            eta_equilibrate: eta_deinforce,
            weight_cap: f64::INFINITY,
            form: UpdateForm::Scale,
            hidden_form: UpdateForm::Scale,
            feedback: FeedbackMode::Pattern,
            ..TrainingConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), LearningError> {
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(LearningError::InvalidConfig(format!("{name} = {v} outside (0, 1)")))
            }
        };
        open("eta_reinforce", self.eta_reinforce)?;
        open("eta_deinforce", self.eta_deinforce)?;
        open("eta_equilibrate", self.eta_equilibrate)?;
        if self.feedback == FeedbackMode::Neuron {
            open("hidden_eta_reinforce", self.hidden_eta_reinforce)?;
            open("hidden_eta_deinforce", self.hidden_eta_deinforce)?;
        }
        for (name, v) in [
            ("eta_explore", self.eta_explore),
            ("hidden_eta_explore", self.hidden_eta_explore),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(LearningError::InvalidConfig(format!("{name} = {v} outside [0, 1)")));
            }
        }
        if self.weight_cap.is_nan() || self.weight_cap <= 0.0 {
            return Err(LearningError::InvalidConfig(format!(
                "weight_cap = {} must be positive",
                self.weight_cap
            )));
        }
        Ok(())
    }

    pub fn output_rates(&self) -> Rates {
        Rates {
            form: self.form,
            reinforce: self.eta_reinforce,
            deinforce: self.eta_deinforce,
            explore: self.eta_explore,
            cap: self.weight_cap,
        }
    }

    pub fn equilibration_rates(&self) -> Rates {
        Rates {
            form: UpdateForm::Scale,
            reinforce: 0.0,
            deinforce: self.eta_equilibrate,
            explore: 0.0,
            cap: self.weight_cap,
        }
    }

    pub fn hidden_rates(&self) -> Rates {
        match self.feedback {
            FeedbackMode::Pattern => self.output_rates(),
            FeedbackMode::Neuron => Rates {
                form: self.hidden_form,
                reinforce: self.hidden_eta_reinforce,
                deinforce: self.hidden_eta_deinforce,
                explore: self.hidden_eta_explore,
                cap: self.weight_cap,
            },
        }
    }
}

/// The master's judgement of one cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackSignal {
    pub verdict: Verdict,
    /// Per-output-neuron verdicts, in output order.
    pub outputs: Vec<Verdict>,
}

impl FeedbackSignal {
    pub fn judge(output: &[bool], target: &[bool]) -> Self {
        let outputs: Vec<Verdict> = output
            .iter()
            .zip(target)
            .map(|(y, d)| Verdict::from_match(y == d))
            .collect();
        FeedbackSignal {
            verdict: Verdict::from_match(output == target),
            outputs,
        }
    }

    /// Failure everywhere, as used by equilibration.
    pub fn failure(m: usize) -> Self {
        FeedbackSignal {
            verdict: Verdict::Failure,
            outputs: vec![Verdict::Failure; m],
        }
    }

    /// Builds the message body the master broadcasts for this signal.
    pub fn payload(&self, topology: &NetworkTopology, config: &TrainingConfig) -> FeedbackPayload {
        match config.feedback {
            FeedbackMode::Pattern => FeedbackPayload {
                verdict: self.verdict,
                rates: config.output_rates(),
                neurons: Vec::new(),
                neuron_rates: config.output_rates(),
            },
            FeedbackMode::Neuron => FeedbackPayload {
                verdict: self.verdict,
                rates: config.hidden_rates(),
                neurons: self
                    .outputs
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (topology.output(k), *v))
                    .collect(),
                neuron_rates: config.output_rates(),
            },
        }
    }
}

fn rates_for(payload: &FeedbackPayload, post: NeuronId) -> (Verdict, &Rates) {
    match payload.neurons.binary_search_by_key(&post, |(n, _)| *n) {
        Ok(i) => (payload.neurons[i].1, &payload.neuron_rates),
        Err(_) => (payload.verdict, &payload.rates),
    }
}

/// Applies `payload` to the synapses in `records`. Stuck synapses and
/// synapses absent from the records are left alone. Returns the number of
/// weights that changed.
pub fn apply_feedback(
    weights: &mut WeightMatrix,
    topology: &NetworkTopology,
    records: &ActivationRecords,
    payload: &FeedbackPayload,
) -> Result<usize, LearningError> {
    if payload.verdict == Verdict::Success && records.credited.is_empty() {
        return Err(LearningError::EmptySuccess);
    }
    let mut changed = 0;
    let mut update = |weights: &mut WeightMatrix, s, f: &dyn Fn(&Rates, f64, Verdict) -> f64| {
        if weights.is_stuck(s) {
            return;
        }
        let (verdict, rates) = rates_for(payload, topology.synapse(s).post);
        let old = weights.stored(s);
        let new = f(rates, old, verdict);
        if new != old {
            weights.set(s, new);
            changed += 1;
        }
    };
    for &s in &records.credited {
        update(weights, s, &|r, w, v| r.credited(w, v));
    }
    for &s in &records.silent_received {
        update(weights, s, &|r, w, v| r.silent(w, v));
    }
    Ok(changed)
}

/// A uniformly permuted copy of `patterns`.
pub fn shuffle_patterns(patterns: &[Pattern], rng: &mut ChaCha8Rng) -> Vec<Pattern> {
    let mut out = patterns.to_vec();
    permute(&mut out, rng);
    out
}

/// Presents `steps` uniformly random inputs and deinforces whatever fired,
/// regardless of output. Returns the number of weight changes.
pub fn equilibrate(
    deployment: &mut Deployment,
    steps: usize,
    config: &TrainingConfig,
    seed: u64,
) -> Result<usize, LearningError> {
    let topology = deployment.topology().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = config.equilibration_rates();
    let payload = FeedbackPayload {
        verdict: Verdict::Failure,
        rates,
        neurons: Vec::new(),
        neuron_rates: rates,
    };
    let mut changed = 0;
    for _ in 0..steps {
        let x = random_bits(&mut rng, topology.n_input());
        deployment.run_cycle(&x)?;
        changed += deployment.broadcast_feedback(&payload)?.weights_changed;
    }
    Ok(changed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleLog {
    pub cycle: usize,
    pub pattern_id: usize,
    pub verdict: Verdict,
    /// Global error over the most recent output seen for every pattern.
    pub global_error: f64,
    pub weights_changed: usize,
}

#[derive(Clone, Debug)]
pub struct TrainingResult {
    pub converged: bool,
    pub cycles_used: usize,
    pub log: Vec<CycleLog>,
    pub snapshots: Vec<(usize, WeightMatrix)>,
}

/// Whether every pattern is reproduced by the layer-synchronous reference.
pub fn recalls_all(
    topology: &NetworkTopology,
    weights: &WeightMatrix,
    patterns: &[Pattern],
) -> Result<bool, LearningError> {
    for p in patterns {
        if forward_reference(topology, weights, &p.input)? != p.target {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_shapes(topology: &NetworkTopology, patterns: &[Pattern]) -> Result<(), LearningError> {
    if patterns.is_empty() {
        return Err(LearningError::NoPatterns);
    }
    let (n, m) = (topology.n_input(), topology.n_output());
    for p in patterns {
        if p.input.len() != n || p.target.len() != m {
            return Err(LearningError::PatternShape {
                id: p.id,
                input: p.input.len(),
                target: p.target.len(),
                n,
                m,
            });
        }
    }
    Ok(())
}

/// Trains until one full pass over the patterns succeeds on every cycle and
/// the reference forward pass confirms recall at the final weights, or until
/// `max_cycles` cycles have been spent.
///
/// Learning-phase faults in `faults` are applied before the first cycle.
pub fn train(
    deployment: &mut Deployment,
    patterns: &[Pattern],
    config: &TrainingConfig,
    faults: Option<&FaultSet>,
) -> Result<TrainingResult, LearningError> {
    config.validate()?;
    let topology = deployment.topology().clone();
    check_shapes(&topology, patterns)?;
    if let Some(fs) = faults {
        if fs.phase() != FaultPhase::Learning {
            return Err(LearningError::WrongPhase);
        }
        fs.apply_to_deployment(deployment)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut result = TrainingResult {
        converged: false,
        cycles_used: 0,
        log: Vec::new(),
        snapshots: Vec::new(),
    };

    let initial = deployment.weights();
    if recalls_all(&topology, &initial, patterns)? {
        result.converged = true;
        return Ok(result);
    }
    let mut last_error: Vec<f64> = Vec::with_capacity(patterns.len());
    for p in patterns {
        let y = forward_reference(&topology, &initial, &p.input)?;
        last_error.push(error_per_pattern(&p.target, &y).expect("shapes checked"));
    }
    let slot_of: std::collections::HashMap<usize, usize> =
        patterns.iter().enumerate().map(|(i, p)| (p.id, i)).collect();

    let mut order: Vec<Pattern> = patterns.to_vec();
    let mut last_shuffle = 0;
    let mut cycle = 0;
    while cycle < config.max_cycles {
        let mut clean = true;
        for p in &order {
            if cycle == config.max_cycles {
                clean = false;
                break;
            }
            let outcome = deployment.run_cycle(&p.input)?;
            let signal = FeedbackSignal::judge(&outcome.output, &p.target);
            let payload = signal.payload(&topology, config);
            let fb = deployment.broadcast_feedback(&payload)?;
            cycle += 1;
            clean &= signal.verdict == Verdict::Success;
            last_error[slot_of[&p.id]] =
                error_per_pattern(&p.target, &outcome.output).expect("shapes checked");
            result.log.push(CycleLog {
                cycle,
                pattern_id: p.id,
                verdict: signal.verdict,
                global_error: global_error_of(&last_error),
                weights_changed: fb.weights_changed,
            });
            if config.snapshot_every > 0 && cycle % config.snapshot_every == 0 {
                result.snapshots.push((cycle, deployment.weights()));
            }
        }
        if clean && recalls_all(&topology, &deployment.weights(), patterns)? {
            result.converged = true;
            break;
        }
        if config.shuffle_period > 0 && cycle - last_shuffle >= config.shuffle_period {
            order = shuffle_patterns(&order, &mut rng);
            last_shuffle = cycle;
        }
    }
    result.cycles_used = cycle;
    Ok(result)
}

pub const TRAINING_LOG_HEADER: &str = "cycle,pattern_id,verdict,global_error,weights_changed";

pub fn write_training_log<W: Write>(mut out: W, log: &[CycleLog]) -> std::io::Result<()> {
    writeln!(out, "{TRAINING_LOG_HEADER}")?;
    for row in log {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.cycle,
            row.pattern_id,
            row.verdict.as_str(),
            row.global_error,
            row.weights_changed
        )?;
    }
    Ok(())
}
