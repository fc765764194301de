//! Permanent stuck-at-0 faults: single synapses or whole neurons.
//!
//! Victims are drawn from one shuffled list per population and taken as a
//! prefix, so a larger fraction with the same seed always yields a superset
//! of the victims of a smaller one.

use std::collections::BTreeSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Deployment;
use crate::error::FaultError;
use crate::model::{permute, Layer, NetworkTopology, NeuronId, SynapseId, WeightMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fault {
    SynapseStuckAtZero(SynapseId),
    /// Every synapse incident to the neuron is stuck at zero.
    NodeDead(NeuronId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultPhase {
    /// Present from the first training cycle.
    #[default]
    Learning,
    /// Introduced after fault-free training.
    Operation,
}

impl std::str::FromStr for FaultPhase {
    type Err = FaultError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learning" => Ok(FaultPhase::Learning),
            "operation" => Ok(FaultPhase::Operation),
            other => Err(FaultError::InvalidPlan(format!("unknown phase `{other}`"))),
        }
    }
}

/// How a fractional victim count becomes an integer.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Rounding {
    #[default]
    Floor,
    /// `floor(x + u)` for a fixed `u` in `[0, 1)`. With `u` drawn once per
    /// repetition this is unbiased and stays monotone in the fraction.
    Dither(f64),
}

impl Rounding {
    pub fn count(self, percent: f64, population: usize) -> usize {
        let x = percent / 100.0 * population as f64;
        let u = match self {
            Rounding::Floor => 0.0,
            Rounding::Dither(u) => u,
        };
        // Guard against 0.3/100*1000 = 2.9999999999999996.
        (x + u + 1e-9).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultPlan {
    pub phase: FaultPhase,
    /// Percent of eligible neurons to kill.
    pub node_percent: f64,
    /// Percent of synapses to zero.
    pub synapse_percent: f64,
    pub seed: u64,
    /// Make input neurons eligible for node faults.
    pub include_inputs: bool,
    pub rounding: Rounding,
}

impl Default for FaultPlan {
    fn default() -> Self {
        FaultPlan {
            phase: FaultPhase::Learning,
            node_percent: 0.0,
            synapse_percent: 0.0,
            seed: 0,
            include_inputs: false,
            rounding: Rounding::Floor,
        }
    }
}

impl FaultPlan {
    pub fn validate(&self) -> Result<(), FaultError> {
        for (name, v) in [("node", self.node_percent), ("synapse", self.synapse_percent)] {
            if !(0.0..100.0).contains(&v) {
                return Err(FaultError::InvalidPlan(format!(
                    "{name} fraction {v}% outside [0, 100)"
                )));
            }
        }
        if let Rounding::Dither(u) = self.rounding {
            if !(0.0..1.0).contains(&u) {
                return Err(FaultError::InvalidPlan(format!("dither {u} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Shuffled victim candidates for one network and seed.
#[derive(Clone, Debug)]
pub struct VictimOrder {
    nodes: Vec<NeuronId>,
    synapses: Vec<SynapseId>,
}

impl VictimOrder {
    pub fn new(topology: &NetworkTopology, seed: u64, include_inputs: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes: Vec<NeuronId> = (0..topology.neuron_count())
            .map(|g| NeuronId(g as u32))
            .filter(|&id| include_inputs || topology.layer_of(id) != Some(Layer::Input))
            .collect();
        permute(&mut nodes, &mut rng);
        let mut synapses: Vec<SynapseId> =
            (0..topology.synapse_count()).map(|s| SynapseId(s as u32)).collect();
        permute(&mut synapses, &mut rng);
        VictimOrder { nodes, synapses }
    }

    pub fn node_population(&self) -> usize {
        self.nodes.len()
    }

    pub fn synapse_population(&self) -> usize {
        self.synapses.len()
    }

    /// The first victims of each population as dictated by `plan`.
    pub fn take(&self, plan: &FaultPlan) -> Result<FaultSet, FaultError> {
        plan.validate()?;
        let n_nodes = plan.rounding.count(plan.node_percent, self.nodes.len());
        let n_syn = plan.rounding.count(plan.synapse_percent, self.synapses.len());
        if n_nodes > self.nodes.len() {
            return Err(FaultError::TooManyVictims {
                what: "nodes",
                victims: n_nodes,
                population: self.nodes.len(),
            });
        }
        if n_syn > self.synapses.len() {
            return Err(FaultError::TooManyVictims {
                what: "synapses",
                victims: n_syn,
                population: self.synapses.len(),
            });
        }
        let faults: Vec<Fault> = self.nodes[..n_nodes]
            .iter()
            .map(|&n| Fault::NodeDead(n))
            .chain(self.synapses[..n_syn].iter().map(|&s| Fault::SynapseStuckAtZero(s)))
            .collect();
        Ok(FaultSet::new(plan.phase, faults))
    }
}

/// Samples victims uniformly without replacement. Deterministic in `plan.seed`.
pub fn inject(plan: &FaultPlan, topology: &NetworkTopology) -> Result<FaultSet, FaultError> {
    plan.validate()?;
    VictimOrder::new(topology, plan.seed, plan.include_inputs).take(plan)
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FaultSet {
    phase: FaultPhase,
    faults: BTreeSet<Fault>,
}

impl FaultSet {
    pub fn new(phase: FaultPhase, faults: impl IntoIterator<Item = Fault>) -> Self {
        FaultSet {
            phase,
            faults: faults.into_iter().collect(),
        }
    }

    pub fn phase(&self) -> FaultPhase {
        self.phase
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn faults(&self) -> impl Iterator<Item = &Fault> {
        self.faults.iter()
    }

    pub fn dead_nodes(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.faults.iter().filter_map(|f| match f {
            Fault::NodeDead(n) => Some(*n),
            _ => None,
        })
    }

    /// Every synapse whose effective weight the set forces to zero, ascending.
    pub fn stuck_synapses(&self, topology: &NetworkTopology) -> Result<Vec<SynapseId>, FaultError> {
        let mut out = BTreeSet::new();
        for f in &self.faults {
            match *f {
                Fault::SynapseStuckAtZero(s) => {
                    if s.index() >= topology.synapse_count() {
                        return Err(FaultError::UnknownVictim(format!("synapse {}", s.0)));
                    }
                    out.insert(s);
                }
                Fault::NodeDead(n) => {
                    if n.index() >= topology.neuron_count() {
                        return Err(FaultError::UnknownVictim(format!("neuron {n}")));
                    }
                    out.extend(topology.incident(n));
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    pub fn apply_to_deployment(&self, deployment: &mut Deployment) -> Result<(), FaultError> {
        let topology = deployment.topology().clone();
        for s in self.stuck_synapses(&topology)? {
            deployment
                .set_stuck(s, true)
                .map_err(|e| FaultError::UnknownVictim(e.to_string()))?;
        }
        Ok(())
    }
}

/// Masks the victims of `faults`; stored values are kept.
pub fn apply_faults(
    weights: &WeightMatrix,
    topology: &NetworkTopology,
    faults: &FaultSet,
) -> Result<WeightMatrix, FaultError> {
    let mut out = weights.clone();
    for s in faults.stuck_synapses(topology)? {
        out.set_stuck(s, true);
    }
    Ok(out)
}

pub const FAULT_CSV_HEADER: &str = "kind,id1,id2";

/// `synapse,pre,post` or `node,neuron,` rows.
pub fn write_fault_set<W: Write>(
    mut out: W,
    topology: &NetworkTopology,
    faults: &FaultSet,
) -> std::io::Result<()> {
    writeln!(out, "{FAULT_CSV_HEADER}")?;
    for f in &faults.faults {
        match *f {
            Fault::SynapseStuckAtZero(s) => {
                let syn = topology.synapse(s);
                writeln!(out, "synapse,{},{}", syn.pre, syn.post)?;
            }
            Fault::NodeDead(n) => writeln!(out, "node,{n},")?,
        }
    }
    Ok(())
}

pub fn read_fault_set<R: std::io::BufRead>(
    input: R,
    topology: &NetworkTopology,
    phase: FaultPhase,
) -> Result<FaultSet, FaultError> {
    let mut faults = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| FaultError::Parse(e.to_string()))?;
        if i == 0 || line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let id = |s: &str| -> Result<NeuronId, FaultError> {
            s.parse::<u32>()
                .map(NeuronId)
                .map_err(|_| FaultError::Parse(format!("bad neuron id `{s}`")))
        };
        match cols.as_slice() {
            ["node", n, ""] => faults.push(Fault::NodeDead(id(n)?)),
            ["synapse", a, b] => {
                let (pre, post) = (id(a)?, id(b)?);
                let s = topology
                    .find(pre, post)
                    .ok_or_else(|| FaultError::UnknownVictim(format!("synapse {pre} -> {post}")))?;
                faults.push(Fault::SynapseStuckAtZero(s));
            }
            _ => return Err(FaultError::Parse(format!("line {}: `{line}`", i + 1))),
        }
    }
    Ok(FaultSet::new(phase, faults))
}
