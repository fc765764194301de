//! Discrete-event simulation of the distributed network: a master and a set
//! of slave processors that interact only through [`Message`] values.

mod message;
mod processor;
mod scheduler;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use message::{Control, FeedbackPayload, Message, MessageKind, Payload, ProcessorId};
pub use processor::{ProcessorState, Target};
pub use scheduler::{DeliveryOrder, DeliveryPolicy, EventScheduler, Fate, TraceEntry};

use crate::error::EngineError;
use crate::model::{NetworkTopology, NeuronId, SynapseId, WeightMatrix};
use processor::{HostedNeuron, Incoming};

pub const DEFAULT_TICK_BUDGET: u64 = 1_000_000;

/// The master's directory: which slave hosts each input and output neuron.
/// It knows nothing else about the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterState {
    pub inputs: Vec<(NeuronId, ProcessorId)>,
    pub outputs: Vec<(NeuronId, ProcessorId)>,
    pub n_slaves: usize,
}

/// Round-robin placement: neuron `g` lives on slave `g mod n_slaves`.
pub fn host_of(neuron: NeuronId, n_slaves: usize) -> ProcessorId {
    ProcessorId((neuron.index() % n_slaves) as u32 + 1)
}

/// Partitions the network across `n_slaves` slaves. Each slave receives the
/// incoming weights and outgoing target table of the neurons it hosts.
pub fn map_network(
    topology: &NetworkTopology,
    weights: &WeightMatrix,
    n_slaves: usize,
) -> Result<(MasterState, Vec<ProcessorState>), EngineError> {
    let neurons = topology.neuron_count();
    if n_slaves == 0 || n_slaves > neurons {
        return Err(EngineError::Mapping {
            slaves: n_slaves,
            reason: format!("need between 1 and {neurons} slaves"),
        });
    }
    if weights.len() != topology.synapse_count() {
        return Err(EngineError::Mapping {
            slaves: n_slaves,
            reason: format!(
                "{} weights for {} synapses",
                weights.len(),
                topology.synapse_count()
            ),
        });
    }
    let mut hosted: Vec<Vec<HostedNeuron>> = (0..n_slaves).map(|_| Vec::new()).collect();
    for g in 0..neurons {
        let id = NeuronId(g as u32);
        let incoming = topology
            .incoming(id)
            .iter()
            .map(|&s| {
                Incoming::new(
                    topology.synapse(s).pre,
                    s,
                    weights.stored(s),
                    weights.is_stuck(s),
                )
            })
            .collect();
        let targets = topology
            .outgoing(id)
            .iter()
            .map(|&s| {
                let post = topology.synapse(s).post;
                Target {
                    post,
                    host: host_of(post, n_slaves),
                }
            })
            .collect();
        hosted[g % n_slaves].push(HostedNeuron::new(id, incoming, targets));
    }
    let threshold = topology.threshold();
    let slaves = hosted
        .into_iter()
        .enumerate()
        .map(|(i, h)| ProcessorState::new(ProcessorId(i as u32 + 1), threshold, n_slaves, h))
        .collect();
    let directory = |ids: Vec<NeuronId>| {
        ids.into_iter()
            .map(|id| (id, host_of(id, n_slaves)))
            .collect::<Vec<_>>()
    };
    let master = MasterState {
        inputs: directory((0..topology.n_input()).map(|i| topology.input(i)).collect()),
        outputs: directory((0..topology.n_output()).map(|k| topology.output(k)).collect()),
        n_slaves,
    };
    Ok((master, slaves))
}

/// One Spike per set input bit, addressed to the host of that input neuron.
pub fn present_input(master: &MasterState, x: &[bool]) -> Result<Vec<Message>, EngineError> {
    if x.len() != master.inputs.len() {
        return Err(EngineError::DimensionMismatch {
            expected: master.inputs.len(),
            got: x.len(),
        });
    }
    Ok(master
        .inputs
        .iter()
        .zip(x)
        .filter(|(_, &bit)| bit)
        .map(|(&(post, host), _)| Message {
            src: ProcessorId::MASTER,
            dst: host,
            payload: Payload::Spike { pre: None, post },
        })
        .collect())
}

/// Synapses touched by a cycle, as seen by the slaves at quiescence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivationRecords {
    /// Neurons firing at quiescence, ascending.
    pub fired: Vec<NeuronId>,
    /// Synapses credited with exciting a fired neuron, ascending.
    pub credited: Vec<SynapseId>,
    /// Synapses that carried a live spike into a silent neuron, ascending.
    pub silent_received: Vec<SynapseId>,
}

impl ActivationRecords {
    pub fn is_empty(&self) -> bool {
        self.credited.is_empty() && self.silent_received.is_empty()
    }
}

/// Result of one cycle. Activation records stay on the slaves until the next
/// cycle; gather them with [`Deployment::records`].
#[derive(Clone, Debug)]
pub struct CycleOutcome {
    pub output: Vec<bool>,
    pub trace: Option<Vec<TraceEntry>>,
    pub delivered: u64,
    pub dropped: u64,
}

/// A mapped network plus its communication environment.
pub struct Deployment {
    topology: Arc<NetworkTopology>,
    master: MasterState,
    slaves: Vec<ProcessorState>,
    policy: DeliveryPolicy,
    rng: ChaCha8Rng,
    tick_budget: u64,
    record_trace: bool,
    /// Reused between cycles to keep its buffers.
    spare: Option<EventScheduler>,
}

impl Deployment {
    pub fn new(
        topology: Arc<NetworkTopology>,
        weights: &WeightMatrix,
        n_slaves: usize,
        policy: DeliveryPolicy,
    ) -> Result<Self, EngineError> {
        policy.validate()?;
        let (master, slaves) = map_network(&topology, weights, n_slaves)?;
        let rng = ChaCha8Rng::seed_from_u64(policy.seed);
        Ok(Deployment {
            topology,
            master,
            slaves,
            policy,
            rng,
            tick_budget: DEFAULT_TICK_BUDGET,
            record_trace: false,
            spare: None,
        })
    }

    pub fn with_tick_budget(mut self, budget: u64) -> Self {
        self.tick_budget = budget;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn topology(&self) -> &Arc<NetworkTopology> {
        &self.topology
    }

    pub fn master(&self) -> &MasterState {
        &self.master
    }

    pub fn slaves(&self) -> &[ProcessorState] {
        &self.slaves
    }

    pub fn slaves_mut(&mut self) -> &mut [ProcessorState] {
        &mut self.slaves
    }

    pub fn policy(&self) -> &DeliveryPolicy {
        &self.policy
    }

    /// Replaces the delivery policy and reseeds the delivery RNG.
    pub fn set_policy(&mut self, policy: DeliveryPolicy) -> Result<(), EngineError> {
        policy.validate()?;
        self.rng = ChaCha8Rng::seed_from_u64(policy.seed);
        self.policy = policy;
        self.spare = None;
        Ok(())
    }

    /// Presents `x`, drains the scheduler to quiescence and reads the output
    /// neurons at the barrier.
    pub fn run_cycle(&mut self, x: &[bool]) -> Result<CycleOutcome, EngineError> {
        let spikes = present_input(&self.master, x)?;
        let mut sched = self.scheduler();
        for slave in &mut self.slaves {
            let begin = Message {
                src: ProcessorId::MASTER,
                dst: slave.id(),
                payload: Payload::Control(Control::BeginCycle),
            };
            slave.deliver_into(&begin, &mut Vec::new())?;
            sched.record_reliable(begin);
        }
        for m in spikes {
            sched.send(m, &mut self.rng);
        }
        self.drain(&mut sched)?;

        let output = self
            .master
            .outputs
            .iter()
            .map(|&(id, host)| {
                self.slaves[host.slave_index()]
                    .fired(id)
                    .expect("directory points at the hosting slave")
            })
            .collect();
        let outcome = CycleOutcome {
            output,
            trace: sched.take_trace(),
            delivered: sched.delivered(),
            dropped: sched.dropped(),
        };
        self.spare = Some(sched);
        Ok(outcome)
    }

    fn scheduler(&mut self) -> EventScheduler {
        match self.spare.take() {
            Some(mut s) => {
                s.reset(self.record_trace);
                s
            }
            None => EventScheduler::new(self.policy.clone(), self.record_trace),
        }
    }

    fn drain(&mut self, sched: &mut EventScheduler) -> Result<(), EngineError> {
        let mut out = Vec::new();
        while let Some(msg) = sched.next() {
            if sched.delivered() > self.tick_budget {
                return Err(EngineError::TickBudgetExceeded {
                    budget: self.tick_budget,
                });
            }
            if msg.dst.is_master() {
                return Err(EngineError::Protocol {
                    processor: msg.src,
                    reason: format!("unexpected message to master: {msg}"),
                });
            }
            let idx = msg.dst.slave_index();
            let slave = self.slaves.get_mut(idx).ok_or_else(|| EngineError::Protocol {
                processor: msg.src,
                reason: format!("no slave {}", msg.dst),
            })?;
            slave.deliver_into(&msg, &mut out)?;
            for m in out.drain(..) {
                sched.send(m, &mut self.rng);
            }
        }
        Ok(())
    }

    /// Activation records of the most recent cycle.
    pub fn records(&self) -> ActivationRecords {
        let mut rec = ActivationRecords::default();
        for slave in &self.slaves {
            slave.collect_records(&mut rec.credited, &mut rec.silent_received);
            rec.fired.extend(
                slave
                    .hosted
                    .iter()
                    .filter(|n| n.fired)
                    .map(|n| n.id),
            );
        }
        rec.fired.sort_unstable();
        rec.credited.sort_unstable();
        rec.silent_received.sort_unstable();
        rec
    }

    /// Sends `payload` to every slave over the (possibly lossy) network and
    /// returns the total number of weights changed.
    pub fn broadcast_feedback(
        &mut self,
        payload: &FeedbackPayload,
    ) -> Result<FeedbackOutcome, EngineError> {
        let payload = Arc::new(payload.clone());
        let mut sched = self.scheduler();
        for slave in &self.slaves {
            sched.send(
                Message {
                    src: ProcessorId::MASTER,
                    dst: slave.id(),
                    payload: Payload::Feedback(Arc::clone(&payload)),
                },
                &mut self.rng,
            );
        }
        let dropped = sched.dropped();
        let mut changed = 0;
        while let Some(msg) = sched.next() {
            let slave = &mut self.slaves[msg.dst.slave_index()];
            slave.deliver_into(&msg, &mut Vec::new())?;
            changed += slave.updates_applied();
        }
        let trace = sched.take_trace();
        self.spare = Some(sched);
        Ok(FeedbackOutcome {
            weights_changed: changed,
            dropped,
            trace,
        })
    }

    /// Gathers the distributed weights, including the fault mask.
    pub fn weights(&self) -> WeightMatrix {
        let n = self.topology.synapse_count();
        let mut w = WeightMatrix::new(vec![0.0; n]);
        for slave in &self.slaves {
            for neuron in &slave.hosted {
                for inc in &neuron.incoming {
                    w.set(inc.synapse, inc.weight);
                    w.set_stuck(inc.synapse, inc.stuck);
                }
            }
        }
        w
    }

    fn incoming_mut(&mut self, id: SynapseId) -> Option<&mut Incoming> {
        if id.index() >= self.topology.synapse_count() {
            return None;
        }
        let syn = self.topology.synapse(id);
        let host = host_of(syn.post, self.master.n_slaves);
        let slave = &mut self.slaves[host.slave_index()];
        let i = slave.hosted.binary_search_by_key(&syn.post, |n| n.id).ok()?;
        let neuron = &mut slave.hosted[i];
        let slot = neuron.incoming.binary_search_by_key(&syn.pre, |inc| inc.pre).ok()?;
        Some(&mut neuron.incoming[slot])
    }

    /// Marks a synapse stuck at zero (or clears the mark). The stored value is kept.
    pub fn set_stuck(&mut self, id: SynapseId, stuck: bool) -> Result<(), EngineError> {
        let inc = self.incoming_mut(id).ok_or_else(|| EngineError::Protocol {
            processor: ProcessorId::MASTER,
            reason: format!("no synapse {}", id.0),
        })?;
        inc.stuck = stuck;
        Ok(())
    }

    /// Overwrites every stored weight and mask bit from `weights`.
    pub fn load_weights(&mut self, weights: &WeightMatrix) -> Result<(), EngineError> {
        if weights.len() != self.topology.synapse_count() {
            return Err(EngineError::DimensionMismatch {
                expected: self.topology.synapse_count(),
                got: weights.len(),
            });
        }
        for slave in &mut self.slaves {
            for neuron in &mut slave.hosted {
                for inc in &mut neuron.incoming {
                    inc.weight = weights.stored(inc.synapse);
                    inc.stuck = weights.is_stuck(inc.synapse);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct FeedbackOutcome {
    pub weights_changed: usize,
    pub dropped: u64,
    pub trace: Option<Vec<TraceEntry>>,
}
