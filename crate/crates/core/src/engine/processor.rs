//! Slave processor: hosts a set of neurons, owns the weights of their incoming
//! synapses and reacts to messages. A slave has no view of any other
//! processor and does not know which layer its neurons belong to.

use super::message::{Control, FeedbackPayload, Message, Payload, ProcessorId};
use crate::error::EngineError;
use crate::learning::{Rates, Verdict};
use crate::model::{NeuronId, SynapseId};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Incoming {
    pub pre: NeuronId,
    pub synapse: SynapseId,
    pub weight: f64,
    pub stuck: bool,
    /// Spikes minus warp-backs received from `pre` this cycle.
    net: i32,
    in_touched: bool,
    /// Credited with exciting the neuron and not retracted since.
    credited: bool,
}

impl Incoming {
    pub(crate) fn new(pre: NeuronId, synapse: SynapseId, weight: f64, stuck: bool) -> Self {
        Incoming {
            pre,
            synapse,
            weight,
            stuck,
            net: 0,
            in_touched: false,
            credited: false,
        }
    }

    fn live(&self) -> bool {
        self.net > 0
    }

    fn effective(&self) -> f64 {
        if self.stuck {
            0.0
        } else {
            self.weight
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target {
    pub post: NeuronId,
    pub host: ProcessorId,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct HostedNeuron {
    pub id: NeuronId,
    /// Sorted by `pre`.
    pub incoming: Vec<Incoming>,
    pub targets: Vec<Target>,
    pub potential: f64,
    pub fired: bool,
    /// Post-synaptic neurons this neuron excited, with the potential they
    /// reported.
    pub activated: Vec<(NeuronId, f64)>,
    touched: Vec<u32>,
    /// `lookup[pre - lookup_base]` is the slot of `pre` in `incoming`.
    lookup_base: u32,
    lookup: Vec<u32>,
}

impl HostedNeuron {
    pub(crate) fn new(id: NeuronId, incoming: Vec<Incoming>, targets: Vec<Target>) -> Self {
        debug_assert!(incoming.windows(2).all(|w| w[0].pre < w[1].pre));
        let base = incoming.first().map_or(0, |i| i.pre.0);
        let span = incoming.last().map_or(0, |i| (i.pre.0 - base) as usize + 1);
        let mut lookup = vec![u32::MAX; span];
        for (slot, inc) in incoming.iter().enumerate() {
            lookup[(inc.pre.0 - base) as usize] = slot as u32;
        }
        HostedNeuron {
            id,
            lookup_base: base,
            lookup,
            incoming,
            targets,
            potential: 0.0,
            fired: false,
            activated: Vec::new(),
            touched: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &slot in &self.touched {
            let inc = &mut self.incoming[slot as usize];
            inc.net = 0;
            inc.in_touched = false;
            inc.credited = false;
        }
        self.touched.clear();
        self.potential = 0.0;
        self.fired = false;
        self.activated.clear();
    }

    fn slot_of(&self, pre: NeuronId) -> Option<usize> {
        let off = pre.0.checked_sub(self.lookup_base)? as usize;
        match self.lookup.get(off) {
            Some(&slot) if slot != u32::MAX => Some(slot as usize),
            _ => None,
        }
    }
}

/// One virtual slave processor.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessorState {
    id: ProcessorId,
    threshold: f64,
    /// Placement stride: hosted neuron `i` is usually global neuron `i·stride + offset`.
    stride: usize,
    /// Sorted by neuron id.
    pub(crate) hosted: Vec<HostedNeuron>,
    updates_applied: usize,
}

impl ProcessorState {
    pub(crate) fn new(
        id: ProcessorId,
        threshold: f64,
        stride: usize,
        hosted: Vec<HostedNeuron>,
    ) -> Self {
        debug_assert!(hosted.windows(2).all(|w| w[0].id < w[1].id));
        ProcessorState {
            id,
            threshold,
            stride: stride.max(1),
            hosted,
            updates_applied: 0,
        }
    }

    pub fn id(&self) -> ProcessorId {
        self.id
    }

    pub fn hosted_neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.hosted.iter().map(|n| n.id)
    }

    pub fn hosts(&self, neuron: NeuronId) -> bool {
        self.local(neuron).is_some()
    }

    pub fn potential(&self, neuron: NeuronId) -> Option<f64> {
        self.local(neuron).map(|i| self.hosted[i].potential)
    }

    pub fn fired(&self, neuron: NeuronId) -> Option<bool> {
        self.local(neuron).map(|i| self.hosted[i].fired)
    }

    /// `activated` record of a hosted neuron: (post-synaptic neuron, reported potential).
    pub fn activated(&self, neuron: NeuronId) -> Option<&[(NeuronId, f64)]> {
        self.local(neuron).map(|i| self.hosted[i].activated.as_slice())
    }

    /// `activatedBy` record of a hosted neuron: pre-synaptic neurons
    /// currently credited with its excitation, in order of first arrival.
    pub fn activated_by(&self, neuron: NeuronId) -> Option<Vec<NeuronId>> {
        self.local(neuron).map(|i| {
            let n = &self.hosted[i];
            n.touched
                .iter()
                .map(|&slot| &n.incoming[slot as usize])
                .filter(|inc| inc.credited)
                .map(|inc| inc.pre)
                .collect()
        })
    }

    /// Number of weights changed by the most recent feedback.
    pub fn updates_applied(&self) -> usize {
        self.updates_applied
    }

    /// Directly sets the potential of a hosted neuron, e.g. to stage a
    /// hand-traced scenario.
    pub fn set_potential(&mut self, neuron: NeuronId, potential: f64, fired: bool) {
        if let Some(i) = self.local(neuron) {
            self.hosted[i].potential = potential;
            self.hosted[i].fired = fired;
        }
    }

    fn local(&self, neuron: NeuronId) -> Option<usize> {
        let guess = neuron.index() / self.stride;
        match self.hosted.get(guess) {
            Some(n) if n.id == neuron => Some(guess),
            _ => self.hosted.binary_search_by_key(&neuron, |n| n.id).ok(),
        }
    }

    fn unknown(&self, neuron: NeuronId) -> EngineError {
        EngineError::UnknownNeuron {
            processor: self.id,
            neuron,
        }
    }

    /// Processes one message and returns the messages it causes.
    pub fn deliver(&mut self, message: &Message) -> Result<Vec<Message>, EngineError> {
        let mut out = Vec::new();
        self.deliver_into(message, &mut out)?;
        Ok(out)
    }

    pub(crate) fn deliver_into(
        &mut self,
        message: &Message,
        out: &mut Vec<Message>,
    ) -> Result<(), EngineError> {
        if message.dst != self.id {
            return Err(EngineError::Protocol {
                processor: self.id,
                reason: format!("message addressed to {}", message.dst),
            });
        }
        match &message.payload {
            Payload::Spike { pre: None, post } => {
                let i = self.local(*post).ok_or_else(|| self.unknown(*post))?;
                if !self.hosted[i].fired {
                    self.hosted[i].fired = true;
                    self.emit_spikes(i, out);
                }
            }
            Payload::Spike {
                pre: Some(pre),
                post,
            } => {
                let i = self.local(*post).ok_or_else(|| self.unknown(*post))?;
                let slot = self.hosted[i].slot_of(*pre).ok_or_else(|| EngineError::Protocol {
                    processor: self.id,
                    reason: format!("spike over non-existent synapse {pre} -> {post}"),
                })?;
                let neuron = &mut self.hosted[i];
                let inc = &mut neuron.incoming[slot];
                inc.net += 1;
                if !inc.in_touched {
                    inc.in_touched = true;
                    neuron.touched.push(slot as u32);
                }
                neuron.potential += inc.effective();
                if neuron.potential > self.threshold {
                    let inc = &mut neuron.incoming[slot];
                    inc.credited = true;
                    out.push(Message {
                        src: self.id,
                        dst: message.src,
                        payload: Payload::PotentialUpdate {
                            post: *post,
                            pre: *pre,
                            potential: neuron.potential,
                        },
                    });
                }
                self.settle(i, out);
            }
            Payload::PotentialUpdate {
                post,
                pre,
                potential,
            } => {
                let i = self.local(*pre).ok_or_else(|| self.unknown(*pre))?;
                self.hosted[i].activated.push((*post, *potential));
            }
            Payload::WarpBack { pre, post } => {
                let i = self.local(*post).ok_or_else(|| self.unknown(*post))?;
                let slot = self.hosted[i].slot_of(*pre).ok_or_else(|| EngineError::Protocol {
                    processor: self.id,
                    reason: format!("warp-back over non-existent synapse {pre} -> {post}"),
                })?;
                let neuron = &mut self.hosted[i];
                let inc = &mut neuron.incoming[slot];
                inc.net -= 1;
                inc.credited = false;
                if !inc.in_touched {
                    inc.in_touched = true;
                    neuron.touched.push(slot as u32);
                }
                neuron.potential -= inc.effective();
                self.settle(i, out);
            }
            Payload::Feedback(fb) => self.apply_feedback(fb),
            Payload::Control(Control::BeginCycle) => {
                for n in &mut self.hosted {
                    n.reset();
                }
                self.updates_applied = 0;
            }
        }
        Ok(())
    }

    /// Brings the fired flag in line with the potential after a change,
    /// emitting spikes on an upward crossing and warp-backs on a downward one.
    fn settle(&mut self, i: usize, out: &mut Vec<Message>) {
        let above = self.hosted[i].potential > self.threshold;
        let fired = self.hosted[i].fired;
        if above && !fired {
            self.hosted[i].fired = true;
            self.emit_spikes(i, out);
        } else if !above && fired {
            self.hosted[i].fired = false;
            let neuron = &self.hosted[i];
            for t in &neuron.targets {
                out.push(Message {
                    src: self.id,
                    dst: t.host,
                    payload: Payload::WarpBack {
                        pre: neuron.id,
                        post: t.post,
                    },
                });
            }
        }
    }

    fn emit_spikes(&self, i: usize, out: &mut Vec<Message>) {
        let neuron = &self.hosted[i];
        for t in &neuron.targets {
            out.push(Message {
                src: self.id,
                dst: t.host,
                payload: Payload::Spike {
                    pre: Some(neuron.id),
                    post: t.post,
                },
            });
        }
    }

    fn apply_feedback(&mut self, fb: &FeedbackPayload) {
        let mut changed = 0;
        for neuron in &mut self.hosted {
            if neuron.incoming.is_empty() {
                continue;
            }
            let (verdict, rates): (Verdict, &Rates) = match fb
                .neurons
                .binary_search_by_key(&neuron.id, |(n, _)| *n)
            {
                Ok(pos) => (fb.neurons[pos].1, &fb.neuron_rates),
                Err(_) => (fb.verdict, &fb.rates),
            };
            for &slot in &neuron.touched {
                let inc = &mut neuron.incoming[slot as usize];
                if inc.stuck || !inc.live() {
                    continue;
                }
                let updated = if neuron.fired {
                    if !inc.credited {
                        continue;
                    }
                    rates.credited(inc.weight, verdict)
                } else {
                    rates.silent(inc.weight, verdict)
                };
                if updated != inc.weight {
                    inc.weight = updated;
                    changed += 1;
                }
            }
        }
        self.updates_applied = changed;
    }

    /// Synapses this processor would update on feedback, split into credited
    /// (post fired) and silent-received (post silent).
    pub(crate) fn collect_records(&self, credited: &mut Vec<SynapseId>, silent: &mut Vec<SynapseId>) {
        for neuron in &self.hosted {
            for &slot in &neuron.touched {
                let inc = &neuron.incoming[slot as usize];
                if !inc.live() {
                    continue;
                }
                if neuron.fired {
                    if inc.credited {
                        credited.push(inc.synapse);
                    }
                } else {
                    silent.push(inc.synapse);
                }
            }
        }
    }
}
