use std::fmt;
use std::sync::Arc;

use crate::learning::{Rates, Verdict};
use crate::model::NeuronId;
use crate::persist::format_weight;

/// Virtual processor address. `0` is the master; slaves are `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessorId(pub u32);

impl ProcessorId {
    pub const MASTER: ProcessorId = ProcessorId(0);

    pub fn is_master(self) -> bool {
        self.0 == 0
    }

    /// Index into the slave array. Panics on the master.
    pub fn slave_index(self) -> usize {
        assert!(!self.is_master(), "master has no slave index");
        self.0 as usize - 1
    }
}

impl fmt::Display for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Spike,
    PotentialUpdate,
    WarpBack,
    Feedback,
    Control,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Spike => "Spike",
            MessageKind::PotentialUpdate => "PotentialUpdate",
            MessageKind::WarpBack => "WarpBack",
            MessageKind::Feedback => "Feedback",
            MessageKind::Control => "Control",
        }
    }
}

/// Learning instruction broadcast by the master after a cycle. Every hosted
/// neuron uses `verdict`/`rates` unless it is listed in `neurons`, in which
/// case it uses its own verdict with `neuron_rates`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPayload {
    pub verdict: Verdict,
    pub rates: Rates,
    pub neurons: Vec<(NeuronId, Verdict)>,
    pub neuron_rates: Rates,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    /// Clears membrane potentials and activation records.
    BeginCycle,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// `pre` is `None` when the master presents an input bit.
    Spike { pre: Option<NeuronId>, post: NeuronId },
    /// Sent back to `pre` when its spike was credited with exciting `post`.
    PotentialUpdate {
        post: NeuronId,
        pre: NeuronId,
        potential: f64,
    },
    /// `pre` is no longer active; `post` must retract its contribution.
    WarpBack { pre: NeuronId, post: NeuronId },
    Feedback(Arc<FeedbackPayload>),
    Control(Control),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Spike { .. } => MessageKind::Spike,
            Payload::PotentialUpdate { .. } => MessageKind::PotentialUpdate,
            Payload::WarpBack { .. } => MessageKind::WarpBack,
            Payload::Feedback(_) => MessageKind::Feedback,
            Payload::Control(_) => MessageKind::Control,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub src: ProcessorId,
    pub dst: ProcessorId,
    pub payload: Payload,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

impl fmt::Display for Message {
    /// `kind src dst payload...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind().as_str(), self.src, self.dst)?;
        match &self.payload {
            Payload::Spike { pre, post } => match pre {
                Some(pre) => write!(f, " {pre} {post}"),
                None => write!(f, " - {post}"),
            },
            Payload::PotentialUpdate {
                post,
                pre,
                potential,
            } => write!(f, " {post} {pre} {}", format_weight(*potential)),
            Payload::WarpBack { pre, post } => write!(f, " {pre} {post}"),
            Payload::Feedback(fb) => {
                write!(f, " {}", fb.verdict.as_char())?;
                for (n, v) in &fb.neurons {
                    write!(f, " {n}:{}", v.as_char())?;
                }
                Ok(())
            }
            Payload::Control(Control::BeginCycle) => write!(f, " begin"),
        }
    }
}
