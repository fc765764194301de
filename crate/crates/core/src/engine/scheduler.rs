use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::message::Message;
use crate::error::EngineError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeliveryOrder {
    /// Messages due on the same tick are delivered in emission order.
    #[default]
    Fifo,
    /// Messages due on the same tick are delivered in a fresh random order.
    RandomPerStep,
}

impl std::str::FromStr for DeliveryOrder {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fifo" => Ok(DeliveryOrder::Fifo),
            "random" => Ok(DeliveryOrder::RandomPerStep),
            other => Err(EngineError::InvalidPolicy(format!(
                "unknown delivery order `{other}` (expected fifo|random)"
            ))),
        }
    }
}

/// Communication fault model applied to every scheduled message.
#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryPolicy {
    pub order: DeliveryOrder,
    pub drop_probability: f64,
    /// Maximum extra ticks a message may be held back.
    pub max_delay: u64,
    pub seed: u64,
}

impl Default for DeliveryPolicy {
    fn default() -> Self {
        DeliveryPolicy {
            order: DeliveryOrder::Fifo,
            drop_probability: 0.0,
            max_delay: 0,
            seed: 0,
        }
    }
}

impl DeliveryPolicy {
    pub fn fifo() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(EngineError::InvalidPolicy(format!(
                "drop probability {} outside [0, 1]",
                self.drop_probability
            )));
        }
        Ok(())
    }

    pub fn is_reliable_fifo(&self) -> bool {
        self.order == DeliveryOrder::Fifo && self.drop_probability == 0.0 && self.max_delay == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fate {
    Delivered,
    Dropped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub tick: u64,
    pub message: Message,
    pub fate: Fate,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.tick, self.message)?;
        if self.fate == Fate::Dropped {
            f.write_str(" dropped")?;
        }
        Ok(())
    }
}

struct Timed {
    tick: u64,
    key: u64,
    seq: u64,
    message: Message,
}

impl PartialEq for Timed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timed {}

impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timed {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.tick, self.key, self.seq).cmp(&(other.tick, other.key, other.seq))
    }
}

enum Queue {
    /// Reliable FIFO: emission order is delivery order.
    Fifo(VecDeque<(u64, Message)>),
    Timed(BinaryHeap<Reverse<Timed>>),
}

/// Pending-message store for one simulation. Drops are decided when a
/// message is sent and recorded immediately.
pub struct EventScheduler {
    policy: DeliveryPolicy,
    queue: Queue,
    seq: u64,
    now: u64,
    trace: Option<Vec<TraceEntry>>,
    delivered: u64,
    dropped: u64,
}

impl EventScheduler {
    pub fn new(policy: DeliveryPolicy, record_trace: bool) -> Self {
        let queue = if policy.is_reliable_fifo() {
            Queue::Fifo(VecDeque::new())
        } else {
            Queue::Timed(BinaryHeap::new())
        };
        EventScheduler {
            policy,
            queue,
            seq: 0,
            now: 0,
            trace: record_trace.then(Vec::new),
            delivered: 0,
            dropped: 0,
        }
    }

    /// Empties the queue and counters for a new simulation, keeping buffers.
    pub fn reset(&mut self, record_trace: bool) {
        match &mut self.queue {
            Queue::Fifo(q) => q.clear(),
            Queue::Timed(h) => h.clear(),
        }
        self.seq = 0;
        self.now = 0;
        self.delivered = 0;
        self.dropped = 0;
        self.trace = record_trace.then(Vec::new);
    }

    pub fn policy(&self) -> &DeliveryPolicy {
        &self.policy
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn is_idle(&self) -> bool {
        match &self.queue {
            Queue::Fifo(q) => q.is_empty(),
            Queue::Timed(h) => h.is_empty(),
        }
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Records a message handed over outside the lossy network (barriers).
    pub fn record_reliable(&mut self, message: Message) {
        self.delivered += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                tick: self.now,
                message,
                fate: Fate::Delivered,
            });
        }
    }

    pub fn send(&mut self, message: Message, rng: &mut ChaCha8Rng) {
        let p = self.policy.drop_probability;
        if p > 0.0 && (p >= 1.0 || rng.random::<f64>() < p) {
            self.dropped += 1;
            if let Some(trace) = &mut self.trace {
                trace.push(TraceEntry {
                    tick: self.now,
                    message,
                    fate: Fate::Dropped,
                });
            }
            return;
        }
        let delay = if self.policy.max_delay > 0 {
            rng.random_range(0..=self.policy.max_delay)
        } else {
            0
        };
        let tick = self.now + 1 + delay;
        let seq = self.seq;
        self.seq += 1;
        match &mut self.queue {
            Queue::Fifo(q) => q.push_back((tick, message)),
            Queue::Timed(h) => {
                let key = match self.policy.order {
                    DeliveryOrder::Fifo => seq,
                    DeliveryOrder::RandomPerStep => rng.random::<u64>(),
                };
                h.push(Reverse(Timed {
                    tick,
                    key,
                    seq,
                    message,
                }));
            }
        }
    }

    /// Pops the next due message and advances the clock to its tick.
    pub fn next(&mut self) -> Option<Message> {
        let (tick, message) = match &mut self.queue {
            Queue::Fifo(q) => q.pop_front()?,
            Queue::Timed(h) => {
                let Reverse(t) = h.pop()?;
                (t.tick, t.message)
            }
        };
        self.now = tick;
        self.delivered += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                tick,
                message: message.clone(),
                fate: Fate::Delivered,
            });
        }
        Some(message)
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceEntry>> {
        self.trace.take()
    }
}
