//! Static network definition: three-layer topology, weights, binary patterns
//! and the layer-synchronous reference forward pass.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::ModelError;

/// Global neuron index. Inputs come first, then hidden, then outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeuronId(pub u32);

impl NeuronId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into the topology's synapse list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SynapseId(pub u32);

impl SynapseId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    Input,
    Hidden,
    Output,
}

/// The two realized layer pairs of a three-layer network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerPair {
    /// input -> hidden
    IH,
    /// hidden -> output
    HO,
}

impl LayerPair {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerPair::IH => "IH",
            LayerPair::HO => "HO",
        }
    }
}

impl fmt::Display for LayerPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LayerPair {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IH" => Ok(LayerPair::IH),
            "HO" => Ok(LayerPair::HO),
            other => Err(ModelError::Parse(format!("unknown layer pair `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Synapse {
    pub pre: NeuronId,
    pub post: NeuronId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub n_input: usize,
    pub n_hidden: usize,
    pub n_output: usize,
    /// Fraction of candidate inter-layer synapses that are realized.
    pub connectivity: f64,
    /// Firing threshold shared by every hidden and output neuron.
    pub threshold: f64,
    /// Standard deviation of the initial Gaussian weights.
    pub weight_sigma: f64,
    pub init_seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            n_input: 5,
            n_hidden: 490,
            n_output: 5,
            connectivity: 0.9,
            threshold: 0.5,
            weight_sigma: 1.0,
            init_seed: 0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_input == 0 || self.n_hidden == 0 || self.n_output == 0 {
            return Err(ModelError::InvalidSpec(format!(
                "every layer needs at least one neuron (got {}-{}-{})",
                self.n_input, self.n_hidden, self.n_output
            )));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(ModelError::InvalidSpec(format!(
                "connectivity must lie in (0, 1], got {}",
                self.connectivity
            )));
        }
        if !self.threshold.is_finite() {
            return Err(ModelError::InvalidSpec("threshold must be finite".into()));
        }
        if !(self.weight_sigma.is_finite() && self.weight_sigma >= 0.0) {
            return Err(ModelError::InvalidSpec(format!(
                "weight sigma must be finite and non-negative, got {}",
                self.weight_sigma
            )));
        }
        let total = self.n_input + self.n_hidden + self.n_output;
        if total > u32::MAX as usize {
            return Err(ModelError::InvalidSpec("too many neurons".into()));
        }
        Ok(())
    }

    pub fn neuron_count(&self) -> usize {
        self.n_input + self.n_hidden + self.n_output
    }
}

/// Realized synapses of a three-layer network, stored in compressed adjacency
/// form in both directions. Synapse ids `0..ih_count` are input->hidden, the
/// rest are hidden->output. Incoming lists are sorted by pre-synaptic id.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    spec: NetworkSpec,
    synapses: Vec<Synapse>,
    ih_count: usize,
    out_offsets: Vec<usize>,
    out_list: Vec<SynapseId>,
    in_offsets: Vec<usize>,
    in_list: Vec<SynapseId>,
}

impl NetworkTopology {
    /// Builds a topology from an explicit synapse list. Every synapse must
    /// join adjacent layers in the forward direction; duplicates are rejected.
    pub fn from_synapses(spec: NetworkSpec, synapses: &[Synapse]) -> Result<Self, ModelError> {
        spec.validate()?;
        let n = spec.n_input;
        let h = spec.n_hidden;
        let total = spec.neuron_count();
        let layer = |id: NeuronId| -> Option<Layer> {
            let i = id.index();
            if i < n {
                Some(Layer::Input)
            } else if i < n + h {
                Some(Layer::Hidden)
            } else if i < total {
                Some(Layer::Output)
            } else {
                None
            }
        };
        let mut ih = Vec::new();
        let mut ho = Vec::new();
        for s in synapses {
            match (layer(s.pre), layer(s.post)) {
                (Some(Layer::Input), Some(Layer::Hidden)) => ih.push(*s),
                (Some(Layer::Hidden), Some(Layer::Output)) => ho.push(*s),
                _ => {
                    return Err(ModelError::InvalidTopology(format!(
                        "synapse {} -> {} does not join adjacent layers forward",
                        s.pre, s.post
                    )))
                }
            }
        }
        let key = |s: &Synapse| (s.pre, s.post);
        ih.sort_by_key(key);
        ho.sort_by_key(key);
        for list in [&ih, &ho] {
            if list.windows(2).any(|w| key(&w[0]) == key(&w[1])) {
                return Err(ModelError::InvalidTopology("duplicate synapse".into()));
            }
        }
        let ih_count = ih.len();
        let mut all = ih;
        all.extend(ho);
        Ok(Self::index(spec, all, ih_count))
    }

    fn index(spec: NetworkSpec, synapses: Vec<Synapse>, ih_count: usize) -> Self {
        let total = spec.neuron_count();
        let mut out_deg = vec![0usize; total + 1];
        let mut in_deg = vec![0usize; total + 1];
        for s in &synapses {
            out_deg[s.pre.index() + 1] += 1;
            in_deg[s.post.index() + 1] += 1;
        }
        for i in 0..total {
            out_deg[i + 1] += out_deg[i];
            in_deg[i + 1] += in_deg[i];
        }
        let mut out_list = vec![SynapseId(0); synapses.len()];
        let mut in_list = vec![SynapseId(0); synapses.len()];
        let mut out_fill = out_deg.clone();
        let mut in_fill = in_deg.clone();
        // Synapses are sorted by (pre, post) within each layer pair, and IH
        // pre-ids precede HO pre-ids, so a single pass keeps incoming lists
        // sorted by pre.
        for (idx, s) in synapses.iter().enumerate() {
            let id = SynapseId(idx as u32);
            out_list[out_fill[s.pre.index()]] = id;
            out_fill[s.pre.index()] += 1;
            in_list[in_fill[s.post.index()]] = id;
            in_fill[s.post.index()] += 1;
        }
        NetworkTopology {
            spec,
            synapses,
            ih_count,
            out_offsets: out_deg,
            out_list,
            in_offsets: in_deg,
            in_list,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn threshold(&self) -> f64 {
        self.spec.threshold
    }

    pub fn neuron_count(&self) -> usize {
        self.spec.neuron_count()
    }

    pub fn n_input(&self) -> usize {
        self.spec.n_input
    }

    pub fn n_hidden(&self) -> usize {
        self.spec.n_hidden
    }

    pub fn n_output(&self) -> usize {
        self.spec.n_output
    }

    pub fn input(&self, i: usize) -> NeuronId {
        debug_assert!(i < self.spec.n_input);
        NeuronId(i as u32)
    }

    pub fn hidden(&self, j: usize) -> NeuronId {
        debug_assert!(j < self.spec.n_hidden);
        NeuronId((self.spec.n_input + j) as u32)
    }

    pub fn output(&self, k: usize) -> NeuronId {
        debug_assert!(k < self.spec.n_output);
        NeuronId((self.spec.n_input + self.spec.n_hidden + k) as u32)
    }

    pub fn layer_of(&self, id: NeuronId) -> Option<Layer> {
        let i = id.index();
        let n = self.spec.n_input;
        let h = self.spec.n_hidden;
        if i < n {
            Some(Layer::Input)
        } else if i < n + h {
            Some(Layer::Hidden)
        } else if i < self.neuron_count() {
            Some(Layer::Output)
        } else {
            None
        }
    }

    /// Position of a neuron inside its own layer.
    pub fn local_index(&self, id: NeuronId) -> Option<(Layer, usize)> {
        let layer = self.layer_of(id)?;
        let i = id.index();
        let local = match layer {
            Layer::Input => i,
            Layer::Hidden => i - self.spec.n_input,
            Layer::Output => i - self.spec.n_input - self.spec.n_hidden,
        };
        Some((layer, local))
    }

    pub fn synapse_count(&self) -> usize {
        self.synapses.len()
    }

    pub fn ih_count(&self) -> usize {
        self.ih_count
    }

    pub fn ho_count(&self) -> usize {
        self.synapses.len() - self.ih_count
    }

    pub fn synapse(&self, id: SynapseId) -> Synapse {
        self.synapses[id.index()]
    }

    pub fn synapses(&self) -> &[Synapse] {
        &self.synapses
    }

    pub fn layer_pair(&self, id: SynapseId) -> LayerPair {
        if id.index() < self.ih_count {
            LayerPair::IH
        } else {
            LayerPair::HO
        }
    }

    pub fn synapse_ids(&self, pair: LayerPair) -> impl Iterator<Item = SynapseId> {
        let range = match pair {
            LayerPair::IH => 0..self.ih_count,
            LayerPair::HO => self.ih_count..self.synapses.len(),
        };
        range.map(|i| SynapseId(i as u32))
    }

    pub fn outgoing(&self, id: NeuronId) -> &[SynapseId] {
        let i = id.index();
        &self.out_list[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    /// Incoming synapses of `id`, sorted by pre-synaptic neuron.
    pub fn incoming(&self, id: NeuronId) -> &[SynapseId] {
        let i = id.index();
        &self.in_list[self.in_offsets[i]..self.in_offsets[i + 1]]
    }

    pub fn find(&self, pre: NeuronId, post: NeuronId) -> Option<SynapseId> {
        if post.index() >= self.neuron_count() {
            return None;
        }
        let incoming = self.incoming(post);
        incoming
            .binary_search_by_key(&pre, |s| self.synapses[s.index()].pre)
            .ok()
            .map(|pos| incoming[pos])
    }

    /// Synapses touching `id` in either direction.
    pub fn incident(&self, id: NeuronId) -> impl Iterator<Item = SynapseId> + '_ {
        self.incoming(id)
            .iter()
            .chain(self.outgoing(id).iter())
            .copied()
    }
}

/// One real weight per realized synapse plus a stuck-at-zero mask. Masked
/// synapses keep their stored value but read as exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    values: Vec<f64>,
    stuck: Vec<bool>,
}

impl WeightMatrix {
    pub fn new(values: Vec<f64>) -> Self {
        let stuck = vec![false; values.len()];
        WeightMatrix { values, stuck }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The stored value, ignoring the fault mask.
    pub fn stored(&self, id: SynapseId) -> f64 {
        self.values[id.index()]
    }

    pub fn effective(&self, id: SynapseId) -> f64 {
        if self.stuck[id.index()] {
            0.0
        } else {
            self.values[id.index()]
        }
    }

    pub fn set(&mut self, id: SynapseId, value: f64) {
        self.values[id.index()] = value;
    }

    pub fn is_stuck(&self, id: SynapseId) -> bool {
        self.stuck[id.index()]
    }

    pub fn set_stuck(&mut self, id: SynapseId, stuck: bool) {
        self.stuck[id.index()] = stuck;
    }

    pub fn stuck_count(&self) -> usize {
        self.stuck.iter().filter(|s| **s).count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stuck_mask(&self) -> &[bool] {
        &self.stuck
    }

    /// Effective weights of one layer pair, in synapse order.
    pub fn effective_in(&self, topology: &NetworkTopology, pair: LayerPair) -> Vec<f64> {
        topology.synapse_ids(pair).map(|s| self.effective(s)).collect()
    }
}

/// Samples the adjacency (independent Bernoulli per candidate edge) and the
/// initial Gaussian weights from `spec.init_seed`.
pub fn build_network(spec: &NetworkSpec) -> Result<(NetworkTopology, WeightMatrix), ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    let n = spec.n_input;
    let h = spec.n_hidden;
    let m = spec.n_output;
    let mut synapses = Vec::new();
    for i in 0..n {
        for j in 0..h {
            if spec.connectivity >= 1.0 || rng.random::<f64>() < spec.connectivity {
                synapses.push(Synapse {
                    pre: NeuronId(i as u32),
                    post: NeuronId((n + j) as u32),
                });
            }
        }
    }
    let ih_count = synapses.len();
    for j in 0..h {
        for k in 0..m {
            if spec.connectivity >= 1.0 || rng.random::<f64>() < spec.connectivity {
                synapses.push(Synapse {
                    pre: NeuronId((n + j) as u32),
                    post: NeuronId((n + h + k) as u32),
                });
            }
        }
    }
    let normal = Normal::new(0.0, spec.weight_sigma)
        .map_err(|e| ModelError::InvalidSpec(format!("weight distribution: {e}")))?;
    let values = (0..synapses.len()).map(|_| normal.sample(&mut rng)).collect();
    let topology = NetworkTopology::index(spec.clone(), synapses, ih_count);
    Ok((topology, WeightMatrix::new(values)))
}

/// Fires every hidden neuron whose summed effective input strictly exceeds
/// the threshold, then every output neuron likewise. Input neurons copy `x`.
pub fn forward_reference(
    topology: &NetworkTopology,
    weights: &WeightMatrix,
    x: &[bool],
) -> Result<Vec<bool>, ModelError> {
    Ok(forward_layers(topology, weights, x)?.1)
}

/// Like [`forward_reference`] but also returns the hidden firing bits.
pub fn forward_layers(
    topology: &NetworkTopology,
    weights: &WeightMatrix,
    x: &[bool],
) -> Result<(Vec<bool>, Vec<bool>), ModelError> {
    let spec = topology.spec();
    if x.len() != spec.n_input {
        return Err(ModelError::DimensionMismatch {
            expected: spec.n_input,
            got: x.len(),
        });
    }
    if weights.len() != topology.synapse_count() {
        return Err(ModelError::DimensionMismatch {
            expected: topology.synapse_count(),
            got: weights.len(),
        });
    }
    let theta = spec.threshold;
    let mut hidden_potential = vec![0.0; spec.n_hidden];
    for s in topology.synapse_ids(LayerPair::IH) {
        let syn = topology.synapse(s);
        if x[syn.pre.index()] {
            hidden_potential[syn.post.index() - spec.n_input] += weights.effective(s);
        }
    }
    let hidden: Vec<bool> = hidden_potential.iter().map(|p| *p > theta).collect();
    let mut output_potential = vec![0.0; spec.n_output];
    let base = spec.n_input + spec.n_hidden;
    for s in topology.synapse_ids(LayerPair::HO) {
        let syn = topology.synapse(s);
        if hidden[syn.pre.index() - spec.n_input] {
            output_potential[syn.post.index() - base] += weights.effective(s);
        }
    }
    let output = output_potential.iter().map(|p| *p > theta).collect();
    Ok((hidden, output))
}

/// A binary input/target pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub id: usize,
    pub input: Vec<bool>,
    pub target: Vec<bool>,
}

impl Pattern {
    pub fn new(id: usize, input: Vec<bool>, target: Vec<bool>) -> Self {
        Pattern { id, input, target }
    }
}

/// Parses a `0`/`1` string into a bit vector.
pub fn parse_bits(s: &str) -> Result<Vec<bool>, ModelError> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(ModelError::Parse(format!("`{other}` is not a binary digit"))),
        })
        .collect()
}

pub fn format_bits(bits: &[bool]) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

/// Draws `count` patterns with pairwise distinct, non-zero inputs and
/// non-zero targets. All-zero inputs are excluded because they can never
/// excite the network; all-zero targets are excluded because a correct
/// silent output leaves nothing to reinforce.
pub fn random_patterns(
    n_input: usize,
    n_output: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Pattern>, ModelError> {
    if n_input == 0 || n_output == 0 {
        return Err(ModelError::InvalidSpec("pattern dimensions must be positive".into()));
    }
    let distinct_inputs = if n_input >= 63 { u64::MAX } else { (1u64 << n_input) - 1 };
    if count as u64 > distinct_inputs {
        return Err(ModelError::InvalidSpec(format!(
            "cannot draw {count} distinct non-zero inputs of width {n_input}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut patterns = Vec::with_capacity(count);
    let draw = |rng: &mut ChaCha8Rng, width: usize| -> Vec<bool> {
        loop {
            let v: Vec<bool> = (0..width).map(|_| rng.random::<bool>()).collect();
            if v.iter().any(|b| *b) {
                return v;
            }
        }
    };
    while patterns.len() < count {
        let input = draw(&mut rng, n_input);
        if !seen.insert(input.clone()) {
            continue;
        }
        let target = draw(&mut rng, n_output);
        patterns.push(Pattern::new(patterns.len(), input, target));
    }
    Ok(patterns)
}

/// Uniformly random binary vector with each bit set with probability 1/2.
pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, width: usize) -> Vec<bool> {
    (0..width).map(|_| rng.random::<bool>()).collect()
}

/// In-place uniform permutation.
pub fn permute<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    items.shuffle(rng);
}
