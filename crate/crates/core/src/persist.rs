//! Text weight files.
//!
//! ```text
//! neurofault-weights v1 <n> <n_hidden> <m> <threshold>
//! IH <i> <j> <w>
//! HO <j> <k> <w>
//! ```
//!
//! Indices are local to their layer. Weights are printed with 17 significant
//! digits so a load reproduces every bit of the stored value. The fault mask
//! is not persisted.

use std::io::{BufRead, Write};

use crate::error::ModelError;
use crate::model::{LayerPair, NetworkSpec, NetworkTopology, NeuronId, Synapse, WeightMatrix};

const MAGIC: &str = "neurofault-weights";
const VERSION: &str = "v1";

/// 17 significant digits.
pub fn format_weight(w: f64) -> String {
    format!("{w:.16e}")
}

pub fn write_weights<W: Write>(
    mut out: W,
    topology: &NetworkTopology,
    weights: &WeightMatrix,
) -> std::io::Result<()> {
    let spec = topology.spec();
    writeln!(
        out,
        "{MAGIC} {VERSION} {} {} {} {}",
        spec.n_input,
        spec.n_hidden,
        spec.n_output,
        format_weight(spec.threshold)
    )?;
    for (idx, syn) in topology.synapses().iter().enumerate() {
        let id = crate::model::SynapseId(idx as u32);
        let (pair, a, b) = match topology.layer_pair(id) {
            LayerPair::IH => (
                "IH",
                syn.pre.index(),
                syn.post.index() - spec.n_input,
            ),
            LayerPair::HO => (
                "HO",
                syn.pre.index() - spec.n_input,
                syn.post.index() - spec.n_input - spec.n_hidden,
            ),
        };
        writeln!(out, "{pair} {a} {b} {}", format_weight(weights.stored(id)))?;
    }
    Ok(())
}

pub fn weights_to_string(topology: &NetworkTopology, weights: &WeightMatrix) -> String {
    let mut buf = Vec::new();
    write_weights(&mut buf, topology, weights).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("weight file is ASCII")
}

/// Reads a weight file. The returned spec carries the file's layer sizes and
/// threshold; connectivity is the realized fraction.
pub fn read_weights<R: BufRead>(input: R) -> Result<(NetworkTopology, WeightMatrix), ModelError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| ModelError::Parse("empty weight file".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != MAGIC {
        return Err(ModelError::Parse(format!("bad header `{header}`")));
    }
    if fields[1] != VERSION {
        return Err(ModelError::Parse(format!("unsupported version `{}`", fields[1])));
    }
    let num = |s: &str| -> Result<usize, ModelError> {
        s.parse()
            .map_err(|_| ModelError::Parse(format!("bad integer `{s}`")))
    };
    let n = num(fields[2])?;
    let h = num(fields[3])?;
    let m = num(fields[4])?;
    let threshold: f64 = fields[5]
        .parse()
        .map_err(|_| ModelError::Parse(format!("bad threshold `{}`", fields[5])))?;

    let mut synapses = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(ModelError::Parse(format!("line {}: `{line}`", lineno + 2)));
        }
        let pair: LayerPair = parts[0].parse()?;
        let a = num(parts[1])?;
        let b = num(parts[2])?;
        let w: f64 = parts[3]
            .parse()
            .map_err(|_| ModelError::Parse(format!("bad weight `{}`", parts[3])))?;
        let (pre, post) = match pair {
            LayerPair::IH if a < n && b < h => (a, n + b),
            LayerPair::HO if a < h && b < m => (n + a, n + h + b),
            _ => {
                return Err(ModelError::Parse(format!(
                    "line {}: index out of range",
                    lineno + 2
                )))
            }
        };
        synapses.push(Synapse {
            pre: NeuronId(pre as u32),
            post: NeuronId(post as u32),
        });
        values.push(w);
    }
    let possible = (n * h + h * m) as f64;
    let spec = NetworkSpec {
        n_input: n,
        n_hidden: h,
        n_output: m,
        connectivity: (synapses.len() as f64 / possible).clamp(f64::MIN_POSITIVE, 1.0),
        threshold,
        weight_sigma: 1.0,
        init_seed: 0,
    };
    let topology = NetworkTopology::from_synapses(spec, &synapses)?;
    // from_synapses canonicalizes order; map values onto it.
    let mut ordered = vec![0.0; values.len()];
    for (syn, w) in synapses.iter().zip(values) {
        let id = topology
            .find(syn.pre, syn.post)
            .expect("synapse was just inserted");
        ordered[id.index()] = w;
    }
    Ok((topology, WeightMatrix::new(ordered)))
}

pub fn save_weights(
    path: &std::path::Path,
    topology: &NetworkTopology,
    weights: &WeightMatrix,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_weights(&mut out, topology, weights)?;
    out.flush()
}

pub fn load_weights(path: &std::path::Path) -> Result<(NetworkTopology, WeightMatrix), ModelError> {
    let file = std::fs::File::open(path)?;
    read_weights(std::io::BufReader::new(file))
}
