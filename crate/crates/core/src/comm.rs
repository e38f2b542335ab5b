//! Per-worker communication volume for the collective patterns, and Pareto
//! extraction over (loss, volume) points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index_codec::IndexCodec;
use crate::wire::message_size_bytes;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommError {
    #[error("{0} needs at least 2 workers, got {1}")]
    TooFewWorkers(&'static str, usize),
    #[error("H = {h} does not divide {total} total steps")]
    Indivisible { total: usize, h: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    RingAllReduce,
    RingAllGather,
    ParameterServer,
}

impl Topology {
    pub const ALL: [Topology; 3] = [Topology::RingAllReduce, Topology::RingAllGather, Topology::ParameterServer];

    pub fn name(self) -> &'static str {
        match self {
            Topology::RingAllReduce => "ring-all-reduce",
            Topology::RingAllGather => "ring-all-gather",
            Topology::ParameterServer => "parameter-server",
        }
    }
}

/// Bytes one worker sends per synchronization.
///
/// Ring all-reduce moves the dense vector (`2 d (R-1)/R`), ring all-gather
/// forwards every peer's message (`(R-1) m`), and a parameter-server worker
/// uploads only its own message.
pub fn outbound_bytes_per_sync(topology: Topology, dense_bytes: u64, message_bytes: u64, workers: usize) -> Result<f64, CommError> {
    let r = workers as f64;
    match topology {
        Topology::RingAllReduce | Topology::RingAllGather if workers < 2 => Err(CommError::TooFewWorkers(topology.name(), workers)),
        Topology::RingAllReduce => Ok(2.0 * dense_bytes as f64 * (r - 1.0) / r),
        Topology::RingAllGather => Ok((r - 1.0) * message_bytes as f64),
        Topology::ParameterServer => Ok(message_bytes as f64),
    }
}

/// Expected size of the union of `workers` independent uniform `k`-subsets of
/// a chunk of `chunk_size` positions.
pub fn expected_union_k(chunk_size: usize, k: usize, workers: usize) -> f64 {
    let c = chunk_size as f64;
    c * (1.0 - (1.0 - k as f64 / c).powi(workers as i32))
}

/// What the server sends back to each worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Download {
    /// The dense aggregate.
    Dense { dense_bytes: u64 },
    /// The aggregate restricted to the union of all workers' indices, at the
    /// same value width and index codec as the uploads.
    UnionSparse { param_len: u64, chunk_size: usize, k: usize, bits: u8, codec: IndexCodec },
}

pub fn parameter_server_download_bytes(download: Download, workers: usize) -> u64 {
    match download {
        Download::Dense { dense_bytes } => dense_bytes,
        Download::UnionSparse { param_len, chunk_size, k, bits, codec } => {
            let union = expected_union_k(chunk_size, k, workers).round() as u64;
            let union = union.clamp(k as u64, chunk_size as u64);
            message_size_bytes(param_len, chunk_size as u64, union, bits, codec)
        }
    }
}

/// Number of synchronizations in a run of `total_steps` inner steps.
pub fn num_syncs(total_steps: usize, h: usize) -> Result<usize, CommError> {
    if h == 0 || !total_steps.is_multiple_of(h) {
        return Err(CommError::Indivisible { total: total_steps, h });
    }
    Ok(total_steps / h)
}

/// Total outbound bytes per worker over a run.
pub fn total_volume(per_sync: f64, syncs: usize) -> f64 {
    per_sync * syncs as f64
}

/// Indices of the non-dominated points (lower loss and lower volume are both
/// better), ordered by increasing volume. Points with a NaN coordinate are
/// never on the frontier.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| !points[i].0.is_nan() && !points[i].1.is_nan()).collect();
    order.sort_by(|&a, &b| points[a].1.total_cmp(&points[b].1).then(points[a].0.total_cmp(&points[b].0)).then(a.cmp(&b)));
    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let volume = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].1 == volume {
            j += 1;
        }
        // Within a volume group the first entry has the lowest loss.
        let group_min = points[order[i]].0;
        if group_min < best {
            out.extend(order[i..j].iter().copied().filter(|&p| points[p].0 == group_min));
            best = group_min;
        }
        i = j;
    }
    out
}
