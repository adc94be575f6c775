//! Per-sequence gradient-state memory of the two engines as a function of length.

use crate::bptt::Tape;
use crate::eprop::{EpropConfig, EpropSequence, FeedbackMatrix};
use crate::error::Result;
use crate::lstm::{Dims, LstmState, NetworkParams, OutputMode};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryRow {
    pub seq_len: usize,
    /// Eligibility values, accumulators and step buffers of one e-prop sequence.
    pub eprop_bytes: usize,
    /// Recorded tape of one BPTT sequence.
    pub bptt_bytes: usize,
}

/// Runs both engines over random sequences of each length and reports their state size.
pub fn memory_report(dims: Dims, lengths: &[usize], seed: u64) -> Result<Vec<MemoryRow>> {
    let mut rng = Rng::new(seed);
    let params = NetworkParams::init(&mut rng, dims);
    let fb = FeedbackMatrix::Symmetric;
    let cfg = EpropConfig::default();
    lengths
        .iter()
        .map(|&len| {
            let inputs: Vec<Vec<f64>> = (0..len)
                .map(|_| (0..dims.inputs).map(|_| rng.uniform()).collect())
                .collect();
            let mut seq = EpropSequence::new(&params, &fb, &cfg, OutputMode::Softmax)?;
            let mut peak = seq.memory_bytes();
            for x in &inputs {
                seq.step(x)?;
                peak = peak.max(seq.memory_bytes());
            }
            let tape = Tape::record(
                &params,
                LstmState::zeros(dims.cells),
                inputs.iter().map(Vec::as_slice),
                vec![None; len],
                OutputMode::Softmax,
            )?;
            Ok(MemoryRow {
                seq_len: len,
                eprop_bytes: peak,
                bptt_bytes: tape.memory_bytes(),
            })
        })
        .collect()
}

pub fn render_memory_report(rows: &[MemoryRow]) -> String {
    let mut s = String::from("seq_len,eprop_bytes,bptt_bytes\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.seq_len, r.eprop_bytes, r.bptt_bytes));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eprop_flat_bptt_linear() {
        let rows = memory_report(Dims::new(1, 16, 10), &[10, 20, 40], 1).unwrap();
        assert!(rows.iter().all(|r| r.eprop_bytes == rows[0].eprop_bytes));
        // Fixed initial-state cost plus a constant per-step record.
        let per_step = (rows[1].bptt_bytes - rows[0].bptt_bytes) / 10;
        assert!(per_step > 0);
        assert_eq!(rows[2].bptt_bytes - rows[1].bptt_bytes, 20 * per_step);
        assert!(render_memory_report(&rows).starts_with("seq_len,eprop_bytes,bptt_bytes\n10,"));
    }
}
