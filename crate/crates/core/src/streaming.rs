//! Sample-by-sample causal inference with fixed memory.
//!
//! Each dilated convolution keeps a ring buffer of its last `M·(N−1)` input
//! rows, so a step costs one `N`-tap dot product per filter regardless of how
//! long the stream has been running. Buffers start zero-filled, which is
//! exactly the left zero-padding the batch forward pass uses; a fresh stream
//! therefore reproduces the batch output over any prefix.

use crate::error::{Error, Result};
use crate::network::Network;
use crate::numcore::{Activation, DilatedCausalConv};

#[derive(Debug, Clone)]
struct Ring {
    width: usize,
    capacity: usize,
    data: Vec<f64>,
    next: usize,
}

impl Ring {
    fn new(capacity: usize, width: usize) -> Self {
        Self {
            width,
            capacity,
            data: vec![0.0; capacity * width],
            next: 0,
        }
    }

    /// Row written `lag` steps ago (`1 ≤ lag ≤ capacity`).
    fn lagged(&self, lag: usize) -> &[f64] {
        let slot = (self.next + self.capacity - lag) % self.capacity;
        &self.data[slot * self.width..(slot + 1) * self.width]
    }

    fn push(&mut self, row: &[f64]) {
        if self.capacity == 0 {
            return;
        }
        let slot = self.next;
        self.data[slot * self.width..(slot + 1) * self.width].copy_from_slice(row);
        self.next = (slot + 1) % self.capacity;
    }
}

/// Streaming evaluator bound to an immutable network. Dropout is never
/// applied.
#[derive(Debug, Clone)]
pub struct StreamState<'n> {
    net: &'n Network,
    /// Two rings per block: filter then gate.
    rings: Vec<Ring>,
    concat: Vec<f64>,
    filter_out: Vec<f64>,
    gate_out: Vec<f64>,
    head_out: Vec<f64>,
    samples_seen: u64,
}

impl<'n> StreamState<'n> {
    /// A stream whose history is all zeros.
    pub fn new(net: &'n Network) -> Self {
        let mut rings = Vec::with_capacity(2 * net.blocks().len());
        let mut max_width = 0;
        for b in net.blocks() {
            for conv in [&b.filter, &b.gate] {
                rings.push(Ring::new(conv.history_len(), conv.in_channels()));
            }
            max_width = max_width.max(b.filter.out_channels());
        }
        Self {
            net,
            rings,
            concat: vec![0.0; net.config().skip_width()],
            filter_out: vec![0.0; max_width],
            gate_out: vec![0.0; max_width],
            head_out: vec![0.0; net.config().output_loads],
            samples_seen: 0,
        }
    }

    pub fn network(&self) -> &'n Network {
        self.net
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    /// Number of `f64` history entries held across all ring buffers.
    pub fn buffered_entries(&self) -> usize {
        self.rings.iter().map(|r| r.data.len()).sum()
    }

    /// Total `f64` entries of state, history plus scratch; fixed after construction.
    pub fn allocated_entries(&self) -> usize {
        self.buffered_entries()
            + self.concat.len()
            + self.filter_out.len()
            + self.gate_out.len()
            + self.head_out.len()
    }

    /// Consumes one multi-channel sample and returns one prediction per load.
    /// On error the stream is left untouched.
    pub fn step(&mut self, sample: &[f64]) -> Result<Vec<f64>> {
        let cfg = self.net.config();
        if sample.len() != cfg.input_channels {
            return Err(Error::Shape(format!(
                "sample has {} channels but the network expects {}",
                sample.len(),
                cfg.input_channels
            )));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stream sample"));
        }

        let dense_w = cfg.input_dense_width;
        self.net
            .input_dense()
            .forward_step(sample, &mut self.concat[..dense_w]);

        let mut in_off = 0;
        let mut in_w = dense_w;
        let mut out_off = dense_w;
        for (j, block) in self.net.blocks().iter().enumerate() {
            let w = block.filter.out_channels();
            let (done, rest) = self.concat.split_at_mut(out_off);
            let input = &done[in_off..in_off + in_w];
            let (rf, rg) = {
                let (a, b) = self.rings.split_at_mut(2 * j + 1);
                (&mut a[2 * j], &mut b[0])
            };
            conv_step(&block.filter, rf, input, &mut self.filter_out[..w]);
            conv_step(&block.gate, rg, input, &mut self.gate_out[..w]);
            for ((o, &f), &g) in rest[..w]
                .iter_mut()
                .zip(&self.filter_out[..w])
                .zip(&self.gate_out[..w])
            {
                *o = f.max(0.0) * Activation::Sigmoid.apply(g);
            }
            in_off = out_off;
            in_w = w;
            out_off += w;
        }

        self.net
            .head()
            .forward_step(&self.concat, &mut self.head_out);
        let s = sample[cfg.mask_input_channel];
        self.samples_seen += 1;
        Ok(self.head_out.iter().map(|z| z.tanh() * s).collect())
    }
}

/// One output row of a causal conv: taps `k ≥ 1` come from the ring, then the
/// current input is pushed.
fn conv_step(conv: &DilatedCausalConv, ring: &mut Ring, input: &[f64], out: &mut [f64]) {
    out.copy_from_slice(conv.bias());
    conv.accumulate_tap(0, input, out);
    for k in 1..conv.filter_length() {
        conv.accumulate_tap(k, ring.lagged(conv.dilation() * k), out);
    }
    ring.push(input);
}
