use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;

/// Largest per-nucleotide probability accepted for any error type.
pub const MAX_ERROR_RATE: f64 = 0.2;

/// Independent per-nucleotide substitution, insertion and deletion rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub p_sub: f64,
    pub p_ins: f64,
    pub p_del: f64,
    pub seed: u64,
}

impl ErrorModel {
    pub fn new(p_sub: f64, p_ins: f64, p_del: f64, seed: u64) -> Result<Self, SimError> {
        for (name, p) in [("p_sub", p_sub), ("p_ins", p_ins), ("p_del", p_del)] {
            if !(0.0..=MAX_ERROR_RATE).contains(&p) {
                return Err(SimError::BadParams(format!(
                    "{name}={p} outside [0, {MAX_ERROR_RATE}]"
                )));
            }
        }
        Ok(Self {
            p_sub,
            p_ins,
            p_del,
            seed,
        })
    }

    pub fn error_free() -> Self {
        Self {
            p_sub: 0.0,
            p_ins: 0.0,
            p_del: 0.0,
            seed: 0,
        }
    }

    /// The same rate for all three error types.
    pub fn uniform(p: f64, seed: u64) -> Result<Self, SimError> {
        Self::new(p, p, p, seed)
    }

    pub fn is_error_free(&self) -> bool {
        self.p_sub == 0.0 && self.p_ins == 0.0 && self.p_del == 0.0
    }
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self::uniform(0.005, 0).expect("default rates are in range")
    }
}

/// A seeded error stream. Each source nucleotide consumes one uniform draw
/// deciding deletion, insertion (a random base emitted before it),
/// substitution (one of the three other bases) or a clean copy.
#[derive(Debug, Clone)]
pub struct ErrorChannel {
    model: ErrorModel,
    rng: ChaCha8Rng,
}

impl ErrorChannel {
    pub fn new(model: ErrorModel) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
        }
    }

    pub fn model(&self) -> &ErrorModel {
        &self.model
    }

    /// Corrupts `src[from..]` into `out`, stopping once `out` holds at least
    /// `max_out` nucleotides (an insertion may overshoot by one). Returns
    /// the next unread source position, so a read can be continued later.
    pub fn corrupt(&mut self, src: &[u8], from: usize, out: &mut Vec<u8>, max_out: usize) -> usize {
        let m = self.model;
        if m.is_error_free() {
            let take = max_out.saturating_sub(out.len()).min(src.len() - from);
            out.extend_from_slice(&src[from..from + take]);
            return from + take;
        }
        let mut pos = from;
        while pos < src.len() && out.len() < max_out {
            let base = src[pos];
            pos += 1;
            let u: f64 = self.rng.random();
            if u < m.p_del {
                continue;
            }
            if u < m.p_del + m.p_ins {
                out.push(b"ACGT"[self.rng.random_range(0..4)]);
                out.push(base);
            } else if u < m.p_del + m.p_ins + m.p_sub {
                out.push(substitute(base, self.rng.random_range(0..3)));
            } else {
                out.push(base);
            }
        }
        pos
    }

    pub fn apply(&mut self, seq: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(seq.len() + 8);
        self.corrupt(seq, 0, &mut out, usize::MAX);
        out
    }
}

fn substitute(base: u8, pick: usize) -> u8 {
    let others: Vec<u8> = b"ACGT".iter().copied().filter(|&c| c != base).collect();
    others[pick % others.len()]
}

/// One-shot corruption of `seq` with a fresh stream seeded by `model.seed`.
pub fn apply_errors(seq: &[u8], model: &ErrorModel) -> Vec<u8> {
    ErrorChannel::new(*model).apply(seq)
}
