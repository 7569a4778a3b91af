//! What a worker puts on the wire, and how the server replays it.

use serde::Serialize;

use crate::compressors::Compressed;
use crate::vector::DenseVector;

/// Bits per transmitted real value.
pub const VALUE_BITS: u64 = 32;

/// One uplink message. The server starts from its copy of the worker's last
/// estimate and applies messages in order.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Trigger bit of a lazily aggregated method.
    Flag(bool),
    /// A full vector that becomes the new running value.
    Replace(DenseVector),
    /// A dense increment.
    AddDense(DenseVector),
    /// A sparse increment.
    AddSparse {
        indices: Vec<usize>,
        values: Vec<f64>,
        explicit_indices: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Dense,
    Sparse,
    SharedSparse,
    Flag,
}

/// Transmission descriptor of one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Payload {
    pub kind: PayloadKind,
    pub value_count: usize,
    pub index_count: usize,
    pub flag_bits: u64,
}

/// `ceil(log2 d)`; zero for `d <= 1`.
pub fn index_bits(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        u64::from(usize::BITS - (d - 1).leading_zeros())
    }
}

impl Payload {
    /// Wire cost in bits. A sparse message with explicit indices is sent in
    /// whichever of the sparse or dense encodings is cheaper; both ends know
    /// `K` and `d`, so the choice costs nothing to signal.
    pub fn bits(&self, d: usize) -> u64 {
        let values = self.value_count as u64 * VALUE_BITS;
        match self.kind {
            PayloadKind::Dense => values,
            PayloadKind::SharedSparse => values,
            PayloadKind::Sparse => {
                let sparse = values + self.index_count as u64 * index_bits(d);
                sparse.min(d as u64 * VALUE_BITS)
            }
            PayloadKind::Flag => self.flag_bits,
        }
    }
}

impl Message {
    pub(crate) fn from_compressed_delta(c: Compressed, delta: &DenseVector) -> Option<Message> {
        match c {
            Compressed::Identity => Some(Message::AddDense(delta.clone())),
            Compressed::Zero => None,
            Compressed::Sparse {
                indices,
                values,
                explicit_indices,
            } => Some(Message::AddSparse {
                indices,
                values,
                explicit_indices,
            }),
        }
    }

    pub fn payload(&self) -> Payload {
        match self {
            Message::Flag(_) => Payload {
                kind: PayloadKind::Flag,
                value_count: 0,
                index_count: 0,
                flag_bits: 1,
            },
            Message::Replace(v) | Message::AddDense(v) => Payload {
                kind: PayloadKind::Dense,
                value_count: v.len(),
                index_count: 0,
                flag_bits: 0,
            },
            Message::AddSparse {
                indices,
                explicit_indices,
                ..
            } => Payload {
                kind: if *explicit_indices {
                    PayloadKind::Sparse
                } else {
                    PayloadKind::SharedSparse
                },
                value_count: indices.len(),
                index_count: if *explicit_indices { indices.len() } else { 0 },
                flag_bits: 0,
            },
        }
    }

    /// Apply to a running value in place.
    pub fn apply(&self, cur: &mut DenseVector) {
        match self {
            Message::Flag(_) => {}
            Message::Replace(v) => cur.clone_from(v),
            Message::AddDense(v) => cur.add_assign(v),
            Message::AddSparse { indices, values, .. } => {
                for (i, v) in indices.iter().zip(values) {
                    cur[*i] += v;
                }
            }
        }
    }
}

/// Server-side reconstruction from the previous estimate and the messages.
pub fn replay(h: &DenseVector, messages: &[Message]) -> DenseVector {
    let mut cur = h.clone();
    for m in messages {
        m.apply(&mut cur);
    }
    cur
}

pub fn total_bits(messages: &[Message], d: usize) -> u64 {
    messages.iter().map(|m| m.payload().bits(d)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_bit_widths() {
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(3), 2);
        assert_eq!(index_bits(1024), 10);
        assert_eq!(index_bits(1025), 11);
    }

    #[test]
    fn accounting_examples() {
        let topk = Payload {
            kind: PayloadKind::Sparse,
            value_count: 10,
            index_count: 10,
            flag_bits: 0,
        };
        assert_eq!(topk.bits(1024), 420);
        assert_eq!(Message::Flag(false).payload().bits(100), 1);
        assert_eq!(Message::Replace(DenseVector::zeros(100)).payload().bits(100), 3200);
        // dense encoding wins once K (32 + log d) > 32 d
        let nearly_full = Payload {
            kind: PayloadKind::Sparse,
            value_count: 19,
            index_count: 19,
            flag_bits: 0,
        };
        assert_eq!(nearly_full.bits(20), 640);
        let shared = Payload {
            kind: PayloadKind::SharedSparse,
            value_count: 7,
            index_count: 0,
            flag_bits: 0,
        };
        assert_eq!(shared.bits(50), 224);
    }

    #[test]
    fn replay_applies_in_order() {
        let h = DenseVector::from_vec(vec![1.0, 2.0, 3.0]);
        let msgs = vec![
            Message::Flag(true),
            Message::AddSparse {
                indices: vec![2],
                values: vec![-3.0],
                explicit_indices: true,
            },
            Message::AddDense(DenseVector::from_vec(vec![1.0, 1.0, 1.0])),
        ];
        assert_eq!(replay(&h, &msgs).as_slice(), &[2.0, 3.0, 1.0]);
        let msgs = vec![Message::Replace(DenseVector::from_vec(vec![0.0, 0.0, 9.0]))];
        assert_eq!(replay(&h, &msgs).as_slice(), &[0.0, 0.0, 9.0]);
    }
}
