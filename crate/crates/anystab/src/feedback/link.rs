//! Retransmission over channels whose outputs are either exact or erased.
//!
//! Bits of successive virtual-control indices go into one FIFO, most
//! significant bit first. Each channel use carries the next `L` queued bits
//! (zero-padded). The sender learns from feedback whether the use got
//! through and only then drops those bits. The receiver knows how many bits
//! every step produced, so it can split received words back into symbols.
//! A symbol is settled once its last bit is received.

use std::collections::VecDeque;

use crate::channels::{ChannelSpec, ErasureKind, Input, Output};
use crate::error::{Error, Result};

/// How `L`-bit words map to channel inputs and back.
#[derive(Debug, Clone, PartialEq)]
pub enum Link {
    Packet { bits: u32 },
    /// A DMC with `2^bits` inputs. Outputs reachable from a single input
    /// deliver that input; all other outputs count as erasures.
    Symbols { bits: u32, decisive: Vec<Option<usize>> },
}

impl Link {
    pub fn for_channel(spec: &ChannelSpec) -> Result<Self> {
        match spec {
            ChannelSpec::Erasure(e) => match e.kind {
                ErasureKind::Packet { bits } if bits <= 63 => Ok(Link::Packet { bits }),
                _ => Err(Error::Incompatible("retransmission needs packets of at most 63 bits".into())),
            },
            ChannelSpec::Dmc(d) => {
                let n = d.inputs();
                if !n.is_power_of_two() || n < 2 {
                    return Err(Error::Incompatible(format!("DMC with {n} inputs does not carry whole bits")));
                }
                let decisive = d.decisive_outputs();
                for a in 0..n {
                    if !decisive.contains(&Some(a)) {
                        return Err(Error::Incompatible(format!("input {a} has no unambiguous output")));
                    }
                }
                Ok(Link::Symbols {
                    bits: n.trailing_zeros(),
                    decisive,
                })
            }
            ChannelSpec::Awgn(_) => Err(Error::Incompatible("retransmission needs an erasure-type channel".into())),
        }
    }

    pub fn word_bits(&self) -> u32 {
        match self {
            Link::Packet { bits } | Link::Symbols { bits, .. } => *bits,
        }
    }

    pub fn encode(&self, word: u64) -> Input {
        match self {
            Link::Packet { .. } => Input::Packet(word),
            Link::Symbols { .. } => Input::Symbol(word as usize),
        }
    }

    /// The delivered word, or `None` for an erasure.
    pub fn decode(&self, out: &Output) -> Option<u64> {
        match (self, out) {
            (Link::Packet { .. }, Output::Packet(v)) => Some(*v),
            (Link::Symbols { decisive, .. }, Output::Symbol(b)) => decisive.get(*b).copied().flatten().map(|a| a as u64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QueuedBit {
    symbol: u64,
    bit: bool,
    last: bool,
}

/// Sender half, run by the observer.
#[derive(Debug, Clone, Default)]
pub(crate) struct Sender {
    queue: VecDeque<QueuedBit>,
    in_flight: usize,
}

impl Sender {
    /// Queues the `c` low bits of `index`, most significant first.
    pub fn push(&mut self, symbol: u64, index: u64, c: u32) {
        for k in (0..c).rev() {
            self.queue.push_back(QueuedBit {
                symbol,
                bit: index >> k & 1 == 1,
                last: k == 0,
            });
        }
    }

    /// Applies the feedback for the previous use; returns symbols whose last
    /// bit was just delivered.
    pub fn acknowledge(&mut self, delivered: bool) -> Vec<u64> {
        let mut done = Vec::new();
        if delivered {
            for b in self.queue.drain(..self.in_flight) {
                if b.last {
                    done.push(b.symbol);
                }
            }
        }
        self.in_flight = 0;
        done
    }

    /// Next word to send.
    pub fn word(&mut self, bits: u32) -> u64 {
        let k = (bits as usize).min(self.queue.len());
        self.in_flight = k;
        self.queue
            .iter()
            .take(k)
            .enumerate()
            .fold(0u64, |w, (j, b)| w | (u64::from(b.bit) << (bits as usize - 1 - j)))
    }

    pub fn backlog(&self) -> usize {
        self.queue.len()
    }
}

#[derive(Debug, Clone)]
struct Assembly {
    symbol: u64,
    need: u32,
    got: u32,
    acc: u64,
}

/// Receiver half, run by the controller.
#[derive(Debug, Clone, Default)]
pub(crate) struct Receiver {
    expected: VecDeque<Assembly>,
    pending_bits: u64,
}

impl Receiver {
    /// Announces that step `symbol` produced `c` bits. Returns the symbol
    /// index right away when `c = 0`.
    pub fn expect(&mut self, symbol: u64, c: u32) -> Option<u64> {
        if c == 0 && self.expected.is_empty() {
            return Some(0);
        }
        self.expected.push_back(Assembly {
            symbol,
            need: c,
            got: 0,
            acc: 0,
        });
        self.pending_bits += c as u64;
        None
    }

    /// Consumes a delivered word; returns completed `(symbol, index)` pairs
    /// in order.
    pub fn receive(&mut self, word: u64, bits: u32) -> Vec<(u64, u64)> {
        let k = (bits as u64).min(self.pending_bits) as usize;
        self.pending_bits -= k as u64;
        let mut done = Vec::new();
        let mut j = 0;
        loop {
            // zero-bit symbols queued behind others complete in order
            while let Some(front) = self.expected.front() {
                if front.got < front.need {
                    break;
                }
                let a = self.expected.pop_front().unwrap();
                done.push((a.symbol, a.acc));
            }
            if j == k {
                break;
            }
            let front = self.expected.front_mut().expect("bits only arrive for expected symbols");
            let bit = word >> (bits as usize - 1 - j) & 1;
            front.acc = front.acc << 1 | bit;
            front.got += 1;
            j += 1;
        }
        done
    }
}
