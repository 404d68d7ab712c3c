//! Bit stacking: `s` consecutive entries form one token (first bit is the
//! high-order bit), the final partial stack is zero padded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gs::GsArray;

pub const MAX_STACKING: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub stacking: u32,
    /// Number of bits per encoded sequence.
    pub bits: usize,
}

/// Target of one next-token prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Ignore,
    Token(u32),
    /// Any stack token whose high bits equal `value`; the low `free_bits`
    /// are padding and excluded from the loss.
    Prefix { value: u32, free_bits: u32 },
}

impl Tokenizer {
    pub fn new(stacking: u32, bits: usize) -> Result<Self> {
        if !(1..=MAX_STACKING).contains(&stacking) {
            return Err(Error::Config { field: "stacking", msg: format!("must be in 1..={MAX_STACKING}, got {stacking}") });
        }
        if bits == 0 {
            return Err(Error::Config { field: "bits", msg: "sequence must be non-empty".into() });
        }
        Ok(Self { stacking, bits })
    }

    /// Stack tokens per sequence.
    pub fn tokens(&self) -> usize {
        self.bits.div_ceil(self.stacking as usize)
    }

    pub fn pad_len(&self) -> usize {
        self.tokens() * self.stacking as usize - self.bits
    }

    /// Number of distinct stack tokens, `2^s`.
    pub fn stack_vocab(&self) -> u32 {
        1 << self.stacking
    }

    /// Begin-of-sequence id in the plain layout.
    pub fn bos(&self) -> u32 {
        self.stack_vocab()
    }

    pub fn vocab(&self) -> usize {
        self.stack_vocab() as usize + 1
    }

    /// Packs bits (0/1) into stack tokens.
    pub fn pack(&self, bits: &[u8]) -> Vec<u32> {
        debug_assert_eq!(bits.len(), self.bits);
        let s = self.stacking as usize;
        bits.chunks(s)
            .map(|chunk| {
                let mut t = 0u32;
                for b in 0..s {
                    t = (t << 1) | chunk.get(b).copied().unwrap_or(0) as u32;
                }
                t
            })
            .collect()
    }

    pub fn unpack(&self, tokens: &[u32]) -> Result<Vec<u8>> {
        let s = self.stacking;
        if tokens.len() != self.tokens() {
            return Err(Error::Config { field: "tokens", msg: format!("expected {} tokens, got {}", self.tokens(), tokens.len()) });
        }
        let mut bits = Vec::with_capacity(self.tokens() * s as usize);
        for &t in tokens {
            if t >= self.stack_vocab() {
                return Err(Error::BadToken { token: t as usize, vocab: self.stack_vocab() as usize });
            }
            for b in (0..s).rev() {
                bits.push((t >> b & 1) as u8);
            }
        }
        bits.truncate(self.bits);
        Ok(bits)
    }

    /// Loss targets for the stack tokens: the last one ignores padding bits.
    pub fn targets(&self, stacks: &[u32]) -> Vec<Target> {
        let pad = self.pad_len() as u32;
        stacks
            .iter()
            .enumerate()
            .map(|(idx, &t)| {
                if idx + 1 == stacks.len() && pad > 0 {
                    Target::Prefix { value: t >> pad, free_bits: pad }
                } else {
                    Target::Token(t)
                }
            })
            .collect()
    }

    /// `[BOS, stacks...]` for the whole array.
    pub fn tokenize(&self, a: &GsArray) -> Vec<u32> {
        let mut out = vec![self.bos()];
        out.extend(self.pack(&array_bits(a)));
        out
    }

    /// Inverse of [`Tokenizer::tokenize`].
    pub fn detokenize(&self, tokens: &[u32]) -> Result<GsArray> {
        let body = match tokens.first() {
            Some(&t) if t == self.bos() => &tokens[1..],
            _ => tokens,
        };
        let bits = self.unpack(body)?;
        GsArray::from_flat(self.bits, bits.into_iter().map(|b| if b == 1 { 1 } else { -1 }).collect())
    }
}

/// Entries as bits `(1 + a) / 2`, segment after segment.
pub fn array_bits(a: &GsArray) -> Vec<u8> {
    a.as_slice().iter().map(|&x| (x > 0) as u8).collect()
}

pub fn segment_bits(seg: &[i8]) -> Vec<u8> {
    seg.iter().map(|&x| (x > 0) as u8).collect()
}
