//! Sign-plus-magnitude truncated binary encoding of reals.
//!
//! A value is encoded as one sign bit followed by the magnitude bits of
//! weight `2^U` down to `2^-P`, so every encoded real costs exactly
//! `U + P + 2` bits on the wire. Decoding reconstructs
//! `(2*sign - 1) * sum b_j * 2^j`, which undershoots `|x|` by less than
//! `2^-P` whenever `U >= floor(log2 |x|)`.

use crate::{invalid, Error, Result};

/// Widest supported magnitude field; keeps decoding exact in integer space.
const MAX_MAGNITUDE_BITS: u32 = 127;

/// Encoded real: sign bit plus magnitude bits `b_{-P} ..= b_U`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    sign: bool,
    /// bits[i] is the bit of weight `2^(i - P)`; length is `U + P + 1`.
    bits: Vec<bool>,
    u: u32,
    p: u32,
}

impl BitString {
    /// Builds a bit string from raw parts, checking the length invariant.
    pub fn new(sign: bool, bits: Vec<bool>, u: u32, p: u32) -> Result<Self> {
        if u + p + 1 != bits.len() as u32 {
            return Err(invalid(format!(
                "magnitude field has {} bits, expected U+P+1 = {}",
                bits.len(),
                u + p + 1
            )));
        }
        if u + p + 1 > MAX_MAGNITUDE_BITS {
            return Err(invalid("magnitude field wider than 127 bits"));
        }
        Ok(BitString { sign, bits, u, p })
    }

    pub fn sign_bit(&self) -> u8 {
        self.sign as u8
    }

    /// Magnitude bit of weight `2^j`, for `-P <= j <= U`.
    pub fn magnitude_bit(&self, j: i32) -> bool {
        self.bits[(j + self.p as i32) as usize]
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// Total encoded length, always `U + P + 2`.
    pub fn len_bits(&self) -> u32 {
        self.u + self.p + 2
    }

    /// Decodes to `(2*sign - 1) * sum b_j * 2^j`.
    pub fn approx(&self) -> f64 {
        let mut acc: u128 = 0;
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                acc |= 1u128 << i;
            }
        }
        let magnitude = acc as f64 * (-(self.p as f64)).exp2();
        if self.sign {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Canonical packing: sign bit first, then magnitude bits from `b_U`
    /// down to `b_{-P}`, MSB-first within each byte, zero padding at the end.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbits = self.len_bits() as usize;
        let mut out = vec![0u8; (nbits + 7) / 8];
        let mut set = |pos: usize, bit: bool| {
            if bit {
                out[pos / 8] |= 0x80 >> (pos % 8);
            }
        };
        set(0, self.sign);
        for (k, &b) in self.bits.iter().rev().enumerate() {
            set(1 + k, b);
        }
        out
    }

    /// Inverse of [`BitString::to_bytes`]; rejects wrong lengths and
    /// nonzero padding so every (U, P) has exactly one byte form per value.
    pub fn from_bytes(bytes: &[u8], u: u32, p: u32) -> Result<Self> {
        let nbits = (u + p + 2) as usize;
        if bytes.len() != (nbits + 7) / 8 {
            return Err(invalid(format!(
                "expected {} bytes for U={u}, P={p}, got {}",
                (nbits + 7) / 8,
                bytes.len()
            )));
        }
        let get = |pos: usize| bytes[pos / 8] & (0x80 >> (pos % 8)) != 0;
        for pad in nbits..bytes.len() * 8 {
            if get(pad) {
                return Err(invalid("nonzero padding bits"));
            }
        }
        let sign = get(0);
        let mut bits = vec![false; nbits - 1];
        for k in 0..nbits - 1 {
            bits[nbits - 2 - k] = get(1 + k);
        }
        BitString::new(sign, bits, u, p)
    }
}

/// Bit of weight `2^j` in the binary expansion of `|x|`, taken directly
/// from the float's mantissa so no rounding can creep in.
fn bit_of_abs(x: f64, j: i32) -> bool {
    let raw = x.abs().to_bits();
    let exp_field = ((raw >> 52) & 0x7ff) as i64;
    let frac = raw & ((1u64 << 52) - 1);
    let (mantissa, exp) = if exp_field == 0 {
        (frac, -1074i64) // subnormal
    } else {
        (frac | (1u64 << 52), exp_field - 1075)
    };
    let k = j as i64 - exp;
    (0..64).contains(&k) && (mantissa >> k) & 1 == 1
}

/// Truncates `x` to the bits of weight `2^U` down to `2^-P`.
///
/// Total over all finite `x`: bits above `2^U` are silently dropped, so the
/// caller is responsible for choosing `U >= floor(log2 |x|)` when the
/// decoded value must be within `2^-P` of `x`. Any value whose kept bits
/// are all zero encodes as +0, keeping the representation canonical.
pub fn trunc(x: f64, u: u32, p: u32) -> BitString {
    assert!(x.is_finite(), "trunc requires finite input, got {x}");
    assert!(u + p + 1 <= MAX_MAGNITUDE_BITS, "magnitude field too wide");
    let bits: Vec<bool> = (-(p as i32)..=u as i32).map(|j| bit_of_abs(x, j)).collect();
    let sign = x >= 0.0 || bits.iter().all(|&b| !b);
    BitString { sign, bits, u, p }
}

/// Decodes a bit string, checking that its (U, P) match the expected ones.
pub fn approx(s: &BitString, u: u32, p: u32) -> Result<f64> {
    if s.u != u || s.p != p {
        return Err(Error::InvalidParameter(format!(
            "bit string has (U, P) = ({}, {}), expected ({u}, {p})",
            s.u, s.p
        )));
    }
    Ok(s.approx())
}

/// Bits needed to name one index out of `d`, i.e. `ceil(log2 d)`.
pub fn index_bits(d: usize) -> Result<u32> {
    if d < 2 {
        return Err(invalid(format!("index_bits requires d >= 2, got {d}")));
    }
    Ok(usize::BITS - (d - 1).leading_zeros())
}
