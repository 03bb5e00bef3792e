//! Fixed-width measurement bitstrings and flip masks.
//!
//! Bit order convention, fixed everywhere in this crate: bit `i` reports
//! qubit `i`, and qubit 0 is the leftmost character of the rendered string.

use std::fmt;
use std::str::FromStr;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::model::circuit::ModelError;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: u64,
    width: u8,
}

impl BitString {
    pub fn zeros(width: u8) -> Self {
        assert!(width <= 64, "bit width exceeds 64");
        Self { bits: 0, width }
    }

    /// Builds from a basis-state index where bit `i` of `index` is qubit `i`.
    pub fn from_index(index: u64, width: u8) -> Self {
        assert!(width <= 64, "bit width exceeds 64");
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        Self {
            bits: index & mask,
            width,
        }
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn index(&self) -> u64 {
        self.bits
    }

    pub fn bit(&self, i: u8) -> bool {
        debug_assert!(i < self.width);
        (self.bits >> i) & 1 == 1
    }

    /// Bitwise XOR; both operands must have the same width.
    pub fn xor(&self, other: &BitString) -> Result<BitString, ModelError> {
        if self.width != other.width {
            return Err(ModelError::WidthMismatch {
                left: self.width,
                right: other.width,
            });
        }
        Ok(BitString {
            bits: self.bits ^ other.bits,
            width: self.width,
        })
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_u8(self.width);
        e.put_u64(self.bits);
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let at = d.pos();
        let width = d.u8()?;
        if width > 64 {
            return Err(CodecError::InvalidValue {
                what: "bit width",
                at,
            });
        }
        let bits = d.u64()?;
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        if bits & !mask != 0 {
            return Err(CodecError::InvalidValue {
                what: "bitstring padding",
                at,
            });
        }
        Ok(Self { bits, width })
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

impl FromStr for BitString {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() > 64 {
            return Err(ModelError::WidthTooLarge(s.len() as u32));
        }
        let mut bits = 0u64;
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => bits |= 1 << i,
                other => return Err(ModelError::InvalidBitChar(other)),
            }
        }
        Ok(Self {
            bits,
            width: s.len() as u8,
        })
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BitString {
    /// Lexicographic on the rendered string (qubit 0 first), then by width.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let common = self.width.min(other.width);
        for i in 0..common {
            match self.bit(i).cmp(&other.bit(i)) {
                std::cmp::Ordering::Equal => {}
                ord => return ord,
            }
        }
        self.width.cmp(&other.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_zero_is_leftmost() {
        // index 0b01 has qubit 0 set
        let b = BitString::from_index(0b01, 2);
        assert_eq!(b.to_string(), "10");
        assert!(b.bit(0));
        assert!(!b.bit(1));
    }

    #[test]
    fn parse_display_round_trip() {
        for s in ["0", "1", "0110", "111000111", ""] {
            assert_eq!(s.parse::<BitString>().unwrap().to_string(), s);
        }
        assert!("01x".parse::<BitString>().is_err());
    }

    #[test]
    fn xor_matches_example() {
        let a: BitString = "0110".parse().unwrap();
        let m: BitString = "0011".parse().unwrap();
        assert_eq!(a.xor(&m).unwrap().to_string(), "0101");
        // identity and involution
        let zeros = BitString::zeros(4);
        assert_eq!(a.xor(&zeros).unwrap(), a);
        assert_eq!(a.xor(&m).unwrap().xor(&m).unwrap(), a);
    }

    #[test]
    fn xor_width_mismatch_rejected() {
        let a: BitString = "01".parse().unwrap();
        let b: BitString = "011".parse().unwrap();
        assert!(a.xor(&b).is_err());
    }

    #[test]
    fn ordering_is_string_lexicographic() {
        let mut v: Vec<BitString> = ["11", "00", "10", "01"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        v.sort();
        let rendered: Vec<String> = v.iter().map(|b| b.to_string()).collect();
        assert_eq!(rendered, vec!["00", "01", "10", "11"]);
    }
}
