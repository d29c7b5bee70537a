//! Fixed-length bit strings indexing box inputs and outputs.
//!
//! A [`BitString`] of length `n` labels one side's inputs or outputs for a
//! row of `n` box pairs. Convention, used everywhere (tables, JSON, labels,
//! the canonical cell index): **box 1 is the most significant printed bit**.
//! In code boxes are 0-indexed, so `bit(0)` is box 1 and appears first in
//! `to_string()`. The single-box flip `x^{i'}` of box `i` is [`BitString::flip`].

use std::fmt;

use crate::Error;

/// Maximum supported string length (keeps every packed word in `u32`).
pub const MAX_LEN: usize = 8;

/// A bit string of fixed length `len`, packed most-significant-box-first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitString {
    len: u8,
    val: u32,
}

impl BitString {
    /// Builds a string of `len` bits from its packed integer value.
    ///
    /// Panics if `len` exceeds [`MAX_LEN`] or `val` has bits above `len`.
    pub fn new(len: usize, val: u32) -> Self {
        assert!(len <= MAX_LEN, "bit string length {len} exceeds {MAX_LEN}");
        assert!(val < (1u32 << len), "value {val} does not fit in {len} bits");
        Self { len: len as u8, val }
    }

    /// The all-zero string of length `len`.
    pub fn zeros(len: usize) -> Self {
        Self::new(len, 0)
    }

    /// Number of boxes covered (string length).
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Packed integer value; equals the binary number printed by `Display`.
    pub fn value(&self) -> u32 {
        self.val
    }

    /// Bit of box `i` (0-based; box 0 is the most significant printed bit).
    pub fn bit(&self, i: usize) -> u8 {
        assert!(i < self.len(), "box index {i} out of range");
        ((self.val >> (self.len() - 1 - i)) & 1) as u8
    }

    /// Returns the string with box `i`'s bit flipped (`x^{i'}` in formulas).
    pub fn flip(&self, i: usize) -> Self {
        assert!(i < self.len(), "box index {i} out of range");
        Self {
            len: self.len,
            val: self.val ^ (1 << (self.len() - 1 - i)),
        }
    }

    /// All strings of length `len` in ascending integer order.
    pub fn all(len: usize) -> impl Iterator<Item = BitString> + Clone {
        assert!(len <= MAX_LEN);
        (0..(1u32 << len)).map(move |v| BitString::new(len, v))
    }

    /// Concatenation `self ‖ other` (self's boxes come first).
    pub fn concat(&self, other: &BitString) -> Self {
        let len = self.len() + other.len();
        assert!(len <= MAX_LEN, "concatenated length {len} exceeds {MAX_LEN}");
        Self::new(len, (self.val << other.len()) | other.val)
    }

    /// Splits into the first `left` boxes and the rest.
    pub fn split(&self, left: usize) -> (BitString, BitString) {
        assert!(left <= self.len());
        let right = self.len() - left;
        (
            BitString::new(left, self.val >> right),
            BitString::new(right, self.val & ((1u32 << right) - 1)),
        )
    }

    /// Parses a string like `"10"`; the first character is box 1.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let t = text.trim();
        if t.is_empty() || t.len() > MAX_LEN {
            return Err(Error::Parse(format!(
                "bit string `{text}` must have 1..={MAX_LEN} characters"
            )));
        }
        let mut val = 0u32;
        for c in t.chars() {
            val = (val << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => {
                        return Err(Error::Parse(format!(
                            "bit string `{text}` contains `{c}`"
                        )))
                    }
                };
        }
        Ok(Self::new(t.len(), val))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            write!(f, "{}", self.bit(i))?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_convention() {
        let s = BitString::parse("10").unwrap();
        assert_eq!(s.bit(0), 1, "box 1 is the first printed character");
        assert_eq!(s.bit(1), 0);
        assert_eq!(s.value(), 0b10);
        assert_eq!(s.to_string(), "10");
    }

    #[test]
    fn flip_targets_single_box() {
        let s = BitString::parse("010").unwrap();
        assert_eq!(s.flip(0).to_string(), "110");
        assert_eq!(s.flip(2).to_string(), "011");
        assert_eq!(s.flip(1).flip(1), s);
    }

    #[test]
    fn concat_and_split_roundtrip() {
        let a = BitString::parse("10").unwrap();
        let b = BitString::parse("011").unwrap();
        let c = a.concat(&b);
        assert_eq!(c.to_string(), "10011");
        assert_eq!(c.split(2), (a, b));
    }

    #[test]
    fn all_enumerates_in_order() {
        let v: Vec<String> = BitString::all(2).map(|s| s.to_string()).collect();
        assert_eq!(v, ["00", "01", "10", "11"]);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(BitString::parse("").is_err());
        assert!(BitString::parse("012").is_err());
        assert!(BitString::parse("111111111").is_err());
    }
}
