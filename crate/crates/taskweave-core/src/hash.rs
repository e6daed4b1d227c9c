//! FNV-1a hashing for stable, platform-independent keys.
//!
//! State keys, fixture keys, and cache keys all need to agree across runs,
//! platforms, and compiler versions, so we use a fixed algorithm instead of
//! `std::hash`.

use alloc::string::String;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Hash a byte slice with 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Incremental FNV-1a hasher for composite keys.
#[derive(Debug, Clone)]
pub struct FnvHasher(u64);

impl FnvHasher {
    pub fn new() -> Self {
        FnvHasher(FNV_OFFSET)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    /// Write a length-prefixed field so that adjacent fields cannot run
    /// together and collide ("ab","c" vs "a","bc").
    pub fn write_field(&mut self, field: &str) {
        self.write(&(field.len() as u64).to_le_bytes());
        self.write(field.as_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for FnvHasher {
    fn default() -> Self {
        Self::new()
    }
}

/// Render a hash as a fixed-width lowercase hex string.
pub fn hex16(value: u64) -> String {
    let mut s = String::with_capacity(16);
    for shift in (0..16).rev() {
        let nibble = ((value >> (shift * 4)) & 0xf) as u32;
        s.push(char::from_digit(nibble, 16).unwrap());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_vectors() {
        // Reference values for the 64-bit FNV-1a test suite.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn field_prefix_disambiguates() {
        let mut a = FnvHasher::new();
        a.write_field("ab");
        a.write_field("c");
        let mut b = FnvHasher::new();
        b.write_field("a");
        b.write_field("bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn hex_is_fixed_width() {
        assert_eq!(hex16(0), "0000000000000000");
        assert_eq!(hex16(u64::MAX), "ffffffffffffffff");
        assert_eq!(hex16(0xabc), "0000000000000abc");
    }
}
