//! Short content hashes that tie output files to the configuration and data
//! that produced them.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Length-prefixed SHA-256 over a sequence of fields, truncated to 16 hex
/// characters.
pub struct Fingerprinter {
    hasher: Sha256,
}

impl Fingerprinter {
    pub fn new(domain: &str) -> Self {
        let mut fp = Fingerprinter { hasher: Sha256::new() };
        fp.field(domain);
        fp
    }

    pub fn field(&mut self, value: &str) -> &mut Self {
        self.bytes(value.as_bytes())
    }

    pub fn bytes(&mut self, value: &[u8]) -> &mut Self {
        self.hasher.update((value.len() as u64).to_le_bytes());
        self.hasher.update(value);
        self
    }

    pub fn finish(self) -> String {
        let digest = self.hasher.finalize();
        hex::encode(&digest[..8])
    }
}

/// Fingerprint of a serializable value via its canonical JSON form.
pub fn of_json<T: Serialize>(domain: &str, value: &T) -> String {
    let json = serde_json::to_string(value).expect("fingerprinted values serialize");
    let mut fp = Fingerprinter::new(domain);
    fp.field(&json);
    fp.finish()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_boundaries_matter() {
        let mut a = Fingerprinter::new("t");
        a.field("ab").field("c");
        let mut b = Fingerprinter::new("t");
        b.field("a").field("bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn stable_length() {
        assert_eq!(Fingerprinter::new("x").finish().len(), 16);
    }
}
