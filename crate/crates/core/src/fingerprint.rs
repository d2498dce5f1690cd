//! Content hashes tying derived artifacts to their inputs.

use sha2::{Digest, Sha256};

#[derive(Default)]
pub struct Hasher(Sha256);

impl Hasher {
    pub fn new(tag: &str) -> Self {
        let mut h = Hasher(Sha256::new());
        h.str(tag);
        h
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.update(v.to_bits().to_le_bytes());
        self
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
        self
    }

    pub fn bools(&mut self, v: &[bool]) -> &mut Self {
        self.u64(v.len() as u64);
        let bytes: Vec<u8> = v.iter().map(|b| *b as u8).collect();
        self.0.update(&bytes);
        self
    }

    pub fn finish(self) -> String {
        hex::encode(&self.0.finalize()[..16])
    }
}

/// Hash of a JSON value in canonical form (serde_json maps are sorted).
pub fn of_json(tag: &str, value: &serde_json::Value) -> String {
    let mut h = Hasher::new(tag);
    h.str(&value.to_string());
    h.finish()
}
