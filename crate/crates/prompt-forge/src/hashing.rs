//! Content hashing for freeze contracts.
//!
//! Hashes cover the exact f64 bit patterns, so "unchanged" means bitwise
//! unchanged, not approximately equal.

use sha2::{Digest, Sha256};

use crate::numerics::Matrix;

pub struct ContentHasher {
    inner: Sha256,
}

impl ContentHasher {
    pub fn new() -> Self {
        ContentHasher { inner: Sha256::new() }
    }

    pub fn add_str(&mut self, s: &str) {
        self.inner.update((s.len() as u64).to_le_bytes());
        self.inner.update(s.as_bytes());
    }

    pub fn add_matrix(&mut self, name: &str, m: &Matrix) {
        self.add_str(name);
        self.inner.update((m.rows() as u64).to_le_bytes());
        self.inner.update((m.cols() as u64).to_le_bytes());
        for v in m.data() {
            self.inner.update(v.to_le_bytes());
        }
    }

    pub fn finish(self) -> String {
        let digest = self.inner.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

impl Default for ContentHasher {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let m = Matrix::from_fn(2, 3, |i, j| i as f64 + 0.5 * j as f64);
        let mut h1 = ContentHasher::new();
        h1.add_matrix("w", &m);
        let mut h2 = ContentHasher::new();
        h2.add_matrix("w", &m);
        assert_eq!(h1.finish(), h2.finish());

        let mut m2 = m.clone();
        m2.set(0, 0, m2.get(0, 0) + 1e-300);
        let mut h3 = ContentHasher::new();
        h3.add_matrix("w", &m2);
        let mut h4 = ContentHasher::new();
        h4.add_matrix("w", &m);
        assert_ne!(h3.finish(), h4.finish());
    }
}
