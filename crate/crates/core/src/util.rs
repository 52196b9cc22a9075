use sha2::{Digest, Sha256};

/// Stable 64-bit digest of a string (first eight bytes of SHA-256).
pub(crate) fn stable_hash(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Derives an independent seed for a named sub-stream.
pub(crate) fn derive_seed(seed: u64, label: &str) -> u64 {
    stable_hash(&format!("{seed}/{label}"))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with n − 1 in the denominator.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub(crate) fn atomic_write(path: &std::path::Path, bytes: &[u8]) -> crate::Result<()> {
    use crate::error::IoContext;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).at(&tmp)?;
    std::fs::rename(&tmp, path).at(path)
}
