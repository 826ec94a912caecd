//! Small shared helpers: checksums, float quantization, atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

/// FNV-1a 64-bit, used as the trailing integrity checksum in the binary formats.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Incremental FNV-1a 64-bit hasher for streaming writers.
#[derive(Debug, Clone)]
pub struct Fnv1a64 {
    state: u64,
}

impl Fnv1a64 {
    pub fn new() -> Self {
        Fnv1a64 {
            state: 0xcbf2_9ce4_8422_2325,
        }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.state
    }
}

impl Default for Fnv1a64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Round an f64 probability down into f32 space, returned as f64.
///
/// Rounding toward zero keeps a set of probabilities that summed to <= 1
/// summing to <= 1 after quantization, which nearest rounding does not.
pub fn quantize_prob_f32(p: f64) -> f64 {
    let q = p as f32;
    if q as f64 > p {
        f32::from_bits(q.to_bits() - 1) as f64
    } else {
        q as f64
    }
}

/// Write `bytes` to `path` via a temp file in the same directory plus an
/// atomic rename, so a failed run never leaves partial output behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::other("atomic_write: path has no file name"))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_matches_known_vectors() {
        // Reference values for the standard FNV-1a 64 parameters.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn streaming_matches_oneshot() {
        let data = b"hello world, checksums";
        let mut h = Fnv1a64::new();
        h.update(&data[..7]);
        h.update(&data[7..]);
        assert_eq!(h.finish(), fnv1a64(data));
    }

    #[test]
    fn quantize_never_rounds_up() {
        let vals = [0.3f64, 1.0 / 3.0, 0.999999999, 1e-300, 0.0, 1.0];
        for &v in &vals {
            let q = quantize_prob_f32(v);
            assert!(q <= v, "quantize({v}) = {q} rounded up");
            assert_eq!(q, q as f32 as f64, "not exactly representable");
        }
    }
}
