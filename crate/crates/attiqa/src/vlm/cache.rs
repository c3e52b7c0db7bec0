//! Content-addressed embedding cache keyed by (provider_id, input hash).
//! The directory comes from the ATTIQA_CACHE environment variable or an
//! explicit path.

use crate::core::ImageRaster;
use crate::vlm::{EmbeddingProvider, VlmError};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const CACHE_ENV_VAR: &str = "ATTIQA_CACHE";

#[derive(Clone, Debug)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<EmbeddingCache> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(EmbeddingCache { dir })
    }

    /// Cache named by ATTIQA_CACHE, if the variable is set.
    pub fn from_env() -> Option<EmbeddingCache> {
        let dir = std::env::var_os(CACHE_ENV_VAR)?;
        EmbeddingCache::new(PathBuf::from(dir)).ok()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn image_embedding(
        &self,
        provider: &dyn EmbeddingProvider,
        img: &ImageRaster,
    ) -> Result<Vec<f64>, VlmError> {
        let mut hasher = Sha256::new();
        hasher.update(provider.provider_id().as_bytes());
        hasher.update(b"|image|");
        for &v in img.pixels() {
            hasher.update(v.to_le_bytes());
        }
        self.get_or_compute(hasher, || provider.embed_image(img))
    }

    pub fn text_embedding(
        &self,
        provider: &dyn EmbeddingProvider,
        text: &str,
    ) -> Result<Vec<f64>, VlmError> {
        let mut hasher = Sha256::new();
        hasher.update(provider.provider_id().as_bytes());
        hasher.update(b"|text|");
        hasher.update(text.as_bytes());
        self.get_or_compute(hasher, || provider.embed_text(text))
    }

    fn get_or_compute(
        &self,
        hasher: Sha256,
        compute: impl FnOnce() -> Result<Vec<f64>, VlmError>,
    ) -> Result<Vec<f64>, VlmError> {
        let key = format!("{:x}", hasher.finalize());
        let path = self.dir.join(format!("{key}.emb"));
        if let Ok(bytes) = std::fs::read(&path) {
            if bytes.len() % 8 == 0 {
                return Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect());
            }
        }
        let values = compute()?;
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in &values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        // Write-temp-then-rename keeps concurrent readers consistent.
        let tmp = self.dir.join(format!("{key}.tmp"));
        if std::fs::write(&tmp, &bytes).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlm::AnalyticMockProvider;

    #[test]
    fn cache_round_trips_and_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path()).unwrap();
        let provider = AnalyticMockProvider::new();
        let img = crate::synthetic::proxy_corpus(1, 16, 16, 1).pop().unwrap();

        let fresh = cache.image_embedding(&provider, &img).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let cached = cache.image_embedding(&provider, &img).unwrap();
        assert_eq!(fresh, cached);

        let t1 = cache.text_embedding(&provider, "Sharp image").unwrap();
        let t2 = cache.text_embedding(&provider, "Sharp image").unwrap();
        assert_eq!(t1, t2);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
