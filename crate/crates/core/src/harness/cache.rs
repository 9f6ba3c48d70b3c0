//! On-disk cache of super-localized sources, keyed by everything that
//! determines them. Enabled by setting `SLOD_CACHE_DIR`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{SlodOptions, SourceRecord};
use crate::coefficient::CoefficientField;
use crate::error::Result;

pub const CACHE_ENV: &str = "SLOD_CACHE_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub d: usize,
    pub level: u32,
    pub ell: usize,
    pub fine_level: u32,
    pub coefficient: String,
    pub options: SlodOptions,
}

impl CacheKey {
    pub fn new(coarse_level: u32, ell: usize, fine_level: u32, coeff: &CoefficientField, options: SlodOptions) -> Self {
        Self {
            d: coeff.dim(),
            level: coarse_level,
            ell,
            fine_level,
            coefficient: coeff.content_hash(),
            options,
        }
    }

    fn file_name(&self) -> String {
        let text = serde_json::to_string(self).expect("cache key serializes");
        let digest = Sha256::digest(text.as_bytes());
        let hex: String = digest.iter().take(16).map(|b| format!("{b:02x}")).collect();
        format!("sources-d{}-p{}-l{}-{hex}.json", self.d, self.level, self.ell)
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    sources: Vec<SourceRecord>,
}

#[derive(Clone, Debug)]
pub struct SourceCache {
    dir: PathBuf,
}

impl SourceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Stored sources for `key`, or `None` on a miss or an unreadable entry.
    pub fn get(&self, key: &CacheKey) -> Option<Vec<SourceRecord>> {
        let text = std::fs::read_to_string(self.dir.join(key.file_name())).ok()?;
        let entry: Entry = serde_json::from_str(&text).ok()?;
        (entry.key == *key).then_some(entry.sources)
    }

    pub fn put(&self, key: &CacheKey, sources: &[SourceRecord]) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let entry = Entry {
            key: key.clone(),
            sources: sources.to_vec(),
        };
        let path = self.dir.join(key.file_name());
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(&entry)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SourceCache::new(dir.path());
        let coeff = CoefficientField::constant(2, 1.0).unwrap();
        let key = CacheKey::new(3, 2, 6, &coeff, SlodOptions::default());
        assert!(cache.get(&key).is_none());
        let src = vec![SourceRecord {
            element: 0,
            representative: 0,
            sigma: 1e-3,
            g: vec![0.5, -0.25],
        }];
        cache.put(&key, &src).unwrap();
        assert_eq!(cache.get(&key).unwrap(), src);
        let other = CacheKey::new(3, 3, 6, &coeff, SlodOptions::default());
        assert!(cache.get(&other).is_none());
        let mut opts = SlodOptions::default();
        opts.sampling.seed = 7;
        assert!(cache.get(&CacheKey::new(3, 2, 6, &coeff, opts)).is_none());
    }
}
