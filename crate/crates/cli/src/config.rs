use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ntqs_core::{Error, Precision, PrimeTable, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Dat,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub precision: Precision,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub format: Option<OutputFormat>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(
        bits: u32,
        cache_dir: Option<PathBuf>,
        seed: u64,
        threads: usize,
        format: Option<OutputFormat>,
        out_dir: PathBuf,
    ) -> Result<Self> {
        let precision = Precision::new(bits)?;
        if threads == 0 {
            return Err(Error::Domain("--threads must be at least 1".into()));
        }
        // a second build in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        Ok(RunConfig { precision, cache_dir, seed, format, out_dir })
    }

    /// Sieve up to `limit`, through the cache directory when one is set.
    pub fn primes(&self, limit: u64) -> Result<PrimeTable> {
        PrimeTable::load_or_sieve(limit.max(64), self.cache_dir.as_deref())
    }

    pub fn format_or(&self, default: OutputFormat) -> OutputFormat {
        self.format.unwrap_or(default)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn ensure_parent(path: &Path) -> Result<()> {
        if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(p)?;
        }
        Ok(())
    }
}
