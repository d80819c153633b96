//! Spectral operators keyed by `(potential spec, grid)`, so that runs over
//! the same configuration diagonalize each operator once.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::grid::Grid;
use crate::semigroup::{discretize, GridSpec, PotentialSpec, SpectralOperator};

#[derive(Default)]
pub struct OperatorCache {
    entries: Mutex<HashMap<String, Arc<OnceLock<Arc<SpectralOperator>>>>>,
}

impl OperatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(spec: &PotentialSpec, grid: &Grid) -> String {
        let payload = serde_json::json!({ "potential": spec, "grid": GridSpec::from(*grid) });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }

    pub fn get(&self, spec: &PotentialSpec, grid: &Grid) -> Result<Arc<SpectralOperator>> {
        let key = Self::key(spec, grid);
        let slot = {
            let mut entries = self.entries.lock().expect("cache lock");
            entries.entry(key).or_default().clone()
        };
        if let Some(op) = slot.get() {
            return Ok(op.clone());
        }
        let op = Arc::new(discretize(&spec.build()?, grid)?);
        Ok(slot.get_or_init(|| op).clone())
    }

    pub fn len(&self) -> usize {
        self.entries
            .lock()
            .expect("cache lock")
            .values()
            .filter(|s| s.get().is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every entry; operators still referenced elsewhere stay alive.
    pub fn clear(&self) {
        self.entries.lock().expect("cache lock").clear();
    }
}

/// Process-wide cache.
pub fn shared() -> &'static OperatorCache {
    static CACHE: OnceLock<OperatorCache> = OnceLock::new();
    CACHE.get_or_init(OperatorCache::new)
}

/// Operator from the process-wide cache.
pub fn operator(spec: &PotentialSpec, grid: &Grid) -> Result<Arc<SpectralOperator>> {
    shared().get(spec, grid)
}
