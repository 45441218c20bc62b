//! Checkpoint plus JSON sidecar persistence shared by the trainable models.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::ParamStore;

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save<M: Serialize>(path: impl AsRef<Path>, params: &ParamStore<f32>, meta: &M) -> Result<()> {
    let path = path.as_ref();
    params.save(path)?;
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load<M: DeserializeOwned>(path: impl AsRef<Path>, what: &str) -> Result<(ParamStore<f32>, M)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "{what} checkpoint not found at {}",
            path.display()
        )));
    }
    let params = ParamStore::load(path)?;
    let meta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    Ok((params, meta))
}
