use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Where trainer checkpoints live between rounds.
pub enum CheckpointStore {
    /// Nothing is persisted; resume is impossible.
    None,
    Memory(HashMap<String, Vec<u8>>),
    /// Keys are paths relative to the directory.
    Dir(PathBuf),
}

pub fn checkpoint_key(repetition: usize, trial: u64, epoch: usize) -> String {
    format!("checkpoints/r{repetition}/t{trial}_e{epoch}.bin")
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so a
/// crash never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl CheckpointStore {
    pub fn memory() -> Self {
        CheckpointStore::Memory(HashMap::new())
    }

    pub fn is_persistent(&self) -> bool {
        !matches!(self, CheckpointStore::None)
    }

    pub fn put(&mut self, key: &str, bytes: &[u8]) -> Result<()> {
        match self {
            CheckpointStore::None => Ok(()),
            CheckpointStore::Memory(map) => {
                map.insert(key.to_string(), bytes.to_vec());
                Ok(())
            }
            CheckpointStore::Dir(root) => write_atomic(&root.join(key), bytes),
        }
    }

    pub fn get(&self, key: &str) -> Result<Vec<u8>> {
        let missing = || Error::Checkpoint(format!("checkpoint `{key}` not found"));
        match self {
            CheckpointStore::None => Err(missing()),
            CheckpointStore::Memory(map) => map.get(key).cloned().ok_or_else(missing),
            CheckpointStore::Dir(root) => fs::read(root.join(key)).map_err(|_| missing()),
        }
    }
}
