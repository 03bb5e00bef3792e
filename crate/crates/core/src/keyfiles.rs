//! Hex key files: 32-byte keys stored as 64 hex characters plus a newline.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("cannot read key file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot write key file {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("key file {path} is not 32 hex-encoded bytes")]
    Malformed { path: String },
}

pub fn read_key32(path: &Path) -> Result<[u8; 32], KeyFileError> {
    let text = fs::read_to_string(path).map_err(|source| KeyFileError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let bytes = hex::decode(text.trim()).map_err(|_| KeyFileError::Malformed {
        path: path.display().to_string(),
    })?;
    bytes.try_into().map_err(|_| KeyFileError::Malformed {
        path: path.display().to_string(),
    })
}

pub fn write_key32(path: &Path, key: &[u8; 32]) -> Result<(), KeyFileError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| KeyFileError::Write {
                path: path.display().to_string(),
                source,
            })?;
        }
    }
    fs::write(path, format!("{}\n", hex::encode(key))).map_err(|source| KeyFileError::Write {
        path: path.display().to_string(),
        source,
    })
}
