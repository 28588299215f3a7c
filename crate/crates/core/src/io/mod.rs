//! Model-file parsing and artifact persistence.
//!
//! `parser` reads the community POMDP text format; `artifact` is the native
//! binary format (magic `BSQZ`, versioned, CRC32-checked); `csv` holds the
//! human-readable exports; `writer` emits models back to the text format.

pub mod artifact;
pub mod csv;
pub mod parser;
pub mod writer;

pub use artifact::{load_artifact, save_artifact, Artifact};
pub use parser::{parse_pomdp, parse_pomdp_str, parse_pomdp_str_with, ParseOptions};
pub use writer::{pomdp_to_string, write_pomdp};

use std::path::{Path, PathBuf};

use crate::error::Result;

/// On-disk file kind, decided by extension and magic-byte sniffing - never
/// by guessing at content semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    /// Community POMDP text format.
    StandardPomdpText,
    /// Native `BSQZ` binary artifact.
    NativeBinary,
}

/// A file path with its detected format tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelFile {
    pub path: PathBuf,
    pub format: ModelFormat,
}

impl ModelFile {
    /// Sniffs the first bytes for the `BSQZ` magic; everything else is
    /// treated as the text format (the usual `.pomdp`/`.POMDP` extensions).
    pub fn detect(path: &Path) -> Result<Self> {
        let mut magic = [0u8; 4];
        let format = match std::fs::File::open(path).and_then(|mut f| {
            use std::io::Read;
            f.read_exact(&mut magic)
        }) {
            Ok(()) if &magic == artifact::MAGIC => ModelFormat::NativeBinary,
            Ok(()) => ModelFormat::StandardPomdpText,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                ModelFormat::StandardPomdpText
            }
            Err(e) => return Err(e.into()),
        };
        Ok(ModelFile {
            path: path.to_path_buf(),
            format,
        })
    }
}
