//! Loading a corpus: every `.bpmn` / `.xml` file under a directory.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bpmn::{parse_bpmn, ParseError};
use crate::process::ProcessGraph;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("no BPMN files found under {0}")]
    Empty(PathBuf),
}

impl CorpusError {
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::Io { .. } => "io_failure",
            CorpusError::Parse { source, .. } => source.code(),
            CorpusError::Empty(_) => "empty_corpus",
        }
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: dir.to_path_buf(), source };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(path.extension().and_then(|e| e.to_str()), Some("bpmn" | "xml")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Parses every BPMN file below `dir` (sorted by path, recursively).
///
/// Process ids become `<relative path without extension>:<process id>` so
/// that ids stay unique across files. Processes without any flow node are
/// skipped.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<ProcessGraph>, CorpusError> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    if files.is_empty() {
        return Err(CorpusError::Empty(dir.to_path_buf()));
    }
    let mut graphs = Vec::new();
    for path in files {
        let bytes = fs::read(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
        let parsed = parse_bpmn(&bytes).map_err(|source| CorpusError::Parse { path: path.clone(), source })?;
        let rel = path.strip_prefix(dir).unwrap_or(&path).with_extension("");
        let prefix = rel.to_string_lossy().replace('\\', "/");
        for g in parsed.into_iter().filter(|g| !g.is_empty()) {
            let id = format!("{prefix}:{}", g.process_id());
            graphs.push(g.with_process_id(id));
        }
    }
    Ok(graphs)
}

/// Dataset name for reports: the directory's final component.
pub fn dataset_name(dir: impl AsRef<Path>) -> String {
    dir.as_ref()
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "corpus".to_string())
}
