use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Environment variable naming the directory searched for backbone
/// checkpoints and word-vector files.
pub const CACHE_DIR_ENV: &str = "HATEFUSE_CACHE_DIR";

/// Short names for the three Bangla-capable backbones.
pub const KNOWN_BACKBONES: [(&str, &str); 3] = [
    ("muril", "google/muril-base-cased"),
    ("banglabert", "csebuetnlp/banglabert"),
    ("indicbertv2", "ai4bharat/IndicBERTv2-MLM-only"),
];

pub fn canonical_backbone_id(id: &str) -> &str {
    KNOWN_BACKBONES
        .iter()
        .find(|(alias, _)| alias.eq_ignore_ascii_case(id))
        .map_or(id, |(_, full)| full)
}

/// Maps opaque backbone identifiers to checkpoint directories.
#[derive(Debug, Clone, Default)]
pub struct BackboneResolver {
    search_dirs: Vec<PathBuf>,
}

impl BackboneResolver {
    pub fn new(search_dirs: Vec<PathBuf>) -> Self {
        BackboneResolver { search_dirs }
    }

    /// `$HATEFUSE_CACHE_DIR`, then the Hugging Face hub cache.
    pub fn from_env() -> Self {
        let mut dirs = Vec::new();
        if let Some(d) = std::env::var_os(CACHE_DIR_ENV) {
            dirs.push(PathBuf::from(d));
        }
        if let Some(d) = std::env::var_os("HF_HUB_CACHE") {
            dirs.push(PathBuf::from(d));
        }
        if let Some(d) = std::env::var_os("HF_HOME") {
            dirs.push(PathBuf::from(d).join("hub"));
        }
        if let Some(home) = std::env::var_os("HOME") {
            dirs.push(PathBuf::from(home).join(".cache/huggingface/hub"));
        }
        BackboneResolver { search_dirs: dirs }
    }

    pub fn search_dirs(&self) -> &[PathBuf] {
        &self.search_dirs
    }

    /// Accepts a directory path, `org/name` under a search directory, or a
    /// hub-cache snapshot (`models--org--name/snapshots/<rev>`).
    pub fn resolve(&self, backbone_id: &str) -> Result<PathBuf> {
        let id = canonical_backbone_id(backbone_id);
        let direct = Path::new(id);
        if is_checkpoint(direct) {
            return Ok(direct.to_path_buf());
        }
        for dir in &self.search_dirs {
            let plain = dir.join(id);
            if is_checkpoint(&plain) {
                return Ok(plain);
            }
            let snapshots = dir.join(format!("models--{}", id.replace('/', "--"))).join("snapshots");
            if let Ok(entries) = std::fs::read_dir(&snapshots) {
                let mut revs: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| is_checkpoint(p))
                    .collect();
                revs.sort();
                if let Some(last) = revs.pop() {
                    return Ok(last);
                }
            }
        }
        Err(Error::Config(format!(
            "backbone {backbone_id:?} not found; looked for a directory with config.json in {} (set {CACHE_DIR_ENV})",
            if self.search_dirs.is_empty() {
                "<no search directories>".to_string()
            } else {
                self.search_dirs
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        )))
    }

    /// Resolves a data file path (word vectors) relative to the cache
    /// directories when it is not found as given.
    pub fn resolve_file(&self, path: &str) -> Result<PathBuf> {
        let p = Path::new(path);
        if p.is_file() {
            return Ok(p.to_path_buf());
        }
        if p.is_relative() {
            for dir in &self.search_dirs {
                let candidate = dir.join(p);
                if candidate.is_file() {
                    return Ok(candidate);
                }
            }
        }
        Err(Error::Config(format!("file {path:?} not found")))
    }
}

fn is_checkpoint(dir: &Path) -> bool {
    dir.join("config.json").is_file()
}
