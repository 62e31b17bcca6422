//! Run manifest: the exact configuration snapshot and its content hash,
//! written into the output directory before any training artifact so every
//! result stays traceable to the settings that produced it.

use crate::config::TrainConfig;
use crate::{Error, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Files and directories a run writes, relative to its output directory.
pub const RUN_LAYOUT: [&str; 4] = ["manifest.txt", "metrics.csv", "heatmaps/", "checkpoints/"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub config_sha256: String,
}

impl RunManifest {
    pub fn new(config: &TrainConfig) -> RunManifest {
        let config_sha256 = sha256_hex(config.to_text().as_bytes());
        RunManifest {
            config: config.clone(),
            config_sha256,
        }
    }

    /// Serialize: a header naming the hash and the output layout, then the
    /// full config text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("config_sha256 = {}\n", self.config_sha256));
        s.push_str(&format!("layout = {}\n", RUN_LAYOUT.join(" ")));
        s.push_str("\n");
        s.push_str(&self.config.to_text());
        s
    }

    /// Parse a manifest and verify the embedded hash against the config text
    /// it carries.
    pub fn parse(text: &str) -> Result<RunManifest> {
        let (header, config_text) = text.split_once("\n\n").ok_or_else(|| {
            Error::Corrupt("manifest: missing blank line between header and config".into())
        })?;
        let mut stored_hash = None;
        for line in header.lines() {
            if let Some(v) = line.strip_prefix("config_sha256 =") {
                stored_hash = Some(v.trim().to_string());
            }
        }
        let stored_hash =
            stored_hash.ok_or_else(|| Error::Corrupt("manifest: no config_sha256 line".into()))?;
        let actual = sha256_hex(config_text.as_bytes());
        if actual != stored_hash {
            return Err(Error::Corrupt(format!(
                "manifest hash mismatch: header says {stored_hash}, config text hashes to {actual}"
            )));
        }
        let config = TrainConfig::parse(config_text, &[])?;
        Ok(RunManifest {
            config,
            config_sha256: stored_hash,
        })
    }

    /// Write into `out_dir`; call before any other artifact.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text())?;
        Ok(path)
    }

    pub fn read(out_dir: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(out_dir.join(MANIFEST_FILE))?;
        RunManifest::parse(&text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LearnerKind;
    use crate::envs::EnvKind;

    #[test]
    fn sha256_matches_known_vector() {
        // SHA-256 of the empty string and of "abc" are standard test vectors.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_and_verifies() {
        let cfg = TrainConfig::defaults(EnvKind::WindyMaze, LearnerKind::Qmix);
        let m = RunManifest::new(&cfg);
        let parsed = RunManifest::parse(&m.to_text()).unwrap();
        assert_eq!(parsed, m);
        assert_eq!(parsed.config, cfg);
    }

    #[test]
    fn tampered_config_is_detected() {
        let cfg = TrainConfig::defaults(EnvKind::PacMen, LearnerKind::Qmix);
        let m = RunManifest::new(&cfg);
        let tampered = m.to_text().replace("alpha = 0.05", "alpha = 0.5");
        let err = RunManifest::parse(&tampered).unwrap_err();
        assert!(err.to_string().contains("hash mismatch"), "{err}");
    }

    #[test]
    fn write_then_read_from_directory() {
        let cfg = TrainConfig::defaults(EnvKind::Firefighters, LearnerKind::ActorCritic);
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest::new(&cfg);
        let path = m.write(dir.path()).unwrap();
        assert!(path.exists());
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn different_configs_hash_differently() {
        let a = RunManifest::new(&TrainConfig::defaults(EnvKind::PacMen, LearnerKind::Qmix));
        let b = RunManifest::new(&TrainConfig::defaults(EnvKind::WindyMaze, LearnerKind::Qmix));
        assert_ne!(a.config_sha256, b.config_sha256);
    }
}
