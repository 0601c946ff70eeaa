//! Run manifest: everything needed to reproduce a run, written last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::neuron::{CALIBRATED_CM_OVER_DT, REFERENCE_CM_OVER_DT};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub seed: u64,
    /// SHA-256 of `config`, which is also written verbatim to `config.toml`.
    pub config_sha256: String,
    pub config: String,
    /// `C_m / dt` of the shared neuron parameters, F/s.
    pub c_m_over_dt: f64,
    /// `calibrated`, `reference` or `custom`.
    pub c_m_over_dt_origin: String,
    pub calibrated_c_m_over_dt: f64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub status: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(config: &SimConfig, started_unix_s: f64) -> Self {
        let text = config.to_toml();
        let c = config.neuron.c_m_over_dt;
        let origin = if c == CALIBRATED_CM_OVER_DT {
            "calibrated"
        } else if c == REFERENCE_CM_OVER_DT {
            "reference"
        } else {
            "custom"
        };
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_sha256: sha256_hex(text.as_bytes()),
            config: text,
            c_m_over_dt: c,
            c_m_over_dt_origin: origin.to_string(),
            calibrated_c_m_over_dt: CALIBRATED_CM_OVER_DT,
            started_unix_s,
            finished_unix_s: started_unix_s,
            status: "running".into(),
            files: Vec::new(),
        }
    }

    /// Hashes the listed files, relative to `dir`.
    pub fn inventory(&mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        self.files.clear();
        for rel in files {
            let bytes = fs::read(dir.join(rel))?;
            self.files.push(FileEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(())
    }

    /// Reparses the embedded config after checking it against its hash.
    pub fn config(&self) -> Result<SimConfig> {
        if sha256_hex(self.config.as_bytes()) != self.config_sha256 {
            return Err(Error::InvalidState("manifest config does not match its hash".into()));
        }
        SimConfig::from_toml(&self.config)
    }

    /// Writes `manifest.json` through a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidState(e.to_string()))?;
        let tmp = dir.join(format!(".{MANIFEST_FILE}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(json.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidState(format!("bad manifest: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_config_hash() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig::from_toml("t_end = \"1 ms\"\nseed = 9\n[neuron]\nc_m_over_dt = \"calibrated\"\n").unwrap();
        fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        let mut m = RunManifest::new(&cfg, 1.0);
        m.inventory(dir.path(), &[PathBuf::from("a.csv")]).unwrap();
        m.status = "ok".into();
        m.write_atomic(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.seed, 9);
        assert_eq!(back.c_m_over_dt_origin, "calibrated");
        assert_eq!(back.files[0].bytes, 4);
        assert_eq!(back.config().unwrap(), cfg);
        assert!(!dir.path().join(".manifest.json.tmp").exists());
    }

    #[test]
    fn tampered_config_is_rejected() {
        let cfg = SimConfig::from_toml("t_end = 0.001\n").unwrap();
        let mut m = RunManifest::new(&cfg, 0.0);
        m.config.push_str("\n# edited\n");
        assert!(m.config().is_err());
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
