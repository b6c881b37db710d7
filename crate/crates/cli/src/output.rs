use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const OUT_DIR_ENV: &str = "ARGEN_OUT_DIR";

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-derive an output. Thread count and wall-clock
/// time are deliberately absent so payloads are byte-identical across runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self { command: command.to_string(), tool_version: env!("CARGO_PKG_VERSION").to_string(), seed, config, inputs: Vec::new() }
    }

    pub fn digest(&mut self, path: &Path) -> Result<(), Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: format!("{:x}", Sha256::digest(&bytes)) });
        Ok(())
    }
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    manifest: &'a RunManifest,
}

/// Where outputs go: a directory, or stdout for the primary document only.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn resolve(out: Option<PathBuf>) -> Result<Self, Failure> {
        let dir = out.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Failure::Data(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self { dir })
    }

    fn write(&self, name: &str, bytes: &[u8], primary: bool) -> Result<(), Failure> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, bytes).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
            }
            None if primary => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Failure::Data(format!("stdout: {e}")))
            }
            None => Ok(()),
        }
    }

    /// Writes `value` as JSON with 17 significant digits.
    pub fn json<T: Serialize>(&self, name: &str, value: &T, primary: bool) -> Result<(), Failure> {
        let text = argen::json::to_string(value).map_err(|e| Failure::Usage(format!("serialization failed: {e}")))?;
        self.write(name, text.as_bytes(), primary)
    }

    /// Writes `body` with the manifest embedded under `manifest`, and the
    /// manifest alone to `manifest.json` when writing to a directory.
    pub fn report<T: Serialize>(&self, name: &str, body: &T, manifest: &RunManifest, primary: bool) -> Result<(), Failure> {
        self.json(name, &WithManifest { body, manifest }, primary)?;
        self.json("manifest.json", manifest, false)
    }

    pub fn csv(&self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> argen::Result<()>, primary: bool) -> Result<(), Failure> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf, primary)
    }
}

/// Six significant digits for human-readable summaries.
pub fn g6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        let s = format!("{x:.*}", (5 - e).max(0) as usize);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}
