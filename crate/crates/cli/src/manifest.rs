use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Plain-text record of one run: what went in, what came out, and when.
#[derive(Debug)]
pub struct Manifest {
    command: String,
    started: u64,
    seeds: Vec<u64>,
    config: Option<String>,
    inputs: Vec<(String, PathBuf, String)>,
    artifacts: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: unix_now(),
            seeds: Vec::new(),
            config: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn seeds(&mut self, seeds: &[u64]) {
        self.seeds = seeds.to_vec();
    }

    pub fn config(&mut self, text: String) {
        self.config = Some(text);
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.push((role.to_string(), path.to_path_buf(), digest));
        Ok(())
    }

    pub fn artifact(&mut self, role: &str, file: &str) {
        self.artifacts.push((role.to_string(), file.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# pathlink run manifest");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "started_unix = {}", self.started);
        let _ = writeln!(s, "finished_unix = {}", unix_now());
        if let Some(cfg) = &self.config {
            let _ = writeln!(s, "\n[config]");
            s.push_str(cfg);
        }
        if !self.inputs.is_empty() {
            let _ = writeln!(s, "\n[inputs]");
            for (role, path, digest) in &self.inputs {
                let _ = writeln!(s, "{role} = {} sha256:{digest}", path.display());
            }
        }
        if !self.artifacts.is_empty() {
            let _ = writeln!(s, "\n[artifacts]");
            for (role, file) in &self.artifacts {
                let _ = writeln!(s, "{role} = {file}");
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let path = dir.join("manifest.txt");
        fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_lists_inputs_with_digests() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("g.txt");
        fs::write(&file, "0 1\n").unwrap();
        let mut m = Manifest::new("train");
        m.seeds(&[1, 2]);
        m.config("seed = 1\n".into());
        m.input("edges", &file).unwrap();
        m.artifact("metrics", "metrics.csv");
        let text = m.render();
        assert!(text.contains("command = train\n"));
        assert!(text.contains("seeds = 1,2\n"));
        assert!(text.contains("[config]\nseed = 1\n"));
        let digest = hex::encode(Sha256::digest(b"0 1\n"));
        assert!(text.contains(&format!("sha256:{digest}")));
        assert!(text.contains("metrics = metrics.csv"));
        assert!(m.input("missing", &dir.path().join("nope")).is_err());
    }
}
