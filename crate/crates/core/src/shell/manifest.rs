use super::ShellError;
use crate::container::{sha256_hex, write_atomic, VERSION};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.txt";
const CACHE_DIR: &str = "cache";

/// Record of a run directory: config hash, versions, every produced file
/// with its checksum, and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_sha256: String,
    pub version: String,
    pub container_version: u32,
    /// (path relative to the run directory, sha256).
    pub files: Vec<(String, String)>,
    pub wall_clock_s: f64,
    pub norm_drift: Option<f64>,
}

fn collect(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        let name = e.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || (dir == root && (name == MANIFEST_FILE || name == CACHE_DIR)) {
            continue;
        }
        if e.file_type()?.is_dir() {
            collect(&path, root, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

impl RunManifest {
    /// Checksums every file under `dir` except the cache and the manifest itself.
    pub fn scan(dir: &Path, config_sha256: String, wall_clock_s: f64, norm_drift: Option<f64>) -> Result<Self, ShellError> {
        let mut paths = Vec::new();
        collect(dir, dir, &mut paths).map_err(ShellError::io(dir))?;
        let mut files = Vec::with_capacity(paths.len());
        for p in paths {
            let bytes = std::fs::read(&p).map_err(ShellError::io(&p))?;
            let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            files.push((rel, sha256_hex(&bytes)));
        }
        Ok(Self {
            config_sha256,
            version: env!("CARGO_PKG_VERSION").to_string(),
            container_version: VERSION,
            files,
            wall_clock_s,
            norm_drift,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# hypertrimer run manifest\n");
        let _ = writeln!(s, "config_sha256 = {}", self.config_sha256);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "container_version = {}", self.container_version);
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.wall_clock_s);
        if let Some(d) = self.norm_drift {
            let _ = writeln!(s, "norm_drift = {d:.6e}");
        }
        s.push_str("[files]\n");
        for (p, h) in &self.files {
            let _ = writeln!(s, "{h}  {p}");
        }
        s
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut m = RunManifest {
            config_sha256: String::new(),
            version: String::new(),
            container_version: 0,
            files: Vec::new(),
            wall_clock_s: 0.0,
            norm_drift: None,
        };
        let mut in_files = false;
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            if line == "[files]" {
                in_files = true;
            } else if in_files {
                let (h, p) = line.split_once("  ")?;
                m.files.push((p.to_string(), h.to_string()));
            } else {
                let (k, v) = line.split_once(" = ")?;
                match k {
                    "config_sha256" => m.config_sha256 = v.to_string(),
                    "version" => m.version = v.to_string(),
                    "container_version" => m.container_version = v.parse().ok()?,
                    "wall_clock_s" => m.wall_clock_s = v.parse().ok()?,
                    "norm_drift" => m.norm_drift = Some(v.parse().ok()?),
                    _ => return None,
                }
            }
        }
        Some(m)
    }

    pub fn write(&self, dir: &Path) -> Result<(), ShellError> {
        let path = dir.join(MANIFEST_FILE);
        write_atomic(&path, self.to_text().as_bytes()).map_err(ShellError::io(&path))
    }

    pub fn read(dir: &Path) -> Result<Self, ShellError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(ShellError::io(&path))?;
        Self::parse(&text).ok_or_else(|| ShellError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, "malformed manifest"),
        })
    }

    /// Files that are missing or whose checksum no longer matches.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|(p, h)| std::fs::read(dir.join(p)).map(|b| sha256_hex(&b) != *h).unwrap_or(true))
            .map(|(p, _)| p.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a/x.txt"), b"one").unwrap();
        write_atomic(&dir.path().join("b.txt"), b"two").unwrap();
        write_atomic(&dir.path().join("cache/skip.bin"), b"cached").unwrap();
        let m = RunManifest::scan(dir.path(), "abc".into(), 1.5, Some(1e-12)).unwrap();
        assert_eq!(m.files.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(), vec!["a/x.txt", "b.txt"]);
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back.files, m.files);
        assert_eq!(back.norm_drift, Some(1e-12));
        assert!(back.verify(dir.path()).is_empty());
        std::fs::write(dir.path().join("b.txt"), b"changed").unwrap();
        assert_eq!(back.verify(dir.path()), vec!["b.txt".to_string()]);
    }
}
