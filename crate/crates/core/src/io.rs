//! Run directories.
//!
//! ```text
//! <dir>/config.toml          resolved configuration
//! <dir>/series.tsv           one row per sample, `#` header
//! <dir>/snapshots/snap_00000_m.txt ...
//! <dir>/outcome.json
//! <dir>/manifest.json        hashes of everything above
//! ```
//!
//! Snapshot files carry `#` header lines followed by `ny` rows of `nx`
//! values, row `j` holding `y_j`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::SeriesRow;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, RectDomain, State};
use crate::simulation::{Observer, RunOutcome, SimConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub started: f64,
    pub finished: f64,
    /// `ok`, or the error that ended the run early.
    pub status: String,
    pub files: Vec<FileEntry>,
}

/// Streams a run to disk. Outputs written before an error are kept.
pub struct RunWriter {
    dir: PathBuf,
    config_hash: String,
    seed: u64,
    started: f64,
    modes: Vec<(usize, usize)>,
    series: Option<BufWriter<File>>,
    files: Vec<PathBuf>,
}

impl RunWriter {
    /// Creates `dir` and writes the resolved configuration.
    pub fn create(dir: impl AsRef<Path>, config: &SimConfig, resolved_toml: &str) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("snapshots")).map_err(|e| Error::io(&dir, e))?;
        let mut writer = Self {
            dir,
            config_hash: sha256_hex(resolved_toml.as_bytes()),
            seed: config.seed,
            started: unix_now(),
            modes: config.monitors.modes.clone(),
            series: None,
            files: Vec::new(),
        };
        writer.write_file("config.toml", resolved_toml.as_bytes())?;
        Ok(writer)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn write_file(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }

    fn series_writer(&mut self, with_phi: bool) -> Result<&mut BufWriter<File>> {
        if self.series.is_none() {
            let path = self.dir.join("series.tsv");
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let header = SeriesRow::header(&self.modes, with_phi).join("\t");
            writeln!(w, "# config_hash {}", self.config_hash)
                .and_then(|_| writeln!(w, "#{header}"))
                .map_err(|e| Error::io(&path, e))?;
            self.files.push(PathBuf::from("series.tsv"));
            self.series = Some(w);
        }
        Ok(self.series.as_mut().expect("just created"))
    }

    /// Flushes the series, writes `outcome.json` when the run finished and
    /// the manifest in every case.
    pub fn finish(mut self, result: &Result<RunOutcome>) -> Result<Manifest> {
        if let Some(mut w) = self.series.take() {
            w.flush()
                .map_err(|e| Error::io(self.dir.join("series.tsv"), e))?;
        }
        let status = match result {
            Ok(outcome) => {
                let json = serde_json::to_vec_pretty(outcome).expect("outcome serializes");
                self.write_file("outcome.json", &json)?;
                "ok".to_string()
            }
            Err(e) => format!("error: {e}"),
        };
        let mut files = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            files.push(file_entry(&self.dir, rel)?);
        }
        let manifest = Manifest {
            version: VERSION.to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            started: self.started,
            finished: unix_now(),
            status,
            files,
        };
        let path = self.dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

impl Observer for RunWriter {
    fn on_sample(&mut self, _state: &State, row: &SeriesRow) -> Result<()> {
        let path = self.dir.join("series.tsv");
        let w = self.series_writer(row.phi.is_some())?;
        let line: Vec<String> = row.values().iter().map(|v| format!("{v:.10e}")).collect();
        writeln!(w, "{}", line.join("\t")).map_err(|e| Error::io(&path, e))
    }

    fn on_snapshot(&mut self, index: usize, state: &State) -> Result<()> {
        for (name, field) in state.fields() {
            let rel = format!("snapshots/snap_{index:05}_{name}.txt");
            let text = snapshot_text(field, name, state.t, &self.config_hash);
            self.write_file(&rel, text.as_bytes())?;
        }
        Ok(())
    }
}

fn file_entry(dir: &Path, rel: &Path) -> Result<FileEntry> {
    let path = dir.join(rel);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(FileEntry {
        path: rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

pub fn snapshot_text(field: &Field, name: &str, t: f64, config_hash: &str) -> String {
    let g = field.grid();
    let mut s = String::with_capacity(24 * g.len() + 256);
    s.push_str(&format!("# time {t:.16e}\n"));
    s.push_str(&format!("# nx {}\n# ny {}\n", g.nx(), g.ny()));
    s.push_str(&format!(
        "# lx {:.16e}\n# ly {:.16e}\n",
        g.domain().lx(),
        g.domain().ly()
    ));
    s.push_str(&format!("# field {name}\n# config_hash {config_hash}\n"));
    for j in 0..g.ny() {
        let row: Vec<String> = (0..g.nx())
            .map(|i| format!("{:.16e}", field.at(i, j)))
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// A snapshot file read back.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub name: String,
    pub field: Field,
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, field: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        message,
    };
    let (mut t, mut nx, mut ny, mut lx, mut ly, mut name) = (None, None, None, None, None, None);
    let mut values = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = k + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            let (Some(key), Some(val)) = (parts.next(), parts.next()) else {
                continue;
            };
            let num = || {
                val.parse::<f64>()
                    .map_err(|e| bad(lineno, key, e.to_string()))
            };
            match key {
                "time" => t = Some(num()?),
                "nx" => nx = Some(num()? as usize),
                "ny" => ny = Some(num()? as usize),
                "lx" => lx = Some(num()?),
                "ly" => ly = Some(num()?),
                "field" => name = Some(val.to_string()),
                _ => {}
            }
            continue;
        }
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|e| bad(lineno, "value", e.to_string()))?,
            );
        }
    }
    let missing = |key: &str| bad(0, key, "missing header".into());
    let grid = Grid::new(
        RectDomain::new(
            lx.ok_or_else(|| missing("lx"))?,
            ly.ok_or_else(|| missing("ly"))?,
        )?,
        nx.ok_or_else(|| missing("nx"))?,
        ny.ok_or_else(|| missing("ny"))?,
    )?;
    let field = Field::from_vec(grid, values)?;
    Ok(Snapshot {
        t: t.ok_or_else(|| missing("time"))?,
        name: name.ok_or_else(|| missing("field"))?,
        field,
    })
}

/// Outcome of [`verify`].
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checked: usize,
    /// Paths whose size or hash differs from the manifest, or that are missing.
    pub mismatched: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Rehashes every file listed in `dir/manifest.json`.
pub fn verify(dir: impl AsRef<Path>) -> Result<VerifyReport> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        field: String::new(),
        message: e.to_string(),
    })?;
    let mut mismatched = Vec::new();
    for entry in &manifest.files {
        match file_entry(dir, Path::new(&entry.path)) {
            Ok(now) if now == *entry => {}
            _ => mismatched.push(entry.path.clone()),
        }
    }
    Ok(VerifyReport {
        checked: manifest.files.len(),
        mismatched,
    })
}
