//! MHDS snapshot files and the run manifest.
//!
//! A snapshot file is the magic `MHDS`, a version byte, a little-endian u32
//! header length, a UTF-8 `key: value` header and then one little-endian f64
//! array of `n^3` values per listed field, x index fastest.

use crate::error::CliError;
use enstrophy_core::solver::{MhdState, SnapshotSource};
use enstrophy_core::{GridSpec, ScalarField, VectorField3};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"MHDS";
pub const VERSION: u8 = 1;
pub const FIELDS: [&str; 6] = ["ux", "uy", "uz", "bx", "by", "bz"];
pub const MANIFEST: &str = "manifest.json";

fn format_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Format(format!("{}: {msg}", path.display()))
}

pub fn write_snapshot(path: &Path, state: &MhdState) -> Result<(), CliError> {
    let g = state.grid();
    let header = format!(
        "n: {}\nL: {:?}\ntime: {:?}\nfields: {}\nordering: x-fastest\n",
        g.n(),
        g.length(),
        state.t,
        FIELDS.join(",")
    );
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for v in [&state.u, &state.b] {
        for c in v.components() {
            for x in c.values() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<MhdState, CliError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(format_err(path, "missing MHDS magic"));
    }
    if bytes[4] != VERSION {
        return Err(format_err(path, format!("unsupported version {}", bytes[4])));
    }
    let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = 9 + hlen;
    let header = bytes
        .get(9..body)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| format_err(path, "truncated or non-UTF-8 header"))?;

    let (mut n, mut length, mut time, mut fields, mut ordering) = (None, None, None, None, None);
    for line in header.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| format_err(path, format!("bad header line `{line}`")))?;
        let v = v.trim();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| format_err(path, format!("bad number `{s}`")))
        };
        match k.trim() {
            "n" => n = Some(v.parse::<usize>().map_err(|_| format_err(path, "bad n"))?),
            "L" => length = Some(num(v)?),
            "time" => time = Some(num(v)?),
            "fields" => fields = Some(v.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()),
            "ordering" => ordering = Some(v.to_string()),
            _ => {}
        }
    }
    let missing = |k: &str| format_err(path, format!("header lacks `{k}`"));
    let n = n.ok_or_else(|| missing("n"))?;
    let grid = GridSpec::new(n, length.ok_or_else(|| missing("L"))?)?;
    let time = time.ok_or_else(|| missing("time"))?;
    let fields = fields.ok_or_else(|| missing("fields"))?;
    if ordering.as_deref() != Some("x-fastest") {
        return Err(format_err(path, "ordering must be x-fastest"));
    }
    let len = grid.len();
    if bytes.len() != body + fields.len() * len * 8 {
        return Err(format_err(
            path,
            format!(
                "expected {} data bytes, found {}",
                fields.len() * len * 8,
                bytes.len() - body
            ),
        ));
    }
    let array = |name: &str| -> Result<ScalarField, CliError> {
        let k = fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| format_err(path, format!("field `{name}` not present")))?;
        let start = body + k * len * 8;
        let values = bytes[start..start + len * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ScalarField::from_values(grid, values)?)
    };
    let vector = |names: [&str; 3]| -> Result<VectorField3, CliError> {
        Ok(VectorField3::new(array(names[0])?, array(names[1])?, array(names[2])?)?)
    };
    Ok(MhdState {
        t: time,
        u: vector(["ux", "uy", "uz"])?,
        b: vector(["bx", "by", "bz"])?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub time: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUpInfo {
    pub time: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub length: f64,
    pub nu: f64,
    pub eta_m: f64,
    pub t_final: f64,
    pub seed: u64,
    pub snapshots: Vec<ManifestEntry>,
    pub complete: bool,
    pub blowup: Option<BlowUpInfo>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text =
            std::fs::read_to_string(&path).map_err(|e| format_err(&path, format!("cannot read manifest: {e}")))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }
}

pub fn snapshot_name(k: usize) -> String {
    format!("snap_{k:05}.mhds")
}

/// A directory of snapshots read one at a time on demand.
#[derive(Clone, Debug)]
pub struct SnapshotDir {
    dir: PathBuf,
    manifest: Manifest,
    grid: GridSpec,
}

impl SnapshotDir {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let manifest = Manifest::read(dir)?;
        let grid = GridSpec::new(manifest.n, manifest.length)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            grid,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, i: usize) -> PathBuf {
        self.dir.join(&self.manifest.snapshots[i].file)
    }
}

impl SnapshotSource for SnapshotDir {
    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn times(&self) -> Vec<f64> {
        self.manifest.snapshots.iter().map(|e| e.time).collect()
    }

    fn state(&self, i: usize) -> enstrophy_core::Result<Cow<'_, MhdState>> {
        let path = self.path(i);
        let s = read_snapshot(&path).map_err(|e| match e {
            CliError::Core(c) => c,
            other => enstrophy_core::Error::InvalidConfig(other.to_string()),
        })?;
        if s.grid() != self.grid || s.t.to_bits() != self.manifest.snapshots[i].time.to_bits() {
            return Err(enstrophy_core::Error::InvalidConfig(format!(
                "{} disagrees with the manifest",
                path.display()
            )));
        }
        Ok(Cow::Owned(s))
    }

    fn len(&self) -> usize {
        self.manifest.snapshots.len()
    }
}
