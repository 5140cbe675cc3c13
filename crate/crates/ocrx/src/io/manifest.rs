//! Line-oriented dataset manifests.
//!
//! One record per line, tab-separated:
//! `identity_id<TAB>track_id<TAB>split<TAB>frame_path<TAB>flag<TAB>[mask_path]`
//! Paths are relative to the manifest's root directory.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use super::{IoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Gallery,
    Probe,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "gallery" => Some(Split::Gallery),
            "probe" => Some(Split::Probe),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Gallery => "gallery",
            Split::Probe => "probe",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub identity_id: usize,
    pub track_id: usize,
    pub split: Split,
    pub frame_path: PathBuf,
    pub occluded: bool,
    pub mask_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 && fields.len() != 6 {
                return Err(IoError::Manifest {
                    line: lineno,
                    msg: format!("expected 5 or 6 tab-separated fields, got {}", fields.len()),
                });
            }
            let identity_id = fields[0].parse().map_err(|e| IoError::Manifest {
                line: lineno,
                msg: format!("bad identity_id: {e}"),
            })?;
            let track_id = fields[1].parse().map_err(|e| IoError::Manifest {
                line: lineno,
                msg: format!("bad track_id: {e}"),
            })?;
            let split = Split::parse(fields[2]).ok_or_else(|| IoError::Manifest {
                line: lineno,
                msg: format!("bad split {:?}", fields[2]),
            })?;
            let occluded = match fields[4] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(IoError::Manifest {
                        line: lineno,
                        msg: format!("bad flag {other:?}"),
                    })
                }
            };
            let mask_path = match fields.get(5) {
                Some(p) if !p.is_empty() => Some(PathBuf::from(p)),
                _ => None,
            };
            entries.push(ManifestEntry {
                identity_id,
                track_id,
                split,
                frame_path: PathBuf::from(fields[3]),
                occluded,
                mask_path,
            });
        }
        Ok(DatasetManifest { root, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            let mask = e
                .mask_path
                .as_ref()
                .map(|p| format!("\t{}", p.display()))
                .unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}{}\n",
                e.identity_id,
                e.track_id,
                e.split,
                e.frame_path.display(),
                e.occluded as u8,
                mask
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Every referenced file must exist and identity ids must be contiguous
    /// from 0. A validated manifest does not produce I/O surprises mid-run.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            ids.insert(e.identity_id);
            let fp = self.root.join(&e.frame_path);
            if !fp.is_file() {
                return Err(IoError::MissingFile(fp));
            }
            if let Some(mp) = &e.mask_path {
                let mp = self.root.join(mp);
                if !mp.is_file() {
                    return Err(IoError::MissingFile(mp));
                }
            }
        }
        for (want, got) in ids.iter().enumerate() {
            if want != *got {
                return Err(IoError::Manifest {
                    line: 0,
                    msg: format!("identity ids not contiguous: missing {want}"),
                });
            }
        }
        Ok(())
    }

    pub fn identities(&self) -> Vec<usize> {
        let ids: BTreeSet<usize> = self.entries.iter().map(|e| e.identity_id).collect();
        ids.into_iter().collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }
}
