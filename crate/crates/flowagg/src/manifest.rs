//! JSON inputs: score files, per-video frame manifests, dataset manifests,
//! and the plain-text classes file. Relative paths resolve against the
//! directory of the file that mentions them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flowagg_core::{ClassId, ScoreVector, IGNORE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_owned(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

pub fn resolve(base: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        rel.to_owned()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(rel)
    }
}

/// Ordered class names, one per line. Line `i` is class index `i`; the
/// first line names the background class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassNames {
    names: Vec<String>,
}

impl ClassNames {
    pub fn new(names: Vec<String>) -> std::result::Result<Self, String> {
        if names.len() < 2 {
            return Err("need background plus at least one class".into());
        }
        if names.len() > IGNORE as usize {
            return Err(format!("{} classes exceed the 255-label limit", names.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(format!("duplicate class name {n:?}"));
            }
        }
        Ok(Self { names })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::parse(&text).map_err(|e| FormatError::invalid(path, e))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(names)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.names.join("\n");
        s.push('\n');
        s
    }

    /// Number of labels including background.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, name: &str) -> Option<ClassId> {
        self.names
            .iter()
            .position(|n| n == name)
            .filter(|&i| i > 0)
            .map(|i| ClassId(i as u8))
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.names.get(id.0 as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// PASCAL VOC 2012 ordering.
    pub fn voc() -> Self {
        let names = [
            "background", "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat",
            "chair", "cow", "diningtable", "dog", "horse", "motorbike", "person", "pottedplant",
            "sheep", "sofa", "train", "tvmonitor",
        ];
        Self::new(names.iter().map(|s| s.to_string()).collect()).expect("static VOC list")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameScores {
    pub frame_id: usize,
    pub scores: BTreeMap<String, f32>,
}

/// `{video_id, frames: [{frame_id, scores: {class_name: value}}], search_class}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreFile {
    pub video_id: String,
    pub frames: Vec<FrameScores>,
    pub search_class: String,
}

impl ScoreFile {
    /// Resolves class names and checks that frames are ordered and
    /// contiguous.
    pub fn to_vectors(&self, classes: &ClassNames) -> std::result::Result<(ClassId, Vec<ScoreVector>), String> {
        let search = classes
            .id(&self.search_class)
            .ok_or_else(|| format!("unknown search class {:?}", self.search_class))?;
        let mut out = Vec::with_capacity(self.frames.len());
        for (n, f) in self.frames.iter().enumerate() {
            let first = self.frames.first().map_or(0, |f| f.frame_id);
            if f.frame_id != first + n {
                return Err(format!("frame ids not contiguous at frame {}", f.frame_id));
            }
            let scores = f
                .scores
                .iter()
                .map(|(name, &s)| {
                    classes
                        .id(name)
                        .map(|c| (c, s))
                        .ok_or_else(|| format!("unknown class {name:?} in frame {}", f.frame_id))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            out.push(ScoreVector::new(f.frame_id, scores).map_err(|e| format!("frame {}: {e}", f.frame_id))?);
        }
        Ok((search, out))
    }
}

/// One localization map for one class under one transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamEntry {
    pub class_id: ClassId,
    #[serde(default)]
    pub flip: bool,
    #[serde(default = "unit_scale")]
    pub scale: f32,
    pub raster_path: PathBuf,
}

fn unit_scale() -> f32 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub frame_id: usize,
    #[serde(default)]
    pub entries: Vec<CamEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_path: Option<PathBuf>,
}

/// Per-video frame records: CAM rasters, saliency, optional reference
/// labels, and `flows[i]` from frame `i` to `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameManifest {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameEntry>,
    #[serde(default)]
    pub flows: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub video_id: String,
    pub scores: PathBuf,
    pub frames: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub classes: PathBuf,
    pub videos: Vec<VideoEntry>,
}
