//! On-disk formats.
//!
//! * Ground truth: one action name per line per frame; file stem is the video id.
//! * Mapping: `action_name id` per line.
//! * Features (`.tsft`): magic `TSFT`, u32 T, u32 D, then `T·D` little-endian
//!   f32 values, frame-major.
//! * Dataset manifest: `manifest.json` listing every video with its split,
//!   activity tag and relative file paths.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, GeneratorConfig, SplitKind, Video};
use crate::error::{Result, TssError};
use crate::matrix::Matrix;
use crate::seqcore::LabelSequence;

const FEATURE_MAGIC: &[u8; 4] = b"TSFT";

/// Bidirectional action name ↔ id table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Mapping {
    pub fn new(names: Vec<String>) -> Self {
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self { names, ids }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| TssError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| TssError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| TssError::io(path, e))
}

/// Parses `action_name id` lines. Ids must cover `0..n` exactly once.
pub fn read_mapping(path: &Path) -> Result<Mapping> {
    let text = read_text(path)?;
    let parse_err = |reason: String| TssError::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let mut entries: BTreeMap<usize, String> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(id), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(format!(
                "line {}: expected 'action_name id'",
                n + 1
            )));
        };
        let id: usize = id
            .parse()
            .map_err(|_| parse_err(format!("line {}: bad id '{id}'", n + 1)))?;
        if entries.insert(id, name.to_owned()).is_some() {
            return Err(parse_err(format!("line {}: duplicate id {id}", n + 1)));
        }
    }
    if entries.keys().copied().ne(0..entries.len()) {
        return Err(parse_err("ids must be 0..n without gaps".into()));
    }
    Ok(Mapping::new(entries.into_values().collect()))
}

pub fn write_mapping(path: &Path, mapping: &Mapping) -> Result<()> {
    let mut out = String::new();
    for (i, name) in mapping.names().iter().enumerate() {
        out.push_str(&format!("{name} {i}\n"));
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_groundtruth_file(path: &Path, mapping: &Mapping) -> Result<LabelSequence> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for line in text.lines() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        let id = mapping.id(name).ok_or_else(|| TssError::UnknownAction {
            name: name.to_owned(),
            path: path.to_path_buf(),
        })?;
        labels.push(id);
    }
    LabelSequence::new(labels, mapping.len())
}

pub fn write_groundtruth(path: &Path, labels: &LabelSequence, mapping: &Mapping) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 12);
    for &l in labels.labels() {
        let name = mapping.name(l).ok_or(TssError::LabelOutOfRange {
            label: l,
            num_classes: mapping.len(),
        })?;
        out.push_str(name);
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Reads every `*.txt` file of `dir`, keyed by file stem.
pub fn read_groundtruth_dir(
    dir: &Path,
    mapping_path: &Path,
) -> Result<BTreeMap<String, LabelSequence>> {
    let mapping = read_mapping(mapping_path)?;
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| TssError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt") && p != mapping_path)
        .collect();
    paths.sort();
    for path in paths {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_owned();
        out.insert(stem, read_groundtruth_file(&path, &mapping)?);
    }
    Ok(out)
}

pub fn write_features(path: &Path, features: &Matrix) -> Result<()> {
    let (frames, dim) = features.shape();
    let mut buf = Vec::with_capacity(12 + 4 * frames * dim);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(frames as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for &v in features.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_bytes(path, &buf)
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    let buf = fs::read(path).map_err(|e| TssError::io(path, e))?;
    let corrupt = |reason: String| TssError::CorruptFeatureFile {
        path: path.to_path_buf(),
        reason,
    };
    if buf.len() < 12 || &buf[..4] != FEATURE_MAGIC {
        return Err(corrupt("bad magic or truncated header".into()));
    }
    let frames = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if frames == 0 || dim == 0 {
        return Err(corrupt(format!("empty shape {frames}x{dim}")));
    }
    let body = &buf[12..];
    if body.len() != frames * dim * 4 {
        return Err(corrupt(format!(
            "{} payload bytes for a {frames}x{dim} matrix",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Matrix::from_vec(frames, dim, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub split: SplitKind,
    #[serde(default)]
    pub activity: Option<String>,
    pub features: String,
    pub groundtruth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub mapping: String,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    pub videos: Vec<VideoEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `manifest.json`, `mapping.txt`, `groundTruth/*.txt` and `features/*.tsft`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest> {
    let mapping = Mapping::new(dataset.action_names.clone());
    write_mapping(&dir.join("mapping.txt"), &mapping)?;
    let mut videos = Vec::new();
    for (split, list) in [
        (SplitKind::Train, &dataset.train),
        (SplitKind::Test, &dataset.test),
    ] {
        for v in list {
            let features = format!("features/{}.tsft", v.id);
            let groundtruth = format!("groundTruth/{}.txt", v.id);
            write_features(&dir.join(&features), &v.features)?;
            write_groundtruth(&dir.join(&groundtruth), &v.labels, &mapping)?;
            videos.push(VideoEntry {
                id: v.id.clone(),
                split,
                activity: v.activity.clone(),
                features,
                groundtruth,
            });
        }
    }
    let manifest = DatasetManifest {
        num_classes: dataset.num_classes,
        feature_dim: dataset.feature_dim,
        mapping: "mapping.txt".into(),
        generator: dataset.generator,
        videos,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_bytes(&dir.join(MANIFEST_FILE), format!("{json}\n").as_bytes())?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest =
        serde_json::from_str(&read_text(&manifest_path)?).map_err(|e| TssError::Parse {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
    let mapping = read_mapping(&dir.join(&manifest.mapping))?;
    if mapping.len() != manifest.num_classes {
        return Err(TssError::Parse {
            path: manifest_path,
            reason: format!(
                "mapping has {} actions, manifest says {}",
                mapping.len(),
                manifest.num_classes
            ),
        });
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for entry in &manifest.videos {
        let features_path = dir.join(&entry.features);
        let features = read_features(&features_path)?;
        let labels = read_groundtruth_file(&dir.join(&entry.groundtruth), &mapping)?;
        if features.cols() != manifest.feature_dim || features.rows() != labels.len() {
            return Err(TssError::CorruptFeatureFile {
                path: features_path,
                reason: format!(
                    "shape {:?} does not match {} labels × {} dims",
                    features.shape(),
                    labels.len(),
                    manifest.feature_dim
                ),
            });
        }
        let video = Video {
            id: entry.id.clone(),
            activity: entry.activity.clone(),
            features,
            labels,
        };
        match entry.split {
            SplitKind::Train => train.push(video),
            SplitKind::Test => test.push(video),
        }
    }
    Ok(Dataset {
        num_classes: manifest.num_classes,
        feature_dim: manifest.feature_dim,
        action_names: mapping.names().to_vec(),
        train,
        test,
        generator: manifest.generator,
    })
}
