//! KITTI raw layout and split manifests.
//!
//! Frames live at `<root>/<sequence>/image_0{2,3}/data/<index:010>.{png,jpg}` (left camera is
//! `image_02`). Split files hold one `<sequence> <frame_index> <side>` identifier per line with
//! side `l` or `r`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{depth_io, FrameTriplet, RgbImage};
use crate::error::{ensure, Error, Result};
use crate::geometry::Intrinsics;

/// KITTI's shared intrinsics as fractions of image width/height (`fx, fy, cx, cy`).
pub const KITTI_NORMALIZED_INTRINSICS: [f64; 4] = [0.58, 1.92, 0.5, 0.5];

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn camera_dir(self) -> &'static str {
        match self {
            Side::Left => "image_02",
            Side::Right => "image_03",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameId {
    pub sequence: String,
    pub index: usize,
    pub side: Side,
}

impl FrameId {
    pub fn with_index(&self, index: usize) -> Self {
        Self {
            index,
            ..self.clone()
        }
    }
}

impl FromStr for FrameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let [sequence, index, side] = parts[..] else {
            return Err(Error::InvalidArgument(format!(
                "frame identifier {s:?} must be `<sequence> <index> <side>`"
            )));
        };
        let index = index
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad frame index in {s:?}")))?;
        let side = match side {
            "l" => Side::Left,
            "r" => Side::Right,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "side must be l or r in {s:?}"
                )))
            }
        };
        Ok(Self {
            sequence: sequence.to_string(),
            index,
            side,
        })
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::Left => 'l',
            Side::Right => 'r',
        };
        write!(f, "{} {} {}", self.sequence, self.index, side)
    }
}

/// Named frame lists, typically `train`, `val` and `test`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitManifest {
    pub lists: BTreeMap<String, Vec<FrameId>>,
}

impl SplitManifest {
    pub fn get(&self, name: &str) -> Option<&[FrameId]> {
        self.lists.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.lists.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(train, val, test)` sizes, zero for absent lists.
    pub fn counts(&self) -> (usize, usize, usize) {
        let n = |k| self.get(k).map_or(0, <[FrameId]>::len);
        (n("train"), n("val"), n("test"))
    }

    /// Identifiers whose target frame cannot be found under `root`.
    pub fn unresolved(&self, root: &Path) -> Vec<FrameId> {
        self.lists
            .values()
            .flatten()
            .filter(|id| find_image(root, id).is_none())
            .cloned()
            .collect()
    }
}

/// Reads one split list, dropping repeated identifiers with a warning.
pub fn read_split_file(path: &Path) -> Result<Vec<FrameId>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    let mut duplicates = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let id: FrameId = line.parse().map_err(|e: Error| Error::Format {
            what: "split file",
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        if seen.insert(id.clone()) {
            ids.push(id);
        } else {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!(
            "{}: dropped {duplicates} duplicate identifiers",
            path.display()
        );
    }
    ensure!(!ids.is_empty(), "split file {} is empty", path.display());
    Ok(ids)
}

/// Loads a split. A directory is searched for `{train,val,test}_files.txt`; a single file
/// becomes one list named after its stem (without a `_files` suffix).
pub fn load_split(path: &Path) -> Result<SplitManifest> {
    let mut lists = BTreeMap::new();
    if path.is_dir() {
        for name in SPLIT_NAMES {
            let file = path.join(format!("{name}_files.txt"));
            if file.exists() {
                lists.insert(name.to_string(), read_split_file(&file)?);
            }
        }
        ensure!(
            !lists.is_empty(),
            "no *_files.txt split lists in {}",
            path.display()
        );
    } else {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("split");
        let name = stem.strip_suffix("_files").unwrap_or(stem);
        lists.insert(name.to_string(), read_split_file(path)?);
    }
    let manifest = SplitManifest { lists };
    let mut owner: BTreeMap<&FrameId, &str> = BTreeMap::new();
    for (name, ids) in &manifest.lists {
        for id in ids {
            if let Some(prev) = owner.insert(id, name) {
                return Err(Error::InvalidArgument(format!(
                    "frame `{id}` appears in both {prev} and {name} lists"
                )));
            }
        }
    }
    let (train, val, test) = manifest.counts();
    log::info!(
        "split {}: train {train}, val {val}, test {test}",
        path.display()
    );
    Ok(manifest)
}

pub fn image_path(root: &Path, id: &FrameId, extension: &str) -> PathBuf {
    root.join(&id.sequence)
        .join(id.side.camera_dir())
        .join("data")
        .join(format!("{:010}.{extension}", id.index))
}

pub fn find_image(root: &Path, id: &FrameId) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|e| image_path(root, id, e))
        .find(|p| p.is_file())
}

/// Ground truth at `<gt_root>/<sequence>/image_0{2,3}/<index:010>.{png,f32}`.
pub fn find_gt_depth(gt_root: &Path, id: &FrameId) -> Option<PathBuf> {
    let dir = gt_root.join(&id.sequence).join(id.side.camera_dir());
    ["png", depth_io::RASTER_EXTENSION]
        .iter()
        .map(|e| dir.join(format!("{:010}.{e}", id.index)))
        .find(|p| p.is_file())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KittiConfig {
    pub width: usize,
    pub height: usize,
    pub normalized_intrinsics: [f64; 4],
    pub gt_root: Option<PathBuf>,
}

impl Default for KittiConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 192,
            normalized_intrinsics: KITTI_NORMALIZED_INTRINSICS,
            gt_root: None,
        }
    }
}

impl KittiConfig {
    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::from_normalized(self.normalized_intrinsics, self.width, self.height)
    }
}

/// Loads `(t-1, t, t+1)` around `id`, resized to the configured resolution.
///
/// Returns `Ok(None)` when a neighbour does not exist (sequence boundaries).
pub fn load_kitti_triplet(
    root: &Path,
    id: &FrameId,
    cfg: &KittiConfig,
) -> Result<Option<FrameTriplet>> {
    if id.index == 0 {
        return Ok(None);
    }
    let target = find_image(root, id).ok_or_else(|| {
        Error::io(
            image_path(root, id, "png"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "frame not found"),
        )
    })?;
    let (Some(prev), Some(next)) = (
        find_image(root, &id.with_index(id.index - 1)),
        find_image(root, &id.with_index(id.index + 1)),
    ) else {
        return Ok(None);
    };
    let load = |p: &Path| RgbImage::load(p).map(|img| img.resize(cfg.width, cfg.height));
    let gt_depth = match cfg.gt_root.as_deref().and_then(|r| find_gt_depth(r, id)) {
        Some(p) => Some(depth_io::load_depth(&p)?),
        None => None,
    };
    Ok(Some(FrameTriplet {
        frames: [load(&prev)?, load(&target)?, load(&next)?],
        intrinsics: cfg.intrinsics()?,
        gt_depth,
        gt_poses: None,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn frame_id_parsing() {
        let id: FrameId = "2011_09_26/2011_09_26_drive_0022_sync 473 r"
            .parse()
            .unwrap();
        assert_eq!(id.index, 473);
        assert_eq!(id.side, Side::Right);
        assert_eq!(
            id.to_string(),
            "2011_09_26/2011_09_26_drive_0022_sync 473 r"
        );
        assert!("seq 4".parse::<FrameId>().is_err());
        assert!("seq x l".parse::<FrameId>().is_err());
        assert!("seq 4 c".parse::<FrameId>().is_err());
    }

    #[test]
    fn split_dedup_single_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let dup = dir.path().join("dup.txt");
        write(&dup, "a 1 l\na 2 l\na 1 l\n");
        let m = load_split(&dup).unwrap();
        assert_eq!(m.get("dup").unwrap().len(), 2);

        let one = dir.path().join("test_files.txt");
        write(&one, "a 5 r\n");
        let m = load_split(&one).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.counts(), (0, 0, 1));

        let empty = dir.path().join("empty.txt");
        write(&empty, "\n");
        assert!(matches!(load_split(&empty), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn split_directory_and_overlap() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("train_files.txt"), "a 1 l\na 2 l\na 3 l\n");
        write(&dir.path().join("val_files.txt"), "b 1 l\n");
        write(&dir.path().join("test_files.txt"), "c 1 l\nc 2 r\n");
        assert_eq!(load_split(dir.path()).unwrap().counts(), (3, 1, 2));
        write(&dir.path().join("val_files.txt"), "a 2 l\n");
        assert!(load_split(dir.path()).is_err());
    }

    fn frame(root: &Path, id: &FrameId, value: f32) {
        let p = image_path(root, id, "png");
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        RgbImage::from_fn(64, 20, |_, _| [value; 3])
            .save_png(&p, false)
            .unwrap();
    }

    #[test]
    fn triplet_loading_and_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let id: FrameId = "seq 1 l".parse().unwrap();
        for i in 0..3 {
            frame(root, &id.with_index(i), 0.2 * i as f32);
        }
        let cfg = KittiConfig {
            width: 32,
            height: 16,
            ..Default::default()
        };
        let t = load_kitti_triplet(root, &id, &cfg).unwrap().unwrap();
        assert_eq!((t.frames[1].width, t.frames[1].height), (32, 16));
        assert!((t.frames[2].at(0, 3, 3) - 0.4).abs() < 1e-2);
        assert_eq!(t.intrinsics.fx, 0.58 * 32.0);
        assert!(load_kitti_triplet(root, &id.with_index(0), &cfg)
            .unwrap()
            .is_none());
        assert!(load_kitti_triplet(root, &id.with_index(2), &cfg)
            .unwrap()
            .is_none());
        assert!(load_kitti_triplet(root, &id.with_index(7), &cfg).is_err());

        let manifest = SplitManifest {
            lists: [("test".to_string(), vec![id.clone(), id.with_index(9)])].into(),
        };
        assert_eq!(manifest.unresolved(root), vec![id.with_index(9)]);
    }
}
