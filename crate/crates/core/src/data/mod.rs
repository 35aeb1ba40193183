//! Frame triplets: KITTI loading, ground-truth depth files, split lists, synthetic scenes
//! and augmentation.

pub mod augment;
pub mod depth_io;
pub mod kitti;
pub mod raster;
pub mod synthetic;

use std::path::PathBuf;

pub use augment::{augment, AugmentConfig, TrainingSample};
pub use kitti::{load_kitti_triplet, load_split, FrameId, KittiConfig, Side, SplitManifest};
pub use raster::RgbImage;
pub use synthetic::{
    generate_synthetic_dataset, generate_synthetic_scene, gt_warp_residual, SyntheticSpec,
};

use crate::error::{ensure, Result};
use crate::geometry::{DepthMap, Intrinsics, Pose};

/// Frames `(t-1, t, t+1)` with shared intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTriplet {
    pub frames: [RgbImage; 3],
    pub intrinsics: Intrinsics,
    /// Depth of the middle frame; zero where missing.
    pub gt_depth: Option<DepthMap>,
    /// `[T_{t->t-1}, T_{t->t+1}]`.
    pub gt_poses: Option<[Pose; 2]>,
}

impl FrameTriplet {
    pub fn target(&self) -> &RgbImage {
        &self.frames[1]
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.frames[1].width, self.frames[1].height);
        ensure!(
            self.frames.iter().all(|f| f.width == w && f.height == h),
            "triplet frames differ in size"
        );
        ensure!(
            self.intrinsics.width == w && self.intrinsics.height == h,
            "intrinsics are for {}x{}, frames are {w}x{h}",
            self.intrinsics.width,
            self.intrinsics.height
        );
        if let Some(d) = &self.gt_depth {
            ensure!(
                d.data.iter().all(|&x| x >= 0.0),
                "ground-truth depth must be non-negative"
            );
        }
        Ok(())
    }
}

/// Indexed source of triplets.
pub trait TripletSource {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> Result<FrameTriplet>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TripletSource for Vec<FrameTriplet> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<FrameTriplet> {
        Ok(self[index].clone())
    }
}

/// KITTI frames from a split list, restricted to ids whose neighbours exist.
#[derive(Debug, Clone)]
pub struct KittiDataset {
    pub root: PathBuf,
    pub ids: Vec<FrameId>,
    pub config: KittiConfig,
}

impl KittiDataset {
    pub fn new(root: PathBuf, ids: &[FrameId], config: KittiConfig) -> Self {
        let usable: Vec<FrameId> = ids
            .iter()
            .filter(|id| {
                id.index > 0
                    && [id.index - 1, id.index, id.index + 1]
                        .iter()
                        .all(|&i| kitti::find_image(&root, &id.with_index(i)).is_some())
            })
            .cloned()
            .collect();
        if usable.len() < ids.len() {
            log::warn!(
                "skipping {} frames without both neighbours",
                ids.len() - usable.len()
            );
        }
        Self {
            root,
            ids: usable,
            config,
        }
    }
}

impl TripletSource for KittiDataset {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn get(&self, index: usize) -> Result<FrameTriplet> {
        let id = &self.ids[index];
        load_kitti_triplet(&self.root, id, &self.config)?.ok_or_else(|| {
            crate::Error::InvalidArgument(format!("frame `{id}` lost a neighbour since indexing"))
        })
    }
}
