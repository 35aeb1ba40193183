//! Ground-truth depth files.
//!
//! Two encodings are accepted: a 16-bit grayscale PNG where metres = value / 256 and 0 marks
//! a missing sample, or a raw little-endian `f32` raster (`*.f32`) described by a JSON sidecar
//! at the same path with `.json` appended.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;

pub const PNG_DEPTH_SCALE: f32 = 256.0;
pub const RASTER_EXTENSION: &str = "f32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
    pub units: String,
}

pub fn sidecar_path(raster: &Path) -> PathBuf {
    let mut s = raster.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        what: "depth raster",
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads either encoding, chosen by file extension.
pub fn load_depth(path: &Path) -> Result<DepthMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(RASTER_EXTENSION) => load_raster(path),
        _ => load_png(path),
    }
}

pub fn load_png(path: &Path) -> Result<DepthMap> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let gray = img.to_luma16();
    let data = gray
        .pixels()
        .map(|p| p.0[0] as f32 / PNG_DEPTH_SCALE)
        .collect();
    DepthMap::new(gray.height() as usize, gray.width() as usize, data)
}

pub fn save_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let buf =
        ImageBuffer::<Luma<u16>, _>::from_fn(depth.width as u32, depth.height as u32, |u, v| {
            let d = depth.at(v as usize, u as usize);
            Luma([(d * PNG_DEPTH_SCALE).round().clamp(0.0, u16::MAX as f32) as u16])
        });
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_raster(path: &Path) -> Result<DepthMap> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RasterSidecar =
        serde_json::from_str(&text).map_err(|e| malformed(&side, e.to_string()))?;
    if meta.dtype != "float32" {
        return Err(malformed(
            &side,
            format!("unsupported dtype {}", meta.dtype),
        ));
    }
    let scale = match meta.units.as_str() {
        "m" | "meters" | "metres" => 1.0,
        "mm" => 1e-3,
        other => return Err(malformed(&side, format!("unsupported units {other}"))),
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * meta.width * meta.height {
        return Err(malformed(
            path,
            format!(
                "{} bytes for a {}x{} raster",
                bytes.len(),
                meta.width,
                meta.height
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) * scale)
        .collect();
    DepthMap::new(meta.height, meta.width, data).map_err(|e| malformed(path, e.to_string()))
}

/// Writes `values` (depth, disparity or any per-pixel scalar) as a raster plus sidecar.
pub fn save_raster(
    path: &Path,
    width: usize,
    height: usize,
    values: &[f32],
    units: &str,
) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = RasterSidecar {
        width,
        height,
        dtype: "float32".into(),
        units: units.into(),
    };
    let side = sidecar_path(path);
    std::fs::write(
        &side,
        serde_json::to_string_pretty(&meta).expect("sidecar serialises"),
    )
    .map_err(|e| Error::io(&side, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_units_are_256ths_of_a_metre() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.png");
        ImageBuffer::<Luma<u16>, _>::from_vec(3, 1, vec![25600u16, 0, 256])
            .unwrap()
            .save(&path)
            .unwrap();
        let d = load_depth(&path).unwrap();
        assert_eq!(d.data, vec![100.0, 0.0, 1.0]);
        assert!(!d.is_valid(0, 1));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let depth = DepthMap::new(2, 2, vec![1.5, 0.0, 80.0, 12.25]).unwrap();
        save_png(&path, &depth).unwrap();
        assert_eq!(load_depth(&path).unwrap(), depth);
    }

    #[test]
    fn raster_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.f32");
        let values = vec![0.1, 2.5, 99.0, 7.0, 3.25, 1.0];
        save_raster(&path, 3, 2, &values, "m").unwrap();
        let d = load_depth(&path).unwrap();
        assert_eq!((d.width, d.height), (3, 2));
        assert_eq!(d.data, values);

        std::fs::write(&path, [0u8; 7]).unwrap();
        assert!(matches!(load_depth(&path), Err(Error::Format { .. })));
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(matches!(load_depth(&path), Err(Error::Io { .. })));
    }
}
