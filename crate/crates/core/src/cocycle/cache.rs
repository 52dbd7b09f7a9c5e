use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::splitting::{invariant_splitting, BundleFrame, SplittingConfig};
use crate::error::Result;
use crate::maps::SmoothTorusMap;

pub const BUNDLE_CACHE_VERSION: u32 = 1;

/// On-disk bundle frames keyed by map fingerprint and grid specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleCache {
    pub version: u32,
    pub map: String,
    pub per_axis: usize,
    pub config: SplittingConfig,
    pub frames: Vec<BundleFrame>,
}

/// Cell centers of the uniform `per_axis^d` grid, row-major.
pub fn grid_points(d: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; d];
            for c in p.iter_mut().rev() {
                *c = ((idx % per_axis) as f64 + 0.5) / per_axis as f64;
                idx /= per_axis;
            }
            p
        })
        .collect()
}

fn cache_path(dir: &Path, f: &SmoothTorusMap, per_axis: usize) -> PathBuf {
    dir.join(format!("bundles-v{BUNDLE_CACHE_VERSION}-{}-{per_axis}.json", f.fingerprint()))
}

/// Bundle frames on the uniform grid, reusing a cache file in `cache_dir`
/// when one with a matching version, map and configuration exists.
pub fn grid_splitting(
    f: &SmoothTorusMap,
    per_axis: usize,
    cfg: &SplittingConfig,
    cache_dir: Option<&Path>,
) -> Result<(Vec<BundleFrame>, bool)> {
    let path = cache_dir.map(|d| cache_path(d, f, per_axis));
    if let Some(p) = &path {
        if let Ok(text) = fs::read_to_string(p) {
            if let Ok(c) = serde_json::from_str::<BundleCache>(&text) {
                if c.version == BUNDLE_CACHE_VERSION
                    && c.map == f.fingerprint()
                    && c.per_axis == per_axis
                    && c.config == *cfg
                {
                    return Ok((c.frames, true));
                }
            }
        }
    }
    let frames = invariant_splitting(f, &grid_points(f.dim(), per_axis), cfg)?;
    if let Some(p) = &path {
        let c = BundleCache {
            version: BUNDLE_CACHE_VERSION,
            map: f.fingerprint(),
            per_axis,
            config: *cfg,
            frames: frames.clone(),
        };
        if let Some(parent) = p.parent() {
            let _ = fs::create_dir_all(parent);
        }
        let tmp = p.with_extension("tmp");
        if fs::write(&tmp, serde_json::to_vec(&c).expect("cache serializes")).is_ok() {
            let _ = fs::rename(&tmp, p);
        }
    }
    Ok((frames, false))
}
