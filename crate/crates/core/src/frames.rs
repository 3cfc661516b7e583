//! Pixel sources for stages that look at frame content.

use std::collections::BTreeMap;
use std::path::PathBuf;

use image::DynamicImage;

/// Random access to decoded video frames by index.
pub trait FrameSource {
    fn frame(&self, index: u32) -> Option<DynamicImage>;
}

/// Frames stored as `frame_000000.png`, `frame_000001.png`, ... in one directory.
#[derive(Debug, Clone)]
pub struct FrameDir {
    root: PathBuf,
}

impl FrameDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn file_name(index: u32) -> String {
        format!("frame_{index:06}.png")
    }

    pub fn path(&self, index: u32) -> PathBuf {
        self.root.join(Self::file_name(index))
    }
}

impl FrameSource for FrameDir {
    fn frame(&self, index: u32) -> Option<DynamicImage> {
        image::open(self.path(index)).ok()
    }
}

/// In-memory frames, mostly for synthetic videos.
#[derive(Debug, Clone, Default)]
pub struct MemoryFrames(pub BTreeMap<u32, DynamicImage>);

impl MemoryFrames {
    pub fn from_vec(frames: Vec<DynamicImage>) -> Self {
        Self(frames.into_iter().enumerate().map(|(i, f)| (i as u32, f)).collect())
    }
}

impl FrameSource for MemoryFrames {
    fn frame(&self, index: u32) -> Option<DynamicImage> {
        self.0.get(&index).cloned()
    }
}
