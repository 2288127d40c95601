//! Burned-in overlay removal: bright text and logos are found as
//! 8-connected components of pixels brighter than a threshold, and each
//! component's bounding rectangle is painted black.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: u8 = 230;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(Error::InvalidArgument(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        RasterImage { width, height, pixels }
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(img.to_rgb8().into())
    }

    /// Saves in the format implied by the extension (`.ppm` is binary P6).
    pub fn save(&self, path: &Path) -> Result<()> {
        let img: RgbImage = self.clone().into();
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl From<RgbImage> for RasterImage {
    fn from(img: RgbImage) -> Self {
        RasterImage {
            width: img.width(),
            height: img.height(),
            pixels: img.into_raw(),
        }
    }
}

impl From<RasterImage> for RgbImage {
    fn from(img: RasterImage) -> Self {
        RgbImage::from_raw(img.width, img.height, img.pixels).expect("pixel buffer matches dimensions")
    }
}

/// BT.601 luma, rounded half up.
pub fn grayscale([r, g, b]: [u8; 3]) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PixelRect {
    pub top: u32,
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
}

impl PixelRect {
    pub fn area(&self) -> u64 {
        (self.bottom - self.top + 1) as u64 * (self.right - self.left + 1) as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.left <= x && x <= self.right && self.top <= y && y <= self.bottom
    }
}

/// Bounding rectangles of the 8-connected components of pixels whose
/// grayscale value is strictly above `threshold`, sorted by `(top, left)`.
pub fn find_bright_components(img: &RasterImage, threshold: u8) -> Vec<PixelRect> {
    let (w, h) = (img.width as usize, img.height as usize);
    let bright: Vec<bool> = img
        .pixels
        .chunks_exact(3)
        .map(|p| grayscale([p[0], p[1], p[2]]) > threshold)
        .collect();
    let mut seen = vec![false; w * h];
    let mut rects = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !bright[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut r = PixelRect {
            top: u32::MAX,
            left: u32::MAX,
            bottom: 0,
            right: 0,
        };
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            r.top = r.top.min(y as u32);
            r.bottom = r.bottom.max(y as u32);
            r.left = r.left.min(x as u32);
            r.right = r.right.max(x as u32);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if bright[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        rects.push(r);
    }
    rects.sort();
    rects
}

/// Covers every bright component's bounding rectangle with black.
pub fn inpaint(img: &RasterImage, threshold: u8) -> RasterImage {
    let mut out = img.clone();
    for r in find_bright_components(img, threshold) {
        for y in r.top..=r.bottom {
            for x in r.left..=r.right {
                out.set(x, y, [0, 0, 0]);
            }
        }
    }
    out
}

const IMAGE_EXTENSIONS: [&str; 6] = ["ppm", "pnm", "png", "jpg", "jpeg", "bmp"];

/// Inpaints every raster file in `input` into `output` under the same name.
/// Returns the written paths.
pub fn inpaint_dir(input: &Path, output: &Path, threshold: u8) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    entries.sort();
    let mut written = Vec::new();
    for path in entries {
        let img = RasterImage::load(&path)?;
        let dest = output.join(path.file_name().expect("file has a name"));
        inpaint(&img, threshold).save(&dest)?;
        written.push(dest);
    }
    Ok(written)
}
