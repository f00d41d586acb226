//! Synthetic aligned image modality: generation, manifests, subject-level
//! splitting, laterality handling and the mean-image alignment diagnostic.

mod config;
mod generate;
mod manifest;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use config::{default_lesions, Background, LesionSpec, Placement, Point, SynthConfig};
pub use generate::{generate_dataset, render_sample};
pub use manifest::{load_dataset, load_manifest, save_dataset, save_manifest};
pub use split::{block_sizes, split_by_subject};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Laterality {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Laterality {
    pub fn token(self) -> &'static str {
        match self {
            Laterality::Left => "left",
            Laterality::Right => "right",
        }
    }
}

impl Split {
    pub fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

// Tokens are matched exactly: no trimming, no case folding.
impl FromStr for Laterality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left" => Ok(Laterality::Left),
            "right" => Ok(Laterality::Right),
            _ => Err(format!("unknown laterality token {s:?}")),
        }
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split token {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub laterality: Laterality,
    pub labels: Vec<bool>,
    pub split: Split,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.records.first().map_or(0, |r| r.labels.len())
    }

    /// Indices of the records in `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn check_subject_exclusivity(&self) -> Result<()> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for r in &self.records {
            if let Some(&prev) = seen.get(r.subject_id.as_str()) {
                if prev != r.split {
                    return Err(Error::Contract(format!(
                        "subject {} appears in both {prev} and {}",
                        r.subject_id, r.split
                    )));
                }
            } else {
                seen.insert(&r.subject_id, r.split);
            }
        }
        Ok(())
    }
}

/// Mirrors right-laterality images so that every image shares the left-eye
/// orientation. Left images are returned unchanged.
pub fn apply_laterality_flip(image: &Image, laterality: Laterality) -> Image {
    match laterality {
        Laterality::Left => image.clone(),
        Laterality::Right => image.mirrored(),
    }
}

/// A manifest together with its images, stored in acquisition orientation
/// (right-laterality images are mirrored relative to left ones).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<Image>,
}

impl Dataset {
    /// Image `i` in model orientation. With `flip` off the raw acquisition is
    /// returned, which is how the misalignment diagnostic is reproduced.
    pub fn aligned_image(&self, i: usize, flip: bool) -> Image {
        if flip {
            apply_laterality_flip(&self.images[i], self.manifest.records[i].laterality)
        } else {
            self.images[i].clone()
        }
    }

    pub fn aligned_split(&self, split: Split, flip: bool) -> (Vec<usize>, Vec<Image>) {
        let idx = self.manifest.indices(split);
        let imgs = idx.iter().map(|&i| self.aligned_image(i, flip)).collect();
        (idx, imgs)
    }
}

/// Pixel-wise mean over the records of `split`, summed in manifest order.
pub fn mean_image(dataset: &Dataset, split: Split, flip: bool) -> Result<Image> {
    let idx = dataset.manifest.indices(split);
    let images: Vec<Image> = idx
        .iter()
        .map(|&i| dataset.aligned_image(i, flip))
        .collect();
    mean_of(&images).map_err(|_| Error::EmptyInput(format!("split {split} has no samples")))
}

/// Pixel-wise arithmetic mean with a fixed summation order in `f64`.
pub fn mean_of(images: &[Image]) -> Result<Image> {
    let first = images
        .first()
        .ok_or_else(|| Error::EmptyInput("no images to average".into()))?;
    let mut acc = vec![0f64; first.data.len()];
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::Contract("images differ in shape".into()));
        }
        for (a, &v) in acc.iter_mut().zip(&img.data) {
            *a += f64::from(v);
        }
    }
    let n = images.len() as f64;
    let data = acc.into_iter().map(|a| (a / n) as f32).collect();
    Image::from_vec(first.height, first.width, first.channels, data)
}

/// Counts local maxima of the mean luminance that exceed `frac` of the global
/// maximum inside the modality region.
///
/// A pixel is a local maximum when it beats every other pixel within a square
/// window of half-size `radius`, ties going to the smaller row-major index.
pub fn count_local_maxima(image: &Image, bg: &Background, radius: usize, frac: f32) -> usize {
    let (h, w) = (image.height, image.width);
    let lum = image.luminance();
    let inside =
        |r: usize, c: usize| Point::of_pixel(r, c, h, w).dist(bg.region_center) <= bg.region_radius;
    let global = (0..h * w)
        .filter(|&i| inside(i / w, i % w))
        .map(|i| lum[i])
        .fold(f32::NEG_INFINITY, f32::max);
    let threshold = frac * global;
    let mut count = 0;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !inside(r, c) || lum[i] <= threshold {
                continue;
            }
            let mut is_max = true;
            'win: for rr in r.saturating_sub(radius)..(r + radius + 1).min(h) {
                for cc in c.saturating_sub(radius)..(c + radius + 1).min(w) {
                    let j = rr * w + cc;
                    if j != i && (lum[j] > lum[i] || (lum[j] == lum[i] && j < i)) {
                        is_max = false;
                        break 'win;
                    }
                }
            }
            if is_max {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_flip_is_identity_and_right_is_involution() {
        let mut img = Image::zeros(4, 6, 1);
        img.set(2, 0, 0, 1.0);
        assert_eq!(apply_laterality_flip(&img, Laterality::Left), img);
        let r = apply_laterality_flip(&img, Laterality::Right);
        assert_eq!(r.get(2, 5, 0), 1.0);
        assert_eq!(apply_laterality_flip(&r, Laterality::Right), img);
    }

    #[test]
    fn mean_of_singleton_and_pair() {
        let a = Image::from_vec(1, 2, 1, vec![0.2, 0.4]).unwrap();
        let b = Image::from_vec(1, 2, 1, vec![0.6, 0.0]).unwrap();
        assert_eq!(mean_of(std::slice::from_ref(&a)).unwrap(), a);
        let m = mean_of(&[a, b]).unwrap();
        assert_eq!(m.data, vec![0.4, 0.2]);
        assert!(matches!(mean_of(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn empty_split_is_an_error() {
        let ds = Dataset {
            manifest: DatasetManifest::default(),
            images: vec![],
        };
        assert!(matches!(
            mean_image(&ds, Split::Val, true),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn split_tokens_are_strict() {
        assert_eq!("test".parse::<Split>().unwrap(), Split::Test);
        assert!("TEST".parse::<Split>().is_err());
        assert!("test ".parse::<Split>().is_err());
    }

    #[test]
    fn local_maxima_counts_separated_peaks() {
        let bg = Background::default();
        let mut img = Image::filled(32, 32, 1, 0.1);
        img.set(16, 10, 0, 1.0);
        img.set(16, 22, 0, 0.9);
        img.set(16, 16, 0, 0.3); // below half the global maximum
        assert_eq!(count_local_maxima(&img, &bg, 2, 0.5), 2);
    }
}
