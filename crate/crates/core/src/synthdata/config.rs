use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized image coordinates: `x` along columns, `y` along rows, both in
/// `[0, 1]`, for the canonical (left-laterality) orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// Pixel-centre coordinates of `(row, col)` in an `h × w` grid.
    pub fn of_pixel(row: usize, col: usize, h: usize, w: usize) -> Self {
        Point {
            x: (col as f64 + 0.5) / w as f64,
            y: (row as f64 + 0.5) / h as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Every lesion sits near the landmark; nothing elsewhere.
    TightLandmark,
    /// Lesions near the landmark, plus a share scattered over the whole region.
    LandmarkPlusScatter,
    /// Near-landmark lesions confined to the landmark's quadrant, plus scatter.
    QuadrantBiased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub name: String,
    pub placement: Placement,
    pub landmark_center: Point,
    /// Std-dev of the lesion offset around `landmark_center`, normalized units.
    pub spread_sigma: f64,
    /// Inclusive range of lesions inserted into a positive image.
    pub lesion_count_range: (u32, u32),
    /// Signed contrast added at the lesion core.
    pub lesion_intensity: f32,
    /// Inclusive lesion radius range in pixels.
    pub lesion_radius_range: (f64, f64),
    /// Probability that a diseased image has this label as its primary finding.
    pub rate: f64,
    /// Share of lesions placed uniformly over the modality region instead of
    /// near the landmark. Ignored for `TightLandmark`.
    pub scatter_fraction: f64,
    /// Radius of the zone around `landmark_center` where near-landmark lesions
    /// are expected, normalized units. Used by localization checks.
    pub zone_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub region_center: Point,
    pub region_radius: f64,
    pub region_intensity: f32,
    pub outside_intensity: f32,
    pub disc_center: Point,
    pub disc_radius: f64,
    pub disc_intensity: f32,
    pub fovea_center: Point,
    pub fovea_radius: f64,
    pub fovea_intensity: f32,
    /// Number of faint random blobs of texture per image.
    pub texture_blobs: u32,
    pub texture_amplitude: f32,
    /// Std-dev of a per-image shift applied jointly to disc, fovea and
    /// landmark lesions, normalized units; truncated at two std-devs.
    pub anatomy_jitter: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            region_center: Point::new(0.5, 0.5),
            region_radius: 0.46,
            region_intensity: 0.30,
            outside_intensity: 0.02,
            disc_center: Point::new(0.30, 0.50),
            disc_radius: 0.12,
            disc_intensity: 0.45,
            fovea_center: Point::new(0.56, 0.52),
            fovea_radius: 0.05,
            fovea_intensity: -0.08,
            texture_blobs: 3,
            texture_amplitude: 0.04,
            anatomy_jitter: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub n_subjects: usize,
    /// Probability that a subject contributes both eyes; otherwise one eye with
    /// random laterality.
    pub bilateral_prob: f64,
    pub labels: Vec<LesionSpec>,
    pub background: Background,
    /// Probability that a diseased image receives a second, different label.
    pub co_occurrence_prob: f64,
    pub noise_sigma: f32,
    /// Train/val/test subject fractions.
    pub split_fractions: (f64, f64, f64),
}

pub fn default_lesions(bg: &Background) -> Vec<LesionSpec> {
    vec![
        LesionSpec {
            name: "glaucoma_like".into(),
            placement: Placement::TightLandmark,
            landmark_center: bg.disc_center,
            spread_sigma: 0.015,
            lesion_count_range: (1, 1),
            lesion_intensity: 0.30,
            lesion_radius_range: (3.5, 4.5),
            rate: 0.25,
            scatter_fraction: 0.0,
            zone_radius: 0.16,
        },
        LesionSpec {
            name: "dr_like".into(),
            placement: Placement::LandmarkPlusScatter,
            landmark_center: bg.fovea_center,
            spread_sigma: 0.07,
            lesion_count_range: (3, 6),
            lesion_intensity: 0.30,
            lesion_radius_range: (2.5, 3.5),
            rate: 0.25,
            scatter_fraction: 0.2,
            zone_radius: 0.2,
        },
        LesionSpec {
            name: "rd_like".into(),
            placement: Placement::QuadrantBiased,
            landmark_center: Point::new(0.70, 0.28),
            spread_sigma: 0.08,
            lesion_count_range: (2, 3),
            lesion_intensity: 0.30,
            lesion_radius_range: (3.0, 5.0),
            rate: 0.20,
            scatter_fraction: 0.1,
            zone_radius: 0.2,
        },
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        let background = Background::default();
        SynthConfig {
            height: 64,
            width: 64,
            channels: 1,
            n_subjects: 2000,
            bilateral_prob: 0.5,
            labels: default_lesions(&background),
            background,
            co_occurrence_prob: 0.15,
            noise_sigma: 0.03,
            split_fractions: (0.70, 0.15, 0.15),
        }
    }
}

fn prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

impl LesionSpec {
    /// A label whose lesion count is pinned at zero has no visible signature
    /// and is never assigned.
    pub fn effective_rate(&self) -> f64 {
        if self.lesion_count_range.1 == 0 {
            0.0
        } else {
            self.rate
        }
    }
}

impl SynthConfig {
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 {
            return Err(Error::Config(format!(
                "image size {}x{} is below the 16x16 minimum",
                self.height, self.width
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("image must have at least one channel".into()));
        }
        if self.labels.is_empty() {
            return Err(Error::Config("at least one label is required".into()));
        }
        if self.n_subjects == 0 {
            return Err(Error::Config("n_subjects must be positive".into()));
        }
        prob("bilateral_prob", self.bilateral_prob)?;
        prob("co_occurrence_prob", self.co_occurrence_prob)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        let mut rate_sum = 0.0;
        for l in &self.labels {
            prob(&format!("{}.rate", l.name), l.rate)?;
            prob(&format!("{}.scatter_fraction", l.name), l.scatter_fraction)?;
            rate_sum += l.rate;
            let (lo, hi) = l.lesion_count_range;
            if lo > hi {
                return Err(Error::Config(format!(
                    "{}: empty lesion count range",
                    l.name
                )));
            }
            let (rlo, rhi) = l.lesion_radius_range;
            if !(rlo > 0.0 && rlo <= rhi) {
                return Err(Error::Config(format!(
                    "{}: bad lesion radius range",
                    l.name
                )));
            }
            if l.spread_sigma.is_nan() || l.spread_sigma < 0.0 {
                return Err(Error::Config(format!("{}: negative spread", l.name)));
            }
        }
        if rate_sum > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "label rates sum to {rate_sum}, which exceeds 1"
            )));
        }
        let names: std::collections::HashSet<_> = self.labels.iter().map(|l| &l.name).collect();
        if names.len() != self.labels.len() {
            return Err(Error::Config("label names must be unique".into()));
        }
        let (a, b, c) = self.split_fractions;
        super::split::check_fractions(a, b, c)?;
        Ok(())
    }

    /// Marginal probability that a generated sample is positive for `label`.
    ///
    /// A sample gets at most one primary label `k` with probability `rate_k`;
    /// a diseased sample then receives one additional label with probability
    /// `co_occurrence_prob`, drawn proportionally to the rates of the other
    /// labels. A label is therefore positive either as the primary finding or
    /// as the secondary one.
    pub fn label_prevalence(&self, label: usize) -> f64 {
        let total: f64 = self.labels.iter().map(LesionSpec::effective_rate).sum();
        let own = self.labels[label].effective_rate();
        let mut p = own;
        for (k, other) in self.labels.iter().enumerate() {
            let rest = total - other.effective_rate();
            if k != label && rest > 0.0 {
                p += other.effective_rate() * self.co_occurrence_prob * own / rest;
            }
        }
        p
    }

    /// Lesion-count ranges forced to zero: a dataset of healthy images only.
    pub fn without_lesions(mut self) -> Self {
        for l in &mut self.labels {
            l.lesion_count_range = (0, 0);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SynthConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_small_images_and_bad_probabilities() {
        let mut c = SynthConfig {
            height: 15,
            ..SynthConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.height = 64;
        c.co_occurrence_prob = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn prevalence_without_co_occurrence_is_the_rate() {
        let c = SynthConfig {
            co_occurrence_prob: 0.0,
            ..SynthConfig::default()
        };
        for (i, l) in c.labels.iter().enumerate() {
            assert_eq!(c.label_prevalence(i), l.rate);
        }
    }
}
