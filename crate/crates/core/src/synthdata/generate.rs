use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{LesionSpec, Placement, Point, SynthConfig};
use super::{split_by_subject, Dataset, DatasetManifest, Laterality, SampleRecord, Split};
use crate::error::Result;
use crate::image::Image;
use crate::rng::{self, StreamRng};

struct Spot {
    center: Point,
    radius_px: f64,
    intensity: f32,
}

/// Generates the full dataset for `(config, seed)`.
///
/// Each subject contributes one or both eyes. Every sample draws from its own
/// stream keyed by `(seed, subject, laterality)`, so the output is a pure
/// function of the inputs. Right-laterality images are rendered in canonical
/// orientation and then mirrored, as an acquisition would present them.
pub fn generate_dataset(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut records = Vec::new();
    let mut images = Vec::new();
    for subject in 0..config.n_subjects {
        let mut srng = rng::stream(seed, "subject", &[subject as u64]);
        let eyes: Vec<Laterality> = if srng.random_bool(config.bilateral_prob) {
            vec![Laterality::Left, Laterality::Right]
        } else if srng.random_bool(0.5) {
            vec![Laterality::Left]
        } else {
            vec![Laterality::Right]
        };
        for lat in eyes {
            let key = match lat {
                Laterality::Left => 0,
                Laterality::Right => 1,
            };
            let mut rng = rng::stream(seed, "sample", &[subject as u64, key]);
            let labels = draw_labels(config, &mut rng);
            let canonical = render_sample(config, &labels, &mut rng);
            let image = match lat {
                Laterality::Left => canonical,
                Laterality::Right => canonical.mirrored(),
            };
            let sample_id = format!("s{subject:05}_{}", &lat.token()[..1]);
            records.push(SampleRecord {
                image_path: format!("images/{sample_id}.axf"),
                sample_id,
                subject_id: format!("p{subject:05}"),
                laterality: lat,
                labels,
                split: Split::Train,
            });
            images.push(image);
        }
    }
    let mut manifest = DatasetManifest { records };
    split_by_subject(
        &mut manifest,
        config.split_fractions,
        rng::derive_seed(seed, "subject-split", &[]),
    )?;
    Ok(Dataset { manifest, images })
}

fn draw_labels(config: &SynthConfig, rng: &mut StreamRng) -> Vec<bool> {
    let rates: Vec<f64> = config
        .labels
        .iter()
        .map(LesionSpec::effective_rate)
        .collect();
    let mut labels = vec![false; rates.len()];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut primary = None;
    for (k, &r) in rates.iter().enumerate() {
        acc += r;
        if u < acc {
            primary = Some(k);
            break;
        }
    }
    // Always consume the same number of draws so label outcomes for one
    // sample do not shift the rendering stream of the next decision.
    let co: f64 = rng.random();
    let pick: f64 = rng.random();
    if let Some(p) = primary {
        labels[p] = true;
        let rest: f64 = rates
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != p)
            .map(|(_, r)| r)
            .sum();
        if co < config.co_occurrence_prob && rest > 0.0 {
            let target = pick * rest;
            let mut acc = 0.0;
            let mut chosen = None;
            for (k, &r) in rates.iter().enumerate() {
                if k == p || r == 0.0 {
                    continue;
                }
                acc += r;
                chosen = Some(k);
                if target < acc {
                    break;
                }
            }
            if let Some(k) = chosen {
                labels[k] = true;
            }
        }
    }
    labels
}

fn uniform_in_disc(rng: &mut StreamRng, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let t = rng.random::<f64>() * std::f64::consts::TAU;
    Point::new(center.x + r * t.cos(), center.y + r * t.sin())
}

fn place_lesions(
    config: &SynthConfig,
    spec: &LesionSpec,
    shift: (f64, f64),
    rng: &mut StreamRng,
    out: &mut Vec<Spot>,
) {
    let bg = &config.background;
    let landmark = Point::new(
        spec.landmark_center.x + shift.0,
        spec.landmark_center.y + shift.1,
    );
    let (lo, hi) = spec.lesion_count_range;
    let count = if hi == 0 {
        0
    } else {
        rng.random_range(lo..=hi)
    };
    let normal = Normal::new(0.0, spec.spread_sigma.max(1e-12)).expect("finite sigma");
    let scatter_radius = 0.92 * bg.region_radius;
    let inside = |p: Point| p.dist(bg.region_center) <= scatter_radius;
    let same_quadrant = |p: Point| {
        (p.x - bg.region_center.x).signum() == (landmark.x - bg.region_center.x).signum()
            && (p.y - bg.region_center.y).signum() == (landmark.y - bg.region_center.y).signum()
    };
    for _ in 0..count {
        let scatter =
            spec.placement != Placement::TightLandmark && rng.random_bool(spec.scatter_fraction);
        let mut center = landmark;
        if scatter {
            center = uniform_in_disc(rng, bg.region_center, scatter_radius);
        } else {
            for _ in 0..50 {
                let p = Point::new(
                    landmark.x + normal.sample(rng),
                    landmark.y + normal.sample(rng),
                );
                let ok =
                    inside(p) && (spec.placement != Placement::QuadrantBiased || same_quadrant(p));
                if ok {
                    center = p;
                    break;
                }
            }
        }
        let (rlo, rhi) = spec.lesion_radius_range;
        let radius_px = if rhi > rlo {
            rng.random_range(rlo..=rhi)
        } else {
            rlo
        };
        out.push(Spot {
            center,
            radius_px,
            intensity: spec.lesion_intensity,
        });
    }
}

/// Renders one canonical-orientation image with lesions for the positive
/// entries of `labels`.
pub fn render_sample(config: &SynthConfig, labels: &[bool], rng: &mut StreamRng) -> Image {
    let (h, w, ch) = (config.height, config.width, config.channels);
    let bg = &config.background;

    let gain: f32 = rng.random_range(0.92..1.08);
    let jitter = Normal::new(0.0, bg.anatomy_jitter.max(1e-12)).expect("finite sigma");
    let bound = 2.0 * bg.anatomy_jitter;
    let mut draw_shift = || {
        let v: f64 = jitter.sample(rng);
        if bg.anatomy_jitter > 0.0 {
            v.clamp(-bound, bound)
        } else {
            0.0
        }
    };
    let shift = (draw_shift(), draw_shift());
    let disc_center = Point::new(bg.disc_center.x + shift.0, bg.disc_center.y + shift.1);
    let fovea_center = Point::new(bg.fovea_center.x + shift.0, bg.fovea_center.y + shift.1);
    let mut blobs = Vec::new();
    for _ in 0..bg.texture_blobs {
        let c = uniform_in_disc(rng, bg.region_center, bg.region_radius);
        let sigma: f64 = rng.random_range(0.05..0.12);
        let amp: f32 = rng.random_range(-bg.texture_amplitude..=bg.texture_amplitude);
        blobs.push((c, sigma, amp));
    }
    let mut spots = Vec::new();
    for (spec, &positive) in config.labels.iter().zip(labels) {
        if positive {
            place_lesions(config, spec, shift, rng, &mut spots);
        }
    }

    let scale = h.max(w) as f64;
    let mut lum = vec![0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            let p = Point::of_pixel(r, c, h, w);
            let d_region = p.dist(bg.region_center);
            let v = if d_region > bg.region_radius {
                bg.outside_intensity
            } else {
                let mut v = bg.region_intensity;
                let dd = p.dist(disc_center) / bg.disc_radius;
                v += bg.disc_intensity * (-2.0 * dd * dd).exp() as f32;
                let df = p.dist(fovea_center) / bg.fovea_radius;
                v += bg.fovea_intensity * (-2.0 * df * df).exp() as f32;
                for &(bc, sigma, amp) in &blobs {
                    let d = p.dist(bc) / sigma;
                    v += amp * (-0.5 * d * d).exp() as f32;
                }
                v *= gain;
                for s in &spots {
                    let d_px = p.dist(s.center) * scale;
                    let weight = (s.radius_px + 0.5 - d_px).clamp(0.0, 1.0) as f32;
                    v += s.intensity * weight;
                }
                v
            };
            lum[r * w + c] = v;
        }
    }

    let noise = Normal::new(0.0f32, config.noise_sigma.max(0.0)).expect("finite sigma");
    let mut data = Vec::with_capacity(h * w * ch);
    for &v in &lum {
        for _ in 0..ch {
            let n = if config.noise_sigma > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            data.push((v + n).clamp(0.0, 1.0));
        }
    }
    Image {
        height: h,
        width: w,
        channels: ch,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{count_local_maxima, mean_image};

    fn small() -> SynthConfig {
        SynthConfig {
            n_subjects: 60,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_dataset(&small(), 11).unwrap();
        let b = generate_dataset(&small(), 11).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&small(), 12).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn no_lesions_means_all_healthy() {
        let cfg = small().without_lesions();
        let ds = generate_dataset(&cfg, 5).unwrap();
        assert!(ds
            .manifest
            .records
            .iter()
            .all(|r| r.labels.iter().all(|&l| !l)));
    }

    #[test]
    fn images_are_finite_and_in_range() {
        let ds = generate_dataset(&small(), 2).unwrap();
        for img in &ds.images {
            assert!(img
                .data
                .iter()
                .all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }
        ds.manifest.check_subject_exclusivity().unwrap();
    }

    #[test]
    fn right_images_are_stored_mirrored() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..small()
        }
        .without_lesions();
        let ds = generate_dataset(&cfg, 3).unwrap();
        let disc = cfg.background.disc_center;
        let col_left = (disc.x * cfg.width as f64) as usize;
        let col_right = cfg.width - 1 - col_left;
        let row = (disc.y * cfg.height as f64) as usize;
        let patch = |img: &Image, col: usize| -> f32 {
            let mut s = 0.0;
            for r in row - 2..=row + 2 {
                for c in col - 2..=col + 2 {
                    s += img.get(r, c, 0);
                }
            }
            s
        };
        for (r, img) in ds.manifest.records.iter().zip(&ds.images) {
            let (a, b) = (patch(img, col_left), patch(img, col_right));
            match r.laterality {
                Laterality::Left => assert!(a > b),
                Laterality::Right => assert!(b > a),
            }
        }
    }

    #[test]
    fn flip_controls_number_of_disc_peaks() {
        let cfg = SynthConfig {
            n_subjects: 200,
            ..SynthConfig::default()
        };
        let ds = generate_dataset(&cfg, 7).unwrap();
        let radius = (cfg.background.disc_radius * cfg.width as f64).ceil() as usize;
        let flipped = mean_image(&ds, Split::Train, true).unwrap();
        let raw = mean_image(&ds, Split::Train, false).unwrap();
        assert_eq!(
            count_local_maxima(&flipped, &cfg.background, radius, 0.5),
            1
        );
        assert_eq!(count_local_maxima(&raw, &cfg.background, radius, 0.5), 2);
    }

    #[test]
    fn landmark_lesions_stay_inside_their_zone() {
        let cfg = SynthConfig::default();
        let spec = cfg
            .labels
            .iter()
            .find(|l| l.placement == Placement::TightLandmark)
            .unwrap();
        let scale = cfg.height.max(cfg.width) as f64;
        let sd = cfg.background.anatomy_jitter;
        let jitter = Normal::new(0.0, sd).unwrap();
        let mut rng = rng::stream(3, "zone-test", &[]);
        let (mut inside, mut total) = (0usize, 0usize);
        for _ in 0..2000 {
            let shift = (
                jitter.sample(&mut rng).clamp(-2.0 * sd, 2.0 * sd),
                jitter.sample(&mut rng).clamp(-2.0 * sd, 2.0 * sd),
            );
            let mut spots = Vec::new();
            place_lesions(&cfg, spec, shift, &mut rng, &mut spots);
            for s in spots {
                total += 1;
                let reach = s.center.dist(spec.landmark_center) + s.radius_px / scale;
                inside += usize::from(reach <= spec.zone_radius);
            }
        }
        assert!(total >= 2000);
        assert!(inside as f64 / total as f64 >= 0.95, "{inside}/{total}");
    }
}
