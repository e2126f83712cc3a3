//! Synthetic driving data: a smooth steering stream with alternating turn
//! and near-zero segments, throttle anticorrelated with |angle|, brake
//! spikes at sign changes, and frames that render the current angle as a
//! bright line from the bottom center — the image determines the angle up
//! to raster noise.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::frame::{write_ppm, RgbImage};
use super::log::save_log;
use super::record::DrivingRecord;
use crate::error::{Error, Result};

pub const FRAME_DIR: &str = "frames";
pub const LOG_NAME: &str = "log.csv";
/// Peak steering magnitude of the generator, radians.
pub const MAX_ANGLE: f64 = 0.5;
const SAMPLE_PERIOD_NS: i64 = 50_000_000;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub image_size: usize,
    /// Background noise amplitude in [0, 1]; 0 means a flat background.
    pub noise: f64,
    /// Window length the dataset must support; generation requires n >= 4m.
    pub m: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            seed: 7,
            image_size: 16,
            noise: 0.1,
            m: 10,
        }
    }
}

/// The three action streams, all length n.
#[derive(Debug, Clone)]
pub struct Streams {
    pub angles: Vec<f64>,
    pub throttles: Vec<f64>,
    pub brakes: Vec<f64>,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("synth: m must be >= 1"));
        }
        if self.n < 4 * self.m {
            return Err(Error::contract(format!(
                "synth: n = {} too small, need at least 4m = {}",
                self.n,
                4 * self.m
            )));
        }
        if self.image_size < 4 {
            return Err(Error::config("synth: image size must be >= 4"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config(format!(
                "synth: noise must be in [0, 1], got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Deterministic steering/throttle/brake streams for a config.
pub fn generate_streams(cfg: &SynthConfig) -> Result<Streams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Two incommensurate sinusoids form the turn carrier.
    let p1 = rng.gen_range(90.0..130.0);
    let p2 = rng.gen_range(40.0..70.0);
    let phi1 = rng.gen_range(0.0..std::f64::consts::TAU);
    let phi2 = rng.gen_range(0.0..std::f64::consts::TAU);
    let carrier = |t: f64| {
        0.65 * (std::f64::consts::TAU * t / p1 + phi1).sin()
            + 0.35 * (std::f64::consts::TAU * t / p2 + phi2).sin()
    };

    // Alternating turn/straight segments; the envelope ramps over 10 samples
    // so the angle stays smooth at the boundaries.
    let ramp = 10usize;
    let mut envelope = Vec::with_capacity(cfg.n);
    let mut turning = rng.gen_bool(0.5);
    while envelope.len() < cfg.n {
        let len = if turning {
            rng.gen_range(50..90)
        } else {
            rng.gen_range(30..60)
        };
        let from = if turning { 0.0 } else { 1.0 };
        let to = 1.0 - from;
        for i in 0..len {
            let u = (i as f64 / ramp as f64).min(1.0);
            let s = u * u * (3.0 - 2.0 * u);
            envelope.push(from + (to - from) * s);
            if envelope.len() == cfg.n {
                break;
            }
        }
        turning = !turning;
    }

    let angles: Vec<f64> = (0..cfg.n)
        .map(|t| MAX_ANGLE * envelope[t] * carrier(t as f64))
        .collect();

    let throttles: Vec<f64> = angles
        .iter()
        .enumerate()
        .map(|(t, a)| {
            let wiggle = 0.05 * (std::f64::consts::TAU * t as f64 / 37.0).sin();
            (0.75 - 0.55 * a.abs() / MAX_ANGLE + wiggle).clamp(0.0, 1.0)
        })
        .collect();

    let mut brakes = Vec::with_capacity(cfg.n);
    let mut level: f64 = 0.0;
    let mut last_sign = 0i8;
    for &a in &angles {
        let sign = if a > 0.0 {
            1
        } else if a < 0.0 {
            -1
        } else {
            0
        };
        if sign != 0 && last_sign != 0 && sign != last_sign {
            level = 0.7;
        }
        if sign != 0 {
            last_sign = sign;
        }
        brakes.push(level.clamp(0.0, 1.0));
        level *= 0.55;
        if level < 0.01 {
            level = 0.0;
        }
    }

    Ok(Streams {
        angles,
        throttles,
        brakes,
    })
}

/// Renders one frame: noisy background plus an anti-aliased bright line from
/// the bottom center, tilted by `angle` radians off vertical.
pub fn render_frame(angle: f64, size: usize, noise: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    let (h, w) = (size, size);
    let mut pixels = vec![0u8; h * w * 3];
    for px in pixels.chunks_exact_mut(3) {
        let bg = 35.0 + noise * rng.gen_range(-1.0..1.0) * 50.0;
        let v = bg.clamp(0.0, 255.0) as u8;
        px.copy_from_slice(&[v, v, v]);
    }

    // March along the line, splatting coverage bilinearly into a canvas.
    let mut coverage = vec![0.0f64; h * w];
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, h as f64 - 1.0);
    let (dx, dy) = (angle.sin(), -angle.cos());
    let length = 0.95 * h as f64;
    let step = 0.25;
    let mut s = 0.0;
    while s <= length {
        let (x, y) = (cx + dx * s, cy + dy * s);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        for (ox, oy, wgt) in [
            (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
            (1.0, 0.0, fx * (1.0 - fy)),
            (0.0, 1.0, (1.0 - fx) * fy),
            (1.0, 1.0, fx * fy),
        ] {
            let (xi, yi) = (x0 + ox, y0 + oy);
            if xi >= 0.0 && yi >= 0.0 && (xi as usize) < w && (yi as usize) < h {
                coverage[yi as usize * w + xi as usize] += wgt * step;
            }
        }
        s += step;
    }

    for (i, cov) in coverage.iter().enumerate() {
        if *cov > 0.0 {
            let add = cov.min(1.0) * 195.0;
            for c in 0..3 {
                let p = &mut pixels[i * 3 + c];
                *p = (*p as f64 + add).clamp(0.0, 255.0) as u8;
            }
        }
    }

    RgbImage::new(w, h, pixels).expect("buffer sized for w*h*3")
}

/// Generates streams and frames, writes `log.csv` plus `frames/*.ppm` under
/// `dir`, and returns the records. Reruns with identical config produce
/// byte-identical files.
pub fn synth_generate(dir: impl AsRef<Path>, cfg: &SynthConfig) -> Result<Vec<DrivingRecord>> {
    let dir = dir.as_ref();
    let streams = generate_streams(cfg)?;
    let frame_dir = dir.join(FRAME_DIR);
    std::fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;

    // Frame noise comes from its own stream so stream parameters and pixels
    // stay independently reproducible.
    let mut frame_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x00F2A3E5));
    let mut records = Vec::with_capacity(cfg.n);
    for t in 0..cfg.n {
        let img = render_frame(streams.angles[t], cfg.image_size, cfg.noise, &mut frame_rng);
        let rel = format!("{FRAME_DIR}/{t:06}.ppm");
        write_ppm(dir.join(&rel), &img)?;
        records.push(DrivingRecord {
            t,
            timestamp_ns: Some(t as i64 * SAMPLE_PERIOD_NS),
            frame_path: rel,
            angle: streams.angles[t],
            throttle: streams.throttles[t],
            brake: streams.brakes[t],
        });
    }
    save_log(dir.join(LOG_NAME), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Line-fit decoder used as the rendering oracle: estimates the drawn
    /// angle from bright pixels relative to the bottom-center anchor. Kept
    /// independent of the renderer's marching logic.
    fn decode_angle(img: &RgbImage) -> f64 {
        let (h, w) = (img.height, img.width);
        let mut lum: Vec<f64> = img
            .pixels
            .chunks_exact(3)
            .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
            .collect();
        let mut sorted = lum.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        for v in &mut lum {
            *v = (*v - median - 10.0).max(0.0);
        }
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, h as f64 - 1.0);
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let wgt = lum[y * w + x];
                sx += wgt * (x as f64 - cx);
                sy += wgt * (cy - y as f64);
            }
        }
        sx.atan2(sy)
    }

    #[test]
    fn noiseless_frames_decode_to_the_true_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let two_degrees = 2.0_f64.to_radians();
        for &angle in &[-0.5, -0.3, -0.1, 0.0, 0.05, 0.2, 0.4, 0.5] {
            let img = render_frame(angle, 16, 0.0, &mut rng);
            let decoded = decode_angle(&img);
            assert!(
                (decoded - angle).abs() <= two_degrees,
                "angle {angle}: decoded {decoded}"
            );
        }
    }

    #[test]
    fn same_seed_generates_identical_datasets() {
        let cfg = SynthConfig {
            n: 80,
            seed: 11,
            image_size: 12,
            noise: 0.2,
            m: 10,
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = synth_generate(d1.path(), &cfg).unwrap();
        let r2 = synth_generate(d2.path(), &cfg).unwrap();
        assert_eq!(r1, r2);
        let b1 = std::fs::read(d1.path().join(LOG_NAME)).unwrap();
        let b2 = std::fs::read(d2.path().join(LOG_NAME)).unwrap();
        assert_eq!(b1, b2);
        for t in [0usize, 37, 79] {
            let p = format!("{FRAME_DIR}/{t:06}.ppm");
            assert_eq!(
                std::fs::read(d1.path().join(&p)).unwrap(),
                std::fs::read(d2.path().join(&p)).unwrap()
            );
        }
    }

    #[test]
    fn streams_stay_in_their_contracted_ranges() {
        let cfg = SynthConfig {
            n: 600,
            seed: 3,
            ..SynthConfig::default()
        };
        let s = generate_streams(&cfg).unwrap();
        for t in 0..cfg.n {
            assert!(s.angles[t].abs() <= MAX_ANGLE + 1e-12);
            assert!((0.0..=1.0).contains(&s.throttles[t]));
            assert!((0.0..=1.0).contains(&s.brakes[t]));
        }
        // Both regimes must be present for clustering to find them.
        let big = s.angles.iter().filter(|a| a.abs() > 0.2).count();
        let small = s.angles.iter().filter(|a| a.abs() < 0.02).count();
        assert!(big > cfg.n / 20, "only {big} turning samples");
        assert!(small > cfg.n / 20, "only {small} near-zero samples");
    }

    #[test]
    fn too_few_samples_is_a_contract_error() {
        let cfg = SynthConfig {
            n: 39,
            m: 10,
            ..SynthConfig::default()
        };
        assert_eq!(generate_streams(&cfg).unwrap_err().kind_tag(), "contract");
    }

    #[test]
    fn brake_spikes_follow_sign_changes() {
        let cfg = SynthConfig {
            n: 500,
            seed: 5,
            ..SynthConfig::default()
        };
        let s = generate_streams(&cfg).unwrap();
        let mut crossings = Vec::new();
        for t in 1..cfg.n {
            if s.angles[t - 1] > 0.0 && s.angles[t] < 0.0
                || s.angles[t - 1] < 0.0 && s.angles[t] > 0.0
            {
                crossings.push(t);
            }
        }
        assert!(!crossings.is_empty());
        for &t in &crossings {
            assert!(s.brakes[t] >= 0.5, "no brake spike at crossing t={t}");
        }
    }
}
