use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;

use super::image_ops::{flip_horizontal, flip_vertical, rotate};
use super::{BinaryMask, DataError};

/// Stochastic training-time transforms. Geometric transforms hit image and
/// mask alike; photometric ones only the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub p_hflip: f64,
    pub p_vflip: f64,
    pub p_rotate: f64,
    /// Rotation angle drawn uniformly from `[-rotate_degrees, rotate_degrees]`.
    pub rotate_degrees: f64,
    pub p_jitter: f64,
    /// Brightness and contrast factors drawn from `[1 - f, 1 + f]`.
    pub jitter_factor: f64,
    pub p_erase: f64,
    /// Erased area as a fraction of the image.
    pub erase_scale_range: [f64; 2],
    pub rng_seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            p_hflip: 0.5,
            p_vflip: 0.3,
            p_rotate: 0.3,
            rotate_degrees: 20.0,
            p_jitter: 1.0,
            jitter_factor: 0.3,
            p_erase: 0.2,
            erase_scale_range: [0.02, 0.33],
            rng_seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// Configuration under which [`augment_sample`] is the identity.
    pub fn disabled() -> Self {
        AugmentationConfig {
            p_hflip: 0.0,
            p_vflip: 0.0,
            p_rotate: 0.0,
            p_jitter: 0.0,
            p_erase: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for (name, p) in [
            ("p_hflip", self.p_hflip),
            ("p_vflip", self.p_vflip),
            ("p_rotate", self.p_rotate),
            ("p_jitter", self.p_jitter),
            ("p_erase", self.p_erase),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::InvalidConfig(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        let [lo, hi] = self.erase_scale_range;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(DataError::InvalidConfig(format!(
                "erase_scale_range {lo}..{hi} must lie inside (0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&self.jitter_factor) || self.rotate_degrees < 0.0 {
            return Err(DataError::InvalidConfig(
                "jitter_factor must be in [0, 1) and rotate_degrees >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Independent RNG stream for one sample of one epoch.
pub fn sample_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index);
    rng
}

/// Applies the configured transforms to an image in `[0, 1]` and its mask.
/// A draw is consumed for every transform whether or not it fires, so the
/// random stream is stable under probability changes.
pub fn augment_sample(
    image: &Tensor,
    mask: &BinaryMask,
    cfg: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
) -> (Tensor, BinaryMask) {
    let mut image = image.clone();
    let mut mask = mask.clone();
    let fires = |p: f64, rng: &mut ChaCha8Rng| rng.gen::<f64>() < p;

    if fires(cfg.p_hflip, rng) {
        flip_horizontal(&mut image, &mut mask);
    }
    if fires(cfg.p_vflip, rng) {
        flip_vertical(&mut image, &mut mask);
    }
    let angle = rng.gen_range(-1.0..=1.0) * cfg.rotate_degrees;
    if fires(cfg.p_rotate, rng) {
        (image, mask) = rotate(&image, &mask, angle);
    }

    let brightness = 1.0 + rng.gen_range(-1.0..=1.0) * cfg.jitter_factor;
    let contrast = 1.0 + rng.gen_range(-1.0..=1.0) * cfg.jitter_factor;
    if fires(cfg.p_jitter, rng) {
        jitter(&mut image, brightness, contrast);
    }

    if fires(cfg.p_erase, rng) {
        erase(&mut image, cfg.erase_scale_range, rng);
    }
    (image, mask)
}

fn jitter(image: &mut Tensor, brightness: f64, contrast: f64) {
    for v in image.data_mut() {
        *v = (*v * brightness).clamp(0.0, 1.0);
    }
    let sh = image.shape().to_vec();
    let plane = sh[1] * sh[2];
    // Contrast pivots on the mean grey level.
    let d = image.data();
    let grey: f64 = if sh[0] == 3 {
        (0..plane)
            .map(|i| 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i])
            .sum::<f64>()
            / plane as f64
    } else {
        image.mean()
    };
    for v in image.data_mut() {
        *v = ((*v - grey) * contrast + grey).clamp(0.0, 1.0);
    }
}

fn erase(image: &mut Tensor, scale: [f64; 2], rng: &mut ChaCha8Rng) {
    let sh = image.shape().to_vec();
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    let area = (h * w) as f64;
    let (log_lo, log_hi) = (0.3f64.ln(), (1.0f64 / 0.3).ln());
    for _ in 0..10 {
        let target = rng.gen_range(scale[0]..=scale[1]) * area;
        let ratio = rng.gen_range(log_lo..=log_hi).exp();
        let eh = (target * ratio).sqrt().round() as usize;
        let ew = (target / ratio).sqrt().round() as usize;
        if eh == 0 || ew == 0 || eh >= h || ew >= w {
            continue;
        }
        let y0 = rng.gen_range(0..=h - eh);
        let x0 = rng.gen_range(0..=w - ew);
        let d = image.data_mut();
        for ch in 0..c {
            for y in y0..y0 + eh {
                d[(ch * h + y) * w + x0..(ch * h + y) * w + x0 + ew].fill(0.0);
            }
        }
        return;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Tensor, BinaryMask) {
        let img = Tensor::new(
            &[3, 16, 16],
            (0..768).map(|v| (v % 97) as f64 / 97.0).collect(),
        );
        let mask = BinaryMask::from_fn(16, 16, |y, x| (4..10).contains(&y) && (5..12).contains(&x));
        (img, mask)
    }

    #[test]
    fn disabled_config_is_bit_identical() {
        let (img, mask) = sample();
        let (i2, m2) = augment_sample(
            &img,
            &mask,
            &AugmentationConfig::disabled(),
            &mut sample_rng(1, 0, 0),
        );
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn forced_hflip_maps_column_c_to_w_minus_1_minus_c() {
        let img = Tensor::zeros(&[3, 224, 224]);
        let mask = BinaryMask::from_fn(224, 224, |y, x| y == 10 && x == 3);
        let cfg = AugmentationConfig {
            p_hflip: 1.0,
            ..AugmentationConfig::disabled()
        };
        let (_, m) = augment_sample(&img, &mask, &cfg, &mut sample_rng(0, 0, 0));
        assert_eq!(m.count(), 1);
        assert!(m.get(10, 224 - 1 - 3));
    }

    #[test]
    fn double_flip_is_identity() {
        let (img, mask) = sample();
        let cfg = AugmentationConfig {
            p_hflip: 1.0,
            p_vflip: 1.0,
            ..AugmentationConfig::disabled()
        };
        let (i1, m1) = augment_sample(&img, &mask, &cfg, &mut sample_rng(0, 0, 0));
        let (i2, m2) = augment_sample(&i1, &m1, &cfg, &mut sample_rng(0, 0, 1));
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn same_stream_same_output() {
        let (img, mask) = sample();
        let cfg = AugmentationConfig::default();
        let a = augment_sample(&img, &mask, &cfg, &mut sample_rng(5, 2, 9));
        let b = augment_sample(&img, &mask, &cfg, &mut sample_rng(5, 2, 9));
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn jitter_keeps_range() {
        let (img, mask) = sample();
        let cfg = AugmentationConfig {
            p_jitter: 1.0,
            jitter_factor: 0.9,
            ..AugmentationConfig::disabled()
        };
        for i in 0..20 {
            let (out, m) = augment_sample(&img, &mask, &cfg, &mut sample_rng(3, 0, i));
            assert!(out.min() >= 0.0 && out.max() <= 1.0);
            assert_eq!(m, mask);
        }
    }

    #[test]
    fn erasing_touches_image_only() {
        let img = Tensor::full(&[3, 32, 32], 0.5);
        let mask = BinaryMask::from_fn(32, 32, |y, _| y < 16);
        let cfg = AugmentationConfig {
            p_erase: 1.0,
            ..AugmentationConfig::disabled()
        };
        let (out, m) = augment_sample(&img, &mask, &cfg, &mut sample_rng(0, 0, 0));
        let erased = out.data().iter().filter(|&&v| v == 0.0).count() / 3;
        assert!(
            erased as f64 >= 0.02 * 1024.0 * 0.5 && erased as f64 <= 0.33 * 1024.0 * 1.5,
            "erased {erased}"
        );
        assert_eq!(m, mask);
    }

    #[test]
    fn validation_rejects_bad_probabilities() {
        let cfg = AugmentationConfig {
            p_vflip: 1.5,
            ..AugmentationConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = AugmentationConfig {
            erase_scale_range: [0.0, 0.5],
            ..AugmentationConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(AugmentationConfig::default().validate().is_ok());
    }
}
