//! Intensity transforms: additive Gaussian noise and gamma.

use super::TransformError;
use crate::rng::RandomStream;
use crate::volume::{saturate_u8, Volume, VolumeData};

/// Draws `sigma ~ U(0, sigma_max)` and adds `N(0, sigma^2)` per value.
pub fn gaussian_noise(v: &Volume, rng: &mut RandomStream, sigma_max: f64) -> Volume {
    let sigma = rng.uniform_range(0.0, sigma_max);
    add_gaussian_noise(v, rng, sigma)
}

/// Adds independent `N(0, sigma^2)` noise to every voxel and channel.
/// Uint8 results are rounded and saturated.
pub fn add_gaussian_noise(v: &Volume, rng: &mut RandomStream, sigma: f64) -> Volume {
    if sigma <= 0.0 {
        return v.clone();
    }
    let data = match v.data() {
        VolumeData::U8(src) => VolumeData::U8(
            src.iter()
                .map(|&x| saturate_u8((x as f64 + sigma * rng.normal()) as f32))
                .collect(),
        ),
        VolumeData::F32(src) => VolumeData::F32(
            src.iter()
                .map(|&x| (x as f64 + sigma * rng.normal()) as f32)
                .collect(),
        ),
    };
    Volume::from_parts(v.shape(), data)
}

/// Draws `gamma ~ U(lo, hi)` and applies [`apply_gamma`].
pub fn random_gamma(
    v: &Volume,
    rng: &mut RandomStream,
    lo: f64,
    hi: f64,
) -> Result<Volume, TransformError> {
    let gamma = rng.uniform_range(lo, hi);
    apply_gamma(v, gamma)
}

/// Gamma curve. Uint8: `x -> 255 * (x / 255)^gamma`. Float: values are
/// min-max normalised, raised to `gamma` and mapped back to `[min, max]`.
///
/// A constant float volume has no range and yields
/// [`TransformError::DegenerateRange`].
pub fn apply_gamma(v: &Volume, gamma: f64) -> Result<Volume, TransformError> {
    if gamma == 1.0 {
        return Ok(v.clone());
    }
    let data = match v.data() {
        VolumeData::U8(src) => {
            let lut: Vec<u8> = (0..256)
                .map(|x| saturate_u8((255.0 * (x as f64 / 255.0).powf(gamma)) as f32))
                .collect();
            VolumeData::U8(src.iter().map(|&x| lut[x as usize]).collect())
        }
        VolumeData::F32(src) => {
            let (lo, hi) = v.min_max();
            if hi <= lo {
                return Err(TransformError::DegenerateRange);
            }
            let (lo, range) = (lo as f64, (hi - lo) as f64);
            VolumeData::F32(
                src.iter()
                    .map(|&x| {
                        let t = ((x as f64 - lo) / range).clamp(0.0, 1.0);
                        (lo + range * t.powf(gamma)) as f32
                    })
                    .collect(),
            )
        }
    };
    Ok(Volume::from_parts(v.shape(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Shape;

    #[test]
    fn zero_sigma_is_identity() {
        let s = Shape::new(2, 3, 4, 3);
        let v = Volume::from_u8(s, (0..s.len()).map(|i| i as u8).collect()).unwrap();
        assert_eq!(gaussian_noise(&v, &mut RandomStream::new(3), 0.0), v);
    }

    #[test]
    fn noise_moments() {
        let s = Shape::new(100, 100, 100, 1);
        let v = Volume::from_u8(s, vec![128; s.len()]).unwrap();
        let out = add_gaussian_noise(&v, &mut RandomStream::new(17), 5.0);
        let vals = out.as_u8().unwrap();
        let n = vals.len() as f64;
        let mean = vals.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = vals.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 128.0).abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 5.0).abs() < 0.1, "std {}", var.sqrt());
        assert_eq!(out.shape(), s);
    }

    #[test]
    fn noise_saturates_uint8() {
        let s = Shape::new(1, 10, 10, 1);
        let v = Volume::from_u8(s, vec![250; s.len()]).unwrap();
        let out = add_gaussian_noise(&v, &mut RandomStream::new(1), 50.0);
        assert!(out.as_u8().unwrap().contains(&255));
    }

    #[test]
    fn gamma_rules() {
        let s = Shape::new(1, 1, 4, 1);
        let v = Volume::from_u8(s, vec![0, 64, 200, 255]).unwrap();
        assert_eq!(apply_gamma(&v, 1.0).unwrap(), v);
        let g2 = apply_gamma(&v, 2.0).unwrap();
        assert_eq!(g2.as_u8().unwrap()[0], 0);
        assert_eq!(g2.as_u8().unwrap()[1], 16);
        assert_eq!(g2.as_u8().unwrap()[3], 255);
        for gamma in [0.5, 0.8, 1.2, 3.0] {
            let out = apply_gamma(&v, gamma).unwrap();
            let o = out.as_u8().unwrap();
            assert_eq!((o[0], o[3]), (0, 255));
            assert!(o.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn float_gamma() {
        let s = Shape::new(1, 1, 3, 1);
        let v = Volume::from_f32(s, vec![-1.0, 0.0, 1.0]).unwrap();
        let out = apply_gamma(&v, 2.0).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[-1.0, -0.5, 1.0]);
        let c = Volume::from_f32(s, vec![2.0; 3]).unwrap();
        assert_eq!(apply_gamma(&c, 2.0), Err(TransformError::DegenerateRange));
    }
}
