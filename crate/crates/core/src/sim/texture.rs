//! Procedural skin reflectance: a base tone darkened around brows, eyes,
//! nostrils and lips, modulated by fine hash-based value noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Gaussian darkening mark; albedo is multiplied by `1 - depth * g(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub cx: f64,
    pub cy: f64,
    pub sx: f64,
    pub sy: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinAlbedo {
    pub base: f64,
    pub marks: Vec<Mark>,
    /// Relative amplitude of the fine texture, in `[0, 1)`.
    pub noise_amp: f64,
    /// Lattice spacing of the finest texture octave, world units.
    pub cell: f64,
    pub seed: u64,
}

const FLOOR: f64 = 0.02;

#[inline]
fn hash2(ix: i64, iy: i64, seed: u64) -> f64 {
    // splitmix64 finalizer over the packed lattice coordinate
    let mut z = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// `x.floor()` as an integer; avoids a libm call on targets without SSE4.1.
#[inline]
fn floor_i64(x: f64) -> i64 {
    let i = x as i64;
    if (i as f64) > x {
        i - 1
    } else {
        i
    }
}

/// Smoothly interpolated lattice noise in `[-1, 1]`.
#[inline]
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (ix, iy) = (floor_i64(x), floor_i64(y));
    let (fx, fy) = (ix as f64, iy as f64);
    let tx = smooth(x - fx);
    let ty = smooth(y - fy);
    let a = hash2(ix, iy, seed);
    let b = hash2(ix + 1, iy, seed);
    let c = hash2(ix, iy + 1, seed);
    let d = hash2(ix + 1, iy + 1, seed);
    let top = a + tx * (b - a);
    let bottom = c + tx * (d - c);
    top + ty * (bottom - top)
}

impl SkinAlbedo {
    /// Uniform albedo with no marks or texture.
    pub fn uniform(value: f64) -> Self {
        SkinAlbedo {
            base: value,
            marks: Vec::new(),
            noise_amp: 0.0,
            cell: 1.0,
            seed: 0,
        }
    }

    /// Reflectance at a face-space point.
    #[inline]
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let mut a = self.base;
        for m in &self.marks {
            let dx = (x - m.cx) / m.sx;
            let dy = (y - m.cy) / m.sy;
            let r2 = dx * dx + dy * dy;
            if r2 < 16.0 {
                a *= 1.0 - m.depth * (-0.5 * r2).exp();
            }
        }
        if self.noise_amp > 0.0 {
            let inv = 1.0 / self.cell;
            let n = (2.0 * value_noise(x * inv, y * inv, self.seed)
                + value_noise(x * inv * 0.5, y * inv * 0.5, self.seed ^ 0x5bd1_e995))
                / 3.0;
            a *= 1.0 + self.noise_amp * n;
        }
        a.clamp(FLOOR, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base <= 1.0) {
            return Err(Error::Config(format!(
                "skin base albedo must lie in (0, 1], got {}",
                self.base
            )));
        }
        if !(0.0..1.0).contains(&self.noise_amp) || !(self.cell > 0.0) {
            return Err(Error::Config("skin texture parameters out of range".into()));
        }
        if self.marks.iter().any(|m| !(0.0..1.0).contains(&m.depth) || !(m.sx > 0.0 && m.sy > 0.0)) {
            return Err(Error::Config("skin mark parameters out of range".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_bounded_and_deterministic() {
        for i in 0..2000 {
            let x = i as f64 * 0.731 - 300.0;
            let y = i as f64 * -0.377 + 41.0;
            let n = value_noise(x, y, 99);
            assert!((-1.0..=1.0).contains(&n));
            assert_eq!(n, value_noise(x, y, 99));
        }
    }

    #[test]
    fn integer_floor_matches_float_floor() {
        for &x in &[-2.5, -2.0, -1e-12, 0.0, 0.3, 1.0, 7.999, -300.25] {
            assert_eq!(floor_i64(x) as f64, f64::floor(x), "{x}");
        }
    }

    #[test]
    fn noise_is_continuous_across_cells() {
        let a = value_noise(3.0 - 1e-9, 0.4, 5);
        let b = value_noise(3.0 + 1e-9, 0.4, 5);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn marks_darken() {
        let mut s = SkinAlbedo::uniform(0.5);
        s.marks.push(Mark {
            cx: 0.0,
            cy: 0.0,
            sx: 2.0,
            sy: 2.0,
            depth: 0.4,
        });
        assert!((s.at(0.0, 0.0) - 0.3).abs() < 1e-12);
        assert_eq!(s.at(100.0, 0.0), 0.5);
    }
}
