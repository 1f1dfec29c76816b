use super::{Image, Mask};
use crate::error::{Error, Result};

fn check_target(out_w: usize, out_h: usize) -> Result<()> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Dimension(format!(
            "target size must be positive, got {out_w}x{out_h}"
        )));
    }
    Ok(())
}

/// Bilinear resampling with pixel-center alignment: output pixel `i` maps to
/// source coordinate `(i + 0.5) * in / out - 0.5`, clamped to the source hull.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    check_target(out_w, out_h)?;
    if img.dims() == (out_w, out_h) {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let xs: Vec<f64> = (0..out_w)
        .map(|i| ((i as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x))
        .collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for j in 0..out_h {
        let y = ((j as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        for &x in &xs {
            out.push(img.sample(x, y).expect("clamped coordinate inside hull"));
        }
    }
    Ok(Image::from_raw(out_w, out_h, out))
}

/// For each output cell along one axis, the overlapping source pixels and the
/// fraction of the cell each covers.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            let mut taps = Vec::with_capacity(last - first);
            for j in first..last {
                let overlap = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((j, overlap / scale));
                }
            }
            taps
        })
        .collect()
}

/// Box-filter resampling: each output pixel is the exact area-weighted mean
/// of the source pixels its footprint covers (source pixels treated as
/// constant unit squares). Used where a downsampled value should integrate
/// its footprint, as a sensor pixel does.
pub fn resize_area(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    check_target(out_w, out_h)?;
    if img.dims() == (out_w, out_h) {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let wx = area_weights(w, out_w);
    let wy = area_weights(h, out_h);

    let mut horizontal = vec![0.0; out_w * h];
    for v in 0..h {
        let row = img.row(v);
        for (i, taps) in wx.iter().enumerate() {
            horizontal[v * out_w + i] = taps.iter().map(|&(j, wt)| row[j] * wt).sum();
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for (k, taps) in wy.iter().enumerate() {
        let dst = &mut out[k * out_w..(k + 1) * out_w];
        for &(j, wt) in taps {
            let src = &horizontal[j * out_w..(j + 1) * out_w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * wt;
            }
        }
    }
    Ok(Image::from_raw(out_w, out_h, out))
}

/// Separable Gaussian blur with standard deviation `sigma` pixels, kernel
/// truncated at 3 sigma and renormalized at the borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let (w, h) = img.dims();
    let pass = |src: &[f64], len: usize, stride: usize, count: usize, step: usize| {
        let mut out = vec![0.0; src.len()];
        for line in 0..count {
            let base = line * step;
            for i in 0..len as isize {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (k, &wt) in kernel.iter().enumerate() {
                    let j = i + k as isize - radius;
                    if j >= 0 && j < len as isize {
                        acc += wt * src[base + j as usize * stride];
                        norm += wt;
                    }
                }
                out[base + i as usize * stride] = acc / norm;
            }
        }
        out
    };
    let horizontal = pass(img.pixels(), w, 1, h, w);
    let both = pass(&horizontal, h, w, w, 1);
    Image::from_raw(w, h, both)
}

/// Sub-pixel rigid translation: `out(u, v) = img(u - du, v - dv)`.
/// Samples falling outside the source are zero and flagged invalid.
pub fn translate(img: &Image, du: f64, dv: f64) -> (Image, Mask) {
    let (w, h) = img.dims();
    let mut out = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for v in 0..h {
        let y = v as f64 - dv;
        for u in 0..w {
            match img.sample(u as f64 - du, y) {
                Some(p) => {
                    out.push(p);
                    valid.push(true);
                }
                None => {
                    out.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    (Image::from_raw(w, h, out), Mask::from_raw(w, h, valid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |u, v| {
            0.5 + 0.3 * ((u as f64) * 0.21).sin() * ((v as f64) * 0.17).cos()
        })
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = smooth(17, 11);
        let out = resize_bilinear(&img, 17, 11).unwrap();
        let max = img
            .pixels()
            .iter()
            .zip(out.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max < 1e-9);
    }

    #[test]
    fn two_by_two_to_one() {
        let img = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let out = resize_bilinear(&img, 1, 1).unwrap();
        assert!((out.get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image::filled(13, 7, 0.42);
        for (w, h) in [(5, 3), (26, 14), (1, 1), (40, 2)] {
            let out = resize_bilinear(&img, w, h).unwrap();
            assert!(out.pixels().iter().all(|&p| (p - 0.42).abs() < 1e-12));
            let out = resize_area(&img, w, h).unwrap();
            assert!(out.pixels().iter().all(|&p| (p - 0.42).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_target_is_error() {
        let img = Image::filled(3, 3, 1.0);
        assert!(resize_bilinear(&img, 0, 3).is_err());
        assert!(resize_area(&img, 3, 0).is_err());
    }

    #[test]
    fn area_downsample_averages_blocks() {
        let img = Image::from_fn(4, 4, |u, v| (u + 4 * v) as f64);
        let out = resize_area(&img, 2, 2).unwrap();
        // top-left block: 0, 1, 4, 5
        assert!((out.get(0, 0) - 2.5).abs() < 1e-12);
        assert!((out.get(1, 1) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn area_resample_preserves_mean() {
        let img = smooth(30, 21);
        let out = resize_area(&img, 7, 5).unwrap();
        assert!((img.mean() - out.mean()).abs() < 1e-12);
    }

    #[test]
    fn blur_keeps_constants_and_mean_of_impulse() {
        let img = Image::filled(9, 7, 0.3);
        let out = gaussian_blur(&img, 1.5);
        assert!(out.pixels().iter().all(|&p| (p - 0.3).abs() < 1e-12));
        let mut imp = Image::filled(21, 21, 0.0);
        imp.set(10, 10, 1.0);
        let out = gaussian_blur(&imp, 1.0);
        let total: f64 = out.pixels().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(out.get(10, 10) > out.get(11, 10));
        assert!((out.get(9, 10) - out.get(11, 10)).abs() < 1e-15);
    }

    #[test]
    fn translate_zero_is_identity() {
        let img = smooth(9, 6);
        let (out, mask) = translate(&img, 0.0, 0.0);
        assert_eq!(out, img);
        assert_eq!(mask.count_valid(), 54);
    }

    #[test]
    fn translate_ramp_integer_and_half() {
        let img = Image::from_fn(12, 4, |u, _| u as f64);
        let (out, mask) = translate(&img, 2.0, 0.0);
        for v in 0..4 {
            for u in 0..12 {
                if u < 2 {
                    assert!(!mask.is_valid(u, v));
                    assert_eq!(out.get(u, v), 0.0);
                } else {
                    assert!(mask.is_valid(u, v));
                    assert_eq!(out.get(u, v), u as f64 - 2.0);
                }
            }
        }
        let (out, mask) = translate(&img, 0.5, 0.0);
        for u in 1..12 {
            assert!(mask.is_valid(u, 1));
            assert!((out.get(u, 1) - (u as f64 - 0.5)).abs() < 1e-12);
        }
    }
}
