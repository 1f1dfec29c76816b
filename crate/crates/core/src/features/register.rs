use super::{WORK_HEIGHT, WORK_WIDTH};
use crate::error::{Error, Result};
use crate::geometry::{estimate_homography, transfer_rms, warp_homography, Homography, LandmarkSet};
use crate::image::{resize_area, Image, Mask};

/// Landmark transfer RMS above which a registration is rejected.
pub const REGISTRATION_LIMIT_PX: f64 = 3.0;

/// Flash image resampled into the ambient image's frame.
#[derive(Debug, Clone)]
pub struct RegisteredPair {
    pub ambient: Image,
    pub flash: Image,
    /// Pixels of `flash` that came from inside the source image.
    pub valid: Mask,
    /// Ambient landmarks in the registered frame.
    pub landmarks: LandmarkSet,
    /// Maps flash-image pixels onto ambient-image pixels.
    pub homography: Homography,
    pub residual: f64,
}

/// Resizes to `size` (area filter), rescaling landmarks to match.
pub(crate) fn to_working(img: &Image, lm: &LandmarkSet, size: (usize, usize)) -> Result<(Image, LandmarkSet)> {
    if img.dims() == size {
        return Ok((img.clone(), lm.clone()));
    }
    Ok((resize_area(img, size.0, size.1)?, lm.rescaled(img.dims(), size)))
}

/// Registers the flash shot onto the ambient shot at the given frame size.
pub fn register_flash_pair_to(
    i_a: &Image,
    i_f: &Image,
    lm_a: &LandmarkSet,
    lm_f: &LandmarkSet,
    size: (usize, usize),
) -> Result<RegisteredPair> {
    let (a, la) = to_working(i_a, lm_a, size)?;
    let (f, lf) = to_working(i_f, lm_f, size)?;
    register_native(&a, &f, &la, &lf)
}

/// Downsamples both shots to the 480x270 working frame, estimates the
/// homography taking flash landmarks onto ambient landmarks, and warps the
/// flash shot into the ambient frame.
pub fn register_flash_pair(
    i_a: &Image,
    i_f: &Image,
    lm_a: &LandmarkSet,
    lm_f: &LandmarkSet,
) -> Result<RegisteredPair> {
    register_flash_pair_to(i_a, i_f, lm_a, lm_f, (WORK_WIDTH, WORK_HEIGHT))
}

/// Registration without resampling; both images must share a size.
pub fn register_native(
    i_a: &Image,
    i_f: &Image,
    lm_a: &LandmarkSet,
    lm_f: &LandmarkSet,
) -> Result<RegisteredPair> {
    if i_a.dims() != i_f.dims() {
        return Err(Error::Dimension(format!(
            "flash pair sizes differ: {:?} vs {:?}",
            i_a.dims(),
            i_f.dims()
        )));
    }
    let (w, h) = i_a.dims();
    if lm_a == lm_f {
        return Ok(RegisteredPair {
            ambient: i_a.clone(),
            flash: i_f.clone(),
            valid: Mask::all_valid(w, h),
            landmarks: lm_a.clone(),
            homography: Homography::identity(),
            residual: 0.0,
        });
    }
    let hom = estimate_homography(lm_f, lm_a)?;
    let residual = transfer_rms(&hom, lm_f, lm_a);
    if !(residual <= REGISTRATION_LIMIT_PX) {
        return Err(Error::Residual {
            residual,
            limit: REGISTRATION_LIMIT_PX,
        });
    }
    let (flash, valid) = warp_homography(i_f, &hom, w, h)?;
    Ok(RegisteredPair {
        ambient: i_a.clone(),
        flash,
        valid,
        landmarks: lm_a.clone(),
        homography: hom,
        residual,
    })
}
