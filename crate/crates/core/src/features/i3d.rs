use super::{FeatureLayout, FeatureVector, PatchRegion, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::image::{resize_area, Image};

/// Default denominator guard: one 8-bit quantization level.
pub const I3D_EPS: f64 = 1.0 / 255.0;

/// Per-pixel `(I_f - I_a) / max(I_a, eps)` over the region, at the
/// images' own resolution.
pub fn i3d_field(i_a: &Image, i_f: &Image, region: &PatchRegion, eps: f64) -> Result<Image> {
    if i_a.dims() != i_f.dims() {
        return Err(Error::Dimension(format!(
            "flash pair sizes differ: {:?} vs {:?}",
            i_a.dims(),
            i_f.dims()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    let r = region.rect;
    r.check_inside(i_a.width(), i_a.height())?;
    let mut out = Vec::with_capacity(r.area());
    for v in r.y0..r.y1 {
        let ra = &i_a.row(v)[r.x0..r.x1];
        let rf = &i_f.row(v)[r.x0..r.x1];
        out.extend(ra.iter().zip(rf).map(|(&a, &f)| (f - a) / a.max(eps)));
    }
    Image::new(r.width(), r.height(), out)
}

/// The ratio field resampled (area filter) to a 28x28 patch, row-major.
pub fn compute_i3d(i_a: &Image, i_f: &Image, region: &PatchRegion, eps: f64) -> Result<FeatureVector> {
    let field = i3d_field(i_a, i_f, region, eps)?;
    let patch = resize_area(&field, PATCH_SIZE, PATCH_SIZE)?;
    let mut fv = FeatureVector::new(
        FeatureLayout::I3dPatch {
            w: PATCH_SIZE,
            h: PATCH_SIZE,
        },
        patch.into_pixels(),
    )?;
    fv.region = Some(region.kind);
    Ok(fv)
}
