use super::register::to_working;
use super::{FeatureLayout, FeatureVector, PatchRegion, RegionKind, PATCH_SIZE, WORK_HEIGHT, WORK_WIDTH};
use crate::error::{Error, Result};
use crate::geometry::{LandmarkName, LandmarkSet};
use crate::image::{resize_area, Image, Mask};

/// Default gradient floor below which the disparity estimate is zeroed.
pub const DA3D_GRAD_EPS: f64 = 2.0 / 255.0;
/// Disparity estimates are clipped to `[-DA3D_CLIP, DA3D_CLIP]` pixels.
pub const DA3D_CLIP: f64 = 32.0;

/// Per-pixel first-order disparity over a region of the left view.
#[derive(Debug, Clone)]
pub struct Da3dField {
    pub values: Image,
    /// Pixels whose gradient passed the floor (others are zero).
    pub strong: Mask,
    pub region: PatchRegion,
    /// Translation applied to the right view to align the nose tips.
    pub shift: (f64, f64),
}

impl Da3dField {
    /// Median over strong-gradient pixels, `None` if there are none.
    pub fn strong_median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .values
            .pixels()
            .iter()
            .zip(self.strong.as_slice())
            .filter_map(|(&x, &s)| s.then_some(x))
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}

/// Computes `(I_left - I_right') / dI_right'/du` on the region, where
/// `I_right'` is the right view translated so its nose tip lands on the
/// left view's. Only the region (plus one column each side) of the right
/// view is resampled.
pub fn da3d_field_at(
    i_left: &Image,
    i_right: &Image,
    lm_left: &LandmarkSet,
    lm_right: &LandmarkSet,
    kind: RegionKind,
    grad_eps: f64,
    size: (usize, usize),
) -> Result<Da3dField> {
    if !(grad_eps > 0.0) {
        return Err(Error::Argument(format!("grad_eps must be positive, got {grad_eps}")));
    }
    let (left, ll) = to_working(i_left, lm_left, size)?;
    let (right, lr) = to_working(i_right, lm_right, size)?;
    let (w, h) = left.dims();
    let region = PatchRegion::from_landmarks(kind, &ll, w, h)?;
    let (nl, nr) = (ll.get(LandmarkName::NoseTip), lr.get(LandmarkName::NoseTip));
    let (du, dv) = (nl.0 - nr.0, nl.1 - nr.1);

    let r = region.rect;
    let xa = r.x0.saturating_sub(1);
    let xb = (r.x1 + 1).min(w);
    let span = xb - xa;
    if span < 3 {
        return Err(Error::Region("disparity region narrower than 3 pixels".into()));
    }
    let mut row = vec![0.0; span];
    let mut ok = vec![false; span];
    let mut values = Vec::with_capacity(r.area());
    let mut strong = Vec::with_capacity(r.area());
    for v in r.y0..r.y1 {
        for (k, u) in (xa..xb).enumerate() {
            match right.sample(u as f64 - du, v as f64 - dv) {
                Some(p) => {
                    row[k] = p;
                    ok[k] = true;
                }
                None => {
                    row[k] = 0.0;
                    ok[k] = false;
                }
            }
        }
        let lrow = left.row(v);
        for u in r.x0..r.x1 {
            let k = u - xa;
            let (lo, hi, scale) = if k == 0 {
                (0, 1, 1.0)
            } else if k == span - 1 {
                (k - 1, k, 1.0)
            } else {
                (k - 1, k + 1, 0.5)
            };
            let g = (row[hi] - row[lo]) * scale;
            let usable = ok[lo] && ok[hi] && ok[k] && g.abs() >= grad_eps;
            if usable {
                values.push(((lrow[u] - row[k]) / g).clamp(-DA3D_CLIP, DA3D_CLIP));
            } else {
                values.push(0.0);
            }
            strong.push(usable);
        }
    }
    Ok(Da3dField {
        values: Image::new(r.width(), r.height(), values)?,
        strong: Mask::from_raw(r.width(), r.height(), strong),
        region,
        shift: (du, dv),
    })
}

/// [`da3d_field_at`] in the 480x270 working frame.
pub fn da3d_field(
    i_left: &Image,
    i_right: &Image,
    lm_left: &LandmarkSet,
    lm_right: &LandmarkSet,
    kind: RegionKind,
    grad_eps: f64,
) -> Result<Da3dField> {
    da3d_field_at(
        i_left,
        i_right,
        lm_left,
        lm_right,
        kind,
        grad_eps,
        (WORK_WIDTH, WORK_HEIGHT),
    )
}

/// The disparity field resampled (area filter) to a 28x28 patch.
pub fn compute_da3d(
    i_left: &Image,
    i_right: &Image,
    lm_left: &LandmarkSet,
    lm_right: &LandmarkSet,
    kind: RegionKind,
    grad_eps: f64,
) -> Result<FeatureVector> {
    let field = da3d_field(i_left, i_right, lm_left, lm_right, kind, grad_eps)?;
    let patch = resize_area(&field.values, PATCH_SIZE, PATCH_SIZE)?;
    let mut fv = FeatureVector::new(
        FeatureLayout::Da3dPatch {
            w: PATCH_SIZE,
            h: PATCH_SIZE,
        },
        patch.into_pixels(),
    )?;
    fv.region = Some(kind);
    Ok(fv)
}
