use super::{FeatureLayout, FeatureVector, PatchRegion, RegionKind};
use crate::error::{Error, Result};
use crate::geometry::LandmarkSet;
use crate::image::{Image, PixelRect};

/// 58 uniform patterns plus one bin for all non-uniform ones.
pub const LBP_BINS: usize = 59;

/// Neighbor offsets, clockwise from the right-hand pixel; bit `k` is set
/// when neighbor `k` is strictly brighter than the center.
const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

const fn build_bins() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut next = 0u8;
    let mut code = 0usize;
    while code < 256 {
        let c = code as u8;
        let transitions = (c ^ c.rotate_left(1)).count_ones();
        if transitions <= 2 {
            table[code] = next;
            next += 1;
        } else {
            table[code] = (LBP_BINS - 1) as u8;
        }
        code += 1;
    }
    table
}

static BINS: [u8; 256] = build_bins();

/// Histogram bin of an 8-bit pattern: uniform patterns (at most two
/// circular 0/1 transitions) in increasing code order, then the catch-all.
pub fn lbp_uniform_bin(code: u8) -> usize {
    BINS[code as usize] as usize
}

/// L1-normalized uniform LBP(8,1) histogram of the pixels inside `cell`.
/// Neighbors outside `cell` are read from the image; pixels on the image
/// border are skipped.
pub fn lbp_histogram(img: &Image, cell: PixelRect) -> Result<[f64; LBP_BINS]> {
    cell.check_inside(img.width(), img.height())?;
    let (w, h) = img.dims();
    let mut counts = [0u32; LBP_BINS];
    let mut total = 0u32;
    for v in cell.y0.max(1)..cell.y1.min(h - 1) {
        for u in cell.x0.max(1)..cell.x1.min(w - 1) {
            let c = img.get(u, v);
            let mut code = 0u8;
            for (k, &(du, dv)) in NEIGHBORS.iter().enumerate() {
                let n = img.get((u as isize + du) as usize, (v as isize + dv) as usize);
                if n > c {
                    code |= 1 << k;
                }
            }
            counts[lbp_uniform_bin(code)] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Region(format!("LBP cell {cell:?} has no interior pixels")));
    }
    let mut hist = [0.0; LBP_BINS];
    for (h, &c) in hist.iter_mut().zip(&counts) {
        *h = c as f64 / total as f64;
    }
    Ok(hist)
}

/// Splits a rectangle into a 3x3 grid of near-equal cells, row-major.
fn grid_cells(r: PixelRect) -> [PixelRect; 9] {
    let xs: Vec<usize> = (0..=3).map(|i| r.x0 + (i * r.width() + 1) / 3).collect();
    let ys: Vec<usize> = (0..=3).map(|i| r.y0 + (i * r.height() + 1) / 3).collect();
    std::array::from_fn(|k| PixelRect {
        x0: xs[k % 3],
        x1: xs[k % 3 + 1],
        y0: ys[k / 3],
        y1: ys[k / 3 + 1],
    })
}

/// Nine-cell uniform LBP descriptor of the face patch, 531 values.
pub fn lbp_descriptor(img: &Image, lm: &LandmarkSet) -> Result<FeatureVector> {
    let region = PatchRegion::from_landmarks(RegionKind::Face, lm, img.width(), img.height())?;
    let r = region.rect;
    if r.width() < 9 || r.height() < 9 {
        return Err(Error::Region(format!(
            "face patch {}x{} too small for a 3x3 grid of 3x3 cells",
            r.width(),
            r.height()
        )));
    }
    let mut values = Vec::with_capacity(9 * LBP_BINS);
    for cell in grid_cells(r) {
        values.extend_from_slice(&lbp_histogram(img, cell)?);
    }
    let mut fv = FeatureVector::new(FeatureLayout::Lbp531, values)?;
    fv.region = Some(RegionKind::Face);
    Ok(fv)
}

/// Face-only texture baseline: LBP of the flash shot plus the population
/// standard deviation of the flash-minus-ambient face patch. The pair must
/// already be registered.
pub fn chan_features(i_a: &Image, i_f: &Image, lm: &LandmarkSet) -> Result<FeatureVector> {
    if i_a.dims() != i_f.dims() {
        return Err(Error::Dimension(format!(
            "flash pair sizes differ: {:?} vs {:?}",
            i_a.dims(),
            i_f.dims()
        )));
    }
    let lbp = lbp_descriptor(i_f, lm)?;
    let r = PatchRegion::from_landmarks(RegionKind::Face, lm, i_a.width(), i_a.height())?.rect;
    let n = r.area() as f64;
    let mut sum = 0.0;
    for v in r.y0..r.y1 {
        for u in r.x0..r.x1 {
            sum += i_f.get(u, v) - i_a.get(u, v);
        }
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for v in r.y0..r.y1 {
        for u in r.x0..r.x1 {
            ss += (i_f.get(u, v) - i_a.get(u, v) - mean).powi(2);
        }
    }
    let mut values = lbp.values;
    values.push((ss / n).sqrt());
    let mut fv = FeatureVector::new(FeatureLayout::Chan532, values)?;
    fv.region = Some(RegionKind::Face);
    Ok(fv)
}
