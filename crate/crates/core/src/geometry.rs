//! Facial landmarks, planar homographies (normalized DLT) and image warping.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// Named facial keypoints. `Left`/`Right` refer to image sides (smaller `u`
/// is left), not to the subject's anatomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkName {
    NoseTip,
    LeftEyeOuter,
    RightEyeOuter,
    MouthLeft,
    MouthRight,
    FaceBoxTl,
    FaceBoxBr,
}

impl LandmarkName {
    pub const ALL: [LandmarkName; 7] = [
        LandmarkName::NoseTip,
        LandmarkName::LeftEyeOuter,
        LandmarkName::RightEyeOuter,
        LandmarkName::MouthLeft,
        LandmarkName::MouthRight,
        LandmarkName::FaceBoxTl,
        LandmarkName::FaceBoxBr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkName::NoseTip => "nose_tip",
            LandmarkName::LeftEyeOuter => "left_eye_outer",
            LandmarkName::RightEyeOuter => "right_eye_outer",
            LandmarkName::MouthLeft => "mouth_left",
            LandmarkName::MouthRight => "mouth_right",
            LandmarkName::FaceBoxTl => "face_box_tl",
            LandmarkName::FaceBoxBr => "face_box_br",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LandmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        LandmarkName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown landmark name '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: LandmarkName,
    pub u: f64,
    pub v: f64,
}

/// A complete set of the seven named landmarks, stored in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    points: Vec<Landmark>,
}

impl LandmarkSet {
    /// Accepts points in any order; every name must appear exactly once.
    pub fn new(points: Vec<Landmark>) -> Result<Self> {
        let mut slots: [Option<Landmark>; 7] = [None; 7];
        for p in points {
            if !(p.u.is_finite() && p.v.is_finite()) {
                return Err(Error::Geometry(format!("non-finite landmark {}", p.name)));
            }
            let slot = &mut slots[p.name.index()];
            if slot.is_some() {
                return Err(Error::Geometry(format!("duplicate landmark {}", p.name)));
            }
            *slot = Some(p);
        }
        let mut out = Vec::with_capacity(7);
        for (i, s) in slots.into_iter().enumerate() {
            match s {
                Some(p) => out.push(p),
                None => {
                    return Err(Error::Geometry(format!(
                        "missing landmark {}",
                        LandmarkName::ALL[i]
                    )))
                }
            }
        }
        Ok(LandmarkSet { points: out })
    }

    /// Builds a set from `(u, v)` pairs given in [`LandmarkName::ALL`] order.
    pub fn from_array(coords: [(f64, f64); 7]) -> Result<Self> {
        LandmarkSet::new(
            LandmarkName::ALL
                .iter()
                .zip(coords)
                .map(|(&name, (u, v))| Landmark { name, u, v })
                .collect(),
        )
    }

    pub fn points(&self) -> &[Landmark] {
        &self.points
    }

    pub fn get(&self, name: LandmarkName) -> (f64, f64) {
        let p = &self.points[name.index()];
        (p.u, p.v)
    }

    /// Distance between the outer eye corners.
    pub fn inter_ocular(&self) -> f64 {
        let (lu, lv) = self.get(LandmarkName::LeftEyeOuter);
        let (ru, rv) = self.get(LandmarkName::RightEyeOuter);
        ((lu - ru).powi(2) + (lv - rv).powi(2)).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> LandmarkSet {
        LandmarkSet {
            points: self
                .points
                .iter()
                .map(|p| {
                    let (u, v) = f(p.u, p.v);
                    Landmark { name: p.name, u, v }
                })
                .collect(),
        }
    }

    pub fn translated(&self, du: f64, dv: f64) -> LandmarkSet {
        self.map(|u, v| (u + du, v + dv))
    }

    /// Rescales coordinates from a `from` image size to a `to` image size
    /// under the pixel-center convention.
    pub fn rescaled(&self, from: (usize, usize), to: (usize, usize)) -> LandmarkSet {
        if from == to {
            return self.clone();
        }
        let sx = to.0 as f64 / from.0 as f64;
        let sy = to.1 as f64 / from.1 as f64;
        self.map(|u, v| ((u + 0.5) * sx - 0.5, (v + 0.5) * sy - 0.5))
    }

    /// Mirror about the vertical axis of an image `width` pixels wide; left
    /// and right names swap so they keep describing image sides.
    pub fn flipped_u(&self, width: usize) -> LandmarkSet {
        let w = (width - 1) as f64;
        let swap = |n: LandmarkName| match n {
            LandmarkName::LeftEyeOuter => LandmarkName::RightEyeOuter,
            LandmarkName::RightEyeOuter => LandmarkName::LeftEyeOuter,
            LandmarkName::MouthLeft => LandmarkName::MouthRight,
            LandmarkName::MouthRight => LandmarkName::MouthLeft,
            other => other,
        };
        let (tl_u, tl_v) = self.get(LandmarkName::FaceBoxTl);
        let (br_u, br_v) = self.get(LandmarkName::FaceBoxBr);
        let points = self
            .points
            .iter()
            .map(|p| match p.name {
                LandmarkName::FaceBoxTl => Landmark {
                    name: p.name,
                    u: w - br_u,
                    v: tl_v,
                },
                LandmarkName::FaceBoxBr => Landmark {
                    name: p.name,
                    u: w - tl_u,
                    v: br_v,
                },
                _ => Landmark {
                    name: swap(p.name),
                    u: w - p.u,
                    v: p.v,
                },
            })
            .collect();
        LandmarkSet::new(points).expect("flip preserves completeness")
    }

    /// Checks every point lies inside an image of the given size.
    pub fn check_inside(&self, width: usize, height: usize) -> Result<()> {
        for p in &self.points {
            if p.u < 0.0 || p.v < 0.0 || p.u > (width - 1) as f64 || p.v > (height - 1) as f64 {
                return Err(Error::Geometry(format!(
                    "landmark {} at ({:.2}, {:.2}) outside {width}x{height} image",
                    p.name, p.u, p.v
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,u,v\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.name, p.u, p.v));
        }
        s
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "name,u,v" => {}
            other => return Err(format!("expected header 'name,u,v', got {other:?}")),
        }
        let mut points = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(format!("expected 3 fields in '{line}'"));
            }
            let name = fields[0].parse()?;
            let u = fields[1].parse().map_err(|e| format!("bad u in '{line}': {e}"))?;
            let v = fields[2].parse().map_err(|e| format!("bad v in '{line}': {e}"))?;
            points.push(Landmark { name, u, v });
        }
        LandmarkSet::new(points).map_err(|e| e.to_string())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LandmarkSet::from_csv(&text).map_err(|r| Error::parse(path, r))
    }
}

/// A 3x3 projective transform normalized so that `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(du: f64, dv: f64) -> Self {
        Homography {
            h: [[1.0, 0.0, du], [0.0, 1.0, dv], [0.0, 0.0, 1.0]],
        }
    }

    /// Normalizes by `h[2][2]` and checks invertibility.
    pub fn new(h: [[f64; 3]; 3]) -> Result<Self> {
        let m = to_matrix(&h);
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::Rank("non-finite homography".into()));
        }
        if m[(2, 2)].abs() < 1e-15 {
            return Err(Error::Rank("homography has h[2][2] == 0".into()));
        }
        let m = m / m[(2, 2)];
        if m.determinant().abs() <= 1e-12 {
            return Err(Error::Rank(format!(
                "singular homography (det {:e})",
                m.determinant()
            )));
        }
        Ok(Homography { h: from_matrix(&m) })
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.h
    }

    pub fn is_identity(&self) -> bool {
        *self == Homography::identity()
    }

    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        let h = &self.h;
        let x = h[0][0] * u + h[0][1] * v + h[0][2];
        let y = h[1][0] * u + h[1][1] * v + h[1][2];
        let w = h[2][0] * u + h[2][1] * v + h[2][2];
        (x / w, y / w)
    }

    pub fn inverse(&self) -> Result<Homography> {
        let m = to_matrix(&self.h);
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Rank("homography not invertible".into()))?;
        Homography::new(from_matrix(&inv))
    }

    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::new(from_matrix(&(to_matrix(&self.h) * to_matrix(&other.h))))
    }

    /// Relative Frobenius distance `||a - b|| / ||b||`.
    pub fn relative_frobenius(&self, reference: &Homography) -> f64 {
        let a = to_matrix(&self.h);
        let b = to_matrix(&reference.h);
        (a - b).norm() / b.norm()
    }
}

fn to_matrix(h: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        h[0][0], h[0][1], h[0][2], h[1][0], h[1][1], h[1][2], h[2][0], h[2][1], h[2][2],
    )
}

fn from_matrix(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn hartley_transform(pts: &[(f64, f64)]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12) {
        return Err(Error::Rank("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply_matrix(m: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    let r = m * Vector3::new(p.0, p.1, 1.0);
    (r[0] / r[2], r[1] / r[2])
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64), scale: f64) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    cross.abs() <= 1e-9 * scale * scale
}

/// Normalized DLT from raw point correspondences.
pub fn estimate_homography_points(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!(
            "correspondence count mismatch: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    let t_src = hartley_transform(src)?;
    let t_dst = hartley_transform(dst)?;
    let ns: Vec<_> = src.iter().map(|&p| apply_matrix(&t_src, p)).collect();
    let nd: Vec<_> = dst.iter().map(|&p| apply_matrix(&t_dst, p)).collect();

    if n == 4 {
        for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            if collinear(ns[i], ns[j], ns[k], 1.0) || collinear(nd[i], nd[j], nd[k], 1.0) {
                return Err(Error::Rank(
                    "three of four correspondences are collinear".into(),
                ));
            }
        }
    }

    // Zero rows pad the system to at least 9 rows so the thin SVD exposes the
    // full right null space.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&(x, y), &(u, v))) in ns.iter().zip(&nd).enumerate() {
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Rank("SVD did not converge".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap());
    let smallest = order[0];
    let second = order[1];
    // A second (near-)null direction means the correspondences do not pin
    // down a unique homography.
    if sv[second] <= 1e-10 * sv[order[sv.len() - 1]] {
        return Err(Error::Rank(
            "degenerate correspondences (design matrix rank < 8)".into(),
        ));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::Rank("normalization not invertible".into()))?;
    let full = t_dst_inv * hn * t_src;
    Homography::new(from_matrix(&full))
}

/// Estimates the homography mapping `src` landmarks onto `dst` landmarks,
/// matching points by name.
pub fn estimate_homography(src: &LandmarkSet, dst: &LandmarkSet) -> Result<Homography> {
    let s: Vec<_> = src.points().iter().map(|p| (p.u, p.v)).collect();
    let d: Vec<_> = LandmarkName::ALL.iter().map(|&n| dst.get(n)).collect();
    estimate_homography_points(&s, &d)
}

/// Root-mean-square transfer error of `h` over the landmark correspondences.
pub fn transfer_rms(h: &Homography, src: &LandmarkSet, dst: &LandmarkSet) -> f64 {
    let sum: f64 = LandmarkName::ALL
        .iter()
        .map(|&n| {
            let (su, sv) = src.get(n);
            let (du, dv) = dst.get(n);
            let (pu, pv) = h.apply(su, sv);
            (pu - du).powi(2) + (pv - dv).powi(2)
        })
        .sum();
    (sum / LandmarkName::ALL.len() as f64).sqrt()
}

/// Warps `img` into an `out_w x out_h` frame where `h` maps source pixel
/// coordinates to output coordinates. Inverse mapping with bilinear sampling;
/// samples falling outside the source are zero and flagged invalid.
pub fn warp_homography(
    img: &Image,
    h: &Homography,
    out_w: usize,
    out_h: usize,
) -> Result<(Image, Mask)> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Dimension(format!(
            "target size must be positive, got {out_w}x{out_h}"
        )));
    }
    let inv = h.inverse()?;
    if inv.is_identity() && img.dims() == (out_w, out_h) {
        return Ok((img.clone(), Mask::all_valid(out_w, out_h)));
    }
    let m = inv.matrix();
    let mut out = Vec::with_capacity(out_w * out_h);
    let mut valid = Vec::with_capacity(out_w * out_h);
    for v in 0..out_h {
        let vf = v as f64;
        for u in 0..out_w {
            let uf = u as f64;
            let w = m[2][0] * uf + m[2][1] * vf + m[2][2];
            let x = (m[0][0] * uf + m[0][1] * vf + m[0][2]) / w;
            let y = (m[1][0] * uf + m[1][1] * vf + m[1][2]) / w;
            match img.sample(x, y) {
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
    Ok((
        Image::from_raw(out_w, out_h, out),
        Mask::from_raw(out_w, out_h, valid),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> LandmarkSet {
        LandmarkSet::from_array([
            (240.0, 140.0),
            (200.0, 110.0),
            (282.0, 109.0),
            (215.0, 180.0),
            (265.0, 181.0),
            (180.0, 60.0),
            (300.0, 215.0),
        ])
        .unwrap()
    }

    fn max_abs_diff(a: &Homography, b: &Homography) -> f64 {
        let (a, b) = (a.matrix(), b.matrix());
        (0..9)
            .map(|k| (a[k / 3][k % 3] - b[k / 3][k % 3]).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_correspondence() {
        let s = sample_set();
        let h = estimate_homography(&s, &s).unwrap();
        assert!(max_abs_diff(&h, &Homography::identity()) < 1e-8);
    }

    #[test]
    fn pure_translation() {
        let s = sample_set();
        let d = s.translated(5.0, -3.0);
        let h = estimate_homography(&s, &d).unwrap();
        assert!(max_abs_diff(&h, &Homography::translation(5.0, -3.0)) < 1e-8);
    }

    #[test]
    fn landmark_set_requires_all_names_once() {
        let mut pts = sample_set().points().to_vec();
        pts.pop();
        assert!(LandmarkSet::new(pts.clone()).is_err());
        pts.push(pts[0]);
        assert!(LandmarkSet::new(pts).is_err());
    }

    #[test]
    fn too_few_points() {
        let src = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(matches!(
            estimate_homography_points(&src, &src),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn collinear_configurations_are_rank_errors() {
        let four = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)];
        assert!(matches!(
            estimate_homography_points(&four, &four),
            Err(Error::Rank(_))
        ));
        let line: Vec<_> = (0..7).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!(matches!(
            estimate_homography_points(&line, &line),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let s = sample_set();
        let back = LandmarkSet::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back, s);
        assert!(LandmarkSet::from_csv("u,v\n").is_err());
    }

    #[test]
    fn flip_swaps_sides() {
        let s = sample_set();
        let f = s.flipped_u(480);
        let (lu, _) = f.get(LandmarkName::LeftEyeOuter);
        let (ru, _) = f.get(LandmarkName::RightEyeOuter);
        assert!(lu < ru);
        assert_eq!(f.flipped_u(480), s);
    }

    #[test]
    fn warp_identity_is_bit_exact() {
        let img = Image::from_fn(23, 17, |u, v| ((u * 31 + v * 7) % 13) as f64 / 13.0);
        let (out, mask) = warp_homography(&img, &Homography::identity(), 23, 17).unwrap();
        assert_eq!(out, img);
        assert_eq!(mask.count_valid(), 23 * 17);
    }

    #[test]
    fn warp_integer_translation() {
        let img = Image::from_fn(20, 12, |u, v| ((u * 31 + v * 7) % 13) as f64 / 13.0);
        let h = Homography::translation(3.0, -2.0);
        let (out, mask) = warp_homography(&img, &h, 20, 12).unwrap();
        for v in 0..12 {
            for u in 0..20 {
                let inside = u >= 3 && v + 2 < 12;
                assert_eq!(mask.is_valid(u, v), inside);
                if inside {
                    assert_eq!(out.get(u, v), img.get(u - 3, v + 2));
                }
            }
        }
    }

    #[test]
    fn singular_homography_rejected() {
        assert!(matches!(
            Homography::new([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]),
            Err(Error::Rank(_))
        ));
    }
}
