//! Height-field evaluation for the simulator surfaces.

use super::scene::{
    Albedo, CylinderShape, FaceShape, Geometry, PlaneShape, SurfaceModel,
};
use crate::geometry::LandmarkName;

/// Height and its partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightSample {
    pub z: f64,
    pub zx: f64,
    pub zy: f64,
}

impl HeightSample {
    /// Unit normal of the graph surface, facing the camera.
    #[inline]
    pub fn normal(&self) -> [f64; 3] {
        let k = 1.0 / (self.zx * self.zx + self.zy * self.zy + 1.0).sqrt();
        [-self.zx * k, -self.zy * k, k]
    }
}

impl FaceShape {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let rx = x / self.half_width;
        let ry = (y - self.center_y) / self.half_height;
        rx * rx + ry * ry < 1.0
    }

    /// Height over the face support; the cap falls to zero at the rim.
    #[inline]
    pub fn height(&self, x: f64, y: f64) -> HeightSample {
        let a2 = self.half_width * self.half_width;
        let b2 = self.half_height * self.half_height;
        let dy = y - self.center_y;
        let r2 = x * x / a2 + dy * dy / b2;
        let mut z = self.depth * (1.0 - r2);
        let mut zx = -2.0 * self.depth * x / a2;
        let mut zy = -2.0 * self.depth * dy / b2;
        for b in &self.bumps {
            let ux = (x - b.cx) / b.sx;
            let uy = (y - b.cy) / b.sy;
            let q = ux * ux + uy * uy;
            if q < 16.0 {
                let g = b.amp * (-0.5 * q).exp();
                z += g;
                zx -= g * ux / b.sx;
                zy -= g * uy / b.sy;
            }
        }
        HeightSample { z, zx, zy }
    }
}

impl PlaneShape {
    #[inline]
    pub fn height(&self, x: f64, y: f64) -> HeightSample {
        HeightSample {
            z: self.z0 + self.slope_x * x + self.slope_y * y,
            zx: self.slope_x,
            zy: self.slope_y,
        }
    }
}

impl CylinderShape {
    /// Largest usable |x - axis| before the sheet turns edge-on.
    fn reach(&self) -> f64 {
        0.98 * self.radius
    }

    #[inline]
    pub fn height(&self, x: f64) -> Option<HeightSample> {
        let dx = x - self.axis_x;
        if dx.abs() >= self.reach() {
            return None;
        }
        let root = (self.radius * self.radius - dx * dx).sqrt();
        let sign = if self.convex { 1.0 } else { -1.0 };
        Some(HeightSample {
            z: self.z0 + sign * (root - self.radius),
            zx: -sign * dx / root,
            zy: 0.0,
        })
    }

    /// Arc-length coordinate of world `x` on the unrolled sheet.
    #[inline]
    pub fn unroll(&self, x: f64) -> f64 {
        self.axis_x + self.radius * ((x - self.axis_x) / self.radius).asin()
    }

    #[inline]
    pub fn roll(&self, s: f64) -> f64 {
        self.axis_x + self.radius * ((s - self.axis_x) / self.radius).sin()
    }
}

impl SurfaceModel {
    /// Height sample at world `(x, y)`, `None` off the surface's support.
    #[inline]
    pub fn height_at(&self, x: f64, y: f64) -> Option<HeightSample> {
        let (lx, flip) = if self.mirrored { (-x, -1.0) } else { (x, 1.0) };
        let h = match &self.geometry {
            Geometry::Face(f) => f.contains(lx, y).then(|| f.height(lx, y)),
            Geometry::Plane(p) => self.on_sheet(lx, y).then(|| p.height(lx, y)),
            Geometry::Cylinder(c) => c.height(lx).filter(|_| self.on_sheet(lx, y)),
        }?;
        Some(HeightSample {
            zx: h.zx * flip,
            ..h
        })
    }

    /// Procedurally textured sheets are unbounded; mapped ones end at the map edge.
    #[inline]
    fn on_sheet(&self, x: f64, y: f64) -> bool {
        match self.albedo {
            Albedo::Skin(_) => true,
            Albedo::Map(_) => self.sheet_source(x, y).is_some(),
        }
    }

    /// Source-space coordinate of an unmirrored world point on a sheet, if
    /// it lies on the printed area.
    #[inline]
    fn sheet_source(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let Albedo::Map(map) = &self.albedo else {
            return None;
        };
        let flat_x = match &self.geometry {
            Geometry::Cylinder(c) => {
                if (x - c.axis_x).abs() >= c.reach() {
                    return None;
                }
                c.unroll(x)
            }
            _ => x,
        };
        let (sx, sy) = self.pose.to_source(flat_x, y);
        let (x0, y0, x1, y1) = map.extent();
        (sx >= x0 && sx <= x1 && sy >= y0 && sy <= y1).then_some((sx, sy))
    }

    /// Albedo at world `(x, y)`, `None` off the surface's support.
    #[inline]
    pub fn albedo_at(&self, x: f64, y: f64) -> Option<f64> {
        let lx = if self.mirrored { -x } else { x };
        match (&self.albedo, &self.geometry) {
            (Albedo::Skin(s), Geometry::Face(f)) => f.contains(lx, y).then(|| s.at(lx, y)),
            (Albedo::Skin(s), Geometry::Plane(_)) => Some(s.at(lx, y)),
            (Albedo::Skin(s), Geometry::Cylinder(c)) => c.height(lx).map(|_| s.at(lx, y)),
            (Albedo::Map(m), _) => self.sheet_source(lx, y).map(|(sx, sy)| m.sample(sx, sy)),
        }
    }

    /// World position of a landmark. Left/right names describe image sides,
    /// so a mirrored surface takes the anchor of the opposite name.
    pub fn anchor(&self, name: LandmarkName) -> (f64, f64) {
        use LandmarkName::*;
        if self.mirrored {
            let (x, y) = match name {
                LeftEyeOuter => self.unmirrored_anchor(RightEyeOuter),
                RightEyeOuter => self.unmirrored_anchor(LeftEyeOuter),
                MouthLeft => self.unmirrored_anchor(MouthRight),
                MouthRight => self.unmirrored_anchor(MouthLeft),
                FaceBoxTl => {
                    let (bx, _) = self.unmirrored_anchor(FaceBoxBr);
                    (bx, self.unmirrored_anchor(FaceBoxTl).1)
                }
                FaceBoxBr => {
                    let (tx, _) = self.unmirrored_anchor(FaceBoxTl);
                    (tx, self.unmirrored_anchor(FaceBoxBr).1)
                }
                NoseTip => self.unmirrored_anchor(NoseTip),
            };
            (-x, y)
        } else {
            self.unmirrored_anchor(name)
        }
    }

    fn unmirrored_anchor(&self, name: LandmarkName) -> (f64, f64) {
        let (x, y) = self.pose.to_world(self.anchors[name as usize]);
        match &self.geometry {
            Geometry::Cylinder(c) => (c.roll(x), y),
            _ => (x, y),
        }
    }
}
