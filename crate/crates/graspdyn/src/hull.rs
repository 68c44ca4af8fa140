//! Convex hull geometry in halfspace form: containment queries, nearest-face
//! normals, and conversion from vertex meshes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::Vec3;

/// Containment tolerance in meters.
pub const CONTAINMENT_TOL: f64 = 1e-9;

/// One face: points `x` inside satisfy `normal . x <= offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Halfspace {
    pub fn n(&self) -> Vec3 {
        Vector3::from(self.normal)
    }
}

/// A bounded convex region, stored as outward unit-normal halfspaces.
/// Vertices recovered at construction are kept for centroid queries and
/// boundedness checking.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    halfspaces: Vec<Halfspace>,
    vertices: Vec<Vec3>,
}

impl ConvexHull {
    pub fn from_halfspaces(halfspaces: Vec<Halfspace>) -> Result<Self> {
        if halfspaces.len() < 4 {
            return Err(Error::BadHull(format!(
                "need at least 4 halfspaces, got {}",
                halfspaces.len()
            )));
        }
        let mut hs = Vec::with_capacity(halfspaces.len());
        for h in &halfspaces {
            let n = h.n();
            let norm = n.norm();
            if (norm - 1.0).abs() > 1e-9 {
                // normalize, but only within a loose factor; junk input is an error
                if norm < 1e-6 {
                    return Err(Error::BadHull("zero-length face normal".into()));
                }
                hs.push(Halfspace {
                    normal: (n / norm).into(),
                    offset: h.offset / norm,
                });
            } else {
                hs.push(*h);
            }
        }
        check_bounded(&hs)?;
        let vertices = recover_vertices(&hs)?;
        if vertices.len() < 4 {
            return Err(Error::BadHull(format!(
                "only {} vertices recovered",
                vertices.len()
            )));
        }
        Ok(ConvexHull {
            halfspaces: hs,
            vertices,
        })
    }

    /// Brute-force facet enumeration; adequate for the small meshes used here.
    pub fn from_vertices(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::BadHull(format!(
                "need at least 4 vertices, got {}",
                points.len()
            )));
        }
        let n = points.len();
        let mut faces: Vec<Halfspace> = Vec::new();
        let tol = 1e-9;
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let ab = points[j] - points[i];
                    let ac = points[k] - points[i];
                    let mut normal = ab.cross(&ac);
                    let len = normal.norm();
                    if len < 1e-12 {
                        continue; // collinear
                    }
                    normal /= len;
                    let d = normal.dot(&points[i]);
                    // candidate plane is a hull facet if all points are on one side
                    let mut above = 0usize;
                    let mut below = 0usize;
                    for p in points {
                        let s = normal.dot(p) - d;
                        if s > tol {
                            above += 1;
                        } else if s < -tol {
                            below += 1;
                        }
                    }
                    let hs = if above == 0 {
                        Halfspace {
                            normal: normal.into(),
                            offset: d,
                        }
                    } else if below == 0 {
                        Halfspace {
                            normal: (-normal).into(),
                            offset: -d,
                        }
                    } else {
                        continue;
                    };
                    if !faces.iter().any(|f| {
                        (f.n() - hs.n()).norm() < 1e-7 && (f.offset - hs.offset).abs() < 1e-7
                    }) {
                        faces.push(hs);
                    }
                }
            }
        }
        if faces.len() < 4 {
            return Err(Error::BadHull("vertex set is degenerate (flat)".into()));
        }
        check_bounded(&faces)?;
        let vertices = recover_vertices(&faces)?;
        Ok(ConvexHull {
            halfspaces: faces,
            vertices,
        })
    }

    /// Axis-aligned box `[-hx,hx] x [-hy,hy] x [-hz,hz]` shifted by `center`.
    pub fn axis_aligned_box(center: Vec3, half_extents: Vec3) -> Self {
        let mut hs = Vec::with_capacity(6);
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut n = Vec3::zeros();
                n[axis] = sign;
                hs.push(Halfspace {
                    normal: n.into(),
                    offset: sign * center[axis] + half_extents[axis],
                });
            }
        }
        ConvexHull::from_halfspaces(hs).expect("box hull is always valid")
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::zeros();
        for v in &self.vertices {
            c += v;
        }
        c / self.vertices.len() as f64
    }

    /// Signed margins `n . p - d` per face; `<= 0` means inside that face.
    pub fn face_margins(&self, p: &Vec3) -> Vec<f64> {
        self.halfspaces
            .iter()
            .map(|h| h.n().dot(p) - h.offset)
            .collect()
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.face_margins(p).iter().all(|&m| m <= tol)
    }

    /// Unit normal of the face whose plane is closest to the point.
    /// Ties break toward the lowest face index. Exact for points on the
    /// surface; used to look up `s_n` at a fingertip contact.
    pub fn nearest_face_normal(&self, p: &Vec3) -> (usize, Vec3) {
        let mut best = (0usize, f64::INFINITY);
        for (i, h) in self.halfspaces.iter().enumerate() {
            let d = (h.n().dot(p) - h.offset).abs();
            if d < best.1 - 1e-15 {
                best = (i, d);
            }
        }
        (best.0, self.halfspaces[best.0].n())
    }
}

/// A bounded intersection requires rank-3 normals and an empty recession
/// cone; extreme recession rays of a pointed cone lie on facet pairs, so
/// checking every pair cross-product suffices.
fn check_bounded(hs: &[Halfspace]) -> Result<()> {
    let normals: Vec<Vec3> = hs.iter().map(|h| h.n()).collect();
    let mut basis: Vec<Vec3> = Vec::new();
    for n in &normals {
        let mut r = *n;
        for b in &basis {
            r -= b * b.dot(&r);
        }
        if r.norm() > 1e-9 {
            basis.push(r / r.norm());
        }
    }
    if basis.len() < 3 {
        return Err(Error::BadHull("face normals do not span 3D".into()));
    }
    for i in 0..normals.len() {
        for j in (i + 1)..normals.len() {
            let c = normals[i].cross(&normals[j]);
            if c.norm() < 1e-12 {
                continue;
            }
            let u = c / c.norm();
            for dir in [u, -u] {
                if normals.iter().all(|n| n.dot(&dir) <= 1e-9) {
                    return Err(Error::BadHull("halfspace intersection is unbounded".into()));
                }
            }
        }
    }
    Ok(())
}

/// Intersect all plane triples and keep feasible points.
fn recover_vertices(hs: &[Halfspace]) -> Result<Vec<Vec3>> {
    let mut verts: Vec<Vec3> = Vec::new();
    let n = hs.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let a = nalgebra::Matrix3::from_rows(&[
                    hs[i].n().transpose(),
                    hs[j].n().transpose(),
                    hs[k].n().transpose(),
                ]);
                let b = Vec3::new(hs[i].offset, hs[j].offset, hs[k].offset);
                let Some(inv) = a.try_inverse() else {
                    continue;
                };
                let p = inv * b;
                if !p.iter().all(|v| v.is_finite()) {
                    continue;
                }
                if hs.iter().all(|h| h.n().dot(&p) - h.offset <= 1e-7) {
                    if !verts.iter().any(|v| (v - p).norm() < 1e-8) {
                        verts.push(p);
                    }
                }
            }
        }
    }
    Ok(verts)
}
