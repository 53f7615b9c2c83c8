//! Closed triangle meshes: STL I/O, validation, and inside tests by vertical ray casting.

use std::collections::HashMap;
use std::io::{Cursor, Read, Write};

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::WorkspaceError;

/// Indexed triangle mesh, lengths in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Builds a mesh and checks that it is closed, consistently oriented and has
    /// non-zero volume. Inward-facing meshes are flipped.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self, WorkspaceError> {
        if triangles.iter().flatten().any(|&i| i >= vertices.len()) {
            return Err(WorkspaceError::OpenMesh("triangle index out of range".into()));
        }
        let mut mesh = Self { vertices, triangles };
        mesh.check_closed()?;
        let vol = mesh.signed_volume();
        if !(vol.abs() > 1e-9) {
            return Err(WorkspaceError::ZeroVolume);
        }
        if vol < 0.0 {
            for t in &mut mesh.triangles {
                t.swap(1, 2);
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Every edge shared by exactly two faces, traversed once in each direction.
    fn check_closed(&self) -> Result<(), WorkspaceError> {
        if self.triangles.is_empty() {
            return Err(WorkspaceError::OpenMesh("no triangles".into()));
        }
        let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &self.triangles {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(WorkspaceError::OpenMesh("degenerate triangle".into()));
            }
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &n) in &directed {
            if n != 1 {
                return Err(WorkspaceError::OpenMesh(format!(
                    "edge {a}->{b} used {n} times with the same orientation"
                )));
            }
            if !directed.contains_key(&(b, a)) {
                return Err(WorkspaceError::OpenMesh(format!("boundary edge {a}-{b}")));
            }
        }
        Ok(())
    }

    /// Signed enclosed volume, mm³ (positive for outward-facing triangles).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn volume(&self) -> f64 {
        self.signed_volume().abs()
    }

    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Uniform scaling about the origin.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| Point3::from(v.coords * factor)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(min: Point3<f64>, max: Point3<f64>) -> Result<Self, WorkspaceError> {
        let v = |i: usize| {
            Point3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let vertices = (0..8).map(v).collect();
        let quads = [
            [0, 2, 3, 1], // z min
            [4, 5, 7, 6], // z max
            [0, 1, 5, 4], // y min
            [2, 6, 7, 3], // y max
            [0, 4, 6, 2], // x min
            [1, 3, 7, 5], // x max
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self::new(vertices, triangles)
    }

    /// Latitude/longitude tessellation of an ellipsoid.
    pub fn ellipsoid(center: Point3<f64>, semi_axes: Vector3<f64>, rings: usize, segments: usize) -> Result<Self, WorkspaceError> {
        let rings = rings.max(2);
        let segments = segments.max(3);
        let mut vertices = vec![center + Vector3::new(0.0, 0.0, semi_axes.z)];
        for r in 1..rings {
            let theta = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..segments {
                let phi = std::f64::consts::TAU * s as f64 / segments as f64;
                vertices.push(
                    center
                        + Vector3::new(
                            semi_axes.x * theta.sin() * phi.cos(),
                            semi_axes.y * theta.sin() * phi.sin(),
                            semi_axes.z * theta.cos(),
                        ),
                );
            }
        }
        let bottom = vertices.len();
        vertices.push(center - Vector3::new(0.0, 0.0, semi_axes.z));

        let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
        let mut triangles = Vec::new();
        for s in 0..segments {
            triangles.push([0, ring(1, s), ring(1, s + 1)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b) = (ring(r, s), ring(r, s + 1));
                let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        for s in 0..segments {
            triangles.push([bottom, ring(rings - 1, s + 1), ring(rings - 1, s)]);
        }
        Self::new(vertices, triangles)
    }

    /// Reads binary or ASCII STL.
    pub fn read_stl<R: Read>(mut reader: R) -> Result<Self, WorkspaceError> {
        let mut bytes = Vec::new();
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| WorkspaceError::Stl(e.to_string()))?;
        let indexed = stl_io::read_stl(&mut Cursor::new(bytes)).map_err(|e| WorkspaceError::Stl(e.to_string()))?;
        let vertices = indexed
            .vertices
            .iter()
            .map(|v| Point3::new(v[0] as f64, v[1] as f64, v[2] as f64))
            .collect();
        let triangles = indexed.faces.iter().map(|f| f.vertices).collect();
        Self::new(vertices, triangles)
    }

    /// Writes binary STL.
    pub fn write_stl<W: Write>(&self, mut writer: W) -> Result<(), WorkspaceError> {
        let tris: Vec<stl_io::Triangle> = self
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                let n = (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vector3::z);
                let f = |p: Point3<f64>| stl_io::Vertex::new([p.x as f32, p.y as f32, p.z as f32]);
                stl_io::Triangle {
                    normal: stl_io::Normal::new([n.x as f32, n.y as f32, n.z as f32]),
                    vertices: [f(a), f(b), f(c)],
                }
            })
            .collect();
        stl_io::write_stl(&mut writer, tris.iter()).map_err(|e| WorkspaceError::Stl(e.to_string()))
    }

    /// Heights at which the vertical line through `(x, y)` crosses the surface, sorted.
    pub fn column_crossings(&self, x: f64, y: f64) -> Vec<f64> {
        let mut zs: Vec<f64> = self
            .triangles
            .iter()
            .filter_map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                vertical_hit(a, b, c, x, y)
            })
            .collect();
        zs.sort_by(f64::total_cmp);
        zs
    }

    /// Point-in-solid test by crossing parity above the point.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let zs = self.column_crossings(p.x, p.y);
        zs.iter().filter(|&&z| z > p.z).count() % 2 == 1
    }

    /// Centers of the voxels (pitch `pitch`, aligned to the bounding box) that lie
    /// inside the mesh, in deterministic column-major order.
    pub fn voxel_centers(&self, pitch: f64) -> Vec<Point3<f64>> {
        let (lo, hi) = self.bounds();
        let n = |a: f64, b: f64| ((b - a) / pitch).ceil().max(1.0) as usize;
        let (nx, ny, nz) = (n(lo.x, hi.x), n(lo.y, hi.y), n(lo.z, hi.z));
        (0..nx * ny)
            .into_par_iter()
            .flat_map_iter(|col| {
                let x = lo.x + (col / ny) as f64 * pitch + pitch / 2.0;
                let y = lo.y + (col % ny) as f64 * pitch + pitch / 2.0;
                let zs = self.column_crossings(x, y);
                (0..nz).filter_map(move |k| {
                    let z = lo.z + k as f64 * pitch + pitch / 2.0;
                    let above = zs.iter().filter(|&&h| h > z).count();
                    (above % 2 == 1).then_some(Point3::new(x, y, z))
                })
            })
            .collect()
    }
}

/// Height of the crossing of the vertical line through `(x, y)` with triangle
/// `abc`, if any. Points on a shared edge are claimed by exactly one of the two
/// triangles (top-left rule on the projected, counter-clockwise triangle).
fn vertical_hit(a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, x: f64, y: f64) -> Option<f64> {
    let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if area == 0.0 {
        return None;
    }
    let (a, b, c, area) = if area < 0.0 { (a, c, b, -area) } else { (a, b, c, area) };
    let edge = |p: Point3<f64>, q: Point3<f64>| {
        let w = (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
        let dx = q.x - p.x;
        let dy = q.y - p.y;
        // left edges go down, top edges are horizontal going left
        let top_left = dy < 0.0 || (dy == 0.0 && dx < 0.0);
        (w > 0.0 || (w == 0.0 && top_left)).then_some(w)
    };
    let w0 = edge(b, c)?;
    let w1 = edge(c, a)?;
    let w2 = edge(a, b)?;
    Some((w0 * a.z + w1 * b.z + w2 * c.z) / area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cuboid_volume_and_inside() {
        let m = TriMesh::cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 3.0, 4.0)).unwrap();
        assert_relative_eq!(m.signed_volume(), 24.0, epsilon = 1e-12);
        assert!(m.contains(&Point3::new(1.0, 1.0, 1.0)));
        assert!(!m.contains(&Point3::new(1.0, 1.0, 5.0)));
        assert!(!m.contains(&Point3::new(3.0, 1.0, 1.0)));
        // a query on the shared diagonal of the top and bottom faces
        assert!(m.contains(&Point3::new(1.0, 1.5, 2.0)));
    }

    #[test]
    fn cuboid_voxel_count_is_exact() {
        let m = TriMesh::cuboid(Point3::new(-5.0, -5.0, -10.0), Point3::new(5.0, 5.0, 0.0)).unwrap();
        assert_eq!(m.voxel_centers(1.0).len(), 1000);
        assert_eq!(m.voxel_centers(2.0).len(), 125);
    }

    #[test]
    fn ellipsoid_voxel_volume() {
        let m = TriMesh::ellipsoid(Point3::origin(), Vector3::new(30.0, 20.0, 10.0), 48, 96).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 30.0 * 20.0 * 10.0;
        assert_relative_eq!(m.volume(), exact, max_relative = 0.01);
        let voxels = m.voxel_centers(1.0).len() as f64;
        assert_relative_eq!(voxels, m.volume(), max_relative = 0.02);
    }

    #[test]
    fn flipped_mesh_is_reoriented() {
        let m = TriMesh::cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap();
        let flipped: Vec<_> = m.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
        let f = TriMesh::new(m.vertices().to_vec(), flipped).unwrap();
        assert!(f.signed_volume() > 0.0);
    }

    #[test]
    fn open_mesh_rejected() {
        let m = TriMesh::cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap();
        let mut tris = m.triangles().to_vec();
        tris.pop();
        let err = TriMesh::new(m.vertices().to_vec(), tris).unwrap_err();
        assert_eq!(err.kind(), "OpenMesh");
    }

    #[test]
    fn flat_mesh_has_zero_volume() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let err = TriMesh::new(v, vec![[0, 1, 2], [0, 2, 1]]).unwrap_err();
        assert_eq!(err.kind(), "ZeroVolume");
    }

    #[test]
    fn stl_round_trip() {
        let m = TriMesh::cuboid(Point3::new(-1.0, -2.0, -3.0), Point3::new(1.0, 2.0, 3.0)).unwrap();
        let mut buf = Vec::new();
        m.write_stl(&mut buf).unwrap();
        let back = TriMesh::read_stl(&buf[..]).unwrap();
        assert_relative_eq!(back.volume(), m.volume(), epsilon = 1e-9);
    }

    #[test]
    fn ascii_stl() {
        let text = "solid t
facet normal 0 0 -1
 outer loop
  vertex 0 0 0
  vertex 0 1 0
  vertex 1 0 0
 endloop
endfacet
facet normal 0 -1 0
 outer loop
  vertex 0 0 0
  vertex 1 0 0
  vertex 0 0 1
 endloop
endfacet
facet normal -1 0 0
 outer loop
  vertex 0 0 0
  vertex 0 0 1
  vertex 0 1 0
 endloop
endfacet
facet normal 1 1 1
 outer loop
  vertex 1 0 0
  vertex 0 1 0
  vertex 0 0 1
 endloop
endfacet
endsolid t
";
        let m = TriMesh::read_stl(text.as_bytes()).unwrap();
        assert_relative_eq!(m.volume(), 1.0 / 6.0, epsilon = 1e-9);
    }
}
