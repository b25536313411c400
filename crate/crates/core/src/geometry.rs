//! Closed triangulated surfaces, scatterer generators and boundary perturbations.
//!
//! Meshes are validated on construction: every edge is shared by exactly two
//! triangles with opposite orientation, every triangle has positive area and
//! the enclosed signed volume is positive (outward normals).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::vec3::{self, Vec3};

/// Triangles smaller than this are rejected.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("triangle {0} references vertex {1} but the mesh has {2} vertices")]
    BadIndex(usize, usize, usize),
    #[error("triangle {index} is degenerate (area {area:e})")]
    Degenerate { index: usize, area: f64 },
    #[error("edge ({0}, {1}) is not shared by exactly two oppositely oriented triangles")]
    NonManifold(usize, usize),
    #[error("enclosed signed volume {0:e} is not positive (normals point inward)")]
    Inverted(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected mesh edge with its two adjacent triangles.
///
/// `tris[0]` is the lower triangle index. `local[k]` is the local index, in
/// `tris[k]`, of the vertex opposite the edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub v: [usize; 2],
    pub tris: [usize; 2],
    pub local: [usize; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::BadIndex(t, v, nv));
                }
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let n = vec3::cross(vec3::sub(b, a), vec3::sub(c, a));
            let area = 0.5 * vec3::norm(n);
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(MeshError::Degenerate { index: t, area });
            }
            normals.push(vec3::scale(0.5 / area, n));
            areas.push(area);
        }
        let mesh = SurfaceMesh { vertices, triangles, normals, areas };
        mesh.check_manifold()?;
        let vol = mesh.signed_volume();
        if !(vol > 0.0) {
            return Err(MeshError::Inverted(vol));
        }
        Ok(mesh)
    }

    fn check_manifold(&self) -> Result<(), MeshError> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 || directed.get(&(b, a)) != Some(&1) {
                return Err(MeshError::NonManifold(a.min(b), a.max(b)));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_vertices(t);
        vec3::scale(1.0 / 3.0, vec3::add(vec3::add(a, b), c))
    }

    pub fn circumdiameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        let (la, lb, lc) = (vec3::dist(b, c), vec3::dist(a, c), vec3::dist(a, b));
        la * lb * lc / (2.0 * self.areas[t])
    }

    /// Largest distance between two vertices of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        vec3::dist(b, c).max(vec3::dist(a, c)).max(vec3::dist(a, b))
    }

    pub fn surface_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|i| self.vertices[i]);
                vec3::dot(a, vec3::cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Edges sorted by `(min vertex, max vertex)`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut map: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push((t, k));
            }
        }
        let mut edges: Vec<Edge> = map
            .into_iter()
            .map(|(v, mut adj)| {
                adj.sort_unstable();
                Edge {
                    v: [v.0, v.1],
                    tris: [adj[0].0, adj[1].0],
                    local: [adj[0].1, adj[1].1],
                }
            })
            .collect();
        edges.sort_unstable_by_key(|e| (e.v[0], e.v[1]));
        edges
    }

    pub fn num_edges(&self) -> usize {
        3 * self.triangles.len() / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![[0.0; 3]; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                acc[v] = vec3::axpy(acc[v], self.areas[t], self.normals[t]);
            }
        }
        acc.into_iter().map(vec3::normalize).collect()
    }

    /// Triangle-to-vertex incidence: for each vertex the triangles touching it.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    /// Same connectivity, new vertex coordinates.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::Parameter(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        SurfaceMesh::new(vertices, self.triangles.clone())
    }

    /// Writes the ASCII `EMESH 1` format.
    pub fn write_emesh<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "EMESH 1")?;
        writeln!(w, "{} {}", self.vertices.len(), self.triangles.len())?;
        for v in &self.vertices {
            writeln!(w, "{:e} {:e} {:e}", v[0], v[1], v[2])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn read_emesh<R: BufRead>(r: R) -> Result<Self, MeshError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String), MeshError> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(MeshError::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
            }
        };
        let (line, magic) = next("header")?;
        if magic.trim() != "EMESH 1" {
            return Err(MeshError::Parse { line, msg: format!("bad header {magic:?}") });
        }
        let (line, counts) = next("counts")?;
        let counts = parse_fields::<usize>(&counts, 2, line)?;
        let (nv, nt) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, l) = next("vertex")?;
            let f = parse_fields::<f64>(&l, 3, line)?;
            vertices.push([f[0], f[1], f[2]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, l) = next("triangle")?;
            let f = parse_fields::<usize>(&l, 3, line)?;
            triangles.push([f[0], f[1], f[2]]);
        }
        SurfaceMesh::new(vertices, triangles)
    }
}

fn parse_fields<T: std::str::FromStr>(s: &str, n: usize, line: usize) -> Result<Vec<T>, MeshError> {
    let out: Vec<T> = s
        .split_whitespace()
        .map(|f| f.parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| MeshError::Parse { line, msg: format!("cannot parse {s:?}") })?;
    if out.len() != n {
        return Err(MeshError::Parse { line, msg: format!("expected {n} fields, got {}", out.len()) });
    }
    Ok(out)
}

/// Mesh width: maximal triangle circumdiameter.
pub fn mesh_width(mesh: &SurfaceMesh) -> f64 {
    (0..mesh.num_triangles()).map(|t| mesh.circumdiameter(t)).fold(0.0, f64::max)
}

/// Points per wavelength, `r = 2π / (h k0)`.
pub fn precision(h: f64, k0: f64) -> f64 {
    2.0 * PI / (h * k0)
}

/// Merges points by quantized coordinates; returns the index of `p`.
struct PointPool {
    points: Vec<Vec3>,
    index: HashMap<[i64; 3], usize>,
}

impl PointPool {
    fn new() -> Self {
        PointPool { points: Vec::new(), index: HashMap::new() }
    }

    fn insert(&mut self, p: Vec3) -> usize {
        let key = p.map(|c| (c * 1e9).round() as i64);
        let points = &mut self.points;
        *self.index.entry(key).or_insert_with(|| {
            points.push(p);
            points.len() - 1
        })
    }
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let v = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v.into_iter().map(vec3::normalize).collect(), f)
}

/// Great-circle interpolation between unit vectors.
fn slerp(p: Vec3, q: Vec3, u: f64) -> Vec3 {
    let w = vec3::dot(p, q).clamp(-1.0, 1.0).acos();
    if w < 1e-15 {
        return p;
    }
    let s = w.sin();
    vec3::add(vec3::scale(((1.0 - u) * w).sin() / s, p), vec3::scale((u * w).sin() / s, q))
}

/// Unit sphere from an icosahedron with every face split into `n²` triangles.
///
/// Points are placed along great circles, row by row from the first corner of
/// each face, which keeps the triangles closer to equilateral than projecting
/// a flat subdivision. `n = 2^R` gives the triangle count of `R` rounds of
/// 4-split refinement.
pub fn geodesic_sphere(n: usize) -> SurfaceMesh {
    assert!(n >= 1);
    let (iv, faces) = icosahedron();
    let mut pool = PointPool::new();
    let mut triangles = Vec::with_capacity(20 * n * n);
    let nf = n as f64;
    for f in &faces {
        let [a, b, c] = f.map(|i| iv[i]);
        let mut idx = vec![vec![0usize; n + 1]; n + 1];
        for i in 0..=n {
            for j in 0..=(n - i) {
                let s = i + j;
                let p = if s == 0 {
                    a
                } else {
                    let u = s as f64 / nf;
                    slerp(slerp(a, b, u), slerp(a, c, u), j as f64 / s as f64)
                };
                idx[i][j] = pool.insert(p);
            }
        }
        for i in 0..n {
            for j in 0..(n - i) {
                triangles.push([idx[i][j], idx[i + 1][j], idx[i][j + 1]]);
                if j + 1 < n - i {
                    triangles.push([idx[i + 1][j], idx[i + 1][j + 1], idx[i][j + 1]]);
                }
            }
        }
    }
    let vertices = pool.points.into_iter().map(vec3::normalize).collect();
    SurfaceMesh::new(vertices, triangles).expect("geodesic sphere is a valid mesh")
}

/// Unit-radius icosphere with `20·4^refinement` triangles.
pub fn generate_sphere(refinement: u32) -> SurfaceMesh {
    geodesic_sphere(1usize << refinement)
}

/// Widest allowed ratio of mesh width to the requested `target_h`.
pub const MESH_WIDTH_SLACK: f64 = 1.5;

/// Nominal body of the kite experiments: the unit sphere, meshed with the
/// coarsest geodesic subdivision whose width is at most
/// [`MESH_WIDTH_SLACK`]`·target_h`. The kite shape arises from [`KiteField`].
pub fn generate_kite(target_h: f64) -> Result<SurfaceMesh, MeshError> {
    if !(target_h > 0.0 && target_h.is_finite()) {
        return Err(MeshError::Parameter(format!("target_h must be positive, got {target_h}")));
    }
    // Largest circumdiameter of the frequency-n geodesic sphere is about 1.48/n.
    let mut n = ((1.2 / (MESH_WIDTH_SLACK * target_h)).floor() as usize).max(1);
    loop {
        if n > 400 {
            return Err(MeshError::Parameter(format!("target_h {target_h} too small")));
        }
        let mesh = geodesic_sphere(n);
        if mesh_width(&mesh) <= MESH_WIDTH_SLACK * target_h {
            return Ok(mesh);
        }
        n += 1;
    }
}

/// Boundary of the cube `[-0.5, 0.5]³` with the octant `[-0.5, 0]³` removed,
/// with every face square of side 0.5 split into `n × n` subsquares of two
/// triangles each, where `n` is the smallest integer with width ≤ `target_h`.
pub fn generate_fichera(target_h: f64) -> Result<SurfaceMesh, MeshError> {
    if !(target_h > 0.0 && target_h.is_finite()) {
        return Err(MeshError::Parameter(format!("target_h must be positive, got {target_h}")));
    }
    let n = ((0.5 * 2f64.sqrt() / target_h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok(fichera_with_subdivision(n))
}

/// Fichera surface with `n × n` subsquares per face square (`48 n²` triangles).
pub fn fichera_with_subdivision(n: usize) -> SurfaceMesh {
    // Octant cells of side 0.5 indexed by (i, j, k) ∈ {0,1}³; cell (0,0,0) removed.
    let filled = |c: [i64; 3]| -> bool {
        c.iter().all(|&x| (0..2).contains(&x)) && c != [0, 0, 0]
    };
    let mut pool = PointPool::new();
    let mut triangles = Vec::new();
    let nf = n as f64;
    for i in 0..2i64 {
        for j in 0..2i64 {
            for k in 0..2i64 {
                let c = [i, j, k];
                if !filled(c) {
                    continue;
                }
                for axis in 0..3 {
                    for side in [-1i64, 1] {
                        let mut nb = c;
                        nb[axis] += side;
                        if filled(nb) {
                            continue;
                        }
                        // Face of cell c orthogonal to `axis` on `side`.
                        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
                        let lo = c.map(|x| -0.5 + 0.5 * x as f64);
                        let mut origin = lo;
                        if side > 0 {
                            origin[axis] += 0.5;
                        }
                        let point = |a: usize, b: usize| -> Vec3 {
                            let mut p = origin;
                            p[u] += 0.5 * a as f64 / nf;
                            p[w] += 0.5 * b as f64 / nf;
                            p
                        };
                        for a in 0..n {
                            for b in 0..n {
                                let p00 = pool.insert(point(a, b));
                                let p10 = pool.insert(point(a + 1, b));
                                let p01 = pool.insert(point(a, b + 1));
                                let p11 = pool.insert(point(a + 1, b + 1));
                                // e_u × e_w = e_axis: counter-clockwise for outward +axis.
                                if side > 0 {
                                    triangles.push([p00, p10, p11]);
                                    triangles.push([p00, p11, p01]);
                                } else {
                                    triangles.push([p00, p11, p10]);
                                    triangles.push([p00, p01, p11]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    SurfaceMesh::new(pool.points, triangles).expect("Fichera surface is a valid mesh")
}

/// Velocity field `x ↦ v(x)` on the boundary.
pub trait PerturbationField: Sync {
    fn eval(&self, x: Vec3) -> Vec3;
}

impl<F: Fn(Vec3) -> Vec3 + Sync> PerturbationField for F {
    fn eval(&self, x: Vec3) -> Vec3 {
        self(x)
    }
}

/// Deterministic kite deformation field
/// `v(x) = ((z²−1)(cos θ − 1), ¼ sin θ (1 − z²), 0)`, `θ = atan2(y, x)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct KiteField;

impl PerturbationField for KiteField {
    fn eval(&self, x: Vec3) -> Vec3 {
        let theta = x[1].atan2(x[0]);
        let s = x[2] * x[2] - 1.0;
        [s * (theta.cos() - 1.0), -0.25 * theta.sin() * s, 0.0]
    }
}

/// Rigid translation `v ≡ τ`.
#[derive(Clone, Copy, Debug)]
pub struct Translation(pub Vec3);

impl PerturbationField for Translation {
    fn eval(&self, _x: Vec3) -> Vec3 {
        self.0
    }
}

/// Sine bump `|sin(qπ(x − x0))|` on `[x0, x0 + 1/q)`, zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineBump {
    pub q: f64,
    pub x0: f64,
}

impl SineBump {
    pub fn eval(&self, x: f64) -> f64 {
        let s = x - self.x0;
        if s < 0.0 || s > 1.0 / self.q {
            0.0
        } else {
            (self.q * PI * s).sin().abs()
        }
    }
}

/// The six bumps tiling `[0, 0.5)`: two each for `q = 2, 4, 6`, packed left to right.
pub fn fichera_bumps() -> [SineBump; 6] {
    let qs = [2.0, 2.0, 4.0, 4.0, 6.0, 6.0];
    let scale = 0.5 / qs.iter().map(|q| 1.0 / q).sum::<f64>();
    let mut x0 = 0.0;
    qs.map(|q| {
        // Half periods 1/q sum to 11/6; compress them uniformly to tile [0, 0.5).
        let q = q / scale;
        let b = SineBump { q, x0 };
        x0 += 1.0 / q;
        b
    })
}

/// `Υ_i(x) Υ_j(y) ê_z` on the face `z = 0.5`, zero elsewhere.
#[derive(Clone, Copy, Debug)]
pub struct SplineMode {
    pub i: SineBump,
    pub j: SineBump,
}

impl SplineMode {
    pub fn amplitude(&self, x: Vec3) -> f64 {
        if (x[2] - 0.5).abs() > 1e-9 {
            return 0.0;
        }
        self.i.eval(x[0]) * self.j.eval(x[1])
    }
}

impl PerturbationField for SplineMode {
    fn eval(&self, x: Vec3) -> Vec3 {
        [0.0, 0.0, self.amplitude(x)]
    }
}

/// Linear combination `Σ c_m v_m`.
pub struct Combination<'a> {
    pub terms: Vec<(f64, &'a dyn PerturbationField)>,
}

impl PerturbationField for Combination<'_> {
    fn eval(&self, x: Vec3) -> Vec3 {
        self.terms.iter().fold([0.0; 3], |acc, (c, f)| vec3::axpy(acc, *c, f.eval(x)))
    }
}

/// `v` evaluated at the mesh vertices.
pub fn sample_field(mesh: &SurfaceMesh, v: &dyn PerturbationField) -> Vec<Vec3> {
    mesh.vertices().iter().map(|&x| v.eval(x)).collect()
}

/// Moves every vertex `x` to `x + t·v(x)`.
pub fn perturb_mesh(mesh: &SurfaceMesh, v: &dyn PerturbationField, t: f64) -> Result<SurfaceMesh, MeshError> {
    perturb_with_displacements(mesh, &sample_field(mesh, v), t)
}

/// Moves vertex `i` to `x_i + t·d_i`.
pub fn perturb_with_displacements(mesh: &SurfaceMesh, d: &[Vec3], t: f64) -> Result<SurfaceMesh, MeshError> {
    let vertices = mesh.vertices().iter().zip(d).map(|(&x, &di)| vec3::axpy(x, t, di)).collect();
    mesh.with_vertices(vertices)
}

/// Triangles whose normal turned by more than 90° relative to `reference`.
pub fn inverted_triangles(reference: &SurfaceMesh, moved: &SurfaceMesh) -> Vec<usize> {
    (0..reference.num_triangles())
        .filter(|&t| vec3::dot(reference.normals()[t], moved.normals()[t]) <= 0.0)
        .collect()
}

/// Nested sequence of meshes of one shape.
#[derive(Clone, Debug)]
pub struct LevelHierarchy {
    pub meshes: Vec<SurfaceMesh>,
    pub widths: Vec<f64>,
    /// Geometric mean refinement ratio `h_{l-1}/h_l`.
    pub q: f64,
    pub base_level: usize,
}

impl LevelHierarchy {
    pub fn new(meshes: Vec<SurfaceMesh>, base_level: usize) -> Result<Self, MeshError> {
        if meshes.is_empty() {
            return Err(MeshError::Parameter("empty hierarchy".into()));
        }
        let widths: Vec<f64> = meshes.iter().map(mesh_width).collect();
        if widths.windows(2).any(|w| w[1] >= w[0]) {
            return Err(MeshError::Parameter(format!("mesh widths not decreasing: {widths:?}")));
        }
        let q = if widths.len() > 1 {
            (widths[0] / widths[widths.len() - 1]).powf(1.0 / (widths.len() - 1) as f64)
        } else {
            1.0
        };
        Ok(LevelHierarchy { meshes, widths, q, base_level })
    }

    /// Meshes produced by `generator` at `h = λ/r` for each precision `r`.
    pub fn from_precisions(
        precisions: &[f64],
        k0: f64,
        base_level: usize,
        generator: impl Fn(f64) -> Result<SurfaceMesh, MeshError>,
    ) -> Result<Self, MeshError> {
        let lambda = 2.0 * PI / k0;
        let meshes = precisions.iter().map(|&r| generator(lambda / r)).collect::<Result<Vec<_>, _>>()?;
        Self::new(meshes, base_level)
    }

    pub fn levels(&self) -> usize {
        self.meshes.len()
    }
}

/// Smallest sphere refinement with mesh width at most `h`.
pub fn sphere_refinement_for(h: f64) -> u32 {
    (0..12).find(|&r| mesh_width(&generate_sphere(r)) <= h).unwrap_or(12)
}
