//! Simplicial P1 meshes of axis-aligned boxes, structured Haar meshes, and the
//! embedded (G inside D) multilevel hierarchy.
//!
//! Points are stored as `[f64; 2]` for both 1D and 2D meshes; in 1D the second
//! coordinate is always zero. Cells are stored as `[usize; 3]` with only the
//! first `dim + 1` entries meaningful.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const NEST_TOL: f64 = 1e-12;

/// Axis-aligned box `[lo, hi]` in one or two dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "box corners must both have length 1 or 2 (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument(format!(
                "box must satisfy lo < hi componentwise (lo {lo:?}, hi {hi:?})"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[-a, a]^dim`.
    pub fn symmetric(dim: usize, a: f64) -> Result<Self> {
        Self::new(vec![-a; dim], vec![a; dim])
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    /// Affine map of a physical coordinate onto `[0, 1]` along `axis`.
    pub fn to_unit(&self, axis: usize, x: f64) -> f64 {
        (x - self.lo[axis]) / self.side(axis)
    }

    pub fn from_unit(&self, axis: usize, t: f64) -> f64 {
        self.lo[axis] + t * self.side(axis)
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        (0..self.dim()).all(|i| p[i] >= self.lo[i] - tol && p[i] <= self.hi[i] + tol)
    }

    pub fn approx_eq(&self, other: &BoxDomain, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| {
                (self.lo[i] - other.lo[i]).abs() <= tol && (self.hi[i] - other.hi[i]).abs() <= tol
            })
    }
}

/// Direction of the diagonal used to split each square of a 2D structured
/// mesh. `Right` joins the lower-left and upper-right corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagonal {
    Left,
    Right,
}

impl Diagonal {
    pub fn flipped(self) -> Self {
        match self {
            Diagonal::Left => Diagonal::Right,
            Diagonal::Right => Diagonal::Left,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    dim: usize,
    domain: BoxDomain,
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    interior_index: Vec<Option<usize>>,
    n_interior: usize,
}

impl SimplicialMesh {
    /// Builds a mesh from explicit vertices and cells. Cells are reoriented to
    /// positive signed volume; boundary vertices are those on the box boundary.
    pub fn from_parts(domain: BoxDomain, vertices: Vec<Point>, mut cells: Vec<[usize; 3]>) -> Result<Self> {
        let dim = domain.dim();
        for (c, cell) in cells.iter_mut().enumerate() {
            for &v in &cell[..=dim] {
                if v >= vertices.len() {
                    return Err(Error::IndexOutOfRange { index: v, len: vertices.len() });
                }
            }
            let vol = signed_volume(dim, &cell_points(dim, &vertices, cell));
            if vol.abs() <= 1e-300 {
                return Err(Error::DegenerateCell { cell: c, volume: vol });
            }
            if vol < 0.0 {
                cell.swap(0, 1);
            }
        }
        let scale = (0..dim).map(|i| domain.side(i)).fold(0.0, f64::max);
        let boundary: Vec<bool> = vertices
            .iter()
            .map(|p| {
                (0..dim).any(|i| {
                    (p[i] - domain.lo()[i]).abs() <= NEST_TOL * scale
                        || (p[i] - domain.hi()[i]).abs() <= NEST_TOL * scale
                })
            })
            .collect();
        let mut n_interior = 0;
        let interior_index = boundary
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    n_interior += 1;
                    Some(n_interior - 1)
                }
            })
            .collect();
        Ok(Self { dim, domain, vertices, cells, boundary, interior_index, n_interior })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Vertex indices of cell `c` (length `dim + 1`).
    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c][..=self.dim]
    }

    pub fn cell_points(&self, c: usize) -> [Point; 3] {
        cell_points(self.dim, &self.vertices, &self.cells[c])
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        signed_volume(self.dim, &self.cell_points(c))
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    pub fn cell_centroid(&self, c: usize) -> Point {
        centroid(self.dim, &self.cell_points(c))
    }

    /// Barycentric coordinates of `p` with respect to cell `c`.
    pub fn barycentric(&self, c: usize, p: Point) -> [f64; 3] {
        barycentric(self.dim, &self.cell_points(c), p)
    }

    /// Axis-aligned bounding box of cell `c` as `(lo, hi)`.
    pub fn cell_bounds(&self, c: usize) -> (Point, Point) {
        bounds(self.dim, &self.cell_points(c))
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Index of vertex `v` among the interior (free) degrees of freedom.
    pub fn interior_index(&self, v: usize) -> Option<usize> {
        self.interior_index[v]
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Largest edge length over all cells.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for c in 0..self.n_cells() {
            let pts = self.cell_points(c);
            for a in 0..=self.dim {
                for b in a + 1..=self.dim {
                    h = h.max(dist(pts[a], pts[b]));
                }
            }
        }
        h
    }

    /// Writes the plain-text format: a `dim n_vertices n_cells` header, one
    /// line of coordinates per vertex, then one line of vertex indices per cell.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {} {}", self.dim, self.n_vertices(), self.n_cells())?;
        for p in &self.vertices {
            let coords: Vec<String> = p[..self.dim].iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        for c in 0..self.n_cells() {
            let idx: Vec<String> = self.cell(c).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", idx.join(" "))?;
        }
        Ok(())
    }
}

pub(crate) fn cell_points(dim: usize, vertices: &[Point], cell: &[usize; 3]) -> [Point; 3] {
    let mut pts = [[0.0; 2]; 3];
    for (k, p) in pts.iter_mut().enumerate().take(dim + 1) {
        *p = vertices[cell[k]];
    }
    pts
}

pub fn signed_volume(dim: usize, pts: &[Point; 3]) -> f64 {
    match dim {
        1 => pts[1][0] - pts[0][0],
        _ => {
            0.5 * ((pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
                - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]))
        }
    }
}

pub fn centroid(dim: usize, pts: &[Point; 3]) -> Point {
    let mut c = [0.0; 2];
    for p in &pts[..=dim] {
        c[0] += p[0];
        c[1] += p[1];
    }
    let k = (dim + 1) as f64;
    [c[0] / k, c[1] / k]
}

pub fn barycentric(dim: usize, pts: &[Point; 3], p: Point) -> [f64; 3] {
    match dim {
        1 => {
            let t = (p[0] - pts[0][0]) / (pts[1][0] - pts[0][0]);
            [1.0 - t, t, 0.0]
        }
        _ => {
            let det = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
                - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]);
            let l1 = ((p[0] - pts[0][0]) * (pts[2][1] - pts[0][1])
                - (pts[2][0] - pts[0][0]) * (p[1] - pts[0][1]))
                / det;
            let l2 = ((pts[1][0] - pts[0][0]) * (p[1] - pts[0][1])
                - (p[0] - pts[0][0]) * (pts[1][1] - pts[0][1]))
                / det;
            [1.0 - l1 - l2, l1, l2]
        }
    }
}

pub(crate) fn bounds(dim: usize, pts: &[Point; 3]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &pts[..=dim] {
        for i in 0..dim {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    if dim == 1 {
        lo[1] = 0.0;
        hi[1] = 0.0;
    }
    (lo, hi)
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform structured simplicial mesh of `domain` with `n_per_axis` intervals
/// per axis. In 2D each square is split into two triangles along `diagonal`.
pub fn build_uniform_mesh(domain: &BoxDomain, n_per_axis: usize, diagonal: Diagonal) -> Result<SimplicialMesh> {
    if n_per_axis == 0 {
        return Err(Error::InvalidArgument("n_per_axis must be at least 1".into()));
    }
    let n = n_per_axis;
    let coord = |axis: usize, i: usize| {
        if i == n {
            domain.hi()[axis]
        } else {
            domain.lo()[axis] + domain.side(axis) * i as f64 / n as f64
        }
    };
    match domain.dim() {
        1 => {
            let vertices = (0..=n).map(|i| [coord(0, i), 0.0]).collect();
            let cells = (0..n).map(|i| [i, i + 1, 0]).collect();
            SimplicialMesh::from_parts(domain.clone(), vertices, cells)
        }
        _ => {
            let id = |i: usize, j: usize| j * (n + 1) + i;
            let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
            for j in 0..=n {
                for i in 0..=n {
                    vertices.push([coord(0, i), coord(1, j)]);
                }
            }
            let mut cells = Vec::with_capacity(2 * n * n);
            for j in 0..n {
                for i in 0..n {
                    let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                    match diagonal {
                        Diagonal::Right => {
                            cells.push([v00, v10, v11]);
                            cells.push([v00, v11, v01]);
                        }
                        Diagonal::Left => {
                            cells.push([v00, v10, v01]);
                            cells.push([v10, v11, v01]);
                        }
                    }
                }
            }
            SimplicialMesh::from_parts(domain.clone(), vertices, cells)
        }
    }
}

/// Uniform partition of a box into `2^(level+1)` cells per axis. Cells are
/// half-open `[a, b)` except the last one along each axis, which is closed.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarMesh {
    level: i32,
    domain: BoxDomain,
}

impl HaarMesh {
    pub fn new(level: i32, domain: BoxDomain) -> Result<Self> {
        if level < -1 {
            return Err(Error::InvalidArgument(format!("Haar level must be >= -1 (got {level})")));
        }
        if level > 24 {
            return Err(Error::InvalidArgument(format!("Haar level {level} is too large")));
        }
        Ok(Self { level, domain })
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn cells_per_axis(&self) -> usize {
        1usize << (self.level + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis().pow(self.dim() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.domain.volume() / self.n_cells() as f64
    }

    /// Per-axis cell index of a physical coordinate, clamped on the upper face.
    pub fn axis_index(&self, axis: usize, x: f64) -> usize {
        let n = self.cells_per_axis();
        let t = self.domain.to_unit(axis, x);
        let i = (t * n as f64).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(n - 1)
        }
    }

    /// Lexicographic index (first axis most significant) of the cell containing `point`.
    pub fn cell_index(&self, point: &[f64]) -> Result<usize> {
        let d = self.dim();
        if point.len() < d || !self.domain.contains(point, 0.0) {
            return Err(Error::PointOutsideBox {
                point: point.to_vec(),
                lo: self.domain.lo().to_vec(),
                hi: self.domain.hi().to_vec(),
            });
        }
        let mut idx = [0usize; 2];
        for (axis, slot) in idx.iter_mut().enumerate().take(d) {
            *slot = self.axis_index(axis, point[axis]);
        }
        Ok(self.index_from_axes(&idx[..d]))
    }

    pub fn index_from_axes(&self, axes: &[usize]) -> usize {
        let n = self.cells_per_axis();
        axes.iter().fold(0, |k, &i| k * n + i)
    }

    pub fn axes_from_index(&self, k: usize) -> [usize; 2] {
        let n = self.cells_per_axis();
        match self.dim() {
            1 => [k, 0],
            _ => [k / n, k % n],
        }
    }

    /// Physical bounds `(lo, hi)` of cell `k`.
    pub fn cell_bounds(&self, k: usize) -> Result<(Point, Point)> {
        if k >= self.n_cells() {
            return Err(Error::IndexOutOfRange { index: k, len: self.n_cells() });
        }
        let axes = self.axes_from_index(k);
        let n = self.cells_per_axis() as f64;
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for axis in 0..self.dim() {
            lo[axis] = self.domain.from_unit(axis, axes[axis] as f64 / n);
            hi[axis] = if axes[axis] + 1 == self.cells_per_axis() {
                self.domain.hi()[axis]
            } else {
                self.domain.from_unit(axis, (axes[axis] + 1) as f64 / n)
            };
        }
        Ok((lo, hi))
    }

    pub fn cell_midpoint(&self, k: usize) -> Result<Point> {
        let (lo, hi) = self.cell_bounds(k)?;
        let mut m = [0.0; 2];
        for axis in 0..self.dim() {
            m[axis] = 0.5 * (lo[axis] + hi[axis]);
        }
        Ok(m)
    }

    /// Midpoint of cell `k` in unit-box coordinates.
    pub fn unit_midpoint(&self, k: usize) -> [f64; 2] {
        let axes = self.axes_from_index(k);
        let n = self.cells_per_axis() as f64;
        let mut m = [0.0; 2];
        for axis in 0..self.dim() {
            m[axis] = (axes[axis] as f64 + 0.5) / n;
        }
        m
    }

    /// Inclusive per-axis index ranges of the cells overlapping `[lo, hi]`.
    pub fn overlapping_range(&self, lo: Point, hi: Point) -> [(usize, usize); 2] {
        let mut r = [(0, 0); 2];
        for axis in 0..self.dim() {
            r[axis] = (self.axis_index(axis, lo[axis]), self.axis_index(axis, hi[axis]));
        }
        r
    }
}

/// Uniform bin grid over the bounding boxes of mesh cells, used to find
/// candidate cells overlapping a query box.
#[derive(Clone, Debug)]
pub struct CellLocator {
    dim: usize,
    lo: Point,
    width: Point,
    bins_per_axis: usize,
    bins: Vec<Vec<usize>>,
}

impl CellLocator {
    pub fn new(mesh: &SimplicialMesh) -> Self {
        let dim = mesh.dim();
        let n_cells = mesh.n_cells().max(1);
        let bins_per_axis = match dim {
            1 => n_cells,
            _ => ((n_cells as f64).sqrt().ceil() as usize).max(1),
        };
        let domain = mesh.domain();
        let mut lo = [0.0; 2];
        let mut width = [1.0; 2];
        for axis in 0..dim {
            lo[axis] = domain.lo()[axis];
            width[axis] = domain.side(axis) / bins_per_axis as f64;
        }
        let mut locator = Self {
            dim,
            lo,
            width,
            bins_per_axis,
            bins: vec![Vec::new(); bins_per_axis.pow(dim as u32)],
        };
        for c in 0..mesh.n_cells() {
            let (clo, chi) = mesh.cell_bounds(c);
            let range = locator.range(clo, chi);
            for i in range[0].0..=range[0].1 {
                if dim == 1 {
                    locator.bins[i].push(c);
                } else {
                    for j in range[1].0..=range[1].1 {
                        locator.bins[i * bins_per_axis + j].push(c);
                    }
                }
            }
        }
        locator
    }

    fn range(&self, lo: Point, hi: Point) -> [(usize, usize); 2] {
        let n = self.bins_per_axis;
        let idx = |axis: usize, x: f64, pad: f64| {
            let t = ((x - self.lo[axis]) / self.width[axis] + pad).floor();
            if t < 0.0 {
                0
            } else {
                (t as usize).min(n - 1)
            }
        };
        let mut r = [(0, 0); 2];
        for axis in 0..self.dim {
            r[axis] = (idx(axis, lo[axis], -1e-9), idx(axis, hi[axis], 1e-9));
        }
        r
    }

    /// Sorted, deduplicated candidate cells whose bins overlap `[lo, hi]`.
    pub fn candidates(&self, lo: Point, hi: Point) -> Vec<usize> {
        let r = self.range(lo, hi);
        let mut out = Vec::new();
        for i in r[0].0..=r[0].1 {
            if self.dim == 1 {
                out.extend_from_slice(&self.bins[i]);
            } else {
                for j in r[1].0..=r[1].1 {
                    out.extend_from_slice(&self.bins[i * self.bins_per_axis + j]);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// A cell containing `p` (barycentric tolerance `tol`), if any.
    pub fn locate(&self, mesh: &SimplicialMesh, p: Point, tol: f64) -> Option<usize> {
        self.candidates(p, p).into_iter().find(|&c| {
            let lam = mesh.barycentric(c, p);
            lam[..=self.dim].iter().all(|&l| l >= -tol)
        })
    }
}

/// One level of the embedded hierarchy: a mesh of the inner domain G nested in
/// a mesh of the box D, plus the Haar mesh of D.
#[derive(Clone, Debug)]
pub struct HierarchyLevel {
    pub index: usize,
    pub g_mesh: SimplicialMesh,
    pub d_mesh: SimplicialMesh,
    pub haar: HaarMesh,
    /// `injection[v]` is the D-mesh vertex coinciding with G-mesh vertex `v`.
    pub injection: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    levels: Vec<HierarchyLevel>,
}

impl MeshHierarchy {
    /// Validates nesting of every G mesh in its D mesh and monotone Haar levels.
    pub fn new(levels: Vec<(usize, SimplicialMesh, SimplicialMesh, HaarMesh)>) -> Result<Self> {
        let mut out: Vec<HierarchyLevel> = Vec::with_capacity(levels.len());
        for (index, g_mesh, d_mesh, haar) in levels {
            if !haar.domain().approx_eq(d_mesh.domain(), 1e-12) {
                return Err(Error::BoxMismatch);
            }
            if let Some(prev) = out.last() {
                if prev.haar.level() > haar.level() {
                    return Err(Error::InvalidArgument(format!(
                        "Haar levels must be non-decreasing ({} then {})",
                        prev.haar.level(),
                        haar.level()
                    )));
                }
            }
            let injection = nested_injection(&g_mesh, &d_mesh)?;
            out.push(HierarchyLevel { index, g_mesh, d_mesh, haar, injection });
        }
        Ok(Self { levels: out })
    }

    /// Uniform embedded hierarchy: on level `l` the G mesh has `2^(l+1)` cells
    /// per axis and the D mesh has the same spacing, so that G is nested in D.
    /// The split diagonal alternates with the level, so consecutive levels are
    /// not nested in each other.
    pub fn embedded_uniform(
        g_box: &BoxDomain,
        d_box: &BoxDomain,
        levels: &[usize],
        haar_levels: &[i32],
    ) -> Result<Self> {
        if levels.len() != haar_levels.len() {
            return Err(Error::LengthMismatch { expected: levels.len(), actual: haar_levels.len() });
        }
        if g_box.dim() != d_box.dim() {
            return Err(Error::BoxMismatch);
        }
        let dim = g_box.dim();
        let mut parts = Vec::with_capacity(levels.len());
        for (&l, &haar_level) in levels.iter().zip(haar_levels) {
            let n_g = 1usize << (l + 1);
            let spacing = g_box.side(0) / n_g as f64;
            let n_d = aligned_count(d_box.side(0), spacing)?;
            for axis in 0..dim {
                aligned_count(g_box.side(axis), spacing)?;
                aligned_count(g_box.lo()[axis] - d_box.lo()[axis], spacing)?;
                if aligned_count(d_box.side(axis), spacing)? != n_d {
                    return Err(Error::InvalidArgument("boxes must be square for the uniform hierarchy".into()));
                }
            }
            let diagonal = if l % 2 == 0 { Diagonal::Right } else { Diagonal::Left };
            let g_mesh = build_uniform_mesh(g_box, n_g, diagonal)?;
            let d_mesh = build_uniform_mesh(d_box, n_d, diagonal)?;
            let haar = HaarMesh::new(haar_level, d_box.clone())?;
            parts.push((l, g_mesh, d_mesh, haar));
        }
        Self::new(parts)
    }

    pub fn levels(&self) -> &[HierarchyLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

fn aligned_count(length: f64, spacing: f64) -> Result<usize> {
    let r = length / spacing;
    let n = r.round();
    if (r - n).abs() > 1e-9 || n < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "length {length} is not a multiple of the mesh spacing {spacing}"
        )));
    }
    Ok(n as usize)
}

/// Checks that `inner` is nested in `outer` (vertex inclusion, and every inner
/// cell is a union of outer cells) and returns the vertex injection map.
pub fn nested_injection(inner: &SimplicialMesh, outer: &SimplicialMesh) -> Result<Vec<usize>> {
    if inner.dim() != outer.dim() {
        return Err(Error::NotNested("dimension mismatch".into()));
    }
    let dim = inner.dim();
    let locator = CellLocator::new(outer);
    let mut injection = Vec::with_capacity(inner.n_vertices());
    for v in 0..inner.n_vertices() {
        let p = inner.vertex(v);
        let found = locator
            .candidates(p, p)
            .into_iter()
            .flat_map(|c| outer.cell(c).to_vec())
            .find(|&w| {
                let q = outer.vertex(w);
                (0..dim).all(|i| (p[i] - q[i]).abs() <= NEST_TOL)
            });
        match found {
            Some(w) => injection.push(w),
            None => return Err(Error::NotNested(format!("vertex {v} at {p:?} is not an outer vertex"))),
        }
    }
    for c in 0..inner.n_cells() {
        let (lo, hi) = inner.cell_bounds(c);
        let vol = inner.cell_volume(c);
        let covered: f64 = locator
            .candidates(lo, hi)
            .into_iter()
            .filter(|&e| {
                let lam = inner.barycentric(c, outer.cell_centroid(e));
                lam[..=dim].iter().all(|&l| l > -NEST_TOL)
            })
            .map(|e| {
                let pts = outer.cell_points(e);
                let inside = pts[..=dim].iter().all(|&q| {
                    let lam = inner.barycentric(c, q);
                    lam[..=dim].iter().all(|&l| l > -1e-10)
                });
                if inside {
                    outer.cell_volume(e)
                } else {
                    f64::NAN
                }
            })
            .sum();
        if !((covered - vol).abs() <= 1e-12 * vol.max(1e-300) * 10.0) {
            return Err(Error::NotNested(format!("inner cell {c} is not a union of outer cells")));
        }
    }
    Ok(injection)
}
