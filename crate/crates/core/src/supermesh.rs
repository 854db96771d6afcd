//! Common refinements of a FEM mesh with a Haar mesh (two-way) and of two FEM
//! meshes with a Haar mesh (three-way).
//!
//! Cells are produced by convex clipping: each FEM simplex is intersected with
//! the candidate Haar cells found from its bounding box by index arithmetic,
//! and in the three-way case first with the overlapping coarse simplices.
//! Every output cell is a simplex stored as independent coordinates together
//! with the indices of its parent cells.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{barycentric, bounds, centroid, signed_volume, CellLocator, HaarMesh, Point, SimplicialMesh};

/// Cells smaller than this fraction of their FEM parent are dropped.
pub const SLIVER_TOL: f64 = 1e-14;
/// Consecutive polygon vertices closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SupermeshCell {
    pub points: [Point; 3],
    /// Cell of the (fine) FEM mesh.
    pub parent_a: usize,
    /// Cell of the coarse FEM mesh, for three-way supermeshes.
    pub parent_b: Option<usize>,
    pub parent_haar: usize,
    pub volume: f64,
}

#[derive(Clone, Debug)]
pub struct Supermesh {
    dim: usize,
    n_parents: usize,
    cells: Vec<SupermeshCell>,
}

impl Supermesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_parents(&self) -> usize {
        self.n_parents
    }

    pub fn cells(&self) -> &[SupermeshCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// CSV rows `parent_a,parent_b,parent_haar,volume,x0,y0,x1,y1,x2,y2`.
    /// Missing entries (no coarse parent, third point in 1D) are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "parent_a,parent_b,parent_haar,volume,x0,y0,x1,y1,x2,y2")?;
        for c in &self.cells {
            let b = c.parent_b.map(|b| b.to_string()).unwrap_or_default();
            write!(w, "{},{},{},{:.17e}", c.parent_a, b, c.parent_haar, c.volume)?;
            for k in 0..3 {
                if k <= self.dim {
                    write!(w, ",{:.17e},{:.17e}", c.points[k][0], c.points[k][1])?;
                } else {
                    write!(w, ",,")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Keeps the part of `poly` with `normal . x <= offset` (Sutherland-Hodgman).
fn clip_half_plane(poly: &[Point], normal: Point, offset: f64) -> Vec<Point> {
    if poly.is_empty() {
        return Vec::new();
    }
    let side = |p: &Point| normal[0] * p[0] + normal[1] * p[1] - offset;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (sc, sn) = (side(&cur), side(&next));
        if sc <= 0.0 {
            out.push(cur);
        }
        if (sc < 0.0 && sn > 0.0) || (sc > 0.0 && sn < 0.0) {
            let t = sc / (sc - sn);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

fn dedup_polygon(mut poly: Vec<Point>) -> Vec<Point> {
    let close = |a: &Point, b: &Point| (a[0] - b[0]).abs() <= DEDUP_TOL && (a[1] - b[1]).abs() <= DEDUP_TOL;
    poly.dedup_by(|b, a| close(a, b));
    while poly.len() > 1 && close(&poly[0], &poly[poly.len() - 1]) {
        poly.pop();
    }
    poly
}

/// Shoelace area of a polygon (positive for counter-clockwise order).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

/// Intersection of a simplex with an axis-aligned cell `[lo, hi]`.
///
/// In 1D the result is an interval given by its two end points; in 2D it is a
/// convex polygon in counter-clockwise order. Measure-zero intersections give
/// an empty vector.
pub fn clip_simplex_to_box_cell(dim: usize, simplex: &[Point; 3], lo: Point, hi: Point) -> Vec<Point> {
    if dim == 1 {
        let (a, b) = (simplex[0][0].min(simplex[1][0]), simplex[0][0].max(simplex[1][0]));
        let (l, r) = (a.max(lo[0]), b.min(hi[0]));
        return if r - l > DEDUP_TOL { vec![[l, 0.0], [r, 0.0]] } else { Vec::new() };
    }
    let mut poly: Vec<Point> = if signed_volume(2, simplex) >= 0.0 {
        simplex.to_vec()
    } else {
        vec![simplex[0], simplex[2], simplex[1]]
    };
    poly = clip_half_plane(&poly, [-1.0, 0.0], -lo[0]);
    poly = clip_half_plane(&poly, [1.0, 0.0], hi[0]);
    poly = clip_half_plane(&poly, [0.0, -1.0], -lo[1]);
    poly = clip_half_plane(&poly, [0.0, 1.0], hi[1]);
    let poly = dedup_polygon(poly);
    if poly.len() < 3 || polygon_area(&poly) <= 0.0 {
        Vec::new()
    } else {
        poly
    }
}

/// Intersection of a convex CCW polygon with a simplex (2D), or of two
/// intervals (1D).
fn clip_polygon_to_simplex(dim: usize, poly: &[Point], simplex: &[Point; 3]) -> Vec<Point> {
    if dim == 1 {
        let (a, b) = (simplex[0][0].min(simplex[1][0]), simplex[0][0].max(simplex[1][0]));
        let (l, r) = (poly[0][0].max(a), poly[1][0].min(b));
        return if r - l > DEDUP_TOL { vec![[l, 0.0], [r, 0.0]] } else { Vec::new() };
    }
    let tri: [Point; 3] = if signed_volume(2, simplex) >= 0.0 {
        *simplex
    } else {
        [simplex[0], simplex[2], simplex[1]]
    };
    let mut out = poly.to_vec();
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        // inside of a CCW edge a->b: cross(b - a, x - a) >= 0
        let normal = [b[1] - a[1], a[0] - b[0]];
        let offset = normal[0] * a[0] + normal[1] * a[1];
        out = clip_half_plane(&out, normal, offset);
    }
    let out = dedup_polygon(out);
    if out.len() < 3 || polygon_area(&out) <= 0.0 {
        Vec::new()
    } else {
        out
    }
}

/// Fan triangulation from the first vertex. In 1D an interval maps to itself.
pub fn triangulate_polygon(dim: usize, poly: &[Point]) -> Vec<[Point; 3]> {
    if poly.len() < dim + 1 {
        return Vec::new();
    }
    if dim == 1 {
        return vec![[poly[0], poly[1], [0.0; 2]]];
    }
    (1..poly.len() - 1).map(|i| [poly[0], poly[i], poly[i + 1]]).collect()
}

fn haar_candidates(haar: &HaarMesh, lo: Point, hi: Point) -> Vec<usize> {
    let r = haar.overlapping_range(lo, hi);
    let mut out = Vec::new();
    if haar.dim() == 1 {
        out.extend(r[0].0..=r[0].1);
    } else {
        for i in r[0].0..=r[0].1 {
            for j in r[1].0..=r[1].1 {
                out.push(haar.index_from_axes(&[i, j]));
            }
        }
    }
    out
}

fn split_by_haar(
    dim: usize,
    poly: &[Point],
    haar: &HaarMesh,
    min_volume: f64,
    parent_a: usize,
    parent_b: Option<usize>,
    out: &mut Vec<SupermeshCell>,
) {
    let mut pts = [[0.0; 2]; 3];
    for (k, p) in poly.iter().take(3).enumerate() {
        pts[k] = *p;
    }
    let (lo, hi) = if dim == 1 {
        ([poly[0][0], 0.0], [poly[1][0], 0.0])
    } else {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in poly {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    };
    for k in haar_candidates(haar, lo, hi) {
        let (clo, chi) = haar.cell_bounds(k).expect("candidate index in range");
        let piece = if dim == 1 {
            clip_simplex_to_box_cell(1, &pts, clo, chi)
        } else {
            let mut p = poly.to_vec();
            p = clip_half_plane(&p, [-1.0, 0.0], -clo[0]);
            p = clip_half_plane(&p, [1.0, 0.0], chi[0]);
            p = clip_half_plane(&p, [0.0, -1.0], -clo[1]);
            p = clip_half_plane(&p, [0.0, 1.0], chi[1]);
            dedup_polygon(p)
        };
        for simplex in triangulate_polygon(dim, &piece) {
            let volume = signed_volume(dim, &simplex);
            if volume > min_volume {
                out.push(SupermeshCell { points: simplex, parent_a, parent_b, parent_haar: k, volume });
            }
        }
    }
}

fn check_boxes(mesh: &SimplicialMesh, haar: &HaarMesh) -> Result<()> {
    if mesh.dim() != haar.dim() || !mesh.domain().approx_eq(haar.domain(), 1e-12) {
        return Err(Error::BoxMismatch);
    }
    Ok(())
}

/// Two-way supermesh of a FEM mesh and a Haar mesh of the same box.
pub fn build_supermesh(mesh: &SimplicialMesh, haar: &HaarMesh) -> Result<Supermesh> {
    check_boxes(mesh, haar)?;
    let dim = mesh.dim();
    let batches: Vec<Vec<SupermeshCell>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let pts = mesh.cell_points(c);
            let poly: Vec<Point> = if dim == 1 {
                vec![pts[0], pts[1]]
            } else {
                pts.to_vec()
            };
            let poly = orient_ccw(dim, poly);
            let mut out = Vec::new();
            split_by_haar(dim, &poly, haar, SLIVER_TOL * mesh.cell_volume(c), c, None, &mut out);
            out
        })
        .collect();
    Ok(Supermesh { dim, n_parents: 2, cells: batches.into_iter().flatten().collect() })
}

fn orient_ccw(dim: usize, mut poly: Vec<Point>) -> Vec<Point> {
    if dim == 1 {
        if poly[0][0] > poly[1][0] {
            poly.swap(0, 1);
        }
    } else if polygon_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Three-way supermesh of a fine FEM mesh, a coarse FEM mesh and a Haar mesh.
pub fn build_three_way_supermesh(fine: &SimplicialMesh, coarse: &SimplicialMesh, haar: &HaarMesh) -> Result<Supermesh> {
    check_boxes(fine, haar)?;
    check_boxes(coarse, haar)?;
    let dim = fine.dim();
    let locator = CellLocator::new(coarse);
    let batches: Vec<Vec<SupermeshCell>> = (0..fine.n_cells())
        .into_par_iter()
        .map(|f| {
            let pts = fine.cell_points(f);
            let poly = orient_ccw(dim, if dim == 1 { vec![pts[0], pts[1]] } else { pts.to_vec() });
            let (lo, hi) = fine.cell_bounds(f);
            let min_volume = SLIVER_TOL * fine.cell_volume(f);
            let mut out = Vec::new();
            for c in locator.candidates(lo, hi) {
                let piece = clip_polygon_to_simplex(dim, &poly, &coarse.cell_points(c));
                if piece.is_empty() {
                    continue;
                }
                let area = if dim == 1 { piece[1][0] - piece[0][0] } else { polygon_area(&piece) };
                if area <= min_volume {
                    continue;
                }
                split_by_haar(dim, &piece, haar, min_volume, f, Some(c), &mut out);
            }
            out
        })
        .collect();
    Ok(Supermesh { dim, n_parents: 3, cells: batches.into_iter().flatten().collect() })
}

/// Outcome of the supermesh validity checks.
#[derive(Clone, Debug, Default)]
pub struct SupermeshCheck {
    /// Largest relative mismatch between a parent cell volume and the summed
    /// volume of the supermesh cells mapped to it (over all parent meshes).
    pub max_partition_error: f64,
    /// Relative mismatch of the total volume against the box volume.
    pub total_volume_error: f64,
    /// Parent vertices that coincide with no supermesh vertex.
    pub missing_vertices: usize,
    /// Supermesh cells whose centroid is not inside exactly one cell of some
    /// parent, or not inside the recorded one.
    pub containment_failures: usize,
}

impl SupermeshCheck {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_partition_error <= tol
            && self.total_volume_error <= tol
            && self.missing_vertices == 0
            && self.containment_failures == 0
    }
}

/// Checks the common-refinement conditions (vertex inclusion, single-parent
/// containment) and the volume partition of every parent mesh.
pub fn check_supermesh(sm: &Supermesh, a: &SimplicialMesh, b: Option<&SimplicialMesh>, haar: &HaarMesh) -> SupermeshCheck {
    let dim = sm.dim();
    let mut report = SupermeshCheck::default();
    let box_volume = haar.domain().volume();
    report.total_volume_error = (sm.total_volume() - box_volume).abs() / box_volume;

    let mut partition = |n: usize, parent_of: &dyn Fn(&SupermeshCell) -> usize, vol_of: &dyn Fn(usize) -> f64| {
        let mut sums = vec![0.0; n];
        for c in sm.cells() {
            sums[parent_of(c)] += c.volume;
        }
        for (k, s) in sums.iter().enumerate() {
            let v = vol_of(k);
            report.max_partition_error = report.max_partition_error.max((s - v).abs() / v);
        }
    };
    partition(a.n_cells(), &|c| c.parent_a, &|k| a.cell_volume(k));
    if let Some(b) = b {
        partition(b.n_cells(), &|c| c.parent_b.unwrap_or(usize::MAX).min(b.n_cells() - 1), &|k| b.cell_volume(k));
    }
    partition(haar.n_cells(), &|c| c.parent_haar, &|_| haar.cell_volume());

    // vertex inclusion
    let mut verts: Vec<Point> = sm.cells().iter().flat_map(|c| c.points[..=dim].to_vec()).collect();
    verts.sort_by(|p, q| p[0].total_cmp(&q[0]));
    let has_vertex = |p: Point| {
        let start = verts.partition_point(|q| q[0] < p[0] - 1e-12);
        verts[start..]
            .iter()
            .take_while(|q| q[0] <= p[0] + 1e-12)
            .any(|q| (q[1] - p[1]).abs() <= 1e-12)
    };
    let mut parent_vertices: Vec<Point> = a.vertices().to_vec();
    if let Some(b) = b {
        parent_vertices.extend_from_slice(b.vertices());
    }
    let n = haar.cells_per_axis();
    let dom = haar.domain();
    if dim == 1 {
        for i in 0..=n {
            parent_vertices.push([dom.from_unit(0, i as f64 / n as f64), 0.0]);
        }
    } else {
        for i in 0..=n {
            for j in 0..=n {
                parent_vertices.push([dom.from_unit(0, i as f64 / n as f64), dom.from_unit(1, j as f64 / n as f64)]);
            }
        }
    }
    report.missing_vertices = parent_vertices.into_iter().filter(|&p| !has_vertex(p)).count();

    // containment
    let loc_a = CellLocator::new(a);
    let loc_b = b.map(CellLocator::new);
    for c in sm.cells() {
        let m = centroid(dim, &c.points);
        let (lo, hi) = bounds(dim, &c.points);
        let containing = |mesh: &SimplicialMesh, loc: &CellLocator| -> Vec<usize> {
            loc.candidates(lo, hi)
                .into_iter()
                .filter(|&e| {
                    let lam = mesh.barycentric(e, m);
                    lam[..=dim].iter().all(|&l| l > 0.0)
                })
                .collect()
        };
        let inside_parent = |mesh: &SimplicialMesh, e: usize| {
            let pts = mesh.cell_points(e);
            c.points[..=dim]
                .iter()
                .all(|&q| barycentric(dim, &pts, q)[..=dim].iter().all(|&l| l >= -1e-10))
        };
        let mut ok = containing(a, &loc_a) == vec![c.parent_a] && inside_parent(a, c.parent_a);
        if let (Some(b), Some(loc_b)) = (b, loc_b.as_ref()) {
            ok &= match c.parent_b {
                Some(pb) => containing(b, loc_b) == vec![pb] && inside_parent(b, pb),
                None => false,
            };
        }
        ok &= haar.cell_index(&m[..dim]).ok() == Some(c.parent_haar);
        let (hlo, hhi) = haar.cell_bounds(c.parent_haar).unwrap_or(([0.0; 2], [0.0; 2]));
        ok &= c.points[..=dim].iter().all(|q| (0..dim).all(|i| q[i] >= hlo[i] - 1e-10 && q[i] <= hhi[i] + 1e-10));
        if !ok {
            report.containment_failures += 1;
        }
    }
    report
}
