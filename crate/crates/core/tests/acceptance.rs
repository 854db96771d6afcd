//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary;
//! pass criterion names (e.g. `c4`) as arguments to run a subset.

use std::time::Instant;

use mlqmc_core::lowdisc::{inverse_normal_cdf, shifted_point, DigitalShift, Purpose, RandomStream, SobolGenerator};
use mlqmc_core::mesh::{build_uniform_mesh, BoxDomain, Diagonal, HaarMesh, MeshHierarchy, Point, SimplicialMesh};
use mlqmc_core::mlqmc::{
    greedy_mlqmc, mlmc_optimal_allocation, mlmc_run, mlqmc_run, qmc_estimate, screening_run, LevelSampler, LevelState,
    MlqmcOptions, SampleContext, SamplingMode, TraceEvent,
};
use mlqmc_core::problem::{DiffusionProblem, LevelSpec};
use mlqmc_core::supermesh::{build_supermesh, build_three_way_supermesh, Supermesh};
use mlqmc_core::whitenoise::{CellGeometryTables, HaarLayout};
use mlqmc_core::Error;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Dense = Vec<Vec<f64>>;

fn zeros(n: usize, m: usize) -> Dense {
    vec![vec![0.0; m]; n]
}

fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Independent geometry and quadrature oracles.

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn ccw(mut p: Vec<Point>) -> Vec<Point> {
    let area: f64 = (0..p.len()).map(|i| cross([0.0, 0.0], p[i], p[(i + 1) % p.len()])).sum();
    if area < 0.0 {
        p.reverse();
    }
    p
}

/// Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.
fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// P1 hat functions of a cell evaluated at `x`.
fn hats(mesh: &SimplicialMesh, c: usize, x: Point) -> Vec<(usize, f64)> {
    let v = mesh.cell(c);
    if mesh.dim() == 1 {
        let (a, b) = (mesh.vertex(v[0])[0], mesh.vertex(v[1])[0]);
        let t = (x[0] - a) / (b - a);
        return vec![(v[0], 1.0 - t), (v[1], t)];
    }
    let (p0, p1, p2) = (mesh.vertex(v[0]), mesh.vertex(v[1]), mesh.vertex(v[2]));
    let det = cross(p0, p1, p2);
    let l1 = cross(p0, x, p2) / det;
    let l2 = cross(p0, p1, x) / det;
    vec![(v[0], 1.0 - l1 - l2), (v[1], l1), (v[2], l2)]
}

/// Quadrature points and weights, exact for quadratics, on the intersection of
/// cell `ca` of `a`, cell `cb` of `b` and the box `[lo, hi]`.
fn overlap_rule(a: &SimplicialMesh, ca: usize, b: &SimplicialMesh, cb: usize, lo: Point, hi: Point) -> Vec<(Point, f64)> {
    if a.dim() == 1 {
        let ends = |m: &SimplicialMesh, c: usize| {
            let v = m.cell(c);
            let (x, y) = (m.vertex(v[0])[0], m.vertex(v[1])[0]);
            (x.min(y), x.max(y))
        };
        let (a0, a1) = ends(a, ca);
        let (b0, b1) = ends(b, cb);
        let (l, r) = (a0.max(b0).max(lo[0]), a1.min(b1).min(hi[0]));
        if r <= l {
            return Vec::new();
        }
        let h = r - l;
        return vec![([l, 0.0], h / 6.0), ([0.5 * (l + r), 0.0], 4.0 * h / 6.0), ([r, 0.0], h / 6.0)];
    }
    let tri = |m: &SimplicialMesh, c: usize| ccw(m.cell(c).iter().map(|&v| m.vertex(v)).collect());
    let square = vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    let poly = clip_polygon(&clip_polygon(&tri(a, ca), &tri(b, cb)), &square);
    let mut rule = Vec::new();
    if poly.len() < 3 {
        return rule;
    }
    for i in 1..poly.len() - 1 {
        let t = [poly[0], poly[i], poly[i + 1]];
        let area = 0.5 * cross(t[0], t[1], t[2]);
        if area <= 0.0 {
            continue;
        }
        for j in 0..3 {
            let (p, q) = (t[j], t[(j + 1) % 3]);
            rule.push(([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])], area / 3.0));
        }
    }
    rule
}

fn whole_box(d: &BoxDomain) -> (Point, Point) {
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    for axis in 0..d.dim() {
        lo[axis] = d.lo()[axis];
        hi[axis] = d.hi()[axis];
    }
    (lo, hi)
}

/// `∫_box φ^a_i φ^b_j` for all vertex pairs.
fn mixed_mass(a: &SimplicialMesh, b: &SimplicialMesh, lo: Point, hi: Point) -> Dense {
    let mut m = zeros(a.n_vertices(), b.n_vertices());
    for ca in 0..a.n_cells() {
        for cb in 0..b.n_cells() {
            for (x, w) in overlap_rule(a, ca, b, cb, lo, hi) {
                for (i, pi) in hats(a, ca, x) {
                    for (j, pj) in hats(b, cb, x) {
                        m[i][j] += w * pi * pj;
                    }
                }
            }
        }
    }
    m
}

/// `∫_box φ_i` for all vertices.
fn box_integrals(mesh: &SimplicialMesh, lo: Point, hi: Point) -> Vec<f64> {
    let mut v = vec![0.0; mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        for (x, w) in overlap_rule(mesh, c, mesh, c, lo, hi) {
            for (i, p) in hats(mesh, c, x) {
                v[i] += w * p;
            }
        }
    }
    v
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn symmetric_eigenvalues(mut a: Dense) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

// ---------------------------------------------------------------------------

fn mesh_pairs() -> Vec<(String, SimplicialMesh, SimplicialMesh)> {
    let d1 = BoxDomain::symmetric(1, 1.0).unwrap();
    let d2 = BoxDomain::symmetric(2, 1.0).unwrap();
    let m = |d: &BoxDomain, n, g| build_uniform_mesh(d, n, g).unwrap();
    vec![
        ("1D n=19/n=7".into(), m(&d1, 19, Diagonal::Right), m(&d1, 7, Diagonal::Right)),
        ("1D n=8/n=5".into(), m(&d1, 8, Diagonal::Right), m(&d1, 5, Diagonal::Right)),
        ("2D n=4/n=3".into(), m(&d2, 4, Diagonal::Right), m(&d2, 3, Diagonal::Left)),
    ]
}

/// Columns of the linear map from all random inputs to the pairing vectors.
fn sampling_map(tables: &CellGeometryTables, layout: &HaarLayout) -> Vec<Vec<Vec<f64>>> {
    let nw = layout.total_dim();
    let nc = tables.n_cell_inputs();
    (0..nw + nc)
        .into_par_iter()
        .map(|k| {
            let mut w = vec![0.0; nw];
            let mut c = vec![0.0; nc];
            if k < nw {
                w[k] = 1.0;
            } else {
                c[k - nw] = 1.0;
            }
            tables.realize(layout, &w, &c).unwrap().b
        })
        .collect()
}

fn covariance(cols: &[Vec<Vec<f64>>], s: usize, t: usize) -> Dense {
    let (n, m) = (cols[0][s].len(), cols[0][t].len());
    let mut c = zeros(n, m);
    for col in cols {
        for i in 0..n {
            if col[s][i] == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += col[s][i] * col[t][j];
            }
        }
    }
    c
}

fn c1_covariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, fine, coarse) in mesh_pairs() {
        let (lo, hi) = whole_box(fine.domain());
        let m_ff = mixed_mass(&fine, &fine, lo, hi);
        let m_cc = mixed_mass(&coarse, &coarse, lo, hi);
        let m_fc = mixed_mass(&fine, &coarse, lo, hi);
        for level in -1..=2 {
            let haar = HaarMesh::new(level, fine.domain().clone()).unwrap();
            let layout = HaarLayout::new(level, fine.dim()).unwrap();
            let single = CellGeometryTables::single(&fine, &haar).unwrap();
            let cols = sampling_map(&single, &layout);
            worst = worst.max(max_abs_diff(&covariance(&cols, 0, 0), &m_ff));
            let coupled = CellGeometryTables::coupled(&fine, &coarse, &haar).unwrap();
            let cols = sampling_map(&coupled, &layout);
            let e = [
                max_abs_diff(&covariance(&cols, 0, 0), &m_ff),
                max_abs_diff(&covariance(&cols, 1, 1), &m_cc),
                max_abs_diff(&covariance(&cols, 0, 1), &m_fc),
            ];
            let e = e.iter().copied().fold(0.0, f64::max);
            if e > 1e-10 {
                return outcome(false, format!("{name}, Haar level {level}: max entry error {e:.2e}"));
            }
            worst = worst.max(e);
        }
    }
    outcome(worst <= 1e-10, format!("max entry error {worst:.2e} over 3 mesh pairs x 4 Haar levels"))
}

fn c2_correction() -> Outcome {
    let mut worst_cov: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut worst_ones: f64 = 0.0;
    for (_, mesh, _) in mesh_pairs() {
        for level in -1..=2 {
            let haar = HaarMesh::new(level, mesh.domain().clone()).unwrap();
            let tables = CellGeometryTables::single(&mesh, &haar).unwrap();
            let per = mesh.dim() + 1;
            let n = mesh.n_vertices();
            let mut cov = vec![zeros(n, n); haar.n_cells()];
            for (c, cell) in tables.cells().iter().enumerate() {
                for a in 0..per {
                    let mut z = vec![0.0; tables.n_cell_inputs()];
                    z[c * per + a] = 1.0;
                    let draw = tables.sample_b_m(&z).unwrap();
                    let b = &tables.apply_correction(&draw).unwrap()[0];
                    let k = cell.haar;
                    for i in 0..n {
                        for j in 0..n {
                            cov[k][i][j] += b[i] * b[j];
                        }
                    }
                }
            }
            for (k, ck) in cov.into_iter().enumerate() {
                let (lo, hi) = haar.cell_bounds(k).unwrap();
                let mk = mixed_mass(&mesh, &mesh, lo, hi);
                let ik = box_integrals(&mesh, lo, hi);
                let vol = haar.cell_volume();
                let expected: Dense =
                    (0..n).map(|i| (0..n).map(|j| mk[i][j] - ik[i] * ik[j] / vol).collect()).collect();
                worst_cov = worst_cov.max(max_abs_diff(&ck, &expected));
                for row in &ck {
                    worst_ones = worst_ones.max(row.iter().sum::<f64>().abs());
                }
                let active: Vec<usize> = (0..n).filter(|&i| ck[i].iter().any(|x| *x != 0.0)).collect();
                let sub: Dense = active.iter().map(|&i| active.iter().map(|&j| ck[i][j]).collect()).collect();
                if !sub.is_empty() {
                    min_eig = min_eig.min(symmetric_eigenvalues(sub).into_iter().fold(f64::INFINITY, f64::min));
                }
            }
        }
    }
    outcome(
        worst_cov <= 1e-10 && min_eig >= -1e-10 && worst_ones <= 1e-10,
        format!("covariance error {worst_cov:.2e}, smallest eigenvalue {min_eig:.2e}, |C 1| {worst_ones:.2e}"),
    )
}

fn barycentric_ok(mesh: &SimplicialMesh, c: usize, p: Point) -> bool {
    hats(mesh, c, p).iter().all(|(_, l)| *l >= -1e-10)
}

/// Vertex inclusion, single-parent containment and volume partition, checked
/// from scratch.
fn validate_supermesh(sm: &Supermesh, a: &SimplicialMesh, b: Option<&SimplicialMesh>, haar: &HaarMesh) -> Result<(), String> {
    let dim = a.dim();
    let np = dim + 1;
    let mut va = vec![0.0; a.n_cells()];
    let mut vb = vec![0.0; b.map_or(0, |m| m.n_cells())];
    let mut vh = vec![0.0; haar.n_cells()];
    let mut points: Vec<Point> = Vec::new();
    for (i, cell) in sm.cells().iter().enumerate() {
        let (lo, hi) = haar.cell_bounds(cell.parent_haar).unwrap();
        for p in &cell.points[..np] {
            points.push(*p);
            if !barycentric_ok(a, cell.parent_a, *p) {
                return Err(format!("cell {i} leaves its fine parent"));
            }
            if let Some(m) = b {
                if !barycentric_ok(m, cell.parent_b.ok_or("missing coarse parent")?, *p) {
                    return Err(format!("cell {i} leaves its coarse parent"));
                }
            }
            if (0..dim).any(|ax| p[ax] < lo[ax] - 1e-10 || p[ax] > hi[ax] + 1e-10) {
                return Err(format!("cell {i} leaves its Haar cell"));
            }
        }
        let vol = if dim == 1 {
            (cell.points[1][0] - cell.points[0][0]).abs()
        } else {
            0.5 * cross(cell.points[0], cell.points[1], cell.points[2]).abs()
        };
        if (vol - cell.volume).abs() > 1e-12 {
            return Err(format!("cell {i} reports volume {} but spans {vol}", cell.volume));
        }
        va[cell.parent_a] += vol;
        if let Some(pb) = cell.parent_b {
            vb[pb] += vol;
        }
        vh[cell.parent_haar] += vol;
    }
    let check = |what: &str, got: &[f64], want: &dyn Fn(usize) -> f64| -> Result<(), String> {
        for (c, g) in got.iter().enumerate() {
            let w = want(c);
            if ((g - w) / w).abs() > 1e-10 {
                return Err(format!("{what} cell {c}: covered {g}, volume {w}"));
            }
        }
        Ok(())
    };
    check("fine", &va, &|c| a.cell_volume(c))?;
    if let Some(m) = b {
        check("coarse", &vb, &|c| m.cell_volume(c))?;
    }
    check("Haar", &vh, &|_| haar.cell_volume())?;
    let mut parents: Vec<Point> = a.vertices().to_vec();
    if let Some(m) = b {
        parents.extend_from_slice(m.vertices());
    }
    for k in 0..haar.n_cells() {
        let (lo, hi) = haar.cell_bounds(k).unwrap();
        parents.push(lo);
        parents.push(hi);
    }
    for p in parents {
        if !points.iter().any(|q| (0..dim).all(|ax| (p[ax] - q[ax]).abs() < 1e-10)) {
            return Err(format!("parent vertex {p:?} missing from the supermesh"));
        }
    }
    Ok(())
}

fn c3_supermesh() -> Outcome {
    let d1 = BoxDomain::symmetric(1, 1.0).unwrap();
    let d2 = BoxDomain::symmetric(2, 1.0).unwrap();
    let m = |d: &BoxDomain, n, g| build_uniform_mesh(d, n, g).unwrap();
    let cases: Vec<(&str, SimplicialMesh, Option<SimplicialMesh>, i32)> = vec![
        ("1D nested two-way", m(&d1, 8, Diagonal::Right), None, 2),
        ("1D non-nested two-way", m(&d1, 7, Diagonal::Right), None, 1),
        ("2D nested two-way", m(&d2, 8, Diagonal::Right), None, 1),
        ("2D non-nested two-way", m(&d2, 6, Diagonal::Left), None, 2),
        ("1D nested three-way", m(&d1, 8, Diagonal::Right), Some(m(&d1, 4, Diagonal::Right)), 1),
        ("1D non-nested three-way", m(&d1, 9, Diagonal::Right), Some(m(&d1, 5, Diagonal::Right)), 2),
        ("2D nested three-way", m(&d2, 8, Diagonal::Right), Some(m(&d2, 4, Diagonal::Right)), 1),
        ("2D non-nested three-way", m(&d2, 8, Diagonal::Right), Some(m(&d2, 4, Diagonal::Left)), 2),
        ("2D non-nested three-way, odd sizes", m(&d2, 5, Diagonal::Left), Some(m(&d2, 3, Diagonal::Right)), 0),
    ];
    for (name, a, b, level) in &cases {
        let haar = HaarMesh::new(*level, a.domain().clone()).unwrap();
        let sm = match b {
            None => build_supermesh(a, &haar),
            Some(c) => build_three_way_supermesh(a, c, &haar),
        };
        let sm = match sm {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        if let Err(e) = validate_supermesh(&sm, a, b.as_ref(), &haar) {
            return outcome(false, format!("{name}: {e}"));
        }
    }
    let mut worst_ratio: f64 = 0.0;
    for (dim, levels, haar_of) in [(1usize, 5usize, (|l: usize| l as i32 + 1) as fn(usize) -> i32), (2, 4, |l| l as i32), (2, 4, |_| 5)] {
        let g = BoxDomain::symmetric(dim, 0.5).unwrap();
        let d = BoxDomain::symmetric(dim, 1.0).unwrap();
        let idx: Vec<usize> = (0..=levels).collect();
        let h = MeshHierarchy::embedded_uniform(&g, &d, &idx, &vec![-1; idx.len()]).unwrap();
        for l in 1..=levels {
            let (fine, coarse) = (&h.levels()[l].d_mesh, &h.levels()[l - 1].d_mesh);
            let haar = HaarMesh::new(haar_of(l), d.clone()).unwrap();
            let sm = build_three_way_supermesh(fine, coarse, &haar).unwrap();
            if let Err(e) = validate_supermesh(&sm, fine, Some(coarse), &haar) {
                return outcome(false, format!("{dim}D hierarchy level {l}: {e}"));
            }
            let parents = fine.n_cells() + coarse.n_cells() + haar.n_cells();
            worst_ratio = worst_ratio.max(sm.len() as f64 / parents as f64);
        }
    }
    outcome(
        worst_ratio <= 8.0,
        format!("{} explicit cases valid; hierarchy cells/parents ratio at most {worst_ratio:.2}", cases.len()),
    )
}

/// `K_1` by its power series.
fn bessel_k1(x: f64) -> f64 {
    let euler = 0.577_215_664_901_532_9;
    let q = x * x / 4.0;
    let mut i1 = 0.0;
    let mut tail = 0.0;
    let mut term = x / 2.0;
    let mut psi_k1 = -euler;
    let mut psi_k2 = 1.0 - euler;
    for k in 0..60 {
        i1 += term;
        tail += (psi_k1 + psi_k2) * term;
        let kf = k as f64;
        psi_k1 += 1.0 / (kf + 1.0);
        psi_k2 += 1.0 / (kf + 2.0);
        term *= q / ((kf + 1.0) * (kf + 2.0));
    }
    1.0 / x + i1 * (x / 2.0).ln() - 0.5 * tail
}

fn c4_matern() -> Outcome {
    let problem = DiffusionProblem::standard(2).unwrap();
    let samplers = problem.samplers(&[LevelSpec { mesh_level: 2, haar_level: 2, coupled: false }]).unwrap();
    let s = &samplers[0];
    let mesh = &s.fine().d_mesh;
    let find = |x: f64, y: f64| {
        (0..mesh.n_vertices())
            .find(|&v| (mesh.vertex(v)[0] - x).abs() < 1e-12 && (mesh.vertex(v)[1] - y).abs() < 1e-12)
            .unwrap()
    };
    let lambda = problem.params.lambda;
    let (c, r) = (find(0.0, 0.0), find(lambda, 0.0));
    let sobol = SobolGenerator::new(1).unwrap();
    let shift = DigitalShift::zero(s.qmc_dim());
    let n = 4096;
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let ctx = SampleContext { level: 0, m: 0, n: k, seed: 2024, shift: &shift, sobol: &sobol, mode: SamplingMode::PureMc };
            let f = s.realize(&ctx).unwrap();
            (f.u_d[0][c], f.u_d[0][r])
        })
        .collect();
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let dx: Vec<f64> = pairs.iter().map(|p| p.0 - mx).collect();
    let dy: Vec<f64> = pairs.iter().map(|p| p.1 - my).collect();
    let vx = dx.iter().map(|d| d * d).sum::<f64>() / (nf - 1.0);
    let vy = dy.iter().map(|d| d * d).sum::<f64>() / (nf - 1.0);
    let m4 = dx.iter().map(|d| d.powi(4)).sum::<f64>() / nf;
    let se_var = ((m4 - vx * vx) / nf).sqrt();
    let rho = dx.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>() / (nf - 1.0) / (vx * vy).sqrt();
    let se_rho = (1.0 - rho * rho) / nf.sqrt();
    let sigma2 = 1.2f64.ln();
    let kr = problem.params.kappa * lambda;
    let rho_exact = kr * bessel_k1(kr);
    let zv = (vx - sigma2) / se_var;
    let zr = (rho - rho_exact) / se_rho;
    outcome(
        zv.abs() <= 4.0 && zr.abs() <= 4.0,
        format!(
            "variance {vx:.4} vs {sigma2:.4} ({zv:+.2} SE); correlation {rho:.4} vs {rho_exact:.4} ({zr:+.2} SE)"
        ),
    )
}

fn c5_bias_decay() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (dim, levels, n) in [(1usize, 5usize, 512u32), (2, 4, 256)] {
        let problem = DiffusionProblem::standard(dim).unwrap();
        let specs: Vec<LevelSpec> = (1..=levels)
            .map(|l| LevelSpec { mesh_level: l, haar_level: if dim == 1 { l as i32 + 1 } else { l as i32 }, coupled: true })
            .collect();
        let samplers = problem.samplers(&specs).unwrap();
        let dyns: Vec<&dyn LevelSampler> = samplers.iter().map(|s| s as &dyn LevelSampler).collect();
        let report = screening_run(&dyns, n, 8, 99, SamplingMode::Hybrid).unwrap();
        let alpha = report.alpha.unwrap_or(f64::NAN);
        pass &= (1.7..=2.3).contains(&alpha);
        parts.push(format!("{dim}D alpha {alpha:.3}"));
    }
    outcome(pass, parts.join(", "))
}

fn c6_qmc_gain() -> Outcome {
    let problem = DiffusionProblem::standard(2).unwrap();
    let samplers = problem.samplers(&[LevelSpec { mesh_level: 0, haar_level: 4, coupled: false }]).unwrap();
    let s = &samplers[0];
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in 0..8 {
        let q = qmc_estimate(s, 256, 32, seed, SamplingMode::Hybrid).unwrap().variance_of_mean;
        let m = qmc_estimate(s, 256, 32, seed, SamplingMode::PureMc).unwrap().variance_of_mean;
        ratios.push(q / m);
        if q <= 0.5 * m {
            wins += 1;
        }
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    outcome(wins >= 5, format!("{wins}/8 replicates with QMC/MC variance ratio <= 0.5 (ratios {})", shown.join(" ")))
}

fn c7_mlqmc_vs_mlmc() -> Outcome {
    let problem = DiffusionProblem::standard(2).unwrap();
    let specs = LevelSpec::hierarchy(&[1, 2, 3, 4], &[5, 5, 5, 5]).unwrap();
    let samplers = problem.samplers(&specs).unwrap();
    let dyns: Vec<&dyn LevelSampler> = samplers.iter().map(|s| s as &dyn LevelSampler).collect();
    let eps = 2e-4;
    let opts = MlqmcOptions { epsilon: eps, theta: 0.5, l_min: 1, l_max: 4, randomizations: 32 };
    let unwrap = |r: mlqmc_core::Result<_>| match r {
        Ok(s) => Ok(s),
        Err(Error::ConvergenceFailure(s)) => Err(*s),
        Err(e) => panic!("{e}"),
    };
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..4 {
        let q = unwrap(mlqmc_run(&dyns, &opts, seed, SamplingMode::Hybrid));
        let m = unwrap(mlmc_run(&dyns, &opts, 32, seed + 1000));
        let (q, qc) = match q {
            Ok(s) => (s, true),
            Err(s) => (s, false),
        };
        let (m, mc) = match m {
            Ok(s) => (s, true),
            Err(s) => (s, false),
        };
        let ratio = q.total_cost / m.total_cost;
        if qc && mc && ratio <= 0.8 {
            wins += 1;
        }
        parts.push(format!(
            "seed {seed}: ratio {ratio:.3} (L {}/{}, N {:?}/{:?}{})",
            q.levels.len(),
            m.levels.len(),
            q.sample_counts(),
            m.sample_counts(),
            if qc && mc { "" } else { ", not converged" }
        ));
    }
    outcome(wins >= 3, format!("{wins}/4 replicates with eps^2 cost ratio <= 0.8; {}", parts.join("; ")))
}

fn c8_driver_trace() -> Outcome {
    // V_l(N) = 4^-l / N, C_l = 4^l, zero means; epsilon 1/4, theta 1/2.
    let opts = MlqmcOptions { epsilon: 0.25, theta: 0.5, l_min: 3, l_max: 3, randomizations: 2 };
    let state = greedy_mlqmc(&opts, |level, n| {
        Ok(LevelState {
            level,
            index: level,
            coupled: level > 1,
            n,
            randomizations: 2,
            means: vec![0.0, 0.0],
            mean: 0.0,
            mean_fine: 0.0,
            variance: 4f64.powi(-(level as i32)) / n as f64,
            sample_variance: 0.0,
            cost: 4f64.powi(level as i32),
        })
    });
    use TraceEvent::*;
    let oracle = vec![
        AddLevel { level: 1 },
        Double { level: 1, n: 2 },
        Double { level: 1, n: 4 },
        Double { level: 1, n: 8 },
        AddLevel { level: 2 },
        Double { level: 2, n: 2 },
        Double { level: 1, n: 16 },
        Double { level: 2, n: 4 },
        AddLevel { level: 3 },
        Double { level: 1, n: 32 },
        Double { level: 2, n: 8 },
    ];
    match state {
        Ok(s) if s.trace == oracle => outcome(true, format!("{} events match the hand-simulated trace", oracle.len())),
        Ok(s) => outcome(false, format!("trace {:?}", s.trace)),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn c9_allocation() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let levels = rng.random_range(1..=8);
        let v: Vec<f64> = (0..levels).map(|_| 10f64.powf(rng.random_range(-10.0..0.0))).collect();
        let c: Vec<f64> = (0..levels).map(|_| 10f64.powf(rng.random_range(0.0..5.0))).collect();
        let eps = 10f64.powf(rng.random_range(-4.0..-1.0));
        let theta = rng.random_range(0.05..0.95);
        let n = mlmc_optimal_allocation(&v, &c, eps, theta).unwrap();
        let budget = (1.0 - theta) * eps * eps;
        let var = |n: &[u64]| v.iter().zip(n).map(|(v, n)| v / *n as f64).sum::<f64>();
        if var(&n) > budget * (1.0 + 1e-12) {
            return outcome(false, format!("case {case}: budget exceeded"));
        }
        let s: f64 = v.iter().zip(&c).map(|(v, c)| (v * c).sqrt()).sum();
        for l in 0..levels {
            let formula = s / budget * (v[l] / c[l]).sqrt();
            let mut shrunk = n.clone();
            shrunk[l] -= 1;
            let breaks_budget = shrunk[l] == 0 || var(&shrunk) > budget;
            let below_ceiling = (shrunk[l] as f64) < formula;
            if !(breaks_budget || below_ceiling) {
                return outcome(false, format!("case {case}, level {l}: N={} is not minimal", n[l]));
            }
        }
    }
    outcome(true, "100 random tuples")
}

fn c10_lowdisc() -> Outcome {
    let gen = SobolGenerator::new(64).unwrap();
    let points: Vec<Vec<f64>> = (0..1024u32).map(|n| gen.point(n, 64).unwrap()).collect();
    for k in 0..=10u32 {
        let m = 1usize << k;
        for d in 0..64 {
            let mut seen = vec![false; m];
            for p in &points[..m] {
                let bin = (p[d] * m as f64).floor() as usize;
                if seen[bin] {
                    return outcome(false, format!("dimension {d}, k={k}: interval {bin} hit twice"));
                }
                seen[bin] = true;
            }
        }
    }
    let shift = DigitalShift::random(64, &RandomStream::new(5, 0, 0, 0, Purpose::Shift));
    for p in &points[..256] {
        let back = shifted_point(&shifted_point(p, &shift).unwrap(), &shift).unwrap();
        if back != *p {
            return outcome(false, "digital shift is not an involution");
        }
    }
    let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let u = (i as f64 + 0.5) / 10_000.0;
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        worst = worst.max((inverse_normal_cdf(u).unwrap() - 0.5 * (lo + hi)).abs());
    }
    outcome(worst <= 1e-9, format!("stratification exact for k<=10 in 64 dims; shift involution; max |inverse CDF error| {worst:.2e}"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("c1", "exact white noise covariance", c1_covariance),
        ("c2", "correction term identities", c2_correction),
        ("c3", "supermesh validity", c3_supermesh),
        ("c4", "Matern field statistics", c4_matern),
        ("c5", "bias decay rate", c5_bias_decay),
        ("c6", "pre-asymptotic QMC gain", c6_qmc_gain),
        ("c7", "MLQMC versus MLMC cost", c7_mlqmc_vs_mlmc),
        ("c8", "greedy driver trace", c8_driver_trace),
        ("c9", "MLMC allocation formula", c9_allocation),
        ("c10", "low-discrepancy kernel", c10_lowdisc),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!("{} {id} {name}: {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        ran += 1;
        if !o.pass {
            failed += 1;
        }
    }
    // Failing criteria are reported, not turned into a failing exit status.
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
}
