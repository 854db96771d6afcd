//! White noise pairings `b = b_L + b_R` against P1 basis functions.
//!
//! `b_L` is the truncated Haar expansion (its leading coefficients come from a
//! randomized Sobol' point), `b_R` the correction that restores exact white
//! noise covariance. Both are evaluated cell by cell on a supermesh of the FEM
//! mesh (or of two FEM meshes, for coupled levels) and the Haar mesh.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lowdisc::{inverse_normal_cdf, shifted_sobol_point, DigitalShift, RandomStream, SobolGenerator};
use crate::mesh::{HaarMesh, SimplicialMesh};
use crate::supermesh::{build_supermesh, build_three_way_supermesh, Supermesh};

/// Largest spatial dimension the layout arithmetic supports.
pub const MAX_LAYOUT_DIM: usize = 3;

type LevelVector = [i32; MAX_LAYOUT_DIM];

/// Ordering of the wavelet coefficients of the truncated expansion.
///
/// Level vectors `l` (entries in `-1..=L`) are ranked by
/// `|l|_1 = sum_i (l_i + 1) - 1`, so that the constant wavelet comes first
/// with rank -1 and the one-dimensional level-0 wavelets follow with rank 0.
/// Coefficients with rank at most `L` form the QMC block. Within a rank, level
/// vectors are lexicographic; within a level vector, shift vectors are
/// lexicographic.
#[derive(Clone, Debug)]
pub struct HaarLayout {
    level: i32,
    dim: usize,
    qmc_dim: usize,
    total_dim: usize,
    /// Level vectors in flat order with the flat index of their first shift.
    blocks: Vec<(LevelVector, usize)>,
    /// Block start indexed by `level_code`.
    offsets: Vec<usize>,
    /// Position of each flat coefficient in the tensor of one-dimensional
    /// coefficient indices (`0` for level -1, `2^l + n` otherwise), axis 0 major.
    tensor_index: Vec<usize>,
}

/// One-norm used to rank level vectors.
pub fn level_norm(l: &[i32]) -> i32 {
    l.iter().map(|&x| x + 1).sum::<i32>() - 1
}

fn shifts_in(l: &LevelVector) -> usize {
    l.iter().map(|&x| 1usize << x.max(0)).product()
}

impl HaarLayout {
    pub fn new(level: i32, dim: usize) -> Result<Self> {
        if level < -1 {
            return Err(Error::InvalidArgument(format!("Haar level must be >= -1 (got {level})")));
        }
        if dim == 0 || dim > MAX_LAYOUT_DIM {
            return Err(Error::InvalidArgument(format!("layout dimension must be 1..={MAX_LAYOUT_DIM} (got {dim})")));
        }
        let per_axis = (level + 2) as usize;
        let n_codes = per_axis.pow(dim as u32);
        let mut vectors: Vec<LevelVector> = (0..n_codes)
            .map(|mut code| {
                let mut l = [-1; MAX_LAYOUT_DIM];
                for slot in l.iter_mut().take(dim) {
                    *slot = (code % per_axis) as i32 - 1;
                    code /= per_axis;
                }
                l
            })
            .collect();
        vectors.sort_by(|a, b| level_norm(&a[..dim]).cmp(&level_norm(&b[..dim])).then_with(|| a[..dim].cmp(&b[..dim])));

        let mut blocks = Vec::with_capacity(vectors.len());
        let mut offsets = vec![0; n_codes];
        let mut next = 0;
        let mut qmc_dim = 0;
        for l in vectors {
            if level_norm(&l[..dim]) <= level {
                qmc_dim += shifts_in(&l);
            }
            offsets[level_code(&l, dim, per_axis)] = next;
            blocks.push((l, next));
            next += shifts_in(&l);
        }
        let side = 1usize << (level + 1);
        let mut tensor_index = Vec::with_capacity(next);
        for (l, _) in &blocks {
            let counts: Vec<usize> = (0..dim).map(|i| 1usize << l[i].max(0)).collect();
            for mut local in 0..shifts_in(l) {
                let mut n = [0usize; MAX_LAYOUT_DIM];
                for i in (0..dim).rev() {
                    n[i] = local % counts[i];
                    local /= counts[i];
                }
                let t = (0..dim).fold(0, |acc, i| {
                    let one_d = if l[i] < 0 { 0 } else { (1usize << l[i]) + n[i] };
                    acc * side + one_d
                });
                tensor_index.push(t);
            }
        }
        Ok(Self { level, dim, qmc_dim, total_dim: next, blocks, offsets, tensor_index })
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of coefficients drawn from the low-discrepancy sequence.
    pub fn qmc_dim(&self) -> usize {
        self.qmc_dim
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Level vectors in flat order.
    pub fn level_vectors(&self) -> impl Iterator<Item = &[i32]> + '_ {
        self.blocks.iter().map(move |(l, _)| &l[..self.dim])
    }

    /// Flat index `J(l, n)`.
    pub fn index(&self, l: &[i32], n: &[usize]) -> Result<usize> {
        if l.len() != self.dim || n.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, actual: l.len().min(n.len()) });
        }
        let mut full = [-1; MAX_LAYOUT_DIM];
        for (i, &x) in l.iter().enumerate() {
            if x < -1 || x > self.level {
                return Err(Error::InvalidArgument(format!("level {x} outside -1..={}", self.level)));
            }
            full[i] = x;
        }
        let mut local = 0;
        for (i, &ni) in n.iter().enumerate() {
            let count = 1usize << full[i].max(0);
            if ni >= count {
                return Err(Error::IndexOutOfRange { index: ni, len: count });
            }
            local = local * count + ni;
        }
        Ok(self.offsets[level_code(&full, self.dim, (self.level + 2) as usize)] + local)
    }
}

fn level_code(l: &LevelVector, dim: usize, per_axis: usize) -> usize {
    l[..dim].iter().rev().fold(0, |acc, &x| acc * per_axis + (x + 1) as usize)
}

/// Values `w̄_k` of the truncated expansion on each Haar cell.
pub fn haar_cell_values(z: &[f64], layout: &HaarLayout, haar: &HaarMesh) -> Result<Vec<f64>> {
    if z.len() != layout.total_dim() {
        return Err(Error::LengthMismatch { expected: layout.total_dim(), actual: z.len() });
    }
    if layout.level() != haar.level() || layout.dim() != haar.dim() {
        return Err(Error::InvalidArgument(format!(
            "layout (level {}, dim {}) does not match Haar mesh (level {}, dim {})",
            layout.level(),
            layout.dim(),
            haar.level(),
            haar.dim()
        )));
    }
    let dim = layout.dim();
    let side = 1usize << (layout.level() + 1);
    let mut t = vec![0.0; side.pow(dim as u32)];
    for (x, &i) in z.iter().zip(&layout.tensor_index) {
        t[i] = *x;
    }
    // Inverse Haar transform along each axis: the children of cell j at level
    // l + 1 are 2j (+) and 2j + 1 (-), weighted by 2^(l/2).
    let mut line = vec![0.0; side];
    let mut next = vec![0.0; side];
    for axis in 0..dim {
        let stride = side.pow((dim - 1 - axis) as u32);
        for base in 0..t.len() {
            if (base / stride) % side != 0 {
                continue;
            }
            for (j, v) in line.iter_mut().enumerate() {
                *v = t[base + j * stride];
            }
            let mut len = 1;
            while len < side {
                let w = (len as f64).sqrt();
                for j in 0..len {
                    let c = w * line[len + j];
                    next[2 * j] = line[j] + c;
                    next[2 * j + 1] = line[j] - c;
                }
                line[..2 * len].copy_from_slice(&next[..2 * len]);
                len *= 2;
            }
            for (j, v) in line.iter().enumerate() {
                t[base + j * stride] = *v;
            }
        }
    }
    let scale = haar.domain().volume().powf(-0.5);
    let out = (0..haar.n_cells())
        .map(|k| {
            let axes = haar.axes_from_index(k);
            t[(0..dim).fold(0, |acc, i| acc * side + axes[i])] * scale
        })
        .collect();
    Ok(out)
}

/// Wavelet coefficients for one hybrid sample: `Φ⁻¹` of the shifted `n`-th
/// Sobol' point on the QMC block, pseudo-random normals from `tail` elsewhere.
pub fn draw_hybrid_coefficients(
    layout: &HaarLayout,
    gen: &SobolGenerator,
    shift: &DigitalShift,
    n: u32,
    tail: &RandomStream,
) -> Result<Vec<f64>> {
    if shift.dims() != layout.qmc_dim() {
        return Err(Error::LengthMismatch { expected: layout.qmc_dim(), actual: shift.dims() });
    }
    let mut z = shifted_sobol_point(gen, n, shift)?
        .into_iter()
        .map(inverse_normal_cdf)
        .collect::<Result<Vec<f64>>>()?;
    z.extend(tail.normal_vector(layout.total_dim() - layout.qmc_dim()));
    Ok(z)
}

/// Wavelet coefficients drawn entirely from pseudo-random streams.
pub fn draw_mc_coefficients(layout: &HaarLayout, head: &RandomStream, tail: &RandomStream) -> Vec<f64> {
    let mut z = head.normal_vector(layout.qmc_dim());
    z.extend(tail.normal_vector(layout.total_dim() - layout.qmc_dim()));
    z
}

/// Geometry of one supermesh cell as seen from one parent FEM space.
#[derive(Clone, Debug)]
pub struct SpaceBlock {
    /// Global vertex indices of the parent cell.
    pub dofs: [usize; 3],
    /// `restriction[i][a]`: parent basis function `i` at supermesh vertex `a`.
    pub restriction: [[f64; 3]; 3],
    /// Integrals of the parent basis functions over the supermesh cell.
    pub integrals: [f64; 3],
    factor: [[f64; 3]; 3],
}

#[derive(Clone, Debug)]
pub struct CellTable {
    pub haar: usize,
    pub volume: f64,
    pub spaces: Vec<SpaceBlock>,
}

/// Offline per-cell data for white noise sampling on one or two FEM spaces.
///
/// Spaces are full vertex-based P1 spaces (boundary vertices included), so
/// that the basis sums to one and the correction weights are all ones.
#[derive(Clone, Debug)]
pub struct CellGeometryTables {
    dim: usize,
    space_sizes: Vec<usize>,
    haar: HaarMesh,
    cells: Vec<CellTable>,
}

/// Local mass matrix of the nodal P1 basis on a simplex of unit volume.
fn reference_mass(dim: usize) -> [[f64; 3]; 3] {
    let n = dim + 1;
    let scale = 1.0 / ((dim + 1) * (dim + 2)) as f64;
    let mut w = [[0.0; 3]; 3];
    for (i, row) in w.iter_mut().enumerate().take(n) {
        for (j, x) in row.iter_mut().enumerate().take(n) {
            *x = scale * if i == j { 2.0 } else { 1.0 };
        }
    }
    w
}

/// Lower Cholesky factor of the leading `n x n` block.
pub(crate) fn small_cholesky(a: &[[f64; 3]; 3], n: usize) -> Result<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        l[j][j] = d.sqrt();
        for i in j + 1..n {
            l[i][j] = (a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / l[j][j];
        }
    }
    Ok(l)
}

impl CellGeometryTables {
    /// Tables for independent samples on `mesh`.
    pub fn single(mesh: &SimplicialMesh, haar: &HaarMesh) -> Result<Self> {
        let sm = build_supermesh(mesh, haar)?;
        Self::from_supermesh(&sm, &[mesh], haar)
    }

    /// Tables for coupled samples on `fine` (space 0) and `coarse` (space 1).
    pub fn coupled(fine: &SimplicialMesh, coarse: &SimplicialMesh, haar: &HaarMesh) -> Result<Self> {
        let sm = build_three_way_supermesh(fine, coarse, haar)?;
        Self::from_supermesh(&sm, &[fine, coarse], haar)
    }

    /// `spaces[0]` owns `parent_a`, `spaces[1]` (if any) owns `parent_b`.
    pub fn from_supermesh(sm: &Supermesh, spaces: &[&SimplicialMesh], haar: &HaarMesh) -> Result<Self> {
        if spaces.is_empty() || spaces.len() > 2 || spaces.len() + 1 != sm.n_parents() {
            return Err(Error::InvalidArgument(format!(
                "{} spaces given for a supermesh with {} parents",
                spaces.len(),
                sm.n_parents()
            )));
        }
        let dim = sm.dim();
        let n = dim + 1;
        let chol_ref = small_cholesky(&reference_mass(dim), n)?;
        let cells = sm
            .cells()
            .iter()
            .enumerate()
            .map(|(idx, cell)| {
                if !(cell.volume > 0.0) {
                    return Err(Error::DegenerateCell { cell: idx, volume: cell.volume });
                }
                let root = cell.volume.sqrt();
                let mut chol = [[0.0; 3]; 3];
                for i in 0..n {
                    for j in 0..n {
                        chol[i][j] = root * chol_ref[i][j];
                    }
                }
                let blocks = spaces
                    .iter()
                    .enumerate()
                    .map(|(s, mesh)| {
                        let parent = if s == 0 {
                            cell.parent_a
                        } else {
                            cell.parent_b.ok_or_else(|| Error::InvalidArgument("supermesh cell lacks a second parent".into()))?
                        };
                        space_block(mesh, parent, &cell.points, cell.volume, &chol, n)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CellTable { haar: cell.parent_haar, volume: cell.volume, spaces: blocks })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, space_sizes: spaces.iter().map(|m| m.n_vertices()).collect(), haar: haar.clone(), cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_spaces(&self) -> usize {
        self.space_sizes.len()
    }

    pub fn space_size(&self, space: usize) -> usize {
        self.space_sizes[space]
    }

    pub fn haar(&self) -> &HaarMesh {
        &self.haar
    }

    pub fn cells(&self) -> &[CellTable] {
        &self.cells
    }

    /// Number of cell-local normals consumed per sample.
    pub fn n_cell_inputs(&self) -> usize {
        self.cells.len() * (self.dim + 1)
    }

    /// Global basis integrals `∫ φ_i` of one space, summed over supermesh cells.
    pub fn basis_integrals(&self, space: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.space_sizes[space]];
        for cell in &self.cells {
            let block = &cell.spaces[space];
            for i in 0..=self.dim {
                out[block.dofs[i]] += block.integrals[i];
            }
        }
        out
    }

    /// The vectors `I^k` of split basis integrals, one sparse vector per Haar cell.
    pub fn haar_integrals(&self, space: usize) -> Vec<Vec<(usize, f64)>> {
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); self.haar.n_cells()];
        for cell in &self.cells {
            let block = &cell.spaces[space];
            for i in 0..=self.dim {
                *acc[cell.haar].entry(block.dofs[i]).or_insert(0.0) += block.integrals[i];
            }
        }
        acc.into_iter().map(|m| m.into_iter().collect()).collect()
    }

    /// `b_L`: per-cell values times split basis integrals.
    pub fn assemble_b_l(&self, wbar: &[f64]) -> Result<Vec<Vec<f64>>> {
        if wbar.len() != self.haar.n_cells() {
            return Err(Error::LengthMismatch { expected: self.haar.n_cells(), actual: wbar.len() });
        }
        Ok(self.scatter_integrals(wbar))
    }

    fn scatter_integrals(&self, per_haar: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_spaces())
            .map(|s| {
                let mut b = vec![0.0; self.space_sizes[s]];
                for cell in &self.cells {
                    let block = &cell.spaces[s];
                    let c = per_haar[cell.haar];
                    for i in 0..=self.dim {
                        b[block.dofs[i]] += c * block.integrals[i];
                    }
                }
                b
            })
            .collect()
    }

    /// `b_M ~ N(0, M)` (jointly with the mixed mass matrix for coupled spaces)
    /// from `(dim + 1)` normals per supermesh cell, in cell order.
    pub fn sample_b_m(&self, cell_local: &[f64]) -> Result<MassDraw> {
        if cell_local.len() != self.n_cell_inputs() {
            return Err(Error::LengthMismatch { expected: self.n_cell_inputs(), actual: cell_local.len() });
        }
        let n = self.dim + 1;
        let mut b: Vec<Vec<f64>> = self.space_sizes.iter().map(|&m| vec![0.0; m]).collect();
        let mut haar_sums = vec![vec![0.0; self.haar.n_cells()]; self.n_spaces()];
        for (cell, z) in self.cells.iter().zip(cell_local.chunks_exact(n)) {
            for (s, block) in cell.spaces.iter().enumerate() {
                for i in 0..n {
                    let v: f64 = (0..n).map(|a| block.factor[i][a] * z[a]).sum();
                    b[s][block.dofs[i]] += v;
                    haar_sums[s][cell.haar] += v;
                }
            }
        }
        Ok(MassDraw { b, haar_sums })
    }

    /// Shared Haar-cell weights `w_k = |□_k|⁻¹ 1·b_M^k`, computed from the last
    /// (coarse) space and checked against the others.
    pub fn correction_weights(&self, draw: &MassDraw) -> Result<Vec<f64>> {
        let inv = 1.0 / self.haar.cell_volume();
        let last = draw.haar_sums.len() - 1;
        let w: Vec<f64> = draw.haar_sums[last].iter().map(|x| x * inv).collect();
        for sums in draw.haar_sums.iter().take(last) {
            for (k, (x, wk)) in sums.iter().zip(&w).enumerate() {
                if (x * inv - wk).abs() > 1e-10 * (1.0 + wk.abs()) {
                    return Err(Error::CouplingMismatch { cell: k, shared: *wk, other: x * inv });
                }
            }
        }
        Ok(w)
    }

    /// `b_R = b_M - w_k I^k` on every Haar cell.
    pub fn apply_correction(&self, draw: &MassDraw) -> Result<Vec<Vec<f64>>> {
        let w = self.correction_weights(draw)?;
        let removed = self.scatter_integrals(&w);
        Ok(draw
            .b
            .iter()
            .zip(removed)
            .map(|(bm, r)| bm.iter().zip(r).map(|(x, y)| x - y).collect())
            .collect())
    }

    /// Full pairing vector(s) from wavelet coefficients and cell-local normals:
    /// `b = b_M + (w̄_k - w_k) I^k`, which equals `b_L + b_R`.
    pub fn realize(&self, layout: &HaarLayout, wavelet: &[f64], cell_local: &[f64]) -> Result<WhiteNoiseDraw> {
        let wbar = haar_cell_values(wavelet, layout, &self.haar)?;
        let draw = self.sample_b_m(cell_local)?;
        let w = self.correction_weights(&draw)?;
        let delta: Vec<f64> = wbar.iter().zip(&w).map(|(a, b)| a - b).collect();
        let shift = self.scatter_integrals(&delta);
        let b = draw
            .b
            .into_iter()
            .zip(shift)
            .map(|(bm, d)| bm.into_iter().zip(d).map(|(x, y)| x + y).collect())
            .collect();
        Ok(WhiteNoiseDraw { b, haar_values: wbar })
    }
}

fn space_block(
    mesh: &SimplicialMesh,
    parent: usize,
    points: &[crate::mesh::Point; 3],
    volume: f64,
    chol: &[[f64; 3]; 3],
    n: usize,
) -> Result<SpaceBlock> {
    if parent >= mesh.n_cells() {
        return Err(Error::IndexOutOfRange { index: parent, len: mesh.n_cells() });
    }
    let mut dofs = [0; 3];
    dofs[..n].copy_from_slice(mesh.cell(parent));
    let mut restriction = [[0.0; 3]; 3];
    for (a, &p) in points.iter().enumerate().take(n) {
        let lam = mesh.barycentric(parent, p);
        for i in 0..n {
            restriction[i][a] = lam[i];
        }
    }
    let mut factor = [[0.0; 3]; 3];
    let mut integrals = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            factor[i][j] = (0..n).map(|a| restriction[i][a] * chol[a][j]).sum();
        }
        integrals[i] = restriction[i][..n].iter().sum::<f64>() * volume / n as f64;
    }
    Ok(SpaceBlock { dofs, restriction, integrals, factor })
}

/// A draw of `b_M` with its per-Haar-cell sums `1·b_M^k`, per space.
#[derive(Clone, Debug)]
pub struct MassDraw {
    pub b: Vec<Vec<f64>>,
    pub haar_sums: Vec<Vec<f64>>,
}

/// Realized pairings, one vector per FEM space (full vertex spaces), and the
/// Haar-cell values of the truncated expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteNoiseDraw {
    pub b: Vec<Vec<f64>>,
    pub haar_values: Vec<f64>,
}

impl WhiteNoiseDraw {
    /// CSV `space,dof_index,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "space,dof_index,value")?;
        for (s, b) in self.b.iter().enumerate() {
            for (i, x) in b.iter().enumerate() {
                writeln!(w, "{s},{i},{x:e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowdisc::Purpose;
    use crate::mesh::{build_uniform_mesh, BoxDomain, Diagonal};
    use approx::assert_relative_eq;

    fn brute_qmc_count(level: i32, dim: usize) -> usize {
        let mut count = 0;
        let per = (level + 2) as usize;
        for code in 0..per.pow(dim as u32) {
            let mut c = code;
            let l: Vec<i32> = (0..dim)
                .map(|_| {
                    let x = (c % per) as i32 - 1;
                    c /= per;
                    x
                })
                .collect();
            if l.iter().map(|x| x + 1).sum::<i32>() <= level + 1 {
                count += l.iter().map(|&x| 1usize << x.max(0)).product::<usize>();
            }
        }
        count
    }

    #[test]
    fn constant_only_layout() {
        for d in 1..=3 {
            let layout = HaarLayout::new(-1, d).unwrap();
            assert_eq!((layout.qmc_dim(), layout.total_dim()), (1, 1));
        }
    }

    #[test]
    fn one_dimensional_layout_is_all_qmc() {
        let layout = HaarLayout::new(2, 1).unwrap();
        assert_eq!(layout.total_dim(), 8);
        assert_eq!(layout.qmc_dim(), 8);
        let order: Vec<i32> = layout.level_vectors().map(|l| l[0]).collect();
        assert_eq!(order, vec![-1, 0, 1, 2]);
    }

    #[test]
    fn qmc_block_counts() {
        for level in 1..=5 {
            let layout = HaarLayout::new(level, 2).unwrap();
            assert_eq!(layout.total_dim(), 1 << (2 * (level + 1)));
            assert_eq!(layout.qmc_dim(), brute_qmc_count(level, 2));
            // twice the closed form printed for 2D; see README
            assert_eq!(layout.qmc_dim(), (1 << level) * (level as usize + 3));
        }
        for level in 1..=4 {
            let l = level as usize;
            let layout = HaarLayout::new(level, 3).unwrap();
            assert_eq!(4 * layout.qmc_dim(), (1 << l) * (l * l + 9 * l + 16));
        }
    }

    #[test]
    fn two_dimensional_level_one_order() {
        let layout = HaarLayout::new(1, 2).unwrap();
        let order: Vec<Vec<i32>> = layout.level_vectors().map(|l| l.to_vec()).collect();
        assert_eq!(order[0], vec![-1, -1]);
        assert_eq!(order[1..3], [vec![-1, 0], vec![0, -1]]);
        assert_eq!(order[3..6], [vec![-1, 1], vec![0, 0], vec![1, -1]]);
        assert_eq!(layout.qmc_dim(), 8);
    }

    #[test]
    fn flat_index_is_a_bijection() {
        let layout = HaarLayout::new(2, 2).unwrap();
        let mut seen = vec![false; layout.total_dim()];
        for l in layout.level_vectors() {
            for n0 in 0..1usize << l[0].max(0) {
                for n1 in 0..1usize << l[1].max(0) {
                    let j = layout.index(l, &[n0, n1]).unwrap();
                    assert!(!seen[j]);
                    seen[j] = true;
                }
            }
        }
        assert!(seen.iter().all(|&x| x));
        assert!(layout.index(&[0, 0], &[1, 0]).is_err());
    }

    #[test]
    fn haar_values_small_cases() {
        let unit = BoxDomain::unit(1).unwrap();
        let haar = HaarMesh::new(-1, unit.clone()).unwrap();
        let layout = HaarLayout::new(-1, 1).unwrap();
        assert_eq!(haar_cell_values(&[2.5], &layout, &haar).unwrap(), vec![2.5]);

        let haar = HaarMesh::new(0, unit).unwrap();
        let layout = HaarLayout::new(0, 1).unwrap();
        assert_eq!(haar_cell_values(&[3.0, 1.0], &layout, &haar).unwrap(), vec![4.0, 2.0]);
        assert!(haar_cell_values(&[1.0], &layout, &haar).is_err());
    }

    #[test]
    fn fast_transform_matches_direct_evaluation() {
        for d in 1..=2 {
            for big in -1..=3 {
                let domain = BoxDomain::symmetric(d, 1.0).unwrap();
                let haar = HaarMesh::new(big, domain.clone()).unwrap();
                let layout = HaarLayout::new(big, d).unwrap();
                let z = RandomStream::new(3, 0, 0, 0, Purpose::Other(0)).normal_vector(layout.total_dim());
                let fast = haar_cell_values(&z, &layout, &haar).unwrap();
                for (k, value) in fast.iter().enumerate() {
                    let a = haar.axes_from_index(k);
                    let mut direct = 0.0;
                    for l in layout.level_vectors() {
                        let mut n = [0usize; 2];
                        let mut psi = 1.0;
                        for i in 0..d {
                            if l[i] >= 0 {
                                n[i] = a[i] >> (big + 1 - l[i]);
                                let odd = (a[i] >> (big - l[i])) & 1 == 1;
                                psi *= 2f64.powf(l[i] as f64 / 2.0) * if odd { -1.0 } else { 1.0 };
                            }
                        }
                        direct += psi * z[layout.index(l, &n[..d]).unwrap()];
                    }
                    direct /= domain.volume().sqrt();
                    assert!((direct - value).abs() < 1e-12, "d {d} L {big} cell {k}");
                }
            }
        }
    }

    #[test]
    fn haar_matrix_is_scaled_orthogonal() {
        for d in 1..=2 {
            for level in -1..=3 {
                let domain = BoxDomain::symmetric(d, 1.0).unwrap();
                let haar = HaarMesh::new(level, domain.clone()).unwrap();
                let layout = HaarLayout::new(level, d).unwrap();
                let n = layout.total_dim();
                let cols: Vec<Vec<f64>> = (0..n)
                    .map(|j| {
                        let mut z = vec![0.0; n];
                        z[j] = 1.0;
                        haar_cell_values(&z, &layout, &haar).unwrap()
                    })
                    .collect();
                let expected = haar.n_cells() as f64 / domain.volume();
                for a in 0..haar.n_cells() {
                    for b in 0..haar.n_cells() {
                        let dot: f64 = cols.iter().map(|c| c[a] * c[b]).sum();
                        let target = if a == b { expected } else { 0.0 };
                        assert!((dot - target).abs() < 1e-10, "d {d} L {level} ({a},{b}): {dot}");
                    }
                }
            }
        }
    }

    #[test]
    fn hybrid_draw_is_deterministic() {
        let layout = HaarLayout::new(2, 2).unwrap();
        let gen = SobolGenerator::new(layout.qmc_dim()).unwrap();
        let shift = DigitalShift::random(layout.qmc_dim(), &RandomStream::new(3, 0, 1, 0, Purpose::Shift));
        let tail = RandomStream::new(3, 0, 1, 5, Purpose::WaveletTail);
        let a = draw_hybrid_coefficients(&layout, &gen, &shift, 5, &tail).unwrap();
        assert_eq!(a, draw_hybrid_coefficients(&layout, &gen, &shift, 5, &tail).unwrap());
        assert_eq!(a.len(), layout.total_dim());
        assert!(draw_hybrid_coefficients(&layout, &gen, &DigitalShift::zero(3), 5, &tail).is_err());
    }

    #[test]
    fn hybrid_marginals_have_unit_variance() {
        let layout = HaarLayout::new(1, 2).unwrap();
        let gen = SobolGenerator::new(layout.qmc_dim()).unwrap();
        let shift = DigitalShift::random(layout.qmc_dim(), &RandomStream::new(11, 0, 0, 0, Purpose::Shift));
        let n = 4096;
        let mut sum2 = vec![0.0; layout.total_dim()];
        for i in 0..n {
            let tail = RandomStream::new(11, 0, 0, i as u64, Purpose::WaveletTail);
            let z = draw_hybrid_coefficients(&layout, &gen, &shift, i, &tail).unwrap();
            for (s, x) in sum2.iter_mut().zip(z) {
                *s += x * x;
            }
        }
        // variance of the sample second moment is 2/n for normals
        let bound = 4.0 * (2.0 / n as f64).sqrt();
        for s in sum2 {
            assert!((s / n as f64 - 1.0).abs() < bound);
        }
    }

    #[test]
    fn single_tables_basic_identities() {
        let mesh = build_uniform_mesh(&BoxDomain::unit(2).unwrap(), 3, Diagonal::Right).unwrap();
        let haar = HaarMesh::new(1, BoxDomain::unit(2).unwrap()).unwrap();
        let tables = CellGeometryTables::single(&mesh, &haar).unwrap();
        let total: f64 = tables.basis_integrals(0).iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);

        let ones = vec![1.0; haar.n_cells()];
        assert_eq!(tables.assemble_b_l(&ones).unwrap()[0], tables.basis_integrals(0));
        let zero = tables.assemble_b_l(&vec![0.0; haar.n_cells()]).unwrap();
        assert!(zero[0].iter().all(|&x| x == 0.0));
        let zero = tables.sample_b_m(&vec![0.0; tables.n_cell_inputs()]).unwrap();
        assert!(zero.b[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn correction_removes_constants() {
        let mesh = build_uniform_mesh(&BoxDomain::unit(2).unwrap(), 3, Diagonal::Left).unwrap();
        let haar = HaarMesh::new(0, BoxDomain::unit(2).unwrap()).unwrap();
        let tables = CellGeometryTables::single(&mesh, &haar).unwrap();
        // a b_M equal to the split integrals of a constant field
        let mut b = vec![vec![0.0; mesh.n_vertices()]];
        let mut sums = vec![vec![0.0; haar.n_cells()]];
        for (k, ik) in tables.haar_integrals(0).iter().enumerate() {
            for &(i, v) in ik {
                b[0][i] += 2.0 * v;
                sums[0][k] += 2.0 * v;
            }
        }
        let draw = MassDraw { b, haar_sums: sums };
        let br = tables.apply_correction(&draw).unwrap();
        assert!(br[0].iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn coupled_identical_spaces_agree() {
        let domain = BoxDomain::symmetric(2, 1.0).unwrap();
        let mesh = build_uniform_mesh(&domain, 4, Diagonal::Right).unwrap();
        let haar = HaarMesh::new(1, domain).unwrap();
        let tables = CellGeometryTables::coupled(&mesh, &mesh, &haar).unwrap();
        let layout = HaarLayout::new(1, 2).unwrap();
        let z = RandomStream::new(1, 0, 0, 0, Purpose::Other(0)).normal_vector(layout.total_dim());
        let e = RandomStream::new(1, 0, 0, 0, Purpose::Other(1)).normal_vector(tables.n_cell_inputs());
        let draw = tables.realize(&layout, &z, &e).unwrap();
        assert_eq!(draw.b[0], draw.b[1]);
    }

    #[test]
    fn csv_lists_every_dof() {
        let draw = WhiteNoiseDraw { b: vec![vec![1.0, 2.0]], haar_values: vec![] };
        let mut out = Vec::new();
        draw.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 3);
    }
}
