//! The lognormal diffusion test problem: `-∇·(e^u ∇p) = 1` on `G = (-1/2, 1/2)^d`
//! with `p = 0` on `∂G`, `u` a Matérn field sampled on `D = (-1, 1)^d`, and
//! `P = ‖p‖²_{L²(G)}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, functional_l2sq, inject, solve_lognormal_diffusion, HelmholtzSolver, MaternParams, SparseMatrix};
use crate::lowdisc::Purpose;
use crate::mesh::{BoxDomain, HaarMesh, MeshHierarchy, SimplicialMesh};
use crate::mlqmc::{LevelSample, LevelSampler, SampleContext, SamplingMode};
use crate::supermesh::{build_supermesh, build_three_way_supermesh, Supermesh};
use crate::whitenoise::{draw_hybrid_coefficients, draw_mc_coefficients, CellGeometryTables, HaarLayout, WhiteNoiseDraw};

/// Meshes and factored operators of one refinement level.
#[derive(Debug)]
pub struct MeshLevel {
    pub index: usize,
    pub g_mesh: SimplicialMesh,
    pub d_mesh: SimplicialMesh,
    pub injection: Vec<usize>,
    pub helmholtz: HelmholtzSolver,
    pub g_mass: SparseMatrix,
}

impl MeshLevel {
    /// Interior dofs solved for per realization of `P` on this level.
    pub fn solve_cost(&self) -> f64 {
        (self.helmholtz.n_interior() + self.g_mesh.n_interior()) as f64
    }
}

/// One multilevel level: refinement index, Haar level, and whether it is
/// coupled with refinement index `mesh_level - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelSpec {
    pub mesh_level: usize,
    pub haar_level: i32,
    pub coupled: bool,
}

impl LevelSpec {
    /// Uncoupled base at `mesh_levels[0]`, every later level coupled with its
    /// predecessor on the refinement axis.
    pub fn hierarchy(mesh_levels: &[usize], haar_levels: &[i32]) -> Result<Vec<Self>> {
        if mesh_levels.len() != haar_levels.len() {
            return Err(Error::LengthMismatch { expected: mesh_levels.len(), actual: haar_levels.len() });
        }
        if mesh_levels.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidArgument(format!("mesh levels must be consecutive: {mesh_levels:?}")));
        }
        if haar_levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!("Haar levels must be non-decreasing: {haar_levels:?}")));
        }
        Ok(mesh_levels
            .iter()
            .zip(haar_levels)
            .enumerate()
            .map(|(i, (&mesh_level, &haar_level))| LevelSpec { mesh_level, haar_level, coupled: i > 0 })
            .collect())
    }
}

/// Problem data shared by all levels.
#[derive(Debug)]
pub struct DiffusionProblem {
    pub dim: usize,
    pub g_box: BoxDomain,
    pub d_box: BoxDomain,
    pub params: MaternParams,
}

impl DiffusionProblem {
    pub fn new(dim: usize, params: MaternParams) -> Result<Self> {
        Self::with_boxes(BoxDomain::symmetric(dim, 0.5)?, BoxDomain::symmetric(dim, 1.0)?, params)
    }

    /// Field with `E[e^u] = 1`, `V[e^u] = 0.2`, correlation length 0.25.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(dim, MaternParams::lognormal(dim, 0.25, 1.0, 0.2)?)
    }

    pub fn with_boxes(g_box: BoxDomain, d_box: BoxDomain, params: MaternParams) -> Result<Self> {
        let dim = g_box.dim();
        if !(1..=2).contains(&dim) || d_box.dim() != dim || params.dim != dim {
            return Err(Error::InvalidArgument(format!("the diffusion problem supports d = 1, 2 (got {dim})")));
        }
        Ok(Self { dim, g_box, d_box, params })
    }

    pub fn mesh_level(&self, index: usize) -> Result<MeshLevel> {
        let h = MeshHierarchy::embedded_uniform(&self.g_box, &self.d_box, &[index], &[-1])?;
        let l = h.levels()[0].clone();
        let helmholtz = HelmholtzSolver::new(&l.d_mesh, self.params.kappa)?;
        let g_mass = assemble_mass(&l.g_mesh)?;
        Ok(MeshLevel { index, g_mesh: l.g_mesh, d_mesh: l.d_mesh, injection: l.injection, helmholtz, g_mass })
    }

    /// One sampler per `LevelSpec`; mesh levels are built once and shared.
    pub fn samplers(&self, specs: &[LevelSpec]) -> Result<Vec<DiffusionLevelSampler>> {
        let mut needed: Vec<usize> = Vec::new();
        for s in specs {
            if s.coupled && s.mesh_level == 0 {
                return Err(Error::InvalidArgument("mesh level 0 has no coarser partner".into()));
            }
            needed.push(s.mesh_level);
            if s.coupled {
                needed.push(s.mesh_level - 1);
            }
        }
        needed.sort_unstable();
        needed.dedup();
        let built = needed.par_iter().map(|&j| self.mesh_level(j).map(Arc::new)).collect::<Result<Vec<_>>>()?;
        let levels: BTreeMap<usize, Arc<MeshLevel>> = needed.into_iter().zip(built).collect();
        specs
            .par_iter()
            .map(|s| {
                let fine = levels[&s.mesh_level].clone();
                let coarse = s.coupled.then(|| levels[&(s.mesh_level - 1)].clone());
                DiffusionLevelSampler::new(fine, coarse, s.haar_level, self.params)
            })
            .collect()
    }
}

/// Intermediate fields of one sample, fine first.
#[derive(Clone, Debug)]
pub struct SampleFields {
    pub noise: WhiteNoiseDraw,
    pub u_d: Vec<Vec<f64>>,
    pub u_g: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

/// Sampler of `P_ℓ - P_{ℓ-1}` with white noise coupled through a supermesh.
#[derive(Debug)]
pub struct DiffusionLevelSampler {
    fine: Arc<MeshLevel>,
    coarse: Option<Arc<MeshLevel>>,
    layout: HaarLayout,
    supermesh: Supermesh,
    tables: CellGeometryTables,
    params: MaternParams,
}

impl DiffusionLevelSampler {
    pub fn new(fine: Arc<MeshLevel>, coarse: Option<Arc<MeshLevel>>, haar_level: i32, params: MaternParams) -> Result<Self> {
        let haar = HaarMesh::new(haar_level, fine.d_mesh.domain().clone())?;
        let layout = HaarLayout::new(haar_level, fine.d_mesh.dim())?;
        let (supermesh, tables) = match &coarse {
            None => {
                let sm = build_supermesh(&fine.d_mesh, &haar)?;
                let t = CellGeometryTables::from_supermesh(&sm, &[&fine.d_mesh], &haar)?;
                (sm, t)
            }
            Some(c) => {
                let sm = build_three_way_supermesh(&fine.d_mesh, &c.d_mesh, &haar)?;
                let t = CellGeometryTables::from_supermesh(&sm, &[&fine.d_mesh, &c.d_mesh], &haar)?;
                (sm, t)
            }
        };
        Ok(Self { fine, coarse, layout, supermesh, tables, params })
    }

    pub fn fine(&self) -> &MeshLevel {
        &self.fine
    }

    pub fn coarse(&self) -> Option<&MeshLevel> {
        self.coarse.as_deref()
    }

    pub fn layout(&self) -> &HaarLayout {
        &self.layout
    }

    pub fn supermesh(&self) -> &Supermesh {
        &self.supermesh
    }

    pub fn tables(&self) -> &CellGeometryTables {
        &self.tables
    }

    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    fn meshes(&self) -> impl Iterator<Item = &MeshLevel> {
        std::iter::once(&*self.fine).chain(self.coarse.as_deref())
    }

    /// White noise, Matérn fields, solutions and `P` values of one sample.
    pub fn realize(&self, ctx: &SampleContext) -> Result<SampleFields> {
        let tail = ctx.stream(Purpose::WaveletTail);
        let wavelet = match ctx.mode {
            SamplingMode::Hybrid => draw_hybrid_coefficients(&self.layout, ctx.sobol, ctx.shift, ctx.n, &tail)?,
            SamplingMode::PureMc => draw_mc_coefficients(&self.layout, &ctx.stream(Purpose::WaveletHead), &tail),
        };
        let cell_local = ctx.stream(Purpose::CellLocal).normal_vector(self.tables.n_cell_inputs());
        let noise = self.tables.realize(&self.layout, &wavelet, &cell_local)?;
        let mut out = SampleFields { noise, u_d: Vec::new(), u_g: Vec::new(), p: Vec::new(), values: Vec::new() };
        for (level, b) in self.meshes().zip(&out.noise.b) {
            let u_d = level.helmholtz.matern_field(&level.d_mesh, b, &self.params)?;
            let u_g = inject(&u_d, &level.injection);
            let p = solve_lognormal_diffusion(&level.g_mesh, &u_g)?;
            out.values.push(functional_l2sq(&level.g_mass, &p));
            out.u_d.push(u_d);
            out.u_g.push(u_g);
            out.p.push(p);
        }
        Ok(out)
    }
}

impl LevelSampler for DiffusionLevelSampler {
    fn qmc_dim(&self) -> usize {
        self.layout.qmc_dim()
    }

    fn cost_per_sample(&self) -> f64 {
        self.meshes().map(MeshLevel::solve_cost).sum()
    }

    fn level_index(&self) -> usize {
        self.fine.index
    }

    fn is_coupled(&self) -> bool {
        self.coarse.is_some()
    }

    fn sample(&self, ctx: &SampleContext) -> Result<LevelSample> {
        let f = self.realize(ctx)?;
        Ok(LevelSample { fine: f.values[0], coarse: f.values.get(1).copied().unwrap_or(0.0) })
    }
}
