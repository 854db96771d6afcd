//! The four experiment kinds and the artifact dumps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use mlqmc_core::fem::write_field_csv;
use mlqmc_core::lowdisc::{DigitalShift, Purpose, RandomStream};
use mlqmc_core::mlqmc::{
    as_dyn, mlmc_run, mlqmc_run, nvar_diagnostic, screening_run, sobol_for, write_nvar_csv, LevelAccumulator,
    LevelSampler, MlqmcOptions, MlqmcState, SampleContext, SyntheticSampler,
};
use mlqmc_core::problem::{DiffusionLevelSampler, DiffusionProblem, LevelSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{EstimatorKind, RunConfig};

/// Which artifacts to write besides the command's main output.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dumps {
    pub mesh: bool,
    pub supermesh: bool,
    pub noise: bool,
    pub field: bool,
}

/// Largest sample count tried by the single-level QMC estimator.
const QMC_MAX_N: u64 = 1 << 20;

pub enum Levels {
    Diffusion(Vec<DiffusionLevelSampler>),
    Synthetic(Vec<SyntheticSampler>),
}

impl Levels {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        match &cfg.synthetic {
            Some(s) => Ok(Levels::Synthetic(SyntheticSampler::geometric_family(s.levels, s.alpha, s.beta, s.gamma, s.sd0))),
            None => Ok(Levels::Diffusion(diffusion_samplers(cfg, &cfg.level_specs()?)?)),
        }
    }

    pub fn as_dyn(&self) -> Vec<&dyn LevelSampler> {
        match self {
            Levels::Diffusion(s) => as_dyn(s),
            Levels::Synthetic(s) => as_dyn(s),
        }
    }
}

fn diffusion_samplers(cfg: &RunConfig, specs: &[LevelSpec]) -> Result<Vec<DiffusionLevelSampler>> {
    let problem = DiffusionProblem::with_boxes(cfg.g_domain()?, cfg.d_domain()?, cfg.matern_params()?)?;
    Ok(problem.samplers(specs)?)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    outputs: &'a [String],
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct Versions {
    mlqmc_cli: &'static str,
    mlqmc_core: &'static str,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_json().as_bytes()))
}

/// Writes `<command>_manifest.json` next to the outputs.
fn write_manifest(cfg: &RunConfig, command: &str, outputs: &[String]) -> Result<()> {
    let m = Manifest {
        command,
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        versions: Versions { mlqmc_cli: env!("CARGO_PKG_VERSION"), mlqmc_core: mlqmc_core::VERSION },
        outputs,
        config: cfg,
    };
    let mut w = create(&cfg.out, &format!("{command}_manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &m)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Shift of randomization 0 on `level`, as drawn by the estimators.
fn first_shift(sampler: &dyn LevelSampler, level: usize, seed: u64) -> DigitalShift {
    DigitalShift::random(sampler.qmc_dim(), &RandomStream::new(seed, level as u64, 0, 0, Purpose::Shift))
}

fn space_name(space: usize) -> &'static str {
    if space == 0 {
        "fine"
    } else {
        "coarse"
    }
}

/// Mesh, supermesh, noise and field files of sample `cfg.sample` on every level.
fn dump(cfg: &RunConfig, levels: &Levels, dumps: Dumps, fields: bool, outputs: &mut Vec<String>) -> Result<()> {
    let samplers = match levels {
        Levels::Diffusion(s) => s,
        Levels::Synthetic(_) => {
            if fields || dumps.mesh || dumps.supermesh || dumps.noise || dumps.field {
                eprintln!("note: synthetic levels have no meshes or fields; nothing dumped");
            }
            return Ok(());
        }
    };
    let out = &cfg.out;
    let dyns = as_dyn(samplers);
    let sobol = sobol_for(&dyns)?;
    let mut written_meshes = std::collections::BTreeSet::new();
    for (i, s) in samplers.iter().enumerate() {
        let level = i + 1;
        let mut push = |name: String| outputs.push(name);
        if dumps.mesh {
            for m in std::iter::once(s.fine()).chain(s.coarse()) {
                if written_meshes.insert(m.index) {
                    for (tag, mesh) in [("d", &m.d_mesh), ("g", &m.g_mesh)] {
                        let name = format!("mesh_{}_{tag}.txt", m.index);
                        let mut w = create(out, &name)?;
                        mesh.write_text(&mut w)?;
                        w.flush()?;
                        push(name);
                    }
                }
            }
        }
        if dumps.supermesh {
            let name = format!("supermesh_level{level}.csv");
            let mut w = create(out, &name)?;
            s.supermesh().write_csv(&mut w)?;
            w.flush()?;
            push(name);
        }
        if !(fields || dumps.noise || dumps.field) {
            continue;
        }
        let shift = first_shift(s, level, cfg.seed);
        let ctx = SampleContext { level, m: 0, n: cfg.sample, seed: cfg.seed, shift: &shift, sobol: &sobol, mode: cfg.sampling };
        let f = s.realize(&ctx)?;
        let header = format!("# seed={} level={level} sample={}", cfg.seed, cfg.sample);
        if dumps.noise {
            let name = format!("noise_level{level}.csv");
            let mut w = create(out, &name)?;
            writeln!(w, "{header}")?;
            f.noise.write_csv(&mut w)?;
            w.flush()?;
            push(name);
        }
        let meshes: Vec<_> = std::iter::once(s.fine()).chain(s.coarse()).collect();
        for (space, mesh_level) in meshes.iter().enumerate() {
            let which = space_name(space);
            let mut files: Vec<(String, &mlqmc_core::mesh::SimplicialMesh, &[f64])> = Vec::new();
            if fields {
                files.push((format!("field_level{level}_{which}.csv"), &mesh_level.d_mesh, &f.u_d[space]));
            }
            if dumps.field {
                files.push((format!("field_g_level{level}_{which}.csv"), &mesh_level.g_mesh, &f.u_g[space]));
                files.push((format!("solution_level{level}_{which}.csv"), &mesh_level.g_mesh, &f.p[space]));
            }
            for (name, mesh, values) in files {
                let mut w = create(out, &name)?;
                writeln!(w, "{header}")?;
                write_field_csv(mesh, values, &mut w)?;
                w.flush()?;
                push(name);
            }
        }
    }
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<Levels> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    Levels::build(cfg)
}

pub fn cmd_field(cfg: &RunConfig, dumps: Dumps) -> Result<Vec<String>> {
    let levels = prepare(cfg)?;
    let mut outputs = Vec::new();
    dump(cfg, &levels, dumps, true, &mut outputs)?;
    write_manifest(cfg, "field", &outputs)?;
    Ok(outputs)
}

pub fn cmd_screen(cfg: &RunConfig, dumps: Dumps) -> Result<Vec<String>> {
    let levels = prepare(cfg)?;
    let mut outputs = Vec::new();
    dump(cfg, &levels, dumps, false, &mut outputs)?;
    let report = screening_run(&levels.as_dyn(), cfg.n_screen, cfg.randomizations, cfg.seed, cfg.sampling)?;
    let mut w = create(&cfg.out, "screening.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&cfg.out, "screening_rates.csv")?;
    writeln!(w, "alpha,beta,gamma")?;
    let fmt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:e}"));
    writeln!(w, "{},{},{}", fmt(report.alpha), fmt(report.beta), fmt(report.gamma))?;
    w.flush()?;
    outputs.extend(["screening.csv".to_string(), "screening_rates.csv".to_string()]);
    write_manifest(cfg, "screen", &outputs)?;
    Ok(outputs)
}

pub fn cmd_nvar(cfg: &RunConfig, dumps: Dumps) -> Result<Vec<String>> {
    let levels = prepare(cfg)?;
    let mut outputs = Vec::new();
    dump(cfg, &levels, dumps, false, &mut outputs)?;
    let rows = nvar_diagnostic(&levels.as_dyn(), &cfg.n_list, cfg.randomizations, cfg.seed, cfg.sampling)?;
    let mut w = create(&cfg.out, "nvar.csv")?;
    write_nvar_csv(&rows, &mut w)?;
    w.flush()?;
    outputs.push("nvar.csv".into());
    write_manifest(cfg, "nvar", &outputs)?;
    Ok(outputs)
}

/// One row of the estimate table.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub epsilon: f64,
    pub total_cost: f64,
    pub estimate: f64,
    pub levels: usize,
    pub converged: bool,
    pub n_per_level: Vec<u64>,
}

impl EstimateRow {
    fn from_state(epsilon: f64, s: &MlqmcState) -> Self {
        Self {
            epsilon,
            total_cost: s.total_cost,
            estimate: s.estimate,
            levels: s.levels.len(),
            converged: s.converged,
            n_per_level: s.sample_counts(),
        }
    }
}

/// Single-level randomized QMC on the finest level: `N` doubles until the
/// estimator variance is below `(1-θ)ε²`.
fn qmc_single_level(sampler: &dyn LevelSampler, cfg: &RunConfig, epsilon: f64) -> Result<EstimateRow> {
    let sobol = sobol_for(&[sampler])?;
    let mut acc = LevelAccumulator::new(1, sampler.qmc_dim(), cfg.randomizations, cfg.seed, cfg.sampling)?;
    let budget = (1.0 - cfg.theta) * epsilon * epsilon;
    let mut n = 1u64;
    loop {
        acc.extend_to(sampler, &sobol, n as u32)?;
        let converged = acc.variance_of_mean() <= budget;
        if converged || n >= QMC_MAX_N {
            return Ok(EstimateRow {
                epsilon,
                total_cost: cfg.randomizations as f64 * n as f64 * sampler.cost_per_sample(),
                estimate: acc.mean(),
                levels: 1,
                converged,
                n_per_level: vec![n],
            });
        }
        n *= 2;
    }
}

enum QmcLevel {
    Diffusion(DiffusionLevelSampler),
    Synthetic(SyntheticSampler),
}

/// The uncoupled finest level used by the single-level estimator.
fn finest_uncoupled(cfg: &RunConfig) -> Result<QmcLevel> {
    if let Some(s) = &cfg.synthetic {
        let family = SyntheticSampler::geometric_family(s.levels, s.alpha, s.beta, s.gamma, s.sd0);
        let last = family.last().expect("at least one level");
        return Ok(QmcLevel::Synthetic(SyntheticSampler {
            coupled: false,
            mean: last.coarse_offset + last.mean,
            coarse_offset: 0.0,
            ..last.clone()
        }));
    }
    let spec = LevelSpec {
        mesh_level: *cfg.mesh_levels.last().expect("validated"),
        haar_level: *cfg.haar_levels.last().expect("validated"),
        coupled: false,
    };
    Ok(QmcLevel::Diffusion(diffusion_samplers(cfg, &[spec])?.remove(0)))
}

/// Runs the configured estimator for every tolerance. Convergence failures
/// become rows with `converged = false`.
pub fn estimate_rows(cfg: &RunConfig) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::new();
    match cfg.estimator {
        EstimatorKind::Qmc => {
            let level = finest_uncoupled(cfg)?;
            let sampler: &dyn LevelSampler = match &level {
                QmcLevel::Diffusion(s) => s,
                QmcLevel::Synthetic(s) => s,
            };
            for &eps in &cfg.epsilons {
                rows.push(qmc_single_level(sampler, cfg, eps)?);
            }
        }
        kind => {
            let levels = Levels::build(cfg)?;
            let dyns = levels.as_dyn();
            for &eps in &cfg.epsilons {
                let options = MlqmcOptions {
                    epsilon: eps,
                    theta: cfg.theta,
                    l_min: cfg.l_min,
                    l_max: dyns.len(),
                    randomizations: cfg.randomizations,
                };
                let run = match kind {
                    EstimatorKind::Mlqmc => mlqmc_run(&dyns, &options, cfg.seed, cfg.sampling),
                    _ => mlmc_run(&dyns, &options, cfg.mlmc_n0, cfg.seed),
                };
                let state = match run {
                    Ok(s) => s,
                    Err(mlqmc_core::Error::ConvergenceFailure(s)) => *s,
                    Err(e) => return Err(e.into()),
                };
                rows.push(EstimateRow::from_state(eps, &state));
            }
        }
    }
    Ok(rows)
}

pub fn write_estimate_csv<W: Write>(rows: &[EstimateRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epsilon,total_cost,estimate,eps2_cost,levels,converged,n_per_level")?;
    for r in rows {
        let n: Vec<String> = r.n_per_level.iter().map(u64::to_string).collect();
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{},{},{}",
            r.epsilon,
            r.total_cost,
            r.estimate,
            r.epsilon * r.epsilon * r.total_cost,
            r.levels,
            r.converged,
            n.join(";")
        )?;
    }
    Ok(())
}

/// Returns the written files and whether every tolerance converged.
pub fn cmd_estimate(cfg: &RunConfig, dumps: Dumps) -> Result<(Vec<String>, bool)> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let mut outputs = Vec::new();
    if dumps.mesh || dumps.supermesh || dumps.noise || dumps.field {
        dump(cfg, &Levels::build(cfg)?, dumps, false, &mut outputs)?;
    }
    let rows = estimate_rows(cfg)?;
    let mut w = create(&cfg.out, "estimate.csv")?;
    write_estimate_csv(&rows, &mut w)?;
    w.flush()?;
    outputs.push("estimate.csv".into());
    write_manifest(cfg, "estimate", &outputs)?;
    Ok((outputs, rows.iter().all(|r| r.converged)))
}
