//! The stages behind the subcommands. Each stage loads its prerequisites
//! from the store when they are present and fresh, builds them when absent,
//! and refuses to read them when they were built from other inputs.

use std::cell::OnceCell;

use serde::{Deserialize, Serialize};

use super::config::{CaseSelector, RunConfig, Stage};
use super::store::{num, ArtifactStore};
use crate::correctors::{homogenized_coefficients, solve_correctors, CorrectorSet, HomogenizedCoefficients};
use crate::error::{Error, Result};
use crate::finescale::{assemble_fine, fitted_dt, ErrorAccumulator, FineSolver, PhaseAverages};
use crate::kernel::{
    kernel_series, kernel_wave_oracle, mode_couplings, resolvent_kernel, time_grid, KernelBundle, ModalData,
};
use crate::macroscale::{
    InitialData, MacroBoundary, MacroCoefficients, MacroGrid, MacroRecord, MacroSolver, MemoryForce,
};
use crate::perfem::{
    assemble_constrained_forms, assemble_periodic_elasticity, CgReport, ConstrainedForms, ElasticTensor,
    PeriodicElasticity,
};
use crate::spectrum::{solve_modes, EigenMode, EigenOptions, ModeSet};
use crate::unitcell::{
    boundary_direction_rank, build_geometry, sample_magnetic_field, CellGeometry, DirectionRank, GeometryConfig,
    MagneticField, SampledField,
};

/// Which alternative of the limit problem the field selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// The hard phase is frozen at u0.
    I,
    /// alpha solves the memory equation.
    Ii,
}

/// Geometry, sampled field and tensors of one cell resolution.
pub struct Cell {
    pub geom: CellGeometry,
    pub field: SampledField,
    pub rank: DirectionRank,
    pub case: Case,
    pub a1: ElasticTensor,
    pub a2: ElasticTensor,
}

impl Cell {
    pub fn build(cfg: &RunConfig, geometry: &GeometryConfig) -> Result<Self> {
        let geom = build_geometry(geometry)?;
        let magnetic = MagneticField::new(&cfg.field)?;
        let field = sample_magnetic_field(&magnetic, &geom)?;
        let rank = boundary_direction_rank(&magnetic, &geom)?;
        let case = match (cfg.scenario.case, rank.rank) {
            (CaseSelector::Auto, 1) | (CaseSelector::Ii, 1) => Case::Ii,
            (CaseSelector::Auto, _) | (CaseSelector::I, 2..) => Case::I,
            (CaseSelector::I, _) => {
                return Err(Error::Config(
                    "scenario.case = i needs b to span at least two directions on the interface".into(),
                ))
            }
            (CaseSelector::Ii, r) => {
                return Err(Error::Config(format!(
                    "scenario.case = ii needs one interface direction, found rank {r}"
                )))
            }
        };
        if case == Case::Ii && field.xi.is_none() {
            return Err(Error::Config(
                "the memory equation needs an interface direction xi".into(),
            ));
        }
        Ok(Cell {
            geom,
            field,
            rank,
            case,
            a1: cfg.tensors.a1.build()?,
            a2: cfg.tensors.a2.build()?,
        })
    }

    pub fn xi(&self) -> Option<[f64; 3]> {
        self.field.xi
    }
}

/// Everything computed on one cell: modes, correctors, coefficients.
pub struct CellSolution {
    pub modes: ModeSet,
    pub coupling: Option<Vec<f64>>,
    pub correctors: Option<CorrectorSet>,
    pub a1star: [[f64; 6]; 6],
    pub coeffs: Option<HomogenizedCoefficients>,
    pub example_case: bool,
}

impl CellSolution {
    /// Modal data with the couplings, or with zero couplings and xi = 0 in
    /// case (i), where only the averages h-bar are used.
    pub fn modal(&self) -> Result<ModalData> {
        match (&self.coupling, &self.coeffs) {
            (Some(c), Some(h)) => ModalData::from_modes(&self.modes, c.clone(), h.xi),
            _ => ModalData::from_modes(&self.modes, vec![0.0; self.modes.len()], [0.0; 3]),
        }
    }
}

pub fn solve_cell_modes(
    cell: &Cell,
    forms: &ConstrainedForms,
    requested: usize,
) -> Result<(ModeSet, Option<Vec<f64>>, f64, f64)> {
    let count = requested.min(forms.dim());
    let (modes, report) = solve_modes(forms, count, &EigenOptions::default())?;
    let coupling = if cell.xi().is_some() {
        Some(mode_couplings(&modes, forms)?)
    } else {
        None
    };
    Ok((modes, coupling, report.max_residual, report.max_orthogonality_defect))
}

/// Correctors and the coefficients they feed.
pub fn solve_cell_coefficients(
    cell: &Cell,
    op: &PeriodicElasticity,
    forms: &ConstrainedForms,
    cfg: &RunConfig,
) -> Result<(CorrectorSet, [[f64; 6]; 6], Option<HomogenizedCoefficients>, bool)> {
    let corr = solve_correctors(op, &cell.field, &cfg.fem)?;
    let a1star = crate::correctors::effective_tensor(op, &corr);
    let coeffs = if cell.xi().is_some() {
        Some(homogenized_coefficients(op, &corr, forms, &cell.field)?)
    } else {
        None
    };
    let example = coeffs
        .as_ref()
        .is_some_and(|c| c.is_constant_direction_inclusion_case(&cell.field));
    Ok((corr, a1star, coeffs, example))
}

/// The complete cell computation in memory, used by the convergence study.
pub fn solve_cell(cfg: &RunConfig, geometry: &GeometryConfig) -> Result<(Cell, CellSolution)> {
    let cell = Cell::build(cfg, geometry)?;
    let forms = assemble_constrained_forms(&cell.a2, &cell.field, &cell.geom)?;
    let (modes, coupling, _, _) = solve_cell_modes(&cell, &forms, cfg.discretization.modes)?;
    let op = assemble_periodic_elasticity(&cell.a1, &cell.geom)?;
    let (corr, a1star, coeffs, example_case) = solve_cell_coefficients(&cell, &op, &forms, cfg)?;
    Ok((
        cell,
        CellSolution {
            modes,
            coupling,
            correctors: Some(corr),
            a1star,
            coeffs,
            example_case,
        },
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub inclusion_volume: f64,
    pub matrix_volume: f64,
    pub inclusion_voxels: usize,
    pub case: Case,
    pub interface_rank: usize,
    pub interface_direction: [f64; 3],
    pub interface_singular_values: [f64; 3],
    pub fixed_direction: bool,
    pub xi: Option<[f64; 3]>,
    pub b_max: f64,
    pub matrix_integral_b: [f64; 3],
    pub bhat_sq_integral: f64,
    pub bhat_integral: [f64; 3],
    pub bhat_gradient_norm: Option<f64>,
    pub geometry_fingerprint: String,
    pub field_fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModesFile {
    pub requested: usize,
    pub count: usize,
    pub dim: usize,
    pub mu: Vec<f64>,
    pub hbar: Vec<[f64; 3]>,
    pub coupling: Option<Vec<f64>>,
    pub max_residual: f64,
    pub max_orthogonality_defect: f64,
    pub forms_fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffsFile {
    pub case: Case,
    #[serde(rename = "A1star")]
    pub a1star: [[f64; 6]; 6],
    pub homogenized: Option<HomogenizedCoefficients>,
    pub example_case: bool,
}

#[derive(Debug, Clone, Serialize)]
struct CorrectorsFile {
    names: Vec<String>,
    cg: Vec<CgReport>,
    geometry_fingerprint: String,
}

/// Limit fields at one comparison instant, on the macro grid.
pub struct LimitSample {
    pub t: f64,
    pub alpha: Vec<f64>,
    pub u2_avg: Vec<[f64; 3]>,
}

/// Result of one fine run.
pub struct FineRun {
    pub eps: f64,
    pub rows: Vec<Vec<String>>,
    pub averages: Vec<PhaseAverages>,
    pub dt: f64,
    pub steps: usize,
}

pub const FINE_HEADER: [&str; 12] = [
    "eps",
    "t",
    "total_energy",
    "kinetic_energy",
    "modified_energy",
    "hard_u1",
    "hard_u2",
    "hard_u3",
    "soft_u1",
    "soft_u2",
    "soft_u3",
    "work",
];

pub const CONVERGE_HEADER: [&str; 3] = ["eps", "err_hard_phase", "err_soft_phase"];

pub struct Pipeline {
    pub cfg: RunConfig,
    pub store: ArtifactStore,
    pub seed: u64,
    cell: OnceCell<Cell>,
    forms: OnceCell<ConstrainedForms>,
    periodic: OnceCell<PeriodicElasticity>,
    modes: OnceCell<(ModeSet, Option<Vec<f64>>)>,
    coeffs: OnceCell<CoeffsFile>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, store: ArtifactStore, seed: u64) -> Self {
        Pipeline {
            cfg,
            store,
            seed,
            cell: OnceCell::new(),
            forms: OnceCell::new(),
            periodic: OnceCell::new(),
            modes: OnceCell::new(),
            coeffs: OnceCell::new(),
        }
    }

    pub fn cell(&self) -> Result<&Cell> {
        if let Some(c) = self.cell.get() {
            return Ok(c);
        }
        let c = Cell::build(&self.cfg, &self.cfg.geometry)?;
        Ok(self.cell.get_or_init(|| c))
    }

    pub fn forms(&self) -> Result<&ConstrainedForms> {
        if let Some(f) = self.forms.get() {
            return Ok(f);
        }
        let cell = self.cell()?;
        let f = assemble_constrained_forms(&cell.a2, &cell.field, &cell.geom)?;
        Ok(self.forms.get_or_init(|| f))
    }

    pub fn periodic(&self) -> Result<&PeriodicElasticity> {
        if let Some(p) = self.periodic.get() {
            return Ok(p);
        }
        let cell = self.cell()?;
        let p = assemble_periodic_elasticity(&cell.a1, &cell.geom)?;
        Ok(self.periodic.get_or_init(|| p))
    }

    /// Validates the cell and writes `cell.json` and the sampled field.
    pub fn run_cell(&mut self) -> Result<CellSummary> {
        let fp = self.cfg.fingerprint(Stage::Cell);
        let cell = self.cell()?;
        let summary = CellSummary {
            n: cell.geom.n(),
            inclusion_volume: cell.geom.inclusion_volume(),
            matrix_volume: cell.geom.matrix_volume(),
            inclusion_voxels: cell.geom.inclusion_count(),
            case: cell.case,
            interface_rank: cell.rank.rank,
            interface_direction: cell.rank.direction,
            interface_singular_values: cell.rank.singular_values,
            fixed_direction: cell.field.fixed_direction,
            xi: cell.xi(),
            b_max: cell.field.b_max,
            matrix_integral_b: cell.field.matrix_integral,
            bhat_sq_integral: cell.field.bhat_sq_integral,
            bhat_integral: cell.field.bhat_integral,
            bhat_gradient_norm: cell.field.bhat_gradient_norm(&cell.geom),
            geometry_fingerprint: cell.geom.fingerprint().to_string(),
            field_fingerprint: cell.field.fingerprint.clone(),
        };
        let b = cell.field.b_field();
        let n = cell.geom.n();
        let values = b.values.clone();
        self.store.write_raw("cell/b.f64", &values, &[n, n, n], 3, &fp)?;
        self.store.write_json("cell.json", &summary, &fp)?;
        Ok(summary)
    }

    /// Modes from the store or a fresh solve (`force` always solves).
    pub fn modes(&mut self, force: bool) -> Result<&(ModeSet, Option<Vec<f64>>)> {
        if self.modes.get().is_none() {
            let loaded = if force { None } else { self.load_modes()? };
            let m = match loaded {
                Some(m) => m,
                None => self.solve_and_store_modes()?,
            };
            let _ = self.modes.set(m);
        }
        Ok(self.modes.get().unwrap())
    }

    fn load_modes(&self) -> Result<Option<(ModeSet, Option<Vec<f64>>)>> {
        let fp = self.cfg.fingerprint(Stage::Modes);
        if !self.store.is_fresh("modes/modes.json", &fp)? {
            return Ok(None);
        }
        let file: ModesFile = self.store.read_json("modes/modes.json")?;
        let mut modes = Vec::with_capacity(file.count);
        for i in 0..file.count {
            let name = mode_name(i);
            if !self.store.is_fresh(&name, &fp)? {
                return Err(Error::Missing(vec![name]));
            }
            let (s, _) = self.store.read_raw(&name)?;
            modes.push(EigenMode {
                mu: file.mu[i],
                s,
                hbar: file.hbar[i],
            });
        }
        Ok(Some((
            ModeSet {
                modes,
                dim: file.dim,
                fingerprint: file.forms_fingerprint,
            },
            file.coupling,
        )))
    }

    fn solve_and_store_modes(&mut self) -> Result<(ModeSet, Option<Vec<f64>>)> {
        let fp = self.cfg.fingerprint(Stage::Modes);
        let requested = self.cfg.discretization.modes;
        let (modes, coupling, res, orth) = solve_cell_modes(self.cell()?, self.forms()?, requested)?;
        let file = ModesFile {
            requested,
            count: modes.len(),
            dim: modes.dim,
            mu: modes.modes.iter().map(|m| m.mu).collect(),
            hbar: modes.modes.iter().map(|m| m.hbar).collect(),
            coupling: coupling.clone(),
            max_residual: res,
            max_orthogonality_defect: orth,
            forms_fingerprint: modes.fingerprint.clone(),
        };
        for (i, m) in modes.modes.iter().enumerate() {
            self.store.write_raw(&mode_name(i), &m.s, &[m.s.len()], 1, &fp)?;
        }
        self.store.write_json("modes/modes.json", &file, &fp)?;
        Ok((modes, coupling))
    }

    /// Coefficients from the store or a fresh corrector solve.
    pub fn coefficients(&mut self, force: bool) -> Result<&CoeffsFile> {
        if self.coeffs.get().is_none() {
            let fp = self.cfg.fingerprint(Stage::Correctors);
            let c = if !force && self.store.is_fresh("coeffs.json", &fp)? {
                self.store.read_json("coeffs.json")?
            } else {
                self.solve_and_store_correctors()?
            };
            let _ = self.coeffs.set(c);
        }
        Ok(self.coeffs.get().unwrap())
    }

    fn solve_and_store_correctors(&mut self) -> Result<CoeffsFile> {
        let fp = self.cfg.fingerprint(Stage::Correctors);
        let (corr, a1star, coeffs, example_case) =
            solve_cell_coefficients(self.cell()?, self.periodic()?, self.forms()?, &self.cfg)?;
        let op = self.periodic()?;
        let n = self.cell()?.geom.n();
        let mut names = Vec::new();
        let fields: Vec<(String, Vec<f64>)> = corr
            .w
            .iter()
            .zip(["w_11", "w_22", "w_33", "w_23", "w_13", "w_12"])
            .map(|(w, name)| (name.to_string(), w.clone()))
            .chain(
                corr.theta
                    .iter()
                    .enumerate()
                    .map(|(j, t)| (format!("theta_{}", j + 1), t.clone())),
            )
            .map(|(name, compressed)| {
                let mut full = vec![0.0; 3 * n * n * n];
                for u in 0..op.op.num_unknown_nodes() {
                    let node = op.op.unknown_node(u);
                    full[3 * node..3 * node + 3].copy_from_slice(&compressed[3 * u..3 * u + 3]);
                }
                (name, full)
            })
            .collect();
        for (name, full) in &fields {
            self.store
                .write_raw(&format!("correctors/{name}.f64"), full, &[n, n, n], 3, &fp)?;
            names.push(name.clone());
        }
        let info = CorrectorsFile {
            names,
            cg: corr.reports.clone(),
            geometry_fingerprint: corr.geometry_fingerprint.clone(),
        };
        self.store.write_json("correctors/correctors.json", &info, &fp)?;
        let file = CoeffsFile {
            case: self.cell()?.case,
            a1star,
            homogenized: coeffs,
            example_case,
        };
        self.store.write_json("coeffs.json", &file, &fp)?;
        Ok(file)
    }

    fn cell_solution(&mut self) -> Result<CellSolution> {
        let (modes, coupling) = self.modes(false)?.clone();
        let c = self.coefficients(false)?;
        Ok(CellSolution {
            modes,
            coupling,
            correctors: None,
            a1star: c.a1star,
            coeffs: c.homogenized.clone(),
            example_case: c.example_case,
        })
    }

    /// Series kernel, its wave-equation counterpart when b has a constant
    /// direction on the inclusion, and the resolvent of the Volterra equation.
    pub fn run_kernel(&mut self) -> Result<KernelBundle> {
        let fp = self.cfg.fingerprint(Stage::Kernel);
        let sol = self.cell_solution()?;
        let modal = sol.modal()?;
        let kc = self.cfg.discretization.kernel.clone();
        let t = time_grid(kc.t_end, kc.dt)?;
        let bundle = kernel_series(&modal, &t, &fp)?;
        let cell = self.cell()?;
        let wave = match (cell.case, cell.field.fixed_direction, cell.xi()) {
            (Case::Ii, true, Some(xi)) => Some(kernel_wave_oracle(&cell.a2, &cell.geom, xi, &t, kc.wave_cfl)?),
            _ => None,
        };
        let rows: Vec<Vec<String>> = (0..t.len())
            .map(|k| {
                let kb = bundle.kbarbar[k];
                let series = if cell.case == Case::Ii {
                    num(bundle.kbar1[k])
                } else {
                    String::new()
                };
                let w = wave.as_ref().map(|w| num(w.kbar1[k])).unwrap_or_default();
                vec![
                    num(t[k]),
                    series,
                    w,
                    num(kb[0][0]),
                    num(kb[0][1]),
                    num(kb[0][2]),
                    num(kb[1][1]),
                    num(kb[1][2]),
                    num(kb[2][2]),
                ]
            })
            .collect();
        let header = [
            "t",
            "kbar1_series",
            "kbar1_wave",
            "K11",
            "K12",
            "K13",
            "K22",
            "K23",
            "K33",
        ];
        if let Some(h) = &sol.coeffs {
            let kernel = bundle.memory_kernel(h.big_mstar);
            let res = resolvent_kernel(&kernel, t.len() - 1)?;
            let rrows: Vec<Vec<String>> = res
                .l
                .iter()
                .enumerate()
                .map(|(k, l)| vec![num(t[k + 1]), num(*l)])
                .collect();
            self.store.write_csv("resolvent.csv", &["t", "L"], &rrows, &fp)?;
        }
        self.store.write_csv("kernel.csv", &header, &rows, &fp)?;
        Ok(bundle)
    }

    fn initial_data(&self) -> Result<InitialData> {
        let data = InitialData::new(&self.cfg.scenario.spec())?;
        data.check_boundary()?;
        Ok(data)
    }

    /// Integrates the macroscopic equation and writes `macro.csv`.
    pub fn run_macro(&mut self) -> Result<Vec<MacroRecord>> {
        let fp = self.cfg.fingerprint(Stage::Macro);
        if self.cell()?.case == Case::I {
            return Err(Error::Unsupported(
                "b spans several interface directions: the hard phase is frozen at u0 and there is no equation for alpha"
                    .into(),
            ));
        }
        let sol = self.cell_solution()?;
        let data = self.initial_data()?;
        let (records, _) = macro_trajectory(&self.cfg, &sol, &data, false)?;
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    num(r.t),
                    num(r.mean_alpha),
                    r.mean_ubar_xi.map(num).unwrap_or_default(),
                    num(r.max_alpha),
                ]
            })
            .collect();
        self.store.write_csv(
            "macro.csv",
            &["t", "mean_alpha", "mean_ubar_xi", "max_alpha"],
            &rows,
            &fp,
        )?;
        Ok(records)
    }

    /// Fine runs for every configured eps; writes `fine.csv`.
    pub fn run_fine(&mut self) -> Result<Vec<FineRun>> {
        let fp = self.cfg.fingerprint(Stage::Fine);
        let data = self.initial_data()?;
        let cell = Cell::build(&self.cfg, &self.cfg.fine_geometry())?;
        let runs = self
            .cfg
            .discretization
            .fine
            .eps
            .iter()
            .map(|&eps| fine_run(&self.cfg, &cell, &data, eps))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<String>> = runs.iter().flat_map(|r| r.rows.clone()).collect();
        self.store.write_csv("fine.csv", &FINE_HEADER, &rows, &fp)?;
        Ok(runs)
    }

    /// Fine runs against the limit for every eps; writes `converge.csv`
    /// and `fine.csv`. Returns (eps, hard error, soft error) rows.
    pub fn run_converge(&mut self) -> Result<Vec<[f64; 3]>> {
        let fp = self.cfg.fingerprint(Stage::Converge);
        let data = self.initial_data()?;
        let (table, runs) = convergence_study(&self.cfg, &data)?;
        let rows: Vec<Vec<String>> = table.iter().map(|r| r.iter().map(|x| num(*x)).collect()).collect();
        self.store.write_csv("converge.csv", &CONVERGE_HEADER, &rows, &fp)?;
        let fine_rows: Vec<Vec<String>> = runs.iter().flat_map(|r| r.rows.clone()).collect();
        self.store
            .write_csv("fine.csv", &FINE_HEADER, &fine_rows, &self.cfg.fingerprint(Stage::Fine))?;
        Ok(table)
    }
}

fn mode_name(i: usize) -> String {
    format!("modes/mode_{i:04}.f64")
}

fn sampling_interval(cfg: &RunConfig) -> f64 {
    cfg.discretization.t_end / cfg.discretization.samples as f64
}

/// Runs the macroscopic solver to t_end. Returns the per-step records and,
/// when `sample` is set, the limit fields at every comparison instant.
pub fn macro_trajectory(
    cfg: &RunConfig,
    sol: &CellSolution,
    data: &InitialData,
    sample: bool,
) -> Result<(Vec<MacroRecord>, Vec<LimitSample>)> {
    let h = sol
        .coeffs
        .as_ref()
        .ok_or_else(|| Error::Unsupported("the memory equation needs the homogenized coefficients".into()))?;
    let mc = &cfg.discretization.macro_;
    let mut modal = sol.modal()?;
    if let Some(cap) = mc.modes {
        modal = modal.truncated(cap);
    }
    let coeffs = MacroCoefficients::new(h, modal, sol.example_case);
    let grid = MacroGrid::new(mc.cells, mc.boundary)?;
    if mc.boundary == MacroBoundary::Dirichlet {
        data.check_boundary()?;
    }
    let interval = sampling_interval(cfg);
    let dt = match mc.dt {
        Some(dt) => dt,
        None => fitted_dt(interval, coeffs.stable_dt(grid.h())),
    };
    let every = (interval / dt).round() as usize;
    let mut solver = MacroSolver::new(grid, coeffs, data, dt)?;
    let mut records = Vec::new();
    let mut samples = Vec::new();
    solver.run(cfg.discretization.t_end, |s| {
        records.push(s.record());
        let step = s.state().step;
        if sample && step > 0 && step % every == 0 {
            let lim = s.limits();
            samples.push(LimitSample {
                t: s.time(),
                alpha: s.state().alpha.clone(),
                u2_avg: lim.u2_avg,
            });
        }
        Ok(())
    })?;
    Ok((records, samples))
}

/// int_{Y2} u2 at the comparison instants when alpha = 0 (frozen hard phase).
pub fn frozen_trajectory(cfg: &RunConfig, sol: &CellSolution, data: &InitialData) -> Result<Vec<LimitSample>> {
    let grid = MacroGrid::new(cfg.discretization.macro_.cells, MacroBoundary::Dirichlet)?;
    let modal = sol.modal()?;
    let interval = sampling_interval(cfg);
    // G_i is exact for f linear in time over a step; the substeps only
    // resolve the time dependence of f.
    let sub = 8;
    let dt = interval / sub as f64;
    let mut force = MemoryForce::new(grid, data, &modal, &ElasticTensor::identity(), [0.0; 3], dt)?;
    let mut out = Vec::new();
    for k in 1..=cfg.discretization.samples {
        for _ in 0..sub {
            force.advance();
        }
        out.push(LimitSample {
            t: k as f64 * interval,
            alpha: vec![0.0; grid.len()],
            u2_avg: force.u2_free(),
        });
    }
    Ok(out)
}

/// One fine simulation sampled at the comparison instants (t = 0 included).
/// `cell` is already at the fine resolution, so no further refinement.
pub fn fine_run(cfg: &RunConfig, cell: &Cell, data: &InitialData, eps: f64) -> Result<FineRun> {
    let coeffs = assemble_fine(&cell.geom, &cell.field, &cell.a1, &cell.a2, eps, 1)?;
    let interval = sampling_interval(cfg);
    let dt = fitted_dt(interval, coeffs.stable_dt);
    let every = (interval / dt).round() as usize;
    let mut solver = FineSolver::new(&coeffs, data, dt)?;
    let mut rows = Vec::new();
    let mut averages = Vec::new();
    let total = every * cfg.discretization.samples;
    let mut push = |s: &FineSolver| {
        let e = s.energy();
        let a = s.phase_average();
        rows.push(vec![
            num(eps),
            num(s.time()),
            num(e.total),
            num(e.kinetic),
            num(e.modified),
            num(a.hard_total[0]),
            num(a.hard_total[1]),
            num(a.hard_total[2]),
            num(a.soft_total[0]),
            num(a.soft_total[1]),
            num(a.soft_total[2]),
            num(e.work),
        ]);
        averages.push(a);
    };
    push(&solver);
    for step in 1..=total {
        solver.step()?;
        if step % every == 0 {
            push(&solver);
        }
    }
    Ok(FineRun {
        eps,
        rows,
        averages,
        dt,
        steps: total,
    })
}

/// Hard and soft limit averages at the eps-cell centres.
fn targets(
    grid: &MacroGrid,
    sample: &LimitSample,
    data: &InitialData,
    centers: &[[f64; 3]],
    xi: [f64; 3],
    y1: f64,
    y2: f64,
) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let u2: [Vec<f64>; 3] = std::array::from_fn(|d| sample.u2_avg.iter().map(|v| v[d]).collect());
    centers
        .iter()
        .map(|&c| {
            let u0 = data.u0(c);
            let a = grid.interpolate(&sample.alpha, c);
            let u1: [f64; 3] = std::array::from_fn(|d| u0[d] + a * xi[d]);
            let hard = u1.map(|v| y1 * v);
            let soft = std::array::from_fn(|d| y2 * u1[d] + grid.interpolate(&u2[d], c));
            (hard, soft)
        })
        .unzip()
}

/// Compares fine runs at every configured eps with the limit computed on the
/// same cell resolution. Rows are (eps, hard RMS error, soft RMS error).
pub fn convergence_study(cfg: &RunConfig, data: &InitialData) -> Result<(Vec<[f64; 3]>, Vec<FineRun>)> {
    let (cell, sol) = solve_cell(cfg, &cfg.fine_geometry())?;
    let samples = match cell.case {
        Case::Ii => macro_trajectory(cfg, &sol, data, true)?.1,
        Case::I => frozen_trajectory(cfg, &sol, data)?,
    };
    let grid = MacroGrid::new(cfg.discretization.macro_.cells, MacroBoundary::Dirichlet)?;
    let xi = match cell.case {
        Case::Ii => cell.xi().unwrap(),
        Case::I => [0.0; 3],
    };
    let (y1, y2) = (cell.geom.matrix_volume(), cell.geom.inclusion_volume());
    let mut table = Vec::new();
    let mut runs = Vec::new();
    for &eps in &cfg.discretization.fine.eps {
        let run = fine_run(cfg, &cell, data, eps)?;
        let mut acc = ErrorAccumulator::default();
        for (avg, sample) in run.averages.iter().skip(1).zip(&samples) {
            if (avg.t - sample.t).abs() > 1e-9 * sample.t {
                return Err(Error::Numerical(format!(
                    "fine and limit sampling instants differ: {} vs {}",
                    avg.t, sample.t
                )));
            }
            let (hard, soft) = targets(&grid, sample, data, &avg.centers, xi, y1, y2);
            acc.add(avg, &hard, &soft);
        }
        let (eh, es) = acc.rms();
        table.push([eps, eh, es]);
        runs.push(run);
    }
    Ok((table, runs))
}
