//! Named end-to-end runs driven by a JSON config, with deterministic file
//! outputs.

mod config;
pub mod oracles;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{
    parse_config, BcConfig, EpsilonRamp, PathRuleName, PresetName, RampShape, ScenarioConfig, ScenarioId, DEFAULT_K, DEFAULT_N,
    DEFAULT_N_2D, DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_STEPS,
};
pub use output::{data_blocks, fmt_float, Cell, OutputDir, Table};

use crate::boundary::{cayley_decompose, spectral_gap, torus_unitary, cylinder_unitary, BCPath, BoundaryUnitary, PHASE_SNAP_TOL};
use crate::dynamics::{
    adiabatic_fidelity, frozen_domain_propagate, gauge_map, run_faraday, GaugeDirection, SchedulerEps, Trajectory,
};
use crate::error::{Error, Result};
use crate::geometry::{boundary_operators, BoundaryOps, DomainSpec, Mesh};
use crate::linalg::{haar_unitary, weighted_vdot, C64};
use crate::operators::{assemble_laplacian, FaradayFamily};
use crate::spectra::{
    eigensolve, hypothesis_report_from_flow, spectral_flow, spectral_flow_samples, BracketBaseline, FlowOptions, FlowResult,
    HypothesisReport, SpectralResult,
};

pub const SCHEMA_VERSION: &str = "1";

/// Base directory for outputs when a config names none.
pub const DEFAULT_OUTPUT_BASE: &str = "qbound-out";

/// One internal invariant exercised by a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= limit,
            value,
            limit,
        }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= limit,
            value,
            limit,
        }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            pass,
            value: pass as u8 as f64,
            limit: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: &'static str,
    pub scenario: ScenarioId,
    /// The config with defaults filled.
    pub input: ScenarioConfig,
    pub headline: Value,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Emitted file names, relative to the output directory.
    pub files: Vec<String>,
    /// Wall-clock seconds per phase; written to `timings.json`, not to the
    /// report, so the report stays byte-identical across runs.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Output directory a config resolves to when the caller gives none.
pub fn default_output_dir(cfg: &ScenarioConfig, base: &Path) -> PathBuf {
    match &cfg.output {
        Some(dir) => PathBuf::from(dir),
        None => base.join(cfg.scenario.name()),
    }
}

/// Runs a scenario, writing into `cfg.output` or `qbound-out/<scenario>`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    let dir = default_output_dir(cfg, Path::new(DEFAULT_OUTPUT_BASE));
    run_scenario_in(cfg, &dir)
}

pub fn run_scenario_in(cfg: &ScenarioConfig, dir: &Path) -> Result<RunReport> {
    let wrap = |e: Error| Error::Scenario {
        scenario: cfg.scenario.name().to_string(),
        source: Box::new(e),
    };
    let mut run = Run {
        cfg,
        out: OutputDir::create(dir).map_err(wrap)?,
        checks: Vec::new(),
        headline: serde_json::Map::new(),
        timings: Vec::new(),
        clock: Instant::now(),
    };
    let start = Instant::now();
    let result = match cfg.scenario {
        ScenarioId::Spectrum => run.spectrum(),
        ScenarioId::Flow => run.flow(),
        ScenarioId::Faraday => run.faraday(),
        ScenarioId::ReconnectIntervals => run.reconnect(),
        ScenarioId::TorusVsCylinder => run.torus_vs_cylinder(),
        ScenarioId::BracketingSweep => run.bracketing(),
        ScenarioId::HypothesisReport => run.hypothesis(),
    };
    result.map_err(wrap)?;
    run.timings.push(("total".into(), start.elapsed().as_secs_f64()));
    run.finish(dir).map_err(wrap)
}

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    out: OutputDir,
    checks: Vec<Check>,
    headline: serde_json::Map<String, Value>,
    timings: Vec<(String, f64)>,
    clock: Instant,
}

fn path_of(domain: &Option<DomainSpec>) -> &DomainSpec {
    domain.as_ref().expect("filled by parse_config")
}

fn rel_floor(values: &[f64]) -> f64 {
    // eigenvalues at zero are compared absolutely against the first nonzero scale
    values.iter().copied().filter(|v| v.abs() > 1e-9).fold(f64::INFINITY, f64::min).min(1.0)
}

impl Run<'_> {
    fn lap(&mut self, name: &str) {
        self.timings.push((name.into(), self.clock.elapsed().as_secs_f64()));
        self.clock = Instant::now();
    }

    fn put(&mut self, key: &str, value: impl Serialize) {
        self.headline.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn mesh(&self) -> Result<(Mesh, BoundaryOps)> {
        let mesh = self.cfg.mesh()?;
        let bops = boundary_operators(&mesh)?;
        Ok((mesh, bops))
    }

    fn solve(&self, mesh: &Mesh, bops: &BoundaryOps, u: &BoundaryUnitary) -> Result<SpectralResult> {
        let bc = cayley_decompose(u, PHASE_SNAP_TOL)?;
        let op = assemble_laplacian(mesh, bops, &bc)?;
        eigensolve(&op, self.cfg.k().min(op.dim()))
    }

    fn solver_checks(&mut self, tag: &str, spec: &SpectralResult) {
        self.checks.push(Check::at_most(&format!("{tag}residual"), spec.max_residual(), spec.tolerance));
        self.checks
            .push(Check::at_most(&format!("{tag}orthonormality"), spec.orthonormality_defect(), 1e-10));
    }

    /// Oracle comparison: relative error and exact degeneracy pattern.
    fn oracle_checks(&mut self, tag: &str, computed: &[f64], exact: &[f64], tol: f64) -> f64 {
        let err = oracles::max_relative_error(computed, exact, rel_floor(exact));
        self.checks.push(Check::at_most(&format!("{tag}oracle_rel_error"), err, tol));
        let rel = crate::spectra::SolveOptions::default().cluster_rel;
        let same = oracles::degeneracies(computed, rel) == oracles::degeneracies(exact, 1e-9);
        self.checks.push(Check::flag(&format!("{tag}degeneracy_pattern"), same));
        err
    }

    fn oracle_tol(&self) -> f64 {
        match path_of(&self.cfg.domain) {
            DomainSpec::Rectangle { .. } => 1e-2,
            _ => 1e-3,
        }
    }

    fn eigen_table(spec: &SpectralResult, exact: Option<&[f64]>) -> Table {
        let mut t = Table::new(["lambda", "index", "residual", "oracle"]);
        for j in 0..spec.len() {
            let o = exact.and_then(|e| e.get(j).copied()).unwrap_or(f64::NAN);
            t.push(vec![spec.eigenvalues[j].into(), (j + 1).into(), spec.residuals[j].into(), o.into()]);
        }
        t
    }

    fn mode_blocks(mesh: &Mesh, spec: &SpectralResult) -> Vec<(String, Vec<Vec<f64>>)> {
        let arc = mesh.arc_length();
        let order: Vec<usize> = match mesh.segments() {
            Some(segs) => segs.iter().flat_map(|s| s.nodes.iter().copied()).collect(),
            None => (0..mesh.n_nodes()).collect(),
        };
        (0..spec.len())
            .map(|j| {
                let v = spec.nodal(j);
                let rows = order
                    .iter()
                    .map(|&g| match &arc {
                        Some(a) => vec![a[g], v[g].re, v[g].im],
                        None => vec![mesh.coords()[g][0], mesh.coords()[g][1], v[g].re, v[g].im],
                    })
                    .collect();
                (format!("mode {} lambda {}", j + 1, fmt_float(spec.eigenvalues[j])), rows)
            })
            .collect()
    }

    fn spectrum(&mut self) -> Result<()> {
        let (mesh, bops) = self.mesh()?;
        let bc = self.cfg.bc.clone().expect("filled");
        let u = bc.unitary(&mesh)?;
        let spec = self.solve(&mesh, &bops, &u)?;
        self.lap("solve");
        let exact = oracles::reference_spectrum(&bc, path_of(&self.cfg.domain), spec.len());
        self.solver_checks("", &spec);
        if let Some(e) = &exact {
            let err = self.oracle_checks("", &spec.eigenvalues, e, self.oracle_tol());
            self.put("max_rel_error", err);
            self.put("oracle", e);
        }
        let gap = spectral_gap(&u);
        self.put("eigenvalues", &spec.eigenvalues);
        self.put("degeneracies", spec.degeneracies());
        self.put("gap", gap);
        self.put("n_dirichlet", cayley_decompose(&u, PHASE_SNAP_TOL)?.n_dirichlet());
        self.put("n_nodes", mesh.n_nodes());
        self.out.csv("eigenvalues.csv", &Self::eigen_table(&spec, exact.as_deref()))?;
        self.out.blocks("modes.dat", &Self::mode_blocks(&mesh, &spec))?;
        self.lap("write");
        Ok(())
    }

    fn path(&self, mesh: &Mesh) -> Result<BCPath> {
        let steps = self.cfg.steps();
        match (&self.cfg.epsilon_ramp, &self.cfg.bc, &self.cfg.bc_end) {
            (Some(r), _, _) => BCPath::quasi_periodic_flux(r.from, r.to, steps),
            (None, Some(a), Some(b)) => {
                let rule = self.cfg.path_rule.unwrap_or(PathRuleName::Eigenphase).into();
                BCPath::new(a.unitary(mesh)?, b.unitary(mesh)?, rule, steps)
            }
            _ => Err(Error::Precondition("a path needs epsilon_ramp or bc and bc_end".into())),
        }
    }

    fn write_flow(&mut self, flow: &FlowResult) -> Result<()> {
        let k = flow.k();
        let mut t = Table::new(std::iter::once("s".to_string()).chain((1..=k).map(|i| format!("lambda_{i}"))));
        for (i, &s) in flow.samples.iter().enumerate() {
            let mut row: Vec<Cell> = vec![s.into()];
            row.extend(flow.sorted[i].iter().map(|&l| Cell::from(l)));
            t.push(row);
        }
        self.out.csv("flow.csv", &t)?;
        let blocks: Vec<(String, Vec<Vec<f64>>)> = (0..k)
            .map(|c| {
                let rows = flow.samples.iter().zip(&flow.curves[c]).map(|(&s, &l)| vec![s, l]).collect();
                (format!("curve {}", c + 1), rows)
            })
            .collect();
        self.out.blocks("curves.dat", &blocks)?;
        let mut g = Table::new(["s", "gap"]);
        for &(s, gap) in &flow.gap_profile {
            g.push(vec![s.into(), gap.into()]);
        }
        self.out.csv("gap.csv", &g)?;
        let mut c = Table::new(["lower", "upper", "s_from", "s_to", "s_estimate", "energy", "min_separation", "exchanged"]);
        for x in &flow.crossings {
            c.push(vec![
                (x.lower + 1).into(),
                (x.upper + 1).into(),
                x.s_from.into(),
                x.s_to.into(),
                x.s_estimate.into(),
                x.energy.into(),
                x.min_separation.into(),
                x.exchanged.into(),
            ]);
        }
        self.out.csv("crossings.csv", &c)
    }

    fn flow_summary(&mut self, flow: &FlowResult) {
        self.checks.push(Check::flag("permutations_injective", flow.permutations_are_injective()));
        self.checks.push(Check::at_least(
            "tracking_overlap",
            flow.min_overlap,
            FlowOptions::default().overlap_threshold,
        ));
        self.put("samples", flow.samples.len());
        self.put("refinements", flow.refinements);
        self.put("start", &flow.sorted[0]);
        self.put("end", flow.sorted.last());
        self.put("label_shift", flow.label_shift);
        self.put("start_labels", &flow.start_labels);
        self.put("end_labels", &flow.end_labels);
        self.put("exchanges", flow.exchanges().collect::<Vec<_>>());
        self.put("min_gap", flow.min_gap);
        self.put("min_ground", flow.min_ground);
        self.put("min_overlap", flow.min_overlap);
        self.put("lipschitz", flow.lipschitz);
        self.put("total_permutation", &flow.total_permutation);
    }

    /// Frozen-domain run from the lowest mode at `s = 0` when `T` is set.
    fn frozen(&mut self, path: &BCPath, mesh: &Mesh, bops: &BoundaryOps) -> Result<()> {
        let Some(duration) = self.cfg.duration else {
            return Ok(());
        };
        let dt = self.cfg.dt.expect("filled with T");
        let start = self.solve(mesh, bops, path.start())?;
        let psi0 = start.wavefunction(0);
        let traj = frozen_domain_propagate(path, mesh, bops, &psi0, 0.0, duration, dt)?;
        self.lap("propagate");
        let loss = *traj.projection_loss.last().expect("non-empty");
        let norm = traj.final_state().norm();
        // each projection multiplies |psi|^2 by (1 - loss_i) >= 1 - sum loss_i
        let accounted = norm * norm >= 1.0 - loss - 1e-10 && norm <= 1.0 + 1e-10;
        self.checks.push(Check::flag("norm_accounting", accounted));
        let end = self.solve(mesh, bops, path.end())?;
        let psi = traj.final_state();
        let w = mesh.weights();
        let nodal = psi.nodal();
        let mut pops = Table::new(["n", "lambda", "amplitude_re", "amplitude_im", "population"]);
        let mut total = 0.0;
        for j in 0..end.len() {
            let a = weighted_vdot(&end.nodal(j), w, &nodal);
            total += a.norm_sqr();
            pops.push(vec![(j + 1).into(), end.eigenvalues[j].into(), a.into(), a.norm_sqr().into()]);
        }
        self.out.csv("populations.csv", &pops)?;
        self.write_trajectory(&traj, "s")?;
        self.put("frozen_projection_loss", loss);
        self.put("frozen_final_norm", norm);
        self.put("frozen_population_in_k", total);
        Ok(())
    }

    fn write_trajectory(&mut self, traj: &Trajectory, param: &str) -> Result<()> {
        let mut t = Table::new(["t", param, "norm", "energy", "projection_loss"]);
        for i in 0..traj.len() {
            t.push(vec![
                traj.times[i].into(),
                traj.params[i].into(),
                traj.norms[i].into(),
                traj.energies[i].into(),
                traj.projection_loss[i].into(),
            ]);
        }
        self.out.csv("trajectory.csv", &t)
    }

    fn flow(&mut self) -> Result<()> {
        let (mesh, bops) = self.mesh()?;
        let path = self.path(&mesh)?;
        let flow = spectral_flow(&path, &mesh, &bops, self.cfg.k(), self.cfg.steps())?;
        self.lap("flow");
        self.flow_summary(&flow);
        self.write_flow(&flow)?;
        self.frozen(&path, &mesh, &bops)?;
        self.lap("write");
        Ok(())
    }

    fn reconnect(&mut self) -> Result<()> {
        let (mesh, bops) = self.mesh()?;
        let path = self.path(&mesh)?;
        let k = self.cfg.k();
        let flow = spectral_flow(&path, &mesh, &bops, k, self.cfg.steps())?;
        self.lap("flow");
        self.flow_summary(&flow);
        let domain = path_of(&self.cfg.domain).clone();
        let tol = self.oracle_tol();
        for (tag, bc, values) in [
            ("start_", self.cfg.bc.clone(), &flow.sorted[0]),
            ("end_", self.cfg.bc_end.clone(), flow.sorted.last().expect("non-empty")),
        ] {
            if let Some(exact) = bc.and_then(|b| oracles::reference_spectrum(&b, &domain, k)) {
                self.oracle_checks(tag, values, &exact, tol);
                self.put(&format!("{tag}oracle"), exact);
            }
        }
        let report = hypothesis_report_from_flow(&flow, &mesh);
        self.lap("hypothesis");
        self.write_flow(&flow)?;
        self.write_hypothesis(&report)?;
        self.frozen(&path, &mesh, &bops)?;
        self.lap("write");
        Ok(())
    }

    fn write_hypothesis(&mut self, r: &HypothesisReport) -> Result<()> {
        let mut t = Table::new([
            "s",
            "max_degeneracy",
            "growth_ratio",
            "intertwiner_d1",
            "intertwiner_d2",
            "hamiltonian_d1",
            "hamiltonian_d2",
        ]);
        for i in 0..r.samples.len() {
            t.push(vec![
                r.samples[i].into(),
                r.max_degeneracy[i].into(),
                r.growth_ratio[i].into(),
                r.intertwiner.first[i].into(),
                r.intertwiner.second[i].into(),
                r.hamiltonian.first[i].into(),
                r.hamiltonian.second[i].into(),
            ]);
        }
        self.out.csv("hypothesis.csv", &t)?;
        let finite = [r.max_growth_ratio, r.intertwiner.max_second, r.hamiltonian.max_second, r.min_lowest]
            .iter()
            .all(|v| v.is_finite());
        self.checks.push(Check::flag("hypothesis_proxies_finite", finite));
        self.put(
            "hypothesis",
            json!({
                "max_degeneracy": r.max_degeneracy_overall,
                "max_growth_ratio": r.max_growth_ratio,
                "intertwiner_max_d1": r.intertwiner.max_first,
                "intertwiner_max_d2": r.intertwiner.max_second,
                "intertwiner_spikes": r.intertwiner.spikes,
                "hamiltonian_max_d1": r.hamiltonian.max_first,
                "hamiltonian_max_d2": r.hamiltonian.max_second,
                "hamiltonian_spikes": r.hamiltonian.spikes,
                "min_lowest": r.min_lowest,
                "min_gap": r.min_gap,
            }),
        );
        Ok(())
    }

    fn hypothesis(&mut self) -> Result<()> {
        let (mesh, bops) = self.mesh()?;
        let path = self.path(&mesh)?;
        let flow = spectral_flow(&path, &mesh, &bops, self.cfg.k(), self.cfg.steps())?;
        self.lap("flow");
        self.flow_summary(&flow);
        let report = hypothesis_report_from_flow(&flow, &mesh);
        self.write_flow(&flow)?;
        self.write_hypothesis(&report)?;
        self.lap("write");
        Ok(())
    }

    fn faraday(&mut self) -> Result<()> {
        let mesh = self.cfg.mesh()?;
        let bops = boundary_operators(&mesh)?;
        let ramp = self.cfg.epsilon_ramp.clone().expect("filled");
        let duration = ramp.duration.expect("validated");
        let schedule = match ramp.shape {
            RampShape::Linear => SchedulerEps::linear_ramp(ramp.from, ramp.to, duration)?,
            RampShape::Smooth => SchedulerEps::smooth_ramp(ramp.from, ramp.to, duration)?,
        };
        let family = FaradayFamily::new(&mesh)?;
        // lowest mode of the reference-frame operator at the starting flux
        let psi0 = eigensolve(&family.operator(ramp.from, 0.0)?, 1)?.wavefunction(0);
        let traj = run_faraday(&schedule, &psi0, self.cfg.dt.expect("filled"))?;
        self.lap("propagate");

        let span = ramp.to - ramp.from;
        let mut grid: Vec<f64> = if span == 0.0 {
            vec![0.0, 1.0]
        } else {
            traj.params.iter().map(|&e| ((e - ramp.from) / span).clamp(0.0, 1.0)).collect()
        };
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        if grid.len() < 2 {
            grid = vec![0.0, 1.0];
        }
        let path = BCPath::quasi_periodic_flux(ramp.from, ramp.to, 2)?;
        let flow = spectral_flow_samples(&path, &mesh, &bops, self.cfg.k(), &grid, &FlowOptions::default())?;
        let fid = adiabatic_fidelity(&traj, &flow)?;
        self.lap("fidelity");

        self.checks.push(Check::at_most("norm_drift", traj.norm_drift(), 1e-10));
        let in_range = fid.ground.iter().chain(&fid.continued).all(|f| (0.0..=1.0 + 1e-12).contains(f));
        self.checks.push(Check::flag("fidelity_in_unit_interval", in_range));
        self.put("steps", traj.steps);
        self.put("dt", traj.dt);
        self.put("final_ground_overlap", fid.final_ground());
        self.put("final_continued_overlap", fid.continued.last());
        self.put("min_ground_overlap", fid.ground.iter().copied().fold(f64::INFINITY, f64::min));
        self.put("norm_drift", traj.norm_drift());
        self.put("schedule_bounds", schedule.bounds());
        self.put("exchanges", flow.exchanges().collect::<Vec<_>>());

        let rows: Vec<Vec<f64>> = fid.times.iter().zip(&fid.ground).map(|(&t, &f)| vec![t, f]).collect();
        self.out.blocks("fidelity.dat", &[("ground".into(), rows)])?;
        let mut t = Table::new(["t", "epsilon", "ground", "continued"]);
        for i in 0..fid.times.len() {
            t.push(vec![fid.times[i].into(), traj.params[i].into(), fid.ground[i].into(), fid.continued[i].into()]);
        }
        self.out.csv("fidelity.csv", &t)?;
        self.write_trajectory(&traj, "epsilon")?;
        let last = *traj.params.last().expect("non-empty");
        let phys = gauge_map(last, traj.final_state(), GaugeDirection::FromReference)?;
        let arc = mesh.arc_length().expect("ring");
        let order: Vec<usize> = mesh.segments().expect("ring")[0].nodes.clone();
        let values = phys.nodal();
        let mut f = Table::new(["theta", "psi_re", "psi_im"]);
        for g in order {
            f.push(vec![arc[g].into(), values[g].into()]);
        }
        self.out.csv("final_state.csv", &f)?;
        self.lap("write");
        Ok(())
    }

    fn torus_vs_cylinder(&mut self) -> Result<()> {
        let (mesh, bops) = self.mesh()?;
        let &DomainSpec::Rectangle { width, height } = path_of(&self.cfg.domain) else {
            return Err(Error::UnsupportedDomain("torus_vs_cylinder needs a rectangle".into()));
        };
        let k = self.cfg.k();
        let torus = self.solve(&mesh, &bops, &torus_unitary(&mesh)?)?;
        self.lap("torus");
        let cylinder = self.solve(&mesh, &bops, &cylinder_unitary(&mesh)?)?;
        self.lap("cylinder");
        for (tag, spec, exact, file) in [
            ("torus_", &torus, oracles::torus(width, height, k), "torus.csv"),
            ("cylinder_", &cylinder, oracles::cylinder(width, height, k), "cylinder.csv"),
        ] {
            self.solver_checks(tag, spec);
            let err = self.oracle_checks(tag, &spec.eigenvalues, &exact, 1e-2);
            self.put(&format!("{tag}eigenvalues"), &spec.eigenvalues);
            self.put(&format!("{tag}degeneracies"), spec.degeneracies());
            self.put(&format!("{tag}max_rel_error"), err);
            self.out.csv(file, &Self::eigen_table(spec, Some(&exact)))?;
        }
        self.lap("write");
        Ok(())
    }

    fn bracketing(&mut self) -> Result<()> {
        let (mesh, bops) = self.mesh()?;
        let k = self.cfg.k();
        let base = BracketBaseline::new(&mesh, &bops, k)?;
        let n_b = mesh.n_boundary();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed());
        let mut table = Table::new([
            "sample",
            "n",
            "neumann",
            "value",
            "dirichlet",
            "lower_margin",
            "upper_margin",
        ]);
        let mut passed = 0usize;
        let mut worst = f64::INFINITY;
        let samples = self.cfg.samples.unwrap_or(DEFAULT_SAMPLES);
        for i in 0..samples {
            let v = haar_unitary(n_b, &mut rng);
            let signs: Vec<f64> = (0..n_b).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n_b, |j, _| C64::new(signs[j], 0.0)));
            let u = BoundaryUnitary::new(&v * d * v.adjoint())?;
            let r = base.check(&mesh, &bops, &u)?;
            passed += r.pass as usize;
            worst = worst.min(r.min_margin());
            for row in &r.rows {
                table.push(vec![
                    (i + 1).into(),
                    row.n.into(),
                    row.neumann.into(),
                    row.value.into(),
                    row.dirichlet.into(),
                    row.lower_margin.into(),
                    row.upper_margin.into(),
                ]);
            }
        }
        self.lap("sweep");
        self.checks.push(Check::at_least("bracket_holds", passed as f64, samples as f64));
        self.put("samples", samples);
        self.put("passed", passed);
        self.put("tolerance", base.tolerance);
        self.put("min_margin", worst);
        self.put("neumann", &base.neumann);
        self.put("dirichlet", &base.dirichlet);
        self.out.csv("bracketing.csv", &table)?;
        self.lap("write");
        Ok(())
    }

    fn finish(mut self, dir: &Path) -> Result<RunReport> {
        let timings: serde_json::Map<String, Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        self.out.json("timings.json", &timings)?;
        let mut files = self.out.files().to_vec();
        files.push("report.json".into());
        let pass = self.checks.iter().all(|c| c.pass);
        let report = RunReport {
            schema_version: SCHEMA_VERSION,
            scenario: self.cfg.scenario,
            input: self.cfg.clone(),
            headline: Value::Object(self.headline),
            checks: self.checks,
            pass,
            files,
            timings: self.timings,
            output_dir: dir.to_path_buf(),
        };
        self.out.json("report.json", &report)?;
        Ok(report)
    }
}
