//! Time evolution: Crank-Nicolson stepping, the flux ramp in the reference
//! frame, and frozen-domain stepping along general boundary paths.

use std::borrow::Cow;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::boundary::{alpha_for_flux, cayley_decompose, unitary_from_preset, BCPath, BoundaryUnitary, Preset, PHASE_SNAP_TOL};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryOps, Mesh};
use crate::linalg::{BorderedLu, C64, I, ONE};
use crate::operators::{assemble_laplacian, periodic_bc, FaradayFamily, HermitianOperator, Lift, Wavefunction};
use crate::spectra::FlowResult;

/// Largest recorded samples kept by default.
const DEFAULT_RECORDS: usize = 1000;

/// Source of the operator at time `t`.
pub trait Generator {
    fn operator_at(&self, t: f64) -> Result<Cow<'_, HermitianOperator>>;

    /// True when the operator does not depend on `t`.
    fn is_static(&self) -> bool {
        false
    }
}

impl Generator for HermitianOperator {
    fn operator_at(&self, _t: f64) -> Result<Cow<'_, HermitianOperator>> {
        Ok(Cow::Borrowed(self))
    }

    fn is_static(&self) -> bool {
        true
    }
}

/// A time-dependent generator from a closure.
pub struct TimeDependent<F>(pub F);

impl<F: Fn(f64) -> Result<HermitianOperator>> Generator for TimeDependent<F> {
    fn operator_at(&self, t: f64) -> Result<Cow<'_, HermitianOperator>> {
        (self.0)(t).map(Cow::Owned)
    }
}

/// The reference-frame Faraday operator driven by a flux schedule.
pub struct FaradayGenerator<'a> {
    pub family: &'a FaradayFamily,
    pub schedule: &'a SchedulerEps,
}

impl Generator for FaradayGenerator<'_> {
    fn operator_at(&self, t: f64) -> Result<Cow<'_, HermitianOperator>> {
        self.family
            .operator(self.schedule.eps(t), self.schedule.eps_dot(t))
            .map(Cow::Owned)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// States live on the fixed domain of the operator they were stepped with.
    Fixed,
    /// Gauge-transformed states on the periodic reference ring.
    Reference,
    /// States on the instantaneous domain of a boundary path.
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    None,
    /// Flux `eps(t)`.
    Flux,
    /// Path parameter `s(t)` in `[0, 1]`.
    Path,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Wavefunction>,
    pub norms: Vec<f64>,
    pub energies: Vec<f64>,
    /// Schedule parameter at each recorded time.
    pub params: Vec<f64>,
    pub param_kind: ParamKind,
    /// Cumulative projection loss at each recorded time (frozen domain).
    pub projection_loss: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub scheme: &'static str,
    pub frame: Frame,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &Wavefunction {
        self.states.last().expect("trajectories record the initial state")
    }

    /// `max_k | |psi_k| - |psi_0| |`
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.norms[0];
        self.norms.iter().map(|n| (n - n0).abs()).fold(0.0, f64::max)
    }

    /// `max_k |E_k - E_0| / max(|E_0|, 1)`
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1.0)
    }

    /// For a reference-frame flux trajectory, the states mapped back to
    /// their instantaneous quasi-periodic domains.
    pub fn physical_states(&self) -> Result<Vec<Wavefunction>> {
        if self.frame != Frame::Reference || self.param_kind != ParamKind::Flux {
            return Err(Error::Precondition("physical states need a reference-frame flux trajectory".into()));
        }
        self.states
            .iter()
            .zip(&self.params)
            .map(|(psi, &eps)| gauge_map(eps, psi, GaugeDirection::FromReference))
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct PropagateOptions {
    /// Record every this many steps; 0 picks a stride giving at most 1000
    /// records. The final state is always recorded.
    pub record_every: usize,
}

fn step_grid(t0: f64, t1: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    if !(t1 >= t0) {
        return Err(Error::Validation(format!("end time {t1} precedes start time {t0}")));
    }
    let steps = ((t1 - t0) / dt).round() as usize;
    if steps == 0 {
        return Ok((0, dt));
    }
    Ok((steps, (t1 - t0) / steps as f64))
}

fn stride(opts: &PropagateOptions, steps: usize) -> usize {
    if opts.record_every > 0 {
        opts.record_every
    } else {
        steps.div_ceil(DEFAULT_RECORDS).max(1)
    }
}

/// Factorization of `M + i dt/2 K` together with `K`.
struct CnStep {
    lu: BorderedLu,
}

impl CnStep {
    fn new(op: &HermitianOperator, dt: f64) -> Result<Self> {
        let lu = op
            .stiffness()
            .shifted(ONE, op.mass(), I * (0.5 * dt))
            .factor()?;
        Ok(Self { lu })
    }

    /// `(M + i dt/2 K)^{-1} (M - i dt/2 K) x`
    fn apply(&self, op: &HermitianOperator, dt: f64, x: &DVector<C64>) -> DVector<C64> {
        let kx = op.apply(x);
        let mut rhs = x.clone();
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = *r * op.mass()[i] - I * (0.5 * dt) * kx[i];
        }
        self.lu.solve(&rhs)
    }
}

fn check_compatible(op: &HermitianOperator, psi: &Wavefunction) -> Result<()> {
    if op.dim() != psi.amplitudes().len() {
        return Err(Error::Dimension(format!(
            "state has {} amplitudes, the operator acts on {}",
            psi.amplitudes().len(),
            op.dim()
        )));
    }
    Ok(())
}

/// Crank-Nicolson from `t0` to `t1` with the generator at step midpoints.
pub fn propagate(gen: &dyn Generator, psi0: &Wavefunction, t0: f64, t1: f64, dt: f64) -> Result<Trajectory> {
    propagate_with(gen, psi0, t0, t1, dt, &PropagateOptions::default())
}

pub fn propagate_with(
    gen: &dyn Generator,
    psi0: &Wavefunction,
    t0: f64,
    t1: f64,
    dt: f64,
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    let (steps, dt) = step_grid(t0, t1, dt)?;
    let every = stride(opts, steps);
    let lift = psi0.lift().clone();
    let first = gen.operator_at(t0)?;
    check_compatible(&first, psi0)?;
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![psi0.clone()],
        norms: vec![psi0.norm()],
        energies: vec![first.energy(psi0.amplitudes()) * psi0.norm().powi(2)],
        params: vec![0.0],
        param_kind: ParamKind::None,
        projection_loss: vec![0.0],
        dt,
        steps,
        scheme: "crank_nicolson_midpoint",
        frame: Frame::Fixed,
    };
    let fixed = if gen.is_static() {
        Some(CnStep::new(&first, dt)?)
    } else {
        None
    };
    drop(first);
    let mut x = psi0.amplitudes().clone();
    for k in 0..steps {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        let op = gen.operator_at(t_mid)?;
        check_compatible(&op, psi0)?;
        x = match &fixed {
            Some(step) => step.apply(&op, dt, &x),
            None => CnStep::new(&op, dt)?.apply(&op, dt, &x),
        };
        if (k + 1) % every == 0 || k + 1 == steps {
            let t = t0 + (k + 1) as f64 * dt;
            let at = if gen.is_static() { op } else { gen.operator_at(t)? };
            let psi = Wavefunction::new(x.clone(), lift.clone())?;
            traj.times.push(if k + 1 == steps { t1 } else { t });
            traj.norms.push(psi.norm());
            traj.energies.push(at.apply(&x).dotc(&x).re);
            traj.states.push(psi);
            traj.params.push(0.0);
            traj.projection_loss.push(0.0);
        }
    }
    Ok(traj)
}

/// Flux schedule `eps(t)` sampled with its first two derivatives and
/// interpolated by cubic Hermite segments.
#[derive(Clone, Debug, Serialize)]
pub struct SchedulerEps {
    times: Vec<f64>,
    eps: Vec<f64>,
    eps_dot: Vec<f64>,
    eps_ddot: Vec<f64>,
}

/// Samples used for closed-form schedules.
const SCHEDULE_SAMPLES: usize = 4001;

impl SchedulerEps {
    /// Checks strictly increasing times and derivative samples that agree
    /// with finite differences of the samples they differentiate.
    pub fn from_samples(times: Vec<f64>, eps: Vec<f64>, eps_dot: Vec<f64>, eps_ddot: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n < 3 || eps.len() != n || eps_dot.len() != n || eps_ddot.len() != n {
            return Err(Error::Validation("a flux schedule needs at least 3 samples of equal length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("schedule times must increase strictly".into()));
        }
        if times.iter().chain(&eps).chain(&eps_dot).chain(&eps_ddot).any(|v| !v.is_finite()) {
            return Err(Error::Validation("schedule contains non-finite samples".into()));
        }
        let s = Self {
            times,
            eps,
            eps_dot,
            eps_ddot,
        };
        s.validate()?;
        Ok(s)
    }

    fn from_fn(duration: f64, f: impl Fn(f64) -> (f64, f64, f64)) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::Validation(format!("schedule duration must be positive, got {duration}")));
        }
        let times: Vec<f64> = (0..SCHEDULE_SAMPLES)
            .map(|i| duration * i as f64 / (SCHEDULE_SAMPLES - 1) as f64)
            .collect();
        let vals: Vec<(f64, f64, f64)> = times.iter().map(|&t| f(t)).collect();
        Self::from_samples(
            times,
            vals.iter().map(|v| v.0).collect(),
            vals.iter().map(|v| v.1).collect(),
            vals.iter().map(|v| v.2).collect(),
        )
    }

    pub fn constant(eps: f64, duration: f64) -> Result<Self> {
        Self::from_fn(duration, |_| (eps, 0.0, 0.0))
    }

    pub fn linear_ramp(from: f64, to: f64, duration: f64) -> Result<Self> {
        let rate = (to - from) / duration;
        Self::from_fn(duration, |t| (from + rate * t, rate, 0.0))
    }

    /// `from + (to - from) (1 - cos(pi t / T)) / 2`: zero rate at both ends.
    pub fn smooth_ramp(from: f64, to: f64, duration: f64) -> Result<Self> {
        let w = std::f64::consts::PI / duration;
        let a = 0.5 * (to - from);
        Self::from_fn(duration, |t| {
            (from + a * (1.0 - (w * t).cos()), a * w * (w * t).sin(), a * w * w * (w * t).cos())
        })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("validated")
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(self.start(), self.end());
        let i = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        };
        let h = self.times[i + 1] - self.times[i];
        (i, (t - self.times[i]) / h)
    }

    pub fn eps(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        let h = self.times[i + 1] - self.times[i];
        let (p0, p1, m0, m1) = (self.eps[i], self.eps[i + 1], self.eps_dot[i] * h, self.eps_dot[i + 1] * h);
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * p0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * p1 + (u3 - u2) * m1
    }

    pub fn eps_dot(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        let h = self.times[i + 1] - self.times[i];
        let (p0, p1, m0, m1) = (self.eps[i], self.eps[i + 1], self.eps_dot[i] * h, self.eps_dot[i + 1] * h);
        let u2 = u * u;
        ((6.0 * u2 - 6.0 * u) * p0 + (3.0 * u2 - 4.0 * u + 1.0) * m0 + (-6.0 * u2 + 6.0 * u) * p1 + (3.0 * u2 - 2.0 * u) * m1) / h
    }

    pub fn eps_ddot(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        self.eps_ddot[i] + u * (self.eps_ddot[i + 1] - self.eps_ddot[i])
    }

    /// `(max |eps_dot|, max |eps_ddot|)` over the samples.
    pub fn bounds(&self) -> (f64, f64) {
        let m = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        (m(&self.eps_dot), m(&self.eps_ddot))
    }

    /// Derivative samples against three-point finite differences of the
    /// samples, to `1e-6` relative to the largest derivative.
    pub fn validate(&self) -> Result<()> {
        let check = |f: &[f64], df: &[f64], what: &str| -> Result<()> {
            let fd = three_point(&self.times, f);
            let scale = df.iter().map(|x| x.abs()).fold(1.0, f64::max);
            for (i, (a, b)) in fd.iter().zip(df).enumerate() {
                if (a - b).abs() > 1e-6 * scale {
                    return Err(Error::Validation(format!(
                        "{what} sample {i} at t = {} is {b}, finite differences give {a}",
                        self.times[i]
                    )));
                }
            }
            Ok(())
        };
        check(&self.eps, &self.eps_dot, "eps_dot")?;
        check(&self.eps_dot, &self.eps_ddot, "eps_ddot")
    }
}

fn three_point(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let j = i.saturating_sub(1).min(n - 3);
            let (x0, x1, x2) = (x[j], x[j + 1], x[j + 2]);
            let at = x[i];
            f[j] * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2))
                + f[j + 1] * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2))
                + f[j + 2] * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaugeDirection {
    /// Quasi-periodic domain of flux `eps` to the periodic reference:
    /// multiply by `exp(-i eps theta)`.
    ToReference,
    /// Multiply by `exp(i eps theta)`.
    FromReference,
}

fn require_ring(mesh: &Mesh) -> Result<()> {
    match mesh.segments() {
        Some([s]) if s.a.abs() <= 1e-12 && (s.b - 2.0 * std::f64::consts::PI).abs() <= 1e-12 => Ok(()),
        _ => Err(Error::UnsupportedDomain("the gauge map acts on the ring [0, 2 pi]".into())),
    }
}

/// Lift of the quasi-periodic domain with flux `eps`.
pub fn flux_lift(mesh: &Mesh, eps: f64) -> Result<Arc<Lift>> {
    let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha: alpha_for_flux(eps) }, 2)?;
    Ok(Arc::new(Lift::new(Arc::new(mesh.clone()), cayley_decompose(&u, PHASE_SNAP_TOL)?)?))
}

/// Pointwise multiplication by `exp(-/+ i eps theta_j)`.
pub fn gauge_map(eps: f64, psi: &Wavefunction, direction: GaugeDirection) -> Result<Wavefunction> {
    let mesh = psi.lift().mesh();
    require_ring(mesh)?;
    let (sign, target) = match direction {
        GaugeDirection::ToReference => (-1.0, Arc::new(Lift::new(psi.lift().mesh_arc().clone(), periodic_bc()?)?)),
        GaugeDirection::FromReference => (1.0, flux_lift(mesh, eps)?),
    };
    gauge_map_onto(eps * sign, psi, target)
}

/// Multiplies by `exp(i phase theta_j)` and expresses the result in `target`.
pub fn gauge_map_onto(phase: f64, psi: &Wavefunction, target: Arc<Lift>) -> Result<Wavefunction> {
    let mesh = psi.lift().mesh();
    let nodal: Vec<C64> = psi
        .nodal()
        .into_iter()
        .zip(mesh.coords())
        .map(|(z, c)| z * C64::from_polar(1.0, phase * c[0]))
        .collect();
    Wavefunction::from_nodal(&nodal, target)
}

/// Evolves a reference-frame state under the Faraday operator of `schedule`.
pub fn run_faraday(schedule: &SchedulerEps, psi0: &Wavefunction, dt: f64) -> Result<Trajectory> {
    run_faraday_with(schedule, psi0, dt, &PropagateOptions::default())
}

pub fn run_faraday_with(schedule: &SchedulerEps, psi0: &Wavefunction, dt: f64, opts: &PropagateOptions) -> Result<Trajectory> {
    schedule.validate()?;
    let family = FaradayFamily::new(psi0.lift().mesh())?;
    let residual = family.lift().nodal_dirichlet_residual(&psi0.nodal());
    if residual > 1e-8 * psi0.norm().max(1.0) {
        return Err(Error::Precondition(format!(
            "initial state is not periodic (constraint residual {residual:.3e})"
        )));
    }
    let start = Wavefunction::from_nodal(&psi0.nodal(), family.lift().clone())?;
    let gen = FaradayGenerator {
        family: &family,
        schedule,
    };
    let mut traj = propagate_with(&gen, &start, schedule.start(), schedule.end(), dt, opts)?;
    traj.params = traj.times.iter().map(|&t| schedule.eps(t)).collect();
    traj.param_kind = ParamKind::Flux;
    traj.frame = Frame::Reference;
    Ok(traj)
}

/// Overlaps of a trajectory with instantaneous eigenvectors of a flow.
#[derive(Clone, Debug, Serialize)]
pub struct FidelityCurve {
    pub times: Vec<f64>,
    /// `|<psi, M v_ground>| / (|psi| |v_ground|)` with the instantaneous
    /// lowest mode.
    pub ground: Vec<f64>,
    /// Same with the curve continued adiabatically from the initial lowest
    /// mode (tracked curve 0).
    pub continued: Vec<f64>,
}

impl FidelityCurve {
    pub fn final_ground(&self) -> f64 {
        *self.ground.last().expect("non-empty")
    }
}

/// Parameter of each flow sample in the units of the trajectory.
fn flow_params(flow: &FlowResult, kind: ParamKind) -> Result<Vec<f64>> {
    match kind {
        ParamKind::Path => Ok(flow.samples.clone()),
        ParamKind::Flux => flow
            .fluxes
            .clone()
            .ok_or_else(|| Error::Precondition("flow carries no flux values; use a flux path".into())),
        ParamKind::None => Err(Error::Precondition("trajectory has no schedule parameter".into())),
    }
}

pub fn adiabatic_fidelity(traj: &Trajectory, flow: &FlowResult) -> Result<FidelityCurve> {
    let params = flow_params(flow, traj.param_kind)?;
    let w = &flow.weights;
    let mut out = FidelityCurve {
        times: Vec::with_capacity(traj.len()),
        ground: Vec::with_capacity(traj.len()),
        continued: Vec::with_capacity(traj.len()),
    };
    for (k, psi) in traj.states.iter().enumerate() {
        let p = traj.params[k];
        let i = params
            .iter()
            .position(|&q| (q - p).abs() <= 1e-12 * p.abs().max(1.0))
            .ok_or_else(|| Error::Validation(format!("schedule mismatch: no flow sample at parameter {p} (t = {})", traj.times[k])))?;
        let mut nodal = psi.nodal();
        if traj.frame == Frame::Reference {
            // flow vectors are physical; bring the state to the same frame
            let coords = psi.lift().mesh().coords();
            for (z, c) in nodal.iter_mut().zip(coords) {
                *z *= C64::from_polar(1.0, p * c[0]);
            }
        }
        let norm = crate::linalg::weighted_vdot(&nodal, w, &nodal).re.sqrt();
        let overlap = |v: &[C64]| {
            let nv = crate::linalg::weighted_vdot(v, w, v).re.sqrt();
            crate::linalg::weighted_vdot(v, w, &nodal).norm() / (nv * norm)
        };
        out.times.push(traj.times[k]);
        out.ground.push(overlap(&flow.ground[i]));
        out.continued.push(overlap(&flow.tracked_vector(0, i)));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FrozenOptions {
    /// Largest projection loss accepted in one step.
    pub loss_tol: f64,
    pub propagate: PropagateOptions,
}

impl Default for FrozenOptions {
    fn default() -> Self {
        Self {
            loss_tol: 1e-3,
            propagate: PropagateOptions::default(),
        }
    }
}

/// Crank-Nicolson on the instantaneous domain of `path` at
/// `s = (t - t0) / (t1 - t0)`. Before each step the state is projected
/// onto the reduced space at the step midpoint; the lost norm fraction is
/// accumulated, not renormalized.
pub fn frozen_domain_propagate(
    path: &BCPath,
    mesh: &Mesh,
    bops: &BoundaryOps,
    psi0: &Wavefunction,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory> {
    frozen_domain_propagate_with(path, mesh, bops, psi0, t0, t1, dt, &FrozenOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn frozen_domain_propagate_with(
    path: &BCPath,
    mesh: &Mesh,
    bops: &BoundaryOps,
    psi0: &Wavefunction,
    t0: f64,
    t1: f64,
    dt: f64,
    opts: &FrozenOptions,
) -> Result<Trajectory> {
    let (steps, dt) = step_grid(t0, t1, dt)?;
    if !(t1 > t0) {
        return Err(Error::Validation("frozen-domain stepping needs t1 > t0".into()));
    }
    let every = stride(&opts.propagate, steps);
    let s_of = |t: f64| ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    let build = |u: &BoundaryUnitary| -> Result<HermitianOperator> {
        assemble_laplacian(mesh, bops, &cayley_decompose(u, PHASE_SNAP_TOL)?)
    };
    let mut u = path.at(0.0)?;
    let mut op = build(&u)?;
    let residual = op.lift().nodal_dirichlet_residual(&psi0.nodal());
    if residual > 1e-8 * psi0.norm().max(1.0) {
        return Err(Error::Precondition(format!(
            "initial state violates the boundary condition at t0 (constraint residual {residual:.3e})"
        )));
    }
    let mut x = op.lift().restrict(&psi0.nodal());
    let mut cn = CnStep::new(&op, dt)?;
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![Wavefunction::new(x.clone(), op.lift().clone())?],
        norms: vec![x.norm()],
        energies: vec![op.apply(&x).dotc(&x).re],
        params: vec![0.0],
        param_kind: ParamKind::Path,
        projection_loss: vec![0.0],
        dt,
        steps,
        scheme: "frozen_domain_crank_nicolson",
        frame: Frame::Frozen,
    };
    let mut cumulative = 0.0;
    for k in 0..steps {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        let u_mid = path.at(s_of(t_mid))?;
        if u_mid != u {
            let next = build(&u_mid)?;
            let before = x.norm_squared();
            let nodal = op.lift().apply(&x);
            x = next.lift().restrict(&nodal);
            let loss = if before > 0.0 { (1.0 - x.norm_squared() / before).max(0.0) } else { 0.0 };
            if loss > opts.loss_tol {
                return Err(Error::ProjectionLoss {
                    t: t_mid,
                    loss,
                    tolerance: opts.loss_tol,
                });
            }
            cumulative += loss;
            op = next;
            u = u_mid;
            cn = CnStep::new(&op, dt)?;
        }
        x = cn.apply(&op, dt, &x);
        if (k + 1) % every == 0 || k + 1 == steps {
            let t = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * dt };
            traj.times.push(t);
            traj.norms.push(x.norm());
            traj.energies.push(op.apply(&x).dotc(&x).re);
            traj.states.push(Wavefunction::new(x.clone(), op.lift().clone())?);
            traj.params.push(s_of(t));
            traj.projection_loss.push(cumulative);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_operators, make_mesh_with, DomainSpec, Resolution};
    use crate::operators::{assemble_faraday, laplacian_for};
    use crate::spectra::eigensolve;
    use std::f64::consts::PI;

    fn ring(cells: usize) -> Mesh {
        make_mesh_with(&DomainSpec::ring(), Resolution::Cells(cells)).unwrap()
    }

    #[test]
    fn stationary_state_keeps_its_modulus() {
        let op = assemble_faraday(&ring(64), 0.0, 0.0).unwrap();
        let spec = eigensolve(&op, 1).unwrap();
        let psi0 = spec.wavefunction(0);
        let traj = propagate(&op, &psi0, 0.0, 1.0, 1e-2).unwrap();
        for psi in &traj.states {
            assert!((psi.inner(&psi0).norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(traj.steps, 100);
    }

    #[test]
    fn quasi_periodic_mode_phase() {
        let m = ring(256);
        let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha: alpha_for_flux(0.25) }, 2).unwrap();
        let op = laplacian_for(&m, &u).unwrap();
        let spec = eigensolve(&op, 3).unwrap();
        // index 2 is n = 1 with energy 1.25^2
        assert!((spec.eigenvalues[2] - 1.5625).abs() < 1e-3);
        let psi0 = spec.wavefunction(2);
        let traj = propagate(&op, &psi0, 0.0, 1.0, 1e-3).unwrap();
        let phase = psi0.inner(traj.final_state()).arg();
        let expect = -spec.eigenvalues[2];
        let diff = (phase - expect + PI).rem_euclid(2.0 * PI) - PI;
        assert!(diff.abs() / expect.abs() < 1e-4, "{diff}");
    }

    #[test]
    fn composition_law_on_a_shared_grid() {
        let m = ring(64);
        let fam = FaradayFamily::new(&m).unwrap();
        let sched = SchedulerEps::smooth_ramp(0.0, 0.3, 1.0).unwrap();
        let gen = FaradayGenerator { family: &fam, schedule: &sched };
        let psi0 = Wavefunction::from_nodal(&m.sample(|x, _| C64::from_polar(1.0, x) + 0.5), fam.lift().clone()).unwrap();
        let whole = propagate(&gen, &psi0, 0.0, 1.0, 0.01).unwrap();
        let a = propagate(&gen, &psi0, 0.0, 0.4, 0.01).unwrap();
        let b = propagate(&gen, a.final_state(), 0.4, 1.0, 0.01).unwrap();
        let d = (whole.final_state().amplitudes() - b.final_state().amplitudes()).norm();
        assert!(d < 1e-12, "{d}");
        let id = propagate(&gen, &psi0, 0.4, 0.4, 0.01).unwrap();
        assert_eq!(id.final_state().amplitudes(), psi0.amplitudes());
    }

    #[test]
    fn gauge_map_examples() {
        let m = ring(128);
        let eps = 0.25;
        let lift = flux_lift(&m, eps).unwrap();
        let phys = Wavefunction::from_nodal(&m.sample(|x, _| C64::from_polar(1.0, 1.25 * x)), lift).unwrap();
        let r = gauge_map(eps, &phys, GaugeDirection::ToReference).unwrap();
        let expect = m.sample(|x, _| C64::from_polar(1.0, x));
        let err = r.nodal().iter().zip(&expect).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        let back = gauge_map(eps, &r, GaugeDirection::FromReference).unwrap();
        let err = back.nodal().iter().zip(phys.nodal()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!((r.norm() - phys.norm()).abs() < 1e-12);
        let same = gauge_map(0.0, &r, GaugeDirection::ToReference).unwrap();
        assert!((same.amplitudes() - r.amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn schedules_validate() {
        let s = SchedulerEps::smooth_ramp(0.0, 0.4, 10.0).unwrap();
        assert!((s.eps(10.0) - 0.4).abs() < 1e-12);
        assert!((s.eps(5.0) - 0.2).abs() < 1e-9);
        assert!((s.eps_dot(5.0) - 0.2 * PI / 10.0).abs() < 1e-9);
        let bad = SchedulerEps::from_samples(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 1.0], vec![0.0; 3]);
        assert!(matches!(bad, Err(Error::Validation(_))));
    }

    #[test]
    fn frozen_constant_path_matches_propagate() {
        let m = ring(64);
        let bops = boundary_operators(&m).unwrap();
        let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha: 0.7 }, 2).unwrap();
        let op = laplacian_for(&m, &u).unwrap();
        let psi0 = eigensolve(&op, 3).unwrap().wavefunction(1);
        let path = BCPath::constant(u, 3).unwrap();
        let a = frozen_domain_propagate(&path, &m, &bops, &psi0, 0.0, 0.5, 0.01).unwrap();
        let b = propagate(&op, &psi0, 0.0, 0.5, 0.01).unwrap();
        let d = (a.final_state().amplitudes() - b.final_state().amplitudes()).norm();
        assert!(d < 1e-12, "{d}");
        assert_eq!(a.projection_loss.last(), Some(&0.0));
    }
}
