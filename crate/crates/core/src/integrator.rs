//! Time integration: Lie splitting of free streaming and collisions for the
//! full system, collisions only for the spatially homogeneous system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Scale};
use crate::model::{HomogeneousModel, Model};
use crate::operators::{full_rhs, homogeneous_rhs, Rhs};
use crate::scalar::Scalar;
use crate::state::{moments, DistributionField, MomentField, PhaseGrid};
use crate::transport::{advect, TransportScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    /// Transport over `dt`, then collisions over `dt`.
    #[default]
    Lie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    Euler,
    #[default]
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub t_end: T,
    pub splitting: Splitting,
    pub stepper: Stepper,
    pub negativity_tolerance: T,
    pub output_stride: usize,
}

impl<T: Scalar> IntegratorConfig<T> {
    pub fn new(dt: T, t_end: T) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            splitting: Splitting::Lie,
            stepper: Stepper::Heun,
            negativity_tolerance: T::of(1e-10),
            output_stride: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stepper(mut self, stepper: Stepper) -> Self {
        self.stepper = stepper;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.output_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(Error::config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= T::zero() && self.t_end.is_finite()) {
            return Err(Error::config(format!("t_end = {} must be non-negative", self.t_end)));
        }
        if !(self.negativity_tolerance >= T::zero()) {
            return Err(Error::config("negativity tolerance must be non-negative"));
        }
        if self.output_stride == 0 {
            return Err(Error::config("output stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`; a final partial step is rounded up
    /// to a full one.
    pub fn steps(&self) -> u64 {
        let ratio = (self.t_end / self.dt).as_f64();
        (ratio - 1e-9).ceil().max(0.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState<T> {
    pub t: T,
    pub step: u64,
    pub f: DistributionField<T>,
    pub phi: DistributionField<T>,
}

impl<T: Scalar> SimulationState<T> {
    pub fn new(f: DistributionField<T>, phi: DistributionField<T>) -> Self {
        Self {
            t: T::zero(),
            step: 0,
            f,
            phi,
        }
    }
}

/// Moments of every subsystem at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub t: T,
    pub step: u64,
    pub fs: Vec<MomentField<T>>,
    pub sfs: Vec<MomentField<T>>,
}

impl<T: Scalar> Frame<T> {
    pub fn capture(state: &SimulationState<T>, fs_grid: &PhaseGrid<T>, sfs_grid: &PhaseGrid<T>) -> Self {
        Self {
            t: state.t,
            step: state.step,
            fs: (0..state.f.subsystems())
                .map(|i| moments(&state.f, i, fs_grid))
                .collect(),
            sfs: (0..state.phi.subsystems())
                .map(|j| moments(&state.phi, j, sfs_grid))
                .collect(),
        }
    }

    pub fn scale(&self, s: Scale) -> &[MomentField<T>] {
        match s {
            Scale::Fs => &self.fs,
            Scale::Sfs => &self.sfs,
        }
    }
}

/// One step of the full system: advect `f` and `phi`, then advance both by
/// the collision right-hand side.
pub fn step<T: Scalar>(
    state: &SimulationState<T>,
    cfg: &IntegratorConfig<T>,
    model: &Model<T>,
    scheme: &TransportScheme<T>,
) -> Result<SimulationState<T>> {
    let f = advect(&state.f, cfg.dt, &model.fs.grid.space, &model.fs.grid.velocity, scheme)?;
    let phi = advect(
        &state.phi,
        cfg.dt,
        &model.sfs.grid.space,
        &model.sfs.grid.velocity,
        scheme,
    )?;
    collide(state, f, phi, cfg, |f, phi| full_rhs(model, f, phi))
}

/// One step of the homogeneous system.
pub fn step_homogeneous<T: Scalar>(
    state: &SimulationState<T>,
    cfg: &IntegratorConfig<T>,
    model: &HomogeneousModel<T>,
) -> Result<SimulationState<T>> {
    collide(state, state.f.clone(), state.phi.clone(), cfg, |f, phi| {
        homogeneous_rhs(model, f, phi)
    })
}

fn collide<T: Scalar>(
    prev: &SimulationState<T>,
    f: DistributionField<T>,
    phi: DistributionField<T>,
    cfg: &IntegratorConfig<T>,
    rhs: impl Fn(&DistributionField<T>, &DistributionField<T>) -> Result<Rhs<T>>,
) -> Result<SimulationState<T>> {
    let dt = cfg.dt;
    let k1 = rhs(&f, &phi)?;
    let mut f1 = f.clone();
    f1.add_scaled(dt, &k1.fs);
    let mut phi1 = phi.clone();
    phi1.add_scaled(dt, &k1.sfs);
    let (f, phi) = match cfg.stepper {
        Stepper::Euler => (f1, phi1),
        Stepper::Heun => {
            let k2 = rhs(&f1, &phi1)?;
            let half = dt * T::of(0.5);
            let mut f2 = f;
            f2.add_scaled(half, &k1.fs);
            f2.add_scaled(half, &k2.fs);
            let mut phi2 = phi;
            phi2.add_scaled(half, &k1.sfs);
            phi2.add_scaled(half, &k2.sfs);
            (f2, phi2)
        }
    };
    let step = prev.step + 1;
    check(&f, Scale::Fs, step, cfg.negativity_tolerance)?;
    check(&phi, Scale::Sfs, step, cfg.negativity_tolerance)?;
    Ok(SimulationState {
        t: T::of_usize(step as usize) * dt,
        step,
        f,
        phi,
    })
}

fn check<T: Scalar>(field: &DistributionField<T>, scale: Scale, step: u64, tol: T) -> Result<()> {
    if let Some((subsystem, cell)) = field.first_non_finite() {
        return Err(Error::NonFinite {
            step,
            scale,
            subsystem,
            cell,
        });
    }
    match field.min_entry() {
        Some((value, subsystem, cell)) if value < -tol => Err(Error::Negativity {
            step,
            scale,
            subsystem,
            cell,
            value: value.as_f64(),
        }),
        _ => Ok(()),
    }
}

/// Integrates the full system to `t_end`, calling `observe` on the initial
/// state, every `output_stride` steps and on the final state. Returns the
/// final state.
pub fn run_with<T: Scalar>(
    model: &Model<T>,
    scheme: &TransportScheme<T>,
    cfg: &IntegratorConfig<T>,
    initial: SimulationState<T>,
    mut observe: impl FnMut(&SimulationState<T>) -> Result<()>,
) -> Result<SimulationState<T>> {
    cfg.validate()?;
    scheme.check(cfg.dt, &model.fs.grid.space, &model.fs.grid.velocity)?;
    scheme.check(cfg.dt, &model.sfs.grid.space, &model.sfs.grid.velocity)?;
    drive(cfg, initial, |s| step(s, cfg, model, scheme), &mut observe)
}

/// Integrates the homogeneous system to `t_end`; see [`run_with`].
pub fn run_homogeneous_with<T: Scalar>(
    model: &HomogeneousModel<T>,
    cfg: &IntegratorConfig<T>,
    initial: SimulationState<T>,
    mut observe: impl FnMut(&SimulationState<T>) -> Result<()>,
) -> Result<SimulationState<T>> {
    cfg.validate()?;
    drive(cfg, initial, |s| step_homogeneous(s, cfg, model), &mut observe)
}

fn drive<T: Scalar>(
    cfg: &IntegratorConfig<T>,
    initial: SimulationState<T>,
    advance: impl Fn(&SimulationState<T>) -> Result<SimulationState<T>>,
    observe: &mut impl FnMut(&SimulationState<T>) -> Result<()>,
) -> Result<SimulationState<T>> {
    let steps = cfg.steps();
    let mut state = initial;
    observe(&state)?;
    for k in 1..=steps {
        state = advance(&state)?;
        if k % cfg.output_stride as u64 == 0 || k == steps {
            observe(&state)?;
        }
        if k % 100 == 0 {
            log::debug!("step {k}/{steps} t = {}", state.t);
        }
    }
    Ok(state)
}

/// Moment trajectory of the full system.
pub fn run<T: Scalar>(
    model: &Model<T>,
    scheme: &TransportScheme<T>,
    cfg: &IntegratorConfig<T>,
    initial: SimulationState<T>,
) -> Result<Vec<Frame<T>>> {
    let mut frames = Vec::new();
    run_with(model, scheme, cfg, initial, |s| {
        frames.push(Frame::capture(s, &model.fs.grid, &model.sfs.grid));
        Ok(())
    })?;
    Ok(frames)
}

/// Moment trajectory of the homogeneous system. Each frame has one cell; its
/// density is the subsystem's mass and its mean activity the distribution mean.
pub fn run_homogeneous<T: Scalar>(
    model: &HomogeneousModel<T>,
    cfg: &IntegratorConfig<T>,
    initial: SimulationState<T>,
) -> Result<Vec<Frame<T>>> {
    let mut frames = Vec::new();
    run_homogeneous_with(model, cfg, initial, |s| {
        frames.push(Frame::capture(s, &model.fs, &model.sfs));
        Ok(())
    })?;
    Ok(frames)
}
