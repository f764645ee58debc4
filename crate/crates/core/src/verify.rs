//! Self-checks behind `msktap verify`: oracle equivalence, conservation,
//! kernel normalization and homogeneous consistency on tiny instances.

use std::fmt;

use crate::config::{Setup, SystemConfig};
use crate::error::{Error, Result, Scale};
use crate::geometry::SensitivityDomain;
use crate::integrator::{run_homogeneous, run_with, IntegratorConfig, SimulationState};
use crate::kernels::{
    normalize_transition, KernelId, KernelKind, KernelSet, Pairing, RateForm, TabulatedTransition, TransitionForm,
    TransitionKernel,
};
use crate::model::Model;
use crate::operators::{apply, OperatorKind};
use crate::oracle::{relative_error, tiny_instance};
use crate::state::{moments, ActivityGrid, Boundary, DistributionField, PhaseGrid, SpaceGrid, VelocityGrid};
use crate::transport::TransportScheme;

pub const ORACLE_TOLERANCE: f64 = 1e-12;
pub const CONSERVATION_TOLERANCE: f64 = 1e-10;
pub const HOMOGENEOUS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{mark}  {:<24} {}", self.name, self.detail)
    }
}

/// Test hooks for negative controls.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerifyOptions {
    /// Number of random oracle instances.
    pub instances: usize,
    /// Adds an unnormalized tabulated kernel to the normalization check.
    pub inject_unnormalized: bool,
    /// Perturbs every production operator output by this amount.
    pub tamper: Option<f64>,
}

impl VerifyOptions {
    pub fn tiny() -> Self {
        Self {
            instances: 20,
            ..Self::default()
        }
    }
}

pub fn run_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    vec![
        oracle_equivalence(opts.instances, opts.tamper),
        conservation(200),
        normalization(8, 8, opts.inject_unnormalized),
        homogeneous_consistency(50),
    ]
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// All six operators against the oracle on `instances` random tiny systems.
pub fn oracle_equivalence(instances: usize, tamper: Option<f64>) -> CheckResult {
    outcome(
        "oracle-equivalence",
        (|| {
            let mut worst = 0.0f64;
            let mut at = String::new();
            for seed in 0..instances as u64 {
                let inst = tiny_instance(seed)?;
                for kind in OperatorKind::ALL {
                    let mut fast = apply(kind, &inst.model, &inst.f, &inst.phi)?;
                    if let Some(delta) = tamper {
                        fast.values_mut().iter_mut().for_each(|x| *x += delta);
                    }
                    let err = relative_error(kind, &inst.model, &inst.f, &inst.phi, &fast)?;
                    if err > worst || err.is_nan() {
                        worst = err;
                        at = format!(" (seed {seed}, operator {kind})");
                    }
                }
            }
            Ok((
                worst <= ORACLE_TOLERANCE,
                format!("{instances} instances x 6 operators, max rel err {worst:.2e}{at}"),
            ))
        })(),
    )
}

/// Largest relative drift of any subsystem mass in a conservative-only,
/// periodic run.
pub fn conservation_drift(n: usize, m: usize, cells: usize, steps: u64) -> Result<f64> {
    let space = SpaceGrid::new(cells as f64, cells as f64, cells, cells, Boundary::Periodic)?;
    let fs = PhaseGrid::new(space.clone(), VelocityGrid::uniform(4, 1, 1.0)?, ActivityGrid::new(4)?);
    let sfs = fs.clone();
    let mut k = KernelSet::new(n, m);
    for p in Pairing::ALL {
        let (nc, nf) = (count(p.candidate(), n, m), count(p.field(), n, m));
        for c in 0..nc {
            for h in 0..nf {
                let rate = 0.3 + 0.1 * (c + 2 * h) as f64;
                k.set_rate(
                    p,
                    c,
                    h,
                    RateForm::DensityModulated {
                        alpha0: rate,
                        kappa: 0.5,
                    },
                )?;
                let form = match (p, (c + h) % 3) {
                    (Pairing::SfsFs, _) => TransitionForm::IntensityRelaxation {
                        rate: 0.5,
                        rho_ref: 1.0,
                    },
                    (_, 0) => TransitionForm::ActivityConsensus { mu: 0.4 },
                    (_, 1) => TransitionForm::VelocityAlignment {
                        lambda: 0.3,
                        lambda_activity: 0.4,
                        mu: 0.2,
                    },
                    _ => TransitionForm::Identity,
                };
                k.set_transition(p, c, h, form)?;
            }
        }
    }
    let dom = SensitivityDomain::from_degrees(60.0, 2.0, crate::geometry::Weighting::UniformNormalized)?;
    let model = Model::new(fs.clone(), dom, sfs.clone(), SensitivityDomain::disk(1.5)?, k)?;
    let bump = |s: usize, c: usize, v: usize, a: usize| 0.2 + ((s * 7 + c * 5 + v * 3 + a) % 11) as f64 / 10.0;
    let init = SimulationState::new(
        DistributionField::from_fn(n, &fs, bump),
        DistributionField::from_fn(m, &sfs, bump),
    );
    let cfg = IntegratorConfig::new(0.25, 0.25 * steps as f64)?;
    let m0: Vec<f64> = (0..n)
        .map(|i| init.f.total_mass(i, &fs))
        .chain((0..m).map(|j| init.phi.total_mass(j, &sfs)))
        .collect();
    let end = run_with(&model, &TransportScheme::default(), &cfg, init, |_| Ok(()))?;
    let m1: Vec<f64> = (0..n)
        .map(|i| end.f.total_mass(i, &fs))
        .chain((0..m).map(|j| end.phi.total_mass(j, &sfs)))
        .collect();
    Ok(m0.iter().zip(&m1).map(|(a, b)| ((a - b) / a).abs()).fold(0.0, f64::max))
}

fn count(s: Scale, n: usize, m: usize) -> usize {
    match s {
        Scale::Fs => n,
        Scale::Sfs => m,
    }
}

pub fn conservation(steps: u64) -> CheckResult {
    outcome(
        "conservation",
        conservation_drift(2, 1, 4, steps).map(|d| {
            (
                d <= CONSERVATION_TOLERANCE,
                format!("n=2 m=1 4x4 periodic, {steps} steps, max rel mass drift {d:.2e}"),
            )
        }),
    )
}

/// Every built-in transition kernel, and a normalized table, on all grids up
/// to `max_v` directions and `max_a` activity nodes.
pub fn normalization_sweep(max_v: usize, max_a: usize, inject_unnormalized: bool) -> Result<usize> {
    let mut checked = 0;
    for nv in 1..=max_v {
        for na in 1..=max_a {
            let grid = PhaseGrid::new(
                SpaceGrid::new(2.0, 2.0, 2, 2, Boundary::Absorbing)?,
                VelocityGrid::uniform(nv, 1, 1.0)?,
                ActivityGrid::new(na)?,
            );
            let id = KernelId {
                kind: KernelKind::Transition(Pairing::FsFs),
                pair: (0, 0),
            };
            let mut forms = vec![
                TransitionForm::Identity,
                TransitionForm::ActivityConsensus { mu: 0.0 },
                TransitionForm::ActivityConsensus { mu: 0.37 },
                TransitionForm::ActivityConsensus { mu: 1.0 },
                TransitionForm::VelocityAlignment {
                    lambda: 0.5,
                    lambda_activity: 0.3,
                    mu: 0.25,
                },
                TransitionForm::ExitSteering {
                    strength: 1.0,
                    exit_bias: 1.0,
                    avoidance: 0.5,
                    exits: grid.space.exit_points(),
                },
                TransitionForm::IntensityRelaxation {
                    rate: 0.6,
                    rho_ref: 0.8,
                },
            ];
            let shape = [nv, na, nv, na, nv, na];
            let mut raw = TabulatedTransition {
                shape,
                values: (0..shape.iter().product::<usize>())
                    .map(|i| ((i * 37) % 13) as f64 + 0.5)
                    .collect(),
            };
            forms.push(TransitionForm::Tabulated(normalize_transition(&raw, &grid)?));
            if inject_unnormalized {
                raw.values.iter_mut().for_each(|x| *x *= 1.5);
                forms.push(TransitionForm::Tabulated(raw));
            }
            for form in forms {
                let k = TransitionKernel::new(id, form)?;
                k.check_normalization((Scale::Fs, 0, &grid), (Scale::Fs, 0, &grid), 1, 0)?;
                checked += 1;
            }
        }
    }
    Ok(checked)
}

pub fn normalization(max_v: usize, max_a: usize, inject_unnormalized: bool) -> CheckResult {
    outcome(
        "normalization",
        normalization_sweep(max_v, max_a, inject_unnormalized).map(|n| {
            (
                true,
                format!("{n} kernel/grid combinations up to Nv={max_v}, Nu={max_a}"),
            )
        }),
    )
}

/// Spatially uniform system whose spatial and homogeneous runs must agree.
pub fn consistency_config(t_end: f64, dt: f64) -> Result<SystemConfig> {
    let text = format!(
        r#"
[system]
n = 2
m = 1

[space]
lx = 3.0
ly = 3.0
nx = 3
ny = 3

[velocity]
directions = 4

[activity]
nu = 4
nw = 3

[sensitivity.fs]
half_angle_deg = 180.0
radius = 2.0

[sensitivity.sfs]
half_angle_deg = 180.0
radius = 2.0

[integrator]
dt = {dt}
t_end = {t_end}

[[kernel]]
type = "rate"
pairing = "fs-fs"
pair = [0, 0]
form = "density-modulated"
params = {{ alpha0 = 0.8, kappa = 0.3 }}

[[kernel]]
type = "transition"
pairing = "fs-fs"
pair = [0, 0]
form = "activity-consensus"
params = {{ mu = 0.4 }}

[[kernel]]
type = "rate"
pairing = "fs-fs"
pair = [1, 0]
form = "constant"
params = {{ alpha0 = 0.6 }}

[[kernel]]
type = "transition"
pairing = "fs-fs"
pair = [1, 0]
form = "identity"

[[kernel]]
type = "proliferation"
scale = "fs"
pair = [1, 0]
loss = "activity-gated"
params = {{ l = 0.7 }}

[[kernel]]
type = "rate"
pairing = "fs-fs"
pair = [1, 1]
form = "constant"
params = {{ alpha0 = 0.5 }}

[[kernel]]
type = "transition"
pairing = "fs-fs"
pair = [1, 1]
form = "activity-consensus"
params = {{ mu = 0.7 }}

[[kernel]]
type = "proliferation"
scale = "fs"
pair = [1, 1]
gain = "density-saturated"
params = {{ p = 0.6, sigma = 1.0 }}

[[kernel]]
type = "rate"
pairing = "fs-sfs"
pair = [0, 0]
form = "constant"
params = {{ alpha0 = 0.5 }}

[[kernel]]
type = "transition"
pairing = "fs-sfs"
pair = [0, 0]
form = "activity-consensus"
params = {{ mu = 0.5 }}

[[kernel]]
type = "rate"
pairing = "sfs-fs"
pair = [0, 1]
form = "constant"
params = {{ alpha0 = 0.9 }}

[[kernel]]
type = "transition"
pairing = "sfs-fs"
pair = [0, 1]
form = "intensity-relaxation"
params = {{ rate = 0.5, rho_ref = 0.5 }}

[[kernel]]
type = "proliferation"
scale = "sfs"
pair = [0, 1]
gain = "activity-gated"
loss = "constant"
params = {{ p = 0.3, l = 0.2 }}

[[kernel]]
type = "rate"
pairing = "sfs-sfs"
pair = [0, 0]
form = "constant"
params = {{ alpha0 = 0.4 }}

[[kernel]]
type = "transition"
pairing = "sfs-sfs"
pair = [0, 0]
form = "activity-consensus"
params = {{ mu = 0.5 }}

[[initial]]
scale = "fs"
subsystem = 0
density = 1.0
activity = {{ profile = "gaussian", mean = 0.3, std = 0.2 }}

[[initial]]
scale = "fs"
subsystem = 1
density = 0.6
activity = {{ profile = "uniform" }}

[[initial]]
scale = "sfs"
density = 0.8
activity = {{ profile = "node", value = 0.9 }}
"#
    );
    SystemConfig::from_toml_str(&text)
}

/// Largest difference between spatial moments (every cell) and the
/// homogeneous trajectory: density vs mass and mean activity.
pub fn homogeneous_gap(steps: u64) -> Result<f64> {
    let dt = 0.05;
    let cfg = consistency_config(dt * steps as f64, dt)?;
    let Setup::Spatial(s) = cfg.build::<f64>()? else {
        return Err(Error::config("consistency config must be spatial"));
    };
    let h = cfg.build_homogeneous::<f64>()?;
    let reference = run_homogeneous(&h.model, &h.integrator, h.initial)?;
    let mut gap = 0.0f64;
    let mut frame = 0;
    run_with(&s.model, &s.scheme, &s.integrator, s.initial, |st| {
        let r = &reference[frame];
        frame += 1;
        for (scale, field, grid) in [
            (Scale::Fs, &st.f, &s.model.fs.grid),
            (Scale::Sfs, &st.phi, &s.model.sfs.grid),
        ] {
            for sub in 0..field.subsystems() {
                let mf = moments(field, sub, grid);
                let hm = &r.scale(scale)[sub];
                for c in 0..grid.space.n_cells() {
                    gap = gap.max((mf.density[c] - hm.density[0]).abs());
                    if let (Some(a), Some(b)) = (mf.mean_activity_at(c), hm.mean_activity_at(0)) {
                        gap = gap.max((a - b).abs());
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(gap)
}

pub fn homogeneous_consistency(steps: u64) -> CheckResult {
    outcome(
        "homogeneous-consistency",
        homogeneous_gap(steps).map(|g| {
            (
                g <= HOMOGENEOUS_TOLERANCE,
                format!("{steps} steps, max moment gap {g:.2e}"),
            )
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in run_suite(&VerifyOptions::tiny()) {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn negative_controls_fail() {
        assert!(!normalization(3, 3, true).passed);
        assert!(!oracle_equivalence(2, Some(1e-6)).passed);
    }
}
