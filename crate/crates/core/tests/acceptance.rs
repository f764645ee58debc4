//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances are pinned below.

use std::collections::BTreeMap;
use std::time::Instant;

use msktap::integrator::{run_homogeneous_with, run_with};
use msktap::kernels::{GainForm, LossForm, Pairing, RateForm, TransitionForm};
use msktap::scenarios::preset_config;
use msktap::transport::advect;
use msktap::verify;
use msktap::{
    ActivityGrid, Boundary, DistributionField, HomogeneousModel, IntegratorConfig, KernelSet, Model, PhaseGrid, Result,
    Scale, SensitivityDomain, Setup, SimulationState, SpaceGrid, TransportScheme, VelocityGrid, Weighting,
};

const NORMALIZATION_GRID: usize = 8;
const CONSERVATION_TOL: f64 = 1e-10;
const CONSERVATION_STEPS: u64 = 1000;
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_INSTANCES: usize = 20;
const HOMOGENEOUS_TOL: f64 = 1e-8;
const HOMOGENEOUS_STEPS: u64 = 200;
const DECAY_TOL: f64 = 1e-4;
const DECAY_DT: f64 = 1e-3;
const DECAY_RATIO: (f64, f64) = (4.0, 0.3);
const CONVERGENCE_RATIO: (f64, f64) = (2.0, 0.2);
const VARIANCE_SLACK: f64 = 1e-8;
const CONSENSUS_STEPS: usize = 500;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn ac1() -> Result<Outcome> {
    let combos = verify::normalization_sweep(NORMALIZATION_GRID, NORMALIZATION_GRID, false)?;
    outcome(true, format!("{combos} kernel/grid combinations normalized to 1e-12"))
}

fn ac2() -> Result<Outcome> {
    let drift = verify::conservation_drift(2, 1, 8, CONSERVATION_STEPS)?;
    outcome(
        drift <= CONSERVATION_TOL,
        format!("n=2 m=1 8x8, {CONSERVATION_STEPS} steps, max rel drift {drift:.2e} (tol {CONSERVATION_TOL:.0e})"),
    )
}

fn ac3() -> Result<Outcome> {
    let r = verify::oracle_equivalence(ORACLE_INSTANCES, None);
    outcome(r.passed && verify::ORACLE_TOLERANCE <= ORACLE_TOL, r.detail)
}

fn ac4() -> Result<Outcome> {
    let gap = verify::homogeneous_gap(HOMOGENEOUS_STEPS)?;
    outcome(
        gap <= HOMOGENEOUS_TOL,
        format!("{HOMOGENEOUS_STEPS} steps, max moment gap {gap:.2e} (tol {HOMOGENEOUS_TOL:.0e})"),
    )
}

/// Two FS and one SFS with every pairing populated.
fn coupled_kernels(m: usize) -> Result<KernelSet<f64>> {
    let mut k = KernelSet::new(2, m);
    for i in 0..2 {
        for h in 0..2 {
            k.set_rate(
                Pairing::FsFs,
                i,
                h,
                RateForm::DensityModulated {
                    alpha0: 0.5,
                    kappa: 0.3,
                },
            )?;
            k.set_transition(
                Pairing::FsFs,
                i,
                h,
                TransitionForm::VelocityAlignment {
                    lambda: 0.4,
                    lambda_activity: 0.2,
                    mu: 0.3,
                },
            )?;
            k.set_proliferation(
                Scale::Fs,
                i,
                h,
                Some(GainForm::ActivityGated { p: 0.2 }),
                Some(LossForm::Constant { l: 0.1 }),
            )?;
        }
    }
    if m == 1 {
        for i in 0..2 {
            k.set_rate(Pairing::FsSfs, i, 0, RateForm::Constant { alpha0: 0.8 })?;
            k.set_transition(Pairing::FsSfs, i, 0, TransitionForm::ActivityConsensus { mu: 0.6 })?;
            k.set_rate(Pairing::SfsFs, 0, i, RateForm::Constant { alpha0: 0.7 })?;
            k.set_transition(
                Pairing::SfsFs,
                0,
                i,
                TransitionForm::IntensityRelaxation {
                    rate: 0.5,
                    rho_ref: 1.0,
                },
            )?;
        }
        k.set_rate(Pairing::SfsSfs, 0, 0, RateForm::Constant { alpha0: 0.3 })?;
        k.set_transition(Pairing::SfsSfs, 0, 0, TransitionForm::ActivityConsensus { mu: 0.5 })?;
        k.set_proliferation(
            Scale::Sfs,
            0,
            0,
            Some(GainForm::Constant { p: 0.1 }),
            Some(LossForm::Constant { l: 0.2 }),
        )?;
    }
    Ok(k)
}

fn ac5() -> Result<Outcome> {
    let space = SpaceGrid::new(6.0, 6.0, 6, 6, Boundary::Periodic)?;
    let grid = PhaseGrid::new(space, VelocityGrid::uniform(4, 1, 1.0)?, ActivityGrid::new(4)?);
    let dom = SensitivityDomain::from_degrees(90.0, 2.0, Weighting::UniformNormalized)?;
    let coupled = Model::new(grid.clone(), dom, grid.clone(), dom, coupled_kernels(1)?)?;
    let alone = Model::new(grid.clone(), dom, grid.clone(), dom, coupled_kernels(0)?)?;
    let f = DistributionField::from_fn(2, &grid, |s, c, v, a| {
        0.1 + ((s * 5 + c * 3 + v * 7 + a) % 13) as f64 / 13.0
    });
    let phi = DistributionField::from_fn(1, &grid, |_, c, _, a| 0.5 + ((c + a) % 3) as f64 / 3.0);
    let cfg = IntegratorConfig::new(0.2, 8.0)?;
    let scheme = TransportScheme::default();
    let decoupled = coupled.decoupled();
    let a = run_with(&decoupled, &scheme, &cfg, SimulationState::new(f.clone(), phi), |_| {
        Ok(())
    })?;
    let b = run_with(
        &alone,
        &scheme,
        &cfg,
        SimulationState::new(f, DistributionField::zeros(0, &grid)),
        |_| Ok(()),
    )?;
    let identical =
        a.f.values()
            .iter()
            .zip(b.f.values())
            .all(|(x, y)| x.to_bits() == y.to_bits());
    outcome(
        identical,
        format!("{} steps, FS trajectory bit-identical: {identical}", cfg.steps()),
    )
}

fn decay_error(dt: f64) -> Result<f64> {
    let (alpha0, l, rho0) = (1.0, 0.5, 2.0);
    let mut k = KernelSet::new(1, 0);
    k.set_rate(Pairing::FsFs, 0, 0, RateForm::Constant { alpha0 })?;
    k.set_transition(Pairing::FsFs, 0, 0, TransitionForm::Identity)?;
    k.set_proliferation(Scale::Fs, 0, 0, None, Some(LossForm::Constant { l }))?;
    let model = HomogeneousModel::new(6, 1, k)?;
    let f = DistributionField::from_fn(1, &model.fs, |_, _, _, _| rho0);
    let cfg = IntegratorConfig::new(dt, 1.0)?;
    let end = run_homogeneous_with(
        &model,
        &cfg,
        SimulationState::new(f, DistributionField::zeros(0, &model.sfs)),
        |_| Ok(()),
    )?;
    let rho = end.f.total_mass(0, &model.fs);
    Ok((rho - rho0 / (1.0 + alpha0 * l * rho0 * end.t)).abs())
}

fn ac6() -> Result<Outcome> {
    let e1 = decay_error(DECAY_DT)?;
    let e2 = decay_error(DECAY_DT / 2.0)?;
    let ratio = e1 / e2;
    let (target, rel) = DECAY_RATIO;
    outcome(
        e1 <= DECAY_TOL && (ratio - target).abs() <= rel * target,
        format!("error {e1:.2e} at t=1 (tol {DECAY_TOL:.0e}), halving ratio {ratio:.3}"),
    )
}

fn line_grid(n: usize) -> Result<PhaseGrid<f64>> {
    let space = SpaceGrid::new(1.0, 1.0 / n as f64, n, 1, Boundary::Periodic)?;
    Ok(PhaseGrid::new(
        space,
        VelocityGrid::uniform(4, 1, 1.0)?,
        ActivityGrid::new(1)?,
    ))
}

/// L1 error of a sine wave carried east over `t_end` at CFL 0.5.
fn sine_error(n: usize, t_end: f64) -> Result<f64> {
    let grid = line_grid(n)?;
    let dx = grid.space.dx();
    let tau = std::f64::consts::TAU;
    let average = |c: usize, t: f64| {
        let (a, b) = (c as f64 * dx - t, (c + 1) as f64 * dx - t);
        1.0 + ((tau * a).cos() - (tau * b).cos()) / (tau * dx)
    };
    let mut f = DistributionField::from_fn(1, &grid, |_, c, v, _| if v == 0 { average(c, 0.0) } else { 0.0 });
    let dt = 0.5 * dx;
    let steps = (t_end / dt).round() as usize;
    let scheme = TransportScheme::default();
    for _ in 0..steps {
        f = advect(&f, dt, &grid.space, &grid.velocity, &scheme)?;
    }
    let t = steps as f64 * dt;
    Ok((0..n).map(|c| (f.get(0, c, 0, 0) - average(c, t)).abs() * dx).sum())
}

fn ac7() -> Result<Outcome> {
    // exact shift by one cell per step along each axis
    let space = SpaceGrid::new(5.0, 4.0, 5, 4, Boundary::Periodic)?;
    let grid = PhaseGrid::new(space, VelocityGrid::uniform(4, 1, 1.0)?, ActivityGrid::new(2)?);
    let value = |c: usize, v: usize, a: usize| ((c * 7 + v * 3 + a * 11) % 17) as f64 + 0.5;
    let f = DistributionField::from_fn(1, &grid, |_, c, v, a| value(c, v, a));
    let scheme = TransportScheme::default();
    let mut shifted = f.clone();
    for _ in 0..3 {
        shifted = advect(&shifted, 1.0, &grid.space, &grid.velocity, &scheme)?;
    }
    let offsets = [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)];
    let mut exact = true;
    for c in 0..grid.space.n_cells() {
        let (ix, iy) = grid.space.coords(c);
        for (v, (ox, oy)) in offsets.iter().enumerate() {
            let src = grid.space.index(
                (ix as i64 - 3 * ox).rem_euclid(5) as usize,
                (iy as i64 - 3 * oy).rem_euclid(4) as usize,
            );
            for a in 0..2 {
                exact &= shifted.get(0, c, v, a) == f.get(0, src, v, a);
            }
        }
    }
    let coarse = sine_error(64, 0.5)?;
    let fine = sine_error(128, 0.5)?;
    let ratio = coarse / fine;
    let (target, rel) = CONVERGENCE_RATIO;
    // positivity from a sparse, spiky start on an absorbing grid
    let space = SpaceGrid::new(7.0, 7.0, 7, 7, Boundary::Absorbing)?;
    let grid = PhaseGrid::new(space, VelocityGrid::uniform(8, 2, 1.0)?, ActivityGrid::new(1)?);
    let mut g = DistributionField::from_fn(1, &grid, |_, c, v, _| if (c + v) % 5 == 0 { 3.0 } else { 0.0 });
    let mut positive = true;
    for _ in 0..20 {
        g = advect(&g, 0.9, &grid.space, &grid.velocity, &scheme)?;
        positive &= g.values().iter().all(|x| *x >= 0.0);
    }
    outcome(
        exact && positive && (ratio - target).abs() <= rel * target,
        format!("CFL=1 shift exact: {exact}; L1 ratio N=64/128 {ratio:.3}; positive: {positive}"),
    )
}

fn ac8() -> Result<Outcome> {
    let mut k = KernelSet::new(1, 0);
    k.set_rate(Pairing::FsFs, 0, 0, RateForm::Constant { alpha0: 1.0 })?;
    k.set_transition(Pairing::FsFs, 0, 0, TransitionForm::ActivityConsensus { mu: 0.5 })?;
    let model = HomogeneousModel::new(16, 1, k)?;
    let f = DistributionField::from_fn(
        1,
        &model.fs,
        |_, _, _, a| if !(3..=12).contains(&a) { 1.0 } else { 0.05 },
    );
    let dt = 0.01;
    let cfg = IntegratorConfig::new(dt, dt * CONSENSUS_STEPS as f64)?;
    let nodes = model.fs.activity.nodes();
    let variance = |cell: &[f64]| {
        let mass: f64 = cell.iter().sum();
        let mean = cell.iter().zip(&nodes).map(|(p, u)| p * u).sum::<f64>() / mass;
        cell.iter()
            .zip(&nodes)
            .map(|(p, u)| p * (u - mean).powi(2))
            .sum::<f64>()
            / mass
    };
    let mut trace = Vec::new();
    let end = run_homogeneous_with(
        &model,
        &cfg,
        SimulationState::new(f, DistributionField::zeros(0, &model.sfs)),
        |s| {
            trace.push(variance(s.f.cell(0, 0)));
            Ok(())
        },
    )?;
    let worst = trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        end.step == CONSENSUS_STEPS as u64 && worst <= VARIANCE_SLACK,
        format!(
            "{} steps, variance {:.4} -> {:.4}, largest increase {worst:.2e}",
            end.step,
            trace[0],
            trace[trace.len() - 1]
        ),
    )
}

fn ac9() -> Result<Outcome> {
    let Setup::Spatial(crowd) = preset_config("crowd", &BTreeMap::new())?.build::<f64>()? else {
        unreachable!("crowd preset is spatial")
    };
    let grid = &crowd.model.fs.grid;
    let mut masses = Vec::new();
    run_with(&crowd.model, &crowd.scheme, &crowd.integrator, crowd.initial, |s| {
        masses.push(s.f.total_mass(0, grid));
        Ok(())
    })?;
    let monotone = masses.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let Setup::Homogeneous(immune) = preset_config("immune", &BTreeMap::new())?.build::<f64>()? else {
        unreachable!("immune preset is homogeneous")
    };
    let fs = &immune.model.fs;
    let c0 = immune.initial.f.total_mass(1, fs);
    let end = run_homogeneous_with(&immune.model, &immune.integrator, immune.initial, |_| Ok(()))?;
    let c1 = end.f.total_mass(1, fs);
    outcome(
        monotone && c1 < c0 && (end.t - 5.0).abs() < 1e-9,
        format!(
            "crowd mass {:.4} -> {:.4} non-increasing: {monotone}; carriers {c0:.4} -> {c1:.4} at t={:.2}",
            masses[0],
            masses[masses.len() - 1],
            end.t
        ),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC-1 kernel normalization", ac1),
        ("AC-2 conservation", ac2),
        ("AC-3 oracle equivalence", ac3),
        ("AC-4 homogeneous consistency", ac4),
        ("AC-5 decoupling", ac5),
        ("AC-6 analytic decay", ac6),
        ("AC-7 transport", ac7),
        ("AC-8 consensus contraction", ac8),
        ("AC-9 scenario sanity", ac9),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (passed, detail) = match check() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        let tag = if passed { "PASS" } else { "FAIL" };
        println!("{tag}  {name}: {detail} [{:.2}s]", start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
