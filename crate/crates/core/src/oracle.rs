//! Brute-force reference for the collision operators on tiny instances.
//!
//! Every output entry is built by direct nested loops over candidate, field
//! and perception states, in integral order, with its own sector test,
//! quadrature weights and densities. Only grids and kernel evaluation are
//! shared with the production operators. Single-threaded and slow on purpose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, Scale};
use crate::geometry::{SensitivityDomain, Weighting};
use crate::kernels::{
    evaluate_proliferation, evaluate_rate, evaluate_transition, normalize_transition, GainForm, InteractionContext,
    KernelSet, LocalDensities, LossForm, Pairing, Participant, RateForm, TabulatedTransition, TransitionForm,
};
use crate::model::Model;
use crate::operators::OperatorKind;
use crate::scalar::Scalar;
use crate::state::{
    ActivityGrid, Boundary, DistributionField, ExitSegment, OperatorOutput, PhaseGrid, Side, SpaceGrid, VelocityGrid,
};

/// Largest instance, in discrete states across both scales, the oracle accepts.
pub const MAX_STATES: usize = 10_000;

/// Reference value of one operator.
pub fn oracle_operator<T: Scalar>(
    kind: OperatorKind,
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    let (gain, loss) = oracle_terms(kind, model, f, phi)?;
    let mut out = gain;
    out.add_scaled(-T::one(), &loss);
    Ok(out)
}

/// Gain and loss parts of one operator, both non-negative when the rates
/// and kernels are. Their size is the natural scale for rounding errors of
/// the difference.
pub fn oracle_terms<T: Scalar>(
    kind: OperatorKind,
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<(OperatorOutput<T>, OperatorOutput<T>)> {
    let states = f.values().len() + phi.values().len();
    if states > MAX_STATES {
        return Err(Error::InstanceTooLarge {
            states,
            limit: MAX_STATES,
        });
    }
    let dens = LocalDensities::new(
        (0..f.subsystems())
            .map(|i| oracle_density(f, i, &model.fs.grid))
            .collect(),
        (0..phi.subsystems())
            .map(|j| oracle_density(phi, j, &model.sfs.grid))
            .collect(),
    );
    match kind {
        OperatorKind::FsFs => gain_loss(model, Pairing::FsFs, f, f, &dens),
        OperatorKind::FsSfs => gain_loss(model, Pairing::FsSfs, f, phi, &dens),
        OperatorKind::SfsSfs => gain_loss(model, Pairing::SfsSfs, phi, phi, &dens),
        OperatorKind::SfsFs => gain_loss(model, Pairing::SfsFs, phi, f, &dens),
        OperatorKind::FsProliferative => birth_death(model, Scale::Fs, f, f, &dens),
        OperatorKind::SfsProliferative => birth_death(model, Scale::Sfs, phi, f, &dens),
    }
}

/// Largest absolute difference between `fast` and the oracle, relative to
/// the larger of the oracle's output and its gain/loss terms.
pub fn relative_error<T: Scalar>(
    kind: OperatorKind,
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
    fast: &OperatorOutput<T>,
) -> Result<f64> {
    let (gain, loss) = oracle_terms(kind, model, f, phi)?;
    if !fast.same_shape(&gain) {
        return Err(Error::config("operator output shape differs from the oracle"));
    }
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for ((a, g), l) in fast.values().iter().zip(gain.values()).zip(loss.values()) {
        let exact = *g - *l;
        err = err.max((*a - exact).abs().as_f64());
        scale = scale.max(g.abs().as_f64()).max(l.abs().as_f64());
    }
    if err == 0.0 {
        return Ok(0.0);
    }
    Ok(if scale > 0.0 { err / scale } else { f64::INFINITY })
}

/// Local density of subsystem `s` by direct summation.
pub fn oracle_density<T: Scalar>(field: &DistributionField<T>, s: usize, grid: &PhaseGrid<T>) -> Vec<T> {
    (0..grid.space.n_cells())
        .map(|x| {
            let mut total = T::zero();
            for v in 0..grid.velocity.len() {
                for a in 0..grid.activity.len() {
                    total += field.get(s, x, v, a) * grid.velocity.weights[v] * grid.activity.weight();
                }
            }
            total
        })
        .collect()
}

/// Heading of node `v`, `None` at rest.
fn heading<T: Scalar>(grid: &VelocityGrid<T>, v: usize) -> Option<[T; 2]> {
    let [a, b] = grid.nodes[v];
    let speed = a.hypot(b);
    let top = grid.nodes.iter().map(|n| n[0].hypot(n[1])).fold(T::zero(), T::max);
    (speed > T::of(1e-12) * top).then(|| [a / speed, b / speed])
}

fn offset<T: Scalar>(space: &SpaceGrid<T>, from: usize, to: usize) -> [T; 2] {
    let p = space.center(from);
    let q = space.center(to);
    let mut d = [q[0] - p[0], q[1] - p[1]];
    if space.boundary == Boundary::Periodic {
        d[0] = d[0] - space.lx * (d[0] / space.lx).round();
        d[1] = d[1] - space.ly * (d[1] / space.ly).round();
    }
    d
}

fn sees<T: Scalar>(dom: &SensitivityDomain<T>, space: &SpaceGrid<T>, x: usize, dir: Option<[T; 2]>, xs: usize) -> bool {
    let d = offset(space, x, xs);
    let r = d[0].hypot(d[1]);
    if r == T::zero() {
        return true;
    }
    if r > dom.radius * (T::one() + T::of(1e-12)) {
        return false;
    }
    match dir {
        Some(w) if dom.half_angle < T::PI() => {
            let c = ((w[0] * d[0] + w[1] * d[1]) / r).max(-T::one()).min(T::one());
            c.acos() <= dom.half_angle + T::of(1e-12)
        }
        _ => true,
    }
}

/// Quadrature weight of `xs` in the sector of `(x, dir)`, zero outside.
fn weight<T: Scalar>(dom: &SensitivityDomain<T>, space: &SpaceGrid<T>, x: usize, dir: Option<[T; 2]>, xs: usize) -> T {
    if !sees(dom, space, x, dir, xs) {
        return T::zero();
    }
    match dom.weighting {
        Weighting::Indicator => space.cell_area(),
        Weighting::UniformNormalized => {
            let count = (0..space.n_cells()).filter(|&y| sees(dom, space, x, dir, y)).count();
            T::one() / T::of_usize(count)
        }
    }
}

fn gain_loss<T: Scalar>(
    model: &Model<T>,
    pairing: Pairing,
    cand: &DistributionField<T>,
    field: &DistributionField<T>,
    dens: &LocalDensities<T>,
) -> Result<(OperatorOutput<T>, OperatorOutput<T>)> {
    let cs = model.scale(pairing.candidate());
    let (cg, fg) = (&cs.grid, &model.scale(pairing.field()).grid);
    let dom = &cs.domain;
    let space = &cg.space;
    let (du, duf) = (cg.activity.weight(), fg.activity.weight());
    let mut gains = DistributionField::zeros(cand.subsystems(), cg);
    let mut losses = gains.clone();
    for i in 0..cand.subsystems() {
        for x in 0..space.n_cells() {
            for v in 0..cg.velocity.len() {
                for u in 0..cg.activity.len() {
                    let mut gain = T::zero();
                    let mut loss = T::zero();
                    for h in 0..field.subsystems() {
                        let Some(rate) = model.kernels.rate(pairing, i, h) else {
                            continue;
                        };
                        let Some(trans) = model.kernels.transition(pairing, i, h) else {
                            continue;
                        };
                        let test = Participant {
                            scale: pairing.candidate(),
                            subsystem: i,
                            grid: cg,
                            cell: x,
                            v,
                            a: u,
                        };
                        for vc in 0..cg.velocity.len() {
                            for uc in 0..cg.activity.len() {
                                let candidate = Participant { v: vc, a: uc, ..test };
                                for xs in 0..space.n_cells() {
                                    let sw = weight(dom, space, x, heading(&cg.velocity, vc), xs);
                                    for vf in 0..fg.velocity.len() {
                                        for uf in 0..fg.activity.len() {
                                            let fp = Participant {
                                                scale: pairing.field(),
                                                subsystem: h,
                                                grid: fg,
                                                cell: xs,
                                                v: vf,
                                                a: uf,
                                            };
                                            let ctx = InteractionContext::new(candidate, fp, dens);
                                            let alpha = evaluate_rate(rate, &ctx)?;
                                            let p = evaluate_transition(trans, &ctx, v, u);
                                            gain += alpha
                                                * p
                                                * cand.get(i, x, vc, uc)
                                                * field.get(h, xs, vf, uf)
                                                * cg.velocity.weights[vc]
                                                * du
                                                * fg.velocity.weights[vf]
                                                * duf
                                                * sw;
                                        }
                                    }
                                }
                            }
                        }
                        for xs in 0..space.n_cells() {
                            let sw = weight(dom, space, x, heading(&cg.velocity, v), xs);
                            for vf in 0..fg.velocity.len() {
                                for uf in 0..fg.activity.len() {
                                    let fp = Participant {
                                        scale: pairing.field(),
                                        subsystem: h,
                                        grid: fg,
                                        cell: xs,
                                        v: vf,
                                        a: uf,
                                    };
                                    let alpha = evaluate_rate(rate, &InteractionContext::new(test, fp, dens))?;
                                    loss += alpha
                                        * cand.get(i, x, v, u)
                                        * field.get(h, xs, vf, uf)
                                        * fg.velocity.weights[vf]
                                        * duf
                                        * sw;
                                }
                            }
                        }
                    }
                    gains.set(i, x, v, u, gain);
                    losses.set(i, x, v, u, loss);
                }
            }
        }
    }
    Ok((gains, losses))
}

fn birth_death<T: Scalar>(
    model: &Model<T>,
    scale: Scale,
    test: &DistributionField<T>,
    field: &DistributionField<T>,
    dens: &LocalDensities<T>,
) -> Result<(OperatorOutput<T>, OperatorOutput<T>)> {
    let pairing = match scale {
        Scale::Fs => Pairing::FsFs,
        Scale::Sfs => Pairing::SfsFs,
    };
    let ts = model.scale(scale);
    let (tg, fg) = (&ts.grid, &model.fs.grid);
    let space = &tg.space;
    let duf = fg.activity.weight();
    let mut gains = DistributionField::zeros(test.subsystems(), tg);
    let mut losses = gains.clone();
    for i in 0..test.subsystems() {
        for x in 0..space.n_cells() {
            for v in 0..tg.velocity.len() {
                for u in 0..tg.activity.len() {
                    let me = Participant {
                        scale,
                        subsystem: i,
                        grid: tg,
                        cell: x,
                        v,
                        a: u,
                    };
                    let mut gain = T::zero();
                    let mut loss = T::zero();
                    for h in 0..field.subsystems() {
                        let (Some(kernel), Some(rate)) = (
                            model.kernels.proliferation(scale, i, h),
                            model.kernels.rate(pairing, i, h),
                        ) else {
                            continue;
                        };
                        for xs in 0..space.n_cells() {
                            let sw = weight(&ts.domain, space, x, heading(&tg.velocity, v), xs);
                            for vf in 0..fg.velocity.len() {
                                for uf in 0..fg.activity.len() {
                                    let fp = Participant {
                                        scale: Scale::Fs,
                                        subsystem: h,
                                        grid: fg,
                                        cell: xs,
                                        v: vf,
                                        a: uf,
                                    };
                                    let ctx = InteractionContext::new(me, fp, dens);
                                    let alpha = evaluate_rate(rate, &ctx)?;
                                    let (p, l) = evaluate_proliferation(kernel, &ctx)?;
                                    let enc = alpha
                                        * test.get(i, x, v, u)
                                        * field.get(h, xs, vf, uf)
                                        * fg.velocity.weights[vf]
                                        * duf
                                        * sw;
                                    gain += p * enc;
                                    loss += l * enc;
                                }
                            }
                        }
                    }
                    gains.set(i, x, v, u, gain);
                    losses.set(i, x, v, u, loss);
                }
            }
        }
    }
    Ok((gains, losses))
}

/// A random model with its state, small enough for [`oracle_operator`].
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub seed: u64,
    pub model: Model<f64>,
    pub f: DistributionField<f64>,
    pub phi: DistributionField<f64>,
}

/// Builds a random instance with at most 2 subsystems per scale, 4 cells,
/// 3 velocities and 4 activity nodes. Deterministic in `seed`.
pub fn tiny_instance(seed: u64) -> Result<TinyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let m = rng.gen_range(1..=2);
    let (nx, ny) = [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (4, 1), (1, 3)][rng.gen_range(0..7)];
    let lx = nx as f64 * rng.gen_range(0.5..1.5);
    let ly = ny as f64 * rng.gen_range(0.5..1.5);
    let space = if rng.gen_bool(0.5) {
        SpaceGrid::new(lx, ly, nx, ny, Boundary::Periodic)?
    } else {
        let exits = if rng.gen_bool(0.5) {
            vec![ExitSegment {
                side: Side::East,
                first: 0,
                last: ny - 1,
            }]
        } else {
            Vec::new()
        };
        SpaceGrid::new(lx, ly, nx, ny, Boundary::Absorbing)?.with_exits(exits)?
    };
    let fs_grid = PhaseGrid::new(
        space.clone(),
        random_velocity(&mut rng)?,
        ActivityGrid::new(rng.gen_range(1..=4))?,
    );
    let sfs_grid = PhaseGrid::new(
        space.clone(),
        random_velocity(&mut rng)?,
        ActivityGrid::new(rng.gen_range(1..=4))?,
    );

    let mut kernels = KernelSet::new(n, m);
    for pairing in Pairing::ALL {
        let (cg, fg) = match pairing {
            Pairing::FsFs => (&fs_grid, &fs_grid),
            Pairing::FsSfs => (&fs_grid, &sfs_grid),
            Pairing::SfsSfs => (&sfs_grid, &sfs_grid),
            Pairing::SfsFs => (&sfs_grid, &fs_grid),
        };
        let nc = if pairing.candidate() == Scale::Fs { n } else { m };
        let nf = if pairing.field() == Scale::Fs { n } else { m };
        for c in 0..nc {
            for h in 0..nf {
                if rng.gen_bool(0.15) {
                    continue;
                }
                let alpha0 = if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.1..2.0)
                };
                let rate = if rng.gen_bool(0.5) {
                    RateForm::Constant { alpha0 }
                } else {
                    RateForm::DensityModulated {
                        alpha0,
                        kappa: rng.gen_range(0.0..1.0),
                    }
                };
                kernels.set_rate(pairing, c, h, rate)?;
                kernels.set_transition(pairing, c, h, random_transition(&mut rng, cg, fg)?)?;
            }
        }
    }
    for (scale, count) in [(Scale::Fs, n), (Scale::Sfs, m)] {
        let pairing = if scale == Scale::Fs {
            Pairing::FsFs
        } else {
            Pairing::SfsFs
        };
        for t in 0..count {
            for h in 0..n {
                if kernels.rate(pairing, t, h).is_none() || rng.gen_bool(0.3) {
                    continue;
                }
                let p = rng.gen_range(0.0..1.5);
                let gain = match rng.gen_range(0..4) {
                    0 => None,
                    1 => Some(GainForm::Constant { p }),
                    2 => Some(GainForm::DensitySaturated {
                        p,
                        sigma: rng.gen_range(0.0..2.0),
                    }),
                    _ => Some(GainForm::ActivityGated { p }),
                };
                let l = rng.gen_range(0.0..1.5);
                let loss = match rng.gen_range(0..3) {
                    0 => None,
                    1 => Some(LossForm::Constant { l }),
                    _ => Some(LossForm::ActivityGated { l }),
                };
                kernels.set_proliferation(scale, t, h, gain, loss)?;
            }
        }
    }

    let domain = |rng: &mut ChaCha8Rng| {
        let half = if rng.gen_bool(0.3) {
            std::f64::consts::PI
        } else {
            rng.gen_range(0.3..std::f64::consts::PI)
        };
        let weighting = if rng.gen_bool(0.5) {
            Weighting::UniformNormalized
        } else {
            Weighting::Indicator
        };
        SensitivityDomain::new(half, rng.gen_range(0.4..3.0), weighting)
    };
    let fs_domain = domain(&mut rng)?;
    let sfs_domain = domain(&mut rng)?;
    let mut fill = |grid: &PhaseGrid<f64>, count: usize| {
        let values = (0..count * grid.states())
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        DistributionField::from_values(count, grid, values)
    };
    let f = fill(&fs_grid, n)?;
    let phi = fill(&sfs_grid, m)?;
    let model = Model::new(fs_grid, fs_domain, sfs_grid, sfs_domain, kernels)?;
    Ok(TinyInstance { seed, model, f, phi })
}

fn random_velocity(rng: &mut ChaCha8Rng) -> Result<VelocityGrid<f64>> {
    let count = rng.gen_range(1..=3);
    let v_max = rng.gen_range(0.5..2.0);
    if rng.gen_bool(0.5) {
        return VelocityGrid::uniform(count, 1, v_max);
    }
    // a resting node plus arbitrary headings and weights
    let mut nodes = vec![[0.0, 0.0]];
    for _ in 1..count {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        nodes.push([v_max * theta.cos(), v_max * theta.sin()]);
    }
    let weights = (0..count).map(|_| rng.gen_range(0.2..1.0)).collect();
    VelocityGrid::from_nodes(nodes, weights)
}

fn random_transition(
    rng: &mut ChaCha8Rng,
    cand: &PhaseGrid<f64>,
    field: &PhaseGrid<f64>,
) -> Result<TransitionForm<f64>> {
    Ok(match rng.gen_range(0..6) {
        0 => TransitionForm::Identity,
        1 => TransitionForm::ActivityConsensus {
            mu: rng.gen_range(0.0..=1.0),
        },
        2 => TransitionForm::VelocityAlignment {
            lambda: rng.gen_range(0.0..=1.0),
            lambda_activity: rng.gen_range(-0.5..0.5),
            mu: rng.gen_range(0.0..=1.0),
        },
        3 => TransitionForm::ExitSteering {
            strength: rng.gen_range(0.0..2.0),
            exit_bias: rng.gen_range(0.0..2.0),
            avoidance: rng.gen_range(0.0..2.0),
            exits: cand.space.exit_points(),
        },
        4 => TransitionForm::IntensityRelaxation {
            rate: rng.gen_range(0.0..=1.0),
            rho_ref: rng.gen_range(0.1..2.0),
        },
        _ => {
            let shape = [
                cand.velocity.len(),
                cand.activity.len(),
                field.velocity.len(),
                field.activity.len(),
                cand.velocity.len(),
                cand.activity.len(),
            ];
            let len: usize = shape.iter().product();
            let slice = shape[4] * shape[5];
            let mut values: Vec<f64> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect();
            for chunk in values.chunks_mut(slice) {
                chunk[rng.gen_range(0..slice)] += 0.5;
            }
            normalize_transition(&TabulatedTransition { shape, values }, cand)?.into()
        }
    })
}

impl<T> From<TabulatedTransition<T>> for TransitionForm<T> {
    fn from(t: TabulatedTransition<T>) -> Self {
        TransitionForm::Tabulated(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::apply;

    #[test]
    fn zero_fields_give_zero() {
        let inst = tiny_instance(3).unwrap();
        let f = inst.f.scaled(0.0);
        let phi = inst.phi.scaled(0.0);
        for kind in OperatorKind::ALL {
            let out = oracle_operator(kind, &inst.model, &f, &phi).unwrap();
            assert!(out.values().iter().all(|x| *x == 0.0), "{kind}");
        }
    }

    #[test]
    fn identity_transitions_give_zero() {
        let inst = tiny_instance(11).unwrap();
        let mut k = KernelSet::new(inst.model.n(), inst.model.m());
        k.set_rate(Pairing::FsFs, 0, 0, RateForm::Constant { alpha0: 1.3 })
            .unwrap();
        k.set_transition(Pairing::FsFs, 0, 0, TransitionForm::Identity).unwrap();
        let model = Model {
            kernels: k,
            ..inst.model.clone()
        };
        let out = oracle_operator(OperatorKind::FsFs, &model, &inst.f, &inst.phi).unwrap();
        assert!(out.values().iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn refuses_large_instances() {
        let grid = PhaseGrid::new(
            SpaceGrid::new(10.0, 10.0, 10, 10, Boundary::Periodic).unwrap(),
            VelocityGrid::uniform(8, 1, 1.0).unwrap(),
            ActivityGrid::new(16).unwrap(),
        );
        let dom = SensitivityDomain::disk(1.0).unwrap();
        let model = Model::new(grid.clone(), dom, grid.clone(), dom, KernelSet::new(1, 0)).unwrap();
        let f = DistributionField::zeros(1, &grid);
        let phi = DistributionField::zeros(0, &grid);
        let err = oracle_operator(OperatorKind::FsFs, &model, &f, &phi).unwrap_err();
        assert!(matches!(err, Error::InstanceTooLarge { states: 12800, .. }));
    }

    #[test]
    fn instances_are_deterministic_and_small() {
        let a = tiny_instance(42).unwrap();
        let b = tiny_instance(42).unwrap();
        assert_eq!(a.f, b.f);
        assert_eq!(a.phi, b.phi);
        assert!(a.f.subsystems() <= 2 && a.f.cells() <= 4 && a.f.velocities() <= 3 && a.f.activities() <= 4);
    }

    #[test]
    fn matches_operators_on_a_few_seeds() {
        for seed in 0..5 {
            let inst = tiny_instance(seed).unwrap();
            for kind in OperatorKind::ALL {
                let fast = apply(kind, &inst.model, &inst.f, &inst.phi).unwrap();
                let err = relative_error(kind, &inst.model, &inst.f, &inst.phi, &fast).unwrap();
                assert!(err <= 1e-12, "seed {seed} {kind}: {err}");
            }
        }
    }
}
