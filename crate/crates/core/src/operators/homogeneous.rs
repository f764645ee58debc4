use crate::error::{Result, Scale};
use crate::kernels::{InteractionContext, LocalDensities, Outcome, Pairing, Participant};
use crate::model::HomogeneousModel;
use crate::operators::Rhs;
use crate::scalar::Scalar;
use crate::state::{density, DistributionField, OperatorOutput};

/// Collision right-hand sides of the spatially homogeneous system, where
/// `f_i(t, u)` and `phi_j(t, w)` carry no position or velocity. Fields are
/// laid out on the model's one-cell, one-velocity grids.
pub fn homogeneous_rhs<T: Scalar>(
    model: &HomogeneousModel<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<Rhs<T>> {
    let dens = LocalDensities::new(
        (0..f.subsystems()).map(|i| density(f, i, &model.fs)).collect(),
        (0..phi.subsystems()).map(|j| density(phi, j, &model.sfs)).collect(),
    );
    let mut fs = gain_loss(model, Pairing::FsFs, f, f, &dens)?;
    fs.add_scaled(T::one(), &gain_loss(model, Pairing::FsSfs, f, phi, &dens)?);
    fs.add_scaled(T::one(), &birth_death(model, Scale::Fs, f, f, &dens)?);

    let mut sfs = gain_loss(model, Pairing::SfsSfs, phi, phi, &dens)?;
    sfs.add_scaled(T::one(), &gain_loss(model, Pairing::SfsFs, phi, f, &dens)?);
    sfs.add_scaled(T::one(), &birth_death(model, Scale::Sfs, phi, f, &dens)?);
    Ok(Rhs { fs, sfs })
}

fn gain_loss<T: Scalar>(
    model: &HomogeneousModel<T>,
    pairing: Pairing,
    cand: &DistributionField<T>,
    field: &DistributionField<T>,
    dens: &LocalDensities<T>,
) -> Result<OperatorOutput<T>> {
    let cg = model.grid(pairing.candidate());
    let fg = model.grid(pairing.field());
    let (na, naf) = (cg.activity.len(), fg.activity.len());
    let (du, duf) = (cg.activity.weight(), fg.activity.weight());
    let mut out = DistributionField::zeros(cand.subsystems(), cg);
    for i in 0..cand.subsystems() {
        let g = cand.cell(i, 0);
        let mut acc = vec![T::zero(); na];
        for h in 0..field.subsystems() {
            let Some((rate, trans)) = model.kernels.active(pairing, i, h) else {
                continue;
            };
            let gf = field.cell(h, 0);
            for ac in 0..na {
                if g[ac] == T::zero() {
                    continue;
                }
                let candidate = Participant {
                    scale: pairing.candidate(),
                    subsystem: i,
                    grid: cg,
                    cell: 0,
                    v: 0,
                    a: ac,
                };
                let mut freq = T::zero();
                for af in 0..naf {
                    if gf[af] == T::zero() {
                        continue;
                    }
                    let ctx = InteractionContext::new(
                        candidate,
                        Participant {
                            scale: pairing.field(),
                            subsystem: h,
                            grid: fg,
                            cell: 0,
                            v: 0,
                            a: af,
                        },
                        dens,
                    );
                    let enc = rate.evaluate(&ctx)? * gf[af] * duf;
                    freq += enc;
                    let mass = enc * g[ac] * du;
                    match trans.outcome(&ctx) {
                        Outcome::Node { a, .. } => acc[a] += mass / du,
                        Outcome::Table(p) => {
                            for (o, pk) in acc.iter_mut().zip(p) {
                                *o += mass * *pk;
                            }
                        }
                    }
                }
                acc[ac] -= g[ac] * freq;
            }
        }
        for (a, x) in acc.into_iter().enumerate() {
            out.set(i, 0, 0, a, x);
        }
    }
    Ok(out)
}

fn birth_death<T: Scalar>(
    model: &HomogeneousModel<T>,
    scale: Scale,
    test: &DistributionField<T>,
    field: &DistributionField<T>,
    dens: &LocalDensities<T>,
) -> Result<OperatorOutput<T>> {
    let pairing = match scale {
        Scale::Fs => Pairing::FsFs,
        Scale::Sfs => Pairing::SfsFs,
    };
    let tg = model.grid(scale);
    let fg = &model.fs;
    let duf = fg.activity.weight();
    let mut out = DistributionField::zeros(test.subsystems(), tg);
    for i in 0..test.subsystems() {
        let g = test.cell(i, 0);
        for h in 0..field.subsystems() {
            let (Some(kernel), Some(rate)) = (
                model.kernels.proliferation(scale, i, h),
                model.kernels.rate(pairing, i, h),
            ) else {
                continue;
            };
            let gf = field.cell(h, 0);
            for a in 0..tg.activity.len() {
                if g[a] == T::zero() {
                    continue;
                }
                let me = Participant {
                    scale,
                    subsystem: i,
                    grid: tg,
                    cell: 0,
                    v: 0,
                    a,
                };
                let mut net = T::zero();
                for (af, &ff) in gf.iter().enumerate() {
                    if ff == T::zero() {
                        continue;
                    }
                    let ctx = InteractionContext::new(
                        me,
                        Participant {
                            scale: Scale::Fs,
                            subsystem: h,
                            grid: fg,
                            cell: 0,
                            v: 0,
                            a: af,
                        },
                        dens,
                    );
                    let (gain, loss) = kernel.evaluate(&ctx)?;
                    net += rate.evaluate(&ctx)? * (gain - loss) * ff * duf;
                }
                let cur = out.get(i, 0, 0, a);
                out.set(i, 0, 0, a, cur + g[a] * net);
            }
        }
    }
    Ok(out)
}
