//! Collision operators: conservative gain/loss terms within and across
//! scales, and proliferative/destructive terms.
//!
//! Every operator evaluates, for each test state `(i, x, v, u)`, sums over the
//! sensitivity-domain cells `x*` of `x` and over all field states. The
//! candidate sits at the test position `x`; the heading that orients the
//! sensitivity domain is the candidate's (gain) or the test particle's (loss).
//! Per step the FS-FS cost is `O(n^2 Nx |Omega| Nv^2 Nu^2)`.
//!
//! Output blocks `(subsystem, cell)` are independent and evaluated in
//! parallel; each block accumulates in a fixed order, so results do not
//! depend on the thread count.

mod homogeneous;

pub use homogeneous::homogeneous_rhs;

use rayon::prelude::*;

use crate::error::{Result, Scale};
use crate::kernels::{InteractionContext, LocalDensities, Outcome, Pairing, Participant};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::state::{DistributionField, OperatorOutput};

/// Right-hand sides of both scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs<T> {
    pub fs: OperatorOutput<T>,
    pub sfs: OperatorOutput<T>,
}

fn densities<T: Scalar>(model: &Model<T>, f: &DistributionField<T>, phi: &DistributionField<T>) -> LocalDensities<T> {
    LocalDensities::compute(f, &model.fs.grid, phi, &model.sfs.grid)
}

/// `A_i`: conservative FS-FS interactions.
pub fn fs_fs_conservative<T: Scalar>(
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    conservative(model, Pairing::FsFs, f, f, &densities(model, f, phi))
}

/// `B_i`: FS candidates interacting with SFS field particles.
pub fn fs_sfs_conservative<T: Scalar>(
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    conservative(model, Pairing::FsSfs, f, phi, &densities(model, f, phi))
}

/// `C_j`: conservative SFS-SFS interactions.
pub fn sfs_sfs_conservative<T: Scalar>(
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    conservative(model, Pairing::SfsSfs, phi, phi, &densities(model, f, phi))
}

/// `D_j`: SFS candidates interacting with FS field particles.
pub fn sfs_fs_conservative<T: Scalar>(
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    conservative(model, Pairing::SfsFs, phi, f, &densities(model, f, phi))
}

/// `E_i`: proliferation/destruction of a-particles.
pub fn fs_proliferative<T: Scalar>(
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    proliferative(model, Scale::Fs, f, f, &densities(model, f, phi))
}

/// `F_j`: proliferation/destruction of sa-particles driven by a-particles.
pub fn sfs_proliferative<T: Scalar>(
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    proliferative(model, Scale::Sfs, phi, f, &densities(model, f, phi))
}

/// The six collision operators, by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    FsFs,
    FsSfs,
    SfsSfs,
    SfsFs,
    FsProliferative,
    SfsProliferative,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::FsFs,
        OperatorKind::FsSfs,
        OperatorKind::SfsSfs,
        OperatorKind::SfsFs,
        OperatorKind::FsProliferative,
        OperatorKind::SfsProliferative,
    ];

    /// Scale of the output distribution.
    pub fn output_scale(self) -> Scale {
        match self {
            OperatorKind::FsFs | OperatorKind::FsSfs | OperatorKind::FsProliferative => Scale::Fs,
            _ => Scale::Sfs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            OperatorKind::FsFs => "A",
            OperatorKind::FsSfs => "B",
            OperatorKind::SfsSfs => "C",
            OperatorKind::SfsFs => "D",
            OperatorKind::FsProliferative => "E",
            OperatorKind::SfsProliferative => "F",
        }
    }
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Evaluates one operator.
pub fn apply<T: Scalar>(
    kind: OperatorKind,
    model: &Model<T>,
    f: &DistributionField<T>,
    phi: &DistributionField<T>,
) -> Result<OperatorOutput<T>> {
    match kind {
        OperatorKind::FsFs => fs_fs_conservative(model, f, phi),
        OperatorKind::FsSfs => fs_sfs_conservative(model, f, phi),
        OperatorKind::SfsSfs => sfs_sfs_conservative(model, f, phi),
        OperatorKind::SfsFs => sfs_fs_conservative(model, f, phi),
        OperatorKind::FsProliferative => fs_proliferative(model, f, phi),
        OperatorKind::SfsProliferative => sfs_proliferative(model, f, phi),
    }
}

/// Collision right-hand sides `A_i + B_i + E_i` and `C_j + D_j + F_j`.
/// Transport is not included.
pub fn full_rhs<T: Scalar>(model: &Model<T>, f: &DistributionField<T>, phi: &DistributionField<T>) -> Result<Rhs<T>> {
    let d = densities(model, f, phi);
    let mut fs = conservative(model, Pairing::FsFs, f, f, &d)?;
    if model.m() > 0 {
        fs.add_scaled(T::one(), &conservative(model, Pairing::FsSfs, f, phi, &d)?);
    }
    fs.add_scaled(T::one(), &proliferative(model, Scale::Fs, f, f, &d)?);

    let mut sfs = conservative(model, Pairing::SfsSfs, phi, phi, &d)?;
    if model.n() > 0 {
        sfs.add_scaled(T::one(), &conservative(model, Pairing::SfsFs, phi, f, &d)?);
    }
    sfs.add_scaled(T::one(), &proliferative(model, Scale::Sfs, phi, f, &d)?);
    Ok(Rhs { fs, sfs })
}

/// Gain-loss operator for one pairing. `cand` lives on the candidate scale,
/// `field` on the field scale.
pub(crate) fn conservative<T: Scalar>(
    model: &Model<T>,
    pairing: Pairing,
    cand: &DistributionField<T>,
    field: &DistributionField<T>,
    dens: &LocalDensities<T>,
) -> Result<OperatorOutput<T>> {
    let cs = model.scale(pairing.candidate());
    let fsu = model.scale(pairing.field());
    let (cg, fg) = (&cs.grid, &fsu.grid);
    let (nv, na) = (cg.velocity.len(), cg.activity.len());
    let (nvf, naf) = (fg.velocity.len(), fg.activity.len());
    let du = cg.activity.weight();
    let duf = fg.activity.weight();
    let wc = &cg.velocity.weights;
    let wf = &fg.velocity.weights;
    let cells = cg.space.n_cells();
    let n_field = field.subsystems();

    let mut out = DistributionField::zeros(cand.subsystems(), cg);
    if out.values().is_empty() {
        return Ok(out);
    }
    // Output node of every (vc, ac, vf, af) for rules that depend on nothing else.
    let mut node_tables: Vec<Option<Vec<usize>>> = vec![None; cand.subsystems() * n_field];
    for i in 0..cand.subsystems() {
        for h in 0..n_field {
            let Some((_, trans)) = model.kernels.active(pairing, i, h) else {
                continue;
            };
            if !trans.is_node_of_states() {
                continue;
            }
            let mut table = Vec::with_capacity(nv * na * nvf * naf);
            for vc in 0..nv {
                for ac in 0..na {
                    for vf in 0..nvf {
                        for af in 0..naf {
                            let ctx = InteractionContext::new(
                                Participant {
                                    scale: pairing.candidate(),
                                    subsystem: i,
                                    grid: cg,
                                    cell: 0,
                                    v: vc,
                                    a: ac,
                                },
                                Participant {
                                    scale: pairing.field(),
                                    subsystem: h,
                                    grid: fg,
                                    cell: 0,
                                    v: vf,
                                    a: af,
                                },
                                dens,
                            );
                            match trans.outcome(&ctx) {
                                Outcome::Node { v, a } => table.push(v * na + a),
                                Outcome::Table(_) => unreachable!("node rule produced a table"),
                            }
                        }
                    }
                }
            }
            node_tables[i * n_field + h] = Some(table);
        }
    }
    out.values_mut()
        .par_chunks_mut(nv * na)
        .enumerate()
        .try_for_each(|(block, out_cell)| -> Result<()> {
            let (i, x) = (block / cells, block % cells);
            let f_cell = cand.cell(i, x);
            for h in 0..n_field {
                let Some((rate, trans)) = model.kernels.active(pairing, i, h) else {
                    continue;
                };
                let nodes = node_tables[i * n_field + h].as_deref();
                for vc in 0..nv {
                    let members = cs.members.get(x, vc);
                    for ac in 0..na {
                        let fc = f_cell[vc * na + ac];
                        if fc == T::zero() {
                            continue;
                        }
                        let candidate = Participant {
                            scale: pairing.candidate(),
                            subsystem: i,
                            grid: cg,
                            cell: x,
                            v: vc,
                            a: ac,
                        };
                        let cand_mass = fc * wc[vc] * du;
                        // collision frequency of this candidate state
                        let mut freq = T::zero();
                        for &(xs, sw) in members {
                            let ff_cell = field.cell(h, xs);
                            for vf in 0..nvf {
                                for af in 0..naf {
                                    let ff = ff_cell[vf * naf + af];
                                    if ff == T::zero() {
                                        continue;
                                    }
                                    let ctx = InteractionContext::new(
                                        candidate,
                                        Participant {
                                            scale: pairing.field(),
                                            subsystem: h,
                                            grid: fg,
                                            cell: xs,
                                            v: vf,
                                            a: af,
                                        },
                                        dens,
                                    );
                                    let alpha = rate.evaluate(&ctx)?;
                                    if alpha == T::zero() {
                                        continue;
                                    }
                                    let enc = alpha * ff * wf[vf] * duf * sw;
                                    freq += enc;
                                    let mass = enc * cand_mass;
                                    if let Some(nodes) = nodes {
                                        let k = nodes[((vc * na + ac) * nvf + vf) * naf + af];
                                        out_cell[k] += mass / (wc[k / na] * du);
                                        continue;
                                    }
                                    match trans.outcome(&ctx) {
                                        Outcome::Node { v, a } => {
                                            out_cell[v * na + a] += mass / (wc[v] * du);
                                        }
                                        Outcome::Table(p) => {
                                            for (o, pk) in out_cell.iter_mut().zip(p) {
                                                *o += mass * *pk;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        out_cell[vc * na + ac] -= fc * freq;
                    }
                }
            }
            Ok(())
        })?;
    Ok(out)
}

/// Proliferative/destructive operator of the `scale` subsystems, field
/// particles always from the FS scale.
pub(crate) fn proliferative<T: Scalar>(
    model: &Model<T>,
    scale: Scale,
    test: &DistributionField<T>,
    field: &DistributionField<T>,
    dens: &LocalDensities<T>,
) -> Result<OperatorOutput<T>> {
    let pairing = match scale {
        Scale::Fs => Pairing::FsFs,
        Scale::Sfs => Pairing::SfsFs,
    };
    let ts = model.scale(scale);
    let (tg, fg) = (&ts.grid, &model.fs.grid);
    let (nv, na) = (tg.velocity.len(), tg.activity.len());
    let (nvf, naf) = (fg.velocity.len(), fg.activity.len());
    let duf = fg.activity.weight();
    let wf = &fg.velocity.weights;
    let cells = tg.space.n_cells();
    let n_field = field.subsystems();

    let mut out = DistributionField::zeros(test.subsystems(), tg);
    if out.values().is_empty() {
        return Ok(out);
    }
    out.values_mut()
        .par_chunks_mut(nv * na)
        .enumerate()
        .try_for_each(|(block, out_cell)| -> Result<()> {
            let (i, x) = (block / cells, block % cells);
            let t_cell = test.cell(i, x);
            for h in 0..n_field {
                let Some(kernel) = model.kernels.proliferation(scale, i, h) else {
                    continue;
                };
                let Some(rate) = model.kernels.rate(pairing, i, h) else {
                    continue;
                };
                if rate.is_zero() {
                    continue;
                }
                for v in 0..nv {
                    let members = ts.members.get(x, v);
                    for a in 0..na {
                        let ft = t_cell[v * na + a];
                        if ft == T::zero() {
                            continue;
                        }
                        let me = Participant {
                            scale,
                            subsystem: i,
                            grid: tg,
                            cell: x,
                            v,
                            a,
                        };
                        let mut net = T::zero();
                        for &(xs, sw) in members {
                            let ff_cell = field.cell(h, xs);
                            for vf in 0..nvf {
                                for af in 0..naf {
                                    let ff = ff_cell[vf * naf + af];
                                    if ff == T::zero() {
                                        continue;
                                    }
                                    let ctx = InteractionContext::new(
                                        me,
                                        Participant {
                                            scale: Scale::Fs,
                                            subsystem: h,
                                            grid: fg,
                                            cell: xs,
                                            v: vf,
                                            a: af,
                                        },
                                        dens,
                                    );
                                    let alpha = rate.evaluate(&ctx)?;
                                    let (gain, loss) = kernel.evaluate(&ctx)?;
                                    net += alpha * (gain - loss) * ff * wf[vf] * duf * sw;
                                }
                            }
                        }
                        out_cell[v * na + a] += ft * net;
                    }
                }
            }
            Ok(())
        })?;
    Ok(out)
}
