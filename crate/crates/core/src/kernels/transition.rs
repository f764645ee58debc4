use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::context::{InteractionContext, LocalDensities, Participant};
use crate::kernels::KernelId;
use crate::scalar::{dot, norm, Scalar, Vec2};
use crate::state::{ActivityGrid, PhaseGrid, VelocityGrid};

/// Discrete normalization must hold to this absolute tolerance.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Closed-form and tabulated transition rules. All closed forms send the
/// candidate to a single output node, so they are normalized by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransitionForm<T> {
    /// Output equals input.
    Identity,
    /// Activity moves to the node nearest `(1 - mu) u_cand + mu u_field`;
    /// velocity unchanged.
    ActivityConsensus {
        mu: T,
    },
    /// Heading moves to the grid direction (same speed) nearest the blend
    /// `(1 - l) w_cand + l w_field`, `l = clamp(lambda + lambda_activity * u_cand, 0, 1)`.
    /// With `mu > 0` activity also relaxes toward the field activity.
    VelocityAlignment {
        lambda: T,
        lambda_activity: T,
        mu: T,
    },
    /// Heading moves toward `w_cand + strength * (exit_bias (1 - u_cand) e + avoidance w_field
    /// rho/(1 + rho) a)`, where `e` points to the nearest exit, `a` points away
    /// from the field position and `rho` is the candidate subsystem's density
    /// there. Activity unchanged.
    ExitSteering {
        strength: T,
        exit_bias: T,
        avoidance: T,
        exits: Vec<Vec2<T>>,
    },
    /// Activity relaxes by `rate` toward `rho_field / (rho_field + rho_ref)`;
    /// velocity unchanged.
    IntensityRelaxation {
        rate: T,
        rho_ref: T,
    },
    Tabulated(TabulatedTransition<T>),
}

/// Where a candidate ends up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome<'a, T> {
    /// All probability on one `(velocity, activity)` node.
    Node { v: usize, a: usize },
    /// Probability densities over all output nodes, activity fastest.
    Table(&'a [T]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel<T> {
    pub id: KernelId,
    pub form: TransitionForm<T>,
}

impl<T: Scalar> TransitionKernel<T> {
    pub fn new(id: KernelId, form: TransitionForm<T>) -> Result<Self> {
        let unit = |name: &str, x: T| {
            if x >= T::zero() && x <= T::one() {
                Ok(())
            } else {
                Err(Error::kernel(
                    id.to_string(),
                    format!("{name} = {x} must lie in [0, 1]"),
                ))
            }
        };
        let nonneg = |name: &str, x: T| {
            if x >= T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(Error::kernel(id.to_string(), format!("{name} = {x} must be >= 0")))
            }
        };
        match &form {
            TransitionForm::Identity | TransitionForm::Tabulated(_) => {}
            TransitionForm::ActivityConsensus { mu } => unit("mu", *mu)?,
            TransitionForm::VelocityAlignment {
                lambda,
                lambda_activity,
                mu,
            } => {
                unit("lambda", *lambda)?;
                if !lambda_activity.is_finite() {
                    return Err(Error::kernel(id.to_string(), "lambda_activity must be finite"));
                }
                unit("mu", *mu)?;
            }
            TransitionForm::ExitSteering {
                strength,
                exit_bias,
                avoidance,
                ..
            } => {
                nonneg("strength", *strength)?;
                nonneg("exit_bias", *exit_bias)?;
                nonneg("avoidance", *avoidance)?;
            }
            TransitionForm::IntensityRelaxation { rate, rho_ref } => {
                unit("rate", *rate)?;
                if !(*rho_ref > T::zero()) {
                    return Err(Error::kernel(id.to_string(), "rho_ref must be > 0"));
                }
            }
        }
        Ok(Self { id, form })
    }

    /// Whether the rule ignores position and velocity.
    pub fn is_space_velocity_independent(&self) -> bool {
        matches!(
            self.form,
            TransitionForm::Identity
                | TransitionForm::ActivityConsensus { .. }
                | TransitionForm::IntensityRelaxation { .. }
        )
    }

    /// Whether the outcome is a single node determined by the candidate and
    /// field nodes alone, independent of positions and densities.
    pub fn is_node_of_states(&self) -> bool {
        matches!(
            self.form,
            TransitionForm::Identity
                | TransitionForm::ActivityConsensus { .. }
                | TransitionForm::VelocityAlignment { .. }
        )
    }

    /// Post-encounter state of the candidate.
    pub fn outcome(&self, ctx: &InteractionContext<'_, T>) -> Outcome<'_, T> {
        let c = &ctx.candidate;
        let f = &ctx.field;
        match &self.form {
            TransitionForm::Identity => Outcome::Node { v: c.v, a: c.a },
            TransitionForm::ActivityConsensus { mu } => Outcome::Node {
                v: c.v,
                a: consensus_node(&c.grid.activity, c.a, &f.grid.activity, f.a, *mu),
            },
            TransitionForm::VelocityAlignment {
                lambda,
                lambda_activity,
                mu,
            } => {
                let l = (*lambda + *lambda_activity * c.activity()).max(T::zero()).min(T::one());
                let v = match (c.direction(), f.direction()) {
                    (Some(wc), Some(wf)) => {
                        let target = [(T::one() - l) * wc[0] + l * wf[0], (T::one() - l) * wc[1] + l * wf[1]];
                        nearest_direction(&c.grid.velocity, c.v, target)
                    }
                    _ => c.v,
                };
                let a = if *mu > T::zero() {
                    consensus_node(&c.grid.activity, c.a, &f.grid.activity, f.a, *mu)
                } else {
                    c.a
                };
                Outcome::Node { v, a }
            }
            TransitionForm::ExitSteering {
                strength,
                exit_bias,
                avoidance,
                exits,
            } => {
                let Some(wc) = c.direction() else {
                    return Outcome::Node { v: c.v, a: c.a };
                };
                let x = c.position();
                let exit = exits
                    .iter()
                    .map(|p| [p[0] - x[0], p[1] - x[1]])
                    .filter(|d| norm(*d) > T::zero())
                    .min_by(|a, b| norm(*a).partial_cmp(&norm(*b)).unwrap_or(std::cmp::Ordering::Equal))
                    .map(unit)
                    .unwrap_or([T::zero(), T::zero()]);
                let dist = norm(ctx.displacement);
                let away = if dist > T::zero() {
                    [-ctx.displacement[0] / dist, -ctx.displacement[1] / dist]
                } else {
                    [T::zero(), T::zero()]
                };
                let rho = ctx.candidate_density_at_field();
                let e = *exit_bias * (T::one() - c.activity());
                let s = *avoidance * f.activity() * rho / (T::one() + rho);
                let target = [
                    wc[0] + *strength * (e * exit[0] + s * away[0]),
                    wc[1] + *strength * (e * exit[1] + s * away[1]),
                ];
                Outcome::Node {
                    v: nearest_direction(&c.grid.velocity, c.v, target),
                    a: c.a,
                }
            }
            TransitionForm::IntensityRelaxation { rate, rho_ref } => {
                let rho = ctx.field_density();
                let level = rho / (rho + *rho_ref);
                let target = (T::one() - *rate) * c.activity() + *rate * level;
                Outcome::Node {
                    v: c.v,
                    a: nearest_node_toward(&c.grid.activity, target, c.a),
                }
            }
            TransitionForm::Tabulated(table) => Outcome::Table(table.slice(c.v, c.a, f.v, f.a)),
        }
    }

    /// Probability density of landing in `(out_v, out_a)`.
    pub fn density(&self, ctx: &InteractionContext<'_, T>, out_v: usize, out_a: usize) -> T {
        let grid = ctx.candidate.grid;
        match self.outcome(ctx) {
            Outcome::Node { v, a } => {
                if v == out_v && a == out_a {
                    T::one() / (grid.velocity.weights[v] * grid.activity.weight())
                } else {
                    T::zero()
                }
            }
            Outcome::Table(slice) => slice[out_v * grid.activity.len() + out_a],
        }
    }

    /// Checks the discrete normalization for every conditioning
    /// `(v_cand, a_cand, v_field, a_field)` tuple, with candidate and field
    /// in cell 0 and unit local densities.
    pub fn check_normalization(
        &self,
        candidate: (crate::error::Scale, usize, &PhaseGrid<T>),
        field: (crate::error::Scale, usize, &PhaseGrid<T>),
        n: usize,
        m: usize,
    ) -> Result<()> {
        let (cs, ci, cg) = candidate;
        let (fs, fi, fg) = field;
        if let TransitionForm::Tabulated(t) = &self.form {
            let expected = [
                cg.velocity.len(),
                cg.activity.len(),
                fg.velocity.len(),
                fg.activity.len(),
                cg.velocity.len(),
                cg.activity.len(),
            ];
            if t.shape != expected {
                return Err(Error::kernel(
                    self.id.to_string(),
                    format!("table shape {:?} does not match grids {:?}", t.shape, expected),
                ));
            }
        }
        let densities = LocalDensities::uniform(n, m, cg.space.n_cells().max(fg.space.n_cells()));
        let du = cg.activity.weight();
        for vc in 0..cg.velocity.len() {
            for ac in 0..cg.activity.len() {
                for vf in 0..fg.velocity.len() {
                    for af in 0..fg.activity.len() {
                        let ctx = InteractionContext::new(
                            Participant {
                                scale: cs,
                                subsystem: ci,
                                grid: cg,
                                cell: 0,
                                v: vc,
                                a: ac,
                            },
                            Participant {
                                scale: fs,
                                subsystem: fi,
                                grid: fg,
                                cell: 0,
                                v: vf,
                                a: af,
                            },
                            &densities,
                        );
                        let mut sum = T::zero();
                        let mut negative = false;
                        for v in 0..cg.velocity.len() {
                            for a in 0..cg.activity.len() {
                                let p = self.density(&ctx, v, a);
                                negative |= !(p >= T::zero());
                                sum += p * cg.velocity.weights[v] * du;
                            }
                        }
                        if negative || !((sum - T::one()).abs() <= T::of(NORMALIZATION_TOLERANCE)) {
                            return Err(Error::Unnormalized {
                                kernel: self.id.to_string(),
                                tuple: format!("(v*={vc}, a*={ac}, v^*={vf}, a^*={af})"),
                                sum: sum.as_f64(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn unit<T: Scalar>(d: Vec2<T>) -> Vec2<T> {
    let n = norm(d);
    [d[0] / n, d[1] / n]
}

/// Activity node nearest to `(1 - mu) u_cand + mu u_field`. Exact ties go to
/// the node closer to the candidate, so the pair `(p, q)` and `(q, p)` move
/// by the same number of nodes.
pub fn consensus_node<T: Scalar>(
    cand_grid: &ActivityGrid<T>,
    cand: usize,
    field_grid: &ActivityGrid<T>,
    field: usize,
    mu: T,
) -> usize {
    if cand_grid.n == field_grid.n {
        // On a shared grid the blend is affine in the node index.
        let delta = mu * (T::of_usize(field) - T::of_usize(cand));
        let mag = delta.abs();
        let whole = mag.floor();
        let steps = if mag - whole > T::of(0.5) {
            whole + T::one()
        } else {
            whole
        };
        let steps = steps.to_usize().unwrap_or(0);
        if delta >= T::zero() {
            (cand + steps).min(cand_grid.n - 1)
        } else {
            cand.saturating_sub(steps)
        }
    } else {
        let target = (T::one() - mu) * cand_grid.node(cand) + mu * field_grid.node(field);
        nearest_node_toward(cand_grid, target, cand)
    }
}

/// Node nearest to `x`; an exact tie goes to the side of `toward`.
pub fn nearest_node_toward<T: Scalar>(grid: &ActivityGrid<T>, x: T, toward: usize) -> usize {
    let s = x * T::of_usize(grid.n) - T::of(0.5);
    if s <= T::zero() {
        return 0;
    }
    let lo = s.floor();
    let frac = s - lo;
    let lo = lo.to_usize().unwrap_or(usize::MAX).min(grid.n - 1);
    let k = if frac > T::of(0.5) {
        lo + 1
    } else if frac < T::of(0.5) {
        lo
    } else if toward > lo {
        lo + 1
    } else {
        lo
    };
    k.min(grid.n - 1)
}

/// Node with the same speed as `cand` whose heading is closest to `target`.
/// Ties prefer the heading closest to the candidate's, then the lower index.
pub fn nearest_direction<T: Scalar>(grid: &VelocityGrid<T>, cand: usize, target: Vec2<T>) -> usize {
    let tn = norm(target);
    let v_max = grid.v_max();
    if !(tn > T::of(1e-12)) || v_max == T::zero() {
        return cand;
    }
    let heading = |k: usize| {
        let v = grid.nodes[k];
        let s = norm(v);
        (s >= T::of(1e-12) * v_max).then(|| ([v[0] / s, v[1] / s], s))
    };
    let Some((wc, speed)) = heading(cand) else {
        return cand;
    };
    let t = [target[0] / tn, target[1] / tn];
    let eps = T::of(1e-12);
    let mut best = cand;
    let mut best_score = (dot(wc, t), T::one());
    for k in 0..grid.len() {
        let Some((wk, sk)) = heading(k) else { continue };
        if (sk - speed).abs() > T::of(1e-9) * v_max {
            continue;
        }
        let score = (dot(wk, t), dot(wk, wc));
        let better = score.0 > best_score.0 + eps
            || ((score.0 - best_score.0).abs() <= eps
                && (score.1 > best_score.1 + eps || ((score.1 - best_score.1).abs() <= eps && k < best)));
        if better {
            best = k;
            best_score = score;
        }
    }
    best
}

/// One nonzero entry of a tabulated kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub v_cand: usize,
    pub a_cand: usize,
    pub v_field: usize,
    pub a_field: usize,
    pub v_out: usize,
    pub a_out: usize,
    pub value: f64,
}

/// Dense transition table indexed
/// `(v_cand, a_cand, v_field, a_field, v_out, a_out)`, values are densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedTransition<T> {
    pub shape: [usize; 6],
    pub values: Vec<T>,
}

impl<T: Scalar> TabulatedTransition<T> {
    /// Raw table; not normalized. See [`normalize_transition`].
    pub fn from_entries(shape: [usize; 6], entries: &[TableEntry]) -> Result<Self> {
        let mut values = vec![T::zero(); shape.iter().product()];
        for e in entries {
            let idx = [e.v_cand, e.a_cand, e.v_field, e.a_field, e.v_out, e.a_out];
            if idx.iter().zip(&shape).any(|(i, n)| i >= n) {
                return Err(Error::config(format!("table entry {idx:?} outside shape {shape:?}")));
            }
            if !(e.value >= 0.0) || !e.value.is_finite() {
                return Err(Error::config(format!(
                    "table entry {idx:?} has invalid value {}",
                    e.value
                )));
            }
            let flat = idx.iter().zip(&shape).fold(0, |acc, (i, n)| acc * n + i);
            values[flat] = T::of(e.value);
        }
        Ok(Self { shape, values })
    }

    pub fn slice_len(&self) -> usize {
        self.shape[4] * self.shape[5]
    }

    #[inline]
    pub fn slice(&self, vc: usize, ac: usize, vf: usize, af: usize) -> &[T] {
        let [_, na, nvf, naf, _, _] = self.shape;
        let cond = ((vc * na + ac) * nvf + vf) * naf + af;
        let len = self.slice_len();
        &self.values[cond * len..(cond + 1) * len]
    }
}

/// Rescales every conditioning slice of a tabulated kernel so that
/// `sum(value * w_v * du) = 1` over outputs on `out_grid`.
pub fn normalize_transition<T: Scalar>(
    table: &TabulatedTransition<T>,
    out_grid: &PhaseGrid<T>,
) -> Result<TabulatedTransition<T>> {
    let [nvc, nac, nvf, naf, nv, na] = table.shape;
    if nv != out_grid.velocity.len() || na != out_grid.activity.len() {
        return Err(Error::config(format!(
            "table output shape ({nv}, {na}) does not match grid ({}, {})",
            out_grid.velocity.len(),
            out_grid.activity.len()
        )));
    }
    let du = out_grid.activity.weight();
    let len = table.slice_len();
    let mut out = table.clone();
    for (cond, slice) in out.values.chunks_mut(len).enumerate() {
        let mut sum = T::zero();
        for (i, x) in slice.iter().enumerate() {
            if !(*x >= T::zero()) {
                return Err(Error::config(format!("negative table entry {x} in slice {cond}")));
            }
            sum += *x * out_grid.velocity.weights[i / na] * du;
        }
        if !(sum > T::zero()) {
            let af = cond % naf;
            let vf = (cond / naf) % nvf;
            let ac = (cond / (naf * nvf)) % nac;
            let vc = cond / (naf * nvf * nac);
            debug_assert!(vc < nvc);
            return Err(Error::config(format!(
                "tabulated kernel slice (v_cand={vc}, a_cand={ac}, v_field={vf}, a_field={af}) is all zero"
            )));
        }
        slice.iter_mut().for_each(|x| *x = *x / sum);
    }
    Ok(out)
}

/// Reads table entries from a CSV with header
/// `v_cand,a_cand,v_field,a_field,v_out,a_out,value`.
pub fn load_table_csv(path: &Path) -> Result<Vec<TableEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut entries = Vec::new();
    for row in reader.deserialize() {
        entries.push(row?);
    }
    Ok(entries)
}
