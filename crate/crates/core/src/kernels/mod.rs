//! Encounter rates, transition probabilities and proliferation/destruction
//! kernels, plus the table assembling them for one system.

pub mod context;
pub mod proliferation;
pub mod rate;
pub mod transition;

use std::fmt;

pub use context::{InteractionContext, LocalDensities, Participant};
pub use proliferation::{GainForm, LossForm, ProliferationKernel};
pub use rate::{RateForm, RateKernel};
pub use transition::{
    consensus_node, load_table_csv, nearest_direction, nearest_node_toward, normalize_transition, Outcome, TableEntry,
    TabulatedTransition, TransitionForm, TransitionKernel, NORMALIZATION_TOLERANCE,
};

use crate::error::{Error, Result, Scale};
use crate::scalar::Scalar;
use crate::state::PhaseGrid;

/// Which scales the candidate and the field particle belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Rates `alpha_ih`, transitions `A_ih`.
    FsFs,
    /// Rates `beta_jk`, transitions `C_jk`.
    SfsSfs,
    /// Rates `gamma_ik`, transitions `B_ik`.
    FsSfs,
    /// Rates `gamma_jh`, transitions `D_jh`.
    SfsFs,
}

impl Pairing {
    pub const ALL: [Pairing; 4] = [Pairing::FsFs, Pairing::SfsSfs, Pairing::FsSfs, Pairing::SfsFs];

    pub fn candidate(self) -> Scale {
        match self {
            Pairing::FsFs | Pairing::FsSfs => Scale::Fs,
            Pairing::SfsSfs | Pairing::SfsFs => Scale::Sfs,
        }
    }

    pub fn field(self) -> Scale {
        match self {
            Pairing::FsFs | Pairing::SfsFs => Scale::Fs,
            Pairing::SfsSfs | Pairing::FsSfs => Scale::Sfs,
        }
    }

    pub fn rate_symbol(self) -> &'static str {
        match self {
            Pairing::FsFs => "alpha",
            Pairing::SfsSfs => "beta",
            Pairing::FsSfs => "gamma_fs_sfs",
            Pairing::SfsFs => "gamma_sfs_fs",
        }
    }

    pub fn transition_symbol(self) -> &'static str {
        match self {
            Pairing::FsFs => "A",
            Pairing::SfsSfs => "C",
            Pairing::FsSfs => "B",
            Pairing::SfsFs => "D",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Rate(Pairing),
    Transition(Pairing),
    /// `P_ih`/`L_ih` for FS, `P^m_jh`/`L^m_jh` for SFS.
    Proliferation(Scale),
}

/// Kernel identity used in diagnostics, e.g. `alpha(0,1)` or `B(1,0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelId {
    pub kind: KernelKind,
    pub pair: (usize, usize),
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            KernelKind::Rate(p) => p.rate_symbol(),
            KernelKind::Transition(p) => p.transition_symbol(),
            KernelKind::Proliferation(Scale::Fs) => "P/L",
            KernelKind::Proliferation(Scale::Sfs) => "Pm/Lm",
        };
        write!(f, "{name}({},{})", self.pair.0, self.pair.1)
    }
}

/// Rate of one encounter; negative or non-finite values are errors.
pub fn evaluate_rate<T: Scalar>(k: &RateKernel<T>, ctx: &InteractionContext<'_, T>) -> Result<T> {
    k.evaluate(ctx)
}

/// Transition density from the candidate state in `ctx` to `(out_v, out_a)`.
pub fn evaluate_transition<T: Scalar>(
    k: &TransitionKernel<T>,
    ctx: &InteractionContext<'_, T>,
    out_v: usize,
    out_a: usize,
) -> T {
    k.density(ctx, out_v, out_a)
}

/// `(gain, loss)` multipliers of one encounter.
pub fn evaluate_proliferation<T: Scalar>(
    k: &ProliferationKernel<T>,
    ctx: &InteractionContext<'_, T>,
) -> Result<(T, T)> {
    k.evaluate(ctx)
}

/// All kernels of a system with `n` functional and `m` sub-functional
/// subsystems. Missing entries mean no interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet<T> {
    n: usize,
    m: usize,
    rates: [Vec<Option<RateKernel<T>>>; 4],
    transitions: [Vec<Option<TransitionKernel<T>>>; 4],
    fs_proliferation: Vec<Option<ProliferationKernel<T>>>,
    sfs_proliferation: Vec<Option<ProliferationKernel<T>>>,
}

impl<T: Scalar> KernelSet<T> {
    pub fn new(n: usize, m: usize) -> Self {
        let len = |p: Pairing| Self::count_of(n, m, p.candidate()) * Self::count_of(n, m, p.field());
        Self {
            n,
            m,
            rates: Pairing::ALL.map(|p| vec![None; len(p)]),
            transitions: Pairing::ALL.map(|p| vec![None; len(p)]),
            fs_proliferation: vec![None; n * n],
            sfs_proliferation: vec![None; m * n],
        }
    }

    fn count_of(n: usize, m: usize, scale: Scale) -> usize {
        match scale {
            Scale::Fs => n,
            Scale::Sfs => m,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn count(&self, scale: Scale) -> usize {
        Self::count_of(self.n, self.m, scale)
    }

    fn slot(&self, pairing: Pairing, cand: usize, field: usize) -> Result<usize> {
        let nc = self.count(pairing.candidate());
        let nf = self.count(pairing.field());
        if cand >= nc || field >= nf {
            return Err(Error::config(format!(
                "pair ({cand},{field}) out of range for {} ({nc} x {nf})",
                pairing.rate_symbol()
            )));
        }
        Ok(cand * nf + field)
    }

    pub fn set_rate(&mut self, pairing: Pairing, cand: usize, field: usize, form: RateForm<T>) -> Result<()> {
        let s = self.slot(pairing, cand, field)?;
        let id = KernelId {
            kind: KernelKind::Rate(pairing),
            pair: (cand, field),
        };
        self.rates[pairing.slot()][s] = Some(RateKernel::new(id, form)?);
        Ok(())
    }

    pub fn set_transition(
        &mut self,
        pairing: Pairing,
        cand: usize,
        field: usize,
        form: TransitionForm<T>,
    ) -> Result<()> {
        let s = self.slot(pairing, cand, field)?;
        let id = KernelId {
            kind: KernelKind::Transition(pairing),
            pair: (cand, field),
        };
        self.transitions[pairing.slot()][s] = Some(TransitionKernel::new(id, form)?);
        Ok(())
    }

    /// Gain/loss kernels for FS pair `(i, h)` (`scale = Fs`) or SFS-FS pair
    /// `(j, h)` (`scale = Sfs`). Each call replaces only the sides given.
    pub fn set_proliferation(
        &mut self,
        scale: Scale,
        test: usize,
        field: usize,
        gain: Option<GainForm<T>>,
        loss: Option<LossForm<T>>,
    ) -> Result<()> {
        let pairing = match scale {
            Scale::Fs => Pairing::FsFs,
            Scale::Sfs => Pairing::SfsFs,
        };
        let s = self.slot(pairing, test, field)?;
        let table = match scale {
            Scale::Fs => &mut self.fs_proliferation,
            Scale::Sfs => &mut self.sfs_proliferation,
        };
        let prev = table[s].take();
        let gain = gain.or(prev.as_ref().and_then(|k| k.gain));
        let loss = loss.or(prev.as_ref().and_then(|k| k.loss));
        let id = KernelId {
            kind: KernelKind::Proliferation(scale),
            pair: (test, field),
        };
        table[s] = Some(ProliferationKernel::new(id, gain, loss)?);
        Ok(())
    }

    #[inline]
    pub fn rate(&self, pairing: Pairing, cand: usize, field: usize) -> Option<&RateKernel<T>> {
        let nf = self.count(pairing.field());
        self.rates[pairing.slot()][cand * nf + field].as_ref()
    }

    #[inline]
    pub fn transition(&self, pairing: Pairing, cand: usize, field: usize) -> Option<&TransitionKernel<T>> {
        let nf = self.count(pairing.field());
        self.transitions[pairing.slot()][cand * nf + field].as_ref()
    }

    #[inline]
    pub fn proliferation(&self, scale: Scale, test: usize, field: usize) -> Option<&ProliferationKernel<T>> {
        match scale {
            Scale::Fs => self.fs_proliferation[test * self.n + field].as_ref(),
            Scale::Sfs => self.sfs_proliferation[test * self.n + field].as_ref(),
        }
    }

    /// Rate and transition of a pair when the rate is present and not
    /// identically zero.
    #[inline]
    pub fn active(
        &self,
        pairing: Pairing,
        cand: usize,
        field: usize,
    ) -> Option<(&RateKernel<T>, &TransitionKernel<T>)> {
        let r = self.rate(pairing, cand, field)?;
        if r.is_zero() {
            return None;
        }
        Some((r, self.transition(pairing, cand, field)?))
    }

    /// Zeroes every cross-scale rate (`gamma_ik` and `gamma_jh`).
    pub fn without_cross_scale(&self) -> Self {
        let mut out = self.clone();
        for p in [Pairing::FsSfs, Pairing::SfsFs] {
            out.rates[p.slot()].iter_mut().for_each(|r| *r = None);
            out.transitions[p.slot()].iter_mut().for_each(|r| *r = None);
        }
        out.sfs_proliferation.iter_mut().for_each(|r| *r = None);
        out
    }

    pub fn transitions(&self) -> impl Iterator<Item = &TransitionKernel<T>> {
        self.transitions.iter().flatten().flatten()
    }

    pub fn rates(&self) -> impl Iterator<Item = &RateKernel<T>> {
        self.rates.iter().flatten().flatten()
    }

    pub fn proliferations(&self) -> impl Iterator<Item = &ProliferationKernel<T>> {
        self.fs_proliferation.iter().chain(&self.sfs_proliferation).flatten()
    }

    /// Whether only conservative (number-preserving) interactions are present.
    pub fn is_conservative(&self) -> bool {
        self.proliferations().next().is_none()
    }

    /// Structural checks: every nonzero rate has its transition, every
    /// proliferation kernel has its rate, and every transition is normalized
    /// on the given grids.
    pub fn validate(&self, fs_grid: &PhaseGrid<T>, sfs_grid: &PhaseGrid<T>) -> Result<()> {
        let grid = |s: Scale| match s {
            Scale::Fs => fs_grid,
            Scale::Sfs => sfs_grid,
        };
        for p in Pairing::ALL {
            for c in 0..self.count(p.candidate()) {
                for f in 0..self.count(p.field()) {
                    if let Some(r) = self.rate(p, c, f) {
                        if !r.is_zero() && self.transition(p, c, f).is_none() {
                            return Err(Error::config(format!(
                                "missing transition kernel {}({c},{f}) for pair with nonzero rate {}",
                                p.transition_symbol(),
                                r.id
                            )));
                        }
                    }
                    if let Some(t) = self.transition(p, c, f) {
                        t.check_normalization(
                            (p.candidate(), c, grid(p.candidate())),
                            (p.field(), f, grid(p.field())),
                            self.n,
                            self.m,
                        )?;
                    }
                }
            }
        }
        for (scale, pairing) in [(Scale::Fs, Pairing::FsFs), (Scale::Sfs, Pairing::SfsFs)] {
            for t in 0..self.count(scale) {
                for h in 0..self.n {
                    if let Some(k) = self.proliferation(scale, t, h) {
                        if self.rate(pairing, t, h).is_none() {
                            return Err(Error::config(format!(
                                "proliferation kernel {} has no rate {}({t},{h})",
                                k.id,
                                pairing.rate_symbol()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Rejects kernels that depend on position or velocity.
    pub fn check_homogeneous(&self) -> Result<()> {
        if let Some(t) = self.transitions().find(|t| match &t.form {
            TransitionForm::Tabulated(table) => table.shape[0] != 1 || table.shape[2] != 1,
            _ => !t.is_space_velocity_independent(),
        }) {
            return Err(Error::config(format!(
                "transition kernel {} depends on space or velocity; not allowed in homogeneous mode",
                t.id
            )));
        }
        Ok(())
    }
}
