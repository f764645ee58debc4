use crate::error::Scale;
use crate::scalar::{Scalar, Vec2};
use crate::state::{density, DistributionField, PhaseGrid};

/// Local densities of every subsystem of both scales, per cell. Kernels see
/// the distributions only through these moments.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDensities<T> {
    fs: Vec<Vec<T>>,
    sfs: Vec<Vec<T>>,
}

impl<T: Scalar> LocalDensities<T> {
    pub fn new(fs: Vec<Vec<T>>, sfs: Vec<Vec<T>>) -> Self {
        Self { fs, sfs }
    }

    pub fn compute(
        f: &DistributionField<T>,
        fs_grid: &PhaseGrid<T>,
        phi: &DistributionField<T>,
        sfs_grid: &PhaseGrid<T>,
    ) -> Self {
        Self {
            fs: (0..f.subsystems()).map(|i| density(f, i, fs_grid)).collect(),
            sfs: (0..phi.subsystems()).map(|j| density(phi, j, sfs_grid)).collect(),
        }
    }

    /// Every subsystem at unit density on `cells` cells.
    pub fn uniform(n: usize, m: usize, cells: usize) -> Self {
        Self {
            fs: vec![vec![T::one(); cells]; n],
            sfs: vec![vec![T::one(); cells]; m],
        }
    }

    #[inline]
    pub fn get(&self, scale: Scale, subsystem: usize, cell: usize) -> T {
        match scale {
            Scale::Fs => self.fs[subsystem][cell],
            Scale::Sfs => self.sfs[subsystem][cell],
        }
    }
}

/// One side of a pairwise encounter: which subsystem, where, and in which
/// velocity/activity node.
#[derive(Debug, Clone, Copy)]
pub struct Participant<'a, T> {
    pub scale: Scale,
    pub subsystem: usize,
    pub grid: &'a PhaseGrid<T>,
    pub cell: usize,
    pub v: usize,
    pub a: usize,
}

impl<T: Scalar> Participant<'_, T> {
    #[inline]
    pub fn velocity(&self) -> Vec2<T> {
        self.grid.velocity.nodes[self.v]
    }

    #[inline]
    pub fn direction(&self) -> Option<Vec2<T>> {
        self.grid.velocity.direction(self.v)
    }

    /// Normalized activity of the node.
    #[inline]
    pub fn activity(&self) -> T {
        self.grid.activity.node(self.a)
    }

    pub fn position(&self) -> Vec2<T> {
        self.grid.space.center(self.cell)
    }
}

/// Everything a kernel may depend on for one encounter. For gain terms the
/// first participant is the candidate, for loss and proliferation terms it is
/// the test particle itself.
#[derive(Debug, Clone, Copy)]
pub struct InteractionContext<'a, T> {
    pub candidate: Participant<'a, T>,
    pub field: Participant<'a, T>,
    /// Shortest displacement from the candidate's cell to the field cell.
    pub displacement: Vec2<T>,
    pub densities: &'a LocalDensities<T>,
}

impl<'a, T: Scalar> InteractionContext<'a, T> {
    pub fn new(candidate: Participant<'a, T>, field: Participant<'a, T>, densities: &'a LocalDensities<T>) -> Self {
        let space = &candidate.grid.space;
        let displacement = space.displacement(space.center(candidate.cell), space.center(field.cell));
        Self {
            candidate,
            field,
            displacement,
            densities,
        }
    }

    /// Density of the field particle's subsystem at the field position.
    #[inline]
    pub fn field_density(&self) -> T {
        self.densities
            .get(self.field.scale, self.field.subsystem, self.field.cell)
    }

    /// Density of the candidate's own subsystem at the candidate position.
    #[inline]
    pub fn candidate_density(&self) -> T {
        self.densities
            .get(self.candidate.scale, self.candidate.subsystem, self.candidate.cell)
    }

    /// Density of the candidate's own subsystem at the field position.
    #[inline]
    pub fn candidate_density_at_field(&self) -> T {
        self.densities
            .get(self.candidate.scale, self.candidate.subsystem, self.field.cell)
    }
}
