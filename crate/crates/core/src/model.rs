//! A validated, ready-to-evaluate system: grids, sensitivity domains and
//! kernels of both scales.

use crate::error::{Error, Result, Scale};
use crate::geometry::{MembershipTable, SensitivityDomain};
use crate::kernels::KernelSet;
use crate::scalar::Scalar;
use crate::state::PhaseGrid;

/// Discretization and perception geometry of one scale.
#[derive(Debug, Clone)]
pub struct ScaleSetup<T> {
    pub grid: PhaseGrid<T>,
    pub domain: SensitivityDomain<T>,
    pub members: MembershipTable<T>,
}

impl<T: Scalar> ScaleSetup<T> {
    pub fn new(grid: PhaseGrid<T>, domain: SensitivityDomain<T>) -> Self {
        let members = MembershipTable::build(&domain, &grid.space, &grid.velocity);
        Self { grid, domain, members }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub fs: ScaleSetup<T>,
    pub sfs: ScaleSetup<T>,
    pub kernels: KernelSet<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(
        fs_grid: PhaseGrid<T>,
        fs_domain: SensitivityDomain<T>,
        sfs_grid: PhaseGrid<T>,
        sfs_domain: SensitivityDomain<T>,
        kernels: KernelSet<T>,
    ) -> Result<Self> {
        fs_grid.validate()?;
        sfs_grid.validate()?;
        if fs_grid.space != sfs_grid.space {
            return Err(Error::config("both scales must share one space grid"));
        }
        kernels.validate(&fs_grid, &sfs_grid)?;
        Ok(Self {
            fs: ScaleSetup::new(fs_grid, fs_domain),
            sfs: ScaleSetup::new(sfs_grid, sfs_domain),
            kernels,
        })
    }

    pub fn n(&self) -> usize {
        self.kernels.n()
    }

    pub fn m(&self) -> usize {
        self.kernels.m()
    }

    pub fn scale(&self, s: Scale) -> &ScaleSetup<T> {
        match s {
            Scale::Fs => &self.fs,
            Scale::Sfs => &self.sfs,
        }
    }

    /// Same model with every cross-scale coupling removed.
    pub fn decoupled(&self) -> Self {
        Self {
            kernels: self.kernels.without_cross_scale(),
            ..self.clone()
        }
    }
}

/// Spatially homogeneous system: distributions over activity only.
#[derive(Debug, Clone)]
pub struct HomogeneousModel<T> {
    pub fs: PhaseGrid<T>,
    pub sfs: PhaseGrid<T>,
    pub kernels: KernelSet<T>,
}

impl<T: Scalar> HomogeneousModel<T> {
    /// `nu`/`nw` activity nodes; kernels must not depend on space or velocity.
    pub fn new(nu: usize, nw: usize, kernels: KernelSet<T>) -> Result<Self> {
        let fs = PhaseGrid::homogeneous(nu)?;
        let sfs = PhaseGrid::homogeneous(nw)?;
        kernels.check_homogeneous()?;
        kernels.validate(&fs, &sfs)?;
        Ok(Self { fs, sfs, kernels })
    }

    pub fn grid(&self, s: Scale) -> &PhaseGrid<T> {
        match s {
            Scale::Fs => &self.fs,
            Scale::Sfs => &self.sfs,
        }
    }
}
