use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::state::grid::PhaseGrid;

/// Discrete distribution functions of one scale: one value per
/// `(subsystem, cell, velocity node, activity node)`, stored row-major in that
/// order.
///
/// The same container holds collision right-hand sides (see
/// [`OperatorOutput`]), which may be negative; nonnegativity of evolving
/// states is enforced by the integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionField<T> {
    subsystems: usize,
    cells: usize,
    velocities: usize,
    activities: usize,
    values: Vec<T>,
}

/// Per-time rate of change of a [`DistributionField`], same layout.
pub type OperatorOutput<T> = DistributionField<T>;

impl<T: Scalar> DistributionField<T> {
    pub fn zeros(subsystems: usize, grid: &PhaseGrid<T>) -> Self {
        Self::zeros_with_shape(
            subsystems,
            grid.space.n_cells(),
            grid.velocity.len(),
            grid.activity.len(),
        )
    }

    pub fn zeros_with_shape(subsystems: usize, cells: usize, velocities: usize, activities: usize) -> Self {
        Self {
            subsystems,
            cells,
            velocities,
            activities,
            values: vec![T::zero(); subsystems * cells * velocities * activities],
        }
    }

    pub fn from_values(subsystems: usize, grid: &PhaseGrid<T>, values: Vec<T>) -> Result<Self> {
        let mut f = Self::zeros(subsystems, grid);
        if values.len() != f.values.len() {
            return Err(Error::Grid(format!(
                "field needs {} values, got {}",
                f.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field contains non-finite values".into()));
        }
        f.values = values;
        Ok(f)
    }

    /// Builds a field by evaluating `init(subsystem, cell, v, a)` everywhere.
    pub fn from_fn(
        subsystems: usize,
        grid: &PhaseGrid<T>,
        mut init: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut f = Self::zeros(subsystems, grid);
        for s in 0..subsystems {
            for c in 0..f.cells {
                for v in 0..f.velocities {
                    for a in 0..f.activities {
                        let i = f.index(s, c, v, a);
                        f.values[i] = init(s, c, v, a);
                    }
                }
            }
        }
        f
    }

    pub fn subsystems(&self) -> usize {
        self.subsystems
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn velocities(&self) -> usize {
        self.velocities
    }

    pub fn activities(&self) -> usize {
        self.activities
    }

    /// `(subsystems, cells, velocities, activities)`.
    pub fn shape(&self) -> [usize; 4] {
        [self.subsystems, self.cells, self.velocities, self.activities]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    /// Whether this field is laid out on `grid`.
    pub fn fits(&self, grid: &PhaseGrid<T>) -> bool {
        self.cells == grid.space.n_cells()
            && self.velocities == grid.velocity.len()
            && self.activities == grid.activity.len()
    }

    #[inline]
    pub fn index(&self, s: usize, c: usize, v: usize, a: usize) -> usize {
        ((s * self.cells + c) * self.velocities + v) * self.activities + a
    }

    #[inline]
    pub fn get(&self, s: usize, c: usize, v: usize, a: usize) -> T {
        self.values[self.index(s, c, v, a)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, c: usize, v: usize, a: usize, value: T) {
        let i = self.index(s, c, v, a);
        self.values[i] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Velocity-activity block of one cell.
    pub fn cell(&self, s: usize, c: usize) -> &[T] {
        let n = self.velocities * self.activities;
        let start = (s * self.cells + c) * n;
        &self.values[start..start + n]
    }

    pub fn subsystem(&self, s: usize) -> &[T] {
        let n = self.cells * self.velocities * self.activities;
        &self.values[s * n..(s + 1) * n]
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: T, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * *y;
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|x| *x *= a);
        out
    }

    /// Total number of particles of subsystem `s`:
    /// sum of `f * w_v * du * cell_area`.
    pub fn total_mass(&self, s: usize, grid: &PhaseGrid<T>) -> T {
        let du = grid.activity.weight();
        let area = grid.space.cell_area();
        let mut total = T::zero();
        for c in 0..self.cells {
            let block = self.cell(s, c);
            for (v, w) in grid.velocity.weights.iter().enumerate() {
                let row = &block[v * self.activities..(v + 1) * self.activities];
                let sum: T = row.iter().copied().sum();
                total += sum * *w * du;
            }
        }
        total * area
    }

    /// Smallest value and its `(subsystem, cell)` location.
    pub fn min_entry(&self) -> Option<(T, usize, usize)> {
        let per_cell = self.velocities * self.activities;
        self.values
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(T, usize)>, (i, &x)| match acc {
                Some((m, _)) if !(x < m) => acc,
                _ => Some((x, i)),
            })
            .map(|(x, i)| {
                let block = i / per_cell;
                (x, block / self.cells, block % self.cells)
            })
    }

    /// First non-finite entry as `(subsystem, cell)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let per_cell = self.velocities * self.activities;
        self.values.iter().position(|x| !x.is_finite()).map(|i| {
            let block = i / per_cell;
            (block / self.cells, block % self.cells)
        })
    }

    /// Field with only the subsystems in `range` kept.
    pub fn select(&self, range: std::ops::Range<usize>) -> Self {
        let n = self.cells * self.velocities * self.activities;
        Self {
            subsystems: range.len(),
            cells: self.cells,
            velocities: self.velocities,
            activities: self.activities,
            values: self.values[range.start * n..range.end * n].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let grid = PhaseGrid::<f64>::homogeneous(3).unwrap();
        let f = DistributionField::from_fn(2, &grid, |s, _, _, a| (10 * s + a) as f64);
        assert_eq!(f.get(1, 0, 0, 2), 12.0);
        assert_eq!(f.values()[f.index(1, 0, 0, 2)], 12.0);
        assert_eq!(f.subsystem(1), &[10.0, 11.0, 12.0]);
        assert_eq!(f.select(1..2).values(), &[10.0, 11.0, 12.0]);
    }

    #[test]
    fn min_entry_locates_cell() {
        let grid = PhaseGrid::<f64>::homogeneous(2).unwrap();
        let mut f = DistributionField::zeros(3, &grid);
        f.set(2, 0, 0, 1, -1.0);
        assert_eq!(f.min_entry(), Some((-1.0, 2, 0)));
        f.set(0, 0, 0, 0, f64::NAN);
        assert_eq!(f.first_non_finite(), Some((0, 0)));
    }

    #[test]
    fn from_values_checks_length() {
        let grid = PhaseGrid::<f64>::homogeneous(2).unwrap();
        assert!(DistributionField::from_values(1, &grid, vec![1.0]).is_err());
        assert!(DistributionField::from_values(1, &grid, vec![1.0, f64::INFINITY]).is_err());
        assert!(DistributionField::from_values(1, &grid, vec![1.0, 2.0]).is_ok());
    }
}
