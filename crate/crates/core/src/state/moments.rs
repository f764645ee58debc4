use rayon::prelude::*;

use crate::scalar::{Scalar, Vec2};
use crate::state::field::DistributionField;
use crate::state::grid::PhaseGrid;

/// Velocity- and activity-integrated observables of one subsystem, per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField<T> {
    pub density: Vec<T>,
    /// Only meaningful where `defined[c]`; zero elsewhere.
    pub mean_velocity: Vec<Vec2<T>>,
    /// Only meaningful where `defined[c]`; zero elsewhere.
    pub mean_activity: Vec<T>,
    pub defined: Vec<bool>,
}

impl<T: Scalar> MomentField<T> {
    pub fn mean_velocity_at(&self, c: usize) -> Option<Vec2<T>> {
        self.defined[c].then(|| self.mean_velocity[c])
    }

    pub fn mean_activity_at(&self, c: usize) -> Option<T> {
        self.defined[c].then(|| self.mean_activity[c])
    }

    /// Total mass: density integrated over the space grid.
    pub fn mass(&self, grid: &PhaseGrid<T>) -> T {
        let total: T = self.density.iter().copied().sum();
        total * grid.space.cell_area()
    }

    /// Density-weighted mean activity over all cells, `None` for an empty
    /// subsystem.
    pub fn global_mean_activity(&self) -> Option<T> {
        let mut mass = T::zero();
        let mut first = T::zero();
        for c in 0..self.density.len() {
            if self.defined[c] {
                mass += self.density[c];
                first += self.density[c] * self.mean_activity[c];
            }
        }
        (mass > T::zero()).then(|| first / mass)
    }
}

/// Local density of subsystem `s`: per cell, the sum of `f * w_v * du`.
pub fn density<T: Scalar>(field: &DistributionField<T>, s: usize, grid: &PhaseGrid<T>) -> Vec<T> {
    assert!(s < field.subsystems(), "subsystem {s} out of range");
    let du = grid.activity.weight();
    let na = field.activities();
    (0..field.cells())
        .into_par_iter()
        .map(|c| {
            let block = field.cell(s, c);
            let mut rho = T::zero();
            for (v, w) in grid.velocity.weights.iter().enumerate() {
                for x in &block[v * na..(v + 1) * na] {
                    rho += *x * *w * du;
                }
            }
            rho
        })
        .collect()
}

/// Density, mean velocity and mean activity of subsystem `s`. Cells with
/// zero density are flagged undefined instead of zero-filled.
pub fn moments<T: Scalar>(field: &DistributionField<T>, s: usize, grid: &PhaseGrid<T>) -> MomentField<T> {
    assert!(s < field.subsystems(), "subsystem {s} out of range");
    let du = grid.activity.weight();
    let na = field.activities();
    let per_cell: Vec<(T, Vec2<T>, T)> = (0..field.cells())
        .into_par_iter()
        .map(|c| {
            let block = field.cell(s, c);
            let (mut rho, mut mx, mut my, mut mu) = (T::zero(), T::zero(), T::zero(), T::zero());
            for (v, (w, node)) in grid.velocity.weights.iter().zip(&grid.velocity.nodes).enumerate() {
                for (a, x) in block[v * na..(v + 1) * na].iter().enumerate() {
                    let m = *x * *w * du;
                    rho += m;
                    mx += m * node[0];
                    my += m * node[1];
                    mu += m * grid.activity.node(a);
                }
            }
            (rho, [mx, my], mu)
        })
        .collect();

    let n = per_cell.len();
    let mut out = MomentField {
        density: Vec::with_capacity(n),
        mean_velocity: Vec::with_capacity(n),
        mean_activity: Vec::with_capacity(n),
        defined: Vec::with_capacity(n),
    };
    for (rho, [mx, my], mu) in per_cell {
        let defined = rho > T::zero();
        out.density.push(rho);
        out.defined.push(defined);
        if defined {
            out.mean_velocity.push([mx / rho, my / rho]);
            out.mean_activity.push(mu / rho);
        } else {
            out.mean_velocity.push([T::zero(), T::zero()]);
            out.mean_activity.push(T::zero());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::grid::{ActivityGrid, Boundary, SpaceGrid, VelocityGrid};

    fn grid() -> PhaseGrid<f64> {
        PhaseGrid::new(
            SpaceGrid::new(2.0, 2.0, 2, 2, Boundary::Periodic).unwrap(),
            VelocityGrid::uniform(4, 1, 1.0).unwrap(),
            ActivityGrid::new(4).unwrap(),
        )
    }

    #[test]
    fn zero_field_has_zero_density_and_no_means() {
        let g = grid();
        let f = DistributionField::zeros(1, &g);
        let m = moments(&f, 0, &g);
        assert!(m.density.iter().all(|x| *x == 0.0));
        assert!(m.defined.iter().all(|d| !d));
        assert_eq!(m.mean_activity_at(0), None);
        assert_eq!(m.global_mean_activity(), None);
    }

    #[test]
    fn constant_field_on_unit_measure_has_density_c() {
        let g = grid();
        let f = DistributionField::from_fn(1, &g, |_, _, _, _| 2.5);
        for rho in density(&f, 0, &g) {
            assert!((rho - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn single_node_support_gives_that_velocity() {
        let g = grid();
        let f = DistributionField::from_fn(1, &g, |_, c, v, _| if v == 1 && c != 3 { 1.0 } else { 0.0 });
        let m = moments(&f, 0, &g);
        for c in 0..3 {
            assert_eq!(m.mean_velocity_at(c), Some(g.velocity.nodes[1]));
        }
        assert_eq!(m.mean_velocity_at(3), None);
    }

    #[test]
    fn symmetric_in_direction_has_zero_mean_velocity() {
        let g = grid();
        let f = DistributionField::from_fn(1, &g, |_, c, _, a| (c + a + 1) as f64);
        let m = moments(&f, 0, &g);
        for c in 0..4 {
            let v = m.mean_velocity_at(c).unwrap();
            assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
        }
    }
}
