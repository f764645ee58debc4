//! Sensitivity domains: the sector in which a particle perceives others, and
//! its discrete spatial quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cross, dot, norm, Scalar, Vec2};
use crate::state::{SpaceGrid, VelocityGrid};

/// Relative slack on the radius and absolute slack (radians) on the angle, so
/// cell centres lying exactly on the sector edge are included regardless of
/// rounding.
const EDGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Cell areas divided by the total included area; weights sum to one.
    UniformNormalized,
    /// Plain cell areas.
    Indicator,
}

/// Circular sector with vertex at the particle, axis along its heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityDomain<T> {
    /// Radians in `(0, pi]`; `pi` is a full disk.
    pub half_angle: T,
    pub radius: T,
    pub weighting: Weighting,
}

impl<T: Scalar> SensitivityDomain<T> {
    pub fn new(half_angle: T, radius: T, weighting: Weighting) -> Result<Self> {
        if !(half_angle > T::zero() && half_angle <= T::PI()) {
            return Err(Error::config(format!(
                "sensitivity half-angle {half_angle} outside (0, pi]"
            )));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::config(format!("sensitivity radius {radius} must be positive")));
        }
        Ok(Self {
            half_angle,
            radius,
            weighting,
        })
    }

    pub fn from_degrees(half_angle_deg: T, radius: T, weighting: Weighting) -> Result<Self> {
        Self::new(half_angle_deg.to_radians(), radius, weighting)
    }

    /// Full disk of the given radius, uniform-normalized.
    pub fn disk(radius: T) -> Result<Self> {
        Self::new(T::PI(), radius, Weighting::UniformNormalized)
    }

    /// Whether `x_star` lies in the sector at `x` with heading `direction`.
    /// A `None` heading (particle at rest) means the full disk.
    pub fn contains(&self, space: &SpaceGrid<T>, x: Vec2<T>, direction: Option<Vec2<T>>, x_star: Vec2<T>) -> bool {
        let d = space.displacement(x, x_star);
        let dist = norm(d);
        if dist == T::zero() {
            return true;
        }
        if dist > self.radius * (T::one() + T::of(EDGE_SLACK)) {
            return false;
        }
        match direction {
            Some(omega) if self.half_angle < T::PI() => {
                let angle = cross(omega, d).atan2(dot(omega, d)).abs();
                angle <= self.half_angle + T::of(EDGE_SLACK)
            }
            _ => true,
        }
    }

    /// Cells whose centres the sector at cell `cell` contains, with their
    /// spatial quadrature weights, in increasing cell order.
    pub fn quadrature(&self, space: &SpaceGrid<T>, cell: usize, direction: Option<Vec2<T>>) -> Vec<(usize, T)> {
        let x = space.center(cell);
        let area = space.cell_area();
        let members: Vec<usize> = (0..space.n_cells())
            .filter(|&c| self.contains(space, x, direction, space.center(c)))
            .collect();
        let w = match self.weighting {
            Weighting::Indicator => area,
            Weighting::UniformNormalized => T::one() / T::of_usize(members.len().max(1)),
        };
        members.into_iter().map(|c| (c, w)).collect()
    }

    /// Whether the sector at every cell covers the whole grid for every heading.
    pub fn covers(&self, space: &SpaceGrid<T>) -> bool {
        (0..space.n_cells()).all(|c| {
            let x = space.center(c);
            (0..space.n_cells()).all(|o| {
                let d = space.displacement(x, space.center(o));
                self.half_angle >= T::PI() && norm(d) <= self.radius
            })
        })
    }
}

/// Precomputed sector quadrature for every `(cell, velocity node)` pair.
#[derive(Debug, Clone)]
pub struct MembershipTable<T> {
    velocities: usize,
    lists: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> MembershipTable<T> {
    pub fn build(domain: &SensitivityDomain<T>, space: &SpaceGrid<T>, velocity: &VelocityGrid<T>) -> Self {
        let nv = velocity.len();
        let mut lists = Vec::with_capacity(space.n_cells() * nv);
        for c in 0..space.n_cells() {
            for v in 0..nv {
                lists.push(domain.quadrature(space, c, velocity.direction(v)));
            }
        }
        Self { velocities: nv, lists }
    }

    #[inline]
    pub fn get(&self, cell: usize, v: usize) -> &[(usize, T)] {
        &self.lists[cell * self.velocities + v]
    }
}
