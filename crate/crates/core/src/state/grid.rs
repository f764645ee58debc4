use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm, Scalar, Vec2};

/// Boundary condition applied on the outer edge of the space rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    West,
    East,
    South,
    North,
}

/// Contiguous run of boundary cells on one side of the domain, inclusive on
/// both ends. Cells are counted along the side: `iy` for west/east, `ix` for
/// south/north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitSegment {
    pub side: Side,
    pub first: usize,
    pub last: usize,
}

/// How a boundary face behaves under transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Wraps to the opposite side.
    Periodic,
    /// Outflow leaves the domain, inflow is zero.
    Open,
    /// Zero flux in both directions.
    Wall,
}

/// Uniform cell-centred partition of `[0, lx] x [0, ly]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid<T> {
    pub lx: T,
    pub ly: T,
    pub nx: usize,
    pub ny: usize,
    pub boundary: Boundary,
    /// Exit segments; only meaningful for absorbing boundaries. An empty list
    /// with an absorbing boundary makes every boundary face open.
    #[serde(default)]
    pub exits: Vec<ExitSegment>,
}

impl<T: Scalar> SpaceGrid<T> {
    pub fn new(lx: T, ly: T, nx: usize, ny: usize, boundary: Boundary) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Grid(format!("space grid needs nx, ny >= 1 (got {nx}x{ny})")));
        }
        if !(lx > T::zero() && ly > T::zero()) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::Grid(format!(
                "space extent must be positive and finite (got {lx} x {ly})"
            )));
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            boundary,
            exits: Vec::new(),
        })
    }

    pub fn with_exits(mut self, exits: Vec<ExitSegment>) -> Result<Self> {
        if !exits.is_empty() && self.boundary != Boundary::Absorbing {
            return Err(Error::Grid("exit segments require an absorbing boundary".into()));
        }
        for e in &exits {
            let len = match e.side {
                Side::West | Side::East => self.ny,
                Side::South | Side::North => self.nx,
            };
            if e.first > e.last || e.last >= len {
                return Err(Error::Grid(format!(
                    "exit segment {:?} [{}, {}] outside side of length {len}",
                    e.side, e.first, e.last
                )));
            }
        }
        self.exits = exits;
        Ok(self)
    }

    /// Re-checks invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let g = Self::new(self.lx, self.ly, self.nx, self.ny, self.boundary)?;
        g.with_exits(self.exits.clone()).map(|_| ())
    }

    pub fn dx(&self) -> T {
        self.lx / T::of_usize(self.nx)
    }

    pub fn dy(&self) -> T {
        self.ly / T::of_usize(self.ny)
    }

    pub fn cell_area(&self) -> T {
        self.dx() * self.dy()
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.nx * iy
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn center(&self, cell: usize) -> Vec2<T> {
        let (ix, iy) = self.coords(cell);
        let half = T::of(0.5);
        [
            (T::of_usize(ix) + half) * self.dx(),
            (T::of_usize(iy) + half) * self.dy(),
        ]
    }

    /// Displacement from `from` to `to`; under a periodic boundary this is the
    /// shortest image.
    pub fn displacement(&self, from: Vec2<T>, to: Vec2<T>) -> Vec2<T> {
        let mut d = [to[0] - from[0], to[1] - from[1]];
        if self.boundary == Boundary::Periodic {
            d[0] = d[0] - self.lx * (d[0] / self.lx).round();
            d[1] = d[1] - self.ly * (d[1] / self.ly).round();
        }
        d
    }

    /// Euclidean diameter of the domain.
    pub fn diameter(&self) -> T {
        self.lx.hypot(self.ly)
    }

    /// Behaviour of boundary face number `k` (counted along the side).
    pub fn face(&self, side: Side, k: usize) -> FaceKind {
        match self.boundary {
            Boundary::Periodic => FaceKind::Periodic,
            Boundary::Absorbing if self.exits.is_empty() => FaceKind::Open,
            Boundary::Absorbing => {
                let open = self
                    .exits
                    .iter()
                    .any(|e| e.side == side && (e.first..=e.last).contains(&k));
                if open {
                    FaceKind::Open
                } else {
                    FaceKind::Wall
                }
            }
        }
    }

    /// Midpoints of the outer edges of all exit faces.
    pub fn exit_points(&self) -> Vec<Vec2<T>> {
        let half = T::of(0.5);
        let mut out = Vec::new();
        for e in &self.exits {
            for k in e.first..=e.last {
                let s = T::of_usize(k) + half;
                out.push(match e.side {
                    Side::West => [T::zero(), s * self.dy()],
                    Side::East => [self.lx, s * self.dy()],
                    Side::South => [s * self.dx(), T::zero()],
                    Side::North => [s * self.dx(), self.ly],
                });
            }
        }
        out
    }
}

/// Discrete velocity set: node vectors with positive quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid<T> {
    pub nodes: Vec<Vec2<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> VelocityGrid<T> {
    /// `directions` equally spaced headings (the first along +x) times
    /// `speeds` speeds `v_max * l / speeds`, `l = 1..=speeds`. Weights are
    /// equal and sum to one.
    pub fn uniform(directions: usize, speeds: usize, v_max: T) -> Result<Self> {
        if directions == 0 || speeds == 0 {
            return Err(Error::Grid(
                "velocity grid needs at least one direction and speed".into(),
            ));
        }
        if !(v_max > T::zero()) {
            return Err(Error::Grid(format!("v_max must be positive (got {v_max})")));
        }
        let mut nodes = Vec::with_capacity(directions * speeds);
        for l in 1..=speeds {
            let s = v_max * T::of_usize(l) / T::of_usize(speeds);
            for k in 0..directions {
                let theta = T::TAU() * T::of_usize(k) / T::of_usize(directions);
                let [c, sn] = unit_direction(theta);
                nodes.push([s * c, s * sn]);
            }
        }
        let w = T::one() / T::of_usize(nodes.len());
        let weights = vec![w; nodes.len()];
        Self::from_nodes(nodes, weights)
    }

    /// A single resting node of unit weight; the velocity set of a spatially
    /// homogeneous description.
    pub fn at_rest() -> Self {
        Self {
            nodes: vec![[T::zero(), T::zero()]],
            weights: vec![T::one()],
        }
    }

    pub fn from_nodes(nodes: Vec<Vec2<T>>, weights: Vec<T>) -> Result<Self> {
        let g = Self { nodes, weights };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Grid("velocity grid needs at least one node".into()));
        }
        if self.nodes.len() != self.weights.len() {
            return Err(Error::Grid(format!(
                "velocity grid has {} nodes but {} weights",
                self.nodes.len(),
                self.weights.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > T::zero()) || !w.is_finite()) {
            return Err(Error::Grid(format!("velocity weight {w} is not positive")));
        }
        if self.nodes.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::Grid("velocity node is not finite".into()));
        }
        Ok(())
    }

    /// Rescales the weights so they sum to `measure`.
    pub fn with_measure(mut self, measure: T) -> Result<Self> {
        if !(measure > T::zero()) {
            return Err(Error::Grid(format!(
                "velocity measure must be positive (got {measure})"
            )));
        }
        let total = self.measure();
        for w in &mut self.weights {
            *w = *w * measure / total;
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn measure(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn v_max(&self) -> T {
        self.nodes.iter().map(|v| norm(*v)).fold(T::zero(), T::max)
    }

    pub fn speed(&self, k: usize) -> T {
        norm(self.nodes[k])
    }

    /// Unit heading of node `k`, or `None` when the node is (numerically) at
    /// rest: `|v| < 1e-12 * v_max`.
    pub fn direction(&self, k: usize) -> Option<Vec2<T>> {
        let v = self.nodes[k];
        let s = norm(v);
        let v_max = self.v_max();
        if v_max == T::zero() || s < T::of(1e-12) * v_max {
            None
        } else {
            Some([v[0] / s, v[1] / s])
        }
    }
}

/// cos/sin with values within 1e-14 of 0 or +-1 snapped, so axis-aligned
/// headings are exact.
fn unit_direction<T: Scalar>(theta: T) -> Vec2<T> {
    let snap = |x: T| {
        let eps = T::of(1e-14);
        if x.abs() < eps {
            T::zero()
        } else if (x - T::one()).abs() < eps {
            T::one()
        } else if (x + T::one()).abs() < eps {
            -T::one()
        } else {
            x
        }
    };
    [snap(theta.cos()), snap(theta.sin())]
}

/// Midpoint partition of the normalized activity interval `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityGrid<T> {
    pub n: usize,
    /// Raw bounds of the activity before normalization; metadata only.
    pub raw_lower: T,
    pub raw_upper: T,
}

impl<T: Scalar> ActivityGrid<T> {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_raw_bounds(n, T::zero(), T::one())
    }

    pub fn with_raw_bounds(n: usize, raw_lower: T, raw_upper: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::Grid("activity grid needs at least one node".into()));
        }
        if !(raw_upper > raw_lower) {
            return Err(Error::Grid(format!(
                "activity bounds inverted: [{raw_lower}, {raw_upper}]"
            )));
        }
        Ok(Self {
            n,
            raw_lower,
            raw_upper,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self) -> T {
        T::one() / T::of_usize(self.n)
    }

    #[inline]
    pub fn node(&self, k: usize) -> T {
        (T::of_usize(k) + T::of(0.5)) / T::of_usize(self.n)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: T) -> usize {
        let k = (x * T::of_usize(self.n)).floor();
        if k < T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX).min(self.n - 1)
        }
    }

    /// Maps a raw activity into `[0, 1]` using this grid's stored bounds.
    pub fn normalize(&self, raw: T) -> Result<T> {
        normalize_activity(raw, self.raw_lower, self.raw_upper)
    }
}

/// `(u - lower) / (upper - lower)`.
pub fn normalize_activity<T: Scalar>(u: T, lower: T, upper: T) -> Result<T> {
    if !(upper > lower) {
        return Err(Error::Domain(format!("activity bounds inverted: [{lower}, {upper}]")));
    }
    if !(u >= lower && u <= upper) {
        return Err(Error::Domain(format!("activity {u} outside [{lower}, {upper}]")));
    }
    Ok((u - lower) / (upper - lower))
}

/// Product of the space, velocity and activity discretizations for one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid<T> {
    pub space: SpaceGrid<T>,
    pub velocity: VelocityGrid<T>,
    pub activity: ActivityGrid<T>,
}

impl<T: Scalar> PhaseGrid<T> {
    pub fn new(space: SpaceGrid<T>, velocity: VelocityGrid<T>, activity: ActivityGrid<T>) -> Self {
        Self {
            space,
            velocity,
            activity,
        }
    }

    /// One cell, one resting velocity, `n_activity` activity nodes.
    pub fn homogeneous(n_activity: usize) -> Result<Self> {
        Ok(Self {
            space: SpaceGrid::new(T::one(), T::one(), 1, 1, Boundary::Periodic)?,
            velocity: VelocityGrid::at_rest(),
            activity: ActivityGrid::new(n_activity)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.velocity.validate()?;
        ActivityGrid::with_raw_bounds(self.activity.n, self.activity.raw_lower, self.activity.raw_upper)?;
        Ok(())
    }

    /// Discrete states per subsystem: cells x velocities x activities.
    pub fn states(&self) -> usize {
        self.space.n_cells() * self.velocity.len() * self.activity.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_endpoints_and_interior() {
        assert_eq!(normalize_activity(1.0, 1.0, 5.0).unwrap(), 0.0);
        assert_eq!(normalize_activity(5.0, 1.0, 5.0).unwrap(), 1.0);
        assert_eq!(normalize_activity(2.0, 1.0, 5.0).unwrap(), 0.25);
        assert_eq!(normalize_activity(-3.0f32, -3.0, 7.0).unwrap(), 0.0);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(matches!(normalize_activity(2.0, 5.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(normalize_activity(2.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(normalize_activity(6.0, 1.0, 5.0), Err(Error::Domain(_))));
        assert!(matches!(normalize_activity(f64::NAN, 1.0, 5.0), Err(Error::Domain(_))));
    }

    #[test]
    fn activity_nodes_are_interior_midpoints() {
        let g = ActivityGrid::<f64>::new(4).unwrap();
        assert_eq!(g.nodes(), vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.weight() * 4.0, 1.0);
        assert_eq!(g.nearest(0.875), 3);
        assert_eq!(g.nearest(1.0), 3);
        assert_eq!(g.nearest(0.0), 0);
        assert_eq!(g.nearest(0.3), 1);
    }

    #[test]
    fn uniform_velocity_grid_axis_directions_are_exact() {
        let g = VelocityGrid::<f64>::uniform(4, 2, 2.0).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.nodes[1], [0.0, 1.0]);
        assert_eq!(g.nodes[6], [-2.0, 0.0]);
        assert!((g.measure() - 1.0).abs() < 1e-15);
        assert_eq!(g.v_max(), 2.0);
        assert_eq!(g.direction(7), Some([0.0, -1.0]));
    }

    #[test]
    fn resting_node_has_no_direction() {
        let g = VelocityGrid::<f64>::from_nodes(vec![[0.0, 0.0], [1.0, 0.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(g.direction(0), None);
        assert!(VelocityGrid::<f64>::at_rest().direction(0).is_none());
    }

    #[test]
    fn grid_validation_errors() {
        assert!(SpaceGrid::<f64>::new(1.0, 1.0, 0, 1, Boundary::Periodic).is_err());
        assert!(SpaceGrid::<f64>::new(0.0, 1.0, 1, 1, Boundary::Periodic).is_err());
        assert!(VelocityGrid::<f64>::from_nodes(vec![[1.0, 0.0]], vec![0.0]).is_err());
        assert!(VelocityGrid::<f64>::from_nodes(vec![], vec![]).is_err());
        assert!(ActivityGrid::<f64>::new(0).is_err());
        let g = SpaceGrid::<f64>::new(4.0, 4.0, 4, 4, Boundary::Periodic).unwrap();
        let exit = ExitSegment {
            side: Side::East,
            first: 1,
            last: 2,
        };
        assert!(g.clone().with_exits(vec![exit]).is_err());
        let a = SpaceGrid::<f64>::new(4.0, 4.0, 4, 4, Boundary::Absorbing).unwrap();
        assert!(a.clone().with_exits(vec![ExitSegment { last: 4, ..exit }]).is_err());
        let a = a.with_exits(vec![exit]).unwrap();
        assert_eq!(a.face(Side::East, 1), FaceKind::Open);
        assert_eq!(a.face(Side::East, 0), FaceKind::Wall);
        assert_eq!(a.face(Side::West, 1), FaceKind::Wall);
        assert_eq!(a.exit_points(), vec![[4.0, 1.5], [4.0, 2.5]]);
    }

    #[test]
    fn periodic_displacement_takes_shortest_image() {
        let g = SpaceGrid::<f64>::new(5.0, 5.0, 5, 5, Boundary::Periodic).unwrap();
        let d = g.displacement(g.center(g.index(0, 0)), g.center(g.index(4, 1)));
        assert_eq!(d, [-1.0, 1.0]);
        let a = SpaceGrid::<f64>::new(5.0, 5.0, 5, 5, Boundary::Absorbing).unwrap();
        let d = a.displacement(a.center(a.index(0, 0)), a.center(a.index(4, 1)));
        assert_eq!(d, [4.0, 1.0]);
    }
}
