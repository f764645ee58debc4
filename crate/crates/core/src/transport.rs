//! Free streaming `v . grad_x f` by dimension-split first-order upwind.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::state::{DistributionField, FaceKind, Side, SpaceGrid, VelocityGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    #[default]
    FirstOrderUpwind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportScheme<T> {
    pub scheme: SchemeId,
    pub cfl_limit: T,
}

impl<T: Scalar> TransportScheme<T> {
    pub fn upwind(cfl_limit: T) -> Result<Self> {
        if !(cfl_limit > T::zero() && cfl_limit <= T::one()) {
            return Err(Error::config(format!("cfl limit {cfl_limit} must lie in (0, 1]")));
        }
        Ok(Self {
            scheme: SchemeId::FirstOrderUpwind,
            cfl_limit,
        })
    }

    /// Fails with [`Error::Cfl`] when `dt` is too large for `velocity`.
    pub fn check(&self, dt: T, space: &SpaceGrid<T>, velocity: &VelocityGrid<T>) -> Result<()> {
        let number = cfl_number(dt, space, velocity);
        if number <= self.cfl_limit * (T::one() + T::of(1e-12)) {
            Ok(())
        } else {
            Err(Error::Cfl {
                number: number.as_f64(),
                limit: self.cfl_limit.as_f64(),
            })
        }
    }
}

impl<T: Scalar> Default for TransportScheme<T> {
    fn default() -> Self {
        Self {
            scheme: SchemeId::FirstOrderUpwind,
            cfl_limit: T::one(),
        }
    }
}

/// `dt * max|v| / min(dx, dy)`.
pub fn cfl_number<T: Scalar>(dt: T, space: &SpaceGrid<T>, velocity: &VelocityGrid<T>) -> T {
    dt * velocity.v_max() / space.dx().min(space.dy())
}

/// Advances every `(subsystem, velocity, activity)` slice of `field` by `dt`
/// of free streaming: an x sweep then a y sweep. The CFL condition is checked
/// before anything is computed.
pub fn advect<T: Scalar>(
    field: &DistributionField<T>,
    dt: T,
    space: &SpaceGrid<T>,
    velocity: &VelocityGrid<T>,
    scheme: &TransportScheme<T>,
) -> Result<DistributionField<T>> {
    scheme.check(dt, space, velocity)?;
    let mut out = field.clone();
    let (nx, ny) = (space.nx, space.ny);
    let mut line = Vec::new();
    let mut next = Vec::new();
    for s in 0..field.subsystems() {
        for (v, node) in velocity.nodes.iter().enumerate() {
            for a in 0..field.activities() {
                if node[0] != T::zero() {
                    let c = node[0].abs() * dt / space.dx();
                    for iy in 0..ny {
                        line.clear();
                        line.extend((0..nx).map(|ix| out.get(s, space.index(ix, iy), v, a)));
                        sweep(
                            &line,
                            c,
                            node[0] > T::zero(),
                            space.face(Side::West, iy),
                            space.face(Side::East, iy),
                            &mut next,
                        );
                        for (ix, q) in next.iter().enumerate() {
                            out.set(s, space.index(ix, iy), v, a, *q);
                        }
                    }
                }
                if node[1] != T::zero() {
                    let c = node[1].abs() * dt / space.dy();
                    for ix in 0..nx {
                        line.clear();
                        line.extend((0..ny).map(|iy| out.get(s, space.index(ix, iy), v, a)));
                        sweep(
                            &line,
                            c,
                            node[1] > T::zero(),
                            space.face(Side::South, ix),
                            space.face(Side::North, ix),
                            &mut next,
                        );
                        for (iy, q) in next.iter().enumerate() {
                            out.set(s, space.index(ix, iy), v, a, *q);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One upwind update along a line. `forward` means flow toward increasing
/// index; `low`/`high` are the faces at the two ends of the line.
fn sweep<T: Scalar>(q: &[T], c: T, forward: bool, low: FaceKind, high: FaceKind, out: &mut Vec<T>) {
    let n = q.len();
    out.clear();
    out.resize(n, T::zero());
    // walk in the flow direction: `k` is upstream of `k + 1`
    let at = |k: usize| if forward { k } else { n - 1 - k };
    let (inlet, outlet) = if forward { (low, high) } else { (high, low) };
    for k in 0..n {
        let here = q[at(k)];
        let leaving = if k + 1 < n || outlet != FaceKind::Wall {
            c * here
        } else {
            T::zero()
        };
        let arriving = if k > 0 {
            c * q[at(k - 1)]
        } else if inlet == FaceKind::Periodic {
            c * q[at(n - 1)]
        } else {
            T::zero()
        };
        out[at(k)] = (here - leaving) + arriving;
    }
}
