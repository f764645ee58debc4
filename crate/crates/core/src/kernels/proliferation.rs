use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::context::InteractionContext;
use crate::kernels::KernelId;
use crate::scalar::Scalar;

/// Production multiplier (dimensionless, multiplies the encounter rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainForm<T> {
    Constant {
        p: T,
    },
    /// `p / (1 + sigma * rho_test)`, saturating in the test subsystem's own
    /// local density.
    DensitySaturated {
        p: T,
        sigma: T,
    },
    /// `p * u_field`.
    ActivityGated {
        p: T,
    },
}

/// Removal multiplier (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossForm<T> {
    Constant {
        l: T,
    },
    /// `l * u_field`: removal proportional to the field particle's activity.
    ActivityGated {
        l: T,
    },
}

/// Gain and loss kernels of one subsystem pair; a missing side is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProliferationKernel<T> {
    pub id: KernelId,
    pub gain: Option<GainForm<T>>,
    pub loss: Option<LossForm<T>>,
}

impl<T: Scalar> ProliferationKernel<T> {
    pub fn new(id: KernelId, gain: Option<GainForm<T>>, loss: Option<LossForm<T>>) -> Result<Self> {
        let check = |name: &str, x: T| {
            if x >= T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(Error::kernel(id.to_string(), format!("{name} = {x} must be >= 0")))
            }
        };
        match gain {
            Some(GainForm::Constant { p }) | Some(GainForm::ActivityGated { p }) => check("p", p)?,
            Some(GainForm::DensitySaturated { p, sigma }) => {
                check("p", p)?;
                check("sigma", sigma)?;
            }
            None => {}
        }
        match loss {
            Some(LossForm::Constant { l }) | Some(LossForm::ActivityGated { l }) => check("l", l)?,
            None => {}
        }
        Ok(Self { id, gain, loss })
    }

    /// `(gain, loss)` for one encounter; the candidate slot of `ctx` holds the
    /// test particle.
    #[inline]
    pub fn evaluate(&self, ctx: &InteractionContext<'_, T>) -> Result<(T, T)> {
        let gain = match self.gain {
            None => T::zero(),
            Some(GainForm::Constant { p }) => p,
            Some(GainForm::DensitySaturated { p, sigma }) => p / (T::one() + sigma * ctx.candidate_density()),
            Some(GainForm::ActivityGated { p }) => p * ctx.field.activity(),
        };
        let loss = match self.loss {
            None => T::zero(),
            Some(LossForm::Constant { l }) => l,
            Some(LossForm::ActivityGated { l }) => l * ctx.field.activity(),
        };
        if gain >= T::zero() && loss >= T::zero() && gain.is_finite() && loss.is_finite() {
            Ok((gain, loss))
        } else {
            Err(Error::kernel(
                self.id.to_string(),
                format!("evaluated to gain {gain}, loss {loss}; both must be finite and >= 0"),
            ))
        }
    }

    pub fn is_density_independent(&self) -> bool {
        !matches!(self.gain, Some(GainForm::DensitySaturated { sigma, .. }) if sigma != T::zero())
    }
}
