use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::context::InteractionContext;
use crate::kernels::KernelId;
use crate::scalar::Scalar;

/// Closed-form encounter rates. Units are 1/time per unit field density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateForm<T> {
    /// `alpha0`.
    Constant { alpha0: T },
    /// `alpha0 * (1 + kappa * rho_field)`, with `rho_field` the density of
    /// the field subsystem at the field position.
    DensityModulated { alpha0: T, kappa: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateKernel<T> {
    pub id: KernelId,
    pub form: RateForm<T>,
}

impl<T: Scalar> RateKernel<T> {
    pub fn new(id: KernelId, form: RateForm<T>) -> Result<Self> {
        let alpha0 = match form {
            RateForm::Constant { alpha0 } => alpha0,
            RateForm::DensityModulated { alpha0, kappa } => {
                if !kappa.is_finite() {
                    return Err(Error::kernel(id.to_string(), "kappa must be finite"));
                }
                alpha0
            }
        };
        if !(alpha0 >= T::zero()) || !alpha0.is_finite() {
            return Err(Error::kernel(id.to_string(), format!("alpha0 = {alpha0} must be >= 0")));
        }
        Ok(Self { id, form })
    }

    /// True when the rate vanishes for every state.
    pub fn is_zero(&self) -> bool {
        match self.form {
            RateForm::Constant { alpha0 } | RateForm::DensityModulated { alpha0, .. } => alpha0 == T::zero(),
        }
    }

    /// Whether the rate ignores the distributions entirely.
    pub fn is_density_independent(&self) -> bool {
        matches!(self.form, RateForm::Constant { .. })
            || matches!(self.form, RateForm::DensityModulated { kappa, .. } if kappa == T::zero())
    }

    #[inline]
    pub fn evaluate(&self, ctx: &InteractionContext<'_, T>) -> Result<T> {
        let value = match self.form {
            RateForm::Constant { alpha0 } => alpha0,
            RateForm::DensityModulated { alpha0, kappa } => alpha0 * (T::one() + kappa * ctx.field_density()),
        };
        if value >= T::zero() && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::kernel(
                self.id.to_string(),
                format!("rate evaluated to {value}, must be finite and >= 0"),
            ))
        }
    }
}
