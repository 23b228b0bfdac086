use crate::targets::{grad_log_pi, second_deriv_diag, FactorizedTarget};
use crate::{Error, Real, Result};

use super::proposal::Proposal;

/// Target process specified through the adjoint of its generator (the
/// right-hand side of its Fokker-Planck equation). The incremental weight
/// only ever needs this operator applied to the proposal kernel.
pub enum TargetProcess<'a> {
    /// Plain Brownian motion: `L* q = (1/2) Laplacian q`.
    Brownian,
    /// Killed-Brownian posterior process (the SCALE target):
    /// `L* q = (1/2) Laplacian q - kill(x) q` with
    /// `kill = (1/2) sum_i [d^2 log pi / dx_i^2 + (d log pi / dx_i)^2]`.
    Scale { target: &'a dyn FactorizedTarget },
    /// Langevin diffusion for `pi`:
    /// `L* q = (1/2) Laplacian q - (1/2) sum_i d/dx_i (q d log pi / dx_i)`.
    Langevin { target: &'a dyn FactorizedTarget },
}

impl TargetProcess<'_> {
    /// `L* q_s(x | y)` for the given proposal kernel.
    pub fn apply_adjoint(&self, proposal: &Proposal, x: &[Real], y: &[Real], s: Real) -> Result<Real> {
        match self {
            TargetProcess::Brownian => Ok(0.5 * proposal.laplacian_x(x, y, s)?),
            TargetProcess::Scale { target } => {
                let g = grad_log_pi(*target, x)?;
                let h = second_deriv_diag(*target, x)?;
                let kill: Real = 0.5 * g.iter().zip(&h).map(|(gi, hi)| hi + gi * gi).sum::<Real>();
                let q = proposal.density(x, y, s)?;
                Ok(0.5 * proposal.laplacian_x(x, y, s)? - kill * q)
            }
            TargetProcess::Langevin { target } => {
                let g = grad_log_pi(*target, x)?;
                let h = second_deriv_diag(*target, x)?;
                let q = proposal.density(x, y, s)?;
                let grad_q = proposal.grad_x(x, y, s)?;
                let drift: Real = grad_q
                    .iter()
                    .zip(&g)
                    .zip(&h)
                    .map(|((dq, gi), hi)| dq * gi + q * hi)
                    .sum();
                Ok(0.5 * proposal.laplacian_x(x, y, s)? - 0.5 * drift)
            }
        }
    }
}

/// Pointwise kernel evaluation `(x, y, s) -> value` used by the generic
/// incremental-weight evaluator.
pub type KernelFn<'a> = dyn Fn(&[Real], &[Real], Real) -> Result<Real> + 'a;

/// The incremental-weight function from the operator pieces:
/// `rho(x, y, s) = [L* q_s(x|y) - d q_s(x|y) / ds] / q_s(x|y)`.
///
/// This is the extension point that makes CIS usable for any target process
/// specified through its Fokker-Planck adjoint; callers supply the three
/// evaluations.
pub fn incremental_rho_generic(
    lstar_q: &KernelFn,
    dq_ds: &KernelFn,
    q: &KernelFn,
    x: &[Real],
    y: &[Real],
    s: Real,
) -> Result<Real> {
    let qv = q(x, y, s)?;
    if qv <= 0.0 || !qv.is_finite() {
        return Err(Error::Domain(format!("proposal density must be positive, got {qv}")));
    }
    Ok((lstar_q(x, y, s)? - dq_ds(x, y, s)?) / qv)
}

/// [`incremental_rho_generic`] assembled from a process and a proposal.
pub fn rho_via_generator(
    process: &TargetProcess<'_>,
    proposal: &Proposal,
    x: &[Real],
    y: &[Real],
    s: Real,
) -> Result<Real> {
    incremental_rho_generic(
        &|x, y, s| process.apply_adjoint(proposal, x, y, s),
        &|x, y, s| proposal.d_density_ds(x, y, s),
        &|x, y, s| proposal.density(x, y, s),
        x,
        y,
        s,
    )
}
