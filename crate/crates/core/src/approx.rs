//! Constant-time marginal value approximations Γ̂ that drive ordering
//! scores. Only their relative order matters, so absolute offsets (the pose
//! term is negative near zero) are harmless.

use crate::error::{Error, Result};
use crate::geometry::CapOverlapModel;

/// Default pose radius, meters.
pub const DEFAULT_ALPHA: f64 = 15.0;

#[derive(Clone, Debug, PartialEq)]
pub enum ApproxKind {
    /// Position heuristic with radius `alpha` (meters).
    Pose { alpha: f64 },
    /// Pairwise cap-overlap approximation on descriptor distances.
    Descriptor(CapOverlapModel),
    /// Unweighted sum of the pose and descriptor terms.
    Combined { alpha: f64, model: CapOverlapModel },
}

/// Which distance a delta is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapChannel {
    Descriptor,
    Pose,
}

/// `1 − max(0, −ln(gap/α + 0.1))`.
pub fn pose_gamma(pose_gap: f64, alpha: f64) -> f64 {
    1.0 - (-(pose_gap / alpha + 0.1).ln()).max(0.0)
}

/// `1 − 𝒪(gap)`.
pub fn descriptor_gamma(model: &CapOverlapModel, descriptor_gap: f64) -> f64 {
    1.0 - model.mutual_info(descriptor_gap)
}

impl ApproxKind {
    pub fn pose(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Pose { alpha })
    }

    pub fn combined(alpha: f64, model: CapOverlapModel) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Combined { alpha, model })
    }

    pub fn uses(&self, channel: GapChannel) -> bool {
        matches!(
            (self, channel),
            (ApproxKind::Pose { .. }, GapChannel::Pose)
                | (ApproxKind::Descriptor(_), GapChannel::Descriptor)
                | (ApproxKind::Combined { .. }, _)
        )
    }

    /// The term of Γ̂ fed by `channel`, or `None` if this kind ignores it.
    pub fn term(&self, channel: GapChannel, gap: f64) -> Option<f64> {
        match (self, channel) {
            (ApproxKind::Pose { alpha }, GapChannel::Pose) | (ApproxKind::Combined { alpha, .. }, GapChannel::Pose) => {
                Some(pose_gamma(gap, *alpha))
            }
            (ApproxKind::Descriptor(model), GapChannel::Descriptor)
            | (ApproxKind::Combined { model, .. }, GapChannel::Descriptor) => Some(descriptor_gamma(model, gap)),
            _ => None,
        }
    }

    /// Γ̂ for an element at the given gaps from the solution.
    pub fn gamma_hat(&self, descriptor_gap: f64, pose_gap: f64) -> f64 {
        self.term(GapChannel::Descriptor, descriptor_gap).unwrap_or(0.0)
            + self.term(GapChannel::Pose, pose_gap).unwrap_or(0.0)
    }

    /// Ordering-score change when an element's cached gap shrinks from
    /// `old_gap` to `new_gap`, averaged over `num_solutions` guesses.
    pub fn ordering_delta(&self, channel: GapChannel, new_gap: f64, old_gap: f64, num_solutions: usize) -> f64 {
        match (self.term(channel, new_gap), self.term(channel, old_gap)) {
            (Some(new), Some(old)) => (new - old) / num_solutions as f64,
            _ => 0.0,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "pose radius alpha must be positive, got {alpha}"
        )))
    }
}
