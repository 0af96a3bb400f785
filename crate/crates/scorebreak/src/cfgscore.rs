//! Conditional segmentation score.
//!
//! The victim-free replacement for a segmenter's loss gradient: the weighted
//! difference `omega * (s(x|y) - s(x))` of the conditional and unconditional
//! generation scores. At `omega = 1` and for exact scores this equals the
//! gradient of the log posterior `log p(y|x)` of the diffused model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::ScoreOracle;
use crate::tensor::{ConditionMap, ImageTensor};

/// Guidance weight combining the two scores; `omega = 0` is the degenerate
/// identity attack and is permitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    pub omega: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self { omega: 90.0 }
    }
}

impl GuidanceParams {
    pub fn new(omega: f64) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::InvalidConfig(format!("omega {omega} is not finite")));
        }
        Ok(Self { omega })
    }
}

/// `omega * (score(x, y, t) - score(x, sentinel, t))`; exactly two oracle
/// calls. `y` must be a conditional map.
pub fn conditional_segmentation_score(
    oracle: &dyn ScoreOracle,
    x: &ImageTensor,
    y: &ConditionMap,
    t: usize,
    g: &GuidanceParams,
) -> Result<ImageTensor> {
    if y.is_unconditional() {
        return Err(Error::InvalidCondition(
            "conditional segmentation score needs a conditional map, got the sentinel".into(),
        ));
    }
    let (h, w, k) = y.dim();
    let cond = oracle.score(x, y, t)?;
    let uncond = oracle.score(x, &ConditionMap::unconditional(h, w, k), t)?;
    cond.zip_with(&uncond, |c, u| g.omega * (c - u))
}
