//! Layer-normalized states satisfy `1ᵀ((h′ − b)/g) = 0`, so every state lies
//! on the affine hyperplane `1ᵀ(h′/g) = 1ᵀ(b/g)`. That hyperplane misses the
//! origin whenever `1ᵀ(b/g) ≠ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HiddenStateBatch, ModelParams};
use crate::theory::negdir::{find_negative_direction, NegDirCertificate};

pub const CENTERED_SUM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNormReport {
    /// Worst `|1ᵀ((h′ − b)/g)|` over the states.
    pub centered_sum_max: f64,
    pub identity_holds: bool,
    /// `1ᵀ(b/g)`
    pub b_over_g_dot_one: f64,
    pub hull_verdict: NegDirCertificate,
}

pub fn layernorm_origin_check(
    params: &ModelParams,
    states: &HiddenStateBatch,
    tolerance: f64,
    max_iters: usize,
) -> Result<LayerNormReport> {
    if !params.use_layer_norm {
        return Err(Error::domain("layer norm is disabled in these parameters"));
    }
    if states.states.cols() != params.dim() {
        return Err(Error::domain("state width does not match the model"));
    }
    let g = &params.ln_gain;
    let b = &params.ln_bias;
    let centered_sum_max = states
        .states
        .row_iter()
        .map(|h| {
            h.iter()
                .zip(g)
                .zip(b)
                .map(|((hj, gj), bj)| (hj - bj) / gj)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max);
    let b_over_g_dot_one = b.iter().zip(g).map(|(bj, gj)| bj / gj).sum();
    let hull_verdict = find_negative_direction(&states.states, tolerance, max_iters)?;
    Ok(LayerNormReport {
        centered_sum_max,
        identity_holds: centered_sum_max <= CENTERED_SUM_TOL,
        b_over_g_dot_one,
        hull_verdict,
    })
}
