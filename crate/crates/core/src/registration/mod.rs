//! Visibility-aware GMM-EM registration of the template nodes to a cloud.
//!
//! Nodes are Gaussian centroids moving as `P_prev + G W`. The E-step
//! computes responsibilities with a uniform outlier component; the M-step
//! solves the stationarity condition of the regularized cost (coherence,
//! LLE shape preservation and motion-model prediction) for `W`.

mod em;
mod params;
mod visibility;

pub use em::{
    e_step, gmm_em, m_step_solve_w, sigma2_trace_form, update_sigma2, EmOperators, EmOutcome,
    Posterior, RegularizerWeights, SIGMA2_FLOOR,
};
pub use params::TrackerParams;
pub use visibility::visibility_prior;
