//! Optimal bipartite assignment (Hungarian and Murty's k-best) and the
//! focal + L1 set-prediction matching cost.

mod cost;
mod hungarian;
mod loss;
mod murty;

pub use cost::{Assignment, CostMatrix};
pub use hungarian::{hungarian, hungarian_partial};
pub use loss::{
    build_cost_matrix, focal_loss, l1_box_cost, set_prediction_loss, GroundTruth, LossWeights,
    Prediction, SetLoss,
};
pub use murty::murty_kbest;
