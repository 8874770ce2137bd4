//! Information bounds on masked channels and the estimators used to check them.

pub mod bounds;
pub mod channels;
pub mod estimators;
pub mod trace;

pub use bounds::{
    fixed_mask_bound, multivariate_bound, pair_moments, random_mask_bound, variance_inequality_check,
    InequalityCheck, MultivariateBound, PairMoments,
};
pub use channels::{channel_suite, parse_channel_request, ChannelRequest, ChannelSample, ChannelSpec, MaskRule};
pub use estimators::{estimator, estimators, ksg_joint, BinnedMi, KsgMi, MiEstimate, MiEstimator};
pub use trace::{channel_report, model_bound_trace, BoundReport, DimensionBound};
