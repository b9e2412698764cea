//! Self-contained statistical core: rank statistics, chance-corrected
//! agreement, ROC analysis with DeLong intervals, cross-validated
//! classifiers, and Poisson mixed models.

pub mod cv;
pub mod folds;
pub mod forest;
pub mod glmm;
pub mod kappa;
pub mod logistic;
pub mod normal;
pub mod rank;
pub mod roc;

pub use cv::{nested_cv_auroc, repeated_split_auroc, ModelSpec, NestedCvResult, RepeatedSplitResult};
pub use folds::{stratified_kfold, stratified_split, FoldPlan};
pub use forest::{fit_random_forest, ForestHyperParams, ForestModel};
pub use glmm::{
    fit_poisson_glm, fit_poisson_glmm, rate_ratio_table, simulate_poisson_glmm, GlmmFit,
    GlmmOptions, GlmmSimulation, PoissonGlm, RateRatioRow,
};
pub use kappa::{bootstrap_kappa_ci, weighted_kappa, KappaEstimate, KappaWeighting};
pub use logistic::{fit_logistic, ClassWeighting, LogisticModel};
pub use rank::{average_ranks, pearson, spearman_rho};
pub use roc::{auroc, delong_ci, delong_paired, AurocEstimate, DeltaAuroc};
