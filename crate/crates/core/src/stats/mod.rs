//! Statistics kernel: correlation, effect sizes, t-tests, ANOVA, OLS and the
//! t/F distribution functions behind their p-values.

mod correlation;
mod dist;
mod inference;
mod ols;

pub use correlation::{
    average_ranks, correlate, pearson, spearman, Correlation, CorrelationMethod,
};
pub use dist::{f_cdf, f_sf, ln_gamma, reg_inc_beta, t_cdf, t_two_sided_p};
pub use inference::{
    bonferroni, cohens_d, mean, one_way_anova, paired_t, std_dev, unpaired_t, variance, DMode,
    Df, TestKind, TestResult,
};
pub use ols::{normalize_by_max, ols, RegressionFit};
