//! Bayesian crash-frequency models with Lindley and Generalized Exponential
//! site heterogeneity.
//!
//! The crate covers the whole workflow: loading or simulating site data,
//! building design matrices, Metropolis-within-Gibbs estimation of NB-L,
//! RPNB-L and RPNB-GE models, convergence diagnostics, DIC and marginal
//! effects, predictive evaluation, and Full-Bayes screening of sites by their
//! potential for safety improvement.

pub mod data;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod linalg;
pub mod model_spec;
pub mod sampler;
pub mod screening;
pub mod stats;

pub use data::{Severity, SiteRecord};
pub use distributions::{GeParam, LindleyParam, NbParam};
pub use error::{Error, Result};
pub use evaluation::{cure, mae, rmse, train_test_split, CureCurve};
pub use inference::{dic, marginal_effects, summarize, DicReport, PosteriorSummary};
pub use model_spec::{DesignMatrix, Family, Formula, ModelConfig, ModelSpec, PriorConfig};
pub use sampler::{bgr, mc_error, ChainDraws, McmcConfig, ModelData};
pub use screening::{classify, mh_odds_ratio, psi, PsiResult, StratumTable, Zone};
