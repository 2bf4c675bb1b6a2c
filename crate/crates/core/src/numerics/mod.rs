//! Self-contained numerical kernel.

mod diff;
mod eigen;
mod linalg;
mod newton;
mod random;
mod special;

pub use diff::{central_gradient, central_jacobian, default_step};
pub use eigen::{h_inv_j_eigenvalues, symmetric_eigenvalues};
pub use linalg::{cholesky_spd, dot, norm2, norm_inf, Cholesky, Lu, Matrix, SymMatrix};
pub use newton::{newton_system, Jacobian, NewtonOptions, NewtonReport};
pub use random::{categorical_sample, standard_normal, CategoricalSampler, RngStream};
pub use special::{
    chisq_cdf, chisq_quantile, chisq_tail, chisq_upper_quantile, gamma_p, gamma_q, ln_gamma,
    log_sum_exp, normal_cdf, normal_pdf,
};
