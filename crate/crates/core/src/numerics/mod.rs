//! Chi-square family distributions, gamma quantiles, symmetric matrices and
//! empirical quantiles shared by every other module.

mod linalg;
mod quantile;
mod special;

pub use linalg::{sym_inverse, SymMatrix, CONDITION_LIMIT};
pub use quantile::empirical_quantile;
pub use special::{
    chi2_cdf, chi2_quantile, chi2_sf, gamma_cdf, gamma_quantile, gamma_quantile_upper,
    ln_gamma, noncentral_chi2_cdf, noncentral_chi2_sf, normal_cdf, normal_quantile, normal_sf,
};
