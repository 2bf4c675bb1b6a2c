//! Concrete pairwise likelihood models.

pub mod ar1;
pub mod geostat;
pub mod mvn;
pub mod robust;

pub use ar1::{Ar1Data, Ar1Model, Ar1Params, ContaminationSpec};
pub use geostat::{block_partition, default_block_l, BlockPartition, GeoData, GeoModel, GeoParams, GrfSampler};
pub use mvn::{MvnModel, MvnParams};
pub use robust::{huber_beta_const, huber_psi, RobustTuning};
