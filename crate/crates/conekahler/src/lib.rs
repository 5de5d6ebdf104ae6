pub mod cone_geometry;
pub mod elliptic;
pub mod error;
pub mod jet;
pub mod spectral;
pub mod parabolic_bundles;
pub mod he_flow;
pub mod ruled;
pub mod invariants;
pub mod io;
