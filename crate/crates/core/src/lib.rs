pub mod cli;
pub mod coeffs;
pub mod dd;
pub mod epsilon;
pub mod field;
pub mod figures;
pub mod linalg;
pub mod manifest;
pub mod nodal;
pub mod roots;
pub mod solution;
pub mod verify;
