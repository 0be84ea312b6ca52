//! Classification, characteristic reduction and front singularities of
//! generalized Monge-Ampere systems `z_xx = α z_xy, z_xy = α z_yy`.

pub mod classify;
pub mod cli;
pub mod model;
pub mod reduction;
pub mod singularity;
pub mod solver;
pub mod symexpr;
pub mod verify;
