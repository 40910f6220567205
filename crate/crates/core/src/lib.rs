//! Numerical laboratory for isometric embeddings of degenerate-elliptic sphere
//! metrics: conformal regularization, continuation embedding into Euclidean
//! space, curvature estimation, and checks of the curvature estimates that a
//! family of ε-elliptic embeddings should satisfy.

pub mod corpus;
pub mod curvature;
pub mod embed;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod metric;
pub mod plots;
pub mod verify;
