//! Topological comparison of explanations: mapper graphs over attribution
//! point clouds, extended persistence, bottleneck distances, and the BND
//! score.

mod bottleneck;
mod cover;
mod mapper;
mod persistence;
mod stability;

pub use bottleneck::{bottleneck, bottleneck_points};
pub use cover::{build_cover, Interval};
pub use mapper::{build_mapper, MapperConfig, MapperGraph, MapperNode};
pub use persistence::{graph_persistence, persistence, DiagramPoint, FeatureClass, PairKind, PersistenceDiagram};
pub use stability::{
    bnd_from_matrix, bnd_scores, default_resolution_grid, diagram, distance_matrix, select_resolution, stability,
    ResolutionChoice, StabilityConfig, StabilityRecord,
};
