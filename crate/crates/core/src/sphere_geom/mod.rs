//! Domains on the unit sphere: analytic presets, meshes, measures and
//! quadrature.

mod build;
mod io;
mod mesh;
mod spec;

pub use build::build_domain;
pub use io::{mesh_to_string, parse_mesh, parse_phi, phi_to_string, read_mesh, read_phi, write_mesh, write_phi};
pub use mesh::{
    add3, cross3, dot3, geodesic_distance, hemisphere_measure, integrate_boundary_fn, integrate_on_boundary,
    integrate_on_domain, norm3, scale3, sub3, surface_measure, unit_ball_volume, BoundaryNode, SphericalMesh,
    SpherePoint, Vec3,
};
pub use spec::DomainSpec;
