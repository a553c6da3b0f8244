//! Contact forms ρλ_s on round spheres and convex hypersurfaces: fiber averaging,
//! normal-form reduction, volume normalization, and minimal-action estimates.
//!
//! The base form is λ_s = ½ω₀(x, ·), whose Reeb flow on S^{2m−1} is x ↦ e^{2it}x with
//! period π. It differs from λ₀ = Σ x dy by an exact form, so closed characteristics,
//! their actions, and contact volumes agree for both primitives.

pub mod bodies;
pub mod capacity;
pub mod clarke;
pub mod multiplier;
pub mod normal_form;
pub mod reeb;
pub mod sphere_fn;

pub use bodies::{check_pinch, hausdorff_distance, radial_range, Ball, ConvexBody, ProjectedBody, QuadraticBody, RadialBody};
pub use capacity::{
    a_min_estimate, amin_upper_bound, ball_capacity, body_capacity, closed_characteristic_search,
    hausdorff_lipschitz_probe, lipschitz_constant, multiplier_capacity, projection_monotonicity, strict_max_check,
    CapacityEstimate, LipschitzProbe, ProjectionMargin, SearchOptions, StrictMaxReport, UpperBound,
};
pub use clarke::{clarke_minimize, ClarkeOptions, ClarkeResult};
pub use multiplier::{constant_volume_normalizer, contact_volume, sample_points, ContactMultiplier};
pub use normal_form::{
    formal_triviality_order, normal_form_reduce, normal_form_reduce_report, pullback_coefficients, ReductionReport,
    TrivialityOutcome,
};
pub use reeb::{characteristic_flow, refine_orbit, HamiltonianSystem, MultiplierSystem, ReebOrbit, ReebSystem, Trajectory};
pub use sphere_fn::{rotate_phase, Extrema, SphereFunction};
