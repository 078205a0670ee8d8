//! Adiabatic geometric phases computed three ways: from classical
//! action-angle tori (Hannay angle), from Hilbert-space eigenvectors (Berry
//! and Wilczek-Zee), and from Wigner phase-space profiles weighted against
//! the classical two-form.

pub mod error;
pub mod classical;
pub mod dynamics;
pub mod geometry;
pub mod phasespace;
pub mod quantum;
pub mod specfun;
pub mod wigner;

pub use error::{Error, Result};

pub use classical::{
    classical_two_form, hannay_angle, oscillator_frequency, oscillator_two_form_exact, ActionAngleChart,
    ClassicalOptions, DisplacedAnharmonic, NumericChart, OscillatorChart,
};
pub use dynamics::{evolve_classical, evolve_quantum, Schedule, ScheduleProfile};
pub use geometry::{
    make_cap_circuit, make_cap_surface, make_disc_surface, make_planar_y0_surface, surface_integral, Circuit,
    MatrixTwoForm, ParamPoint, Surface, TwoForm, TwoFormField,
};
pub use phasespace::{
    curvature_from_wigner, curvature_separable, mixed_curvature, mixed_phase, semiclassical_check,
    wz_curvature_from_wigner, PhaseReport,
};
pub use quantum::{eigenstates, Backend, BerryPhase, HilbertRoute, SpatialGrid};
pub use specfun::QuadratureRule;
pub use wigner::{oscillator_radial_wigner, wigner_transform, MatrixRadialWigner, RadialWigner, WignerMap};
