//! Default numeric tolerances. Every value can be overridden from the CLI.

/// Unitarity and commutation defects of clock-shift matrices.
pub const REP_DEFECT: f64 = 1e-12;
/// `represent` and the field evaluations as *-homomorphisms.
pub const HOMOMORPHISM: f64 = 1e-10;
/// `||P^2 - P||` and `||P* - P||` for Rieffel projections.
pub const RIEFFEL_RESIDUAL: f64 = 1e-8;
/// `|tr(P)/q - p/q|`.
pub const RIEFFEL_TRACE: f64 = 1e-6;
/// Span-projection residual at interval endpoints.
pub const BOUNDARY: f64 = 1e-8;
/// Per unit of `max(1, |s|)` when comparing `winding(X^s)` with `s p/q`.
pub const WINDING_PER_UNIT: f64 = 2e-3;
/// Change of the winding value when the grid is doubled.
pub const WINDING_DRIFT: f64 = 1e-4;
/// Default floor for the minimum singular value along a homotopy.
pub const HOMOTOPY_FLOOR: f64 = 1e-6;
/// Fiber-wise `||P^2 - P||` for clutched idempotents.
pub const CLUTCH_PROJECTION: f64 = 1e-6;
/// Disagreement of the two hemispheres on the equator.
pub const CLUTCH_SEAM: f64 = 1e-8;
/// Deviation of pole fibers from `1_n + 0_n`.
pub const CLUTCH_POLE: f64 = 1e-10;
/// Distance from an integer above which invariant recovery is refused.
pub const ROUNDING_AMBIGUITY: f64 = 0.2;
/// Mesh-coverage gap for the spectrum of `c` in the unit disk.
pub const SPECTRUM_COVERAGE: f64 = 0.1;
/// Distance of the `u = 0` spectrum from the unit circle.
pub const SPECTRUM_BOUNDARY: f64 = 1e-8;
/// Ball relation residual along the retraction to scalars.
pub const RETRACTION: f64 = 1e-10;
