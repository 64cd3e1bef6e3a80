//! Default tolerances. Each constant is referenced by name from the code
//! that uses it so a change here is visible in one place.

/// Relative target for adaptive quadrature.
pub const QUADRATURE_REL: f64 = 1e-10;

/// Absolute floor for adaptive quadrature.
pub const QUADRATURE_ABS: f64 = 1e-13;

/// Grid step used for dense sup-norm measurements on one period.
pub const SUP_GRID_STEP: f64 = 1e-5;

/// Maximum pointwise residual of the oscillator ODE.
pub const ODE_RESIDUAL: f64 = 1e-8;

/// Per-point error allowed in `w(n) e^{c eps n} = 1`.
pub const DECAY_FIT: f64 = 1e-6;

/// Default upper limit for the oscillation parameter.
pub const EPS_BAR: f64 = 0.05;

/// Smallest accepted value of the integral of `w` over one period, divided by eps.
pub const GAMMA_FLOOR: f64 = 0.01;

/// Relative tolerance of the Dormand-Prince integrator.
pub const ODE_RTOL: f64 = 1e-11;

/// Absolute tolerance of the Dormand-Prince integrator (relative to the log-scaled state).
pub const ODE_ATOL: f64 = 1e-13;

/// Steps per oscillation period that the integrator never undercuts.
pub const STEPS_PER_PERIOD: f64 = 16.0;

/// Courant number for the leapfrog scheme.
pub const CFL: f64 = 0.9;

/// Signal-to-noise floor for repeated discrete differentiation.
pub const SNR_FLOOR: f64 = 1e-6;

/// Relative floor below which an observed boundary integral counts as zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-26;

/// Fraction of the time window tapered on each side before Fourier transforms.
pub const TAPER_FRACTION: f64 = 0.1;

/// Gronwall ratios may exceed one by this much.
pub const GRONWALL_SLACK: f64 = 1e-6;

/// Spectral truncation tolerance for dyadic reconstruction.
pub const DYADIC_RECONSTRUCTION: f64 = 1e-10;

/// "Not BV" threshold: TV must grow by at least this factor per refinement level.
pub const TV_GROWTH_PER_LEVEL: f64 = 1.5;

/// Number of refinement levels over which TV growth is tested.
pub const TV_LEVELS: usize = 4;

/// Relative gap below which two competing class fits are called inconclusive.
pub const CLASSIFIER_MARGIN: f64 = 0.1;
