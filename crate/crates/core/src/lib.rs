//! Persistence exponents of autoregressive and moving-average processes.
//!
//! Three routes to the exponent λ = lim pₙ^{1/n}: Monte Carlo estimation of
//! pₙ ([`simulate`]), the spectral radius of a Nyström discretization of the
//! persistence operator ([`operator`]), and closed forms ([`oracle`]).
//! [`harness`] runs them against each other.

pub mod config;
pub mod harness;
pub mod model;
pub mod operator;
pub mod oracle;
pub mod quadrature;
pub mod real;
pub mod rng;
pub mod simulate;
pub mod spectral;

pub use config::{ConfigError, ExperimentSpec, HorizonSpec};
pub use harness::{compare, run_suite, ComparisonReport, HarnessError, SuiteConfig};
pub use model::{
    ArModel, InitialDistribution, Innovation, MaModel, Model, ModelError, SurvivalConvention,
};
pub use operator::{assemble_ar, assemble_ma, convergence_sweep, Operator, OperatorError, OperatorOptions};
pub use oracle::{classify_regime, OracleCase, OracleError};
pub use quadrature::{build_grid, Grid, Scheme};
pub use real::Real;
pub use simulate::{estimate_crude, estimate_splitting, fit_exponent, PersistenceEstimate, SimulationError};
pub use spectral::{spectral_radius, PowerConfig, SpectralError, Spectrum};

/// Double-precision tensor grid.
pub type QuadratureGrid = Grid<f64>;
/// Double-precision discretized operator.
pub type DiscretizedOperator = Operator<f64>;
/// Double-precision spectral result.
pub type SpectralResult = Spectrum<f64>;

pub type QuadratureGridF32 = Grid<f32>;
pub type DiscretizedOperatorF32 = Operator<f32>;
pub type SpectralResultF32 = Spectrum<f32>;
