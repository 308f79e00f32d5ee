//! Monte Carlo oracle for the five-factor model.

pub mod convergence;
pub mod correlation;
pub mod effective;
pub mod model;
pub mod sim;

pub use convergence::{convergence_study, ConvergenceRow};
pub use correlation::{correlated_increments, CorrelationMatrix};
pub use effective::{effective_params, EffectiveParams};
pub use model::{Func1, Func2, MCModelSpec};
pub use sim::{min_steps, simulate, simulate_controlled, simulate_price, MCEstimate, Payoff};
