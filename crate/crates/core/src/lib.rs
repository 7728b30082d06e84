//! Metropolis-style multialternative choice.
//!
//! A decision maker holds an incumbent alternative, proposes challengers through an
//! exploration matrix `Q`, and settles each binary comparison with a stochastic
//! comparison model. The incumbents form a Markov chain with transition
//! `M(i|j) = Q(i|j) rho(i|j)`. This crate provides
//!
//! * [`kernel`]: binary choice kernels, the product-rule transitivity test and the
//!   Hastings decomposition `rho(i|j) = s(i,j) pi(i) / (pi(i) + pi(j))`;
//! * [`bbc`]: comparison models (Ornstein-Uhlenbeck evidence accumulation and a
//!   tabular model) and Monte Carlo kernel estimation;
//! * [`chain`]: the transition matrix, stationary law, detailed balance, the
//!   Kolmogorov cycle criterion and spectral decomposition;
//! * [`stopping`]: exact stopped choice probabilities and mean decision times;
//! * [`simulation`]: Monte Carlo runs, including clock-deadline stopping;
//! * [`cli`]: the `nmchoice` command line front end.

pub mod bbc;
pub mod chain;
pub mod cli;
pub mod dist;
pub mod error;
pub mod io;
pub mod kernel;
pub mod rng;
pub mod simulation;
pub mod stopping;

pub use bbc::{BbcModel, MeanResponseTimes, OuParams, TabularBbc};
pub use chain::{build_transition, ExplorationMatrix, TransitionMatrix};
pub use error::{Error, Result};
pub use kernel::{luce_kernel, StochasticChoiceKernel, SymmetricWeights};
pub use stopping::{IterationTimeVector, StoppingTime};
