//! Low-rank matrix completion by scaled stochastic gradient descent.
//!
//! The crate solves `min 1/2 ||P_Omega(L R^T) - P_Omega(X*)||_F^2` over
//! factor pairs `(L, R)` with a preconditioned SGD whose updates are
//! invariant to the factorization's gauge symmetry, alongside plain SGD,
//! ALS and CCD++ baselines.
//!
//! ```
//! use scaledsgd::problem::{generate, GeneratorSpec};
//! use scaledsgd::solvers::{NullSink, Solver, SolverConfig};
//!
//! let (data, _truth) = generate(&GeneratorSpec::new(60, 50, 3, 5.0).with_seed(1)).unwrap();
//! let config = SolverConfig::scaled_sgd(0.5, 10).with_max_iters(20);
//! let outcome = Solver::with_random_init(config, &data, 3).unwrap().run(None, &mut NullSink).unwrap();
//! assert!(outcome.final_record().unwrap().rel_residual < outcome.trace[0].rel_residual);
//! ```

// `!(x > 0.0)` is used on purpose: it rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batching;
pub mod metrics;
pub mod problem;
pub mod rng;
pub mod smalldense;
pub mod solvers;

pub use problem::{Entry, GeneratorSpec, ObservedMatrix};
pub use solvers::{FactorPair, SolverConfig, SolverError, SolverKind};
