//! Accelerated Condat-Vu primal-dual splitting.
//!
//! Minimises `f(Ax) + g(x) + h(x)` with proximable `f`, `g` and smooth `h`,
//! together with the classical Condat-Vu, PDHG and accelerated proximal
//! gradient baselines, problem builders and convergence diagnostics.

pub mod cli;
pub mod functions;
pub mod io;
pub mod linops;
pub mod metrics;
pub mod problems;
pub mod solver;
pub mod vecops;
