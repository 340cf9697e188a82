//! Branch-and-bound approximation schemes for multiple knapsack and
//! parallel machine scheduling, on exact rational arithmetic.

pub mod engine;
pub mod experiment;
pub mod instance;
pub mod knapsack;
pub mod lp;
pub mod oracle;
pub mod profiles;
pub mod rational;
pub mod scheduling;

pub use rational::{q, Rational};
