//! Model-driven parallel loop execution.
//!
//! * [`loop_ir`] parses loop descriptions and extracts static features.
//! * [`learning`] trains and evaluates the binary and multinomial logistic
//!   regression models, and reads/writes the weights bundle.
//! * [`executor`] runs parallel for-each loops whose policy, chunk size and
//!   prefetch distance are decided by those models at dispatch time.
//! * [`bench`] holds the benchmark kernels, the training-data sweep and the
//!   evaluation harness.

pub mod bench;
pub mod executor;
pub mod features;
pub mod learning;
pub mod loop_ir;

pub use features::FeatureVector;
