//! Message-passing runtime: datatypes, reduction operators, the cost model,
//! the SPMD executor and the dissemination barrier.

mod barrier;
mod cost;
mod datatype;
mod spmd;

pub use barrier::{dissemination_barrier, dissemination_rounds};
pub use cost::{derive_seed, ns_to_us, us_to_ns, CostModel};
pub use datatype::{Datatype, ReduceOp, INT_EXTENT};
pub use spmd::{run_spmd, Comm, Message, Mode, Recv, SpmdOutput};
