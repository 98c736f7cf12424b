//! Higher-order cumulant tensors of multivariate data streams, maintained over
//! a sliding window.
//!
//! Moment and cumulant tensors are super-symmetric, so only one hyper-pyramidal
//! part is stored, in blocks ([`symten`]). Raw moments of the window are
//! updated from the incoming and outgoing batches ([`moments`]), converted to
//! cumulants with the set-partition recursion ([`cumulants`]) and summarized
//! by norm-based gauges ([`gauge`]). [`stream`] ties these together and
//! [`copula`] generates test streams that switch from Gaussian to a Student-t
//! copula.
//!
//! With the default `parallel` feature the per-block work runs on rayon.

pub mod copula;
pub mod cumulants;
pub mod data;
pub mod gauge;
pub mod moments;
pub mod par;
pub mod stream;
pub mod symten;

pub use cumulants::{cumulant_series, moms2cums, partitions, CumulantSeries, SetPartition};
pub use data::DataBatch;
pub use gauge::{nu, WindowReport};
pub use moments::{combine, moment_series, moment_tensor, MomentSeries};
pub use stream::{run, StreamConfig, WindowState};
pub use symten::{block_multiplicity, MultiIndex, SymTensor};
