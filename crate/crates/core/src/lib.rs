//! Simulator and analysis toolkit for remote state determination (RSD):
//! one party's unknown pure state is transferred to a distant party as a
//! set of remotely inverted weak values, using any non-product bipartite
//! resource plus classical communication.
//!
//! The crate layers cleanly:
//!
//! - [`qmat`]: dense complex matrices, tensor products, partial traces,
//!   Hermitian eigendecompositions.
//! - [`states`]: validated density matrices and the named states of the
//!   protocol (Bell-diagonal, Werner, fibre-decohered Werner).
//! - [`weakcore`]: the physics of one round -- weak coupling, both
//!   post-selection schemes, weak values and weak-partial-values.
//! - [`protocol`]: inversion formulas, reconstruction, necessity and
//!   sufficiency gates.
//! - [`stats`]: Born-rule Monte Carlo with reproducible sub-streams,
//!   classical-bit accounting, error propagation.
//! - [`noise`]: purity loss in a decoherent fibre and the copy overhead.
//! - [`wire`]: Alice, Bob and a physics-engine source as three OS
//!   processes exchanging classical bits over a framed byte stream.
//! - [`config`]: self-contained experiment documents and result files.
//!
//! The `rsd` binary in this workspace drives all of it from the command
//! line; the guide under `book/` walks through the concepts with runnable
//! snippets.

pub mod config;
pub mod noise;
pub mod protocol;
pub mod qmat;
pub mod states;
pub mod stats;
pub mod weakcore;
pub mod wire;

pub use qmat::{CMatrix, SubsystemDims, C64};
pub use states::{PureState, QState};
pub use weakcore::{WeakValueKind, WeakValueRecord};
