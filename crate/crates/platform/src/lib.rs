//! The crashgym platform: a persistent job scheduler with queue-fed
//! build and reproduce workers, a mock git/kernel substrate for
//! desk-scale runs, benchmark curation, and resolution campaigns.
//!
//! The scheduler core is a synchronous state machine (`scheduler`);
//! `runtime` drives it either with real threads (`LocalRuntime`) or a
//! discrete-event virtual clock (`SimRuntime`). Workers never share
//! state with the scheduler — everything flows through queue messages
//! and result envelopes.

pub mod artifacts;
pub mod builder;
pub mod clock;
pub mod curator;
pub mod gitstore;
pub mod queue;
pub mod reproducer;
pub mod resolver;
pub mod runtime;
pub mod scheduler;
pub mod store;
