//! Executable model of IEEE 802.15.6 MAC-layer security services, a hardened
//! profile, a deterministic MBAN simulator with an attack library, and a
//! security-assessment engine.

pub mod crypto;
pub mod frame;
pub mod fsm;
pub mod hub;
pub mod assoc;
pub mod channel;
pub mod keys;
pub mod suite;
pub mod netsim;
pub mod adversary;
pub mod assessment;
pub mod cli;
