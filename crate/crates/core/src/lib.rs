//! Proximity detection and contact-graph analytics for workplace contact tracing.
//!
//! * [`identity`]: hashed associate identities and rotating broadcast tokens
//! * [`proximity`]: on-device RSSI windowing, Near/Far classification, alerts
//! * [`graph`]: temporal contact multi-graph, tracing, risk and clusters
//! * [`zone`]: co-location contacts for zones where devices are not allowed
//! * [`sim`]: deterministic workspace simulator and classifier calibration
//! * [`wire`]: the line-record envelope shared by devices and the server

pub mod event;
pub mod graph;
pub mod identity;
pub mod proximity;
pub mod sim;
pub mod wire;
pub mod zone;

pub use event::{Ambience, Closeness, ProximityEvent};
pub use identity::AssociateHash;
