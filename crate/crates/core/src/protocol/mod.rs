//! External data formats: detection stream records, the presence wire
//! protocol, an actuated signal-controller mock and scene configuration.

pub mod packet;
pub mod presence;
pub mod scene;
pub mod tsc;

pub use packet::{encode_detections, encode_frame_packet, parse_detections, parse_frame_packet, PacketError};
pub use presence::{encode_wire, parse_wire, PresenceMessage, ProtocolError, WireMessage};
pub use scene::{SceneConfig, SceneError};
pub use tsc::{Signal, TscApproach, TscController, TscEvent, TscPlan, TscTiming};

/// Version accepted in the `format_version` field of every structured file.
pub const FORMAT_VERSION: u64 = 1;
