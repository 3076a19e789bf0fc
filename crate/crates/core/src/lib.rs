//! Real-time gait biofeedback engine: AGRF estimation from body-worn IMU
//! kinematics, gait event detection, faded haptic feedback scheduling, the
//! session protocol, and the analysis statistics.

pub mod estimator;
pub mod feedback;
pub mod frame;
pub mod gaitevents;
pub mod haptics;
pub mod metrics;
pub mod session;
pub mod synthgait;
