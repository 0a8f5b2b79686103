//! Asynchronous single-object tracking pipeline and its evaluation harness.
//!
//! A tracker (template NCC, trace replay or an external process) feeds an
//! extended Kalman filter that also consumes camera ego-motion estimated by
//! grid Lucas–Kanade flow and RANSAC. The protocols module replays sequences
//! under LTP, DSP or the embedded-oriented logical-time schedule; metrics
//! scores the resulting traces.

pub mod augment;
pub mod confidence;
pub mod config;
pub mod dataio;
pub mod egomotion;
pub mod ekf;
pub mod geom;
pub mod metrics;
pub mod protocols;
pub mod trackers;

pub use augment::{
    apply_occlusion, augment_dataset, augment_sequence, plan_occlusion, rasterize_shape, AugmentConfig,
    AugmentError, OcclusionEventSpec, OcclusionPlan, ShapeKind,
};
pub use confidence::{
    coordinate_score, gate_ego, gate_template, gate_tracker, pmf4_confidence, ConfigError, EwmaState,
    GatingConfig,
};
pub use config::RunConfig;
pub use dataio::{generate_synthetic, load_sequence, DataError, Sequence, SynthSpec};
pub use egomotion::{estimate_egomotion, EgoConfig, EgoError, EgoMeasurement};
pub use ekf::{EkfConfig, EkfError, EkfState, TrackerMeasurement};
pub use geom::{iou, BBox, Frame, GeomError, Homography, Pmf, Pmf4};
pub use metrics::{aggregate, evaluate_sequence, MetricError, MetricOptions, MetricReport};
pub use protocols::{
    run_dsp, run_eop, run_ltp, EgoSource, ProtocolError, ResultTrace, ScheduleConfig, Source,
};
pub use trackers::{
    EchoTracker, ExternTracker, NccConfig, NccTracker, TraceTracker, Tracker, TrackerError, TrackerOutput,
};

/// Any error surfaced by the library, with a stable machine-readable code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ConfigLoad(#[from] config::LoadError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Ego(#[from] EgoError),
    #[error(transparent)]
    Ekf(#[from] EkfError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::ConfigLoad(_) => "bad_config",
            Error::Data(_) => "data_error",
            Error::Geom(_) => "geometry_error",
            Error::Ego(_) => "egomotion_error",
            Error::Ekf(_) => "filter_error",
            Error::Tracker(_) => "tracker_error",
            Error::Protocol(ProtocolError::InitMissing) => "init_missing",
            Error::Protocol(ProtocolError::Tracker { .. }) => "tracker_error",
            Error::Protocol(_) => "protocol_error",
            Error::Metric(_) => "metric_error",
            Error::Augment(_) => "augment_error",
        }
    }
}
