mod cells;
mod mitigate;
mod monitor;
mod scenario;

pub use cells::{
    ingest_opencellid, ingest_opencellid_reader, write_positions, BBox, Cell, CellFilter, Ingest, TopologyConfig,
    Window, EARTH_RADIUS_M, REQUIRED_COLUMNS,
};
pub use mitigate::{cmc_mitigate, grid_golden_max, Mitigation, Surrogate, GRID_POINTS};
pub use monitor::{cdc_classify, pmon_step, Actor, CdcOutcome, Classifier, CmsState, PmonReport, RcpEntry};
pub use scenario::{
    run_control_loop, ActionSpec, ControlRun, Event, EventKind, IcpSpec, KpiSpec, Scenario, ScenarioConfig,
    ScriptedAction, TraceRow, XAppSpec,
};
