//! Attack harness: scenario construction for the three attack shapes
//! (targeted website + targeted instruction, targeted website + universal
//! instruction, universal website + targeted instruction), trigger
//! injection into page HTML, attack-success metrics, hyperparameter
//! sweeps, failure analysis, and report files.

mod contexts;
mod datagen;
mod error;
mod inject;
mod metrics;
mod report;
mod runs;
mod scenario;
mod sweep;

pub use contexts::{make_contexts, GoalSet, INJECTION_MARKER};
pub use datagen::{
    catalog_page, goal_pool, seeded_credentials, synthesize_corpus, synthesize_goals, GoalData,
    PageCatalog, SiteSpec,
};
pub use error::Error;
pub use inject::{inject_trigger, resolve_locator, InjectMode};
pub use metrics::{
    analyze_failures, compute_metrics, detect_exfiltration, FailureClass, FailureCounts, Leak,
    ResponseOutcome,
};
pub use report::{
    read_eval_report, read_sweep_csv, write_eval_report, write_sweep_csv, EvalReport, Timing,
    TriggerInfo,
};
pub use runs::{run_twti, run_twui, run_uwti, twui_eval, uwti_eval, TwtiRun};
pub use scenario::{read_goals, read_labels, LoginPage, Scenario, SiteRef, TwtiScenario, TwuiScenario, UwtiScenario};
pub use sweep::{sweep, SweepParam, SweepRow};

pub type Result<T> = std::result::Result<T, Error>;
