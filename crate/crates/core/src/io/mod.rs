//! Configuration files, tabular input and run outputs.

mod config;
mod output;
mod tables;

pub use config::{
    load_config, resolve, BlockConfig, CalibrationConfig, DataConfig, FixedEntry, FixedRegression,
    FixedSd, FixedUnit, LoadedConfig, PriorConfig,
};
pub use output::{
    calibrate, diagnose, draws_file, moments_file, preflight, read_draws, read_fit, read_manifest,
    read_truth, standard_ppc, write_outputs, write_simulation, CalibrationOutcome, DiagnoseOutcome,
    Manifest, DIAGNOSE_DIR, FIT, IDS, MANIFEST, PPC, SUMMARY, TIMING,
};
pub use tables::{parse_features, parse_responses, read_csv, read_roster, write_csv, ParsedResponses};
