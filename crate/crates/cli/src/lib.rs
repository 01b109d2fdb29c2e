//! Command-line surface: a JSON experiment config in, deterministic
//! CSV/JSON/binary files out.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command};
pub use config::ExperimentConfig;
pub use error::{CliError, Issue};

use std::path::PathBuf;

/// Flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_gates: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Parse `text` (an empty string means all defaults), apply overrides and
/// validate.
pub fn load_config(text: Option<&str>, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut doc: serde_json::Value = match text {
        Some(t) => serde_json::from_str(t).map_err(|e| CliError::Config(vec![Issue::new("$", e.to_string())]))?,
        None => serde_json::json!({}),
    };
    if let serde_json::Value::Object(m) = &mut doc {
        if let Some(s) = o.seed {
            m.insert("seed".into(), s.into());
        }
        if let Some(n) = o.n_gates {
            m.insert("n_gates".into(), n.into());
        }
        if let Some(d) = &o.output_dir {
            m.insert("output_dir".into(), d.to_string_lossy().into_owned().into());
        }
    }
    Ok(ExperimentConfig::from_value(doc)?)
}

/// Worker cap from `UNIC_SIM_THREADS`; `None` when unset.
pub fn thread_cap(var: Option<&str>) -> Result<Option<usize>, CliError> {
    match var.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(vec![Issue::new(
                "UNIC_SIM_THREADS",
                format!("must be a positive integer, got {s:?}"),
            )])),
        },
    }
}
