//! Experiment runner for the quartic-variation laboratory: configuration,
//! orchestration and CSV/JSON emission on top of `quartic-core`.

pub mod config;
pub mod csv;
pub mod runner;
pub mod verbs;

use std::path::Path;

use quartic_core::CovKernel;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Numerical(#[from] quartic_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot write output: {0}")]
    Output(String),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io { path: path.display().to_string(), source }
    }

    /// Process exit status: 2 for usage problems, 3 for numerical failures,
    /// 4 for I/O. (1 is reserved for "ran fine, a check failed".)
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } => 2,
            LabError::Numerical(_) => 3,
            LabError::Io { .. } | LabError::Output(_) => 4,
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn diagnostic(&self) -> String {
        let kind = match self {
            LabError::Config { .. } => "config",
            LabError::Numerical(_) => "numerical",
            LabError::Io { .. } => "io",
            LabError::Output(_) => "output",
        };
        let mut v = serde_json::json!({ "error": kind, "message": self.to_string() });
        if let LabError::Config { field, .. } = self {
            v["field"] = serde_json::Value::String(field.clone());
        }
        v.to_string()
    }
}

/// Kernel names accepted on the command line.
pub const KERNEL_NAMES: [&str; 5] = ["heat", "fbm_quarter", "lei_nualart_xi", "brownian_motion", "fbm_decomposition"];

pub fn parse_kernel(name: &str) -> Result<CovKernel, LabError> {
    Ok(match name {
        "heat" => CovKernel::Heat,
        "fbm_quarter" => CovKernel::FbmQuarter,
        "lei_nualart_xi" => CovKernel::LeiNualartXi,
        "brownian_motion" => CovKernel::BrownianMotion,
        "fbm_decomposition" => CovKernel::fbm_decomposition(),
        other => {
            return Err(LabError::Config {
                field: "kernel".into(),
                message: format!("unknown kernel `{other}`, expected one of {}", KERNEL_NAMES.join(", ")),
            })
        }
    })
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, LabError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(LabError::Config { field: "workers".into(), message: "must be at least 1".into() }),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| LabError::Output(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
