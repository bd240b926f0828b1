use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested computation path cannot handle this input (e.g. quadrature
    /// over a sampling-only error model).
    #[error("unsupported path: {0}")]
    UnsupportedPath(String),

    #[error("objective failed at cell (A={a}, B={b}): {source}")]
    Objective {
        a: f64,
        b: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("missing cells in {table}: {}", format_cells(.cells))]
    MissingCells { table: String, cells: Vec<(u32, u32)> },

    #[error("duplicate cell (t={t}, d={d}) in {table}")]
    DuplicateCell { table: String, t: u32, d: u32 },

    #[error("{table}: {message}")]
    Schema { table: String, message: String },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_cells(cells: &[(u32, u32)]) -> String {
    const SHOWN: usize = 8;
    let mut out: Vec<String> = cells
        .iter()
        .take(SHOWN)
        .map(|(t, d)| format!("({t},{d})"))
        .collect();
    if cells.len() > SHOWN {
        out.push(format!("... {} more", cells.len() - SHOWN));
    }
    out.join(", ")
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}
