//! TOML catalog files.
//!
//! ```toml
//! [[template]]
//! id = 2
//! description = "RX, RZ layer followed by a CNOT ladder"
//! blocks = [
//!   { kind = "single_qubit_layer", gate = "RX", pattern = "all" },
//!   { kind = "entangling_pattern", gate = "CNOT", pattern = "chain" },
//! ]
//! ```

use std::path::{Path, PathBuf};

use pqcexpr_core::catalog::{validate_catalog, CatalogError, CircuitTemplate};
use serde::Deserialize;

/// Repository-relative location of the shipped catalog.
pub const DEFAULT_CATALOG_PATH: &str = "crates/pqcexpr/catalog/default.toml";

/// The shipped catalog, compiled in so the tool works from any directory.
pub const DEFAULT_CATALOG: &str = include_str!("../catalog/default.toml");

#[derive(Debug, thiserror::Error)]
pub enum CatalogFileError {
    #[error("cannot read catalog {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse { origin: String, line: usize, column: usize, message: String },
    #[error("{origin}: {source}")]
    Invalid { origin: String, source: CatalogError },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDoc {
    #[serde(default)]
    template: Vec<CircuitTemplate>,
}

/// Validated, id-sorted template list.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    templates: Vec<CircuitTemplate>,
}

impl Catalog {
    pub fn new(mut templates: Vec<CircuitTemplate>) -> Result<Self, CatalogError> {
        validate_catalog(&templates)?;
        templates.sort_by_key(|t| t.id);
        Ok(Catalog { templates })
    }

    pub fn templates(&self) -> &[CircuitTemplate] {
        &self.templates
    }

    pub fn get(&self, id: u32) -> Option<&CircuitTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

/// Parses catalog text; `origin` names the source in diagnostics.
pub fn parse_catalog(text: &str, origin: &str) -> Result<Catalog, CatalogFileError> {
    let doc: CatalogDoc = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        CatalogFileError::Parse { origin: origin.into(), line, column, message: e.message().trim().into() }
    })?;
    Catalog::new(doc.template).map_err(|source| CatalogFileError::Invalid { origin: origin.into(), source })
}

pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| CatalogFileError::Io { path: path.into(), source })?;
    parse_catalog(&text, &path.display().to_string())
}

pub fn default_catalog() -> Catalog {
    parse_catalog(DEFAULT_CATALOG, DEFAULT_CATALOG_PATH).expect("shipped catalog is valid")
}
