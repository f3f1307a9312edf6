use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PointPattern;
use crate::error::{Error, Result};

/// An annotated dataset: named cell types plus per-patch point patterns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub cell_types: Vec<String>,
    pub patches: Vec<PointPattern>,
}

impl Dataset {
    pub fn num_cell_types(&self) -> usize {
        self.cell_types.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_types.is_empty() {
            return Err(Error::arg("dataset declares no cell types"));
        }
        self.patches
            .iter()
            .try_for_each(|p| p.validate(self.cell_types.len()))
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let dataset: Dataset = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        dataset.validate()?;
        Ok(dataset)
    }
}

/// Reads and validates a dataset JSON file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_json_str(&text, path)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(dataset)
        .map_err(|e| Error::Format(format!("serializing dataset: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        Dataset::from_json_str(text, Path::new("inline.json"))
    }

    #[test]
    fn reads_single_patch() {
        let ds = parse(
            r#"{"cell_types": ["tumor", "lymph", "stromal"],
                "patches": [{"id": "p1", "width": 464, "height": 464,
                  "cells": [{"x": 12.0, "y": 30.5, "type": 0}, {"x": 100, "y": 7, "type": 1}]}]}"#,
        )
        .unwrap();
        assert_eq!(ds.patches.len(), 1);
        assert_eq!(ds.patches[0].cells.len(), 2);
        assert_eq!(ds.num_cell_types(), 3);
    }

    #[test]
    fn cell_on_right_edge_is_rejected() {
        let err = parse(
            r#"{"cell_types": ["a"], "patches": [{"id": "edge", "width": 10, "height": 10,
                "cells": [{"x": 10.0, "y": 1.0, "type": 0}]}]}"#,
        )
        .unwrap_err();
        match err {
            Error::Validation { patch_id, .. } => assert_eq!(patch_id, "edge"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_patch_list_is_fine() {
        let ds = parse(r#"{"cell_types": ["a", "b"], "patches": []}"#).unwrap();
        assert!(ds.patches.is_empty());
    }

    #[test]
    fn malformed_json_names_line() {
        let err = parse("{\n\"cell_types\": [\"a\"],\n\"patches\": [ oops ]\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        let ds = parse(
            r#"{"cell_types": ["a"], "patches": [{"id": "p", "width": 8, "height": 8,
                "cells": [{"x": 0.1, "y": 7.9, "type": 0}]}]}"#,
        )
        .unwrap();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }
}
