use super::GridCase;
use crate::error::{Error, Result};

/// Parses and validates a case in the native JSON format.
pub fn parse_case_json(text: &str) -> Result<GridCase> {
    let case: GridCase = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    case.validate()?;
    Ok(case)
}

pub fn to_case_json(case: &GridCase) -> String {
    serde_json::to_string_pretty(case).expect("GridCase serializes")
}
