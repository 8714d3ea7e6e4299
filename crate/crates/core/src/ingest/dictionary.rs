//! Code/label tables from the FRAP data dictionary.
//!
//! Text format: one `[SECTION]` header per category (`CAUSE`, `C_METHOD`,
//! `AGENCY`, `OBJECTIVE`) followed by `code,label` lines. Labels may contain
//! commas; only the first comma separates. Blank lines and lines starting
//! with `#` are ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DictionaryError {
    #[error("duplicate code {code} in category {category}")]
    DuplicateCode { category: String, code: String },
    #[error("category {0} is missing or empty")]
    EmptyCategory(String),
    #[error("unknown category [{section}] at line {line}")]
    UnknownCategory { section: String, line: usize },
    #[error("malformed dictionary line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unknown {category} code {code}")]
    UnknownCode { category: String, code: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Cause,
    CMethod,
    Agency,
    Objective,
}

impl Category {
    const ALL: [Category; 4] = [Category::Cause, Category::CMethod, Category::Agency, Category::Objective];

    fn name(self) -> &'static str {
        match self {
            Category::Cause => "CAUSE",
            Category::CMethod => "C_METHOD",
            Category::Agency => "AGENCY",
            Category::Objective => "OBJECTIVE",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataDictionary {
    pub cause_labels: BTreeMap<i64, String>,
    pub c_method_labels: BTreeMap<i64, String>,
    pub agency_labels: BTreeMap<String, String>,
    pub objective_labels: BTreeMap<i64, String>,
}

fn unknown(category: &str, code: impl ToString) -> DictionaryError {
    DictionaryError::UnknownCode { category: category.into(), code: code.to_string() }
}

impl DataDictionary {
    pub fn cause_label(&self, code: i64) -> Result<&str, DictionaryError> {
        self.cause_labels.get(&code).map(String::as_str).ok_or_else(|| unknown("CAUSE", code))
    }

    pub fn c_method_label(&self, code: i64) -> Result<&str, DictionaryError> {
        self.c_method_labels.get(&code).map(String::as_str).ok_or_else(|| unknown("C_METHOD", code))
    }

    pub fn objective_label(&self, code: i64) -> Result<&str, DictionaryError> {
        self.objective_labels.get(&code).map(String::as_str).ok_or_else(|| unknown("OBJECTIVE", code))
    }

    pub fn agency_label(&self, code: &str) -> Result<&str, DictionaryError> {
        self.agency_labels.get(code).map(String::as_str).ok_or_else(|| unknown("AGENCY", code))
    }

    /// Label for display: unknown codes decode to `CODE_<n>`, absent codes to "".
    pub fn decode_cause(&self, code: Option<i64>) -> String {
        decode(code, |c| self.cause_label(c).ok())
    }

    pub fn decode_c_method(&self, code: Option<i64>) -> String {
        decode(code, |c| self.c_method_label(c).ok())
    }

    pub fn decode_objective(&self, code: Option<i64>) -> String {
        decode(code, |c| self.objective_label(c).ok())
    }

    pub fn decode_agency(&self, code: Option<&str>) -> String {
        match code {
            None => String::new(),
            Some(c) => self.agency_label(c).map_or_else(|_| format!("CODE_{c}"), str::to_string),
        }
    }
}

fn decode<'a>(code: Option<i64>, look: impl Fn(i64) -> Option<&'a str>) -> String {
    match code {
        None => String::new(),
        Some(c) => look(c).map_or_else(|| format!("CODE_{c}"), str::to_string),
    }
}

fn insert<K: Ord + ToString>(
    map: &mut BTreeMap<K, String>,
    category: Category,
    code: K,
    label: String,
) -> Result<(), DictionaryError> {
    let shown = code.to_string();
    if map.insert(code, label).is_some() {
        return Err(DictionaryError::DuplicateCode { category: category.name().into(), code: shown });
    }
    Ok(())
}

pub fn parse_data_dictionary(bytes: &[u8]) -> Result<DataDictionary, DictionaryError> {
    let text = String::from_utf8_lossy(bytes);
    let mut dict = DataDictionary::default();
    let mut current: Option<Category> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(section) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let key = super::perimeter::header_key(section);
            current = Some(
                Category::ALL
                    .into_iter()
                    .find(|c| super::perimeter::header_key(c.name()) == key)
                    .ok_or_else(|| DictionaryError::UnknownCategory { section: section.to_string(), line: line_no })?,
            );
            continue;
        }
        let category = current.ok_or_else(|| DictionaryError::Malformed {
            line: line_no,
            message: "entry before any [CATEGORY] header".into(),
        })?;
        let (code, label) = line.split_once(',').ok_or_else(|| DictionaryError::Malformed {
            line: line_no,
            message: "expected code,label".into(),
        })?;
        let (code, label) = (code.trim(), label.trim().trim_matches('"').to_string());
        let int_code = || {
            code.parse::<i64>().map_err(|_| DictionaryError::Malformed {
                line: line_no,
                message: format!("{} code must be an integer: {code:?}", category.name()),
            })
        };
        match category {
            Category::Cause => insert(&mut dict.cause_labels, category, int_code()?, label)?,
            Category::CMethod => insert(&mut dict.c_method_labels, category, int_code()?, label)?,
            Category::Objective => insert(&mut dict.objective_labels, category, int_code()?, label)?,
            Category::Agency => insert(&mut dict.agency_labels, category, code.to_string(), label)?,
        }
    }

    for (category, empty) in [
        (Category::Cause, dict.cause_labels.is_empty()),
        (Category::CMethod, dict.c_method_labels.is_empty()),
        (Category::Agency, dict.agency_labels.is_empty()),
        (Category::Objective, dict.objective_labels.is_empty()),
    ] {
        if empty {
            return Err(DictionaryError::EmptyCategory(category.name().into()));
        }
    }
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[CAUSE]\n14,Unknown\n1,Lightning\n[C_METHOD]\n1,GPS Ground\n[AGENCY]\nCDF,CAL FIRE, state\n[OBJECTIVE]\n1,Suppression (Wildfire)\n";

    #[test]
    fn single_entry_lookup() {
        let d = parse_data_dictionary(MINIMAL.as_bytes()).unwrap();
        assert_eq!(d.cause_label(14).unwrap(), "Unknown");
        assert_eq!(d.agency_label("CDF").unwrap(), "CAL FIRE, state");
    }

    #[test]
    fn duplicate_code_rejected() {
        let text = MINIMAL.replace("1,Lightning", "14,Lightning");
        assert_eq!(
            parse_data_dictionary(text.as_bytes()),
            Err(DictionaryError::DuplicateCode { category: "CAUSE".into(), code: "14".into() })
        );
    }

    #[test]
    fn empty_category_rejected() {
        let text = "[CAUSE]\n1,A\n[C_METHOD]\n1,B\n[AGENCY]\nX,Y\n[OBJECTIVE]\n";
        assert_eq!(parse_data_dictionary(text.as_bytes()), Err(DictionaryError::EmptyCategory("OBJECTIVE".into())));
    }

    #[test]
    fn unknown_codes_fail_explicitly_and_decode_to_sentinel() {
        let d = parse_data_dictionary(MINIMAL.as_bytes()).unwrap();
        assert!(matches!(d.cause_label(99), Err(DictionaryError::UnknownCode { .. })));
        assert_eq!(d.decode_cause(Some(99)), "CODE_99");
        assert_eq!(d.decode_agency(Some("ZZZ")), "CODE_ZZZ");
        assert_eq!(d.decode_cause(None), "");
    }
}
