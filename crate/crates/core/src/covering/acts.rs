//! Interop with the ACTS combinatorial testing tool.
//!
//! Import accepts the comma-separated export layout: optional `#` comment
//! lines, a header line naming the parameters, then one configuration per
//! line. Values are `true`/`false` (any case) or `1`/`0`; the don't-care
//! marker `*` reads as false.

use std::fmt::Write as _;
use std::path::Path;

use super::{CoveringArray, Strength};
use crate::error::{Error, Result};
use crate::model::{Guide, RuleId};

pub const IMPORTED_TAG: &str = "imported-acts";

/// ACTS system definition declaring one boolean parameter per rule.
pub fn export_acts_input(guide: &Guide) -> String {
    let mut out = String::new();
    writeln!(out, "[System]").unwrap();
    writeln!(out, "Name: {}", guide.id()).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[Parameter]").unwrap();
    for rule in guide.rules() {
        writeln!(out, "{rule} (boolean) : true, false").unwrap();
    }
    out
}

pub fn import_acts_export(path: &Path, guide: &Guide, strength: Strength) -> Result<CoveringArray> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_acts_export(&text, guide, strength)
}

pub fn parse_acts_export(text: &str, guide: &Guide, strength: Strength) -> Result<CoveringArray> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let Some((_, header)) = lines.next() else {
        return Err(Error::parse("ACTS export", "no header line"));
    };

    // positions[k] = guide column of the k-th header field
    let mut positions = Vec::new();
    let mut seen = vec![false; guide.len()];
    for name in header.split(',').map(str::trim) {
        let rule = RuleId::new(name).map_err(|_| Error::UnknownParameter(name.to_string()))?;
        let pos = guide
            .position(&rule)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if std::mem::replace(&mut seen[pos], true) {
            return Err(Error::DuplicateRule(rule));
        }
        positions.push(pos);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingParameter(guide.rules()[missing].clone()));
    }

    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != positions.len() {
            return Err(Error::ArityMismatch {
                line: line_no,
                expected: positions.len(),
                actual: fields.len(),
            });
        }
        let mut row = vec![false; guide.len()];
        for (field, &pos) in fields.iter().zip(&positions) {
            row[pos] = parse_value(field).ok_or_else(|| Error::BadValue {
                line: line_no,
                token: field.to_string(),
            })?;
        }
        rows.push(row);
    }

    let before = rows.len();
    let array = CoveringArray::new_dedup(
        guide.id(),
        strength,
        IMPORTED_TAG,
        guide.rules().to_vec(),
        rows,
    )?;
    if array.num_rows() < before {
        tracing::warn!(
            dropped = before - array.num_rows(),
            "duplicate configurations removed from ACTS export"
        );
    }
    Ok(array)
}

fn parse_value(token: &str) -> Option<bool> {
    match token {
        "1" | "*" => Some(token == "1"),
        "0" => Some(false),
        _ if token.eq_ignore_ascii_case("true") => Some(true),
        _ if token.eq_ignore_ascii_case("false") => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2() -> Strength {
        Strength::new(2).unwrap()
    }

    #[test]
    fn export_declares_boolean_parameters() {
        let guide = Guide::from_ids("cis", ["R1_1_1"]).unwrap();
        let text = export_acts_input(&guide);
        assert!(text.starts_with("[System]\n"));
        assert!(text.lines().any(|l| l == "R1_1_1 (boolean) : true, false"));
    }

    #[test]
    fn export_of_empty_guide_is_header_only() {
        let guide = Guide::from_ids("empty", Vec::<String>::new()).unwrap();
        let text = export_acts_input(&guide);
        assert_eq!(text.lines().filter(|l| l.contains("(boolean)")).count(), 0);
        assert!(text.contains("[System]"));
    }

    #[test]
    fn import_maps_header_order_onto_guide_order() {
        let guide = Guide::from_ids("g", ["A", "B", "C"]).unwrap();
        let text = "# ACTS Test Suite Generation\n# Degree of interaction coverage: 2\nC,A,B\ntrue,FALSE,1\n0,True,*\n";
        let array = parse_acts_export(text, &guide, t2()).unwrap();
        assert_eq!(array.algorithm_tag(), IMPORTED_TAG);
        assert_eq!(array.rows(), &[vec![false, true, true], vec![true, false, false]]);
    }

    #[test]
    fn import_rejects_unknown_parameter() {
        let guide = Guide::from_ids("g", ["R1"]).unwrap();
        let err = parse_acts_export("R1,R_unknown\ntrue,false\n", &guide, t2()).unwrap_err();
        assert!(matches!(err, Error::UnknownParameter(name) if name == "R_unknown"));
    }

    #[test]
    fn import_rejects_missing_parameter_bad_arity_and_bad_values() {
        let guide = Guide::from_ids("g", ["R1", "R2"]).unwrap();
        assert!(matches!(
            parse_acts_export("R1\ntrue\n", &guide, t2()),
            Err(Error::MissingParameter(_))
        ));
        assert!(matches!(
            parse_acts_export("R1,R2\ntrue\n", &guide, t2()),
            Err(Error::ArityMismatch { line: 2, expected: 2, actual: 1 })
        ));
        assert!(matches!(
            parse_acts_export("R1,R2\ntrue,maybe\n", &guide, t2()),
            Err(Error::BadValue { line: 2, .. })
        ));
    }

    #[test]
    fn empty_configuration_section_gives_uncovered_empty_array() {
        let guide = Guide::from_ids("g", ["R1", "R2", "R3"]).unwrap();
        let array = parse_acts_export("R1,R2,R3\n", &guide, t2()).unwrap();
        assert_eq!(array.num_rows(), 0);
        let report = super::super::verify_coverage(&array, super::super::VerifyMode::Exhaustive);
        assert!(!report.covered);
    }
}
