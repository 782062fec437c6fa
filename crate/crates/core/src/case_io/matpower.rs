//! Reader and writer for MATPOWER-style `.m` case files.
//!
//! Only the numeric tables `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and
//! `mpc.gencost` are read. Other fields (cell arrays such as `mpc.bus_name`,
//! version strings, user functions) are skipped.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CaseError;

/// Column counts the converter needs; wider rows are kept verbatim.
pub const BUS_MIN_COLS: usize = 13;
pub const GEN_MIN_COLS: usize = 10;
pub const BRANCH_MIN_COLS: usize = 11;

/// Numeric tables exactly as they appear in a case file, in MATPOWER units
/// (MW, MVAr, degrees, per-unit impedances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCaseFile {
    /// Name from the `function mpc = <name>` header, empty if absent.
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub bus_table: Vec<Vec<f64>>,
    pub gen_table: Vec<Vec<f64>>,
    pub branch_table: Vec<Vec<f64>>,
    pub gencost_table: Vec<Vec<f64>>,
    /// Non-fatal observations made while parsing (e.g. a missing gencost table).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RawCaseFile {
    /// Checks the structural invariants: positive base, generators on existing
    /// buses, branches between two distinct existing buses.
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::InvalidBaseMva(self.base_mva));
        }
        let ids: std::collections::HashSet<i64> =
            self.bus_table.iter().map(|r| r[0] as i64).collect();
        if ids.len() != self.bus_table.len() {
            return Err(CaseError::DuplicateBusId);
        }
        for (k, row) in self.gen_table.iter().enumerate() {
            if !ids.contains(&(row[0] as i64)) {
                return Err(CaseError::UnknownBus {
                    table: "gen",
                    row: k + 1,
                    bus: row[0] as i64,
                });
            }
        }
        for (k, row) in self.branch_table.iter().enumerate() {
            for &end in &row[..2] {
                if !ids.contains(&(end as i64)) {
                    return Err(CaseError::UnknownBus {
                        table: "branch",
                        row: k + 1,
                        bus: end as i64,
                    });
                }
            }
            if row[0] as i64 == row[1] as i64 {
                return Err(CaseError::SelfLoop {
                    row: k + 1,
                    bus: row[0] as i64,
                });
            }
        }
        Ok(())
    }
}

/// Parses MATPOWER case text.
pub fn parse_matpower(text: &str) -> Result<RawCaseFile, CaseError> {
    let cleaned = strip_comments(text);

    let base_mva = parse_scalar(&cleaned, "baseMVA")?.ok_or(CaseError::MissingSection("baseMVA"))?;
    let bus_table = parse_table(&cleaned, "bus", BUS_MIN_COLS)?.ok_or(CaseError::MissingSection("bus"))?;
    let gen_table = parse_table(&cleaned, "gen", GEN_MIN_COLS)?.ok_or(CaseError::MissingSection("gen"))?;
    let branch_table =
        parse_table(&cleaned, "branch", BRANCH_MIN_COLS)?.ok_or(CaseError::MissingSection("branch"))?;

    let mut warnings = Vec::new();
    let gencost_table = match parse_table(&cleaned, "gencost", 4)? {
        Some(t) => t,
        None => {
            warnings.push("no gencost table; all generator costs are zero".to_string());
            Vec::new()
        }
    };

    let raw = RawCaseFile {
        name: function_name(&cleaned).unwrap_or_default(),
        base_mva,
        bus_table,
        gen_table,
        branch_table,
        gencost_table,
        warnings,
    };
    raw.validate()?;
    Ok(raw)
}

/// Serializes a raw case back to MATPOWER text. Every stored column is written,
/// so `parse_matpower(&write_matpower(&raw, name))` reproduces `raw`.
pub fn write_matpower(raw: &RawCaseFile, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", fmt_num(raw.base_mva));
    for (label, table) in [
        ("bus", &raw.bus_table),
        ("gen", &raw.gen_table),
        ("branch", &raw.branch_table),
        ("gencost", &raw.gencost_table),
    ] {
        if label == "gencost" && table.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\nmpc.{label} = [");
        for row in table.iter() {
            let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
            let _ = writeln!(out, "\t{};", cells.join("\t"));
        }
        let _ = writeln!(out, "];");
    }
    out
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "Inf".into() } else { "-Inf".into() }
    } else {
        // `{:?}` keeps the shortest representation that round-trips exactly.
        format!("{v:?}")
    }
}

fn function_name(text: &str) -> Option<String> {
    let line = text.lines().find(|l| l.trim_start().starts_with("function"))?;
    let (_, rhs) = line.split_once('=')?;
    let name = rhs.trim().trim_end_matches(';').trim();
    (!name.is_empty()).then(|| name.to_string())
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|line| match line.find('%') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Finds `mpc.<name> = ` and returns the text after the `=`.
fn find_assignment<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let needle = format!("mpc.{name}");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&needle) {
        let start = from + pos + needle.len();
        let rest = &text[start..];
        let trimmed = rest.trim_start();
        if let Some(after_eq) = trimmed.strip_prefix('=') {
            return Some(after_eq.trim_start());
        }
        // Matched a longer identifier such as `mpc.bus_name`.
        from = start;
    }
    None
}

fn parse_scalar(text: &str, name: &'static str) -> Result<Option<f64>, CaseError> {
    let Some(rest) = find_assignment(text, name) else {
        return Ok(None);
    };
    let end = rest.find(|c| c == ';' || c == '\n').unwrap_or(rest.len());
    let token = rest[..end].trim();
    parse_number(token)
        .map(Some)
        .ok_or_else(|| CaseError::NonNumericField {
            table: name,
            row: 0,
            token: token.to_string(),
        })
}

fn parse_table(
    text: &str,
    name: &'static str,
    min_cols: usize,
) -> Result<Option<Vec<Vec<f64>>>, CaseError> {
    let Some(rest) = find_assignment(text, name) else {
        return Ok(None);
    };
    let Some(body) = rest.strip_prefix('[') else {
        return Ok(None);
    };
    let close = body.find(']').ok_or(CaseError::MalformedTable {
        table: name,
        row: 0,
        detail: "missing closing bracket".into(),
    })?;
    let body = &body[..close];

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for chunk in body.split(|c| c == ';' || c == '\n') {
        let tokens: Vec<&str> = chunk
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            continue;
        }
        let row_no = rows.len() + 1;
        let mut row = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let v = parse_number(tok).ok_or_else(|| CaseError::NonNumericField {
                table: name,
                row: row_no,
                token: tok.to_string(),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CaseError::MalformedTable {
                    table: name,
                    row: row_no,
                    detail: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        if row.len() < min_cols {
            return Err(CaseError::MalformedTable {
                table: name,
                row: row_no,
                detail: format!("needs at least {min_cols} columns, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    Ok(Some(rows))
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" | "+Inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok(),
    }
}
