use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::fmt_real;
use crate::error::{Error, Result};

pub const ATTACK_CSV_HEADER: [&str; 7] = [
    "attack",
    "targeted",
    "box",
    "steps",
    "source_network",
    "target_network",
    "success_rate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoxClass {
    White,
    Black,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepClass {
    Single,
    Multi,
}

impl FromStr for BoxClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(BoxClass::White),
            "black" => Ok(BoxClass::Black),
            other => Err(Error::Format(format!("unknown box class {other:?}"))),
        }
    }
}

impl fmt::Display for BoxClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoxClass::White => "white",
            BoxClass::Black => "black",
        })
    }
}

impl FromStr for StepClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(StepClass::Single),
            "multi" => Ok(StepClass::Multi),
            other => Err(Error::Format(format!("unknown step class {other:?}"))),
        }
    }
}

impl fmt::Display for StepClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepClass::Single => "single",
            StepClass::Multi => "multi",
        })
    }
}

pub(crate) fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Format(format!("expected true|false, got {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub attack_name: String,
    pub targeted: bool,
    pub box_class: BoxClass,
    pub step_class: StepClass,
    pub source_network: String,
    pub target_network: String,
    pub success_rate: f64,
}

impl AttackRecord {
    pub fn is_transferred(&self) -> bool {
        self.source_network != self.target_network
    }
}

/// Ordered collection of attack outcomes. Keys `(attack, targeted, source,
/// target)` are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackTable {
    records: Vec<AttackRecord>,
}

impl AttackTable {
    pub fn new(records: Vec<AttackRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !(0.0..=1.0).contains(&r.success_rate) {
                return Err(Error::Data(format!(
                    "success_rate {} outside [0,1] for {} {} -> {}",
                    r.success_rate, r.attack_name, r.source_network, r.target_network
                )));
            }
            let key = (
                r.attack_name.as_str(),
                r.targeted,
                r.source_network.as_str(),
                r.target_network.as_str(),
            );
            if !seen.insert(key) {
                return Err(Error::Data(format!(
                    "duplicate attack record ({}, targeted={}, {} -> {})",
                    r.attack_name, r.targeted, r.source_network, r.target_network
                )));
            }
        }
        Ok(AttackTable { records })
    }

    pub fn records(&self) -> &[AttackRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keeps the records matching `keep`; order is preserved.
    pub fn filtered(&self, mut keep: impl FnMut(&AttackRecord) -> bool) -> AttackTable {
        AttackTable {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

pub fn parse_attack_csv(reader: impl Read) -> Result<AttackTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(ATTACK_CSV_HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "attack CSV header must be `{}`, found `{}`",
            ATTACK_CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let at = |e: Error| Error::Format(format!("attack CSV row {}: {e}", line + 2));
        let success_rate = row[6]
            .parse::<f64>()
            .map_err(|_| at(Error::Format(format!("bad success_rate {:?}", &row[6]))))?;
        records.push(AttackRecord {
            attack_name: row[0].to_string(),
            targeted: parse_bool(&row[1]).map_err(at)?,
            box_class: row[2].parse().map_err(at)?,
            step_class: row[3].parse().map_err(at)?,
            source_network: row[4].to_string(),
            target_network: row[5].to_string(),
            success_rate,
        });
    }
    AttackTable::new(records)
}

pub fn read_attack_csv(path: &Path) -> Result<AttackTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_attack_csv(file)
}

pub fn write_attack_csv(table: &AttackTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ATTACK_CSV_HEADER)?;
    for r in table.records() {
        w.write_record([
            r.attack_name.as_str(),
            if r.targeted { "true" } else { "false" },
            &r.box_class.to_string(),
            &r.step_class.to_string(),
            &r.source_network,
            &r.target_network,
            &fmt_real(r.success_rate),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<attack csv>", e))?;
    Ok(())
}
