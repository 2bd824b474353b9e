//! Family competing-risks data: types, CSV ingestion, validation, summaries.
//!
//! The on-disk format is a comma-separated UTF-8 table with header
//! `famID,indID,gender,proband,examAge,time,status,mgene,tvc1.age,...`.
//! Lines starting with `#` are provenance comments and are skipped. Men are
//! removed at load (the analysis cohort is female) with a logged count.
//! Genotype is a required observed 0/1 covariate; rows with a missing
//! `mgene` are rejected.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// How the family entered the study through its proband.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbandKind {
    /// Proband experienced event `j` before her exam age.
    Affected(usize),
    /// Proband was event-free at her exam age.
    Unaffected,
}

/// One woman in a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub fam_id: u64,
    pub ind_id: u64,
    /// Observed time in years: min(event time, censoring age).
    pub time: f64,
    /// Event code, 0 = censored, 1..=J = competing event.
    pub status: usize,
    /// Binary carrier indicator.
    pub genotype: u8,
    /// 0 = female, 1 = male. Datasets hold females only.
    pub gender: u8,
    /// Change age per TVC; `None` = never exposed.
    pub tvc_ages: Vec<Option<f64>>,
    pub is_proband: bool,
    /// Exam (study entry) age, probands only.
    pub exam_age: Option<f64>,
}

/// A family with exactly one proband.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub fam_id: u64,
    pub members: Vec<Individual>,
    /// Index of the proband in `members`.
    pub proband: usize,
    pub proband_kind: ProbandKind,
}

impl Family {
    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn proband(&self) -> &Individual {
        &self.members[self.proband]
    }

    /// Number of members with observed event `j` (1-based).
    pub fn event_count(&self, j: usize) -> usize {
        self.members.iter().filter(|m| m.status == j).count()
    }

    /// Event counts `d_fj` for `j = 1..=j_events`.
    pub fn event_counts(&self, j_events: usize) -> Vec<usize> {
        (1..=j_events).map(|j| self.event_count(j)).collect()
    }
}

/// A validated collection of families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub families: Vec<Family>,
    /// Number of distinct TVC columns.
    pub n_tvc: usize,
    /// Number of competing event types J.
    pub j_events: usize,
}

impl Dataset {
    /// Validate invariants and sort families by id.
    pub fn from_parts(mut families: Vec<Family>, n_tvc: usize, j_events: usize) -> Result<Self> {
        for fam in &families {
            validate_family(fam, n_tvc, j_events)?;
        }
        families.sort_by_key(|f| f.fam_id);
        for pair in families.windows(2) {
            if pair[0].fam_id == pair[1].fam_id {
                return Err(Error::Validation(format!(
                    "duplicate family id {}",
                    pair[0].fam_id
                )));
            }
        }
        Ok(Self { families, n_tvc, j_events })
    }

    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    pub fn n_individuals(&self) -> usize {
        self.families.iter().map(Family::n).sum()
    }

    /// Dataset-wide count of members with event `j`.
    pub fn total_events(&self, j: usize) -> usize {
        self.families.iter().map(|f| f.event_count(j)).sum()
    }

    /// Reinterpret probands whose event code appears in `statuses` as
    /// unaffected at their exam age (used when, e.g., death during
    /// follow-up should not count as an ascertainment event).
    pub fn reclassify_probands_as_unaffected(&mut self, statuses: &[usize]) {
        for fam in &mut self.families {
            if let ProbandKind::Affected(j) = fam.proband_kind {
                if statuses.contains(&j) {
                    fam.proband_kind = ProbandKind::Unaffected;
                }
            }
        }
    }

    /// Stable 64-bit digest of the canonical CSV bytes; used to check that
    /// model comparisons ran on identical data.
    pub fn digest(&self) -> u64 {
        // FNV-1a
        let mut h: u64 = 0xcbf29ce484222325;
        for b in to_csv_string(self).bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

fn validate_family(fam: &Family, n_tvc: usize, j_events: usize) -> Result<()> {
    let fid = fam.fam_id;
    if fam.members.is_empty() {
        return Err(Error::Validation(format!("family {fid} has no members")));
    }
    if fam.proband >= fam.members.len() || !fam.members[fam.proband].is_proband {
        return Err(Error::Validation(format!(
            "family {fid}: proband index does not point at a proband"
        )));
    }
    let n_probands = fam.members.iter().filter(|m| m.is_proband).count();
    if n_probands != 1 {
        return Err(Error::Validation(format!(
            "family {fid} has {n_probands} probands, expected exactly 1"
        )));
    }
    let mut seen = HashSet::new();
    for m in &fam.members {
        if m.fam_id != fid {
            return Err(Error::Validation(format!(
                "family {fid}: member {} carries family id {}",
                m.ind_id, m.fam_id
            )));
        }
        if !seen.insert(m.ind_id) {
            return Err(Error::Validation(format!(
                "family {fid}: duplicate individual id {}",
                m.ind_id
            )));
        }
        if !(m.time > 0.0 && m.time.is_finite()) {
            return Err(Error::Validation(format!(
                "family {fid}, individual {}: time must be > 0, got {}",
                m.ind_id, m.time
            )));
        }
        if m.status > j_events {
            return Err(Error::Validation(format!(
                "family {fid}, individual {}: status out of range: {} > J = {j_events}",
                m.ind_id, m.status
            )));
        }
        if m.genotype > 1 {
            return Err(Error::Validation(format!(
                "family {fid}, individual {}: genotype must be 0/1",
                m.ind_id
            )));
        }
        if m.gender != 0 {
            return Err(Error::Validation(format!(
                "family {fid}, individual {}: males must be removed before analysis",
                m.ind_id
            )));
        }
        if m.tvc_ages.len() != n_tvc {
            return Err(Error::Validation(format!(
                "family {fid}, individual {}: expected {n_tvc} TVC columns, got {}",
                m.ind_id,
                m.tvc_ages.len()
            )));
        }
        for (i, t) in m.tvc_ages.iter().enumerate() {
            if let Some(t) = t {
                if !(*t > 0.0 && t.is_finite()) {
                    return Err(Error::Validation(format!(
                        "family {fid}, individual {}: tvc{}.age must be > 0",
                        m.ind_id,
                        i + 1
                    )));
                }
            }
        }
        match (m.is_proband, m.exam_age) {
            (true, None) => {
                return Err(Error::Validation(format!(
                    "family {fid}: proband {} has no exam age",
                    m.ind_id
                )))
            }
            (true, Some(a)) if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::Validation(format!(
                    "family {fid}: proband {} exam age must be > 0",
                    m.ind_id
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Validation(format!(
                    "family {fid}: non-proband {} carries an exam age",
                    m.ind_id
                )))
            }
            _ => {}
        }
    }
    let p = fam.proband();
    match fam.proband_kind {
        ProbandKind::Affected(j) => {
            if j == 0 || j > j_events || p.status != j {
                return Err(Error::Validation(format!(
                    "family {fid}: proband kind affected({j}) does not match status {}",
                    p.status
                )));
            }
            let exam = p.exam_age.unwrap();
            if p.time > exam {
                return Err(Error::Validation(format!(
                    "family {fid}: affected proband has time {} after exam age {exam}",
                    p.time
                )));
            }
        }
        ProbandKind::Unaffected => {}
    }
    Ok(())
}

/// Expected layout of a pedigree CSV.
#[derive(Debug, Clone)]
pub struct PedigreeSchema {
    /// Number of competing event types J (status codes run 0..=J).
    pub j_events: usize,
    /// Expected TVC column count; `None` infers it from the header.
    pub n_tvc: Option<usize>,
}

impl PedigreeSchema {
    pub fn new(j_events: usize) -> Self {
        Self { j_events, n_tvc: None }
    }
}

const FIXED_COLUMNS: [&str; 8] = [
    "famID", "indID", "gender", "proband", "examAge", "time", "status", "mgene",
];

/// Load and validate a pedigree CSV file.
pub fn load_pedigree<P: AsRef<Path>>(path: P, schema: &PedigreeSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_pedigree(BufReader::new(file), schema)
}

/// Like [`load_pedigree`] but from any reader.
pub fn read_pedigree<R: BufRead>(reader: R, schema: &PedigreeSchema) -> Result<Dataset> {
    let parse_err = |line: usize, column: &str, message: String| Error::Parse {
        line,
        column: column.to_string(),
        message,
    };

    let mut lines = Vec::new(); // (line_no, content)
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.starts_with('#') || trimmed.trim().is_empty() {
            continue;
        }
        lines.push((i + 1, trimmed.to_string()));
    }
    let Some((header_no, header)) = lines.first() else {
        return Err(Error::Validation("pedigree file has no header".into()));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < FIXED_COLUMNS.len() {
        return Err(parse_err(*header_no, "header", "too few columns".into()));
    }
    for (i, expect) in FIXED_COLUMNS.iter().enumerate() {
        if cols[i] != *expect {
            return Err(parse_err(
                *header_no,
                expect,
                format!("expected column `{expect}`, found `{}`", cols[i]),
            ));
        }
    }
    let n_tvc = cols.len() - FIXED_COLUMNS.len();
    for (i, col) in cols[FIXED_COLUMNS.len()..].iter().enumerate() {
        let expect = format!("tvc{}.age", i + 1);
        if *col != expect {
            return Err(parse_err(
                *header_no,
                &expect,
                format!("expected column `{expect}`, found `{col}`"),
            ));
        }
    }
    if let Some(expected) = schema.n_tvc {
        if n_tvc != expected {
            return Err(Error::Validation(format!(
                "expected {expected} TVC columns, file has {n_tvc}"
            )));
        }
    }

    let mut rows: Vec<Individual> = Vec::new();
    let mut n_males = 0usize;
    for (line_no, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                *line_no,
                "row",
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let req_u64 = |idx: usize| -> Result<u64> {
            fields[idx].parse().map_err(|_| {
                parse_err(*line_no, cols[idx], format!("invalid integer `{}`", fields[idx]))
            })
        };
        let req_f64 = |idx: usize| -> Result<f64> {
            fields[idx].parse().map_err(|_| {
                parse_err(*line_no, cols[idx], format!("invalid number `{}`", fields[idx]))
            })
        };
        let opt_f64 = |idx: usize| -> Result<Option<f64>> {
            if fields[idx].is_empty() {
                return Ok(None);
            }
            req_f64(idx).map(Some)
        };
        let fam_id = req_u64(0)?;
        let ind_id = req_u64(1)?;
        let gender = req_u64(2)? as u8;
        if gender > 1 {
            return Err(parse_err(*line_no, "gender", "gender must be 0 or 1".into()));
        }
        if gender == 1 {
            n_males += 1;
            continue;
        }
        let proband_flag = req_u64(3)?;
        if proband_flag > 1 {
            return Err(parse_err(*line_no, "proband", "proband must be 0 or 1".into()));
        }
        let exam_age = opt_f64(4)?;
        let time = req_f64(5)?;
        let status = req_u64(6)? as usize;
        if status > schema.j_events {
            return Err(parse_err(
                *line_no,
                "status",
                format!("status out of range: {status} > J = {}", schema.j_events),
            ));
        }
        if fields[7].is_empty() {
            return Err(parse_err(
                *line_no,
                "mgene",
                "genotype is required observed input; blank not allowed".into(),
            ));
        }
        let genotype = req_u64(7)? as u8;
        let mut tvc_ages = Vec::with_capacity(n_tvc);
        for k in 0..n_tvc {
            tvc_ages.push(opt_f64(FIXED_COLUMNS.len() + k)?);
        }
        rows.push(Individual {
            fam_id,
            ind_id,
            time,
            status,
            genotype,
            gender,
            tvc_ages,
            is_proband: proband_flag == 1,
            exam_age,
        });
    }
    if n_males > 0 {
        log::info!("removed {n_males} male rows from pedigree input");
    }

    // Group rows by family id, keeping file order within a family.
    let mut families: Vec<Family> = Vec::new();
    for row in rows {
        match families.iter_mut().find(|f| f.fam_id == row.fam_id) {
            Some(fam) => fam.members.push(row),
            None => families.push(Family {
                fam_id: row.fam_id,
                members: vec![row],
                proband: 0,
                proband_kind: ProbandKind::Unaffected,
            }),
        }
    }
    for fam in &mut families {
        let proband = fam
            .members
            .iter()
            .position(|m| m.is_proband)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "family {} has no (female) proband",
                    fam.fam_id
                ))
            })?;
        fam.proband = proband;
        // Infer how the family was ascertained from the proband's record:
        // an observed event makes her an affected proband, otherwise she
        // was unaffected at study entry.
        fam.proband_kind = match fam.members[proband].status {
            0 => ProbandKind::Unaffected,
            j => ProbandKind::Affected(j),
        };
    }
    Dataset::from_parts(families, n_tvc, schema.j_events)
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Write the canonical CSV form: header, families ascending by id, members
/// in stored order, shortest round-trip float formatting, `\n` endings.
pub fn write_pedigree<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for k in 1..=ds.n_tvc {
        header.push(format!("tvc{k}.age"));
    }
    writeln!(out, "{}", header.join(","))?;
    for fam in &ds.families {
        for m in &fam.members {
            let mut fields = vec![
                m.fam_id.to_string(),
                m.ind_id.to_string(),
                m.gender.to_string(),
                u8::from(m.is_proband).to_string(),
                m.exam_age.map(fmt_f64).unwrap_or_default(),
                fmt_f64(m.time),
                m.status.to_string(),
                m.genotype.to_string(),
            ];
            for t in &m.tvc_ages {
                fields.push(t.map(fmt_f64).unwrap_or_default());
            }
            writeln!(out, "{}", fields.join(","))?;
        }
    }
    Ok(())
}

/// Canonical CSV as a string.
pub fn to_csv_string(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    write_pedigree(ds, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("canonical CSV is UTF-8")
}

/// Deterministic event/genotype/TVC counts for a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_families: usize,
    pub n_individuals: usize,
    /// `events[j]` = members with status `j` (0 = censored), j = 0..=J.
    pub events: Vec<usize>,
    /// `by_genotype[g][j]` = members with genotype `g` and status `j`.
    pub by_genotype: [Vec<usize>; 2],
    /// Members exposed to each TVC.
    pub tvc_uptake: Vec<usize>,
}

/// Count events, genotype cross-tabs and TVC uptake.
pub fn summarize(ds: &Dataset) -> DatasetSummary {
    let mut events = vec![0usize; ds.j_events + 1];
    let mut by_genotype = [vec![0usize; ds.j_events + 1], vec![0usize; ds.j_events + 1]];
    let mut tvc_uptake = vec![0usize; ds.n_tvc];
    for fam in &ds.families {
        for m in &fam.members {
            events[m.status] += 1;
            by_genotype[m.genotype as usize][m.status] += 1;
            for (k, t) in m.tvc_ages.iter().enumerate() {
                if t.is_some() {
                    tvc_uptake[k] += 1;
                }
            }
        }
    }
    DatasetSummary {
        n_families: ds.n_families(),
        n_individuals: ds.n_individuals(),
        events,
        by_genotype,
        tvc_uptake,
    }
}

impl DatasetSummary {
    /// CSV rows `metric,event,genotype,count` in a fixed order.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("metric,event,genotype,count\n");
        out.push_str(&format!("families,,,{}\n", self.n_families));
        out.push_str(&format!("individuals,,,{}\n", self.n_individuals));
        for (j, n) in self.events.iter().enumerate() {
            out.push_str(&format!("status,{j},,{n}\n"));
        }
        for (g, row) in self.by_genotype.iter().enumerate() {
            for (j, n) in row.iter().enumerate() {
                out.push_str(&format!("status,{j},{g},{n}\n"));
            }
        }
        for (k, n) in self.tvc_uptake.iter().enumerate() {
            out.push_str(&format!("tvc_uptake,tvc{},,{n}\n", k + 1));
        }
        out
    }
}
