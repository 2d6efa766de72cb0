//! Output directory layout and the pass/fail summary.
//!
//! A run directory holds `config.toml` (the exact bytes that were hashed),
//! one `<study>.csv` per study, `summary.csv`, `summary.txt` and
//! `manifest.toml`. Every CSV starts with the config hash; timestamps and
//! durations live only in the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dfsl_core::io::{read_csv, write_csv};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, LoadedConfig, Study};
use crate::error::{CliError, Result};
use crate::experiment::Experiment;
use crate::studies::{run_study, Check, Relation, StudyOutcome};

pub const SUMMARY_HEADER: [&str; 8] = ["study", "check", "criterion", "value", "relation", "threshold", "passed", "error"];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StudyEntry {
    pub name: String,
    pub table: String,
    pub seconds: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub config_name: String,
    pub config_sha256: String,
    pub code_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub passed: bool,
    pub studies: Vec<StudyEntry>,
}

pub struct Report {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub outcomes: Vec<StudyOutcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn outcome(&self, study: Study) -> Option<&StudyOutcome> {
        self.outcomes.iter().find(|o| o.study == study)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn summary_rows(outcomes: &[StudyOutcome]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for o in outcomes {
        for c in &o.checks {
            rows.push(vec![
                o.study.name().to_string(),
                c.name.clone(),
                c.criterion.map(|n| n.to_string()).unwrap_or_default(),
                format!("{:.12e}", c.value),
                c.relation.symbol().to_string(),
                format!("{:.12e}", c.threshold),
                c.passed.to_string(),
                String::new(),
            ]);
        }
        if let Some(err) = &o.error {
            rows.push(vec![
                o.study.name().to_string(),
                "study completed".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                err.clone(),
            ]);
        }
    }
    rows
}

/// Parses, validates and builds everything, then runs the declared studies
/// in order. Errors returned here happen before any study runs.
pub fn run(loaded: LoadedConfig, out_dir: Option<&Path>) -> Result<Report> {
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| loaded.config.output.clone());
    let started = unix_now();
    let mut exp = Experiment::prepare(loaded)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), exp.loaded.text.as_bytes())?;
    let hash = exp.loaded.hash.clone();

    let studies = exp.loaded.studies.clone();
    let mut outcomes = Vec::with_capacity(studies.len());
    let mut entries = Vec::with_capacity(studies.len());
    for study in studies {
        let outcome = run_study(study, &mut exp);
        let table = format!("{}.csv", study.name());
        let header: Vec<&str> = outcome.table.header.iter().map(String::as_str).collect();
        write_csv(&dir.join(&table), &hash, &header, &outcome.table.rows)?;
        entries.push(StudyEntry { name: study.name().into(), table, seconds: outcome.seconds, passed: outcome.passed() });
        outcomes.push(outcome);
    }

    write_csv(&dir.join("summary.csv"), &hash, &SUMMARY_HEADER, &summary_rows(&outcomes))?;
    let manifest = Manifest {
        config_name: exp.loaded.config.name.clone(),
        config_sha256: hash,
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        passed: outcomes.iter().all(StudyOutcome::passed),
        studies: entries,
    };
    write_manifest(&dir, &manifest)?;
    let text = render(&manifest, &read_summary(&dir)?);
    fs::write(dir.join("summary.txt"), text)?;
    Ok(Report { dir, manifest, outcomes })
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let text = toml::to_string(m).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join("manifest.toml"))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))
}

/// One summary line: the study, the check when there is one, and the error
/// text for studies that stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub study: String,
    pub check: Option<Check>,
    pub error: Option<String>,
}

pub fn read_summary(dir: &Path) -> Result<Vec<SummaryLine>> {
    let (_, _, rows) = read_csv(&dir.join("summary.csv"))?;
    rows.into_iter()
        .map(|r| {
            if r.len() != SUMMARY_HEADER.len() {
                return Err(CliError::Validation(format!("summary row has {} fields", r.len())));
            }
            let bad = |what: &str| CliError::Validation(format!("summary row has a malformed {what}"));
            if !r[7].is_empty() {
                return Ok(SummaryLine { study: r[0].clone(), check: None, error: Some(r[7].clone()) });
            }
            let relation = Relation::parse(&r[4]).ok_or_else(|| bad("relation"))?;
            let check = Check {
                name: r[1].clone(),
                criterion: if r[2].is_empty() { None } else { Some(r[2].parse().map_err(|_| bad("criterion"))?) },
                value: r[3].parse().map_err(|_| bad("value"))?,
                relation,
                threshold: r[5].parse().map_err(|_| bad("threshold"))?,
                passed: r[6].parse().map_err(|_| bad("flag"))?,
            };
            Ok(SummaryLine { study: r[0].clone(), check: Some(check), error: None })
        })
        .collect()
}

pub fn render(m: &Manifest, lines: &[SummaryLine]) -> String {
    let mut s = format!(
        "run {} ({})\nconfig sha256 {}\n\n",
        m.config_name,
        if m.passed { "PASS" } else { "FAIL" },
        m.config_sha256
    );
    for entry in &m.studies {
        s.push_str(&format!(
            "[{}] {} ({:.1} s)\n",
            if entry.passed { "PASS" } else { "FAIL" },
            entry.name,
            entry.seconds
        ));
        for line in lines.iter().filter(|l| l.study == entry.name) {
            match (&line.check, &line.error) {
                (Some(c), _) => {
                    let tag = c.criterion.map(|n| format!(" [criterion {n}]")).unwrap_or_default();
                    s.push_str(&format!(
                        "    {} {}: {:.4e} {} {:.4e}{}\n",
                        if c.passed { "ok  " } else { "FAIL" },
                        c.name,
                        c.value,
                        c.relation.symbol(),
                        c.threshold,
                        tag
                    ));
                }
                (None, Some(e)) => s.push_str(&format!("    FAIL study stopped: {e}\n")),
                (None, None) => {}
            }
        }
    }
    s
}

/// Re-renders `summary.txt` from the stored tables after checking that the
/// manifest and every table match the stored config bytes.
pub fn rerender(dir: &Path) -> Result<(Manifest, String)> {
    let manifest = read_manifest(dir)?;
    let config = fs::read(dir.join("config.toml"))?;
    if sha256_hex(&config) != manifest.config_sha256 {
        return Err(CliError::Validation("config.toml does not match the manifest hash".into()));
    }
    let mut tables: Vec<String> = manifest.studies.iter().map(|e| e.table.clone()).collect();
    tables.push("summary.csv".into());
    for t in tables {
        let (hash, _, _) = read_csv(&dir.join(&t))?;
        if hash != manifest.config_sha256 {
            return Err(CliError::Validation(format!("{t} carries a different config hash")));
        }
    }
    let text = render(&manifest, &read_summary(dir)?);
    fs::write(dir.join("summary.txt"), &text)?;
    Ok((manifest, text))
}
