//! On-disk artifact formats: instances, solutions, and models as pretty
//! JSON documents (one per file); datasets as line-delimited JSON with an
//! explicit schema header; reports as CSV. All maps are ordered, so
//! identical inputs always serialize to identical bytes.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::core::{FjspInstance, ObjectiveKind, Operation, Solution};
use crate::learn::{FeatureVariant, MlpModel, StateRecord};
use crate::{MachineId, Time};

use super::CliError;

pub const INSTANCE_FORMAT: &str = "fjsp-instance/1";
pub const SOLUTION_FORMAT: &str = "fjsp-solution/1";
pub const MODEL_FORMAT: &str = "fix-model/1";
pub const DATASET_FORMAT: &str = "fix-dataset/1";

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    format: String,
    num_machines: usize,
    objective: ObjectiveKind,
    seed: u64,
    jobs: Vec<Vec<Operation>>,
}

pub fn write_instance(path: &Path, instance: &FjspInstance) -> Result<(), CliError> {
    let doc = InstanceDoc {
        format: INSTANCE_FORMAT.into(),
        num_machines: instance.num_machines,
        objective: instance.objective,
        seed: instance.seed,
        jobs: instance.jobs.clone(),
    };
    write_pretty(path, &doc)
}

pub fn read_instance(path: &Path) -> Result<FjspInstance, CliError> {
    let doc: InstanceDoc = read_json(path)?;
    expect_format(path, &doc.format, INSTANCE_FORMAT)?;
    FjspInstance::new(doc.num_machines, doc.jobs, doc.objective, doc.seed)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionRow {
    op: usize,
    machine: MachineId,
    start: Time,
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionDoc {
    format: String,
    method: String,
    objective: Time,
    rows: Vec<SolutionRow>,
}

pub fn write_solution(
    path: &Path,
    solution: &Solution,
    method: &str,
    objective: Time,
) -> Result<(), CliError> {
    let rows = solution
        .assignment
        .iter()
        .map(|(&op, &machine)| SolutionRow { op: op.0, machine, start: solution.start[&op] })
        .collect();
    let doc =
        SolutionDoc { format: SOLUTION_FORMAT.into(), method: method.into(), objective, rows };
    write_pretty(path, &doc)
}

pub fn read_solution(path: &Path) -> Result<(Solution, String, Time), CliError> {
    let doc: SolutionDoc = read_json(path)?;
    expect_format(path, &doc.format, SOLUTION_FORMAT)?;
    let mut solution = Solution::default();
    for row in &doc.rows {
        solution.insert(crate::core::OpId(row.op), row.machine, row.start);
    }
    Ok((solution, doc.method, doc.objective))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    model: MlpModel,
}

pub fn write_model(path: &Path, model: &MlpModel) -> Result<(), CliError> {
    write_pretty(path, &ModelDoc { format: MODEL_FORMAT.into(), model: model.clone() })
}

pub fn read_model(path: &Path) -> Result<MlpModel, CliError> {
    let doc: ModelDoc = read_json(path)?;
    expect_format(path, &doc.format, MODEL_FORMAT)?;
    Ok(doc.model)
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    variant: FeatureVariant,
    op_feature_names: Vec<String>,
    machine_feature_names: Vec<String>,
}

pub fn write_dataset(path: &Path, records: &[StateRecord]) -> Result<(), CliError> {
    let variant = match records.first() {
        Some(r) => r.variant,
        None => return Err(CliError::Format("cannot write an empty dataset".into())),
    };
    if records.iter().any(|r| r.variant != variant) {
        return Err(CliError::Format("dataset mixes feature variants".into()));
    }
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        variant,
        op_feature_names: variant.op_feature_names().iter().map(|s| s.to_string()).collect(),
        machine_feature_names: variant
            .machine_feature_names()
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<StateRecord>, CliError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CliError::Format(format!("{}: empty dataset file", path.display())))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    expect_format(path, &header.format, DATASET_FORMAT)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StateRecord = serde_json::from_str(&line)?;
        if rec.variant != header.variant {
            return Err(CliError::Format(format!(
                "{}: record variant disagrees with dataset header",
                path.display()
            )));
        }
        records.push(rec);
    }
    Ok(records)
}

fn write_pretty<T: Serialize>(path: &Path, doc: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn expect_format(path: &Path, found: &str, want: &str) -> Result<(), CliError> {
    if found == want {
        Ok(())
    } else {
        Err(CliError::Format(format!(
            "{}: expected format {want}, found {found}",
            path.display()
        )))
    }
}
