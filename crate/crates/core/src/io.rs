//! Versioned JSON documents for instances, Pareto sets and labels.
//!
//! Floats are written with shortest round-trip formatting and parsed exactly,
//! so `decode(encode(x)) == x` bit for bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::LabelPair;
use crate::error::{Error, Result};
use crate::flp::{Instance, ObjectivePoint, Solution};
use crate::matrix::Matrix;
use crate::pareto::ParetoSet;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    schema_version: u32,
    id: String,
    m: usize,
    n: usize,
    fixed_cost: Vec<f64>,
    demand: Vec<f64>,
    timescale: Vec<f64>,
    coords_facility: Vec<[f64; 2]>,
    coords_customer: Vec<[f64; 2]>,
    unit_cost: Matrix,
    distance: Matrix,
    reliability: Matrix,
}

#[derive(Serialize, Deserialize)]
struct SolutionRecord {
    open: Vec<u8>,
    assign: Vec<usize>,
    f1: f64,
    f2: f64,
}

#[derive(Serialize, Deserialize)]
struct ParetoDoc {
    schema_version: u32,
    instance_id: String,
    solutions: Vec<SolutionRecord>,
}

#[derive(Serialize, Deserialize)]
struct LabelDoc {
    schema_version: u32,
    instance_id: String,
    p_node: Vec<f64>,
    p_edge: Matrix,
}

pub(crate) fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn render<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents are always serialisable");
    s.push('\n');
    s
}

pub(crate) fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::validation(
            "schema_version",
            format!("unsupported version {found}, expected {SCHEMA_VERSION}"),
        ));
    }
    Ok(())
}

pub fn encode_instance(instance: &Instance) -> String {
    render(&InstanceDoc {
        schema_version: SCHEMA_VERSION,
        id: instance.id.clone(),
        m: instance.m(),
        n: instance.n(),
        fixed_cost: instance.fixed_cost.clone(),
        demand: instance.demand.clone(),
        timescale: instance.timescale.clone(),
        coords_facility: instance.coords_facility.clone(),
        coords_customer: instance.coords_customer.clone(),
        unit_cost: instance.unit_cost.clone(),
        distance: instance.distance.clone(),
        reliability: instance.reliability.clone(),
    })
}

/// Parses and validates an instance document.
pub fn decode_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDoc = parse(text)?;
    check_version(doc.schema_version)?;
    if doc.fixed_cost.len() != doc.m {
        return Err(Error::validation("fixed_cost", format!("expected m = {} entries", doc.m)));
    }
    if doc.demand.len() != doc.n {
        return Err(Error::validation("demand", format!("expected n = {} entries", doc.n)));
    }
    let instance = Instance {
        id: doc.id,
        fixed_cost: doc.fixed_cost,
        demand: doc.demand,
        timescale: doc.timescale,
        coords_facility: doc.coords_facility,
        coords_customer: doc.coords_customer,
        distance: doc.distance,
        unit_cost: doc.unit_cost,
        reliability: doc.reliability,
    };
    instance.validate()?;
    Ok(instance)
}

pub fn encode_pareto(set: &ParetoSet) -> String {
    render(&ParetoDoc {
        schema_version: SCHEMA_VERSION,
        instance_id: set.instance_id.clone(),
        solutions: set
            .solutions
            .iter()
            .map(|s| {
                let p = s.objectives.expect("Pareto set members are evaluated");
                SolutionRecord {
                    open: s.open.iter().map(|&b| b as u8).collect(),
                    assign: s.assign.clone(),
                    f1: p.f1,
                    f2: p.f2,
                }
            })
            .collect(),
    })
}

pub fn decode_pareto(text: &str) -> Result<ParetoSet> {
    let doc: ParetoDoc = parse(text)?;
    check_version(doc.schema_version)?;
    let solutions = doc
        .solutions
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            if let Some(b) = r.open.iter().find(|&&b| b > 1) {
                return Err(Error::validation("open", format!("solution {k} has open bit {b}")));
            }
            Ok(Solution {
                open: r.open.iter().map(|&b| b == 1).collect(),
                assign: r.assign,
                objectives: Some(ObjectivePoint::new(r.f1, r.f2)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParetoSet {
        instance_id: doc.instance_id,
        solutions,
    })
}

pub fn encode_labels(instance_id: &str, labels: &LabelPair) -> String {
    render(&LabelDoc {
        schema_version: SCHEMA_VERSION,
        instance_id: instance_id.to_string(),
        p_node: labels.p_node.clone(),
        p_edge: labels.p_edge.clone(),
    })
}

/// Returns the instance id and the validated labels.
pub fn decode_labels(text: &str) -> Result<(String, LabelPair)> {
    let doc: LabelDoc = parse(text)?;
    check_version(doc.schema_version)?;
    let labels = LabelPair {
        p_node: doc.p_node,
        p_edge: doc.p_edge,
    };
    labels.validate()?;
    Ok((doc.instance_id, labels))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    decode_instance(&read_text(path)?)
}

pub fn write_instance(path: &Path, instance: &Instance) -> Result<()> {
    write_text(path, &encode_instance(instance))
}

pub fn read_pareto(path: &Path) -> Result<ParetoSet> {
    decode_pareto(&read_text(path)?)
}

pub fn write_pareto(path: &Path, set: &ParetoSet) -> Result<()> {
    write_text(path, &encode_pareto(set))
}
