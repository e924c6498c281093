//! CSV records and the summaries derived from them.
//!
//! Every summary here is a pure function of per-instance records, so a
//! reader can rebuild the win table or the sweep statistics from the raw CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use moflp_core::dataset::FeatureVariant;

use crate::error::{Error, Result};

pub const METHOD_LABEL: &str = "label";
pub const METHOD_NSGA2: &str = "nsga2";
pub const METHOD_RANDOM: &str = "random";

pub fn model_method(variant: FeatureVariant) -> String {
    format!("model_{}", variant.tag())
}

pub fn scale_tag(m: usize, n: usize) -> String {
    format!("{m}x{n}")
}

/// One front of one instance measured in that instance's frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scale: String,
    pub instance_id: String,
    pub method: String,
    pub budget: Option<usize>,
    pub repeat: Option<usize>,
    pub hv: f64,
    pub igd: f64,
    pub front_size: usize,
}

/// Wall time of one method on one instance. Kept apart from the metrics so
/// that those stay reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub scale: String,
    pub instance_id: String,
    pub method: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scale: String,
    pub variant: String,
    pub instance_id: String,
    pub hv_model: f64,
    pub igd_model: f64,
    pub hv_label: f64,
    pub model_front_size: usize,
    pub label_front_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvDifferenceRecord {
    pub scale: String,
    pub variant: String,
    pub budget: usize,
    pub instance_id: String,
    pub hv_model: f64,
    pub hv_nsga2_mean: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub axis: String,
    pub value: usize,
    pub instance_id: String,
    pub hv: f64,
    pub igd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStat {
    pub axis: String,
    pub value: usize,
    pub indicator: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Indicator {
    Hv,
    Igd,
}

impl Indicator {
    pub fn name(self) -> &'static str {
        match self {
            Indicator::Hv => "HV",
            Indicator::Igd => "IGD",
        }
    }

    fn value(self, r: &MetricsRecord) -> f64 {
        match self {
            Indicator::Hv => r.hv,
            Indicator::Igd => r.igd,
        }
    }

    /// Strict improvement: larger HV or smaller IGD.
    fn beats(self, a: f64, b: f64) -> bool {
        match self {
            Indicator::Hv => a > b,
            Indicator::Igd => a < b,
        }
    }
}

/// One row of the win table: the percentage of test instances on which a
/// model variant strictly beats the mean NSGA-II result at each budget, and
/// the random baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct WinRow {
    pub scale: String,
    pub variant: String,
    pub indicator: Indicator,
    pub test_instances: usize,
    pub vs_budget: Vec<(usize, f64)>,
    pub vs_random: f64,
}

/// Metrics of one instance keyed by method, with NSGA-II repeats averaged.
#[derive(Default)]
struct InstanceView {
    single: BTreeMap<String, (f64, f64)>,
    nsga2: BTreeMap<usize, Vec<(f64, f64)>>,
}

impl InstanceView {
    fn get(&self, method: &str, ind: Indicator, id: &str) -> Result<f64> {
        self.single
            .get(method)
            .map(|&(hv, igd)| pick(ind, hv, igd))
            .ok_or_else(|| Error::Report(format!("instance {id} has no `{method}` row")))
    }

    fn nsga2_mean(&self, budget: usize, ind: Indicator, id: &str) -> Result<f64> {
        let runs = self
            .nsga2
            .get(&budget)
            .ok_or_else(|| Error::Report(format!("instance {id} has no NSGA-II run at budget {budget}")))?;
        Ok(runs.iter().map(|&(hv, igd)| pick(ind, hv, igd)).sum::<f64>() / runs.len() as f64)
    }
}

fn pick(ind: Indicator, hv: f64, igd: f64) -> f64 {
    match ind {
        Indicator::Hv => hv,
        Indicator::Igd => igd,
    }
}

/// Per scale, per instance views in first-appearance order.
fn views(records: &[MetricsRecord]) -> BTreeMap<String, Vec<(String, InstanceView)>> {
    let mut out: BTreeMap<String, Vec<(String, InstanceView)>> = BTreeMap::new();
    for r in records {
        let list = out.entry(r.scale.clone()).or_default();
        let pos = match list.iter().position(|(id, _)| *id == r.instance_id) {
            Some(p) => p,
            None => {
                list.push((r.instance_id.clone(), InstanceView::default()));
                list.len() - 1
            }
        };
        let view = &mut list[pos].1;
        let point = (Indicator::Hv.value(r), Indicator::Igd.value(r));
        if r.method == METHOD_NSGA2 {
            if let Some(b) = r.budget {
                view.nsga2.entry(b).or_default().push(point);
            }
        } else {
            view.single.insert(r.method.clone(), point);
        }
    }
    out
}

fn budgets_of(records: &[MetricsRecord]) -> Vec<usize> {
    let mut b: Vec<usize> = records
        .iter()
        .filter(|r| r.method == METHOD_NSGA2)
        .filter_map(|r| r.budget)
        .collect();
    b.sort_unstable();
    b.dedup();
    b
}

fn percent(wins: usize, total: usize) -> f64 {
    100.0 * wins as f64 / total as f64
}

pub fn win_table(records: &[MetricsRecord], variants: &[FeatureVariant]) -> Result<Vec<WinRow>> {
    let budgets = budgets_of(records);
    let mut rows = Vec::new();
    for (scale, instances) in views(records) {
        for &variant in variants {
            let method = model_method(variant);
            for ind in [Indicator::Hv, Indicator::Igd] {
                let mut vs_budget = Vec::with_capacity(budgets.len());
                for &b in &budgets {
                    let mut wins = 0;
                    for (id, v) in &instances {
                        if ind.beats(v.get(&method, ind, id)?, v.nsga2_mean(b, ind, id)?) {
                            wins += 1;
                        }
                    }
                    vs_budget.push((b, percent(wins, instances.len())));
                }
                let mut wins = 0;
                for (id, v) in &instances {
                    if ind.beats(v.get(&method, ind, id)?, v.get(METHOD_RANDOM, ind, id)?) {
                        wins += 1;
                    }
                }
                rows.push(WinRow {
                    scale: scale.clone(),
                    variant: variant.tag().to_string(),
                    indicator: ind,
                    test_instances: instances.len(),
                    vs_budget,
                    vs_random: percent(wins, instances.len()),
                });
            }
        }
    }
    Ok(rows)
}

/// Renders the win table with one column per budget.
pub fn render_win_table(rows: &[WinRow]) -> String {
    let mut out = String::from("scale,variant,indicator,test_instances");
    if let Some(first) = rows.first() {
        for (b, _) in &first.vs_budget {
            out.push_str(&format!(",nsga2@{b}"));
        }
    }
    out.push_str(",random\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}", r.scale, r.variant, r.indicator.name(), r.test_instances));
        for (_, p) in &r.vs_budget {
            out.push_str(&format!(",{p:.2}"));
        }
        out.push_str(&format!(",{:.2}\n", r.vs_random));
    }
    out
}

/// Model HV minus the mean NSGA-II HV, per instance and budget.
pub fn hv_differences(records: &[MetricsRecord], variants: &[FeatureVariant]) -> Result<Vec<HvDifferenceRecord>> {
    let budgets = budgets_of(records);
    let mut out = Vec::new();
    for (scale, instances) in views(records) {
        for &variant in variants {
            let method = model_method(variant);
            for &b in &budgets {
                for (id, v) in &instances {
                    let hv_model = v.get(&method, Indicator::Hv, id)?;
                    let hv_nsga2_mean = v.nsga2_mean(b, Indicator::Hv, id)?;
                    out.push(HvDifferenceRecord {
                        scale: scale.clone(),
                        variant: variant.tag().to_string(),
                        budget: b,
                        instance_id: id.clone(),
                        hv_model,
                        hv_nsga2_mean,
                        difference: hv_model - hv_nsga2_mean,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Minimum, quartiles and maximum; `None` for an empty sample.
pub fn five_number(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([v[0], quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75), v[v.len() - 1]])
}

/// Box plot statistics per swept value, in first-appearance order.
pub fn sweep_stats(records: &[SweepRecord]) -> Vec<SweepStat> {
    let mut order: Vec<(String, usize)> = Vec::new();
    for r in records {
        let key = (r.axis.clone(), r.value);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    let mut out = Vec::new();
    for (axis, value) in order {
        let group: Vec<&SweepRecord> = records.iter().filter(|r| r.axis == axis && r.value == value).collect();
        for ind in [Indicator::Hv, Indicator::Igd] {
            let vals: Vec<f64> = group
                .iter()
                .map(|r| match ind {
                    Indicator::Hv => r.hv,
                    Indicator::Igd => r.igd,
                })
                .collect();
            let [min, q1, median, q3, max] = five_number(&vals).expect("groups are non-empty");
            out.push(SweepStat {
                axis: axis.clone(),
                value,
                indicator: ind.name().to_string(),
                count: vals.len(),
                min,
                q1,
                median,
                q3,
                max,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, method: &str, budget: Option<usize>, hv: f64, igd: f64) -> MetricsRecord {
        MetricsRecord {
            scale: "3x4".into(),
            instance_id: id.into(),
            method: method.into(),
            budget,
            repeat: budget.map(|_| 0),
            hv,
            igd,
            front_size: 1,
        }
    }

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(five_number(&[4.0, 1.0, 3.0, 2.0]).unwrap(), [1.0, 1.75, 2.5, 3.25, 4.0]);
        assert_eq!(five_number(&[7.0]).unwrap(), [7.0; 5]);
        assert!(five_number(&[]).is_none());
    }

    #[test]
    fn win_percentages() {
        let mut records = Vec::new();
        for (k, (model_hv, nsga_hv)) in [(0.8, 0.7), (0.6, 0.7), (0.9, 0.85), (0.5, 0.5)].iter().enumerate() {
            let id = format!("i{k}");
            records.push(rec(&id, "model_A", None, *model_hv, 0.1));
            records.push(rec(&id, METHOD_NSGA2, Some(1000), *nsga_hv, 0.2));
            records.push(rec(&id, METHOD_RANDOM, None, 0.55, 0.3));
        }
        let rows = win_table(&records, &[FeatureVariant::A]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].indicator, Indicator::Hv);
        assert_eq!(rows[0].vs_budget, vec![(1000, 50.0)]);
        assert_eq!(rows[0].vs_random, 75.0);
        assert_eq!(rows[1].vs_budget, vec![(1000, 100.0)]);
        let text = render_win_table(&rows);
        assert!(text.starts_with("scale,variant,indicator,test_instances,nsga2@1000,random\n"));
        assert!(text.contains("3x4,A,HV,4,50.00,75.00\n"));
    }

    #[test]
    fn method_against_itself_never_wins() {
        let mut records = Vec::new();
        for k in 0..5 {
            let id = format!("i{k}");
            let hv = 0.1 * k as f64;
            records.push(rec(&id, "model_A", None, hv, hv));
            records.push(rec(&id, METHOD_NSGA2, Some(500), hv, hv));
            records.push(rec(&id, METHOD_RANDOM, None, hv, hv));
        }
        for row in win_table(&records, &[FeatureVariant::A]).unwrap() {
            assert_eq!(row.vs_budget, vec![(500, 0.0)]);
            assert_eq!(row.vs_random, 0.0);
        }
    }

    #[test]
    fn repeats_are_averaged() {
        let records = vec![
            rec("i", "model_A", None, 0.6, 0.1),
            rec("i", METHOD_NSGA2, Some(100), 0.5, 0.1),
            rec("i", METHOD_NSGA2, Some(100), 0.8, 0.1),
            rec("i", METHOD_RANDOM, None, 0.1, 0.1),
        ];
        let diff = hv_differences(&records, &[FeatureVariant::A]).unwrap();
        assert_eq!(diff.len(), 1);
        assert!((diff[0].hv_nsga2_mean - 0.65).abs() < 1e-15);
        assert!((diff[0].difference + 0.05).abs() < 1e-12);
    }

    #[test]
    fn missing_row_is_reported() {
        let records = vec![rec("i", METHOD_NSGA2, Some(100), 0.5, 0.1)];
        assert!(matches!(win_table(&records, &[FeatureVariant::B]), Err(Error::Report(_))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let records = vec![rec("i", METHOD_NSGA2, Some(100), 0.1 + 0.2, 1e-17), rec("i", "label", None, 1.0, 0.0)];
        write_csv(&path, &records).unwrap();
        assert_eq!(read_csv::<MetricsRecord>(&path).unwrap(), records);
    }
}
