use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use petseg::io::{read_csv_report, Table};
use petseg::measures::{mape, Measure};
use petseg::stats::{log_linear_edges, mape_curve_with_edges, median, paired_t_test, threshold_subset_dsc};

use super::evaluate::CASES_REPORT;
use crate::{cell_opt, Analysis, CliError, GlobalOpts};

pub const REPRODUCIBILITY_REPORT: &str = "analyze_reproducibility";
pub const MAPE_REPORT: &str = "analyze_mape_curves";
pub const THRESHOLD_REPORT: &str = "analyze_threshold_curves";

/// Per-model columns of the per-case report.
#[derive(Debug, Default)]
struct ModelColumns {
    dsc: Vec<f64>,
    gt: [Vec<f64>; 6],
    pred: [Vec<f64>; 6],
}

fn parse_real(s: &str, col: &str, path: &Path) -> Result<f64, CliError> {
    s.parse::<f64>().map_err(|_| CliError::Data(format!("{}: column {col}: {s:?} is not a number", path.display())))
}

fn read_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let arr = v.as_array().ok_or_else(|| CliError::Data(format!("{}: expected an array", path.display())))?;
        Ok(arr
            .iter()
            .filter_map(|r| r.as_object())
            .map(|o| {
                o.iter()
                    .map(|(k, v)| {
                        let s = match v {
                            serde_json::Value::String(s) => s.clone(),
                            serde_json::Value::Null => String::new(),
                            other => other.to_string(),
                        };
                        (k.clone(), s)
                    })
                    .collect()
            })
            .collect())
    } else {
        let (cols, rows) = read_csv_report(path)?;
        Ok(rows.into_iter().map(|r| cols.iter().cloned().zip(r).collect()).collect())
    }
}

fn load(path: &Path) -> Result<BTreeMap<String, ModelColumns>, CliError> {
    let mut out: BTreeMap<String, ModelColumns> = BTreeMap::new();
    for row in read_rows(path)? {
        let get = |col: &str| {
            row.get(col).ok_or_else(|| CliError::Data(format!("{}: missing column {col}", path.display())))
        };
        let entry = out.entry(get("model")?.clone()).or_default();
        entry.dsc.push(parse_real(get("dsc")?, "dsc", path)?);
        for (k, m) in Measure::ALL.iter().enumerate() {
            let gc = format!("gt_{}", m.name());
            let pc = format!("pred_{}", m.name());
            entry.gt[k].push(parse_real(get(&gc)?, &gc, path)?);
            entry.pred[k].push(parse_real(get(&pc)?, &pc, path)?);
        }
    }
    Ok(out)
}

pub fn run(
    g: &GlobalOpts,
    report: Option<&Path>,
    analyses: &[Analysis],
    alpha: f64,
    log_bins: usize,
    upper_quantile: f64,
) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha {alpha} must lie in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&upper_quantile) {
        return Err(CliError::Usage(format!("upper quantile {upper_quantile} must lie in [0, 1]")));
    }
    let path: PathBuf = report.map(Path::to_path_buf).unwrap_or_else(|| g.report_path(CASES_REPORT));
    let models = load(&path)?;
    if let Some((name, _)) = models.iter().find(|(_, m)| m.dsc.len() < 2) {
        return Err(CliError::Data(format!("model {name} has fewer than 2 cases")));
    }
    if models.is_empty() {
        return Err(CliError::Data(format!("{}: no cases", path.display())));
    }
    g.ensure_out_dir()?;

    let mut analyses = analyses.to_vec();
    analyses.sort_by_key(|a| *a as u8);
    analyses.dedup();
    for a in analyses {
        match a {
            Analysis::Reproducibility => reproducibility(g, &models, alpha)?,
            Analysis::MapeCurves => mape_curves(g, &models, log_bins)?,
            Analysis::ThresholdCurves => threshold_curves(g, &models, upper_quantile)?,
        }
    }
    Ok(())
}

fn reproducibility(g: &GlobalOpts, models: &BTreeMap<String, ModelColumns>, alpha: f64) -> Result<(), CliError> {
    let n_tests = models.len() * Measure::ALL.len();
    let mut t = Table::new([
        "model",
        "measure",
        "n",
        "t_stat",
        "p_value",
        "alpha",
        "n_tests",
        "alpha_corrected",
        "reject",
        "reproducible",
        "degenerate",
        "mape_percent",
        "mape_excluded",
    ]);
    for (name, cols) in models {
        for (k, m) in Measure::ALL.iter().enumerate() {
            let r = paired_t_test(&cols.pred[k], &cols.gt[k], alpha, n_tests)?;
            let mp = mape(&cols.gt[k], &cols.pred[k]).ok();
            let excluded = cols.gt[k].iter().filter(|&&v| v == 0.0).count();
            t.push(vec![
                name.clone().into(),
                m.name().into(),
                r.n.into(),
                r.t_stat.into(),
                r.p_value.into(),
                r.alpha.into(),
                r.n_tests.into(),
                r.alpha_corrected.into(),
                r.reject.into(),
                (!r.reject).into(),
                r.degenerate.into(),
                cell_opt(mp.map(|m| m.percent)),
                excluded.into(),
            ])?;
        }
    }
    g.write(REPRODUCIBILITY_REPORT, &t)?;
    Ok(())
}

fn mape_curves(g: &GlobalOpts, models: &BTreeMap<String, ModelColumns>, log_bins: usize) -> Result<(), CliError> {
    let mut t = Table::new(["model", "measure", "bin", "bin_lo", "bin_hi", "n_cases", "mape_percent"]);
    for (name, cols) in models {
        for (k, m) in Measure::ALL.iter().enumerate() {
            let positive: Vec<f64> = cols.gt[k].iter().copied().filter(|&v| v > 0.0).collect();
            let Ok(brk) = median(&positive) else {
                warn!("{name}/{}: no positive ground-truth values; MAPE curve skipped", m.name());
                continue;
            };
            let edges = log_linear_edges(&cols.gt[k], brk, log_bins, m.threshold_step())?;
            let curve = mape_curve_with_edges(&cols.gt[k], &cols.pred[k], edges)?;
            for b in 0..curve.bin_values.len() {
                t.push(vec![
                    name.clone().into(),
                    m.name().into(),
                    b.into(),
                    curve.bin_edges[b].into(),
                    curve.bin_edges[b + 1].into(),
                    curve.bin_counts[b].into(),
                    cell_opt(curve.bin_values[b]),
                ])?;
            }
        }
    }
    if t.is_empty() {
        warn!("no MAPE curve could be computed");
        return Ok(());
    }
    g.write(MAPE_REPORT, &t)?;
    Ok(())
}

fn threshold_curves(g: &GlobalOpts, models: &BTreeMap<String, ModelColumns>, q: f64) -> Result<(), CliError> {
    let mut t = Table::new(["model", "measure", "point", "threshold", "n_cases", "median_dsc"]);
    for (name, cols) in models {
        for (k, m) in Measure::ALL.iter().enumerate() {
            let curve = threshold_subset_dsc(&cols.gt[k], &cols.dsc, m.threshold_step(), q)?;
            for p in 0..curve.bin_values.len() {
                t.push(vec![
                    name.clone().into(),
                    m.name().into(),
                    p.into(),
                    curve.bin_edges[p].into(),
                    curve.bin_counts[p].into(),
                    cell_opt(curve.bin_values[p]),
                ])?;
            }
        }
    }
    g.write(THRESHOLD_REPORT, &t)?;
    Ok(())
}
