use log::info;
use petseg::io::{Cell, Table};
use petseg::measures::{lesion_measures, LesionMeasures, Measure};
use petseg::metrics::{dsc, fnv, fpv, SegScores};
use petseg::volume::connected_components;

use super::{load_case, par_cases};
use crate::{finish_cases, push_summary, CliError, GlobalOpts, SUMMARY_COLUMNS};

pub const CASES_REPORT: &str = "evaluate_cases";
pub const SUMMARY_REPORT: &str = "evaluate_summary";
pub const GT_MODEL: &str = "ground_truth";

struct ModelResult {
    model: String,
    scores: SegScores,
    measures: LesionMeasures,
}

struct CaseResult {
    gt: LesionMeasures,
    models: Vec<ModelResult>,
}

pub fn case_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["case_id", "model", "dsc", "fpv_ml", "fnv_ml"].map(String::from).to_vec();
    for prefix in ["gt", "pred"] {
        cols.extend(Measure::ALL.iter().map(|m| format!("{prefix}_{}", m.name())));
    }
    cols
}

fn measure_cells(m: &LesionMeasures) -> Vec<Cell> {
    Measure::ALL
        .iter()
        .map(|&k| if k == Measure::NLesions { Cell::from(m.n_lesions) } else { Cell::from(m.get(k)) })
        .collect()
}

pub fn run(g: &GlobalOpts) -> Result<(), CliError> {
    let manifest = g.load_manifest()?;
    g.ensure_out_dir()?;
    let conn = g.connectivity;
    let results = par_cases(g, &manifest.cases, |c| {
        let case = load_case(c, g, true)?;
        let gt_cc = connected_components(&case.gt, conn);
        let gt = lesion_measures(&case.pet, &case.gt, &gt_cc)?;
        let models = case
            .preds
            .iter()
            .map(|(name, pred)| {
                let pred_cc = connected_components(pred, conn);
                let scores =
                    SegScores { dsc: dsc(&case.gt, pred)?, fpv_ml: fpv(&case.gt, &pred_cc)?, fnv_ml: fnv(&gt_cc, pred)? };
                let measures = lesion_measures(&case.pet, pred, &pred_cc)?;
                Ok(ModelResult { model: name.clone(), scores, measures })
            })
            .collect::<petseg::Result<Vec<_>>>()?;
        Ok(CaseResult { gt, models })
    })?;
    let (ok, _) = finish_cases(g, "evaluate", results)?;

    let mut cases = Table::new(case_columns());
    for (id, r) in &ok {
        for m in &r.models {
            let mut row: Vec<Cell> =
                vec![id.clone().into(), m.model.clone().into(), m.scores.dsc.into(), m.scores.fpv_ml.into(), m.scores.fnv_ml.into()];
            row.extend(measure_cells(&r.gt));
            row.extend(measure_cells(&m.measures));
            cases.push(row)?;
        }
    }
    let path = g.write(CASES_REPORT, &cases)?;
    info!("wrote {}", path.display());

    let mut summary = Table::new(SUMMARY_COLUMNS);
    for &k in &Measure::ALL {
        let v: Vec<f64> = ok.iter().map(|(_, r)| r.gt.get(k)).collect();
        push_summary(&mut summary, GT_MODEL, k.name(), &v)?;
    }
    let mut models: Vec<&str> = ok.iter().flat_map(|(_, r)| r.models.iter().map(|m| m.model.as_str())).collect();
    models.sort_unstable();
    models.dedup();
    for model in models {
        let rows: Vec<&ModelResult> =
            ok.iter().flat_map(|(_, r)| r.models.iter().filter(|m| m.model == model)).collect();
        let col = |f: &dyn Fn(&ModelResult) -> f64| rows.iter().map(|m| f(m)).collect::<Vec<f64>>();
        push_summary(&mut summary, model, "dsc", &col(&|m| m.scores.dsc))?;
        push_summary(&mut summary, model, "fpv_ml", &col(&|m| m.scores.fpv_ml))?;
        push_summary(&mut summary, model, "fnv_ml", &col(&|m| m.scores.fnv_ml))?;
        for &k in &Measure::ALL {
            push_summary(&mut summary, model, k.name(), &col(&|m| m.measures.get(k)))?;
        }
    }
    g.write(SUMMARY_REPORT, &summary)?;
    Ok(())
}
