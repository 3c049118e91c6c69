use petseg::detection::{criterion1, criterion2, criterion3, match_lesions, Criterion, DetectionOutcome};
use petseg::io::Table;
use petseg::volume::connected_components;

use super::{load_case, par_cases};
use crate::{as_reported, cell_opt, finish_cases, CliError, GlobalOpts};

pub const CASES_REPORT: &str = "detect_cases";
pub const SUMMARY_REPORT: &str = "detect_summary";

pub fn run(g: &GlobalOpts, criteria: &[u8], threshold: f64) -> Result<(), CliError> {
    let mut crits = criteria
        .iter()
        .map(|&n| Criterion::from_number(n).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    crits.sort_by_key(|c| c.number());
    crits.dedup();
    if crits.is_empty() {
        return Err(CliError::Usage("no detection criteria selected".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::Usage(format!("IoU threshold {threshold} must lie in (0, 1]")));
    }
    let manifest = g.load_manifest()?;
    g.ensure_out_dir()?;
    let conn = g.connectivity;

    let results = par_cases(g, &manifest.cases, |c| {
        let case = load_case(c, g, true)?;
        let gt_cc = connected_components(&case.gt, conn);
        case.preds
            .iter()
            .map(|(name, pred)| {
                let pred_cc = connected_components(pred, conn);
                let table = match_lesions(&gt_cc, &pred_cc)?;
                let outcomes = crits
                    .iter()
                    .map(|c| match c {
                        Criterion::C1 => criterion1(&gt_cc, &pred_cc),
                        Criterion::C2 => criterion2(&table, threshold),
                        Criterion::C3 => criterion3(&table, &gt_cc, &pred_cc, &case.pet),
                    })
                    .collect::<petseg::Result<Vec<_>>>()?;
                Ok((name.clone(), outcomes))
            })
            .collect::<petseg::Result<Vec<(String, Vec<DetectionOutcome>)>>>()
    })?;
    let (ok, _) = finish_cases(g, "detect", results)?;

    let mut cases = Table::new([
        "case_id", "model", "criterion", "tp", "fp", "fn", "fn_strict", "n_gt", "n_pred", "sensitivity",
    ]);
    for (id, models) in &ok {
        for (model, outcomes) in models {
            for o in outcomes {
                cases.push(vec![
                    id.clone().into(),
                    model.clone().into(),
                    (o.criterion.number() as usize).into(),
                    o.tp.into(),
                    o.fp.into(),
                    o.fn_effective.into(),
                    o.fn_strict.into(),
                    o.n_gt.into(),
                    o.n_pred.into(),
                    cell_opt(o.sensitivity),
                ])?;
            }
        }
    }
    g.write(CASES_REPORT, &cases)?;

    let mut summary = Table::new([
        "model",
        "criterion",
        "n_cases",
        "n_no_lesion",
        "sensitivity_median",
        "sensitivity_q25",
        "sensitivity_q75",
        "fp_median",
        "fp_q25",
        "fp_q75",
    ]);
    let mut models: Vec<&str> = ok.iter().flat_map(|(_, m)| m.iter().map(|(n, _)| n.as_str())).collect();
    models.sort_unstable();
    models.dedup();
    for model in models {
        for c in &crits {
            let outcomes: Vec<&DetectionOutcome> = ok
                .iter()
                .flat_map(|(_, m)| m.iter().filter(|(n, _)| n == model))
                .flat_map(|(_, o)| o.iter().filter(|o| o.criterion == *c))
                .collect();
            let sens: Vec<f64> = outcomes.iter().filter_map(|o| o.sensitivity).map(as_reported).collect();
            let fp: Vec<f64> = outcomes.iter().map(|o| o.fp as f64).collect();
            let s = petseg::stats::summary(&sens).ok();
            let f = petseg::stats::summary(&fp)?;
            summary.push(vec![
                model.into(),
                (c.number() as usize).into(),
                outcomes.len().into(),
                (outcomes.len() - sens.len()).into(),
                cell_opt(s.map(|s| s.median)),
                cell_opt(s.map(|s| s.q25)),
                cell_opt(s.map(|s| s.q75)),
                f.median.into(),
                f.q25.into(),
                f.q75.into(),
            ])?;
        }
    }
    g.write(SUMMARY_REPORT, &summary)?;
    Ok(())
}
