use std::fs;

use petseg::agreement::{fleiss_kappa, fleiss_kappa_in_box, pairwise_dsc, staple, RaterStack, StapleOptions};
use petseg::io::{read_mask, write_mask, Table};
use petseg::metrics::dsc;
use petseg::stats::summary;
use petseg::volume::BoundingBox;

use super::par_cases;
use crate::manifest::ensure_exist;
use crate::{finish_cases, CliError, GlobalOpts};

pub const CASES_REPORT: &str = "agreement_cases";
pub const SUMMARY_REPORT: &str = "agreement_summary";
pub const STAPLE_REPORT: &str = "agreement_staple";

struct StapleRow {
    dsc: f64,
    sensitivity: f64,
    specificity: f64,
}

struct CaseResult {
    n_raters: usize,
    kappa: petseg::agreement::KappaResult,
    pair_mean: f64,
    pair_sd: f64,
    staple: Option<(usize, bool, Vec<StapleRow>)>,
}

pub fn run(g: &GlobalOpts, with_staple: bool, crop: Option<&[usize]>) -> Result<(), CliError> {
    let bbox = match crop {
        Some(&[x0, y0, z0, x1, y1, z1]) => Some(BoundingBox { min: [x0, y0, z0], max: [x1, y1, z1] }),
        Some(_) => return Err(CliError::Usage("--crop-box takes six integers".into())),
        None => None,
    };
    let manifest = g.load_manifest()?;
    g.ensure_out_dir()?;
    let staple_dir = g.out.join("staple");
    if with_staple {
        fs::create_dir_all(&staple_dir).map_err(|e| CliError::Data(format!("{}: {e}", staple_dir.display())))?;
    }

    let results = par_cases(g, &manifest.cases, |c| {
        ensure_exist(&c.rater_paths)?;
        let masks = c.rater_paths.iter().map(read_mask).collect::<petseg::Result<Vec<_>>>()?;
        let stack = RaterStack::new(masks)?;
        let kappa = match &bbox {
            Some(b) => fleiss_kappa_in_box(&stack, b)?,
            None => fleiss_kappa(&stack),
        };
        let m = pairwise_dsc(&stack);
        let n = stack.n_raters();
        let pairs: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| m[i][j]).collect();
        let s = summary(&pairs)?;
        let staple = if with_staple {
            let r = staple(&stack, StapleOptions::default());
            write_mask(staple_dir.join(format!("{}.nii.gz", c.case_id)), &r.consensus)?;
            let rows = stack
                .masks()
                .iter()
                .enumerate()
                .map(|(j, mask)| {
                    Ok(StapleRow {
                        dsc: dsc(&r.consensus, mask)?,
                        sensitivity: r.sensitivities[j],
                        specificity: r.specificities[j],
                    })
                })
                .collect::<petseg::Result<Vec<_>>>()?;
            Some((r.iterations, r.converged, rows))
        } else {
            None
        };
        Ok(CaseResult { n_raters: n, kappa, pair_mean: s.mean, pair_sd: s.sd, staple })
    })?;
    let (ok, _) = finish_cases(g, "agreement", results)?;

    let mut cases = Table::new([
        "case_id", "n_raters", "kappa", "p_bar", "p_e", "band", "degenerate", "pairwise_dsc_mean", "pairwise_dsc_sd",
    ]);
    for (id, r) in &ok {
        cases.push(vec![
            id.clone().into(),
            r.n_raters.into(),
            r.kappa.kappa.into(),
            r.kappa.p_bar.into(),
            r.kappa.p_e.into(),
            r.kappa.band.to_string().into(),
            r.kappa.degenerate.into(),
            r.pair_mean.into(),
            r.pair_sd.into(),
        ])?;
    }
    g.write(CASES_REPORT, &cases)?;

    let kappas: Vec<f64> = ok.iter().map(|(_, r)| r.kappa.kappa).collect();
    let k = summary(&kappas)?;
    let p = summary(&ok.iter().map(|(_, r)| r.pair_mean).collect::<Vec<_>>())?;
    let mut s = Table::new(["n_cases", "kappa_mean", "kappa_sd", "band", "pairwise_dsc_mean", "pairwise_dsc_sd"]);
    s.push(vec![
        ok.len().into(),
        k.mean.into(),
        k.sd.into(),
        petseg::agreement::KappaBand::of(k.mean).to_string().into(),
        p.mean.into(),
        p.sd.into(),
    ])?;
    g.write(SUMMARY_REPORT, &s)?;

    if with_staple {
        let mut t = Table::new(["case_id", "rater", "dsc_vs_staple", "sensitivity", "specificity", "iterations", "converged"]);
        for (id, r) in &ok {
            if let Some((iters, conv, rows)) = &r.staple {
                for (j, row) in rows.iter().enumerate() {
                    t.push(vec![
                        id.clone().into(),
                        (j + 1).into(),
                        row.dsc.into(),
                        row.sensitivity.into(),
                        row.specificity.into(),
                        (*iters).into(),
                        (*conv).into(),
                    ])?;
                }
            }
        }
        g.write(STAPLE_REPORT, &t)?;
    }
    Ok(())
}
