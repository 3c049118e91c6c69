use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use petseg::io::{write_mask, write_volume, Cell, DataKind, Table};
use petseg::measures::Measure;
use petseg::phantom::{truth_measures, CohortSpec};
use petseg::volume::{ScalarVolume, Unit};

use super::par_cases;
use crate::manifest::{CaseEntry, CohortManifest};
use crate::{display, CliError, GlobalOpts};

pub const MANIFEST: &str = "manifest.toml";
pub const TRUTH_SIDECAR: &str = "truth";

fn write_case(spec: &CohortSpec, index: usize, entry: &CaseEntry, root: &Path) -> petseg::Result<Vec<Cell>> {
    let case = spec.case(index)?;
    fs::create_dir_all(root.join(&entry.case_id)).map_err(|e| petseg::Error::Io { path: root.join(&entry.case_id), source: e })?;
    // stored as F32: the sidecar describes the volume as written
    let stored: Vec<f64> = case.phantom.suv.data().iter().map(|&v| v as f32 as f64).collect();
    let suv = ScalarVolume::new(*case.phantom.suv.grid(), stored, Unit::Suv)?;
    write_volume(root.join(&entry.pet_path), &suv, DataKind::F32)?;
    write_mask(root.join(&entry.gt_path), &case.phantom.gt)?;
    for (name, mask) in &case.predictions {
        write_mask(root.join(&entry.pred_paths[name]), mask)?;
    }
    for (r, mask) in case.raters.iter().enumerate() {
        write_mask(root.join(&entry.rater_paths[r]), mask)?;
    }
    let truth = truth_measures(&suv, &case.phantom.gt);
    let mut row: Vec<Cell> = vec![entry.case_id.clone().into()];
    row.extend(Measure::ALL.iter().map(|&k| {
        if k == Measure::NLesions {
            Cell::from(truth.n_lesions)
        } else {
            Cell::from(truth.get(k))
        }
    }));
    Ok(row)
}

pub fn run(g: &GlobalOpts, spec_path: &Path, n_cases: usize) -> Result<(), CliError> {
    if n_cases == 0 {
        return Err(CliError::Usage("--n-cases must be positive".into()));
    }
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::Data(format!("{}: {e}", display(spec_path))))?;
    let mut spec: CohortSpec = toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", display(spec_path))))?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    spec.phantom_spec(0)?;
    g.ensure_out_dir()?;

    let width = n_cases.saturating_sub(1).to_string().len().max(3);
    let entries: Vec<CaseEntry> = (0..n_cases)
        .map(|i| {
            let id = format!("case_{i:0width$}");
            let dir = PathBuf::from(&id);
            CaseEntry {
                case_id: id,
                pet_path: dir.join("pet.nii.gz"),
                gt_path: dir.join("gt.nii.gz"),
                pred_paths: spec.models.iter().map(|m| (m.name.clone(), dir.join(format!("pred_{}.nii.gz", m.name)))).collect::<BTreeMap<_, _>>(),
                rater_paths: (1..=spec.raters.len()).map(|r| dir.join(format!("rater_{r}.nii.gz"))).collect(),
            }
        })
        .collect();

    let root = g.out.clone();
    let index: BTreeMap<&str, usize> = entries.iter().enumerate().map(|(i, e)| (e.case_id.as_str(), i)).collect();
    let results = par_cases(g, &entries, |e| write_case(&spec, index[e.case_id.as_str()], e, &root))?;

    let mut truth = Table::new(
        std::iter::once("case_id".to_string()).chain(Measure::ALL.iter().map(|m| m.name().to_string())),
    );
    for (id, r) in results {
        // a failed write leaves the cohort incomplete: always fatal
        truth.push(r.map_err(|e| CliError::Data(format!("case {id}: {e}")))?)?;
    }
    g.write(TRUTH_SIDECAR, &truth)?;
    let manifest = CohortManifest { cases: entries };
    let path = g.out.join(MANIFEST);
    fs::write(&path, manifest.to_toml()).map_err(|e| CliError::Data(format!("{}: {e}", display(&path))))?;
    Ok(())
}
