use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub pet_path: PathBuf,
    pub gt_path: PathBuf,
    #[serde(default)]
    pub pred_paths: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rater_paths: Vec<PathBuf>,
}

/// Cohort manifest. Relative paths are resolved against the directory of
/// the manifest file on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub cases: Vec<CaseEntry>,
}

impl CohortManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut m: CohortManifest =
            toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for c in &mut m.cases {
            c.pet_path = base.join(&c.pet_path);
            c.gt_path = base.join(&c.gt_path);
            for p in c.pred_paths.values_mut() {
                *p = base.join(&*p);
            }
            for p in &mut c.rater_paths {
                *p = base.join(&*p);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.cases.is_empty() {
            return Err(CliError::Data("manifest lists no cases".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.cases {
            if !seen.insert(c.case_id.as_str()) {
                return Err(CliError::Data(format!("duplicate case_id {:?}", c.case_id)));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Fails with the first referenced file that does not exist.
pub fn ensure_exist<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> petseg::Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(petseg::Error::Io {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_relative_paths_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"
[[cases]]
case_id = "a"
pet_path = "a/pet.nii"
gt_path = "/abs/gt.nii"
[cases.pred_paths]
unet = "a/pred.nii"
"#;
        let p = dir.path().join("m.toml");
        fs::write(&p, text).unwrap();
        let m = CohortManifest::load(&p).unwrap();
        assert_eq!(m.cases[0].pet_path, dir.path().join("a/pet.nii"));
        assert_eq!(m.cases[0].gt_path, PathBuf::from("/abs/gt.nii"));
        assert_eq!(m.cases[0].pred_paths["unet"], dir.path().join("a/pred.nii"));

        fs::write(&p, format!("{text}\n{}", text.replace("[cases.pred_paths]\nunet = \"a/pred.nii\"", ""))).unwrap();
        assert!(matches!(CohortManifest::load(&p), Err(CliError::Data(_))));
    }
}
