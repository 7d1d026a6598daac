use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub city: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub split: Split,
}

/// Dataset listing stored as TOML `[[entry]]` tables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, rename = "entry")]
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Malformed(format!("manifest: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Paths tagged `split`, resolved against `base`.
    pub fn paths(&self, split: Split, base: &Path) -> Vec<PathBuf> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| base.join(&e.path))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_filter() {
        let m = Manifest {
            entries: vec![
                ManifestEntry {
                    city: "synth".into(),
                    path: "train.trf".into(),
                    split: Split::Train,
                },
                ManifestEntry {
                    city: "synth".into(),
                    path: "test.trf".into(),
                    split: Split::Test,
                },
            ],
        };
        let text = m.to_toml();
        assert!(text.contains("[[entry]]"));
        assert_eq!(Manifest::from_toml(&text).unwrap(), m);
        assert_eq!(m.paths(Split::Test, Path::new("d")), vec![PathBuf::from("d/test.trf")]);
    }

    #[test]
    fn unknown_split_is_malformed() {
        let text = "[[entry]]\ncity = \"x\"\npath = \"a\"\nsplit = \"dev\"\n";
        assert!(matches!(Manifest::from_toml(text), Err(Error::Malformed(_))));
    }
}
