use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use crate::annotations::TraitSchema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub landmark_path: Option<PathBuf>,
    /// Label per trait; `None` is an unlabeled cell.
    pub labels: BTreeMap<String, Option<String>>,
}

impl ManifestEntry {
    pub fn label(&self, trait_name: &str) -> Option<&str> {
        self.labels.get(trait_name).and_then(|l| l.as_deref())
    }
}

/// The dataset index: one row per image with its files and per-trait labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub trait_schema: TraitSchema,
}

const FIXED_COLUMNS: [&str; 3] = ["image_id", "image_path", "landmark_path"];

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, trait_schema: TraitSchema) -> Result<Self> {
        let m = Self { entries, trait_schema };
        m.validate()?;
        Ok(m)
    }

    /// Reads `image_id,image_path,landmark_path,<trait>...`. Relative paths
    /// resolve against the manifest's directory. Traits missing from `schema`
    /// get their classes inferred from the distinct labels, sorted.
    pub fn from_csv(path: &Path, schema: Option<&TraitSchema>) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &base, schema).map_err(|e| match e {
            Error::InvalidData(msg) => Error::InvalidData(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base_dir: &Path, schema: Option<&TraitSchema>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.len() < 3 || headers[..3] != FIXED_COLUMNS {
            return Err(Error::InvalidData(format!(
                "manifest header must start with '{}'",
                FIXED_COLUMNS.join(",")
            )));
        }
        let traits = &headers[3..];
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let labels = traits
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let v = rec.get(3 + i).unwrap_or("");
                    (t.clone(), (!v.is_empty()).then(|| v.to_string()))
                })
                .collect();
            entries.push(ManifestEntry {
                image_id: rec[0].to_string(),
                image_path: resolve(&rec[1]),
                landmark_path: (!rec[2].is_empty()).then(|| resolve(&rec[2])),
                labels,
            });
        }
        let mut trait_schema = TraitSchema::new();
        for t in traits {
            match schema.and_then(|s| s.classes(t)) {
                Some(classes) => trait_schema.insert(t, classes.to_vec()),
                None => {
                    let seen: BTreeSet<&str> = entries.iter().filter_map(|e| e.label(t)).collect();
                    trait_schema.insert(t, seen.into_iter().map(str::to_string).collect());
                }
            }
        }
        Self::new(entries, trait_schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for e in &self.entries {
            if e.image_id.is_empty() {
                return Err(Error::InvalidData("empty image_id".into()));
            }
            if !ids.insert(e.image_id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate image_id '{}'", e.image_id)));
            }
            for (t, l) in &e.labels {
                let classes = self
                    .trait_schema
                    .classes(t)
                    .ok_or_else(|| Error::InvalidData(format!("trait '{t}' missing from schema")))?;
                if let Some(l) = l {
                    if !classes.contains(l) {
                        return Err(Error::InvalidData(format!(
                            "image '{}': '{l}' is not a class of trait '{t}'",
                            e.image_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks that every referenced file exists; `need_landmarks` also
    /// requires a landmark file per entry.
    pub fn check_files(&self, need_landmarks: bool) -> Result<()> {
        for e in &self.entries {
            if !e.image_path.exists() {
                return Err(Error::FileNotFound(e.image_path.clone()));
            }
            match &e.landmark_path {
                Some(p) if !p.exists() && need_landmarks => {
                    return Err(Error::MissingLandmarks {
                        image_id: e.image_id.clone(),
                    })
                }
                None if need_landmarks => {
                    return Err(Error::MissingLandmarks {
                        image_id: e.image_id.clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn classes(&self, trait_name: &str) -> Result<&[String]> {
        self.trait_schema
            .classes(trait_name)
            .ok_or_else(|| Error::InvalidData(format!("unknown trait '{trait_name}'")))
    }

    pub fn entry(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    /// Entries labeled for `trait_name`, with their class index.
    pub fn labeled(&self, trait_name: &str) -> Result<Vec<(&ManifestEntry, usize)>> {
        let classes = self.classes(trait_name)?;
        Ok(self
            .entries
            .iter()
            .filter_map(|e| {
                let l = e.label(trait_name)?;
                classes.iter().position(|c| c == l).map(|i| (e, i))
            })
            .collect())
    }

    pub fn trait_names(&self) -> Vec<String> {
        self.trait_schema.trait_names().map(str::to_string).collect()
    }
}
