use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::DatasetManifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Train,
    Test,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Train => "train",
            Side::Test => "test",
        })
    }
}

/// Train/test side of every labeled image for one trait.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub trait_name: String,
    /// Seed the split was drawn with; unknown for splits read from disk.
    pub seed: Option<u64>,
    pub sides: BTreeMap<String, Side>,
}

impl SplitAssignment {
    pub fn side(&self, image_id: &str) -> Option<Side> {
        self.sides.get(image_id).copied()
    }

    pub fn ids(&self, side: Side) -> impl Iterator<Item = &str> {
        self.sides
            .iter()
            .filter(move |(_, &s)| s == side)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, side: Side) -> usize {
        self.ids(side).count()
    }

    /// CSV with header `image_id,trait,split`, rows sorted by image id.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image_id,trait,split\n");
        for (id, side) in &self.sides {
            s.push_str(&format!("{id},{},{side}\n", self.trait_name));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["image_id", "trait", "split"] {
            return Err(Error::InvalidData(
                "split file header must be 'image_id,trait,split'".into(),
            ));
        }
        let mut trait_name: Option<String> = None;
        let mut sides = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            match &trait_name {
                None => trait_name = Some(rec[1].to_string()),
                Some(t) if t != &rec[1] => return Err(Error::InvalidData("split file mixes several traits".into())),
                _ => {}
            }
            let side = match &rec[2] {
                "train" => Side::Train,
                "test" => Side::Test,
                other => return Err(Error::InvalidData(format!("bad split value '{other}'"))),
            };
            sides.insert(rec[0].to_string(), side);
        }
        let trait_name = trait_name.ok_or_else(|| Error::InvalidData("split file is empty".into()))?;
        Ok(Self {
            trait_name,
            seed: None,
            sides,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Per class, shuffles the labeled images (seeded) and sends
/// `floor(class_size * test_fraction)` of them to the test side.
pub fn stratified_split(
    manifest: &DatasetManifest,
    trait_name: &str,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidData(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let classes = manifest.classes(trait_name)?;
    let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); classes.len()];
    for (entry, label) in manifest.labeled(trait_name)? {
        by_class[label].push(&entry.image_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sides = BTreeMap::new();
    for (class, mut ids) in classes.iter().zip(by_class) {
        if ids.is_empty() {
            return Err(Error::EmptyClass {
                trait_name: trait_name.to_string(),
                class: class.clone(),
            });
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n_test = (ids.len() as f64 * test_fraction).floor() as usize;
        for (i, id) in ids.into_iter().enumerate() {
            sides.insert(id.to_string(), if i < n_test { Side::Test } else { Side::Train });
        }
    }
    Ok(SplitAssignment {
        trait_name: trait_name.to_string(),
        seed: Some(seed),
        sides,
    })
}
