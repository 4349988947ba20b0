//! Crowd-sourced label handling: rater filtering, consensus labels, Fleiss'
//! kappa and agreement bands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered class names per trait. Class order defines the class indices used
/// for training.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraitSchema {
    traits: BTreeMap<String, Vec<String>>,
}

impl TraitSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_trait<S: Into<String>>(mut self, name: &str, classes: impl IntoIterator<Item = S>) -> Self {
        self.insert(name, classes.into_iter().map(Into::into).collect());
        self
    }

    pub fn insert(&mut self, name: &str, classes: Vec<String>) {
        self.traits.insert(name.to_string(), classes);
    }

    pub fn classes(&self, trait_name: &str) -> Option<&[String]> {
        self.traits.get(trait_name).map(Vec::as_slice)
    }

    pub fn class_index(&self, trait_name: &str, label: &str) -> Option<usize> {
        self.classes(trait_name)?.iter().position(|c| c == label)
    }

    pub fn trait_names(&self) -> impl Iterator<Item = &str> {
        self.traits.keys().map(String::as_str)
    }

    pub fn contains(&self, trait_name: &str) -> bool {
        self.traits.contains_key(trait_name)
    }

    /// The nine binary traits of the face attribute dataset and their classes.
    pub fn fad() -> Self {
        Self::new()
            .with_trait("gender", ["Male", "Female"])
            .with_trait("ethnicity", ["White", "Other"])
            .with_trait("hair_color", ["Dark", "Bright"])
            .with_trait("makeup", ["Wears", "Does not wear"])
            .with_trait("age", ["Young", "Elder"])
            .with_trait("emotions", ["Joy", "Other"])
            .with_trait("attractive", ["Yes", "No"])
            .with_trait("humorous", ["Yes", "No"])
            .with_trait("chubby", ["Yes", "No"])
    }
}

/// Traits with an objectively checkable answer, used by the peer-disagreement filter.
pub const FAD_OBJECTIVE_TRAITS: [&str; 5] = ["gender", "ethnicity", "age", "makeup", "hair_color"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaterResponse {
    pub rater_id: String,
    pub image_id: String,
    pub trait_name: String,
    pub label: String,
    pub attention_checks_passed: bool,
}

impl RaterResponse {
    pub fn new(rater: &str, image: &str, trait_name: &str, label: &str, passed: bool) -> Self {
        Self {
            rater_id: rater.into(),
            image_id: image.into(),
            trait_name: trait_name.into(),
            label: label.into(),
            attention_checks_passed: passed,
        }
    }
}

/// Reads a response CSV with header `rater_id,image_id,trait,label,attention_passed`.
/// `attention_passed` accepts `true/false`, `1/0` or `yes/no`.
pub fn read_responses(path: &Path) -> Result<Vec<RaterResponse>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = ["rater_id", "image_id", "trait", "label", "attention_passed"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidData(format!(
            "{}: expected header '{}'",
            path.display(),
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let passed = match rec[4].to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => {
                return Err(Error::InvalidData(format!(
                    "{} row {}: bad attention_passed value '{other}'",
                    path.display(),
                    i + 2
                )))
            }
        };
        out.push(RaterResponse::new(&rec[0], &rec[1], &rec[2], &rec[3], passed));
    }
    Ok(out)
}

/// Checks every response label against the schema's class list.
pub fn validate_responses(responses: &[RaterResponse], schema: &TraitSchema) -> Result<()> {
    for r in responses {
        let classes = schema
            .classes(&r.trait_name)
            .ok_or_else(|| Error::InvalidData(format!("unknown trait '{}'", r.trait_name)))?;
        if !classes.contains(&r.label) {
            return Err(Error::InvalidData(format!(
                "label '{}' is not a class of trait '{}'",
                r.label, r.trait_name
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterOutcome {
    pub kept: Vec<RaterResponse>,
    /// Every rejected rater.
    pub rejected: BTreeSet<String>,
    pub failed_attention: BTreeSet<String>,
    pub disagreed: BTreeSet<String>,
}

/// Drops raters who failed an attention check, then raters who disagree
/// with their peers' majority on more than a third of their objective-trait
/// labels.
///
/// A label counts toward a rater's total only when the other raters of that
/// image and trait have a strict majority label. The first round compares
/// against all input responses; removal repeats against the surviving
/// responses until no further rater is dropped, so the result is a fixed
/// point and filtering again changes nothing.
pub fn filter_raters<S: AsRef<str>>(responses: &[RaterResponse], objective_traits: &[S]) -> FilterOutcome {
    let objective: BTreeSet<&str> = objective_traits.iter().map(AsRef::as_ref).collect();
    let failed_attention: BTreeSet<String> = responses
        .iter()
        .filter(|r| !r.attention_checks_passed)
        .map(|r| r.rater_id.clone())
        .collect();

    let mut disagreed = BTreeSet::new();
    let mut baseline: Vec<&RaterResponse> = responses.iter().collect();
    loop {
        let survivors: Vec<&RaterResponse> = responses
            .iter()
            .filter(|r| !failed_attention.contains(&r.rater_id) && !disagreed.contains(&r.rater_id))
            .collect();
        let newly = disagreeing_raters(&baseline, &survivors, &objective);
        if newly.is_empty() && baseline.len() == survivors.len() {
            break;
        }
        disagreed.extend(newly);
        baseline = survivors;
    }

    let rejected: BTreeSet<String> = failed_attention.union(&disagreed).cloned().collect();
    let kept = responses
        .iter()
        .filter(|r| !rejected.contains(&r.rater_id))
        .cloned()
        .collect();
    FilterOutcome {
        kept,
        rejected,
        failed_attention,
        disagreed,
    }
}

/// Raters among `candidates` whose disagreement rate against `baseline`
/// peers exceeds one third.
fn disagreeing_raters(
    baseline: &[&RaterResponse],
    candidates: &[&RaterResponse],
    objective: &BTreeSet<&str>,
) -> BTreeSet<String> {
    let mut groups: HashMap<(&str, &str), Vec<&RaterResponse>> = HashMap::new();
    for r in baseline.iter().filter(|r| objective.contains(r.trait_name.as_str())) {
        groups
            .entry((r.image_id.as_str(), r.trait_name.as_str()))
            .or_default()
            .push(r);
    }
    // rater -> (disagreements, comparable labels)
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in candidates.iter().filter(|r| objective.contains(r.trait_name.as_str())) {
        let Some(group) = groups.get(&(r.image_id.as_str(), r.trait_name.as_str())) else {
            continue;
        };
        let peers: Vec<&str> = group
            .iter()
            .filter(|p| p.rater_id != r.rater_id)
            .map(|p| p.label.as_str())
            .collect();
        let Some(majority) = strict_majority(&peers) else {
            continue;
        };
        let t = tally.entry(r.rater_id.as_str()).or_default();
        t.1 += 1;
        if majority != r.label {
            t.0 += 1;
        }
    }
    tally
        .into_iter()
        .filter(|(_, (bad, total))| 3 * bad > *total)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// The label held by more than half of `labels`, if any.
fn strict_majority<'a>(labels: &[&'a str]) -> Option<&'a str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts.into_iter().find(|&(_, c)| 2 * c > labels.len()).map(|(l, _)| l)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Consensus {
    Label(String),
    Unlabeled,
}

impl Consensus {
    pub fn label(&self) -> Option<&str> {
        match self {
            Consensus::Label(l) => Some(l),
            Consensus::Unlabeled => None,
        }
    }
}

/// Majority vote per image for one trait. An image whose most common label
/// has fewer than two votes, or is tied, is [`Consensus::Unlabeled`].
pub fn aggregate_labels(responses: &[RaterResponse], trait_name: &str) -> BTreeMap<String, Consensus> {
    let mut per_image: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.trait_name == trait_name) {
        *per_image.entry(&r.image_id).or_default().entry(&r.label).or_default() += 1;
    }
    per_image
        .into_iter()
        .map(|(image, counts)| {
            let top = counts.values().copied().max().unwrap_or(0);
            let leaders: Vec<&str> = counts.iter().filter(|(_, &c)| c == top).map(|(&l, _)| l).collect();
            let consensus = if top >= 2 && leaders.len() == 1 {
                Consensus::Label(leaders[0].to_string())
            } else {
                Consensus::Unlabeled
            };
            (image.to_string(), consensus)
        })
        .collect()
}

/// Subjects x categories tallies with the same number of raters per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    counts: Vec<Vec<u32>>,
    n_categories: usize,
    n_raters: u32,
}

impl RatingMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self> {
        let first = counts
            .first()
            .ok_or_else(|| Error::InvalidRatings("no subjects".into()))?;
        let n_categories = first.len();
        if n_categories == 0 {
            return Err(Error::InvalidRatings("no categories".into()));
        }
        let n_raters: u32 = first.iter().sum();
        for (i, row) in counts.iter().enumerate() {
            if row.len() != n_categories {
                return Err(Error::InvalidRatings(format!("row {i} has {} categories", row.len())));
            }
            let s: u32 = row.iter().sum();
            if s != n_raters {
                return Err(Error::InvalidRatings(format!(
                    "row {i} sums to {s}, expected {n_raters} raters"
                )));
            }
        }
        Ok(Self {
            counts,
            n_categories,
            n_raters,
        })
    }

    /// Builds the matrix for one trait. Subjects whose rater count differs
    /// from the most common count are left out; their number is returned.
    pub fn from_responses(responses: &[RaterResponse], trait_name: &str, classes: &[String]) -> Result<(Self, usize)> {
        let mut rows: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for r in responses.iter().filter(|r| r.trait_name == trait_name) {
            let j = classes.iter().position(|c| *c == r.label).ok_or_else(|| {
                Error::InvalidData(format!("label '{}' is not a class of trait '{trait_name}'", r.label))
            })?;
            rows.entry(&r.image_id).or_insert_with(|| vec![0; classes.len()])[j] += 1;
        }
        let mut freq: BTreeMap<u32, usize> = BTreeMap::new();
        for row in rows.values() {
            *freq.entry(row.iter().sum()).or_default() += 1;
        }
        // most common rater count, larger count on ties
        let n = freq
            .iter()
            .max_by_key(|&(&n, &f)| (f, n))
            .map(|(&n, _)| n)
            .ok_or_else(|| Error::InvalidRatings(format!("no responses for trait '{trait_name}'")))?;
        let total = rows.len();
        let kept: Vec<Vec<u32>> = rows.into_values().filter(|r| r.iter().sum::<u32>() == n).collect();
        let excluded = total - kept.len();
        Ok((Self::new(kept)?, excluded))
    }

    pub fn n_subjects(&self) -> usize {
        self.counts.len()
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_raters_per_subject(&self) -> u32 {
        self.n_raters
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }
}

/// Fleiss' kappa: `(P - Pe) / (1 - Pe)` with per-subject agreement
/// `P_i = sum_j n_ij (n_ij - 1) / (n (n - 1))`, `P` their mean, and
/// `Pe = sum_j p_j^2` over category proportions `p_j`. When every rating
/// falls in one category (`Pe = 1`) the result is defined as 1.
pub fn fleiss_kappa(m: &RatingMatrix) -> Result<f64> {
    let n = m.n_raters as f64;
    if m.n_raters < 2 {
        return Err(Error::TooFewRaters(m.n_raters as usize));
    }
    let subjects = m.n_subjects() as f64;
    let mut col_totals = vec![0u64; m.n_categories];
    let mut p_sum = 0.0;
    for row in &m.counts {
        let mut agree = 0u64;
        for (j, &c) in row.iter().enumerate() {
            col_totals[j] += c as u64;
            agree += c as u64 * (c as u64).saturating_sub(1);
        }
        p_sum += agree as f64 / (n * (n - 1.0));
    }
    let p_bar = p_sum / subjects;
    let pe: f64 = col_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (subjects * n);
            p * p
        })
        .sum();
    if pe == 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - pe) / (1.0 - pe))
}

/// Landis-Koch agreement bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgreementBand {
    Poor,
    SlightAgreement,
    FairAgreement,
    ModerateAgreement,
    SubstantialAgreement,
    AlmostPerfectAgreement,
}

impl AgreementBand {
    pub fn abbreviation(self) -> &'static str {
        match self {
            AgreementBand::Poor => "PA",
            AgreementBand::SlightAgreement => "SLA",
            AgreementBand::FairAgreement => "FA",
            AgreementBand::ModerateAgreement => "MA",
            AgreementBand::SubstantialAgreement => "SA",
            AgreementBand::AlmostPerfectAgreement => "APA",
        }
    }
}

impl fmt::Display for AgreementBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AgreementBand::Poor => "Poor agreement",
            AgreementBand::SlightAgreement => "Slight agreement",
            AgreementBand::FairAgreement => "Fair agreement",
            AgreementBand::ModerateAgreement => "Moderate agreement",
            AgreementBand::SubstantialAgreement => "Substantial agreement",
            AgreementBand::AlmostPerfectAgreement => "Almost perfect agreement",
        };
        f.write_str(name)
    }
}

/// `< 0` poor, `[0, 0.2]` slight, `(0.2, 0.4]` fair, `(0.4, 0.6]` moderate,
/// `(0.6, 0.8]` substantial, `(0.8, 1]` almost perfect.
pub fn classify_agreement(kappa: f64) -> Result<AgreementBand> {
    if !(-1.0..=1.0).contains(&kappa) {
        return Err(Error::KappaOutOfRange(kappa));
    }
    Ok(match kappa {
        k if k < 0.0 => AgreementBand::Poor,
        k if k <= 0.2 => AgreementBand::SlightAgreement,
        k if k <= 0.4 => AgreementBand::FairAgreement,
        k if k <= 0.6 => AgreementBand::ModerateAgreement,
        k if k <= 0.8 => AgreementBand::SubstantialAgreement,
        _ => AgreementBand::AlmostPerfectAgreement,
    })
}

/// Share of each class among `labels`, in `classes` order.
pub fn class_distribution<S: AsRef<str>>(labels: &[S], classes: &[String]) -> Result<Vec<(String, f64)>> {
    if labels.is_empty() {
        return Err(Error::InvalidData("no labels to summarize".into()));
    }
    let mut counts = vec![0usize; classes.len()];
    for l in labels {
        let j = classes
            .iter()
            .position(|c| c == l.as_ref())
            .ok_or_else(|| Error::InvalidData(format!("label '{}' is not a known class", l.as_ref())))?;
        counts[j] += 1;
    }
    let n = labels.len() as f64;
    Ok(classes
        .iter()
        .cloned()
        .zip(counts.into_iter().map(|c| c as f64 / n))
        .collect())
}

/// Agreement summary for one trait.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitAgreement {
    pub trait_name: String,
    pub kappa: f64,
    pub band: AgreementBand,
    pub n_subjects: usize,
    pub excluded_subjects: usize,
    pub distribution: Vec<(String, f64)>,
}

/// Kappa, band and consensus-label distribution of one trait over the
/// (already filtered) responses.
pub fn trait_agreement(responses: &[RaterResponse], trait_name: &str, classes: &[String]) -> Result<TraitAgreement> {
    let (matrix, excluded) = RatingMatrix::from_responses(responses, trait_name, classes)?;
    let kappa = fleiss_kappa(&matrix)?;
    let labels: Vec<String> = aggregate_labels(responses, trait_name)
        .into_values()
        .filter_map(|c| c.label().map(str::to_string))
        .collect();
    let distribution = if labels.is_empty() {
        classes.iter().map(|c| (c.clone(), 0.0)).collect()
    } else {
        class_distribution(&labels, classes)?
    };
    Ok(TraitAgreement {
        trait_name: trait_name.to_string(),
        kappa,
        band: classify_agreement(kappa.clamp(-1.0, 1.0))?,
        n_subjects: matrix.n_subjects(),
        excluded_subjects: excluded,
        distribution,
    })
}

/// Builds a schema from the distinct labels seen per trait, sorted.
pub fn infer_schema(responses: &[RaterResponse]) -> TraitSchema {
    let mut seen: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in responses {
        seen.entry(&r.trait_name).or_default().insert(&r.label);
    }
    let mut schema = TraitSchema::new();
    for (t, labels) in seen {
        schema.insert(t, labels.into_iter().map(str::to_string).collect());
    }
    schema
}
