//! Study records, CSV ingestion, design balancing and stratified splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng::{rng_for, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("unknown column '{0}' in header")]
    UnknownColumn(String),
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("duplicate column '{0}' in header")]
    DuplicateColumn(String),
    #[error("header columns are out of order; expected `{expected}`")]
    HeaderOrder { expected: String },
    #[error("input has no header row")]
    NoHeader,
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: '{value}' is not an integer")]
    NotInteger {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: score {value} is not in the allowed set {allowed}")]
    InvalidScore {
        row: usize,
        column: String,
        value: i64,
        allowed: String,
    },
    #[error("row {row}, column sample_size: {value} is below 1")]
    InvalidSampleSize { row: usize, value: i64 },
    #[error("row {row}, column design: unknown design '{value}'")]
    UnknownDesign { row: usize, value: String },
    #[error("row {row}: malformed CSV: {message}")]
    Csv { row: usize, message: String },
    #[error("design '{0}' has no records")]
    MissingDesign(DesignType),
    #[error("design '{design}' has {count} record(s); at least {needed} required")]
    StratumTooSmall {
        design: DesignType,
        count: usize,
        needed: usize,
    },
    #[error("fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("dataset is empty")]
    Empty,
    #[error("need at least {needed} records, found {found}")]
    TooFewRecords { needed: usize, found: usize },
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
}

/// The five qualitative research designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignType {
    CaseStudy,
    GroundedTheory,
    Phenomenology,
    #[serde(rename = "narrative")]
    NarrativeResearch,
    #[serde(rename = "ethnographic")]
    EthnographicResearch,
}

impl DesignType {
    pub const ALL: [DesignType; 5] = [
        DesignType::CaseStudy,
        DesignType::GroundedTheory,
        DesignType::Phenomenology,
        DesignType::NarrativeResearch,
        DesignType::EthnographicResearch,
    ];

    /// Column order of the one-hot encoding: alphabetical by label.
    pub const ENCODING_ORDER: [DesignType; 5] = [
        DesignType::CaseStudy,
        DesignType::EthnographicResearch,
        DesignType::GroundedTheory,
        DesignType::NarrativeResearch,
        DesignType::Phenomenology,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DesignType::CaseStudy => "case_study",
            DesignType::GroundedTheory => "grounded_theory",
            DesignType::Phenomenology => "phenomenology",
            DesignType::NarrativeResearch => "narrative",
            DesignType::EthnographicResearch => "ethnographic",
        }
    }

    pub fn encoding_index(self) -> usize {
        Self::ENCODING_ORDER
            .iter()
            .position(|d| *d == self)
            .expect("every design has an encoding column")
    }

    fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DesignType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DesignType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DesignType::ALL
            .into_iter()
            .find(|d| d.label() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// The ten ordinal methodology metrics, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    ResearchScope,
    ResearcherCompetence,
    InformationPower,
    InterviewCount,
    InterviewDuration,
    ObservationDuration,
    Homogeneity,
    ParticipantOriginality,
    DataVariety,
    DataQuality,
}

impl Metric {
    pub const COUNT: usize = 10;

    pub const ALL: [Metric; Metric::COUNT] = [
        Metric::ResearchScope,
        Metric::ResearcherCompetence,
        Metric::InformationPower,
        Metric::InterviewCount,
        Metric::InterviewDuration,
        Metric::ObservationDuration,
        Metric::Homogeneity,
        Metric::ParticipantOriginality,
        Metric::DataVariety,
        Metric::DataQuality,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Metric::ResearchScope => "research_scope",
            Metric::ResearcherCompetence => "researcher_competence",
            Metric::InformationPower => "information_power",
            Metric::InterviewCount => "interview_count",
            Metric::InterviewDuration => "interview_duration",
            Metric::ObservationDuration => "observation_duration",
            Metric::Homogeneity => "homogeneity",
            Metric::ParticipantOriginality => "participant_originality",
            Metric::DataVariety => "data_variety",
            Metric::DataQuality => "data_quality",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_key(key: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.key() == key)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let key = String::deserialize(d)?;
        Metric::from_key(&key).ok_or_else(|| de::Error::custom(format!("unknown metric '{key}'")))
    }
}

/// The ten scores of one study, indexed by [`Metric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scores(pub [u32; Metric::COUNT]);

impl Scores {
    pub fn uniform(value: u32) -> Self {
        Scores([value; Metric::COUNT])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Metric, u32)> + '_ {
        Metric::ALL.into_iter().map(move |m| (m, self.0[m.index()]))
    }
}

impl Index<Metric> for Scores {
    type Output = u32;
    fn index(&self, m: Metric) -> &u32 {
        &self.0[m.index()]
    }
}

impl IndexMut<Metric> for Scores {
    fn index_mut(&mut self, m: Metric) -> &mut u32 {
        &mut self.0[m.index()]
    }
}

impl Serialize for Scores {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(Metric::COUNT))?;
        for (m, v) in self.iter() {
            map.serialize_entry(m.key(), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Scores {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ScoresVisitor;
        impl<'de> Visitor<'de> for ScoresVisitor {
            type Value = Scores;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map with the ten metric scores")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Scores, A::Error> {
                let mut seen = [None; Metric::COUNT];
                while let Some(key) = map.next_key::<String>()? {
                    let m = Metric::from_key(&key)
                        .ok_or_else(|| de::Error::custom(format!("unknown metric '{key}'")))?;
                    if seen[m.index()].is_some() {
                        return Err(de::Error::custom(format!("duplicate metric '{key}'")));
                    }
                    seen[m.index()] = Some(map.next_value::<u32>()?);
                }
                let mut out = [0; Metric::COUNT];
                for m in Metric::ALL {
                    out[m.index()] = seen[m.index()]
                        .ok_or_else(|| de::Error::custom(format!("missing metric '{}'", m.key())))?;
                }
                Ok(Scores(out))
            }
        }
        d.deserialize_map(ScoresVisitor)
    }
}

/// The set of point values a metric score may take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSet(BTreeSet<u32>);

impl Default for ScoreSet {
    /// Union of the two rubric variants in circulation (10/15/20 and 15/20/25).
    fn default() -> Self {
        ScoreSet([10, 15, 20, 25].into_iter().collect())
    }
}

impl ScoreSet {
    pub fn new(values: impl IntoIterator<Item = u32>) -> Self {
        ScoreSet(values.into_iter().collect())
    }

    pub fn contains(&self, v: i64) -> bool {
        u32::try_from(v).is_ok_and(|v| self.0.contains(&v))
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for ScoreSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// One scored qualitative study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StudyRecord {
    pub design: DesignType,
    pub scores: Scores,
    pub sample_size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Ingested,
    Synthetic,
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<StudyRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(records: Vec<StudyRecord>, provenance: Provenance) -> Self {
        Self {
            records,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn design_counts(&self) -> BTreeMap<DesignType, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.design).or_insert(0) += 1;
        }
        counts
    }

    /// Indices of the records of each design, in dataset order.
    pub fn indices_by_design(&self) -> BTreeMap<DesignType, Vec<usize>> {
        let mut groups: BTreeMap<DesignType, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            groups.entry(r.design).or_default().push(i);
        }
        groups
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(
            indices.iter().map(|&i| self.records[i]).collect(),
            Provenance::Derived,
        )
    }

    pub fn sample_sizes(&self) -> Vec<f64> {
        self.records.iter().map(|r| f64::from(r.sample_size)).collect()
    }
}

/// The exact CSV header, in column order.
pub fn csv_header() -> Vec<&'static str> {
    let mut cols = vec!["design"];
    cols.extend(Metric::ALL.iter().map(|m| m.key()));
    cols.push("sample_size");
    cols
}

fn check_header(header: &[String]) -> Result<(), DataError> {
    let expected = csv_header();
    let mut seen = BTreeSet::new();
    for name in header {
        if !expected.contains(&name.as_str()) {
            return Err(DataError::UnknownColumn(name.clone()));
        }
        if !seen.insert(name.as_str()) {
            return Err(DataError::DuplicateColumn(name.clone()));
        }
    }
    if let Some(missing) = expected.iter().find(|c| !seen.contains(**c)) {
        return Err(DataError::MissingColumn((*missing).to_string()));
    }
    if header.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(DataError::HeaderOrder {
            expected: expected.join(","),
        });
    }
    Ok(())
}

fn parse_int(row: usize, column: &str, raw: &str) -> Result<i64, DataError> {
    raw.parse::<i64>().map_err(|_| DataError::NotInteger {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Parses a corpus CSV. Row numbers in errors are 1-based file lines, so the
/// first data row is row 2.
pub fn parse_csv(text: &str, allowed: &ScoreSet) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(Ok(h)) => h.iter().map(str::to_string).collect::<Vec<_>>(),
        Some(Err(e)) => {
            return Err(DataError::Csv {
                row: 1,
                message: e.to_string(),
            })
        }
        None => return Err(DataError::NoHeader),
    };
    check_header(&header)?;
    let width = header.len();

    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let fallback_line = i + 2;
        let row = row.map_err(|e| DataError::Csv {
            row: e
                .position()
                .map_or(fallback_line, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(fallback_line, |p| p.line() as usize);
        if row.len() != width {
            return Err(DataError::FieldCount {
                row: line,
                expected: width,
                found: row.len(),
            });
        }
        let design = DesignType::from_str(&row[0]).map_err(|value| DataError::UnknownDesign {
            row: line,
            value,
        })?;
        let mut scores = Scores::uniform(0);
        for m in Metric::ALL {
            let raw = &row[1 + m.index()];
            let v = parse_int(line, m.key(), raw)?;
            if !allowed.contains(v) {
                return Err(DataError::InvalidScore {
                    row: line,
                    column: m.key().to_string(),
                    value: v,
                    allowed: allowed.to_string(),
                });
            }
            scores[m] = v as u32;
        }
        let n = parse_int(line, "sample_size", &row[width - 1])?;
        if n < 1 || n > i64::from(u32::MAX) {
            return Err(DataError::InvalidSampleSize { row: line, value: n });
        }
        records.push(StudyRecord {
            design,
            scores,
            sample_size: n as u32,
        });
    }
    Ok(Dataset::new(records, Provenance::Ingested))
}

/// Writes the dataset in the ingestion schema (LF line endings).
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = csv_header().join(",");
    out.push('\n');
    for r in &dataset.records {
        out.push_str(r.design.label());
        for (_, v) in r.scores.iter() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push(',');
        out.push_str(&r.sample_size.to_string());
        out.push('\n');
    }
    out
}

/// Downsamples every design to the smallest design's count. Kept records
/// stay in their original relative order.
pub fn balance_by_design(dataset: &Dataset, seed: u64) -> Result<Dataset, DataError> {
    let groups = dataset.indices_by_design();
    for d in DesignType::ALL {
        if !groups.contains_key(&d) {
            return Err(DataError::MissingDesign(d));
        }
    }
    let target = groups.values().map(Vec::len).min().unwrap_or(0);
    let mut keep = vec![false; dataset.len()];
    for (design, idx) in &groups {
        if idx.len() == target {
            idx.iter().for_each(|&i| keep[i] = true);
            continue;
        }
        let mut rng = rng_for(seed, Stream::Balance, design.ordinal() as u64);
        for pick in index::sample(&mut rng, idx.len(), target) {
            keep[idx[pick]] = true;
        }
    }
    let records = dataset
        .records
        .iter()
        .zip(&keep)
        .filter_map(|(r, &k)| k.then_some(*r))
        .collect();
    Ok(Dataset::new(records, Provenance::Derived))
}

/// Stratified train/test split. Each design contributes
/// `round(fraction * count)` records to the test side, clamped so that both
/// sides keep at least one record of every design present.
pub fn train_test_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    let groups = dataset.indices_by_design();
    if groups.is_empty() {
        return Err(DataError::Empty);
    }
    let mut is_test = vec![false; dataset.len()];
    for (design, idx) in &groups {
        if idx.len() < 2 {
            return Err(DataError::StratumTooSmall {
                design: *design,
                count: idx.len(),
                needed: 2,
            });
        }
        let n_test = ((test_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        let mut shuffled = idx.clone();
        let mut rng = rng_for(seed, Stream::Split, design.ordinal() as u64);
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..n_test] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .records
        .iter()
        .zip(&is_test)
        .partition(|(_, &t)| t);
    Ok((
        Dataset::new(train.into_iter().map(|(r, _)| *r).collect(), Provenance::Derived),
        Dataset::new(test.into_iter().map(|(r, _)| *r).collect(), Provenance::Derived),
    ))
}
