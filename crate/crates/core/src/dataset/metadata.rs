use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// The ten urban sound classes; discriminants are the dataset class ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    AirConditioner = 0,
    CarHorn = 1,
    ChildrenPlaying = 2,
    DogBark = 3,
    Drilling = 4,
    EngineIdling = 5,
    GunShot = 6,
    Jackhammer = 7,
    Siren = 8,
    StreetMusic = 9,
}

impl ClassLabel {
    pub const COUNT: usize = 10;

    pub const ALL: [ClassLabel; 10] = [
        ClassLabel::AirConditioner,
        ClassLabel::CarHorn,
        ClassLabel::ChildrenPlaying,
        ClassLabel::DogBark,
        ClassLabel::Drilling,
        ClassLabel::EngineIdling,
        ClassLabel::GunShot,
        ClassLabel::Jackhammer,
        ClassLabel::Siren,
        ClassLabel::StreetMusic,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::AirConditioner => "air_conditioner",
            ClassLabel::CarHorn => "car_horn",
            ClassLabel::ChildrenPlaying => "children_playing",
            ClassLabel::DogBark => "dog_bark",
            ClassLabel::Drilling => "drilling",
            ClassLabel::EngineIdling => "engine_idling",
            ClassLabel::GunShot => "gun_shot",
            ClassLabel::Jackhammer => "jackhammer",
            ClassLabel::Siren => "siren",
            ClassLabel::StreetMusic => "street_music",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| DatasetError::Parameter(format!("unknown class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    /// Path relative to the audio root, `fold<k>/<slice_file_name>`.
    pub file_path: String,
    pub label: ClassLabel,
    pub fold: u32,
    /// Free-text `class` column as written in the file.
    pub class_name: String,
}

impl IndexEntry {
    /// File stem of the slice, used as the clip id.
    pub fn clip_id(&self) -> &str {
        let name = self.file_path.rsplit('/').next().unwrap_or(&self.file_path);
        name.rsplit_once('.').map_or(name, |(stem, _)| stem)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    pub counts_per_class: [usize; ClassLabel::COUNT],
}

impl DatasetIndex {
    pub fn from_entries(entries: Vec<IndexEntry>) -> Self {
        let mut counts_per_class = [0; ClassLabel::COUNT];
        for e in &entries {
            counts_per_class[e.label.id()] += 1;
        }
        Self {
            entries,
            counts_per_class,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per-class counts restricted to the given entry indices.
    pub fn counts_for(&self, indices: &[usize]) -> [usize; ClassLabel::COUNT] {
        let mut counts = [0; ClassLabel::COUNT];
        for &i in indices {
            counts[self.entries[i].label.id()] += 1;
        }
        counts
    }
}

const REQUIRED: [&str; 4] = ["slice_file_name", "fold", "classID", "class"];

/// Parses an UrbanSound8K-layout metadata CSV.
pub fn read_metadata<R: Read>(input: R) -> Result<DatasetIndex, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::Schema(format!("missing column {name:?}")))
    };
    let [file_col, fold_col, id_col, class_col] = [
        column(REQUIRED[0])?,
        column(REQUIRED[1])?,
        column(REQUIRED[2])?,
        column(REQUIRED[3])?,
    ];
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |c: usize| record.get(c).map(str::trim).unwrap_or("");
        let raw_id = field(id_col);
        let label = raw_id
            .parse::<usize>()
            .ok()
            .and_then(ClassLabel::from_id)
            .ok_or_else(|| DatasetError::Label {
                row,
                value: raw_id.to_string(),
            })?;
        let fold = field(fold_col)
            .parse::<u32>()
            .map_err(|_| DatasetError::Schema(format!("row {row}: bad fold {:?}", field(fold_col))))?;
        let name = field(file_col);
        if name.is_empty() {
            return Err(DatasetError::Schema(format!("row {row}: empty slice_file_name")));
        }
        entries.push(IndexEntry {
            file_path: format!("fold{fold}/{name}"),
            label,
            fold,
            class_name: field(class_col).to_string(),
        });
    }
    Ok(DatasetIndex::from_entries(entries))
}

pub fn load_metadata(csv_path: impl AsRef<Path>) -> Result<DatasetIndex, DatasetError> {
    read_metadata(std::fs::File::open(csv_path)?)
}
