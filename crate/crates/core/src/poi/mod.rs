//! Points of interest: taxonomy, assignment to parcels, and the per-parcel
//! density, dominant-function and land-use-mix measures.

mod assign;
mod metrics;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use geo::Coord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use assign::{assign_pois_to_parcels, ParcelIndex, PoiAssignment};
pub use metrics::{
    characterize, dominant_function, mix_index, raw_density, standardize_density, DensityContext, LandUseMix,
    ParcelAttributes,
};

/// The eight aggregated POI categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    /// Commercial sites.
    Com,
    /// Office building/space.
    Obs,
    /// Transport facilities.
    Tra,
    /// Others; counted for density only.
    Oth,
    /// Government.
    Gov,
    /// Education.
    Edu,
    /// Residence communities.
    Res,
    /// Green space.
    Gre,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Com,
        Category::Obs,
        Category::Tra,
        Category::Oth,
        Category::Gov,
        Category::Edu,
        Category::Res,
        Category::Gre,
    ];

    /// Categories that take part in dominance and mix.
    pub const CLASSIFIED: [Category; 7] = [
        Category::Com,
        Category::Obs,
        Category::Tra,
        Category::Gov,
        Category::Edu,
        Category::Res,
        Category::Gre,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::Com => "COM",
            Category::Obs => "OBS",
            Category::Tra => "TRA",
            Category::Oth => "OTH",
            Category::Gov => "GOV",
            Category::Edu => "EDU",
            Category::Res => "RES",
            Category::Gre => "GRE",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Com => "Commercial sites",
            Category::Obs => "Office building/space",
            Category::Tra => "Transport facilities",
            Category::Oth => "Others",
            Category::Gov => "Government",
            Category::Edu => "Education",
            Category::Res => "Residence communities",
            Category::Gre => "Green space",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Category::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown POI category `{s}`")))
    }
}

/// POI counts per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryCounts([u64; 8]);

impl CategoryCounts {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Category, u64)>) -> Self {
        let mut c = CategoryCounts::default();
        for (cat, n) in pairs {
            c.0[cat.index()] += n;
        }
        c
    }

    pub fn add(&mut self, category: Category) {
        self.0[category.index()] += 1;
    }

    pub fn get(&self, category: Category) -> u64 {
        self.0[category.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Total excluding `OTH`.
    pub fn classified_total(&self) -> u64 {
        self.total() - self.get(Category::Oth)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, u64)> + '_ {
        Category::ALL.into_iter().map(|c| (c, self.get(c)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Poi {
    pub id: String,
    pub location: Coord<f64>,
    pub category: Category,
}

impl Poi {
    pub fn new(id: impl Into<String>, x: f64, y: f64, category: Category) -> Self {
        Poi {
            id: id.into(),
            location: Coord { x, y },
            category,
        }
    }
}

/// Maps provider labels to categories. Lookup ignores case and surrounding
/// whitespace.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMapping {
    labels: HashMap<String, Category>,
}

impl Default for CategoryMapping {
    /// Codes and full names of the eight categories.
    fn default() -> Self {
        let mut labels = HashMap::new();
        for c in Category::ALL {
            labels.insert(c.code().to_lowercase(), c);
            labels.insert(c.label().to_lowercase(), c);
        }
        CategoryMapping { labels }
    }
}

impl CategoryMapping {
    pub fn empty() -> Self {
        CategoryMapping {
            labels: HashMap::new(),
        }
    }

    pub fn insert(&mut self, raw_label: &str, category: Category) {
        self.labels.insert(raw_label.trim().to_lowercase(), category);
    }

    pub fn lookup(&self, raw_label: &str) -> Option<Category> {
        self.labels.get(&raw_label.trim().to_lowercase()).copied()
    }

    /// Parses a two-column `raw_label,category` table. Blank lines and lines
    /// starting with `#` are ignored, as is a first row whose second column
    /// is not a category (a header).
    pub fn parse(text: &str) -> Result<Self> {
        let mut mapping = CategoryMapping::empty();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidInput(format!("category mapping: {e}")))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "category mapping row {}: expected 2 columns, found {}",
                    row + 1,
                    record.len()
                )));
            }
            match record[1].parse::<Category>() {
                Ok(c) => mapping.insert(&record[0], c),
                Err(_) if row == 0 => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(mapping)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::file(path, e.to_string()))
    }
}
