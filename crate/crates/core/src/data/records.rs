use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declares a closed categorical covariate. Each level carries the label used
/// in data files and the integer code of the published coding scheme.
macro_rules! categorical {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $label:literal => $code:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }

            pub fn code(self) -> u8 {
                match self { $($name::$variant => $code),+ }
            }

            pub fn from_label(s: &str) -> Option<Self> {
                match s { $($label => Some($name::$variant),)+ _ => None }
            }

            pub fn from_code(code: u8) -> Option<Self> {
                Self::ALL.iter().copied().find(|v| v.code() == code)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

categorical!(IntType { Signalized = "signalized" => 1, NonSignalized = "non_signalized" => 0 });
categorical!(MarkedXwalk { No = "no" => 1, Yes = "yes" => 0 });
categorical!(MedianType { Undivided = "undivided" => 1, Divided = "divided" => 0 });
categorical!(Lighting { No = "no" => 1, Yes = "yes" => 0 });
categorical!(Area { Commercial = "com" => 0, Residential = "res" => 1, Mixed = "mix" => 2 });
categorical!(Sidewalk { Yes = "yes" => 0, No = "no" => 1 });
categorical!(Curve { Yes = "yes" => 1, No = "no" => 0 });
categorical!(StopDesign { Curbside = "curbside" => 1, Other = "other" => 0 });
categorical!(Proximity { Far = "far" => 1, Near = "near" => 0, Midblock = "midblock" => 2 });
categorical!(Cover { Covered = "covered" => 0, Uncovered = "uncovered" => 1 });

/// One bus stop: crash counts by severity group and its covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub kabco: u32,
    pub kabc: u32,
    pub kab: u32,
    pub aadt: f64,
    pub avg_on: f64,
    pub avg_off: f64,
    pub dist_to_int: f64,
    pub median_width: f64,
    pub speed_limit: f64,
    pub lane_count: u32,
    pub school_count: u32,
    pub park_count: u32,
    pub stop_count: u32,
    pub int_type: IntType,
    pub marked_xwalk: MarkedXwalk,
    pub median_type: MedianType,
    pub lighting: Lighting,
    pub area: Area,
    pub sidewalk: Sidewalk,
    pub curve: Curve,
    pub design: StopDesign,
    pub proximity: Proximity,
    pub cover: Cover,
}

/// Column names of the site CSV schema, in file order.
pub const SCHEMA_COLUMNS: &[&str] = &[
    "site_id",
    "kabco",
    "kabc",
    "kab",
    "aadt",
    "avg_on",
    "avg_off",
    "dist_to_int",
    "median_width",
    "speed_limit",
    "lane_count",
    "school_count",
    "park_count",
    "stop_count",
    "int_type",
    "marked_xwalk",
    "median_type",
    "lighting",
    "area",
    "sidewalk",
    "curve",
    "design",
    "proximity",
    "cover",
];

/// Crash-count response groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Kabco,
    Kabc,
    Kab,
}

impl Severity {
    pub fn count(self, r: &SiteRecord) -> u32 {
        match self {
            Severity::Kabco => r.kabco,
            Severity::Kabc => r.kabc,
            Severity::Kab => r.kab,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Severity::Kabco => "kabco",
            Severity::Kabc => "kabc",
            Severity::Kab => "kab",
        }
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kabco" => Ok(Severity::Kabco),
            "kabc" => Ok(Severity::Kabc),
            "kab" => Ok(Severity::Kab),
            other => Err(Error::Config(format!("unknown severity group `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousVar {
    Aadt,
    AvgOn,
    AvgOff,
    DistToInt,
    MedianWidth,
    SpeedLimit,
    LaneCount,
    SchoolCount,
    ParkCount,
    StopCount,
}

impl ContinuousVar {
    pub const ALL: &'static [ContinuousVar] = &[
        ContinuousVar::Aadt,
        ContinuousVar::AvgOn,
        ContinuousVar::AvgOff,
        ContinuousVar::DistToInt,
        ContinuousVar::MedianWidth,
        ContinuousVar::SpeedLimit,
        ContinuousVar::LaneCount,
        ContinuousVar::SchoolCount,
        ContinuousVar::ParkCount,
        ContinuousVar::StopCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContinuousVar::Aadt => "aadt",
            ContinuousVar::AvgOn => "avg_on",
            ContinuousVar::AvgOff => "avg_off",
            ContinuousVar::DistToInt => "dist_to_int",
            ContinuousVar::MedianWidth => "median_width",
            ContinuousVar::SpeedLimit => "speed_limit",
            ContinuousVar::LaneCount => "lane_count",
            ContinuousVar::SchoolCount => "school_count",
            ContinuousVar::ParkCount => "park_count",
            ContinuousVar::StopCount => "stop_count",
        }
    }

    pub fn value(self, r: &SiteRecord) -> f64 {
        match self {
            ContinuousVar::Aadt => r.aadt,
            ContinuousVar::AvgOn => r.avg_on,
            ContinuousVar::AvgOff => r.avg_off,
            ContinuousVar::DistToInt => r.dist_to_int,
            ContinuousVar::MedianWidth => r.median_width,
            ContinuousVar::SpeedLimit => r.speed_limit,
            ContinuousVar::LaneCount => f64::from(r.lane_count),
            ContinuousVar::SchoolCount => f64::from(r.school_count),
            ContinuousVar::ParkCount => f64::from(r.park_count),
            ContinuousVar::StopCount => f64::from(r.stop_count),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalVar {
    IntType,
    MarkedXwalk,
    MedianType,
    Lighting,
    Area,
    Sidewalk,
    Curve,
    Design,
    Proximity,
    Cover,
}

impl CategoricalVar {
    pub const ALL: &'static [CategoricalVar] = &[
        CategoricalVar::IntType,
        CategoricalVar::MarkedXwalk,
        CategoricalVar::MedianType,
        CategoricalVar::Lighting,
        CategoricalVar::Area,
        CategoricalVar::Sidewalk,
        CategoricalVar::Curve,
        CategoricalVar::Design,
        CategoricalVar::Proximity,
        CategoricalVar::Cover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CategoricalVar::IntType => "int_type",
            CategoricalVar::MarkedXwalk => "marked_xwalk",
            CategoricalVar::MedianType => "median_type",
            CategoricalVar::Lighting => "lighting",
            CategoricalVar::Area => "area",
            CategoricalVar::Sidewalk => "sidewalk",
            CategoricalVar::Curve => "curve",
            CategoricalVar::Design => "design",
            CategoricalVar::Proximity => "proximity",
            CategoricalVar::Cover => "cover",
        }
    }

    /// Level labels ordered by their published code (code 0 first).
    pub fn levels(self) -> Vec<&'static str> {
        fn by_code<T: Copy>(all: &[T], code: impl Fn(T) -> u8, label: impl Fn(T) -> &'static str) -> Vec<&'static str> {
            let mut v: Vec<T> = all.to_vec();
            v.sort_by_key(|x| code(*x));
            v.into_iter().map(label).collect()
        }
        match self {
            CategoricalVar::IntType => by_code(IntType::ALL, IntType::code, IntType::label),
            CategoricalVar::MarkedXwalk => by_code(MarkedXwalk::ALL, MarkedXwalk::code, MarkedXwalk::label),
            CategoricalVar::MedianType => by_code(MedianType::ALL, MedianType::code, MedianType::label),
            CategoricalVar::Lighting => by_code(Lighting::ALL, Lighting::code, Lighting::label),
            CategoricalVar::Area => by_code(Area::ALL, Area::code, Area::label),
            CategoricalVar::Sidewalk => by_code(Sidewalk::ALL, Sidewalk::code, Sidewalk::label),
            CategoricalVar::Curve => by_code(Curve::ALL, Curve::code, Curve::label),
            CategoricalVar::Design => by_code(StopDesign::ALL, StopDesign::code, StopDesign::label),
            CategoricalVar::Proximity => by_code(Proximity::ALL, Proximity::code, Proximity::label),
            CategoricalVar::Cover => by_code(Cover::ALL, Cover::code, Cover::label),
        }
    }

    pub fn label_of(self, r: &SiteRecord) -> &'static str {
        match self {
            CategoricalVar::IntType => r.int_type.label(),
            CategoricalVar::MarkedXwalk => r.marked_xwalk.label(),
            CategoricalVar::MedianType => r.median_type.label(),
            CategoricalVar::Lighting => r.lighting.label(),
            CategoricalVar::Area => r.area.label(),
            CategoricalVar::Sidewalk => r.sidewalk.label(),
            CategoricalVar::Curve => r.curve.label(),
            CategoricalVar::Design => r.design.label(),
            CategoricalVar::Proximity => r.proximity.label(),
            CategoricalVar::Cover => r.cover.label(),
        }
    }
}

/// Any covariate addressable by name in a formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    Continuous(ContinuousVar),
    Categorical(CategoricalVar),
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::Continuous(c) => c.name(),
            Variable::Categorical(c) => c.name(),
        }
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(c) = ContinuousVar::ALL.iter().find(|c| c.name() == s) {
            return Ok(Variable::Continuous(*c));
        }
        if let Some(c) = CategoricalVar::ALL.iter().find(|c| c.name() == s) {
            return Ok(Variable::Categorical(*c));
        }
        Err(Error::MissingColumn(s.to_string()))
    }
}

/// A row-level validation failure, keyed by its 1-based line in the file
/// (the header is line 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl SiteRecord {
    /// Checks the record-level invariants of the schema.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.site_id.trim().is_empty() {
            return Err("empty site_id".into());
        }
        if !(self.kab <= self.kabc && self.kabc <= self.kabco) {
            return Err(format!(
                "severity ordering violated: kab={} kabc={} kabco={}",
                self.kab, self.kabc, self.kabco
            ));
        }
        if !(self.aadt.is_finite() && self.aadt > 0.0) {
            return Err(format!("aadt must be positive, got {}", self.aadt));
        }
        if !(20.0..=65.0).contains(&self.speed_limit) {
            return Err(format!("speed_limit {} outside [20, 65]", self.speed_limit));
        }
        for (name, v) in [
            ("avg_on", self.avg_on),
            ("avg_off", self.avg_off),
            ("dist_to_int", self.dist_to_int),
            ("median_width", self.median_width),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Reads and validates site records from CSV. All row problems are collected
/// before failing.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<SiteRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in SCHEMA_COLUMNS {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::MissingColumn((*col).to_string()));
        }
    }
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.deserialize::<SiteRecord>().enumerate() {
        let line = i as u64 + 2;
        match row {
            Ok(rec) => match rec.validate() {
                Ok(()) => records.push(rec),
                Err(message) => errors.push(RowError { line, message }),
            },
            Err(e) => {
                let message = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => {
                        let field = err
                            .field()
                            .and_then(|f| headers.get(f as usize))
                            .map(|h| format!("column `{h}`: "))
                            .unwrap_or_default();
                        format!("{field}{}", err.kind())
                    }
                    _ => e.to_string(),
                };
                errors.push(RowError { line, message });
            }
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(Error::Rows(errors))
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<SiteRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_records(std::io::BufReader::new(file))
}

pub fn write_records<W: Write>(writer: W, records: &[SiteRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save(path: impl AsRef<Path>, records: &[SiteRecord]) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_records(std::io::BufWriter::new(file), records)
}

#[cfg(test)]
pub(crate) fn example_record(id: &str) -> SiteRecord {
    SiteRecord {
        site_id: id.to_string(),
        kabco: 2,
        kabc: 1,
        kab: 1,
        aadt: 166.0,
        avg_on: 53.2,
        avg_off: 40.0,
        dist_to_int: 120.5,
        median_width: 0.0,
        speed_limit: 35.0,
        lane_count: 4,
        school_count: 1,
        park_count: 0,
        stop_count: 3,
        int_type: IntType::Signalized,
        marked_xwalk: MarkedXwalk::Yes,
        median_type: MedianType::Undivided,
        lighting: Lighting::Yes,
        area: Area::Commercial,
        sidewalk: Sidewalk::Yes,
        curve: Curve::No,
        design: StopDesign::Curbside,
        proximity: Proximity::Near,
        cover: Cover::Covered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_csv(records: &[SiteRecord]) -> String {
        let mut buf = Vec::new();
        write_records(&mut buf, records).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_matches_schema() {
        let text = to_csv(&[example_record("s1")]);
        let header = text.lines().next().unwrap();
        assert_eq!(header, SCHEMA_COLUMNS.join(","));
    }

    #[test]
    fn reads_back_written_records() {
        let recs: Vec<_> = (0..5).map(|i| example_record(&format!("s{i}"))).collect();
        let back = read_records(to_csv(&recs).as_bytes()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn rejects_severity_ordering_violation() {
        let mut bad = example_record("bad");
        bad.kab = 5;
        let text = to_csv(&[example_record("ok"), bad]);
        match read_records(text.as_bytes()) {
            Err(Error::Rows(errs)) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].line, 3);
                assert!(errs[0].message.contains("ordering"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_area_label() {
        let text = to_csv(&[example_record("a")]).replace(",com,", ",industrial,");
        match read_records(text.as_bytes()) {
            Err(Error::Rows(errs)) => {
                assert_eq!(errs[0].line, 2);
                assert!(errs[0].message.contains("industrial"), "{}", errs[0].message);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let text = to_csv(&[example_record("a")]);
        let mut lines = text.lines();
        let header = lines.next().unwrap().replace("aadt,", "traffic,");
        let body: Vec<&str> = lines.collect();
        let edited = format!("{header}\n{}\n", body.join("\n"));
        assert!(matches!(read_records(edited.as_bytes()), Err(Error::MissingColumn(c)) if c == "aadt"));
    }

    #[test]
    fn out_of_domain_values() {
        let mut a = example_record("a");
        a.speed_limit = 70.0;
        let mut b = example_record("b");
        b.aadt = 0.0;
        let text = to_csv(&[a, b]);
        match read_records(text.as_bytes()) {
            Err(Error::Rows(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn category_codes_follow_published_scheme() {
        assert_eq!(IntType::Signalized.code(), 1);
        assert_eq!(MedianType::Divided.code(), 0);
        assert_eq!(CategoricalVar::Area.levels(), vec!["com", "res", "mix"]);
        assert_eq!(CategoricalVar::Proximity.levels(), vec!["near", "far", "midblock"]);
        assert_eq!(Area::from_code(2), Some(Area::Mixed));
    }
}
