//! Domain records, feature layouts and the categorical encodings.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{fmt_f64, parse_f64, KeyValues};

/// The eight technical regressors, in the order the price model lists them.
pub const TECHNICAL_FEATURES: [&str; 8] = [
    "length_ft",
    "year",
    "waterline_ft",
    "beam_ft",
    "draft_ft",
    "displacement_lb",
    "sail_area_sqft",
    "hull",
];

pub const HULL_COLUMN: &str = "hull";
pub const REGION_GROUP: &str = "region";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hull {
    Monohull,
    Catamaran,
}

impl Hull {
    pub fn name(self) -> &'static str {
        match self {
            Hull::Monohull => "monohull",
            Hull::Catamaran => "catamaran",
        }
    }
}

impl FromStr for Hull {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "monohull" => Ok(Hull::Monohull),
            "catamaran" => Ok(Hull::Catamaran),
            other => Err(Error::Parse(format!("unknown hull type {other:?}"))),
        }
    }
}

impl fmt::Display for Hull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Monohull is the reference level.
pub fn encode_hull(hull: Hull) -> f64 {
    match hull {
        Hull::Monohull => 0.0,
        Hull::Catamaran => 1.0,
    }
}

pub fn decode_hull(value: f64) -> Option<Hull> {
    if value == 0.0 {
        Some(Hull::Monohull)
    } else if value == 1.0 {
        Some(Hull::Catamaran)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Caribbean,
    Europe,
    Usa,
    HongKong,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::Caribbean,
        Region::Europe,
        Region::Usa,
        Region::HongKong,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::Caribbean => "caribbean",
            Region::Europe => "europe",
            Region::Usa => "usa",
            Region::HongKong => "hong_kong",
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "caribbean" => Ok(Region::Caribbean),
            "europe" => Ok(Region::Europe),
            "usa" => Ok(Region::Usa),
            "hong_kong" => Ok(Region::HongKong),
            other => Err(Error::Parse(format!("unknown region {other:?}"))),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionScheme {
    /// Caribbean / Europe / USA, codes 100, 010, 001.
    ThreeRegion,
    /// Adds Hong Kong as a fourth level, codes 1000 .. 0001.
    FourRegionHK,
}

impl RegionScheme {
    pub fn levels(self) -> &'static [Region] {
        match self {
            RegionScheme::ThreeRegion => &Region::ALL[..3],
            RegionScheme::FourRegionHK => &Region::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionScheme::ThreeRegion => "three",
            RegionScheme::FourRegionHK => "four",
        }
    }
}

impl FromStr for RegionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "three" | "3" => Ok(RegionScheme::ThreeRegion),
            "four" | "4" => Ok(RegionScheme::FourRegionHK),
            other => Err(Error::Parse(format!("unknown region scheme {other:?}"))),
        }
    }
}

/// One sailboat listing.
#[derive(Debug, Clone, PartialEq)]
pub struct SailboatRecord {
    pub id: String,
    pub make_variant: String,
    pub year: i32,
    pub length_ft: f64,
    pub beam_ft: f64,
    pub draft_ft: f64,
    pub displacement_lb: f64,
    pub sail_area_sqft: f64,
    pub waterline_ft: f64,
    pub hull: Hull,
    pub region: Region,
    pub gdp: Option<f64>,
    pub gdp_per_capita: Option<f64>,
    pub listing_price: f64,
}

impl SailboatRecord {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length_ft", self.length_ft),
            ("beam_ft", self.beam_ft),
            ("draft_ft", self.draft_ft),
            ("displacement_lb", self.displacement_lb),
            ("sail_area_sqft", self.sail_area_sqft),
            ("waterline_ft", self.waterline_ft),
            ("listing_price", self.listing_price),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parse(format!("{name} must be finite and positive, got {v}")));
            }
        }
        for (name, v) in [("gdp", self.gdp), ("gdp_per_capita", self.gdp_per_capita)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Parse(format!("{name} must be finite and nonnegative")));
                }
            }
        }
        if self.waterline_ft > self.length_ft {
            return Err(Error::Parse(format!(
                "waterline {} exceeds length {}",
                self.waterline_ft, self.length_ft
            )));
        }
        if !(1900..=2025).contains(&self.year) {
            return Err(Error::Parse(format!("year {} out of range", self.year)));
        }
        Ok(())
    }

    /// Value of a numeric column by name; `None` when the record lacks it
    /// (only possible for the GDP columns).
    pub fn numeric(&self, column: &str) -> Result<Option<f64>> {
        Ok(match column {
            "length_ft" => Some(self.length_ft),
            "year" => Some(f64::from(self.year)),
            "waterline_ft" => Some(self.waterline_ft),
            "beam_ft" => Some(self.beam_ft),
            "draft_ft" => Some(self.draft_ft),
            "displacement_lb" => Some(self.displacement_lb),
            "sail_area_sqft" => Some(self.sail_area_sqft),
            "gdp" => self.gdp,
            "gdp_per_capita" => self.gdp_per_capita,
            HULL_COLUMN => Some(encode_hull(self.hull)),
            other => return Err(Error::UnknownColumn(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    OneHotGroup,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDescriptor {
    pub name: String,
    pub kind: ColumnKind,
    pub group_levels: Option<Vec<String>>,
    pub dropped_level: Option<String>,
}

impl ColumnDescriptor {
    pub fn numeric(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            group_levels: None,
            dropped_level: None,
        }
    }

    /// Levels that get their own matrix column.
    pub fn encoded_levels(&self) -> Vec<&str> {
        match &self.group_levels {
            Some(levels) => levels
                .iter()
                .filter(|l| Some(*l) != self.dropped_level.as_ref())
                .map(String::as_str)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        match self.kind {
            ColumnKind::Numeric => 1,
            ColumnKind::OneHotGroup => self.encoded_levels().len(),
        }
    }
}

/// Ordered description of how a design matrix was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    columns: Vec<ColumnDescriptor>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnDescriptor>) -> Result<Self> {
        let schema = Self { columns };
        let names = schema.column_names();
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        for c in &schema.columns {
            match c.kind {
                ColumnKind::Numeric => {
                    if c.name != HULL_COLUMN {
                        SAMPLE_RECORD.numeric(&c.name)?;
                    }
                }
                ColumnKind::OneHotGroup => {
                    let levels = c.group_levels.as_ref().ok_or_else(|| {
                        Error::InvalidConfig(format!("group {} has no levels", c.name))
                    })?;
                    if c.name != REGION_GROUP {
                        return Err(Error::UnknownColumn(c.name.clone()));
                    }
                    for l in levels {
                        l.parse::<Region>()?;
                    }
                    if let Some(d) = &c.dropped_level {
                        if !levels.contains(d) {
                            return Err(Error::InvalidConfig(format!(
                                "dropped level {d} is not a level of {}",
                                c.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(schema)
    }

    /// Builds the layout for a column selection: the requested numeric
    /// columns in the order given, then `hull` if requested, then the
    /// region group if a scheme is supplied.
    pub fn from_selection(
        selection: &[&str],
        regions: Option<RegionScheme>,
        drop_base: bool,
    ) -> Result<Self> {
        Self::with_region_base(selection, regions, drop_base.then_some(Region::Caribbean))
    }

    /// As [`FeatureSchema::from_selection`], with an arbitrary dropped
    /// (reference) region level.
    pub fn with_region_base(
        selection: &[&str],
        regions: Option<RegionScheme>,
        base: Option<Region>,
    ) -> Result<Self> {
        let mut columns: Vec<ColumnDescriptor> = selection
            .iter()
            .filter(|name| **name != HULL_COLUMN)
            .map(|name| ColumnDescriptor::numeric(name))
            .collect();
        if selection.contains(&HULL_COLUMN) {
            columns.push(ColumnDescriptor::numeric(HULL_COLUMN));
        }
        if let Some(scheme) = regions {
            columns.push(ColumnDescriptor {
                name: REGION_GROUP.to_string(),
                kind: ColumnKind::OneHotGroup,
                group_levels: Some(scheme.levels().iter().map(|r| r.name().to_string()).collect()),
                dropped_level: base.map(|b| b.name().to_string()),
            });
        }
        Self::new(columns)
    }

    pub fn columns(&self) -> &[ColumnDescriptor] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(ColumnDescriptor::width).sum()
    }

    /// Names of the matrix columns; one-hot levels expand to `group_level`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for c in &self.columns {
            match c.kind {
                ColumnKind::Numeric => names.push(c.name.clone()),
                ColumnKind::OneHotGroup => {
                    for l in c.encoded_levels() {
                        names.push(format!("{}_{l}", c.name));
                    }
                }
            }
        }
        names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names().iter().position(|n| n == name)
    }

    pub fn region_group(&self) -> Option<&ColumnDescriptor> {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::OneHotGroup && c.name == REGION_GROUP)
    }

    /// Names of the continuous columns that standardization applies to
    /// (everything numeric except the hull indicator).
    pub fn standardizable(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Numeric && c.name != HULL_COLUMN)
            .map(|c| c.name.clone())
            .collect()
    }

    /// Writes one record's raw feature row into `out`.
    pub fn encode_row(&self, record: &SailboatRecord, out: &mut Vec<f64>) -> Result<()> {
        for c in &self.columns {
            match c.kind {
                ColumnKind::Numeric => {
                    let v = record
                        .numeric(&c.name)?
                        .ok_or_else(|| Error::MissingColumn(c.name.clone()))?;
                    out.push(v);
                }
                ColumnKind::OneHotGroup => {
                    let levels = c.group_levels.as_deref().unwrap_or_default();
                    let name = record.region.name();
                    if !levels.iter().any(|l| l == name) {
                        return Err(Error::UnknownRegion {
                            region: name.to_string(),
                            scheme: levels.join("/"),
                        });
                    }
                    for l in c.encoded_levels() {
                        out.push(if l == name { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        Ok(())
    }

    /// Raw (unstandardized) matrix for `records`.
    pub fn extract(&self, records: &[SailboatRecord]) -> Result<FeatureMatrix> {
        let mut data = Vec::with_capacity(records.len() * self.width());
        for r in records {
            self.encode_row(r, &mut data)?;
        }
        Ok(FeatureMatrix {
            schema: self.clone(),
            n_rows: records.len(),
            data,
            row_ids: records.iter().map(|r| r.id.clone()).collect(),
            standardization: None,
        })
    }
}

impl FeatureSchema {
    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.push("schema.count", self.columns.len().to_string());
        for (i, c) in self.columns.iter().enumerate() {
            let value = match c.kind {
                ColumnKind::Numeric => format!("numeric:{}", c.name),
                ColumnKind::OneHotGroup => format!(
                    "onehot:{}:{}:{}",
                    c.name,
                    c.group_levels.as_deref().unwrap_or_default().join("|"),
                    c.dropped_level.as_deref().unwrap_or("-")
                ),
            };
            kv.push(format!("schema.{i}"), value);
        }
    }

    pub fn read_kv(kv: &KeyValues) -> Result<Self> {
        let count: usize = kv
            .get_parsed("schema.count")?
            .ok_or_else(|| Error::Parse("missing schema.count".into()))?;
        let mut columns = Vec::with_capacity(count);
        for i in 0..count {
            let value = kv.require(&format!("schema.{i}"))?;
            let parts: Vec<&str> = value.split(':').collect();
            let column = match parts.as_slice() {
                ["numeric", name] => ColumnDescriptor::numeric(name),
                ["onehot", name, levels, dropped] => ColumnDescriptor {
                    name: name.to_string(),
                    kind: ColumnKind::OneHotGroup,
                    group_levels: Some(levels.split('|').map(str::to_string).collect()),
                    dropped_level: (*dropped != "-").then(|| dropped.to_string()),
                },
                _ => return Err(Error::Parse(format!("bad schema entry {value:?}"))),
            };
            columns.push(column);
        }
        Self::new(columns)
    }
}

impl StandardizationParams {
    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.push("standardization.count", self.columns.len().to_string());
        for (i, c) in self.columns.iter().enumerate() {
            kv.push(
                format!("standardization.{i}"),
                format!("{},{},{}", c.name, fmt_f64(c.mean), fmt_f64(c.std)),
            );
        }
    }

    /// `None` when the file carries no standardization block.
    pub fn read_kv(kv: &KeyValues) -> Result<Option<Self>> {
        let Some(count) = kv.get_parsed::<usize>("standardization.count")? else {
            return Ok(None);
        };
        let mut columns = Vec::with_capacity(count);
        for i in 0..count {
            let value = kv.require(&format!("standardization.{i}"))?;
            let parts: Vec<&str> = value.split(',').collect();
            let [name, mean, std] = parts.as_slice() else {
                return Err(Error::Parse(format!("bad standardization entry {value:?}")));
            };
            columns.push(ColumnScale {
                name: name.to_string(),
                mean: parse_f64(mean)?,
                std: parse_f64(std)?,
            });
        }
        Ok(Some(Self { columns }))
    }
}

// Used only to validate numeric column names.
static SAMPLE_RECORD: SailboatRecord = SailboatRecord {
    id: String::new(),
    make_variant: String::new(),
    year: 2000,
    length_ft: 1.0,
    beam_ft: 1.0,
    draft_ft: 1.0,
    displacement_lb: 1.0,
    sail_area_sqft: 1.0,
    waterline_ft: 1.0,
    hull: Hull::Monohull,
    region: Region::Caribbean,
    gdp: Some(0.0),
    gdp_per_capita: Some(0.0),
    listing_price: 1.0,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-column centering and (population) scaling, estimated on training rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StandardizationParams {
    pub columns: Vec<ColumnScale>,
}

impl StandardizationParams {
    pub fn estimate(matrix: &FeatureMatrix) -> Result<Self> {
        let names = matrix.schema.column_names();
        let mut columns = Vec::new();
        for name in matrix.schema.standardizable() {
            let j = names.iter().position(|n| *n == name).expect("column in schema");
            let col = matrix.column(j);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) {
                return Err(Error::ZeroVarianceColumn(name));
            }
            columns.push(ColumnScale { name, mean, std });
        }
        Ok(Self { columns })
    }

    fn indexed<'a>(&'a self, schema: &FeatureSchema) -> Result<Vec<(usize, &'a ColumnScale)>> {
        self.columns
            .iter()
            .map(|c| {
                schema
                    .column_index(&c.name)
                    .map(|j| (j, c))
                    .ok_or_else(|| Error::SchemaMismatch(format!("no column {}", c.name)))
            })
            .collect()
    }
}

/// Row-major `n x p` design matrix with its schema and row ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    schema: FeatureSchema,
    n_rows: usize,
    data: Vec<f64>,
    row_ids: Vec<String>,
    /// Set when the stored values have been standardized with these params.
    standardization: Option<StandardizationParams>,
}

impl FeatureMatrix {
    pub fn from_rows(schema: FeatureSchema, rows: &[Vec<f64>], row_ids: Vec<String>) -> Result<Self> {
        if rows.len() != row_ids.len() {
            return Err(Error::LengthMismatch {
                expected: rows.len(),
                actual: row_ids.len(),
            });
        }
        let p = schema.width();
        let mut data = Vec::with_capacity(rows.len() * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        let m = Self {
            schema,
            n_rows: rows.len(),
            data,
            row_ids,
            standardization: None,
        };
        m.check_one_hot()?;
        Ok(m)
    }

    fn check_one_hot(&self) -> Result<()> {
        let mut offset = 0;
        for c in self.schema.columns() {
            let w = c.width();
            if c.kind == ColumnKind::OneHotGroup {
                for i in 0..self.n_rows {
                    let cells = &self.row(i)[offset..offset + w];
                    let sum: f64 = cells.iter().sum();
                    let binary = cells.iter().all(|v| *v == 0.0 || *v == 1.0);
                    let ok = binary && (sum == 1.0 || (c.dropped_level.is_some() && sum == 0.0));
                    if !ok {
                        return Err(Error::SchemaMismatch(format!(
                            "row {i} is not a valid one-hot encoding of {}",
                            c.name
                        )));
                    }
                }
            }
            offset += w;
        }
        Ok(())
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.schema.width()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Row-major cell values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn standardization(&self) -> Option<&StandardizationParams> {
        self.standardization.as_ref()
    }

    /// A copy with the stored standardization undone.
    pub fn to_raw(&self) -> Result<FeatureMatrix> {
        let mut out = self.clone();
        if let Some(params) = self.standardization.as_ref() {
            let p = self.n_cols();
            for (j, c) in params.indexed(&self.schema)? {
                for i in 0..self.n_rows {
                    let v = &mut out.data[i * p + j];
                    *v = *v * c.std + c.mean;
                }
            }
            out.standardization = None;
        }
        Ok(out)
    }

    /// A copy expressed in the coordinates of `params`.
    pub fn standardized_with(&self, params: &StandardizationParams) -> Result<FeatureMatrix> {
        if self.standardization.as_ref() == Some(params) {
            return Ok(self.clone());
        }
        let mut out = self.to_raw()?;
        let p = out.n_cols();
        for (j, c) in params.indexed(&out.schema)? {
            for i in 0..out.n_rows {
                let v = &mut out.data[i * p + j];
                *v = (*v - c.mean) / c.std;
            }
        }
        out.standardization = Some(params.clone());
        Ok(out)
    }
}

/// Re-expresses `x` in the coordinates a model was fitted in: checks the
/// schema, then applies `standardization` (or undoes a foreign one).
pub fn align_to(
    schema: &FeatureSchema,
    standardization: Option<&StandardizationParams>,
    x: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    if x.schema() != schema {
        return Err(Error::SchemaMismatch(format!(
            "model columns {:?}, matrix columns {:?}",
            schema.column_names(),
            x.schema().column_names()
        )));
    }
    match standardization {
        Some(p) => x.standardized_with(p),
        None => x.to_raw(),
    }
}

/// Listing prices aligned with the rows of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
}

impl TargetVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("target {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn from_records(records: &[SailboatRecord]) -> Self {
        Self {
            values: records.iter().map(|r| r.listing_price).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Region one-hot columns alone.
pub fn encode_regions(
    records: &[SailboatRecord],
    scheme: RegionScheme,
    drop_base: bool,
) -> Result<FeatureMatrix> {
    FeatureSchema::from_selection(&[], Some(scheme), drop_base)?.extract(records)
}

/// Assembles the design matrix and targets. With `standardize`, the
/// continuous columns are centered and scaled using statistics of these
/// records and the parameters are returned.
pub fn build_design_matrix(
    records: &[SailboatRecord],
    selection: &[&str],
    region_scheme: Option<RegionScheme>,
    drop_base: bool,
    standardize: bool,
) -> Result<(FeatureMatrix, TargetVector, Option<StandardizationParams>)> {
    let schema = FeatureSchema::from_selection(selection, region_scheme, drop_base)?;
    let raw = schema.extract(records)?;
    let targets = TargetVector::from_records(records);
    if standardize {
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        let params = StandardizationParams::estimate(&raw)?;
        Ok((raw.standardized_with(&params)?, targets, Some(params)))
    } else {
        Ok((raw, targets, None))
    }
}
