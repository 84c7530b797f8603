//! CSV ingestion with the listing cleaning rules, plus a seeded generator
//! of synthetic listings with a known linear price structure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Hull, Region, SailboatRecord, TECHNICAL_FEATURES};
use crate::error::{Error, Result};
use crate::kv::{parse_f64, KeyValues};
use crate::rng::XorShift64Star;

pub const CSV_COLUMNS: [&str; 14] = [
    "id",
    "make_variant",
    "year",
    "length_ft",
    "beam_ft",
    "draft_ft",
    "displacement_lb",
    "sail_area_sqft",
    "waterline_ft",
    "hull",
    "region",
    "gdp",
    "gdp_per_capita",
    "listing_price",
];

const OPTIONAL_COLUMNS: [&str; 2] = ["gdp", "gdp_per_capita"];

/// Fields whose absence drops a row as "missing technical information".
const TECHNICAL_CELLS: [&str; 9] = [
    "year",
    "length_ft",
    "beam_ft",
    "draft_ft",
    "displacement_lb",
    "sail_area_sqft",
    "waterline_ft",
    "hull",
    "listing_price",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CleaningReport {
    pub rows_in: usize,
    pub dropped_missing_region: usize,
    pub dropped_missing_technical: usize,
    pub dropped_malformed: usize,
    pub rows_out: usize,
}

impl CleaningReport {
    pub fn dropped(&self) -> usize {
        self.dropped_missing_region + self.dropped_missing_technical + self.dropped_malformed
    }
}

/// Empty cells and `NA` (any case) mark a missing value.
pub fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na")
}

pub fn load_csv(path: &Path) -> Result<(Vec<SailboatRecord>, CleaningReport)> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<SailboatRecord>, CleaningReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing: Vec<String> = CSV_COLUMNS
        .iter()
        .filter(|c| !OPTIONAL_COLUMNS.contains(c) && position(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::HeaderMismatch(missing));
    }
    let index: BTreeMap<&str, Option<usize>> = CSV_COLUMNS.iter().map(|c| (*c, position(c))).collect();

    let mut report = CleaningReport::default();
    let mut records = Vec::new();
    for row in rdr.records() {
        report.rows_in += 1;
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                report.dropped_malformed += 1;
                continue;
            }
        };
        let cell = |name: &str| -> Option<&str> { index[name].and_then(|i| row.get(i)) };
        let absent = |name: &str| cell(name).map_or(true, is_missing);
        if absent("region") {
            report.dropped_missing_region += 1;
            continue;
        }
        if TECHNICAL_CELLS.iter().any(|c| absent(c)) {
            report.dropped_missing_technical += 1;
            continue;
        }
        match parse_row(&cell) {
            Some(rec) if rec.validate().is_ok() => records.push(rec),
            _ => report.dropped_malformed += 1,
        }
    }
    report.rows_out = records.len();
    if records.is_empty() {
        return Err(Error::EmptyAfterCleaning);
    }
    Ok((records, report))
}

fn parse_row<'a>(cell: &dyn Fn(&str) -> Option<&'a str>) -> Option<SailboatRecord> {
    let real = |name: &str| -> Option<f64> { cell(name)?.trim().parse::<f64>().ok() };
    let optional_real = |name: &str| -> Option<Option<f64>> {
        match cell(name) {
            None => Some(None),
            Some(c) if is_missing(c) => Some(None),
            Some(c) => c.trim().parse::<f64>().ok().map(Some),
        }
    };
    Some(SailboatRecord {
        id: cell("id")?.trim().to_string(),
        make_variant: cell("make_variant")?.trim().to_string(),
        year: cell("year")?.trim().parse().ok()?,
        length_ft: real("length_ft")?,
        beam_ft: real("beam_ft")?,
        draft_ft: real("draft_ft")?,
        displacement_lb: real("displacement_lb")?,
        sail_area_sqft: real("sail_area_sqft")?,
        waterline_ft: real("waterline_ft")?,
        hull: cell("hull")?.parse::<Hull>().ok()?,
        region: cell("region")?.parse::<Region>().ok()?,
        gdp: optional_real("gdp")?,
        gdp_per_capita: optional_real("gdp_per_capita")?,
        listing_price: real("listing_price")?,
    })
}

/// Writes records with the full header. Reals use the shortest decimal
/// form that parses back to the same double.
pub fn write_csv<W: Write>(records: &[SailboatRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.id.clone(),
            r.make_variant.clone(),
            r.year.to_string(),
            r.length_ft.to_string(),
            r.beam_ft.to_string(),
            r.draft_ft.to_string(),
            r.displacement_lb.to_string(),
            r.sail_area_sqft.to_string(),
            r.waterline_ft.to_string(),
            r.hull.name().to_string(),
            r.region.name().to_string(),
            opt(r.gdp),
            opt(r.gdp_per_capita),
            r.listing_price.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// An additive `height` applied when `column > threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEffect {
    pub column: String,
    pub threshold: f64,
    pub height: f64,
}

/// Ground truth for synthetic listings.
///
/// Regions are drawn uniformly from the keys of `region_effects`
/// (Caribbean/Europe/USA with zero effect when empty).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub true_coefficients: BTreeMap<String, f64>,
    pub true_intercept: f64,
    pub region_effects: BTreeMap<Region, f64>,
    pub noise_std: f64,
    pub seed: u64,
    pub catamaran_share: f64,
    pub step: Option<StepEffect>,
}

impl SyntheticSpec {
    /// A listing market shaped like the real one: prices grow with size,
    /// fall with draft, and catamarans carry a premium.
    pub fn paper_like(n_rows: usize, seed: u64) -> Self {
        let coefficients = [
            ("length_ft", 6_000.0),
            ("year", 2_500.0),
            ("waterline_ft", 4_000.0),
            ("beam_ft", 8_000.0),
            ("draft_ft", -9_000.0),
            ("displacement_lb", 2.0),
            ("sail_area_sqft", 60.0),
            ("hull", 150_000.0),
        ];
        Self {
            n_rows,
            true_coefficients: coefficients.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            true_intercept: -2_500.0 * 1980.0 - 100_000.0,
            region_effects: [
                (Region::Caribbean, 0.0),
                (Region::Europe, 17_809.42),
                (Region::Usa, 117_553.40),
            ]
            .into_iter()
            .collect(),
            noise_std: 0.0,
            seed,
            catamaran_share: 0.25,
            step: None,
        }
    }

    /// The four-region market used for end-to-end checks: [`paper_like`]
    /// plus a Hong Kong effect, with noise at 5% of the mean price.
    ///
    /// [`paper_like`]: SyntheticSpec::paper_like
    pub fn acceptance(n_rows: usize, seed: u64) -> Result<Self> {
        let mut spec = Self::paper_like(n_rows, seed);
        spec.region_effects.insert(Region::HongKong, 16_804.39);
        spec.with_noise_fraction(0.05)
    }

    /// Sets `noise_std` to `fraction` of the noise-free mean price.
    pub fn with_noise_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(fraction >= 0.0 && fraction.is_finite()) {
            return Err(Error::InvalidConfig("noise fraction must be finite and >= 0".into()));
        }
        self.noise_std = fraction * self.mean_price()?.abs();
        Ok(self)
    }

    /// Overrides fields of `self` from a key=value spec: `n_rows`, `seed`,
    /// `noise_std` or `noise_frac`, `intercept`, `catamaran_share`,
    /// `coef.<feature>`, `region.<name>` (any `region.` key replaces the
    /// whole region set), and `step.column` / `step.threshold` /
    /// `step.height`.
    pub fn apply_kv(mut self, kv: &KeyValues) -> Result<Self> {
        let known = ["n_rows", "seed", "noise_std", "noise_frac", "intercept", "catamaran_share"];
        for (k, _) in &kv.entries {
            let prefixed = ["coef.", "region.", "step."].iter().any(|p| k.starts_with(p));
            if !prefixed && !known.contains(&k.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown synthetic spec key {k:?}")));
            }
        }
        if let Some(n) = kv.get_parsed("n_rows")? {
            self.n_rows = n;
        }
        if let Some(seed) = kv.get_parsed("seed")? {
            self.seed = seed;
        }
        if let Some(v) = kv.get_parsed("intercept")? {
            self.true_intercept = v;
        }
        if let Some(v) = kv.get_parsed("catamaran_share")? {
            self.catamaran_share = v;
        }
        for (name, v) in kv.with_prefix("coef.") {
            self.true_coefficients.insert(name.to_string(), parse_f64(v)?);
        }
        let regions: Vec<(&str, &str)> = kv.with_prefix("region.").collect();
        if !regions.is_empty() {
            self.region_effects.clear();
            for (name, v) in regions {
                self.region_effects.insert(name.parse()?, parse_f64(v)?);
            }
        }
        if let Some(column) = kv.get("step.column") {
            self.step = Some(StepEffect {
                column: column.to_string(),
                threshold: kv.require_f64("step.threshold")?,
                height: kv.require_f64("step.height")?,
            });
        }
        if let Some(v) = kv.get_parsed("noise_std")? {
            self.noise_std = v;
        }
        self.validate()?;
        if let Some(frac) = kv.get_parsed::<f64>("noise_frac")? {
            self = self.with_noise_fraction(frac)?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for name in self.true_coefficients.keys() {
            if !TECHNICAL_FEATURES.contains(&name.as_str()) {
                return Err(Error::UnknownColumn(name.clone()));
            }
        }
        if let Some(step) = &self.step {
            if !TECHNICAL_FEATURES.contains(&step.column.as_str()) {
                return Err(Error::UnknownColumn(step.column.clone()));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig("noise_std must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.catamaran_share) {
            return Err(Error::InvalidConfig("catamaran_share must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Mean of the noise-free prices this spec generates.
    pub fn mean_price(&self) -> Result<f64> {
        let quiet = Self {
            noise_std: 0.0,
            ..self.clone()
        };
        let recs = generate_synthetic(&quiet)?;
        Ok(recs.iter().map(|r| r.listing_price).sum::<f64>() / recs.len().max(1) as f64)
    }

    /// Noise-free price of `record` under this spec.
    pub fn expected_price(&self, record: &SailboatRecord) -> f64 {
        let mut price = self.true_intercept;
        for name in TECHNICAL_FEATURES {
            if let Some(c) = self.true_coefficients.get(name) {
                let v = record.numeric(name).ok().flatten().unwrap_or(0.0);
                price += c * v;
            }
        }
        price += self.region_effects.get(&record.region).copied().unwrap_or(0.0);
        if let Some(step) = &self.step {
            let v = record.numeric(&step.column).ok().flatten().unwrap_or(0.0);
            if v > step.threshold {
                price += step.height;
            }
        }
        price
    }
}

/// Draws `n_rows` listings. Per row the stream is consumed in a fixed
/// order: length, beam, draft, displacement, sail area, waterline ratio,
/// year, hull, region, noise. Ranges: length 20-80 ft, beam 8-30 ft,
/// draft 2-12 ft, displacement 4,000-60,000 lb, sail area 200-3,000 sqft,
/// waterline 0.75-0.95 of length, year 1980-2022.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SailboatRecord>> {
    spec.validate()?;
    let regions: Vec<Region> = if spec.region_effects.is_empty() {
        Region::ALL[..3].to_vec()
    } else {
        spec.region_effects.keys().copied().collect()
    };
    let mut rng = XorShift64Star::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        let length_ft = rng.uniform(20.0, 80.0);
        let beam_ft = rng.uniform(8.0, 30.0);
        let draft_ft = rng.uniform(2.0, 12.0);
        let displacement_lb = rng.uniform(4_000.0, 60_000.0);
        let sail_area_sqft = rng.uniform(200.0, 3_000.0);
        let waterline_ft = length_ft * rng.uniform(0.75, 0.95);
        let year = 1980 + rng.below(43) as i32;
        let hull = if rng.next_f64() < spec.catamaran_share {
            Hull::Catamaran
        } else {
            Hull::Monohull
        };
        let region = regions[rng.below(regions.len() as u64) as usize];
        let noise = rng.normal() * spec.noise_std;
        let mut record = SailboatRecord {
            id: format!("syn-{i:06}"),
            make_variant: "synthetic".to_string(),
            year,
            length_ft,
            beam_ft,
            draft_ft,
            displacement_lb,
            sail_area_sqft,
            waterline_ft,
            hull,
            region,
            gdp: None,
            gdp_per_capita: None,
            listing_price: 0.0,
        };
        record.listing_price = spec.expected_price(&record) + noise;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,make_variant,year,length_ft,beam_ft,draft_ft,displacement_lb,sail_area_sqft,waterline_ft,hull,region,gdp,gdp_per_capita,listing_price\n";

    fn row(id: &str, region: &str, draft: &str) -> String {
        format!("{id},Beneteau 40,2008,40,13,{draft},18000,900,35,monohull,{region},,,250000\n")
    }

    #[test]
    fn drops_blank_region() {
        let mut csv = HEADER.to_string();
        for i in 0..5 {
            csv += &row(&i.to_string(), if i == 2 { "" } else { "europe" }, "6");
        }
        let (recs, report) = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(report.dropped_missing_region, 1);
        assert_eq!(report.rows_out, report.rows_in - report.dropped());
    }

    #[test]
    fn unparseable_cell_is_malformed() {
        let csv = format!("{HEADER}{}{}", row("a", "usa", "n/a"), row("b", "usa", "6"));
        let (recs, report) = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(report.dropped_malformed, 1);
    }

    #[test]
    fn na_and_currency() {
        let csv = format!(
            "{HEADER}{}{}{}",
            row("a", "NA", "6"),
            row("b", "caribbean", "na"),
            "c,X,2001,30,10,5,9000,500,25,catamaran,hong_kong,,,\"$1,000\"\n"
        );
        let (recs, report) = read_csv(format!("{csv}{}", row("d", "USA", "4")).as_bytes()).unwrap();
        assert_eq!(report.dropped_missing_region, 1);
        assert_eq!(report.dropped_missing_technical, 1);
        assert_eq!(report.dropped_malformed, 1);
        assert_eq!(recs[0].region, Region::Usa);
    }

    #[test]
    fn clean_file_keeps_everything_and_is_idempotent() {
        let spec = SyntheticSpec::paper_like(50, 9);
        let recs = generate_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let (back, report) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(report.rows_in, 50);
        assert_eq!(report.dropped(), 0);
        assert_eq!(back, recs);
        let mut again = Vec::new();
        write_csv(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn header_and_empty_errors() {
        let err = read_csv("id,year\n1,2000\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch(_)));
        let err = read_csv(format!("{HEADER}{}", row("a", "", "6")).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::EmptyAfterCleaning));
        let err = load_csv(Path::new("/nonexistent/listings.csv")).unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            noise_std: 1000.0,
            ..SyntheticSpec::paper_like(100, 5)
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let one = generate_synthetic(&SyntheticSpec::paper_like(1, 5)).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn synthetic_noise_free_targets_are_exact() {
        let spec = SyntheticSpec::paper_like(500, 11);
        for r in generate_synthetic(&spec).unwrap() {
            assert!(r.validate().is_ok(), "{r:?}");
            let mut expect = spec.true_intercept;
            expect += 6_000.0 * r.length_ft;
            expect += 2_500.0 * f64::from(r.year);
            expect += 4_000.0 * r.waterline_ft;
            expect += 8_000.0 * r.beam_ft;
            expect += -9_000.0 * r.draft_ft;
            expect += 2.0 * r.displacement_lb;
            expect += 60.0 * r.sail_area_sqft;
            expect += 150_000.0 * if r.hull == Hull::Catamaran { 1.0 } else { 0.0 };
            expect += spec.region_effects[&r.region];
            assert!((r.listing_price - expect).abs() <= 1e-9, "{} vs {expect}", r.listing_price);
        }
    }

    #[test]
    fn spec_file_overrides() {
        let kv = KeyValues::parse(
            "n_rows=12\ncoef.length_ft=1\nregion.europe=5\nregion.hong_kong=7\nstep.column=beam_ft\nstep.threshold=20\nstep.height=3\n",
        )
        .unwrap();
        let spec = SyntheticSpec::paper_like(5, 1).apply_kv(&kv).unwrap();
        assert_eq!(spec.n_rows, 12);
        assert_eq!(spec.true_coefficients["length_ft"], 1.0);
        assert_eq!(spec.region_effects.len(), 2);
        assert_eq!(spec.step.as_ref().unwrap().height, 3.0);
        let bad = KeyValues::parse("nrows=3").unwrap();
        assert!(SyntheticSpec::paper_like(5, 1).apply_kv(&bad).is_err());
    }

    #[test]
    fn acceptance_noise_is_five_percent() {
        let spec = SyntheticSpec::acceptance(200, 3).unwrap();
        let mean = spec.mean_price().unwrap();
        assert!((spec.noise_std - 0.05 * mean).abs() < 1e-9 * mean);
        assert_eq!(spec.region_effects.len(), 4);
    }

    #[test]
    fn synthetic_rejects_unknown_coefficient() {
        let mut spec = SyntheticSpec::paper_like(10, 1);
        spec.true_coefficients.insert("mast_ft".into(), 1.0);
        assert!(matches!(generate_synthetic(&spec), Err(Error::UnknownColumn(_))));
    }
}
