//! Observation and label CSV parsing, and per-field median aggregation.
//!
//! Observations use the header `field_id,year,doy,blue,green,red,nir,qa,vi`. Band
//! cells or the `vi` cell may be empty, but not both. The `doy` column accepts either
//! an integer day-of-year or an ISO date (`YYYY-MM-DD`) which must fall in `year`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{FieldSample, QualityFlag, Series};
use crate::vegindex::{compute_index, IndexKind, IndexParams, Reflectance};

pub const OBSERVATION_COLUMNS: [&str; 9] =
    ["field_id", "year", "doy", "blue", "green", "red", "nir", "qa", "vi"];
pub const LABEL_COLUMNS: [&str; 3] = ["field_id", "year", "crop"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub field_id: String,
    pub year: i32,
    pub doy: i32,
    pub blue: Option<f64>,
    pub green: Option<f64>,
    pub red: Option<f64>,
    pub nir: Option<f64>,
    pub qa: QualityFlag,
    pub vi: Option<f64>,
}

impl ObservationRow {
    /// All four bands, if every one is present.
    pub fn reflectance(&self) -> Option<Reflectance> {
        Some(Reflectance {
            blue: self.blue?,
            green: self.green?,
            red: self.red?,
            nir: self.nir?,
        })
    }

    /// The index value: precomputed `vi` wins, otherwise computed from the bands.
    pub fn index_value(&self, kind: IndexKind, params: &IndexParams) -> Result<f64> {
        if let Some(v) = self.vi {
            return Ok(v);
        }
        let r = self
            .reflectance()
            .ok_or_else(|| Error::Domain(format!("field {} doy {}: no bands and no vi", self.field_id, self.doy)))?;
        compute_index(kind, r, params)
    }
}

/// `(field_id, year) -> crop`.
pub type LabelTable = BTreeMap<(String, i32), String>;

fn column_index(headers: &csv::StringRecord, expected: &[&str]) -> Result<Vec<usize>> {
    expected
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
        })
        .collect()
}

fn parse_opt_f64(cell: &str, name: &str, row: usize) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| Error::Validation {
        row,
        message: format!("column `{name}`: cannot parse `{cell}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Validation {
            row,
            message: format!("column `{name}`: non-finite value"),
        });
    }
    Ok(Some(v))
}

fn parse_doy(cell: &str, year: i32, row: usize) -> Result<i32> {
    let cell = cell.trim();
    let doy = if let Ok(d) = cell.parse::<i32>() {
        d
    } else {
        let date = NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| Error::Validation {
            row,
            message: format!("column `doy`: `{cell}` is neither a day-of-year nor an ISO date"),
        })?;
        if date.year() != year {
            return Err(Error::Validation {
                row,
                message: format!("date {cell} is not in year {year}"),
            });
        }
        date.ordinal() as i32
    };
    if !(1..=366).contains(&doy) {
        return Err(Error::Validation {
            row,
            message: format!("doy {doy} outside 1..=366"),
        });
    }
    Ok(doy)
}

/// Parses an observations CSV. Row numbers in errors are 1-based file lines.
pub fn parse_observations<R: Read>(reader: R) -> Result<Vec<ObservationRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = column_index(&headers, &OBSERVATION_COLUMNS)?;
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let cell = |c: usize| record.get(cols[c]).unwrap_or("");
        let field_id = cell(0).trim().to_string();
        if field_id.is_empty() {
            return Err(Error::Validation {
                row: line,
                message: "empty field_id".into(),
            });
        }
        let year: i32 = cell(1).trim().parse().map_err(|_| Error::Validation {
            row: line,
            message: format!("column `year`: cannot parse `{}`", cell(1)),
        })?;
        let doy = parse_doy(cell(2), year, line)?;
        let blue = parse_opt_f64(cell(3), "blue", line)?;
        let green = parse_opt_f64(cell(4), "green", line)?;
        let red = parse_opt_f64(cell(5), "red", line)?;
        let nir = parse_opt_f64(cell(6), "nir", line)?;
        let qa: QualityFlag = cell(7).parse().map_err(|message| Error::Validation { row: line, message })?;
        let vi = parse_opt_f64(cell(8), "vi", line)?;
        let row = ObservationRow {
            field_id,
            year,
            doy,
            blue,
            green,
            red,
            nir,
            qa,
            vi,
        };
        if row.vi.is_none() && row.reflectance().is_none() {
            return Err(Error::Validation {
                row: line,
                message: "need either all four bands or a vi value".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows in the observation schema.
pub fn write_observations<W: Write>(writer: W, rows: &[ObservationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OBSERVATION_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.field_id.clone(),
            r.year.to_string(),
            r.doy.to_string(),
            opt(r.blue),
            opt(r.green),
            opt(r.red),
            opt(r.nir),
            r.qa.to_string(),
            opt(r.vi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `field_id,year,crop`. Any repeated `(field_id, year)` is a conflict, even with
/// the same crop.
pub fn parse_labels<R: Read>(reader: R) -> Result<LabelTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = column_index(&headers, &LABEL_COLUMNS)?;
    let mut table = LabelTable::new();
    let mut seen: HashMap<(String, i32), usize> = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let field_id = record.get(cols[0]).unwrap_or("").trim().to_string();
        let year: i32 = record
            .get(cols[1])
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Validation {
                row: line,
                message: "column `year`: not an integer".into(),
            })?;
        let crop = record.get(cols[2]).unwrap_or("").trim().to_string();
        if field_id.is_empty() || crop.is_empty() {
            return Err(Error::Validation {
                row: line,
                message: "empty field_id or crop".into(),
            });
        }
        let key = (field_id, year);
        if let Some(&first_row) = seen.get(&key) {
            return Err(Error::LabelConflict {
                field_id: key.0,
                year,
                first_row,
                second_row: line,
            });
        }
        seen.insert(key.clone(), line);
        table.insert(key, crop);
    }
    Ok(table)
}

pub fn write_labels<W: Write>(writer: W, labels: &LabelTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LABEL_COLUMNS)?;
    for ((field_id, year), crop) in labels {
        w.write_record([field_id.as_str(), &year.to_string(), crop.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Median with the mean of the two middle values for even counts. Sorts in place.
pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn aggregate_flag(flags: &[QualityFlag]) -> QualityFlag {
    if flags.iter().any(|f| f.is_clear()) {
        return QualityFlag::Clear;
    }
    let cloud = flags.iter().filter(|f| **f == QualityFlag::Cloud).count();
    let shadow = flags.len() - cloud;
    if shadow > cloud {
        QualityFlag::Shadow
    } else {
        QualityFlag::Cloud
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildSummary {
    /// Fields with no usable observation.
    pub skipped_fields: usize,
    /// Pixel rows dropped because the index could not be computed.
    pub dropped_rows: usize,
    /// Emitted samples with no label in the table.
    pub unlabeled: usize,
}

/// Index values and flags of the pixels observed on one day.
type PixelCell = (Vec<f64>, Vec<QualityFlag>);

/// Aggregates pixel rows to one median index value per `(field_id, year, doy)`.
///
/// The sample is flagged clear when at least one contributing pixel is clear,
/// otherwise by the majority of cloud/shadow flags (ties go to cloud). Output is
/// sorted by `(field_id, year)`.
pub fn build_field_samples(
    rows: &[ObservationRow],
    labels: &LabelTable,
    index: IndexKind,
    params: &IndexParams,
) -> (Vec<FieldSample>, BuildSummary) {
    let mut summary = BuildSummary::default();
    let mut fields: BTreeMap<(&str, i32), BTreeMap<i32, PixelCell>> = BTreeMap::new();
    for row in rows {
        let entry = fields.entry((row.field_id.as_str(), row.year)).or_default();
        match row.index_value(index, params) {
            Ok(v) if v.is_finite() => {
                let cell = entry.entry(row.doy).or_default();
                cell.0.push(v);
                cell.1.push(row.qa);
            }
            _ => summary.dropped_rows += 1,
        }
    }

    let mut out = Vec::with_capacity(fields.len());
    for ((field_id, year), by_day) in fields {
        if by_day.is_empty() {
            summary.skipped_fields += 1;
            continue;
        }
        let mut days = Vec::with_capacity(by_day.len());
        let mut values = Vec::with_capacity(by_day.len());
        let mut flags = Vec::with_capacity(by_day.len());
        for (doy, (mut vals, fl)) in by_day {
            days.push(doy);
            values.push(median_in_place(&mut vals));
            flags.push(aggregate_flag(&fl));
        }
        let series = Series::new(days, values, flags).expect("BTreeMap keys are strictly increasing");
        let label = labels.get(&(field_id.to_string(), year)).cloned();
        if label.is_none() {
            summary.unlabeled += 1;
        }
        out.push(FieldSample::new(field_id, year, label, series));
    }
    (out, summary)
}

/// Flattens samples back into observation rows (one row per sample day, `vi` filled).
pub fn samples_to_rows(samples: &[FieldSample]) -> Vec<ObservationRow> {
    samples
        .iter()
        .flat_map(|s| {
            s.series
                .days()
                .iter()
                .zip(s.series.values())
                .zip(s.series.flags())
                .map(move |((&doy, &vi), &qa)| ObservationRow {
                    field_id: s.field_id.clone(),
                    year: s.year,
                    doy,
                    blue: None,
                    green: None,
                    red: None,
                    nir: None,
                    qa,
                    vi: Some(vi),
                })
        })
        .collect()
}

/// Label table covering every labeled sample.
pub fn samples_to_labels(samples: &[FieldSample]) -> LabelTable {
    samples
        .iter()
        .filter_map(|s| s.label.clone().map(|l| ((s.field_id.clone(), s.year), l)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "field_id,year,doy,blue,green,red,nir,qa,vi\n";

    fn parse(body: &str) -> Result<Vec<ObservationRow>> {
        parse_observations(format!("{HEADER}{body}").as_bytes())
    }

    fn vi_row(field: &str, doy: i32, vi: f64, qa: QualityFlag) -> ObservationRow {
        ObservationRow {
            field_id: field.into(),
            year: 2013,
            doy,
            blue: None,
            green: None,
            red: None,
            nir: None,
            qa,
            vi: Some(vi),
        }
    }

    #[test]
    fn parses_band_row() {
        let rows = parse("F001,2013,160,0.05,0.08,0.10,0.40,clear,\n").unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.field_id, "F001");
        assert_eq!((r.year, r.doy), (2013, 160));
        assert_eq!(r.nir, Some(0.40));
        assert_eq!(r.qa, QualityFlag::Clear);
        assert_eq!(r.vi, None);
    }

    #[test]
    fn rejects_unknown_flag() {
        let err = parse("F001,2013,160,0.05,0.08,0.10,0.40,fog,\n").unwrap_err();
        assert!(matches!(err, Error::Validation { row: 2, .. }), "{err}");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse_observations("field_id,year,doy,blue,green,red,nir,qa\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn doy_out_of_range_names_row() {
        let err = parse("F1,2013,100,,,,,clear,0.3\nF1,2013,367,,,,,clear,0.3\n").unwrap_err();
        assert!(matches!(err, Error::Validation { row: 3, .. }), "{err}");
    }

    #[test]
    fn bad_number_names_row() {
        let err = parse("F1,2013,100,,,,,clear,abc\n").unwrap_err();
        assert!(matches!(err, Error::Validation { row: 2, .. }));
    }

    #[test]
    fn needs_bands_or_vi() {
        assert!(parse("F1,2013,100,,,,,clear,\n").is_err());
        assert!(parse("F1,2013,100,0.1,,0.1,0.4,clear,\n").is_err());
        assert!(parse("F1,2013,100,,,,,clear,0.5\n").is_ok());
    }

    #[test]
    fn iso_dates_convert_to_doy() {
        let rows = parse("F1,2016,2016-03-01,,,,,clear,0.5\nF1,2015,2015-03-01,,,,,clear,0.5\n").unwrap();
        assert_eq!(rows[0].doy, 61); // leap year
        assert_eq!(rows[1].doy, 60);
        assert!(parse("F1,2015,2016-03-01,,,,,clear,0.5\n").is_err());
    }

    #[test]
    fn labels_parse_and_conflict() {
        let t = parse_labels("field_id,year,crop\nF001,2013,corn\n".as_bytes()).unwrap();
        assert_eq!(t.get(&("F001".to_string(), 2013)).map(String::as_str), Some("corn"));
        let err = parse_labels("field_id,year,crop\nF001,2013,corn\nF001,2013,corn\n".as_bytes()).unwrap_err();
        match err {
            Error::LabelConflict {
                first_row, second_row, ..
            } => assert_eq!((first_row, second_row), (2, 3)),
            other => panic!("unexpected {other}"),
        }
        assert!(parse_labels("field_id,year,crop\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn median_of_three_pixels() {
        let rows = vec![
            vi_row("F1", 100, 0.2, QualityFlag::Clear),
            vi_row("F1", 100, 0.9, QualityFlag::Clear),
            vi_row("F1", 100, 0.3, QualityFlag::Clear),
        ];
        let (samples, _) = build_field_samples(&rows, &LabelTable::new(), IndexKind::Ndvi, &IndexParams::default());
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].series.values(), &[0.3]);
        assert_eq!(samples[0].label, None);
    }

    #[test]
    fn single_rows_pass_through() {
        let rows = vec![
            vi_row("F1", 120, 0.4, QualityFlag::Clear),
            vi_row("F1", 100, 0.2, QualityFlag::Cloud),
        ];
        let mut labels = LabelTable::new();
        labels.insert(("F1".into(), 2013), "corn".into());
        let (samples, summary) = build_field_samples(&rows, &labels, IndexKind::Ndvi, &IndexParams::default());
        let s = &samples[0].series;
        assert_eq!(s.days(), &[100, 120]);
        assert_eq!(s.values(), &[0.2, 0.4]);
        assert_eq!(s.flags(), &[QualityFlag::Cloud, QualityFlag::Clear]);
        assert_eq!(samples[0].label.as_deref(), Some("corn"));
        assert_eq!(summary.unlabeled, 0);
    }

    #[test]
    fn flag_rule_prefers_clear() {
        // 2 clear + 2 cloud: at least one clear pixel contributes, so the sample is clear.
        let rows = vec![
            vi_row("F1", 100, 0.2, QualityFlag::Clear),
            vi_row("F1", 100, 0.3, QualityFlag::Cloud),
            vi_row("F1", 100, 0.4, QualityFlag::Clear),
            vi_row("F1", 100, 0.5, QualityFlag::Cloud),
        ];
        let (samples, _) = build_field_samples(&rows, &LabelTable::new(), IndexKind::Ndvi, &IndexParams::default());
        assert_eq!(samples[0].series.flags(), &[QualityFlag::Clear]);
        assert!((samples[0].series.values()[0] - 0.35).abs() < 1e-15);

        let rows = vec![
            vi_row("F1", 100, 0.2, QualityFlag::Shadow),
            vi_row("F1", 100, 0.3, QualityFlag::Cloud),
            vi_row("F1", 100, 0.4, QualityFlag::Shadow),
        ];
        let (samples, _) = build_field_samples(&rows, &LabelTable::new(), IndexKind::Ndvi, &IndexParams::default());
        assert_eq!(samples[0].series.flags(), &[QualityFlag::Shadow]);
    }

    #[test]
    fn bands_are_converted_per_pixel() {
        let rows = parse("F1,2013,160,0.05,0.08,0.10,0.50,clear,\nF2,2013,160,0,0,0,0,clear,\n").unwrap();
        let (samples, summary) = build_field_samples(&rows, &LabelTable::new(), IndexKind::Ndvi, &IndexParams::default());
        assert_eq!(samples.len(), 1);
        assert!((samples[0].series.values()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(summary.skipped_fields, 1);
        assert_eq!(summary.dropped_rows, 1);
    }

    fn arb_row() -> impl Strategy<Value = ObservationRow> {
        (
            "[A-Z][0-9]{2}",
            2010i32..2020,
            1i32..=366,
            proptest::option::of(0.0f64..1.0),
            prop_oneof![Just(QualityFlag::Clear), Just(QualityFlag::Cloud), Just(QualityFlag::Shadow)],
            -1.0f64..1.0,
        )
            .prop_map(|(field_id, year, doy, band, qa, vi)| ObservationRow {
                field_id,
                year,
                doy,
                blue: band,
                green: band,
                red: band,
                nir: band,
                qa,
                vi: Some(vi),
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(arb_row(), 0..20)) {
            let mut buf = Vec::new();
            write_observations(&mut buf, &rows).unwrap();
            let back = parse_observations(buf.as_slice()).unwrap();
            prop_assert_eq!(back, rows);
        }

        #[test]
        fn aggregation_is_permutation_invariant(
            rows in proptest::collection::vec(arb_row(), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let labels = LabelTable::new();
            let p = IndexParams::default();
            let (a, _) = build_field_samples(&rows, &labels, IndexKind::Ndvi, &p);
            let (b, _) = build_field_samples(&shuffled, &labels, IndexKind::Ndvi, &p);
            prop_assert_eq!(&a, &b);
            for s in &a {
                prop_assert!(!s.series.is_empty());
                prop_assert!(s.series.days().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
