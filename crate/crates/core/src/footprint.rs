//! Ingredient unit standardization, recipe-level CO₂-eq and the CO₂-eq to
//! greenness transform.
//!
//! Greenness is `Q[ln(1 + 1/c)]`: the inverse makes low-emission items green,
//! the logarithm compresses the heavy tail of CO₂-eq values and `Q` maps the
//! result onto the rating scale `[0, 5]`. `Q` is either an affine min–max map
//! calibrated on a set of CO₂-eq values (clamped at both ends) or a fixed
//! scale `min(5, s * raw)`.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::data::IdIndex;
use crate::error::{Error, Result};
use crate::SCALE_MAX;

/// Grams per pinch, using salt as the representative ingredient.
pub const PINCH_GRAMS: f64 = 0.36;

/// Ingredients present in smaller quantities (grams) are ignored.
pub const DEFAULT_THRESHOLD_G: f64 = 50.0;

const CONVERSION_CSV: &str = include_str!("../data/unit_conversion.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Grams,
    Pint,
    Cup,
    Teaspoon,
    Tablespoon,
    Pinch,
}

impl Unit {
    pub const ALL: [Unit; 6] = [
        Unit::Grams,
        Unit::Pint,
        Unit::Cup,
        Unit::Teaspoon,
        Unit::Tablespoon,
        Unit::Pinch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Grams => "grams",
            Unit::Pint => "pint",
            Unit::Cup => "cup",
            Unit::Teaspoon => "teaspoon",
            Unit::Tablespoon => "tablespoon",
            Unit::Pinch => "pinch",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unit = match s.trim().to_ascii_lowercase().as_str() {
            "g" | "gram" | "grams" => Unit::Grams,
            "pint" | "pints" | "pt" => Unit::Pint,
            "cup" | "cups" => Unit::Cup,
            "teaspoon" | "teaspoons" | "tsp" => Unit::Teaspoon,
            "tablespoon" | "tablespoons" | "tbsp" => Unit::Tablespoon,
            "pinch" | "pinches" => Unit::Pinch,
            other => return Err(Error::Domain(format!("unknown unit {other:?}"))),
        };
        Ok(unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Liquids,
    SugarsAndSweeteners,
    Flours,
    OilsAndFats,
    Spices,
    Nuts,
    FruitsAndVegetables,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Liquids,
        Category::SugarsAndSweeteners,
        Category::Flours,
        Category::OilsAndFats,
        Category::Spices,
        Category::Nuts,
        Category::FruitsAndVegetables,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Liquids => "liquids",
            Category::SugarsAndSweeteners => "sugars_and_sweeteners",
            Category::Flours => "flours",
            Category::OilsAndFats => "oils_and_fats",
            Category::Spices => "spices",
            Category::Nuts => "nuts",
            Category::FruitsAndVegetables => "fruits_and_vegetables",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| Error::Domain(format!("unknown ingredient category {s:?}")))
    }
}

/// Volume-to-gram rates per ingredient category. `None` marks "na." cells.
#[derive(Debug, Clone)]
pub struct ConversionTable {
    rows: HashMap<Category, ConversionRow>,
}

#[derive(Debug, Clone)]
pub struct ConversionRow {
    pub represented_by: String,
    pub pint: Option<f64>,
    pub cup: Option<f64>,
    pub teaspoon: Option<f64>,
    pub tablespoon: Option<f64>,
}

impl ConversionTable {
    fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let cell = |ix: usize| -> Result<Option<f64>> {
                match rec.get(ix).map(str::trim) {
                    Some("na.") => Ok(None),
                    Some(v) => v
                        .parse()
                        .map(Some)
                        .map_err(|_| Error::Schema(format!("bad conversion cell {v:?}"))),
                    None => Err(Error::Schema("short conversion row".into())),
                }
            };
            let category: Category = rec.get(0).unwrap_or_default().parse()?;
            rows.insert(
                category,
                ConversionRow {
                    represented_by: rec.get(1).unwrap_or_default().to_owned(),
                    pint: cell(2)?,
                    cup: cell(3)?,
                    teaspoon: cell(4)?,
                    tablespoon: cell(5)?,
                },
            );
        }
        Ok(Self { rows })
    }

    pub fn row(&self, category: Category) -> &ConversionRow {
        &self.rows[&category]
    }

    /// Grams per unit, or `None` where the table has no conversion.
    pub fn rate(&self, category: Category, unit: Unit) -> Option<f64> {
        let row = self.row(category);
        match unit {
            Unit::Grams => Some(1.0),
            Unit::Pinch => Some(PINCH_GRAMS),
            Unit::Pint => row.pint,
            Unit::Cup => row.cup,
            Unit::Teaspoon => row.teaspoon,
            Unit::Tablespoon => row.tablespoon,
        }
    }
}

static CONVERSIONS: LazyLock<ConversionTable> =
    LazyLock::new(|| ConversionTable::parse(CONVERSION_CSV).expect("embedded conversion table is valid"));

pub fn conversion_table() -> &'static ConversionTable {
    &CONVERSIONS
}

pub fn to_grams(category: Category, unit: Unit, amount: f64) -> Result<f64> {
    if !(amount.is_finite() && amount > 0.0) {
        return Err(Error::Domain(format!("amount must be finite and positive, got {amount}")));
    }
    let rate = conversion_table().rate(category, unit).ok_or_else(|| Error::Conversion {
        category: category.to_string(),
        unit: unit.to_string(),
    })?;
    Ok(amount * rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngredientQuantity {
    pub name: String,
    pub amount: f64,
    pub unit: Unit,
    pub category: Category,
}

impl IngredientQuantity {
    pub fn grams(&self) -> Result<f64> {
        to_grams(self.category, self.unit, self.amount)
    }
}

/// Per-kilogram CO₂-eq of an ingredient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactor {
    pub ingredient: String,
    pub kg_co2_per_kg: f64,
}

impl EmissionFactor {
    pub fn new(ingredient: impl Into<String>, kg_co2_per_kg: f64) -> Result<Self> {
        if !(kg_co2_per_kg.is_finite() && kg_co2_per_kg >= 0.0) {
            return Err(Error::Domain(format!("emission factor must be >= 0, got {kg_co2_per_kg}")));
        }
        Ok(Self {
            ingredient: ingredient.into(),
            kg_co2_per_kg,
        })
    }
}

/// Reads `ingredient,kg_co2_per_kg` rows.
pub fn load_emission_factors(path: impl AsRef<Path>) -> Result<HashMap<String, EmissionFactor>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = HashMap::new();
    for (row, rec) in rdr.deserialize::<EmissionFactor>().enumerate() {
        let f = rec?;
        let f = EmissionFactor::new(f.ingredient, f.kg_co2_per_kg).map_err(|e| Error::Row {
            line: row as u64 + 2,
            message: e.to_string(),
        })?;
        out.insert(f.ingredient.clone(), f);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecipeCo2 {
    pub co2_kg: f64,
    pub kept: usize,
    pub dropped: usize,
    /// Set when every ingredient fell below the threshold.
    pub no_significant_ingredients: bool,
}

/// Weighted sum of ingredient CO₂-eq over ingredients of at least
/// `threshold_g` grams.
pub fn recipe_co2(ingredients: &[(f64, &EmissionFactor)], threshold_g: f64) -> Result<RecipeCo2> {
    let mut total = 0.0;
    let mut kept = 0;
    for &(grams, factor) in ingredients {
        if !(grams.is_finite() && grams >= 0.0) {
            return Err(Error::Domain(format!("ingredient weight must be >= 0, got {grams}")));
        }
        if !(factor.kg_co2_per_kg.is_finite() && factor.kg_co2_per_kg >= 0.0) {
            return Err(Error::Domain(format!(
                "emission factor for {} must be >= 0",
                factor.ingredient
            )));
        }
        if grams >= threshold_g {
            total += grams / 1000.0 * factor.kg_co2_per_kg;
            kept += 1;
        }
    }
    let no_significant_ingredients = kept == 0;
    if no_significant_ingredients {
        log::warn!("no significant ingredients (all below {threshold_g} g)");
    }
    Ok(RecipeCo2 {
        co2_kg: total,
        kept,
        dropped: ingredients.len() - kept,
        no_significant_ingredients,
    })
}

/// `ln(1 + 1/c)`, the uncalibrated greenness of a CO₂-eq value.
pub fn raw_greenness(co2_kg: f64) -> Result<f64> {
    if !(co2_kg.is_finite() && co2_kg > 0.0) {
        return Err(Error::Domain(format!("CO2-eq must be finite and positive, got {co2_kg}")));
    }
    Ok((1.0 / co2_kg).ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreennessCalibration {
    pub raw_min: f64,
    pub raw_max: f64,
}

impl GreennessCalibration {
    pub fn new(raw_min: f64, raw_max: f64) -> Result<Self> {
        let ok = raw_min.is_finite() && raw_max.is_finite() && raw_min > 0.0 && raw_min < raw_max;
        if !ok {
            return Err(Error::Calibration(format!(
                "need 0 < raw_min < raw_max, got [{raw_min}, {raw_max}]"
            )));
        }
        Ok(Self { raw_min, raw_max })
    }

    pub fn greenness(&self, co2_kg: f64) -> Result<f64> {
        greenness(co2_kg, self)
    }
}

pub fn calibrate(co2_values: &[f64]) -> Result<GreennessCalibration> {
    let mut raw_min = f64::INFINITY;
    let mut raw_max = f64::NEG_INFINITY;
    for &c in co2_values {
        let raw = raw_greenness(c)?;
        raw_min = raw_min.min(raw);
        raw_max = raw_max.max(raw);
    }
    if co2_values.len() < 2 || raw_min >= raw_max {
        return Err(Error::Calibration(
            "degenerate range: need at least two distinct CO2-eq values".into(),
        ));
    }
    GreennessCalibration::new(raw_min, raw_max)
}

pub fn greenness(co2_kg: f64, calibration: &GreennessCalibration) -> Result<f64> {
    let raw = raw_greenness(co2_kg)?;
    let span = calibration.raw_max - calibration.raw_min;
    Ok((SCALE_MAX * (raw - calibration.raw_min) / span).clamp(0.0, SCALE_MAX))
}

/// How raw greenness is projected onto `[0, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GreennessScale {
    Calibrated(GreennessCalibration),
    /// `g = min(5, scale * ln(1 + 1/c))`.
    Fixed { scale: f64 },
}

impl GreennessScale {
    pub fn fixed(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!("fixed greenness scale must be > 0, got {scale}")));
        }
        Ok(GreennessScale::Fixed { scale })
    }

    pub fn apply(&self, co2_kg: f64) -> Result<f64> {
        match self {
            GreennessScale::Calibrated(cal) => greenness(co2_kg, cal),
            GreennessScale::Fixed { scale } => Ok((scale * raw_greenness(co2_kg)?).min(SCALE_MAX)),
        }
    }
}

/// Scale `s` for which `min(5, s * ln(1 + 1/c)) == g` at one reference pair.
pub fn fit_fixed_scale(co2_kg: f64, greenness: f64) -> Result<f64> {
    if !(0.0..SCALE_MAX).contains(&greenness) || greenness == 0.0 {
        return Err(Error::Domain(format!("reference greenness must lie in (0, 5), got {greenness}")));
    }
    Ok(greenness / raw_greenness(co2_kg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemFootprint {
    pub co2_kg: Option<f64>,
    pub greenness: f64,
}

/// Greenness per dense item index.
#[derive(Debug, Clone, PartialEq)]
pub struct GreennessTable {
    entries: Vec<Option<ItemFootprint>>,
    scale: Option<GreennessScale>,
}

impl GreennessTable {
    /// Calibrates on the present CO₂-eq values and scores every item.
    pub fn from_co2(co2: &[Option<f64>]) -> Result<Self> {
        let present: Vec<f64> = co2.iter().flatten().copied().collect();
        let scale = GreennessScale::Calibrated(calibrate(&present)?);
        Self::from_co2_with(co2, scale)
    }

    pub fn from_co2_with(co2: &[Option<f64>], scale: GreennessScale) -> Result<Self> {
        let entries = co2
            .iter()
            .map(|c| {
                c.map(|c| {
                    Ok(ItemFootprint {
                        co2_kg: Some(c),
                        greenness: scale.apply(c)?,
                    })
                })
                .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            entries,
            scale: Some(scale),
        })
    }

    /// Table from precomputed greenness values (no CO₂-eq attached).
    pub fn from_greenness(values: &[f64]) -> Result<Self> {
        let entries = values
            .iter()
            .map(|&g| {
                check_greenness(g)?;
                Ok(Some(ItemFootprint {
                    co2_kg: None,
                    greenness: g,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries, scale: None })
    }

    pub fn from_entries(entries: Vec<Option<ItemFootprint>>, scale: Option<GreennessScale>) -> Result<Self> {
        for e in entries.iter().flatten() {
            check_greenness(e.greenness)?;
        }
        Ok(Self { entries, scale })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn greenness(&self, item: usize) -> Option<f64> {
        self.entries.get(item).copied().flatten().map(|e| e.greenness)
    }

    pub fn co2(&self, item: usize) -> Option<f64> {
        self.entries.get(item).copied().flatten().and_then(|e| e.co2_kg)
    }

    pub fn entry(&self, item: usize) -> Option<ItemFootprint> {
        self.entries.get(item).copied().flatten()
    }

    pub fn scale(&self) -> Option<&GreennessScale> {
        self.scale.as_ref()
    }

    pub fn values(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.entries.iter().map(|e| e.map(|e| e.greenness))
    }

    /// Writes `item_id,co2_kg,greenness` for every item that has an entry.
    pub fn write_csv(&self, path: impl AsRef<Path>, items: &IdIndex) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file, items)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W, items: &IdIndex) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["item_id", "co2_kg", "greenness"])?;
        for (ix, e) in self.entries.iter().enumerate() {
            if let Some(e) = e {
                w.write_record([
                    items.id(ix).to_owned(),
                    e.co2_kg.map(|c| c.to_string()).unwrap_or_default(),
                    e.greenness.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn check_greenness(g: f64) -> Result<()> {
    if !(g.is_finite() && (0.0..=SCALE_MAX).contains(&g)) {
        return Err(Error::Domain(format!("greenness must lie in [0,5], got {g}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GreennessLoadReport {
    pub rows: usize,
    pub unmatched_items: usize,
    pub recomputed: bool,
}

/// Reads `item_id,co2_kg[,greenness]` and aligns it with `items`.
///
/// When the greenness column is absent (or `recompute` is set) greenness is
/// derived from CO₂-eq, calibrated over every row of the file, or with the
/// given fixed scale.
pub fn load_greenness(
    path: impl AsRef<Path>,
    items: &IdIndex,
    recompute: bool,
    fixed_scale: Option<f64>,
) -> Result<(GreennessTable, GreennessLoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_greenness(file, items, recompute, fixed_scale)
}

pub fn read_greenness<R: std::io::Read>(
    reader: R,
    items: &IdIndex,
    recompute: bool,
    fixed_scale: Option<f64>,
) -> Result<(GreennessTable, GreennessLoadReport)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("item_id").ok_or_else(|| Error::Schema("missing column \"item_id\"".into()))?;
    let co2_col = col("co2_kg");
    let g_col = col("greenness");
    if co2_col.is_none() && (g_col.is_none() || recompute) {
        return Err(Error::Schema("need a \"co2_kg\" column to compute greenness".into()));
    }

    let mut rows: Vec<(String, Option<f64>, Option<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |c: Option<usize>| -> Result<Option<f64>> {
            match c.and_then(|c| rec.get(c)).map(str::trim) {
                None | Some("") => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|_| Error::Row {
                    line,
                    message: format!("unparsable number {v:?}"),
                }),
            }
        };
        let id = rec.get(id_col).unwrap_or_default().trim().to_owned();
        rows.push((id, num(co2_col)?, num(g_col)?));
    }

    let use_file_greenness = g_col.is_some() && !recompute && rows.iter().all(|r| r.2.is_some());
    let scale = if use_file_greenness {
        None
    } else {
        Some(match fixed_scale {
            Some(s) => GreennessScale::fixed(s)?,
            None => {
                let co2: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
                GreennessScale::Calibrated(calibrate(&co2)?)
            }
        })
    };

    let mut entries = vec![None; items.len()];
    let mut report = GreennessLoadReport {
        rows: rows.len(),
        recomputed: scale.is_some(),
        ..Default::default()
    };
    for (id, co2, g) in rows {
        let Some(ix) = items.get(&id) else {
            report.unmatched_items += 1;
            continue;
        };
        let greenness = match (&scale, co2, g) {
            (None, _, Some(g)) => g,
            (Some(s), Some(c), _) => s.apply(c)?,
            _ => return Err(Error::Schema(format!("item {id:?} has neither CO2-eq nor greenness"))),
        };
        entries[ix] = Some(ItemFootprint { co2_kg: co2, greenness });
    }
    Ok((GreennessTable::from_entries(entries, scale)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn table_cells_match_source_decimals() {
        assert_eq!(to_grams(Category::Liquids, Unit::Cup, 1.0).unwrap(), 236.59);
        assert_eq!(to_grams(Category::Flours, Unit::Tablespoon, 2.0).unwrap(), 15.64);
        assert_eq!(to_grams(Category::Nuts, Unit::Grams, 12.5).unwrap(), 12.5);
        assert_eq!(to_grams(Category::Spices, Unit::Pinch, 1.0).unwrap(), 0.36);
        assert_eq!(conversion_table().row(Category::Flours).represented_by, "all-purpose flower");
    }

    #[test]
    fn na_cells_are_conversion_errors() {
        let err = to_grams(Category::Nuts, Unit::Teaspoon, 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("na.") && msg.contains("nuts") && msg.contains("teaspoon"), "{msg}");
        assert!(to_grams(Category::FruitsAndVegetables, Unit::Tablespoon, 1.0).is_err());
    }

    #[test]
    fn non_positive_amount_rejected() {
        assert!(to_grams(Category::Liquids, Unit::Cup, 0.0).is_err());
        assert!(to_grams(Category::Liquids, Unit::Cup, f64::NAN).is_err());
    }

    #[test]
    fn parses_units_and_categories() {
        assert_eq!("Tbsp".parse::<Unit>().unwrap(), Unit::Tablespoon);
        assert_eq!("fruits and vegetables".parse::<Category>().unwrap(), Category::FruitsAndVegetables);
        assert!("ounce".parse::<Unit>().is_err());
    }

    #[test]
    fn recipe_co2_examples() {
        let two = EmissionFactor::new("beef", 2.0).unwrap();
        let r = recipe_co2(&[(1000.0, &two)], DEFAULT_THRESHOLD_G).unwrap();
        assert_eq!(r.co2_kg, 2.0);

        let four = EmissionFactor::new("a", 4.0).unwrap();
        let hundred = EmissionFactor::new("b", 100.0).unwrap();
        let r = recipe_co2(&[(500.0, &four), (30.0, &hundred)], 50.0).unwrap();
        assert_eq!(r.co2_kg, 2.0);
        assert_eq!((r.kept, r.dropped), (1, 1));

        let one = EmissionFactor::new("c", 1.0).unwrap();
        let r = recipe_co2(&[(49.9, &one)], 50.0).unwrap();
        assert_eq!(r.co2_kg, 0.0);
        assert!(r.no_significant_ingredients);
    }

    #[test]
    fn negative_factor_rejected() {
        assert!(EmissionFactor::new("x", -1.0).is_err());
    }

    #[test]
    fn calibration_examples() {
        let cal = calibrate(&[0.1, 1.0, 100.0]).unwrap();
        assert_relative_eq!(cal.raw_min, 1.01f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(cal.raw_max, 11f64.ln(), max_relative = 1e-14);
        assert!((cal.raw_min - 0.00995).abs() < 1e-5);
        assert!((cal.raw_max - 2.3979).abs() < 1e-4);

        let cal = calibrate(&[0.5, 2.0]).unwrap();
        assert_relative_eq!(cal.raw_min, 1.5f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(cal.raw_max, 3f64.ln(), max_relative = 1e-14);

        assert!(matches!(calibrate(&[3.0, 3.0]), Err(Error::Calibration(_))));
        assert!(calibrate(&[3.0]).is_err());
    }

    #[test]
    fn greenness_examples() {
        let cal = calibrate(&[0.1, 1.0, 100.0]).unwrap();
        assert_eq!(greenness(0.1, &cal).unwrap(), 5.0);
        assert_eq!(greenness(100.0, &cal).unwrap(), 0.0);
        let expected = 5.0 * (2f64.ln() - 1.01f64.ln()) / (11f64.ln() - 1.01f64.ln());
        assert_relative_eq!(greenness(1.0, &cal).unwrap(), expected, max_relative = 1e-12);
        assert!((greenness(1.0, &cal).unwrap() - 1.430).abs() < 1e-3);
        // outside the calibrated range values clamp
        assert_eq!(greenness(0.01, &cal).unwrap(), 5.0);
        assert_eq!(greenness(1e4, &cal).unwrap(), 0.0);
        assert!(matches!(greenness(0.0, &cal), Err(Error::Domain(_))));
        assert!(greenness(-2.0, &cal).is_err());
    }

    #[test]
    fn fixed_scale_fits_reference_entry() {
        // a dataset entry with 4.46 kg CO2-eq listed at greenness 3.37
        let s = fit_fixed_scale(4.46, 3.37).unwrap();
        let scale = GreennessScale::fixed(s).unwrap();
        assert_relative_eq!(scale.apply(4.46).unwrap(), 3.37, max_relative = 1e-12);
        assert_eq!(scale.apply(1e-6).unwrap(), 5.0);
    }

    #[test]
    fn greenness_csv_with_and_without_column() {
        let items = IdIndex::from_ids(["r1", "r2", "r3"]).unwrap();
        let csv = "item_id,co2_kg,greenness\nr1,0.5,4.0\nr2,2.0,1.0\nr9,1.0,2.0\n";
        let (t, rep) = read_greenness(csv.as_bytes(), &items, false, None).unwrap();
        assert_eq!(t.greenness(0), Some(4.0));
        assert_eq!(t.greenness(2), None);
        assert_eq!(rep.unmatched_items, 1);
        assert!(!rep.recomputed);

        let csv = "item_id,co2_kg\nr1,0.5\nr2,2.0\n";
        let (t, rep) = read_greenness(csv.as_bytes(), &items, false, None).unwrap();
        assert!(rep.recomputed);
        assert_eq!(t.greenness(0), Some(5.0));
        assert_eq!(t.greenness(1), Some(0.0));
    }

    #[test]
    fn table_from_co2_writes_back() {
        let items = IdIndex::from_ids(["a", "b", "c"]).unwrap();
        let t = GreennessTable::from_co2(&[Some(0.5), None, Some(2.0)]).unwrap();
        let mut buf = Vec::new();
        t.write_csv_to(&mut buf, &items).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "item_id,co2_kg,greenness\na,0.5,5\nc,2,0\n");
    }
}
