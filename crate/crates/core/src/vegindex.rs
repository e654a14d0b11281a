//! Vegetation indices from surface reflectance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum IndexKind {
    Ndvi,
    Savi,
    Osavi,
    Msavi,
    Evi,
    Wdrvi,
    Endvi,
}

impl IndexKind {
    pub const ALL: [IndexKind; 7] = [
        IndexKind::Ndvi,
        IndexKind::Savi,
        IndexKind::Osavi,
        IndexKind::Msavi,
        IndexKind::Evi,
        IndexKind::Wdrvi,
        IndexKind::Endvi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IndexKind::Ndvi => "ndvi",
            IndexKind::Savi => "savi",
            IndexKind::Osavi => "osavi",
            IndexKind::Msavi => "msavi",
            IndexKind::Evi => "evi",
            IndexKind::Wdrvi => "wdrvi",
            IndexKind::Endvi => "endvi",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        IndexKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| format!("unknown vegetation index `{s}`"))
    }
}

/// Tunable constants of the soil-adjusted and enhanced indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub savi_l: f64,
    pub osavi_l: f64,
    pub wdrvi_alpha: f64,
    pub evi_g: f64,
    pub evi_c1: f64,
    pub evi_c2: f64,
    pub evi_l: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            savi_l: 0.5,
            osavi_l: 0.16,
            wdrvi_alpha: 0.2,
            evi_g: 2.5,
            evi_c1: 6.0,
            evi_c2: 7.5,
            evi_l: 1.0,
        }
    }
}

/// Surface reflectance of the four bands the indices draw on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflectance {
    pub blue: f64,
    pub green: f64,
    pub red: f64,
    pub nir: f64,
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::Domain(format!("{what}: zero denominator")));
    }
    Ok(num / den)
}

pub fn compute_index(kind: IndexKind, r: Reflectance, params: &IndexParams) -> Result<f64> {
    let Reflectance {
        blue,
        green,
        red,
        nir,
    } = r;
    if ![blue, green, red, nir].iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("non-finite reflectance".into()));
    }
    match kind {
        IndexKind::Ndvi => ratio(nir - red, nir + red, "NDVI"),
        IndexKind::Savi => {
            let l = params.savi_l;
            ratio((1.0 + l) * (nir - red), nir + red + l, "SAVI")
        }
        IndexKind::Osavi => {
            let l = params.osavi_l;
            ratio((1.0 + l) * (nir - red), nir + red + l, "OSAVI")
        }
        IndexKind::Msavi => {
            let a = 2.0 * nir + 1.0;
            let radicand = a * a - 8.0 * (nir - red);
            if radicand < 0.0 {
                return Err(Error::Domain(format!("MSAVI: negative radicand {radicand}")));
            }
            Ok((a - radicand.sqrt()) / 2.0)
        }
        IndexKind::Evi => ratio(
            params.evi_g * (nir - red),
            nir + params.evi_c1 * red - params.evi_c2 * blue + params.evi_l,
            "EVI",
        ),
        IndexKind::Wdrvi => {
            let a = params.wdrvi_alpha;
            ratio(a * nir - red, a * nir + red, "WDRVI")
        }
        IndexKind::Endvi => {
            let ng = nir + green;
            ratio(ng - 2.0 * blue, ng + 2.0 * blue, "ENDVI")
        }
    }
}
