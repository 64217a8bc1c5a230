//! File formats: complex sample tables, JSON sidecars, range scenes and
//! profiles. Everything is written in a fixed order with shortest
//! round-trip float formatting so reruns are byte-identical.

use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter_design::{CompressionMetrics, FilterWeights, Provenance};
use crate::linalg::C64;
use crate::waveform::Waveform;

/// dB values that may be infinite serialise as the strings `"-inf"` /
/// `"inf"`; finite values as numbers.
pub mod db {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::fmt_db(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a dB value: {other}"))),
            },
        }
    }
}

pub fn fmt_db(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

/// `index,re,im` table. Negative zero is written as `0`.
pub fn complex_csv(values: &[C64]) -> String {
    let mut out = String::from("index,re,im\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", v.re + 0.0, v.im + 0.0);
    }
    out
}

#[derive(Debug, Deserialize)]
struct ComplexRow {
    index: usize,
    re: f64,
    im: f64,
}

/// Parse an `index,re,im` table; indices must run 0, 1, 2, ...
pub fn read_complex_csv(reader: impl Read) -> Result<Vec<C64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (expect, row) in rdr.deserialize::<ComplexRow>().enumerate() {
        let row = row?;
        if row.index != expect {
            return Err(Error::InvalidInput(format!("row index {} out of sequence (expected {expect})", row.index)));
        }
        out.push(C64::new(row.re, row.im));
    }
    Ok(out)
}

/// JSON sidecar of a waveform table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformMeta {
    pub sample_rate: f64,
    pub bandwidth: f64,
    pub pulse_width: f64,
    pub taper_alpha: f64,
}

impl From<&Waveform> for WaveformMeta {
    fn from(w: &Waveform) -> Self {
        Self {
            sample_rate: w.sample_rate(),
            bandwidth: w.bandwidth(),
            pulse_width: w.pulse_width(),
            taper_alpha: w.taper_alpha(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for ComplexValue {
    fn from(c: C64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<ComplexValue> for C64 {
    fn from(c: ComplexValue) -> Self {
        C64::new(c.re, c.im)
    }
}

/// JSON sidecar of a filter coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterMeta {
    pub provenance: Provenance,
    pub filter_length: usize,
    pub alpha: ComplexValue,
    #[serde(with = "db")]
    pub isl_db: f64,
    #[serde(with = "db")]
    pub psl_db: f64,
    #[serde(with = "db")]
    pub snr_loss_db: f64,
}

impl FilterMeta {
    pub fn new(w: &FilterWeights, metrics: &CompressionMetrics) -> Self {
        Self {
            provenance: w.provenance,
            filter_length: w.len(),
            alpha: w.mainlobe_constraint.into(),
            isl_db: metrics.isl_db,
            psl_db: metrics.psl_db,
            snr_loss_db: metrics.snr_loss_db,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// One nonzero scatterer of a range scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneCell {
    pub index: usize,
    pub re: f64,
    pub im: f64,
}

/// Range scene file: sparse scatterer list plus noise description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub cells: Vec<SceneCell>,
    pub noise_power: f64,
    pub seed: u64,
}

/// `cell,re,im,power_db` table; power is `20·log10|v|`.
pub fn profile_csv(values: &[C64]) -> String {
    let mut out = String::from("cell,re,im,power_db\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", v.re, v.im, fmt_db(20.0 * v.norm().log10()));
    }
    out
}

/// Plain numeric table with a header; used for the figure data files.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_db(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn db_fields_serialise_infinity_as_string() {
        let m = CompressionMetrics {
            isl_db: f64::NEG_INFINITY,
            psl_db: -20.5,
            snr_loss_db: 0.0,
            mainlobe_width_samples: 3,
        };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"isl_db":"-inf","psl_db":-20.5,"snr_loss_db":0.0,"mainlobe_width_samples":3}"#);
        let back: CompressionMetrics = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn profile_of_zero_cell_is_minus_inf() {
        let s = profile_csv(&[C64::new(0.0, 0.0), C64::new(10.0, 0.0)]);
        assert_eq!(s, "cell,re,im,power_db\n0,0,0,-inf\n1,10,0,20\n");
    }

    #[test]
    fn out_of_order_index_is_rejected() {
        let bad = "index,re,im\n0,1,0\n2,0,1\n";
        assert!(read_complex_csv(bad.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn complex_csv_round_trips(v in prop::collection::vec((-1e9f64..1e9, -1e9f64..1e9), 0..50)) {
            let values: Vec<C64> = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
            let back = read_complex_csv(complex_csv(&values).as_bytes()).unwrap();
            prop_assert_eq!(back, values);
        }
    }
}
