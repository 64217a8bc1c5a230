//! Browser bindings for three interactive views: matched vs min-ISL filter
//! responses for an LFM pulse, a Bezier NLFM pulse with its min-ISL
//! response, and a two-scatterer CLEAN scene.
//!
//! Each exported function returns a JSON string; the plain Rust functions
//! underneath are what the native tests exercise.

use serde::Serialize;
use sidelobe::bga::{design_nlfm, WaveformParams};
use sidelobe::clean::{clean_pipeline, normalized_matched_estimate, simulate_profile, threshold_for_pfa, RangeScene};
use sidelobe::filter_design::{
    build_convolution_matrix, compression_metrics, matched_filter, solve_min_isl, CompressionMetrics, ConvolutionMatrix,
    FilterWeights,
};
use sidelobe::waveform::{generate_lfm, BezierGenome, GENOME_LEN};
use sidelobe::{Result, C64};
use wasm_bindgen::prelude::*;

/// Lowest level plotted; exact zeros would otherwise be `-inf`.
const FLOOR_DB: f64 = -150.0;

fn db_curve(y: &[C64], reference: C64) -> Vec<f64> {
    let r = reference.norm();
    y.iter().map(|v| (20.0 * (v.norm() / r).log10()).max(FLOOR_DB)).collect()
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        FLOOR_DB
    }
}

#[derive(Debug, Serialize)]
pub struct FilterView {
    pub isl_db: f64,
    pub psl_db: f64,
    pub snr_loss_db: f64,
    pub response_db: Vec<f64>,
}

impl FilterView {
    fn new(f: &FilterWeights, s: &ConvolutionMatrix, m: CompressionMetrics) -> Result<Self> {
        let y = s.apply(&f.weights)?;
        Ok(Self {
            isl_db: finite(m.isl_db),
            psl_db: finite(m.psl_db),
            snr_loss_db: m.snr_loss_db,
            response_db: db_curve(&y, y[s.peak_row()]),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct FilterComparison {
    pub matched: FilterView,
    pub min_isl: FilterView,
}

/// Matched and min-ISL responses of a Tukey-tapered LFM.
pub fn compare_filters(bandwidth: f64, pulse_width: f64, sample_rate: f64, taper: f64, filter_length: usize, width: usize) -> Result<FilterComparison> {
    let w = generate_lfm(bandwidth, pulse_width, sample_rate, taper)?;
    let s = build_convolution_matrix(&w, filter_length)?.with_mainlobe(width)?;
    let mf = matched_filter(&w, Some(filter_length))?;
    let mis = solve_min_isl(&s, C64::new(w.energy(), 0.0))?;
    Ok(FilterComparison {
        matched: FilterView::new(&mf, &s, compression_metrics(&mf, &s, w.taper())?)?,
        min_isl: FilterView::new(&mis, &s, compression_metrics(&mis, &s, w.taper())?)?,
    })
}

#[derive(Debug, Serialize)]
pub struct NlfmView {
    pub frequency_mhz: Vec<f64>,
    pub response_db: Vec<f64>,
    pub isl_db: f64,
}

/// NLFM from ten control weights given as fractions (0..1) of half the
/// bandwidth.
pub fn nlfm_view(fractions: &[f64], bandwidth: f64, pulse_width: f64, sample_rate: f64) -> Result<NlfmView> {
    if fractions.len() != GENOME_LEN {
        return Err(sidelobe::Error::DimensionMismatch { expected: GENOME_LEN, got: fractions.len() });
    }
    let mut w = [0.0; GENOME_LEN];
    for (wi, f) in w.iter_mut().zip(fractions) {
        *wi = f.clamp(0.0, 1.0) * bandwidth / 2.0;
    }
    let genome = BezierGenome::new(w, bandwidth)?;
    let params = WaveformParams { bandwidth, pulse_width, sample_rate, filter_length: None, mainlobe_width: 3 };
    let d = design_nlfm(&genome, &params)?;
    Ok(NlfmView {
        frequency_mhz: d.frequency.values.iter().map(|f| f / 1e6).collect(),
        response_db: db_curve(&d.response, d.response[d.matrix.peak_row()]),
        isl_db: finite(d.isl_db),
    })
}

#[derive(Debug, Serialize)]
pub struct CleanView {
    pub truth_db: Vec<f64>,
    pub matched_db: Vec<f64>,
    pub cleaned_db: Vec<f64>,
    pub strong_cells: Vec<usize>,
    pub weak_cell: usize,
    pub weak_true: f64,
    pub weak_matched: f64,
    pub weak_cleaned: f64,
}

/// Strong and weak scatterer in unit-power noise, 64-sample LFM over 128
/// cells; amplitudes are shown in dB relative to one.
pub fn clean_view(ratio_db: f64, weak_amplitude: f64, separation: usize, seed: u64) -> Result<CleanView> {
    const CELLS: usize = 128;
    const STRONG: usize = 40;
    let w = generate_lfm(2e6, 16e-6, 4e6, 0.0)?;
    let s = ConvolutionMatrix::new(w.samples(), CELLS)?;
    let weak_cell = (STRONG + separation.max(1)).min(CELLS - 1);
    let mut a = vec![C64::new(0.0, 0.0); CELLS];
    a[STRONG] = C64::new(weak_amplitude * 10f64.powf(ratio_db / 20.0), 0.0);
    a[weak_cell] = C64::new(0.0, weak_amplitude);
    let y = simulate_profile(&s, &RangeScene::new(a.clone(), 1.0, seed)?)?;
    let eta = threshold_for_pfa(&s, 1.0, 1e-6)?;
    let r = clean_pipeline(&s, &y, 1.0, eta)?;
    let matched: Vec<C64> = (0..CELLS).map(|k| normalized_matched_estimate(&s, &y, k)).collect::<Result<_>>()?;
    let one = C64::new(1.0, 0.0);
    Ok(CleanView {
        truth_db: db_curve(&a, one),
        matched_db: db_curve(&matched, one),
        cleaned_db: db_curve(&r.amplitudes, one),
        strong_cells: r.strong.cells,
        weak_cell,
        weak_true: weak_amplitude,
        weak_matched: matched[weak_cell].norm(),
        weak_cleaned: r.amplitudes[weak_cell].norm(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = compareFilters)]
pub fn compare_filters_js(bandwidth: f64, pulse_width: f64, sample_rate: f64, taper: f64, filter_length: usize, width: usize) -> std::result::Result<String, JsError> {
    to_js(compare_filters(bandwidth, pulse_width, sample_rate, taper, filter_length, width))
}

#[wasm_bindgen(js_name = nlfmView)]
pub fn nlfm_view_js(fractions: Vec<f64>, bandwidth: f64, pulse_width: f64, sample_rate: f64) -> std::result::Result<String, JsError> {
    to_js(nlfm_view(&fractions, bandwidth, pulse_width, sample_rate))
}

#[wasm_bindgen(js_name = cleanView)]
pub fn clean_view_js(ratio_db: f64, weak_amplitude: f64, separation: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_js(clean_view(ratio_db, weak_amplitude, separation, seed))
}
