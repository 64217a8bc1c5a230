//! Recursive-least-squares refinement of a mismatched filter.
//!
//! Rows of the convolution matrix are presented cyclically together with
//! the matching sample of a sidelobe-free desired response. After every
//! update the ISL of the current weights is recorded; the iterate with the
//! lowest ISL (the starting weights included) is kept.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter_design::{isl_of_response, ConvolutionMatrix, FilterWeights, Provenance};
use crate::linalg::{czero, CMatrix, C64};

/// Default exponential forgetting factor.
pub const DEFAULT_FORGETTING: f64 = 0.998;
/// Default initial inverse-correlation scale, relative to the mean pulse
/// power.
pub const DEFAULT_REGULARIZATION_GAIN: f64 = 1e2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainlobeShape {
    Flat,
    #[default]
    Triangular,
}

/// Target compressed output: zero everywhere except a centred mainlobe.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredResponse {
    pub values: Vec<C64>,
    pub mainlobe_width: usize,
    pub peak: C64,
}

/// Build a desired response of length `n_out`. A triangular mainlobe falls
/// off linearly from `peak` at the centre, reaching `peak/2` on the
/// neighbours of a three-sample mainlobe; a flat one holds `peak` across.
pub fn build_desired_response(n_out: usize, mainlobe_width: usize, peak: C64, shape: MainlobeShape) -> Result<DesiredResponse> {
    let rows = crate::filter_design::mainlobe_rows(n_out, mainlobe_width)?;
    let centre = (n_out - 1) / 2;
    let half = mainlobe_width / 2;
    let mut values = vec![czero(); n_out];
    for r in rows {
        let offset = r.abs_diff(centre);
        values[r] = match shape {
            MainlobeShape::Flat => peak,
            MainlobeShape::Triangular => peak * (1.0 - offset as f64 / (half + 1) as f64),
        };
    }
    Ok(DesiredResponse { values, mainlobe_width, peak })
}

/// Exponentially weighted RLS state.
#[derive(Debug, Clone)]
pub struct RlsState {
    pub weights: Vec<C64>,
    /// Inverse correlation matrix `P`, kept Hermitian.
    pub inverse_correlation: CMatrix,
    pub forgetting_factor: f64,
    pub regularization: f64,
    pub iteration: usize,
    pu: Vec<C64>,
}

impl RlsState {
    /// Start from `weights` with `P = regularization · I`.
    pub fn new(weights: Vec<C64>, forgetting_factor: f64, regularization: f64) -> Result<Self> {
        if !(forgetting_factor > 0.0 && forgetting_factor <= 1.0) {
            return Err(Error::Domain(format!("forgetting factor must lie in (0, 1], got {forgetting_factor}")));
        }
        if !(regularization > 0.0) || !regularization.is_finite() {
            return Err(Error::Domain(format!("regularization must be positive, got {regularization}")));
        }
        let l = weights.len();
        if l == 0 {
            return Err(Error::InvalidSize { what: "filter length", got: 0 });
        }
        let mut p = CMatrix::zeros(l, l);
        for i in 0..l {
            p[(i, i)] = C64::new(regularization, 0.0);
        }
        Ok(Self {
            weights,
            inverse_correlation: p,
            forgetting_factor,
            regularization,
            iteration: 0,
            pu: vec![czero(); l],
        })
    }

    /// One update with input row `row` and desired output `desired`.
    pub fn step(&mut self, row: &[C64], desired: C64) -> Result<()> {
        if row.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: row.len() });
        }
        let lo = row.iter().position(|x| *x != czero()).unwrap_or(row.len());
        let hi = row.iter().rposition(|x| *x != czero()).map_or(lo, |i| i + 1);
        self.step_on(row, lo..hi, desired)
    }

    /// Update where `row` is known to vanish outside `support`.
    pub(crate) fn step_on(&mut self, row: &[C64], support: std::ops::Range<usize>, desired: C64) -> Result<()> {
        let l = self.weights.len();
        let lambda = self.forgetting_factor;
        let p = &mut self.inverse_correlation;

        // pu = P·conj(row)
        for (i, out) in self.pu.iter_mut().enumerate() {
            let pr = &p.row(i)[support.clone()];
            *out = pr.iter().zip(&row[support.clone()]).fold(czero(), |acc, (a, b)| acc + a * b.conj());
        }
        let quad: f64 = support.clone().map(|c| (row[c] * self.pu[c]).re).sum();
        let denom = lambda + quad;
        let error = desired - support.clone().map(|c| row[c] * self.weights[c]).sum::<C64>();

        let inv = 1.0 / denom;
        for (w, pu) in self.weights.iter_mut().zip(&self.pu) {
            *w += pu * (error * inv);
        }

        // P ← (P − k·rowᵀP)/λ with rowᵀP = (P·conj(row))ᴴ, then (P + Pᴴ)/2
        let inv_lambda = 1.0 / lambda;
        for i in 0..l {
            let ki = self.pu[i] * inv;
            let prow = p.row_mut(i);
            for (pij, puj) in prow.iter_mut().zip(&self.pu) {
                *pij = (*pij - ki * puj.conj()) * inv_lambda;
            }
        }
        for i in 0..l {
            let d = p[(i, i)].re;
            p[(i, i)] = C64::new(d, 0.0);
            for j in (i + 1)..l {
                let v = (p[(i, j)] + p[(j, i)].conj()) * 0.5;
                p[(i, j)] = v;
                p[(j, i)] = v.conj();
            }
        }

        self.iteration += 1;
        if !denom.is_finite() || denom <= 0.0 || self.weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::Diverged { iteration: self.iteration, partial: None });
        }
        Ok(())
    }
}

/// Free-function form of [`RlsState::step`].
pub fn rls_step(state: &mut RlsState, row: &[C64], desired: C64) -> Result<()> {
    state.step(row, desired)
}

/// Per-iteration ISL record of an RLS run.
#[derive(Debug, Clone, PartialEq)]
pub struct IslTrace {
    /// Unnormalised sidelobe energy `‖S_m W‖²`.
    pub raw: Vec<f64>,
    /// ISL in dB relative to the peak response.
    pub db: Vec<f64>,
    pub best_iteration: usize,
    pub best_weights: FilterWeights,
}

impl IslTrace {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn best_db(&self) -> f64 {
        self.db[self.best_iteration]
    }
}

/// RLS run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlsParams {
    pub iterations: usize,
    pub forgetting_factor: f64,
    pub regularization: f64,
}

impl RlsParams {
    /// Defaults for a given pulse: `λ = 0.998`, `P(0) = 100·mean|s|²·I`.
    pub fn for_pulse(pulse: &[C64], iterations: usize) -> Self {
        let power = pulse.iter().map(|s| s.norm_sqr()).sum::<f64>() / pulse.len().max(1) as f64;
        Self {
            iterations,
            forgetting_factor: DEFAULT_FORGETTING,
            regularization: DEFAULT_REGULARIZATION_GAIN * power,
        }
    }
}

/// Run `iterations` ISL evaluations: entry 0 scores `w_init`, entry `i`
/// scores the weights after `i` RLS updates (row `(i-1) mod (N+L-1)`).
pub fn optimize(s: &ConvolutionMatrix, desired: &DesiredResponse, w_init: &FilterWeights, params: &RlsParams) -> Result<IslTrace> {
    if w_init.len() != s.n_filter() {
        return Err(Error::DimensionMismatch { expected: s.n_filter(), got: w_init.len() });
    }
    if desired.values.len() != s.n_out() {
        return Err(Error::DimensionMismatch { expected: s.n_out(), got: desired.values.len() });
    }
    if params.iterations == 0 {
        return Err(Error::InvalidSize { what: "iteration count", got: 0 });
    }
    let mut state = RlsState::new(w_init.weights.clone(), params.forgetting_factor, params.regularization)?;
    let mainlobe = s.mainlobe();
    let r0 = s.peak_row();
    let n_out = s.n_out();

    let mut row = vec![czero(); s.n_filter()];
    let mut raw = Vec::with_capacity(params.iterations);
    let mut db = Vec::with_capacity(params.iterations);
    let mut best_iteration = 0;
    let mut best_weights = w_init.weights.clone();

    for it in 0..params.iterations {
        if it > 0 {
            let r = (it - 1) % n_out;
            s.fill_row(r, &mut row);
            if let Err(e) = state.step_on(&row, s.row_support(r), desired.values[r]) {
                let iteration = match e {
                    Error::Diverged { iteration, .. } => iteration,
                    _ => it,
                };
                let partial = IslTrace {
                    raw,
                    db,
                    best_iteration,
                    best_weights: FilterWeights::new(best_weights, Provenance::Rls, w_init.mainlobe_constraint)?,
                };
                return Err(Error::Diverged { iteration, partial: Some(Box::new(partial)) });
            }
        }
        let y = s.apply(&state.weights)?;
        let energy: f64 = y
            .iter()
            .enumerate()
            .filter(|(r, _)| !mainlobe.contains(r))
            .map(|(_, v)| v.norm_sqr())
            .sum();
        let level = isl_of_response(&y, &mainlobe, r0).unwrap_or(f64::INFINITY);
        raw.push(energy);
        db.push(level);
        if level < db[best_iteration] {
            best_iteration = it;
            best_weights.clone_from(&state.weights);
        }
    }
    let peak = s.apply(&best_weights)?[r0];
    Ok(IslTrace {
        raw,
        db,
        best_iteration,
        best_weights: FilterWeights::new(best_weights, Provenance::Rls, peak)?,
    })
}

/// CSV table `iteration,isl_raw,isl_db,best`.
pub fn export_trace(trace: &IslTrace) -> String {
    let mut out = String::from("iteration,isl_raw,isl_db,best\n");
    for (i, (raw, db)) in trace.raw.iter().zip(&trace.db).enumerate() {
        let _ = writeln!(out, "{i},{raw},{},{}", crate::io::fmt_db(*db), u8::from(i == trace.best_iteration));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter_design::{solve_min_isl, ConvolutionMatrix};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn desired_response_shapes() {
        let d = build_desired_response(5, 1, c(1.0, 0.0), MainlobeShape::Triangular).unwrap();
        assert_eq!(d.values.iter().map(|v| v.re).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = build_desired_response(7, 3, c(1.0, 0.0), MainlobeShape::Triangular).unwrap();
        assert_eq!(d.values.iter().map(|v| v.re).collect::<Vec<_>>(), vec![0.0, 0.0, 0.5, 1.0, 0.5, 0.0, 0.0]);
        let d = build_desired_response(7, 3, c(2.0, 0.0), MainlobeShape::Flat).unwrap();
        assert_eq!(d.values.iter().map(|v| v.re).collect::<Vec<_>>(), vec![0.0, 0.0, 2.0, 2.0, 2.0, 0.0, 0.0]);
        let d = build_desired_response(719, 3, c(240.0, 0.0), MainlobeShape::Triangular).unwrap();
        assert_eq!(d.values[359], c(240.0, 0.0));
        assert_eq!(d.values.iter().filter(|v| v.norm() > 0.0).count(), 3);
        assert!(matches!(build_desired_response(7, 4, c(1.0, 0.0), MainlobeShape::Flat), Err(Error::InvalidWidth(4))));
    }

    #[test]
    fn zero_row_only_scales_p() {
        let mut st = RlsState::new(vec![c(1.0, 2.0), c(-1.0, 0.5)], 0.5, 3.0).unwrap();
        let before = st.weights.clone();
        st.step(&[czero(), czero()], c(5.0, 0.0)).unwrap();
        assert_eq!(st.weights, before);
        assert_eq!(st.inverse_correlation[(0, 0)], c(6.0, 0.0));
        assert_eq!(st.inverse_correlation[(0, 1)], czero());
        assert_eq!(st.iteration, 1);
    }

    #[test]
    fn scalar_step_closed_form() {
        let p0 = 1e6;
        let d = c(3.0, -2.0);
        let mut st = RlsState::new(vec![czero()], 1.0, p0).unwrap();
        st.step(&[c(1.0, 0.0)], d).unwrap();
        let expect = d * (p0 / (1.0 + p0));
        assert!((st.weights[0] - expect).norm() < 1e-12);
        assert!((st.inverse_correlation[(0, 0)].re - p0 / (1.0 + p0)).abs() < 1e-9);
    }

    #[test]
    fn step_rejects_wrong_row_length() {
        let mut st = RlsState::new(vec![czero(); 3], 1.0, 1.0).unwrap();
        assert!(st.step(&[czero(); 2], czero()).is_err());
        assert!(RlsState::new(vec![czero()], 1.5, 1.0).is_err());
        assert!(RlsState::new(vec![czero()], 0.9, 0.0).is_err());
    }

    #[test]
    fn single_iteration_trace() {
        let b = crate::waveform::barker(7).unwrap();
        let s = ConvolutionMatrix::new(b.samples(), 14).unwrap().with_mainlobe(3).unwrap();
        let w = solve_min_isl(&s, c(7.0, 0.0)).unwrap();
        let d = build_desired_response(s.n_out(), 3, c(7.0, 0.0), MainlobeShape::Triangular).unwrap();
        let params = RlsParams { iterations: 1, forgetting_factor: 0.998, regularization: 100.0 };
        let t = optimize(&s, &d, &w, &params).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.best_iteration, 0);
        assert_eq!(t.best_weights.weights, w.weights);
        assert_eq!(t.best_weights.provenance, Provenance::Rls);
    }

    #[test]
    fn export_marks_best_row() {
        let t = IslTrace {
            raw: vec![3.0, 1.0, 2.0],
            db: vec![-10.0, -20.0, f64::NEG_INFINITY],
            best_iteration: 1,
            best_weights: FilterWeights::new(vec![c(1.0, 0.0)], Provenance::Rls, c(1.0, 0.0)).unwrap(),
        };
        let csv = export_trace(&t);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec!["iteration,isl_raw,isl_db,best", "0,3,-10,0", "1,1,-20,1", "2,2,-inf,0"]);
    }
}
