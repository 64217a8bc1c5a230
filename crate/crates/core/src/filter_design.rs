//! Convolution-matrix model of pulse compression, the closed-form
//! minimum-ISL mismatched filter, and sidelobe/SNR metrics.
//!
//! A length-`L` filter `W` applied to a length-`N` pulse `s` produces the
//! `N + L - 1` output `y = S·W`, where column `c` of `S` holds the pulse at
//! rows `c..c+N`. The mainlobe is an odd, centred block of rows around
//! `(N + L - 2) / 2`; every other row is sidelobe.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{czero, norm_sqr, CMatrix, Cholesky, C64};
use crate::waveform::Waveform;

/// Transmit convolution matrix plus the mainlobe row mask. Only the pulse
/// is stored; the dense form is built on request.
#[derive(Debug, Clone)]
pub struct ConvolutionMatrix {
    pulse: Vec<C64>,
    n_filter: usize,
    mainlobe: Range<usize>,
}

impl ConvolutionMatrix {
    /// Matrix for the given pulse and filter length, with a one-sample
    /// mainlobe.
    pub fn new(pulse: &[C64], filter_length: usize) -> Result<Self> {
        if pulse.is_empty() {
            return Err(Error::InvalidInput("zero-length waveform".into()));
        }
        if filter_length == 0 {
            return Err(Error::InvalidSize { what: "filter length", got: 0 });
        }
        let n_out = pulse.len() + filter_length - 1;
        Ok(Self {
            pulse: pulse.to_vec(),
            n_filter: filter_length,
            mainlobe: mainlobe_rows(n_out, 1)?,
        })
    }

    /// Replace the mainlobe mask by a centred block of `width` rows.
    pub fn with_mainlobe(mut self, width: usize) -> Result<Self> {
        self.mainlobe = mainlobe_rows(self.n_out(), width)?;
        Ok(self)
    }

    /// Dense `(N+L-1)×L` matrix.
    pub fn entries(&self) -> CMatrix {
        let n = self.pulse.len();
        CMatrix::from_fn(self.n_out(), self.n_filter, |r, c| {
            if r >= c && r - c < n {
                self.pulse[r - c]
            } else {
                czero()
            }
        })
    }

    pub fn pulse(&self) -> &[C64] {
        &self.pulse
    }

    pub fn n_waveform(&self) -> usize {
        self.pulse.len()
    }

    pub fn n_filter(&self) -> usize {
        self.n_filter
    }

    pub fn n_out(&self) -> usize {
        self.pulse.len() + self.n_filter - 1
    }

    pub fn mainlobe(&self) -> Range<usize> {
        self.mainlobe.clone()
    }

    pub fn mainlobe_width(&self) -> usize {
        self.mainlobe.len()
    }

    /// Row at which the constrained peak sits.
    pub fn peak_row(&self) -> usize {
        (self.n_out() - 1) / 2
    }

    /// Row `r` as a dense length-`L` vector.
    pub fn row(&self, r: usize) -> Vec<C64> {
        let mut out = vec![czero(); self.n_filter];
        self.fill_row(r, &mut out);
        out
    }

    pub(crate) fn fill_row(&self, r: usize, out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = czero());
        for c in self.row_support(r) {
            out[c] = self.pulse[r - c];
        }
    }

    /// Columns `c` for which row `r` has a (structurally) nonzero entry.
    pub fn row_support(&self, r: usize) -> Range<usize> {
        let n = self.pulse.len();
        let lo = (r + 1).saturating_sub(n);
        let hi = (r + 1).min(self.n_filter);
        lo..hi
    }

    /// `S·W`
    pub fn apply(&self, weights: &[C64]) -> Result<Vec<C64>> {
        if weights.len() != self.n_filter {
            return Err(Error::DimensionMismatch { expected: self.n_filter, got: weights.len() });
        }
        Ok(convolve(&self.pulse, weights))
    }

    /// Zero-padded, centre-aligned pulse: the vector `s̃` with
    /// `s̃ᴴ W = (S·W)[peak_row]`.
    pub fn steering(&self) -> Vec<C64> {
        let r0 = self.peak_row();
        let n = self.pulse.len();
        (0..self.n_filter)
            .map(|c| if r0 >= c && r0 - c < n { self.pulse[r0 - c].conj() } else { czero() })
            .collect()
    }

    /// `Sᴴ y`
    pub fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.n_out() {
            return Err(Error::DimensionMismatch { expected: self.n_out(), got: y.len() });
        }
        Ok((0..self.n_filter)
            .map(|c| self.pulse.iter().zip(&y[c..]).fold(czero(), |acc, (s, v)| acc + s.conj() * v))
            .collect())
    }

    /// `SᴴS`, Toeplitz with the pulse autocorrelation along its diagonals.
    pub fn gram(&self) -> CMatrix {
        let n = self.pulse.len();
        let l = self.n_filter;
        // acf[n-1+lag] = Σ_m conj(s_m) s_{m+lag}
        let acf: Vec<C64> = (0..2 * n - 1)
            .map(|i| {
                let lag = i as isize - (n as isize - 1);
                (0..n)
                    .filter_map(|m| {
                        let j = m as isize + lag;
                        (0..n as isize).contains(&j).then(|| self.pulse[m].conj() * self.pulse[j as usize])
                    })
                    .sum()
            })
            .collect();
        CMatrix::from_fn(l, l, |i, j| {
            let lag = i as isize - j as isize;
            if lag.unsigned_abs() < n {
                acf[(n as isize - 1 + lag) as usize]
            } else {
                czero()
            }
        })
    }

    /// `S_mᴴ S_m`, the Gram matrix of the sidelobe rows: `SᴴS` minus the
    /// mainlobe rows' outer products.
    pub fn sidelobe_gram(&self) -> CMatrix {
        let mut g = self.gram();
        for r in self.mainlobe.clone() {
            let support = self.row_support(r);
            let row = self.row(r);
            for i in support.clone() {
                let a = row[i].conj();
                for j in support.clone() {
                    g[(i, j)] -= a * row[j];
                }
            }
        }
        g
    }

    /// `‖S_m W‖²`: raw sidelobe energy of the compressed output.
    pub fn sidelobe_energy(&self, weights: &[C64]) -> Result<f64> {
        let y = self.apply(weights)?;
        Ok(sidelobe_energy_of(&y, &self.mainlobe))
    }
}

fn sidelobe_energy_of(response: &[C64], mainlobe: &Range<usize>) -> f64 {
    response
        .iter()
        .enumerate()
        .filter(|(r, _)| !mainlobe.contains(r))
        .map(|(_, y)| y.norm_sqr())
        .sum()
}

pub fn build_convolution_matrix(w: &Waveform, filter_length: usize) -> Result<ConvolutionMatrix> {
    ConvolutionMatrix::new(w.samples(), filter_length)
}

/// Centred block of `width` row indices in an output of length `n_out`.
pub fn mainlobe_rows(n_out: usize, width: usize) -> Result<Range<usize>> {
    if width == 0 || width % 2 == 0 || width > n_out {
        return Err(Error::InvalidWidth(width));
    }
    let centre = (n_out - 1) / 2;
    let half = width / 2;
    if centre < half || centre + half >= n_out {
        return Err(Error::InvalidWidth(width));
    }
    Ok(centre - half..centre + half + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Matched,
    MinIsl,
    Rls,
    External,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Matched => "matched",
            Provenance::MinIsl => "min_isl",
            Provenance::Rls => "rls",
            Provenance::External => "external",
        })
    }
}

/// Receive filter coefficients and how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterWeights {
    pub weights: Vec<C64>,
    pub provenance: Provenance,
    /// Constrained peak response (`α`); for filters not designed under a
    /// peak constraint this is the achieved centre-row response.
    pub mainlobe_constraint: C64,
}

impl FilterWeights {
    pub fn new(weights: Vec<C64>, provenance: Provenance, mainlobe_constraint: C64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSize { what: "filter length", got: 0 });
        }
        if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::InvalidInput("filter weights must be finite".into()));
        }
        Ok(Self { weights, provenance, mainlobe_constraint })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Minimum-ISL mismatched filter with the centre-row response pinned to
/// `alpha`:
///
/// `W = α (S_mᴴS_m)⁻¹ s̃ / (s̃ᴴ (S_mᴴS_m)⁻¹ s̃)`
pub fn solve_min_isl(s: &ConvolutionMatrix, alpha: C64) -> Result<FilterWeights> {
    let steer = s.steering();
    let steer_energy = norm_sqr(&steer);
    if steer_energy == 0.0 {
        return Err(Error::InvalidInput("pulse does not reach the peak row".into()));
    }
    if s.mainlobe_width() == s.n_out() {
        // no sidelobe rows: every filter meeting the constraint has zero
        // ISL; take the minimum-norm one
        let w = steer.iter().map(|x| alpha * x / steer_energy).collect();
        return FilterWeights::new(w, Provenance::MinIsl, alpha);
    }
    let chol = Cholesky::factor(&s.sidelobe_gram())?;
    let g = chol.solve(&steer);
    let denom: C64 = steer.iter().zip(&g).map(|(a, b)| a.conj() * b).sum();
    let scale = alpha / denom;
    FilterWeights::new(g.into_iter().map(|x| x * scale).collect(), Provenance::MinIsl, alpha)
}

/// Time-reversed conjugate of the pulse, centred in `filter_length` taps
/// (defaults to the pulse length).
pub fn matched_filter(w: &Waveform, filter_length: Option<usize>) -> Result<FilterWeights> {
    let n = w.len();
    if n == 0 {
        return Err(Error::InvalidInput("zero-length waveform".into()));
    }
    let l = filter_length.unwrap_or(n);
    if l < n {
        return Err(Error::InvalidSize { what: "matched filter length (must cover the pulse)", got: l });
    }
    let s = ConvolutionMatrix::new(w.samples(), l)?;
    FilterWeights::new(s.steering(), Provenance::Matched, C64::new(w.energy(), 0.0))
}

/// Full linear convolution of `input` with the filter taps.
pub fn apply_filter(w: &FilterWeights, input: &[C64]) -> Result<Vec<C64>> {
    if input.is_empty() {
        return Err(Error::InvalidInput("empty filter input".into()));
    }
    Ok(convolve(input, &w.weights))
}

pub(crate) fn convolve(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![czero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == czero() {
            continue;
        }
        for (o, y) in out[i..i + b.len()].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// Integrated sidelobe level in dB: sidelobe energy relative to the power
/// of the centre-row (peak) response. `-inf` when there are no sidelobes.
pub fn isl(w: &FilterWeights, s: &ConvolutionMatrix) -> Result<f64> {
    let y = s.apply(&w.weights)?;
    isl_of_response(&y, &s.mainlobe(), s.peak_row())
}

pub(crate) fn isl_of_response(y: &[C64], mainlobe: &Range<usize>, peak_row: usize) -> Result<f64> {
    let peak = y[peak_row].norm_sqr();
    if peak == 0.0 {
        return Err(Error::UndefinedRatio("zero mainlobe response"));
    }
    Ok(10.0 * (sidelobe_energy_of(y, mainlobe) / peak).log10())
}

/// Peak sidelobe level in dB: largest sidelobe magnitude relative to the
/// largest mainlobe magnitude.
pub fn psl(response: &[C64], mainlobe: &Range<usize>) -> Result<f64> {
    if mainlobe.is_empty() || mainlobe.end > response.len() {
        return Err(Error::InvalidInput("mainlobe must be a nonempty index range within the response".into()));
    }
    if mainlobe.len() == response.len() {
        return Err(Error::UndefinedRatio("empty sidelobe region"));
    }
    let main = response[mainlobe.clone()].iter().map(|y| y.norm()).fold(0.0, f64::max);
    if main == 0.0 {
        return Err(Error::UndefinedRatio("zero mainlobe response"));
    }
    let side = response
        .iter()
        .enumerate()
        .filter(|(k, _)| !mainlobe.contains(k))
        .map(|(_, y)| y.norm())
        .fold(0.0, f64::max);
    Ok(20.0 * (side / main).log10())
}

/// Normalised two-way SNR loss of transmit/receive amplitude weightings
/// (dB, never positive).
pub fn snr_loss(w_t: &[f64], w_r: &[f64]) -> Result<f64> {
    if w_t.is_empty() || w_t.len() != w_r.len() {
        return Err(Error::DimensionMismatch { expected: w_t.len().max(1), got: w_r.len() });
    }
    let n = w_t.len() as f64;
    let (sum, sum_sq) = w_t.iter().zip(w_r).fold((0.0, 0.0), |(s, q), (a, b)| {
        let p = a * b;
        (s + p, q + p * p)
    });
    if sum_sq == 0.0 {
        return Err(Error::UndefinedRatio("all-zero weighting product"));
    }
    Ok(10.0 * (sum * sum / (n * sum_sq)).log10())
}

/// Receive amplitude profile of a filter: `|W|` at the taps aligned with
/// each transmit sample (sample `n` meets tap `peak_row - n`).
pub fn receive_profile(w: &FilterWeights, s: &ConvolutionMatrix) -> Vec<f64> {
    let r0 = s.peak_row();
    (0..s.n_waveform())
        .map(|n| match r0.checked_sub(n) {
            Some(c) if c < w.len() => w.weights[c].norm(),
            _ => 0.0,
        })
        .collect()
}

/// Sidelobe and efficiency summary of one filter on one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionMetrics {
    #[serde(with = "crate::io::db")]
    pub isl_db: f64,
    #[serde(with = "crate::io::db")]
    pub psl_db: f64,
    #[serde(with = "crate::io::db")]
    pub snr_loss_db: f64,
    pub mainlobe_width_samples: usize,
}

/// Metrics of `w` against the pulse in `s`, using `taper` as the transmit
/// amplitude weighting. Both levels read `-inf` when every output row is
/// mainlobe.
pub fn compression_metrics(w: &FilterWeights, s: &ConvolutionMatrix, taper: &[f64]) -> Result<CompressionMetrics> {
    let y = s.apply(&w.weights)?;
    let isl_db = isl_of_response(&y, &s.mainlobe(), s.peak_row())?;
    let psl_db = if s.mainlobe_width() == s.n_out() {
        f64::NEG_INFINITY
    } else {
        psl(&y, &s.mainlobe())?
    };
    let snr_loss_db = snr_loss(taper, &receive_profile(w, s))?;
    Ok(CompressionMetrics {
        isl_db,
        psl_db,
        snr_loss_db,
        mainlobe_width_samples: s.mainlobe_width(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{barker, generate_lfm};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn impulse_pulse_gives_identity() {
        let s = ConvolutionMatrix::new(&[c(1.0, 0.0)], 3).unwrap();
        assert_eq!(s.entries(), CMatrix::identity(3));
    }

    #[test]
    fn two_sample_banded_structure() {
        let (a, b) = (c(1.0, 2.0), c(-3.0, 0.5));
        let s = ConvolutionMatrix::new(&[a, b], 2).unwrap();
        let z = czero();
        let expect = [[a, z], [b, a], [z, b]];
        for (r, row) in expect.iter().enumerate() {
            assert_eq!(s.row(r), row);
        }
    }

    #[test]
    fn paper_dimensions() {
        let w = generate_lfm(5e6, 20e-6, 12e6, 0.1).unwrap();
        let s = build_convolution_matrix(&w, 480).unwrap();
        assert_eq!((s.entries().rows(), s.entries().cols()), (719, 480));
        assert!(ConvolutionMatrix::new(&[], 3).is_err());
    }

    #[test]
    fn mainlobe_row_sets() {
        assert_eq!(mainlobe_rows(7, 3).unwrap(), 2..5);
        assert_eq!(mainlobe_rows(7, 1).unwrap(), 3..4);
        assert_eq!(mainlobe_rows(719, 3).unwrap(), 358..361);
        assert!(matches!(mainlobe_rows(7, 2), Err(Error::InvalidWidth(2))));
        assert!(mainlobe_rows(3, 5).is_err());
    }

    #[test]
    fn matched_peak_lands_on_centre_row() {
        let w = generate_lfm(5e6, 20e-6, 12e6, 0.1).unwrap();
        let mf = matched_filter(&w, Some(480)).unwrap();
        let s = build_convolution_matrix(&w, 480).unwrap().with_mainlobe(3).unwrap();
        let y = s.apply(&mf.weights).unwrap();
        let argmax = (0..y.len()).max_by(|&a, &b| y[a].norm().total_cmp(&y[b].norm())).unwrap();
        assert_eq!(argmax, 359);
        assert!((y[359].re - w.energy()).abs() < 1e-9);
    }

    #[test]
    fn matched_filter_definition() {
        let w = Waveform::from_samples(vec![c(1.0, 0.0), c(0.0, 1.0)], 1.0, 1.0).unwrap();
        assert_eq!(matched_filter(&w, None).unwrap().weights, vec![c(0.0, -1.0), c(1.0, 0.0)]);
        let imp = Waveform::from_samples(vec![c(1.0, 0.0)], 1.0, 1.0).unwrap();
        assert_eq!(matched_filter(&imp, None).unwrap().weights, vec![c(1.0, 0.0)]);
    }

    #[test]
    fn barker13_matched_response() {
        let b = barker(13).unwrap();
        let mf = matched_filter(&b, None).unwrap();
        let y = apply_filter(&mf, b.samples()).unwrap();
        assert_eq!(y[12], c(13.0, 0.0));
        let side = y.iter().enumerate().filter(|(k, _)| *k != 12).map(|(_, v)| v.norm()).fold(0.0, f64::max);
        assert_eq!(side, 1.0);
    }

    #[test]
    fn apply_filter_small_cases() {
        let y = [c(1.0, 1.0), c(2.0, -1.0)];
        let id = FilterWeights::new(vec![c(1.0, 0.0)], Provenance::External, c(1.0, 0.0)).unwrap();
        assert_eq!(apply_filter(&id, &y).unwrap(), y.to_vec());
        let delay = FilterWeights::new(vec![czero(), c(1.0, 0.0)], Provenance::External, czero()).unwrap();
        assert_eq!(apply_filter(&delay, &y).unwrap(), vec![czero(), y[0], y[1]]);
        assert!(apply_filter(&id, &[]).is_err());
    }

    #[test]
    fn min_isl_without_sidelobe_rows() {
        let s = ConvolutionMatrix::new(&[c(1.0, 0.0)], 1).unwrap();
        let alpha = c(2.0, -1.0);
        let w = solve_min_isl(&s, alpha).unwrap();
        assert_eq!(w.weights, vec![alpha]);
        assert_eq!(isl(&w, &s).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn min_isl_hits_peak_constraint() {
        let b = barker(13).unwrap();
        let s = ConvolutionMatrix::new(b.samples(), 26).unwrap().with_mainlobe(3).unwrap();
        let alpha = c(13.0, 0.0);
        let w = solve_min_isl(&s, alpha).unwrap();
        let y = s.apply(&w.weights).unwrap();
        assert!((y[s.peak_row()] - alpha).norm() < 1e-9 * 13.0);
    }

    #[test]
    fn sidelobe_gram_matches_dense_product() {
        let pulse: Vec<C64> = (0..5).map(|k| c((k as f64).cos(), (k as f64 * 0.7).sin())).collect();
        let s = ConvolutionMatrix::new(&pulse, 8).unwrap().with_mainlobe(3).unwrap();
        let g = s.sidelobe_gram();
        let ml = s.mainlobe();
        let dense = s.entries();
        for i in 0..8 {
            for j in 0..8 {
                let e: C64 = (0..s.n_out())
                    .filter(|r| !ml.contains(r))
                    .map(|r| dense[(r, i)].conj() * dense[(r, j)])
                    .sum();
                assert!((g[(i, j)] - e).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn isl_and_psl_anchors() {
        let b = barker(13).unwrap();
        let mf = matched_filter(&b, None).unwrap();
        let s = ConvolutionMatrix::new(b.samples(), 13).unwrap();
        let got = isl(&mf, &s).unwrap();
        assert!((got - 10.0 * (12.0f64 / 169.0).log10()).abs() < 1e-9, "{got}");
        let y = s.apply(&mf.weights).unwrap();
        assert!((psl(&y, &s.mainlobe()).unwrap() - 20.0 * (1.0f64 / 13.0).log10()).abs() < 1e-9);

        let r = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        assert_eq!(psl(&r, &(1..2)).unwrap(), f64::NEG_INFINITY);
        let r = [c(0.1, 0.0), c(1.0, 0.0), c(0.1, 0.0)];
        assert!((psl(&r, &(1..2)).unwrap() + 20.0).abs() < 1e-12);
        assert!(matches!(psl(&r, &(0..3)), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn isl_of_dead_filter_is_undefined() {
        let s = ConvolutionMatrix::new(&[c(1.0, 0.0), c(1.0, 0.0)], 2).unwrap();
        let w = FilterWeights::new(vec![czero(); 2], Provenance::External, czero()).unwrap();
        assert!(matches!(isl(&w, &s), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn snr_loss_anchors() {
        assert_eq!(snr_loss(&[1.0; 9], &[1.0; 9]).unwrap(), 0.0);
        let one = [1.0, 0.0, 0.0, 0.0];
        assert!((snr_loss(&one, &one).unwrap() - 10.0 * 0.25f64.log10()).abs() < 1e-12);
        assert!(snr_loss(&[0.0; 3], &[1.0; 3]).is_err());
        assert!(snr_loss(&[1.0; 3], &[1.0; 2]).is_err());
    }

    #[test]
    fn snr_loss_of_tukey_pair_matches_direct_sum() {
        let w = crate::waveform::tukey_window(240, 0.1).unwrap();
        let num: f64 = w.iter().map(|x| x * x).sum::<f64>().powi(2);
        let den: f64 = 240.0 * w.iter().map(|x| x.powi(4)).sum::<f64>();
        let expect = 10.0 * (num / den).log10();
        assert!((snr_loss(&w, &w).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn matched_filter_receive_profile_is_the_taper() {
        let w = generate_lfm(5e6, 20e-6, 12e6, 0.1).unwrap();
        let s = build_convolution_matrix(&w, 480).unwrap();
        let mf = matched_filter(&w, Some(480)).unwrap();
        for (a, b) in receive_profile(&mf, &s).iter().zip(w.taper()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
