//! Range-profile simulation and CLEAN deconvolution.
//!
//! Received profile model: `y = S·a + n` with `a` the per-cell scatterer
//! amplitudes and `n` circular white Gaussian noise. Strong scatterers are
//! found with the regularised deconvolution statistic
//! `|δ_kᴴ Sᴴ (S Sᴴ + σ²I)⁻¹ y|`; every cell is then re-estimated with the
//! strong scatterers' interference folded into the covariance:
//!
//! `â_k = g_kᴴ R⁻¹ y / (g_kᴴ R⁻¹ g_k)`, `R = S·B·Bᴴ·Sᴴ + σ²I`, `g_k = S δ_k`,
//! `B = diag(b)` holding the strong amplitudes on their cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter_design::ConvolutionMatrix;
use crate::io::SceneFile;
use crate::linalg::{czero, dotc, CMatrix, Cholesky, C64};

/// Strong-scatterer rule of the pipeline: statistic at least this factor
/// (20 dB in amplitude) above the median cell statistic.
pub const STRONG_OVER_MEDIAN: f64 = 10.0;

/// True scatterer amplitudes per range cell plus receiver noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScene {
    pub impulse_response: Vec<C64>,
    pub noise_power: f64,
    pub seed: u64,
}

impl RangeScene {
    pub fn new(impulse_response: Vec<C64>, noise_power: f64, seed: u64) -> Result<Self> {
        if impulse_response.is_empty() {
            return Err(Error::InvalidSize { what: "range scene", got: 0 });
        }
        if !(noise_power >= 0.0) || !noise_power.is_finite() {
            return Err(Error::Domain(format!("noise power must be non-negative, got {noise_power}")));
        }
        Ok(Self { impulse_response, noise_power, seed })
    }

    /// Expand a sparse scene file onto `n_cells` range cells.
    pub fn from_file(file: &SceneFile, n_cells: usize) -> Result<Self> {
        let mut a = vec![czero(); n_cells];
        for cell in &file.cells {
            if cell.index >= n_cells {
                return Err(Error::InvalidInput(format!("scene cell {} outside 0..{n_cells}", cell.index)));
            }
            a[cell.index] += C64::new(cell.re, cell.im);
        }
        Self::new(a, file.noise_power, file.seed)
    }
}

/// Detector output for one range cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub cell: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub detected: bool,
    #[serde(skip)]
    pub amplitude_estimate: C64,
}

/// Cells and amplitudes of the scatterers whose sidelobes are removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrongScattererSet {
    pub cells: Vec<usize>,
    pub amplitudes: Vec<C64>,
}

impl StrongScattererSet {
    pub fn new(cells: Vec<usize>, amplitudes: Vec<C64>, n_cells: usize) -> Result<Self> {
        if cells.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch { expected: cells.len(), got: amplitudes.len() });
        }
        let mut seen = vec![false; n_cells];
        for &c in &cells {
            if c >= n_cells || std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidInput(format!("strong cell {c} repeated or outside 0..{n_cells}")));
            }
        }
        Ok(Self { cells, amplitudes })
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Normalised (unit gain on an isolated scatterer) or raw estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorForm {
    #[default]
    Normalized,
    Unnormalized,
}

/// `y = S·a + n`, noise drawn deterministically from the scene seed.
pub fn simulate_profile(s: &ConvolutionMatrix, scene: &RangeScene) -> Result<Vec<C64>> {
    if scene.impulse_response.len() != s.n_filter() {
        return Err(Error::DimensionMismatch { expected: s.n_filter(), got: scene.impulse_response.len() });
    }
    let mut y = s.apply(&scene.impulse_response)?;
    if scene.noise_power > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        let sd = (scene.noise_power / 2.0).sqrt();
        for v in &mut y {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += C64::new(re * sd, im * sd);
        }
    }
    Ok(y)
}

fn check_profile(s: &ConvolutionMatrix, y: &[C64]) -> Result<()> {
    if y.len() != s.n_out() {
        return Err(Error::DimensionMismatch { expected: s.n_out(), got: y.len() });
    }
    Ok(())
}

/// Least-squares estimate of the cell amplitudes: `(SᴴS) â = Sᴴ y`.
pub fn ls_deconvolve(s: &ConvolutionMatrix, y: &[C64]) -> Result<Vec<C64>> {
    check_profile(s, y)?;
    let chol = Cholesky::factor(&s.gram())?;
    Ok(chol.solve(&s.adjoint_apply(y)?))
}

/// `(SᴴS + σ²I)` factor; `Sᴴ(SSᴴ + σ²I)⁻¹ = (SᴴS + σ²I)⁻¹Sᴴ`, so the
/// detector works on the small `L×L` system.
fn regularised_gram(s: &ConvolutionMatrix, noise_power: f64) -> Result<Cholesky> {
    let mut g = s.gram();
    for i in 0..g.rows() {
        g[(i, i)] += noise_power;
    }
    Cholesky::factor(&g)
}

fn check_noise(noise_power: f64) -> Result<()> {
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(Error::Domain(format!("noise power must be positive, got {noise_power}")));
    }
    Ok(())
}

/// Per-cell detection statistic against threshold `eta`.
pub fn detect(s: &ConvolutionMatrix, y: &[C64], noise_power: f64, eta: f64) -> Result<Vec<DetectionResult>> {
    check_profile(s, y)?;
    check_noise(noise_power)?;
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("threshold must be positive, got {eta}")));
    }
    let chol = regularised_gram(s, noise_power)?;
    let z = chol.solve(&s.adjoint_apply(y)?);
    Ok(z
        .into_iter()
        .enumerate()
        .map(|(cell, a)| {
            let statistic = a.norm();
            DetectionResult {
                cell,
                statistic,
                threshold: eta,
                detected: statistic > eta,
                amplitude_estimate: a,
            }
        })
        .collect())
}

/// Threshold giving false-alarm probability `pfa` per cell when the
/// profile is noise only. Under that hypothesis the statistic at cell `k`
/// is Rayleigh with `E|z_k|² = σ² ‖S (SᴴS+σ²I)⁻¹ δ_k‖²`; the largest
/// per-cell threshold is returned.
pub fn threshold_for_pfa(s: &ConvolutionMatrix, noise_power: f64, pfa: f64) -> Result<f64> {
    check_noise(noise_power)?;
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Domain(format!("false-alarm probability must lie in (0, 1), got {pfa}")));
    }
    let chol = regularised_gram(s, noise_power)?;
    let l = s.n_filter();
    let mut worst = 0.0f64;
    for k in 0..l {
        let mut e = vec![czero(); l];
        e[k] = C64::new(1.0, 0.0);
        let h = chol.solve(&e);
        let g = s.apply(&h)?;
        let var = noise_power * g.iter().map(|v| v.norm_sqr()).sum::<f64>();
        worst = worst.max((-var * pfa.ln()).sqrt());
    }
    Ok(worst)
}

/// Interference-plus-noise covariance factored once for repeated per-cell
/// estimates.
pub struct CleanEstimator<'a> {
    s: &'a ConvolutionMatrix,
    chol: Cholesky,
    r_inv_y: Vec<C64>,
}

impl<'a> CleanEstimator<'a> {
    pub fn new(s: &'a ConvolutionMatrix, y: &[C64], strong: &StrongScattererSet, noise_power: f64) -> Result<Self> {
        check_profile(s, y)?;
        check_noise(noise_power)?;
        let n_out = s.n_out();
        let mut r = CMatrix::identity(n_out);
        for i in 0..n_out {
            r[(i, i)] = C64::new(noise_power, 0.0);
        }
        for (&cell, &b) in strong.cells.iter().zip(&strong.amplitudes) {
            if cell >= s.n_filter() {
                return Err(Error::InvalidInput(format!("strong cell {cell} outside the scene")));
            }
            let g = column(s, cell);
            let p = b.norm_sqr();
            let rows = cell..(cell + s.n_waveform()).min(n_out);
            for i in rows.clone() {
                for j in rows.clone() {
                    r[(i, j)] += g[i] * g[j].conj() * p;
                }
            }
        }
        let chol = Cholesky::factor(&r)?;
        let r_inv_y = chol.solve(y);
        Ok(Self { s, chol, r_inv_y })
    }

    pub fn estimate(&self, cell: usize, form: EstimatorForm) -> Result<C64> {
        if cell >= self.s.n_filter() {
            return Err(Error::Domain(format!("cell {cell} outside 0..{}", self.s.n_filter())));
        }
        let g = column(self.s, cell);
        let num = dotc(&g, &self.r_inv_y);
        match form {
            EstimatorForm::Unnormalized => Ok(num),
            EstimatorForm::Normalized => {
                let den = dotc(&g, &self.chol.solve(&g)).re;
                if !(den > 0.0) {
                    return Err(Error::UndefinedRatio("zero cell response"));
                }
                Ok(num / den)
            }
        }
    }
}

fn column(s: &ConvolutionMatrix, cell: usize) -> Vec<C64> {
    let mut g = vec![czero(); s.n_out()];
    g[cell..cell + s.n_waveform()].copy_from_slice(s.pulse());
    g
}

/// CLEAN amplitude estimate at `cell` with the strong scatterers' sidelobes
/// removed.
pub fn estimate_clean(s: &ConvolutionMatrix, y: &[C64], strong: &StrongScattererSet, noise_power: f64, cell: usize) -> Result<C64> {
    CleanEstimator::new(s, y, strong, noise_power)?.estimate(cell, EstimatorForm::Normalized)
}

/// Raw matched-filter output at `cell`: `g_kᴴ y`.
pub fn matched_estimate(s: &ConvolutionMatrix, y: &[C64], cell: usize) -> Result<C64> {
    check_profile(s, y)?;
    Ok(dotc(&column(s, cell), y))
}

/// Matched-filter output scaled to unit gain on an isolated scatterer:
/// `g_kᴴ y / ‖g_k‖²`.
pub fn normalized_matched_estimate(s: &ConvolutionMatrix, y: &[C64], cell: usize) -> Result<C64> {
    let e: f64 = s.pulse().iter().map(|v| v.norm_sqr()).sum();
    Ok(matched_estimate(s, y, cell)? / e)
}

/// Least-squares amplitudes of the given cells alone.
pub fn restricted_ls(s: &ConvolutionMatrix, y: &[C64], cells: &[usize]) -> Result<Vec<C64>> {
    check_profile(s, y)?;
    if cells.is_empty() {
        return Ok(Vec::new());
    }
    let cols: Vec<Vec<C64>> = cells.iter().map(|&c| column(s, c)).collect();
    let d = cells.len();
    let gram = CMatrix::from_fn(d, d, |i, j| dotc(&cols[i], &cols[j]));
    let rhs: Vec<C64> = cols.iter().map(|g| dotc(g, y)).collect();
    Ok(Cholesky::factor(&gram)?.solve(&rhs))
}

/// Output of [`clean_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct CleanResult {
    pub detections: Vec<DetectionResult>,
    pub strong: StrongScattererSet,
    pub amplitudes: Vec<C64>,
}

/// Detect strong scatterers (statistic above `eta` and 20 dB above the
/// median cell statistic), estimate their amplitudes by restricted least
/// squares, then CLEAN-estimate every cell.
pub fn clean_pipeline(s: &ConvolutionMatrix, y: &[C64], noise_power: f64, eta: f64) -> Result<CleanResult> {
    let detections = detect(s, y, noise_power, eta)?;
    let mut stats: Vec<f64> = detections.iter().map(|d| d.statistic).collect();
    stats.sort_by(f64::total_cmp);
    let median = if stats.len() % 2 == 1 {
        stats[stats.len() / 2]
    } else {
        0.5 * (stats[stats.len() / 2 - 1] + stats[stats.len() / 2])
    };
    let cells: Vec<usize> = detections
        .iter()
        .filter(|d| d.detected && d.statistic > STRONG_OVER_MEDIAN * median)
        .map(|d| d.cell)
        .collect();
    let amps = restricted_ls(s, y, &cells)?;
    let strong = StrongScattererSet::new(cells, amps, s.n_filter())?;
    let est = CleanEstimator::new(s, y, &strong, noise_power)?;
    let amplitudes = (0..s.n_filter())
        .map(|k| est.estimate(k, EstimatorForm::Normalized))
        .collect::<Result<Vec<_>>>()?;
    Ok(CleanResult { detections, strong, amplitudes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::generate_lfm;

    fn lfm_matrix(n_cells: usize) -> ConvolutionMatrix {
        let w = generate_lfm(1e6, 32e-6, 2e6, 0.0).unwrap();
        ConvolutionMatrix::new(w.samples(), n_cells).unwrap()
    }

    fn impulse(n: usize, k: usize, a: C64) -> Vec<C64> {
        let mut v = vec![czero(); n];
        v[k] = a;
        v
    }

    #[test]
    fn impulse_scene_reproduces_column() {
        let s = lfm_matrix(40);
        let scene = RangeScene::new(impulse(40, 7, C64::new(1.0, 0.0)), 0.0, 1).unwrap();
        let y = simulate_profile(&s, &scene).unwrap();
        let dense = s.entries();
        for r in 0..s.n_out() {
            assert_eq!(y[r], dense[(r, 7)]);
        }
        let zero = RangeScene::new(vec![czero(); 40], 0.0, 1).unwrap();
        assert!(simulate_profile(&s, &zero).unwrap().iter().all(|v| *v == czero()));
        let wrong = RangeScene::new(vec![czero(); 39], 0.0, 1).unwrap();
        assert!(simulate_profile(&s, &wrong).is_err());
    }

    #[test]
    fn noise_variance_is_calibrated() {
        let s = ConvolutionMatrix::new(&[C64::new(1.0, 0.0)], 100_000).unwrap();
        let scene = RangeScene::new(vec![czero(); 100_000], 1.0, 42).unwrap();
        let y = simulate_profile(&s, &scene).unwrap();
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn ls_recovers_impulse_and_zero() {
        let s = lfm_matrix(40);
        let y = s.apply(&impulse(40, 12, C64::new(1.0, 0.0))).unwrap();
        let a = ls_deconvolve(&s, &y).unwrap();
        for (k, v) in a.iter().enumerate() {
            let e = if k == 12 { 1.0 } else { 0.0 };
            assert!((v - C64::new(e, 0.0)).norm() < 1e-9);
        }
        let z = ls_deconvolve(&s, &vec![czero(); s.n_out()]).unwrap();
        assert!(z.iter().all(|v| *v == czero()));
    }

    #[test]
    fn detector_zero_profile_and_homogeneity() {
        let s = lfm_matrix(30);
        let none = detect(&s, &vec![czero(); s.n_out()], 1.0, 1e-6).unwrap();
        assert!(none.iter().all(|d| d.statistic == 0.0 && !d.detected));

        let scene = RangeScene::new(impulse(30, 9, C64::new(3.0, 1.0)), 0.5, 3).unwrap();
        let y = simulate_profile(&s, &scene).unwrap();
        let a = detect(&s, &y, 0.5, 1.0).unwrap();
        let y2: Vec<C64> = y.iter().map(|v| v * C64::new(0.0, 2.5)).collect();
        let b = detect(&s, &y2, 0.5, 1.0).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((q.statistic - 2.5 * p.statistic).abs() < 1e-9 * (1.0 + p.statistic));
        }
        assert!(detect(&s, &y, 0.0, 1.0).is_err());
        assert!(detect(&s, &y, 1.0, 0.0).is_err());
    }

    #[test]
    fn lone_scatterer_estimate_is_unbiased() {
        let s = lfm_matrix(30);
        let a = C64::new(-2.0, 0.7);
        let y = s.apply(&impulse(30, 11, a)).unwrap();
        let got = estimate_clean(&s, &y, &StrongScattererSet::default(), 1e-9, 11).unwrap();
        assert!((got - a).norm() < 1e-9);
        let zero = estimate_clean(&s, &vec![czero(); s.n_out()], &StrongScattererSet::default(), 1.0, 3).unwrap();
        assert_eq!(zero, czero());
    }

    #[test]
    fn empty_strong_set_is_the_scaled_matched_estimate() {
        let s = lfm_matrix(30);
        let scene = RangeScene::new(impulse(30, 4, C64::new(1.0, -1.0)), 1.0, 5).unwrap();
        let y = simulate_profile(&s, &scene).unwrap();
        for sigma2 in [1.0, 1e4] {
            let est = CleanEstimator::new(&s, &y, &StrongScattererSet::default(), sigma2).unwrap();
            for k in [0, 4, 17] {
                let raw = est.estimate(k, EstimatorForm::Unnormalized).unwrap();
                let m = matched_estimate(&s, &y, k).unwrap();
                assert!((raw * sigma2 - m).norm() < 1e-9 * m.norm().max(1.0));
                let norm = est.estimate(k, EstimatorForm::Normalized).unwrap();
                let nm = normalized_matched_estimate(&s, &y, k).unwrap();
                assert!((norm - nm).norm() < 1e-9 * nm.norm().max(1.0));
            }
        }
    }

    #[test]
    fn strong_set_validation() {
        assert!(StrongScattererSet::new(vec![1, 1], vec![czero(); 2], 4).is_err());
        assert!(StrongScattererSet::new(vec![5], vec![czero()], 4).is_err());
        assert!(StrongScattererSet::new(vec![1], vec![], 4).is_err());
    }

    #[test]
    fn pipeline_on_zero_profile() {
        let s = lfm_matrix(20);
        let r = clean_pipeline(&s, &vec![czero(); s.n_out()], 1.0, 1.0).unwrap();
        assert!(r.strong.is_empty());
        assert!(r.amplitudes.iter().all(|v| *v == czero()));
    }

    #[test]
    fn pipeline_without_detections_is_plain_estimate() {
        let s = lfm_matrix(20);
        let scene = RangeScene::new(impulse(20, 3, C64::new(0.3, 0.0)), 1.0, 9).unwrap();
        let y = simulate_profile(&s, &scene).unwrap();
        let r = clean_pipeline(&s, &y, 1.0, 1e9).unwrap();
        assert!(r.strong.is_empty());
        for (k, v) in r.amplitudes.iter().enumerate() {
            let e = estimate_clean(&s, &y, &StrongScattererSet::default(), 1.0, k).unwrap();
            assert_eq!(*v, e);
        }
    }

    #[test]
    fn pfa_threshold_is_positive_and_monotone() {
        let s = lfm_matrix(20);
        let t1 = threshold_for_pfa(&s, 1.0, 1e-2).unwrap();
        let t2 = threshold_for_pfa(&s, 1.0, 1e-6).unwrap();
        assert!(t1 > 0.0 && t2 > t1);
        assert!(threshold_for_pfa(&s, 1.0, 1.5).is_err());
    }
}
