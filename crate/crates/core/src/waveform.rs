//! Transmit waveforms: tapered LFM chirps, Bezier-shaped NLFM sweeps and
//! biphase codes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Number of free Bezier control weights in an NLFM genome.
pub const GENOME_LEN: usize = 10;

/// Complex baseband pulse with its sampling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<C64>,
    sample_rate: f64,
    bandwidth: f64,
    pulse_width: f64,
    taper: Vec<f64>,
    taper_alpha: f64,
}

impl Waveform {
    /// Wrap externally produced samples (codes, measured pulses). The
    /// amplitude taper is taken as `|s_k|`.
    pub fn from_samples(samples: Vec<C64>, sample_rate: f64, bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("waveform has no samples".into()));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidInput("waveform samples must be finite".into()));
        }
        let peak = samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
        if peak > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("sample magnitude {peak} exceeds 1")));
        }
        let taper = samples.iter().map(|s| s.norm().min(1.0)).collect();
        let pulse_width = samples.len() as f64 / sample_rate;
        Ok(Self {
            samples,
            sample_rate,
            bandwidth,
            pulse_width,
            taper,
            taper_alpha: 0.0,
        })
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn pulse_width(&self) -> f64 {
        self.pulse_width
    }

    /// Transmit amplitude weighting, one value per sample.
    pub fn taper(&self) -> &[f64] {
        &self.taper
    }

    pub fn taper_alpha(&self) -> f64 {
        self.taper_alpha
    }

    /// `Σ |s_k|²`
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// Tukey (tapered cosine) window. `alpha` is the tapered fraction of the
/// window; 0 gives a rectangle and 1 a Hann window.
pub fn tukey_window(n: usize, alpha: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidSize { what: "window length", got: n });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("tukey alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let m = (n - 1) as f64;
    let half_taper = alpha * m / 2.0;
    Ok((0..n)
        .map(|k| {
            // fold onto the left half; the window is symmetric
            let x = (k as f64).min(m - k as f64);
            if x < half_taper {
                0.5 * (1.0 - (PI * x / half_taper).cos())
            } else {
                1.0
            }
        })
        .collect())
}

/// Linear FM chirp sweeping `-bandwidth/2 → +bandwidth/2` over the pulse,
/// amplitude-weighted by a Tukey window.
pub fn generate_lfm(bandwidth: f64, pulse_width: f64, sample_rate: f64, taper_alpha: f64) -> Result<Waveform> {
    if !(pulse_width > 0.0) || !pulse_width.is_finite() {
        return Err(Error::Domain(format!("pulse width must be positive, got {pulse_width}")));
    }
    if !(bandwidth >= 0.0) || !bandwidth.is_finite() {
        return Err(Error::Domain(format!("bandwidth must be non-negative, got {bandwidth}")));
    }
    if !(sample_rate >= bandwidth) || !(sample_rate > 0.0) {
        return Err(Error::Aliasing { sample_rate, bandwidth });
    }
    let n = (pulse_width * sample_rate).round() as usize;
    let taper = tukey_window(n, taper_alpha)?;
    let rate = bandwidth / pulse_width;
    let samples = taper
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let t = k as f64 / sample_rate - pulse_width / 2.0;
            C64::from_polar(a, PI * rate * t * t)
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate,
        bandwidth,
        pulse_width,
        taper,
        taper_alpha,
    })
}

/// Bezier curve value at `t` with the given control weights
/// (order `weights.len() - 1`), in Bernstein form.
pub fn bezier_eval(weights: &[f64], t: f64) -> Result<f64> {
    if weights.len() < 2 {
        return Err(Error::InvalidSize { what: "bezier control points", got: weights.len() });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("bezier parameter must lie in [0, 1], got {t}")));
    }
    Ok(bernstein_sum(weights, t))
}

fn bernstein_sum(weights: &[f64], t: f64) -> f64 {
    let n = weights.len() - 1;
    let s = 1.0 - t;
    let mut binom = 1.0;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += binom * s.powi((n - i) as i32) * t.powi(i as i32) * w;
        binom = binom * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// The ten free control weights (Hz) of an NLFM frequency function. The
/// curve's end points are fixed at 0 and `bandwidth/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BezierGenome {
    pub control_weights: [f64; GENOME_LEN],
    pub bandwidth: f64,
}

impl BezierGenome {
    pub fn new(control_weights: [f64; GENOME_LEN], bandwidth: f64) -> Result<Self> {
        let g = Self { control_weights, bandwidth };
        g.validate()?;
        Ok(g)
    }

    /// Control points evenly spaced on the straight line from 0 to
    /// `bandwidth/2`; reproduces a linear sweep.
    pub fn linear(bandwidth: f64) -> Self {
        let step = bandwidth / 2.0 / (GENOME_LEN + 1) as f64;
        let mut w = [0.0; GENOME_LEN];
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = (i + 1) as f64 * step;
        }
        Self { control_weights: w, bandwidth }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::Domain(format!("genome bandwidth must be positive, got {}", self.bandwidth)));
        }
        let hi = self.bandwidth / 2.0;
        if let Some(w) = self.control_weights.iter().find(|w| !(0.0..=hi).contains(*w)) {
            return Err(Error::Domain(format!("control weight {w} outside [0, {hi}]")));
        }
        Ok(())
    }

    /// All twelve control points including the fixed end points.
    pub fn control_points(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(GENOME_LEN + 2);
        pts.push(0.0);
        pts.extend_from_slice(&self.control_weights);
        pts.push(self.bandwidth / 2.0);
        pts
    }
}

/// Instantaneous frequency per output sample (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFunction {
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

/// Symmetric NLFM frequency function from a genome.
///
/// The first half samples the Bezier curve at uniform time over the half
/// pulse (`t_k = 2k/(n-1)`, so `t = 1` falls on the pulse centre) and is
/// shifted down by `bandwidth/2`. The second half is the first reflected in
/// time and frequency: `values[n-1-k] = -values[k]`.
pub fn build_nlfm_frequency(genome: &BezierGenome, n_samples: usize) -> Result<FrequencyFunction> {
    if n_samples < 4 || n_samples % 2 != 0 {
        return Err(Error::InvalidSize { what: "NLFM sample count (even, >= 4)", got: n_samples });
    }
    genome.validate()?;
    let pts = genome.control_points();
    let half = genome.bandwidth / 2.0;
    let span = (n_samples - 1) as f64;
    let mut values = vec![0.0; n_samples];
    for k in 0..n_samples / 2 {
        let t = 2.0 * k as f64 / span;
        let f = bernstein_sum(&pts, t) - half;
        values[k] = f;
        values[n_samples - 1 - k] = -f;
    }
    Ok(FrequencyFunction { values, bandwidth: genome.bandwidth })
}

/// Unit-modulus waveform whose phase is the running (left-rectangle) sum of
/// the frequency function.
pub fn synthesize_nlfm(freq: &FrequencyFunction, sample_rate: f64) -> Result<Waveform> {
    if freq.values.is_empty() {
        return Err(Error::InvalidInput("empty frequency function".into()));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::Domain(format!("sample rate must be positive, got {sample_rate}")));
    }
    let step = 2.0 * PI / sample_rate;
    let mut phase = 0.0;
    let samples = freq
        .values
        .iter()
        .map(|f| {
            phase += step * f;
            C64::from_polar(1.0, phase)
        })
        .collect::<Vec<_>>();
    let n = samples.len();
    Ok(Waveform {
        samples,
        sample_rate,
        bandwidth: freq.bandwidth,
        pulse_width: n as f64 / sample_rate,
        taper: vec![1.0; n],
        taper_alpha: 0.0,
    })
}

/// Phase-difference frequency estimate between consecutive samples (Hz);
/// one value fewer than the input.
pub fn instantaneous_frequency(samples: &[C64], sample_rate: f64) -> Vec<f64> {
    samples
        .windows(2)
        .map(|w| (w[1] * w[0].conj()).arg() * sample_rate / (2.0 * PI))
        .collect()
}

/// Binary Barker code of the given length (2, 3, 4, 5, 7, 11 or 13).
pub fn barker(length: usize) -> Result<Waveform> {
    let bits: &[i8] = match length {
        2 => &[1, -1],
        3 => &[1, 1, -1],
        4 => &[1, 1, -1, 1],
        5 => &[1, 1, 1, -1, 1],
        7 => &[1, 1, 1, -1, -1, 1, -1],
        11 => &[1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1],
        13 => &[1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1],
        _ => return Err(Error::InvalidSize { what: "barker code length", got: length }),
    };
    let samples = bits.iter().map(|&b| C64::new(b as f64, 0.0)).collect();
    Waveform::from_samples(samples, 1.0, 1.0)
}
