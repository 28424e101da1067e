//! Channel, fault, combining and measurement models for an N-element ULA.
//!
//! Everything random takes an explicit RNG. [`TrialStreams`] derives the
//! independent per-component streams (channel, faults, combiner, noise, CSI
//! error) from one trial seed so any component can be regenerated alone.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::CsiEstimate;
use crate::{CMatrix, CVector, Error, Result, C64};

fn default_spacing() -> f64 {
    0.5
}

fn default_amp_range() -> [f64; 2] {
    [0.2, 1.0]
}

/// Parameters of one simulated diagnosis scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_antennas: usize,
    #[serde(default = "default_spacing")]
    pub element_spacing: f64,
    pub n_paths: usize,
    pub snr_db: f64,
    /// Drop the additive noise entirely (instead of an infinite SNR).
    #[serde(default)]
    pub noiseless: bool,
    pub n_measurements: usize,
    pub n_faults: usize,
    #[serde(default = "default_amp_range")]
    pub fault_amp_range: [f64; 2],
    #[serde(default)]
    pub gain_error_intensity: f64,
    #[serde(default)]
    pub aoa_error_intensity: f64,
    /// Phase-shifter resolution in bits; `None` keeps continuous phases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_bits: Option<u32>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_antennas: 64,
            element_spacing: 0.5,
            n_paths: 4,
            snr_db: 30.0,
            noiseless: false,
            n_measurements: 64,
            n_faults: 3,
            fault_amp_range: default_amp_range(),
            gain_error_intensity: 0.0,
            aoa_error_intensity: 0.0,
            phase_bits: None,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_antennas == 0 {
            return bad("n_antennas must be >= 1".into());
        }
        if self.n_measurements == 0 {
            return bad("n_measurements must be >= 1".into());
        }
        if self.n_paths == 0 {
            return bad("n_paths must be >= 1".into());
        }
        if self.n_faults > self.n_antennas {
            return bad(format!(
                "n_faults ({}) exceeds n_antennas ({})",
                self.n_faults, self.n_antennas
            ));
        }
        let [lo, hi] = self.fault_amp_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("fault_amp_range [{lo}, {hi}] must satisfy 0 < lo <= hi"));
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return bad("element_spacing must be positive".into());
        }
        if !self.noiseless && !self.snr_db.is_finite() {
            return bad("snr_db must be finite (use `noiseless` instead)".into());
        }
        if !(self.gain_error_intensity >= 0.0 && self.aoa_error_intensity >= 0.0) {
            return bad("error intensities must be nonnegative".into());
        }
        Ok(())
    }

    pub fn noise(&self) -> Noise {
        if self.noiseless {
            Noise::Noiseless
        } else {
            Noise::SnrDb(self.snr_db)
        }
    }
}

/// Additive receiver noise setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Noiseless,
    SnrDb(f64),
}

impl Noise {
    /// Per-sample noise variance `1/SNR` (linear).
    pub fn variance(self) -> f64 {
        match self {
            Noise::Noiseless => 0.0,
            Noise::SnrDb(db) => 10f64.powf(-db / 10.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub gains: Vec<C64>,
    pub aoas: Vec<f64>,
    pub h: CVector,
}

impl ChannelRealization {
    /// Builds `h = sum_l gains[l] * a(aoas[l])`.
    pub fn from_paths(gains: Vec<C64>, aoas: Vec<f64>, n: usize, spacing: f64) -> Result<Self> {
        if gains.len() != aoas.len() {
            return Err(Error::Dimension(format!(
                "{} gains vs {} AOAs",
                gains.len(),
                aoas.len()
            )));
        }
        let mut h = CVector::zeros(n);
        for (&g, &theta) in gains.iter().zip(&aoas) {
            h.axpy(g, &steering_vector(theta, n, spacing)?, C64::new(1.0, 0.0));
        }
        Ok(Self { gains, aoas, h })
    }
}

#[derive(Debug, Clone)]
pub struct FaultPattern {
    /// Sorted faulty antenna indices.
    pub support: Vec<usize>,
    pub h_f: CVector,
}

impl FaultPattern {
    pub fn none(n: usize) -> Self {
        Self { support: Vec::new(), h_f: CVector::zeros(n) }
    }
}

/// Combining matrix and received samples, as consumed by the diagnosis methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub f: CMatrix,
    pub y: CVector,
    /// `None` for noiseless measurements.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl MeasurementSet {
    pub fn n_antennas(&self) -> usize {
        self.f.ncols()
    }

    pub fn n_measurements(&self) -> usize {
        self.f.nrows()
    }

    pub fn check(&self) -> Result<()> {
        if self.f.nrows() == 0 || self.f.ncols() == 0 {
            return Err(Error::Dimension("empty combining matrix".into()));
        }
        if self.y.len() != self.f.nrows() {
            return Err(Error::Dimension(format!(
                "y has length {} but F has {} rows",
                self.y.len(),
                self.f.nrows()
            )));
        }
        Ok(())
    }
}

/// Array response `a(theta)` with entries `exp(j 2 pi d n sin theta)`.
///
/// Rejects angles outside `[-pi/2, pi/2]`; see [`array_response`] for the
/// unchecked form used with perturbed AOA estimates.
pub fn steering_vector(theta: f64, n: usize, spacing: f64) -> Result<CVector> {
    if !(-FRAC_PI_2..=FRAC_PI_2).contains(&theta) {
        return Err(Error::Domain(format!("AOA {theta} rad outside [-pi/2, pi/2]")));
    }
    Ok(array_response(theta, n, spacing))
}

/// Same as [`steering_vector`] but accepts any real angle.
pub fn array_response(theta: f64, n: usize, spacing: f64) -> CVector {
    let step = 2.0 * PI * spacing * theta.sin();
    CVector::from_iterator(n, (0..n).map(|k| C64::from_polar(1.0, step * k as f64)))
}

/// Draws from `CN(0, variance)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn sample_channel<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<ChannelRealization> {
    cfg.validate()?;
    let l = cfg.n_paths;
    let gains: Vec<C64> = (0..l).map(|_| complex_gaussian(rng, 1.0 / l as f64)).collect();
    let aoas: Vec<f64> = (0..l).map(|_| rng.random_range(-FRAC_PI_2..=FRAC_PI_2)).collect();
    ChannelRealization::from_paths(gains, aoas, cfg.n_antennas, cfg.element_spacing)
}

pub fn sample_fault_pattern<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<FaultPattern> {
    cfg.validate()?;
    let n = cfg.n_antennas;
    let mut support = index::sample(rng, n, cfg.n_faults).into_vec();
    support.sort_unstable();
    let [lo, hi] = cfg.fault_amp_range;
    let mut h_f = CVector::zeros(n);
    for &i in &support {
        let amp = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let phase = rng.random_range(0.0..2.0 * PI);
        h_f[i] = C64::from_polar(amp, phase);
    }
    Ok(FaultPattern { support, h_f })
}

/// K x N constant-modulus combiner, entries `exp(j phi) / sqrt(N)`.
pub fn sample_combining_matrix<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<CMatrix> {
    cfg.validate()?;
    let (k, n) = (cfg.n_measurements, cfg.n_antennas);
    let modulus = 1.0 / (n as f64).sqrt();
    let levels = cfg.phase_bits.map(|b| (1u64 << b.min(52)) as f64);
    // Column-major fill order is part of the reproducibility contract.
    Ok(CMatrix::from_fn(k, n, |_, _| {
        let mut phi = rng.random_range(0.0..2.0 * PI);
        if let Some(q) = levels {
            let step = 2.0 * PI / q;
            phi = ((phi / step).round() % q) * step;
        }
        C64::from_polar(modulus, phi)
    }))
}

/// `y = F (h + h_f) + w` with `w ~ CN(0, 1/SNR)`.
pub fn measure<R: Rng + ?Sized>(
    h: &CVector,
    h_f: &CVector,
    f: &CMatrix,
    noise: Noise,
    rng: &mut R,
) -> Result<CVector> {
    if h.len() != f.ncols() || h_f.len() != f.ncols() {
        return Err(Error::Dimension(format!(
            "F is {}x{} but h/h_f have lengths {}/{}",
            f.nrows(),
            f.ncols(),
            h.len(),
            h_f.len()
        )));
    }
    let mut y = f * (h + h_f);
    if let Noise::SnrDb(_) = noise {
        let var = noise.variance();
        for yk in y.iter_mut() {
            *yk += complex_gaussian(rng, var);
        }
    }
    Ok(y)
}

/// Noisy CSI: `alpha + d_alpha * CN(0,1)` and `theta + d_theta * pi * N(0,1)`,
/// independently per path. AOAs are not clamped.
pub fn perturb_csi<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    gain_error: f64,
    aoa_error: f64,
    rng: &mut R,
) -> CsiEstimate {
    let mut gains = Vec::with_capacity(chan.gains.len());
    let mut aoas = Vec::with_capacity(chan.aoas.len());
    for (&g, &theta) in chan.gains.iter().zip(&chan.aoas) {
        let ge = complex_gaussian(rng, 1.0);
        let te: f64 = rng.sample(StandardNormal);
        gains.push(g + ge * gain_error);
        aoas.push(theta + aoa_error * te * PI);
    }
    CsiEstimate { gains, aoas }
}

/// Labels of the independent random sub-streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel,
    Faults,
    Combiner,
    Noise,
    CsiError,
}

impl Stream {
    fn label(self) -> u64 {
        match self {
            Stream::Channel => 0x6368_616e,
            Stream::Faults => 0x6661_756c,
            Stream::Combiner => 0x636f_6d62,
            Stream::Noise => 0x6e6f_6973,
            Stream::CsiError => 0x6373_6965,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-component RNG streams for one trial seed.
#[derive(Debug, Clone, Copy)]
pub struct TrialStreams {
    seed: u64,
}

impl TrialStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix64(self.seed ^ mix64(stream.label())))
    }
}

/// Everything random about one trial, drawn from [`TrialStreams`].
#[derive(Debug, Clone)]
pub struct TrialRealization {
    pub channel: ChannelRealization,
    pub faults: FaultPattern,
    pub measurements: MeasurementSet,
    pub csi: CsiEstimate,
}

impl TrialRealization {
    pub fn sample(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let streams = TrialStreams::new(seed);
        let channel = sample_channel(cfg, &mut streams.rng(Stream::Channel))?;
        let faults = sample_fault_pattern(cfg, &mut streams.rng(Stream::Faults))?;
        let f = sample_combining_matrix(cfg, &mut streams.rng(Stream::Combiner))?;
        let y = measure(&channel.h, &faults.h_f, &f, cfg.noise(), &mut streams.rng(Stream::Noise))?;
        let csi = perturb_csi(
            &channel,
            cfg.gain_error_intensity,
            cfg.aoa_error_intensity,
            &mut streams.rng(Stream::CsiError),
        );
        let measurements = MeasurementSet {
            f,
            y,
            snr_db: (!cfg.noiseless).then_some(cfg.snr_db),
            seed,
        };
        Ok(Self { channel, faults, measurements, csi })
    }
}

/// JSON form of a [`MeasurementSet`]; complex entries are `[re, im]` pairs and
/// `f` is row-major (one inner array per measurement).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementFile {
    pub f: Vec<Vec<[f64; 2]>>,
    pub y: Vec<[f64; 2]>,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl From<&MeasurementSet> for MeasurementFile {
    fn from(m: &MeasurementSet) -> Self {
        let f = m
            .f
            .row_iter()
            .map(|row| row.iter().map(|c| [c.re, c.im]).collect())
            .collect();
        let y = m.y.iter().map(|c| [c.re, c.im]).collect();
        Self { f, y, snr_db: m.snr_db, seed: m.seed }
    }
}

impl TryFrom<MeasurementFile> for MeasurementSet {
    type Error = Error;

    fn try_from(file: MeasurementFile) -> Result<Self> {
        let k = file.f.len();
        let n = file.f.first().map_or(0, Vec::len);
        if file.f.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension("ragged combining matrix rows".into()));
        }
        let f = CMatrix::from_fn(k, n, |r, c| {
            let [re, im] = file.f[r][c];
            C64::new(re, im)
        });
        let y = CVector::from_iterator(file.y.len(), file.y.iter().map(|&[re, im]| C64::new(re, im)));
        let m = MeasurementSet { f, y, snr_db: file.snr_db, seed: file.seed };
        m.check()?;
        Ok(m)
    }
}
