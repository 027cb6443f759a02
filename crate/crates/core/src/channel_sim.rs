//! Synthetic multipath channels for a uniform rectangular array.
//!
//! A channel is the sum of `L` plane-wave paths,
//! `h = sum_l g_l exp(-2 pi j f_c tau_l) a(theta_l, phi_l)`, where `a` is the
//! array response of [`steering_vector`]. Two presets, `env-A` and `env-B`,
//! describe distinct propagation environments so that matched and mismatched
//! training can be compared.
//!
//! Antenna `(v, h)` sits at flat index `v * n_h + h`, so covariance matrices
//! have `n_v x n_v` blocks of size `n_h x n_h`.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::rng::{complex_normal, stream};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_v: usize,
    pub n_h: usize,
    /// Vertical element spacing in wavelengths.
    pub spacing_v: f64,
    /// Horizontal element spacing in wavelengths.
    pub spacing_h: f64,
}

impl ArrayGeometry {
    pub fn new(n_v: usize, n_h: usize, spacing_v: f64, spacing_h: f64) -> Result<Self> {
        let g = ArrayGeometry {
            n_v,
            n_h,
            spacing_v,
            spacing_h,
        };
        g.validate()?;
        Ok(g)
    }

    /// Array with half-wavelength vertical and one-wavelength horizontal spacing.
    pub fn ura(n_v: usize, n_h: usize) -> Self {
        ArrayGeometry {
            n_v,
            n_h,
            spacing_v: 0.5,
            spacing_h: 1.0,
        }
    }

    /// 4 x 8 array used by the desk-scale experiments.
    pub fn desk() -> Self {
        Self::ura(4, 8)
    }

    /// 4 x 16 array of the full-scale experiments.
    pub fn large() -> Self {
        Self::ura(4, 16)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_v == 0 || self.n_h == 0 {
            return Err(Error::config("array dimensions must be positive"));
        }
        if !(self.spacing_v > 0.0 && self.spacing_h > 0.0) {
            return Err(Error::config("element spacings must be positive"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n_v * self.n_h
    }

    pub fn index(&self, v: usize, h: usize) -> usize {
        v * self.n_h + h
    }
}

/// Parameters of a synthetic propagation environment. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub carrier_freq_hz: f64,
    /// Inclusive `[L_min, L_max]`.
    pub num_paths_range: [usize; 2],
    pub azimuth_center: f64,
    pub azimuth_spread: f64,
    pub elevation_center: f64,
    pub elevation_spread: f64,
    pub delay_spread_s: f64,
    pub los_probability: f64,
    pub los_power_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    /// Measurement-like environment: moderate scattering around broadside
    /// with a wider horizontal than vertical spread and frequent line of
    /// sight.
    pub fn env_a() -> Self {
        ScenarioConfig {
            scenario_id: "env-A".into(),
            carrier_freq_hz: 2.18e9,
            num_paths_range: [2, 8],
            azimuth_center: 0.0,
            azimuth_spread: 0.25,
            elevation_center: -0.17,
            elevation_spread: 0.05,
            delay_spread_s: 100e-9,
            los_probability: 0.5,
            los_power_fraction: 0.7,
            seed: 1,
        }
    }

    /// Simulator-like environment: richer scattering from an off-broadside
    /// sector with larger elevation spread and longer delays.
    pub fn env_b() -> Self {
        ScenarioConfig {
            scenario_id: "env-B".into(),
            carrier_freq_hz: 2.18e9,
            num_paths_range: [3, 10],
            azimuth_center: 0.6,
            azimuth_spread: 0.2,
            elevation_center: -0.05,
            elevation_spread: 0.1,
            delay_spread_s: 300e-9,
            los_probability: 0.2,
            los_power_fraction: 0.5,
            seed: 2,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "env-A" => Some(Self::env_a()),
            "env-B" => Some(Self::env_b()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.num_paths_range;
        if hi == 0 {
            return Err(Error::config("num_paths_range upper bound must be >= 1"));
        }
        if lo == 0 || hi < lo {
            return Err(Error::config(format!(
                "num_paths_range [{lo}, {hi}] must satisfy 1 <= L_min <= L_max"
            )));
        }
        if !(self.carrier_freq_hz > 0.0) || !(self.delay_spread_s > 0.0) {
            return Err(Error::config("carrier frequency and delay spread must be positive"));
        }
        if !(self.azimuth_spread >= 0.0 && self.elevation_spread >= 0.0) {
            return Err(Error::config("angular spreads must be nonnegative"));
        }
        for (name, p) in [
            ("los_probability", self.los_probability),
            ("los_power_fraction", self.los_power_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Parses a scenario from TOML text whose keys match the field names.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(pub Array1<C64>);

impl ChannelVector {
    pub fn new(entries: Array1<C64>) -> Result<Self> {
        if entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(ChannelVector(entries))
        } else {
            Err(Error::config("channel vector has non-finite entries"))
        }
    }

    pub fn view(&self) -> ArrayView1<'_, C64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Array1<C64> {
        self.0
    }
}

/// A normalized set of channel samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub geometry: ArrayGeometry,
    pub scenario_id: String,
    pub seed: u64,
    pub samples: Array2<C64>,
    /// Scalar applied to the raw draws so that the mean of |h|^2 equals N.
    pub normalization_scale: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn n(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, m: usize) -> ArrayView1<'_, C64> {
        self.samples.row(m)
    }

    pub fn view(&self) -> ArrayView2<'_, C64> {
        self.samples.view()
    }

    /// Empirical mean of |h|^2.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.len() as f64
    }
}

/// Noisy observation `y = h + n` with `n ~ CN(0, noise_var I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Array1<C64>,
    pub noise_var: f64,
    pub snr_db: f64,
}

/// Noise variance of a unit-power channel at `snr_db`.
pub fn noise_var_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Array response with entry `(v, h)` equal to
/// `exp(j 2 pi (d_h h sin(az) cos(el) + d_v v sin(el)))`.
pub fn steering_vector(geometry: &ArrayGeometry, azimuth: f64, elevation: f64) -> ChannelVector {
    let u = geometry.spacing_h * azimuth.sin() * elevation.cos();
    let w = geometry.spacing_v * elevation.sin();
    let a = Array1::from_shape_fn(geometry.n(), |i| {
        let (v, h) = (i / geometry.n_h, i % geometry.n_h);
        // reduce before scaling so large indices keep their precision
        let phase = TAU * ((u * h as f64).fract() + (w * v as f64).fract());
        C64::from_polar(1.0, phase)
    });
    ChannelVector(a)
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Draws one channel from the scenario.
///
/// Per-path powers decay exponentially with delay and are normalized per draw
/// to unit total, so `E|h|^2 = N`. A line-of-sight draw replaces the first
/// path's Rayleigh gain with a fixed-magnitude gain carrying
/// `los_power_fraction` of the power (all of it when `L = 1`).
pub fn sample_channel<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    geometry: &ArrayGeometry,
    rng: &mut R,
) -> Result<ChannelVector> {
    config.validate()?;
    geometry.validate()?;
    let [lo, hi] = config.num_paths_range;
    let num_paths = rng.random_range(lo..=hi);
    let los = rng.random::<f64>() < config.los_probability;
    let delay_dist = Exp::new(1.0 / config.delay_spread_s).expect("positive rate");

    struct Path {
        azimuth: f64,
        elevation: f64,
        delay: f64,
    }
    let paths: Vec<Path> = (0..num_paths)
        .map(|_| {
            let za: f64 = StandardNormal.sample(rng);
            let ze: f64 = StandardNormal.sample(rng);
            Path {
                azimuth: wrap_angle(config.azimuth_center + config.azimuth_spread * za),
                elevation: wrap_angle(config.elevation_center + config.elevation_spread * ze),
                delay: delay_dist.sample(rng),
            }
        })
        .collect();

    let los_fraction = match (los, num_paths) {
        (false, _) => 0.0,
        (true, 1) => 1.0,
        (true, _) => config.los_power_fraction,
    };
    let scattered = if los { &paths[1..] } else { &paths[..] };
    let profile: Vec<f64> = scattered
        .iter()
        .map(|p| (-p.delay / config.delay_spread_s).exp())
        .collect();
    let profile_sum: f64 = profile.iter().sum();

    let mut h = Array1::<C64>::zeros(geometry.n());
    let mut add_path = |path: &Path, gain: C64| {
        let phase = -TAU * (config.carrier_freq_hz * path.delay).fract();
        let a = steering_vector(geometry, path.azimuth, path.elevation);
        h.scaled_add(gain * C64::from_polar(1.0, phase), &a.0);
    };
    if los {
        let phi = rng.random::<f64>() * TAU;
        add_path(&paths[0], C64::from_polar(los_fraction.sqrt(), phi));
    }
    for (path, p) in scattered.iter().zip(&profile) {
        let power = (1.0 - los_fraction) * p / profile_sum;
        add_path(path, complex_normal(rng) * power.sqrt());
    }
    ChannelVector::new(h)
}

/// Draws `m` channels, sample `i` from stream `(seed, i)`, and scales the set
/// so that its mean |h|^2 equals N.
pub fn generate_dataset(
    config: &ScenarioConfig,
    geometry: &ArrayGeometry,
    m: usize,
    seed: u64,
) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::config("dataset size must be >= 1"));
    }
    config.validate()?;
    geometry.validate()?;
    let n = geometry.n();
    let mut samples = Array2::<C64>::zeros((m, n));
    for (i, mut row) in samples.axis_iter_mut(Axis(0)).enumerate() {
        let mut rng = stream(seed, i as u64);
        row.assign(&sample_channel(config, geometry, &mut rng)?.0);
    }
    let power: f64 = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
    if !(power > 0.0) {
        return Err(Error::config("scenario produced all-zero channels"));
    }
    let scale = (n as f64 / power).sqrt();
    samples.mapv_inplace(|z| z * scale);
    Ok(Dataset {
        geometry: *geometry,
        scenario_id: config.scenario_id.clone(),
        seed,
        samples,
        normalization_scale: scale,
    })
}

pub fn add_noise<R: Rng + ?Sized>(h: ArrayView1<C64>, snr_db: f64, rng: &mut R) -> Observation {
    let noise_var = noise_var_from_snr(snr_db);
    let sigma = noise_var.sqrt();
    let y = h.mapv(|z| z + complex_normal(rng) * sigma);
    Observation {
        y,
        noise_var,
        snr_db,
    }
}

/// Corrupts every row of `h`; row `t` draws from stream `(seed, t)`.
pub fn add_noise_rows(h: ArrayView2<C64>, snr_db: f64, seed: u64) -> Array2<C64> {
    let mut y = h.to_owned();
    for (t, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        let obs = add_noise(row.view(), snr_db, &mut stream(seed, t as u64));
        row.assign(&obs.y);
    }
    y
}

const DATASET_MAGIC: &[u8; 4] = b"GMCD";
const DATASET_VERSION: u32 = 1;

/// Serializes a dataset in the `GMCD` v1 little-endian layout.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let id = ds.scenario_id.as_bytes();
    let mut out = Vec::with_capacity(48 + id.len() + 16 * ds.samples.len());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.geometry.n_v as u32).to_le_bytes());
    out.extend_from_slice(&(ds.geometry.n_h as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&ds.seed.to_le_bytes());
    out.extend_from_slice(&ds.normalization_scale.to_le_bytes());
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    for z in ds.samples.iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

/// Parses a `GMCD` file. Only the array shape is stored, so the returned
/// geometry carries the default spacings of [`ArrayGeometry::ura`].
pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let mut r = fsio::Reader::new(bytes, path);
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::format(path, "bad magic, expected GMCD"));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let n_v = r.u32()? as usize;
    let n_h = r.u32()? as usize;
    let m = r.u64()? as usize;
    let seed = r.u64()?;
    let normalization_scale = r.f64()?;
    let id_len = r.u32()? as usize;
    let scenario_id = String::from_utf8(r.take(id_len)?.to_vec())
        .map_err(|_| Error::format(path, "scenario id is not UTF-8"))?;
    let geometry = ArrayGeometry::ura(n_v, n_h);
    geometry
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let n = geometry.n();
    let expected = m
        .checked_mul(n)
        .and_then(|c| c.checked_mul(16))
        .ok_or_else(|| Error::format(path, "size overflow"))?;
    if r.remaining() != expected {
        return Err(Error::format(
            path,
            format!("body has {} bytes, expected {expected}", r.remaining()),
        ));
    }
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        let re = r.f64()?;
        let im = r.f64()?;
        data.push(C64::new(re, im));
    }
    let samples = Array2::from_shape_vec((m, n), data).expect("shape checked");
    Ok(Dataset {
        geometry,
        scenario_id,
        seed,
        samples,
        normalization_scale,
    })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    fsio::write_atomic(path, &encode_dataset(ds))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fsio::read(path)?, path)
}
