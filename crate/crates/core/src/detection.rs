//! Far-field quad-cell detection, time series over one run window, spectra
//! and per-frequency presence verdicts.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::elements::{Axis, MirrorSpec};
use crate::error::{Error, Result};
use crate::field::{far_field, Field};
use crate::network::{ArmId, Network, Port};

pub const SERIES_HEADER: [&str; 4] = ["t", "Sx", "Sy", "I_tot"];
pub const SPECTRUM_HEADER: [&str; 4] = ["freq", "|Sx|", "|Sy|", "|I_tot|"];

/// Minimum samples per cycle of the fastest mirror.
pub const OVERSAMPLING: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Sx,
    Sy,
    #[serde(rename = "I_tot")]
    ITot,
}

/// Quad-cell readout of one detector field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSignals {
    pub sx: f64,
    pub sy: f64,
    pub i_tot: f64,
}

/// Quad cell in the far field: half-plane intensity differences and the
/// total intensity.
pub fn quad_signals(f: &Field) -> QuadSignals {
    let ff = far_field(f);
    let g = *ff.grid();
    let w = ff.path_weight().norm_sqr() * g.cell_area();
    let (hx, hy) = (g.nx() / 2, g.ny() / 2);
    let (mut sx, mut sy, mut tot) = (0.0, 0.0, 0.0);
    for iy in 0..g.ny() {
        for ix in 0..g.nx() {
            let p = ff.amps()[g.index(ix, iy)].norm_sqr();
            // cell-centred grid: no cell sits on k = 0
            sx += if ix >= hx { p } else { -p };
            sy += if iy >= hy { p } else { -p };
            tot += p;
        }
    }
    QuadSignals {
        sx: sx * w,
        sy: sy * w,
        i_tot: tot * w,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorRecord {
    pub n_samples: usize,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub i_tot: Vec<f64>,
}

impl DetectorRecord {
    pub fn dt(&self) -> f64 {
        1.0 / self.n_samples as f64
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        match c {
            Channel::Sx => &self.sx,
            Channel::Sy => &self.sy,
            Channel::ITot => &self.i_tot,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SERIES_HEADER)?;
        for j in 0..self.n_samples {
            out.write_record([
                (j as f64 * self.dt()).to_string(),
                self.sx[j].to_string(),
                self.sy[j].to_string(),
                self.i_tot[j].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<DetectorRecord> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().ne(SERIES_HEADER) {
            return Err(Error::Parse(format!(
                "series header must be {}, got {}",
                SERIES_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut sx, mut sy, mut i_tot) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("row {}, column {}: {e}", line + 1, SERIES_HEADER[k]))
                })
            };
            sx.push(num(1)?);
            sy.push(num(2)?);
            let i = num(3)?;
            if i < 0.0 {
                return Err(Error::Parse(format!("row {}: negative I_tot", line + 1)));
            }
            i_tot.push(i);
        }
        if sx.is_empty() {
            return Err(Error::Parse("series has no samples".into()));
        }
        Ok(DetectorRecord {
            n_samples: sx.len(),
            sx,
            sy,
            i_tot,
        })
    }
}

fn check_sampling(n_samples: usize, max_frequency: u32) -> Result<()> {
    if n_samples < 2 || !n_samples.is_power_of_two() {
        return Err(Error::config(
            "n_samples",
            format!("{n_samples} is not a power of two >= 2"),
        ));
    }
    let need = OVERSAMPLING as usize * max_frequency as usize;
    if n_samples < need {
        return Err(Error::config(
            "n_samples",
            format!(
                "{n_samples} undersamples the fastest mirror ({max_frequency} cycles); need >= {need}"
            ),
        ));
    }
    Ok(())
}

/// Samples the quad cell on the detector port at `t_j = j / n_samples`.
pub fn run_series(net: &Network, n_samples: usize) -> Result<DetectorRecord> {
    check_sampling(n_samples, net.max_frequency())?;
    let samples: Vec<QuadSignals> = (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 / n_samples as f64;
            quad_signals(&net.propagate(t)[&Port::Detector])
        })
        .collect();
    Ok(DetectorRecord {
        n_samples,
        sx: samples.iter().map(|s| s.sx).collect(),
        sy: samples.iter().map(|s| s.sy).collect(),
        i_tot: samples.iter().map(|s| s.i_tot).collect(),
    })
}

/// Adds seeded white Gaussian noise of standard deviation `sigma` to every
/// channel. `I_tot` is clamped at zero.
pub fn add_noise(rec: &DetectorRecord, sigma: f64, seed: u64) -> Result<DetectorRecord> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::config("noise.sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |xs: &[f64]| -> Vec<f64> {
        xs.iter().map(|x| x + normal.sample(&mut rng)).collect()
    };
    let sx = noisy(&rec.sx);
    let sy = noisy(&rec.sy);
    let i_tot = noisy(&rec.i_tot).into_iter().map(|v| v.max(0.0)).collect();
    Ok(DetectorRecord {
        n_samples: rec.n_samples,
        sx,
        sy,
        i_tot,
    })
}

/// One-sided amplitude spectrum per channel at integer frequencies
/// `0..=n_samples/2` (cycles per window).
///
/// A sinusoid of amplitude `a` at an integer frequency shows up as magnitude
/// `a` in its bin; the DC bin holds `|mean|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub n_samples: usize,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub i_tot: Vec<f64>,
}

impl Spectrum {
    pub fn channel(&self, c: Channel) -> &[f64] {
        match c {
            Channel::Sx => &self.sx,
            Channel::Sy => &self.sy,
            Channel::ITot => &self.i_tot,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.sx.len()
    }

    /// Mean-square power recovered from the magnitudes (Parseval).
    pub fn power(&self, c: Channel) -> f64 {
        let m = self.channel(c);
        let n = self.n_samples;
        m.iter()
            .enumerate()
            .map(|(k, v)| {
                let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
                if edge {
                    v * v
                } else {
                    v * v / 2.0
                }
            })
            .sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SPECTRUM_HEADER)?;
        for k in 0..self.n_bins() {
            out.write_record([
                k.to_string(),
                self.sx[k].to_string(),
                self.sy[k].to_string(),
                self.i_tot[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn one_sided(xs: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = xs.len();
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    (0..=n / 2)
        .map(|k| {
            let a = buf[k].norm() / nf;
            if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                a
            } else {
                2.0 * a
            }
        })
        .collect()
}

pub fn power_spectrum(rec: &DetectorRecord) -> Spectrum {
    let mut planner = FftPlanner::new();
    Spectrum {
        n_samples: rec.n_samples,
        sx: one_sided(&rec.sx, &mut planner),
        sy: one_sided(&rec.sy, &mut planner),
        i_tot: one_sided(&rec.i_tot, &mut planner),
    }
}

/// Which mirror motion a verdict concerns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Z,
    Y,
    Amp,
}

impl Motion {
    /// Channel on which the motion's first-order trace is read.
    pub fn channel(self) -> Channel {
        match self {
            Motion::Z => Channel::Sx,
            Motion::Y => Channel::Sy,
            Motion::Amp => Channel::ITot,
        }
    }
}

impl From<Axis> for Motion {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Z => Motion::Z,
            Axis::Y => Motion::Y,
        }
    }
}

/// Every `(mirror, motion, frequency)` carried by the given mirrors.
pub fn mirror_tones(mirrors: &[MirrorSpec]) -> Vec<(ArmId, Motion, u32)> {
    let mut out = Vec::new();
    for m in mirrors {
        for v in &m.vibrations {
            out.push((m.label, Motion::from(v.axis), v.frequency));
        }
        if let Some(a) = m.amp_mod {
            out.push((m.label, Motion::Amp, a.frequency));
        }
    }
    out
}

/// Presence thresholds for [`verdicts`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// A tone is present when its peak is at least this many noise floors.
    pub ratio: f64,
    /// Lower bound on the noise floor, as a fraction of the mean detected
    /// intensity. Stands in for detector resolution when the run is
    /// noiseless and the median bin is at rounding level.
    pub detector_floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            ratio: 10.0,
            detector_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVerdict {
    pub mirror: ArmId,
    pub axis: Motion,
    pub channel: Channel,
    pub frequency: u32,
    pub peak: f64,
    pub noise_floor: f64,
    pub present: bool,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// One verdict per mirror motion, read on that motion's channel.
///
/// The floor is the median magnitude over bins that are neither DC nor a
/// mirror frequency, raised to `detector_floor * mean(I_tot)` when lower.
pub fn verdicts(
    spectrum: &Spectrum,
    mirrors: &[MirrorSpec],
    thresholds: Thresholds,
) -> Result<Vec<FrequencyVerdict>> {
    let tones = mirror_tones(mirrors);
    let mut freqs = BTreeSet::new();
    for &(arm, motion, f) in &tones {
        if !freqs.insert(f) {
            return Err(Error::config(
                "mirrors",
                format!("frequency {f} (mirror {arm}, {motion:?}) used twice"),
            ));
        }
        if f == 0 || f as usize >= spectrum.n_bins() {
            return Err(Error::config(
                "mirrors",
                format!("frequency {f} of mirror {arm} outside the band 1..{}", spectrum.n_bins()),
            ));
        }
    }
    if !(thresholds.ratio.is_finite() && thresholds.ratio > 0.0) {
        return Err(Error::config("threshold_ratio", "must be positive"));
    }
    if !(thresholds.detector_floor.is_finite() && thresholds.detector_floor >= 0.0) {
        return Err(Error::config("detector_floor", "must be >= 0"));
    }
    let dc_intensity = spectrum.i_tot[0];
    let floor_of = |c: Channel| {
        let m = spectrum.channel(c);
        let rest = (1..m.len())
            .filter(|k| !freqs.contains(&(*k as u32)))
            .map(|k| m[k])
            .collect();
        median(rest).max(thresholds.detector_floor * dc_intensity)
    };
    Ok(tones
        .into_iter()
        .map(|(mirror, axis, frequency)| {
            let channel = axis.channel();
            let peak = spectrum.channel(channel)[frequency as usize];
            let noise_floor = floor_of(channel);
            FrequencyVerdict {
                mirror,
                axis,
                channel,
                frequency,
                peak,
                noise_floor,
                present: peak > 0.0 && peak >= thresholds.ratio * noise_floor,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gaussian_mode, Grid};
    use crate::network::NetworkConfig;
    use num_complex::Complex64;
    use std::f64::consts::TAU;

    fn gauss() -> Field {
        gaussian_mode(Grid::default(), 1.0, 0.0, 0.0).unwrap()
    }

    fn record(f: impl Fn(f64) -> f64, n: usize) -> DetectorRecord {
        let xs: Vec<f64> = (0..n).map(|j| f(j as f64 / n as f64)).collect();
        DetectorRecord {
            n_samples: n,
            sx: xs.clone(),
            sy: xs.iter().map(|x| 0.5 * x).collect(),
            i_tot: xs.iter().map(|x| 2.0 + x).collect(),
        }
    }

    #[test]
    fn symmetric_gaussian_reads_zero_difference() {
        let q = quad_signals(&gauss());
        assert!(q.sx.abs() < 1e-12 && q.sy.abs() < 1e-12);
        assert!((q.i_tot - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quad_signals_are_quadratic() {
        let f = gauss().map_cells(|x, y, a| a * Complex64::from_polar(1.0, 0.1 * x - 0.05 * y));
        let q1 = quad_signals(&f);
        let q3 = quad_signals(&f.scaled(Complex64::new(3.0, 0.0)));
        for (a, b) in [(q1.sx, q3.sx), (q1.sy, q3.sy), (q1.i_tot, q3.i_tot)] {
            assert!((b - 9.0 * a).abs() < 1e-12 * b.abs().max(1.0));
        }
        assert!(q1.sx > 0.0 && q1.sy < 0.0);
    }

    #[test]
    fn constant_series_has_only_dc() {
        let s = power_spectrum(&record(|_| 0.25, 64));
        assert!((s.sx[0] - 0.25).abs() < 1e-15);
        assert!(s.sx[1..].iter().all(|m| *m < 1e-10));
    }

    #[test]
    fn unit_sinusoid_lands_in_one_bin() {
        let s = power_spectrum(&record(|t| (TAU * 5.0 * t).sin(), 64));
        for (k, m) in s.sx.iter().enumerate() {
            if k == 5 {
                assert!((m - 1.0).abs() < 1e-12);
            } else {
                assert!(*m < 1e-12, "bin {k}: {m}");
            }
        }
    }

    #[test]
    fn two_sinusoids_two_bins() {
        let s = power_spectrum(&record(
            |t| 0.3 * (TAU * 3.0 * t).cos() + 0.7 * (TAU * 11.0 * t).sin(),
            128,
        ));
        for (k, m) in s.sx.iter().enumerate() {
            match k {
                3 => assert!((m - 0.3).abs() < 1e-12),
                11 => assert!((m - 0.7).abs() < 1e-12),
                _ => assert!(*m < 1e-10),
            }
        }
    }

    #[test]
    fn parseval() {
        let rec = record(|t| 0.2 + (TAU * 3.0 * t).sin().powi(3) + (TAU * 32.0 * t).cos(), 64);
        let s = power_spectrum(&rec);
        for c in [Channel::Sx, Channel::Sy, Channel::ITot] {
            let xs = rec.channel(c);
            let p = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            assert!((s.power(c) - p).abs() < 1e-8 * p);
        }
    }

    #[test]
    fn static_network_series_is_constant() {
        let net = Network::build(NetworkConfig::default()).unwrap();
        let rec = run_series(&net, 64).unwrap();
        for c in [Channel::Sx, Channel::Sy, Channel::ITot] {
            let xs = rec.channel(c);
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!(var < 1e-12);
        }
    }

    #[test]
    fn sampling_rules() {
        let mut cfg = NetworkConfig::default();
        *cfg.mirror_mut(ArmId::C) = MirrorSpec::still(ArmId::C).with_vibration(Axis::Z, 43, 0.1);
        let net = Network::build(cfg).unwrap();
        assert!(matches!(run_series(&net, 1000), Err(Error::Config { .. })));
        assert!(matches!(run_series(&net, 512), Err(Error::Config { .. })));
        assert!(run_series(&net, 1024).is_ok());
    }

    #[test]
    fn verdicts_reject_duplicate_frequencies() {
        let s = power_spectrum(&record(|_| 1.0, 64));
        let ms = vec![
            MirrorSpec::still(ArmId::A).with_vibration(Axis::Z, 5, 0.1),
            MirrorSpec::still(ArmId::B).with_amp_mod(5, 0.1),
        ];
        assert!(matches!(
            verdicts(&s, &ms, Thresholds::default()),
            Err(Error::Config { .. })
        ));
        let out_of_band = vec![MirrorSpec::still(ArmId::A).with_vibration(Axis::Z, 40, 0.1)];
        assert!(verdicts(&s, &out_of_band, Thresholds::default()).is_err());
    }

    #[test]
    fn verdict_threshold() {
        let rec = record(|t| 0.05 * (TAU * 5.0 * t).sin() + 1e-6 * (TAU * 9.0 * t).sin(), 64);
        let s = power_spectrum(&rec);
        let ms = vec![
            MirrorSpec::still(ArmId::A).with_vibration(Axis::Z, 5, 0.1),
            MirrorSpec::still(ArmId::B).with_vibration(Axis::Z, 9, 0.1),
        ];
        let th = Thresholds {
            ratio: 10.0,
            detector_floor: 1e-4,
        };
        let v = verdicts(&s, &ms, th).unwrap();
        assert!(v[0].present);
        assert!(!v[1].present);
        // floor = 1e-4 * mean(I_tot) = 2e-4
        assert!((v[0].noise_floor - 2e-4).abs() < 1e-12);
        for x in &v {
            assert_eq!(x.present, x.peak >= th.ratio * x.noise_floor);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let rec = record(|t| (TAU * t).sin(), 64);
        let a = add_noise(&rec, 0.1, 7).unwrap();
        let b = add_noise(&rec, 0.1, 7).unwrap();
        let c = add_noise(&rec, 0.1, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.i_tot.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn csv_round_trip_and_headers() {
        let rec = record(|t| (TAU * 3.0 * t).sin() * 1e-3, 32);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,Sx,Sy,I_tot\n"));
        assert_eq!(DetectorRecord::read_csv(&buf[..]).unwrap(), rec);

        let mut out = Vec::new();
        power_spectrum(&rec).write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("freq,|Sx|,|Sy|,|I_tot|\n"));

        assert!(DetectorRecord::read_csv("a,b,c,d\n1,2,3,4\n".as_bytes()).is_err());
    }
}
