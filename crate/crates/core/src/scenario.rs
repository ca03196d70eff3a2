//! Scenario presets, config files and the end-to-end run that writes every
//! output file.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::{
    add_noise, mirror_tones, power_spectrum, run_series, verdicts, DetectorRecord,
    FrequencyVerdict, Motion, Spectrum, Thresholds, OVERSAMPLING,
};
use crate::elements::{Axis, DoveOrientation, MirrorSpec};
use crate::error::{Error, Result};
use crate::network::{ArmId, DovePlacement, Network, NetworkConfig, CONSTRUCTIVE, DESTRUCTIVE};
use crate::weak_trace::{analyze_with, consistency_table, ConsistencyRow, PresenceReport, PresenceThresholds};

pub const PRESETS: [&str; 5] = [
    "danan_original",
    "aj_dove_destructive",
    "yf_dove_destructive",
    "yf_dove_constructive",
    "yf_localized_E",
];

/// Default tone of each mirror motion, in cycles per window.
pub mod freq {
    pub const A: u32 = 37;
    pub const B: u32 = 41;
    pub const C: u32 = 43;
    pub const E_Z: u32 = 29;
    pub const E_AMP: u32 = 23;
    pub const F: u32 = 31;
}

/// Default kick size as `q_max * sigma_x`.
pub const KICK: f64 = 0.05;
/// Default amplitude-modulation depth.
pub const DEPTH: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

fn default_samples() -> usize {
    1024
}

fn default_ratio() -> f64 {
    Thresholds::default().ratio
}

fn default_floor() -> f64 {
    Thresholds::default().detector_floor
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_ratio")]
    pub threshold_ratio: f64,
    #[serde(default = "default_floor")]
    pub detector_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub presence: PresenceThresholds,
    pub network: NetworkConfig,
}

impl ScenarioConfig {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            ratio: self.threshold_ratio,
            detector_floor: self.detector_floor,
        }
    }

    /// Checks every downstream invariant before any computation.
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let n = self.n_samples;
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::config("n_samples", format!("{n} is not a power of two >= 2")));
        }
        let mut seen = BTreeSet::new();
        let mut max_f = 0;
        for (arm, motion, f) in mirror_tones(&self.network.mirrors) {
            if !seen.insert(f) {
                return Err(Error::config(
                    "network.mirrors",
                    format!("frequency {f} (mirror {arm}, {motion:?}) is used twice"),
                ));
            }
            max_f = max_f.max(f);
        }
        if n < OVERSAMPLING as usize * max_f as usize {
            return Err(Error::config(
                "n_samples",
                format!("{n} is below {OVERSAMPLING} x the fastest mirror frequency {max_f}"),
            ));
        }
        if !(self.threshold_ratio.is_finite() && self.threshold_ratio > 0.0) {
            return Err(Error::config("threshold_ratio", "must be positive"));
        }
        if !(self.detector_floor.is_finite() && self.detector_floor >= 0.0) {
            return Err(Error::config("detector_floor", "must be >= 0"));
        }
        if let Some(nz) = self.noise {
            if !(nz.sigma.is_finite() && nz.sigma >= 0.0) {
                return Err(Error::config("noise.sigma", "must be >= 0"));
            }
        }
        let p = self.presence;
        if !(p.primary.is_finite() && p.secondary.is_finite() && 0.0 <= p.secondary && p.secondary <= p.primary) {
            return Err(Error::config(
                "presence",
                "thresholds must satisfy 0 <= secondary <= primary",
            ));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(&self.name))
    }
}

fn kick_for(net: &NetworkConfig) -> f64 {
    KICK / net.input.sigma_x()
}

fn z_mirror(arm: ArmId, f: u32, q: f64) -> MirrorSpec {
    MirrorSpec::still(arm).with_vibration(Axis::Z, f, q)
}

fn dove_b() -> Option<DovePlacement> {
    Some(DovePlacement {
        arm: ArmId::B,
        orientation: DoveOrientation::FlipX,
    })
}

fn scenario(name: &str, description: &str, network: NetworkConfig) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        description: description.to_string(),
        n_samples: default_samples(),
        threshold_ratio: default_ratio(),
        detector_floor: default_floor(),
        output_dir: None,
        noise: None,
        presence: PresenceThresholds::default(),
        network,
    }
}

fn yf_network(inner_phase: f64) -> NetworkConfig {
    let mut net = NetworkConfig {
        inner_phase,
        dove: dove_b(),
        ..NetworkConfig::default()
    };
    let q = kick_for(&net);
    net.mirrors = vec![MirrorSpec::still(ArmId::E)
        .with_vibration(Axis::Z, freq::E_Z, q)
        .with_amp_mod(freq::E_AMP, DEPTH)];
    net
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let cfg = match name {
        "danan_original" => {
            let mut net = NetworkConfig::default();
            let q = kick_for(&net);
            net.mirrors = [
                (ArmId::A, freq::A),
                (ArmId::B, freq::B),
                (ArmId::C, freq::C),
                (ArmId::E, freq::E_Z),
                (ArmId::F, freq::F),
            ]
            .into_iter()
            .map(|(a, f)| z_mirror(a, f, q))
            .collect();
            scenario(
                name,
                "destructive inner interferometer, no Dove prism, every mirror vibrating about z",
                net,
            )
        }
        "aj_dove_destructive" => {
            let mut net = NetworkConfig {
                dove: dove_b(),
                ..NetworkConfig::default()
            };
            let q = kick_for(&net);
            net.mirrors = vec![z_mirror(ArmId::E, freq::E_Z, q)];
            scenario(
                name,
                "destructive inner interferometer with a Dove prism in arm B; mirror E vibrating about z",
                net,
            )
        }
        "yf_dove_destructive" => scenario(
            name,
            "destructive inner interferometer with a Dove prism in arm B; mirror E vibrating about z and modulating amplitude",
            yf_network(DESTRUCTIVE),
        ),
        "yf_dove_constructive" => scenario(
            name,
            "constructive inner interferometer with a Dove prism in arm B; mirror E vibrating about z and modulating amplitude",
            yf_network(CONSTRUCTIVE),
        ),
        "yf_localized_E" => {
            let mut net = yf_network(CONSTRUCTIVE);
            net.blocked.insert(ArmId::C);
            scenario(
                name,
                "yf_dove_constructive with arm C blocked, leaving only the E -> inner -> F chain open",
                net,
            )
        }
        _ => {
            return Err(Error::Usage(format!(
                "unknown scenario `{name}`; presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn emit_config(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Parse(e.to_string()))
}

/// A preset name, or a path to a TOML config file.
pub fn load(name_or_path: &str) -> Result<ScenarioConfig> {
    if PRESETS.contains(&name_or_path) {
        return preset(name_or_path);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::Usage(format!(
            "`{name_or_path}` is neither a preset ({}) nor an existing config file",
            PRESETS.join(", ")
        )));
    }
    parse_config(&fs::read_to_string(path)?)
}

/// Everything a run computes, before anything is written.
#[derive(Clone, Debug)]
pub struct RunResults {
    pub config: ScenarioConfig,
    pub record: DetectorRecord,
    pub spectrum: Spectrum,
    pub verdicts: Vec<FrequencyVerdict>,
    pub presence: PresenceReport,
    pub consistency: Vec<ConsistencyRow>,
    pub manifest: Manifest,
}

impl RunResults {
    pub fn verdict(&self, arm: ArmId, motion: Motion) -> Option<&FrequencyVerdict> {
        self.verdicts
            .iter()
            .find(|v| v.mirror == arm && v.axis == motion)
    }

    pub fn row(&self, arm: ArmId, motion: Motion) -> Option<&ConsistencyRow> {
        self.consistency
            .iter()
            .find(|r| r.arm == arm && r.axis == motion)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub deterministic: bool,
    pub config: ScenarioConfig,
    pub files: Vec<String>,
    /// Peak of mirror E's z tone over mirror A's z tone on Sx, when both
    /// vibrate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplification_ratio_e_over_a: Option<f64>,
}

pub const OUTPUT_FILES: [&str; 6] = [
    "series.csv",
    "spectrum.csv",
    "presence.json",
    "verdicts.json",
    "consistency.json",
    "manifest.json",
];

pub fn simulate(config: &ScenarioConfig) -> Result<RunResults> {
    config.validate()?;
    let net = Network::build(config.network.clone())?;
    let clean = run_series(&net, config.n_samples)?;
    let record = match config.noise {
        Some(nz) if nz.sigma > 0.0 => add_noise(&clean, nz.sigma, nz.seed)?,
        _ => clean,
    };
    let spectrum = power_spectrum(&record);
    let verdicts = verdicts(&spectrum, &config.network.mirrors, config.thresholds())?;
    let presence = analyze_with(&net, config.presence)?;
    let consistency = consistency_table(&presence, &verdicts);

    let peak = |arm, m| {
        verdicts
            .iter()
            .find(|v| v.mirror == arm && v.axis == m)
            .map(|v| v.peak)
    };
    let amplification_ratio_e_over_a = match (peak(ArmId::E, Motion::Z), peak(ArmId::A, Motion::Z)) {
        (Some(e), Some(a)) if a > 0.0 => Some(e / a),
        _ => None,
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        deterministic: config.noise.is_none_or(|n| n.sigma == 0.0),
        config: config.clone(),
        files: OUTPUT_FILES.iter().map(|s| s.to_string()).collect(),
        amplification_ratio_e_over_a,
    };
    Ok(RunResults {
        config: config.clone(),
        record,
        spectrum,
        verdicts,
        presence,
        consistency,
        manifest,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub results: RunResults,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Simulates and writes all output files into the config's output directory.
pub fn run(config: &ScenarioConfig) -> Result<RunOutputs> {
    let results = simulate(config)?;
    let dir = config.output_dir();
    fs::create_dir_all(&dir)?;
    let path = |f: &str| dir.join(f);

    results
        .record
        .write_csv(fs::File::create(path("series.csv"))?)?;
    results
        .spectrum
        .write_csv(fs::File::create(path("spectrum.csv"))?)?;
    write_json(&path("presence.json"), &results.presence)?;
    write_json(&path("verdicts.json"), &results.verdicts)?;
    write_json(&path("consistency.json"), &results.consistency)?;
    write_json(&path("manifest.json"), &results.manifest)?;

    Ok(RunOutputs {
        files: OUTPUT_FILES.iter().map(|f| path(f)).collect(),
        dir,
        results,
    })
}
