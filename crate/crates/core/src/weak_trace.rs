//! Two-state-vector presence analysis.
//!
//! The forward state in each arm comes from the source, the backward state
//! from the unit detector mode sent back through the adjoint network. Their
//! local overlap, divided by the detector amplitude, is the first-order trace
//! a mirror kick in that arm leaves on postselected photons (a weak value).
//! A photon confined to a single path has trace 1 there.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::{Channel, FrequencyVerdict, Motion};
use crate::error::{Error, Result};
use crate::field::{inner, Field};
use crate::network::{ArmId, Network, Port};

/// Below this detector amplitude the port counts as fully dark.
const DARK_AMPLITUDE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ArmState {
    pub forward: Field,
    pub backward: Field,
    /// `<backward | forward>`.
    pub overlap: Complex64,
    pub fw_norm: f64,
    pub bw_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TwoStateSnapshot {
    pub arms: BTreeMap<ArmId, ArmState>,
    pub detector_amplitude: Complex64,
}

/// Forward and backward states of the network with every mirror at rest.
pub fn two_state(net: &Network) -> TwoStateSnapshot {
    let rest = net.unperturbed();
    let fw = rest.arm_snapshots(0.0);
    let bw = rest.adjoint_propagate(0.0, Port::Detector);
    let arms = ArmId::ALL
        .iter()
        .map(|&a| {
            let (forward, backward) = (fw[&a].clone(), bw[&a].clone());
            let overlap = inner(&backward, &forward).expect("same grid");
            let state = ArmState {
                fw_norm: forward.norm(),
                bw_norm: backward.norm(),
                forward,
                backward,
                overlap,
            };
            (a, state)
        })
        .collect();
    TwoStateSnapshot {
        arms,
        detector_amplitude: rest.detector_amplitude(0.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresenceClass {
    Primary,
    Secondary,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresenceThresholds {
    /// `tau` at or above this is primary presence.
    pub primary: f64,
    /// Below `primary`, a forward or backward wave at least this strong in
    /// the arm is secondary presence.
    pub secondary: f64,
}

impl Default for PresenceThresholds {
    fn default() -> Self {
        PresenceThresholds {
            primary: 0.1,
            secondary: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmPresence {
    pub class: PresenceClass,
    pub tau: f64,
    pub product: f64,
    pub fw_norm: f64,
    pub bw_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresenceReport {
    pub arms: BTreeMap<ArmId, ArmPresence>,
    pub theta_primary: f64,
    pub theta_secondary: f64,
    pub detector_amplitude: f64,
}

impl PresenceReport {
    pub fn class(&self, a: ArmId) -> PresenceClass {
        self.arms[&a].class
    }
}

pub fn classify(tau: f64, fw_norm: f64, bw_norm: f64, th: PresenceThresholds) -> PresenceClass {
    if tau >= th.primary {
        PresenceClass::Primary
    } else if fw_norm.max(bw_norm) >= th.secondary {
        PresenceClass::Secondary
    } else {
        PresenceClass::None
    }
}

pub fn analyze(net: &Network) -> Result<PresenceReport> {
    analyze_with(net, PresenceThresholds::default())
}

pub fn analyze_with(net: &Network, th: PresenceThresholds) -> Result<PresenceReport> {
    let snap = two_state(net);
    let amp = snap.detector_amplitude.norm();
    if amp <= DARK_AMPLITUDE {
        return Err(Error::PostselectionImpossible);
    }
    let arms = snap
        .arms
        .iter()
        .map(|(&a, s)| {
            let tau = s.overlap.norm() / amp;
            let p = ArmPresence {
                class: classify(tau, s.fw_norm, s.bw_norm, th),
                tau,
                product: s.fw_norm * s.bw_norm,
                fw_norm: s.fw_norm,
                bw_norm: s.bw_norm,
            };
            (a, p)
        })
        .collect();
    Ok(PresenceReport {
        arms,
        theta_primary: th.primary,
        theta_secondary: th.secondary,
        detector_amplitude: amp,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Faithfulness {
    Faithful,
    Unfaithful,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub arm: ArmId,
    pub axis: Motion,
    pub channel: Channel,
    pub frequency: u32,
    pub class: PresenceClass,
    pub present: bool,
    pub flag: Faithfulness,
}

/// Compares each spectral verdict with the presence class of its arm. A
/// frequency faithfully reports presence when it is seen exactly for arms of
/// primary presence.
pub fn consistency_table(
    report: &PresenceReport,
    verdicts: &[FrequencyVerdict],
) -> Vec<ConsistencyRow> {
    verdicts
        .iter()
        .map(|v| {
            let class = report.class(v.mirror);
            let expect = class == PresenceClass::Primary;
            ConsistencyRow {
                arm: v.mirror,
                axis: v.axis,
                channel: v.channel,
                frequency: v.frequency,
                class,
                present: v.present,
                flag: if expect == v.present {
                    Faithfulness::Faithful
                } else {
                    Faithfulness::Unfaithful
                },
            }
        })
        .collect()
}
