//! The nested Mach-Zehnder network.
//!
//! ```text
//! source ─ outer BS ─┬─ C ────────────────────────────────┬─ outer BS ─ detector
//!                    └─ E ─ inner BS ─┬─ A ─┬─ inner BS ─ F ┘          └ outer dark
//!                                     └─ B ─┘     └ inner dark
//! ```
//!
//! The network is compiled into a linear plan of splitter and arm stages over
//! named rails. Forward propagation walks the plan front to back; the adjoint
//! walks the same plan back to front with every element replaced by its
//! Hermitian conjugate.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::elements::{
    apply_bs, apply_bs_adjoint, apply_dove, apply_mirror, apply_mirror_adjoint, apply_phase,
    BeamSplitterSpec, DoveOrientation, DoveSpec, MirrorSpec,
};
use crate::error::{Error, Result};
use crate::field::{gaussian_mode, inner, odd_mode, Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArmId {
    A,
    B,
    C,
    E,
    F,
}

impl ArmId {
    pub const ALL: [ArmId; 5] = [ArmId::A, ArmId::B, ArmId::C, ArmId::E, ArmId::F];
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArmId::A => "A",
            ArmId::B => "B",
            ArmId::C => "C",
            ArmId::E => "E",
            ArmId::F => "F",
        };
        f.write_str(s)
    }
}

/// Output ports of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Detector,
    OuterDark,
    InnerDark,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputMode {
    pub waist: f64,
    #[serde(default)]
    pub center_x: f64,
    #[serde(default)]
    pub center_y: f64,
    /// Global phase of the injected photon.
    #[serde(default)]
    pub phase: f64,
}

impl Default for InputMode {
    fn default() -> Self {
        InputMode {
            waist: 1.0,
            center_x: 0.0,
            center_y: 0.0,
            phase: 0.0,
        }
    }
}

impl InputMode {
    /// RMS half-width of the input intensity profile along x.
    pub fn sigma_x(&self) -> f64 {
        self.waist / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DovePlacement {
    pub arm: ArmId,
    pub orientation: DoveOrientation,
}

impl DovePlacement {
    pub fn spec(&self) -> DoveSpec {
        DoveSpec {
            orientation: self.orientation,
        }
    }
}

/// Inner phase that sends the unperturbed inner output toward F to zero.
pub const DESTRUCTIVE: f64 = PI;
pub const CONSTRUCTIVE: f64 = 0.0;
/// Phase in arm C that makes the detector the bright port of the fully
/// constructive network.
pub const OUTER_PHASE_DEFAULT: f64 = -FRAC_PI_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub grid: Grid,
    pub outer_bs: BeamSplitterSpec,
    pub inner_bs: BeamSplitterSpec,
    /// Lumped phase in arm B; [`DESTRUCTIVE`] darkens the inner port toward F.
    pub inner_phase: f64,
    /// Lumped phase in arm C.
    pub outer_phase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dove: Option<DovePlacement>,
    pub mirrors: Vec<MirrorSpec>,
    pub blocked: BTreeSet<ArmId>,
    pub input: InputMode,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            grid: Grid::default(),
            outer_bs: BeamSplitterSpec::with_transmission(1.0 / 3.0).expect("valid ratio"),
            inner_bs: BeamSplitterSpec::balanced(),
            inner_phase: DESTRUCTIVE,
            outer_phase: OUTER_PHASE_DEFAULT,
            dove: None,
            mirrors: Vec::new(),
            blocked: BTreeSet::new(),
            input: InputMode::default(),
        }
    }
}

impl NetworkConfig {
    pub fn mirror(&self, arm: ArmId) -> Option<&MirrorSpec> {
        self.mirrors.iter().find(|m| m.label == arm)
    }

    pub fn mirror_mut(&mut self, arm: ArmId) -> &mut MirrorSpec {
        if let Some(i) = self.mirrors.iter().position(|m| m.label == arm) {
            return &mut self.mirrors[i];
        }
        self.mirrors.push(MirrorSpec::still(arm));
        self.mirrors.last_mut().expect("just pushed")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("network.inner_phase", self.inner_phase),
            ("network.outer_phase", self.outer_phase),
            ("network.input.phase", self.input.phase),
        ] {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        if let Some(d) = &self.dove {
            if !matches!(d.arm, ArmId::A | ArmId::B) {
                return Err(Error::config(
                    "network.dove.arm",
                    format!("{} is not an inner arm (A or B)", d.arm),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for m in &self.mirrors {
            if !seen.insert(m.label) {
                return Err(Error::config(
                    "network.mirrors",
                    format!("mirror {} listed twice", m.label),
                ));
            }
            m.validate(self.input.sigma_x())?;
        }
        let open = |a: ArmId| !self.blocked.contains(&a);
        let via_c = open(ArmId::C);
        let via_e = open(ArmId::E) && open(ArmId::F) && (open(ArmId::A) || open(ArmId::B));
        if !(via_c || via_e) {
            return Err(Error::config(
                "network.blocked",
                "no open path from the source to the detector",
            ));
        }
        gaussian_mode(
            self.grid,
            self.input.waist,
            self.input.center_x,
            self.input.center_y,
        )
        .map_err(|e| Error::config("network.input", e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    Mirror(MirrorSpec),
    Phase(f64),
    Dove(DoveSpec),
}

impl Element {
    fn forward(&self, f: &Field, t: f64) -> Field {
        match self {
            Element::Mirror(m) => apply_mirror(f, m, t),
            Element::Phase(phi) => apply_phase(f, *phi),
            Element::Dove(d) => apply_dove(f, d),
        }
    }

    fn adjoint(&self, f: &Field, t: f64) -> Field {
        match self {
            Element::Mirror(m) => apply_mirror_adjoint(f, m, t),
            Element::Phase(phi) => apply_phase(f, -phi),
            Element::Dove(d) => apply_dove(f, d),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmPlan {
    pub blocked: bool,
    /// Applied in order; the mirror is always first so the entry point of the
    /// arm is "just before its mirror".
    pub elements: Vec<Element>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rail {
    Source,
    Vacuum,
    Arm(ArmId),
    Out(Port),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Splitter {
    Outer,
    Inner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// `(c, d) = BS(a, b)`.
    Split {
        which: Splitter,
        a: Rail,
        b: Rail,
        c: Rail,
        d: Rail,
    },
    Arm(ArmId),
}

const fn arm(a: ArmId) -> Rail {
    Rail::Arm(a)
}

const PLAN: [Stage; 9] = [
    Stage::Split {
        which: Splitter::Outer,
        a: Rail::Source,
        b: Rail::Vacuum,
        c: arm(ArmId::C),
        d: arm(ArmId::E),
    },
    Stage::Arm(ArmId::C),
    Stage::Arm(ArmId::E),
    Stage::Split {
        which: Splitter::Inner,
        a: arm(ArmId::E),
        b: Rail::Vacuum,
        c: arm(ArmId::A),
        d: arm(ArmId::B),
    },
    Stage::Arm(ArmId::A),
    Stage::Arm(ArmId::B),
    Stage::Split {
        which: Splitter::Inner,
        a: arm(ArmId::A),
        b: arm(ArmId::B),
        c: Rail::Out(Port::InnerDark),
        d: arm(ArmId::F),
    },
    Stage::Arm(ArmId::F),
    Stage::Split {
        which: Splitter::Outer,
        a: arm(ArmId::C),
        b: arm(ArmId::F),
        c: Rail::Out(Port::Detector),
        d: Rail::Out(Port::OuterDark),
    },
];

/// Inner interferometer stages: from the E output to the F input.
const INNER_STAGES: std::ops::Range<usize> = 3..7;

#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    arms: BTreeMap<ArmId, ArmPlan>,
    mode: Field,
    input: Field,
}

/// Even/odd transfer amplitudes of the inner interferometer toward F.
#[derive(Clone, Copy, Debug)]
pub struct ParityTransfer {
    pub even: Complex64,
    pub odd: Complex64,
}

struct Rails {
    grid: Grid,
    map: BTreeMap<Rail, Field>,
}

impl Rails {
    fn new(grid: Grid) -> Self {
        Rails {
            grid,
            map: BTreeMap::new(),
        }
    }

    fn take(&mut self, r: Rail) -> Field {
        self.map.remove(&r).unwrap_or_else(|| Field::zeros(self.grid))
    }

    fn put(&mut self, r: Rail, f: Field) {
        self.map.insert(r, f);
    }
}

impl Network {
    pub fn build(config: NetworkConfig) -> Result<Network> {
        config.validate()?;
        let mirror = |a: ArmId| {
            Element::Mirror(config.mirror(a).cloned().unwrap_or_else(|| MirrorSpec::still(a)))
        };
        let mut arms = BTreeMap::new();
        for a in ArmId::ALL {
            let mut elements = vec![mirror(a)];
            match a {
                ArmId::B => elements.push(Element::Phase(config.inner_phase)),
                ArmId::C => elements.push(Element::Phase(config.outer_phase)),
                _ => {}
            }
            if let Some(d) = config.dove.filter(|d| d.arm == a) {
                elements.push(Element::Dove(d.spec()));
            }
            arms.insert(
                a,
                ArmPlan {
                    blocked: config.blocked.contains(&a),
                    elements,
                },
            );
        }
        let inp = config.input;
        let mode = gaussian_mode(config.grid, inp.waist, inp.center_x, inp.center_y)?;
        let input = mode.scaled(Complex64::from_polar(1.0, inp.phase));
        Ok(Network {
            config,
            arms,
            mode,
            input,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn grid(&self) -> Grid {
        self.config.grid
    }

    pub fn plan(&self) -> &'static [Stage] {
        &PLAN
    }

    pub fn arm(&self, a: ArmId) -> &ArmPlan {
        &self.arms[&a]
    }

    /// Unit detector mode: the input Gaussian without its global phase.
    pub fn detector_mode(&self) -> &Field {
        &self.mode
    }

    pub fn input_field(&self) -> &Field {
        &self.input
    }

    /// Same network with every mirror at rest.
    pub fn unperturbed(&self) -> Network {
        let mut cfg = self.config.clone();
        for m in cfg.mirrors.iter_mut() {
            *m = m.at_rest();
        }
        Network::build(cfg).expect("resting copy of a valid config is valid")
    }

    pub fn is_static(&self) -> bool {
        self.config.mirrors.iter().all(MirrorSpec::is_still)
    }

    pub fn max_frequency(&self) -> u32 {
        self.config
            .mirrors
            .iter()
            .map(MirrorSpec::max_frequency)
            .max()
            .unwrap_or(0)
    }

    fn splitter(&self, which: Splitter) -> &BeamSplitterSpec {
        match which {
            Splitter::Outer => &self.config.outer_bs,
            Splitter::Inner => &self.config.inner_bs,
        }
    }

    fn arm_forward(&self, a: ArmId, f: Field, t: f64) -> (Field, Field) {
        let plan = &self.arms[&a];
        if plan.blocked {
            let z = Field::zeros(self.grid());
            return (z.clone(), z);
        }
        let out = plan.elements.iter().fold(f.clone(), |acc, e| e.forward(&acc, t));
        (f, out)
    }

    fn arm_adjoint(&self, a: ArmId, g: Field, t: f64) -> Field {
        let plan = &self.arms[&a];
        if plan.blocked {
            return Field::zeros(self.grid());
        }
        plan.elements.iter().rev().fold(g, |acc, e| e.adjoint(&acc, t))
    }

    fn run_forward(
        &self,
        stages: &[Stage],
        rails: &mut Rails,
        t: f64,
        snapshots: &mut BTreeMap<ArmId, Field>,
    ) -> Result<()> {
        for stage in stages {
            match *stage {
                Stage::Split { which, a, b, c, d } => {
                    let (fa, fb) = (rails.take(a), rails.take(b));
                    let (fc, fd) = apply_bs(&fa, &fb, self.splitter(which))?;
                    rails.put(c, fc);
                    rails.put(d, fd);
                }
                Stage::Arm(id) => {
                    let f = rails.take(arm(id));
                    let (snap, out) = self.arm_forward(id, f, t);
                    snapshots.insert(id, snap);
                    rails.put(arm(id), out);
                }
            }
        }
        Ok(())
    }

    fn forward(&self, t: f64) -> (BTreeMap<ArmId, Field>, BTreeMap<Port, Field>) {
        let mut rails = Rails::new(self.grid());
        rails.put(Rail::Source, self.input.clone());
        let mut snaps = BTreeMap::new();
        self.run_forward(&PLAN, &mut rails, t, &mut snaps)
            .expect("all rails share the network grid");
        let ports = [Port::Detector, Port::OuterDark, Port::InnerDark]
            .into_iter()
            .map(|p| (p, rails.take(Rail::Out(p))))
            .collect();
        (snaps, ports)
    }

    /// Coherent forward evaluation at time `t` in `[0, 1)`.
    pub fn propagate(&self, t: f64) -> BTreeMap<Port, Field> {
        self.forward(t).1
    }

    /// Forward field in each arm just before its mirror (zero if blocked).
    pub fn arm_snapshots(&self, t: f64) -> BTreeMap<ArmId, Field> {
        self.forward(t).0
    }

    /// Backward field in each arm, at the same point as [`Self::arm_snapshots`],
    /// obtained by sending the unit detector mode backward from `port`.
    pub fn adjoint_propagate(&self, t: f64, port: Port) -> BTreeMap<ArmId, Field> {
        let mut rails = Rails::new(self.grid());
        rails.put(Rail::Out(port), self.mode.clone());
        let mut snaps = BTreeMap::new();
        for stage in PLAN.iter().rev() {
            match *stage {
                Stage::Split { which, a, b, c, d } => {
                    let (fc, fd) = (rails.take(c), rails.take(d));
                    let (fa, fb) = apply_bs_adjoint(&fc, &fd, self.splitter(which))
                        .expect("all rails share the network grid");
                    rails.put(a, fa);
                    rails.put(b, fb);
                }
                Stage::Arm(id) => {
                    let g = rails.take(arm(id));
                    let back = self.arm_adjoint(id, g, t);
                    snaps.insert(id, back.clone());
                    rails.put(arm(id), back);
                }
            }
        }
        snaps
    }

    /// `<detector mode | detector field>` at time `t`.
    pub fn detector_amplitude(&self, t: f64) -> Complex64 {
        let ports = self.propagate(t);
        inner(&self.mode, &ports[&Port::Detector]).expect("same grid")
    }

    /// Transfer of the even (input Gaussian) and odd (first Hermite-Gauss
    /// along the Dove's flip axis, x without a Dove) modes from the inner
    /// interferometer's input to its output toward F, mirrors at rest.
    pub fn inner_parity_transfer(&self) -> Result<ParityTransfer> {
        let rest = self.unperturbed();
        let along_x = !matches!(
            self.config.dove.map(|d| d.orientation),
            Some(DoveOrientation::FlipY)
        );
        let even = self.mode.clone();
        let odd = odd_mode(self.grid(), self.config.input.waist, along_x)?;
        let through = |m: &Field| -> Result<Complex64> {
            let mut rails = Rails::new(self.grid());
            rails.put(arm(ArmId::E), m.clone());
            let mut snaps = BTreeMap::new();
            rest.run_forward(&PLAN[INNER_STAGES], &mut rails, 0.0, &mut snaps)?;
            inner(m, &rails.take(arm(ArmId::F)))
        };
        Ok(ParityTransfer {
            even: through(&even)?,
            odd: through(&odd)?,
        })
    }
}
