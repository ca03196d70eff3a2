//! Optical element transforms and their adjoints.
//!
//! Mirrors are identity at zero tilt; only the perturbation is modelled.
//! A rotation about z kicks the x coordinate, a rotation about y kicks y, and
//! the non-ideal mirror's x-axis wobble is a pure modulation of the scalar
//! path weight.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{check_same_grid, Field};
use crate::network::ArmId;

/// Largest kick allowed, as `q_max * sigma_x`.
pub const MAX_KICK: f64 = 0.2;
/// Largest amplitude-modulation depth.
pub const MAX_DEPTH: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Rotation about z; kicks the x coordinate.
    Z,
    /// Rotation about y; kicks the y coordinate.
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vibration {
    pub axis: Axis,
    /// Cycles per run window.
    pub frequency: u32,
    /// Peak transversal wavenumber kick, in units of `1/w0`.
    pub q_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpMod {
    pub frequency: u32,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorSpec {
    pub label: ArmId,
    #[serde(default)]
    pub vibrations: Vec<Vibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amp_mod: Option<AmpMod>,
}

#[inline]
fn wave(frequency: u32, t: f64) -> f64 {
    (TAU * frequency as f64 * t).sin()
}

impl MirrorSpec {
    pub fn still(label: ArmId) -> Self {
        MirrorSpec {
            label,
            vibrations: Vec::new(),
            amp_mod: None,
        }
    }

    pub fn with_vibration(mut self, axis: Axis, frequency: u32, q_max: f64) -> Self {
        self.vibrations.push(Vibration {
            axis,
            frequency,
            q_max,
        });
        self
    }

    pub fn with_amp_mod(mut self, frequency: u32, depth: f64) -> Self {
        self.amp_mod = Some(AmpMod { frequency, depth });
        self
    }

    /// Transversal kick `(q_x, q_y)` at time `t` (window units).
    pub fn kick(&self, t: f64) -> (f64, f64) {
        let (mut qx, mut qy) = (0.0, 0.0);
        for v in &self.vibrations {
            let q = v.q_max * wave(v.frequency, t);
            match v.axis {
                Axis::Z => qx += q,
                Axis::Y => qy += q,
            }
        }
        (qx, qy)
    }

    pub fn amplitude_factor(&self, t: f64) -> f64 {
        match self.amp_mod {
            Some(m) => 1.0 + m.depth * wave(m.frequency, t),
            None => 1.0,
        }
    }

    /// The same mirror with every vibration and modulation switched off.
    pub fn at_rest(&self) -> Self {
        MirrorSpec::still(self.label)
    }

    pub fn is_still(&self) -> bool {
        self.vibrations.iter().all(|v| v.q_max == 0.0)
            && self.amp_mod.is_none_or(|m| m.depth == 0.0)
    }

    pub fn max_frequency(&self) -> u32 {
        self.vibrations
            .iter()
            .map(|v| v.frequency)
            .chain(self.amp_mod.map(|m| m.frequency))
            .max()
            .unwrap_or(0)
    }

    /// Checks frequencies, kick sizes against `sigma_x` (rms half-width of the
    /// beam intensity) and the modulation depth.
    pub fn validate(&self, sigma_x: f64) -> Result<()> {
        let field = |s: &str| format!("mirrors.{}.{s}", self.label);
        for (i, v) in self.vibrations.iter().enumerate() {
            if v.frequency == 0 {
                return Err(Error::config(
                    field(&format!("vibrations[{i}].frequency")),
                    "must be a positive integer",
                ));
            }
            if !(v.q_max.is_finite() && v.q_max >= 0.0 && v.q_max * sigma_x <= MAX_KICK + 1e-12) {
                return Err(Error::config(
                    field(&format!("vibrations[{i}].q_max")),
                    format!(
                        "{} gives q_max*sigma_x = {}; must lie in [0, {MAX_KICK}]",
                        v.q_max,
                        v.q_max * sigma_x
                    ),
                ));
            }
        }
        if let Some(m) = self.amp_mod {
            if m.frequency == 0 {
                return Err(Error::config(field("amp_mod.frequency"), "must be a positive integer"));
            }
            if !(m.depth.is_finite() && (0.0..=MAX_DEPTH).contains(&m.depth)) {
                return Err(Error::config(
                    field("amp_mod.depth"),
                    format!("{} must lie in [0, {MAX_DEPTH}]", m.depth),
                ));
            }
        }
        Ok(())
    }
}

fn tilt(f: &Field, qx: f64, qy: f64) -> Field {
    if qx == 0.0 && qy == 0.0 {
        return f.clone();
    }
    f.map_cells(|x, y, a| a * Complex64::from_polar(1.0, qx * x + qy * y))
}

/// Mirror at time `t` in `[0, 1)`.
pub fn apply_mirror(f: &Field, spec: &MirrorSpec, t: f64) -> Field {
    let (qx, qy) = spec.kick(t);
    let out = tilt(f, qx, qy);
    match spec.amp_mod {
        Some(_) => out.scaled(Complex64::new(spec.amplitude_factor(t), 0.0)),
        None => out,
    }
}

pub fn apply_mirror_adjoint(f: &Field, spec: &MirrorSpec, t: f64) -> Field {
    let (qx, qy) = spec.kick(t);
    let out = tilt(f, -qx, -qy);
    match spec.amp_mod {
        Some(_) => out.scaled(Complex64::new(spec.amplitude_factor(t), 0.0)),
        None => out,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BsRaw", into = "BsRaw")]
pub struct BeamSplitterSpec {
    t: f64,
    r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BsRaw {
    t: f64,
    r: f64,
}

impl TryFrom<BsRaw> for BeamSplitterSpec {
    type Error = Error;
    fn try_from(raw: BsRaw) -> Result<Self> {
        BeamSplitterSpec::new(raw.t, raw.r)
    }
}

impl From<BeamSplitterSpec> for BsRaw {
    fn from(s: BeamSplitterSpec) -> Self {
        BsRaw { t: s.t, r: s.r }
    }
}

impl BeamSplitterSpec {
    pub fn new(t: f64, r: f64) -> Result<Self> {
        if !(t.is_finite() && r.is_finite() && t >= 0.0 && r >= 0.0) {
            return Err(Error::Domain(format!("splitter amplitudes t={t}, r={r} must be >= 0")));
        }
        if (t * t + r * r - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("t^2 + r^2 = {} != 1", t * t + r * r)));
        }
        Ok(BeamSplitterSpec { t, r })
    }

    /// Splitter with power transmissivity `t2`.
    pub fn with_transmission(t2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t2) {
            return Err(Error::Domain(format!("power transmissivity {t2} outside [0, 1]")));
        }
        Self::new(t2.sqrt(), (1.0 - t2).sqrt())
    }

    pub fn balanced() -> Self {
        BeamSplitterSpec {
            t: std::f64::consts::FRAC_1_SQRT_2,
            r: std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

/// `out_c = t a + i r b`, `out_d = i r a + t b`.
pub fn apply_bs(in_a: &Field, in_b: &Field, spec: &BeamSplitterSpec) -> Result<(Field, Field)> {
    check_same_grid(in_a.grid(), in_b.grid())?;
    let t = Complex64::new(spec.t, 0.0);
    let ir = Complex64::new(0.0, spec.r);
    Ok((in_a.combine(t, in_b, ir)?, in_a.combine(ir, in_b, t)?))
}

/// Hermitian conjugate of [`apply_bs`]: maps `(out_c, out_d)` back to `(a, b)`.
pub fn apply_bs_adjoint(
    out_c: &Field,
    out_d: &Field,
    spec: &BeamSplitterSpec,
) -> Result<(Field, Field)> {
    check_same_grid(out_c.grid(), out_d.grid())?;
    let t = Complex64::new(spec.t, 0.0);
    let mir = Complex64::new(0.0, -spec.r);
    Ok((out_c.combine(t, out_d, mir)?, out_c.combine(mir, out_d, t)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoveOrientation {
    FlipX,
    FlipY,
}

impl DoveOrientation {
    /// Orientation after turning the prism by 90 degrees about the beam.
    pub fn rotated(self) -> Self {
        match self {
            DoveOrientation::FlipX => DoveOrientation::FlipY,
            DoveOrientation::FlipY => DoveOrientation::FlipX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoveSpec {
    pub orientation: DoveOrientation,
}

/// Parity flip of the transversal profile. Grids are symmetric about the
/// origin by construction, so this is an exact index reversal and its own
/// adjoint.
pub fn apply_dove(f: &Field, spec: &DoveSpec) -> Field {
    match spec.orientation {
        DoveOrientation::FlipX => f.reflected(true, false),
        DoveOrientation::FlipY => f.reflected(false, true),
    }
}

pub fn apply_phase(f: &Field, phi: f64) -> Field {
    if phi == 0.0 {
        return f.clone();
    }
    f.scaled(Complex64::from_polar(1.0, phi))
}

/// Normalizes a phase to `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gaussian_mode, inner, odd_mode, Grid};
    use proptest::prelude::*;

    fn g() -> Grid {
        Grid::default()
    }

    fn gauss() -> Field {
        gaussian_mode(g(), 1.0, 0.0, 0.0).unwrap()
    }

    fn mirror() -> MirrorSpec {
        MirrorSpec::still(ArmId::E)
            .with_vibration(Axis::Z, 29, 0.1)
            .with_vibration(Axis::Y, 31, 0.05)
            .with_amp_mod(23, 0.1)
    }

    #[test]
    fn mirror_at_time_zero_is_identity() {
        let f = gauss();
        assert_eq!(apply_mirror(&f, &mirror(), 0.0), f);
    }

    #[test]
    fn z_kick_at_quarter_period() {
        let m = MirrorSpec::still(ArmId::A).with_vibration(Axis::Z, 4, 0.2);
        let f = gauss();
        let out = apply_mirror(&f, &m, 1.0 / 16.0);
        let want = f.map_cells(|x, _, a| a * Complex64::from_polar(1.0, 0.2 * x));
        assert!((&out - &want).norm() < 1e-14);
        assert!((out.norm() - f.norm()).abs() < 1e-12);
    }

    #[test]
    fn amp_mod_scales_path_weight_only() {
        let m = MirrorSpec::still(ArmId::E).with_amp_mod(2, 0.1);
        let f = gauss();
        let out = apply_mirror(&f, &m, 1.0 / 8.0);
        assert_eq!(out.amps(), f.amps());
        assert!((out.path_weight() - Complex64::new(1.1, 0.0)).norm() < 1e-15);
        assert!((out.norm() - 1.1).abs() < 1e-12);
    }

    #[test]
    fn still_mirror_is_identity_for_all_t() {
        let m = MirrorSpec::still(ArmId::C).with_vibration(Axis::Z, 7, 0.0);
        let f = gauss();
        for j in 0..16 {
            assert_eq!(apply_mirror(&f, &m, j as f64 / 16.0), f);
        }
    }

    #[test]
    fn validation_limits() {
        let sigma = 0.5;
        assert!(mirror().validate(sigma).is_ok());
        let big = MirrorSpec::still(ArmId::A).with_vibration(Axis::Z, 3, 0.5);
        assert!(matches!(big.validate(sigma), Err(Error::Config { .. })));
        let zero_f = MirrorSpec::still(ArmId::A).with_vibration(Axis::Z, 0, 0.1);
        assert!(zero_f.validate(sigma).is_err());
        let deep = MirrorSpec::still(ArmId::A).with_amp_mod(3, 0.3);
        assert!(deep.validate(sigma).is_err());
    }

    #[test]
    fn dove_cases() {
        let f = gauss();
        let x = DoveSpec {
            orientation: DoveOrientation::FlipX,
        };
        let even = apply_dove(&f, &x);
        assert!((&even - &f).norm() < 1e-14);
        let odd = odd_mode(g(), 1.0, true).unwrap();
        let flipped = apply_dove(&odd, &x);
        assert!((&flipped + &odd).norm() < 1e-14);
        // y-odd mode is untouched by an x flip, negated by a y flip
        let oy = odd_mode(g(), 1.0, false).unwrap();
        assert!((&apply_dove(&oy, &x) - &oy).norm() < 1e-14);
        let y = DoveSpec {
            orientation: DoveOrientation::FlipX.rotated(),
        };
        assert!((&apply_dove(&oy, &y) + &oy).norm() < 1e-14);
    }

    #[test]
    fn balanced_bs_cases() {
        let f = gauss();
        let z = Field::zeros(g());
        let bs = BeamSplitterSpec::balanced();
        let (c, d) = apply_bs(&f, &z, &bs).unwrap();
        assert!((c.norm_sqr() - 0.5).abs() < 1e-12);
        assert!((d.norm_sqr() - 0.5).abs() < 1e-12);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = f.scaled(Complex64::new(s, 0.0));
        let b = f.scaled(Complex64::new(0.0, -s));
        let (c, d) = apply_bs(&a, &b, &bs).unwrap();
        assert!((&c - &f).norm() < 1e-12);
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn bs_spec_validation() {
        assert!(BeamSplitterSpec::new(0.6, 0.8).is_ok());
        assert!(BeamSplitterSpec::new(0.6, 0.7).is_err());
        assert!(BeamSplitterSpec::with_transmission(1.5).is_err());
        let s = BeamSplitterSpec::with_transmission(1.0 / 3.0).unwrap();
        assert!((s.t() * s.t() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bs_rejects_grid_mismatch() {
        let other = Field::zeros(Grid::new(8, 8, 4.0, 4.0).unwrap());
        assert!(apply_bs(&gauss(), &other, &BeamSplitterSpec::balanced()).is_err());
    }

    #[test]
    fn phase_cases() {
        let f = gauss();
        assert_eq!(apply_phase(&f, 0.0), f);
        let twice = apply_phase(&apply_phase(&f, PI), PI);
        assert!((&twice - &f).norm() < 1e-15);
        assert!((apply_phase(&f, 1.234).norm() - f.norm()).abs() < 1e-15);
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    fn small() -> Grid {
        Grid::new(16, 16, 4.0, 4.0).unwrap()
    }

    fn random_field(vals: &[(f64, f64)]) -> Field {
        let amps = vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        Field::from_amps(small(), amps).unwrap()
    }

    fn field_strategy() -> impl Strategy<Value = Field> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 256).prop_map(|v| random_field(&v))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn bs_conserves_norm(a in field_strategy(), b in field_strategy(), t2 in 0.0..1.0f64) {
            let bs = BeamSplitterSpec::with_transmission(t2).unwrap();
            let (c, d) = apply_bs(&a, &b, &bs).unwrap();
            let before = a.norm_sqr() + b.norm_sqr();
            let after = c.norm_sqr() + d.norm_sqr();
            prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
        }

        #[test]
        fn element_adjoints(f in field_strategy(), h in field_strategy(), u in field_strategy(),
                            v in field_strategy(), t in 0.0..1.0f64, phi in -PI..PI, t2 in 0.0..1.0f64) {
            let tol = 1e-12 * (1.0 + f.norm() * h.norm());
            let m = mirror();
            let lhs = inner(&apply_mirror_adjoint(&h, &m, t), &f).unwrap();
            let rhs = inner(&h, &apply_mirror(&f, &m, t)).unwrap();
            prop_assert!((lhs - rhs).norm() < tol);

            let dove = DoveSpec { orientation: DoveOrientation::FlipX };
            let lhs = inner(&apply_dove(&h, &dove), &f).unwrap();
            let rhs = inner(&h, &apply_dove(&f, &dove)).unwrap();
            prop_assert!((lhs - rhs).norm() < tol);

            let lhs = inner(&apply_phase(&h, -phi), &f).unwrap();
            let rhs = inner(&h, &apply_phase(&f, phi)).unwrap();
            prop_assert!((lhs - rhs).norm() < tol);

            // <adj(BS)(u, v), (f, h)> = <(u, v), BS(f, h)>
            let bs = BeamSplitterSpec::with_transmission(t2).unwrap();
            let (a, b) = apply_bs_adjoint(&u, &v, &bs).unwrap();
            let (c, d) = apply_bs(&f, &h, &bs).unwrap();
            let lhs = inner(&a, &f).unwrap() + inner(&b, &h).unwrap();
            let rhs = inner(&u, &c).unwrap() + inner(&v, &d).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + u.norm() * f.norm() + v.norm() * h.norm()));
        }

        #[test]
        fn dove_involution_exact(f in field_strategy()) {
            for o in [DoveOrientation::FlipX, DoveOrientation::FlipY] {
                let d = DoveSpec { orientation: o };
                prop_assert_eq!(apply_dove(&apply_dove(&f, &d), &d), f.clone());
                prop_assert!((apply_dove(&f, &d).norm_sqr() - f.norm_sqr()).abs() <= 1e-14 * f.norm_sqr());
            }
        }

        #[test]
        fn mirror_norm_only_changes_by_amplitude(f in field_strategy(), t in 0.0..1.0f64) {
            let m = mirror();
            let out = apply_mirror(&f, &m, t);
            let want = f.norm() * m.amplitude_factor(t).abs();
            prop_assert!((out.norm() - want).abs() < 1e-12 * (1.0 + want));
        }
    }
}
