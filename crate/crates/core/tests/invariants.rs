use num_complex::Complex64;
use proptest::prelude::*;

use nmzi::detection::{power_spectrum, Channel, DetectorRecord};
use nmzi::elements::{Axis, BeamSplitterSpec, DoveOrientation, MirrorSpec};
use nmzi::field::{decompose, gaussian_mode, Field, Grid};
use nmzi::network::{ArmId, DovePlacement, Network, NetworkConfig, Port};
use nmzi::weak_trace::analyze;

fn small() -> Grid {
    Grid::new(16, 16, 4.0, 4.0).unwrap()
}

fn config(t2: f64, inner_phase: f64, outer_phase: f64, dove: bool) -> NetworkConfig {
    NetworkConfig {
        grid: small(),
        outer_bs: BeamSplitterSpec::with_transmission(t2).unwrap(),
        inner_phase,
        outer_phase,
        dove: dove.then_some(DovePlacement {
            arm: ArmId::A,
            orientation: DoveOrientation::FlipY,
        }),
        ..NetworkConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn network_conserves_norm(
        t2 in 0.05f64..0.95,
        phi in -3.2f64..3.2,
        psi in -3.2f64..3.2,
        dove: bool,
        q in 0.0f64..0.2,
        t in 0.0f64..1.0,
    ) {
        let mut cfg = config(t2, phi, psi, dove);
        cfg.mirrors = vec![
            MirrorSpec::still(ArmId::E).with_vibration(Axis::Z, 3, q),
            MirrorSpec::still(ArmId::B).with_vibration(Axis::Y, 5, q),
        ];
        let out = Network::build(cfg).unwrap().propagate(t);
        let tot: f64 = out.values().map(Field::norm_sqr).sum();
        prop_assert!((tot - 1.0).abs() < 1e-10);
    }

    #[test]
    fn overlaps_pair_over_outer_cut(
        t2 in 0.05f64..0.95,
        phi in -3.2f64..3.2,
        psi in -3.2f64..3.2,
        dove: bool,
        t in 0.0f64..1.0,
    ) {
        let mut cfg = config(t2, phi, psi, dove);
        cfg.mirrors = vec![MirrorSpec::still(ArmId::E).with_vibration(Axis::Z, 3, 0.15)];
        let net = Network::build(cfg).unwrap();
        let fw = net.arm_snapshots(t);
        let bw = net.adjoint_propagate(t, Port::Detector);
        let ov = |a: ArmId| nmzi::field::inner(&bw[&a], &fw[&a]).unwrap();
        let amp = net.detector_amplitude(t);
        prop_assert!((ov(ArmId::C) + ov(ArmId::E) - amp).norm() < 1e-10);
        prop_assert!((ov(ArmId::C) + ov(ArmId::F) - amp).norm() < 1e-10);
    }

    #[test]
    fn presence_is_phase_of_source_invariant(
        phi in -3.2f64..3.2,
        theta in -3.2f64..3.2,
    ) {
        let mut cfg = config(1.0 / 3.0, phi, -std::f64::consts::FRAC_PI_2, false);
        let a = analyze(&Network::build(cfg.clone()).unwrap());
        cfg.input.phase = theta;
        let b = analyze(&Network::build(cfg).unwrap());
        if let (Ok(a), Ok(b)) = (a, b) {
            for arm in ArmId::ALL {
                prop_assert!((a.arms[&arm].tau - b.arms[&arm].tau).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn decompose_reconstructs(qx in -0.5f64..0.5, qy in -0.5f64..0.5, w in -3.2f64..3.2) {
        let g = Grid::default();
        let r = gaussian_mode(g, 1.0, 0.0, 0.0).unwrap();
        let f = r
            .map_cells(|x, y, a| a * Complex64::from_polar(1.0, qx * x + qy * y))
            .scaled(Complex64::from_polar(0.7, w));
        let d = decompose(&f, &r).unwrap();
        let back = d.reconstruct(&r).unwrap().materialized();
        let f = f.materialized();
        let err = back.amps().iter().zip(f.amps()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
        prop_assert!((d.perp.norm() - 1.0).abs() < 1e-12 || d.eps == 0.0);
    }

    #[test]
    fn spectrum_satisfies_parseval(xs in proptest::collection::vec(-1.0f64..1.0, 64)) {
        let n = xs.len();
        let rec = DetectorRecord {
            n_samples: n,
            sx: xs.clone(),
            sy: vec![0.0; n],
            i_tot: xs.iter().map(|x| x + 2.0).collect(),
        };
        let spec = power_spectrum(&rec);
        let ms = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        prop_assert!((spec.power(Channel::Sx) - ms).abs() < 1e-12);
    }
}
