use std::f64::consts::PI;

use cwhom::spectral::{
    coincidence_probability, fringe_metrics, g1, lineshape_psd, mutual_coherence, mutual_coherence_with,
    psd_to_g1_numeric, FringeModel, GammaSign, Lineshape, PsdGrid,
};
use cwhom::Error;
use proptest::prelude::*;

fn lineshape() -> impl Strategy<Value = Lineshape> {
    prop_oneof![
        (1e5..1e7f64).prop_map(|fwhm| Lineshape::Lorentzian { fwhm }),
        (1e5..1e7f64).prop_map(|width| Lineshape::Rectangular { width }),
        (1e5..1e7f64).prop_map(|fwhm| Lineshape::Gaussian { fwhm }),
        (1e5..2e6f64, 1e6..8e6f64, 0.0..1.0f64).prop_map(|(intrinsic_fwhm, deviation, r)| Lineshape::FmTriangle {
            intrinsic_fwhm,
            mod_rate: r * deviation / 100.0,
            deviation,
        }),
    ]
}

proptest! {
    #[test]
    fn g1_is_normalized_even_and_bounded(l in lineshape(), tau in -5e-6..5e-6f64) {
        prop_assert_eq!(g1(&l, 0.0).unwrap(), 1.0);
        let v = g1(&l, tau).unwrap();
        prop_assert!(v.abs() <= 1.0 + 1e-12);
        prop_assert_eq!(v, g1(&l, -tau).unwrap());
    }

    #[test]
    fn coherence_is_symmetric_in_sources(l1 in lineshape(), l2 in lineshape(), tau in -5e-6..5e-6f64) {
        prop_assert_eq!(mutual_coherence(&l1, &l2, tau).unwrap(), mutual_coherence(&l2, &l1, tau).unwrap());
        let signed = mutual_coherence_with(&l1, &l2, tau, GammaSign::Signed).unwrap();
        prop_assert!((signed.abs() - mutual_coherence(&l1, &l2, tau).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn coincidence_probability_stays_in_band(
        v in 0.0..1.0f64,
        l1 in lineshape(),
        l2 in lineshape(),
        dw in -1e8..1e8f64,
        t in -5e-6..5e-6f64,
    ) {
        let model = FringeModel::new(v, l1, l2, dw).unwrap();
        let p = coincidence_probability(&model, t);
        prop_assert!(p >= 1.0 - v - 1e-12 && p <= 1.0 + v + 1e-12);
        prop_assert!((p - coincidence_probability(&model, -t)).abs() < 1e-12);
    }

    #[test]
    fn psd_is_nonnegative_and_even(l in lineshape(), f in -5e7..5e7f64) {
        let d = lineshape_psd(&l, f);
        prop_assert!(d >= 0.0);
        prop_assert!((d - lineshape_psd(&l, -f)).abs() <= 1e-12 * d.max(1e-30));
    }

    #[test]
    fn classical_models_cap_visibility(v in 0.0..1.0f64, l in lineshape()) {
        let result = FringeModel::classical(v, l, l, 0.0);
        prop_assert_eq!(result.is_ok(), v <= 0.5);
    }

    /// Scaling every width by `s` stretches the coherence by `1/s`.
    #[test]
    fn width_scaling(l in lineshape(), s in 0.5..2.0f64, tau in 0.0..2e-6f64) {
        let scaled = l.scaled(s);
        prop_assume!(scaled.validate_closed_form().is_ok());
        let (a, b) = (g1(&scaled, tau).unwrap(), g1(&l, tau * s).unwrap());
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }
}

#[test]
fn lorentzian_and_rect_values() {
    let lor = Lineshape::Lorentzian { fwhm: 2.2e6 };
    let rect = Lineshape::Rectangular { width: 5.2e6 };
    // exp(-pi * 2.2e6 * 100e-9) and sin(pi*0.52)/(pi*0.52)
    assert!((g1(&lor, 100e-9).unwrap() - (-0.22 * PI).exp()).abs() < 1e-15);
    assert!((g1(&rect, 100e-9).unwrap() - (0.52 * PI).sin() / (0.52 * PI)).abs() < 1e-15);
    assert!(g1(&rect, 1.0 / 5.2e6).unwrap().abs() < 1e-15);
}

#[test]
fn beat_node_spacing() {
    let lor = Lineshape::Lorentzian { fwhm: 0.2e6 };
    let model = FringeModel::new(0.5, lor, lor, 2.0 * PI * 3.5e6).unwrap();
    let m = fringe_metrics(&model).unwrap();
    // cos(dw t) vanishes at odd multiples of pi/(2 dw): 71.43 ns, 214.29 ns, ...
    let period = 1.0 / 3.5e6;
    assert_eq!(m.beat_nodes.len(), 3);
    for (i, node) in m.beat_nodes.iter().enumerate() {
        let expected = (i as f64 + 0.5) * period / 2.0;
        assert!((node - expected).abs() < 2e-9, "node {i}: {node} vs {expected}");
    }
}

#[test]
fn numeric_oracle_needs_unit_area() {
    let lor = Lineshape::Lorentzian { fwhm: 2.2e6 };
    let short = PsdGrid::sample(&lor, 20e6, 1 << 14);
    assert!(matches!(psd_to_g1_numeric(&short), Err(Error::InsufficientSpan(_))));
}
