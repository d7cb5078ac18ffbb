use emitterlab::fitting::{fit_g2, fit_spectrum, fit_spectrum_data, G2FitOptions, G2Model, Weighting};
use emitterlab::parallel::map_range;
use emitterlab::photophysics::g2_multi_exponential;
use emitterlab::spectral::Profile;
use emitterlab::synth::{c2cb_linelist, standard_grid, synthetic_curve, synthetic_spectrum, SpectrumFixture, LPE_SPECTRUM};

#[test]
fn spectrum_fit_is_scale_equivariant() {
    let list = c2cb_linelist();
    let spec = synthetic_spectrum(&LPE_SPECTRUM.model(list.clone()), &LPE_SPECTRUM.axis(), Some(12)).unwrap();
    let (x, y) = (spec.xs(), spec.counts());
    let s: Vec<f64> = y.iter().map(|v| v.max(1.0).sqrt()).collect();
    let base = fit_spectrum_data(&x, &y, Weighting::Sigma(&s), &list, Profile::Lorentzian, &Default::default()).unwrap();
    for c in [1e-3, 7.5, 1e4] {
        let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
        let sc: Vec<f64> = s.iter().map(|v| v * c).collect();
        let f = fit_spectrum_data(&x, &yc, Weighting::Sigma(&sc), &list, Profile::Lorentzian, &Default::default()).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(f.value("A").unwrap(), c * base.value("A").unwrap()) <= 1e-8, "A at c={c}");
        for n in ["gamma_eV", "x0_zpl_eV", "f_sc"] {
            assert!(rel(f.value(n).unwrap(), base.value(n).unwrap()) <= 1e-8, "{n} at c={c}");
        }
    }
}

fn mean_abs_rel_error(errors: &[Vec<f64>]) -> Vec<f64> {
    let n = errors.len() as f64;
    (0..errors[0].len()).map(|j| errors.iter().map(|e| e[j].abs()).sum::<f64>() / n).collect()
}

#[test]
fn spectrum_recovery_improves_with_counts() {
    let list = c2cb_linelist();
    let names = ["A", "gamma_eV", "x0_zpl_eV", "f_sc"];
    let level = |scale: f64| {
        let fx = SpectrumFixture { a: LPE_SPECTRUM.a * scale, ..LPE_SPECTRUM };
        let truth = [fx.a, fx.gamma, fx.x0_zpl, fx.f_sc];
        let errs = map_range(8, |i| {
            let spec = synthetic_spectrum(&fx.model(list.clone()), &fx.axis(), Some(300 + i as u64)).unwrap();
            let f = fit_spectrum(&spec, &list, Profile::Lorentzian, &Default::default()).unwrap();
            names.iter().zip(truth).map(|(n, t)| (f.value(n).unwrap() - t) / t).collect::<Vec<_>>()
        });
        mean_abs_rel_error(&errs)
    };
    let (low, high) = (level(0.05), level(5.0));
    for (j, n) in names.iter().enumerate() {
        assert!(high[j] < low[j], "{n}: {} !< {}", high[j], low[j]);
    }
}

#[test]
fn g2_recovery_improves_with_counts() {
    let names = ["tau21", "tau3", "tau4", "sigma"];
    let truth = [4.6e-9, 54.8e-6, 7.04e-6, 0.222];
    let g = |t: f64| g2_multi_exponential(truth[0], truth[1], truth[2], 0.8, 1.2, truth[3], &[t]).unwrap()[0];
    let level = |unity: f64| {
        let errs = map_range(6, |i| {
            let curve = synthetic_curve(&standard_grid(), 1, g, unity, Some(500 + i as u64)).unwrap();
            let f = fit_g2(&curve, G2Model::Exp4Level, &G2FitOptions::default()).unwrap();
            names.iter().zip(truth).map(|(n, t)| (f.value(n).unwrap() - t) / t).collect::<Vec<_>>()
        });
        mean_abs_rel_error(&errs)
    };
    let (low, high) = (level(3e4), level(3e6));
    for (j, n) in names.iter().enumerate() {
        assert!(high[j] < low[j], "{n}: {} !< {}", high[j], low[j]);
    }
}

#[test]
fn fixed_parameters_are_honoured() {
    let g = |t: f64| g2_multi_exponential(4.6e-9, 54.8e-6, 7.04e-6, 0.8, 1.2, 0.222, &[t]).unwrap()[0];
    let curve = synthetic_curve(&standard_grid(), 1, g, 1e6, Some(3)).unwrap();
    let opts = G2FitOptions::default().with_fixed("sigma", 0.222).with_fixed("tau21", 4.6e-9);
    let f = fit_g2(&curve, G2Model::Exp4Level, &opts).unwrap();
    assert_eq!(f.value("sigma"), Some(0.222));
    assert_eq!(f.error("tau21"), Some(0.0));
    assert_eq!(f.n_params, 4);
}
