use std::f64::consts::FRAC_2_PI;

use persistx::model::{ArModel, InitialDistribution, Innovation, MaModel, Model, SurvivalConvention};
use persistx::oracle::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn exponents_lie_in_unit_interval(a in 0.05..5.0f64, b in 0.05..5.0f64, a1 in -0.99..-0.01f64) {
        for l in [ar1_uniform_exponent(a, b).unwrap(), ar1_exponential_exponent(a1).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&l));
        }
        for l in [ma1_uniform_exponent(a, b, 1e-12).unwrap(), ma1_exponential_exponent(a1).unwrap()] {
            prop_assert!((0.0..1.0).contains(&l));
        }
    }

    #[test]
    fn tan_root_solves_equation(a in 0.1..1.0f64, ratio in 1.01..6.0f64) {
        let b = a * ratio;
        let root = ma1_uniform_root(a, b, 1e-12).unwrap();
        prop_assert!(ma1_uniform_equation(a, b, root).abs() < 1e-10);
        prop_assert!(root > 0.0 && root < 1.0);
    }

    #[test]
    fn rademacher_forms_agree(n in 0usize..60) {
        for conv in [SurvivalConvention::NonNegative, SurvivalConvention::StrictlyPositive] {
            let c = rademacher_pn(n, conv);
            prop_assert!(((c - rademacher_transfer_pn(n, conv)) / c).abs() < 1e-12);
        }
    }

    #[test]
    fn characteristic_root_solves(a in prop::collection::vec(0.0..1.5f64, 1..4)) {
        prop_assume!(a.iter().sum::<f64>() > 1.01);
        let rho = characteristic_root(&a).unwrap();
        let s: f64 = a.iter().enumerate().map(|(j, x)| x * rho.powi(-(j as i32 + 1))).sum();
        prop_assert!(rho > 1.0 && (s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn branch_continuity_across_equal_bounds() {
    let at = |a: f64, b: f64| ma1_uniform_exponent(a, b, 1e-13).unwrap();
    for eps in [1e-3, 1e-5, 1e-7] {
        let below = at(1.0, 1.0 - eps);
        let above = at(1.0, 1.0 + eps);
        assert!((below - FRAC_2_PI).abs() < 10.0 * eps && (above - FRAC_2_PI).abs() < 10.0 * eps);
    }
}

#[test]
fn degenerate_probabilities_are_factorials() {
    assert_eq!(degenerate_factorial_pn(0), 0.5);
    assert!((degenerate_factorial_pn(1) - 1.0 / 6.0).abs() < 1e-17);
    assert!((degenerate_factorial_pn(4) - 1.0 / 720.0).abs() < 1e-18);
    // log-space branch continues the product
    let ratio = degenerate_factorial_pn(19) / degenerate_factorial_pn(18);
    assert!((ratio - 1.0 / 21.0).abs() < 1e-12);
}

#[test]
fn ar1_exponential_initial_laws() {
    // Z₀ = 0 gives E[e^{a₁Z₀}1{Z₀≥0}] = 1
    let p = ar1_exponential_pn(-1.0, 1, &InitialDistribution::PointMass { x: vec![0.0] }).unwrap();
    assert_eq!(p, 1.0);
    let iid = InitialDistribution::Iid { innovation: Innovation::Exponential };
    for n in 1..10 {
        assert!((ar1_exponential_pn(-1.0, n, &iid).unwrap() - 0.5f64.powi(n as i32)).abs() < 1e-15);
    }
    assert_eq!(ar1_exponential_pn(-1.0, 0, &iid).unwrap(), 1.0);
    assert!(ar1_exponential_pn(0.5, 1, &iid).is_err());
}

#[test]
fn regime_labels() {
    let g = Innovation::gaussian(1.0).unwrap();
    let ar = |c: Vec<f64>| Model::Ar(ArModel::new(c, g, InitialDistribution::Iid { innovation: g }, SurvivalConvention::NonNegative).unwrap());
    let ma = |c: Vec<f64>| Model::Ma(MaModel::new(c, g, SurvivalConvention::NonNegative).unwrap());
    assert_eq!(classify_regime(&ma(vec![-1.0])).label, "degenerate, β=0");
    assert_eq!(classify_regime(&ma(vec![-0.5, -0.5])).regime, Regime::Degenerate);
    assert_eq!(classify_regime(&ma(vec![0.3])).regime, Regime::Nondegenerate);
    let sup = classify_regime(&ar(vec![1.2]));
    assert_eq!((sup.regime, sup.characteristic_root), (Regime::Supercritical, Some(1.2)));
    assert_eq!(classify_regime(&ar(vec![0.5, 0.25])).regime, Regime::Contractive);
    assert_eq!(classify_regime(&ar(vec![-2.0, -0.5])).regime, Regime::Nonpositive);
    let odd = classify_regime(&ar(vec![1.5, -0.8]));
    assert_eq!(odd.regime, Regime::Unclassified);
    assert_eq!(odd.label, "unsupported regime — exploratory");
    assert!(!odd.supported);
}

#[test]
fn lookup_and_case_json() {
    let model = Model::Ma(MaModel::new(vec![-0.5], Innovation::Exponential, SurvivalConvention::NonNegative).unwrap());
    let case = OracleCase::lookup(&model).unwrap();
    assert_eq!(case, OracleCase::Ma1Exponential { a1: -0.5 });
    assert_eq!(case.exponent().unwrap(), 0.5);
    let back: OracleCase = serde_json::from_str(r#"{"case":"ma1-exponential","a1":-0.5}"#).unwrap();
    assert_eq!(back, case);
    assert_eq!(case.name(), "ma1-exponential");
}

#[test]
fn marginal_survival() {
    let g = Innovation::gaussian(1.0).unwrap();
    let m = MaModel::new(vec![0.7], g, SurvivalConvention::NonNegative).unwrap();
    assert!((ma_marginal_survival(&m) - 0.5).abs() < 1e-12);
    // ξ₀ − 0.5ξ₋₁ ≥ 0 with standard exponentials: 1 − 1/3
    let e = MaModel::new(vec![-0.5], Innovation::Exponential, SurvivalConvention::NonNegative).unwrap();
    assert!((ma_marginal_survival(&e) - 2.0 / 3.0).abs() < 1e-6);
}
