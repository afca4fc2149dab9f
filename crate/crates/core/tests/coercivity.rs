use homlab::cell::{solve_cell, CellOptions};
use homlab::coefficients::{CoefficientModel, MatrixPreset, PotentialPreset, SourcePreset};
use homlab::domain::{coercivity_check, hom_prime_lower_bound, solve_eps, EpsProblem};
use homlab::fem::CgOptions;
use homlab::spectral::EigOptions;
use homlab::Error;

fn scaled(scale: f64) -> CoefficientModel {
    CoefficientModel::new(MatrixPreset::SmoothIso, PotentialPreset::Sine1, SourcePreset::SineSine).with_potential_scale(scale)
}

#[test]
fn strong_potential_is_flagged_not_raised() {
    let model = scaled(100.0);
    let cell = solve_cell(&model, &CellOptions::new(32)).unwrap();
    // M(Wχ_w) is quadratic in the scale.
    assert!(cell.m_w_chi_w < -50.0, "{}", cell.m_w_chi_w);
    let l0 = hom_prime_lower_bound(&cell.a_hat);
    let problem = EpsProblem::new(model, 0.25, 64).unwrap();
    let report = coercivity_check(&problem, l0, cell.m_w_chi_w, &EigOptions::new(1)).unwrap();
    assert!(report.limit < 0.0);
    assert!(!report.coercive && report.lambda_eps_1 < 0.0, "{report:?}");
    match solve_eps(&problem, |_| 1.0, &CgOptions::for_grid(64)) {
        Err(Error::Coercivity { lambda_eps_1 }) => assert!(lambda_eps_1 < 0.0),
        Ok(_) => {} // CG may converge on an indefinite operator; the flag above is what callers act on
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn unit_potential_is_coercive() {
    let model = scaled(1.0);
    let cell = solve_cell(&model, &CellOptions::new(32)).unwrap();
    let l0 = hom_prime_lower_bound(&cell.a_hat);
    let problem = EpsProblem::new(model, 0.25, 64).unwrap();
    let report = coercivity_check(&problem, l0, cell.m_w_chi_w, &EigOptions::new(1)).unwrap();
    assert!(report.coercive && report.lambda_eps_1 > 30.0, "{report:?}");
}
