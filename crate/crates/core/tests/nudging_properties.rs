mod common;

use common::{random_matrix, random_spd};
use nalgebra::DMatrix;
use nudge_core::gaussian::normal_logpdf;
use nudge_core::nudging::LikelihoodGradient;
use nudge_core::{
    affine_nudge_gaussian, apply_nudge, grad_log_likelihood, lipschitz_constant, NudgeConfig, ObsVec,
    ObservationModel, RngStream, StateVec,
};
use proptest::prelude::*;

struct Case {
    obs: ObservationModel,
    x: StateVec,
    y: ObsVec,
    lipschitz: f64,
}

fn case(dx: usize, seed: u64) -> Case {
    let mut rng = RngStream::new(seed, dx as u64).rng();
    let dy = if dx == 1 { 1 } else { 1 + (seed as usize % dx) };
    let c = random_matrix(&mut rng, dy, dx, 1.0);
    let rm = random_spd(&mut rng, dy, 0.1);
    let lipschitz = lipschitz_constant(&c, &rm).unwrap();
    Case {
        obs: ObservationModel::new(c, rm).unwrap(),
        x: StateVec::new(common::random_vector(&mut rng, dx, 5.0)).unwrap(),
        y: ObsVec::new(common::random_vector(&mut rng, dy, 5.0)).unwrap(),
        lipschitz,
    }
}

fn loglik(case: &Case, x: &StateVec) -> f64 {
    case.obs.log_likelihood(x.as_vector(), case.y.as_vector())
}

fn nudge(case: &Case, gamma: f64) -> (StateVec, StateVec) {
    let grad = grad_log_likelihood(&case.x, &case.y, case.obs.c(), case.obs.rm()).unwrap();
    let cfg = NudgeConfig::gradient_ascent(gamma, case.lipschitz).unwrap();
    (apply_nudge(&case.x, &cfg, &grad).unwrap(), grad)
}

fn check_monotone_and_bound(dx: usize, seed: u64, frac: f64) -> Result<(), TestCaseError> {
    let c = case(dx, seed);
    if c.lipschitz <= 0.0 {
        return Ok(());
    }
    let gamma = frac * 2.0 / c.lipschitz;
    let (nudged, grad) = nudge(&c, gamma);
    let gain = loglik(&c, &nudged) - loglik(&c, &c.x);
    prop_assert!(gain >= -1e-10, "likelihood decreased by {gain}");
    let lower = gamma * (1.0 - gamma * c.lipschitz / 2.0) * grad.norm_squared();
    prop_assert!(gain >= lower - 1e-10, "gain {gain} below {lower}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nudge_never_decreases_likelihood_scalar(seed in any::<u64>(), frac in 1e-6f64..0.999_999) {
        check_monotone_and_bound(1, seed, frac)?;
    }

    #[test]
    fn nudge_never_decreases_likelihood_four_dims(seed in any::<u64>(), frac in 1e-6f64..0.999_999) {
        check_monotone_and_bound(4, seed, frac)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn displacement_shrinks_with_step(seed in any::<u64>(), dx in 1usize..=4) {
        let c = case(dx, seed);
        let upper = 2.0 / c.lipschitz.max(1e-12);
        let mut last = f64::INFINITY;
        for k in 1..=8 {
            let gamma = 10f64.powi(-k);
            if gamma >= upper {
                continue;
            }
            let (nudged, grad) = nudge(&c, gamma);
            let step = (nudged.as_vector() - c.x.as_vector()).norm();
            prop_assert!(step <= gamma * grad.norm() * (1.0 + 1e-12) + 1e-15);
            prop_assert!(step <= last);
            last = step;
        }
        prop_assert!(last <= 1e-8 * (1.0 + nudge(&c, 0.0).1.norm()));
    }

    #[test]
    fn affine_and_generic_forms_agree(seed in any::<u64>(), dx in 1usize..=4, frac in 0.0f64..0.999) {
        let c = case(dx, seed);
        let gamma = frac * 2.0 / c.lipschitz;
        let (generic, _) = nudge(&c, gamma);
        let affine = affine_nudge_gaussian(c.obs.c(), c.obs.rm(), &c.y, gamma).unwrap();
        let diff = (affine.apply(c.x.as_vector()) - generic.as_vector()).amax();
        prop_assert!(diff <= 1e-12 * (1.0 + generic.as_vector().amax()), "diff {diff}");
        let fast = LikelihoodGradient::new(&c.obs);
        let mut x = c.x.as_vector().clone();
        fast.nudge_in_place(&mut x, c.y.as_vector(), gamma);
        prop_assert!((x - generic.as_vector()).amax() <= 1e-12 * (1.0 + generic.as_vector().amax()));
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), dx in 1usize..=4) {
        let c = case(dx, seed);
        let grad = grad_log_likelihood(&c.x, &c.y, c.obs.c(), c.obs.rm()).unwrap();
        let h = 1e-5;
        for i in 0..dx {
            let mut up = c.x.as_vector().clone();
            let mut down = c.x.as_vector().clone();
            up[i] += h;
            down[i] -= h;
            let fd = (c.obs.log_likelihood(&up, c.y.as_vector()) - c.obs.log_likelihood(&down, c.y.as_vector())) / (2.0 * h);
            let scale = grad.as_vector().amax().max(1.0);
            prop_assert!((fd - grad[i]).abs() <= 1e-6 * scale, "coord {i}: fd {fd} analytic {}", grad[i]);
        }
    }
}

#[test]
fn scalar_observation_matches_closed_form() {
    // y = 2x + v, v ~ N(0, 0.5): log g increases by exactly the quadratic gain
    let obs = ObservationModel::new(DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 0.5)).unwrap();
    let l = lipschitz_constant(obs.c(), obs.rm()).unwrap();
    assert!((l - 8.0).abs() < 1e-12);
    let x = StateVec::from_slice(&[0.3]).unwrap();
    let y = ObsVec::from_slice(&[1.7]).unwrap();
    let grad = grad_log_likelihood(&x, &y, obs.c(), obs.rm()).unwrap();
    for gamma in [0.01, 0.1, 0.125, 0.2, 0.249] {
        let cfg = NudgeConfig::gradient_ascent(gamma, l).unwrap();
        let z = apply_nudge(&x, &cfg, &grad).unwrap();
        let before = normal_logpdf(1.7, 2.0 * 0.3, 0.5);
        let after = normal_logpdf(1.7, 2.0 * z[0], 0.5);
        let expected = gamma * (1.0 - gamma * l / 2.0) * grad.norm_squared();
        assert!((after - before - expected).abs() < 1e-12);
    }
}
