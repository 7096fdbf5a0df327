//! Property tests for the algebraic invariants of the diffusion core and
//! the corpus metrics.

use proptest::prelude::*;

use dwave::dataprep::si_sdr;
use dwave::diffusion::{forward_diffuse, make_linear_schedule, predict_x0, NoiseLevel};

proptest! {
    #[test]
    fn linear_schedule_invariants(
        steps in 2usize..200,
        beta_start in 1e-6f64..0.01,
        spread in 0.01f64..0.5,
    ) {
        let beta_end = (beta_start + spread).min(0.999);
        let schedule = make_linear_schedule(steps, beta_start, beta_end).unwrap();
        let mut prev_beta = 0.0;
        let mut prev_bar = 1.0;
        for t in 1..=steps {
            let beta = schedule.beta(t);
            prop_assert!(beta > prev_beta && beta > 0.0 && beta < 1.0);
            let bar = schedule.alpha_bar(t);
            prop_assert!(bar > 0.0 && bar < prev_bar);
            // recursion alpha_bar_t = alpha_t * alpha_bar_{t-1}
            let recon = schedule.alpha(t) * schedule.alpha_bar(t - 1);
            prop_assert!((bar - recon).abs() <= 1e-12 * bar.max(1e-300));
            prev_beta = beta;
            prev_bar = bar;
        }
    }

    #[test]
    fn subsample_preserves_invariants(
        steps in 2usize..120,
        num in 1usize..120,
        beta_start in 1e-5f64..0.01,
        spread in 0.02f64..0.4,
    ) {
        let num_steps = 1 + num % steps;
        let schedule = make_linear_schedule(steps, beta_start, beta_start + spread).unwrap();
        let sub = schedule.subsample(num_steps).unwrap();
        prop_assert_eq!(sub.steps(), num_steps);
        // final alpha_bar is preserved exactly
        prop_assert_eq!(
            sub.alpha_bar(num_steps).to_bits(),
            schedule.alpha_bar(steps).to_bits()
        );
        let mut prev_bar = 1.0;
        for t in 1..=num_steps {
            let beta = sub.beta(t);
            prop_assert!(beta > 0.0 && beta < 1.0);
            let bar = sub.alpha_bar(t);
            let recon = sub.alpha(t) * sub.alpha_bar(t - 1);
            prop_assert!((bar - recon).abs() <= 1e-9 * bar.max(1e-300));
            prop_assert!(bar < prev_bar);
            prev_bar = bar;
        }
    }

    #[test]
    fn predict_x0_inverts_forward_diffuse(
        x0 in prop::collection::vec(-2.0f64..2.0, 1..64),
        eps_seed in prop::collection::vec(-3.0f64..3.0, 64),
        sqrt_alpha_bar in 0.01f64..1.0,
    ) {
        let epsilon: Vec<f64> = eps_seed[..x0.len()].to_vec();
        let level = NoiseLevel::continuous(sqrt_alpha_bar);
        let noisy = forward_diffuse(&x0, level, &epsilon).unwrap();
        let recovered = predict_x0(&noisy, &epsilon, sqrt_alpha_bar).unwrap();
        for (orig, rec) in x0.iter().zip(&recovered) {
            let tol = 1e-9 * orig.abs().max(1.0);
            prop_assert!((orig - rec).abs() <= tol, "{} vs {}", orig, rec);
        }
    }

    #[test]
    fn si_sdr_scale_invariant_in_estimate(
        reference in prop::collection::vec(-1.0f64..1.0, 16..128),
        noise in prop::collection::vec(-0.2f64..0.2, 128),
        scale in 0.05f64..20.0,
    ) {
        let estimate: Vec<f64> = reference
            .iter()
            .zip(&noise)
            .map(|(&r, &n)| r + n + 0.01)
            .collect();
        let ref_pow: f64 = reference.iter().map(|v| v * v).sum();
        prop_assume!(ref_pow > 1e-6);
        let base = si_sdr(&estimate, &reference).unwrap();
        prop_assume!(base.abs() < 99.0);
        let scaled: Vec<f64> = estimate.iter().map(|&e| scale * e).collect();
        let rescored = si_sdr(&scaled, &reference).unwrap();
        prop_assert!((rescored - base).abs() < 1e-6);
    }
}
