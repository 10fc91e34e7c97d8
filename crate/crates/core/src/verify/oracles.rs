//! Independent reference computations the verification suite checks the
//! implementation against. These deliberately avoid the code paths they
//! validate: the Bayes oracle runs in exact rational arithmetic, and the
//! kinematics oracle is a closed form, not an integrator.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Brute-force posterior `post(k) = prior(k) * lik(k) / sum(...)` computed
/// with arbitrary-precision rationals. Inputs convert exactly (every f64 is
/// a rational), so the only rounding is the final conversion back to f64.
pub fn exact_bayes_posterior(prior: &[f64], likelihood: &[f64]) -> Vec<f64> {
    assert_eq!(prior.len(), likelihood.len());
    let to_rat = |x: f64| BigRational::from_float(x).expect("finite input");
    let products: Vec<BigRational> = prior
        .iter()
        .zip(likelihood)
        .map(|(&p, &l)| to_rat(p) * to_rat(l))
        .collect();
    let norm = products
        .iter()
        .fold(BigRational::from_integer(BigInt::zero()), |acc, p| acc + p);
    assert!(!norm.is_zero(), "degenerate oracle instance");
    products
        .into_iter()
        .map(|p| {
            let r = p / norm.clone();
            r.to_f64().expect("posterior entry fits in f64")
        })
        .collect()
}

/// Closed-form position of a semi-implicit Euler integrator after `k` steps
/// of constant force with no damping and no clamping:
/// `v_i = v0 + a*dt*i`, `p_k = p0 + sum_i v_i*dt = p0 + v0*dt*k + a*dt^2*k(k+1)/2`.
pub fn closed_form_position(
    p0: [f64; 2],
    v0: [f64; 2],
    force: [f64; 2],
    mass: f64,
    dt: f64,
    k: u32,
) -> [f64; 2] {
    let kf = k as f64;
    let coeff = dt * dt * kf * (kf + 1.0) / 2.0;
    [
        p0[0] + v0[0] * dt * kf + force[0] / mass * coeff,
        p0[1] + v0[1] * dt * kf + force[1] / mass * coeff,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_posterior_hand_case() {
        let post = exact_bayes_posterior(&[0.25; 4], &[0.7, 0.1, 0.1, 0.1]);
        assert!((post[0] - 0.7).abs() < 1e-15);
        assert!((post[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn closed_form_reduces_to_statics() {
        let p = closed_form_position([0.3, -0.2], [0.0; 2], [0.0; 2], 1.0, 0.1, 50);
        assert_eq!(p, [0.3, -0.2]);
    }

    #[test]
    fn closed_form_one_step() {
        // One step: v1 = a*dt, p1 = p0 + v1*dt.
        let p = closed_form_position([0.0; 2], [0.0; 2], [1.0, 0.0], 2.0, 0.1, 1);
        assert!((p[0] - 0.005).abs() < 1e-15);
    }
}
