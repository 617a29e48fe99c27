//! Fixed-step explicit Euler integration of a conditional vector field with
//! classifier-free guidance, transporting a noise matrix to a mel matrix
//! over t in [0, 1].

use thiserror::Error;

/// Default Euler step count.
pub const DEFAULT_FLOW_STEPS: usize = 32;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("integration needs at least 1 step")]
    NoSteps,
    #[error("guidance scale {0} must be finite and non-negative")]
    BadGuidance(f64),
    #[error("field produced a non-finite value at step {step} (t = {t:.4})")]
    NumericalError { step: usize, t: f64 },
    #[error("field output length {got} does not match state length {expected}")]
    ShapeMismatch { got: usize, expected: usize },
}

/// A time-dependent vector field evaluable with and without conditioning.
/// Implementations write the velocity for state `x` at time `t` into `out`.
pub trait VectorField {
    fn eval(&self, x: &[f64], t: f64, conditioned: bool, out: &mut Vec<f64>);
}

/// Integration state exposed to step observers.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub x: Vec<f64>,
    pub t: f64,
    pub steps: usize,
    pub guidance_scale: f64,
}

/// Combines conditional and unconditional velocities:
/// `v_uncond + w * (v_cond - v_uncond)`.
///
/// At `w == 1` the formula must return the conditional velocity bit for bit,
/// which the floating-point expression does not guarantee, so that case is
/// special-cased. `w == 0` short-circuits symmetrically.
pub fn guided_velocity(v_cond: &[f64], v_uncond: &[f64], guidance_scale: f64) -> Vec<f64> {
    if guidance_scale == 1.0 {
        return v_cond.to_vec();
    }
    if guidance_scale == 0.0 {
        return v_uncond.to_vec();
    }
    v_cond
        .iter()
        .zip(v_uncond)
        .map(|(c, u)| u + guidance_scale * (c - u))
        .collect()
}

/// Integrates `x0` through the guided field with explicit Euler steps of
/// size `1 / steps`, evaluating the field at the left endpoint of each step.
pub fn integrate(
    x0: &[f64],
    field: &dyn VectorField,
    steps: usize,
    guidance_scale: f64,
) -> Result<Vec<f64>, FlowError> {
    integrate_observed(x0, field, steps, guidance_scale, |_| {})
}

/// As [`integrate`], invoking `observe` with the state after every step.
pub fn integrate_observed(
    x0: &[f64],
    field: &dyn VectorField,
    steps: usize,
    guidance_scale: f64,
    mut observe: impl FnMut(&FlowState),
) -> Result<Vec<f64>, FlowError> {
    if steps == 0 {
        return Err(FlowError::NoSteps);
    }
    if !guidance_scale.is_finite() || guidance_scale < 0.0 {
        return Err(FlowError::BadGuidance(guidance_scale));
    }
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    let mut v_cond = Vec::with_capacity(x.len());
    let mut v_uncond = Vec::with_capacity(x.len());
    for step in 0..steps {
        let t = step as f64 * h;
        field.eval(&x, t, true, &mut v_cond);
        if v_cond.len() != x.len() {
            return Err(FlowError::ShapeMismatch {
                got: v_cond.len(),
                expected: x.len(),
            });
        }
        let v = if guidance_scale == 1.0 {
            v_cond.clone()
        } else {
            field.eval(&x, t, false, &mut v_uncond);
            if v_uncond.len() != x.len() {
                return Err(FlowError::ShapeMismatch {
                    got: v_uncond.len(),
                    expected: x.len(),
                });
            }
            guided_velocity(&v_cond, &v_uncond, guidance_scale)
        };
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += h * vi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NumericalError { step, t });
        }
        observe(&FlowState {
            x: x.clone(),
            t: (step + 1) as f64 * h,
            steps,
            guidance_scale,
        });
    }
    Ok(x)
}

/// The straight transport field toward a fixed target: `v(x, t) = (T - x) /
/// (1 - t)`. Explicit Euler lands on the target exactly (up to rounding) at
/// any step count, which makes it the reference field for the toy decoder.
/// With guidance `w`, the integration target becomes
/// `T_uncond + w * (T_cond - T_uncond)`.
pub struct StraightToTarget {
    pub target_cond: Vec<f64>,
    pub target_uncond: Vec<f64>,
}

impl VectorField for StraightToTarget {
    fn eval(&self, x: &[f64], t: f64, conditioned: bool, out: &mut Vec<f64>) {
        let target = if conditioned {
            &self.target_cond
        } else {
            &self.target_uncond
        };
        out.clear();
        out.extend(target.iter().zip(x).map(|(ti, xi)| (ti - xi) / (1.0 - t)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(Vec<f64>);

    impl VectorField for Constant {
        fn eval(&self, _x: &[f64], _t: f64, _c: bool, out: &mut Vec<f64>) {
            out.clear();
            out.extend_from_slice(&self.0);
        }
    }

    struct Exponential;

    impl VectorField for Exponential {
        fn eval(&self, x: &[f64], _t: f64, _c: bool, out: &mut Vec<f64>) {
            out.clear();
            out.extend_from_slice(x);
        }
    }

    /// Conditional field c, unconditional field u, both constant.
    struct TwoConstants {
        c: Vec<f64>,
        u: Vec<f64>,
    }

    impl VectorField for TwoConstants {
        fn eval(&self, _x: &[f64], _t: f64, conditioned: bool, out: &mut Vec<f64>) {
            out.clear();
            out.extend_from_slice(if conditioned { &self.c } else { &self.u });
        }
    }

    #[test]
    fn constant_field_is_exact_at_any_step_count() {
        let x0 = vec![0.5, -1.0, 2.0];
        let c = vec![1.0, 0.25, -3.0];
        for steps in [1, 7, 32, 100] {
            let out = integrate(&x0, &Constant(c.clone()), steps, 1.0).unwrap();
            for i in 0..3 {
                assert!(
                    (out[i] - (x0[i] + c[i])).abs() < 1e-12,
                    "steps {steps}, lane {i}"
                );
            }
        }
    }

    #[test]
    fn straight_field_lands_on_target_for_any_steps() {
        let x0 = vec![3.0, -2.0, 0.1, 9.9];
        let target = vec![-1.0, 4.0, 0.0, 2.5];
        let field = StraightToTarget {
            target_cond: target.clone(),
            target_uncond: vec![0.0; 4],
        };
        for steps in [1, 2, 5, 32, 200] {
            let out = integrate(&x0, &field, steps, 1.0).unwrap();
            for i in 0..4 {
                assert!((out[i] - target[i]).abs() < 1e-9, "steps {steps}");
            }
        }
    }

    #[test]
    fn straight_field_with_guidance_hits_the_mixed_target() {
        let x0 = vec![0.0, 0.0];
        let field = StraightToTarget {
            target_cond: vec![2.0, -2.0],
            target_uncond: vec![1.0, 1.0],
        };
        let w = 1.5;
        let out = integrate(&x0, &field, 32, w).unwrap();
        // T_u + w (T_c - T_u) = (1 + 1.5*1, 1 + 1.5*(-3)) = (2.5, -3.5)
        assert!((out[0] - 2.5).abs() < 1e-9);
        assert!((out[1] + 3.5).abs() < 1e-9);
    }

    #[test]
    fn euler_error_on_exponential_field_shrinks_at_first_order() {
        let x0 = vec![1.0];
        let exact = std::f64::consts::E;
        let mut errors = Vec::new();
        for steps in [50usize, 100, 200] {
            let out = integrate(&x0, &Exponential, steps, 1.0).unwrap();
            errors.push((out[0] - exact).abs() / exact);
        }
        assert!(errors[1] < 0.015, "100-step relative error {}", errors[1]);
        // Halving the step size should roughly halve the error.
        let ratio = errors[1] / errors[2];
        assert!((ratio - 2.0).abs() < 0.4, "halving ratio {ratio}");
        let order_a = (errors[0] / errors[1]).log2();
        let order_b = (errors[1] / errors[2]).log2();
        assert!(order_a >= 0.8 && order_b >= 0.8, "{order_a}, {order_b}");
    }

    #[test]
    fn guidance_one_is_bitwise_conditional() {
        let v_cond = vec![0.1, -0.7, 3.0625, 1e-12];
        let v_uncond = vec![5.0, 5.0, 5.0, 5.0];
        let v = guided_velocity(&v_cond, &v_uncond, 1.0);
        assert_eq!(v, v_cond);

        let field = TwoConstants {
            c: v_cond.clone(),
            u: v_uncond,
        };
        let from_cond_only = integrate(&[0.0; 4], &Constant(v_cond), 17, 1.0).unwrap();
        let guided = integrate(&[0.0; 4], &field, 17, 1.0).unwrap();
        assert_eq!(guided, from_cond_only);
    }

    #[test]
    fn guidance_zero_is_bitwise_unconditional() {
        let v_cond = vec![9.0, 9.0];
        let v_uncond = vec![0.25, -0.5];
        assert_eq!(guided_velocity(&v_cond, &v_uncond, 0.0), v_uncond);
    }

    #[test]
    fn guided_velocity_is_affine_in_the_scale() {
        let v_cond = vec![1.0, -2.0, 0.5];
        let v_uncond = vec![0.0, 1.0, 0.5];
        let at = |w: f64| guided_velocity(&v_cond, &v_uncond, w);
        let (a, b, c) = (at(0.5), at(1.5), at(2.5));
        for i in 0..3 {
            let step1 = b[i] - a[i];
            let step2 = c[i] - b[i];
            assert!((step1 - step2).abs() < 1e-12, "lane {i} not affine");
        }
    }

    #[test]
    fn non_finite_field_reports_the_step() {
        struct Blows;
        impl VectorField for Blows {
            fn eval(&self, x: &[f64], t: f64, _c: bool, out: &mut Vec<f64>) {
                out.clear();
                out.extend(x.iter().map(|_| if t >= 0.5 { f64::NAN } else { 1.0 }));
            }
        }
        let err = integrate(&[0.0], &Blows, 4, 1.0).unwrap_err();
        match err {
            FlowError::NumericalError { step, .. } => assert_eq!(step, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parameter_validation() {
        let f = Constant(vec![0.0]);
        assert!(matches!(
            integrate(&[0.0], &f, 0, 1.0),
            Err(FlowError::NoSteps)
        ));
        assert!(matches!(
            integrate(&[0.0], &f, 4, -1.0),
            Err(FlowError::BadGuidance(_))
        ));
        assert!(matches!(
            integrate(&[0.0], &f, 4, f64::NAN),
            Err(FlowError::BadGuidance(_))
        ));
    }

    #[test]
    fn observer_sees_every_step() {
        let mut times = Vec::new();
        integrate_observed(&[0.0], &Constant(vec![1.0]), 4, 1.0, |s| times.push(s.t)).unwrap();
        assert_eq!(times, vec![0.25, 0.5, 0.75, 1.0]);
    }
}
