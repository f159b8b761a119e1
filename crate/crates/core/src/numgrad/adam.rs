use crate::{Error, Result};

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and step count for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamMoments {
    pub fn new(len: usize) -> Self {
        AdamMoments {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

impl Adam {
    /// Applies one bias-corrected Adam update to `params` in place.
    ///
    /// A gradient containing NaN or infinity rejects the whole step before anything
    /// is modified; the error names `name`.
    pub fn step(
        &self,
        name: &str,
        params: &mut [f64],
        grads: &[f64],
        state: &mut AdamMoments,
    ) -> Result<()> {
        if params.len() != grads.len()
            || state.m.len() != params.len()
            || state.v.len() != params.len()
        {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: vec![params.len()],
                rhs: vec![grads.len(), state.m.len(), state.v.len()],
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of `{name}` at index {i} is {}",
                grads[i]
            )));
        }
        state.t += 1;
        let t = state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(state.m.iter_mut())
            .zip(state.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let adam = Adam::default();
        let mut p = vec![1.0, -2.0];
        let mut st = AdamMoments {
            m: vec![0.5, 0.5],
            v: vec![0.25, 0.25],
            t: 3,
        };
        // Non-zero moments still move params; start from fresh state for the
        // "unchanged" claim and check decay separately.
        adam.step("w", &mut p, &[0.0, 0.0], &mut st).unwrap();
        assert!(st.m.iter().all(|&m| m < 0.5 && m > 0.0));
        assert!(st.v.iter().all(|&v| v < 0.25 && v > 0.0));

        let mut p = vec![1.0, -2.0];
        let mut st = AdamMoments::new(2);
        for _ in 0..5 {
            adam.step("w", &mut p, &[0.0, 0.0], &mut st).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let adam = Adam::default();
        let mut p = vec![0.0];
        let mut st = AdamMoments::new(1);
        adam.step("w", &mut p, &[1.0], &mut st).unwrap();
        // m_hat = 1, v_hat = 1, so delta = -lr / (1 + eps).
        let expect = -0.001 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-18);
        assert!((p[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn constant_gradient_update_approaches_lr() {
        let adam = Adam::default();
        let mut p = vec![0.0, 0.0];
        let mut st = AdamMoments::new(2);
        let mut last = [0.0; 2];
        for _ in 0..2000 {
            let before = p.clone();
            adam.step("w", &mut p, &[3.0, -0.01], &mut st).unwrap();
            last = [p[0] - before[0], p[1] - before[1]];
        }
        assert!((last[0] + 1e-3).abs() < 1e-6);
        assert!((last[1] - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let adam = Adam::default();
        let mut p = vec![1.0, 2.0];
        let mut st = AdamMoments::new(2);
        let err = adam
            .step("stage1.fc.w", &mut p, &[0.1, f64::NAN], &mut st)
            .unwrap_err();
        assert!(err.to_string().contains("stage1.fc.w"));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(st, AdamMoments::new(2));
    }

    #[test]
    fn deterministic() {
        let run = || {
            let adam = Adam::default();
            let mut p = vec![0.3, -0.7, 1.1];
            let mut st = AdamMoments::new(3);
            for i in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| (x * i as f64).sin()).collect();
                adam.step("w", &mut p, &g, &mut st).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
