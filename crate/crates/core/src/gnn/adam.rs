//! Adam optimizer over flat parameter lists.
//!
//! Works on any slice of matrices laid out parallel to a gradient slice,
//! so the same implementation drives both model training and edge-mask
//! optimization.

use super::model::ModelError;
use super::tensor::{Mat, Real};

pub struct Adam<F: Real> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<Mat<F>>,
    v: Vec<Mat<F>>,
}

impl<F: Real> Adam<F> {
    /// Standard coefficients: beta1 0.9, beta2 0.999, epsilon 1e-8.
    pub fn new(lr: f64, shapes: &[&Mat<F>]) -> Self {
        Self::with_coefficients(lr, 0.9, 0.999, 1e-8, shapes)
    }

    pub fn with_coefficients(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        shapes: &[&Mat<F>],
    ) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: shapes.iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect(),
            v: shapes.iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// One bias-corrected update. `names` labels each parameter for
    /// diagnostics when a gradient has gone non-finite.
    pub fn step(
        &mut self,
        params: &mut [&mut Mat<F>],
        grads: &[Mat<F>],
        names: &[String],
    ) -> Result<(), ModelError> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), names.len());
        for (g, name) in grads.iter().zip(names) {
            if !g.is_finite() {
                return Err(ModelError::NonFinite(format!("gradient of {name}")));
            }
        }
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::one();
        let corr1 = F::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let corr2 = F::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = F::from_f64(self.lr);
        let eps = F::from_f64(self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Mat<f64> {
        Mat::from_vec(1, 1, vec![v])
    }

    #[test]
    fn first_steps_match_hand_computation() {
        // with a constant unit gradient, every bias-corrected update is
        // almost exactly the learning rate
        let mut p = scalar(1.0);
        let mut opt = Adam::new(0.1, &[&p]);
        let names = vec!["p".to_string()];
        let g = vec![scalar(1.0)];
        opt.step(&mut [&mut p], &g, &names).unwrap();
        assert!((p.get(0, 0) - 0.9).abs() < 1e-8, "step 1: {}", p.get(0, 0));
        opt.step(&mut [&mut p], &g, &names).unwrap();
        assert!((p.get(0, 0) - 0.8).abs() < 1e-7, "step 2: {}", p.get(0, 0));
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar(0.37);
        let mut opt = Adam::new(0.5, &[&p]);
        for _ in 0..3 {
            opt.step(&mut [&mut p], &[scalar(0.0)], &["p".to_string()])
                .unwrap();
        }
        assert_eq!(p.get(0, 0), 0.37);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = scalar(1.0);
        let mut q = scalar(2.0);
        let mut opt = Adam::new(0.1, &[&p, &q]);
        let err = opt
            .step(
                &mut [&mut p, &mut q],
                &[scalar(0.0), scalar(f64::NAN)],
                &["w_in".to_string(), "layer0.w".to_string()],
            )
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer0.w"), "message was: {msg}");
        // the failed step must not have mutated anything
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(q.get(0, 0), 2.0);
    }

    #[test]
    fn descends_a_quadratic() {
        // minimize (x - 3)^2; gradient 2(x - 3)
        let mut x = scalar(0.0);
        let mut opt = Adam::new(0.05, &[&x]);
        let names = vec!["x".to_string()];
        for _ in 0..2000 {
            let g = 2.0 * (x.get(0, 0) - 3.0);
            opt.step(&mut [&mut x], &[scalar(g)], &names).unwrap();
        }
        assert!((x.get(0, 0) - 3.0).abs() < 1e-3, "got {}", x.get(0, 0));
    }
}
