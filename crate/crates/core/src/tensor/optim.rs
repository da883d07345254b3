use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

pub trait Optimizer {
    /// Applies one update. Nothing is written when any gradient is non-finite.
    fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) -> Result<()>;
}

fn check(params: &ParamStore, grads: &[Matrix]) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Shape {
            op: "optimizer_step",
            left: (params.len(), 1),
            right: (grads.len(), 1),
        });
    }
    for (p, g) in params.values().iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) -> Result<()> {
        check(params, grads)?;
        let lr = self.learning_rate;
        for (p, g) in params.values_mut().iter_mut().zip(grads) {
            p.data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(w, d)| *w -= lr * d);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Result<Adam> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {learning_rate}"
            )));
        }
        Ok(Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) -> Result<()> {
        check(params, grads)?;
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.data().len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &d), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * d;
                *vi = b2 * *vi + (1.0 - b2) * d * d;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Matrix::row_vector(vec![w]));
        s
    }

    #[test]
    fn sgd_step() {
        let mut p = single(1.0);
        Sgd {
            learning_rate: 1e-3,
        }
        .step(&mut p, &[Matrix::row_vector(vec![2.0])])
        .unwrap();
        assert!((p.values()[0].data()[0] - 0.998).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(1.5);
        let mut adam = Adam::new(1e-3).unwrap();
        adam.step(&mut p, &[Matrix::row_vector(vec![0.0])]).unwrap();
        assert_eq!(p.values()[0].data()[0], 1.5);
        Sgd { learning_rate: 0.1 }
            .step(&mut p, &[Matrix::row_vector(vec![0.0])])
            .unwrap();
        assert_eq!(p.values()[0].data()[0], 1.5);
    }

    #[test]
    fn quadratic_bowl_descends() {
        for adam in [false, true] {
            let mut p = single(1.0);
            let mut opt: Box<dyn Optimizer> = if adam {
                Box::new(Adam::new(1e-3).unwrap())
            } else {
                Box::new(Sgd {
                    learning_rate: 1e-3,
                })
            };
            let mut prev = 1.0f64;
            for _ in 0..100 {
                let w = p.values()[0].data()[0];
                opt.step(&mut p, &[Matrix::row_vector(vec![2.0 * w])])
                    .unwrap();
                let now = p.values()[0].data()[0].abs();
                assert!(now < prev);
                prev = now;
            }
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut p = ParamStore::new();
        p.add("a", Matrix::row_vector(vec![1.0]));
        p.add("b", Matrix::row_vector(vec![1.0]));
        let grads = [
            Matrix::row_vector(vec![1.0]),
            Matrix::row_vector(vec![f64::NAN]),
        ];
        let mut adam = Adam::new(1e-3).unwrap();
        assert!(matches!(
            adam.step(&mut p, &grads),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(p.values()[0].data()[0], 1.0);
        assert_eq!(adam.steps(), 0);
    }
}
