use super::{Matrix, ParamId, ParamStore};

/// Adam moment buffers over a fixed subset of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    targets: Vec<ParamId>,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamStore, targets: Vec<ParamId>, learning_rate: f64) -> Self {
        let first = targets
            .iter()
            .map(|&id| {
                let (r, c) = params.value(id).shape();
                Matrix::zeros(r, c)
            })
            .collect::<Vec<_>>();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            targets,
            second: first.clone(),
            first,
        }
    }

    pub fn targets(&self) -> &[ParamId] {
        &self.targets
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.first, &self.second)
    }

    pub fn set_moments(&mut self, first: Vec<Matrix>, second: Vec<Matrix>, step: u64) {
        assert_eq!(first.len(), self.targets.len());
        assert_eq!(second.len(), self.targets.len());
        self.first = first;
        self.second = second;
        self.step = step;
    }

    /// One bias-corrected update using the gradients currently stored in `params`.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, &id) in self.targets.iter().enumerate() {
            let p = params.get_mut(id);
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
