//! Adam with per-slot moment buffers. Embedding tables use the lazy row
//! variant so untouched rows keep their values and moments.

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Advances the shared step counter; call once per minibatch.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    fn rate(&self) -> f64 {
        let t = self.t.max(1) as i32;
        self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t))
    }

    pub fn update(&mut self, slot: usize, param: &mut [f64], grad: &[f64]) {
        self.update_segment(slot, 0, param, grad);
    }

    /// Updates the segment of `slot` starting at `offset`.
    pub fn update_segment(&mut self, slot: usize, offset: usize, param: &mut [f64], grad: &[f64]) {
        assert_eq!(param.len(), grad.len());
        let rate = self.rate();
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let end = offset + param.len();
        let m = &mut self.m[slot][offset..end];
        let v = &mut self.v[slot][offset..end];
        for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m).zip(v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= rate * *m / (v.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut a = Adam::new(0.1, &[2]);
        let mut p = [1.0, -1.0];
        a.tick();
        a.update(0, &mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut a = Adam::new(0.05, &[1]);
        let mut p = [5.0];
        for _ in 0..2000 {
            a.tick();
            let g = [2.0 * (p[0] - 2.0)];
            a.update(0, &mut p, &g);
        }
        assert!((p[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn lazy_rows_leave_others() {
        let mut a = Adam::new(0.1, &[4]);
        let mut p = [1.0, 1.0, 1.0, 1.0];
        a.tick();
        a.update_segment(0, 2, &mut p[2..], &[1.0, 1.0]);
        assert_eq!(&p[..2], &[1.0, 1.0]);
        assert!(p[2] < 1.0 && p[3] < 1.0);
    }
}
