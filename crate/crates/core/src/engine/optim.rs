use super::params::ParamStore;
use super::stage::AdamConfig;

/// Adam with bias correction. Moments are kept per parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: ParamStore,
    v: ParamStore,
    t: u32,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let g = &grads.get(name).expect("gradient for every parameter").data;
            let m = &mut self.m.get_mut(name).expect("moment for every parameter").data;
            let v = &mut self.v.get_mut(name).expect("moment for every parameter").data;
            for i in 0..p.data.len() {
                let gi = g[i] as f64;
                let mi = beta1 * m[i] as f64 + (1.0 - beta1) * gi;
                let vi = beta2 * v[i] as f64 + (1.0 - beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                p.data[i] = (p.data[i] as f64 - update) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::params::Tensor;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor { shape: vec![3], data: vec![1.0, 1.0, 1.0] });
        let mut g = p.zeros_like();
        g.get_mut("w").unwrap().data = vec![2.0, -0.5, 0.0];
        let mut opt = Adam::new(&p, AdamConfig::default());
        opt.step(&mut p, &g, 0.1);
        let w = &p.get("w").unwrap().data;
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] - 1.1).abs() < 1e-6);
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor { shape: vec![2], data: vec![3.0, -2.0] });
        let mut opt = Adam::new(&p, AdamConfig::default());
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            let w = p.get("w").unwrap().data.clone();
            g.get_mut("w").unwrap().data = w.iter().map(|x| 2.0 * (x - 0.5)).collect();
            opt.step(&mut p, &g, 0.01);
        }
        assert!(p.get("w").unwrap().data.iter().all(|x| (x - 0.5).abs() < 1e-2));
    }
}
