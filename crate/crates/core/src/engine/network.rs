//! Model contract and the in-repo backbones.
//!
//! Production backbones live behind [`Model`]; the crate ships a small strided
//! convolutional network and a linear model so that the whole pipeline runs
//! without downloading weights.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamStore, Tensor};
use crate::dataset::ImageArray;
use crate::error::{Error, Result};

pub const HEAD_PREFIX: &str = "head.";

/// Forward/backward contract used by the training engine.
///
/// Output width is fixed at construction to the registry size. Parameters are
/// addressed by name so checkpoints can be loaded across stages.
pub trait Model: Sync {
    type Trace: Send;

    fn num_labels(&self) -> usize;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    fn forward(&self, image: &ImageArray) -> Result<Vec<f64>> {
        self.forward_traced(image).map(|(logits, _)| logits)
    }

    /// Logits plus whatever `backward` needs.
    fn forward_traced(&self, image: &ImageArray) -> Result<(Vec<f64>, Self::Trace)>;

    /// Accumulates d loss / d param into `grads` given d loss / d logits.
    fn backward(&self, trace: &Self::Trace, dlogits: &[f64], grads: &mut ParamStore);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Architecture {
    /// 3x3 stride-2 convolutions with ReLU, global average pooling, linear head.
    ToyConv { widths: Vec<usize> },
    /// Linear head over the flattened image.
    Linear,
}

impl Architecture {
    /// Parameter names and shapes, in no particular order.
    pub fn layout(&self, side: usize, num_labels: usize) -> Vec<(String, Vec<usize>)> {
        match self {
            Architecture::ToyConv { widths } => {
                let mut out = Vec::new();
                let mut c_in = 3;
                for (l, &c_out) in widths.iter().enumerate() {
                    out.push((format!("backbone.conv{l}.weight"), vec![c_out, c_in, 3, 3]));
                    out.push((format!("backbone.conv{l}.bias"), vec![c_out]));
                    c_in = c_out;
                }
                out.push(("head.weight".into(), vec![num_labels, c_in]));
                out.push(("head.bias".into(), vec![num_labels]));
                out
            }
            Architecture::Linear => vec![
                ("head.weight".into(), vec![num_labels, 3 * side * side]),
                ("head.bias".into(), vec![num_labels]),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Architecture::ToyConv { widths } = self {
            if widths.is_empty() || widths.contains(&0) {
                return Err(Error::Config("toy-conv widths must be non-empty and positive".into()));
            }
        }
        Ok(())
    }
}

fn fan_in(shape: &[usize]) -> usize {
    shape.iter().skip(1).product::<usize>().max(1)
}

/// He-uniform weights for backbone layers, zero biases.
pub(crate) fn init_backbone_tensor(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if name.ends_with(".weight") {
        let bound = (6.0 / fan_in(shape) as f64).sqrt() as f32;
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
    }
    t
}

/// Head weights uniform in +-1/sqrt(fan_in), zero bias.
pub(crate) fn init_head_tensor(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if name.ends_with(".weight") {
        let bound = (1.0 / fan_in(shape) as f64).sqrt() as f32;
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    side: usize,
    num_labels: usize,
    params: ParamStore,
}

#[derive(Debug)]
pub enum NetTrace {
    Conv {
        /// Layer inputs: the image, then each post-ReLU activation.
        acts: Vec<Vec<f32>>,
        /// (channels, height, width) of each entry in `acts`.
        dims: Vec<(usize, usize, usize)>,
        pooled: Vec<f32>,
    },
    Linear {
        input: Vec<f32>,
    },
}

impl Network {
    pub fn random(arch: &Architecture, side: usize, num_labels: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layout = arch.layout(side, num_labels);
        layout.sort();
        let mut params = ParamStore::new();
        for (name, shape) in layout {
            let t = if name.starts_with(HEAD_PREFIX) {
                init_head_tensor(&name, &shape, &mut rng)
            } else {
                init_backbone_tensor(&name, &shape, &mut rng)
            };
            params.insert(name, t);
        }
        Ok(Network {
            arch: arch.clone(),
            side,
            num_labels,
            params,
        })
    }

    /// Wraps `params`, which must match the architecture's layout exactly.
    pub fn from_params(arch: &Architecture, side: usize, num_labels: usize, params: ParamStore) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout(side, num_labels);
        if params.len() != layout.len() {
            return Err(Error::Load {
                name: "<all>".into(),
                message: format!("{} tensors given, architecture has {}", params.len(), layout.len()),
            });
        }
        for (name, shape) in &layout {
            let t = params.get(name).ok_or_else(|| Error::Load {
                name: name.clone(),
                message: "missing".into(),
            })?;
            if &t.shape != shape {
                return Err(Error::Load {
                    name: name.clone(),
                    message: format!("shape {:?}, expected {:?}", t.shape, shape),
                });
            }
        }
        Ok(Network {
            arch: arch.clone(),
            side,
            num_labels,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    fn check_image(&self, image: &ImageArray) -> Result<()> {
        if image.side() != self.side {
            return Err(Error::Contract(format!(
                "model expects {0}x{0} images, got {1}x{1}",
                self.side,
                image.side()
            )));
        }
        Ok(())
    }

    fn head_forward(&self, features: &[f32]) -> Vec<f64> {
        let w = self.params.data("head.weight");
        let b = self.params.data("head.bias");
        let f = features.len();
        (0..self.num_labels)
            .map(|k| {
                let row = &w[k * f..(k + 1) * f];
                b[k] as f64 + row.iter().zip(features).map(|(&a, &x)| a as f64 * x as f64).sum::<f64>()
            })
            .collect()
    }

    /// Returns d loss / d features.
    fn head_backward(&self, features: &[f32], dlogits: &[f64], grads: &mut ParamStore) -> Vec<f32> {
        let f = features.len();
        let w = self.params.data("head.weight");
        let mut dfeat = vec![0f32; f];
        {
            let gw = grads.data_mut("head.weight");
            for (k, &d) in dlogits.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let d = d as f32;
                let row = &mut gw[k * f..(k + 1) * f];
                for (g, &x) in row.iter_mut().zip(features) {
                    *g += d * x;
                }
                for (df, &wk) in dfeat.iter_mut().zip(&w[k * f..(k + 1) * f]) {
                    *df += d * wk;
                }
            }
        }
        let gb = grads.data_mut("head.bias");
        for (g, &d) in gb.iter_mut().zip(dlogits) {
            *g += d as f32;
        }
        dfeat
    }
}

fn conv_out(n: usize) -> usize {
    (n + 2 - 3) / 2 + 1
}

/// 3x3 convolution, stride 2, zero padding 1.
fn conv_forward(x: &[f32], (c_in, h, w): (usize, usize, usize), weight: &[f32], bias: &[f32]) -> (Vec<f32>, (usize, usize, usize)) {
    let c_out = bias.len();
    let (ho, wo) = (conv_out(h), conv_out(w));
    let mut out = vec![0f32; c_out * ho * wo];
    for o in 0..c_out {
        let plane = &mut out[o * ho * wo..(o + 1) * ho * wo];
        plane.fill(bias[o]);
        for i in 0..c_in {
            let src = &x[i * h * w..(i + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weight[((o * c_in + i) * 3 + ky) * 3 + kx];
                    for oy in 0..ho {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                        let orow = &mut plane[oy * wo..(oy + 1) * wo];
                        for (ox, ov) in orow.iter_mut().enumerate() {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && ix < w as isize {
                                *ov += wv * srow[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, (c_out, ho, wo))
}

/// Accumulates weight/bias gradients; returns d loss / d input when `need_dx`.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    dz: &[f32],
    (c_out, ho, wo): (usize, usize, usize),
    gw: &mut [f32],
    gb: &mut [f32],
    need_dx: bool,
) -> Option<Vec<f32>> {
    let mut dx = need_dx.then(|| vec![0f32; c_in * h * w]);
    for o in 0..c_out {
        let dplane = &dz[o * ho * wo..(o + 1) * ho * wo];
        gb[o] += dplane.iter().sum::<f32>();
        for i in 0..c_in {
            let src = &x[i * h * w..(i + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * c_in + i) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let mut acc = 0f32;
                    for oy in 0..ho {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..wo {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let d = dplane[oy * wo + ox];
                            acc += d * src[iy * w + ix as usize];
                            if let Some(dx) = dx.as_mut() {
                                dx[i * h * w + iy * w + ix as usize] += wv * d;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    dx
}

impl Model for Network {
    type Trace = NetTrace;

    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward_traced(&self, image: &ImageArray) -> Result<(Vec<f64>, NetTrace)> {
        self.check_image(image)?;
        match &self.arch {
            Architecture::Linear => {
                let logits = self.head_forward(image.data());
                Ok((
                    logits,
                    NetTrace::Linear {
                        input: image.data().to_vec(),
                    },
                ))
            }
            Architecture::ToyConv { widths } => {
                let mut acts = vec![image.data().to_vec()];
                let mut dims = vec![(3, self.side, self.side)];
                for l in 0..widths.len() {
                    let (mut z, d) = conv_forward(
                        acts.last().expect("input present"),
                        *dims.last().expect("input present"),
                        self.params.data(&format!("backbone.conv{l}.weight")),
                        self.params.data(&format!("backbone.conv{l}.bias")),
                    );
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                    acts.push(z);
                    dims.push(d);
                }
                let (c, h, w) = *dims.last().expect("non-empty");
                let last = acts.last().expect("non-empty");
                let area = (h * w) as f32;
                let pooled: Vec<f32> = (0..c)
                    .map(|ch| last[ch * h * w..(ch + 1) * h * w].iter().sum::<f32>() / area)
                    .collect();
                let logits = self.head_forward(&pooled);
                Ok((logits, NetTrace::Conv { acts, dims, pooled }))
            }
        }
    }

    fn backward(&self, trace: &NetTrace, dlogits: &[f64], grads: &mut ParamStore) {
        match trace {
            NetTrace::Linear { input } => {
                self.head_backward(input, dlogits, grads);
            }
            NetTrace::Conv { acts, dims, pooled } => {
                let dpool = self.head_backward(pooled, dlogits, grads);
                let layers = dims.len() - 1;
                let (c, h, w) = dims[layers];
                let area = (h * w) as f32;
                // d loss / d post-ReLU activation of the last layer
                let mut da: Vec<f32> = (0..c)
                    .flat_map(|ch| std::iter::repeat(dpool[ch] / area).take(h * w))
                    .collect();
                for l in (0..layers).rev() {
                    // ReLU: pass gradient where the activation is positive
                    for (g, &a) in da.iter_mut().zip(&acts[l + 1]) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    let wname = format!("backbone.conv{l}.weight");
                    let bname = format!("backbone.conv{l}.bias");
                    let mut gw = std::mem::take(&mut grads.get_mut(&wname).expect("layout").data);
                    let mut gb = std::mem::take(&mut grads.get_mut(&bname).expect("layout").data);
                    let dx = conv_backward(
                        &acts[l],
                        dims[l],
                        self.params.data(&wname),
                        &da,
                        dims[l + 1],
                        &mut gw,
                        &mut gb,
                        l > 0,
                    );
                    grads.get_mut(&wname).expect("layout").data = gw;
                    grads.get_mut(&bname).expect("layout").data = gb;
                    if let Some(dx) = dx {
                        da = dx;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(side: usize, seed: u64) -> ImageArray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane: Vec<f32> = (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ImageArray::from_gray(side, &plane).unwrap()
    }

    fn loss_of(net: &Network, img: &ImageArray, coeffs: &[f64]) -> f64 {
        net.forward(img).unwrap().iter().zip(coeffs).map(|(l, c)| l * c).sum()
    }

    /// Central differences on a linear functional of the logits.
    fn check_gradients(arch: Architecture, side: usize) {
        let net = Network::random(&arch, side, 3, 4).unwrap();
        let img = image(side, 9);
        let coeffs = [0.7, -1.3, 0.4];
        let (_, trace) = net.forward_traced(&img).unwrap();
        let mut grads = net.params().zeros_like();
        net.backward(&trace, &coeffs, &mut grads);

        let h = 1e-3f32;
        for (name, t) in net.params().iter() {
            for idx in (0..t.len()).step_by((t.len() / 7).max(1)) {
                let mut plus = net.clone();
                plus.params_mut().get_mut(name).unwrap().data[idx] += h;
                let mut minus = net.clone();
                minus.params_mut().get_mut(name).unwrap().data[idx] -= h;
                let fd = (loss_of(&plus, &img, &coeffs) - loss_of(&minus, &img, &coeffs)) / (2.0 * h as f64);
                let g = grads.get(name).unwrap().data[idx] as f64;
                assert!(
                    (fd - g).abs() <= 2e-3 * (1.0 + g.abs()),
                    "{name}[{idx}]: analytic {g} vs numeric {fd}"
                );
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        check_gradients(Architecture::ToyConv { widths: vec![4, 5] }, 9);
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        check_gradients(Architecture::Linear, 5);
    }

    #[test]
    fn random_init_is_deterministic() {
        let arch = Architecture::ToyConv { widths: vec![4, 8] };
        let a = Network::random(&arch, 16, 6, 7).unwrap();
        let b = Network::random(&arch, 16, 6, 7).unwrap();
        assert_eq!(a.params().to_bytes(), b.params().to_bytes());
        let c = Network::random(&arch, 16, 6, 8).unwrap();
        assert_ne!(a.params().to_bytes(), c.params().to_bytes());
    }

    #[test]
    fn output_width_and_side_check() {
        let net = Network::random(&Architecture::ToyConv { widths: vec![4] }, 8, 26, 0).unwrap();
        assert_eq!(net.forward(&image(8, 1)).unwrap().len(), 26);
        assert!(net.forward(&image(10, 1)).is_err());
    }

    #[test]
    fn zero_head_gives_zero_logits() {
        let mut net = Network::random(&Architecture::ToyConv { widths: vec![4] }, 8, 5, 0).unwrap();
        net.params_mut().get_mut("head.weight").unwrap().data.fill(0.0);
        assert!(net.forward(&image(8, 2)).unwrap().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn from_params_checks_layout() {
        let arch = Architecture::ToyConv { widths: vec![4] };
        let net = Network::random(&arch, 8, 5, 0).unwrap();
        assert!(Network::from_params(&arch, 8, 5, net.params().clone()).is_ok());
        assert!(matches!(Network::from_params(&arch, 8, 6, net.params().clone()), Err(Error::Load { .. })));
    }
}
