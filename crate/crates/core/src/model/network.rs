use super::layers::{
    batch_stats, bn_apply, bn_backward, conv_backward, conv_forward, ConvScratch, linear_backward,
    linear_forward, relu_backward_inplace, relu_inplace, sigmoid, ConvShape, BN_MOMENTUM,
};
use super::real::{matmul, Real};
use super::{ModelConfig, ModelError, QuadPrediction, QuadPredictor, NUM_TYPES};
use crate::render::{RasterInput, CHANNELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }
}

/// Indices of each trainable tensor inside [`QuadNet::params`].
#[derive(Debug, Clone, PartialEq)]
struct Slots {
    convs: Vec<usize>,
    res_a: usize,
    res_b: usize,
    bn: usize,
    fcs: Vec<usize>,
    lstm: usize,
    coord: usize,
    types: usize,
}

/// The quad predictor network, generic over its float type.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadNet<T> {
    config: ModelConfig,
    names: Vec<String>,
    pub(crate) params: Vec<Tensor<T>>,
    pub(crate) running_mean: Vec<T>,
    pub(crate) running_var: Vec<T>,
    slots: Slots,
    conv_shapes: Vec<ConvShape>,
    res_shape: ConvShape,
}

/// Activations kept by a training-mode forward pass for backpropagation.
pub struct ForwardCache<T> {
    batch: usize,
    input: Vec<T>,
    conv_out: Vec<Vec<T>>,
    res_mid: Vec<T>,
    xhat: Vec<T>,
    bn_mean: Vec<T>,
    bn_var: Vec<T>,
    bn_count: usize,
    encoded: Vec<T>,
    fc_out: Vec<Vec<T>>,
    lstm: LstmTrace<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Coordinates in (-1, 1), laid out (batch, step, 2).
    pub fn coords(&self) -> &[T] {
        &self.lstm.coords
    }

    /// Type logits, laid out (batch, step, 3).
    pub fn logits(&self) -> &[T] {
        &self.lstm.logits
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, Default)]
struct StepState<T> {
    i: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
    o: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

struct LstmTrace<T> {
    steps: Vec<StepState<T>>,
    coords: Vec<T>,
    logits: Vec<T>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BnMode {
    Batch,
    Running,
}

impl<T: Real> QuadNet<T> {
    /// Randomly initialised network (He-uniform for rectified layers,
    /// LeCun-uniform for linear ones, LSTM forget bias 1).
    pub fn new(config: &ModelConfig) -> Result<Self, ModelError> {
        let mut net = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.run_seed);
        let mut fill = |t: &mut Tensor<T>, bound: f64| {
            for v in &mut t.data {
                *v = T::from_f64(rng.gen_range(-bound..bound));
            }
        };
        let fan_in = |t: &Tensor<T>| t.shape[1..].iter().product::<usize>() as f64;
        for &s in &net.slots.convs {
            let b = (6.0 / fan_in(&net.params[s])).sqrt();
            fill(&mut net.params[s], b);
        }
        for s in [net.slots.res_a, net.slots.res_b] {
            let b = (3.0 / fan_in(&net.params[s])).sqrt();
            fill(&mut net.params[s], b);
        }
        for &s in &net.slots.fcs {
            let b = (6.0 / fan_in(&net.params[s])).sqrt();
            fill(&mut net.params[s], b);
        }
        let h = config.recurrent_width;
        let b = 1.0 / (h as f64).sqrt();
        fill(&mut net.params[net.slots.lstm], b);
        fill(&mut net.params[net.slots.lstm + 1], b);
        for (k, v) in net.params[net.slots.lstm + 2].data.iter_mut().enumerate() {
            // gate order i, f, g, o
            *v = if (h..2 * h).contains(&k) { T::one() } else { T::zero() };
        }
        for s in [net.slots.coord, net.slots.types] {
            let b = (3.0 / fan_in(&net.params[s])).sqrt();
            fill(&mut net.params[s], b);
        }
        Ok(net)
    }

    /// Network with every parameter zero, BN at identity statistics.
    pub(crate) fn zeroed(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut push = |name: String, shape: &[usize]| {
            names.push(name);
            params.push(Tensor::zeros(shape));
            params.len() - 1
        };
        let mut conv_shapes = Vec::new();
        let mut convs = Vec::new();
        let (mut cin, mut size) = (CHANNELS, config.input_size);
        for (i, ((&cout, &k), &st)) in config
            .conv_filters
            .iter()
            .zip(&config.conv_kernels)
            .zip(&config.conv_strides)
            .enumerate()
        {
            let shape = ConvShape {
                cin,
                cout,
                kernel: k,
                stride: st,
                in_size: size,
            };
            convs.push(push(format!("conv{i}.weight"), &[cout, cin, k, k]));
            push(format!("conv{i}.bias"), &[cout]);
            conv_shapes.push(shape);
            cin = cout;
            size = shape.out_size();
        }
        let width = config.resnet_width;
        let res_shape = ConvShape {
            cin: width,
            cout: width,
            kernel: 3,
            stride: 1,
            in_size: size,
        };
        let res_a = push("res.conv_a.weight".into(), &[width, width, 3, 3]);
        push("res.conv_a.bias".into(), &[width]);
        let res_b = push("res.conv_b.weight".into(), &[width, width, 3, 3]);
        push("res.conv_b.bias".into(), &[width]);
        let bn = push("res.bn.gamma".into(), &[width]);
        push("res.bn.beta".into(), &[width]);
        let mut fcs = Vec::new();
        let mut n_in = config.feature_size();
        for (j, &w) in config.fc_widths.iter().enumerate() {
            fcs.push(push(format!("fc{j}.weight"), &[w, n_in]));
            push(format!("fc{j}.bias"), &[w]);
            n_in = w;
        }
        let h = config.recurrent_width;
        let lstm = push("lstm.w_ih".into(), &[4 * h, n_in]);
        push("lstm.w_hh".into(), &[4 * h, h]);
        push("lstm.bias".into(), &[4 * h]);
        let coord = push("coord_head.weight".into(), &[2, h]);
        push("coord_head.bias".into(), &[2]);
        let types = push("type_head.weight".into(), &[NUM_TYPES, h]);
        push("type_head.bias".into(), &[NUM_TYPES]);
        let mut net = Self {
            config: config.clone(),
            names,
            params,
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
            slots: Slots {
                convs,
                res_a,
                res_b,
                bn,
                fcs,
                lstm,
                coord,
                types,
            },
            conv_shapes,
            res_shape,
        };
        net.params[net.slots.bn].data.fill(T::one());
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    /// Flat views of every trainable tensor, in declaration order.
    pub fn param_slices(&self) -> Vec<&[T]> {
        self.params.iter().map(|t| t.data.as_slice()).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.params.iter_mut().map(|t| t.data.as_mut_slice()).collect()
    }

    /// Zero-filled gradient buffers matching [`Self::param_slices`].
    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|t| vec![T::zero(); t.data.len()]).collect()
    }

    /// Converts the weights to another float type.
    pub fn cast<U: Real>(&self) -> QuadNet<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect::<Vec<U>>();
        QuadNet {
            config: self.config.clone(),
            names: self.names.clone(),
            params: self
                .params
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: conv(&t.data),
                })
                .collect(),
            running_mean: conv(&self.running_mean),
            running_var: conv(&self.running_var),
            slots: self.slots.clone(),
            conv_shapes: self.conv_shapes.clone(),
            res_shape: self.res_shape,
        }
    }

    fn input_len(&self) -> usize {
        self.conv_shapes[0].in_len()
    }

    /// Stacks rasters into one (B x 4 x S x S) buffer, checking the shape.
    pub fn stack_inputs(&self, batch: &[RasterInput]) -> Result<Vec<T>, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut out = Vec::with_capacity(batch.len() * self.input_len());
        for r in batch {
            if r.size() != self.config.input_size {
                return Err(ModelError::BadInputShape {
                    expected: self.config.input_size,
                    got: r.size(),
                });
            }
            out.extend(r.data().iter().map(|&v| T::from_f64(f64::from(v))));
        }
        Ok(out)
    }

    /// Training-mode forward pass (batch statistics in the normalisation
    /// layer) that records everything backpropagation needs. Running
    /// statistics are left untouched; see [`Self::update_running_stats`].
    pub fn forward_train(&self, input: Vec<T>) -> ForwardCache<T> {
        self.run(input, BnMode::Batch, None)
    }

    /// Inference forward pass; every sample is processed on its own so a
    /// row never depends on the rest of the batch.
    pub fn forward(&self, batch: &[RasterInput]) -> Result<Vec<QuadPrediction>, ModelError> {
        let stacked = self.stack_inputs(batch)?;
        Ok(stacked
            .chunks_exact(self.input_len())
            .map(|x| self.predict_one(x.to_vec(), None))
            .collect())
    }

    /// Inference on one raster, adding `delta` to the recurrent hidden state
    /// just before step `step`.
    pub fn forward_perturbed(
        &self,
        raster: &RasterInput,
        step: usize,
        delta: &[T],
    ) -> Result<QuadPrediction, ModelError> {
        assert_eq!(delta.len(), self.config.recurrent_width, "delta width");
        let x = self.stack_inputs(std::slice::from_ref(raster))?;
        Ok(self.predict_one(x, Some((step, delta))))
    }

    /// Inference pass on one stacked sample returning raw coordinates and
    /// type logits.
    pub fn infer_raw(&self, x: Vec<T>) -> (Vec<T>, Vec<T>) {
        let cache = self.run(x, BnMode::Running, None);
        (cache.lstm.coords, cache.lstm.logits)
    }

    fn predict_one(&self, x: Vec<T>, perturb: Option<(usize, &[T])>) -> QuadPrediction {
        let cache = self.run(x, BnMode::Running, perturb);
        let q = self.config.quad_size;
        let coords = (0..q)
            .map(|t| {
                [
                    cache.lstm.coords[2 * t].as_f64(),
                    cache.lstm.coords[2 * t + 1].as_f64(),
                ]
            })
            .collect();
        let type_probs = (0..q)
            .map(|t| softmax3(&cache.lstm.logits[NUM_TYPES * t..NUM_TYPES * (t + 1)]))
            .collect();
        QuadPrediction { coords, type_probs }
    }

    /// Folds the batch statistics of a training step into the running
    /// statistics (momentum 0.1, unbiased variance).
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        let m = T::from_f64(BN_MOMENTUM);
        let n = cache.bn_count as f64;
        let unbias = T::from_f64(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * cache.bn_mean[c];
            self.running_var[c] =
                (T::one() - m) * self.running_var[c] + m * cache.bn_var[c] * unbias;
        }
    }

    fn run(&self, input: Vec<T>, mode: BnMode, perturb: Option<(usize, &[T])>) -> ForwardCache<T> {
        let batch = input.len() / self.input_len();
        let mut ws = ConvScratch::default();
        let mut conv_out: Vec<Vec<T>> = Vec::with_capacity(self.conv_shapes.len());
        for (l, s) in self.conv_shapes.iter().enumerate() {
            let prev: &[T] = if l == 0 { &input } else { &conv_out[l - 1] };
            let w = &self.params[self.slots.convs[l]].data;
            let b = &self.params[self.slots.convs[l] + 1].data;
            let mut out = vec![T::zero(); batch * s.out_len()];
            conv_forward(s, w, b, prev, &mut out, &mut ws);
            relu_inplace(&mut out);
            conv_out.push(out);
        }
        let rs = self.res_shape;
        let trunk = conv_out.last().expect("at least one conv layer");
        let mut res_mid = vec![T::zero(); trunk.len()];
        let mut sum = vec![T::zero(); trunk.len()];
        let (wa, ba) = (&self.params[self.slots.res_a].data, &self.params[self.slots.res_a + 1].data);
        let (wb, bb) = (&self.params[self.slots.res_b].data, &self.params[self.slots.res_b + 1].data);
        conv_forward(&rs, wa, ba, trunk, &mut res_mid, &mut ws);
        conv_forward(&rs, wb, bb, &res_mid, &mut sum, &mut ws);
        for (sv, &xv) in sum.iter_mut().zip(trunk) {
            *sv += xv;
        }
        let (channels, plane) = (rs.cout, rs.out_plane());
        let (bn_mean, bn_var, bn_count) = match mode {
            BnMode::Batch => {
                let st = batch_stats(&sum, channels, plane);
                (st.mean, st.var, st.count)
            }
            BnMode::Running => (self.running_mean.clone(), self.running_var.clone(), 0),
        };
        let mut encoded = vec![T::zero(); sum.len()];
        let xhat = bn_apply(
            &sum,
            channels,
            plane,
            &bn_mean,
            &bn_var,
            &self.params[self.slots.bn].data,
            &self.params[self.slots.bn + 1].data,
            &mut encoded,
        );
        let slope = T::from_f64(self.config.leaky_slope);
        for v in &mut encoded {
            if *v < T::zero() {
                *v *= slope;
            }
        }
        let mut fc_out: Vec<Vec<T>> = Vec::with_capacity(self.slots.fcs.len());
        let mut n_in = self.config.feature_size();
        for (j, &slot) in self.slots.fcs.iter().enumerate() {
            let n_out = self.config.fc_widths[j];
            let x: &[T] = if j == 0 { &encoded } else { &fc_out[j - 1] };
            let mut y = vec![T::zero(); batch * n_out];
            linear_forward(
                batch,
                n_in,
                n_out,
                &self.params[slot].data,
                &self.params[slot + 1].data,
                x,
                &mut y,
            );
            relu_inplace(&mut y);
            fc_out.push(y);
            n_in = n_out;
        }
        let lstm = self.run_lstm(fc_out.last().expect("at least one fc layer"), batch, perturb);
        ForwardCache {
            batch,
            input,
            conv_out,
            res_mid,
            xhat,
            bn_mean,
            bn_var,
            bn_count,
            encoded,
            fc_out,
            lstm,
        }
    }

    fn run_lstm(&self, emb: &[T], batch: usize, perturb: Option<(usize, &[T])>) -> LstmTrace<T> {
        let h = self.config.recurrent_width;
        let q = self.config.quad_size;
        let e = emb.len() / batch;
        let w_ih = &self.params[self.slots.lstm].data;
        let w_hh = &self.params[self.slots.lstm + 1].data;
        let bias = &self.params[self.slots.lstm + 2].data;
        // The input is the same embedding at every step.
        let mut x_proj = vec![T::zero(); batch * 4 * h];
        linear_forward(batch, e, 4 * h, w_ih, bias, emb, &mut x_proj);
        let mut h_prev = vec![T::zero(); batch * h];
        let mut c_prev = vec![T::zero(); batch * h];
        let mut steps = Vec::with_capacity(q);
        let mut coords = vec![T::zero(); batch * q * 2];
        let mut logits = vec![T::zero(); batch * q * NUM_TYPES];
        let mut head = vec![T::zero(); batch * 2];
        let mut head_t = vec![T::zero(); batch * NUM_TYPES];
        for t in 0..q {
            if let Some((step, delta)) = perturb {
                if step == t {
                    for row in h_prev.chunks_exact_mut(h) {
                        for (v, &d) in row.iter_mut().zip(delta) {
                            *v += d;
                        }
                    }
                }
            }
            let mut z = x_proj.clone();
            matmul(batch, h, 4 * h, &h_prev, false, w_hh, true, T::one(), &mut z);
            let mut st = StepState {
                i: vec![T::zero(); batch * h],
                f: vec![T::zero(); batch * h],
                g: vec![T::zero(); batch * h],
                o: vec![T::zero(); batch * h],
                c: vec![T::zero(); batch * h],
                tanh_c: vec![T::zero(); batch * h],
                h: vec![T::zero(); batch * h],
            };
            for b in 0..batch {
                let zr = &z[b * 4 * h..(b + 1) * 4 * h];
                for u in 0..h {
                    let k = b * h + u;
                    let i = sigmoid(zr[u]);
                    let f = sigmoid(zr[h + u]);
                    let g = zr[2 * h + u].tanh();
                    let o = sigmoid(zr[3 * h + u]);
                    let c = f * c_prev[k] + i * g;
                    let tc = c.tanh();
                    st.i[k] = i;
                    st.f[k] = f;
                    st.g[k] = g;
                    st.o[k] = o;
                    st.c[k] = c;
                    st.tanh_c[k] = tc;
                    st.h[k] = o * tc;
                }
            }
            linear_forward(
                batch,
                h,
                2,
                &self.params[self.slots.coord].data,
                &self.params[self.slots.coord + 1].data,
                &st.h,
                &mut head,
            );
            linear_forward(
                batch,
                h,
                NUM_TYPES,
                &self.params[self.slots.types].data,
                &self.params[self.slots.types + 1].data,
                &st.h,
                &mut head_t,
            );
            let two = T::from_f64(2.0);
            for b in 0..batch {
                for d in 0..2 {
                    coords[(b * q + t) * 2 + d] = two * sigmoid(head[b * 2 + d]) - T::one();
                }
                for d in 0..NUM_TYPES {
                    logits[(b * q + t) * NUM_TYPES + d] = head_t[b * NUM_TYPES + d];
                }
            }
            h_prev.clone_from(&st.h);
            c_prev.clone_from(&st.c);
            steps.push(st);
        }
        LstmTrace {
            steps,
            coords,
            logits,
        }
    }

    /// Backpropagates output gradients (w.r.t. coordinates and type logits,
    /// both laid out (batch, step, ...)) through a training-mode pass.
    pub fn backward(&self, cache: &ForwardCache<T>, d_coords: &[T], d_logits: &[T]) -> Vec<Vec<T>> {
        let mut grads = self.zero_grads();
        let batch = cache.batch;
        let h = self.config.recurrent_width;
        let q = self.config.quad_size;
        let emb = cache.fc_out.last().expect("fc layer");
        let e = emb.len() / batch;

        // Output heads and recurrence.
        let w_ih = &self.params[self.slots.lstm].data;
        let w_hh = &self.params[self.slots.lstm + 1].data;
        let mut dz_total = vec![T::zero(); batch * 4 * h];
        let mut dh_next = vec![T::zero(); batch * h];
        let mut dc_next = vec![T::zero(); batch * h];
        let zero_h = vec![T::zero(); batch * h];
        for t in (0..q).rev() {
            let st = &cache.lstm.steps[t];
            let mut d_head = vec![T::zero(); batch * 2];
            let mut d_type = vec![T::zero(); batch * NUM_TYPES];
            for b in 0..batch {
                for d in 0..2 {
                    let idx = (b * q + t) * 2 + d;
                    let y = cache.lstm.coords[idx];
                    // d/da of 2*sigmoid(a) - 1 expressed via the output
                    let deriv = (T::one() + y) * (T::one() - y) / T::from_f64(2.0);
                    d_head[b * 2 + d] = d_coords[idx] * deriv;
                }
                for d in 0..NUM_TYPES {
                    d_type[b * NUM_TYPES + d] = d_logits[(b * q + t) * NUM_TYPES + d];
                }
            }
            let (gw, gb) = two_mut(&mut grads, self.slots.coord);
            let dh_c = linear_backward(
                batch,
                h,
                2,
                &self.params[self.slots.coord].data,
                &st.h,
                &d_head,
                gw,
                gb,
                true,
            )
            .expect("dx requested");
            let (gw, gb) = two_mut(&mut grads, self.slots.types);
            let dh_t = linear_backward(
                batch,
                h,
                NUM_TYPES,
                &self.params[self.slots.types].data,
                &st.h,
                &d_type,
                gw,
                gb,
                true,
            )
            .expect("dx requested");
            let c_prev: &[T] = if t == 0 { &zero_h } else { &cache.lstm.steps[t - 1].c };
            let h_prev: &[T] = if t == 0 { &zero_h } else { &cache.lstm.steps[t - 1].h };
            let mut dz = vec![T::zero(); batch * 4 * h];
            for b in 0..batch {
                for u in 0..h {
                    let k = b * h + u;
                    let dh = dh_c[k] + dh_t[k] + dh_next[k];
                    let (i, f, g, o, tc) = (st.i[k], st.f[k], st.g[k], st.o[k], st.tanh_c[k]);
                    let dc = dc_next[k] + dh * o * (T::one() - tc * tc);
                    let zr = &mut dz[b * 4 * h..(b + 1) * 4 * h];
                    zr[u] = dc * g * i * (T::one() - i);
                    zr[h + u] = dc * c_prev[k] * f * (T::one() - f);
                    zr[2 * h + u] = dc * i * (T::one() - g * g);
                    zr[3 * h + u] = dh * tc * o * (T::one() - o);
                    dc_next[k] = dc * f;
                }
            }
            matmul(4 * h, batch, h, &dz, true, h_prev, false, T::one(), &mut grads[self.slots.lstm + 1]);
            matmul(batch, 4 * h, h, &dz, false, w_hh, false, T::zero(), &mut dh_next);
            for (a, &b) in dz_total.iter_mut().zip(&dz) {
                *a += b;
            }
        }
        matmul(4 * h, batch, e, &dz_total, true, emb, false, T::one(), &mut grads[self.slots.lstm]);
        for row in dz_total.chunks_exact(4 * h) {
            for (g, &v) in grads[self.slots.lstm + 2].iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut d_act = vec![T::zero(); batch * e];
        matmul(batch, 4 * h, e, &dz_total, false, w_ih, false, T::zero(), &mut d_act);

        // Dense layers.
        for j in (0..self.slots.fcs.len()).rev() {
            relu_backward_inplace(&cache.fc_out[j], &mut d_act);
            let n_out = self.config.fc_widths[j];
            let (x, n_in): (&[T], usize) = if j == 0 {
                (&cache.encoded, self.config.feature_size())
            } else {
                (&cache.fc_out[j - 1], self.config.fc_widths[j - 1])
            };
            let slot = self.slots.fcs[j];
            let (gw, gb) = two_mut(&mut grads, slot);
            d_act = linear_backward(batch, n_in, n_out, &self.params[slot].data, x, &d_act, gw, gb, true)
                .expect("dx requested");
        }

        // Leaky ReLU, batch normalisation, residual block.
        let slope = T::from_f64(self.config.leaky_slope);
        for (g, &y) in d_act.iter_mut().zip(&cache.encoded) {
            if y <= T::zero() {
                *g *= slope;
            }
        }
        let rs = self.res_shape;
        let (gg, gbeta) = two_mut(&mut grads, self.slots.bn);
        let d_sum = bn_backward(
            &d_act,
            &cache.xhat,
            rs.cout,
            rs.out_plane(),
            &cache.bn_var,
            &self.params[self.slots.bn].data,
            gg,
            gbeta,
        );
        let trunk = cache.conv_out.last().expect("conv layer");
        let mut ws = ConvScratch::default();
        let mut d_mid = vec![T::zero(); batch * rs.out_len()];
        let mut d_trunk = vec![T::zero(); batch * rs.in_len()];
        let (gw, gb) = two_mut(&mut grads, self.slots.res_b);
        conv_backward(
            &rs,
            &self.params[self.slots.res_b].data,
            &cache.res_mid,
            &d_sum,
            gw,
            gb,
            Some(&mut d_mid),
            &mut ws,
        );
        let (gw, gb) = two_mut(&mut grads, self.slots.res_a);
        conv_backward(
            &rs,
            &self.params[self.slots.res_a].data,
            trunk,
            &d_mid,
            gw,
            gb,
            Some(&mut d_trunk),
            &mut ws,
        );
        for (a, &v) in d_trunk.iter_mut().zip(&d_sum) {
            *a += v;
        }

        // Convolution stack.
        let mut d_out = d_trunk;
        for l in (0..self.conv_shapes.len()).rev() {
            let s = self.conv_shapes[l];
            relu_backward_inplace(&cache.conv_out[l], &mut d_out);
            let input: &[T] = if l == 0 { &cache.input } else { &cache.conv_out[l - 1] };
            let mut d_prev = vec![T::zero(); if l > 0 { batch * s.in_len() } else { 0 }];
            let slot = self.slots.convs[l];
            let (gw, gb) = two_mut(&mut grads, slot);
            conv_backward(
                &s,
                &self.params[slot].data,
                input,
                &d_out,
                gw,
                gb,
                (l > 0).then_some(d_prev.as_mut_slice()),
                &mut ws,
            );
            d_out = d_prev;
        }
        grads
    }
}

/// Mutable (weight, bias) gradient pair at `slot`, `slot + 1`.
fn two_mut<T>(grads: &mut [Vec<T>], slot: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = grads[slot..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

pub(crate) fn softmax3<T: Real>(logits: &[T]) -> [f64; NUM_TYPES] {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b.as_f64()));
    let e: Vec<f64> = logits.iter().map(|&v| (v.as_f64() - m).exp()).collect();
    let s: f64 = e.iter().sum();
    [e[0] / s, e[1] / s, e[2] / s]
}

impl<T: Real> QuadPredictor for QuadNet<T> {
    fn quad_size(&self) -> usize {
        self.config.quad_size
    }

    fn predict(&self, batch: &[RasterInput]) -> Result<Vec<QuadPrediction>, ModelError> {
        self.forward(batch)
    }
}
