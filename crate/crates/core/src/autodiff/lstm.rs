//! A single LSTM cell with per-gate weight matrices over the concatenated
//! `[x; h]` input, and its backward pass.

use rand::Rng;

use crate::autodiff::params::{uniform, Parameterized};
use crate::error::{EclError, Result};
use crate::scalar::{gemv, gemv_t_acc, outer_acc, Scalar};
use crate::tensor::{debug_check_finite, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams<S> {
    pub w_f: Tensor<S>,
    pub w_i: Tensor<S>,
    pub w_o: Tensor<S>,
    pub w_c: Tensor<S>,
    pub b_f: Tensor<S>,
    pub b_i: Tensor<S>,
    pub b_o: Tensor<S>,
    pub b_c: Tensor<S>,
}

/// Everything the backward pass (and the analysis code) needs from one step.
#[derive(Debug, Clone)]
pub struct GateRecord<S> {
    pub xh: Vec<S>,
    pub c_prev: Vec<S>,
    pub f: Vec<S>,
    pub i: Vec<S>,
    pub o: Vec<S>,
    pub c_tilde: Vec<S>,
    pub c: Vec<S>,
    pub tanh_c: Vec<S>,
}

/// Gradients flowing out of one backward step.
#[derive(Debug, Clone)]
pub struct LstmStepGrads<S> {
    pub dx: Vec<S>,
    pub dh_prev: Vec<S>,
    pub dc_prev: Vec<S>,
}

impl<S: Scalar> LstmCellParams<S> {
    /// Uniform `±1/sqrt(hidden)` init with the forget-gate bias set to 1.
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w = [hidden, input + hidden];
        let mut p = LstmCellParams {
            w_f: uniform(&w, bound, rng),
            w_i: uniform(&w, bound, rng),
            w_o: uniform(&w, bound, rng),
            w_c: uniform(&w, bound, rng),
            b_f: Tensor::zeros(&[hidden]),
            b_i: uniform(&[hidden], bound, rng),
            b_o: uniform(&[hidden], bound, rng),
            b_c: uniform(&[hidden], bound, rng),
        };
        p.b_f.fill(S::one());
        p
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = [hidden, input + hidden];
        LstmCellParams {
            w_f: Tensor::zeros(&w),
            w_i: Tensor::zeros(&w),
            w_o: Tensor::zeros(&w),
            w_c: Tensor::zeros(&w),
            b_f: Tensor::zeros(&[hidden]),
            b_i: Tensor::zeros(&[hidden]),
            b_o: Tensor::zeros(&[hidden]),
            b_c: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_f.dim(0)
    }

    pub fn input(&self) -> usize {
        self.w_f.dim(1) - self.hidden()
    }

    fn gates(&self) -> [(&Tensor<S>, &Tensor<S>); 4] {
        [
            (&self.w_f, &self.b_f),
            (&self.w_i, &self.b_i),
            (&self.w_o, &self.b_o),
            (&self.w_c, &self.b_c),
        ]
    }
}

impl<S: Scalar> Parameterized<S> for LstmCellParams<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        vec![
            ("w_f".into(), &self.w_f),
            ("w_i".into(), &self.w_i),
            ("w_o".into(), &self.w_o),
            ("w_c".into(), &self.w_c),
            ("b_f".into(), &self.b_f),
            ("b_i".into(), &self.b_i),
            ("b_o".into(), &self.b_o),
            ("b_c".into(), &self.b_c),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

/// One step: `f, i, o = sigmoid(W [x; h] + b)`, `c~ = tanh(W_c [x; h] + b_c)`,
/// `c = f*c_prev + i*c~`, `h = o*tanh(c)`.
pub fn lstm_cell_step<S: Scalar>(
    x: &[S],
    h_prev: &[S],
    c_prev: &[S],
    params: &LstmCellParams<S>,
) -> Result<(Vec<S>, Vec<S>, GateRecord<S>)> {
    let (n_in, n_h) = (params.input(), params.hidden());
    if x.len() != n_in || h_prev.len() != n_h || c_prev.len() != n_h {
        return Err(EclError::Dimension(format!(
            "lstm cell expects x:{n_in} h:{n_h} c:{n_h}, got x:{} h:{} c:{}",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut xh = Vec::with_capacity(n_in + n_h);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);

    let mut pre = [
        vec![S::zero(); n_h],
        vec![S::zero(); n_h],
        vec![S::zero(); n_h],
        vec![S::zero(); n_h],
    ];
    for ((w, b), z) in params.gates().into_iter().zip(pre.iter_mut()) {
        gemv(w.data(), n_h, n_in + n_h, &xh, z);
        for (zv, &bv) in z.iter_mut().zip(b.data()) {
            *zv += bv;
        }
    }
    let [zf, zi, zo, zc] = pre;
    let f: Vec<S> = zf.into_iter().map(sigmoid).collect();
    let i: Vec<S> = zi.into_iter().map(sigmoid).collect();
    let o: Vec<S> = zo.into_iter().map(sigmoid).collect();
    let c_tilde: Vec<S> = zc.into_iter().map(|v| v.tanh()).collect();
    let c: Vec<S> = (0..n_h).map(|k| f[k] * c_prev[k] + i[k] * c_tilde[k]).collect();
    let tanh_c: Vec<S> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<S> = (0..n_h).map(|k| o[k] * tanh_c[k]).collect();
    debug_check_finite(&h, "lstm_cell_step");
    let record = GateRecord {
        xh,
        c_prev: c_prev.to_vec(),
        f,
        i,
        o,
        c_tilde,
        c: c.clone(),
        tanh_c,
    };
    Ok((h, c, record))
}

/// Backward through one step given `dL/dh_t` and `dL/dc_t` (the latter from
/// step `t+1`). Parameter gradients accumulate into `grads`.
pub fn lstm_cell_backward<S: Scalar>(
    record: &GateRecord<S>,
    params: &LstmCellParams<S>,
    dh: &[S],
    dc: &[S],
    grads: &mut LstmCellParams<S>,
) -> LstmStepGrads<S> {
    let (n_in, n_h) = (params.input(), params.hidden());
    let cols = n_in + n_h;
    let one = S::one();
    let r = record;
    let mut dz = [
        vec![S::zero(); n_h],
        vec![S::zero(); n_h],
        vec![S::zero(); n_h],
        vec![S::zero(); n_h],
    ];
    let mut dc_prev = vec![S::zero(); n_h];
    for k in 0..n_h {
        let d_o = dh[k] * r.tanh_c[k];
        let dct = dc[k] + dh[k] * r.o[k] * (one - r.tanh_c[k] * r.tanh_c[k]);
        let d_f = dct * r.c_prev[k];
        let d_i = dct * r.c_tilde[k];
        let d_ct = dct * r.i[k];
        dc_prev[k] = dct * r.f[k];
        dz[0][k] = d_f * r.f[k] * (one - r.f[k]);
        dz[1][k] = d_i * r.i[k] * (one - r.i[k]);
        dz[2][k] = d_o * r.o[k] * (one - r.o[k]);
        dz[3][k] = d_ct * (one - r.c_tilde[k] * r.c_tilde[k]);
    }
    let mut dxh = vec![S::zero(); cols];
    let grad_slots: [(&mut Tensor<S>, &mut Tensor<S>); 4] = [
        (&mut grads.w_f, &mut grads.b_f),
        (&mut grads.w_i, &mut grads.b_i),
        (&mut grads.w_o, &mut grads.b_o),
        (&mut grads.w_c, &mut grads.b_c),
    ];
    for (((gw, gb), (w, _)), d) in grad_slots.into_iter().zip(params.gates()).zip(&dz) {
        outer_acc(gw.data_mut(), cols, d, &r.xh);
        for (g, &v) in gb.data_mut().iter_mut().zip(d) {
            *g += v;
        }
        gemv_t_acc(w.data(), n_h, cols, d, &mut dxh);
    }
    let dh_prev = dxh.split_off(n_in);
    LstmStepGrads {
        dx: dxh,
        dh_prev,
        dc_prev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::gradient_check;
    use crate::autodiff::params::ParamList;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_and_inputs_give_half_gates() {
        let p = LstmCellParams::<f64>::zeros(3, 4);
        let (h, c, rec) = lstm_cell_step(&[0.0; 3], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
        for g in [&rec.f, &rec.i, &rec.o] {
            assert!(g.iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn saturated_forget_and_closed_input_preserve_cell() {
        let mut p = LstmCellParams::<f64>::zeros(2, 3);
        p.b_f.fill(50.0);
        p.b_i.fill(-50.0);
        let c_prev = [0.7, -1.3, 2.5];
        let (_, c, _) = lstm_cell_step(&[0.4, -0.2], &[0.1, 0.2, 0.3], &c_prev, &p).unwrap();
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_dims() {
        let p = LstmCellParams::<f64>::zeros(2, 3);
        assert!(lstm_cell_step(&[0.0; 3], &[0.0; 3], &[0.0; 3], &p).is_err());
    }

    /// Unrolls a few steps, scores every hidden state against a fixed probe,
    /// and checks BPTT gradients for weights, inputs and initial state.
    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n_in, n_h, steps) = (3, 4, 4);
        let params = LstmCellParams::<f64>::new(n_in, n_h, &mut rng);
        let xs: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let probe: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..n_h).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();

        #[derive(Clone)]
        struct Bundle(LstmCellParams<f64>, ParamList<f64>);
        impl Parameterized<f64> for Bundle {
            fn named_params(&self) -> Vec<(String, &Tensor<f64>)> {
                let mut v = self.0.named_params();
                v.extend(self.1.named_params());
                v
            }
            fn params_mut(&mut self) -> Vec<&mut Tensor<f64>> {
                let mut v = self.0.params_mut();
                v.extend(self.1.params_mut());
                v
            }
        }

        let run = |b: &Bundle| -> (f64, Bundle) {
            let (p, extra) = (&b.0, &b.1);
            let xs = extra.0[0].data();
            let init = extra.0[1].data();
            let (mut h, mut c) = (init[..n_h].to_vec(), init[n_h..].to_vec());
            let mut records = Vec::new();
            let mut loss = 0.0;
            for t in 0..steps {
                let (h2, c2, rec) = lstm_cell_step(&xs[t * n_in..(t + 1) * n_in], &h, &c, p).unwrap();
                loss += h2.iter().zip(&probe[t]).map(|(a, b)| a * b).sum::<f64>();
                h = h2;
                c = c2;
                records.push(rec);
            }
            let mut grads = b.zeroed();
            let mut dh_next = vec![0.0; n_h];
            let mut dc_next = vec![0.0; n_h];
            let mut dxs = vec![0.0; steps * n_in];
            for t in (0..steps).rev() {
                let dh: Vec<f64> = (0..n_h).map(|k| probe[t][k] + dh_next[k]).collect();
                let g = lstm_cell_backward(&records[t], p, &dh, &dc_next, &mut grads.0);
                dxs[t * n_in..(t + 1) * n_in].copy_from_slice(&g.dx);
                dh_next = g.dh_prev;
                dc_next = g.dc_prev;
            }
            grads.1 .0[0] = Tensor::from_vec(&[steps, n_in], dxs).unwrap();
            grads.1 .0[1] = Tensor::from_vec(&[2, n_h], [dh_next, dc_next].concat()).unwrap();
            (loss, grads)
        };
        let bundle = Bundle(
            params,
            ParamList(vec![
                Tensor::from_vec(&[steps, n_in], xs.concat()).unwrap(),
                Tensor::from_fn(&[2, n_h], |i| 0.1 * i as f64 - 0.3),
            ]),
        );
        let err = gradient_check(&bundle, 1e-5, run);
        assert!(err < 1e-4, "rel err {err}");
    }
}
