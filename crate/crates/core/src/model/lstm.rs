use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::Rng;

use super::seq::{flatten_steps, unflatten_steps};
use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, join, orthogonal, Module, Param};
use crate::real::{sigmoid, Real};

/// One LSTM cell in the gate-per-matrix form. Each weight acts on the
/// concatenation `[h_prev, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams<F> {
    pub w_f: Array2<F>,
    pub w_i: Array2<F>,
    pub w_c: Array2<F>,
    pub w_o: Array2<F>,
    pub b_f: Array1<F>,
    pub b_i: Array1<F>,
    pub b_c: Array1<F>,
    pub b_o: Array1<F>,
    pub hidden_size: usize,
}

impl<F: Real> LstmCellParams<F> {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let w = || Array2::zeros((hidden_size, hidden_size + input_size));
        let b = || Array1::zeros(hidden_size);
        Self {
            w_f: w(),
            w_i: w(),
            w_c: w(),
            w_o: w(),
            b_f: b(),
            b_i: b(),
            b_c: b(),
            b_o: b(),
            hidden_size,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_f.ncols().saturating_sub(self.hidden_size)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = [self.hidden_size, self.w_f.ncols()];
        if self.w_f.ncols() < self.hidden_size {
            return Err(Error::shape(&[self.hidden_size, self.hidden_size], &[self.w_f.nrows(), self.w_f.ncols()]));
        }
        for w in [&self.w_f, &self.w_i, &self.w_c, &self.w_o] {
            if w.dim() != (shape[0], shape[1]) {
                return Err(Error::shape(&shape, &[w.nrows(), w.ncols()]));
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            if b.len() != self.hidden_size {
                return Err(Error::shape(&[self.hidden_size], &[b.len()]));
            }
        }
        Ok(())
    }

    fn gates(&self) -> [(&Array2<F>, &Array1<F>); 4] {
        [
            (&self.w_f, &self.b_f),
            (&self.w_i, &self.b_i),
            (&self.w_c, &self.b_c),
            (&self.w_o, &self.b_o),
        ]
    }
}

/// Gradients of a scalar loss with respect to everything `lstm_cell_step`
/// reads.
#[derive(Debug, Clone)]
pub struct LstmCellGrads<F> {
    pub params: LstmCellParams<F>,
    pub x: Array1<F>,
    pub h_prev: Array1<F>,
    pub c_prev: Array1<F>,
}

fn check_cell_inputs<F: Real>(
    x: &ArrayView1<F>,
    h_prev: &ArrayView1<F>,
    c_prev: &ArrayView1<F>,
    p: &LstmCellParams<F>,
) -> Result<Array1<F>> {
    p.validate()?;
    let h = p.hidden_size;
    if h_prev.len() != h || c_prev.len() != h {
        return Err(Error::shape(&[h, h], &[h_prev.len(), c_prev.len()]));
    }
    if x.len() != p.input_size() {
        return Err(Error::shape(&[p.input_size()], &[x.len()]));
    }
    Ok(concatenate![Axis(0), *h_prev, *x])
}

struct CellForward<F> {
    hx: Array1<F>,
    f: Array1<F>,
    i: Array1<F>,
    g: Array1<F>,
    o: Array1<F>,
    c: Array1<F>,
    h: Array1<F>,
}

fn cell_forward<F: Real>(hx: Array1<F>, c_prev: &ArrayView1<F>, p: &LstmCellParams<F>) -> CellForward<F> {
    let [wf, wi, wc, wo] = p.gates();
    let f = (wf.0.dot(&hx) + wf.1).mapv(sigmoid);
    let i = (wi.0.dot(&hx) + wi.1).mapv(sigmoid);
    let g = (wc.0.dot(&hx) + wc.1).mapv(F::tanh);
    let o = (wo.0.dot(&hx) + wo.1).mapv(sigmoid);
    let c = &f * c_prev + &i * &g;
    let h = &o * &c.mapv(F::tanh);
    CellForward { hx, f, i, g, o, c, h }
}

/// Advances one LSTM cell by one step and returns `(h_t, c_t)`.
pub fn lstm_cell_step<F: Real>(
    x: ArrayView1<F>,
    h_prev: ArrayView1<F>,
    c_prev: ArrayView1<F>,
    params: &LstmCellParams<F>,
) -> Result<(Array1<F>, Array1<F>)> {
    let hx = check_cell_inputs(&x, &h_prev, &c_prev, params)?;
    let out = cell_forward(hx, &c_prev, params);
    Ok((out.h, out.c))
}

/// Backward pass of [`lstm_cell_step`] given upstream gradients `dh`, `dc`
/// on its two outputs.
pub fn lstm_cell_backward<F: Real>(
    x: ArrayView1<F>,
    h_prev: ArrayView1<F>,
    c_prev: ArrayView1<F>,
    params: &LstmCellParams<F>,
    dh: ArrayView1<F>,
    dc: ArrayView1<F>,
) -> Result<LstmCellGrads<F>> {
    let hx = check_cell_inputs(&x, &h_prev, &c_prev, params)?;
    let h = params.hidden_size;
    if dh.len() != h || dc.len() != h {
        return Err(Error::shape(&[h, h], &[dh.len(), dc.len()]));
    }
    let fw = cell_forward(hx, &c_prev, params);
    let one = F::one();
    let tc = fw.c.mapv(F::tanh);
    let d_o = &dh * &tc;
    let dc_total = &dc + &(&dh * &fw.o * &tc.mapv(|t| one - t * t));
    let da_f = &dc_total * &c_prev * &fw.f.mapv(|v| v * (one - v));
    let da_i = &dc_total * &fw.g * &fw.i.mapv(|v| v * (one - v));
    let da_c = &dc_total * &fw.i * &fw.g.mapv(|v| one - v * v);
    let da_o = d_o * &fw.o.mapv(|v| v * (one - v));

    let outer = |da: &Array1<F>| {
        da.view()
            .insert_axis(Axis(1))
            .dot(&fw.hx.view().insert_axis(Axis(0)))
    };
    let dhx = params.w_f.t().dot(&da_f) + params.w_i.t().dot(&da_i) + params.w_c.t().dot(&da_c) + params.w_o.t().dot(&da_o);
    Ok(LstmCellGrads {
        params: LstmCellParams {
            w_f: outer(&da_f),
            w_i: outer(&da_i),
            w_c: outer(&da_c),
            w_o: outer(&da_o),
            b_f: da_f,
            b_i: da_i,
            b_c: da_c,
            b_o: da_o,
            hidden_size: h,
        },
        h_prev: dhx.slice(s![..h]).to_owned(),
        x: dhx.slice(s![h..]).to_owned(),
        c_prev: dc_total * &fw.f,
    })
}

#[derive(Debug, Clone)]
struct LstmCache<F> {
    x: Array2<F>,
    /// Activated gates `[f | i | g | o]` per step, `(T, B, 4H)`.
    gates: Array3<F>,
    /// `h` and `c` including the zero initial state, `(T + 1, B, H)`.
    h: Array3<F>,
    c: Array3<F>,
}

/// LSTM over a `(T, B, input)` sequence with zero initial state. Weights are
/// packed as `x W_x + h W_h + b` with gate blocks `[f | i | g | o]`.
#[derive(Debug, Clone)]
pub struct LstmLayer<F> {
    pub w_x: Param<F>,
    pub w_h: Param<F>,
    pub b: Param<F>,
    cache: Option<LstmCache<F>>,
}

impl<F: Real> LstmLayer<F> {
    /// Glorot input kernel, orthogonal recurrent blocks, forget bias 1.
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let h = hidden_size;
        let w_x = glorot_uniform(input_size, 4 * h, rng);
        let mut w_h = Array2::zeros((h, 4 * h));
        for k in 0..4 {
            w_h.slice_mut(s![.., k * h..(k + 1) * h]).assign(&orthogonal::<F, _>(h, rng));
        }
        let mut b = Array2::zeros((1, 4 * h));
        b.slice_mut(s![.., ..h]).fill(F::one());
        Self {
            w_x: Param::new(w_x),
            w_h: Param::new(w_h),
            b: Param::new(b),
            cache: None,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.value.nrows()
    }

    pub fn input_size(&self) -> usize {
        self.w_x.value.nrows()
    }

    /// The same weights in per-gate cell form.
    pub fn cell_params(&self) -> LstmCellParams<F> {
        let h = self.hidden_size();
        let gate = |k: usize| {
            let cols = s![.., k * h..(k + 1) * h];
            (
                concatenate![Axis(1), self.w_h.value.slice(cols).t(), self.w_x.value.slice(cols).t()],
                self.b.value.slice(s![0, k * h..(k + 1) * h]).to_owned(),
            )
        };
        let (w_f, b_f) = gate(0);
        let (w_i, b_i) = gate(1);
        let (w_c, b_c) = gate(2);
        let (w_o, b_o) = gate(3);
        LstmCellParams {
            w_f,
            w_i,
            w_c,
            w_o,
            b_f,
            b_i,
            b_c,
            b_o,
            hidden_size: h,
        }
    }

    pub fn from_cell_params(p: &LstmCellParams<F>) -> Result<Self> {
        p.validate()?;
        let h = p.hidden_size;
        let n_in = p.input_size();
        let mut w_x = Array2::zeros((n_in, 4 * h));
        let mut w_h = Array2::zeros((h, 4 * h));
        let mut b = Array2::zeros((1, 4 * h));
        for (k, (w, bias)) in p.gates().into_iter().enumerate() {
            let cols = s![.., k * h..(k + 1) * h];
            w_h.slice_mut(cols).assign(&w.slice(s![.., ..h]).t());
            w_x.slice_mut(cols).assign(&w.slice(s![.., h..]).t());
            b.slice_mut(s![0, k * h..(k + 1) * h]).assign(bias);
        }
        Ok(Self {
            w_x: Param::new(w_x),
            w_h: Param::new(w_h),
            b: Param::new(b),
            cache: None,
        })
    }

    pub fn forward(&mut self, x: &Array3<F>) -> Result<Array3<F>> {
        let (t, bsz, n_in) = x.dim();
        if n_in != self.input_size() {
            return Err(Error::shape(&[t, bsz, self.input_size()], &[t, bsz, n_in]));
        }
        let h = self.hidden_size();
        let x2 = flatten_steps(x);
        let xw = x2.dot(&self.w_x.value) + &self.b.value;
        let mut gates = Array3::<F>::zeros((t, bsz, 4 * h));
        let mut hs = Array3::<F>::zeros((t + 1, bsz, h));
        let mut cs = Array3::<F>::zeros((t + 1, bsz, h));
        for step in 0..t {
            let mut a = xw.slice(s![step * bsz..(step + 1) * bsz, ..]).to_owned();
            ndarray::linalg::general_mat_mul(F::one(), &hs.index_axis(Axis(0), step), &self.w_h.value, F::one(), &mut a);
            let c_prev = cs.index_axis(Axis(0), step).to_owned();
            let a = a.as_slice().expect("contiguous");
            let c_prev = c_prev.as_slice().expect("contiguous");
            let mut g_out = gates.index_axis_mut(Axis(0), step);
            let g_out = g_out.as_slice_mut().expect("contiguous");
            let mut c_next = Array2::<F>::zeros((bsz, h));
            let mut h_next = Array2::<F>::zeros((bsz, h));
            {
                let cn = c_next.as_slice_mut().expect("contiguous");
                let hn = h_next.as_slice_mut().expect("contiguous");
                for r in 0..bsz {
                    let ar = &a[r * 4 * h..(r + 1) * 4 * h];
                    let gr = &mut g_out[r * 4 * h..(r + 1) * 4 * h];
                    for k in 0..h {
                        let f = sigmoid(ar[k]);
                        let i = sigmoid(ar[h + k]);
                        let g = ar[2 * h + k].tanh();
                        let o = sigmoid(ar[3 * h + k]);
                        let c = f * c_prev[r * h + k] + i * g;
                        gr[k] = f;
                        gr[h + k] = i;
                        gr[2 * h + k] = g;
                        gr[3 * h + k] = o;
                        cn[r * h + k] = c;
                        hn[r * h + k] = o * c.tanh();
                    }
                }
            }
            cs.index_axis_mut(Axis(0), step + 1).assign(&c_next);
            hs.index_axis_mut(Axis(0), step + 1).assign(&h_next);
        }
        let out = hs.slice(s![1.., .., ..]).to_owned();
        self.cache = Some(LstmCache {
            x: x2,
            gates,
            h: hs,
            c: cs,
        });
        Ok(out)
    }

    /// Backpropagation through time from gradients on every output step.
    pub fn backward(&mut self, dy: &Array3<F>, param_grads: bool, input_grad: bool) -> Option<Array3<F>> {
        let h = self.hidden_size();
        let cache = self.cache.as_ref().expect("backward before forward");
        let (t, bsz, _) = dy.dim();
        let one = F::one();
        let mut da = Array3::<F>::zeros((t, bsz, 4 * h));
        let mut dh_next = Array2::<F>::zeros((bsz, h));
        let mut dc_next = Array2::<F>::zeros((bsz, h));
        for step in (0..t).rev() {
            let dh = &dy.index_axis(Axis(0), step) + &dh_next;
            let g = cache.gates.index_axis(Axis(0), step);
            let c = cache.c.index_axis(Axis(0), step + 1);
            let c_prev = cache.c.index_axis(Axis(0), step);
            let (g, c, c_prev, dh) = (
                g.as_slice().expect("contiguous"),
                c.as_slice().expect("contiguous"),
                c_prev.as_slice().expect("contiguous"),
                dh.as_slice().expect("contiguous"),
            );
            let mut da_step = da.index_axis_mut(Axis(0), step);
            let das = da_step.as_slice_mut().expect("contiguous");
            let dcn = dc_next.as_slice_mut().expect("contiguous");
            for r in 0..bsz {
                for k in 0..h {
                    let j = r * h + k;
                    let base = r * 4 * h;
                    let (f, i, gg, o) = (g[base + k], g[base + h + k], g[base + 2 * h + k], g[base + 3 * h + k]);
                    let tc = c[j].tanh();
                    let dc = dcn[j] + dh[j] * o * (one - tc * tc);
                    das[base + k] = dc * c_prev[j] * f * (one - f);
                    das[base + h + k] = dc * gg * i * (one - i);
                    das[base + 2 * h + k] = dc * i * (one - gg * gg);
                    das[base + 3 * h + k] = dh[j] * tc * o * (one - o);
                    dcn[j] = dc * f;
                }
            }
            dh_next = da.index_axis(Axis(0), step).dot(&self.w_h.value.t());
        }
        let da2 = flatten_steps(&da);
        if param_grads {
            let h_prev = flatten_steps(&cache.h.slice(s![..t, .., ..]).to_owned());
            ndarray::linalg::general_mat_mul(one, &cache.x.t(), &da2, one, &mut self.w_x.grad);
            ndarray::linalg::general_mat_mul(one, &h_prev.t(), &da2, one, &mut self.w_h.grad);
            self.b.grad += &da2.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        input_grad.then(|| unflatten_steps(da2.dot(&self.w_x.value.t()), t, bsz))
    }
}

impl<F: Real> Module<F> for LstmLayer<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "w_x"), &self.w_x));
        out.push((join(prefix, "w_h"), &self.w_h));
        out.push((join(prefix, "b"), &self.b));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "w_x"), &mut self.w_x));
        out.push((join(prefix, "w_h"), &mut self.w_h));
        out.push((join(prefix, "b"), &mut self.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::standard_normal;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_halve_the_cell() {
        let p = LstmCellParams::<f64>::zeros(3, 2);
        let c_prev = array![1.0, -2.0, 0.5];
        let (h, c) = lstm_cell_step(array![0.3, -1.0].view(), array![0.2, 0.1, 0.0].view(), c_prev.view(), &p).unwrap();
        for k in 0..3 {
            assert!((c[k] - 0.5 * c_prev[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c_prev[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let p = LstmCellParams::<f64>::zeros(2, 2);
        let z = Array1::zeros(2);
        let (h, c) = lstm_cell_step(array![4.0, -4.0].view(), z.view(), z.view(), &p).unwrap();
        assert_eq!(h, z);
        assert_eq!(c, z);
    }

    #[test]
    fn saturated_forget_gate_retains_state() {
        let mut p = LstmCellParams::<f64>::zeros(1, 1);
        p.b_f[0] = 20.0;
        p.b_i[0] = -20.0;
        let mut c = array![0.7];
        let mut h = array![0.0];
        for _ in 0..50 {
            let (hn, cn) = lstm_cell_step(array![0.9].view(), h.view(), c.view(), &p).unwrap();
            h = hn;
            c = cn;
        }
        assert!((c[0] - 0.7).abs() < 1e-6);
        let f = 1.0 / (1.0 + (-20.0f64).exp());
        assert!((c[0] - 0.7 * f.powi(50)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = LstmCellParams::<f64>::zeros(2, 3);
        let z = Array1::zeros(2);
        assert!(lstm_cell_step(Array1::zeros(2).view(), z.view(), z.view(), &p).is_err());
    }

    #[test]
    fn layer_matches_cell_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut layer: LstmLayer<f64> = LstmLayer::new(3, 4, &mut rng);
        let x = Array3::from_shape_vec((5, 2, 3), standard_normal::<f64, _>(10, 3, &mut rng).into_raw_vec_and_offset().0).unwrap();
        let y = layer.forward(&x).unwrap();
        let p = layer.cell_params();
        for b in 0..2 {
            let mut h = Array1::zeros(4);
            let mut c = Array1::zeros(4);
            for t in 0..5 {
                let (hn, cn) = lstm_cell_step(x.slice(s![t, b, ..]), h.view(), c.view(), &p).unwrap();
                h = hn;
                c = cn;
                for k in 0..4 {
                    assert!((y[[t, b, k]] - h[k]).abs() < 1e-12);
                }
            }
        }
        let back = LstmLayer::from_cell_params(&p).unwrap();
        assert_eq!(back.w_x.value, layer.w_x.value);
        assert_eq!(back.w_h.value, layer.w_h.value);
    }
}
