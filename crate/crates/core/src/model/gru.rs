use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::Rng;

use super::seq::{flatten_steps, unflatten_steps};
use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, join, orthogonal, Module, Param};
use crate::real::{sigmoid, Real};

/// GRU cell with update gate `z`, reset gate `r` and candidate
/// `n = tanh(W_n [r * h_prev, x] + b_n)`; `h_t = z * h_prev + (1 - z) * n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams<F> {
    pub w_z: Array2<F>,
    pub w_r: Array2<F>,
    pub w_n: Array2<F>,
    pub b_z: Array1<F>,
    pub b_r: Array1<F>,
    pub b_n: Array1<F>,
    pub hidden_size: usize,
}

impl<F: Real> GruCellParams<F> {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let w = || Array2::zeros((hidden_size, hidden_size + input_size));
        let b = || Array1::zeros(hidden_size);
        Self {
            w_z: w(),
            w_r: w(),
            w_n: w(),
            b_z: b(),
            b_r: b(),
            b_n: b(),
            hidden_size,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.ncols().saturating_sub(self.hidden_size)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = [self.hidden_size, self.w_z.ncols()];
        if self.w_z.ncols() < self.hidden_size {
            return Err(Error::shape(&[self.hidden_size, self.hidden_size], &[self.w_z.nrows(), self.w_z.ncols()]));
        }
        for w in [&self.w_z, &self.w_r, &self.w_n] {
            if w.dim() != (shape[0], shape[1]) {
                return Err(Error::shape(&shape, &[w.nrows(), w.ncols()]));
            }
        }
        for b in [&self.b_z, &self.b_r, &self.b_n] {
            if b.len() != self.hidden_size {
                return Err(Error::shape(&[self.hidden_size], &[b.len()]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GruCellGrads<F> {
    pub params: GruCellParams<F>,
    pub x: Array1<F>,
    pub h_prev: Array1<F>,
}

fn check_inputs<F: Real>(x: &ArrayView1<F>, h_prev: &ArrayView1<F>, p: &GruCellParams<F>) -> Result<()> {
    p.validate()?;
    if h_prev.len() != p.hidden_size {
        return Err(Error::shape(&[p.hidden_size], &[h_prev.len()]));
    }
    if x.len() != p.input_size() {
        return Err(Error::shape(&[p.input_size()], &[x.len()]));
    }
    Ok(())
}

struct CellForward<F> {
    hx: Array1<F>,
    rhx: Array1<F>,
    z: Array1<F>,
    r: Array1<F>,
    n: Array1<F>,
    h: Array1<F>,
}

fn cell_forward<F: Real>(x: &ArrayView1<F>, h_prev: &ArrayView1<F>, p: &GruCellParams<F>) -> CellForward<F> {
    let hx = concatenate![Axis(0), *h_prev, *x];
    let z = (p.w_z.dot(&hx) + &p.b_z).mapv(sigmoid);
    let r = (p.w_r.dot(&hx) + &p.b_r).mapv(sigmoid);
    let rh = &r * h_prev;
    let rhx = concatenate![Axis(0), rh, *x];
    let n = (p.w_n.dot(&rhx) + &p.b_n).mapv(F::tanh);
    let h = &z * h_prev + &z.mapv(|v| F::one() - v) * &n;
    CellForward { hx, rhx, z, r, n, h }
}

pub fn gru_cell_step<F: Real>(x: ArrayView1<F>, h_prev: ArrayView1<F>, params: &GruCellParams<F>) -> Result<Array1<F>> {
    check_inputs(&x, &h_prev, params)?;
    Ok(cell_forward(&x, &h_prev, params).h)
}

/// Backward pass of [`gru_cell_step`] given the upstream gradient `dh`.
pub fn gru_cell_backward<F: Real>(
    x: ArrayView1<F>,
    h_prev: ArrayView1<F>,
    params: &GruCellParams<F>,
    dh: ArrayView1<F>,
) -> Result<GruCellGrads<F>> {
    check_inputs(&x, &h_prev, params)?;
    let h = params.hidden_size;
    if dh.len() != h {
        return Err(Error::shape(&[h], &[dh.len()]));
    }
    let fw = cell_forward(&x, &h_prev, params);
    let one = F::one();
    let dz = &dh * &(&h_prev - &fw.n);
    let dn = &dh * &fw.z.mapv(|v| one - v);
    let mut dh_prev = &dh * &fw.z;
    let da_n = dn * &fw.n.mapv(|v| one - v * v);
    let drhx = params.w_n.t().dot(&da_n);
    let d_rh = drhx.slice(s![..h]);
    let dr = &d_rh * &h_prev;
    dh_prev += &(&d_rh * &fw.r);
    let da_z = dz * &fw.z.mapv(|v| v * (one - v));
    let da_r = dr * &fw.r.mapv(|v| v * (one - v));
    let dhx = params.w_z.t().dot(&da_z) + params.w_r.t().dot(&da_r);
    dh_prev += &dhx.slice(s![..h]);
    let dx = &dhx.slice(s![h..]) + &drhx.slice(s![h..]);

    let outer = |da: &Array1<F>, v: &Array1<F>| da.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
    Ok(GruCellGrads {
        params: GruCellParams {
            w_z: outer(&da_z, &fw.hx),
            w_r: outer(&da_r, &fw.hx),
            w_n: outer(&da_n, &fw.rhx),
            b_z: da_z,
            b_r: da_r,
            b_n: da_n,
            hidden_size: h,
        },
        x: dx,
        h_prev: dh_prev,
    })
}

#[derive(Debug, Clone)]
struct GruCache<F> {
    x: Array2<F>,
    /// Activated `[z | r | n]` per step, `(T, B, 3H)`.
    gates: Array3<F>,
    /// `r * h_prev` per step, `(T, B, H)`.
    rh: Array3<F>,
    /// Hidden states including the zero initial state, `(T + 1, B, H)`.
    h: Array3<F>,
}

/// GRU over a `(T, B, input)` sequence with zero initial state. Weights are
/// packed with gate blocks `[z | r | n]`.
#[derive(Debug, Clone)]
pub struct GruLayer<F> {
    pub w_x: Param<F>,
    pub w_h: Param<F>,
    pub b: Param<F>,
    cache: Option<GruCache<F>>,
}

impl<F: Real> GruLayer<F> {
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let h = hidden_size;
        let w_x = glorot_uniform(input_size, 3 * h, rng);
        let mut w_h = Array2::zeros((h, 3 * h));
        for k in 0..3 {
            w_h.slice_mut(s![.., k * h..(k + 1) * h]).assign(&orthogonal::<F, _>(h, rng));
        }
        Self {
            w_x: Param::new(w_x),
            w_h: Param::new(w_h),
            b: Param::new(Array2::zeros((1, 3 * h))),
            cache: None,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.value.nrows()
    }

    pub fn input_size(&self) -> usize {
        self.w_x.value.nrows()
    }

    pub fn cell_params(&self) -> GruCellParams<F> {
        let h = self.hidden_size();
        let gate = |k: usize| {
            let cols = s![.., k * h..(k + 1) * h];
            (
                concatenate![Axis(1), self.w_h.value.slice(cols).t(), self.w_x.value.slice(cols).t()],
                self.b.value.slice(s![0, k * h..(k + 1) * h]).to_owned(),
            )
        };
        let (w_z, b_z) = gate(0);
        let (w_r, b_r) = gate(1);
        let (w_n, b_n) = gate(2);
        GruCellParams {
            w_z,
            w_r,
            w_n,
            b_z,
            b_r,
            b_n,
            hidden_size: h,
        }
    }

    pub fn forward(&mut self, x: &Array3<F>) -> Result<Array3<F>> {
        let (t, bsz, n_in) = x.dim();
        if n_in != self.input_size() {
            return Err(Error::shape(&[t, bsz, self.input_size()], &[t, bsz, n_in]));
        }
        let h = self.hidden_size();
        let one = F::one();
        let x2 = flatten_steps(x);
        let xw = x2.dot(&self.w_x.value) + &self.b.value;
        let w_zr = self.w_h.value.slice(s![.., ..2 * h]);
        let w_n = self.w_h.value.slice(s![.., 2 * h..]);
        let mut gates = Array3::<F>::zeros((t, bsz, 3 * h));
        let mut rhs = Array3::<F>::zeros((t, bsz, h));
        let mut hs = Array3::<F>::zeros((t + 1, bsz, h));
        for step in 0..t {
            let a = xw.slice(s![step * bsz..(step + 1) * bsz, ..]);
            let h_prev = hs.index_axis(Axis(0), step).to_owned();
            let zr_pre = &a.slice(s![.., ..2 * h]) + &h_prev.dot(&w_zr);
            let zr = zr_pre.mapv(sigmoid);
            let rh = &zr.slice(s![.., h..]) * &h_prev;
            let n = (&a.slice(s![.., 2 * h..]) + &rh.dot(&w_n)).mapv(F::tanh);
            let z = zr.slice(s![.., ..h]);
            let h_next = &z * &h_prev + &(z.mapv(|v| one - v) * &n);
            let mut g = gates.index_axis_mut(Axis(0), step);
            g.slice_mut(s![.., ..2 * h]).assign(&zr);
            g.slice_mut(s![.., 2 * h..]).assign(&n);
            rhs.index_axis_mut(Axis(0), step).assign(&rh);
            hs.index_axis_mut(Axis(0), step + 1).assign(&h_next);
        }
        let out = hs.slice(s![1.., .., ..]).to_owned();
        self.cache = Some(GruCache {
            x: x2,
            gates,
            rh: rhs,
            h: hs,
        });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Array3<F>, param_grads: bool, input_grad: bool) -> Option<Array3<F>> {
        let h = self.hidden_size();
        let one = F::one();
        let cache = self.cache.as_ref().expect("backward before forward");
        let (t, bsz, _) = dy.dim();
        let w_zr = self.w_h.value.slice(s![.., ..2 * h]);
        let w_n = self.w_h.value.slice(s![.., 2 * h..]);
        let mut da = Array3::<F>::zeros((t, bsz, 3 * h));
        let mut dh_next = Array2::<F>::zeros((bsz, h));
        for step in (0..t).rev() {
            let dh = &dy.index_axis(Axis(0), step) + &dh_next;
            let g = cache.gates.index_axis(Axis(0), step);
            let z = g.slice(s![.., ..h]);
            let r = g.slice(s![.., h..2 * h]);
            let n = g.slice(s![.., 2 * h..]);
            let h_prev = cache.h.index_axis(Axis(0), step);
            let dz = &dh * &(&h_prev - &n);
            let da_n = &dh * &z.mapv(|v| one - v) * &n.mapv(|v| one - v * v);
            let d_rh = da_n.dot(&w_n.t());
            let dr = &d_rh * &h_prev;
            let mut dh_prev = &dh * &z + &d_rh * &r;
            let da_z = dz * &z.mapv(|v| v * (one - v));
            let da_r = dr * &r.mapv(|v| v * (one - v));
            let mut d = da.index_axis_mut(Axis(0), step);
            d.slice_mut(s![.., ..h]).assign(&da_z);
            d.slice_mut(s![.., h..2 * h]).assign(&da_r);
            d.slice_mut(s![.., 2 * h..]).assign(&da_n);
            dh_prev += &d.slice(s![.., ..2 * h]).dot(&w_zr.t());
            dh_next = dh_prev;
        }
        let da2 = flatten_steps(&da);
        if param_grads {
            let h_prev = flatten_steps(&cache.h.slice(s![..t, .., ..]).to_owned());
            let rh = flatten_steps(&cache.rh);
            ndarray::linalg::general_mat_mul(one, &cache.x.t(), &da2, one, &mut self.w_x.grad);
            let (mut g_zr, mut g_n) = self.w_h.grad.multi_slice_mut((s![.., ..2 * h], s![.., 2 * h..]));
            ndarray::linalg::general_mat_mul(one, &h_prev.t(), &da2.slice(s![.., ..2 * h]), one, &mut g_zr);
            ndarray::linalg::general_mat_mul(one, &rh.t(), &da2.slice(s![.., 2 * h..]), one, &mut g_n);
            self.b.grad += &da2.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        input_grad.then(|| unflatten_steps(da2.dot(&self.w_x.value.t()), t, bsz))
    }
}

impl<F: Real> Module<F> for GruLayer<F> {
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
