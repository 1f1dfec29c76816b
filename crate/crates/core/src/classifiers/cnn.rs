//! The light-weight two-convolution network:
//! conv 5x5x1x16 -> ReLU -> maxpool 3/3 -> conv 5x5x16x64 -> ReLU ->
//! maxpool 3/3 -> FC 576x128 -> ReLU -> FC 128x2, on a 28x28 patch.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::blob;
use super::svm::{canonical_order, check_training_set};
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureVector};

pub const INPUT_SIZE: usize = 28;
const K: usize = 5;
const PAD: usize = 2;
const POOL: usize = 3;
const C1: usize = 16;
const C2: usize = 64;
const S0: usize = INPUT_SIZE * INPUT_SIZE;
const P1: usize = 9;
const S1: usize = P1 * P1;
const P2: usize = 3;
pub const FLAT: usize = C2 * P2 * P2;
pub const HIDDEN: usize = 128;
pub const CLASSES: usize = 2;

/// Arithmetic the network is generic over: `f32` for training and
/// inference, `f64` for gradient checking.
pub trait Scalar:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;

    /// `C = alpha A B + beta C` with explicit strides.
    ///
    /// # Safety
    /// The pointers and strides must describe valid, non-aliasing
    /// matrices of the given shapes.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const ZERO: f32 = 0.0;
    const ONE: f32 = 1.0;
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> f32 {
        f32::exp(self)
    }
    fn ln(self) -> f32 {
        f32::ln(self)
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// `C (m x n) = op(A) op(B) [+ C]`, all row-major; `ta`/`tb` mean the
/// operand is stored transposed.
#[allow(clippy::too_many_arguments)]
fn matmul<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T], acc: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m) } else { (k, 1) };
    let (rsb, csb) = if tb { (1, k) } else { (n, 1) };
    let beta = if acc { T::ONE } else { T::ZERO };
    // SAFETY: the assert above bounds every access; `c` is a unique borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Network parameters. Convolution kernels are `[out][in][ky][kx]`,
/// fully connected weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnWeights<T> {
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    pub fc1_w: Vec<T>,
    pub fc1_b: Vec<T>,
    pub fc2_w: Vec<T>,
    pub fc2_b: Vec<T>,
}

/// Tensor names and lengths in storage order.
pub const TENSORS: [(&str, usize); 8] = [
    ("conv1_w", C1 * K * K),
    ("conv1_b", C1),
    ("conv2_w", C2 * C1 * K * K),
    ("conv2_b", C2),
    ("fc1_w", HIDDEN * FLAT),
    ("fc1_b", HIDDEN),
    ("fc2_w", CLASSES * HIDDEN),
    ("fc2_b", CLASSES),
];

impl<T: Scalar> CnnWeights<T> {
    pub fn zeros() -> Self {
        let z = |i: usize| vec![T::ZERO; TENSORS[i].1];
        CnnWeights {
            conv1_w: z(0),
            conv1_b: z(1),
            conv2_w: z(2),
            conv2_b: z(3),
            fc1_w: z(4),
            fc1_b: z(5),
            fc2_w: z(6),
            fc2_b: z(7),
        }
    }

    pub fn tensors(&self) -> [&[T]; 8] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }

    pub fn param_count() -> usize {
        TENSORS.iter().map(|t| t.1).sum()
    }

    pub fn check_shapes(&self) -> Result<()> {
        for ((name, len), t) in TENSORS.iter().zip(self.tensors()) {
            if t.len() != *len {
                return Err(Error::Shape(format!("{name} has {} values, expected {len}", t.len())));
            }
            if t.iter().any(|v| !v.to_f64().is_finite()) {
                return Err(Error::Shape(format!("{name} has a non-finite value")));
            }
        }
        Ok(())
    }

    pub fn convert<U: Scalar>(&self) -> CnnWeights<U> {
        let c = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect();
        CnnWeights {
            conv1_w: c(&self.conv1_w),
            conv1_b: c(&self.conv1_b),
            conv2_w: c(&self.conv2_w),
            conv2_b: c(&self.conv2_b),
            fc1_w: c(&self.fc1_w),
            fc1_b: c(&self.fc1_b),
            fc2_w: c(&self.fc2_w),
            fc2_b: c(&self.fc2_b),
        }
    }

    /// He-normal weights, zero biases.
    pub fn he_init(rng: &mut impl Rng) -> Self {
        let mut w = Self::zeros();
        let fan_in = [K * K, 0, C1 * K * K, 0, FLAT, 0, HIDDEN, 0];
        for (t, &fan) in w.tensors_mut().into_iter().zip(&fan_in) {
            if fan == 0 {
                continue;
            }
            let normal = Normal::new(0.0, (2.0 / fan as f64).sqrt()).unwrap();
            t.iter_mut().for_each(|v| *v = T::from_f64(normal.sample(rng)));
        }
        w
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    /// im2col of the input, 25 x 784.
    pub cols1: Vec<T>,
    /// ReLU(conv1), 16 x 28 x 28.
    pub a1: Vec<T>,
    /// Pooled, 16 x 9 x 9, with the in-plane argmax of each window.
    pub p1: Vec<T>,
    pub arg1: Vec<u16>,
    /// im2col of `p1`, 400 x 81.
    pub cols2: Vec<T>,
    /// ReLU(conv2), 64 x 9 x 9.
    pub a2: Vec<T>,
    /// Pooled and flattened, 576.
    pub p2: Vec<T>,
    pub arg2: Vec<u16>,
    /// ReLU(fc1), 128.
    pub h: Vec<T>,
    pub logits: [T; CLASSES],
}

impl<T: Scalar> Activations<T> {
    pub fn new() -> Self {
        Activations {
            cols1: vec![T::ZERO; K * K * S0],
            a1: vec![T::ZERO; C1 * S0],
            p1: vec![T::ZERO; C1 * S1],
            arg1: vec![0; C1 * S1],
            cols2: vec![T::ZERO; C1 * K * K * S1],
            a2: vec![T::ZERO; C2 * S1],
            p2: vec![T::ZERO; FLAT],
            arg2: vec![0; FLAT],
            h: vec![T::ZERO; HIDDEN],
            logits: [T::ZERO; CLASSES],
        }
    }

    /// Which units are active and which window positions won; two passes
    /// with equal patterns share one piecewise-linear region.
    fn pattern(&self) -> (Vec<bool>, Vec<u16>) {
        let mut active: Vec<bool> = self.a1.iter().map(|&v| v > T::ZERO).collect();
        active.extend(self.a2.iter().map(|&v| v > T::ZERO));
        active.extend(self.h.iter().map(|&v| v > T::ZERO));
        let mut args = self.arg1.clone();
        args.extend_from_slice(&self.arg2);
        (active, args)
    }
}

impl<T: Scalar> Default for Activations<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// 5x5 same-padding patches: row `(c * 25 + ky * 5 + kx)`, column `y * side + x`.
pub(crate) fn im2col<T: Scalar>(input: &[T], channels: usize, side: usize, cols: &mut [T]) {
    let plane = side * side;
    for c in 0..channels {
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut cols[((c * K + ky) * K + kx) * plane..][..plane];
                for y in 0..side {
                    let sy = y as isize + ky as isize - PAD as isize;
                    let out = &mut row[y * side..(y + 1) * side];
                    if sy < 0 || sy >= side as isize {
                        out.fill(T::ZERO);
                        continue;
                    }
                    let src = &input[c * plane + sy as usize * side..][..side];
                    for (x, o) in out.iter_mut().enumerate() {
                        let sx = x as isize + kx as isize - PAD as isize;
                        *o = if sx < 0 || sx >= side as isize {
                            T::ZERO
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the input.
pub(crate) fn col2im<T: Scalar>(cols: &[T], channels: usize, side: usize, out: &mut [T]) {
    let plane = side * side;
    out[..channels * plane].fill(T::ZERO);
    for c in 0..channels {
        for ky in 0..K {
            for kx in 0..K {
                let row = &cols[((c * K + ky) * K + kx) * plane..][..plane];
                for y in 0..side {
                    let sy = y as isize + ky as isize - PAD as isize;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    for x in 0..side {
                        let sx = x as isize + kx as isize - PAD as isize;
                        if sx >= 0 && sx < side as isize {
                            out[c * plane + sy as usize * side + sx as usize] += row[y * side + x];
                        }
                    }
                }
            }
        }
    }
}

/// 3x3 stride-3 max pooling (trailing rows/columns that do not fill a
/// window are dropped). Ties go to the first position in raster order.
pub(crate) fn max_pool<T: Scalar>(input: &[T], channels: usize, side: usize, out: &mut [T], arg: &mut [u16]) {
    let os = (side - POOL) / POOL + 1;
    for c in 0..channels {
        let plane = &input[c * side * side..][..side * side];
        for oy in 0..os {
            for ox in 0..os {
                let mut best = oy * POOL * side + ox * POOL;
                for dy in 0..POOL {
                    for dx in 0..POOL {
                        let i = (oy * POOL + dy) * side + ox * POOL + dx;
                        if plane[i] > plane[best] {
                            best = i;
                        }
                    }
                }
                out[c * os * os + oy * os + ox] = plane[best];
                arg[c * os * os + oy * os + ox] = best as u16;
            }
        }
    }
}

/// Routes pooled gradients back to the winning positions.
pub(crate) fn max_pool_backward<T: Scalar>(grad: &[T], arg: &[u16], channels: usize, side: usize, out: &mut [T]) {
    let os = (side - POOL) / POOL + 1;
    out[..channels * side * side].fill(T::ZERO);
    for c in 0..channels {
        for k in 0..os * os {
            out[c * side * side + arg[c * os * os + k] as usize] += grad[c * os * os + k];
        }
    }
}

fn relu_bias<T: Scalar>(z: &mut [T], bias: &[T], plane: usize) {
    for (row, &b) in z.chunks_exact_mut(plane).zip(bias) {
        for v in row {
            let x = *v + b;
            *v = if x > T::ZERO { x } else { T::ZERO };
        }
    }
}

/// Forward pass on a 784-value input.
pub fn forward<T: Scalar>(w: &CnnWeights<T>, x: &[T], cache: &mut Activations<T>) {
    assert_eq!(x.len(), S0);
    im2col(x, 1, INPUT_SIZE, &mut cache.cols1);
    matmul(C1, K * K, S0, &w.conv1_w, false, &cache.cols1, false, &mut cache.a1, false);
    relu_bias(&mut cache.a1, &w.conv1_b, S0);
    max_pool(&cache.a1, C1, INPUT_SIZE, &mut cache.p1, &mut cache.arg1);

    im2col(&cache.p1, C1, P1, &mut cache.cols2);
    matmul(C2, C1 * K * K, S1, &w.conv2_w, false, &cache.cols2, false, &mut cache.a2, false);
    relu_bias(&mut cache.a2, &w.conv2_b, S1);
    max_pool(&cache.a2, C2, P1, &mut cache.p2, &mut cache.arg2);

    matmul(HIDDEN, FLAT, 1, &w.fc1_w, false, &cache.p2, false, &mut cache.h, false);
    relu_bias(&mut cache.h, &w.fc1_b, 1);
    let mut logits = [T::ZERO; CLASSES];
    matmul(CLASSES, HIDDEN, 1, &w.fc2_w, false, &cache.h, false, &mut logits, false);
    for (l, &b) in logits.iter_mut().zip(&w.fc2_b) {
        *l += b;
    }
    cache.logits = logits;
}

/// Softmax cross-entropy of the logits against `class`: (loss, dloss/dlogits).
pub fn softmax_xent<T: Scalar>(logits: [T; CLASSES], class: usize) -> (T, [T; CLASSES]) {
    let m = if logits[0] > logits[1] { logits[0] } else { logits[1] };
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    let loss = m + z.ln() - logits[class];
    let mut g = [e[0] / z, e[1] / z];
    g[class] -= T::ONE;
    (loss, g)
}

/// Scratch buffers for [`backward`].
#[derive(Debug, Clone)]
pub struct Scratch<T> {
    dh: Vec<T>,
    dp2: Vec<T>,
    dz2: Vec<T>,
    dcols2: Vec<T>,
    dp1: Vec<T>,
    dz1: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    pub fn new() -> Self {
        Scratch {
            dh: vec![T::ZERO; HIDDEN],
            dp2: vec![T::ZERO; FLAT],
            dz2: vec![T::ZERO; C2 * S1],
            dcols2: vec![T::ZERO; C1 * K * K * S1],
            dp1: vec![T::ZERO; C1 * S1],
            dz1: vec![T::ZERO; C1 * S0],
        }
    }
}

impl<T: Scalar> Default for Scratch<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mask_relu<T: Scalar>(grad: &mut [T], act: &[T]) {
    for (g, &a) in grad.iter_mut().zip(act) {
        if !(a > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

fn add_row_sums<T: Scalar>(dst: &mut [T], m: &[T], cols: usize) {
    for (d, row) in dst.iter_mut().zip(m.chunks_exact(cols)) {
        for &v in row {
            *d += v;
        }
    }
}

/// Accumulates the parameter gradient of one sample into `grads`, given
/// the loss gradient with respect to its logits.
pub fn backward<T: Scalar>(
    w: &CnnWeights<T>,
    cache: &Activations<T>,
    dlogits: [T; CLASSES],
    grads: &mut CnnWeights<T>,
    s: &mut Scratch<T>,
) {
    for (g, &d) in grads.fc2_b.iter_mut().zip(&dlogits) {
        *g += d;
    }
    matmul(CLASSES, 1, HIDDEN, &dlogits, false, &cache.h, false, &mut grads.fc2_w, true);
    matmul(HIDDEN, CLASSES, 1, &w.fc2_w, true, &dlogits, false, &mut s.dh, false);
    mask_relu(&mut s.dh, &cache.h);

    for (g, &d) in grads.fc1_b.iter_mut().zip(&s.dh) {
        *g += d;
    }
    matmul(HIDDEN, 1, FLAT, &s.dh, false, &cache.p2, false, &mut grads.fc1_w, true);
    matmul(FLAT, HIDDEN, 1, &w.fc1_w, true, &s.dh, false, &mut s.dp2, false);

    max_pool_backward(&s.dp2, &cache.arg2, C2, P1, &mut s.dz2);
    mask_relu(&mut s.dz2, &cache.a2);
    add_row_sums(&mut grads.conv2_b, &s.dz2, S1);
    matmul(C2, S1, C1 * K * K, &s.dz2, false, &cache.cols2, true, &mut grads.conv2_w, true);
    matmul(C1 * K * K, C2, S1, &w.conv2_w, true, &s.dz2, false, &mut s.dcols2, false);
    col2im(&s.dcols2, C1, P1, &mut s.dp1);

    max_pool_backward(&s.dp1, &cache.arg1, C1, INPUT_SIZE, &mut s.dz1);
    mask_relu(&mut s.dz1, &cache.a1);
    add_row_sums(&mut grads.conv1_b, &s.dz1, S0);
    matmul(C1, S0, K * K, &s.dz1, false, &cache.cols1, true, &mut grads.conv1_w, true);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for CnnParams {
    fn default() -> Self {
        CnnParams {
            lr: 0.01,
            epochs: 15,
            batch: 16,
            seed: 0,
        }
    }
}

/// Trained (or freshly initialized) network plus input normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CnnFile", try_from = "CnnFile")]
pub struct CnnModel {
    pub layout: FeatureLayout,
    pub weights: CnnWeights<f32>,
    /// Inputs are fed as `(x - input_mean) * input_scale`.
    pub input_mean: f32,
    pub input_scale: f32,
    pub params: CnnParams,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CnnFile {
    layout: FeatureLayout,
    input_mean: f32,
    input_scale: f32,
    params: CnnParams,
    loss_trace: Vec<f64>,
    #[serde(with = "blob::f32s")]
    conv1_w: Vec<f32>,
    #[serde(with = "blob::f32s")]
    conv1_b: Vec<f32>,
    #[serde(with = "blob::f32s")]
    conv2_w: Vec<f32>,
    #[serde(with = "blob::f32s")]
    conv2_b: Vec<f32>,
    #[serde(with = "blob::f32s")]
    fc1_w: Vec<f32>,
    #[serde(with = "blob::f32s")]
    fc1_b: Vec<f32>,
    #[serde(with = "blob::f32s")]
    fc2_w: Vec<f32>,
    #[serde(with = "blob::f32s")]
    fc2_b: Vec<f32>,
}

impl From<CnnModel> for CnnFile {
    fn from(m: CnnModel) -> Self {
        let w = m.weights;
        CnnFile {
            layout: m.layout,
            input_mean: m.input_mean,
            input_scale: m.input_scale,
            params: m.params,
            loss_trace: m.loss_trace,
            conv1_w: w.conv1_w,
            conv1_b: w.conv1_b,
            conv2_w: w.conv2_w,
            conv2_b: w.conv2_b,
            fc1_w: w.fc1_w,
            fc1_b: w.fc1_b,
            fc2_w: w.fc2_w,
            fc2_b: w.fc2_b,
        }
    }
}

impl TryFrom<CnnFile> for CnnModel {
    type Error = Error;

    fn try_from(f: CnnFile) -> Result<Self> {
        let m = CnnModel {
            layout: f.layout,
            weights: CnnWeights {
                conv1_w: f.conv1_w,
                conv1_b: f.conv1_b,
                conv2_w: f.conv2_w,
                conv2_b: f.conv2_b,
                fc1_w: f.fc1_w,
                fc1_b: f.fc1_b,
                fc2_w: f.fc2_w,
                fc2_b: f.fc2_b,
            },
            input_mean: f.input_mean,
            input_scale: f.input_scale,
            params: f.params,
            loss_trace: f.loss_trace,
        };
        m.validate()?;
        Ok(m)
    }
}

fn check_patch_layout(layout: FeatureLayout) -> Result<()> {
    match layout.patch_dims() {
        Some((INPUT_SIZE, INPUT_SIZE)) => Ok(()),
        _ => Err(Error::Shape(format!(
            "the network takes a {INPUT_SIZE}x{INPUT_SIZE} patch, got {} ({} values)",
            layout.name(),
            layout.len()
        ))),
    }
}

impl CnnModel {
    /// Fresh He-initialized network for a 28x28 patch layout.
    pub fn new(layout: FeatureLayout, seed: u64) -> Result<Self> {
        check_patch_layout(layout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(CnnModel {
            layout,
            weights: CnnWeights::he_init(&mut rng),
            input_mean: 0.0,
            input_scale: 1.0,
            params: CnnParams {
                seed,
                epochs: 0,
                ..CnnParams::default()
            },
            loss_trace: Vec::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_patch_layout(self.layout)?;
        self.weights.check_shapes()?;
        if !(self.input_mean.is_finite() && self.input_scale.is_finite()) {
            return Err(Error::Shape("non-finite input normalization".into()));
        }
        Ok(())
    }

    fn normalized(&self, values: &[f64]) -> Vec<f32> {
        values
            .iter()
            .map(|&v| (v as f32 - self.input_mean) * self.input_scale)
            .collect()
    }

    fn check_input(&self, x: &FeatureVector) -> Result<()> {
        if x.layout != self.layout {
            return Err(Error::Shape(format!(
                "model expects {} input, got {}",
                self.layout.name(),
                x.layout.name()
            )));
        }
        x.validate()
    }
}

/// Logits and the activation cache for one patch.
pub fn cnn_forward(model: &CnnModel, x: &FeatureVector) -> Result<([f32; CLASSES], Activations<f32>)> {
    model.check_input(x)?;
    let mut cache = Activations::new();
    forward(&model.weights, &model.normalized(&x.values), &mut cache);
    Ok((cache.logits, cache))
}

/// Logits for several patches; each is computed exactly as a single forward.
pub fn cnn_forward_batch(model: &CnnModel, xs: &[FeatureVector]) -> Result<Vec<[f32; CLASSES]>> {
    let mut cache = Activations::new();
    xs.iter()
        .map(|x| {
            model.check_input(x)?;
            forward(&model.weights, &model.normalized(&x.values), &mut cache);
            Ok(cache.logits)
        })
        .collect()
}

/// `(label, margin)` with margin `logit[live] - logit[spoof]`; ties are +1.
pub fn cnn_predict(model: &CnnModel, x: &FeatureVector) -> Result<(i8, f64)> {
    let (logits, _) = cnn_forward(model, x)?;
    let m = f64::from(logits[1]) - f64::from(logits[0]);
    Ok((if m >= 0.0 { 1 } else { -1 }, m))
}

fn class_of(label: i8) -> usize {
    usize::from(label > 0)
}

/// Mini-batch gradient descent on softmax cross-entropy, starting from
/// `model`'s weights. Input normalization is refitted on `x`. Label +1 is
/// class 1.
pub fn cnn_train(model: &CnnModel, x: &[FeatureVector], y: &[i8], params: &CnnParams) -> Result<CnnModel> {
    let layout = check_training_set(x, y)?;
    if layout != model.layout {
        return Err(Error::Shape(format!(
            "model expects {} input, got {}",
            model.layout.name(),
            layout.name()
        )));
    }
    if params.batch == 0 || !(params.lr >= 0.0 && params.lr.is_finite()) {
        return Err(Error::Argument("batch must be positive and lr finite and non-negative".into()));
    }
    let order = canonical_order(x, y);
    let x: Vec<&FeatureVector> = order.iter().map(|&i| &x[i]).collect();
    let y: Vec<i8> = order.iter().map(|&i| y[i]).collect();
    let n_pix = (x.len() * S0) as f64;
    let mean = x.iter().flat_map(|f| &f.values).sum::<f64>() / n_pix;
    let var = x
        .iter()
        .flat_map(|f| &f.values)
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n_pix;
    let mut out = model.clone();
    out.input_mean = mean as f32;
    out.input_scale = if var > 1e-24 { (1.0 / var.sqrt()) as f32 } else { 1.0 };
    out.params = *params;
    out.loss_trace.clear();
    let inputs: Vec<Vec<f32>> = x.iter().map(|f| out.normalized(&f.values)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut perm: Vec<usize> = (0..x.len()).collect();
    let mut cache = Activations::new();
    let mut scratch = Scratch::new();
    let mut grads = CnnWeights::<f32>::zeros();
    let lr = params.lr as f32;
    for epoch in 0..params.epochs {
        perm.shuffle(&mut rng);
        let mut total = 0.0f64;
        for batch in perm.chunks(params.batch) {
            for t in grads.tensors_mut() {
                t.fill(0.0);
            }
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                forward(&out.weights, &inputs[i], &mut cache);
                let (loss, g) = softmax_xent(cache.logits, class_of(y[i]));
                total += f64::from(loss);
                backward(&out.weights, &cache, [g[0] * scale, g[1] * scale], &mut grads, &mut scratch);
            }
            for (p, g) in out.weights.tensors_mut().into_iter().zip(grads.tensors()) {
                for (pv, &gv) in p.iter_mut().zip(g) {
                    *pv -= lr * gv;
                }
            }
        }
        let mean_loss = total / x.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: format!("mean loss {mean_loss}"),
            });
        }
        log::debug!("cnn epoch {epoch}: loss {mean_loss:.5}");
        out.loss_trace.push(mean_loss);
    }
    Ok(out)
}

/// Test hook for checking that the gradient checker notices a broken
/// backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardFault {
    /// Negates the conv2 kernel gradient.
    FlipConv2Weights,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Fraction of each tensor's parameters that is checked.
    pub fraction: f64,
    pub seed: u64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub fault: Option<BackwardFault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            fraction: 0.01,
            seed: 0,
            floor: 1e-6,
            fault: None,
        }
    }
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a perturbation crossed a ReLU or
    /// max-pool switch.
    pub skipped_kinks: usize,
}

/// Max relative error between the backpropagated gradient and central
/// finite differences over a random 1% of the parameters, in `f64`.
pub fn grad_check(model: &CnnModel, x: &[f64], label: i8, epsilon: f64) -> Result<f64> {
    Ok(grad_check_with(model, x, label, epsilon, &GradCheckOptions::default())?.max_rel_error)
}

pub fn grad_check_with(
    model: &CnnModel,
    x: &[f64],
    label: i8,
    epsilon: f64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon must lie in [1e-6, 1e-3], got {epsilon}")));
    }
    if x.len() != S0 {
        return Err(Error::Shape(format!("expected {S0} input values, got {}", x.len())));
    }
    if !(opts.fraction > 0.0 && opts.fraction <= 1.0) {
        return Err(Error::Argument(format!("fraction must lie in (0, 1], got {}", opts.fraction)));
    }
    let class = class_of(label);
    let mut w: CnnWeights<f64> = model.weights.convert();
    let input: Vec<f64> = x
        .iter()
        .map(|&v| (v - f64::from(model.input_mean)) * f64::from(model.input_scale))
        .collect();
    let mut cache = Activations::new();
    forward(&w, &input, &mut cache);
    let base_pattern = cache.pattern();
    let (_, g) = softmax_xent(cache.logits, class);
    let mut grads = CnnWeights::<f64>::zeros();
    backward(&w, &cache, g, &mut grads, &mut Scratch::new());
    if opts.fault == Some(BackwardFault::FlipConv2Weights) {
        grads.conv2_w.iter_mut().for_each(|v| *v = -*v);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for ti in 0..TENSORS.len() {
        let len = TENSORS[ti].1;
        let take = ((len as f64 * opts.fraction).ceil() as usize).clamp(1, len);
        let picks = rand::seq::index::sample(&mut rng, len, take);
        for j in picks.iter() {
            let orig = w.tensors()[ti][j];
            let mut loss_at = |v: f64, w: &mut CnnWeights<f64>| {
                w.tensors_mut()[ti][j] = v;
                forward(w, &input, &mut cache);
                (softmax_xent(cache.logits, class).0, cache.pattern())
            };
            let (lp, pp) = loss_at(orig + epsilon, &mut w);
            let (lm, pm) = loss_at(orig - epsilon, &mut w);
            w.tensors_mut()[ti][j] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * epsilon);
            let analytic = grads.tensors()[ti][j];
            let denom = analytic.abs().max(numeric.abs()).max(opts.floor);
            report.max_rel_error = report.max_rel_error.max((analytic - numeric).abs() / denom);
            report.checked += 1;
        }
    }
    Ok(report)
}
