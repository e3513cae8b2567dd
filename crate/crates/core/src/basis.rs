//! Basis trajectory families: an explicit Fourier series and a small MLP
//! queried only over positionally encoded time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{gemm, View};
use crate::scene::BasisSample;

/// Which basis family a scene uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisFamily {
    Fourier,
    Mlp,
}

impl BasisFamily {
    pub const fn name(self) -> &'static str {
        match self {
            BasisFamily::Fourier => "fourier",
            BasisFamily::Mlp => "mlp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fourier" => Some(BasisFamily::Fourier),
            "mlp" => Some(BasisFamily::Mlp),
            _ => None,
        }
    }
}

/// Basis `j` (1-based) of the Fourier family at time `t` in `[0, period]`:
/// `cos(2 pi j t / T)` for odd `j`, `sin(2 pi j t / T)` for even `j`.
///
/// The phase is reduced modulo one period before the trig call, so the
/// result is periodic in `t` to rounding of `t / T`.
pub fn fourier_eval(j: usize, t: f64, period: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::invalid("fourier basis index is 1-based"));
    }
    if !(period > 0.0) {
        return Err(Error::invalid(format!("fourier period must be positive, got {period}")));
    }
    let r = t / period;
    let mut phase = (r - libm::floor(r)) * j as f64;
    phase -= libm::floor(phase);
    let angle = 2.0 * PI * phase;
    Ok(if j % 2 == 1 { libm::cos(angle) } else { libm::sin(angle) })
}

/// `[sin(2^0 pi t), cos(2^0 pi t), ..., sin(2^(F-1) pi t), cos(2^(F-1) pi t)]`.
///
/// `2^k t` is exact in binary floating point, so reducing it modulo 2 before
/// multiplying by pi keeps the high frequencies accurate.
pub fn positional_encode(t: f64, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * freqs);
    encode_into(t, freqs, &mut out);
    out
}

fn encode_into(t: f64, freqs: usize, out: &mut Vec<f64>) {
    for k in 0..freqs {
        let x = libm::ldexp(t, k as i32);
        let r = x - 2.0 * libm::floor(x * 0.5);
        let angle = PI * r;
        out.push(libm::sin(angle));
        out.push(libm::cos(angle));
    }
}

/// Explicit Fourier basis with `num_basis` functions over normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    num_basis: usize,
}

impl FourierBasis {
    pub fn new(num_basis: usize) -> Result<Self> {
        if num_basis == 0 {
            return Err(Error::invalid("fourier basis needs at least one function"));
        }
        Ok(Self { num_basis })
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    /// Scalar values of every basis at normalized time `u`.
    pub fn sample(&self, u: f64) -> Result<BasisSample> {
        check_unit_time(u)?;
        (1..=self.num_basis).map(|j| fourier_eval(j, u, 1.0)).collect::<Result<Vec<_>>>().map(BasisSample::Scalar)
    }
}

/// Architecture of the time-only MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MlpShape {
    /// Positional-encoding frequency count `F`; the input width is `2F`.
    pub freqs: usize,
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub num_basis: usize,
}

impl MlpShape {
    /// 26 encoding frequencies and three hidden layers of width 256.
    pub fn standard(num_basis: usize) -> Self {
        Self { freqs: 26, width: 256, depth: 3, num_basis }
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs == 0 || self.num_basis == 0 || (self.depth > 0 && self.width == 0) {
            return Err(Error::invalid(format!("degenerate mlp shape {self:?}")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2 * self.freqs
    }

    fn spans(&self) -> Vec<Span> {
        let mut spans = Vec::with_capacity(self.depth + 2);
        let mut offset = 0;
        let mut push = |rows: usize, cols: usize| {
            spans.push(Span { offset, rows, cols });
            offset += rows * cols + rows;
        };
        let mut cols = self.input_dim();
        for _ in 0..self.depth {
            push(self.width, cols);
            cols = self.width;
        }
        push(3 * self.num_basis, cols);
        push(4 * self.num_basis, cols);
        spans
    }

    /// Index ranges of every head parameter (weights and biases, both heads)
    /// feeding basis `j`'s outputs.
    pub(crate) fn head_ranges(&self, j: usize) -> [core::ops::Range<usize>; 4] {
        let spans = self.spans();
        let range = |span: &Span, per: usize| {
            let w = span.offset + per * j * span.cols..span.offset + per * (j + 1) * span.cols;
            let bias = span.offset + span.rows * span.cols;
            (w, bias + per * j..bias + per * (j + 1))
        };
        let (tw, tb) = range(&spans[self.depth], 3);
        let (rw, rb) = range(&spans[self.depth + 1], 4);
        [tw, tb, rw, rb]
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.spans().iter().map(|s| s.rows * s.cols + s.rows).sum()
    }
}

/// One dense layer inside the flat parameter vector: a `rows x cols`
/// row-major weight followed by `rows` biases.
#[derive(Debug, Clone, Copy)]
struct Span {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Span {
    fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.rows * self.cols]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.rows * self.cols;
        &p[start..start + self.rows]
    }

    fn split_mut<'a>(&self, p: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let all = &mut p[self.offset..self.offset + self.rows * self.cols + self.rows];
        all.split_at_mut(self.rows * self.cols)
    }
}

/// Time-only MLP producing `B` translation and `B` rotation corrections.
///
/// Parameters live in one flat vector: each hidden layer's weight and bias,
/// then the translation head, then the rotation head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBasis {
    shape: MlpShape,
    params: Vec<f64>,
}

/// Gradient with respect to every [`MlpBasis`] parameter, same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    shape: MlpShape,
    values: Vec<f64>,
}

impl MlpGradient {
    pub fn zeros(shape: MlpShape) -> Self {
        Self { values: vec![0.0; shape.param_count()], shape }
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn accumulate(&mut self, other: &MlpGradient) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::DimensionMismatch {
                context: "mlp gradient",
                expected: self.values.len(),
                actual: other.values.len(),
            });
        }
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// Intermediate activations of a batched forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    batch: usize,
    encoded: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    /// `batch x 3B`, row per time.
    pub translation: Vec<f64>,
    /// `batch x 4B`, row per time.
    pub rotation: Vec<f64>,
}

impl MlpTrace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Basis values of row `k`.
    pub fn sample(&self, k: usize, num_basis: usize) -> BasisSample {
        let t = &self.translation[k * 3 * num_basis..(k + 1) * 3 * num_basis];
        let r = &self.rotation[k * 4 * num_basis..(k + 1) * 4 * num_basis];
        BasisSample::Vector {
            translation: t.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            rotation: r.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
        }
    }
}

impl MlpBasis {
    /// Hidden layers drawn uniformly in `+-1/sqrt(fan_in)`; both heads zero,
    /// so a fresh basis produces no deformation.
    pub fn new(shape: MlpShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spans = shape.spans();
        let mut params = vec![0.0; shape.param_count()];
        for span in &spans[..shape.depth] {
            let bound = 1.0 / libm::sqrt(span.cols as f64);
            let (w, b) = span.split_mut(&mut params);
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = rng.random_range(-bound..bound);
            }
        }
        Self { shape, params }
    }

    pub fn from_params(shape: MlpShape, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if params.len() != shape.param_count() {
            return Err(Error::DimensionMismatch {
                context: "mlp parameters",
                expected: shape.param_count(),
                actual: params.len(),
            });
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn num_basis(&self) -> usize {
        self.shape.num_basis
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_name(&self, index: usize) -> alloc::string::String {
        match index.checked_sub(self.shape.depth) {
            None => format!("hidden {index}"),
            Some(0) => "translation head".into(),
            Some(_) => "rotation head".into(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (index, span) in self.shape.spans().iter().enumerate() {
            let end = span.offset + span.rows * span.cols + span.rows;
            if self.params[span.offset..end].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("mlp {}", self.layer_name(index))));
            }
        }
        Ok(())
    }

    /// Basis values at one normalized time.
    pub fn forward(&self, u: f64) -> Result<BasisSample> {
        Ok(self.forward_batch(&[u])?.sample(0, self.num_basis()))
    }

    /// Forward pass over a batch of normalized times.
    pub fn forward_batch(&self, times: &[f64]) -> Result<MlpTrace> {
        self.check_finite()?;
        for &u in times {
            check_unit_time(u)?;
        }
        let batch = times.len();
        let mut encoded = Vec::with_capacity(batch * self.shape.input_dim());
        for &u in times {
            encode_into(u, self.shape.freqs, &mut encoded);
        }
        let spans = self.shape.spans();
        let (hidden, heads) = spans.split_at(self.shape.depth);
        let mut pre = Vec::with_capacity(hidden.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(hidden.len());
        for span in hidden {
            let input = post.last().unwrap_or(&encoded);
            let z = self.dense(span, input, batch);
            post.push(z.iter().map(|v| v.max(0.0)).collect());
            pre.push(z);
        }
        let last = post.last().unwrap_or(&encoded);
        let translation = self.dense(&heads[0], last, batch);
        let rotation = self.dense(&heads[1], last, batch);
        Ok(MlpTrace { batch, encoded, pre, post, translation, rotation })
    }

    fn dense(&self, span: &Span, input: &[f64], batch: usize) -> Vec<f64> {
        let bias = span.bias(&self.params);
        let mut out: Vec<f64> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
        gemm(
            batch,
            span.cols,
            span.rows,
            View::rows(input, span.cols),
            View::transposed(span.weight(&self.params), span.cols),
            1.0,
            &mut out,
        );
        out
    }

    /// Accumulates into `grad` the gradient of `sum <upstream, outputs>` for
    /// a traced batch. `d_translation` is `batch x 3B`; `d_rotation`
    /// (`batch x 4B`) may be omitted when it is zero.
    pub fn backward_batch(
        &self,
        trace: &MlpTrace,
        d_translation: &[f64],
        d_rotation: Option<&[f64]>,
        grad: &mut MlpGradient,
    ) -> Result<()> {
        let b = self.num_basis();
        let batch = trace.batch;
        if grad.shape != self.shape {
            return Err(Error::DimensionMismatch {
                context: "mlp gradient",
                expected: self.params.len(),
                actual: grad.values.len(),
            });
        }
        if d_translation.len() != batch * 3 * b {
            return Err(Error::DimensionMismatch {
                context: "translation upstream",
                expected: batch * 3 * b,
                actual: d_translation.len(),
            });
        }
        if let Some(dr) = d_rotation {
            if dr.len() != batch * 4 * b {
                return Err(Error::DimensionMismatch {
                    context: "rotation upstream",
                    expected: batch * 4 * b,
                    actual: dr.len(),
                });
            }
        }
        let spans = self.shape.spans();
        let (hidden, heads) = spans.split_at(self.shape.depth);
        let last = trace.post.last().unwrap_or(&trace.encoded);

        let mut d_last = vec![0.0; batch * heads[0].cols];
        let mut heads_upstream = vec![(heads[0], d_translation)];
        if let Some(dr) = d_rotation {
            heads_upstream.push((heads[1], dr));
        }
        for (span, upstream) in heads_upstream {
            self.accumulate_dense(&span, last, upstream, batch, &mut grad.values);
            gemm(
                batch,
                span.rows,
                span.cols,
                View::rows(upstream, span.rows),
                View::rows(span.weight(&self.params), span.cols),
                1.0,
                &mut d_last,
            );
        }

        let mut upstream = d_last;
        for (l, span) in hidden.iter().enumerate().rev() {
            for (g, z) in upstream.iter_mut().zip(&trace.pre[l]) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
            let input = if l == 0 { &trace.encoded } else { &trace.post[l - 1] };
            self.accumulate_dense(span, input, &upstream, batch, &mut grad.values);
            if l > 0 {
                let mut d_input = vec![0.0; batch * span.cols];
                gemm(
                    batch,
                    span.rows,
                    span.cols,
                    View::rows(&upstream, span.rows),
                    View::rows(span.weight(&self.params), span.cols),
                    0.0,
                    &mut d_input,
                );
                upstream = d_input;
            }
        }
        Ok(())
    }

    fn accumulate_dense(&self, span: &Span, input: &[f64], upstream: &[f64], batch: usize, grad: &mut [f64]) {
        let (gw, gb) = span.split_mut(grad);
        gemm(span.rows, batch, span.cols, View::transposed(upstream, span.rows), View::rows(input, span.cols), 1.0, gw);
        for row in upstream.chunks_exact(span.rows) {
            gb.iter_mut().zip(row).for_each(|(g, u)| *g += u);
        }
    }

    /// Gradient of `<upstream, forward(u)>` with respect to every parameter.
    pub fn backward(&self, u: f64, upstream: &BasisSample) -> Result<MlpGradient> {
        let b = self.num_basis();
        let BasisSample::Vector { translation, rotation } = upstream else {
            return Err(Error::Unsupported("mlp upstream must be a vector sample"));
        };
        if translation.len() != b || rotation.len() != b {
            return Err(Error::DimensionMismatch { context: "mlp upstream", expected: b, actual: translation.len() });
        }
        let trace = self.forward_batch(&[u])?;
        let mut grad = MlpGradient::zeros(self.shape);
        self.backward_batch(&trace, translation.as_flattened(), Some(rotation.as_flattened()), &mut grad)?;
        Ok(grad)
    }
}

/// The motion basis of a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum MotionBasis {
    Fourier(FourierBasis),
    Mlp(MlpBasis),
}

impl MotionBasis {
    pub fn family(&self) -> BasisFamily {
        match self {
            MotionBasis::Fourier(_) => BasisFamily::Fourier,
            MotionBasis::Mlp(_) => BasisFamily::Mlp,
        }
    }

    pub fn num_basis(&self) -> usize {
        match self {
            MotionBasis::Fourier(f) => f.num_basis(),
            MotionBasis::Mlp(m) => m.num_basis(),
        }
    }

    /// Basis values at normalized time `u` in `[0, 1]`. Fourier samples are
    /// scalar broadcasts, MLP samples carry full vectors.
    pub fn sample(&self, u: f64) -> Result<BasisSample> {
        match self {
            MotionBasis::Fourier(f) => f.sample(u),
            MotionBasis::Mlp(m) => m.forward(u),
        }
    }

    pub fn sample_batch(&self, times: &[f64]) -> Result<Vec<BasisSample>> {
        match self {
            MotionBasis::Fourier(f) => times.iter().map(|&u| f.sample(u)).collect(),
            MotionBasis::Mlp(m) => {
                let trace = m.forward_batch(times)?;
                Ok((0..times.len()).map(|k| trace.sample(k, m.num_basis())).collect())
            }
        }
    }
}

fn check_unit_time(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::TimeOutOfRange { t: u, duration: 1.0 });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::finite_difference;
    use proptest::prelude::*;
    use rand::Rng;

    const SQRT_HALF: f64 = core::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn fourier_values() {
        assert_eq!(fourier_eval(1, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(fourier_eval(2, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(fourier_eval(2, 0.125, 1.0).unwrap(), 1.0);
        assert!(fourier_eval(0, 0.1, 1.0).is_err());
        let s = FourierBasis::new(2).unwrap().sample(0.0).unwrap();
        assert_eq!(s, BasisSample::Scalar(vec![1.0, 0.0]));
        let BasisSample::Scalar(v) = FourierBasis::new(4).unwrap().sample(0.25).unwrap() else { unreachable!() };
        assert!(v.iter().all(|x| x.abs() < 1e-15), "{v:?}");
    }

    #[test]
    fn encoding_values() {
        assert_eq!(positional_encode(0.0, 2), vec![0.0, 1.0, 0.0, 1.0]);
        let e = positional_encode(0.5, 1);
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
        let e = positional_encode(0.25, 2);
        let want = [SQRT_HALF, SQRT_HALF, 1.0, 0.0];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(positional_encode(0.123456789, 26), positional_encode(0.123456789, 26));
    }

    #[test]
    fn zero_heads_give_zero_sample_with_standard_shapes() {
        let mlp = MlpBasis::new(MlpShape::standard(10), 3);
        let s = mlp.forward(0.37).unwrap();
        let BasisSample::Vector { translation, rotation } = &s else { panic!() };
        assert_eq!((translation.len(), rotation.len()), (10, 10));
        assert!(translation.as_flattened().iter().chain(rotation.as_flattened()).all(|v| *v == 0.0));
    }

    #[test]
    fn hand_evaluated_single_unit_network() {
        // One hidden unit over F = 1 encoding; at t = 0 the input is [0, 1].
        let shape = MlpShape { freqs: 1, width: 1, depth: 1, num_basis: 1 };
        // hidden: w = [0.7, 1.5], b = -0.25 -> z = 1.25, relu 1.25
        // translation head: w = [2, -1, 0.5], b = [0.1, 0.2, 0.3]
        // rotation head:    w = [1, 0, 0, -2], b = [0, 0.5, 0, 0]
        let params = vec![
            0.7, 1.5, -0.25, //
            2.0, -1.0, 0.5, 0.1, 0.2, 0.3, //
            1.0, 0.0, 0.0, -2.0, 0.0, 0.5, 0.0, 0.0,
        ];
        let mlp = MlpBasis::from_params(shape, params).unwrap();
        let BasisSample::Vector { translation, rotation } = mlp.forward(0.0).unwrap() else { panic!() };
        let want_t = [2.6, -1.05, 0.925];
        for d in 0..3 {
            assert!((translation[0][d] - want_t[d]).abs() < 1e-15);
        }
        assert_eq!(rotation, vec![[1.25, 0.5, 0.0, -2.5]]);
        // t = 0.5 makes the input [1, ~0]: z = 0.45
        let BasisSample::Vector { translation, .. } = mlp.forward(0.5).unwrap() else { panic!() };
        assert!((translation[0][0] - (2.0 * 0.45 + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn non_finite_parameter_names_the_layer() {
        let shape = MlpShape { freqs: 2, width: 3, depth: 2, num_basis: 2 };
        let mut mlp = MlpBasis::new(shape, 0);
        let n = mlp.params().len();
        mlp.params_mut()[n - 1] = f64::NAN;
        assert_eq!(mlp.forward(0.1), Err(Error::NonFinite("mlp rotation head".into())));
        let mut mlp = MlpBasis::new(shape, 0);
        mlp.params_mut()[0] = f64::INFINITY;
        assert_eq!(mlp.forward(0.1), Err(Error::NonFinite("mlp hidden 0".into())));
        assert!(mlp.forward(1.5).is_err());
    }

    fn random_mlp(seed: u64) -> MlpBasis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = MlpShape {
            freqs: rng.random_range(1..4),
            width: rng.random_range(2..7),
            depth: rng.random_range(1..4),
            num_basis: rng.random_range(1..4),
        };
        let mut mlp = MlpBasis::new(shape, seed);
        for p in mlp.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        mlp
    }

    fn random_upstream(rng: &mut ChaCha8Rng, b: usize) -> BasisSample {
        BasisSample::Vector {
            translation: (0..b).map(|_| core::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(),
            rotation: (0..b).map(|_| core::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(),
        }
    }

    fn contract(sample: &BasisSample, upstream: &BasisSample) -> f64 {
        let (
            BasisSample::Vector { translation: a, rotation: r },
            BasisSample::Vector { translation: ua, rotation: ur },
        ) = (sample, upstream)
        else {
            unreachable!()
        };
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        dot(a.as_flattened(), ua.as_flattened()) + dot(r.as_flattened(), ur.as_flattened())
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..100 {
            let mlp = random_mlp(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let u = rng.random_range(0.0..1.0);
            let upstream = random_upstream(&mut rng, mlp.num_basis());
            let analytic = mlp.backward(u, &upstream).unwrap();
            let numeric = finite_difference(
                |p| {
                    let m = MlpBasis::from_params(mlp.shape(), p.to_vec()).unwrap();
                    contract(&m.forward(u).unwrap(), &upstream)
                },
                mlp.params(),
                1e-5,
            )
            .unwrap();
            for (a, n) in analytic.values().iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                assert!(rel < 1e-4, "seed {seed}: analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn backward_zero_upstream_and_additivity() {
        let mlp = random_mlp(11);
        let b = mlp.num_basis();
        assert!(mlp.backward(0.3, &BasisSample::zeros_vector(b)).unwrap().values().iter().all(|g| *g == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u1, u2) = (0.2, 0.9);
        let (up1, up2) = (random_upstream(&mut rng, b), random_upstream(&mut rng, b));
        let mut sum = mlp.backward(u1, &up1).unwrap();
        sum.accumulate(&mlp.backward(u2, &up2).unwrap()).unwrap();

        let trace = mlp.forward_batch(&[u1, u2]).unwrap();
        let flat = |s: &BasisSample| match s {
            BasisSample::Vector { translation, rotation } => {
                (translation.as_flattened().to_vec(), rotation.as_flattened().to_vec())
            }
            _ => unreachable!(),
        };
        let ((t1, r1), (t2, r2)) = (flat(&up1), flat(&up2));
        let mut batched = MlpGradient::zeros(mlp.shape());
        mlp.backward_batch(&trace, &[t1, t2].concat(), Some(&[r1, r2].concat()), &mut batched).unwrap();
        for (a, b) in sum.values().iter().zip(batched.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn forward_is_lipschitz_in_each_weight() {
        let mlp = random_mlp(21);
        let eps = 1e-7;
        let base = mlp.forward(0.4).unwrap();
        let mut worst: f64 = 0.0;
        for idx in 0..mlp.params().len() {
            let mut p = mlp.clone();
            p.params_mut()[idx] += eps;
            let moved = p.forward(0.4).unwrap();
            let (BasisSample::Vector { translation: a, .. }, BasisSample::Vector { translation: b, .. }) =
                (&base, &moved)
            else {
                unreachable!()
            };
            let delta = a.as_flattened().iter().zip(b.as_flattened()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst = worst.max(delta / eps);
        }
        assert!(worst.is_finite() && worst < 1e3, "measured constant {worst}");
    }

    proptest! {
        #[test]
        fn fourier_is_periodic(j in 1usize..40, t in 0.0..1.0f64, period in 0.1..10.0f64) {
            let a = fourier_eval(j, t * period, period).unwrap();
            let b = fourier_eval(j, t * period + period, period).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
