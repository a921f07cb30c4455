//! Elementwise, matrix, reduction and concatenation primitives.

use super::tape::{Operation, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug)]
struct Add;

impl Operation for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(needs.iter().map(|&n| n.then(|| grad.clone())).collect())
    }
}

#[derive(Debug)]
struct Mul;

impl Operation for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let g = grad.data();
        let da = needs[0].then(|| zip_map(grad, inputs[1], |g, b| g * b));
        let db = needs[1].then(|| {
            let a = inputs[0].data();
            let data = g.iter().zip(a).map(|(g, a)| g * a).collect();
            Tensor::from_parts_unchecked(grad.shape().to_vec(), data)
        });
        Ok(vec![da, db])
    }
}

#[derive(Debug)]
struct Scale(f64);

impl Operation for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(map(grad, |g| g * self.0))])
    }
}

#[derive(Debug)]
struct AddScalar;

impl Operation for AddScalar {
    fn name(&self) -> &'static str {
        "add_scalar"
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(grad.clone())])
    }
}

#[derive(Debug)]
struct Relu;

impl Operation for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(zip_map(grad, inputs[0], |g, x| if x > 0.0 { g } else { 0.0 }))])
    }
}

#[derive(Debug)]
struct Sigmoid;

impl Operation for Sigmoid {
    fn name(&self) -> &'static str {
        "sigmoid"
    }

    fn backward(&self, _: &[&Tensor], output: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(zip_map(grad, output, |g, s| g * s * (1.0 - s)))])
    }
}

/// Logistic function kept strictly inside (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug)]
struct MatMul {
    m: usize,
    k: usize,
    n: usize,
}

impl Operation for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let (a, b, g) = (inputs[0].data(), inputs[1].data(), grad.data());
        // dA = dC · Bᵀ
        let da = needs[0].then(|| {
            let mut da = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let brow = &b[p * n..(p + 1) * n];
                    let grow = &g[i * n..(i + 1) * n];
                    da[i * k + p] = dot(grow, brow);
                }
            }
            Tensor::from_parts_unchecked(vec![m, k], da)
        });
        // dB = Aᵀ · dC
        let db = needs[1].then(|| {
            let mut db = vec![0.0; k * n];
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    axpy(a[i * k + p], grow, &mut db[p * n..(p + 1) * n]);
                }
            }
            Tensor::from_parts_unchecked(vec![k, n], db)
        });
        Ok(vec![da, db])
    }
}

#[derive(Debug)]
struct Reduce {
    kind: Reduction,
    input_shape: Vec<usize>,
    axes: Vec<usize>,
}

impl Operation for Reduce {
    fn name(&self) -> &'static str {
        match self.kind {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let shape = &self.input_shape;
        let count: usize = self.axes.iter().map(|&a| shape[a]).product();
        let factor = match self.kind {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / count as f64,
        };
        let n: usize = shape.iter().product();
        let g = grad.data();
        let data = (0..n)
            .map(|flat| g[reduced_index(shape, &self.axes, flat)] * factor)
            .collect();
        Ok(vec![Some(Tensor::from_parts_unchecked(shape.clone(), data))])
    }
}

#[derive(Debug)]
struct Concat {
    axis: usize,
}

impl Operation for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (outer, inner) = outer_inner(output.shape(), self.axis);
        let total = output.shape()[self.axis];
        let g = grad.data();
        let mut offset = 0;
        let mut out = Vec::with_capacity(inputs.len());
        for (part, &need) in inputs.iter().zip(needs) {
            let width = part.shape()[self.axis];
            if need {
                let mut data = Vec::with_capacity(part.len());
                for o in 0..outer {
                    let start = (o * total + offset) * inner;
                    data.extend_from_slice(&g[start..start + width * inner]);
                }
                out.push(Some(Tensor::from_parts_unchecked(part.shape().to_vec(), data)));
            } else {
                out.push(None);
            }
            offset += width;
        }
        Ok(out)
    }
}

impl Tape {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.record(Box::new(Add), &[a, b], out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.record(Box::new(Mul), &[a, b], out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let out = map(self.value(a), |x| x * c);
        self.record(Box::new(Scale(c)), &[a], out)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let out = map(self.value(a), |x| x + c);
        self.record(Box::new(AddScalar), &[a], out)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = map(self.value(a), |x| x.max(0.0));
        self.record(Box::new(Relu), &[a], out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = map(self.value(a), sigmoid);
        self.record(Box::new(Sigmoid), &[a], out)
    }

    /// `[m, k] · [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let out = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::from_parts_unchecked(vec![m, n], out);
        self.record(Box::new(MatMul { m, k, n }), &[a, b], out)
    }

    /// Reduces over `axes`, removing them from the shape. Reducing every
    /// axis leaves shape `[1]`.
    pub fn reduce(&mut self, kind: Reduction, a: Var, axes: &[usize]) -> Result<Var> {
        self.check(a)?;
        let shape = self.shape(a).to_vec();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if let Some(&bad) = axes.iter().find(|&&ax| ax >= shape.len()) {
            return Err(Error::InvalidAxis { axis: bad, rank: shape.len() });
        }
        if axes.is_empty() {
            return Err(Error::invalid("reduce needs at least one axis"));
        }
        let mut out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut acc = vec![0.0; out_shape.iter().product()];
        for (flat, &v) in self.value(a).data().iter().enumerate() {
            acc[reduced_index(&shape, &axes, flat)] += v;
        }
        if kind == Reduction::Mean {
            let count: usize = axes.iter().map(|&ax| shape[ax]).product();
            let inv = count as f64;
            for v in &mut acc {
                *v /= inv;
            }
        }
        let out = Tensor::from_parts_unchecked(out_shape, acc);
        self.record(Box::new(Reduce { kind, input_shape: shape, axes }), &[a], out)
    }

    pub fn sum(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(Reduction::Sum, a, axes)
    }

    pub fn mean(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(Reduction::Mean, a, axes)
    }

    /// Sum of every element, shape `[1]`.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(a).len()).collect();
        self.sum(a, &axes)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        self.check(first)?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidAxis { axis, rank: base.len() });
        }
        let mut total = 0;
        for &p in parts {
            self.check(p)?;
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: base.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, inner) = outer_inner(&out_shape, axis);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let width = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * width..(o + 1) * width]);
            }
        }
        let out = Tensor::from_parts_unchecked(out_shape, data);
        self.record(Box::new(Concat { axis }), parts, out)
    }
}

/// Product of dims before and after `axis`.
fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (shape[..axis].iter().product(), shape[axis + 1..].iter().product())
}

/// Flat index into the reduced output for flat input index `flat`.
fn reduced_index(shape: &[usize], axes: &[usize], flat: usize) -> usize {
    let mut rem = flat;
    let mut idx = [0usize; 3];
    for d in (0..shape.len()).rev() {
        idx[d] = rem % shape[d];
        rem /= shape[d];
    }
    let mut out = 0;
    for d in 0..shape.len() {
        if !axes.contains(&d) {
            out = out * shape[d] + idx[d];
        }
    }
    out
}

pub(crate) fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts_unchecked(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
}

pub(crate) fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts_unchecked(a.shape().to_vec(), data)
}

#[inline(always)]
fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    // independent lanes let the compiler vectorize
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline(always)]
fn axpy_lanes(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// Wider registers only; no FMA, so results match the baseline build bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn dot_avx(a: &[f64], b: &[f64]) -> f64 {
    dot_lanes(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn axpy_avx(alpha: f64, x: &[f64], y: &mut [f64]) {
    axpy_lanes(alpha, x, y)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the CPU supports AVX, checked above.
        return unsafe { dot_avx(a, b) };
    }
    dot_lanes(a, b)
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the CPU supports AVX, checked above.
        return unsafe { axpy_avx(alpha, x, y) };
    }
    axpy_lanes(alpha, x, y)
}

pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], crow);
        }
    }
    c
}
