//! Elementwise, reduction, linear-algebra and layout operations.

use super::graph::{Function, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{numel, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
}

/// How a binary op lines up its operands: equal shapes, or one side is a
/// single-element tensor broadcast over the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    LeftScalar,
    RightScalar,
}

struct Binary {
    kind: BinKind,
    bcast: Bcast,
}

fn reduce_to_scalar<T: Real>(g: Tensor<T>, shape: &[usize]) -> Tensor<T> {
    Tensor::full(shape, g.sum())
}

impl<T: Real> Function<T> for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let n = grad.numel();
        let at = |t: &Tensor<T>, i: usize| if t.numel() == 1 { t.data()[0] } else { t.data()[i] };
        let mut ga = None;
        let mut gb = None;
        if needs[0] {
            let full: Vec<T> = match self.kind {
                BinKind::Add | BinKind::Sub => grad.data().to_vec(),
                BinKind::Mul => (0..n).map(|i| grad.data()[i] * at(b, i)).collect(),
            };
            let full = Tensor::new(grad.shape().to_vec(), full).unwrap();
            ga = Some(if self.bcast == Bcast::LeftScalar {
                reduce_to_scalar(full, a.shape())
            } else {
                full
            });
        }
        if needs[1] {
            let full: Vec<T> = match self.kind {
                BinKind::Add => grad.data().to_vec(),
                BinKind::Sub => grad.data().iter().map(|&x| -x).collect(),
                BinKind::Mul => (0..n).map(|i| grad.data()[i] * at(a, i)).collect(),
            };
            let full = Tensor::new(grad.shape().to_vec(), full).unwrap();
            gb = Some(if self.bcast == Bcast::RightScalar {
                reduce_to_scalar(full, b.shape())
            } else {
                full
            });
        }
        vec![ga, gb]
    }
}

#[derive(Clone, Copy, Debug)]
enum UnKind {
    Neg,
    Relu,
    Abs,
    Log,
    Exp,
    Reciprocal,
    Square,
    Sqrt,
    AddScalar,
    MulScalar(f64),
}

struct Unary(UnKind);

impl<T: Real> Function<T> for Unary {
    fn name(&self) -> &'static str {
        match self.0 {
            UnKind::Neg => "neg",
            UnKind::Relu => "relu",
            UnKind::Abs => "abs",
            UnKind::Log => "log",
            UnKind::Exp => "exp",
            UnKind::Reciprocal => "reciprocal",
            UnKind::Square => "square",
            UnKind::Sqrt => "sqrt",
            UnKind::AddScalar => "add_scalar",
            UnKind::MulScalar(_) => "mul_scalar",
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0].data();
        let y = output.data();
        let g = grad.data();
        let two = T::lit(2.0);
        let data: Vec<T> = match self.0 {
            UnKind::Neg => g.iter().map(|&v| -v).collect(),
            UnKind::Relu => g
                .iter()
                .zip(x)
                .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                .collect(),
            UnKind::Abs => g
                .iter()
                .zip(x)
                .map(|(&gv, &xv)| {
                    if xv > T::zero() {
                        gv
                    } else if xv < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                })
                .collect(),
            UnKind::Log => g.iter().zip(x).map(|(&gv, &xv)| gv / xv).collect(),
            UnKind::Exp => g.iter().zip(y).map(|(&gv, &yv)| gv * yv).collect(),
            UnKind::Reciprocal => g.iter().zip(y).map(|(&gv, &yv)| -gv * yv * yv).collect(),
            UnKind::Square => g.iter().zip(x).map(|(&gv, &xv)| gv * two * xv).collect(),
            UnKind::Sqrt => g.iter().zip(y).map(|(&gv, &yv)| gv / (two * yv)).collect(),
            UnKind::AddScalar => g.to_vec(),
            UnKind::MulScalar(c) => {
                let c = T::lit(c);
                g.iter().map(|&gv| gv * c).collect()
            }
        };
        vec![Some(Tensor::new(grad.shape().to_vec(), data).unwrap())]
    }
}

struct SumAll;

impl<T: Real> Function<T> for SumAll {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        vec![Some(Tensor::full(inputs[0].shape(), grad.item()))]
    }
}

/// `(m, k) x (k, n) -> (m, n)`
struct MatMul {
    m: usize,
    k: usize,
    n: usize,
}

/// Row-major `out[m, n] += a[m, k] * b[k, n]`.
pub(crate) fn gemm_acc<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    T::gemm(m, k, n, (a, k as isize, 1), (b, n as isize, 1), T::one(), (out, n as isize, 1));
}

/// `out[m, k] += g[m, n] * b[k, n]^T`
pub(crate) fn gemm_nt_acc<T: Real>(g: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    T::gemm(m, n, k, (g, n as isize, 1), (b, 1, n as isize), T::one(), (out, k as isize, 1));
}

/// `out[k, n] += a[m, k]^T * g[m, n]`
pub(crate) fn gemm_tn_acc<T: Real>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    T::gemm(k, m, n, (a, 1, k as isize), (g, n as isize, 1), T::one(), (out, n as isize, 1));
}

impl<T: Real> Function<T> for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let mut out = vec![None, None];
        if needs[0] {
            let mut ga = vec![T::zero(); m * k];
            gemm_nt_acc(grad.data(), inputs[1].data(), &mut ga, m, k, n);
            out[0] = Some(Tensor::new(vec![m, k], ga).unwrap());
        }
        if needs[1] {
            let mut gb = vec![T::zero(); k * n];
            gemm_tn_acc(inputs[0].data(), grad.data(), &mut gb, m, k, n);
            out[1] = Some(Tensor::new(vec![k, n], gb).unwrap());
        }
        out
    }
}

/// `x (m, k) . w (k, n) + b (n)`
struct Linear {
    m: usize,
    k: usize,
    n: usize,
}

impl<T: Real> Function<T> for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let mut out: Vec<Option<Tensor<T>>> = (0..inputs.len()).map(|_| None).collect();
        if needs[0] {
            let mut gx = vec![T::zero(); m * k];
            gemm_nt_acc(grad.data(), inputs[1].data(), &mut gx, m, k, n);
            out[0] = Some(Tensor::new(inputs[0].shape().to_vec(), gx).unwrap());
        }
        if needs[1] {
            let mut gw = vec![T::zero(); k * n];
            gemm_tn_acc(inputs[0].data(), grad.data(), &mut gw, m, k, n);
            out[1] = Some(Tensor::new(vec![k, n], gw).unwrap());
        }
        if inputs.len() > 2 && needs[2] {
            let mut gb = vec![T::zero(); n];
            for row in grad.data().chunks(n) {
                for (b, &g) in gb.iter_mut().zip(row) {
                    *b += g;
                }
            }
            out[2] = Some(Tensor::new(vec![n], gb).unwrap());
        }
        out
    }
}

/// Concatenation along `axis`; inputs viewed as `(outer, len_i * inner)`.
struct Concat {
    outer: usize,
    chunk: Vec<usize>,
}

impl<T: Real> Function<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let total: usize = self.chunk.iter().sum();
        let g = grad.data();
        let mut offset = 0;
        let mut out = Vec::with_capacity(inputs.len());
        for (i, &c) in self.chunk.iter().enumerate() {
            if needs[i] {
                let mut gi = Vec::with_capacity(self.outer * c);
                for o in 0..self.outer {
                    gi.extend_from_slice(&g[o * total + offset..o * total + offset + c]);
                }
                out.push(Some(Tensor::new(inputs[i].shape().to_vec(), gi).unwrap()));
            } else {
                out.push(None);
            }
            offset += c;
        }
        out
    }
}

/// Contiguous range `[start, start + len)` along an axis; viewed as
/// `(outer, dim * inner)`.
struct Slice {
    outer: usize,
    dim: usize,
    inner: usize,
    start: usize,
    len: usize,
}

impl<T: Real> Function<T> for Slice {
    fn name(&self) -> &'static str {
        "slice"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let mut gx = vec![T::zero(); inputs[0].numel()];
        let row_in = self.dim * self.inner;
        let row_out = self.len * self.inner;
        let g = grad.data();
        for o in 0..self.outer {
            let dst = o * row_in + self.start * self.inner;
            gx[dst..dst + row_out].copy_from_slice(&g[o * row_out..(o + 1) * row_out]);
        }
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), gx).unwrap())]
    }
}

struct Reshape;

impl<T: Real> Function<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        vec![Some(grad.clone().reshape(inputs[0].shape()).unwrap())]
    }
}

/// Index selection along an axis, viewed as `(outer, dim, inner)`.
struct Gather {
    outer: usize,
    dim: usize,
    inner: usize,
    indices: Vec<usize>,
}

impl<T: Real> Function<T> for Gather {
    fn name(&self) -> &'static str {
        "gather"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let mut gx = vec![T::zero(); inputs[0].numel()];
        let g = grad.data();
        let k = self.indices.len();
        for o in 0..self.outer {
            for (j, &idx) in self.indices.iter().enumerate() {
                let src = (o * k + j) * self.inner;
                let dst = (o * self.dim + idx) * self.inner;
                for t in 0..self.inner {
                    gx[dst + t] += g[src + t];
                }
            }
        }
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), gx).unwrap())]
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

impl<T: Real> Graph<T> {
    fn binary(&mut self, kind: BinKind, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (na, nb) = (numel(&sa), numel(&sb));
        let (bcast, out_shape) = if sa == sb {
            (Bcast::Same, sa.clone())
        } else if na == 1 {
            (Bcast::LeftScalar, sb.clone())
        } else if nb == 1 {
            (Bcast::RightScalar, sa.clone())
        } else {
            let op = match kind {
                BinKind::Add => "add",
                BinKind::Sub => "sub",
                BinKind::Mul => "mul",
            };
            return Err(Error::shape(op, format!("{:?} vs {:?}", sa, sb)));
        };
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let n = numel(&out_shape);
        let f = |x: T, y: T| match kind {
            BinKind::Add => x + y,
            BinKind::Sub => x - y,
            BinKind::Mul => x * y,
        };
        let data: Vec<T> = match bcast {
            Bcast::Same => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::LeftScalar => db.iter().map(|&y| f(da[0], y)).collect(),
            Bcast::RightScalar => da.iter().map(|&x| f(x, db[0])).collect(),
        };
        debug_assert_eq!(data.len(), n);
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, vec![a, b], Box::new(Binary { kind, bcast })))
    }

    /// Elementwise sum; one operand may be a single-element tensor.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, a, b)
    }

    fn unary(&mut self, kind: UnKind, x: Var, f: impl Fn(T) -> T) -> Var {
        let value = self.value(x).map(f);
        self.push(value, vec![x], Box::new(Unary(kind)))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(UnKind::Neg, x, |v| -v)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(UnKind::Relu, x, |v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(UnKind::Abs, x, |v| v.abs())
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(UnKind::Log, x, |v| v.ln())
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnKind::Exp, x, |v| v.exp())
    }

    pub fn reciprocal(&mut self, x: Var) -> Var {
        self.unary(UnKind::Reciprocal, x, |v| T::one() / v)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(UnKind::Square, x, |v| v * v)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(UnKind::Sqrt, x, |v| v.sqrt())
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = T::lit(c);
        self.unary(UnKind::AddScalar, x, move |v| v + c)
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        let ct = T::lit(c);
        self.unary(UnKind::MulScalar(c), x, move |v| v * ct)
    }

    /// Copy of `x` that does not propagate gradients back to `x`.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    /// Sum of all elements, as a shape-`[]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, vec![x], Box::new(SumAll))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1);
        let s = self.sum(x);
        self.mul_scalar(s, 1.0 / n as f64)
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, vec![a, b], Box::new(MatMul { m, k, n })))
    }

    /// Affine map `x . w + b` with `x: (m, k)`, `w: (k, n)`, `b: (n)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
            return Err(Error::shape("linear", format!("x {:?}, w {:?}", sx, sw)));
        }
        let (m, k, n) = (sx[0], sx[1], sw[1]);
        let mut out = vec![T::zero(); m * n];
        if let Some(b) = b {
            let sb = self.shape(b);
            if sb != [n] {
                return Err(Error::shape("linear", format!("bias {:?}, expected [{}]", sb, n)));
            }
            let bd = self.value(b).data();
            for row in out.chunks_mut(n) {
                row.copy_from_slice(bd);
            }
        }
        gemm_acc(self.value(x).data(), self.value(w).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, inputs, Box::new(Linear { m, k, n })))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", format!("axis {} for {:?}", axis, first)));
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        let mut chunk = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{:?} vs {:?} on axis {}", s, first, axis)));
            }
            out_shape[axis] += s[axis];
            chunk.push(numel(&s[axis..]));
        }
        let outer = numel(&first[..axis]);
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for (&x, &c) in xs.iter().zip(&chunk) {
                data.extend_from_slice(&self.value(x).data()[o * c..(o + 1) * c]);
            }
        }
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, xs.to_vec(), Box::new(Concat { outer, chunk })))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::shape(
                "slice",
                format!("[{}..{}) on axis {} of {:?}", start, start + len, axis, s),
            ));
        }
        let (outer, dim, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = s.clone();
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            value,
            vec![x],
            Box::new(Slice {
                outer,
                dim,
                inner,
                start,
                len,
            }),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, vec![x], Box::new(Reshape)))
    }

    /// Selects `indices` along `axis` (repeats allowed).
    pub fn gather(&mut self, x: Var, axis: usize, indices: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || indices.iter().any(|&i| i >= s[axis]) {
            return Err(Error::shape(
                "gather",
                format!("indices {:?} on axis {} of {:?}", indices, axis, s),
            ));
        }
        let (outer, dim, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let base = (o * dim + i) * inner;
                data.extend_from_slice(&src[base..base + inner]);
            }
        }
        let mut out_shape = s.clone();
        out_shape[axis] = indices.len();
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            value,
            vec![x],
            Box::new(Gather {
                outer,
                dim,
                inner,
                indices: indices.to_vec(),
            }),
        ))
    }
}
