//! Parameterized layers on top of the graph ops.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{Binding, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{Real, Tensor};

fn uniform<T: Real, R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

#[derive(Clone, Copy, Debug)]
pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LinearLayer {
    /// He-uniform weights scaled by `gain`, zero bias.
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let bound = gain * (6.0 / fan_in as f64).sqrt();
        let w = store.add(format!("{name}.weight"), uniform(rng, &[fan_in, fan_out], bound));
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        bind: &mut Binding,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let w = bind.var(g, store, self.w);
        let b = bind.var(g, store, self.b);
        g.linear(x, w, Some(b))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = store.add(
            format!("{name}.weight"),
            uniform(rng, &[cout, cin, kernel, kernel], bound),
        );
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Self { w, b, stride, pad }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        bind: &mut Binding,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let w = bind.var(g, store, self.w);
        let b = bind.var(g, store, self.b);
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }
}
