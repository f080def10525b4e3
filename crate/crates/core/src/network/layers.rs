use rand::Rng;

use crate::autodiff::nn::{ConvLayer, LinearLayer};
use crate::autodiff::{Binding, Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::tensor::Real;

use super::THETA_DIM;

/// Stride-2 3x3 convolutions with ReLU, halving the resolution per stage.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub in_channels: usize,
    pub stages: Vec<ConvLayer>,
    pub channels: Vec<usize>,
}

/// Channel widths doubling towards `c0` over `n` stages (at least 8).
pub fn encoder_channels(c0: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| (c0 >> (n - 1 - i)).max(8.min(c0))).collect()
}

impl Encoder {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        c0: usize,
        stages: usize,
        rng: &mut R,
    ) -> Self {
        let channels = encoder_channels(c0, stages);
        let mut cin = in_channels;
        let stages = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let l = ConvLayer::new(store, &format!("{name}.conv{i}"), cin, c, 3, 2, 1, rng);
                cin = c;
                l
            })
            .collect();
        Self {
            in_channels,
            stages,
            channels,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, bind: &mut Binding, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(Error::shape(
                "encoder",
                format!("expected (B, {}, H, W) input, got {:?}", self.in_channels, s),
            ));
        }
        let mut h = x;
        for l in &self.stages {
            let y = l.forward(g, bind, store, h)?;
            h = g.relu(y);
        }
        Ok(h)
    }
}

/// Global average pooling plus a pyramid of 1x1 perceptrons; layer `l > 1`
/// sees its predecessor's output concatenated with the encoder features.
#[derive(Clone, Debug)]
pub struct FeatureReducer {
    pub layers: Vec<ConvLayer>,
    pub channels: Vec<usize>,
}

impl FeatureReducer {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, c0: usize, channels: &[usize], rng: &mut R) -> Self {
        let layers = channels
            .iter()
            .enumerate()
            .map(|(l, &c)| {
                let cin = if l == 0 { c0 } else { channels[l - 1] + c0 };
                ConvLayer::new(store, &format!("{name}.mlp{l}"), cin, c, 1, 1, 0, rng)
            })
            .collect();
        Self {
            layers,
            channels: channels.to_vec(),
        }
    }

    /// `(phi_g (B, C0), phi_l (B, C_L, H0, W0))`.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        bind: &mut Binding,
        store: &ParamStore<T>,
        phi0: Var,
    ) -> Result<(Var, Var)> {
        let s = g.shape(phi0).to_vec();
        let pooled = g.global_avg_pool(phi0)?;
        let phi_g = g.reshape(pooled, &[s[0], s[1]])?;
        let mut h = phi0;
        for (l, layer) in self.layers.iter().enumerate() {
            let x = if l == 0 { phi0 } else { g.concat(&[h, phi0], 1)? };
            let y = layer.forward(g, bind, store, x)?;
            h = g.relu(y);
        }
        Ok((phi_g, h))
    }
}

/// Two hidden layers and a residual output head, applied `iters` times:
/// `theta <- theta + head(features ++ theta)`.
#[derive(Clone, Debug)]
pub struct Regressor {
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
    pub head: LinearLayer,
    pub feat_dim: usize,
    pub iters: usize,
}

impl Regressor {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        feat_dim: usize,
        hidden: usize,
        iters: usize,
        head_gain: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            fc1: LinearLayer::new(store, &format!("{name}.fc1"), feat_dim + THETA_DIM, hidden, 1.0, rng),
            fc2: LinearLayer::new(store, &format!("{name}.fc2"), hidden, hidden, 1.0, rng),
            head: LinearLayer::new(store, &format!("{name}.head"), hidden, THETA_DIM, head_gain, rng),
            feat_dim,
            iters,
        }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        bind: &mut Binding,
        store: &ParamStore<T>,
        features: Var,
        theta0: Var,
    ) -> Result<Var> {
        let fs = g.shape(features).to_vec();
        if fs.len() != 2 || fs[1] != self.feat_dim {
            return Err(Error::shape("regressor", format!("features {:?}, expected width {}", fs, self.feat_dim)));
        }
        let mut theta = theta0;
        for _ in 0..self.iters {
            let x = g.concat(&[features, theta], 1)?;
            let h = self.fc1.forward(g, bind, store, x)?;
            let h = g.relu(h);
            let h = self.fc2.forward(g, bind, store, h)?;
            let h = g.relu(h);
            let delta = self.head.forward(g, bind, store, h)?;
            theta = g.add(theta, delta)?;
        }
        if !g.value(theta).is_finite() {
            return Err(Error::NonFinite("regressor output".into()));
        }
        Ok(theta)
    }
}
