use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::models::baseline::{BaselineTag, QuadraNetLayer, SwiGluLayer};
use crate::models::Parameterized;
use crate::quadenhancer::{QeLayer, ShiftSet};
use crate::rng::CounterRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    Relu,
    #[default]
    Gelu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "gelu" => Some(Activation::Gelu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply<T: Scalar>(self, tape: &Tape<T>, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Gelu => tape.gelu(x),
            Activation::Identity => Ok(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    /// `[n_0, n_1, ..., n_L]`.
    pub dims: Vec<usize>,
    pub activation: Activation,
    /// Per linear layer: attach the enhancer.
    pub enhancer: Vec<bool>,
    pub shifts: ShiftSet,
    pub seed: u64,
    /// Replace every layer by a quadratic baseline instead.
    pub baseline: Option<BaselineTag>,
    pub init_gain: f64,
}

impl MlpConfig {
    /// Enhancer on every layer, `K = {1}`, gelu.
    pub fn new(dims: Vec<usize>) -> Self {
        let layers = dims.len().saturating_sub(1);
        Self {
            dims,
            activation: Activation::default(),
            enhancer: vec![true; layers],
            shifts: ShiftSet::nearest(),
            seed: 0,
            baseline: None,
            init_gain: 1.0,
        }
    }

    pub fn plain(dims: Vec<usize>) -> Self {
        let mut cfg = Self::new(dims);
        cfg.enhancer.iter_mut().for_each(|e| *e = false);
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_shifts(mut self, shifts: ShiftSet) -> Self {
        self.shifts = shifts;
        self
    }

    /// Keeps the output projection plain.
    pub fn exempt_final(mut self) -> Self {
        if let Some(last) = self.enhancer.last_mut() {
            *last = false;
        }
        self
    }

    pub fn with_baseline(mut self, tag: BaselineTag) -> Self {
        self.baseline = Some(tag);
        self
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(Error::config(
                "an MLP needs at least an input and an output dim",
            ));
        }
        if self.dims.contains(&0) {
            return Err(Error::config(format!(
                "zero-width layer in {:?}",
                self.dims
            )));
        }
        if self.enhancer.len() != self.num_layers() {
            return Err(Error::config(format!(
                "enhancer mask has {} entries for {} layers",
                self.enhancer.len(),
                self.num_layers()
            )));
        }
        if !(self.init_gain > 0.0 && self.init_gain.is_finite()) {
            return Err(Error::config("init gain must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Qe(QeLayer<T>),
    QuadraNet(QuadraNetLayer<T>),
    SwiGlu(SwiGluLayer<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Qe(l) => Layer::Qe(l.cast()),
            Layer::QuadraNet(l) => Layer::QuadraNet(l.cast()),
            Layer::SwiGlu(l) => Layer::SwiGlu(l.cast()),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Layer::Qe(l) => l.n(),
            Layer::QuadraNet(l) => l.n(),
            Layer::SwiGlu(l) => l.n(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Layer::Qe(l) => l.d(),
            Layer::QuadraNet(l) => l.d(),
            Layer::SwiGlu(l) => l.d(),
        }
    }

    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        match self {
            Layer::Qe(l) => l.parameters(),
            Layer::QuadraNet(l) => l.parameters(),
            Layer::SwiGlu(l) => l.parameters(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        match self {
            Layer::Qe(l) => l.parameters_mut(),
            Layer::QuadraNet(l) => l.parameters_mut(),
            Layer::SwiGlu(l) => l.parameters_mut(),
        }
    }

    pub fn forward_on_tape(&self, tape: &Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        match self {
            Layer::Qe(l) => {
                let (v, _) = l.vars_from(vars)?;
                l.forward_on_tape(tape, &v, x)
            }
            Layer::QuadraNet(l) => l.forward_on_tape(tape, vars, x),
            Layer::SwiGlu(l) => l.forward_on_tape(tape, vars, x),
        }
    }
}

/// Stack of (layer, activation) pairs with no activation after the last
/// layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    activation: Activation,
}

impl<T: Scalar> Mlp<T> {
    /// Layer `i` draws its weights from stream `i` of the seed, so models
    /// that differ only in their enhancer mask share `W`.
    pub fn init(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let root = CounterRng::new(config.seed);
        let mut layers = Vec::with_capacity(config.num_layers());
        for (i, pair) in config.dims.windows(2).enumerate() {
            let (n, d) = (pair[0], pair[1]);
            let mut rng = root.split(i as u64);
            let layer = match config.baseline {
                Some(BaselineTag::QuadraNet) => Layer::QuadraNet(QuadraNetLayer::init(
                    n,
                    d,
                    true,
                    &mut rng,
                    config.init_gain,
                )?),
                Some(BaselineTag::SwiGlu) => {
                    Layer::SwiGlu(SwiGluLayer::init(n, d, &mut rng, config.init_gain)?)
                }
                None if config.enhancer[i] => {
                    let layer =
                        QeLayer::init(n, d, config.shifts.clone(), &mut rng, config.init_gain)
                            .map_err(|e| match e {
                                Error::Config(msg) => Error::Config(format!("layer {i}: {msg}")),
                                other => other,
                            })?;
                    Layer::Qe(layer)
                }
                None => Layer::Qe(QeLayer::init_linear(n, d, &mut rng, config.init_gain)?),
            };
            layers.push(layer);
        }
        Ok(Self {
            layers,
            activation: config.activation,
        })
    }

    pub fn from_layers(layers: Vec<Layer<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].d() != pair[1].n() {
                return Err(Error::dim(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].d(),
                    i + 1,
                    pair[1].n()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(Layer::cast).collect(),
            activation: self.activation,
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].d()
    }

    /// Records all parameters as trainable leaves, in [`Parameterized`]
    /// order.
    pub fn bind(&self, tape: &Tape<T>) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|(_, t)| tape.param(t.clone()))
            .collect()
    }

    pub fn forward_on_tape(&self, tape: &Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let shape = tape.shape(x)?;
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::dim(format!(
                "model expects [batch, {}], got {shape:?}",
                self.input_dim()
            )));
        }
        let mut offset = 0;
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let count = layer.parameters().len();
            let slice = vars
                .get(offset..offset + count)
                .ok_or_else(|| Error::usage("too few parameter variables for the model"))?;
            h = layer.forward_on_tape(tape, slice, h).map_err(|e| match e {
                Error::NonFinite { context, index } => Error::NonFinite {
                    context: format!("layers.{i}: {context}"),
                    index,
                },
                other => other,
            })?;
            if i < last {
                h = self.activation.apply(tape, h)?;
            }
            offset += count;
        }
        Ok(h)
    }

    /// Logits for a `[batch, n_0]` input.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let vars: Vec<Var> = self
            .parameters()
            .into_iter()
            .map(|(_, t)| tape.constant(t.clone()))
            .collect();
        let xv = tape.constant(x.clone());
        let out = self.forward_on_tape(&tape, &vars, xv)?;
        tape.value(out)
    }
}

impl<T: Scalar> Parameterized<T> for Mlp<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.parameters() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer.parameters_mut() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out
    }
}

impl<T: Scalar> Parameterized<T> for QeLayer<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        QeLayer::parameters(self)
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        QeLayer::parameters_mut(self)
    }
}
