//! The four ablation models: hand-crafted features or a temporal CNN as
//! node encoder, followed by either direct decoding or two GATv2 layers
//! with mean readout, and four per-category regression heads.

mod features;
mod layers;

use std::fmt;
use std::str::FromStr;

use bridgeflow_tensor::{ParamSet, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ModelGraph, Validate, WindowSample, NUM_CATEGORIES};

pub use features::{fe_encode, series_stats, FeatureNorm, N_STATS, STAT_NAMES};
pub use layers::{
    cnn_encode, decode_heads, gatv2_layer, linear, readout_mean, BatchedGraph, GatLayerVars, GatOutput, HeadVars,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Features, flattened across nodes, into an MLP.
    FeMlp,
    /// Features as node inputs to GATv2.
    FeGnn,
    /// CNN node encoder, mean over nodes.
    Cnn,
    /// CNN node encoder into GATv2.
    CnnGnn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::FeMlp, Variant::FeGnn, Variant::Cnn, Variant::CnnGnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::FeMlp => "fe_mlp",
            Variant::FeGnn => "fe_gnn",
            Variant::Cnn => "cnn",
            Variant::CnnGnn => "cnn_gnn",
        }
    }

    pub fn uses_features(self) -> bool {
        matches!(self, Variant::FeMlp | Variant::FeGnn)
    }

    pub fn uses_graph(self) -> bool {
        matches!(self, Variant::FeGnn | Variant::CnnGnn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `fe_mlp`, `FE+MLP`, `fe-gat` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase()
            .replace("gatv2", "gnn")
            .replace("gat", "gnn");
        match key.as_str() {
            "femlp" => Ok(Variant::FeMlp),
            "fegnn" => Ok(Variant::FeGnn),
            "cnn" => Ok(Variant::Cnn),
            "cnngnn" => Ok(Variant::CnnGnn),
            _ => Err(Error::UnknownVariant(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            filters: vec![16, 32, 64, 128, 256, 1280],
            kernel: 3,
            stride: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatConfig {
    pub heads: usize,
    pub layers: usize,
    pub head_dim: usize,
    pub negative_slope: f64,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            heads: 8,
            layers: 2,
            head_dim: 128,
            negative_slope: 0.2,
        }
    }
}

impl GatConfig {
    pub fn f_out(&self) -> usize {
        self.heads * self.head_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub hidden: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { hidden: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    /// Hidden widths; the output layer has one unit per category.
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub n_channels: usize,
    pub graph: ModelGraph,
    pub cnn: CnnConfig,
    pub gat: GatConfig,
    pub head: HeadConfig,
    pub mlp: MlpConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FeGnn,
            n_channels: 1,
            graph: ModelGraph::girder_grid(),
            cnn: CnnConfig::default(),
            gat: GatConfig::default(),
            head: HeadConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.graph.violations().first() {
            return Err(Error::config("model.graph", v.to_string()));
        }
        if self.n_channels == 0 {
            return Err(Error::config("model.n_channels", "must be >= 1"));
        }
        let f = &self.cnn.filters;
        if f.is_empty() || f.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("model.cnn.filters", "channel counts must be strictly increasing"));
        }
        if self.cnn.kernel % 2 == 0 || self.cnn.stride == 0 {
            return Err(Error::config("model.cnn.kernel", "kernel must be odd and stride >= 1"));
        }
        if self.gat.heads == 0 || self.gat.head_dim == 0 || self.gat.layers == 0 {
            return Err(Error::config("model.gat", "heads, head_dim and layers must be >= 1"));
        }
        if self.head.hidden == 0 {
            return Err(Error::config("model.head.hidden", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.mlp.dropout) {
            return Err(Error::config("model.mlp.dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Width of one node's encoding.
    pub fn node_width(&self) -> usize {
        if self.variant.uses_features() {
            N_STATS * self.n_channels
        } else {
            *self.cnn.filters.last().expect("validated")
        }
    }

    /// Width of the graph-level vector fed to the heads.
    pub fn readout_width(&self) -> usize {
        if self.variant.uses_graph() {
            self.gat.f_out()
        } else {
            self.node_width()
        }
    }
}

/// Forward-pass mode; training enables dropout.
pub enum Pass<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

fn glorot<R: Rng>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    Tensor::uniform(shape, (6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
}

/// A model variant with its parameters and, for feature variants, the
/// input standardization fixed from training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub feature_norm: Option<FeatureNorm>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let c = &config;
        match c.variant {
            Variant::FeMlp => {
                let mut widths = vec![c.n_nodes() * c.node_width()];
                widths.extend(&c.mlp.hidden);
                widths.push(NUM_CATEGORIES);
                for (i, w) in widths.windows(2).enumerate() {
                    p.push(format!("mlp.{i}.w"), glorot(vec![w[0], w[1]], w[0], w[1], &mut rng));
                    p.push(format!("mlp.{i}.b"), Tensor::zeros(vec![w[1]]));
                }
            }
            Variant::Cnn | Variant::CnnGnn | Variant::FeGnn => {
                if !c.variant.uses_features() {
                    let mut c_in = c.n_channels;
                    for (i, &c_out) in c.cnn.filters.iter().enumerate() {
                        let k = c.cnn.kernel;
                        p.push(
                            format!("cnn.{i}.w"),
                            glorot(vec![c_out, c_in, k], c_in * k, c_out * k, &mut rng),
                        );
                        p.push(format!("cnn.{i}.b"), Tensor::zeros(vec![c_out]));
                        c_in = c_out;
                    }
                }
                if c.variant.uses_graph() {
                    let (h, d) = (c.gat.heads, c.gat.head_dim);
                    let mut f_in = c.node_width();
                    for l in 0..c.gat.layers {
                        for name in ["w_l", "w_r", "u"] {
                            p.push(format!("gat.{l}.{name}"), glorot(vec![f_in, h * d], f_in, h * d, &mut rng));
                        }
                        p.push(format!("gat.{l}.att"), glorot(vec![h, d], d, 1, &mut rng));
                        p.push(format!("gat.{l}.bias"), Tensor::zeros(vec![h * d]));
                        f_in = h * d;
                    }
                }
                let (f, hid) = (c.readout_width(), c.head.hidden);
                for k in 0..NUM_CATEGORIES {
                    p.push(format!("head.{k}.w1"), glorot(vec![f, hid], f, hid, &mut rng));
                    p.push(format!("head.{k}.b1"), Tensor::zeros(vec![hid]));
                    p.push(format!("head.{k}.w2"), glorot(vec![hid], hid, 1, &mut rng));
                    p.push(format!("head.{k}.b2"), Tensor::zeros(vec![1]));
                }
            }
        }
        let feature_norm = c.variant.uses_features().then(|| FeatureNorm::identity(c.node_width()));
        Ok(Self {
            config,
            params: p,
            feature_norm,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    fn slot(&self, name: &str) -> Result<usize> {
        self.params
            .find(name)
            .ok_or_else(|| Error::Invalid(format!("model has no parameter {name:?}")))
    }

    /// Unnormalized features `[B·N, 8·C]` of a batch.
    pub fn raw_features(&self, batch: &[&WindowSample]) -> Result<Tensor> {
        let parts = batch.iter().map(|s| fe_encode(s)).collect::<Result<Vec<_>>>()?;
        let n = self.config.n_nodes();
        let f = self.config.node_width();
        let data = parts.into_iter().flat_map(Tensor::into_data).collect();
        Ok(Tensor::new(vec![batch.len() * n, f], data)?)
    }

    /// Fix the feature standardization from training windows.
    pub fn fit_feature_norm(&mut self, samples: &[&WindowSample]) -> Result<()> {
        if self.config.variant.uses_features() {
            self.feature_norm = Some(FeatureNorm::fit(&self.raw_features(samples)?));
        }
        Ok(())
    }

    /// Network input for a batch: standardized features `[B·N, 8·C]` or raw
    /// windows `[B·N, C, T]`.
    pub fn prepare(&self, batch: &[&WindowSample]) -> Result<Tensor> {
        let (n, c) = (self.config.n_nodes(), self.config.n_channels);
        for s in batch {
            if s.n_nodes() != n || s.n_channels() != c {
                return Err(Error::GraphNodeMismatch {
                    graph: n,
                    features: s.n_nodes(),
                });
            }
        }
        if self.config.variant.uses_features() {
            let mut f = self.raw_features(batch)?;
            if let Some(norm) = &self.feature_norm {
                norm.apply(&mut f)?;
            }
            Ok(f)
        } else {
            let t = batch.first().map(|s| s.n_steps()).unwrap_or(0);
            let mut data = Vec::with_capacity(batch.len() * n * c * t);
            for s in batch {
                if s.n_steps() != t {
                    return Err(Error::ShapeMismatch("windows of different lengths in one batch".into()));
                }
                data.extend_from_slice(s.tensor.data());
            }
            Ok(Tensor::new(vec![batch.len() * n, c, t], data)?)
        }
    }

    /// Node encodings `[B·N, F]` for a prepared input.
    pub fn encode<'t>(&self, vars: &[Var<'t>], input: Var<'t>) -> Result<Var<'t>> {
        if self.config.variant.uses_features() {
            return Ok(input);
        }
        let convs = (0..self.config.cnn.filters.len())
            .map(|i| Ok((vars[self.slot(&format!("cnn.{i}.w"))?], vars[self.slot(&format!("cnn.{i}.b"))?])))
            .collect::<Result<Vec<_>>>()?;
        cnn_encode(input, &convs, self.config.cnn.stride)
    }

    pub fn gat_layer_vars<'t>(&self, vars: &[Var<'t>], l: usize) -> Result<GatLayerVars<'t>> {
        let v = |n: &str| -> Result<Var<'t>> { Ok(vars[self.slot(&format!("gat.{l}.{n}"))?]) };
        Ok(GatLayerVars {
            w_l: v("w_l")?,
            w_r: v("w_r")?,
            u: v("u")?,
            att: v("att")?,
            bias: v("bias")?,
        })
    }

    fn head_vars<'t>(&self, vars: &[Var<'t>]) -> Result<Vec<HeadVars<'t>>> {
        (0..NUM_CATEGORIES)
            .map(|k| {
                let v = |n: &str| -> Result<Var<'t>> { Ok(vars[self.slot(&format!("head.{k}.{n}"))?]) };
                Ok(HeadVars {
                    w1: v("w1")?,
                    b1: v("b1")?,
                    w2: v("w2")?,
                    b2: v("b2")?,
                })
            })
            .collect()
    }

    /// Predictions `[B, 4]` for a prepared input holding `n_graphs` windows.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        vars: &[Var<'t>],
        input: &Tensor,
        n_graphs: usize,
        pass: Pass<'_>,
    ) -> Result<Var<'t>> {
        let n = self.config.n_nodes();
        let x = tape.constant(input.clone());
        if input.shape()[0] != n * n_graphs {
            return Err(Error::GraphNodeMismatch {
                graph: n * n_graphs,
                features: input.shape()[0],
            });
        }
        match self.config.variant {
            Variant::FeMlp => {
                let layers = self.config.mlp.hidden.len() + 1;
                let mut h = x.reshape(&[n_graphs, n * self.config.node_width()])?;
                let mut rng = match pass {
                    Pass::Train(r) => Some(r),
                    Pass::Eval => None,
                };
                for i in 0..layers {
                    h = linear(h, vars[self.slot(&format!("mlp.{i}.w"))?], vars[self.slot(&format!("mlp.{i}.b"))?])?;
                    if i + 1 < layers {
                        h = h.silu()?;
                        let p = self.config.mlp.dropout;
                        if let (Some(r), true) = (rng.as_deref_mut(), p > 0.0) {
                            let keep = 1.0 / (1.0 - p);
                            let mask = Tensor::from_fn(h.shape(), |_| if r.gen::<f64>() < p { 0.0 } else { keep });
                            h = h.mul(tape.constant(mask))?;
                        }
                    }
                }
                Ok(h)
            }
            variant => {
                let mut h = self.encode(vars, x)?;
                if variant.uses_graph() {
                    let graph = BatchedGraph::new(&self.config.graph, n_graphs);
                    let layers = self.config.gat.layers;
                    for l in 0..layers {
                        let p = self.gat_layer_vars(vars, l)?;
                        h = gatv2_layer(h, &graph, &p, self.config.gat.negative_slope, l + 1 < layers)?.features;
                    }
                }
                let g = readout_mean(h, n)?;
                decode_heads(g, &self.head_vars(vars)?)
            }
        }
    }

    /// Evaluation-mode predictions without recording gradients for the
    /// parameters. Rows follow `batch` order; values are not clamped.
    pub fn predict(&self, batch: &[&WindowSample]) -> Result<Tensor> {
        let input = self.prepare(batch)?;
        let tape = Tape::new();
        let vars = self.params.bind_frozen(&tape);
        let y = self.forward(&tape, &vars, &input, batch.len(), Pass::Eval)?;
        let out = y.value().clone();
        Ok(out)
    }

    /// Predictions in chunks of `chunk` windows.
    pub fn predict_all(&self, samples: &[WindowSample], chunk: usize) -> Result<Vec<[f64; NUM_CATEGORIES]>> {
        let mut out = Vec::with_capacity(samples.len());
        for part in samples.chunks(chunk.max(1)) {
            let refs: Vec<&WindowSample> = part.iter().collect();
            let y = self.predict(&refs)?;
            for i in 0..part.len() {
                let r = y.row(i);
                out.push([r[0], r[1], r[2], r[3]]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_spellings() {
        assert_eq!("FE+MLP".parse::<Variant>().unwrap(), Variant::FeMlp);
        assert_eq!("fe+gatv2".parse::<Variant>().unwrap(), Variant::FeGnn);
        assert_eq!("cnn_gnn".parse::<Variant>().unwrap(), Variant::CnnGnn);
        assert!(matches!("rnn".parse::<Variant>(), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn mlp_parameter_count() {
        let m = Model::new(ModelConfig::with_variant(Variant::FeMlp), 0).unwrap();
        assert_eq!(m.param_count(), 64 * 128 + 128 + 128 * 128 + 128 + 128 * 4 + 4);
    }

    #[test]
    fn readout_widths() {
        assert_eq!(ModelConfig::with_variant(Variant::CnnGnn).readout_width(), 1024);
        assert_eq!(ModelConfig::with_variant(Variant::Cnn).readout_width(), 1280);
        assert_eq!(ModelConfig::with_variant(Variant::FeGnn).node_width(), 8);
    }
}
