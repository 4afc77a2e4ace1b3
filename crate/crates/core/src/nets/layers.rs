use std::rc::Rc;

use bridgeflow_tensor::{concat, Var};

use crate::error::{Error, Result};
use crate::types::ModelGraph;

/// `B` disjoint copies of a graph, node `n` of copy `b` at row `b·N + n`.
#[derive(Debug, Clone)]
pub struct BatchedGraph {
    pub nodes_per_graph: usize,
    pub n_graphs: usize,
    /// Message sources, one per edge.
    pub src: Rc<[usize]>,
    /// Message targets; attention is normalized over each target's edges.
    pub dst: Rc<[usize]>,
}

impl BatchedGraph {
    pub fn new(graph: &ModelGraph, n_graphs: usize) -> Self {
        let edges = graph.message_edges();
        let n = graph.n_nodes;
        let mut src = Vec::with_capacity(edges.len() * n_graphs);
        let mut dst = Vec::with_capacity(edges.len() * n_graphs);
        for b in 0..n_graphs {
            for &(s, t) in &edges {
                src.push(b * n + s);
                dst.push(b * n + t);
            }
        }
        Self {
            nodes_per_graph: n,
            n_graphs,
            src: src.into(),
            dst: dst.into(),
        }
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes_per_graph * self.n_graphs
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }
}

/// Parameters of one GATv2 layer bound on a tape.
///
/// `w_l` acts on the receiving node, `w_r` on the sending node (together the
/// halves of `W` applied to `[x_i ∥ x_j]`), `u` produces the messages.
#[derive(Clone, Copy)]
pub struct GatLayerVars<'t> {
    pub w_l: Var<'t>,
    pub w_r: Var<'t>,
    pub u: Var<'t>,
    /// `[heads, head_dim]`
    pub att: Var<'t>,
    /// `[heads · head_dim]`
    pub bias: Var<'t>,
}

pub struct GatOutput<'t> {
    /// `[nodes, heads · head_dim]`
    pub features: Var<'t>,
    /// `[edges, heads]`, normalized per receiving node.
    pub attention: Var<'t>,
}

/// One multi-head GATv2 layer with concatenated heads.
///
/// Score `e_ij = aᵀ LeakyReLU(W_l x_i + W_r x_j)` for each edge `j → i`,
/// softmax over the edges into `i`, output `Σ_j α_ij U x_j + bias`,
/// followed by SiLU when `activate` is set.
pub fn gatv2_layer<'t>(
    x: Var<'t>,
    graph: &BatchedGraph,
    p: &GatLayerVars<'t>,
    negative_slope: f64,
    activate: bool,
) -> Result<GatOutput<'t>> {
    let shape = x.shape();
    let m = shape[0];
    if shape.len() != 2 || m != graph.total_nodes() {
        return Err(Error::GraphNodeMismatch {
            graph: graph.total_nodes(),
            features: m,
        });
    }
    let xl = x.matmul(p.w_l)?;
    let xr = x.matmul(p.w_r)?;
    let xu = x.matmul(p.u)?;
    let scores = xl.edge_scores(xr, p.att, graph.src.clone(), graph.dst.clone(), negative_slope)?;
    let alpha = scores.softmax_segmented(graph.dst.clone(), m)?;
    let messages = xu.attend(alpha, graph.src.clone(), graph.dst.clone(), m)?;
    let mut out = messages.add(p.bias)?;
    if activate {
        out = out.silu()?;
    }
    Ok(GatOutput {
        features: out,
        attention: alpha,
    })
}

/// Graph-level mean of node features: `[B·N, F] -> [B, F]`.
pub fn readout_mean<'t>(h: Var<'t>, nodes_per_graph: usize) -> Result<Var<'t>> {
    let s = h.shape();
    if s.len() != 2 || nodes_per_graph == 0 || s[0] % nodes_per_graph != 0 {
        return Err(Error::ShapeMismatch(format!(
            "readout of {s:?} with {nodes_per_graph} nodes per graph"
        )));
    }
    Ok(h.reshape(&[s[0] / nodes_per_graph, nodes_per_graph, s[1]])?.mean_axis(1)?)
}

pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    Ok(x.matmul(w)?.add(b)?)
}

/// Shared temporal convolution stack applied to every node independently:
/// `[M, C, T] -> [M, F_last]` after a global temporal mean.
pub fn cnn_encode<'t>(x: Var<'t>, convs: &[(Var<'t>, Var<'t>)], stride: usize) -> Result<Var<'t>> {
    if x.shape().len() != 3 {
        return Err(Error::ShapeMismatch(format!("CNN input must be [M, C, T], got {:?}", x.shape())));
    }
    let mut h = x;
    for &(w, b) in convs {
        let k = w.shape()[2];
        h = h.conv1d(w, Some(b), stride, k / 2)?.silu()?;
    }
    Ok(h.mean_axis(2)?)
}

/// One independent regression head: `F -> hidden -> 1`.
#[derive(Clone, Copy)]
pub struct HeadVars<'t> {
    /// `[F, hidden]`
    pub w1: Var<'t>,
    /// `[hidden]`
    pub b1: Var<'t>,
    /// `[hidden]`
    pub w2: Var<'t>,
    /// `[1]`
    pub b2: Var<'t>,
}

/// Applies `K` heads to `[B, F]`, giving `[B, K]`. The heads share no
/// parameters; their first layers are evaluated as one wide product.
pub fn decode_heads<'t>(h: Var<'t>, heads: &[HeadVars<'t>]) -> Result<Var<'t>> {
    let k = heads.len();
    let hidden = heads[0].b1.shape()[0];
    let b = h.shape()[0];
    let w1 = concat(&heads.iter().map(|p| p.w1).collect::<Vec<_>>(), 1)?;
    let b1 = concat(&heads.iter().map(|p| p.b1).collect::<Vec<_>>(), 0)?;
    let w2 = concat(
        &heads
            .iter()
            .map(|p| p.w2.reshape(&[1, hidden]))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        0,
    )?;
    let b2 = concat(&heads.iter().map(|p| p.b2).collect::<Vec<_>>(), 0)?;
    let z = linear(h, w1, b1)?.silu()?;
    Ok(z.reshape(&[b, k, hidden])?.mul(w2)?.sum_axis(2)?.add(b2)?)
}
