//! Builders compiling a [`NetworkSpec`] into a [`ConstraintGraph`], and the
//! exact variable mapping between the two residual-network forms.

use crate::activation::ActivationKind;
use crate::error::{LpError, Result};
use crate::graph::{ConstraintGraph, ConstraintNode, LossTerm, NodeForm, NodeId, VarId, VarInfo, VarRole};
use crate::linalg::Vector;
use crate::loss::LossKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    Mlp,
    Rnn,
    /// Identity-skip residual chain: x_l = x_{l-1} + sigma(W_{l-1} x_{l-1}).
    ResNetDirect,
    /// Residual chain after the change of variables xt_l = x_l - x_{l-1};
    /// layer l's pre-activation consumes the sum of all lower tilde states.
    ResNetTilde,
}

impl ArchKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mlp" => Ok(ArchKind::Mlp),
            "rnn" => Ok(ArchKind::Rnn),
            "resnet" => Ok(ArchKind::ResNetDirect),
            "resnet_tilde" => Ok(ArchKind::ResNetTilde),
            other => Err(LpError::InvalidSpec(format!(
                "unknown architecture '{other}' (expected mlp, rnn, resnet or resnet_tilde)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArchKind::Mlp => "mlp",
            ArchKind::Rnn => "rnn",
            ArchKind::ResNetDirect => "resnet",
            ArchKind::ResNetTilde => "resnet_tilde",
        }
    }
}

/// Where the loss attaches on recurrent graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Supervision {
    /// Supervise the top state at the final time step only (default).
    FinalStep,
    /// Supervise the top state at every time step with the same target.
    AllSteps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: ArchKind,
    /// Layer widths d_0..d_H followed by the output width (length H + 2).
    pub widths: Vec<usize>,
    pub activation: ActivationKind,
    pub loss: LossKind,
    /// Sequence length T; must be 1 unless `arch` is `Rnn`.
    pub seq_len: usize,
    /// Fold biases in as an always-1 component appended to every weight-matrix
    /// feed vector.
    pub bias: bool,
    pub supervision: Supervision,
}

impl NetworkSpec {
    pub fn new(arch: ArchKind, widths: Vec<usize>, activation: ActivationKind, loss: LossKind) -> Self {
        NetworkSpec {
            arch,
            widths,
            activation,
            loss,
            seq_len: 1,
            bias: false,
            supervision: Supervision::FinalStep,
        }
    }

    /// Number of hidden constraints per time step.
    pub fn hidden_layers(&self) -> usize {
        self.widths.len().saturating_sub(2)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    /// Shape of weight matrix `l` (0..=H); the trailing bias column is included
    /// when `bias` is set.
    pub fn weight_shape(&self, l: usize) -> (usize, usize) {
        let extra = usize::from(self.bias);
        (self.widths[l + 1], self.widths[l] + extra)
    }

    /// Shape of the recurrent matrix feeding layer `l + 1` from its own
    /// previous-time state.
    pub fn recurrent_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l + 1], self.widths[l + 1])
    }

    /// Number of weight matrices (W_0..W_H).
    pub fn num_weights(&self) -> usize {
        self.hidden_layers() + 1
    }

    pub fn num_recurrent_weights(&self) -> usize {
        if self.arch == ArchKind::Rnn {
            self.hidden_layers()
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_layers();
        if h < 1 {
            return Err(LpError::InvalidSpec(format!(
                "need at least one hidden layer: widths must list d_0..d_H plus the output width, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(LpError::InvalidSpec("zero-width layer".into()));
        }
        match self.arch {
            ArchKind::Rnn => {
                if self.seq_len < 1 {
                    return Err(LpError::InvalidSpec("rnn requires seq_len >= 1".into()));
                }
            }
            _ => {
                if self.seq_len != 1 {
                    return Err(LpError::InvalidSpec(format!(
                        "seq_len {} is only meaningful for rnn",
                        self.seq_len
                    )));
                }
            }
        }
        if matches!(self.arch, ArchKind::ResNetDirect | ArchKind::ResNetTilde) {
            // The identity skip of the first unit adds the input itself, so the
            // input width has to match the hidden widths as well.
            let d = self.widths[1];
            if self.widths[..=h].iter().any(|&w| w != d) {
                return Err(LpError::InvalidSpec(format!(
                    "residual forms need equal widths d_0..d_H, got {:?}",
                    &self.widths[..=h]
                )));
            }
        }
        Ok(())
    }
}

/// Compile a network spec into its constraint graph.
pub fn build_graph(spec: &NetworkSpec) -> Result<ConstraintGraph> {
    spec.validate()?;
    match spec.arch {
        ArchKind::Mlp => build_chain(spec, NodeForm::Feedforward),
        ArchKind::ResNetDirect => build_chain(spec, NodeForm::ResidualDirect),
        ArchKind::ResNetTilde => build_tilde(spec),
        ArchKind::Rnn => build_rnn(spec),
    }
}

fn build_chain(spec: &NetworkSpec, form: NodeForm) -> Result<ConstraintGraph> {
    let h = spec.hidden_layers();
    let mut vars = Vec::with_capacity(h + 1);
    vars.push(VarInfo {
        role: VarRole::Input,
        layer: 0,
        time: 0,
        width: spec.input_width(),
    });
    for l in 1..=h {
        vars.push(VarInfo {
            role: VarRole::State,
            layer: l,
            time: 0,
            width: spec.layer_width(l),
        });
    }
    let nodes = (1..=h)
        .map(|l| ConstraintNode {
            id: NodeId((l - 1) as u32),
            form,
            output: VarId(l as u32),
            feed_inputs: vec![VarId((l - 1) as u32)],
            recurrent_input: None,
            skip_input: (form == NodeForm::ResidualDirect).then(|| VarId((l - 1) as u32)),
            weight: l - 1,
            recurrent_weight: None,
            layer: l,
            time: 0,
        })
        .collect();
    let loss_terms = vec![LossTerm {
        summands: vec![VarId(h as u32)],
    }];
    ConstraintGraph::new(spec.clone(), vars, nodes, loss_terms, h)
}

fn build_tilde(spec: &NetworkSpec) -> Result<ConstraintGraph> {
    let h = spec.hidden_layers();
    let mut vars = Vec::with_capacity(h + 1);
    // xt_0 is the input itself, not a variable of the learning problem.
    vars.push(VarInfo {
        role: VarRole::Input,
        layer: 0,
        time: 0,
        width: spec.input_width(),
    });
    for l in 1..=h {
        vars.push(VarInfo {
            role: VarRole::TildeState,
            layer: l,
            time: 0,
            width: spec.layer_width(l),
        });
    }
    let nodes = (1..=h)
        .map(|l| ConstraintNode {
            id: NodeId((l - 1) as u32),
            form: NodeForm::ResidualTilde,
            output: VarId(l as u32),
            feed_inputs: (0..l).map(|j| VarId(j as u32)).collect(),
            recurrent_input: None,
            skip_input: None,
            weight: l - 1,
            recurrent_weight: None,
            layer: l,
            time: 0,
        })
        .collect();
    // The loss consumes the full prefix sum, input included.
    let loss_terms = vec![LossTerm {
        summands: (0..=h).map(|j| VarId(j as u32)).collect(),
    }];
    ConstraintGraph::new(spec.clone(), vars, nodes, loss_terms, h)
}

#[allow(clippy::needless_range_loop)]
fn build_rnn(spec: &NetworkSpec) -> Result<ConstraintGraph> {
    let h = spec.hidden_layers();
    let t_max = spec.seq_len;
    let mut vars = Vec::new();
    let mut var_at = vec![vec![VarId(0); t_max + 1]; h + 1];
    // Inputs x^t_0 for every time step.
    for t in 1..=t_max {
        var_at[0][t] = VarId(vars.len() as u32);
        vars.push(VarInfo {
            role: VarRole::Input,
            layer: 0,
            time: t,
            width: spec.input_width(),
        });
    }
    // Constant zero initial states x^0_l.
    for l in 1..=h {
        var_at[l][0] = VarId(vars.len() as u32);
        vars.push(VarInfo {
            role: VarRole::ZeroState,
            layer: l,
            time: 0,
            width: spec.layer_width(l),
        });
    }
    for t in 1..=t_max {
        for l in 1..=h {
            var_at[l][t] = VarId(vars.len() as u32);
            vars.push(VarInfo {
                role: VarRole::State,
                layer: l,
                time: t,
                width: spec.layer_width(l),
            });
        }
    }
    let mut nodes = Vec::with_capacity(h * t_max);
    for t in 1..=t_max {
        for l in 1..=h {
            nodes.push(ConstraintNode {
                id: NodeId(nodes.len() as u32),
                form: NodeForm::Recurrent,
                output: var_at[l][t],
                feed_inputs: vec![var_at[l - 1][t]],
                recurrent_input: Some(var_at[l][t - 1]),
                skip_input: None,
                weight: l - 1,
                recurrent_weight: Some(l - 1),
                layer: l,
                time: t,
            });
        }
    }
    let loss_terms = match spec.supervision {
        Supervision::FinalStep => vec![LossTerm {
            summands: vec![var_at[h][t_max]],
        }],
        Supervision::AllSteps => (1..=t_max)
            .map(|t| LossTerm {
                summands: vec![var_at[h][t]],
            })
            .collect(),
    };
    ConstraintGraph::new(spec.clone(), vars, nodes, loss_terms, h)
}

/// Map per-layer states to tilde states: xt_l = x_l - x_{l-1}, with the input
/// playing the role of x_0 (and xt_0).
pub fn tilde_map(input: &Vector, states: &[Vector]) -> Result<Vec<Vector>> {
    let mut out = Vec::with_capacity(states.len());
    let mut prev = input;
    for x in states {
        out.push(x.sub(prev)?);
        prev = x;
    }
    Ok(out)
}

/// Inverse of [`tilde_map`]: prefix sums x_l = input + xt_1 + ... + xt_l.
pub fn tilde_inverse(input: &Vector, tildes: &[Vector]) -> Result<Vec<Vector>> {
    let mut out = Vec::with_capacity(tildes.len());
    let mut acc = input.clone();
    for xt in tildes {
        acc.add_assign(xt)?;
        out.push(acc.clone());
    }
    Ok(out)
}
