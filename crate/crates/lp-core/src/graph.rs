//! Architecture-agnostic constraint graph.
//!
//! Each node ties one state variable to a function of its neighbor variables
//! and a weight matrix: the residual argument of node `n` is
//!
//! ```text
//! a_n = x_out - skip - sigma(W * feed [+ U * recurrent])
//! ```
//!
//! where `feed` is the sum of the node's feed inputs (a single variable for
//! feedforward and recurrent nodes, the sum of all lower tilde states for the
//! tilde residual form). The constraint is `G(a_n) = 0` elementwise.

use crate::architectures::NetworkSpec;
use crate::error::{LpError, Result};

/// Index of a state variable in the graph's variable table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) u32);

/// Index of a constraint node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) u32);

impl VarId {
    /// Ids are only meaningful for the graph that produced them.
    pub fn new(index: usize) -> Self {
        VarId(index as u32)
    }

    pub fn index(&self) -> usize {
        self.0 as usize
    }
}

impl NodeId {
    /// Ids are only meaningful for the graph that produced them.
    pub fn new(index: usize) -> Self {
        NodeId(index as u32)
    }

    pub fn index(&self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarRole {
    /// Per-example input datum; constant during optimization.
    Input,
    /// Zero initial state of a recurrent layer; constant.
    ZeroState,
    /// Trainable per-example state.
    State,
    /// Trainable per-example state in the tilde parameterization.
    TildeState,
}

#[derive(Clone, Debug)]
pub struct VarInfo {
    pub role: VarRole,
    /// 0 for inputs, 1..=H for states.
    pub layer: usize,
    /// 0 for non-recurrent graphs and initial states, 1..=T otherwise.
    pub time: usize,
    pub width: usize,
}

impl VarInfo {
    pub fn is_trainable(&self) -> bool {
        matches!(self.role, VarRole::State | VarRole::TildeState)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeForm {
    Feedforward,
    Recurrent,
    ResidualDirect,
    ResidualTilde,
}

/// One architectural constraint.
#[derive(Clone, Debug)]
pub struct ConstraintNode {
    pub id: NodeId,
    pub form: NodeForm,
    /// The variable this node constrains.
    pub output: VarId,
    /// Variables summed and fed through the weight matrix.
    pub feed_inputs: Vec<VarId>,
    /// Previous-time state fed through the recurrent matrix.
    pub recurrent_input: Option<VarId>,
    /// Identity skip connection (residual direct form).
    pub skip_input: Option<VarId>,
    /// Index into the weight store's `w` table.
    pub weight: usize,
    /// Index into the weight store's `u` table.
    pub recurrent_weight: Option<usize>,
    pub layer: usize,
    pub time: usize,
}

/// One loss attachment point: the network output is the top weight matrix
/// applied to the sum of the summand variables.
#[derive(Clone, Debug)]
pub struct LossTerm {
    pub summands: Vec<VarId>,
}

#[derive(Clone, Debug)]
pub struct ConstraintGraph {
    spec: NetworkSpec,
    vars: Vec<VarInfo>,
    nodes: Vec<ConstraintNode>,
    /// For each variable, the nodes that read it as an input (any role).
    consumers: Vec<Vec<NodeId>>,
    /// For each variable, the node that constrains it (None for constants).
    definer: Vec<Option<NodeId>>,
    loss_terms: Vec<LossTerm>,
    /// Index of the output weight matrix (feeds the loss, not a constraint).
    output_weight: usize,
}

impl ConstraintGraph {
    pub(crate) fn new(
        spec: NetworkSpec,
        vars: Vec<VarInfo>,
        nodes: Vec<ConstraintNode>,
        loss_terms: Vec<LossTerm>,
        output_weight: usize,
    ) -> Result<Self> {
        let mut consumers = vec![Vec::new(); vars.len()];
        let mut definer: Vec<Option<NodeId>> = vec![None; vars.len()];
        for node in &nodes {
            let out = node.output.index();
            if definer[out].is_some() {
                return Err(LpError::InvalidSpec(format!(
                    "variable {out} constrained by more than one node"
                )));
            }
            definer[out] = Some(node.id);
            if !vars[out].is_trainable() {
                return Err(LpError::InvalidSpec(format!(
                    "node output {out} is not a trainable variable"
                )));
            }
            for v in node
                .feed_inputs
                .iter()
                .chain(node.recurrent_input.iter())
                .chain(node.skip_input.iter())
            {
                consumers[v.index()].push(node.id);
            }
        }
        for (i, info) in vars.iter().enumerate() {
            if info.is_trainable() && definer[i].is_none() {
                return Err(LpError::InvalidSpec(format!(
                    "trainable variable {i} has no defining constraint"
                )));
            }
        }
        for list in &mut consumers {
            list.sort();
            list.dedup();
        }
        Ok(ConstraintGraph {
            spec,
            vars,
            nodes,
            consumers,
            definer,
            loss_terms,
            output_weight,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id.index()]
    }

    pub fn node(&self, id: NodeId) -> &ConstraintNode {
        &self.nodes[id.index()]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.vars.len() as u32).map(VarId)
    }

    pub fn trainable_var_ids(&self) -> impl Iterator<Item = VarId> + '_ {
        self.var_ids().filter(|id| self.var(*id).is_trainable())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn nodes(&self) -> &[ConstraintNode] {
        &self.nodes
    }

    /// Nodes that read the given variable as an input.
    pub fn consumers(&self, id: VarId) -> &[NodeId] {
        &self.consumers[id.index()]
    }

    /// Node whose output is the given variable, if any.
    pub fn defining_node(&self, id: VarId) -> Option<&ConstraintNode> {
        self.definer[id.index()].map(|n| self.node(n))
    }

    pub fn loss_terms(&self) -> &[LossTerm] {
        &self.loss_terms
    }

    pub fn output_weight(&self) -> usize {
        self.output_weight
    }

    /// Human-readable variable name for error reports.
    pub fn var_name(&self, id: VarId) -> String {
        let info = self.var(id);
        let base = match info.role {
            VarRole::Input => "input",
            VarRole::ZeroState => "zero_state",
            VarRole::State => "x",
            VarRole::TildeState => "x_tilde",
        };
        if info.time > 0 || matches!(info.role, VarRole::ZeroState) {
            format!("{base}[layer {}, t {}]", info.layer, info.time)
        } else {
            format!("{base}[layer {}]", info.layer)
        }
    }
}
