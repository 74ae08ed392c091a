//! Read-access tracing over a state store, used by the locality tests to
//! prove that gradient computations only touch neighbor layers (and neighbor
//! time steps on recurrent graphs).

use crate::graph::{NodeId, VarId};
use crate::linalg::Vector;
use crate::store::{StateAccess, StateStore};
use std::cell::RefCell;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    State { example: usize, var: VarId },
    Multiplier { example: usize, node: NodeId },
}

/// Wraps a [`StateStore`] and records every read. Single-threaded by design.
pub struct TracingStore<'a> {
    inner: &'a StateStore,
    reads: RefCell<Vec<Access>>,
}

impl<'a> TracingStore<'a> {
    pub fn new(inner: &'a StateStore) -> Self {
        TracingStore {
            inner,
            reads: RefCell::new(Vec::new()),
        }
    }

    /// Drain the reads recorded so far.
    pub fn take_reads(&self) -> Vec<Access> {
        self.reads.borrow_mut().drain(..).collect()
    }
}

impl StateAccess for TracingStore<'_> {
    fn state(&self, example: usize, var: VarId) -> &Vector {
        self.reads.borrow_mut().push(Access::State { example, var });
        self.inner.state(example, var)
    }

    fn multiplier(&self, example: usize, node: NodeId) -> &Vector {
        self.reads
            .borrow_mut()
            .push(Access::Multiplier { example, node });
        self.inner.multiplier(example, node)
    }
}
