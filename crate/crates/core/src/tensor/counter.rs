//! Thread-local multiply-accumulate instrumentation.
//!
//! Primitives report their forward cost here while a [`count`] session is
//! active on the current thread. Costs are attributed to the innermost
//! [`scope`] label, so a model can name its sub-modules.

use std::cell::RefCell;
use std::collections::BTreeMap;

/// Counted operation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    /// One MAC per multiply-add of a matrix product.
    Matmul,
    /// One MAC per multiply-add of a convolution.
    Conv,
    /// Two ops per normalized element.
    Norm,
    /// Four ops per element.
    Softmax,
    /// One op per element.
    Activation,
    /// One op per input element read by a pooling window.
    Pool,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::Matmul,
        OpKind::Conv,
        OpKind::Norm,
        OpKind::Softmax,
        OpKind::Activation,
        OpKind::Pool,
    ];

    pub fn is_linear_algebra(self) -> bool {
        matches!(self, OpKind::Matmul | OpKind::Conv)
    }
}

pub const NORM_OPS_PER_ELEMENT: u64 = 2;
pub const SOFTMAX_OPS_PER_ELEMENT: u64 = 4;
pub const ACTIVATION_OPS_PER_ELEMENT: u64 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counts {
    pub by_scope: BTreeMap<String, BTreeMap<OpKind, u64>>,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.by_scope.values().flat_map(|m| m.values()).sum()
    }

    pub fn total_of(&self, kind: OpKind) -> u64 {
        self.by_scope.values().filter_map(|m| m.get(&kind)).sum()
    }

    pub fn scope_total(&self, scope: &str) -> u64 {
        self.by_scope
            .get(scope)
            .map(|m| m.values().sum())
            .unwrap_or(0)
    }
}

#[derive(Default)]
struct Session {
    stack: Vec<String>,
    counts: Counts,
}

thread_local! {
    static SESSION: RefCell<Option<Session>> = const { RefCell::new(None) };
}

pub(crate) fn record(kind: OpKind, amount: u64) {
    SESSION.with(|s| {
        if let Some(session) = s.borrow_mut().as_mut() {
            let key = session.stack.last().cloned().unwrap_or_default();
            *session
                .counts
                .by_scope
                .entry(key)
                .or_default()
                .entry(kind)
                .or_insert(0) += amount;
        }
    });
}

pub fn is_counting() -> bool {
    SESSION.with(|s| s.borrow().is_some())
}

/// Runs `f` with counting enabled and returns what it recorded.
/// Nested sessions are not supported; an inner call replaces the outer one.
pub fn count<R>(f: impl FnOnce() -> R) -> (R, Counts) {
    SESSION.with(|s| *s.borrow_mut() = Some(Session::default()));
    let out = f();
    let counts = SESSION
        .with(|s| s.borrow_mut().take())
        .map(|s| s.counts)
        .unwrap_or_default();
    (out, counts)
}

pub struct ScopeGuard {
    active: bool,
}

impl Drop for ScopeGuard {
    fn drop(&mut self) {
        if self.active {
            SESSION.with(|s| {
                if let Some(session) = s.borrow_mut().as_mut() {
                    session.stack.pop();
                }
            });
        }
    }
}

/// Attributes costs to `name` until the guard drops. The label is used
/// verbatim (callers pass fully qualified names).
pub fn scope(name: impl FnOnce() -> String) -> ScopeGuard {
    let active = SESSION.with(|s| {
        if let Some(session) = s.borrow_mut().as_mut() {
            session.stack.push(name());
            true
        } else {
            false
        }
    });
    ScopeGuard { active }
}
