//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! The graph is define-by-run: every operation appends a node holding its
//! forward value and a closure that maps the upstream gradient to per-parent
//! gradients. [`Tensor::backward`] walks the reachable subgraph once, in
//! reverse creation order, and returns a [`GradStore`] keyed by leaf id.
//!
//! Everything in this crate is rank-2 at most; scalars are `[1, 1]`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
}

/// Upstream gradient in, one gradient buffer per parent out.
type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct Node {
    id: u64,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Handle to an immutable value in the differentiation graph.
#[derive(Clone)]
pub struct Tensor {
    node: Rc<Node>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.node.id)
            .field("shape", &(self.node.rows, self.node.cols))
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

#[cfg(debug_assertions)]
fn debug_scan(op: &'static str, data: &[f64]) {
    for v in data {
        debug_assert!(v.is_finite(), "non-finite value out of `{op}`: {v}");
    }
}

#[cfg(not(debug_assertions))]
fn debug_scan(_op: &'static str, _data: &[f64]) {}

// ── raw kernels ──────────────────────────────────────────────────────

fn raw_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn raw_transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

impl Tensor {
    fn make(
        op: &'static str,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        assert_eq!(rows * cols, data.len(), "{op}: shape/data length mismatch");
        debug_scan(op, &data);
        let requires_grad = backward.is_some() && parents.iter().any(|p| p.node.requires_grad);
        Tensor {
            node: Rc::new(Node {
                id: fresh_id(),
                rows,
                cols,
                data,
                parents,
                backward: if requires_grad { backward } else { None },
                requires_grad,
            }),
        }
    }

    /// Leaf that participates in gradients (a learnable parameter).
    pub fn param(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(rows * cols, data.len(), "param: shape/data length mismatch");
        debug_scan("param", &data);
        Tensor {
            node: Rc::new(Node {
                id: fresh_id(),
                rows,
                cols,
                data,
                parents: Vec::new(),
                backward: None,
                requires_grad: true,
            }),
        }
    }

    /// Leaf treated as a constant: no gradient flows into it.
    pub fn constant(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(rows * cols, data.len(), "constant: shape/data length mismatch");
        debug_scan("constant", &data);
        Tensor {
            node: Rc::new(Node {
                id: fresh_id(),
                rows,
                cols,
                data,
                parents: Vec::new(),
                backward: None,
                requires_grad: false,
            }),
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(1, 1, vec![v])
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor::constant(rows, cols, vec![0.0; rows * cols])
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn rows(&self) -> usize {
        self.node.rows
    }

    pub fn cols(&self) -> usize {
        self.node.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.node.rows, self.node.cols)
    }

    pub fn len(&self) -> usize {
        self.node.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.node.data
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor");
        self.node.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.node.data[r * self.node.cols + c]
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<(), TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::Dimension {
                op,
                detail: format!("{:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        Ok(())
    }

    // ── binary elementwise ───────────────────────────────────────────

    fn zip(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        df: impl Fn(f64, f64, f64) -> (f64, f64) + 'static,
    ) -> Result<Tensor, TensorError> {
        self.same_shape(other, op)?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        let (a, b) = (self.clone(), other.clone());
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; g.len()];
            let mut gb = vec![0.0; g.len()];
            for i in 0..g.len() {
                let (da, db) = df(a.data()[i], b.data()[i], g[i]);
                ga[i] = da;
                gb[i] = db;
            }
            vec![ga, gb]
        });
        Ok(Tensor::make(
            op,
            self.rows(),
            self.cols(),
            data,
            vec![self.clone(), other.clone()],
            Some(back),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "add", |a, b| a + b, |_, _, g| (g, g))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "sub", |a, b| a - b, |_, _, g| (g, -g))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "mul", |a, b| a * b, |a, b, g| (g * b, g * a))
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        #[cfg(debug_assertions)]
        for &b in other.data() {
            debug_assert!(b.abs() >= 1e-12, "div: unguarded denominator {b}");
        }
        self.zip(
            other,
            "div",
            |a, b| a / b,
            |a, b, g| (g / b, -g * a / (b * b)),
        )
    }

    // ── unary elementwise ────────────────────────────────────────────

    fn map(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&a| f(a)).collect();
        let a = self.clone();
        let out_data = data.clone();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let ga: Vec<f64> = g
                .iter()
                .enumerate()
                .map(|(i, &gi)| gi * df(a.data()[i], out_data[i]))
                .collect();
            vec![ga]
        });
        Tensor::make(
            op,
            self.rows(),
            self.cols(),
            data,
            vec![self.clone()],
            Some(back),
        )
    }

    pub fn relu(&self) -> Tensor {
        self.map("relu", |a| a.max(0.0), |a, _| if a > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(&self) -> Tensor {
        self.map("tanh", |a| a.tanh(), |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(
            "sigmoid",
            |a| 1.0 / (1.0 + (-a).exp()),
            |_, y| y * (1.0 - y),
        )
    }

    pub fn exp(&self) -> Tensor {
        self.map("exp", |a| a.exp(), |_, y| y)
    }

    /// Absolute value with subgradient 0 at the origin.
    pub fn abs(&self) -> Tensor {
        self.map(
            "abs",
            |a| a.abs(),
            |a, _| {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            },
        )
    }

    pub fn neg(&self) -> Tensor {
        self.map("neg", |a| -a, |_, _| -1.0)
    }

    /// `sqrt(max(x, 0) + eps)` — the guarded square root used everywhere a
    /// norm or quadratic form feeds a root. Smooth at 0, and clamped inputs
    /// get a zero subgradient.
    pub fn sqrt_eps(&self, eps: f64) -> Tensor {
        self.map(
            "sqrt_eps",
            move |a| (a.max(0.0) + eps).sqrt(),
            move |a, y| if a > 0.0 { 0.5 / y } else { 0.0 },
        )
    }

    /// `sqrt(max(x, 0))` with an exact forward value and the derivative
    /// clamped to `0.5 / floor` near zero. Used where the score formula
    /// needs the true radius (a guarded radius would blow up ratio terms at
    /// coincidence) but the gradient must stay bounded.
    pub fn sqrt_bounded_grad(&self, floor: f64) -> Tensor {
        self.map(
            "sqrt_bounded_grad",
            |a| a.max(0.0).sqrt(),
            move |a, y| if a > 0.0 { 0.5 / y.max(floor) } else { 0.0 },
        )
    }

    /// `arcosh(1 + max(y, 0))` with the derivative guarded near the apex,
    /// where the true derivative diverges.
    pub fn acosh1p(&self, eps: f64) -> Tensor {
        self.map(
            "acosh1p",
            |a| (1.0 + a.max(0.0)).acosh(),
            move |a, _| {
                let y = a.max(0.0);
                if a > 0.0 {
                    1.0 / (y * (y + 2.0) + eps).sqrt()
                } else {
                    0.0
                }
            },
        )
    }

    // ── scalar broadcasting ──────────────────────────────────────────

    pub fn add_s(&self, s: f64) -> Tensor {
        self.map("add_s", move |a| a + s, |_, _| 1.0)
    }

    pub fn mul_s(&self, s: f64) -> Tensor {
        self.map("mul_s", move |a| a * s, move |_, _| s)
    }

    /// `s − x`, elementwise.
    pub fn sub_from_s(&self, s: f64) -> Tensor {
        self.map("sub_from_s", move |a| s - a, |_, _| -1.0)
    }

    // ── matrix ops ───────────────────────────────────────────────────

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.cols() != other.rows() {
            return Err(TensorError::Dimension {
                op: "matmul",
                detail: format!("{:?} x {:?}", self.shape(), other.shape()),
            });
        }
        let (m, k, n) = (self.rows(), self.cols(), other.cols());
        let data = raw_matmul(self.data(), other.data(), m, k, n);
        let (a, b) = (self.clone(), other.clone());
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            // a.grad += g · bᵀ ; b.grad += aᵀ · g
            let bt = raw_transpose(b.data(), k, n);
            let at = raw_transpose(a.data(), m, k);
            let ga = raw_matmul(g, &bt, m, n, k);
            let gb = raw_matmul(&at, g, k, m, n);
            vec![ga, gb]
        });
        Ok(Tensor::make(
            "matmul",
            m,
            n,
            data,
            vec![self.clone(), other.clone()],
            Some(back),
        ))
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = self.shape();
        let data = raw_transpose(self.data(), r, c);
        let back: BackwardFn = Box::new(move |g: &[f64]| vec![raw_transpose(g, c, r)]);
        Tensor::make("transpose", c, r, data, vec![self.clone()], Some(back))
    }

    // ── reductions ───────────────────────────────────────────────────

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.len();
        let back: BackwardFn = Box::new(move |g: &[f64]| vec![vec![g[0]; n]]);
        Tensor::make("sum_all", 1, 1, vec![s], vec![self.clone()], Some(back))
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.len() as f64;
        self.sum_all().mul_s(1.0 / n)
    }

    /// Sum over rows (axis 0): `[R, C] -> [1, C]`.
    pub fn sum_axis0(&self) -> Tensor {
        let (r, c) = self.shape();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += self.data()[i * c + j];
            }
        }
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; r * c];
            for i in 0..r {
                ga[i * c..(i + 1) * c].copy_from_slice(g);
            }
            vec![ga]
        });
        Tensor::make("sum_axis0", 1, c, out, vec![self.clone()], Some(back))
    }

    /// Sum over columns (axis 1): `[R, C] -> [R, 1]`.
    pub fn sum_axis1(&self) -> Tensor {
        let (r, c) = self.shape();
        let mut out = vec![0.0; r];
        for i in 0..r {
            out[i] = self.data()[i * c..(i + 1) * c].iter().sum();
        }
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    ga[i * c + j] = g[i];
                }
            }
            vec![ga]
        });
        Tensor::make("sum_axis1", r, 1, out, vec![self.clone()], Some(back))
    }

    // ── shape plumbing ───────────────────────────────────────────────

    /// Repeat a `[R, 1]` column across `n` columns.
    pub fn bcast_cols(&self, n: usize) -> Result<Tensor, TensorError> {
        if self.cols() != 1 {
            return Err(TensorError::Dimension {
                op: "bcast_cols",
                detail: format!("expected column vector, got {:?}", self.shape()),
            });
        }
        let r = self.rows();
        let mut data = vec![0.0; r * n];
        for i in 0..r {
            for j in 0..n {
                data[i * n + j] = self.data()[i];
            }
        }
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; r];
            for i in 0..r {
                ga[i] = g[i * n..(i + 1) * n].iter().sum();
            }
            vec![ga]
        });
        Ok(Tensor::make("bcast_cols", r, n, data, vec![self.clone()], Some(back)))
    }

    /// Repeat a `[1, C]` row across `r` rows.
    pub fn bcast_rows(&self, r: usize) -> Result<Tensor, TensorError> {
        if self.rows() != 1 {
            return Err(TensorError::Dimension {
                op: "bcast_rows",
                detail: format!("expected row vector, got {:?}", self.shape()),
            });
        }
        let c = self.cols();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            data[i * c..(i + 1) * c].copy_from_slice(self.data());
        }
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    ga[j] += g[i * c + j];
                }
            }
            vec![ga]
        });
        Ok(Tensor::make("bcast_rows", r, c, data, vec![self.clone()], Some(back)))
    }

    pub fn concat_cols(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.rows() != other.rows() {
            return Err(TensorError::Dimension {
                op: "concat_cols",
                detail: format!("{:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        let (r, ca, cb) = (self.rows(), self.cols(), other.cols());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(&self.data()[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&other.data()[i * cb..(i + 1) * cb]);
        }
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; r * ca];
            let mut gb = vec![0.0; r * cb];
            for i in 0..r {
                let row = &g[i * (ca + cb)..(i + 1) * (ca + cb)];
                ga[i * ca..(i + 1) * ca].copy_from_slice(&row[..ca]);
                gb[i * cb..(i + 1) * cb].copy_from_slice(&row[ca..]);
            }
            vec![ga, gb]
        });
        Ok(Tensor::make(
            "concat_cols",
            r,
            ca + cb,
            data,
            vec![self.clone(), other.clone()],
            Some(back),
        ))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor, TensorError> {
        let (r, c) = self.shape();
        if start >= end || end > c {
            return Err(TensorError::Dimension {
                op: "slice_cols",
                detail: format!("range {start}..{end} of {c} columns"),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&self.data()[i * c + start..i * c + end]);
        }
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; r * c];
            for i in 0..r {
                ga[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
            }
            vec![ga]
        });
        Ok(Tensor::make("slice_cols", r, w, data, vec![self.clone()], Some(back)))
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor, TensorError> {
        let (r, c) = self.shape();
        if start >= end || end > r {
            return Err(TensorError::Dimension {
                op: "slice_rows",
                detail: format!("range {start}..{end} of {r} rows"),
            });
        }
        let h = end - start;
        let data = self.data()[start * c..end * c].to_vec();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; r * c];
            ga[start * c..end * c].copy_from_slice(g);
            vec![ga]
        });
        Ok(Tensor::make("slice_rows", h, c, data, vec![self.clone()], Some(back)))
    }

    // ── softmax ──────────────────────────────────────────────────────

    /// Numerically stabilized softmax along an axis of a 2-D tensor.
    /// `axis = 0` normalizes each column over the rows, `axis = 1` each row.
    pub fn softmax(&self, axis: usize) -> Tensor {
        let (r, c) = self.shape();
        let mut out = vec![0.0; r * c];
        let idx = move |i: usize, j: usize| i * c + j;
        let (outer, inner): (usize, usize) = match axis {
            0 => (c, r),
            1 => (r, c),
            _ => panic!("softmax: axis must be 0 or 1"),
        };
        let pos = move |o: usize, i: usize| {
            if axis == 0 {
                idx(i, o)
            } else {
                idx(o, i)
            }
        };
        for o in 0..outer {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..inner {
                mx = mx.max(self.data()[pos(o, i)]);
            }
            let mut z = 0.0;
            for i in 0..inner {
                let e = (self.data()[pos(o, i)] - mx).exp();
                out[pos(o, i)] = e;
                z += e;
            }
            for i in 0..inner {
                out[pos(o, i)] /= z;
            }
        }
        let y = out.clone();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; g.len()];
            for o in 0..outer {
                let mut dot = 0.0;
                for i in 0..inner {
                    dot += g[pos(o, i)] * y[pos(o, i)];
                }
                for i in 0..inner {
                    let p = pos(o, i);
                    ga[p] = y[p] * (g[p] - dot);
                }
            }
            vec![ga]
        });
        Tensor::make("softmax", r, c, out, vec![self.clone()], Some(back))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Gradients accumulate across shared
    /// subexpressions; leaves that the loss never touches simply have no
    /// entry in the store (read as zero).
    pub fn backward(&self) -> Result<GradStore, TensorError> {
        if self.len() != 1 {
            return Err(TensorError::NotScalar(vec![self.rows(), self.cols()]));
        }
        // Creation order is a topological order for a define-by-run graph.
        let mut seen: HashSet<u64> = HashSet::new();
        let mut nodes: Vec<Tensor> = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !t.node.requires_grad && t.node.backward.is_none() && t.node.parents.is_empty() {
                // constant leaf: no gradient will ever be read from it
                continue;
            }
            if seen.insert(t.node.id) {
                for p in &t.node.parents {
                    stack.push(p.clone());
                }
                nodes.push(t);
            }
        }
        nodes.sort_by_key(|t| t.node.id);

        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.node.id, vec![1.0]);
        for t in nodes.iter().rev() {
            let Some(back) = t.node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads.get(&t.node.id) else {
                continue;
            };
            let parent_grads = back(g);
            debug_assert_eq!(parent_grads.len(), t.node.parents.len());
            for (p, pg) in t.node.parents.iter().zip(parent_grads) {
                if !p.node.requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.len(), p.len(), "gradient shape must match its tensor");
                match grads.entry(p.node.id) {
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        let acc = e.get_mut();
                        for (a, b) in acc.iter_mut().zip(&pg) {
                            *a += b;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(pg);
                    }
                }
            }
        }
        Ok(GradStore { grads })
    }
}

/// Gradients produced by one backward pass, keyed by tensor id.
pub struct GradStore {
    grads: HashMap<u64, Vec<f64>>,
}

impl GradStore {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.grads.get(&t.id()).map(|v| v.as_slice())
    }

    /// Gradient of a leaf, zero-filled when the loss never reached it.
    pub fn get_or_zeros(&self, t: &Tensor) -> Vec<f64> {
        self.grads
            .get(&t.id())
            .cloned()
            .unwrap_or_else(|| vec![0.0; t.len()])
    }
}

// ── composed layers ──────────────────────────────────────────────────

/// Per-row layer normalization with affine output, variance guarded by eps.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Tensor {
    let (_, d) = x.shape();
    assert_eq!(gain.shape(), (1, d), "layer_norm: gain shape");
    assert_eq!(bias.shape(), (1, d), "layer_norm: bias shape");
    let r = x.rows();
    let mean = x.sum_axis1().mul_s(1.0 / d as f64);
    let centered = x.sub(&mean.bcast_cols(d).unwrap()).unwrap();
    let var = centered
        .mul(&centered)
        .unwrap()
        .sum_axis1()
        .mul_s(1.0 / d as f64);
    let inv_std = var.sqrt_eps(eps);
    let normed = centered.div(&inv_std.bcast_cols(d).unwrap()).unwrap();
    normed
        .mul(&gain.bcast_rows(r).unwrap())
        .unwrap()
        .add(&bias.bcast_rows(r).unwrap())
        .unwrap()
}

/// Weights of a gated recurrent cell acting on `[batch, dim]` states.
pub struct GruWeights {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

/// Standard GRU cell: `z = σ(W_z[x;h]+b_z)`, `r = σ(W_r[x;h]+b_r)`,
/// `h̃ = tanh(W_h[x; r⊙h]+b_h)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_cell(x: &Tensor, h: &Tensor, w: &GruWeights) -> Result<Tensor, TensorError> {
    if x.shape() != h.shape() {
        return Err(TensorError::Dimension {
            op: "gru_cell",
            detail: format!("input {:?} vs hidden {:?}", x.shape(), h.shape()),
        });
    }
    let b = x.rows();
    let xh = x.concat_cols(h)?;
    let z = xh.matmul(&w.w_z)?.add(&w.b_z.bcast_rows(b)?)?.sigmoid();
    let r = xh.matmul(&w.w_r)?.add(&w.b_r.bcast_rows(b)?)?.sigmoid();
    let xrh = x.concat_cols(&r.mul(h)?)?;
    let cand = xrh.matmul(&w.w_h)?.add(&w.b_h.bcast_rows(b)?)?.tanh();
    let keep = z.sub_from_s(1.0).mul(h)?;
    keep.add(&z.mul(&cand)?)
}

// ── finite differences ───────────────────────────────────────────────

/// Central-difference gradient of `f` at `x`. Independent of the tape; used
/// as the numeric oracle for every analytic gradient in the crate.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = f(&probe);
        probe[i] = orig - step;
        let fm = f(&probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

/// `|analytic − numeric| / max(1, |numeric|)`, maximized over coordinates.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}
