use std::sync::Arc;

use super::{Matrix, ParamId, ParamStore, SparseMatrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Abs(usize),
    Square(usize),
    Sqrt(usize),
    RowSoftmax(usize),
    RowLogSoftmax(usize),
    Gather(usize, Arc<[usize]>),
    ScatterAdd(usize, Arc<[usize]>),
    RowSum(usize),
    SumAll(usize),
    MeanAll(usize),
    Clamp(usize, f64, f64),
    StraightThrough(usize),
    Spmm(Arc<SparseMatrix>, usize),
    PairDistance(usize, Arc<[(usize, usize)]>, f64),
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 2] {
        match self {
            Op::Constant | Op::Param(_) => [None, None],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b) => [Some(*a), Some(*b)],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Abs(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::RowSoftmax(a)
            | Op::RowLogSoftmax(a)
            | Op::Gather(a, _)
            | Op::ScatterAdd(a, _)
            | Op::RowSum(a)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::Clamp(a, _, _)
            | Op::StraightThrough(a)
            | Op::Spmm(_, a)
            | Op::PairDistance(a, _, _) => [Some(*a), None],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    /// Depends on at least one parameter; only these receive adjoints.
    tracked: bool,
}

/// Append-only record of a forward computation.
///
/// Every primitive validates shapes and domains eagerly and refuses to
/// record a non-finite result, so a `Var` always refers to finite data.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints for every node reachable backwards from a loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn push(&mut self, op_name: &'static str, value: Matrix, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(op_name));
        }
        let tracked = matches!(op, Op::Param(_)) || op.inputs().iter().flatten().any(|&j| self.nodes[j].tracked);
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        self.push("constant", value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push("param", store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push("matmul", v, Op::MatMul(a.0, b.0))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.value(a), self.value(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push("add", v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push("sub", v, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push("mul", v, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        if self.value(b).data().iter().any(|&x| x == 0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "zero denominator".into(),
            });
        }
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        self.push("div", v, Op::Div(a.0, b.0))
    }

    /// `a + 1·row` where `row` is 1×cols.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        if self.shape(row) != (1, ca) {
            return Err(shape_err("add_row", self.value(a), self.value(row)));
        }
        let mut v = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..ra {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push("add_row", v, Op::AddRow(a.0, row.0))
    }

    /// Scale row `i` of `a` by `col[i]`, where `col` is rows×1.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ra, _) = self.shape(a);
        if self.shape(col) != (ra, 1) {
            return Err(shape_err("mul_col", self.value(a), self.value(col)));
        }
        let mut v = self.value(a).clone();
        let c = self.value(col).data().to_vec();
        for (i, s) in c.iter().enumerate() {
            v.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        self.push("mul_col", v, Op::MulCol(a.0, col.0))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * s);
        self.push("scale", v, Op::Scale(a.0, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + s);
        self.push("add_scalar", v, Op::AddScalar(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push("relu", v, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(stable_sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a.0))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(stable_softplus);
        self.push("softplus", v, Op::Softplus(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        self.push("exp", v, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&x) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {x}"),
            });
        }
        let v = self.value(a).map(f64::ln);
        self.push("log", v, Op::Log(a.0))
    }

    /// Absolute value; the subgradient at exactly zero is 0.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::abs);
        self.push("abs", v, Op::Abs(a.0))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x * x);
        self.push("square", v, Op::Square(a.0))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(&x) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: format!("non-positive input {x}"),
            });
        }
        let v = self.value(a).map(f64::sqrt);
        self.push("sqrt", v, Op::Sqrt(a.0))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        self.push("row_softmax", v, Op::RowSoftmax(a.0))
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.push("row_log_softmax", v, Op::RowLogSoftmax(a.0))
    }

    /// Output row `k` is input row `index[k]`; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, index: impl Into<Arc<[usize]>>) -> Result<Var> {
        let index = index.into();
        let src = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= src.rows()) {
            return Err(Error::invalid(format!(
                "gather_rows index {bad} out of range for {} rows",
                src.rows()
            )));
        }
        let cols = src.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(src.row(i));
        }
        let v = Matrix::from_vec(index.len(), cols, data)?;
        self.push("gather_rows", v, Op::Gather(a.0, index))
    }

    /// Output has `out_rows` rows; input row `k` is added into row `index[k]`.
    pub fn scatter_add_rows(
        &mut self,
        a: Var,
        index: impl Into<Arc<[usize]>>,
        out_rows: usize,
    ) -> Result<Var> {
        let index = index.into();
        let src = self.value(a);
        if index.len() != src.rows() {
            return Err(Error::Shape {
                op: "scatter_add_rows",
                lhs: src.shape(),
                rhs: (index.len(), 1),
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= out_rows) {
            return Err(Error::invalid(format!(
                "scatter_add_rows index {bad} out of range for {out_rows} rows"
            )));
        }
        let mut v = Matrix::zeros(out_rows, src.cols());
        for (k, &i) in index.iter().enumerate() {
            for (o, &x) in v.row_mut(i).iter_mut().zip(src.row(k)) {
                *o += x;
            }
        }
        self.push("scatter_add_rows", v, Op::ScatterAdd(a.0, index))
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let v = Matrix::column((0..src.rows()).map(|i| src.row(i).iter().sum()).collect());
        self.push("row_sum", v, Op::RowSum(a.0))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let v = Matrix::scalar(self.value(a).sum());
        self.push("sum_all", v, Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        if src.is_empty() {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let v = Matrix::scalar(src.sum() / src.len() as f64);
        self.push("mean_all", v, Op::MeanAll(a.0))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push("clamp", v, Op::Clamp(a.0, lo, hi))
    }

    /// Forward value `forward`, backward identity into `a`.
    pub fn straight_through(&mut self, a: Var, forward: Matrix) -> Result<Var> {
        if forward.shape() != self.shape(a) {
            return Err(shape_err("straight_through", self.value(a), &forward));
        }
        self.push("straight_through", forward, Op::StraightThrough(a.0))
    }

    /// Euclidean distance between rows `i` and `j` of `a` for each pair,
    /// floored at `sqrt(floor_sq)`. P×1.
    pub fn pair_distance(&mut self, a: Var, pairs: impl Into<Arc<[(usize, usize)]>>, floor_sq: f64) -> Result<Var> {
        let pairs = pairs.into();
        let src = self.value(a);
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i.max(j) >= src.rows()) {
            return Err(Error::invalid(format!(
                "pair_distance pair ({i}, {j}) out of range for {} rows",
                src.rows()
            )));
        }
        let data = pairs.iter().map(|&(i, j)| sq_dist(src.row(i), src.row(j)).max(floor_sq).sqrt()).collect();
        let v = Matrix::column(data);
        self.push("pair_distance", v, Op::PairDistance(a.0, pairs, floor_sq))
    }

    /// Constant sparse matrix times a recorded dense matrix.
    pub fn spmm(&mut self, m: Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let v = m.mul_dense(self.value(a))?;
        self.push("spmm", v, Op::Spmm(m, a.0))
    }

    /// Reverse sweep from a 1×1 `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.shape(loss),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Reverse sweep that accumulates into every parameter's gradient.
    /// Parameters not reached by `loss` keep their current (usually zero) gradient.
    pub fn backward(&self, loss: Var, params: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                params.get_mut(*id).grad.add_assign(g);
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let live = |j: usize| self.nodes[j].tracked;
        let acc = |grads: &mut [Option<Matrix>], j: usize, m: Matrix| {
            if !live(j) {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.add_assign(&m),
                slot @ None => *slot = Some(m),
            }
        };
        let out = &self.nodes[i].value;
        let val = |j: usize| &self.nodes[j].value;
        match &self.nodes[i].op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if live(*a) {
                    acc(grads, *a, g.matmul_t(val(*b)).expect("shapes fixed at record time"));
                }
                if live(*b) {
                    acc(grads, *b, val(*a).t_matmul(g).expect("shapes fixed at record time"));
                }
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if live(*a) {
                    acc(grads, *a, g.zip_map(val(*b), |gg, y| gg * y));
                }
                if live(*b) {
                    acc(grads, *b, g.zip_map(val(*a), |gg, x| gg * x));
                }
            }
            Op::Div(a, b) => {
                let bv = val(*b);
                if live(*a) {
                    acc(grads, *a, g.zip_map(bv, |gg, y| gg / y));
                }
                if live(*b) {
                    let db = g
                        .zip_map(out, |gg, q| gg * q)
                        .zip_map(bv, |gq, y| -gq / y);
                    acc(grads, *b, db);
                }
            }
            Op::AddRow(a, row) => {
                acc(grads, *a, g.clone());
                let mut dr = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, x) in dr.data_mut().iter_mut().zip(g.row(r)) {
                        *d += x;
                    }
                }
                acc(grads, *row, dr);
            }
            Op::MulCol(a, col) => {
                let av = val(*a);
                let cv = val(*col);
                let mut da = g.clone();
                let mut dc = Matrix::zeros(cv.rows(), 1);
                for r in 0..g.rows() {
                    let s = cv.data()[r];
                    da.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    dc.data_mut()[r] = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                }
                acc(grads, *a, da);
                acc(grads, *col, dc);
            }
            Op::Scale(a, s) => acc(grads, *a, g.map(|x| x * s)),
            Op::AddScalar(a) | Op::StraightThrough(a) => acc(grads, *a, g.clone()),
            Op::Relu(a) => acc(
                grads,
                *a,
                g.zip_map(val(*a), |gg, x| if x > 0.0 { gg } else { 0.0 }),
            ),
            Op::Sigmoid(a) => acc(grads, *a, g.zip_map(out, |gg, y| gg * y * (1.0 - y))),
            Op::Softplus(a) => acc(
                grads,
                *a,
                g.zip_map(val(*a), |gg, x| gg * stable_sigmoid(x)),
            ),
            Op::Exp(a) => acc(grads, *a, g.zip_map(out, |gg, y| gg * y)),
            Op::Log(a) => acc(grads, *a, g.zip_map(val(*a), |gg, x| gg / x)),
            Op::Abs(a) => acc(
                grads,
                *a,
                g.zip_map(val(*a), |gg, x| {
                    if x > 0.0 {
                        gg
                    } else if x < 0.0 {
                        -gg
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Square(a) => acc(grads, *a, g.zip_map(val(*a), |gg, x| 2.0 * x * gg)),
            Op::Sqrt(a) => acc(grads, *a, g.zip_map(out, |gg, y| gg / (2.0 * y))),
            Op::RowSoftmax(a) => {
                let mut da = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yy), &gg) in da.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *d = yy * (gg - dot);
                    }
                }
                acc(grads, *a, da);
            }
            Op::RowLogSoftmax(a) => {
                let mut da = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let total: f64 = gr.iter().sum();
                    for ((d, &yy), &gg) in da.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *d = gg - yy.exp() * total;
                    }
                }
                acc(grads, *a, da);
            }
            Op::Gather(a, index) => {
                let src = val(*a);
                let mut da = Matrix::zeros(src.rows(), src.cols());
                for (k, &r) in index.iter().enumerate() {
                    for (d, x) in da.row_mut(r).iter_mut().zip(g.row(k)) {
                        *d += x;
                    }
                }
                acc(grads, *a, da);
            }
            Op::ScatterAdd(a, index) => {
                let src = val(*a);
                let mut da = Matrix::zeros(src.rows(), src.cols());
                for (k, &r) in index.iter().enumerate() {
                    da.row_mut(k).copy_from_slice(g.row(r));
                }
                acc(grads, *a, da);
            }
            Op::RowSum(a) => {
                let src = val(*a);
                let mut da = Matrix::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    let gr = g.data()[r];
                    da.row_mut(r).iter_mut().for_each(|x| *x = gr);
                }
                acc(grads, *a, da);
            }
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                acc(grads, *a, Matrix::filled(r, c, g.data()[0]));
            }
            Op::MeanAll(a) => {
                let (r, c) = val(*a).shape();
                acc(grads, *a, Matrix::filled(r, c, g.data()[0] / (r * c) as f64));
            }
            Op::Clamp(a, lo, hi) => acc(
                grads,
                *a,
                g.zip_map(val(*a), |gg, x| if x >= *lo && x <= *hi { gg } else { 0.0 }),
            ),
            Op::Spmm(m, a) => acc(grads, *a, m.transpose_mul_dense(g)),
            Op::PairDistance(a, pairs, floor_sq) => {
                let src = val(*a);
                let mut da = Matrix::zeros(src.rows(), src.cols());
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    if sq_dist(src.row(i), src.row(j)) < *floor_sq {
                        continue;
                    }
                    let w = g.data()[k] / out.data()[k];
                    for c in 0..src.cols() {
                        let diff = w * (src.row(i)[c] - src.row(j)[c]);
                        da.row_mut(i)[c] += diff;
                        da.row_mut(j)[c] -= diff;
                    }
                }
                acc(grads, *a, da);
            }
        }
    }
}
