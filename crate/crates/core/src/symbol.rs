//! Matrix-valued phase-space symbols `(p, x) ↦ B(p, x) ∈ C^{2×2}` and their
//! finite-difference derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mat2::{Mat2, PauliAxis};

pub type SymbolFn = dyn Fn(&[f64], &[f64]) -> Result<Mat2> + Send + Sync;

/// Where a symbol lives in phase space, used for grid-resolution checks.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SupportHint {
    /// Largest |p_i| the symbol needs resolved.
    pub momentum_extent: Option<f64>,
    /// Largest |x_i| the symbol needs resolved.
    pub position_extent: Option<f64>,
}

/// A callable 2×2 matrix field with metadata.
#[derive(Clone)]
pub struct MatrixSymbol {
    name: String,
    f: Arc<SymbolFn>,
    hermitian: bool,
    order: u32,
    support: SupportHint,
}

impl fmt::Debug for MatrixSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixSymbol")
            .field("name", &self.name)
            .field("hermitian", &self.hermitian)
            .field("order", &self.order)
            .field("support", &self.support)
            .finish()
    }
}

impl MatrixSymbol {
    pub fn new<F>(name: impl Into<String>, hermitian: bool, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Mat2 + Send + Sync + 'static,
    {
        Self::fallible(name, hermitian, move |p, x| Ok(f(p, x)))
    }

    pub fn fallible<F>(name: impl Into<String>, hermitian: bool, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Result<Mat2> + Send + Sync + 'static,
    {
        MatrixSymbol {
            name: name.into(),
            f: Arc::new(f),
            hermitian,
            order: 0,
            support: SupportHint::default(),
        }
    }

    pub fn constant(m: Mat2) -> Self {
        let herm = m.hermiticity_defect() <= 1e-12;
        MatrixSymbol::new(format!("const{:?}", m.0), herm, move |_, _| m)
    }

    pub fn identity() -> Self {
        MatrixSymbol::constant(Mat2::identity()).with_name("identity")
    }

    pub fn zero() -> Self {
        MatrixSymbol::constant(Mat2::zero()).with_name("zero")
    }

    pub fn pauli(axis: PauliAxis) -> Self {
        MatrixSymbol::constant(Mat2::pauli(axis)).with_name(format!("sigma_{}", axis.index() + 1))
    }

    /// Constant matrix unit `E_rs` (zero-based indices).
    pub fn matrix_unit(r: usize, s: usize) -> Self {
        MatrixSymbol::constant(Mat2::unit(r, s)).with_name(format!("E{}{}", r + 1, s + 1))
    }

    /// `b(p, x)·Id` for a real scalar field.
    pub fn scalar<F>(name: impl Into<String>, b: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        MatrixSymbol::scalar_times(name, b, Mat2::identity())
    }

    /// `b(p, x)·M` for a real scalar field and a constant matrix.
    pub fn scalar_times<F>(name: impl Into<String>, b: F, m: Mat2) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        let herm = m.hermiticity_defect() <= 1e-12;
        MatrixSymbol::new(name, herm, move |p, x| m.scale_re(b(p, x)))
    }

    /// `x_k·Id`.
    pub fn position(k: usize) -> Self {
        MatrixSymbol::scalar(format!("x{}", k + 1), move |_, x| x[k])
    }

    /// `p_k·Id`.
    pub fn momentum(k: usize) -> Self {
        MatrixSymbol::scalar(format!("p{}", k + 1), move |p, _| p[k])
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_order(mut self, k: u32) -> Self {
        self.order = k;
        self
    }

    pub fn with_support(mut self, support: SupportHint) -> Self {
        self.support = support;
        self
    }

    pub fn with_hermitian(mut self, hermitian: bool) -> Self {
        self.hermitian = hermitian;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn support(&self) -> &SupportHint {
        &self.support
    }

    /// Evaluates the symbol, rejecting non-finite output.
    pub fn eval(&self, p: &[f64], x: &[f64]) -> Result<Mat2> {
        let m = (self.f)(p, x)?;
        if !m.is_finite() {
            return Err(Error::eval(p, x, format!("symbol `{}` is not finite", self.name)));
        }
        Ok(m)
    }

    /// Largest hermiticity defect over the probes; errors if the symbol is
    /// flagged hermitian and a probe exceeds 1e-12.
    pub fn check_hermitian(&self, probes: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (p, x) in probes {
            let m = self.eval(p, x)?;
            let d = m.hermiticity_defect();
            if self.hermitian && d > 1e-12 {
                return Err(Error::contract(format!(
                    "symbol `{}` flagged hermitian but defect {d:e} at p={p:?}, x={x:?}",
                    self.name
                )));
            }
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Pointwise sum.
    pub fn add(&self, other: &MatrixSymbol) -> MatrixSymbol {
        let (a, b) = (self.clone(), other.clone());
        MatrixSymbol::fallible(
            format!("({})+({})", self.name, other.name),
            self.hermitian && other.hermitian,
            move |p, x| Ok(a.eval(p, x)? + b.eval(p, x)?),
        )
        .with_order(self.order.min(other.order))
    }

    /// Pointwise real multiple.
    pub fn scale(&self, s: f64) -> MatrixSymbol {
        let a = self.clone();
        MatrixSymbol::fallible(format!("{s}*({})", self.name), self.hermitian, move |p, x| {
            Ok(a.eval(p, x)?.scale_re(s))
        })
        .with_order(self.order)
        .with_support(self.support.clone())
    }

    /// Pointwise matrix product `self·other`, in that order.
    pub fn mul(&self, other: &MatrixSymbol) -> MatrixSymbol {
        let (a, b) = (self.clone(), other.clone());
        MatrixSymbol::fallible(
            format!("({})*({})", self.name, other.name),
            false,
            move |p, x| Ok(a.eval(p, x)? * b.eval(p, x)?),
        )
        .with_order(self.order + other.order)
    }

    /// Adds `c·Id`.
    pub fn shift(&self, c: f64) -> MatrixSymbol {
        let a = self.clone();
        MatrixSymbol::fallible(format!("({})+{c}", self.name), self.hermitian, move |p, x| {
            Ok(a.eval(p, x)? + Mat2::identity().scale_re(c))
        })
        .with_order(self.order)
        .with_support(self.support.clone())
    }

    /// Hermitian part `(B + B†)/2`, flagged hermitian.
    pub fn hermitian_part(&self) -> MatrixSymbol {
        let a = self.clone();
        MatrixSymbol::fallible(format!("herm({})", self.name), true, move |p, x| {
            let m = a.eval(p, x)?;
            Ok((m + m.adjoint()).scale_re(0.5))
        })
        .with_order(self.order)
        .with_support(self.support.clone())
    }
}

/// Symbols addressable by name from configuration files. `dim` is the
/// phase-space dimension d.
pub fn named_symbol(name: &str, dim: usize) -> Option<MatrixSymbol> {
    let n = name.trim();
    let sym = match n {
        "identity" | "id" => MatrixSymbol::identity(),
        "sigma_1" | "sigma_x" => MatrixSymbol::pauli(PauliAxis::X),
        "sigma_2" | "sigma_y" => MatrixSymbol::pauli(PauliAxis::Y),
        "sigma_3" | "sigma_z" => MatrixSymbol::pauli(PauliAxis::Z),
        "E11" => MatrixSymbol::matrix_unit(0, 0),
        "E12" => MatrixSymbol::matrix_unit(0, 1),
        "E21" => MatrixSymbol::matrix_unit(1, 0),
        "E22" => MatrixSymbol::matrix_unit(1, 1),
        "x_squared" => {
            MatrixSymbol::scalar("x_squared", |_, x| x.iter().map(|v| v * v).sum::<f64>())
        }
        "p_squared" => {
            MatrixSymbol::scalar("p_squared", |p, _| p.iter().map(|v| v * v).sum::<f64>())
        }
        _ => {
            let (head, idx) = n.split_at(n.len().saturating_sub(1));
            let k: usize = idx.parse().ok()?;
            if k == 0 || k > dim {
                return None;
            }
            match head {
                "x" => MatrixSymbol::position(k - 1),
                "p" => MatrixSymbol::momentum(k - 1),
                _ => return None,
            }
        }
    };
    Some(sym.with_name(n))
}

/// 5-point central stencils for derivative orders 0..=4, offsets -2..=2.
fn stencil(order: u8) -> [f64; 5] {
    match order {
        0 => [0.0, 0.0, 1.0, 0.0, 0.0],
        1 => [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
        2 => [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        4 => [1.0, -4.0, 6.0, -4.0, 1.0],
        _ => unreachable!("derivative order above 4"),
    }
}

/// Multi-index over the phase-space coordinates in the order `(p_1..p_d, x_1..x_d)`.
pub type MultiIndex = Vec<u8>;

/// Tensor-product stencils for a set of mixed partials, sharing the
/// evaluation points between them.
#[derive(Clone, Debug)]
pub struct StencilSet {
    /// Integer offsets (in units of h) per coordinate.
    offsets: Vec<Vec<i8>>,
    /// Per derivative: `(offset index, weight)` pairs and the total order.
    stencils: Vec<(Vec<(usize, f64)>, i32)>,
}

impl StencilSet {
    pub fn new(alphas: &[MultiIndex]) -> Result<Self> {
        let mut offsets: Vec<Vec<i8>> = Vec::new();
        let mut stencils = Vec::with_capacity(alphas.len());
        for alpha in alphas {
            if alpha.iter().any(|&a| a > 4) {
                return Err(Error::contract("derivative order per coordinate must be at most 4"));
            }
            let mut terms: Vec<(Vec<i8>, f64)> = vec![(Vec::new(), 1.0)];
            for &a in alpha {
                let w = stencil(a);
                let mut next = Vec::new();
                for (off, c) in &terms {
                    for (j, &wj) in w.iter().enumerate() {
                        if wj != 0.0 {
                            let mut o = off.clone();
                            o.push(j as i8 - 2);
                            next.push((o, c * wj));
                        }
                    }
                }
                terms = next;
            }
            let mut st = Vec::with_capacity(terms.len());
            for (off, w) in terms {
                let k = match offsets.iter().position(|o| *o == off) {
                    Some(k) => k,
                    None => {
                        offsets.push(off);
                        offsets.len() - 1
                    }
                };
                st.push((k, w));
            }
            stencils.push((st, alpha.iter().map(|&a| a as i32).sum()));
        }
        Ok(StencilSet { offsets, stencils })
    }

    pub fn points(&self) -> usize {
        self.offsets.len()
    }

    /// All partials of `sym` at `(p, x)` with step `h`. `domain`, when given,
    /// must accept every stencil point.
    pub fn eval(
        &self,
        sym: &MatrixSymbol,
        p: &[f64],
        x: &[f64],
        h: f64,
        domain: Option<&(dyn Fn(&[f64], &[f64]) -> bool + Sync)>,
        vals: &mut Vec<Mat2>,
        out: &mut Vec<Mat2>,
    ) -> Result<()> {
        let d = p.len();
        let mut pp = p.to_vec();
        let mut xx = x.to_vec();
        vals.clear();
        for off in &self.offsets {
            for i in 0..d {
                pp[i] = p[i] + off[i] as f64 * h;
                xx[i] = x[i] + off[d + i] as f64 * h;
            }
            if let Some(inside) = domain {
                if !inside(&pp, &xx) {
                    return Err(Error::Windowing(format!(
                        "stencil for `{}` at p={p:?}, x={x:?} leaves the grid domain",
                        sym.name()
                    )));
                }
            }
            vals.push(sym.eval(&pp, &xx)?);
        }
        out.clear();
        for (st, order) in &self.stencils {
            let mut acc = Mat2::zero();
            for &(k, w) in st {
                acc += vals[k].scale_re(w);
            }
            out.push(acc.scale_re(h.powi(-order)));
        }
        Ok(())
    }
}

/// One mixed partial `∂^α B` by finite differences with step `h`.
pub fn partial(sym: &MatrixSymbol, p: &[f64], x: &[f64], alpha: &[u8], h: f64) -> Result<Mat2> {
    if alpha.len() != 2 * p.len() || p.len() != x.len() {
        return Err(Error::contract("multi-index length must be 2d"));
    }
    let set = StencilSet::new(&[alpha.to_vec()])?;
    let (mut vals, mut out) = (Vec::new(), Vec::new());
    set.eval(sym, p, x, h, None, &mut vals, &mut out)?;
    Ok(out[0])
}
