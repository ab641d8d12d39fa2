//! Truncated composite Hilbert space atom ⊗ mode a ⊗ mode b and a small
//! compressed-sparse-row operator type.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomLevel {
    Alpha,
    Beta,
    E0,
    E1,
    Dark,
}

impl AtomLevel {
    pub fn is_excited(self) -> bool {
        matches!(self, AtomLevel::E0 | AtomLevel::E1)
    }
}

impl fmt::Display for AtomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AtomLevel::Alpha => "alpha",
            AtomLevel::Beta => "beta",
            AtomLevel::E0 => "e0",
            AtomLevel::E1 => "e1",
            AtomLevel::Dark => "dark",
        };
        f.write_str(name)
    }
}

/// Ordered atomic levels: alpha, beta, e0, then e1 and dark when present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomLevelSet {
    levels: Vec<AtomLevel>,
}

impl AtomLevelSet {
    pub fn new(with_e1: bool, with_dark: bool) -> Self {
        let mut levels = vec![AtomLevel::Alpha, AtomLevel::Beta, AtomLevel::E0];
        if with_e1 {
            levels.push(AtomLevel::E1);
        }
        if with_dark {
            levels.push(AtomLevel::Dark);
        }
        AtomLevelSet { levels }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[AtomLevel] {
        &self.levels
    }

    pub fn index_of(&self, level: AtomLevel) -> Option<usize> {
        self.levels.iter().position(|&l| l == level)
    }

    pub fn contains(&self, level: AtomLevel) -> bool {
        self.index_of(level).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
}

/// Product basis |atom, n_a, n_b⟩ with Fock cutoffs `n_a`, `n_b` (inclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeSpace {
    levels: AtomLevelSet,
    cutoff_a: usize,
    cutoff_b: usize,
}

impl CompositeSpace {
    pub fn new(levels: AtomLevelSet, cutoff_a: usize, cutoff_b: usize) -> Self {
        CompositeSpace {
            levels,
            cutoff_a,
            cutoff_b,
        }
    }

    pub fn levels(&self) -> &AtomLevelSet {
        &self.levels
    }

    pub fn cutoff(&self, mode: Mode) -> usize {
        match mode {
            Mode::A => self.cutoff_a,
            Mode::B => self.cutoff_b,
        }
    }

    pub fn atom_dim(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels.len() * (self.cutoff_a + 1) * (self.cutoff_b + 1)
    }

    pub fn flatten(&self, atom: usize, n_a: usize, n_b: usize) -> usize {
        debug_assert!(atom < self.atom_dim() && n_a <= self.cutoff_a && n_b <= self.cutoff_b);
        (atom * (self.cutoff_a + 1) + n_a) * (self.cutoff_b + 1) + n_b
    }

    pub fn unflatten(&self, index: usize) -> (usize, usize, usize) {
        let nb = self.cutoff_b + 1;
        let na = self.cutoff_a + 1;
        (index / (na * nb), (index / nb) % na, index % nb)
    }

    pub fn level_index(&self, level: AtomLevel) -> Result<usize> {
        self.levels
            .index_of(level)
            .ok_or_else(|| Error::domain(format!("atomic level `{level}` is not in this space")))
    }

    pub fn basis_state(&self, level: AtomLevel, n_a: usize, n_b: usize) -> Result<CompositeState> {
        let atom = self.level_index(level)?;
        if n_a > self.cutoff_a || n_b > self.cutoff_b {
            return Err(Error::domain(format!(
                "Fock numbers ({n_a}, {n_b}) exceed cutoffs ({}, {})",
                self.cutoff_a, self.cutoff_b
            )));
        }
        let mut amps = vec![ZERO; self.dim()];
        amps[self.flatten(atom, n_a, n_b)] = ONE;
        Ok(CompositeState { amps })
    }
}

/// Complex sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, ONE)))
    }

    /// Build from (row, col, value) entries; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut entries: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<C64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
                last = Some((r, c));
            }
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != ZERO {
                keep_rows.push(r);
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for &r in &keep_rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator {
            dim,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * factor)))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(self.dim, self.triplets().chain(other.triplets()))
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut triplets = Vec::new();
        for (r, k, v) in self.triplets() {
            for idx in other.row_ptr[k]..other.row_ptr[k + 1] {
                triplets.push((r, other.cols[idx], v * other.vals[idx]));
            }
        }
        Self::from_triplets(self.dim, triplets)
    }

    /// Maximum elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `out = self · x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    /// `out += scale · self · x`.
    pub fn apply_add(&self, scale: C64, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o += scale * acc;
        }
    }

    /// `out += scale · self · m` for a dense row-major `dim × dim` matrix `m`.
    pub fn mul_dense_add(&self, scale: C64, m: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for r in 0..d {
            let out_row = &mut out[r * d..(r + 1) * d];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = scale * self.vals[k];
                let m_row = &m[self.cols[k] * d..(self.cols[k] + 1) * d];
                for (o, &x) in out_row.iter_mut().zip(m_row) {
                    *o += v * x;
                }
            }
        }
    }

    /// Tr(self · m) for a dense row-major matrix `m`.
    pub fn trace_with(&self, m: &[C64]) -> C64 {
        let d = self.dim;
        self.triplets()
            .map(|(r, c, v)| v * m[c * d + r])
            .fold(ZERO, |acc, x| acc + x)
    }

    pub fn to_dense(&self) -> Vec<C64> {
        let mut dense = vec![ZERO; self.dim * self.dim];
        for (r, c, v) in self.triplets() {
            dense[r * self.dim + c] += v;
        }
        dense
    }
}

/// State vector on a [`CompositeSpace`]; unnormalised during trajectory evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    pub amps: Vec<C64>,
}

impl CompositeState {
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::Numerical(format!("cannot normalise state with norm² {n}")));
        }
        let s = 1.0 / n.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= s);
        Ok(())
    }
}

/// â or b̂: ⟨n−1|op|n⟩ = √n on the chosen factor, identity elsewhere.
pub fn annihilation_op(space: &CompositeSpace, mode: Mode) -> SparseOperator {
    let mut triplets = Vec::new();
    for idx in 0..space.dim() {
        let (atom, na, nb) = space.unflatten(idx);
        let (n, target) = match mode {
            Mode::A if na > 0 => (na, space.flatten(atom, na - 1, nb)),
            Mode::B if nb > 0 => (nb, space.flatten(atom, na, nb - 1)),
            _ => continue,
        };
        triplets.push((target, idx, C64::new((n as f64).sqrt(), 0.0)));
    }
    SparseOperator::from_triplets(space.dim(), triplets)
}

pub fn number_op(space: &CompositeSpace, mode: Mode) -> SparseOperator {
    let a = annihilation_op(space, mode);
    a.adjoint().mul(&a)
}

/// σ_xy = |x⟩⟨y| on the atomic factor, identity on both modes.
pub fn sigma(space: &CompositeSpace, x: AtomLevel, y: AtomLevel) -> Result<SparseOperator> {
    let xi = space.level_index(x)?;
    let yi = space.level_index(y)?;
    let na = space.cutoff(Mode::A);
    let nb = space.cutoff(Mode::B);
    let triplets = (0..=na).flat_map(|a| {
        (0..=nb).map(move |b| (space.flatten(xi, a, b), space.flatten(yi, a, b), ONE))
    });
    Ok(SparseOperator::from_triplets(space.dim(), triplets.collect::<Vec<_>>()))
}

/// Atomic transition taking `from` to `to`, i.e. |to⟩⟨from|.
pub fn transition_op(space: &CompositeSpace, from: AtomLevel, to: AtomLevel) -> Result<SparseOperator> {
    sigma(space, to, from)
}

/// ⟨ψ|op|ψ⟩ / ⟨ψ|ψ⟩.
pub fn expectation(state: &CompositeState, op: &SparseOperator) -> Result<C64> {
    if state.amps.len() != op.dim() {
        return Err(Error::domain(format!(
            "state length {} does not match operator dimension {}",
            state.amps.len(),
            op.dim()
        )));
    }
    let norm = state.norm_sqr();
    if norm <= 0.0 {
        return Err(Error::domain("expectation value of a zero-norm state"));
    }
    let mut tmp = vec![ZERO; op.dim()];
    op.apply(&state.amps, &mut tmp);
    let value: C64 = state
        .amps
        .iter()
        .zip(&tmp)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(value / norm)
}

/// Populations of each atomic level, normalised by the state norm.
pub fn level_populations(space: &CompositeSpace, state: &CompositeState) -> Vec<f64> {
    let mut pops = vec![0.0; space.atom_dim()];
    for (idx, a) in state.amps.iter().enumerate() {
        pops[space.unflatten(idx).0] += a.norm_sqr();
    }
    let total: f64 = pops.iter().sum();
    if total > 0.0 {
        pops.iter_mut().for_each(|p| *p /= total);
    }
    pops
}
