//! One-dimensional finite-element laboratory for the implicit analysis
//! step: mass matrices, the Schur-reduced system
//! `[Mh + kchi B MH^-1 B^T] c = b`, its conditioning, and the explicit
//! update in coefficient space.
//!
//! Fine space: continuous piecewise linears on `[0, 1]` vanishing at both
//! ends. Coarse space: nested piecewise linears, or piecewise constants on
//! macro-cells of the fine mesh.

mod eigen;
mod sparse;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use eigen::{inverse_iteration, lanczos_extremes, power_iteration, EigenEstimate, EigenOptions};
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::krylov::{conjugate_gradient, KrylovOptions, KrylovVector};
use crate::scalar::Real;

/// Inner-solve tolerance for `MH d = B^T c`.
const INNER_TOL: f64 = 1e-13;
/// Outer CG tolerance of the analysis solve.
const OUTER_TOL: f64 = 1e-12;
/// Largest system the condition estimator accepts.
pub const MAX_CONDITION_DIM: usize = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D<T> {
    nodes: Vec<T>,
}

impl<T: Real> Mesh1D<T> {
    pub fn uniform(elements: usize) -> Result<Self> {
        if elements < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 elements, got {elements}")));
        }
        let h = T::one() / T::from_usize_lossy(elements);
        let mut nodes: Vec<T> = (0..elements).map(|i| T::from_usize_lossy(i) * h).collect();
        nodes.push(T::one());
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<T>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidGrid("need at least 2 elements".into()));
        }
        if nodes[0] != T::zero() || *nodes.last().unwrap() != T::one() {
            return Err(Error::InvalidGrid("mesh must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("mesh nodes must increase strictly".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_uniform(&self) -> bool {
        let h = T::one() / T::from_usize_lossy(self.elements());
        self.nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= T::lit(1e-12) * h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoarseSpace {
    /// Piecewise linears on every `n/m`-th fine node (a subspace of the fine space).
    NestedLinear,
    /// Piecewise constants on `m` macro-cells (not a subspace).
    PiecewiseConstant,
}

impl CoarseSpace {
    pub fn label(&self) -> &'static str {
        match self {
            CoarseSpace::NestedLinear => "nested-p1",
            CoarseSpace::PiecewiseConstant => "p0",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nested-p1" | "nested" => Some(CoarseSpace::NestedLinear),
            "p0" | "piecewise-constant" => Some(CoarseSpace::PiecewiseConstant),
            _ => None,
        }
    }
}

impl fmt::Display for CoarseSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Assembled fine/coarse operators and the gain `kchi`.
#[derive(Clone, Debug)]
pub struct FemOperatorSet<T: Real> {
    pub mesh: Mesh1D<T>,
    pub coarse_cells: usize,
    pub space: CoarseSpace,
    /// Fine mass matrix.
    pub mass_fine: CsrMatrix<T>,
    /// Fine stiffness matrix (for gradient norms).
    pub stiffness_fine: CsrMatrix<T>,
    pub mass_coarse: CsrMatrix<T>,
    /// `B_ij = (phi_i^h, phi_j^H)`
    pub coupling: CsrMatrix<T>,
    pub k_chi: T,
}

fn gauss2<T: Real>(a: T, b: T) -> [(T, T); 2] {
    let half = T::lit(0.5) * (b - a);
    let mid = T::lit(0.5) * (a + b);
    let off = half / T::lit(3.0).sqrt();
    [(mid - off, half), (mid + off, half)]
}

/// Interior index of node `p` out of `count + 1` nodes, if interior.
fn interior(p: usize, count: usize) -> Option<usize> {
    (p >= 1 && p < count).then(|| p - 1)
}

/// Assembles the operators on a uniform fine mesh of `fine_n` elements.
pub fn assemble<T: Real>(fine_n: usize, coarse_m: usize, space: CoarseSpace) -> Result<FemOperatorSet<T>> {
    assemble_on_mesh(Mesh1D::uniform(fine_n)?, coarse_m, space)
}

pub fn assemble_on_mesh<T: Real>(mesh: Mesh1D<T>, coarse_m: usize, space: CoarseSpace) -> Result<FemOperatorSet<T>> {
    let n = mesh.elements();
    if coarse_m == 0 || coarse_m > n {
        return Err(Error::Incompatible(format!("coarse cell count {coarse_m} must lie in 1..={n}")));
    }
    if n % coarse_m != 0 {
        return Err(Error::Incompatible(format!(
            "coarse cells must be unions of fine elements: {n} is not a multiple of {coarse_m}"
        )));
    }
    if space == CoarseSpace::NestedLinear && coarse_m < 2 {
        return Err(Error::Incompatible("nested linear coarse space needs at least 2 cells".into()));
    }
    if !mesh.is_uniform() {
        log::warn!("non-uniform fine mesh: the conditioning bound assumes norm equivalence");
    }
    let x = mesh.nodes();
    let r = n / coarse_m;
    let nh = n - 1;
    let n_coarse = match space {
        CoarseSpace::NestedLinear => coarse_m - 1,
        CoarseSpace::PiecewiseConstant => coarse_m,
    };

    // coarse basis functions alive on fine element e, evaluated at point t
    let coarse_at = |e: usize, t: T| -> Vec<(usize, T)> {
        let cell = e / r;
        match space {
            CoarseSpace::PiecewiseConstant => vec![(cell, T::one())],
            CoarseSpace::NestedLinear => {
                let (xl, xr) = (x[cell * r], x[(cell + 1) * r]);
                let hl = xr - xl;
                let mut out = Vec::with_capacity(2);
                if let Some(i) = interior(cell, coarse_m) {
                    out.push((i, (xr - t) / hl));
                }
                if let Some(i) = interior(cell + 1, coarse_m) {
                    out.push((i, (t - xl) / hl));
                }
                out
            }
        }
    };
    let fine_at = |e: usize, t: T| -> Vec<(usize, T)> {
        let (xl, xr) = (x[e], x[e + 1]);
        let he = xr - xl;
        let mut out = Vec::with_capacity(2);
        if let Some(i) = interior(e, n) {
            out.push((i, (xr - t) / he));
        }
        if let Some(i) = interior(e + 1, n) {
            out.push((i, (t - xl) / he));
        }
        out
    };

    let mut mh = Vec::new();
    let mut kh = Vec::new();
    let mut bt = Vec::new();
    for e in 0..n {
        let he = x[e + 1] - x[e];
        let ends: Vec<(usize, T)> = [(interior(e, n), -T::one()), (interior(e + 1, n), T::one())]
            .into_iter()
            .filter_map(|(i, s)| i.map(|i| (i, s)))
            .collect();
        for &(i, si) in &ends {
            for &(j, sj) in &ends {
                kh.push((i, j, si * sj / he));
            }
        }
        for (t, w) in gauss2(x[e], x[e + 1]) {
            let fine = fine_at(e, t);
            for &(i, pi) in &fine {
                for &(j, pj) in &fine {
                    mh.push((i, j, w * pi * pj));
                }
                for (j, qj) in coarse_at(e, t) {
                    bt.push((i, j, w * pi * qj));
                }
            }
        }
    }
    let mut mc = Vec::new();
    for cell in 0..coarse_m {
        for e in cell * r..(cell + 1) * r {
            for (t, w) in gauss2(x[e], x[e + 1]) {
                let vals = coarse_at(e, t);
                for &(i, a) in &vals {
                    for &(j, b) in &vals {
                        mc.push((i, j, w * a * b));
                    }
                }
            }
        }
    }
    Ok(FemOperatorSet {
        coarse_cells: coarse_m,
        space,
        mass_fine: CsrMatrix::from_triplets(nh, nh, mh)?,
        stiffness_fine: CsrMatrix::from_triplets(nh, nh, kh)?,
        mass_coarse: CsrMatrix::from_triplets(n_coarse, n_coarse, mc)?,
        coupling: CsrMatrix::from_triplets(nh, n_coarse, bt)?,
        k_chi: T::zero(),
        mesh,
    })
}

fn jacobi<T: Real>(m: &CsrMatrix<T>) -> impl Fn(&Vec<T>) -> Vec<T> {
    let inv: Vec<T> = m.diagonal().into_iter().map(|d| T::one() / d).collect();
    move |r: &Vec<T>| r.iter().zip(&inv).map(|(a, b)| *a * *b).collect()
}

fn spd_solve<T: Real>(m: &CsrMatrix<T>, b: &[T], tol: T, what: &'static str) -> Result<Vec<T>> {
    let (x, _) = conjugate_gradient(
        |v: &Vec<T>| m.matvec(v),
        jacobi(m),
        &b.to_vec(),
        None,
        KrylovOptions::new(tol, 10 * b.len() + 100),
    )
    .map_err(|e| match e {
        Error::NotConverged { iterations, residual, .. } => Error::NotConverged {
            solver: what,
            iterations,
            residual,
        },
        other => other,
    })?;
    Ok(x)
}

impl<T: Real> FemOperatorSet<T> {
    pub fn with_gain(mut self, k_chi: T) -> Result<Self> {
        if !(k_chi >= T::zero()) || !k_chi.is_finite() {
            return Err(Error::Config(format!("k*chi must be finite and >= 0, got {k_chi}")));
        }
        self.k_chi = k_chi;
        Ok(self)
    }

    pub fn fine_dim(&self) -> usize {
        self.mass_fine.rows()
    }

    pub fn coarse_dim(&self) -> usize {
        self.mass_coarse.rows()
    }

    /// Coarse cell width (uniform meshes).
    pub fn h_coarse(&self) -> T {
        T::one() / T::from_usize_lossy(self.coarse_cells)
    }

    pub fn is_nested(&self) -> bool {
        self.space == CoarseSpace::NestedLinear
    }

    /// `MH^-1 B^T c`: coarse coefficients of the L2 projection of `c`.
    pub fn coarse_projection(&self, c: &[T]) -> Result<Vec<T>> {
        let rhs = self.coupling.matvec_transpose(c)?;
        spd_solve(&self.mass_coarse, &rhs, T::lit(INNER_TOL), "inner coarse-mass CG")
    }

    /// Coarse coefficients of the observation `I_H u` of a fine field `u`.
    pub fn observe(&self, u: &[T]) -> Result<Vec<T>> {
        self.coarse_projection(u)
    }

    /// `Pi c = Mh^-1 B MH^-1 B^T c`: the fine L2 projection of `I_H c`.
    pub fn projection_map(&self, c: &[T]) -> Result<Vec<T>> {
        let d = self.coarse_projection(c)?;
        let b = self.coupling.matvec(&d)?;
        spd_solve(&self.mass_fine, &b, T::lit(1e-14), "fine mass CG")
    }

    /// `||Pi Pi c - Pi c||_M / ||Pi c||_M`; zero (to rounding) iff the
    /// coarse space is nested.
    pub fn idempotency_defect(&self, c: &[T]) -> Result<T> {
        let p = self.projection_map(c)?;
        let pp = self.projection_map(&p)?;
        let mut diff = pp;
        KrylovVector::axpy(&mut diff, -T::one(), &p);
        let pn = self.mass_norm(&p)?;
        Ok(if pn > T::zero() { self.mass_norm(&diff)? / pn } else { T::zero() })
    }

    pub fn mass_norm(&self, c: &[T]) -> Result<T> {
        Ok(KrylovVector::dot(&c.to_vec(), &self.mass_fine.matvec(c)?).max(T::zero()).sqrt())
    }

    pub fn gradient_norm(&self, c: &[T]) -> Result<T> {
        Ok(KrylovVector::dot(&c.to_vec(), &self.stiffness_fine.matvec(c)?).max(T::zero()).sqrt())
    }

    /// Dense copy of the reduced matrix (small sizes; for cross-checks).
    pub fn dense_reduced(&self) -> Result<Vec<Vec<T>>> {
        let n = self.fine_dim();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            cols.push(reduced_apply(self, &e)?);
        }
        Ok((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
    }
}

/// `[Mh + kchi B MH^-1 B^T] c`, matrix-free with an inner CG solve.
pub fn reduced_apply<T: Real>(ops: &FemOperatorSet<T>, c: &[T]) -> Result<Vec<T>> {
    let mut out = ops.mass_fine.matvec(c)?;
    if ops.k_chi > T::zero() {
        let d = ops.coarse_projection(c)?;
        KrylovVector::axpy(&mut out, ops.k_chi, &ops.coupling.matvec(&d)?);
    }
    Ok(out)
}

/// Analysis step in weak form: find `v` with
/// `(v, phi) + kchi (I_H v, phi) = (vt, phi) + kchi (I_H u, phi)`.
/// `obs` holds the coarse coefficients of `I_H u`.
pub fn solve_step2_fem<T: Real>(ops: &FemOperatorSet<T>, vtilde: &[T], obs: &[T]) -> Result<Vec<T>> {
    if obs.len() != ops.coarse_dim() {
        return Err(Error::SizeMismatch {
            expected: ops.coarse_dim(),
            got: obs.len(),
        });
    }
    let mut b = ops.mass_fine.matvec(vtilde)?;
    if ops.k_chi == T::zero() {
        return Ok(vtilde.to_vec());
    }
    KrylovVector::axpy(&mut b, ops.k_chi, &ops.coupling.matvec(obs)?);
    let (v, _) = conjugate_gradient(
        |c: &Vec<T>| reduced_apply(ops, c),
        jacobi(&ops.mass_fine),
        &b,
        Some(vtilde.to_vec()),
        KrylovOptions::new(T::lit(OUTER_TOL), 20 * b.len() + 200),
    )?;
    Ok(v)
}

/// Closed-form update `v = vt + kchi/(1+kchi) Pi (u - vt)` in coefficient
/// space, with `Pi u = Mh^-1 B obs`.
pub fn explicit_update<T: Real>(ops: &FemOperatorSet<T>, vtilde: &[T], obs: &[T]) -> Result<Vec<T>> {
    let pu = spd_solve(&ops.mass_fine, &ops.coupling.matvec(obs)?, T::lit(1e-14), "fine mass CG")?;
    let mut innov = pu;
    KrylovVector::axpy(&mut innov, -T::one(), &ops.projection_map(vtilde)?);
    let mut v = vtilde.to_vec();
    KrylovVector::axpy(&mut v, ops.k_chi / (T::one() + ops.k_chi), &innov);
    Ok(v)
}

/// Gap between the implicit solve and the closed-form update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationReport<T> {
    /// `||v_implicit - v_explicit||` (L2).
    pub deviation: T,
    /// `||grad(u - v_implicit)||`.
    pub grad_error: T,
    pub h_coarse: T,
    /// `deviation / (H ||grad e||)`
    pub ratio: T,
}

pub fn explicit_deviation<T: Real>(ops: &FemOperatorSet<T>, vtilde: &[T], u: &[T]) -> Result<DeviationReport<T>> {
    let obs = ops.observe(u)?;
    let implicit = solve_step2_fem(ops, vtilde, &obs)?;
    let explicit = explicit_update(ops, vtilde, &obs)?;
    let mut d = implicit.clone();
    KrylovVector::axpy(&mut d, -T::one(), &explicit);
    let mut e = u.to_vec();
    KrylovVector::axpy(&mut e, -T::one(), &implicit);
    let deviation = ops.mass_norm(&d)?;
    let grad_error = ops.gradient_norm(&e)?;
    let h = ops.h_coarse();
    let ratio = if grad_error > T::zero() {
        deviation / (h * grad_error)
    } else {
        T::zero()
    };
    Ok(DeviationReport {
        deviation,
        grad_error,
        h_coarse: h,
        ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionEstimate<T> {
    pub lambda_min: EigenEstimate<T>,
    pub lambda_max: EigenEstimate<T>,
    pub cond: T,
    /// `cond / (1 + kchi)`
    pub normalized: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConditionMethod {
    /// Lanczos with full reorthogonalization (both extremes at once).
    #[default]
    Lanczos,
    /// Power iteration for the top, CG-driven inverse iteration for the bottom.
    PowerInverse,
}

fn start_vector<T: Real>(n: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    (0..n).map(|_| T::lit(rng.gen_range(0.5..1.5))).collect()
}

/// Extreme eigenvalues and condition number of the reduced matrix.
pub fn estimate_condition<T: Real>(ops: &FemOperatorSet<T>) -> Result<ConditionEstimate<T>> {
    estimate_condition_with(ops, ConditionMethod::Lanczos, EigenOptions { tol: T::lit(1e-9), max_iter: MAX_CONDITION_DIM })
}

pub fn estimate_condition_with<T: Real>(
    ops: &FemOperatorSet<T>,
    method: ConditionMethod,
    opts: EigenOptions<T>,
) -> Result<ConditionEstimate<T>> {
    let n = ops.fine_dim();
    if n > MAX_CONDITION_DIM {
        return Err(Error::Config(format!("system dimension {n} exceeds {MAX_CONDITION_DIM}")));
    }
    let apply = |c: &[T]| reduced_apply(ops, c);
    let (lo, hi) = match method {
        ConditionMethod::Lanczos => lanczos_extremes(apply, start_vector(n), opts)?,
        ConditionMethod::PowerInverse => (
            inverse_iteration(apply, start_vector(n), opts)?,
            power_iteration(apply, start_vector(n), opts)?,
        ),
    };
    let cond = hi.value / lo.value;
    Ok(ConditionEstimate {
        lambda_min: lo,
        lambda_max: hi,
        cond,
        normalized: cond / (T::one() + ops.k_chi),
    })
}
