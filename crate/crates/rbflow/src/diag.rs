//! Diagnostics: inf-sup constants, time-series error norms, time-step checks.

use faer::prelude::*;
use faer::{Col, Mat, MatRef, Side};

use crate::error::Error;
use crate::fom::FomProblem;
use crate::Params;
use crate::reduction::ReducedModel;
use crate::sparse::{self, SpMat};

/// Smallest eigenvalue of the generalized problem `G q = lambda X q` for
/// symmetric PSD `G` and SPD `X`. When `deflate` is given, the component
/// along that vector (an exact kernel direction of `G`, e.g. the constant
/// pressure) is shifted out before taking the minimum.
pub fn min_generalized_eig(
    g: MatRef<f64>,
    x: MatRef<f64>,
    deflate: Option<&Col<f64>>,
) -> Result<f64, Error> {
    let n = g.nrows();
    if g.ncols() != n || x.nrows() != n || x.ncols() != n {
        return Err(Error::DimensionMismatch("generalized eigenproblem needs square matrices".into()));
    }
    let xe = x.selfadjoint_eigendecomposition(Side::Lower);
    let d = xe.s().column_vector().to_owned();
    let u = xe.u().to_owned();
    for i in 0..n {
        if d[i] <= 0.0 {
            return Err(Error::EigenFailure("metric matrix is not positive definite".into()));
        }
    }
    // X^{-1/2} = U D^{-1/2} U^T, then C = X^{-1/2} G X^{-1/2}.
    let ud = Mat::from_fn(n, n, |i, j| u[(i, j)] / d[j].sqrt());
    let xih = &ud * u.transpose();
    let mut c = &xih * g * &xih;
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    if let Some(v) = deflate {
        if v.nrows() != n {
            return Err(Error::DimensionMismatch("deflation vector length mismatch".into()));
        }
        // Kernel direction in transformed coordinates is X^{1/2} v.
        let udh = Mat::from_fn(n, n, |i, j| u[(i, j)] * d[j].sqrt());
        let mut t: Col<f64> = &udh * (u.transpose() * v);
        let nrm = t.norm_l2();
        if nrm <= 0.0 {
            return Err(Error::EigenFailure("zero deflation vector".into()));
        }
        t /= nrm;
        let shift = 1.0 + c.norm_l2();
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] += shift * t[i] * t[j];
            }
        }
    }
    let ce = c.selfadjoint_eigendecomposition(Side::Lower);
    let lam = ce.s().column_vector().to_owned();
    let mut min = f64::INFINITY;
    for i in 0..n {
        min = min.min(lam[i]);
    }
    Ok(min)
}

/// Discrete inf-sup constant of the FE pair at `p`:
/// `beta^2 = min eig of B X_u^{-1} B^T q = lambda X_p q` over zero-mean
/// pressures, with velocity restricted to interior (non-Dirichlet) dofs.
/// With `stabilized`, the Schur operator is augmented by the pressure
/// stabilization block `S`, which can only increase the constant.
pub fn fe_infsup(prob: &FomProblem, p: &Params, stabilized: bool) -> Result<f64, Error> {
    let b = prob.divergence.assemble(p);
    let np = prob.n_pres();
    let rows: Vec<usize> = (0..np).collect();
    let interior = prob.vel.interior_dofs();
    let b_int = sparse::submatrix(&b, &rows, &interior);
    let xu_int = sparse::submatrix(&prob.x_u, &interior, &interior);
    let chol = xu_int
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("velocity metric factorization: {e:?}")))?;
    let bt = sparse::to_dense(&sparse::transpose(&b_int));
    let w = chol.solve(&bt);
    let mut g = sparse::spmm(&b_int, w.as_ref());
    if stabilized {
        let blocks = prob.stab_blocks(p, None)?.ok_or_else(|| {
            Error::InvalidParameter("stabilized inf-sup requested on an unstabilized problem".into())
        })?;
        g += sparse::to_dense(&blocks.s);
    }
    let xp = sparse::to_dense(&prob.x_p);
    let ones = Col::from_fn(np, |_| 1.0);
    let lam = min_generalized_eig(g.as_ref(), xp.as_ref(), Some(&ones))?;
    Ok(lam.max(0.0).sqrt())
}

/// Reduced inf-sup constant `sigma_min(B_N(p))` for the first `n` velocity
/// modes (optionally enriched by supremizers) against `min(n, n_p)` pressure
/// modes. The bases are X-orthonormal, so singular values of the reduced
/// divergence block are the inf-sup quotients directly. More pressure modes
/// than velocity columns means a rank-deficient block and a zero constant.
pub fn reduced_infsup(model: &ReducedModel, p: &Params, n: usize, with_sup: bool) -> f64 {
    let cols = model.velocity_indices(n, with_sup);
    let npr = n.min(model.n_p);
    if npr == 0 || cols.is_empty() {
        return 0.0;
    }
    let rows: Vec<usize> = (0..npr).collect();
    let b = model.divergence.select(&rows, &cols).assemble(p);
    if b.nrows() > b.ncols() {
        return 0.0;
    }
    let svd = b.svd();
    let s = svd.s_diagonal();
    let mut min = f64::INFINITY;
    for i in 0..s.nrows() {
        min = min.min(s[i]);
    }
    min
}

/// Per-step errors and their time average for two same-shape trajectories
/// (one column per time level, column 0 the initial condition).
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub errors: Vec<f64>,
    /// Average of `errors[1..]`, i.e. over the computed steps.
    pub average: f64,
}

/// L2-in-time error series `e(t^k) = ||a_k - b_k||_M` in the mass-matrix norm
/// of the field's space.
pub fn l2_error_in_time(a: MatRef<f64>, b: MatRef<f64>, mass: &SpMat) -> Result<ErrorReport, Error> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch("trajectories have different shapes".into()));
    }
    if mass.nrows() != a.nrows() || mass.ncols() != a.nrows() {
        return Err(Error::DimensionMismatch("mass matrix does not match the field".into()));
    }
    let mut errors = Vec::with_capacity(a.ncols());
    for k in 0..a.ncols() {
        let d = Col::from_fn(a.nrows(), |i| a[(i, k)] - b[(i, k)]);
        errors.push(sparse::quad_form(&d, mass, &d).max(0.0).sqrt());
    }
    let steps = errors.len().saturating_sub(1).max(1);
    let average = errors[1..].iter().sum::<f64>() / steps as f64;
    Ok(ErrorReport { errors, average })
}

/// Time-average of the FOM trajectory norm itself, for relative errors.
pub fn l2_norm_in_time(a: MatRef<f64>, mass: &SpMat) -> Result<f64, Error> {
    let zero: Mat<f64> = Mat::zeros(a.nrows(), a.ncols());
    Ok(l2_error_in_time(a, zero.as_ref(), mass)?.average)
}

/// Mass matrix of the pressure space on the deformed domain.
pub fn pressure_mass(prob: &FomProblem, p: &Params) -> SpMat {
    crate::assemble::mass_matrix(&prob.pres, &prob.mesh, p.mu2)
}

/// Time-step stability report for consistently stabilized schemes.
///
/// The sufficient condition `dt > delta h^2` gates the flag; the boundary
/// counts as a violation. A secondary conditional-stability ratio
/// `dt / (delta h^2)` is reported alongside and compared against `1/delta`,
/// so both values appear in run reports without affecting the gate.
#[derive(Debug, Clone, Copy)]
pub struct DtReport {
    pub dt: f64,
    pub h: f64,
    pub delta: f64,
    /// `delta * h^2`, the sufficient-condition threshold.
    pub threshold: f64,
    /// `dt > threshold`.
    pub ok: bool,
    /// `dt / (delta * h^2)`.
    pub ratio: f64,
    /// `ratio >= 1/delta`.
    pub secondary_ok: bool,
}

pub fn dt_stability_flag(delta: f64, h: f64, dt: f64) -> DtReport {
    assert!(delta > 0.0 && h > 0.0 && dt > 0.0);
    let threshold = delta * h * h;
    let ratio = dt / threshold;
    DtReport {
        dt,
        h,
        delta,
        threshold,
        ok: dt > threshold,
        ratio,
        secondary_ok: ratio >= 1.0 / delta,
    }
}
