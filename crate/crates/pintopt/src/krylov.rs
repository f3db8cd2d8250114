//! Right-preconditioned full GMRES and preconditioned MINRES with residual
//! tracking.
//!
//! Both solvers take the operator and the preconditioner inverse as closures
//! over flat complex vectors, start from the zero guess, and report the full
//! relative-residual history together with an honestly recomputed true
//! residual of the returned iterate. GMRES targets the row-swapped
//! arrangement of the coupled system; MINRES requires a Hermitian operator
//! (checked on the first iterations) and a Hermitian positive definite
//! preconditioner inverse. All arithmetic is complex because the structured
//! preconditioners are complex even when the system itself is real.

use num_complex::Complex64;
use std::time::Instant;

use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Convergence record of one Krylov solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Number of Krylov iterations performed.
    pub iterations: usize,
    /// Relative residual history, starting at 1 for the zero guess. GMRES and
    /// MINRES both track the preconditioned-system residual, which for right
    /// preconditioning coincides with the true residual.
    pub relative_residuals: Vec<f64>,
    /// Whether the requested tolerance was reached within the iteration cap.
    pub converged: bool,
    /// Wall-clock time of the solve, including the final residual check.
    pub wall_seconds: f64,
    /// `‖b − A x‖ / ‖b‖` of the returned iterate, recomputed with one extra
    /// operator application.
    pub final_true_residual: f64,
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check_inputs(b: &[Complex64], tol: f64, maxit: usize) -> Result<()> {
    if b.is_empty() {
        return Err(Error::InvalidSpec("right-hand side must not be empty".into()));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    if maxit == 0 {
        return Err(Error::InvalidSpec("iteration cap must be at least one".into()));
    }
    Ok(())
}

fn checked_apply<F>(f: &F, v: &[Complex64], what: &str) -> Result<Vec<Complex64>>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let out = f(v)?;
    if out.len() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "{what} changed the vector length from {} to {}",
            v.len(),
            out.len()
        )));
    }
    Ok(out)
}

fn true_residual<F>(apply_op: &F, x: &[Complex64], b: &[Complex64], beta: f64) -> Result<f64>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let ax = checked_apply(apply_op, x, "operator")?;
    let res: f64 = b
        .iter()
        .zip(&ax)
        .map(|(bi, ai)| (bi - ai).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(res / beta)
}

/// A complex Givens rotation `[[c, s], [−conj(s), c]]` with real `c`, chosen
/// so that applying it to `(a, b)` zeroes the second entry.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    if a.norm() == 0.0 {
        (0.0, Complex64::new(1.0, 0.0), b)
    } else {
        let scale = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let phase = a / a.norm();
        let c = a.norm() / scale;
        let s = phase * b.conj() / scale;
        (c, s, phase * scale)
    }
}

/// Solves `A x = b` by full right-preconditioned GMRES with modified
/// Gram-Schmidt orthogonalization, starting from the zero guess.
///
/// `apply_precond_inv` applies the preconditioner inverse; pass an identity
/// closure for the unpreconditioned method. Stops once the relative residual
/// drops to `tol`; returns `converged = false` with the best iterate when the
/// cap is hit, and an error when the Krylov space is exhausted at a residual
/// above the tolerance.
pub fn gmres<A, M>(
    apply_op: A,
    apply_precond_inv: M,
    b: &[Complex64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<Complex64>, SolveReport)>
where
    A: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
    M: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    check_inputs(b, tol, maxit)?;
    let clock = Instant::now();
    let beta = norm(b);
    if !beta.is_finite() {
        return Err(Error::Numerical("right-hand side is not finite".into()));
    }
    if beta == 0.0 {
        return Ok((
            vec![ZERO; b.len()],
            SolveReport {
                iterations: 0,
                relative_residuals: vec![0.0],
                converged: true,
                wall_seconds: clock.elapsed().as_secs_f64(),
                final_true_residual: 0.0,
            },
        ));
    }
    let mut basis: Vec<Vec<Complex64>> = vec![b.iter().map(|z| z / beta).collect()];
    let mut r_cols: Vec<Vec<Complex64>> = Vec::new();
    let mut rotations: Vec<(f64, Complex64)> = Vec::new();
    let mut g = vec![Complex64::new(beta, 0.0)];
    let mut history = vec![1.0];
    let mut converged = false;
    for k in 0..maxit {
        let z = checked_apply(&apply_precond_inv, &basis[k], "preconditioner")?;
        let mut w = checked_apply(&apply_op, &z, "operator")?;
        let pre_norm = norm(&w);
        let mut col = Vec::with_capacity(k + 1);
        for vj in basis.iter().take(k + 1) {
            let h = inner(vj, &w);
            for (wi, vi) in w.iter_mut().zip(vj) {
                *wi -= h * vi;
            }
            col.push(h);
        }
        let h_next = norm(&w);
        if !h_next.is_finite() || !pre_norm.is_finite() {
            return Err(Error::Numerical(
                "orthogonalization produced a non-finite vector".into(),
            ));
        }
        for (j, &(c, s)) in rotations.iter().enumerate() {
            let a = col[j];
            let bb = col[j + 1];
            col[j] = c * a + s * bb;
            col[j + 1] = -s.conj() * a + c * bb;
        }
        let (c, s, r) = givens(col[k], Complex64::new(h_next, 0.0));
        col[k] = r;
        rotations.push((c, s));
        let g_old = g[k];
        g[k] = c * g_old;
        g.push(-s.conj() * g_old);
        r_cols.push(col);
        let relres = g[k + 1].norm() / beta;
        history.push(relres);
        if h_next <= 1e-13 * pre_norm.max(1e-300) {
            if relres <= tol {
                converged = true;
                break;
            }
            return Err(Error::Numerical(format!(
                "Krylov space exhausted at relative residual {relres:.3e}, above the \
                 tolerance {tol:.3e}"
            )));
        }
        basis.push(w.iter().map(|z| z / h_next).collect());
        if relres <= tol {
            converged = true;
            break;
        }
    }
    let steps = history.len() - 1;
    let mut y = vec![ZERO; steps];
    for j in (0..steps).rev() {
        let mut rhs = g[j];
        for (i, yi) in y.iter().enumerate().take(steps).skip(j + 1) {
            rhs -= r_cols[i][j] * yi;
        }
        let diag = r_cols[j][j];
        if diag.norm() < 1e-300 {
            return Err(Error::Numerical(
                "least-squares system of the Arnoldi recurrence is singular".into(),
            ));
        }
        y[j] = rhs / diag;
    }
    let mut combined = vec![ZERO; b.len()];
    for (j, yj) in y.iter().enumerate() {
        for (ci, vi) in combined.iter_mut().zip(&basis[j]) {
            *ci += yj * vi;
        }
    }
    let x = checked_apply(&apply_precond_inv, &combined, "preconditioner")?;
    let final_true_residual = true_residual(&apply_op, &x, b, beta)?;
    Ok((
        x,
        SolveReport {
            iterations: steps,
            relative_residuals: history,
            converged,
            wall_seconds: clock.elapsed().as_secs_f64(),
            final_true_residual,
        },
    ))
}

/// Solves `A x = b` for Hermitian `A` by preconditioned MINRES, starting from
/// the zero guess.
///
/// `apply_hpd_precond_inv` applies the inverse of a Hermitian positive
/// definite preconditioner; pass an identity closure for the unpreconditioned
/// method. The preconditioned residual norms decrease monotonically. Loss of
/// Hermitian symmetry across the first two iterations, or an indefinite
/// preconditioner, is reported as a contract violation.
pub fn minres<A, M>(
    apply_op: A,
    apply_hpd_precond_inv: M,
    b: &[Complex64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<Complex64>, SolveReport)>
where
    A: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
    M: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    check_inputs(b, tol, maxit)?;
    let clock = Instant::now();
    let rhs_norm = norm(b);
    if !rhs_norm.is_finite() {
        return Err(Error::Numerical("right-hand side is not finite".into()));
    }
    if rhs_norm == 0.0 {
        return Ok((
            vec![ZERO; b.len()],
            SolveReport {
                iterations: 0,
                relative_residuals: vec![0.0],
                converged: true,
                wall_seconds: clock.elapsed().as_secs_f64(),
                final_true_residual: 0.0,
            },
        ));
    }
    let mut y = checked_apply(&apply_hpd_precond_inv, b, "preconditioner")?;
    let beta1_sq = inner(b, &y);
    if !(beta1_sq.re > 0.0 && beta1_sq.im.abs() <= 1e-8 * beta1_sq.re) {
        return Err(Error::ContractViolation(format!(
            "preconditioner inverse is not Hermitian positive definite: \
             ⟨b, M⁻¹b⟩ = {beta1_sq}"
        )));
    }
    let beta1 = beta1_sq.re.sqrt();
    let dim = b.len();
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut w = vec![ZERO; dim];
    let mut w2 = vec![ZERO; dim];
    let mut x = vec![ZERO; dim];
    let (mut oldb, mut beta) = (0.0_f64, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0_f64, 0.0_f64, beta1);
    let (mut cs, mut sn) = (-1.0_f64, 0.0_f64);
    let mut history = vec![1.0];
    let mut converged = false;
    let mut first_v: Vec<Complex64> = Vec::new();
    let mut first_av: Vec<Complex64> = Vec::new();
    for iter in 1..=maxit {
        let v: Vec<Complex64> = y.iter().map(|z| z / beta).collect();
        let mut av = checked_apply(&apply_op, &v, "operator")?;
        if iter == 1 {
            first_v = v.clone();
            first_av = av.clone();
        } else if iter == 2 {
            let lhs = inner(&first_av, &v);
            let rhs = inner(&av, &first_v).conj();
            let scale =
                norm(&first_av) * norm(&v) + norm(&av) * norm(&first_v) + 1e-300;
            if (lhs - rhs).norm() > 1e-8 * scale {
                return Err(Error::ContractViolation(format!(
                    "operator is not Hermitian: ⟨Av₁, v₂⟩ = {lhs} but ⟨v₁, Av₂⟩ = {rhs}"
                )));
            }
        }
        if iter >= 2 {
            let f = beta / oldb;
            for (ai, ri) in av.iter_mut().zip(&r1) {
                *ai -= f * ri;
            }
        }
        let alfa = inner(&v, &av).re;
        let f = alfa / beta;
        for (ai, ri) in av.iter_mut().zip(&r2) {
            *ai -= f * ri;
        }
        r1 = std::mem::replace(&mut r2, av);
        y = checked_apply(&apply_hpd_precond_inv, &r2, "preconditioner")?;
        oldb = beta;
        let beta_sq = inner(&r2, &y);
        if !beta_sq.re.is_finite() {
            return Err(Error::Numerical("Lanczos recurrence lost finiteness".into()));
        }
        if beta_sq.re < -1e-8 * (norm(&r2) * norm(&y) + 1e-300) {
            return Err(Error::ContractViolation(format!(
                "preconditioner inverse is not Hermitian positive definite: \
                 ⟨r, M⁻¹r⟩ = {beta_sq}"
            )));
        }
        beta = beta_sq.re.max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(1e-300);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, Vec::new());
        let w_old = std::mem::replace(&mut w, Vec::new());
        w2 = w_old;
        let mut w_new = v;
        if iter >= 3 {
            for (wi, pi) in w_new.iter_mut().zip(&w1) {
                *wi -= oldeps * pi;
            }
        }
        if iter >= 2 {
            for (wi, pi) in w_new.iter_mut().zip(&w2) {
                *wi -= delta * pi;
            }
        }
        for wi in w_new.iter_mut() {
            *wi /= gamma;
        }
        w = w_new;
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi += phi * wi;
        }
        let relres = phibar / beta1;
        history.push(relres);
        if relres <= tol {
            converged = true;
            break;
        }
        if beta <= f64::EPSILON * beta1 {
            return Err(Error::Numerical(format!(
                "Lanczos recurrence exhausted at relative residual {relres:.3e}, above \
                 the tolerance {tol:.3e}"
            )));
        }
    }
    let final_true_residual = true_residual(&apply_op, &x, b, rhs_norm)?;
    Ok((
        x,
        SolveReport {
            iterations: history.len() - 1,
            relative_residuals: history,
            converged,
            wall_seconds: clock.elapsed().as_secs_f64(),
            final_true_residual,
        },
    ))
}
