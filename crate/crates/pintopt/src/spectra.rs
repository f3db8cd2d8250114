//! Dense oracle laboratory: assembles every structured matrix entrywise at
//! small sizes and checks the eigenvalue, singular-value, rank, and interval
//! claims that justify the fast matrix-free paths.
//!
//! Everything here is built directly from definitions — lower-triangular
//! Toeplitz time stepping, corner-corrected circulants, Kronecker sums, and
//! Hermitian matrix square roots — so it shares no code with the FFT/DST
//! pipelines it is used to verify.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::discretize::{assemble_spatial, build_grid, ProblemSpec, SpatialOperator};
use crate::structured::{build_bn, omega_factor};
use crate::{Error, Result};

/// Largest admitted total dimension `2mn` for dense assembly.
pub const DENSE_LIMIT: usize = 4096;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Every dense matrix of the method at one parameter point.
///
/// Sizes: `bn` and `sn` are n×n, `t` is mn×mn, and the remaining members are
/// 2mn×2mn. `sn` is the corner-corrected circulant quotient; at parameter
/// points where the plain quotient does not exist (θ = 1/2, ζ = 0, even n)
/// it is synthesized from the repaired eigenvalues instead.
#[derive(Debug, Clone)]
pub struct DenseBundle {
    /// Saddle-point matrix, adjoint row first: `[[αI, Tᵀ], [T, −αI]]`.
    pub a: DMatrix<Complex64>,
    /// Row-swapped variant: `[[T, −αI], [αI, Tᵀ]]`.
    pub ahat: DMatrix<Complex64>,
    /// All-at-once evolution operator `B_n⊗I_m + I_n⊗τ(−L_m)`.
    pub t: DMatrix<Complex64>,
    /// Lower-triangular Toeplitz time-stepping quotient.
    pub bn: DMatrix<Complex64>,
    /// Circulant approximant of `bn`.
    pub sn: DMatrix<Complex64>,
    /// Structured preconditioner `[[S, −αI], [αI, S*]]` with
    /// `S = sn⊗I + I⊗τ(−L)`.
    pub ps: DMatrix<Complex64>,
    /// Its operator absolute value `diag(√(S*S+α²I), √(SS*+α²I))`.
    pub abs_ps: DMatrix<Complex64>,
    /// The solvable surrogate `diag(√(sn*sn+α²I_n)⊗I + I⊗τ(−L), …)`.
    pub pms: DMatrix<Complex64>,
    /// The auxiliary square root `diag(√((sn*sn+α²I_n)⊗I + I⊗τ²L²), …)`.
    pub pas: DMatrix<Complex64>,
    /// Absolute value `√(A²)` of the saddle-point matrix.
    pub abs_a: DMatrix<Complex64>,
}

/// Assembles the full dense bundle for a problem, using the 2-D spatial
/// operator the problem defines.
pub fn assemble_dense(spec: &ProblemSpec) -> Result<DenseBundle> {
    spec.validate()?;
    let grid = build_grid(spec);
    let spatial = assemble_spatial(spec, &grid)?;
    let x = dense_spatial(&spatial);
    assemble_from_parts(spec.theta, spec.zeta, spec.n, spec.alpha(), &x)
}

/// Extracts the dense action `τ(−L_m)` of a spatial operator, column by
/// column. Oracle scale only.
pub fn dense_spatial(spatial: &SpatialOperator) -> DMatrix<Complex64> {
    let m = spatial.m();
    let mut out = DMatrix::zeros(m, m);
    let mut e = vec![ZERO; m];
    let mut col = vec![ZERO; m];
    for j in 0..m {
        e[j] = ONE;
        spatial.apply_into(&e, &mut col);
        for i in 0..m {
            out[(i, j)] = col[i];
        }
        e[j] = ZERO;
    }
    out
}

/// Assembles the bundle from scheme parameters and a dense spatial action
/// `x = τ(−L_m)` (any symmetric real-entried matrix works, which is how the
/// one-dimensional figure path reuses this).
fn assemble_from_parts(
    theta: f64,
    zeta: f64,
    n: usize,
    alpha: f64,
    x: &DMatrix<Complex64>,
) -> Result<DenseBundle> {
    let m = x.nrows();
    let two_mn = 2 * m * n;
    if two_mn > DENSE_LIMIT {
        return Err(Error::DenseSizeGuard {
            actual: two_mn,
            limit: DENSE_LIMIT,
        });
    }
    let eye_m = DMatrix::<Complex64>::identity(m, m);
    let eye_n = DMatrix::<Complex64>::identity(n, n);
    let alpha_c = Complex64::new(alpha, 0.0);
    let alpha_sq = Complex64::new(alpha * alpha, 0.0);

    let col = build_bn(theta, n).first_column;
    let bn = DMatrix::from_fn(n, n, |j, k| if j >= k { col[j - k] } else { ZERO });
    let t = bn.kronecker(&eye_m) + eye_n.kronecker(x);

    let a = block2x2(
        &scaled_identity(m * n, alpha_c),
        &t.transpose(),
        &t,
        &scaled_identity(m * n, -alpha_c),
    );
    let ahat = block2x2(
        &t,
        &scaled_identity(m * n, -alpha_c),
        &scaled_identity(m * n, alpha_c),
        &t.transpose(),
    );

    let omega = omega_factor(theta, zeta, n);
    let sn = if omega.fixed.iter().any(|&f| f) {
        let v = dense_omega_basis(n, zeta);
        let lam = DMatrix::from_diagonal(&DVector::from_vec(omega.lambda_s.clone()));
        &v * lam * v.adjoint()
    } else {
        let z = omega_shift(n, zeta);
        let s1 = &eye_n - &z;
        let s2 = &eye_n * Complex64::new(theta, 0.0) + &z * Complex64::new(1.0 - theta, 0.0);
        let s2_inv = s2
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("circulant time factor is singular".into()))?;
        s1 * s2_inv
    };

    let s_big = sn.kronecker(&eye_m) + eye_n.kronecker(x);
    let ps = block2x2(
        &s_big,
        &scaled_identity(m * n, -alpha_c),
        &scaled_identity(m * n, alpha_c),
        &s_big.adjoint(),
    );

    let star_s = s_big.adjoint() * &s_big + scaled_identity(m * n, alpha_sq);
    let s_star = &s_big * s_big.adjoint() + scaled_identity(m * n, alpha_sq);
    let abs_ps = block_diag(&sqrtm_hermitian(&star_s)?, &sqrtm_hermitian(&s_star)?);

    let sn_star_sn = sn.adjoint() * &sn + scaled_identity(n, alpha_sq);
    let sn_sn_star = &sn * sn.adjoint() + scaled_identity(n, alpha_sq);
    let pms = block_diag(
        &(sqrtm_hermitian(&sn_star_sn)?.kronecker(&eye_m) + eye_n.kronecker(x)),
        &(sqrtm_hermitian(&sn_sn_star)?.kronecker(&eye_m) + eye_n.kronecker(x)),
    );

    let xx = x * x;
    let pas = block_diag(
        &sqrtm_hermitian(&(sn_star_sn.kronecker(&eye_m) + eye_n.kronecker(&xx)))?,
        &sqrtm_hermitian(&(sn_sn_star.kronecker(&eye_m) + eye_n.kronecker(&xx)))?,
    );

    let (a_eigs, a_vecs) = hermitian_eigen(&a)?;
    let abs_eigs = DVector::from_iterator(
        two_mn,
        a_eigs.iter().map(|l| Complex64::new(l.abs(), 0.0)),
    );
    let abs_a = &a_vecs * DMatrix::from_diagonal(&abs_eigs) * a_vecs.adjoint();

    Ok(DenseBundle {
        a,
        ahat,
        t,
        bn,
        sn,
        ps,
        abs_ps,
        pms,
        pas,
        abs_a,
    })
}

/// Result of a generalized-eigenvalue interval check.
#[derive(Debug, Clone, Copy)]
pub struct IntervalReport {
    /// Smallest generalized eigenvalue.
    pub min_eig: f64,
    /// Largest generalized eigenvalue.
    pub max_eig: f64,
    /// True iff all eigenvalues lie in `[lo − slack, hi + slack]`.
    pub pass: bool,
}

/// Eigenvalues of `hpd⁻¹·herm`, computed through the Hermitian generalized
/// problem (Cholesky congruence), sorted ascending.
pub fn generalized_eigenvalues(
    hpd: &DMatrix<Complex64>,
    herm: &DMatrix<Complex64>,
) -> Result<Vec<f64>> {
    for (name, mat) in [("left", hpd), ("right", herm)] {
        let res = hermitian_residual(mat);
        if res > 1e-10 {
            return Err(Error::ContractViolation(format!(
                "{name} matrix of a generalized eigenvalue problem deviates from Hermitian by \
                 relative {res:.3e}"
            )));
        }
    }
    let chol = hermitian_part(hpd).cholesky().ok_or_else(|| {
        Error::ContractViolation(
            "left matrix of a generalized eigenvalue problem is not positive definite".into(),
        )
    })?;
    let l = chol.l();
    // The complex Cholesky routine happily takes square roots of negative
    // pivots; a genuinely positive definite input leaves the factor diagonal
    // real and positive, so reject anything else.
    for d in l.diagonal().iter() {
        if d.re <= 0.0 || d.im.abs() > 1e-12 * (d.re.abs() + 1.0) {
            return Err(Error::ContractViolation(
                "left matrix of a generalized eigenvalue problem is not positive definite".into(),
            ));
        }
    }
    let l_inv = l
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor inversion failed".into()))?;
    let reduced = &l_inv * hermitian_part(herm) * l_inv.adjoint();
    let (reduced_eigs, _) = hermitian_eigen(&reduced)?;
    let mut eigs: Vec<f64> = reduced_eigs.iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    Ok(eigs)
}

/// Checks `σ(hpd⁻¹·herm) ⊆ [lo − slack, hi + slack]` and reports the extreme
/// eigenvalues.
pub fn check_interval(
    hpd: &DMatrix<Complex64>,
    herm: &DMatrix<Complex64>,
    lo: f64,
    hi: f64,
    slack: f64,
) -> Result<IntervalReport> {
    let eigs = generalized_eigenvalues(hpd, herm)?;
    let min_eig = eigs[0];
    let max_eig = eigs[eigs.len() - 1];
    Ok(IntervalReport {
        min_eig,
        max_eig,
        pass: min_eig >= lo - slack && max_eig <= hi + slack,
    })
}

/// Number of eigenvalues of `m` farther than `tol` from every target.
pub fn cluster_count_eigen(
    m: &DMatrix<Complex64>,
    targets: &[Complex64],
    tol: f64,
) -> Result<usize> {
    let schur = m
        .clone()
        .try_schur(1e-13, 100_000)
        .ok_or_else(|| Error::Numerical("dense Schur iteration failed to converge".into()))?;
    let (_, triangular) = schur.unpack();
    Ok(triangular
        .diagonal()
        .iter()
        .filter(|lambda| targets.iter().all(|t| (*lambda - t).norm() > tol))
        .count())
}

/// Number of singular values of `m` farther than `tol` from every target.
pub fn cluster_count_singular(m: &DMatrix<Complex64>, targets: &[f64], tol: f64) -> usize {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|s| targets.iter().all(|t| (**s - *t).abs() > tol))
        .count()
}

/// Numerical rank: singular values above `rel_tol` times the largest.
pub fn rank_of(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Sorted eigenvalues of `pms⁻¹·abs_ps` for a 2-D problem.
pub fn figure_eigs(spec: &ProblemSpec) -> Result<Vec<f64>> {
    let bundle = assemble_dense(spec)?;
    generalized_eigenvalues(&bundle.pms, &bundle.abs_ps)
}

/// Sorted eigenvalues of `pms⁻¹·abs_ps` with a one-dimensional unit-coefficient
/// Laplacian on `points` interior nodes in place of the 2-D spatial operator.
pub fn figure_eigs_1d(
    theta: f64,
    zeta: f64,
    gamma: f64,
    n: usize,
    points: usize,
    final_time: f64,
) -> Result<Vec<f64>> {
    if points == 0 || n == 0 || gamma <= 0.0 {
        return Err(Error::InvalidSpec(
            "figure path needs points ≥ 1, n ≥ 1, γ > 0".into(),
        ));
    }
    let tau = final_time / n as f64;
    let h = 1.0 / (points + 1) as f64;
    let scale = tau / (h * h);
    let x = DMatrix::from_fn(points, points, |i, j| {
        if i == j {
            Complex64::new(2.0 * scale, 0.0)
        } else if i.abs_diff(j) == 1 {
            Complex64::new(-scale, 0.0)
        } else {
            ZERO
        }
    });
    let alpha = tau / gamma.sqrt();
    let bundle = assemble_from_parts(theta, zeta, n, alpha, &x)?;
    generalized_eigenvalues(&bundle.pms, &bundle.abs_ps)
}

/// `s·I` as a dense matrix.
fn scaled_identity(k: usize, s: Complex64) -> DMatrix<Complex64> {
    DMatrix::from_fn(k, k, |i, j| if i == j { s } else { ZERO })
}

/// `[[a, b], [c, d]]` from four equally sized square blocks.
fn block2x2(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
    d: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let k = a.nrows();
    DMatrix::from_fn(2 * k, 2 * k, |i, j| match (i < k, j < k) {
        (true, true) => a[(i, j)],
        (true, false) => b[(i, j - k)],
        (false, true) => c[(i - k, j)],
        (false, false) => d[(i - k, j - k)],
    })
}

/// `diag(a, b)` from two square blocks.
fn block_diag(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    block2x2(
        a,
        &DMatrix::zeros(a.nrows(), a.nrows()),
        &DMatrix::zeros(b.nrows(), b.nrows()),
        b,
    )
}

/// Corner-twisted cyclic shift: ones on the subdiagonal, `e^{iζ}` in the
/// upper-right corner.
fn omega_shift(n: usize, zeta: f64) -> DMatrix<Complex64> {
    let corner = Complex64::new(0.0, zeta).exp();
    DMatrix::from_fn(n, n, |j, k| {
        if j == (k + 1) % n {
            if k == n - 1 {
                corner
            } else {
                ONE
            }
        } else {
            ZERO
        }
    })
}

/// Unitary eigenbasis of the corner-twisted shift:
/// `V[j][k] = e^{−iζj/n}·e^{−2πijk/n}/√n`.
fn dense_omega_basis(n: usize, zeta: f64) -> DMatrix<Complex64> {
    let nf = n as f64;
    let scale = 1.0 / nf.sqrt();
    DMatrix::from_fn(n, n, |j, k| {
        let phase = -(zeta * j as f64 + 2.0 * std::f64::consts::PI * (j * k) as f64) / nf;
        Complex64::from_polar(scale, phase)
    })
}

/// `(m + m*)/2`.
fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Frobenius deviation from Hermitian, relative to the matrix norm.
fn hermitian_residual(m: &DMatrix<Complex64>) -> f64 {
    (m - m.adjoint()).norm() / m.norm().max(1.0)
}

/// Hermitian square root through the spectral decomposition; requires the
/// spectrum to be nonnegative up to roundoff.
fn sqrtm_hermitian(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let (eigenvalues, vectors) = hermitian_eigen(m)?;
    let max_eig = eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let floor = -1e-10 * max_eig.max(1.0);
    let mut roots = DVector::from_element(eigenvalues.len(), ZERO);
    for (i, l) in eigenvalues.iter().enumerate() {
        if *l < floor {
            return Err(Error::Numerical(format!(
                "matrix square root of an indefinite matrix (eigenvalue {l:.3e})"
            )));
        }
        roots[i] = Complex64::new(l.max(0.0).sqrt(), 0.0);
    }
    Ok(&vectors * DMatrix::from_diagonal(&roots) * vectors.adjoint())
}

/// Eigendecomposition of the Hermitian part of `m`, returned as
/// (eigenvalues, orthonormal eigenvector columns) with the residual
/// `‖V·diag(λ)·V* − M‖` driven to machine precision.
///
/// The library eigensolver keeps its factors orthonormal but can leave a
/// reconstruction error around 1e-5 relative on tightly clustered spectra,
/// which the oracle comparisons here cannot afford. A cyclic complex Jacobi
/// refinement of the rotated matrix `V*·M·V` — near-diagonal already, so a
/// few quadratically convergent sweeps suffice — restores backward
/// stability.
fn hermitian_eigen(m: &DMatrix<Complex64>) -> Result<(DVector<f64>, DMatrix<Complex64>)> {
    let dim = m.nrows();
    let herm = hermitian_part(m);
    let mut vectors = herm.clone().symmetric_eigen().eigenvectors;
    let mut rotated = vectors.adjoint() * &herm * &vectors;
    let scale = rotated.norm();
    let target = 1e-14 * scale;
    let mut sweeps = 0;
    while off_diagonal_norm(&rotated) > target {
        if sweeps == 40 {
            return Err(Error::Numerical(format!(
                "Jacobi refinement of a Hermitian eigendecomposition stalled at \
                 off-diagonal mass {:.3e} (target {target:.3e})",
                off_diagonal_norm(&rotated)
            )));
        }
        for p in 0..dim {
            for r in p + 1..dim {
                jacobi_rotate(&mut rotated, &mut vectors, p, r);
            }
        }
        sweeps += 1;
    }
    let eigenvalues = DVector::from_iterator(dim, rotated.diagonal().iter().map(|d| d.re));
    Ok((eigenvalues, vectors))
}

/// Frobenius mass of the off-diagonal part.
fn off_diagonal_norm(m: &DMatrix<Complex64>) -> f64 {
    let mut sum = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                sum += m[(i, j)].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// One two-sided Jacobi rotation annihilating the Hermitian pair
/// `(p, r)` of `a`, accumulated into the columns of `q`.
fn jacobi_rotate(a: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>, p: usize, r: usize) {
    let b = a[(p, r)];
    let b_abs = b.norm();
    if b_abs == 0.0 {
        return;
    }
    // Phase-align the pivot, then pick the classic rotation that
    // diagonalizes the real symmetric pair [[a_pp, |b|], [|b|, a_rr]].
    let phase = b / b_abs;
    let tau = (a[(r, r)].re - a[(p, p)].re) / (2.0 * b_abs);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // Columns of both `a` and `q` update as X·U with
    // U e_p = c·e_p − s·phasē·e_r and U e_r = s·e_p + c·phasē·e_r …
    let sp = Complex64::new(s, 0.0) * phase.conj();
    let cp = Complex64::new(c, 0.0) * phase.conj();
    for i in 0..a.nrows() {
        let ap = a[(i, p)];
        let ar = a[(i, r)];
        a[(i, p)] = Complex64::new(c, 0.0) * ap - sp * ar;
        a[(i, r)] = Complex64::new(s, 0.0) * ap + cp * ar;
        let qp = q[(i, p)];
        let qr = q[(i, r)];
        q[(i, p)] = Complex64::new(c, 0.0) * qp - sp * qr;
        q[(i, r)] = Complex64::new(s, 0.0) * qp + cp * qr;
    }
    // … and rows of `a` as U*·X, the conjugate transpose of the same map.
    let su = Complex64::new(s, 0.0) * phase;
    let cu = Complex64::new(c, 0.0) * phase;
    for j in 0..a.ncols() {
        let ap = a[(p, j)];
        let ar = a[(r, j)];
        a[(p, j)] = Complex64::new(c, 0.0) * ap - su * ar;
        a[(r, j)] = Complex64::new(s, 0.0) * ap + cu * ar;
    }
    // Pin the analytically known entries to kill roundoff drift.
    a[(p, r)] = ZERO;
    a[(r, p)] = ZERO;
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(r, r)] = Complex64::new(a[(r, r)].re, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::ExampleId;
    use std::f64::consts::PI;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn ex1_spec(gamma: f64, theta: f64, zeta: f64, n: usize, m1: usize) -> ProblemSpec {
        ProblemSpec::example(ExampleId::Ex1ConstCoeff, gamma, theta, zeta, n, m1)
            .expect("benchmark spec must build")
    }

    fn rel_err(got: &DMatrix<Complex64>, want: &DMatrix<Complex64>) -> f64 {
        (got - want).norm() / want.norm().max(1.0)
    }

    fn shift_down(n: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |j, k| if j == k + 1 { ONE } else { ZERO })
    }

    #[test]
    fn bn_dense_matches_bidiagonal_quotient() {
        for &theta in &[0.5, 0.75, 1.0] {
            let n = 8;
            let spec = ex1_spec(1e-4, theta, PI, n, 2);
            let bundle = assemble_dense(&spec).expect("bundle assembles");
            let eye = DMatrix::<Complex64>::identity(n, n);
            let d = shift_down(n);
            let b1 = &eye - &d;
            let b2 = &eye * Complex64::new(theta, 0.0) + &d * Complex64::new(1.0 - theta, 0.0);
            let want = b1 * b2.lu().try_inverse().expect("bidiagonal inverse");
            assert!(
                rel_err(&bundle.bn, &want) < 1e-12,
                "Toeplitz quotient differs from the bidiagonal oracle at theta {theta}: {:.3e}",
                rel_err(&bundle.bn, &want)
            );
        }
    }

    #[test]
    fn assemble_dense_guard_rejects_large_problems() {
        let spec = ex1_spec(1e-4, 0.75, PI, 64, 8);
        match assemble_dense(&spec) {
            Err(Error::DenseSizeGuard { actual, limit }) => {
                assert_eq!(actual, 8192, "guard must report the offending size");
                assert_eq!(limit, DENSE_LIMIT, "guard must report the configured limit");
            }
            other => panic!("expected the size guard to fire, got {other:?}"),
        }
    }

    #[test]
    fn dense_absolute_value_squares_to_a_squared() {
        let bundle = assemble_dense(&ex1_spec(1e-4, 0.75, PI / 2.0, 4, 2)).expect("bundle");
        let lhs = &bundle.abs_a * &bundle.abs_a;
        let rhs = &bundle.a * &bundle.a;
        assert!(
            rel_err(&lhs, &rhs) < 1e-9,
            "absolute value squared must reproduce A²: {:.3e}",
            rel_err(&lhs, &rhs)
        );
    }

    #[test]
    fn dense_ps_collapses_at_a_single_time_step() {
        let (theta, zeta, gamma, m1) = (0.8, 1.3, 1e-3, 2);
        let spec = ex1_spec(gamma, theta, zeta, 1, m1);
        let bundle = assemble_dense(&spec).expect("bundle");
        let grid = build_grid(&spec);
        let spatial = assemble_spatial(&spec, &grid).expect("spatial");
        let x = dense_spatial(&spatial);
        let m = x.nrows();
        let s = (ONE - Complex64::new(0.0, zeta).exp())
            / (Complex64::new(theta, 0.0) + Complex64::new(1.0 - theta, 0.0) * Complex64::new(0.0, zeta).exp());
        let alpha = Complex64::new(spec.alpha(), 0.0);
        let want = block2x2(
            &(&x + scaled_identity(m, s)),
            &scaled_identity(m, -alpha),
            &scaled_identity(m, alpha),
            &(&x + scaled_identity(m, s.conj())),
        );
        assert!(
            rel_err(&bundle.ps, &want) < 1e-12,
            "single-step structured preconditioner must be the scalar-shifted diffusion block: {:.3e}",
            rel_err(&bundle.ps, &want)
        );
    }

    #[test]
    fn interval_identities_hold_at_a_generic_point() {
        let bundle = assemble_dense(&ex1_spec(1e-6, 0.75, PI / 2.0, 8, 3)).expect("bundle");
        let checks = [
            (&bundle.pas, &bundle.abs_ps, 1.0, SQRT2, "aux vs abs"),
            (&bundle.pms, &bundle.pas, 1.0 / SQRT2, 1.0, "solvable vs aux"),
            (&bundle.pms, &bundle.abs_ps, 1.0 / SQRT2, SQRT2, "solvable vs abs"),
        ];
        for (left, right, lo, hi, label) in checks {
            let report = check_interval(left, right, lo, hi, 1e-9).expect("interval check runs");
            assert!(
                report.pass,
                "{label}: spectrum [{:.12}, {:.12}] escapes [{lo}, {hi}]",
                report.min_eig, report.max_eig
            );
        }
    }

    #[test]
    fn theta_half_collapses_the_auxiliary_preconditioner() {
        let bundle = assemble_dense(&ex1_spec(1e-4, 0.5, PI / 2.0, 4, 2)).expect("bundle");
        assert!(
            rel_err(&bundle.pas, &bundle.abs_ps) < 1e-10,
            "at theta = 1/2 the auxiliary and absolute-value preconditioners must coincide: {:.3e}",
            rel_err(&bundle.pas, &bundle.abs_ps)
        );
        let report =
            check_interval(&bundle.pms, &bundle.abs_ps, 1.0 / SQRT2, 1.0, 1e-9).expect("interval");
        assert!(
            report.pass,
            "theta = 1/2 narrows the solvable-vs-abs interval to [1/√2, 1], got [{:.12}, {:.12}]",
            report.min_eig, report.max_eig
        );
    }

    #[test]
    fn hermitian_part_of_sn_matches_the_symbol_formula() {
        for &(theta, zeta, n) in &[(0.75, PI / 2.0, 8usize), (1.0, 0.0, 6), (0.6, PI, 5)] {
            let spec = ex1_spec(1e-4, theta, zeta, n, 2);
            let bundle = assemble_dense(&spec).expect("bundle");
            let herm = (&bundle.sn + bundle.sn.adjoint()) * Complex64::new(0.5, 0.0);
            let mut got: Vec<f64> = (herm * Complex64::new(2.0, 0.0))
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect();
            let mut want: Vec<f64> = (0..n)
                .map(|k| {
                    let phi = (zeta + 2.0 * PI * k as f64) / n as f64;
                    2.0 * (2.0 * theta - 1.0) * (1.0 - phi.cos())
                        / (theta * theta
                            + (1.0 - theta) * (1.0 - theta)
                            + 2.0 * theta * (1.0 - theta) * phi.cos())
                })
                .collect();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                assert!(
                    (g - w).abs() < 1e-10,
                    "eigenvalue {g} of S* + S disagrees with the symbol value {w} \
                     at theta {theta}, zeta {zeta}, n {n}"
                );
                assert!(*w >= -1e-12, "symbol values must be nonnegative, got {w}");
            }
        }
    }

    #[test]
    fn unitary_involution_from_the_hermitian_shell() {
        let spec = ex1_spec(1e-6, 0.75, PI, 4, 2);
        let bundle = assemble_dense(&spec).expect("bundle");
        let mn = bundle.t.nrows();
        let s_big = bundle.ps.view((0, 0), (mn, mn)).into_owned();
        let alpha = Complex64::new(spec.alpha(), 0.0);
        let shell = block2x2(
            &scaled_identity(mn, alpha),
            &s_big.adjoint(),
            &s_big,
            &scaled_identity(mn, -alpha),
        );
        let q = bundle
            .abs_ps
            .clone()
            .lu()
            .solve(&shell)
            .expect("absolute value is invertible");
        assert!(
            rel_err(&q, &q.adjoint()) < 1e-9,
            "normalized shell must be Hermitian: {:.3e}",
            rel_err(&q, &q.adjoint())
        );
        let eye = DMatrix::<Complex64>::identity(2 * mn, 2 * mn);
        assert!(
            rel_err(&(&q * &q), &eye) < 1e-9,
            "normalized shell must be involutory: {:.3e}",
            rel_err(&(&q * &q), &eye)
        );
        let m = mn / spec.n;
        let correction = &shell - &bundle.a;
        assert!(
            rank_of(&correction, 1e-10) <= 4 * m,
            "shell correction rank {} exceeds the 4m bound {}",
            rank_of(&correction, 1e-10),
            4 * m
        );
    }

    #[test]
    fn rank_bounds_of_the_circulant_corrections() {
        for &theta in &[0.5, 0.75, 1.0] {
            for &zeta in &[0.0, PI / 2.0, PI] {
                let spec = ex1_spec(1e-4, theta, zeta, 8, 2);
                let bundle = assemble_dense(&spec).expect("bundle");
                let m = 4;
                let time_rank = rank_of(&(&bundle.sn - &bundle.bn), 1e-10);
                assert!(
                    time_rank <= 2,
                    "circulant time correction rank {time_rank} exceeds 2 \
                     at theta {theta}, zeta {zeta}"
                );
                let system_rank = rank_of(&(&bundle.ps - &bundle.ahat), 1e-10);
                assert!(
                    system_rank <= 4 * m,
                    "preconditioner correction rank {system_rank} exceeds {} \
                     at theta {theta}, zeta {zeta}",
                    4 * m
                );
            }
        }
        let zero = DMatrix::<Complex64>::zeros(6, 6);
        assert_eq!(rank_of(&zero, 1e-10), 0, "zero matrix must have rank zero");
    }

    #[test]
    fn singular_value_cluster_of_the_preconditioned_system() {
        let bundle = assemble_dense(&ex1_spec(1e-6, 0.75, PI, 8, 2)).expect("bundle");
        let m = 4;
        let preconditioned = bundle
            .ps
            .clone()
            .lu()
            .solve(&bundle.ahat)
            .expect("structured preconditioner is invertible");
        let outliers = cluster_count_singular(&preconditioned, &[1.0], 1e-8);
        assert!(
            outliers <= 8 * m,
            "{outliers} singular values away from 1 exceed the 8m bound {}",
            8 * m
        );
    }

    #[test]
    fn eigenvalue_cluster_of_the_ideal_preconditioner() {
        let bundle = assemble_dense(&ex1_spec(1e-4, 0.75, PI / 2.0, 4, 2)).expect("bundle");
        let preconditioned = bundle
            .abs_a
            .clone()
            .lu()
            .solve(&bundle.a)
            .expect("absolute value is invertible");
        let outliers = cluster_count_eigen(
            &preconditioned,
            &[Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            1e-10,
        )
        .expect("dense eigenvalues");
        assert_eq!(
            outliers, 0,
            "ideally preconditioned spectrum must be exactly ±1"
        );
    }

    #[test]
    fn corollary_interval_with_outliers() {
        let bundle = assemble_dense(&ex1_spec(1e-6, 0.75, PI, 8, 2)).expect("bundle");
        let m = 4;
        let eigs = generalized_eigenvalues(&bundle.pms, &bundle.a).expect("real spectrum");
        let slack = 1e-9;
        let outside = eigs
            .iter()
            .filter(|l| {
                let v = l.abs();
                !(1.0 / SQRT2 - slack..=SQRT2 + slack).contains(&v)
            })
            .count();
        assert!(
            outside <= 8 * m,
            "{outside} preconditioned eigenvalues escape ±[1/√2, √2], bound {}",
            8 * m
        );
    }

    #[test]
    fn figure_path_stays_in_the_predicted_interval() {
        let loose = figure_eigs_1d(0.5, PI, 1e-2, 8, 7, 1.0).expect("figure eigenvalues");
        for l in &loose {
            assert!(
                (1.0 / SQRT2 - 1e-9..=1.0 + 1e-9).contains(l),
                "eigenvalue {l} escapes [1/√2, 1] on the one-dimensional figure path"
            );
        }
        let tight = figure_eigs_1d(0.5, PI, 1e-6, 8, 7, 1.0).expect("figure eigenvalues");
        let mean_dist = |eigs: &[f64]| {
            eigs.iter().map(|l| (1.0 - l).abs()).sum::<f64>() / eigs.len() as f64
        };
        assert!(
            mean_dist(&tight) < mean_dist(&loose),
            "smaller regularization must cluster the figure spectrum nearer 1 \
             ({:.3e} vs {:.3e})",
            mean_dist(&tight),
            mean_dist(&loose)
        );
    }

    #[test]
    fn scalar_figure_value_matches_the_closed_form() {
        // Both points keep the symbol denominator away from zero so the
        // closed form and the assembled path evaluate the same quotient.
        for &(theta, zeta, gamma) in &[(0.6, PI, 1e-2), (0.5, PI / 2.0, 1e-4)] {
            let got = figure_eigs_1d(theta, zeta, gamma, 1, 1, 1.0).expect("scalar figure");
            assert_eq!(
                got.len(),
                2,
                "one step and one point give one eigenvalue per diagonal block"
            );
            let tau = 1.0;
            let h = 0.5;
            let x = tau * 2.0 / (h * h);
            let alpha = tau / gamma.sqrt();
            let s = (ONE - Complex64::new(0.0, zeta).exp())
                / (Complex64::new(theta, 0.0)
                    + Complex64::new(1.0 - theta, 0.0) * Complex64::new(0.0, zeta).exp());
            let abs_value = ((s + x).norm_sqr() + alpha * alpha).sqrt();
            let solvable = (s.norm_sqr() + alpha * alpha).sqrt() + x;
            let want = abs_value / solvable;
            for value in &got {
                assert!(
                    (value - want).abs() < 1e-12,
                    "scalar figure eigenvalue {value} must equal the closed form {want} \
                     at theta {theta}, zeta {zeta}"
                );
            }
        }
    }

    #[test]
    fn check_interval_rejects_unsymmetric_inputs() {
        let eye = DMatrix::<Complex64>::identity(3, 3);
        let mut skew = DMatrix::<Complex64>::zeros(3, 3);
        skew[(0, 1)] = ONE;
        match check_interval(&eye, &skew, 0.0, 1.0, 0.0) {
            Err(Error::ContractViolation(_)) => {}
            other => panic!("expected a contract violation for a non-Hermitian input, got {other:?}"),
        }
        let negative = &eye * Complex64::new(-1.0, 0.0);
        match check_interval(&negative, &eye, 0.0, 1.0, 0.0) {
            Err(Error::ContractViolation(_)) => {}
            other => panic!("expected a contract violation for an indefinite left matrix, got {other:?}"),
        }
    }
}
