//! Geometric multigrid for shifted spatial operators.
//!
//! The preconditioner pipelines reduce to `n` independent solves with
//! `σI + τ(−L)` for complex shifts σ. When the spatial operator is not
//! DST-diagonalizable those solves are approximated by a single V-cycle of
//! geometric multigrid: one forward lexicographic Gauss–Seidel pre-sweep,
//! full-weighting restriction of the residual, a recursive coarse correction
//! on rediscretized operators, bilinear prolongation, and one backward
//! Gauss–Seidel post-sweep. The backward post-sweep mirrors the forward
//! pre-sweep so the induced V-cycle operator is Hermitian for real shifts,
//! which keeps it admissible inside MINRES.
//!
//! Coarsening halves the points per dimension (floor) down to at most 4,
//! where a dense LU factorization finishes the cycle. Vertex-centered
//! Dirichlet grids coarsen for odd `m1` (31 → 15 → 7 → 3), cell-centered
//! Neumann grids for even `m1` (32 → 16 → 8 → 4); a dimension that cannot
//! coarsen any further simply becomes the dense level. Everything runs in
//! complex arithmetic so real and complex shifts share one code path.

use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::discretize::{sample_face_coefficients, BoundaryCondition, SpatialOperator};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One grid level: stencil data plus the shifted diagonal.
struct Level {
    m1: usize,
    h: f64,
    face_w: Vec<f64>,
    face_e: Vec<f64>,
    face_s: Vec<f64>,
    face_n: Vec<f64>,
    /// σ + (τ/h²)·(aw + ae + as + an) per node.
    diag: Vec<Complex64>,
}

impl Level {
    /// Writes `(σI + τ(−L))·v` into `out`.
    fn apply_into(&self, sigma: Complex64, tau: f64, v: &[Complex64], out: &mut [Complex64]) {
        let m1 = self.m1;
        let scale = tau / (self.h * self.h);
        for iy in 0..m1 {
            for ix in 0..m1 {
                let i = iy * m1 + ix;
                let mut acc = v[i] * (self.face_w[i] + self.face_e[i] + self.face_s[i] + self.face_n[i]);
                if ix > 0 {
                    acc -= v[i - 1] * self.face_w[i];
                }
                if ix + 1 < m1 {
                    acc -= v[i + 1] * self.face_e[i];
                }
                if iy > 0 {
                    acc -= v[i - m1] * self.face_s[i];
                }
                if iy + 1 < m1 {
                    acc -= v[i + m1] * self.face_n[i];
                }
                out[i] = acc * scale + sigma * v[i];
            }
        }
    }

    /// One lexicographic Gauss–Seidel sweep; `backward` reverses the order.
    /// The shift lives inside the precomputed diagonal.
    fn gauss_seidel(&self, tau: f64, b: &[Complex64], x: &mut [Complex64], backward: bool) {
        let m1 = self.m1;
        let m = m1 * m1;
        let scale = tau / (self.h * self.h);
        let mut update = |i: usize| {
            let (ix, iy) = (i % m1, i / m1);
            let mut rhs = b[i];
            if ix > 0 {
                rhs += x[i - 1] * (scale * self.face_w[i]);
            }
            if ix + 1 < m1 {
                rhs += x[i + 1] * (scale * self.face_e[i]);
            }
            if iy > 0 {
                rhs += x[i - m1] * (scale * self.face_s[i]);
            }
            if iy + 1 < m1 {
                rhs += x[i + m1] * (scale * self.face_n[i]);
            }
            x[i] = rhs / self.diag[i];
        };
        if backward {
            for i in (0..m).rev() {
                update(i);
            }
        } else {
            for i in 0..m {
                update(i);
            }
        }
    }
}

/// Per-fine-index 1-D interpolation weights onto the next coarser level.
///
/// Prolongation applies these directly (tensor product in 2-D); restriction
/// is the scaled adjoint `R = ¼·Pᵀ`, which reproduces the classic
/// full-weighting stencil on vertex-centered grids.
struct Transfer1d {
    /// `weights[fx]` lists `(coarse index, weight)` pairs.
    weights: Vec<Vec<(usize, f64)>>,
}

impl Transfer1d {
    fn vertex(m1_fine: usize, m1_coarse: usize) -> Self {
        // Coarse point j sits at fine point 2j+1; Dirichlet zero beyond ends.
        let weights = (0..m1_fine)
            .map(|fx| {
                if fx % 2 == 1 {
                    vec![((fx - 1) / 2, 1.0)]
                } else {
                    let mut w = Vec::with_capacity(2);
                    if fx >= 2 {
                        w.push((fx / 2 - 1, 0.5));
                    }
                    if fx / 2 < m1_coarse {
                        w.push((fx / 2, 0.5));
                    }
                    w
                }
            })
            .collect();
        Self { weights }
    }

    fn cell(m1_fine: usize, m1_coarse: usize) -> Self {
        // Coarse cell j covers fine cells 2j and 2j+1; the missing neighbor
        // at the boundary folds into the center (zero-gradient reflection).
        let weights = (0..m1_fine)
            .map(|fx| {
                let center = fx / 2;
                let neighbor = if fx % 2 == 0 {
                    center.checked_sub(1)
                } else {
                    (center + 1 < m1_coarse).then_some(center + 1)
                };
                match neighbor {
                    Some(nb) => vec![(center, 0.75), (nb, 0.25)],
                    None => vec![(center, 1.0)],
                }
            })
            .collect();
        Self { weights }
    }
}

/// Immutable V-cycle hierarchy for one shift σ.
///
/// Hierarchies may be shared across threads; `vcycle` takes `&self`, so the
/// frequency solves of a preconditioner application can run concurrently.
pub struct MgHierarchy {
    sigma: Complex64,
    tau: f64,
    levels: Vec<Level>,
    transfers: Vec<Transfer1d>,
    coarse_lu: nalgebra::linalg::LU<Complex64, Dyn, Dyn>,
}

/// Builds the hierarchy for `σI + τ(−L)` from the fine spatial operator.
///
/// Coarse operators rediscretize the continuous coefficient at the coarse
/// face midpoints. Grids with `m1 ≤ 4` (or that cannot halve cleanly) become
/// the dense level directly, so a tiny problem is just a dense solve.
pub fn build_hierarchy(spatial: &SpatialOperator, sigma: Complex64) -> Result<MgHierarchy> {
    let tau = spatial.tau;
    let bc = spatial.bc;
    let coefficient = spatial.coefficient();

    let make_diag = |faces: (&[f64], &[f64], &[f64], &[f64]), h: f64| -> Vec<Complex64> {
        let scale = tau / (h * h);
        faces
            .0
            .iter()
            .zip(faces.1)
            .zip(faces.2)
            .zip(faces.3)
            .map(|(((w, e), s), n)| sigma + scale * (w + e + s + n))
            .collect()
    };

    let (fw, fe, fs, fn_) = spatial.faces();
    let mut levels = vec![Level {
        m1: spatial.m1,
        h: spatial.h,
        face_w: fw.to_vec(),
        face_e: fe.to_vec(),
        face_s: fs.to_vec(),
        face_n: fn_.to_vec(),
        diag: make_diag(spatial.faces(), spatial.h),
    }];
    let mut transfers = Vec::new();

    loop {
        let m1 = levels.last().expect("at least one level").m1;
        if m1 <= 4 {
            break;
        }
        let can_halve = match bc {
            BoundaryCondition::Dirichlet => m1 % 2 == 1,
            BoundaryCondition::Neumann => m1 % 2 == 0,
        };
        if !can_halve {
            break;
        }
        let m1c = m1 / 2;
        let hc = match bc {
            BoundaryCondition::Dirichlet => 1.0 / (m1c as f64 + 1.0),
            BoundaryCondition::Neumann => 1.0 / m1c as f64,
        };
        let faces = sample_face_coefficients(&coefficient, bc, m1c, hc)?;
        transfers.push(match bc {
            BoundaryCondition::Dirichlet => Transfer1d::vertex(m1, m1c),
            BoundaryCondition::Neumann => Transfer1d::cell(m1, m1c),
        });
        levels.push(Level {
            m1: m1c,
            h: hc,
            diag: make_diag((&faces.west, &faces.east, &faces.south, &faces.north), hc),
            face_w: faces.west,
            face_e: faces.east,
            face_s: faces.south,
            face_n: faces.north,
        });
    }

    // Dense factorization of the coarsest operator.
    let coarse = levels.last().expect("at least one level");
    let mc = coarse.m1 * coarse.m1;
    let mut dense = DMatrix::from_element(mc, mc, ZERO);
    let mut e = vec![ZERO; mc];
    let mut col = vec![ZERO; mc];
    for j in 0..mc {
        e[j] = Complex64::new(1.0, 0.0);
        coarse.apply_into(sigma, tau, &e, &mut col);
        for i in 0..mc {
            dense[(i, j)] = col[i];
        }
        e[j] = ZERO;
    }
    let coarse_lu = dense.lu();

    Ok(MgHierarchy {
        sigma,
        tau,
        levels,
        transfers,
        coarse_lu,
    })
}

impl MgHierarchy {
    /// The shift the hierarchy was built for.
    pub fn sigma(&self) -> Complex64 {
        self.sigma
    }

    /// Points per dimension on each level, finest first.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.m1).collect()
    }

    /// Fine-level unknown count.
    pub fn fine_points(&self) -> usize {
        let m1 = self.levels[0].m1;
        m1 * m1
    }

    /// Applies the fine-level operator `σI + τ(−L)`.
    pub fn apply_fine(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; v.len()];
        self.levels[0].apply_into(self.sigma, self.tau, v, &mut out);
        out
    }

    fn restrict(&self, level: usize, fine: &[Complex64]) -> Vec<Complex64> {
        let t = &self.transfers[level];
        let m1c = self.levels[level + 1].m1;
        let m1f = self.levels[level].m1;
        let mut coarse = vec![ZERO; m1c * m1c];
        for fy in 0..m1f {
            for fx in 0..m1f {
                let value = fine[fy * m1f + fx] * 0.25;
                for &(cy, wy) in &t.weights[fy] {
                    for &(cx, wx) in &t.weights[fx] {
                        coarse[cy * m1c + cx] += value * (wy * wx);
                    }
                }
            }
        }
        coarse
    }

    fn prolong_add(&self, level: usize, coarse: &[Complex64], fine: &mut [Complex64]) {
        let t = &self.transfers[level];
        let m1c = self.levels[level + 1].m1;
        let m1f = self.levels[level].m1;
        for fy in 0..m1f {
            for fx in 0..m1f {
                let mut acc = ZERO;
                for &(cy, wy) in &t.weights[fy] {
                    for &(cx, wx) in &t.weights[fx] {
                        acc += coarse[cy * m1c + cx] * (wy * wx);
                    }
                }
                fine[fy * m1f + fx] += acc;
            }
        }
    }

    fn cycle(&self, level: usize, b: &[Complex64], x0: Option<&[Complex64]>) -> Result<Vec<Complex64>> {
        if level + 1 == self.levels.len() {
            let rhs = DVector::from_column_slice(b);
            let x = self.coarse_lu.solve(&rhs).ok_or_else(|| {
                Error::Numerical(format!("coarse operator singular at level {level}"))
            })?;
            return Ok(x.data.into());
        }
        let lvl = &self.levels[level];
        let m = lvl.m1 * lvl.m1;
        let mut x = match x0 {
            Some(guess) => guess.to_vec(),
            None => vec![ZERO; m],
        };
        lvl.gauss_seidel(self.tau, b, &mut x, false);

        let mut residual = vec![ZERO; m];
        lvl.apply_into(self.sigma, self.tau, &x, &mut residual);
        for (r, rhs) in residual.iter_mut().zip(b) {
            *r = rhs - *r;
        }
        let coarse_rhs = self.restrict(level, &residual);
        let correction = self.cycle(level + 1, &coarse_rhs, None)?;
        self.prolong_add(level, &correction, &mut x);

        lvl.gauss_seidel(self.tau, b, &mut x, true);
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!(
                "V-cycle produced non-finite values at level {level}"
            )));
        }
        Ok(x)
    }
}

/// Runs one V-cycle for `(σI + τ(−L))x = b` starting from `x0`.
pub fn vcycle(h: &MgHierarchy, b: &[Complex64], x0: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = h.fine_points();
    if b.len() != m || x0.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "V-cycle expects {m} fine-level entries, got b: {}, x0: {}",
            b.len(),
            x0.len()
        )));
    }
    if b.iter().chain(x0).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("V-cycle input contains non-finite values".into()));
    }
    h.cycle(0, b, Some(x0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_spatial, build_grid, ExampleId, ProblemSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dirichlet_operator(m1: usize, n: usize, gamma: f64) -> SpatialOperator {
        let spec =
            ProblemSpec::example(ExampleId::Ex1ConstCoeff, gamma, 0.5, std::f64::consts::PI, n, m1)
                .expect("valid spec");
        let grid = build_grid(&spec);
        assemble_spatial(&spec, &grid).expect("positive coefficient")
    }

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn norm(v: &[Complex64]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn small_grid_is_single_level_dense() {
        let op = dirichlet_operator(3, 4, 1e-2);
        let h = build_hierarchy(&op, c(1.0, 0.5)).unwrap();
        assert_eq!(h.level_sizes(), vec![3]);
        // A single-level cycle is the dense solve: exact up to roundoff.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = random_vec(&mut rng, 9);
        let b = h.apply_fine(&w);
        let x = vcycle(&h, &b, &vec![ZERO; 9]).unwrap();
        for (got, want) in x.iter().zip(&w) {
            assert!((got - want).norm() < 1e-12, "dense level must solve exactly");
        }
    }

    #[test]
    fn dirichlet_level_chain_floor_halves() {
        let op = dirichlet_operator(31, 32, 1e-4);
        let h = build_hierarchy(&op, c(0.3, 0.0)).unwrap();
        assert_eq!(h.level_sizes(), vec![31, 15, 7, 3]);
    }

    #[test]
    fn neumann_level_chain_floor_halves() {
        let spec = ProblemSpec::example(ExampleId::Ex3Neumann, 1e-4, 0.5, 0.0, 32, 32).unwrap();
        let grid = build_grid(&spec);
        let op = assemble_spatial(&spec, &grid).unwrap();
        let h = build_hierarchy(&op, c(0.5, 0.1)).unwrap();
        assert_eq!(h.level_sizes(), vec![32, 16, 8, 4]);
    }

    #[test]
    fn fine_diagonal_matches_stencil_arithmetic() {
        // a ≡ 1, Dirichlet: every diagonal entry is σ + 4τ/h².
        let op = dirichlet_operator(5, 8, 1e-2);
        let sigma = c(16.0 * op.tau, 0.0);
        let h = build_hierarchy(&op, sigma).unwrap();
        let want = sigma + 4.0 * op.tau / (op.h * op.h);
        for d in &h.levels[0].diag {
            assert!((d - want).norm() < 1e-12, "level-0 diagonal entry");
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let op = dirichlet_operator(15, 16, 1e-4);
        let h = build_hierarchy(&op, c(1.0, 2.0)).unwrap();
        let x = vcycle(&h, &vec![ZERO; 225], &vec![ZERO; 225]).unwrap();
        assert!(norm(&x) == 0.0, "zero data must stay exactly zero");
    }

    #[test]
    fn one_cycle_contracts_on_benchmark_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let op = dirichlet_operator(31, 32, 1e-4);
        let alpha = op.tau / 1e-4f64.sqrt();
        let h = build_hierarchy(&op, c(alpha, 0.0)).unwrap();
        let w = random_vec(&mut rng, 961);
        let b = h.apply_fine(&w);
        let x = vcycle(&h, &b, &vec![ZERO; 961]).unwrap();
        let err: Vec<Complex64> = x.iter().zip(&w).map(|(a, b)| a - b).collect();
        let contraction = norm(&err) / norm(&w);
        assert!(
            contraction < 0.5,
            "one V-cycle must halve the error, got factor {contraction:.3}"
        );
    }

    #[test]
    fn iterated_cycles_reach_dense_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let op = dirichlet_operator(15, 16, 1e-4);
        let sigma = c(0.4, 0.8);
        let h = build_hierarchy(&op, sigma).unwrap();
        let m = 225;

        // Dense oracle from the fine-level operator columns.
        let mut dense = DMatrix::from_element(m, m, ZERO);
        for j in 0..m {
            let mut e = vec![ZERO; m];
            e[j] = c(1.0, 0.0);
            for (i, v) in h.apply_fine(&e).iter().enumerate() {
                dense[(i, j)] = *v;
            }
        }
        let b = random_vec(&mut rng, m);
        let want = dense
            .lu()
            .solve(&DVector::from_column_slice(&b))
            .expect("operator invertible");

        let mut x = vec![ZERO; m];
        for _ in 0..40 {
            x = vcycle(&h, &b, &x).unwrap();
        }
        let err: f64 = x
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err / norm(&b) < 1e-10, "iterated V-cycles must converge, err {err:.3e}");
    }

    #[test]
    fn vcycle_is_linear_in_the_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let op = dirichlet_operator(7, 8, 1e-2);
        let h = build_hierarchy(&op, c(0.9, 0.2)).unwrap();
        let m = 49;
        let b1 = random_vec(&mut rng, m);
        let b2 = random_vec(&mut rng, m);
        let sum: Vec<Complex64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
        let zero = vec![ZERO; m];
        let x1 = vcycle(&h, &b1, &zero).unwrap();
        let x2 = vcycle(&h, &b2, &zero).unwrap();
        let xs = vcycle(&h, &sum, &zero).unwrap();
        for i in 0..m {
            assert!(
                (x1[i] + x2[i] - xs[i]).norm() < 1e-12,
                "V-cycle from zero guess must be linear"
            );
        }
    }

    #[test]
    fn vcycle_operator_is_hermitian_for_real_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for (op, m) in [
            (dirichlet_operator(7, 8, 1e-2), 49usize),
            (
                {
                    let spec =
                        ProblemSpec::example(ExampleId::Ex3Neumann, 1e-2, 0.5, 0.0, 8, 8).unwrap();
                    let grid = build_grid(&spec);
                    assemble_spatial(&spec, &grid).unwrap()
                },
                64,
            ),
        ] {
            let h = build_hierarchy(&op, c(1.3, 0.0)).unwrap();
            let zero = vec![ZERO; m];
            let v = random_vec(&mut rng, m);
            let w = random_vec(&mut rng, m);
            let mv = vcycle(&h, &v, &zero).unwrap();
            let mw = vcycle(&h, &w, &zero).unwrap();
            let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
                a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
            };
            // Hermitian M satisfies ⟨w, Mv⟩ = ⟨Mw, v⟩ with ⟨a,b⟩ = Σ āᵢbᵢ.
            let lhs = dot(&w, &mv);
            let rhs = dot(&mw, &v);
            assert!(
                (lhs - rhs).norm() < 1e-10 * (lhs.norm() + 1.0),
                "symmetrized sweeps must give a Hermitian V-cycle operator"
            );
        }
    }

    #[test]
    fn variable_coefficient_cycles_converge() {
        // The benchmark's variable-coefficient operator, modest grid.
        let spec = ProblemSpec::example(ExampleId::Ex2VariableCoeff, 1e-2, 0.5, 1.0, 16, 15).unwrap();
        let grid = build_grid(&spec);
        let op = assemble_spatial(&spec, &grid).unwrap();
        let alpha = grid.tau / 1e-2f64.sqrt();
        let h = build_hierarchy(&op, c(alpha, 0.0)).unwrap();
        assert_eq!(h.level_sizes(), vec![15, 7, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let w = random_vec(&mut rng, 225);
        let b = h.apply_fine(&w);
        let mut x = vec![ZERO; 225];
        for _ in 0..25 {
            x = vcycle(&h, &b, &x).unwrap();
        }
        let err: Vec<Complex64> = x.iter().zip(&w).map(|(a, b)| a - b).collect();
        assert!(norm(&err) / norm(&w) < 1e-9, "cycles must converge on variable coefficients");
    }

    #[test]
    fn rejects_wrong_shapes_and_nonfinite_input() {
        let op = dirichlet_operator(3, 4, 1e-2);
        let h = build_hierarchy(&op, c(1.0, 0.0)).unwrap();
        assert!(matches!(
            vcycle(&h, &vec![ZERO; 4], &vec![ZERO; 9]),
            Err(Error::ShapeMismatch(_))
        ));
        let mut bad = vec![ZERO; 9];
        bad[0] = c(f64::NAN, 0.0);
        assert!(matches!(vcycle(&h, &bad, &vec![ZERO; 9]), Err(Error::Numerical(_))));
    }

    #[test]
    fn even_dirichlet_grid_stops_coarsening() {
        // m1 = 8 vertex-centered cannot halve cleanly; it becomes the dense
        // level and the cycle still solves.
        let spec = ProblemSpec::custom(
            1e-2,
            0.5,
            0.0,
            1.0,
            4,
            8,
            BoundaryCondition::Dirichlet,
            Arc::new(|_, _| 1.0),
            Arc::new(|_, _, _| 0.0),
            Arc::new(|_, _, _| 0.0),
            Arc::new(|_, _| 0.0),
            None,
            None,
        )
        .unwrap();
        let grid = build_grid(&spec);
        let op = assemble_spatial(&spec, &grid).unwrap();
        let h = build_hierarchy(&op, c(0.7, 0.0)).unwrap();
        assert_eq!(h.level_sizes(), vec![8]);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let w = random_vec(&mut rng, 64);
        let b = h.apply_fine(&w);
        let x = vcycle(&h, &b, &vec![ZERO; 64]).unwrap();
        for (got, want) in x.iter().zip(&w) {
            assert!((got - want).norm() < 1e-11);
        }
    }
}

