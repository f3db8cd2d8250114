//! Problem setup and discretization.
//!
//! Turns a continuous tracking-type control problem — minimize
//! ½‖y − g‖² + (γ/2)‖u‖² subject to `y_t − ∇·(a∇y) = f + u` — into the
//! all-at-once linear system the solver stack works on. The θ-method in time
//! and a conservative 5-point finite-difference stencil in space produce a
//! coupled system in the state `y` and adjoint `p` (the control is
//! eliminated through `u = p/γ`). After scaling by `B^{(2)}` in time the
//! solved unknown is `[√γ·ỹ; p̃]`; this module builds the grids, the spatial
//! operator `τ(−L)`, the right-hand sides, and the maps back to `(y, p, u)`
//! together with the benchmark error measure.

use std::sync::Arc;

use num_complex::Complex64;

use crate::{Error, Result};

/// Scalar field on space–time, `(x1, x2, t) ↦ value`.
pub type FieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Scalar field on space only, `(x1, x2) ↦ value`.
pub type SpaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Boundary condition of the spatial operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet on a vertex-centered interior grid.
    Dirichlet,
    /// Homogeneous Neumann on a cell-centered grid (ghost-cell reflection).
    Neumann,
}

/// Built-in benchmark problems (all on Ω = (0,1)², T = 1) plus a custom slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleId {
    /// Constant unit diffusion, Dirichlet; smooth product solution.
    Ex1ConstCoeff,
    /// Variable diffusion `1e-5·sin(πx₁x₂)`, Dirichlet; nonzero adjoint.
    Ex2VariableCoeff,
    /// Constant diffusion `1e-3`, Neumann; cosine product solution.
    Ex3Neumann,
    /// Caller-supplied data.
    Custom,
}

/// Continuous problem plus discretization parameters.
///
/// Function handles are shared closures so a spec can be cloned cheaply and
/// moved across threads.
#[derive(Clone)]
pub struct ProblemSpec {
    /// Control regularization weight γ > 0.
    pub gamma: f64,
    /// Time scheme parameter θ ∈ [1/2, 1].
    pub theta: f64,
    /// Corner phase ζ ∈ [0, 2π) of the time-direction approximant.
    pub zeta: f64,
    /// Final time T > 0.
    pub final_time: f64,
    /// Number of time steps n ≥ 1.
    pub n: usize,
    /// Interior points (Dirichlet) or cells (Neumann) per dimension.
    pub m1: usize,
    /// Boundary condition.
    pub bc: BoundaryCondition,
    /// Which benchmark the handles were resolved from.
    pub example_id: ExampleId,
    /// Diffusion coefficient a(x) > 0.
    pub coefficient: SpaceFn,
    /// Forcing f(x, t).
    pub forcing: FieldFn,
    /// Tracking target g(x, t).
    pub target: FieldFn,
    /// Initial state y₀(x).
    pub initial: SpaceFn,
    /// Analytic state, if known (used by the error measure).
    pub analytic_y: Option<FieldFn>,
    /// Analytic adjoint, if known.
    pub analytic_p: Option<FieldFn>,
}

impl ProblemSpec {
    /// Resolves a built-in benchmark into a full spec.
    ///
    /// `Ex1ConstCoeff`: a ≡ 1, Dirichlet, y* = e^{−t}sin(πx₁)sin(πx₂),
    /// p* = 0. `Ex2VariableCoeff`: a = 1e-5·sin(πx₁x₂), Dirichlet,
    /// y* = e^{−t}x₁(1−x₁)x₂(1−x₂), p* = γ·sin(πt)sin(πx₁)sin(πx₂).
    /// `Ex3Neumann`: a ≡ 1e-3, Neumann, y* = e^{−t}cos(2πx₁)cos(2πx₂),
    /// p* = 0. Forcing and target are the fields that make those exact.
    pub fn example(
        example_id: ExampleId,
        gamma: f64,
        theta: f64,
        zeta: f64,
        n: usize,
        m1: usize,
    ) -> Result<Self> {
        use std::f64::consts::PI;
        let spec = match example_id {
            ExampleId::Ex1ConstCoeff => {
                let y = |x1: f64, x2: f64, t: f64| (-t).exp() * (PI * x1).sin() * (PI * x2).sin();
                Self {
                    gamma,
                    theta,
                    zeta,
                    final_time: 1.0,
                    n,
                    m1,
                    bc: BoundaryCondition::Dirichlet,
                    example_id,
                    coefficient: Arc::new(|_, _| 1.0),
                    forcing: Arc::new(move |x1, x2, t| (2.0 * PI * PI - 1.0) * y(x1, x2, t)),
                    target: Arc::new(y),
                    initial: Arc::new(move |x1, x2| y(x1, x2, 0.0)),
                    analytic_y: Some(Arc::new(y)),
                    analytic_p: Some(Arc::new(|_, _, _| 0.0)),
                }
            }
            ExampleId::Ex2VariableCoeff => {
                const A0: f64 = 1e-5;
                let coeff = |x1: f64, x2: f64| A0 * (PI * x1 * x2).sin();
                let y = |x1: f64, x2: f64, t: f64| {
                    (-t).exp() * x1 * (1.0 - x1) * x2 * (1.0 - x2)
                };
                let p = move |x1: f64, x2: f64, t: f64| {
                    gamma * (PI * t).sin() * (PI * x1).sin() * (PI * x2).sin()
                };
                // f = y_t − ∇·(a∇y) − p/γ and g = −p_t − ∇·(a∇p) + y for the
                // fields above, expanded by hand.
                let forcing = move |x1: f64, x2: f64, t: f64| {
                    let s = (PI * x1 * x2).sin();
                    let c = (PI * x1 * x2).cos();
                    let et = (-t).exp();
                    -(PI * t).sin() * (PI * x1).sin() * (PI * x2).sin()
                        + et * (x1
                            * (1.0 - x1)
                            * (2.0 * A0 * s
                                - x2 * (1.0 - x2)
                                - A0 * PI * c * x1 * (1.0 - 2.0 * x2))
                            + x2 * (1.0 - x2)
                                * (2.0 * A0 * s - A0 * PI * c * x2 * (1.0 - 2.0 * x1)))
                };
                let gam = gamma;
                let targ = move |x1: f64, x2: f64, t: f64| {
                    let s = (PI * x1 * x2).sin();
                    let c = (PI * x1 * x2).cos();
                    let (s1, c1) = (PI * x1).sin_cos();
                    let (s2, c2) = (PI * x2).sin_cos();
                    -gam * PI * (PI * t).cos() * s1 * s2
                        + (-t).exp() * x1 * (1.0 - x1) * x2 * (1.0 - x2)
                        + A0 * gam
                            * PI
                            * PI
                            * (PI * t).sin()
                            * (2.0 * s * s1 * s2 - c * (x1 * s1 * c2 + x2 * c1 * s2))
                };
                Self {
                    gamma,
                    theta,
                    zeta,
                    final_time: 1.0,
                    n,
                    m1,
                    bc: BoundaryCondition::Dirichlet,
                    example_id,
                    coefficient: Arc::new(coeff),
                    forcing: Arc::new(forcing),
                    target: Arc::new(targ),
                    initial: Arc::new(move |x1, x2| y(x1, x2, 0.0)),
                    analytic_y: Some(Arc::new(y)),
                    analytic_p: Some(Arc::new(p)),
                }
            }
            ExampleId::Ex3Neumann => {
                const A0: f64 = 1e-3;
                let y = |x1: f64, x2: f64, t: f64| {
                    (-t).exp() * (2.0 * PI * x1).cos() * (2.0 * PI * x2).cos()
                };
                Self {
                    gamma,
                    theta,
                    zeta,
                    final_time: 1.0,
                    n,
                    m1,
                    bc: BoundaryCondition::Neumann,
                    example_id,
                    coefficient: Arc::new(|_, _| A0),
                    forcing: Arc::new(move |x1, x2, t| {
                        (8.0 * PI * PI * A0 - 1.0) * y(x1, x2, t)
                    }),
                    target: Arc::new(y),
                    initial: Arc::new(move |x1, x2| y(x1, x2, 0.0)),
                    analytic_y: Some(Arc::new(y)),
                    analytic_p: Some(Arc::new(|_, _, _| 0.0)),
                }
            }
            ExampleId::Custom => {
                return Err(Error::InvalidSpec(
                    "Custom problems must be built with ProblemSpec::custom".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a fully caller-specified problem.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        gamma: f64,
        theta: f64,
        zeta: f64,
        final_time: f64,
        n: usize,
        m1: usize,
        bc: BoundaryCondition,
        coefficient: SpaceFn,
        forcing: FieldFn,
        target: FieldFn,
        initial: SpaceFn,
        analytic_y: Option<FieldFn>,
        analytic_p: Option<FieldFn>,
    ) -> Result<Self> {
        let spec = Self {
            gamma,
            theta,
            zeta,
            final_time,
            n,
            m1,
            bc,
            example_id: ExampleId::Custom,
            coefficient,
            forcing,
            target,
            initial,
            analytic_y,
            analytic_p,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the parameter ranges every operation relies on.
    pub fn validate(&self) -> Result<()> {
        use std::f64::consts::PI;
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidSpec(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::InvalidSpec(format!(
                "theta must lie in [1/2, 1], got {}",
                self.theta
            )));
        }
        if !(0.0..2.0 * PI).contains(&self.zeta) {
            return Err(Error::InvalidSpec(format!(
                "zeta must lie in [0, 2π), got {}",
                self.zeta
            )));
        }
        if !(self.final_time > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "final time must be positive, got {}",
                self.final_time
            )));
        }
        if self.n == 0 || self.m1 == 0 {
            return Err(Error::InvalidSpec(format!(
                "n and m1 must be at least 1, got n = {}, m1 = {}",
                self.n, self.m1
            )));
        }
        Ok(())
    }

    /// Time step τ = T/n.
    pub fn tau(&self) -> f64 {
        self.final_time / self.n as f64
    }

    /// Space step: 1/(m1+1) for Dirichlet, 1/m1 for Neumann.
    pub fn h(&self) -> f64 {
        match self.bc {
            BoundaryCondition::Dirichlet => 1.0 / (self.m1 as f64 + 1.0),
            BoundaryCondition::Neumann => 1.0 / self.m1 as f64,
        }
    }

    /// Coupling weight α = τ/√γ.
    pub fn alpha(&self) -> f64 {
        self.tau() / self.gamma.sqrt()
    }
}

/// Uniform tensor grid for one of the boundary conditions.
#[derive(Debug, Clone)]
pub struct Grid {
    /// Space step.
    pub h: f64,
    /// Time step.
    pub tau: f64,
    /// Points (or cells) per dimension.
    pub m1: usize,
    /// Total space points m = m1².
    pub m: usize,
    /// Time steps.
    pub n: usize,
    /// Boundary condition the layout corresponds to.
    pub bc: BoundaryCondition,
    /// Node coordinates per space index (x1 varies fastest).
    pub coords: Vec<(f64, f64)>,
}

impl Grid {
    /// Space index of the node at column `ix`, row `iy`.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.m1 + ix
    }
}

/// Lays out the grid for a validated spec.
pub fn build_grid(spec: &ProblemSpec) -> Grid {
    let m1 = spec.m1;
    let h = spec.h();
    let offset = match spec.bc {
        BoundaryCondition::Dirichlet => 1.0,
        BoundaryCondition::Neumann => 0.5,
    };
    let mut coords = Vec::with_capacity(m1 * m1);
    for iy in 0..m1 {
        for ix in 0..m1 {
            coords.push(((ix as f64 + offset) * h, (iy as f64 + offset) * h));
        }
    }
    Grid {
        h,
        tau: spec.tau(),
        m1,
        m: m1 * m1,
        n: spec.n,
        bc: spec.bc,
        coords,
    }
}

/// Complex vector of length `2mn` in (block, time, space) layout: entry
/// `(b, k, i)` lives at `b·mn + k·m + i`.
#[derive(Debug, Clone)]
pub struct BlockVector {
    /// The stacked data.
    pub data: Vec<Complex64>,
    /// Space points per time slice.
    pub m: usize,
    /// Time slices per block.
    pub n: usize,
}

impl BlockVector {
    /// All-zero vector for the given slice sizes.
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); 2 * m * n],
            m,
            n,
        }
    }

    /// Wraps existing data, checking the length.
    pub fn from_data(data: Vec<Complex64>, m: usize, n: usize) -> Result<Self> {
        if data.len() != 2 * m * n {
            return Err(Error::ShapeMismatch(format!(
                "block vector needs 2·{m}·{n} = {} entries, got {}",
                2 * m * n,
                data.len()
            )));
        }
        Ok(Self { data, m, n })
    }

    /// Total length 2mn.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// True when the vector has no entries.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Read-only view of block `b ∈ {0, 1}` (length mn).
    pub fn block(&self, b: usize) -> &[Complex64] {
        let mn = self.m * self.n;
        &self.data[b * mn..(b + 1) * mn]
    }

    /// Mutable view of block `b ∈ {0, 1}`.
    pub fn block_mut(&mut self, b: usize) -> &mut [Complex64] {
        let mn = self.m * self.n;
        &mut self.data[b * mn..(b + 1) * mn]
    }

    /// Euclidean norm of the full vector.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Real state/adjoint trajectories, `n` slices of `m` values each.
///
/// Slice `k` of `y` holds the state at `t_{k+1}`; slice `k` of `p` holds the
/// adjoint at `t_k` (the unknowns are `y^{(1..n)}` and `p^{(0..n−1)}`).
#[derive(Debug, Clone)]
pub struct StatePair {
    /// State slices, slice k at `k·m..(k+1)·m`.
    pub y: Vec<f64>,
    /// Adjoint slices, same layout.
    pub p: Vec<f64>,
    /// Recovered control u = p/γ, if requested.
    pub u: Option<Vec<f64>>,
    /// Space points per slice.
    pub m: usize,
    /// Number of slices.
    pub n: usize,
}

// ---------------------------------------------------------------------------
// Spatial operator
// ---------------------------------------------------------------------------

/// Matrix-free action of `τ·(−L)` where `−L` is the conservative 5-point
/// discretization of `−∇·(a∇·)`, plus the stencil data coarser levels and
/// fast transforms need.
///
/// The coefficient is sampled at cell-face midpoints, which keeps the
/// operator symmetric for any positive `a`. Dirichlet rows keep the boundary
/// face coefficient on the diagonal (the eliminated neighbor value is zero);
/// Neumann boundary faces carry zero flux, so their coefficient is dropped
/// entirely and constants lie in the null space.
#[derive(Clone)]
pub struct SpatialOperator {
    /// Points per dimension.
    pub m1: usize,
    /// Space step.
    pub h: f64,
    /// Time step the action is scaled by.
    pub tau: f64,
    /// Boundary condition.
    pub bc: BoundaryCondition,
    /// True iff the operator is diagonalized by the orthonormal DST-I
    /// (constant coefficient with Dirichlet boundary).
    pub dst_diagonalizable: bool,
    /// The constant coefficient value when the sampled faces agree.
    pub uniform_coefficient: Option<f64>,
    /// West/east/south/north face coefficients per node (zero = no flux).
    face_w: Vec<f64>,
    face_e: Vec<f64>,
    face_s: Vec<f64>,
    face_n: Vec<f64>,
    /// The continuous coefficient, retained for coarse rediscretization.
    coefficient: SpaceFn,
}

/// Sampled face coefficients of one grid level (zero entries mark zero-flux
/// faces) together with the sampled value range.
pub(crate) struct FaceSet {
    pub west: Vec<f64>,
    pub east: Vec<f64>,
    pub south: Vec<f64>,
    pub north: Vec<f64>,
    pub min_value: f64,
    pub max_value: f64,
}

/// Samples `a` at the cell-face midpoints of an `m1 × m1` grid with step
/// `h`, rejecting non-positive values. Neumann boundary faces are zero-flux
/// and stay unsampled. Shared between fine assembly and multigrid
/// rediscretization.
pub(crate) fn sample_face_coefficients(
    coefficient: &SpaceFn,
    bc: BoundaryCondition,
    m1: usize,
    h: f64,
) -> Result<FaceSet> {
    let m = m1 * m1;
    let mut faces = FaceSet {
        west: vec![0.0; m],
        east: vec![0.0; m],
        south: vec![0.0; m],
        north: vec![0.0; m],
        min_value: f64::INFINITY,
        max_value: f64::NEG_INFINITY,
    };
    let offset = match bc {
        BoundaryCondition::Dirichlet => 1.0,
        BoundaryCondition::Neumann => 0.5,
    };
    let neumann = bc == BoundaryCondition::Neumann;
    for iy in 0..m1 {
        for ix in 0..m1 {
            let i = iy * m1 + ix;
            let (x1, x2) = ((ix as f64 + offset) * h, (iy as f64 + offset) * h);
            let mut check = |x: f64, y: f64| -> Result<f64> {
                let value = coefficient(x, y);
                if !(value > 0.0) {
                    return Err(Error::NonPositiveCoefficient { x, y, value });
                }
                faces.min_value = faces.min_value.min(value);
                faces.max_value = faces.max_value.max(value);
                Ok(value)
            };
            if !(neumann && ix == 0) {
                faces.west[i] = check(x1 - 0.5 * h, x2)?;
            }
            if !(neumann && ix == m1 - 1) {
                faces.east[i] = check(x1 + 0.5 * h, x2)?;
            }
            if !(neumann && iy == 0) {
                faces.south[i] = check(x1, x2 - 0.5 * h)?;
            }
            if !(neumann && iy == m1 - 1) {
                faces.north[i] = check(x1, x2 + 0.5 * h)?;
            }
        }
    }
    Ok(faces)
}

/// Samples the face coefficients and builds the spatial operator.
pub fn assemble_spatial(spec: &ProblemSpec, grid: &Grid) -> Result<SpatialOperator> {
    let faces = sample_face_coefficients(&spec.coefficient, spec.bc, grid.m1, grid.h)?;
    let uniform = faces.max_value - faces.min_value <= 1e-14 * faces.max_value.abs().max(1.0);
    let uniform_coefficient = uniform.then_some(0.5 * (faces.min_value + faces.max_value));
    Ok(SpatialOperator {
        m1: grid.m1,
        h: grid.h,
        tau: grid.tau,
        bc: spec.bc,
        dst_diagonalizable: uniform && spec.bc == BoundaryCondition::Dirichlet,
        uniform_coefficient,
        face_w: faces.west,
        face_e: faces.east,
        face_s: faces.south,
        face_n: faces.north,
        coefficient: spec.coefficient.clone(),
    })
}

impl SpatialOperator {
    /// Total space points m = m1².
    pub fn m(&self) -> usize {
        self.m1 * self.m1
    }

    /// The continuous coefficient handle (for rediscretization).
    pub fn coefficient(&self) -> SpaceFn {
        self.coefficient.clone()
    }

    /// Face coefficient arrays (west, east, south, north).
    pub(crate) fn faces(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.face_w, &self.face_e, &self.face_s, &self.face_n)
    }

    /// Writes `τ·(−L)·field` into `out`.
    pub fn apply_into(&self, field: &[Complex64], out: &mut [Complex64]) {
        let m1 = self.m1;
        debug_assert_eq!(field.len(), self.m());
        debug_assert_eq!(out.len(), self.m());
        let scale = self.tau / (self.h * self.h);
        for iy in 0..m1 {
            for ix in 0..m1 {
                let i = iy * m1 + ix;
                let (aw, ae, as_, an) = (self.face_w[i], self.face_e[i], self.face_s[i], self.face_n[i]);
                let mut acc = field[i] * (aw + ae + as_ + an);
                if ix > 0 {
                    acc -= field[i - 1] * aw;
                }
                if ix + 1 < m1 {
                    acc -= field[i + 1] * ae;
                }
                if iy > 0 {
                    acc -= field[i - m1] * as_;
                }
                if iy + 1 < m1 {
                    acc -= field[i + m1] * an;
                }
                out[i] = acc * scale;
            }
        }
    }

    /// Returns `τ·(−L)·field`.
    pub fn apply(&self, field: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
        self.apply_into(field, &mut out);
        out
    }

    /// Eigenvalues of `τ·(−L)` in DST field order, when the operator is
    /// DST-diagonalizable.
    pub fn dst_spectrum(&self) -> Result<Vec<f64>> {
        if !self.dst_diagonalizable {
            return Err(Error::NotDstDiagonalizable(
                "spatial operator has a variable coefficient or non-Dirichlet boundary".into(),
            ));
        }
        let c = self.uniform_coefficient.expect("uniform when diagonalizable");
        Ok(crate::structured::dst1_eigenvalues(self.m1, self.h)
            .into_iter()
            .map(|mu| self.tau * c * mu)
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

/// Which row ordering of the all-at-once system a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemForm {
    /// Symmetric form: adjoint row first, right-hand side `[g̃; √γ·f̃]`.
    Symmetric,
    /// Row-swapped form: state row first, right-hand side `[√γ·f̃; g̃]`.
    RowSwapped,
}

/// Builds the all-at-once right-hand side in the requested row ordering.
///
/// With unit mass matrix the slices are
/// `f̃₁ = τ(θf^{(1)} + (1−θ)f^{(0)}) + y⁰ − (1−θ)·τ(−L)y⁰`,
/// `f̃_k = τ(θf^{(k)} + (1−θ)f^{(k−1)})` for k ≥ 2, and
/// `g̃₁ = τ(θg^{(0)} + (1−θ)g^{(1)} − (1−θ)y⁰)`,
/// `g̃_k = τ(θg^{(k−1)} + (1−θ)g^{(k)})` for k ≥ 2.
pub fn assemble_rhs(spec: &ProblemSpec, grid: &Grid, form: SystemForm) -> Result<BlockVector> {
    let (m, n) = (grid.m, grid.n);
    let (tau, theta) = (grid.tau, spec.theta);
    let sqrt_gamma = spec.gamma.sqrt();
    let spatial = assemble_spatial(spec, grid)?;

    let sample = |f: &FieldFn, level: usize| -> Vec<f64> {
        let t = level as f64 * tau;
        grid.coords.iter().map(|&(x1, x2)| f(x1, x2, t)).collect()
    };
    let y0: Vec<f64> = grid.coords.iter().map(|&(x1, x2)| (spec.initial)(x1, x2)).collect();
    let y0_complex: Vec<Complex64> = y0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let ly0 = spatial.apply(&y0_complex);

    let mut f_block = vec![Complex64::new(0.0, 0.0); m * n];
    let mut g_block = vec![Complex64::new(0.0, 0.0); m * n];
    let mut f_prev = sample(&spec.forcing, 0);
    let mut g_prev = sample(&spec.target, 0);
    for k in 1..=n {
        let f_cur = sample(&spec.forcing, k);
        let g_cur = sample(&spec.target, k);
        let slice = (k - 1) * m;
        for i in 0..m {
            let mut fv = tau * (theta * f_cur[i] + (1.0 - theta) * f_prev[i]);
            let mut gv = tau * (theta * g_prev[i] + (1.0 - theta) * g_cur[i]);
            if k == 1 {
                fv += y0[i];
                gv -= tau * (1.0 - theta) * y0[i];
            }
            f_block[slice + i] = Complex64::new(fv, 0.0);
            g_block[slice + i] = Complex64::new(gv, 0.0);
            if k == 1 {
                f_block[slice + i] -= (1.0 - theta) * ly0[i];
            }
        }
        f_prev = f_cur;
        g_prev = g_cur;
    }

    let mut rhs = BlockVector::zeros(m, n);
    let (first, second) = match form {
        SystemForm::Symmetric => (&g_block, &f_block),
        SystemForm::RowSwapped => (&f_block, &g_block),
    };
    let scale_first = matches!(form, SystemForm::RowSwapped);
    for (dst, src) in rhs.block_mut(0).iter_mut().zip(first.iter()) {
        *dst = if scale_first { src * sqrt_gamma } else { *src };
    }
    for (dst, src) in rhs.block_mut(1).iter_mut().zip(second.iter()) {
        *dst = if scale_first { *src } else { src * sqrt_gamma };
    }
    Ok(rhs)
}

// ---------------------------------------------------------------------------
// Recovery and error measure
// ---------------------------------------------------------------------------

/// Maps a converged unknown `[√γ·ỹ; p̃]` back to the trajectories `(y, p)`.
///
/// `ỹ = (B^{(2)} ⊗ I)y` is inverted by forward substitution in time
/// (diagonal θ, subdiagonal 1−θ); the adjoint system uses the transpose and
/// runs backward. Imaginary parts are a solver artifact; they must be small
/// and are discarded.
pub fn recover_state(raw: &BlockVector, spec: &ProblemSpec) -> Result<StatePair> {
    let (m, n) = (raw.m, raw.n);
    let theta = spec.theta;
    let inv_sqrt_gamma = 1.0 / spec.gamma.sqrt();

    // Forward substitution for y: y₁ = ỹ₁/θ, y_k = (ỹ_k − (1−θ)y_{k−1})/θ.
    let ytilde = raw.block(0);
    let mut y = vec![Complex64::new(0.0, 0.0); m * n];
    for k in 0..n {
        for i in 0..m {
            let mut v = ytilde[k * m + i] * inv_sqrt_gamma;
            if k > 0 {
                v -= (1.0 - theta) * y[(k - 1) * m + i];
            }
            y[k * m + i] = v / theta;
        }
    }

    // Backward substitution for p: p_n = p̃_n/θ, p_k = (p̃_k − (1−θ)p_{k+1})/θ.
    let ptilde = raw.block(1);
    let mut p = vec![Complex64::new(0.0, 0.0); m * n];
    for k in (0..n).rev() {
        for i in 0..m {
            let mut v = ptilde[k * m + i];
            if k + 1 < n {
                v -= (1.0 - theta) * p[(k + 1) * m + i];
            }
            p[k * m + i] = v / theta;
        }
    }

    let split = |v: Vec<Complex64>, which: &str| -> Result<Vec<f64>> {
        let imag_norm: f64 = v.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        let full_norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if imag_norm > 1e-8 * full_norm.max(1.0) {
            return Err(Error::Numerical(format!(
                "recovered {which} has imaginary norm {imag_norm:.3e} (vector norm {full_norm:.3e})"
            )));
        }
        Ok(v.into_iter().map(|z| z.re).collect())
    };
    Ok(StatePair {
        y: split(y, "state")?,
        p: split(p, "adjoint")?,
        u: None,
        m,
        n,
    })
}

/// Recovers the eliminated control `u = p/γ` elementwise.
pub fn recover_control(p: &[f64], gamma: f64) -> Vec<f64> {
    p.iter().map(|&v| v / gamma).collect()
}

/// Samples the analytic trajectories on the grid's slice layout, if the
/// problem knows them.
pub fn analytic_state(spec: &ProblemSpec, grid: &Grid) -> Option<StatePair> {
    let y_fn = spec.analytic_y.as_ref()?;
    let p_fn = spec.analytic_p.as_ref()?;
    let (m, n) = (grid.m, grid.n);
    let mut y = vec![0.0; m * n];
    let mut p = vec![0.0; m * n];
    for k in 0..n {
        let ty = (k as f64 + 1.0) * grid.tau;
        let tp = k as f64 * grid.tau;
        for (i, &(x1, x2)) in grid.coords.iter().enumerate() {
            y[k * m + i] = y_fn(x1, x2, ty);
            p[k * m + i] = p_fn(x1, x2, tp);
        }
    }
    Some(StatePair { y, p, u: None, m, n })
}

/// Maximum over time slices of the discrete L² norm of the stacked
/// state/adjoint error: `max_k h·(Σᵢ (Δy_k)ᵢ² + (Δp_k)ᵢ²)^{1/2}`.
pub fn error_measure(numeric: &StatePair, analytic: &StatePair, grid: &Grid) -> Result<f64> {
    if numeric.m != analytic.m || numeric.n != analytic.n || numeric.m != grid.m {
        return Err(Error::ShapeMismatch(format!(
            "state shapes differ: numeric {}×{}, analytic {}×{}, grid m = {}",
            numeric.n, numeric.m, analytic.n, analytic.m, grid.m
        )));
    }
    let m = grid.m;
    let mut worst = 0.0f64;
    for k in 0..numeric.n {
        let mut acc = 0.0;
        for i in 0..m {
            let dy = numeric.y[k * m + i] - analytic.y[k * m + i];
            let dp = numeric.p[k * m + i] - analytic.p[k * m + i];
            acc += dy * dy + dp * dp;
        }
        worst = worst.max(grid.h * acc.sqrt());
    }
    Ok(worst)
}
