//! The frequency-independent kernel that drives the loop amplitudes.
//!
//! With one photon in the loop the four loop amplitudes
//! `R = (R₀₀, R₁₀, R₀₁, R₁₁)(ω, t)` obey `dR/dt = (A₀ − iω) R − i G(ω) (α₁, β₁, 0, 0)`.
//! `A₀` does not depend on `ω`, so its eigendecomposition `A₀ = E diag(c) E⁻¹`
//! lets every loop quantity be written through the per-step source vector
//! `w(t') = E⁻¹ (α₁, β₁, 0, 0)(t')` and the scalings `e^{c_j (t − t')}`.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Result, SimError};
use crate::params::SystemParams;
use crate::C64;

/// Largest tolerated eigenvector condition number.
pub const MAX_CONDITION: f64 = 1e8;
/// Scaled residual bound for `A₀ E = E diag(c)`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Real parts above this are treated as growing modes.
pub const GROWTH_TOL: f64 = 1e-9;
const SCHUR_MAX_ITER: usize = 1000;
const CLUSTER_TOL: f64 = 1e-8;
const MAX_EXPONENT: f64 = 700.0;

const I: C64 = C64::new(0.0, 1.0);

/// Builds `A₀`, the loop-amplitude matrix with the `−iω` diagonal removed.
///
/// Rows and columns are ordered `(R₀₀, R₁₀, R₀₁, R₁₁)`, i.e. (TLS, cavity)
/// occupations `(0,0), (1,0), (0,1), (1,1)`. The same matrix is `−i H⁰_eff`
/// on the system basis `(α₀, β₀, α₁, β₁)`.
pub fn build_kernel_matrix(p: &SystemParams) -> Matrix4<C64> {
    let z = C64::new(0.0, 0.0);
    let w = -I * p.omega;
    let g = -I * p.g;
    Matrix4::new(
        z, w, z, z, //
        w, -p.b_n(0), g, z, //
        z, g, -p.a_n(1), w, //
        z, z, w, -p.b_n(1),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigensystem {
    /// Eigenvalue offsets, sorted by (imaginary, real) part ascending.
    pub c: [C64; 4],
    /// Column `j` is the unit-norm eigenvector for `c[j]`.
    pub e: Matrix4<C64>,
    /// `E⁻¹`.
    pub b: Matrix4<C64>,
    pub cond_estimate: f64,
}

fn sort_key(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re))
}

/// Scales `v` to unit 2-norm with its first non-negligible entry real-positive.
fn canonical_phase(v: &mut Vector4<C64>) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    *v /= C64::new(norm, 0.0);
    if let Some(first) = v.iter().copied().find(|x| x.norm() > 1e-10) {
        let phase = first / first.norm();
        *v /= phase;
    }
}

/// Orthonormal basis of the null space of `m`, assuming it has dimension `k`.
/// Returns the basis and the largest discarded-as-zero singular value.
fn null_space(m: &Matrix4<C64>, k: usize) -> (Vec<Vector4<C64>>, f64) {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let small = svd.singular_values[order[k - 1]];
    let basis: Vec<Vector4<C64>> = order[..k]
        .iter()
        .map(|&i| v_t.row(i).adjoint().into_owned())
        .collect();

    // The SVD basis of a degenerate space is arbitrary; rebuild it from the
    // (basis-independent) projector so repeated runs agree exactly.
    let mut proj = Matrix4::<C64>::zeros();
    for q in &basis {
        proj += q * q.adjoint();
    }
    let mut out: Vec<Vector4<C64>> = Vec::with_capacity(k);
    for col in 0..4 {
        if out.len() == k {
            break;
        }
        let mut v: Vector4<C64> = proj.column(col).into_owned();
        for q in &out {
            let overlap = q.dotc(&v);
            v -= q * overlap;
        }
        let n = v.norm();
        if n > 1e-6 {
            out.push(v / C64::new(n, 0.0));
        }
    }
    // Pathological projector; fall back to the raw SVD basis.
    if out.len() < k {
        out = basis;
    }
    (out, small)
}

/// Eigenvalues from a complex Schur form. The shifted QR iteration can
/// stall on purely imaginary spectra, so on failure the matrix is rotated by
/// a unit phase and the eigenvalues are rotated back.
fn schur_eigenvalues(a0: &Matrix4<C64>) -> Option<Vec<C64>> {
    for theta in [0.0, 0.1, 0.37, 1.1] {
        let rot = C64::from_polar(1.0, theta);
        let Some(schur) = nalgebra::linalg::Schur::try_new(a0 * rot, f64::EPSILON, SCHUR_MAX_ITER) else {
            continue;
        };
        if let Some(ev) = schur.eigenvalues() {
            return Some(ev.iter().map(|z| z / rot).collect());
        }
    }
    None
}

/// Diagonalizes `A₀`.
pub fn eigendecompose(a0: &Matrix4<C64>) -> Result<Eigensystem> {
    let scale = a0.norm().max(1.0);
    let mut raw = schur_eigenvalues(a0).ok_or(SimError::NonDiagonalizable { condition: f64::INFINITY })?;
    raw.sort_by(sort_key);

    // Group numerically repeated eigenvalues.
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for z in raw {
        match clusters.last_mut() {
            Some(cl) if (cl[0] - z).norm() <= CLUSTER_TOL * scale => cl.push(z),
            _ => clusters.push(vec![z]),
        }
    }
    // Imaginary-part sorting may separate members of a cluster whose real
    // parts differ; merge any remaining near-duplicates.
    let mut merged: Vec<Vec<C64>> = Vec::new();
    for cl in clusters {
        if let Some(m) = merged
            .iter_mut()
            .find(|m| (m[0] - cl[0]).norm() <= CLUSTER_TOL * scale)
        {
            m.extend(cl);
        } else {
            merged.push(cl);
        }
    }

    let mut c = Vec::with_capacity(4);
    let mut columns = Vec::with_capacity(4);
    for cl in &merged {
        let k = cl.len();
        let mean = cl.iter().sum::<C64>() / C64::new(k as f64, 0.0);
        let shifted = a0 - Matrix4::<C64>::identity() * mean;
        let (basis, small) = null_space(&shifted, k);
        if small > 1e-7 * scale {
            return Err(SimError::NonDiagonalizable { condition: f64::INFINITY });
        }
        for mut v in basis {
            canonical_phase(&mut v);
            c.push(mean);
            columns.push(v);
        }
    }

    let c: [C64; 4] = [c[0], c[1], c[2], c[3]];
    let e = Matrix4::from_columns(&columns);
    let sv = e.singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let cond_estimate = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond_estimate <= MAX_CONDITION) {
        return Err(SimError::NonDiagonalizable { condition: cond_estimate });
    }
    let b = e
        .try_inverse()
        .ok_or(SimError::NonDiagonalizable { condition: cond_estimate })?;

    let residual = (a0 * e - e * Matrix4::from_diagonal(&Vector4::from(c))).norm() / scale;
    if residual > RESIDUAL_TOL {
        return Err(SimError::NonDiagonalizable { condition: cond_estimate });
    }
    for (index, cj) in c.iter().enumerate() {
        if cj.re > GROWTH_TOL * scale {
            return Err(SimError::GrowingMode { index, real: cj.re });
        }
    }

    Ok(Eigensystem { c, e, b, cond_estimate })
}

impl Eigensystem {
    pub fn from_params(p: &SystemParams) -> Result<Self> {
        eigendecompose(&build_kernel_matrix(p))
    }

    /// `diag(e^{c_j s})`.
    pub fn propagation(&self, s: f64) -> Vector4<C64> {
        Vector4::from_fn(|j, _| (self.c[j] * s).exp())
    }

    /// Maps a history source vector to the four loop-amplitude channels
    /// after an elapsed time `s`: `E · diag(e^{c s}) · w`.
    pub fn channels(&self, w: &Vector4<C64>, s: f64) -> Vector4<C64> {
        self.e * self.propagation(s).component_mul(w)
    }
}

/// `w_j = b_{j,1} α₁ + b_{j,2} β₁`, the frequency-independent source vector
/// stored for each history step.
pub fn project_w(eig: &Eigensystem, alpha1: C64, beta1: C64) -> Vector4<C64> {
    eig.b.column(0) * alpha1 + eig.b.column(1) * beta1
}

/// `n_j(t, t') = e^{c_j (t − t')} w_j(t')`.
pub fn n_vector(eig: &Eigensystem, w: &Vector4<C64>, t: f64, t_prime: f64) -> Result<Vector4<C64>> {
    let s = t - t_prime;
    for cj in &eig.c {
        let exponent = cj.re * s;
        if exponent > MAX_EXPONENT {
            return Err(SimError::OverflowGuard { exponent });
        }
    }
    Ok(eig.propagation(s).component_mul(w))
}
