//! The operator `H_beta = 2 beta - P`, restricted Green functions, the
//! boundary-hitting field `psi`, the full kernel `G` with its `gamma`
//! coupling, path-sum oracles and spectral diagnostics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{enumerate_paths, wire_restrict, WeightedGraph, WiredGraph};
use crate::linalg::{Envelope, Ldl, PIVOT_THRESHOLD};

/// Dense eigen-solves are used up to this many vertices.
pub const DENSE_SPECTRUM_LIMIT: usize = 1000;

/// `H_beta` in envelope storage (vertex order of the graph).
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    env: Envelope,
}

impl Operator {
    pub fn dim(&self) -> usize {
        self.env.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.env.get(i, j)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.env.to_dense()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.env.mul_vec(x)
    }

    /// LDLᵀ with the relative pivot threshold; failure certifies that
    /// the operator is not positive definite.
    pub fn factor(&self) -> Result<Ldl> {
        self.env.clone().factor(PIVOT_THRESHOLD)
    }

    pub fn envelope(&self) -> &Envelope {
        &self.env
    }
}

/// `H(i,i) = 2 beta_i`, `H(i,j) = -W_ij` for neighbors.
pub fn assemble_h(g: &WeightedGraph, beta: &[f64]) -> Result<Operator> {
    if beta.len() != g.vertex_count() {
        return Err(Error::Domain(format!(
            "beta has length {}, graph has {} vertices",
            beta.len(),
            g.vertex_count()
        )));
    }
    let mut entries = Vec::with_capacity(beta.len() + g.edge_count());
    for (i, b) in beta.iter().enumerate() {
        entries.push((i, i, 2.0 * b));
    }
    for e in g.edges() {
        entries.push((e.j, e.i, -e.w));
    }
    Ok(Operator { env: Envelope::from_entries(beta.len(), &entries) })
}

/// Per-environment Green-function data on a wired graph `V_n ∪ {delta}`.
///
/// Local indices `0..n` are the retained vertices, `n` is `delta`.
#[derive(Debug, Clone)]
pub struct GreenBundle {
    pub wired: WiredGraph,
    /// `beta` on the retained vertices.
    pub beta: Vec<f64>,
    pub gamma: f64,
    /// Boundary potential coupled to `(beta, gamma)`.
    pub beta_delta: f64,
    /// Boundary conductances `eta_i = W_{i, delta}`.
    pub eta: Vec<f64>,
    /// `psi` on the retained vertices (it equals 1 at `delta`).
    pub psi: Vec<f64>,
    ldl: Ldl,
}

impl GreenBundle {
    /// Builds the bundle from `beta` on the retained vertices of `wired`.
    pub fn new(wired: &WiredGraph, beta: &[f64], gamma: f64) -> Result<Self> {
        let n = wired.delta;
        if beta.len() != n {
            return Err(Error::Domain(format!("beta has length {}, expected {n}", beta.len())));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("gamma = {gamma} must be positive")));
        }
        let eta = wired.boundary_weights();
        if eta.iter().all(|&e| e == 0.0) {
            return Err(Error::Domain("subset has no boundary conductance".into()));
        }
        let mut entries = Vec::with_capacity(n + wired.base.edge_count());
        for (i, b) in beta.iter().enumerate() {
            entries.push((i, i, 2.0 * b));
        }
        for e in wired.base.edges() {
            if e.j != wired.delta {
                entries.push((e.j, e.i, -e.w));
            }
        }
        let ldl = Envelope::from_entries(n, &entries).factor(PIVOT_THRESHOLD)?;
        let psi = ldl.solve(&eta);
        let beta_delta = 0.5 * eta.iter().zip(&psi).map(|(w, p)| w * p).sum::<f64>() + gamma;
        Ok(Self { wired: wired.clone(), beta: beta.to_vec(), gamma, beta_delta, eta, psi, ldl })
    }

    /// Number of retained vertices; `delta` has this local index.
    pub fn n(&self) -> usize {
        self.beta.len()
    }

    pub fn delta(&self) -> usize {
        self.n()
    }

    /// `beta` extended by `beta_delta`.
    pub fn beta_extended(&self) -> Vec<f64> {
        let mut b = self.beta.clone();
        b.push(self.beta_delta);
        b
    }

    /// `psi` extended by 1 at `delta`.
    pub fn psi_extended(&self) -> Vec<f64> {
        let mut p = self.psi.clone();
        p.push(1.0);
        p
    }

    /// Column `i` of `Ĝ` (zero at `delta`, which is excluded from paths).
    pub fn hat_g_column(&self, i: usize) -> Vec<f64> {
        let mut c = self.ldl.inverse_column(i);
        c.push(0.0);
        c
    }

    /// Dense `Ĝ` on the retained vertices.
    pub fn hat_g(&self) -> DMatrix<f64> {
        self.ldl.inverse()
    }

    /// Column `i0` of `G = Ĝ + psi psiᵀ/(2 gamma)` on `V_n ∪ {delta}`.
    pub fn g_column(&self, i0: usize) -> Vec<f64> {
        let psi = self.psi_extended();
        let mut col = if i0 == self.delta() {
            vec![0.0; self.n() + 1]
        } else {
            self.hat_g_column(i0)
        };
        let c = psi[i0] / (2.0 * self.gamma);
        for (g, p) in col.iter_mut().zip(&psi) {
            *g += c * p;
        }
        col
    }

    /// Dense `G` from the decomposition.
    pub fn g_from_decomposition(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut g = DMatrix::zeros(n + 1, n + 1);
        g.view_mut((0, 0), (n, n)).copy_from(&self.hat_g());
        let psi = self.psi_extended();
        for i in 0..=n {
            for j in 0..=n {
                g[(i, j)] += psi[i] * psi[j] / (2.0 * self.gamma);
            }
        }
        g
    }

    /// Dense `G` as the inverse of `H_beta` on the whole wired graph,
    /// computed independently of the decomposition.
    pub fn full_g(&self) -> Result<DMatrix<f64>> {
        Ok(assemble_h(&self.wired.base, &self.beta_extended())?.factor()?.inverse())
    }

    /// `u(i0, j) = log G(i0, j) - log G(i0, i0)` for all `j`, `delta` last.
    pub fn u_field(&self, i0: usize) -> Vec<f64> {
        let col = self.g_column(i0);
        let base = col[i0].ln();
        col.iter().map(|g| g.ln() - base).collect()
    }

    /// `Ǧ(i0, j) = Ĝ(i0,i0) psi(j) - Ĝ(i0,j) psi(i0)`, `delta` last.
    pub fn check_g_row(&self, i0: usize) -> Vec<f64> {
        let col = self.hat_g_column(i0);
        let psi = self.psi_extended();
        (0..=self.n()).map(|j| col[i0] * psi[j] - col[j] * psi[i0]).collect()
    }

    /// The factorization of the `V_n` block.
    pub fn block_factor(&self) -> &Ldl {
        &self.ldl
    }
}

/// Bundle for `subset` of a graph `g`: the complement is wired into one
/// boundary point. `beta` is indexed by the vertices of `g`.
pub fn green_bundle(g: &WeightedGraph, beta: &[f64], subset: &[usize], gamma: f64) -> Result<GreenBundle> {
    if beta.len() != g.vertex_count() {
        return Err(Error::Domain(format!(
            "beta has length {}, graph has {} vertices",
            beta.len(),
            g.vertex_count()
        )));
    }
    let wired = wire_restrict(g, subset)?;
    let local: Vec<f64> = wired.origin.iter().map(|&v| beta[v]).collect();
    GreenBundle::new(&wired, &local, gamma)
}

/// `sum over paths i -> j with at most k steps of W_sigma / (2 beta)_sigma`.
pub fn truncated_green_pathsum(g: &WeightedGraph, beta: &[f64], i: usize, j: usize, k: usize) -> Result<f64> {
    let paths = enumerate_paths(g, i, &[], k)?;
    Ok(paths
        .avoiding
        .iter()
        .filter(|p| p.end() == j)
        .map(|p| p.conductance(g) / p.potential(beta))
        .sum())
}

/// Density of the mixing field `u` rooted at `i0` (with `u(i0) = 0`):
///
/// ```text
/// (2 pi)^{-(n-1)/2} exp(-sum u - sum_{i~j} W_ij (cosh(u_i - u_j) - 1)) sqrt(D(W, u))
/// ```
///
/// where `D` is evaluated as the `(i0, i0)` minor of the weighted
/// Laplacian with conductances `W_ij e^{u_i + u_j}`.
pub fn q_density(g: &WeightedGraph, u: &[f64], i0: usize) -> Result<f64> {
    let n = g.vertex_count();
    if u.len() != n || i0 >= n {
        return Err(Error::Domain("u must cover every vertex and i0 must be valid".into()));
    }
    if u[i0] != 0.0 {
        return Err(Error::Domain(format!("u(i0) = {} must be 0", u[i0])));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Ok(0.0);
    }
    let mut log = -0.5 * (n as f64 - 1.0) * (2.0 * std::f64::consts::PI).ln() - u.iter().sum::<f64>();
    for e in g.edges() {
        log -= e.w * ((u[e.i] - u[e.j]).cosh() - 1.0);
    }
    if n > 1 {
        let idx = |v: usize| if v < i0 { v } else { v - 1 };
        let mut entries = Vec::new();
        for e in g.edges() {
            let c = e.w * (u[e.i] + u[e.j]).exp();
            for v in [e.i, e.j] {
                if v != i0 {
                    entries.push((idx(v), idx(v), c));
                }
            }
            if e.i != i0 && e.j != i0 {
                entries.push((idx(e.j), idx(e.i), -c));
            }
        }
        match Envelope::from_entries(n - 1, &entries).factor(0.0) {
            Ok(ldl) => log += 0.5 * ldl.log_det(),
            Err(_) => return Ok(0.0),
        }
    }
    Ok(log.exp())
}

/// Smallest eigenvalue of a symmetric operator.
pub fn spectrum_bottom(h: &Operator) -> Result<f64> {
    if h.dim() <= DENSE_SPECTRUM_LIMIT {
        let eig = nalgebra::SymmetricEigen::new(h.to_dense());
        return Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min));
    }
    inverse_iteration(h, 1e-8, 20_000)
}

/// Inverse iteration on `H` when it factors, otherwise on `H - sigma I`
/// with `sigma` below the lower Gershgorin bound.
pub fn inverse_iteration(h: &Operator, tol: f64, max_iter: usize) -> Result<f64> {
    let n = h.dim();
    let env = h.envelope();
    let ldl = match env.clone().factor(PIVOT_THRESHOLD) {
        Ok(ldl) => ldl,
        Err(_) => gershgorin_shifted(env)?,
    };
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * (i % 7) as f64).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let hx = h.apply(&x);
        let rq: f64 = x.iter().zip(&hx).map(|(a, b)| a * b).sum();
        residual = hx.iter().zip(&x).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt();
        if residual <= tol {
            return Ok(rq);
        }
        ldl.solve_in_place(&mut x);
    }
    Err(Error::Numeric { message: "inverse iteration did not converge".into(), residual })
}

fn gershgorin_shifted(env: &Envelope) -> Result<Ldl> {
    let n = env.dim();
    let mut radius = vec![0.0; n];
    for i in 0..n {
        for j in env.first(i)..i {
            let v = env.get(i, j).abs();
            radius[i] += v;
            radius[j] += v;
        }
    }
    let lower = (0..n).map(|i| env.get(i, i) - radius[i]).fold(f64::INFINITY, f64::min);
    let sigma = lower - 1e-3 * (1.0 + lower.abs());
    let mut shifted = env.clone();
    for i in 0..n {
        shifted.add(i, i, -sigma);
    }
    shifted.factor(0.0)
}

/// Maximum relative residuals of the exact identities tied to one bundle.
///
/// Each residual is `|sum of terms| / sum of |terms|`, so values near
/// machine epsilon mean the identity holds to rounding.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IdentityReport {
    /// `H_beta Ĝ = Id` on the retained block.
    pub h_ghat: f64,
    /// `G = Ĝ + psi psiᵀ / (2 gamma)` against an independent inverse.
    pub decomposition: f64,
    /// `(H_beta psi)(i) = 0` on the retained vertices (`psi = 1` at `delta`).
    pub harmonic: f64,
    /// `beta_i = ½ sum_j W_ij G(i0,j)/G(i0,i) + 1{i=i0}/(2 G(i0,i0))`.
    pub beta_reconstruction: f64,
    /// Entrywise `Ĝ(i,j) <= sqrt(Ĝ(i,i) Ĝ(j,j))`, as a relative violation.
    pub cauchy_schwarz: f64,
    /// Relative negative part of `Ǧ(i0, ·)`.
    pub check_g_nonnegative: f64,
    /// Exit rates of the quenched chain equal `beta_i` away from `i0`.
    pub telescoping: f64,
    /// Negative control: the reconstruction residual at `i0` with the
    /// `1/(2 G(i0,i0))` term dropped. Not part of [`Self::max`].
    pub reconstruction_without_atom: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        [
            self.h_ghat,
            self.decomposition,
            self.harmonic,
            self.beta_reconstruction,
            self.cauchy_schwarz,
            self.check_g_nonnegative,
            self.telescoping,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(value: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        value.abs()
    } else {
        value.abs() / scale
    }
}

/// Evaluates every identity for `bundle` rooted at `i0` (a retained vertex).
pub fn check_identities(bundle: &GreenBundle, i0: usize) -> Result<IdentityReport> {
    let n = bundle.n();
    if i0 >= n {
        return Err(Error::Domain(format!("root {i0} is not a retained vertex")));
    }
    let base = &bundle.wired.base;
    let beta_ext = bundle.beta_extended();
    let hat_g = bundle.hat_g();

    let mut h_ghat: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut s = 2.0 * bundle.beta[i] * hat_g[(i, j)];
            let mut scale = s.abs();
            for nb in base.neighbors(i) {
                if nb.vertex < n {
                    let t = nb.weight * hat_g[(nb.vertex, j)];
                    s -= t;
                    scale += t.abs();
                }
            }
            if i == j {
                s -= 1.0;
                scale += 1.0;
            }
            h_ghat = h_ghat.max(rel(s, scale));
        }
    }

    let g_dec = bundle.g_from_decomposition();
    let g_full = bundle.full_g()?;
    let mut decomposition: f64 = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            let d = g_full[(i, j)] - g_dec[(i, j)];
            decomposition = decomposition.max(rel(d, g_full[(i, j)].abs() + g_dec[(i, j)].abs()));
        }
    }

    let psi = bundle.psi_extended();
    let mut harmonic: f64 = 0.0;
    for i in 0..n {
        let mut s = 2.0 * bundle.beta[i] * psi[i];
        let mut scale = s.abs();
        for nb in base.neighbors(i) {
            let t = nb.weight * psi[nb.vertex];
            s -= t;
            scale += t;
        }
        harmonic = harmonic.max(rel(s, scale));
    }

    let col = bundle.g_column(i0);
    let mut beta_reconstruction: f64 = 0.0;
    let mut telescoping: f64 = 0.0;
    let mut reconstruction_without_atom = 0.0;
    for i in 0..=n {
        let flow: f64 = base
            .neighbors(i)
            .iter()
            .map(|nb| 0.5 * nb.weight * col[nb.vertex] / col[i])
            .sum();
        let atom = if i == i0 { 0.5 / col[i0] } else { 0.0 };
        let r = rel(beta_ext[i] - flow - atom, beta_ext[i] + flow + atom);
        beta_reconstruction = beta_reconstruction.max(r);
        if i == i0 {
            reconstruction_without_atom = rel(beta_ext[i] - flow, beta_ext[i] + flow);
        } else {
            telescoping = telescoping.max(rel(flow - beta_ext[i], flow + beta_ext[i]));
        }
    }

    let mut cauchy_schwarz: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let bound = (hat_g[(i, i)] * hat_g[(j, j)]).sqrt();
            cauchy_schwarz = cauchy_schwarz.max(rel((hat_g[(i, j)] - bound).max(0.0), bound));
        }
    }

    let check = bundle.check_g_row(i0);
    let hat_row = bundle.hat_g_column(i0);
    let mut check_g_nonnegative: f64 = 0.0;
    for j in 0..=n {
        let scale = hat_row[i0] * psi[j] + hat_row[j] * psi[i0];
        check_g_nonnegative = check_g_nonnegative.max(rel((-check[j]).max(0.0), scale));
    }

    Ok(IdentityReport {
        h_ghat,
        decomposition,
        harmonic,
        beta_reconstruction,
        cauchy_schwarz,
        check_g_nonnegative,
        telescoping,
        reconstruction_without_atom,
    })
}
