//! The mixing field `beta`: closed-form Laplace transforms, the density,
//! and an exact sequential sampler driven by Schur-complement elimination.
//!
//! The law is parameterized by a symmetric nonnegative matrix `P` (diagonal
//! allowed) and a nonnegative vector `eta`. With `H = 2 beta - P` the density is
//!
//! ```text
//! 1{H > 0} (2/pi)^{n/2} exp(-<1,H1>/2 - <eta,H^-1 eta>/2 + <eta,1>) / sqrt(det H).
//! ```

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{WeightedGraph, WiredGraph};
use crate::linalg::{Envelope, Ldl, PIVOT_THRESHOLD};

/// Parameters `(P, eta)` of the field law.
#[derive(Debug, Clone, PartialEq)]
pub struct NuParams {
    diag: Vec<f64>,
    /// Off-diagonal entries per row, sorted by column, symmetric.
    off: Vec<Vec<(usize, f64)>>,
    eta: Vec<f64>,
}

impl NuParams {
    /// Builds parameters from an off-diagonal pair list (`i != j`, listed
    /// once per pair), a diagonal and `eta`.
    pub fn new(diag: Vec<f64>, pairs: &[(usize, usize, f64)], eta: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if eta.len() != n {
            return Err(Error::Domain(format!("eta has length {}, expected {n}", eta.len())));
        }
        if let Some(v) = diag.iter().chain(&eta).find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("negative or non-finite parameter {v}")));
        }
        let mut off = vec![Vec::new(); n];
        for &(i, j, w) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::Domain(format!("bad off-diagonal pair ({i}, {j})")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Domain(format!("negative weight {w} at ({i}, {j})")));
            }
            if w > 0.0 {
                off[i].push((j, w));
                off[j].push((i, w));
            }
        }
        for row in &mut off {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::Domain("duplicate off-diagonal pair".into()));
            }
        }
        Ok(Self { diag, off, eta })
    }

    /// `P` = conductances of `g`, zero diagonal.
    pub fn from_graph(g: &WeightedGraph, eta: Vec<f64>) -> Result<Self> {
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j, e.w)).collect();
        Self::new(vec![0.0; g.vertex_count()], &pairs, eta)
    }

    /// The law of `beta` restricted to the retained vertices of a wired
    /// graph: interior conductances with `eta` = conductances to `delta`.
    pub fn wired_marginal(w: &WiredGraph) -> Result<Self> {
        let pairs: Vec<_> = w
            .base
            .edges()
            .iter()
            .filter(|e| e.j != w.delta)
            .map(|e| (e.i, e.j, e.w))
            .collect();
        Self::new(vec![0.0; w.delta], &pairs, w.boundary_weights())
    }

    pub fn from_dense(p: &nalgebra::DMatrix<f64>, eta: Vec<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n {
            return Err(Error::Domain("P must be square".into()));
        }
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if (p[(i, j)] - p[(j, i)]).abs() > 1e-14 * p[(i, j)].abs().max(1.0) {
                    return Err(Error::Domain(format!("P not symmetric at ({i}, {j})")));
                }
                if p[(i, j)] != 0.0 {
                    pairs.push((i, j, p[(i, j)]));
                }
            }
        }
        Self::new((0..n).map(|i| p[(i, i)]).collect(), &pairs, eta)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut p = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            p[(i, i)] = self.diag[i];
            for &(j, w) in &self.off[i] {
                p[(i, j)] = w;
            }
        }
        p
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.off[i]
    }

    /// `P_ij`, including the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.off[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.off[i][k].1)
            .unwrap_or(0.0)
    }

    /// Same law with the diagonal folded into a shift of `beta`: if `beta`
    /// has law `self`, then `beta - diag/2` has law of the returned params.
    pub fn without_diagonal(&self) -> Self {
        Self { diag: vec![0.0; self.n()], off: self.off.clone(), eta: self.eta.clone() }
    }

    /// `H_beta = 2 beta - P` in envelope storage, in the given vertex order.
    fn operator_envelope(&self, beta: &[f64], order: &[usize], pos: &[usize]) -> Envelope {
        let mut entries = Vec::with_capacity(self.n() + self.off.iter().map(Vec::len).sum::<usize>());
        for (p, &v) in order.iter().enumerate() {
            entries.push((p, p, 2.0 * beta[v] - self.diag[v]));
            for &(u, w) in &self.off[v] {
                if pos[u] < p {
                    entries.push((p, pos[u], -w));
                }
            }
        }
        Envelope::from_entries(self.n(), &entries)
    }
}

/// One draw of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSample {
    pub beta: Vec<f64>,
    /// Set when every elimination pivot exceeded the relative threshold.
    pub psd_certificate: bool,
    /// LDLᵀ of `H_beta` in elimination order, with the drawn pivots.
    pub factor: Ldl,
    pub order: Vec<usize>,
}

impl BetaSample {
    /// Solves `H_beta x = b` with the sampler's own factorization. The
    /// pivots are exact draws, so this stays accurate when the last pivot is
    /// tiny (refactoring `H_beta` would lose it to cancellation).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.order.iter().map(|&v| b[v]).collect();
        self.factor.solve_in_place(&mut x);
        let mut out = vec![0.0; x.len()];
        for (p, &v) in self.order.iter().enumerate() {
            out[v] = x[p];
        }
        out
    }

    /// Column `i` of `G = H_beta^{-1}`.
    pub fn green_column(&self, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.beta.len()];
        e[i] = 1.0;
        self.solve(&e)
    }
}

/// Closed-form Laplace transform `E[exp(-<lambda, beta>)]`. A diagonal
/// entry `P_ii` contributes `exp(-P_ii lambda_i / 2)`.
pub fn laplace_closed_form(params: &NuParams, lambda: &[f64]) -> Result<f64> {
    Ok(log_laplace_closed_form(params, lambda)?.exp())
}

pub fn log_laplace_closed_form(params: &NuParams, lambda: &[f64]) -> Result<f64> {
    let n = params.n();
    if lambda.len() != n {
        return Err(Error::Domain(format!("lambda has length {}, expected {n}", lambda.len())));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Domain(format!("lambda entry {l} is negative or non-finite")));
    }
    let root: Vec<f64> = lambda.iter().map(|l| (1.0 + l).sqrt()).collect();
    let mut s = 0.0;
    for i in 0..n {
        for &(j, w) in &params.off[i] {
            if j > i {
                s -= w * (root[i] * root[j] - 1.0);
            }
        }
        s -= 0.5 * params.diag[i] * lambda[i];
        s -= params.eta[i] * (root[i] - 1.0);
        s -= root[i].ln();
    }
    Ok(s)
}

/// Log-density; `None` outside the support `{H_beta > 0}`.
pub fn log_density(params: &NuParams, beta: &[f64]) -> Option<f64> {
    let n = params.n();
    if beta.len() != n || beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let order: Vec<usize> = (0..n).collect();
    let env = params.operator_envelope(beta, &order, &order);
    let ldl = env.factor(0.0).ok()?;
    let mut one_h_one = 0.0;
    for i in 0..n {
        one_h_one += 2.0 * beta[i] - params.diag[i];
        for &(_, w) in &params.off[i] {
            one_h_one -= w;
        }
    }
    let g_eta = ldl.solve(&params.eta);
    let eta_g_eta: f64 = params.eta.iter().zip(&g_eta).map(|(a, b)| a * b).sum();
    let eta_sum: f64 = params.eta.iter().sum();
    Some(
        0.5 * n as f64 * (2.0 / std::f64::consts::PI).ln() - 0.5 * one_h_one - 0.5 * eta_g_eta
            + eta_sum
            - 0.5 * ldl.log_det(),
    )
}

/// Lebesgue density; exactly 0 outside the support.
pub fn density(params: &NuParams, beta: &[f64]) -> f64 {
    log_density(params, beta).map_or(0.0, f64::exp)
}

/// Draws from the density proportional to `x^{-1/2} exp(-(x + b/x)/2)` on
/// `x > 0`. For `b = 0` this is chi-square with one degree of freedom.
///
/// `1/x` is inverse Gaussian with mean `1/sqrt(b)` and shape 1; the
/// transformation method is run on `x` directly so it stays accurate as
/// `b -> 0`.
pub fn gig_half_sample<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    debug_assert!(b >= 0.0);
    let s = b.max(0.0).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let nu = z * z;
    let a = s + 0.5 * (nu + (4.0 * s * nu + nu * nu).sqrt());
    if s == 0.0 {
        return a;
    }
    let u: f64 = rng.random();
    if u * (a + s) <= a {
        a
    } else {
        s * s / a
    }
}

/// Eliminates `site` given `x = 2 beta_site - P_site,site`, returning the
/// conditional parameters on the remaining vertices (in original order,
/// with `site` removed).
pub fn schur_step(params: &NuParams, site: usize, x: f64) -> Result<NuParams> {
    let n = params.n();
    if site >= n {
        return Err(Error::Domain(format!("site {site} out of range")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("elimination pivot {x} is not positive")));
    }
    let map = |v: usize| if v < site { v } else { v - 1 };
    let coupling = &params.off[site];
    let eta_site = params.eta[site];
    let mut diag = Vec::with_capacity(n - 1);
    let mut eta = Vec::with_capacity(n - 1);
    for v in (0..n).filter(|&v| v != site) {
        let c = params.weight(v, site);
        diag.push(params.diag[v] + c * c / x);
        eta.push(params.eta[v] + c * eta_site / x);
    }
    let mut pairs = std::collections::BTreeMap::new();
    for i in (0..n).filter(|&v| v != site) {
        for &(j, w) in &params.off[i] {
            if j > i && j != site {
                *pairs.entry((map(i), map(j))).or_insert(0.0) += w;
            }
        }
    }
    for (a, &(i, ci)) in coupling.iter().enumerate() {
        for &(j, cj) in &coupling[a + 1..] {
            *pairs.entry((map(i), map(j))).or_insert(0.0) += ci * cj / x;
        }
    }
    let pairs: Vec<_> = pairs.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    NuParams::new(diag, &pairs, eta)
}

/// Exact draw from the field law by eliminating vertices in `order`.
///
/// At each step the current vertex's marginal is a one-site law of the same
/// family, whose `2 beta - P_kk` is GIG(1/2, 1, eta_hat²). The draw is then
/// conditioned on by a Schur update of the remaining parameters. The
/// elimination pivots are the LDLᵀ pivots of `H_beta`, which yields the
/// positivity certificate at no extra cost.
pub fn sample_sequential<R: Rng + ?Sized>(
    params: &NuParams,
    order: &[usize],
    rng: &mut R,
) -> Result<BetaSample> {
    let n = params.n();
    let pos = permutation_inverse(order, n)?;
    let mut entries = Vec::new();
    for (p, &v) in order.iter().enumerate() {
        entries.push((p, p, -params.diag[v]));
        for &(u, w) in &params.off[v] {
            if pos[u] < p {
                entries.push((p, pos[u], -w));
            }
        }
    }
    let env = Envelope::from_entries(n, &entries);
    let mut eta: Vec<f64> = order.iter().map(|&v| params.eta[v]).collect();
    let mut beta_pos = vec![0.0; n];
    let mut certificate = true;
    let factor = env.eliminate(|k, akk, column| {
        // the Schur complement of -P stores -P_check
        let p_kk = -akk;
        let eta_hat = eta[k] - column.iter().map(|c| c.1).sum::<f64>();
        let x = gig_half_sample(eta_hat.max(0.0).powi(2), rng);
        let beta_k = 0.5 * (x + p_kk);
        if !(x > PIVOT_THRESHOLD * 2.0 * beta_k) {
            certificate = false;
        }
        beta_pos[k] = beta_k;
        let scale = eta[k] / x;
        for &(i, c) in column {
            eta[i] -= c * scale;
        }
        Ok(x)
    })?;
    let mut beta = vec![0.0; n];
    for (p, &v) in order.iter().enumerate() {
        beta[v] = beta_pos[p];
    }
    Ok(BetaSample { beta, psd_certificate: certificate, factor, order: order.to_vec() })
}

/// [`sample_sequential`] in natural index order.
pub fn sample<R: Rng + ?Sized>(params: &NuParams, rng: &mut R) -> Result<BetaSample> {
    let order: Vec<usize> = (0..params.n()).collect();
    sample_sequential(params, &order, rng)
}

fn permutation_inverse(order: &[usize], n: usize) -> Result<Vec<usize>> {
    if order.len() != n {
        return Err(Error::Domain(format!("order has length {}, expected {n}", order.len())));
    }
    let mut pos = vec![usize::MAX; n];
    for (p, &v) in order.iter().enumerate() {
        if v >= n || pos[v] != usize::MAX {
            return Err(Error::Domain("order is not a permutation".into()));
        }
        pos[v] = p;
    }
    Ok(pos)
}

/// Independent Gamma(`a_e`, 1) conductances for every edge of `g`.
pub fn gamma_weights<R: Rng + ?Sized>(g: &WeightedGraph, a: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if a.len() != g.edge_count() {
        return Err(Error::Domain(format!(
            "{} shapes given for {} edges",
            a.len(),
            g.edge_count()
        )));
    }
    a.iter()
        .map(|&shape| {
            let d = Gamma::new(shape, 1.0)
                .map_err(|_| Error::Domain(format!("Gamma shape {shape} must be positive")))?;
            // Gamma draws below the smallest positive double are rounded up
            Ok(d.sample(rng).max(f64::MIN_POSITIVE))
        })
        .collect()
}

/// Draws `W_e ~ Gamma(a_e, 1)` independently, then `beta` given `W` with
/// `eta = 0`. Returns the conductances and the field.
pub fn sample_errw_env<R: Rng + ?Sized>(
    g: &WeightedGraph,
    a: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, BetaSample)> {
    let w = gamma_weights(g, a, rng)?;
    let gw = g.reweighted(|k, _| w[k])?;
    let params = NuParams::from_graph(&gw, vec![0.0; g.vertex_count()])?;
    let b = sample(&params, rng)?;
    Ok((w, b))
}

/// `gamma ~ Gamma(1/2, 1)`.
pub fn sample_gamma_half<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let x: f64 = Gamma::new(0.5, 1.0).expect("valid shape").sample(rng);
    x.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_vertex(eta: Vec<f64>) -> NuParams {
        NuParams::new(vec![0.0, 0.0], &[(0, 1, 1.0)], eta).unwrap()
    }

    #[test]
    fn laplace_at_zero_is_one() {
        let p = NuParams::new(vec![0.3, 0.0, 1.0], &[(0, 1, 1.0), (1, 2, 2.0)], vec![0.5, 0.0, 1.0])
            .unwrap();
        assert_relative_eq!(laplace_closed_form(&p, &[0.0; 3]).unwrap(), 1.0);
    }

    #[test]
    fn laplace_examples() {
        let p = NuParams::new(vec![0.0], &[], vec![1.0]).unwrap();
        let v = laplace_closed_form(&p, &[3.0]).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(v, 0.1839397, epsilon = 1e-7);

        let v = laplace_closed_form(&two_vertex(vec![0.0, 0.0]), &[1.0, 0.0]).unwrap();
        assert_relative_eq!(v, (-(2f64.sqrt() - 1.0)).exp() / 2f64.sqrt(), epsilon = 1e-15);
        // the closed form evaluates to 0.46730
        assert!((v - 0.4677).abs() < 1e-3);

        assert!(laplace_closed_form(&p, &[-1.0]).is_err());
    }

    #[test]
    fn density_examples() {
        let p = NuParams::new(vec![0.0], &[], vec![0.0]).unwrap();
        let d = density(&p, &[0.5]);
        assert_relative_eq!(d, (2.0 / std::f64::consts::PI).sqrt() * (-0.5f64).exp(), epsilon = 1e-15);
        assert!((d - 0.483941).abs() < 1e-6);
        assert_eq!(density(&two_vertex(vec![0.0, 0.0]), &[0.4, 0.4]), 0.0);
        assert_eq!(density(&p, &[-0.1]), 0.0);
    }

    #[test]
    fn diagonal_is_a_shift() {
        let p = NuParams::new(vec![0.6, 0.2], &[(0, 1, 1.0)], vec![0.3, 0.0]).unwrap();
        let q = p.without_diagonal();
        for beta in [[0.9, 1.1], [2.0, 0.7], [0.5, 3.0]] {
            let shifted = [beta[0] - 0.3, beta[1] - 0.1];
            assert_relative_eq!(density(&p, &beta), density(&q, &shifted), epsilon = 1e-14);
        }
        let lambda = [0.7, 1.9];
        let lhs = laplace_closed_form(&p, &lambda).unwrap();
        let rhs = laplace_closed_form(&q, &lambda).unwrap() * (-(0.3 * 0.7 + 0.1 * 1.9f64)).exp();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
    }

    #[test]
    fn schur_examples() {
        let s = schur_step(&two_vertex(vec![0.0, 0.0]), 0, 2.0).unwrap();
        assert_eq!(s.n(), 1);
        assert_relative_eq!(s.diag()[0], 0.5);
        assert_eq!(s.eta()[0], 0.0);

        let s = schur_step(&two_vertex(vec![3.0, 0.0]), 0, 2.0).unwrap();
        assert_relative_eq!(s.eta()[0], 1.5);

        let p = NuParams::new(vec![0.0; 3], &[(1, 2, 1.0)], vec![0.2, 0.4, 0.0]).unwrap();
        let s = schur_step(&p, 0, 1.3).unwrap();
        assert_eq!(s, NuParams::new(vec![0.0; 2], &[(0, 1, 1.0)], vec![0.4, 0.0]).unwrap());

        assert!(schur_step(&p, 0, 0.0).is_err());
    }

    #[test]
    fn schur_matches_dense_complement() {
        let p = NuParams::new(
            vec![0.1, 0.0, 0.2, 0.0],
            &[(0, 1, 1.0), (0, 2, 0.5), (1, 3, 2.0), (2, 3, 0.7)],
            vec![0.3, 0.0, 1.0, 0.2],
        )
        .unwrap();
        let x = 1.7;
        let s = schur_step(&p, 0, x).unwrap();
        let pd = p.to_dense();
        let sd = s.to_dense();
        for a in 0..3 {
            for b in 0..3 {
                let expect = pd[(a + 1, b + 1)] + pd[(a + 1, 0)] * pd[(0, b + 1)] / x;
                assert_relative_eq!(sd[(a, b)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gig_zero_is_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| gig_half_sample(0.0, &mut rng)).sum::<f64>() / n as f64;
        // chi2(1) has variance 2
        assert!((mean - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn gig_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let b: f64 = 4.0;
        let xs: Vec<f64> = (0..n).map(|_| gig_half_sample(b, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - (1.0 + b.sqrt())).abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn sampler_support_and_certificate() {
        let g = crate::graph::build_lattice_box(2, 2, 1.0, &[0, 0]).unwrap();
        let params = NuParams::from_graph(&g, vec![0.0; g.vertex_count()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = sample(&params, &mut rng).unwrap();
            assert!(s.psd_certificate);
            assert!(density(&params, &s.beta) > 0.0);
        }
    }

    #[test]
    fn order_must_be_permutation() {
        let p = two_vertex(vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_sequential(&p, &[0, 0], &mut rng).is_err());
        assert!(sample_sequential(&p, &[1, 0], &mut rng).is_ok());
    }

    #[test]
    fn gamma_shapes_validated() {
        let g = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_errw_env(&g, &[0.0], &mut rng).is_err());
        assert!(sample_errw_env(&g, &[1.0], &mut rng).is_ok());
    }

    #[test]
    fn sampler_factor_is_h_beta() {
        let p = NuParams::new(vec![0.2, 0.0, 0.1], &[(0, 1, 1.0), (1, 2, 0.5), (0, 2, 0.8)], vec![0.4, 0.0, 0.0])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_sequential(&p, &[2, 0, 1], &mut rng).unwrap();
        let order: Vec<usize> = (0..3).collect();
        let dense = p.operator_envelope(&s.beta, &order, &order).to_dense();
        let inv = dense.try_inverse().unwrap();
        for i in 0..3 {
            let col = s.green_column(i);
            for j in 0..3 {
                assert_relative_eq!(col[j], inv[(j, i)], max_relative = 1e-10);
            }
        }
    }
}
